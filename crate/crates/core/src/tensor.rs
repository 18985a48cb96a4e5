//! The `MBNT` tensor file format.
//!
//! ```text
//! offset  size        field
//! 0       4           magic "MBNT"
//! 4       1           version (1)
//! 5       4           rank r (u32 LE)
//! 9       8·r         dims (u64 LE each)
//! 9+8r    4·∏dims     payload, f32 LE, row-major
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MBNT";
pub const VERSION: u8 = 1;
const MAX_RANK: u32 = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let count = element_count(&dims)?;
        if count != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "dims {dims:?} need {count} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    /// Returns `(rows, cols)` or an error naming the actual rank.
    pub fn matrix_dims(&self) -> Result<(usize, usize)> {
        match self.dims[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::Format(format!("expected a rank-2 tensor, found rank {}", self.rank()))),
        }
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&[VERSION])?;
        w.write_all(&(self.dims.len() as u32).to_le_bytes())?;
        for &d in &self.dims {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}, expected \"MBNT\"")));
        }
        let mut version = [0u8; 1];
        r.read_exact(&mut version).map_err(truncated)?;
        if version[0] != VERSION {
            return Err(Error::Format(format!("unsupported version {}", version[0])));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4).map_err(truncated)?;
        let rank = u32::from_le_bytes(b4);
        if rank > MAX_RANK {
            return Err(Error::Format(format!("rank {rank} exceeds the maximum of {MAX_RANK}")));
        }
        let mut dims = Vec::with_capacity(rank as usize);
        let mut b8 = [0u8; 8];
        for _ in 0..rank {
            r.read_exact(&mut b8).map_err(truncated)?;
            let d = usize::try_from(u64::from_le_bytes(b8))
                .map_err(|_| Error::Format("dimension overflow".into()))?;
            dims.push(d);
        }
        let count = element_count(&dims)?;
        let bytes = count
            .checked_mul(4)
            .ok_or_else(|| Error::Format("dimension overflow".into()))?;
        let mut payload = Vec::new();
        (&mut r).take(bytes as u64).read_to_end(&mut payload)?;
        if payload.len() != bytes {
            return Err(Error::Format(format!(
                "payload holds {} bytes, header declares {bytes}",
                payload.len()
            )));
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(Error::Format("trailing bytes after payload".into()));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self { dims, data })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        atomic_write(path, |f| self.write_to(f)).map_err(|e| e.at(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::from(e).at(path))?;
        Self::read_from(std::io::BufReader::new(file)).map_err(|e| e.at(path))
    }
}

fn element_count(dims: &[usize]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format(format!("dimension overflow in {dims:?}")))
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("truncated header".into())
    } else {
        Error::Io(e)
    }
}

/// Writes through `<path>.tmp` and renames into place.
pub(crate) fn atomic_write(
    path: &Path,
    body: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> Result<()>,
) -> Result<()> {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    let tmp = path.with_file_name(name);
    {
        let mut w = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        body(&mut w)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bytes(t: &Tensor) -> Vec<u8> {
        let mut v = Vec::new();
        t.write_to(&mut v).unwrap();
        v
    }

    #[test]
    fn header_layout() {
        let t = Tensor::new(vec![2, 3], vec![1.0; 6]).unwrap();
        let b = bytes(&t);
        assert_eq!(&b[..4], b"MBNT");
        assert_eq!(b[4], 1);
        assert_eq!(&b[5..9], &2u32.to_le_bytes());
        assert_eq!(&b[9..17], &2u64.to_le_bytes());
        assert_eq!(&b[17..25], &3u64.to_le_bytes());
        assert_eq!(b.len(), 25 + 24);
        assert_eq!(&b[25..29], &1f32.to_le_bytes());
    }

    #[test]
    fn wrong_magic_rejected() {
        let mut b = bytes(&Tensor::new(vec![1], vec![0.5]).unwrap());
        b[0] = b'X';
        let err = Tensor::read_from(&b[..]).unwrap_err().to_string();
        assert!(err.contains("magic"), "{err}");
    }

    #[test]
    fn overflow_and_truncation_rejected() {
        let mut b = Vec::new();
        b.extend_from_slice(b"MBNT");
        b.push(1);
        b.extend_from_slice(&2u32.to_le_bytes());
        b.extend_from_slice(&u64::MAX.to_le_bytes());
        b.extend_from_slice(&4u64.to_le_bytes());
        let err = Tensor::read_from(&b[..]).unwrap_err().to_string();
        assert!(err.contains("overflow"), "{err}");

        let mut b = bytes(&Tensor::new(vec![2, 2], vec![0.0; 4]).unwrap());
        b.pop();
        assert!(Tensor::read_from(&b[..]).is_err());
    }

    #[test]
    fn matrix_dims_names_rank() {
        let t = Tensor::new(vec![2, 2, 2], vec![0.0; 8]).unwrap();
        let err = t.matrix_dims().unwrap_err().to_string();
        assert!(err.contains("rank 3"), "{err}");
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(dims in prop::collection::vec(0usize..5, 0..4), seed in any::<u32>()) {
            let n: usize = dims.iter().product();
            let data: Vec<f32> = (0..n)
                .map(|i| f32::from_bits(seed.wrapping_mul(2654435761).wrapping_add(i as u32 * 40503) & 0x7f7f_ffff))
                .collect();
            let t = Tensor::new(dims, data).unwrap();
            let b = bytes(&t);
            let back = Tensor::read_from(&b[..]).unwrap();
            prop_assert_eq!(bytes(&back), b);
        }
    }
}
