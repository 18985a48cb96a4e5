//! `MBNM` model container. All integers and floats are little-endian.
//!
//! ```text
//! magic "MBNM" | version u32
//! config: clusterings u32 | feature_fraction f64 | k1 u32 | delta f64
//!         | n_classes u32 | output_dim u32 | seed u64
//! input_dim u64 | layer_count u32
//! per layer:   k u32 | metric u8 (0 squared-Euclidean, 1 dot) | clustering_count u32
//!   per clustering: d̂ u32 | feature indices u32 × d̂
//!     metric 0: k × d̂ centroid matrix, f32 row-major
//!     metric 1: per centroid: count u32 | positions u32 × count
//! PCA: dim u64 | output_dim u32 | rank_deficient u8 | mean f64 × dim
//!      | explained variance f64 × output_dim | components f64 × output_dim × dim
//! ```
//!
//! Upper-layer centroids are binary codes, so they are stored as the
//! positions of their ones rather than as dense float matrices.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::clustering::{Centroids, KCentroidsClustering, Metric};
use super::layer::MbnLayer;
use super::pca::Pca;
use super::{MbnConfig, MbnModel};
use crate::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"MBNM";
pub const MODEL_VERSION: u32 = 1;

pub fn write_model(model: &MbnModel, mut w: impl Write) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    put_u32(&mut out, MODEL_VERSION);
    let c = &model.config;
    put_u32(&mut out, c.clusterings as u32);
    out.extend_from_slice(&c.feature_fraction.to_le_bytes());
    put_u32(&mut out, c.k1 as u32);
    out.extend_from_slice(&c.delta.to_le_bytes());
    put_u32(&mut out, c.n_classes as u32);
    put_u32(&mut out, c.output_dim as u32);
    out.extend_from_slice(&c.seed.to_le_bytes());
    out.extend_from_slice(&(model.input_dim as u64).to_le_bytes());
    put_u32(&mut out, model.layers.len() as u32);
    for layer in &model.layers {
        put_u32(&mut out, layer.k() as u32);
        out.push(match layer.metric() {
            Metric::SquaredEuclidean => 0,
            Metric::Dot => 1,
        });
        put_u32(&mut out, layer.clusterings().len() as u32);
        for cl in layer.clusterings() {
            put_u32(&mut out, cl.feature_indices().len() as u32);
            for &f in cl.feature_indices() {
                put_u32(&mut out, f);
            }
            match cl.centroids() {
                Centroids::Dense { values, .. } => {
                    for v in values {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
                Centroids::Binary(sets) => {
                    for set in sets {
                        put_u32(&mut out, set.len() as u32);
                        for &p in set {
                            put_u32(&mut out, p);
                        }
                    }
                }
            }
        }
    }
    let pca = &model.pca;
    out.extend_from_slice(&(pca.input_dim() as u64).to_le_bytes());
    put_u32(&mut out, pca.output_dim() as u32);
    out.push(pca.rank_deficient() as u8);
    for v in pca.mean().iter().chain(pca.explained_variance()).chain(pca.components().iter()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&out)?;
    Ok(())
}

pub fn read_model(mut r: impl Read) -> Result<MbnModel> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut cur = Cursor { buf: &buf, pos: 0 };
    if cur.take(4)? != MODEL_MAGIC {
        return Err(Error::Format("bad magic, expected \"MBNM\"".into()));
    }
    let version = cur.u32()?;
    if version != MODEL_VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let config = MbnConfig {
        clusterings: cur.u32()? as usize,
        feature_fraction: cur.f64()?,
        k1: cur.u32()? as usize,
        delta: cur.f64()?,
        n_classes: cur.u32()? as usize,
        output_dim: cur.u32()? as usize,
        seed: cur.u64()?,
    };
    config.validate()?;
    let input_dim = cur.len_u64()?;
    let layer_count = cur.u32()? as usize;
    if layer_count == 0 {
        return Err(Error::Format("model has no hidden layers".into()));
    }
    let mut layers = Vec::with_capacity(layer_count);
    let mut dim = input_dim;
    for _ in 0..layer_count {
        let k = cur.u32()? as usize;
        let metric = match cur.u8()? {
            0 => Metric::SquaredEuclidean,
            1 => Metric::Dot,
            m => return Err(Error::Format(format!("unknown metric tag {m}"))),
        };
        let count = cur.u32()? as usize;
        let mut clusterings = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let dhat = cur.u32()? as usize;
            let features = (0..dhat).map(|_| cur.u32()).collect::<Result<Vec<_>>>()?;
            let centroids = match metric {
                Metric::SquaredEuclidean => {
                    let n = k.checked_mul(dhat).ok_or_else(|| Error::Format("dimension overflow".into()))?;
                    let bytes = cur.take(n.checked_mul(4).ok_or_else(|| Error::Format("dimension overflow".into()))?)?;
                    Centroids::Dense {
                        k,
                        values: bytes
                            .chunks_exact(4)
                            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                            .collect(),
                    }
                }
                Metric::Dot => Centroids::Binary(
                    (0..k)
                        .map(|_| {
                            let len = cur.u32()? as usize;
                            (0..len).map(|_| cur.u32()).collect::<Result<Vec<_>>>()
                        })
                        .collect::<Result<Vec<_>>>()?,
                ),
            };
            clusterings.push(KCentroidsClustering::new(dim, features, centroids, metric)?);
        }
        let layer = MbnLayer::new(clusterings)?;
        dim = layer.output_dim();
        layers.push(layer);
    }
    let pca_dim = cur.len_u64()?;
    let out_dim = cur.u32()? as usize;
    if pca_dim != dim {
        return Err(Error::Format(format!("PCA expects {pca_dim} inputs, top layer emits {dim}")));
    }
    let rank_deficient = cur.u8()? != 0;
    let mean = (0..pca_dim).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
    let explained = (0..out_dim).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
    let comps = (0..out_dim * pca_dim).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
    if cur.pos != buf.len() {
        return Err(Error::Format("trailing bytes after PCA block".into()));
    }
    let components = Array2::from_shape_vec((out_dim, pca_dim), comps).expect("length checked");
    let pca = Pca::from_parts(mean, components, explained, rank_deficient)?;
    Ok(MbnModel {
        config,
        input_dim,
        layers,
        pca,
    })
}

impl MbnModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        crate::tensor::atomic_write(path, |w| write_model(self, w)).map_err(|e| e.at(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::from(e).at(path))?;
        read_model(std::io::BufReader::new(f)).map_err(|e| e.at(path))
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("truncated model at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len_u64(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v)
            .ok()
            .filter(|&v| v <= self.buf.len() * 8)
            .ok_or_else(|| Error::Format(format!("implausible dimension {v}")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_model(delta: f64) -> MbnModel {
        let data = Array2::from_shape_fn((120, 3), |(i, j)| ((i * 31 + j * 17) % 23) as f64 / 7.0);
        let cfg = MbnConfig { clusterings: 12, k1: 10, delta, ..Default::default() };
        MbnModel::fit(data.view(), &cfg).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        for delta in [0.0, 0.6] {
            let m = toy_model(delta);
            let mut bytes = Vec::new();
            write_model(&m, &mut bytes).unwrap();
            assert_eq!(&bytes[..4], b"MBNM");
            let back = read_model(&bytes[..]).unwrap();
            assert_eq!(back, m);
            let mut again = Vec::new();
            write_model(&back, &mut again).unwrap();
            assert_eq!(again, bytes);
        }
    }

    #[test]
    fn corrupt_files_rejected() {
        let mut bytes = Vec::new();
        write_model(&toy_model(0.0), &mut bytes).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_model(&bad[..]).is_err());
        assert!(read_model(&bytes[..bytes.len() - 3]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(read_model(&long[..]).is_err());
    }
}
