use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Sample encoding used when writing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleFormat {
    Pcm16,
    #[default]
    Float32,
}

/// De-interleaved audio, one vector per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct WavData {
    pub sample_rate: u32,
    pub channels: Vec<Vec<f64>>,
}

impl WavData {
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Reads a mono or 2-channel WAV file (16-bit PCM or 32-bit float).
///
/// Files whose rate differs from `expected_rate` are rejected; there is no
/// resampling.
pub fn read_wav(path: impl AsRef<Path>, expected_rate: u32) -> Result<WavData> {
    let path = path.as_ref();
    read_wav_inner(path, expected_rate).map_err(|e| e.at(path))
}

fn read_wav_inner(path: &Path, expected_rate: u32) -> Result<WavData> {
    let mut reader = hound::WavReader::open(path).map_err(hound_error)?;
    let spec = reader.spec();
    if spec.sample_rate != expected_rate {
        return Err(Error::Audio(format!(
            "sample rate {} Hz, expected {expected_rate} Hz (resampling is not supported)",
            spec.sample_rate
        )));
    }
    let nch = spec.channels as usize;
    if !(1..=2).contains(&nch) {
        return Err(Error::Audio(format!("{nch} channels, only mono and stereo are supported")));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(hound_error)?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(hound_error)?,
        (fmt, bits) => {
            return Err(Error::Audio(format!(
                "{bits}-bit {fmt:?} samples, only 16-bit PCM and 32-bit float are supported"
            )))
        }
    };
    let mut channels = vec![Vec::with_capacity(interleaved.len() / nch); nch];
    for frame in interleaved.chunks_exact(nch) {
        for (ch, &s) in channels.iter_mut().zip(frame) {
            ch.push(s);
        }
    }
    Ok(WavData {
        sample_rate: spec.sample_rate,
        channels,
    })
}

/// Writes channels to a WAV file through a temporary file and rename.
pub fn write_wav(
    path: impl AsRef<Path>,
    channels: &[Vec<f64>],
    sample_rate: u32,
    format: SampleFormat,
) -> Result<()> {
    let path = path.as_ref();
    write_wav_inner(path, channels, sample_rate, format).map_err(|e| e.at(path))
}

fn write_wav_inner(
    path: &Path,
    channels: &[Vec<f64>],
    sample_rate: u32,
    format: SampleFormat,
) -> Result<()> {
    if !(1..=2).contains(&channels.len()) {
        return Err(Error::Audio(format!(
            "{} channels, only mono and stereo are supported",
            channels.len()
        )));
    }
    let len = channels[0].len();
    if channels.iter().any(|c| c.len() != len) {
        return Err(Error::ShapeMismatch("channels differ in length".into()));
    }
    let spec = hound::WavSpec {
        channels: channels.len() as u16,
        sample_rate,
        bits_per_sample: match format {
            SampleFormat::Pcm16 => 16,
            SampleFormat::Float32 => 32,
        },
        sample_format: match format {
            SampleFormat::Pcm16 => hound::SampleFormat::Int,
            SampleFormat::Float32 => hound::SampleFormat::Float,
        },
    };
    let tmp = tmp_path(path);
    {
        let mut writer = hound::WavWriter::create(&tmp, spec).map_err(hound_error)?;
        for i in 0..len {
            for ch in channels {
                let s = ch[i];
                match format {
                    SampleFormat::Pcm16 => {
                        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                        writer.write_sample(q).map_err(hound_error)?;
                    }
                    SampleFormat::Float32 => writer.write_sample(s as f32).map_err(hound_error)?,
                }
            }
        }
        writer.finalize().map_err(hound_error)?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn tmp_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

fn hound_error(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::Audio(other.to_string()),
    }
}
