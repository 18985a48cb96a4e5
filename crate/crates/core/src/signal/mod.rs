//! STFT analysis, weighted overlap-add synthesis and WAV I/O.

mod stft;
mod wav;

pub use stft::{hamming, istft, stft, Spectrogram, StftConfig};
pub use wav::{read_wav, write_wav, SampleFormat, WavData};
