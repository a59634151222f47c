//! File formats: PCM16 WAV, spectrogram export and JSON configuration.

pub mod config;
pub mod spectrogram;
pub mod wav;

pub use config::EngineConfig;
pub use spectrogram::{spectrogram, Spectrogram, SpectrogramSpec};
pub use wav::{read_wav, write_wav};
