//! Log-magnitude STFT with PGM and CSV export.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::dsp::Signal;
use crate::error::{param_err, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectrogramSpec {
    pub frame_ms: f64,
    pub hop_ms: f64,
    /// Magnitudes below this are clamped before the logarithm.
    pub floor: f64,
}

impl Default for SpectrogramSpec {
    fn default() -> Self {
        Self {
            frame_ms: 25.0,
            hop_ms: 10.0,
            floor: 1e-10,
        }
    }
}

/// Frames × bins matrix of `20·log10|X|`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    pub frames: Vec<Vec<f64>>,
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop: usize,
    pub fft_len: usize,
}

impl Spectrogram {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn n_bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    pub fn bin_freq(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.fft_len as f64
    }

    pub fn bin_of(&self, freq: f64) -> usize {
        ((freq * self.fft_len as f64 / self.sample_rate as f64).round() as usize)
            .min(self.n_bins() - 1)
    }

    fn range(&self) -> (f64, f64) {
        self.frames
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Binary P5 image, time on x, low frequencies at the bottom, scaled to
    /// `[0, 255]` over the matrix range.
    pub fn to_pgm(&self) -> Vec<u8> {
        let (w, h) = (self.n_frames(), self.n_bins());
        let (lo, hi) = self.range();
        let span = hi - lo;
        let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
        for k in (0..h).rev() {
            for frame in &self.frames {
                let v = if span > 0.0 {
                    ((frame[k] - lo) / span * 255.0).round() as u8
                } else {
                    0
                };
                out.push(v);
            }
        }
        out
    }

    /// One row per frame: frame index, frame start time, then one column
    /// per bin labelled by its frequency.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("frame,time_s");
        for k in 0..self.n_bins() {
            let _ = write!(s, ",{}", self.bin_freq(k));
        }
        s.push('\n');
        for (i, frame) in self.frames.iter().enumerate() {
            let _ = write!(s, "{i},{}", (i * self.hop) as f64 / self.sample_rate as f64);
            for v in frame {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }
}

fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

pub fn spectrogram(x: &Signal, spec: &SpectrogramSpec) -> Result<Spectrogram> {
    if !(spec.frame_ms > 0.0 && spec.hop_ms > 0.0 && spec.hop_ms <= spec.frame_ms) {
        return param_err(format!(
            "spectrogram needs 0 < hop ({} ms) <= frame ({} ms)",
            spec.hop_ms, spec.frame_ms
        ));
    }
    if spec.floor.is_nan() || spec.floor <= 0.0 {
        return param_err("log floor must be > 0");
    }
    let sr = x.sample_rate();
    let frame_len = ((spec.frame_ms * sr as f64 / 1000.0).round() as usize).max(1);
    let hop = ((spec.hop_ms * sr as f64 / 1000.0).round() as usize).max(1);
    if x.len() < frame_len {
        return param_err(format!(
            "signal has {} samples, shorter than one {frame_len}-sample frame",
            x.len()
        ));
    }
    let fft_len = frame_len.next_power_of_two();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_len);
    let window = hann(frame_len);
    let n_frames = 1 + (x.len() - frame_len) / hop;
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_len];
    let frames = (0..n_frames)
        .map(|f| {
            let seg = &x.samples()[f * hop..f * hop + frame_len];
            buf.fill(Complex64::new(0.0, 0.0));
            for ((b, &s), &w) in buf.iter_mut().zip(seg).zip(&window) {
                b.re = s * w;
            }
            fft.process(&mut buf);
            buf[..fft_len / 2 + 1]
                .iter()
                .map(|c| 20.0 * c.norm().max(spec.floor).log10())
                .collect()
        })
        .collect();
    Ok(Spectrogram {
        frames,
        sample_rate: sr,
        frame_len,
        hop,
        fft_len,
    })
}
