//! Parametric filter design: Parzen band-pass filters built from a squared
//! Epanechnikov window, three-tap notch filters, and filterbank layouts.

use std::collections::HashMap;
use std::f64::consts::{PI, SQRT_2, TAU};
use std::sync::{Mutex, OnceLock};

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dsp::FirFilter;
use crate::error::{param_err, Error, Result};

/// `(1 − γt²)²` inside `|t| ≤ 1/√γ`, zero outside.
pub fn epanechnikov_window(gamma_w: f64, t: f64) -> f64 {
    let u = 1.0 - gamma_w * t * t;
    if u >= 0.0 {
        u * u
    } else {
        0.0
    }
}

/// Largest odd tap count not exceeding `support_len`; even supports lose
/// one tap so the filter stays symmetric about a single center tap.
pub fn odd_support(support_len: usize) -> usize {
    if support_len.is_multiple_of(2) {
        support_len.saturating_sub(1)
    } else {
        support_len
    }
}

/// Number of samples in `ms` milliseconds at `sample_rate`.
pub fn support_for_ms(ms: f64, sample_rate: u32) -> usize {
    (ms * 1e-3 * sample_rate as f64).round() as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParzenFilterSpec {
    /// Modulation frequency in Hz.
    pub eta: f64,
    /// Window width parameter in 1/s².
    pub gamma_w: f64,
    /// Maximum filter length in samples.
    pub support_len: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParzenDesign {
    pub filter: FirFilter,
    /// Set when the window's natural support did not fit in `support_len`.
    pub truncated: bool,
}

/// Samples `cos(2πηt)·k_γ(t)` at `t = n / sample_rate` over the window support
/// and zero-pads symmetrically to the (odd) support length.
pub fn parzen_filter(spec: &ParzenFilterSpec, sample_rate: u32) -> Result<ParzenDesign> {
    let fs = sample_rate as f64;
    if !(spec.gamma_w > 0.0 && spec.gamma_w.is_finite()) {
        return param_err(format!(
            "window parameter {} must be positive",
            spec.gamma_w
        ));
    }
    if !(spec.eta >= 0.0 && spec.eta < fs / 2.0) {
        return param_err(format!(
            "modulation frequency {} Hz outside [0, {} Hz)",
            spec.eta,
            fs / 2.0
        ));
    }
    let len = odd_support(spec.support_len);
    if len == 0 {
        return param_err("support length must be at least one sample");
    }
    let half = (len - 1) / 2;
    // taps with |n| < fs/√γ are nonzero
    let natural_half = ((fs / spec.gamma_w.sqrt()).ceil() as usize).saturating_sub(1);
    let truncated = natural_half > half;
    let used = natural_half.min(half);

    let mut taps = vec![0.0; len];
    for n in 0..=used {
        let t = n as f64 / fs;
        let v = (TAU * spec.eta * t).cos() * epanechnikov_window(spec.gamma_w, t);
        taps[half + n] = v;
        taps[half - n] = v;
    }
    Ok(ParzenDesign {
        filter: FirFilter::new(taps, half)?,
        truncated,
    })
}

/// `Σ_k taps[k]·e^{−j2πf(k−center)/fs}`.
pub fn frequency_response(h: &FirFilter, freq: f64, sample_rate: u32) -> Result<Complex64> {
    let fs = sample_rate as f64;
    if !(0.0..=fs / 2.0).contains(&freq) {
        return param_err(format!("frequency {freq} Hz outside [0, {} Hz]", fs / 2.0));
    }
    Ok(response_at(h, freq / fs))
}

fn response_at(h: &FirFilter, cycles_per_sample: f64) -> Complex64 {
    let c = h.center() as f64;
    h.taps()
        .iter()
        .enumerate()
        .map(|(k, &t)| Complex64::from_polar(t, -TAU * cycles_per_sample * (k as f64 - c)))
        .sum()
}

/// Magnitude response on `n_fft / 2 + 1` evenly spaced bins from DC to Nyquist.
pub fn magnitude_grid(h: &FirFilter, n_fft: usize) -> Vec<f64> {
    let n_fft = n_fft.max(h.len()).next_power_of_two();
    let mut buf: Vec<Complex64> = h
        .taps()
        .iter()
        .map(|&t| Complex64::new(t, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(n_fft)
        .collect();
    FftPlanner::new().plan_fft_forward(n_fft).process(&mut buf);
    buf[..=n_fft / 2].iter().map(|c| c.norm()).collect()
}

/// −3 dB passband of a filter around its magnitude peak.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Passband {
    pub peak_freq: f64,
    pub peak_gain: f64,
    /// Lower −3 dB edge; `None` when the passband reaches DC.
    pub lower: Option<f64>,
    /// Upper −3 dB edge; `None` when the passband reaches Nyquist.
    pub upper: Option<f64>,
}

impl Passband {
    /// Width of the band, counting the mirrored negative-frequency half when
    /// the band is centred on DC.
    pub fn width(&self, sample_rate: u32) -> f64 {
        let nyq = sample_rate as f64 / 2.0;
        match (self.lower, self.upper) {
            (Some(l), Some(u)) => u - l,
            (None, Some(u)) if self.peak_freq == 0.0 => 2.0 * u,
            (None, Some(u)) => u,
            (Some(l), None) => nyq - l,
            (None, None) => nyq,
        }
    }

    pub fn center(&self, sample_rate: u32) -> f64 {
        let nyq = sample_rate as f64 / 2.0;
        (self.lower.unwrap_or(0.0) + self.upper.unwrap_or(nyq)) / 2.0
    }
}

const GRID_FFT: usize = 16_384;

/// Locates the magnitude peak on a dense FFT grid and refines both −3 dB
/// crossings by bisection on the exact frequency response.
pub fn measure_passband(h: &FirFilter, sample_rate: u32) -> Passband {
    let fs = sample_rate as f64;
    let grid = magnitude_grid(h, GRID_FFT);
    let n_fft = (grid.len() - 1) * 2;
    let bin_hz = fs / n_fft as f64;
    let (k_peak, _) =
        grid.iter().enumerate().fold(
            (0, f64::MIN),
            |acc, (k, &m)| if m > acc.1 { (k, m) } else { acc },
        );
    let mag = |f: f64| response_at(h, f / fs).norm();
    let peak_freq = refine_peak(&mag, k_peak as f64 * bin_hz, bin_hz, fs / 2.0);
    let peak_gain = mag(peak_freq);
    let level = peak_gain / SQRT_2;

    let crossing = |from: usize, step: isize| -> Option<f64> {
        let mut k = from as isize;
        loop {
            let next = k + step;
            if next < 0 || next as usize >= grid.len() {
                return None;
            }
            if grid[next as usize] < level {
                let (a, b) = (k as f64 * bin_hz, next as f64 * bin_hz);
                return Some(bisect_level(&mag, level, a, b));
            }
            k = next;
        }
    };
    Passband {
        peak_freq,
        peak_gain,
        lower: crossing(k_peak, -1),
        upper: crossing(k_peak, 1),
    }
}

fn refine_peak(mag: &dyn Fn(f64) -> f64, f0: f64, bin_hz: f64, nyq: f64) -> f64 {
    // golden-section search over the neighbouring bins
    let (mut a, mut b) = ((f0 - bin_hz).max(0.0), (f0 + bin_hz).min(nyq));
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if mag(c) > mag(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let f = (a + b) / 2.0;
    [f0, f]
        .into_iter()
        .fold(f0, |best, x| if mag(x) > mag(best) { x } else { best })
}

/// Frequency in `[inside, outside]` where `mag` crosses `level`; `inside` is
/// above the level and `outside` below.
fn bisect_level(mag: &dyn Fn(f64) -> f64, level: f64, mut inside: f64, mut outside: f64) -> f64 {
    for _ in 0..80 {
        let mid = 0.5 * (inside + outside);
        if mag(mid) >= level {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    0.5 * (inside + outside)
}

/// Two-sided −3 dB width of the sampled window (`η = 0`) for `gamma_w`, or
/// `None` when the response never falls 3 dB below DC before Nyquist.
pub fn window_bandwidth(gamma_w: f64, sample_rate: u32, support_len: usize) -> Result<Option<f64>> {
    let design = parzen_filter(
        &ParzenFilterSpec {
            eta: 0.0,
            gamma_w,
            support_len,
        },
        sample_rate,
    )?;
    let fs = sample_rate as f64;
    let c = design.filter.center();
    // real, even response: W(f) = w0 + 2 Σ w_n cos(2π f n / fs)
    let half: Vec<f64> = design.filter.taps()[c..]
        .iter()
        .copied()
        .take_while(|&t| t != 0.0)
        .collect();
    let response = |f: f64| {
        let theta = TAU * f / fs;
        half[0]
            + 2.0
                * half[1..]
                    .iter()
                    .enumerate()
                    .map(|(n, w)| w * (theta * (n + 1) as f64).cos())
                    .sum::<f64>()
    };
    let level = response(0.0) / SQRT_2;
    let step = fs / 4096.0;
    let mut f = 0.0;
    while f < fs / 2.0 {
        let next = (f + step).min(fs / 2.0);
        if response(next) < level {
            let mag = |x: f64| response(x);
            return Ok(Some(2.0 * bisect_level(&mag, level, f, next)));
        }
        f = next;
    }
    Ok(None)
}

fn calibration_cache() -> &'static Mutex<HashMap<(u64, u32, usize), f64>> {
    type Key = (u64, u32, usize);
    static CACHE: OnceLock<Mutex<HashMap<Key, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Window parameter whose sampled window has a two-sided −3 dB main lobe of
/// `xi` Hz, found by bisection over `ln γ`.
pub fn bandwidth_to_gamma(xi: f64, sample_rate: u32, support_len: usize) -> Result<f64> {
    let key = (xi.to_bits(), sample_rate, support_len);
    if let Some(&g) = calibration_cache().lock().unwrap().get(&key) {
        return Ok(g);
    }
    let g = calibrate_gamma(xi, sample_rate, support_len)?;
    calibration_cache().lock().unwrap().insert(key, g);
    Ok(g)
}

fn calibrate_gamma(xi: f64, sample_rate: u32, support_len: usize) -> Result<f64> {
    let fs = sample_rate as f64;
    if !(xi > 0.0 && xi.is_finite()) {
        return param_err(format!("bandwidth {xi} Hz must be positive"));
    }
    let len = odd_support(support_len);
    if len < 3 {
        return Err(Error::Calibration(format!(
            "support of {support_len} samples cannot realize a window"
        )));
    }
    let half = ((len - 1) / 2) as f64;
    let gamma_lo = (fs / half).powi(2);
    let gamma_hi = fs * fs;
    let width = |g: f64| -> Result<f64> {
        Ok(window_bandwidth(g, sample_rate, support_len)?.unwrap_or(f64::INFINITY))
    };
    let narrowest = width(gamma_lo)?;
    if xi < narrowest {
        return Err(Error::Calibration(format!(
            "{xi} Hz is narrower than the {narrowest:.3} Hz achievable with {len} taps"
        )));
    }
    let (mut lo, mut hi) = (gamma_lo.ln(), gamma_hi.ln());
    if width(hi.exp())? < xi {
        return Err(Error::Calibration(format!(
            "{xi} Hz is wider than any window at {sample_rate} Hz"
        )));
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if width(mid.exp())? < xi {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// Centre frequencies and bandwidths of a filterbank, plus the band edges
/// they were derived from (`modes.len() + 1` values).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterBankLayout {
    pub modes: Vec<f64>,
    pub bandwidths: Vec<f64>,
    pub edges: Vec<f64>,
}

impl FilterBankLayout {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }
}

fn check_range(omega_min: f64, omega_max: f64, sample_rate: u32, p: usize) -> Result<()> {
    let nyq = sample_rate as f64 / 2.0;
    if p == 0 {
        return param_err("filterbank needs at least one band");
    }
    if !(omega_min > 0.0 && omega_min < omega_max) {
        return param_err(format!(
            "frequency range [{omega_min}, {omega_max}] Hz is empty or not positive"
        ));
    }
    if omega_max > nyq {
        return param_err(format!(
            "upper frequency {omega_max} Hz exceeds the Nyquist frequency {nyq} Hz"
        ));
    }
    Ok(())
}

/// `p` equal bands tiling `[omega_min, omega_max]`, with modes at band centres.
pub fn evenly_spaced_modes(
    omega_min: f64,
    omega_max: f64,
    sample_rate: u32,
    p: usize,
) -> Result<FilterBankLayout> {
    check_range(omega_min, omega_max, sample_rate, p)?;
    let delta = (omega_max - omega_min) / p as f64;
    let edges = (0..=p)
        .map(|i| {
            if i == p {
                omega_max
            } else {
                omega_min + i as f64 * delta
            }
        })
        .collect();
    Ok(FilterBankLayout {
        modes: (0..p)
            .map(|i| omega_min + (i as f64 + 0.5) * delta)
            .collect(),
        bandwidths: vec![delta; p],
        edges,
    })
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// `p` bands of equal Mel width tiling `[omega_min, omega_max]`.
pub fn mel_wide_bandwidths(
    omega_min: f64,
    omega_max: f64,
    sample_rate: u32,
    p: usize,
) -> Result<FilterBankLayout> {
    check_range(omega_min, omega_max, sample_rate, p)?;
    let (m_lo, m_hi) = (hz_to_mel(omega_min), hz_to_mel(omega_max));
    let dm = (m_hi - m_lo) / p as f64;
    let edges: Vec<f64> = (0..=p)
        .map(|i| match i {
            0 => omega_min,
            i if i == p => omega_max,
            i => mel_to_hz(m_lo + i as f64 * dm),
        })
        .collect();
    Ok(FilterBankLayout {
        modes: (0..p)
            .map(|i| mel_to_hz(m_lo + (i as f64 + 0.5) * dm))
            .collect(),
        bandwidths: edges.windows(2).map(|w| w[1] - w[0]).collect(),
        edges,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NotchSpec {
    /// Frequency of the spectral zero in Hz.
    pub dip_freq: f64,
}

/// `[1, −2cos(2π·dip/fs), 1]` centred on the middle tap. Not gain-normalized.
pub fn notch_filter(spec: &NotchSpec, sample_rate: u32) -> Result<FirFilter> {
    let fs = sample_rate as f64;
    if !(0.0..=fs / 2.0).contains(&spec.dip_freq) {
        return param_err(format!(
            "notch frequency {} Hz outside [0, {} Hz]",
            spec.dip_freq,
            fs / 2.0
        ));
    }
    let w = 2.0 * PI * spec.dip_freq / fs;
    FirFilter::new(vec![1.0, -2.0 * w.cos(), 1.0], 1)
}
