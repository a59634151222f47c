//! Signal primitives: containers, white noise, convolution and SNR mixing.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{param_err, Error, Result};
use crate::rng::RngState;

/// Tap count above which [`convolve_same`] switches to FFT overlap-add.
pub const FFT_TAP_THRESHOLD: usize = 64;

/// Mono waveform with its sample rate.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return param_err("sample rate must be positive");
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return param_err(format!("sample {i} is not finite"));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean of squared samples over the whole signal.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|v| v * v).sum::<f64>() / self.samples.len() as f64
    }

    pub fn scaled(&self, gain: f64) -> Result<Signal> {
        Signal::new(
            self.samples.iter().map(|v| v * gain).collect(),
            self.sample_rate,
        )
    }

    pub fn add(&self, other: &Signal) -> Result<Signal> {
        check_compatible(self, other)?;
        Signal::new(
            self.samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a + b)
                .collect(),
            self.sample_rate,
        )
    }

    pub fn sub(&self, other: &Signal) -> Result<Signal> {
        check_compatible(self, other)?;
        Signal::new(
            self.samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a - b)
                .collect(),
            self.sample_rate,
        )
    }

    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Result<Signal> {
        Signal::new(samples, self.sample_rate)
    }
}

fn check_compatible(a: &Signal, b: &Signal) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "signal lengths differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.sample_rate != b.sample_rate {
        return Err(Error::Shape(format!(
            "sample rates differ ({} vs {})",
            a.sample_rate, b.sample_rate
        )));
    }
    Ok(())
}

/// Finite impulse response with an explicit time-zero tap.
#[derive(Clone, Debug, PartialEq)]
pub struct FirFilter {
    taps: Vec<f64>,
    center: usize,
}

impl FirFilter {
    pub fn new(taps: Vec<f64>, center: usize) -> Result<Self> {
        if taps.is_empty() {
            return param_err("filter needs at least one tap");
        }
        if center >= taps.len() {
            return param_err(format!("center {center} outside {} taps", taps.len()));
        }
        if let Some(i) = taps.iter().position(|v| !v.is_finite()) {
            return param_err(format!("tap {i} is not finite"));
        }
        Ok(Self { taps, center })
    }

    pub fn identity() -> Self {
        Self {
            taps: vec![1.0],
            center: 0,
        }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn center(&self) -> usize {
        self.center
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn scaled(&self, gain: f64) -> FirFilter {
        FirFilter {
            taps: self.taps.iter().map(|t| t * gain).collect(),
            center: self.center,
        }
    }

    /// One coefficient per line in shortest round-trip decimal form.
    pub fn to_tap_list(&self) -> String {
        let mut out = String::new();
        for t in &self.taps {
            out.push_str(&format!("{t}\n"));
        }
        out
    }

    /// Parses a tap list written by [`FirFilter::to_tap_list`]; the center is
    /// supplied by the caller because the list format carries only taps.
    pub fn from_tap_list(text: &str, center: usize) -> Result<Self> {
        let taps = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .enumerate()
            .map(|(i, l)| {
                l.parse::<f64>()
                    .map_err(|e| Error::Format(format!("tap line {}: {e}", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(taps, center)
    }
}

/// `n` i.i.d. standard-normal samples.
pub fn white_noise(n: usize, sample_rate: u32, rng: &mut RngState) -> Result<Signal> {
    if n == 0 {
        return Err(Error::EmptyInput("white noise of zero length".into()));
    }
    let mut samples = vec![0.0; n];
    rng.fill_normal(&mut samples);
    Signal::new(samples, sample_rate)
}

/// Linear convolution trimmed to the input length, with the filter's center
/// tap aligned to each output sample and zeros outside the signal.
pub fn convolve_same(x: &Signal, h: &FirFilter) -> Result<Signal> {
    if x.is_empty() {
        return Err(Error::EmptyInput("cannot convolve an empty signal".into()));
    }
    let out = if h.len() > FFT_TAP_THRESHOLD {
        convolve_fft(x.samples(), h.taps(), h.center())
    } else {
        convolve_direct(x.samples(), h.taps(), h.center())
    };
    x.with_samples(out)
}

/// Direct-sum evaluation of `out[i] = Σ_k taps[k]·x[i + center − k]`.
pub fn convolve_direct(x: &[f64], taps: &[f64], center: usize) -> Vec<f64> {
    let n = x.len() as isize;
    let c = center as isize;
    (0..n)
        .map(|i| {
            taps.iter()
                .enumerate()
                .filter_map(|(k, t)| {
                    let j = i + c - k as isize;
                    (0..n).contains(&j).then(|| t * x[j as usize])
                })
                .sum()
        })
        .collect()
}

struct FftPair {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FftPair {
    fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }
}

/// Overlap-add evaluation of the same sum as [`convolve_direct`].
pub fn convolve_fft(x: &[f64], taps: &[f64], center: usize) -> Vec<f64> {
    let n = x.len();
    let l = taps.len();
    let fft_len = (4 * l).next_power_of_two().max(256);
    let block = fft_len - l + 1;
    let ffts = FftPair::new(fft_len);
    let scale = 1.0 / fft_len as f64;

    let mut spectrum: Vec<Complex64> = taps
        .iter()
        .map(|&t| Complex64::new(t, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(fft_len)
        .collect();
    ffts.forward.process(&mut spectrum);

    let mut out = vec![0.0; n];
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_len];
    let mut start = 0;
    while start < n {
        let end = (start + block).min(n);
        buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
        for (b, &v) in buf.iter_mut().zip(&x[start..end]) {
            b.re = v;
        }
        ffts.forward.process(&mut buf);
        for (b, s) in buf.iter_mut().zip(&spectrum) {
            *b *= s;
        }
        ffts.inverse.process(&mut buf);
        // buf[j] is full-convolution index start + j
        for (j, b) in buf.iter().take(end - start + l - 1).enumerate() {
            let m = start + j;
            if m >= center && m - center < n {
                out[m - center] += b.re * scale;
            }
        }
        start = end;
    }
    out
}

/// Circular convolution `out[i] = Σ_k taps[k]·x[(i + center − k) mod n]`,
/// i.e. multiplication by the circulant matrix generated by the filter.
pub fn circular_convolve(x: &Signal, h: &FirFilter) -> Result<Signal> {
    let n = x.len();
    if n == 0 {
        return Err(Error::EmptyInput("cannot convolve an empty signal".into()));
    }
    if h.len() > n {
        return Err(Error::Size(format!(
            "{} taps exceed signal length {n}",
            h.len()
        )));
    }
    let n_i = n as isize;
    let c = h.center() as isize;
    let xs = x.samples();
    let out = (0..n_i)
        .map(|i| {
            h.taps()
                .iter()
                .enumerate()
                .map(|(k, t)| t * xs[(i + c - k as isize).rem_euclid(n_i) as usize])
                .sum()
        })
        .collect();
    x.with_samples(out)
}

fn nonzero_powers(a: &Signal, a_name: &str, b: &Signal, b_name: &str) -> Result<(f64, f64)> {
    check_compatible(a, b)?;
    if a.is_empty() {
        return Err(Error::EmptyInput("SNR of empty signals".into()));
    }
    let (pa, pb) = (a.power(), b.power());
    if pa <= 0.0 {
        return Err(Error::DegenerateSignal(format!("{a_name} has zero power")));
    }
    if pb <= 0.0 {
        return Err(Error::DegenerateSignal(format!("{b_name} has zero power")));
    }
    Ok((pa, pb))
}

/// Gain that brings `noise` to `gamma_db` below `reference`.
pub fn snr_scale_factor(noise: &Signal, reference: &Signal, gamma_db: f64) -> Result<f64> {
    if !gamma_db.is_finite() {
        return param_err("SNR must be finite");
    }
    let (p_ref, p_noise) = nonzero_powers(reference, "reference", noise, "noise")?;
    Ok((p_ref / (p_noise * 10f64.powf(gamma_db / 10.0))).sqrt())
}

pub fn snr_scale(noise: &Signal, reference: &Signal, gamma_db: f64) -> Result<Signal> {
    let s = snr_scale_factor(noise, reference, gamma_db)?;
    noise.scaled(s)
}

/// `10·log10(P_clean / P_noise)` over the full signals.
pub fn measure_snr(clean: &Signal, noise: &Signal) -> Result<f64> {
    let (pc, pn) = nonzero_powers(clean, "clean signal", noise, "noise")?;
    Ok(10.0 * (pc / pn).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sig(v: &[f64]) -> Signal {
        Signal::new(v.to_vec(), 16_000).unwrap()
    }

    fn random_vec(rng: &mut RngState, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect()
    }

    #[test]
    fn signal_rejects_non_finite() {
        assert!(Signal::new(vec![0.0, f64::NAN], 8000).is_err());
        assert!(Signal::new(vec![0.0], 0).is_err());
        assert!(FirFilter::new(vec![1.0], 1).is_err());
        assert!(FirFilter::new(vec![], 0).is_err());
    }

    #[test]
    fn white_noise_deterministic() {
        let a = white_noise(4, 16_000, &mut RngState::new(42)).unwrap();
        let b = white_noise(4, 16_000, &mut RngState::new(42)).unwrap();
        let bits = |s: &Signal| s.samples().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn white_noise_moments() {
        // 5σ bounds: mean SE = 1/sqrt(n) ≈ 0.00316, variance SE = sqrt(2/n) ≈ 0.00447.
        let n = 100_000;
        for seed in [1u64, 2, 3] {
            let s = white_noise(n, 16_000, &mut RngState::new(seed)).unwrap();
            let mean = s.samples().iter().sum::<f64>() / n as f64;
            let var = s.samples().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!(mean.abs() < 0.02, "mean {mean}");
            assert!((var - 1.0).abs() < 0.03, "var {var}");
        }
    }

    #[test]
    fn white_noise_zero_length() {
        assert!(matches!(
            white_noise(0, 16_000, &mut RngState::new(1)),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn convolve_identity_and_second_difference() {
        let x = sig(&[1.0, 2.0, 3.0]);
        let y = convolve_same(&x, &FirFilter::identity()).unwrap();
        assert_eq!(y.samples(), &[1.0, 2.0, 3.0]);

        let x = sig(&[1.0, 0.0, 0.0, 0.0]);
        let h = FirFilter::new(vec![1.0, -2.0, 1.0], 1).unwrap();
        let y = convolve_same(&x, &h).unwrap();
        assert_eq!(y.samples(), &[-2.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn convolve_empty_signal() {
        let x = Signal::new(vec![], 16_000).unwrap();
        assert!(matches!(
            convolve_same(&x, &FirFilter::identity()),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn direct_and_fft_paths_agree() {
        let mut rng = RngState::new(5);
        let x = random_vec(&mut rng, 64);
        let h = random_vec(&mut rng, 9);
        for c in 0..9 {
            let d = convolve_direct(&x, &h, c);
            let f = convolve_fft(&x, &h, c);
            let err = d
                .iter()
                .zip(&f)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-9, "center {c}: {err}");
        }
        // long filters, long signals, the FFT path through convolve_same
        let x = random_vec(&mut rng, 5000);
        let h = random_vec(&mut rng, 700);
        let d = convolve_direct(&x, &h, 123);
        let f = convolve_same(&sig(&x), &FirFilter::new(h, 123).unwrap()).unwrap();
        let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = d
            .iter()
            .zip(f.samples())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err / scale < 1e-9);
    }

    #[test]
    fn circular_identity_and_size_error() {
        let x = sig(&[1.0, 2.0, 3.0, 4.0]);
        let y = circular_convolve(&x, &FirFilter::identity()).unwrap();
        assert_eq!(y.samples(), x.samples());
        let short = sig(&[1.0, 2.0, 3.0]);
        let h = FirFilter::new(vec![1.0; 5], 2).unwrap();
        assert!(matches!(circular_convolve(&short, &h), Err(Error::Size(_))));
    }

    #[test]
    fn snr_scale_examples() {
        let a = sig(&[1.0, -1.0, 1.0, -1.0]);
        let b = sig(&[-1.0, 1.0, 1.0, -1.0]);
        assert!((snr_scale_factor(&b, &a, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((snr_scale_factor(&b, &a, 20.0).unwrap() - 0.1).abs() < 1e-15);
        let silence = sig(&[0.0; 4]);
        assert!(matches!(
            snr_scale(&b, &silence, 10.0),
            Err(Error::DegenerateSignal(_))
        ));
        assert!(matches!(
            snr_scale(&silence, &a, 10.0),
            Err(Error::DegenerateSignal(_))
        ));
        assert!(matches!(
            snr_scale(&sig(&[1.0]), &a, 10.0),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn measure_snr_examples() {
        let a = sig(&[1.0, -1.0, 1.0, -1.0]);
        let b = sig(&[-1.0, 1.0, 1.0, -1.0]);
        assert!(measure_snr(&a, &b).unwrap().abs() < 1e-12);
        assert!((measure_snr(&a, &b.scaled(0.1).unwrap()).unwrap() - 20.0).abs() < 1e-9);
        let mut rng = RngState::new(3);
        let x = white_noise(1000, 16_000, &mut rng).unwrap();
        let e = white_noise(1000, 16_000, &mut rng).unwrap();
        for g in [8.0, 20.0, 32.0] {
            let scaled = snr_scale(&e, &x, g).unwrap();
            assert!((measure_snr(&x, &scaled).unwrap() - g).abs() < 1e-6);
        }
    }

    #[test]
    fn tap_list_round_trip() {
        let h = FirFilter::new(vec![0.1, -1.0 / 3.0, 1e-20, 2.5], 1).unwrap();
        let back = FirFilter::from_tap_list(&h.to_tap_list(), 1).unwrap();
        assert_eq!(h, back);
        assert!(FirFilter::from_tap_list("1.0\nabc\n", 0).is_err());
    }

    proptest! {
        #[test]
        fn convolution_is_linear(
            x in proptest::collection::vec(-1.0f64..1.0, 1..40),
            taps in proptest::collection::vec(-1.0f64..1.0, 1..12),
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
            seed in any::<u64>(),
        ) {
            let mut rng = RngState::new(seed);
            let y: Vec<f64> = (0..x.len()).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
            let center = rng.index(taps.len());
            let h = FirFilter::new(taps, center).unwrap();
            let combo: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + beta * b).collect();
            let lhs = convolve_same(&sig(&combo), &h).unwrap();
            let cx = convolve_same(&sig(&x), &h).unwrap();
            let cy = convolve_same(&sig(&y), &h).unwrap();
            for i in 0..x.len() {
                let rhs = alpha * cx.samples()[i] + beta * cy.samples()[i];
                prop_assert!((lhs.samples()[i] - rhs).abs() < 1e-9);
            }
        }

        #[test]
        fn snr_round_trip(gamma in 8.0f64..32.0, seed in any::<u64>()) {
            let mut rng = RngState::new(seed);
            let x = white_noise(256, 16_000, &mut rng).unwrap();
            let e = white_noise(256, 16_000, &mut rng).unwrap();
            let scaled = snr_scale(&e, &x, gamma).unwrap();
            prop_assert!((measure_snr(&x, &scaled).unwrap() - gamma).abs() < 1e-6);
        }

        #[test]
        fn convolution_preserves_length(n in 1usize..300, l in 1usize..200, seed in any::<u64>()) {
            let mut rng = RngState::new(seed);
            let x = sig(&random_vec(&mut rng, n));
            let c = rng.index(l);
            let h = FirFilter::new(random_vec(&mut rng, l), c).unwrap();
            prop_assert_eq!(convolve_same(&x, &h).unwrap().len(), n);
        }
    }
}
