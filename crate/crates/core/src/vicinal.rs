//! Mixture-of-Gaussians neighborhoods around a training waveform, Monte-Carlo
//! sampling from them, the vicinal objective, the online keep-or-perturb
//! policy and probability averaging over perturbations.

use std::fmt;

use crate::augment::{
    augment, draw_record, freeze, AugmentConfig, AugmentRecord, DrawnParams, FrozenScheme, Scheme,
    SnrRange,
};
use crate::dsp::{snr_scale, Signal};
use crate::error::{param_err, Error, Result};
use crate::rng::RngState;

pub const DEFAULT_P_KEEP: f64 = 0.2;

const SIGMA_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;

/// Standard deviation of a component's Gaussian offset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseScale {
    /// Fixed per-sample standard deviation.
    Amplitude(f64),
    /// Scaled to an SNR drawn from the range, measured against the
    /// transformed signal.
    Snr(SnrRange),
}

/// One mixture component: a frozen linear map and a noise scale.
#[derive(Clone, Debug, PartialEq)]
pub struct VicinalComponent {
    pub params: DrawnParams,
    pub transform: FrozenScheme,
    pub sigma: NoiseScale,
}

impl VicinalComponent {
    pub fn new(params: DrawnParams, sigma: NoiseScale, sample_rate: u32) -> Result<Self> {
        match sigma {
            NoiseScale::Amplitude(s) if !(s.is_finite() && s >= 0.0) => {
                return param_err(format!("noise amplitude {s} must be finite and >= 0"));
            }
            NoiseScale::Snr(r) => r.validate()?,
            _ => {}
        }
        Ok(Self {
            transform: freeze(&params, sample_rate)?,
            params,
            sigma,
        })
    }

    pub fn identity(sigma: NoiseScale) -> Result<Self> {
        // identity freezes without touching the sample rate
        Self::new(DrawnParams::Identity, sigma, 1)
    }

    /// Freezes the drawn filter or room of an augmentation record. The
    /// record's own SNR becomes a fixed SNR for the component.
    pub fn from_record(record: &AugmentRecord, sample_rate: u32) -> Result<Self> {
        let sigma = match record.gamma_db {
            Some(g) => NoiseScale::Snr(SnrRange::fixed(g)),
            None => NoiseScale::Amplitude(0.0),
        };
        Self::new(record.params.clone(), sigma, sample_rate)
    }

    fn sample(&self, x: &Signal, seed: u64) -> Result<(Signal, Option<f64>)> {
        let mean = self.transform.transform(x)?;
        let mut noise_rng = RngState::with_stream(seed, NOISE_STREAM);
        match self.sigma {
            NoiseScale::Amplitude(0.0) => Ok((mean, None)),
            NoiseScale::Amplitude(s) => {
                let eps = self
                    .transform
                    .raw_noise(x.len(), x.sample_rate(), &mut noise_rng)?;
                Ok((mean.add(&eps.scaled(s)?)?, None))
            }
            NoiseScale::Snr(range) => {
                let gamma = range.draw(&mut RngState::with_stream(seed, SIGMA_STREAM));
                let raw = self
                    .transform
                    .raw_noise(x.len(), x.sample_rate(), &mut noise_rng)?;
                let eps = snr_scale(&raw, &mean, gamma)?;
                Ok((mean.add(&eps)?, Some(gamma)))
            }
        }
    }
}

/// Uniform-weight mixture of `K >= 1` components.
#[derive(Clone, Debug, PartialEq)]
pub struct VicinalDensity {
    components: Vec<VicinalComponent>,
}

impl VicinalDensity {
    pub fn new(components: Vec<VicinalComponent>) -> Result<Self> {
        if components.is_empty() {
            return param_err("vicinal density needs at least one component");
        }
        Ok(Self { components })
    }

    /// The delta density at the input.
    pub fn degenerate() -> Self {
        Self {
            components: vec![VicinalComponent::identity(NoiseScale::Amplitude(0.0))
                .expect("zero amplitude is valid")],
        }
    }

    /// One component per scheme, each with its filter or room drawn once
    /// and its noise scale left as the scheme's SNR range.
    pub fn from_schemes(
        schemes: &[Scheme],
        cfg: &AugmentConfig,
        sample_rate: u32,
        rng: &mut RngState,
    ) -> Result<Self> {
        let components = schemes
            .iter()
            .map(|&s| {
                let rec = draw_record(s, cfg, sample_rate, rng.next_u64())?;
                VicinalComponent::new(rec.params, NoiseScale::Snr(cfg.snr(s)), sample_rate)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(components)
    }

    pub fn components(&self) -> &[VicinalComponent] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VicinalSample {
    pub signal: Signal,
    pub component: usize,
    pub seed: u64,
    pub gamma_db: Option<f64>,
}

/// Draws `m` samples: a uniform component choice, then its mean plus a
/// Gaussian offset.
pub fn sample_vicinal(
    x: &Signal,
    density: &VicinalDensity,
    m: usize,
    rng: &mut RngState,
) -> Result<Vec<VicinalSample>> {
    if m == 0 {
        return param_err("sample count m must be >= 1");
    }
    if density.is_empty() {
        return param_err("vicinal density needs at least one component");
    }
    if x.is_empty() {
        return Err(Error::EmptyInput(
            "cannot sample around an empty signal".into(),
        ));
    }
    (0..m)
        .map(|_| {
            let component = rng.index(density.len());
            let seed = rng.next_u64();
            let (signal, gamma_db) = density.components[component].sample(x, seed)?;
            Ok(VicinalSample {
                signal,
                component,
                seed,
                gamma_db,
            })
        })
        .collect()
}

/// Keeps the input with probability `p_keep`, otherwise applies a uniformly
/// chosen scheme.
pub fn online_augment(
    x: &Signal,
    schemes: &[Scheme],
    cfg: &AugmentConfig,
    p_keep: f64,
    rng: &mut RngState,
) -> Result<(Signal, AugmentRecord)> {
    if !(0.0..=1.0).contains(&p_keep) {
        return param_err(format!("p_keep {p_keep} is outside [0, 1]"));
    }
    if schemes.is_empty() && p_keep < 1.0 {
        return param_err("online policy needs at least one scheme when p_keep < 1");
    }
    if x.is_empty() {
        return Err(Error::EmptyInput("cannot augment an empty signal".into()));
    }
    if rng.uniform() < p_keep {
        return Ok((x.clone(), AugmentRecord::identity(rng.next_u64())));
    }
    let scheme = schemes[rng.index(schemes.len())];
    augment(x, scheme, cfg, rng)
}

/// Non-negative weights over a label set summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::EmptyInput("probability vector has no labels".into()));
        }
        if let Some(v) = p.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return param_err(format!(
                "probability entry {v} is not a finite non-negative value"
            ));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return param_err(format!("probabilities sum to {sum}, not 1"));
        }
        Ok(Self(p))
    }

    pub fn one_hot(n: usize, label: usize) -> Result<Self> {
        if label >= n {
            return param_err(format!("label {label} out of range for {n} labels"));
        }
        let mut p = vec![0.0; n];
        p[label] = 1.0;
        Self::new(p)
    }

    /// Softmax of arbitrary finite scores.
    pub fn softmax(scores: &[f64]) -> Result<Self> {
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return param_err("softmax scores must be finite");
        }
        let e: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = e.iter().sum();
        Self::new(e.into_iter().map(|v| v / z).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn argmax(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
                if v > best.1 {
                    (i, v)
                } else {
                    best
                }
            })
            .0
    }
}

/// Elementwise mean of the predictions over perturbed copies of an input.
pub fn smooth_predict(vectors: &[ProbVector]) -> Result<ProbVector> {
    let Some(first) = vectors.first() else {
        return param_err("smoothing needs at least one probability vector");
    };
    let dim = first.len();
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::Shape(format!(
            "probability vectors have {dim} and {} labels",
            v.len()
        )));
    }
    let s = vectors.len() as f64;
    let mean = (0..dim)
        .map(|j| vectors.iter().map(|v| v.0[j]).sum::<f64>() / s)
        .collect();
    Ok(ProbVector(mean))
}

/// Negative log-likelihood averaged over `m` vicinal samples per training
/// pair and over pairs. The evaluator returns `log p(y | x)`.
pub fn vicinal_nll<L, E, F>(
    mut evaluator: F,
    pairs: &[(Signal, L)],
    density: &VicinalDensity,
    m: usize,
    rng: &mut RngState,
) -> Result<f64>
where
    E: fmt::Display,
    F: FnMut(&Signal, &L) -> std::result::Result<f64, E>,
{
    if pairs.is_empty() {
        return Err(Error::EmptyInput(
            "vicinal objective needs at least one pair".into(),
        ));
    }
    let mut total = 0.0;
    for (i, (x, y)) in pairs.iter().enumerate() {
        let samples = sample_vicinal(x, density, m, rng)?;
        let mut pair_sum = 0.0;
        for (j, s) in samples.iter().enumerate() {
            let provenance = || {
                format!(
                    "pair {i}, sample {j} (component {}, seed {})",
                    s.component, s.seed
                )
            };
            let lp = evaluator(&s.signal, y)
                .map_err(|e| Error::Evaluation(format!("{}: {e}", provenance())))?;
            if lp.is_nan() || lp == f64::INFINITY {
                return Err(Error::Evaluation(format!(
                    "{}: evaluator returned log-probability {lp}",
                    provenance()
                )));
            }
            pair_sum += lp;
        }
        total += pair_sum / m as f64;
    }
    Ok(-total / pairs.len() as f64)
}
