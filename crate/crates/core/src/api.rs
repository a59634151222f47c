//! Array-in, array-out entry points for in-process callers such as language
//! bindings. Each call builds its generator from `seed` and delegates to the
//! signal-level API without extra logic.

use crate::augment::{augment, AugmentConfig, AugmentRecord, Scheme};
use crate::dsp::Signal;
use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::vicinal::{sample_vicinal, smooth_predict, ProbVector, VicinalDensity};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Rejects anything but a one-dimensional array; returns its length.
pub fn check_shape(shape: &[usize]) -> Result<usize> {
    match shape {
        [n] => Ok(*n),
        _ => Err(Error::Shape(format!(
            "expected a one-dimensional sample array, got shape {shape:?}"
        ))),
    }
}

pub fn augment_array(
    samples: &[f64],
    sample_rate: u32,
    scheme: &str,
    seed: u64,
    cfg: &AugmentConfig,
) -> Result<(Vec<f64>, AugmentRecord)> {
    let x = Signal::new(samples.to_vec(), sample_rate)?;
    let scheme: Scheme = scheme.parse()?;
    let (y, rec) = augment(&x, scheme, cfg, &mut RngState::new(seed))?;
    Ok((y.into_samples(), rec))
}

/// One component per scheme, drawn from `seed`.
pub fn default_density(sample_rate: u32, cfg: &AugmentConfig, seed: u64) -> Result<VicinalDensity> {
    VicinalDensity::from_schemes(&Scheme::ALL, cfg, sample_rate, &mut RngState::new(seed))
}

pub fn sample_vicinal_array(
    samples: &[f64],
    sample_rate: u32,
    density: &VicinalDensity,
    m: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let x = Signal::new(samples.to_vec(), sample_rate)?;
    Ok(sample_vicinal(&x, density, m, &mut RngState::new(seed))?
        .into_iter()
        .map(|s| s.signal.into_samples())
        .collect())
}

pub fn smooth_predict_arrays(vectors: &[Vec<f64>]) -> Result<Vec<f64>> {
    let pv = vectors
        .iter()
        .map(|v| ProbVector::new(v.clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok(smooth_predict(&pv)?.as_slice().to_vec())
}
