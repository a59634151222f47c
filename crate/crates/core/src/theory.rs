//! Finite-difference spectral constants of a sufficient statistic and a
//! Monte-Carlo check of the local-robustness radius
//! `r = (σ/δ)(√a + σ√(b/2))` under Gaussian input noise.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{param_err, Error, Result};
use crate::rng::RngState;

/// A map `R^d -> R^D`.
///
/// The bound is only claimed within a second-order expansion, so a statistic
/// must state the largest noise scale for which that holds. The shipped
/// analytic statistics have no remainder beyond second order and certify
/// every scale.
pub trait StatisticFn {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Largest σ for which the caller vouches for the expansion.
    fn sigma_max(&self) -> Option<f64> {
        None
    }
}

/// `Ψ(x) = x`.
#[derive(Clone, Debug)]
pub struct IdentityStatistic {
    pub dim: usize,
}

impl StatisticFn for IdentityStatistic {
    fn input_dim(&self) -> usize {
        self.dim
    }
    fn output_dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(x.to_vec())
    }
    fn sigma_max(&self) -> Option<f64> {
        Some(f64::INFINITY)
    }
}

/// `Ψ(x) = W x` with `W` of shape `D × d`.
#[derive(Clone, Debug)]
pub struct LinearStatistic {
    pub w: DMatrix<f64>,
}

impl LinearStatistic {
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::Shape(
                "linear statistic needs a non-empty matrix".into(),
            ));
        }
        Ok(Self { w })
    }

    /// Entries drawn from a standard normal.
    pub fn random(rows: usize, cols: usize, rng: &mut RngState) -> Result<Self> {
        Self::new(DMatrix::from_fn(rows, cols, |_, _| rng.standard_normal()))
    }
}

impl StatisticFn for LinearStatistic {
    fn input_dim(&self) -> usize {
        self.w.ncols()
    }
    fn output_dim(&self) -> usize {
        self.w.nrows()
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok((&self.w * DVector::from_column_slice(x))
            .as_slice()
            .to_vec())
    }
    fn sigma_max(&self) -> Option<f64> {
        Some(f64::INFINITY)
    }
}

/// `Ψ_j(x) = xᵀ A_j x`.
#[derive(Clone, Debug)]
pub struct QuadraticStatistic {
    pub forms: Vec<DMatrix<f64>>,
}

impl QuadraticStatistic {
    pub fn new(forms: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = forms.first() else {
            return Err(Error::Shape(
                "quadratic statistic needs at least one form".into(),
            ));
        };
        let d = first.nrows();
        if d == 0 || forms.iter().any(|a| a.nrows() != d || a.ncols() != d) {
            return Err(Error::Shape(
                "quadratic forms must all be square and the same size".into(),
            ));
        }
        Ok(Self { forms })
    }

    /// The single form `diag(1, 2)`.
    pub fn diag_example() -> Self {
        Self {
            forms: vec![DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]))],
        }
    }

    /// `outputs` forms of size `dim` with standard normal entries, scaled by
    /// `scale`.
    pub fn random(dim: usize, outputs: usize, scale: f64, rng: &mut RngState) -> Result<Self> {
        Self::new(
            (0..outputs)
                .map(|_| DMatrix::from_fn(dim, dim, |_, _| scale * rng.standard_normal()))
                .collect(),
        )
    }

    pub fn analytic_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let x = DVector::from_column_slice(x);
        let cols: Vec<DVector<f64>> = self
            .forms
            .iter()
            .map(|a| (a + a.transpose()) * &x)
            .collect();
        DMatrix::from_columns(&cols)
    }

    pub fn analytic_hessians(&self) -> Vec<DMatrix<f64>> {
        self.forms.iter().map(|a| a + a.transpose()).collect()
    }
}

impl StatisticFn for QuadraticStatistic {
    fn input_dim(&self) -> usize {
        self.forms[0].nrows()
    }
    fn output_dim(&self) -> usize {
        self.forms.len()
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let x = DVector::from_column_slice(x);
        Ok(self.forms.iter().map(|a| x.dot(&(a * &x))).collect())
    }
    fn sigma_max(&self) -> Option<f64> {
        Some(f64::INFINITY)
    }
}

/// Wraps a closure with declared dimensions and an optional σ certificate.
pub struct FnStatistic<F> {
    f: F,
    input_dim: usize,
    output_dim: usize,
    sigma_max: Option<f64>,
}

impl<F> FnStatistic<F>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    pub fn new(input_dim: usize, output_dim: usize, f: F) -> Self {
        Self {
            f,
            input_dim,
            output_dim,
            sigma_max: None,
        }
    }

    pub fn with_sigma_max(mut self, sigma_max: f64) -> Self {
        self.sigma_max = Some(sigma_max);
        self
    }
}

impl<F> StatisticFn for FnStatistic<F>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    fn input_dim(&self) -> usize {
        self.input_dim
    }
    fn output_dim(&self) -> usize {
        self.output_dim
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok((self.f)(x))
    }
    fn sigma_max(&self) -> Option<f64> {
        self.sigma_max
    }
}

/// The analytic statistics used by the command line and test suites.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShippedStatistic {
    Identity,
    Linear,
    Quadratic,
}

impl std::str::FromStr for ShippedStatistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "linear" => Ok(Self::Linear),
            "quadratic" => Ok(Self::Quadratic),
            _ => param_err(format!("unknown statistic {s:?}")),
        }
    }
}

impl ShippedStatistic {
    pub const ALL: [ShippedStatistic; 3] = [Self::Identity, Self::Linear, Self::Quadratic];

    pub fn name(self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Linear => "linear",
            Self::Quadratic => "quadratic",
        }
    }

    /// The statistic on `R^dim` and its evaluation point.
    ///
    /// Identity is checked at the origin. Linear uses a `⌈dim/2⌉ × dim`
    /// standard normal matrix drawn from `seed`, checked at a standard
    /// normal point. Quadratic uses the single form `diag(1, …, dim)`,
    /// checked at the all-ones point.
    pub fn build(self, dim: usize, seed: u64) -> Result<(Box<dyn StatisticFn>, Vec<f64>)> {
        if dim == 0 {
            return param_err("statistic dimension must be >= 1");
        }
        let mut rng = RngState::new(seed);
        Ok(match self {
            Self::Identity => (Box::new(IdentityStatistic { dim }), vec![0.0; dim]),
            Self::Linear => {
                let psi = LinearStatistic::random(dim.div_ceil(2), dim, &mut rng)?;
                let x = (0..dim).map(|_| rng.standard_normal()).collect();
                (Box::new(psi), x)
            }
            Self::Quadratic => {
                let a = DMatrix::from_diagonal(&DVector::from_fn(dim, |i, _| (i + 1) as f64));
                (Box::new(QuadraticStatistic::new(vec![a])?), vec![1.0; dim])
            }
        })
    }
}

fn eval_checked(psi: &dyn StatisticFn, x: &[f64]) -> Result<Vec<f64>> {
    let y = psi.eval(x)?;
    if y.len() != psi.output_dim() {
        return Err(Error::Evaluation(format!(
            "statistic returned {} outputs, declared {}",
            y.len(),
            psi.output_dim()
        )));
    }
    if let Some(v) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::Evaluation(format!(
            "statistic returned non-finite value {v}"
        )));
    }
    Ok(y)
}

fn check_point(psi: &dyn StatisticFn, x: &[f64]) -> Result<()> {
    if x.len() != psi.input_dim() {
        return Err(Error::Shape(format!(
            "point has {} coordinates, statistic expects {}",
            x.len(),
            psi.input_dim()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return param_err("evaluation point must be finite");
    }
    Ok(())
}

fn check_step(h: f64) -> Result<()> {
    if !(h.is_finite() && h > 0.0) {
        return param_err(format!("finite-difference step {h} must be > 0"));
    }
    Ok(())
}

/// `1e-4 · (1 + ‖x‖∞)`.
pub fn default_step(x: &[f64]) -> f64 {
    1e-4 * (1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

fn shifted(x: &[f64], moves: &[(usize, f64)]) -> Vec<f64> {
    let mut y = x.to_vec();
    for &(i, d) in moves {
        y[i] += d;
    }
    y
}

/// Central-difference Jacobian, `d × D`, entry `(i, j) = ∂Ψ_j/∂x_i`.
pub fn jacobian_fd(psi: &dyn StatisticFn, x: &[f64], h: f64) -> Result<DMatrix<f64>> {
    check_point(psi, x)?;
    check_step(h)?;
    let (d, big_d) = (psi.input_dim(), psi.output_dim());
    let mut j = DMatrix::zeros(d, big_d);
    for i in 0..d {
        let fp = eval_checked(psi, &shifted(x, &[(i, h)]))?;
        let fm = eval_checked(psi, &shifted(x, &[(i, -h)]))?;
        for k in 0..big_d {
            j[(i, k)] = (fp[k] - fm[k]) / (2.0 * h);
        }
    }
    Ok(j)
}

/// Second-order central-difference Hessians, one symmetric `d × d` matrix
/// per output.
pub fn hessian_fd(psi: &dyn StatisticFn, x: &[f64], h: f64) -> Result<Vec<DMatrix<f64>>> {
    check_point(psi, x)?;
    check_step(h)?;
    let (d, big_d) = (psi.input_dim(), psi.output_dim());
    let f0 = eval_checked(psi, x)?;
    let mut hs = vec![DMatrix::zeros(d, d); big_d];
    let h2 = h * h;
    for i in 0..d {
        let fp = eval_checked(psi, &shifted(x, &[(i, h)]))?;
        let fm = eval_checked(psi, &shifted(x, &[(i, -h)]))?;
        for (k, m) in hs.iter_mut().enumerate() {
            m[(i, i)] = (fp[k] - 2.0 * f0[k] + fm[k]) / h2;
        }
        for l in (i + 1)..d {
            let fpp = eval_checked(psi, &shifted(x, &[(i, h), (l, h)]))?;
            let fpm = eval_checked(psi, &shifted(x, &[(i, h), (l, -h)]))?;
            let fmp = eval_checked(psi, &shifted(x, &[(i, -h), (l, h)]))?;
            let fmm = eval_checked(psi, &shifted(x, &[(i, -h), (l, -h)]))?;
            for (k, m) in hs.iter_mut().enumerate() {
                let v = (fpp[k] - fpm[k] - fmp[k] + fmm[k]) / (4.0 * h2);
                m[(i, l)] = v;
                m[(l, i)] = v;
            }
        }
    }
    Ok(hs)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralConstants {
    /// `tr(JᵀJ)`.
    pub a: f64,
    /// `Σ_j tr(H_j) + tr(H_j H_j)`.
    pub b: f64,
    /// The `Σ_j tr(H_j H_j)` part of `b`; never negative.
    pub b_curvature: f64,
}

/// Constants from already computed derivative tensors.
pub fn constants_from(jacobian: &DMatrix<f64>, hessians: &[DMatrix<f64>]) -> SpectralConstants {
    let a = jacobian.iter().map(|v| v * v).sum();
    let trace: f64 = hessians.iter().map(|m| m.trace()).sum();
    // symmetric H, so tr(HH) is the squared Frobenius norm
    let b_curvature: f64 = hessians
        .iter()
        .map(|m| m.iter().map(|v| v * v).sum::<f64>())
        .sum();
    SpectralConstants {
        a,
        b: trace + b_curvature,
        b_curvature,
    }
}

pub fn constants_ab(psi: &dyn StatisticFn, x: &[f64], h: f64) -> Result<SpectralConstants> {
    Ok(constants_from(
        &jacobian_fd(psi, x, h)?,
        &hessian_fd(psi, x, h)?,
    ))
}

/// Largest change of `a` and `b` between steps `h` and `2h`, relative for
/// magnitudes above one and absolute below.
pub fn richardson_gap(psi: &dyn StatisticFn, x: &[f64], h: f64) -> Result<f64> {
    let c1 = constants_ab(psi, x, h)?;
    let c2 = constants_ab(psi, x, 2.0 * h)?;
    let rel = |p: f64, q: f64| (p - q).abs() / p.abs().max(q.abs()).max(1.0);
    Ok(rel(c1.a, c2.a).max(rel(c1.b, c2.b)))
}

/// `(σ/δ)(√a + σ√(b/2))`, with a negative `b` treated as zero.
pub fn robustness_radius(c: &SpectralConstants, sigma: f64, delta: f64) -> f64 {
    sigma / delta * (c.a.sqrt() + sigma * (c.b.max(0.0) / 2.0).sqrt())
}

/// `δ + 3·sqrt(δ(1-δ)/n)`.
pub fn pass_threshold(delta: f64, n: usize) -> f64 {
    delta + 3.0 * (delta * (1.0 - delta) / n as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub sigma: f64,
    pub delta: f64,
    pub a: f64,
    pub b: f64,
    pub radius: f64,
    pub n_samples: usize,
    pub violations: usize,
    pub violation_rate: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl fmt::Display for BoundReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "sigma={} delta={} a={} b={} radius={} n_samples={} violations={} violation_rate={} threshold={} result={}",
            self.sigma,
            self.delta,
            self.a,
            self.b,
            self.radius,
            self.n_samples,
            self.violations,
            self.violation_rate,
            self.threshold,
            if self.pass { "pass" } else { "fail" }
        )
    }
}

/// Draws `ε ~ N(0, σ²I)` `n_samples` times and counts
/// `‖Ψ(x+ε) − Ψ(x)‖ ≥ r`.
pub fn verify_bound(
    psi: &dyn StatisticFn,
    x: &[f64],
    sigma: f64,
    delta: f64,
    n_samples: usize,
    rng: &mut RngState,
) -> Result<BoundReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return param_err(format!("delta {delta} must lie in (0, 1)"));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return param_err(format!("sigma {sigma} must be > 0"));
    }
    if n_samples == 0 {
        return param_err("n_samples must be >= 1");
    }
    match psi.sigma_max() {
        None => {
            return param_err(
                "statistic has no sigma_max certificate; the bound is only checked inside a certified range",
            )
        }
        Some(m) if sigma > m => {
            return param_err(format!("sigma {sigma} exceeds the certified sigma_max {m}"));
        }
        _ => {}
    }
    let c = constants_ab(psi, x, default_step(x))?;
    let radius = robustness_radius(&c, sigma, delta);
    let f0 = DVector::from_vec(eval_checked(psi, x)?);
    let mut xe = vec![0.0; x.len()];
    let mut violations = 0;
    for _ in 0..n_samples {
        for (e, &xi) in xe.iter_mut().zip(x) {
            *e = xi + sigma * rng.standard_normal();
        }
        let f = DVector::from_vec(eval_checked(psi, &xe)?);
        if (f - &f0).norm() >= radius {
            violations += 1;
        }
    }
    let violation_rate = violations as f64 / n_samples as f64;
    let threshold = pass_threshold(delta, n_samples);
    Ok(BoundReport {
        sigma,
        delta,
        a: c.a,
        b: c.b,
        radius,
        n_samples,
        violations,
        violation_rate,
        threshold,
        pass: violation_rate < threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_jacobian_and_constants() {
        let psi = IdentityStatistic { dim: 3 };
        let x = [0.3, -1.0, 2.0];
        let j = jacobian_fd(&psi, &x, 1e-4).unwrap();
        assert!((j - DMatrix::<f64>::identity(3, 3)).amax() < 1e-8);
        let c = constants_ab(&psi, &x, 1e-4).unwrap();
        assert!((c.a - 3.0).abs() < 1e-6 && c.b.abs() < 1e-6);
    }

    #[test]
    fn hand_differentiated_jacobian() {
        let psi = FnStatistic::new(2, 2, |x: &[f64]| vec![x[0] * x[0], x[0] * x[1]]);
        let j = jacobian_fd(&psi, &[1.0, 2.0], 1e-4).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[2.0, 2.0, 0.0, 1.0]);
        assert!((j - want).amax() < 1e-6);
    }

    #[test]
    fn diag_quadratic_constants() {
        let psi = QuadraticStatistic::diag_example();
        let c = constants_ab(&psi, &[1.0, 1.0], default_step(&[1.0, 1.0])).unwrap();
        assert!((c.a - 20.0).abs() / 20.0 < 1e-5, "{c:?}");
        assert!((c.b - 26.0).abs() / 26.0 < 1e-5, "{c:?}");
    }

    #[test]
    fn hessian_is_exactly_symmetric() {
        let psi = FnStatistic::new(3, 1, |x: &[f64]| {
            vec![(x[0] * x[1]).sin() + x[2].powi(3) * x[0]]
        });
        for m in hessian_fd(&psi, &[0.2, 0.7, -0.4], 1e-3).unwrap() {
            assert_eq!(m, m.transpose());
        }
    }

    #[test]
    fn bad_inputs_rejected() {
        let psi = IdentityStatistic { dim: 2 };
        let mut rng = RngState::new(1);
        assert!(verify_bound(&psi, &[0.0, 0.0], 0.1, 1.0, 10, &mut rng).is_err());
        assert!(verify_bound(&psi, &[0.0, 0.0], -0.1, 0.3, 10, &mut rng).is_err());
        assert!(verify_bound(&psi, &[0.0], 0.1, 0.3, 10, &mut rng).is_err());
        assert!(jacobian_fd(&psi, &[0.0, 0.0], 0.0).is_err());
        let uncertified = FnStatistic::new(1, 1, |x: &[f64]| vec![x[0].sin()]);
        assert!(verify_bound(&uncertified, &[0.0], 0.1, 0.3, 10, &mut rng).is_err());
        let certified = FnStatistic::new(1, 1, |x: &[f64]| vec![x[0].sin()]).with_sigma_max(0.05);
        assert!(verify_bound(&certified, &[0.0], 0.1, 0.3, 10, &mut rng).is_err());
        assert!(verify_bound(&certified, &[0.0], 0.01, 0.3, 10, &mut rng).is_ok());
        let nan = FnStatistic::new(1, 1, |_: &[f64]| vec![f64::NAN]);
        assert!(matches!(
            jacobian_fd(&nan, &[0.0], 1e-4),
            Err(Error::Evaluation(_))
        ));
    }

    #[test]
    fn identity_report_example() {
        let psi = IdentityStatistic { dim: 16 };
        let r = verify_bound(&psi, &[0.0; 16], 0.1, 0.3, 10_000, &mut RngState::new(2)).unwrap();
        assert!((r.radius - 0.1 / 0.3 * 4.0).abs() < 1e-6);
        assert!(r.pass, "{r}");
        assert!(r.to_string().ends_with("result=pass"));
    }
}
