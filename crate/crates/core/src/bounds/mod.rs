//! Asymptotic redundancy bounds, gap reports against measured `Dₙ`, and the
//! Gaussian concentration check.
//!
//! The bounds hold in the limit superior; a finite-`n` value above a bound
//! is not a violation, so gap reports only summarize trends.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};
use crate::fisher::{det, spectral_norm};
use crate::numeric::{gamma, ln_gamma, ols_slope, NeumaierSum};
use crate::redundancy::RedundancyEstimate;
use crate::rng::replicate_rng;

/// Catalan's constant `G = Σ (−1)^k / (2k+1)²`.
pub const CATALAN: f64 = 0.915_965_594_177_219_015_054_603_514_932_384_110_774;

/// Points used for the slope fit.
pub const SLOPE_POINTS: usize = 8;
pub const MIN_GRID_POINTS: usize = 3;
pub const MONOTONE_TOL: f64 = 1e-12;
pub const MIN_CONCENTRATION_SAMPLES: usize = 10_000;

/// Which information term a report uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BoundVariant {
    /// `½ ln det Iₙ`.
    HalfLogDet { det: f64 },
    /// `(d/2) ln(‖Iₙ‖ + ε)`.
    SpectralEpsilon { spectral_norm: f64, epsilon: f64 },
    /// `½ ln det(Iₙ + εI)`.
    RegularizedLogDet { epsilon: f64 },
    /// `(d/k) ln Λₙ + (d/k) ln(1/k!) + d ln(k / 2Γ(1/k))`.
    HigherOrder { k: u32, lambda: f64, eta: f64 },
    /// No information term; `Dₙ ≤ ln 1/w(i)`.
    Countable { mass: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n: usize,
    /// `ln 1/w(θ₀)`.
    pub prior_term: f64,
    pub dimension_term: f64,
    pub information_term: f64,
    pub variant: BoundVariant,
    pub total: f64,
}

impl BoundReport {
    fn new(n: usize, prior_term: f64, dimension_term: f64, information_term: f64, variant: BoundVariant) -> Self {
        let total = prior_term + dimension_term + information_term;
        Self {
            n,
            prior_term,
            dimension_term,
            information_term,
            variant,
            total,
        }
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return domain("horizon must be at least 1");
    }
    Ok(())
}

fn check_ln_w0(ln_w0: f64) -> Result<()> {
    if ln_w0.is_nan() || ln_w0 == f64::INFINITY || ln_w0 == f64::NEG_INFINITY {
        return domain(format!("ln w(θ₀) = {ln_w0} must be finite"));
    }
    Ok(())
}

fn half_dim_log(d: usize, n: usize) -> f64 {
    0.5 * d as f64 * (n as f64 / (2.0 * PI)).ln()
}

/// `ln 1/w(θ₀) + (d/2) ln(n/2π) + ½ ln det Iₙ`.
pub fn bound_thm1(ln_w0: f64, d: usize, n: usize, det_in: f64) -> Result<BoundReport> {
    check_n(n)?;
    check_ln_w0(ln_w0)?;
    if !(det_in > 0.0) {
        return domain(format!(
            "det Iₙ = {det_in} is not positive; use the ε-regularized or higher-order bound instead"
        ));
    }
    Ok(BoundReport::new(
        n,
        -ln_w0,
        half_dim_log(d, n),
        0.5 * det_in.ln(),
        BoundVariant::HalfLogDet { det: det_in },
    ))
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return domain(format!("ε = {epsilon} must be positive"));
    }
    Ok(())
}

/// `ln 1/w(θ₀) + (d/2) ln(n/2π) + (d/2) ln(‖Iₙ‖ + ε)`.
pub fn bound_thm3(ln_w0: f64, d: usize, n: usize, spec_in: f64, epsilon: f64) -> Result<BoundReport> {
    check_n(n)?;
    check_ln_w0(ln_w0)?;
    check_epsilon(epsilon)?;
    if !(spec_in >= 0.0) {
        return domain(format!("spectral norm {spec_in} must be nonnegative"));
    }
    let info = 0.5 * d as f64 * (spec_in + epsilon).ln();
    Ok(BoundReport::new(
        n,
        -ln_w0,
        half_dim_log(d, n),
        info,
        BoundVariant::SpectralEpsilon {
            spectral_norm: spec_in,
            epsilon,
        },
    ))
}

/// The sharper form `½ ln det(Iₙ + εI)` of [`bound_thm3`].
pub fn bound_thm3_matrix(ln_w0: f64, n: usize, fisher: &DMatrix<f64>, epsilon: f64) -> Result<BoundReport> {
    check_n(n)?;
    check_ln_w0(ln_w0)?;
    check_epsilon(epsilon)?;
    let d = fisher.nrows();
    // Symmetry check only; the value is unused.
    spectral_norm(fisher)?;
    let reg = fisher + DMatrix::identity(d, d) * epsilon;
    let dt = det(&reg)?;
    if !(dt > 0.0) {
        return domain("Iₙ + εI is not positive definite");
    }
    Ok(BoundReport::new(
        n,
        -ln_w0,
        half_dim_log(d, n),
        0.5 * dt.ln(),
        BoundVariant::RegularizedLogDet { epsilon },
    ))
}

fn check_order(k: u32, lambda: f64) -> Result<()> {
    if k < 2 || k % 2 == 1 {
        return domain(format!("order k = {k} must be even and ≥ 2"));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return domain(format!("Λₙ = {lambda} must be positive"));
    }
    Ok(())
}

/// `ηₙ = ((2/k)(k!/(nΛₙ))^{1/k} Γ(1/k))^d`, the volume factor of the
/// order-`k` Laplace approximation.
pub fn eta_n(d: usize, k: u32, n: usize, lambda: f64) -> Result<f64> {
    check_n(n)?;
    check_order(k, lambda)?;
    let kf = k as f64;
    let ln_kfact = ln_gamma(kf + 1.0);
    let base = (2.0 / kf) * ((ln_kfact - (n as f64).ln() - lambda.ln()) / kf).exp() * gamma(1.0 / kf);
    Ok(base.powi(d as i32))
}

/// `ln 1/w(θ₀) + (d/k) ln n + (d/k) ln Λₙ + (d/k) ln(1/k!) + d ln(k / 2Γ(1/k))`.
pub fn bound_higher_order(ln_w0: f64, d: usize, k: u32, n: usize, lambda: f64) -> Result<BoundReport> {
    check_n(n)?;
    check_ln_w0(ln_w0)?;
    check_order(k, lambda)?;
    let (df, kf) = (d as f64, k as f64);
    let dimension = df / kf * (n as f64).ln();
    let info = df / kf * lambda.ln() - df / kf * ln_gamma(kf + 1.0) + df * (kf / (2.0 * gamma(1.0 / kf))).ln();
    let eta = eta_n(d, k, n, lambda)?;
    Ok(BoundReport::new(
        n,
        -ln_w0,
        dimension,
        info,
        BoundVariant::HigherOrder { k, lambda, eta },
    ))
}

/// `Dₙ ≤ ln 1/w(i)` for every `n`.
pub fn bound_countable(mass: f64, n: usize) -> Result<BoundReport> {
    if !(mass > 0.0 && mass <= 1.0) {
        return domain(format!("prior mass {mass} is not in (0, 1]"));
    }
    Ok(BoundReport::new(
        n,
        -mass.ln(),
        0.0,
        0.0,
        BoundVariant::Countable { mass },
    ))
}

/// Normalized Jeffreys density of a two-state chain at `θ = (p(0|0), p(0|1))`:
/// `√det I = 1/((1 − a + b)√(a(1 − b)))`, which integrates to `4G` over the
/// unit square.
pub fn markov2_jeffreys_log_density(theta: &[f64]) -> Result<f64> {
    let [a, b] = theta else {
        return domain("two-state chain parameters have dimension 2");
    };
    if !(*a > 0.0 && *a < 1.0 && *b > 0.0 && *b < 1.0) {
        return domain("two-state chain parameters must lie in (0, 1)");
    }
    Ok(-(4.0 * CATALAN).ln() - (1.0 - a + b).ln() - 0.5 * (a * (1.0 - b)).ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// OLS slope of `Dₙ` against `ln n` over the largest grid points.
    pub slope: f64,
    /// `Dₙ − (bound − ln 1/w(θ₀))`, to be compared with the prior term.
    pub gaps: Vec<f64>,
    /// Gaps are nonincreasing over the last three decades of the grid.
    pub monotone_tail: bool,
}

pub fn gap_report(empirical: &[RedundancyEstimate], bounds: &[BoundReport]) -> Result<GapReport> {
    if empirical.len() < MIN_GRID_POINTS {
        return config(format!(
            "gap reports need at least {MIN_GRID_POINTS} grid points, got {}",
            empirical.len()
        ));
    }
    if empirical.len() != bounds.len() || empirical.iter().zip(bounds).any(|(e, b)| e.n != b.n) {
        return config("empirical and bound series must share one n-grid");
    }
    if empirical.windows(2).any(|w| w[1].n <= w[0].n) {
        return config("the n-grid must be strictly increasing");
    }
    let gaps: Vec<f64> = empirical
        .iter()
        .zip(bounds)
        .map(|(e, b)| e.value - (b.dimension_term + b.information_term))
        .collect();
    let tail = empirical.len().saturating_sub(SLOPE_POINTS);
    let x: Vec<f64> = empirical[tail..].iter().map(|e| (e.n as f64).ln()).collect();
    let y: Vec<f64> = empirical[tail..].iter().map(|e| e.value).collect();
    let slope = ols_slope(&x, &y);
    let n_max = empirical.last().expect("nonempty").n as f64;
    let first = empirical.iter().position(|e| e.n as f64 >= n_max / 1000.0).unwrap_or(0);
    let monotone_tail = gaps[first..].windows(2).all(|w| w[1] <= w[0] + MONOTONE_TOL);
    Ok(GapReport {
        slope,
        gaps,
        monotone_tail,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationCheck {
    pub coverage: f64,
    /// `1 − d/δ`.
    pub bound: f64,
    pub std_error: f64,
    pub pass: bool,
}

/// Empirical `P(‖θ − θ₀‖²_{Σ⁻¹} ≤ δ)` for `θ ~ 𝒩(θ₀, Σ)` against `1 − d/δ`.
/// Passes when coverage ≥ bound − 3·SE.
pub fn normal_concentration_check(
    sigma: &DMatrix<f64>,
    delta: f64,
    samples: usize,
    seed: u64,
) -> Result<ConcentrationCheck> {
    if samples < MIN_CONCENTRATION_SAMPLES {
        return config(format!(
            "need at least {MIN_CONCENTRATION_SAMPLES} samples, got {samples}"
        ));
    }
    if !(delta > 0.0) {
        return domain(format!("δ = {delta} must be positive"));
    }
    spectral_norm(sigma)?;
    let d = sigma.nrows();
    let chol = Cholesky::new(sigma.clone()).ok_or_else(|| Error::Domain("Σ is not positive definite".into()))?;
    let l = chol.l();
    let precision = chol.inverse();
    let hits: usize = (0..samples as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r);
            let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            let x = &l * z;
            usize::from(x.dot(&(&precision * &x)) <= delta)
        })
        .sum();
    let coverage = hits as f64 / samples as f64;
    let std_error = (coverage * (1.0 - coverage) / samples as f64).sqrt();
    let bound = 1.0 - d as f64 / delta;
    Ok(ConcentrationCheck {
        coverage,
        bound,
        std_error,
        pass: coverage >= bound - 3.0 * std_error,
    })
}

/// Neumaier total of the components, for checking `total`.
pub fn component_sum(r: &BoundReport) -> f64 {
    [r.prior_term, r.dimension_term, r.information_term]
        .into_iter()
        .collect::<NeumaierSum>()
        .value()
}
