use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{mean_and_se, Method, RedundancyEstimate, RedundancyTrajectory, TrajectoryKind, MIN_MC_SAMPLES};
use crate::error::{config, domain, Error, Result};
use crate::families::{LinRegSource, PriorDensity, SideInfoStream};
use crate::mixtures::LinRegPredictor;
use crate::rng::replicate_rng;

fn prior_parts(prior: &PriorDensity, d: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let PriorDensity::Gaussian { mean, cov } = prior else {
        return config("regression redundancy needs a Gaussian prior");
    };
    prior.check()?;
    if mean.len() != d {
        return domain(format!(
            "prior dimension {} does not match basis dimension {d}",
            mean.len()
        ));
    }
    Ok((
        DVector::from_column_slice(mean),
        DMatrix::from_fn(d, d, |i, j| cov[i][j]),
    ))
}

fn inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Numeric(format!("{what} is not positive definite")))
}

fn gram(side: &SideInfoStream, n: usize) -> DMatrix<f64> {
    let d = side.dim();
    let mut g = DMatrix::zeros(d, d);
    for t in 1..=n {
        let phi = DVector::from_vec(side.features(t));
        g += &phi * phi.transpose();
    }
    g
}

/// `Dₙ = KL(𝒩(Φθ₀, β⁻¹I) ‖ 𝒩(Φμ, β⁻¹I + ΦΣΦᵀ))` reduced to `d × d` algebra:
/// with `G = ΦᵀΦ`, `A = Σ⁻¹ + βG` and `δ = θ₀ − μ`,
/// `2Dₙ = tr(A⁻¹Σ⁻¹) − d + δᵀ(βG − β²GA⁻¹G)δ + ln det Σ + ln det A`.
pub fn linreg_redundancy_exact(
    side: &SideInfoStream,
    prior: &PriorDensity,
    theta0: &[f64],
    n: usize,
) -> Result<RedundancyEstimate> {
    side.check()?;
    let d = side.dim();
    let (mu, sigma) = prior_parts(prior, d)?;
    if theta0.len() != d {
        return domain("θ₀ dimension does not match the basis");
    }
    let beta = side.beta;
    let g = gram(side, n);
    let sigma_inv = inverse(&sigma, "prior covariance")?;
    let a = &sigma_inv + &g * beta;
    let a_inv = inverse(&a, "posterior precision")?;
    let delta = DVector::from_column_slice(theta0) - mu;
    let quad = &g * beta - &g * &a_inv * &g * (beta * beta);
    let value = 0.5
        * ((&a_inv * &sigma_inv).trace() - d as f64
            + delta.dot(&(quad * &delta))
            + sigma.determinant().ln()
            + a.determinant().ln());
    Ok(RedundancyEstimate::exact(n, value, Method::ClosedForm))
}

/// Exact `E[d_t]` for the regression mixture. Before step `t` the posterior
/// mean `m` is Gaussian under `P_θ₀` with mean `S(Σ⁻¹μ + βGθ₀)` and
/// covariance `βSGS`, where `S = (Σ⁻¹ + βG)⁻¹` uses the first `t − 1`
/// features; `E[d_t]` is the expectation of the Gaussian KL between the
/// truth `𝒩(θ₀ᵀφ, 1/β)` and the predictive `𝒩(mᵀφ, 1/β + φᵀSφ)`.
pub fn linreg_chain_rule(
    side: &SideInfoStream,
    prior: &PriorDensity,
    theta0: &[f64],
    n: usize,
) -> Result<RedundancyTrajectory> {
    side.check()?;
    let d = side.dim();
    let (mu, sigma) = prior_parts(prior, d)?;
    if theta0.len() != d {
        return domain("θ₀ dimension does not match the basis");
    }
    let beta = side.beta;
    let theta0 = DVector::from_column_slice(theta0);
    let sigma_inv = inverse(&sigma, "prior covariance")?;
    let prior_info = &sigma_inv * &mu;
    let mut g = DMatrix::zeros(d, d);
    let mut terms = Vec::with_capacity(n);
    for t in 1..=n {
        let s = inverse(&(&sigma_inv + &g * beta), "posterior precision")?;
        let mean_m = &s * (&prior_info + &g * &theta0 * beta);
        let cov_m = &s * &g * &s * beta;
        let phi = DVector::from_vec(side.features(t));
        let v = 1.0 / beta + phi.dot(&(&s * &phi));
        let bias = phi.dot(&(&theta0 - &mean_m));
        let spread = phi.dot(&(&cov_m * &phi));
        terms.push(0.5 * ((1.0 / beta + bias * bias + spread) / v - 1.0 + (v * beta).ln()));
        g += &phi * phi.transpose();
    }
    Ok(RedundancyTrajectory {
        kind: TrajectoryKind::Expected,
        terms,
    })
}

/// Monte Carlo regression redundancy `E ln pⁿ_θ₀(y)/mⁿ(y)`.
pub fn linreg_mc_redundancy(
    source: &LinRegSource,
    prior: &PriorDensity,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<RedundancyEstimate> {
    if samples < MIN_MC_SAMPLES {
        return config(format!(
            "Monte Carlo needs at least {MIN_MC_SAMPLES} samples, got {samples}"
        ));
    }
    let base = LinRegPredictor::new(source.side().clone(), prior)?;
    let values: Vec<f64> = (0..samples as u64)
        .into_par_iter()
        .map(|r| {
            let y = source.sample(n, &mut replicate_rng(seed, r));
            let mut m = base.clone();
            let mut lp = 0.0;
            for (t, &v) in y.iter().enumerate() {
                lp += source.log_density(t + 1, v);
                m.observe(v)?;
            }
            Ok(lp - m.log_marginal())
        })
        .collect::<Result<_>>()?;
    let (value, std_error) = mean_and_se(&values);
    Ok(RedundancyEstimate {
        n,
        value,
        std_error,
        method: Method::MonteCarlo,
        samples,
    })
}
