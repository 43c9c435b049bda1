use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};
use crate::families::linreg::{dot, normal_log_density};
use crate::families::{PriorDensity, SideInfoStream};

/// Gaussian belief `𝒩(mean, cov)` over regression weights. `cov` is
/// row-major `d × d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPosterior {
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
}

impl GaussianPosterior {
    pub fn new(mean: Vec<f64>, cov: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || cov.len() != d * d {
            return domain("posterior covariance must be d×d with d = dim(mean) ≥ 1");
        }
        if Cholesky::new(DMatrix::from_row_slice(d, d, &cov)).is_none() {
            return Err(Error::Numeric("posterior covariance is not positive definite".into()));
        }
        Ok(Self { mean, cov })
    }

    pub fn from_prior(prior: &PriorDensity) -> Result<Self> {
        match prior {
            PriorDensity::Gaussian { mean, cov } => {
                prior.check()?;
                Self::new(mean.clone(), cov.concat())
            }
            other => config(format!(
                "regression mixtures need a Gaussian prior, got {:?}",
                other.kind()
            )),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `S φ`.
    fn cov_times(&self, phi: &[f64]) -> Vec<f64> {
        self.cov.chunks(self.dim()).map(|row| dot(row, phi)).collect()
    }

    /// Conjugate update on one observation `y` with features `φ`, as a
    /// rank-one Kalman step: `S ← S − SφφᵀS / v`, `m ← m + Sφ (y − mᵀφ) / v`
    /// with `v = 1/β + φᵀSφ`.
    pub fn update(&mut self, phi: &[f64], beta: f64, y: f64) -> Result<()> {
        let d = self.dim();
        if phi.len() != d {
            return domain(format!(
                "feature vector has length {} but the posterior has {d}",
                phi.len()
            ));
        }
        let s = self.cov_times(phi);
        let v = 1.0 / beta + dot(phi, &s);
        if !(v > 0.0) {
            return Err(Error::Numeric(format!("predictive variance {v} is not positive")));
        }
        let resid = y - dot(&self.mean, phi);
        for (m, si) in self.mean.iter_mut().zip(&s) {
            *m += si * resid / v;
        }
        for i in 0..d {
            for j in 0..d {
                self.cov[i * d + j] -= s[i] * s[j] / v;
            }
        }
        // Keep the covariance exactly symmetric.
        for i in 0..d {
            for j in 0..i {
                let avg = 0.5 * (self.cov[i * d + j] + self.cov[j * d + i]);
                self.cov[i * d + j] = avg;
                self.cov[j * d + i] = avg;
            }
        }
        if (0..d).any(|i| !(self.cov[i * d + i] > 0.0)) {
            return Err(Error::Numeric("posterior covariance lost positive definiteness".into()));
        }
        Ok(())
    }

    /// Predictive `(mean, variance)` of `y` at features `φ`.
    pub fn predictive(&self, phi: &[f64], beta: f64) -> (f64, f64) {
        (dot(&self.mean, phi), 1.0 / beta + dot(phi, &self.cov_times(phi)))
    }
}

pub fn linreg_posterior_update(
    posterior: &GaussianPosterior,
    phi: &[f64],
    beta: f64,
    y: f64,
) -> Result<GaussianPosterior> {
    let mut next = posterior.clone();
    next.update(phi, beta, y)?;
    Ok(next)
}

pub fn linreg_predictive(posterior: &GaussianPosterior, phi: &[f64], beta: f64) -> (f64, f64) {
    posterior.predictive(phi, beta)
}

/// Streaming Bayes mixture for linear-Gaussian regression with known
/// covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinRegPredictor {
    side: SideInfoStream,
    posterior: GaussianPosterior,
    t: usize,
    log_marginal: f64,
}

impl LinRegPredictor {
    pub fn new(side: SideInfoStream, prior: &PriorDensity) -> Result<Self> {
        side.check()?;
        let posterior = GaussianPosterior::from_prior(prior)?;
        if posterior.dim() != side.dim() {
            return domain(format!(
                "prior dimension {} does not match basis dimension {}",
                posterior.dim(),
                side.dim()
            ));
        }
        Ok(Self {
            side,
            posterior,
            t: 0,
            log_marginal: 0.0,
        })
    }

    pub fn posterior(&self) -> &GaussianPosterior {
        &self.posterior
    }

    pub fn side(&self) -> &SideInfoStream {
        &self.side
    }

    /// Predictive `(mean, variance)` for the next target.
    pub fn predictive(&self) -> (f64, f64) {
        self.posterior
            .predictive(&self.side.features(self.t + 1), self.side.beta)
    }

    /// Conditions on the next target, returning its predictive log-density.
    pub fn observe(&mut self, y: f64) -> Result<f64> {
        let phi = self.side.features(self.t + 1);
        let (mean, var) = self.posterior.predictive(&phi, self.side.beta);
        let lp = normal_log_density(y, mean, var);
        self.posterior.update(&phi, self.side.beta, y)?;
        self.t += 1;
        self.log_marginal += lp;
        Ok(lp)
    }

    pub fn log_marginal(&self) -> f64 {
        self.log_marginal
    }

    pub fn steps(&self) -> usize {
        self.t
    }
}
