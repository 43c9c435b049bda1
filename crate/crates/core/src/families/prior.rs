use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::numeric::ln_gamma;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorKind {
    JeffreysCategorical,
    ProductDirichletMarkov,
    Gaussian,
    Uniform,
    DiscreteMass,
}

/// Prior densities with respect to Lebesgue measure on the parameter space
/// (or a probability mass function for countable families).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PriorDensity {
    /// Symmetric Dirichlet(½) on the open `d`-simplex.
    JeffreysCategorical {
        d: usize,
    },
    /// Independent Dirichlet(½) on each row of an `states`-state transition
    /// matrix.
    ProductDirichlet {
        states: usize,
    },
    Gaussian {
        mean: Vec<f64>,
        cov: Vec<Vec<f64>>,
    },
    /// Uniform on the interval `[low, high]`.
    Uniform {
        low: f64,
        high: f64,
    },
    DiscreteMass {
        mass: Vec<f64>,
    },
}

pub fn jeffreys_categorical(d: usize) -> Result<PriorDensity> {
    if d == 0 {
        return domain("Jeffreys prior needs d ≥ 1");
    }
    Ok(PriorDensity::JeffreysCategorical { d })
}

impl PriorDensity {
    pub fn gaussian(mean: Vec<f64>, cov: Vec<Vec<f64>>) -> Result<Self> {
        let prior = PriorDensity::Gaussian { mean, cov };
        prior.check()?;
        Ok(prior)
    }

    pub fn uniform(low: f64, high: f64) -> Result<Self> {
        let prior = PriorDensity::Uniform { low, high };
        prior.check()?;
        Ok(prior)
    }

    pub fn check(&self) -> Result<()> {
        match self {
            PriorDensity::JeffreysCategorical { d } => jeffreys_categorical(*d).map(drop),
            PriorDensity::ProductDirichlet { states } if *states < 2 => {
                domain("product Dirichlet prior needs at least 2 states")
            }
            PriorDensity::ProductDirichlet { .. } => Ok(()),
            PriorDensity::Gaussian { mean, cov } => {
                let d = mean.len();
                if d == 0 || cov.len() != d || cov.iter().any(|r| r.len() != d) {
                    return domain("Gaussian prior covariance must be d×d with d = dim(mean) ≥ 1");
                }
                let m = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
                if (0..d).any(|i| (0..d).any(|j| (m[(i, j)] - m[(j, i)]).abs() > 1e-12)) {
                    return domain("Gaussian prior covariance is not symmetric");
                }
                if Cholesky::new(m).is_none() {
                    return domain("Gaussian prior covariance is not positive definite");
                }
                Ok(())
            }
            PriorDensity::Uniform { low, high } => {
                if low.is_finite() && high.is_finite() && low < high {
                    Ok(())
                } else {
                    domain(format!("uniform prior needs finite low < high, got [{low}, {high}]"))
                }
            }
            PriorDensity::DiscreteMass { mass } => {
                if mass.is_empty() || mass.iter().any(|&w| !(w > 0.0 && w <= 1.0)) {
                    return domain("discrete prior masses must lie in (0, 1]");
                }
                let s: f64 = mass.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    return domain(format!("discrete prior masses sum to {s}"));
                }
                Ok(())
            }
        }
    }

    pub fn kind(&self) -> PriorKind {
        match self {
            PriorDensity::JeffreysCategorical { .. } => PriorKind::JeffreysCategorical,
            PriorDensity::ProductDirichlet { .. } => PriorKind::ProductDirichletMarkov,
            PriorDensity::Gaussian { .. } => PriorKind::Gaussian,
            PriorDensity::Uniform { .. } => PriorKind::Uniform,
            PriorDensity::DiscreteMass { .. } => PriorKind::DiscreteMass,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            PriorDensity::JeffreysCategorical { d } => *d,
            PriorDensity::ProductDirichlet { states } => states * (states - 1),
            PriorDensity::Gaussian { mean, .. } => mean.len(),
            PriorDensity::Uniform { .. } => 1,
            PriorDensity::DiscreteMass { .. } => 0,
        }
    }

    /// `ln w(θ)` in nats; `-inf` outside the support (including simplex
    /// boundaries). For a discrete prior `θ` is `[index]`.
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        match self {
            PriorDensity::JeffreysCategorical { d } => {
                if theta.len() != *d {
                    return f64::NEG_INFINITY;
                }
                dirichlet_half_log_density(theta)
            }
            PriorDensity::ProductDirichlet { states } => {
                if theta.len() != states * (states - 1) {
                    return f64::NEG_INFINITY;
                }
                theta.chunks(states - 1).map(dirichlet_half_log_density).sum()
            }
            PriorDensity::Gaussian { mean, cov } => {
                if theta.len() != mean.len() {
                    return f64::NEG_INFINITY;
                }
                gaussian_log_density(theta, mean, cov)
            }
            PriorDensity::Uniform { low, high } => {
                if theta.len() == 1 && theta[0] >= *low && theta[0] <= *high {
                    -(high - low).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            PriorDensity::DiscreteMass { mass } => match theta.first().map(|&i| i as usize).and_then(|i| mass.get(i)) {
                Some(w) => w.ln(),
                None => f64::NEG_INFINITY,
            },
        }
    }
}

/// `ln Dir(θ; ½, …, ½)` over the free coordinates of the `d`-simplex:
/// `Γ((d+1)/2) π^{-(d+1)/2} Π_k θ_k^{-1/2}` with `θ_0 = 1 - Σθ`.
fn dirichlet_half_log_density(theta: &[f64]) -> f64 {
    let d = theta.len() as f64;
    let rest = 1.0 - theta.iter().sum::<f64>();
    if rest <= 0.0 || theta.iter().any(|&x| x <= 0.0) {
        return f64::NEG_INFINITY;
    }
    let log_norm = ln_gamma((d + 1.0) / 2.0) - (d + 1.0) / 2.0 * PI.ln();
    log_norm - 0.5 * (rest.ln() + theta.iter().map(|x| x.ln()).sum::<f64>())
}

fn gaussian_log_density(x: &[f64], mean: &[f64], cov: &[Vec<f64>]) -> f64 {
    let d = mean.len();
    let m = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
    let Some(chol) = Cholesky::new(m) else {
        return f64::NAN;
    };
    let diff = DVector::from_iterator(d, x.iter().zip(mean).map(|(a, b)| a - b));
    let z = chol.l().solve_lower_triangular(&diff).expect("triangular solve");
    let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * (z.norm_squared() + d as f64 * (2.0 * PI).ln() + log_det)
}
