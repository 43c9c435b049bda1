use std::f64::consts::PI;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::rng::replicate_rng;

/// Deterministic covariate stream `x_1, x_2, …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Covariates {
    /// `x_t` uniform on `[0, 1)`, a pure function of `(seed, t)`.
    Seeded { seed: u64 },
    /// `x_t = (t - 1) mod period`.
    Cyclic { period: usize },
    /// `x_t = values[(t - 1) mod len]`.
    Table { values: Vec<f64> },
}

impl Covariates {
    pub fn at(&self, t: usize) -> f64 {
        match self {
            Covariates::Seeded { seed } => {
                // Each step owns one word-aligned block of the keystream.
                let mut rng = replicate_rng(*seed, u64::MAX);
                rng.set_word_pos(2 * t as u128);
                (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
            }
            Covariates::Cyclic { period } => ((t - 1) % period) as f64,
            Covariates::Table { values } => values[(t - 1) % values.len()],
        }
    }
}

/// Bounded basis map `Φ : X → [0, 1]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Basis {
    /// `Φ(x) = [1]`.
    Constant,
    /// `Φ(x) = [1, x, …, x^degree]` for `x ∈ [0, 1]`.
    Monomial { degree: usize },
    /// `Φ(x) = e_{x mod d}`, the one-hot vector of an integer covariate.
    Indicator { d: usize },
}

impl Basis {
    pub fn dim(&self) -> usize {
        match self {
            Basis::Constant => 1,
            Basis::Monomial { degree } => degree + 1,
            Basis::Indicator { d } => *d,
        }
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        match self {
            Basis::Constant => vec![1.0],
            Basis::Monomial { degree } => (0..=*degree).map(|k| x.powi(k as i32)).collect(),
            Basis::Indicator { d } => {
                let mut v = vec![0.0; *d];
                v[(x.round() as usize) % d] = 1.0;
                v
            }
        }
    }
}

/// Covariates, basis and the known noise precision `β`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SideInfoStream {
    pub covariates: Covariates,
    pub basis: Basis,
    pub beta: f64,
}

impl SideInfoStream {
    pub fn new(covariates: Covariates, basis: Basis, beta: f64) -> Result<Self> {
        let side = Self {
            covariates,
            basis,
            beta,
        };
        side.check()?;
        Ok(side)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return domain(format!("noise precision β = {} must be finite and positive", self.beta));
        }
        match (&self.basis, &self.covariates) {
            (Basis::Indicator { d: 0 }, _) => return domain("indicator basis needs d ≥ 1"),
            (_, Covariates::Cyclic { period: 0 }) => return domain("cyclic covariates need period ≥ 1"),
            (_, Covariates::Table { values }) if values.is_empty() => return domain("empty covariate table"),
            (Basis::Monomial { .. }, Covariates::Table { values })
                if values.iter().any(|x| !(0.0..=1.0).contains(x)) =>
            {
                return domain("monomial basis needs covariates in [0, 1]")
            }
            (Basis::Monomial { .. }, Covariates::Cyclic { period }) if *period > 2 => {
                return domain("monomial basis needs covariates in [0, 1]")
            }
            _ => {}
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// `Φ(x_t)` for the 1-based step `t`.
    pub fn features(&self, t: usize) -> Vec<f64> {
        self.basis.eval(self.covariates.at(t))
    }
}

/// Linear-Gaussian regression source `y_t ~ 𝒩(θᵀΦ(x_t), β⁻¹)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinRegSource {
    side: SideInfoStream,
    theta: Vec<f64>,
}

pub fn make_linreg(side: SideInfoStream, theta: &[f64]) -> Result<LinRegSource> {
    side.check()?;
    if theta.len() != side.dim() {
        return domain(format!(
            "parameter dimension {} does not match basis dimension {}",
            theta.len(),
            side.dim()
        ));
    }
    if theta.iter().any(|x| !x.is_finite()) {
        return domain("regression parameter must be finite");
    }
    Ok(LinRegSource {
        side,
        theta: theta.to_vec(),
    })
}

impl LinRegSource {
    pub fn side(&self) -> &SideInfoStream {
        &self.side
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn mean(&self, t: usize) -> f64 {
        dot(&self.theta, &self.side.features(t))
    }

    /// `ln 𝒩(y; θᵀΦ(x_t), β⁻¹)`.
    pub fn log_density(&self, t: usize, y: f64) -> f64 {
        normal_log_density(y, self.mean(t), 1.0 / self.side.beta)
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let sd = self.side.beta.recip().sqrt();
        (1..=n)
            .map(|t| {
                let z: f64 = StandardNormal.sample(rng);
                self.mean(t) + sd * z
            })
            .collect()
    }
}

pub(crate) fn normal_log_density(y: f64, mean: f64, variance: f64) -> f64 {
    let r = y - mean;
    -0.5 * ((2.0 * PI * variance).ln() + r * r / variance)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
