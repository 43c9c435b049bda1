//! Experiment configuration. Unknown keys are rejected everywhere so typos
//! fail before any work is done.

use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use mixred::families::{FiniteFamily, ParameterPoint, PriorDensity, SideInfoStream};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: FamilySpec,
    pub prior: PriorDensity,
    /// Parameter of the true source. For countable families, `[index]` of
    /// the true member.
    pub theta0: Vec<f64>,
    pub n_grid: NGrid,
    pub method: MethodSpec,
    pub bound: BoundSpec,
    pub seed: u64,
    /// Quadrature nodes for one-parameter families without a conjugate
    /// mixture.
    #[serde(default = "default_nodes")]
    pub quadrature_nodes: usize,
    #[serde(default)]
    pub trend: Option<TrendSpec>,
}

fn default_nodes() -> usize {
    4096
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FamilySpec {
    Finite {
        family: FiniteFamily,
    },
    /// Gaussian linear regression with known noise precision.
    Linreg {
        side: SideInfoStream,
    },
    /// Finitely many members of one finite family; the prior must be
    /// `discrete-mass` over them.
    Countable {
        family: FiniteFamily,
        members: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NGrid {
    Geometric(GeometricGrid),
    Explicit(ExplicitGrid),
}

/// `n_i = round(start · factor^i)` for `i < count`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometricGrid {
    pub start: usize,
    pub factor: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitGrid {
    pub values: Vec<usize>,
}

impl NGrid {
    pub fn points(&self) -> Vec<usize> {
        match self {
            NGrid::Geometric(g) => (0..g.count)
                .map(|i| (g.start as f64 * g.factor.powi(i as i32)).round() as usize)
                .collect(),
            NGrid::Explicit(e) => e.values.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MethodSpec {
    /// Closed form, count classes, or full enumeration, in that order of
    /// preference.
    Exact,
    Mc {
        samples: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BoundSpec {
    /// `ln 1/w + (d/2) ln(n/2π) + ½ ln det I`.
    Thm1,
    /// Spectral-norm form with regularizer `epsilon`.
    Thm3 { epsilon: f64 },
    /// Order-`k` flat minimum; `Λ` is measured when not given.
    HigherOrder {
        k: u32,
        #[serde(default)]
        lambda: Option<f64>,
    },
    /// `ln 1/w(θ₀)` for a discrete prior.
    Countable,
}

/// Pass/fail conditions on the gap report, checked by `redundancy` and `gap`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrendSpec {
    pub slope_min: f64,
    pub slope_max: f64,
    #[serde(default)]
    pub require_monotone_tail: bool,
    /// Largest allowed `gap − ln 1/w(θ₀)` over the grid.
    #[serde(default)]
    pub gap_excess_max: Option<f64>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.n_grid.points();
        ensure!(
            grid.len() >= mixred::bounds::MIN_GRID_POINTS,
            "n-grid needs at least 3 points, got {}",
            grid.len()
        );
        ensure!(grid[0] >= 1, "n-grid must start at n ≥ 1");
        ensure!(
            grid.windows(2).all(|w| w[1] > w[0]),
            "n-grid must be strictly increasing: {grid:?}"
        );
        if let MethodSpec::Mc { samples } = self.method {
            ensure!(
                samples >= mixred::redundancy::MIN_MC_SAMPLES,
                "Monte Carlo needs at least 100 samples"
            );
        }
        self.prior.check()?;
        match &self.family {
            FamilySpec::Finite { family } => {
                family.check()?;
                family.validate(&self.theta0)?;
                ParameterPoint::new(self.theta0.clone())?;
            }
            FamilySpec::Linreg { side } => {
                side.check()?;
                ensure!(
                    self.theta0.len() == side.dim(),
                    "θ₀ has {} entries, basis has {}",
                    self.theta0.len(),
                    side.dim()
                );
                ensure!(
                    matches!(self.prior, PriorDensity::Gaussian { .. }),
                    "regression needs a Gaussian prior"
                );
            }
            FamilySpec::Countable { family, members } => {
                family.check()?;
                for m in members {
                    family.validate(m)?;
                }
                let PriorDensity::DiscreteMass { mass } = &self.prior else {
                    bail!("countable families need a discrete-mass prior");
                };
                ensure!(
                    mass.len() == members.len(),
                    "{} members but {} masses",
                    members.len(),
                    mass.len()
                );
                ensure!(
                    self.theta0.len() == 1
                        && self.theta0[0].fract() == 0.0
                        && (self.theta0[0] as usize) < members.len(),
                    "θ₀ must be [index] of a member"
                );
            }
        }
        if let Some(t) = self.trend {
            ensure!(t.slope_min <= t.slope_max, "trend slope range is empty");
        }
        Ok(())
    }
}
