//! Parametric sequential sources.
//!
//! A [`FiniteFamily`] describes the shape of a finite-alphabet source family
//! (its alphabet, parameter dimension and how the conditional law depends on
//! the past); a [`FiniteSource`] is a family pinned at a validated parameter.
//! Every family in this module looks at the history only through a small
//! "context" (nothing for i.i.d. sources, the previous state for Markov
//! chains) plus the time index, which lets the redundancy code propagate
//! exact context distributions instead of enumerating sequences.

mod countable;
pub(crate) mod linreg;
mod prior;

pub use countable::{make_countable, CountableFamily};
pub use linreg::{make_linreg, Basis, Covariates, LinRegSource, SideInfoStream};
pub use prior::{jeffreys_categorical, PriorDensity, PriorKind};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Conditional probabilities of the clipped families are kept inside
/// `[PROB_FLOOR, 1 - PROB_FLOOR]` before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Tolerance on row sums of user supplied stochastic matrices.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// A point `θ ∈ ℝ^d` with finite coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParameterPoint(Vec<f64>);

impl ParameterPoint {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() {
            return domain("parameter dimension must be at least 1");
        }
        if let Some(x) = theta.iter().find(|x| !x.is_finite()) {
            return domain(format!("parameter coordinate {x} is not finite"));
        }
        Ok(Self(theta))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for ParameterPoint {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ParameterPoint> for Vec<f64> {
    fn from(p: ParameterPoint) -> Self {
        p.0
    }
}

/// The sequence `n ↦ a_n` of the non-equicontinuous counterexample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Schedule {
    Constant {
        value: f64,
    },
    /// `a_n = base^n`.
    Geometric {
        base: f64,
    },
    /// `a_n = values[n - 1]`, repeating the last entry past the end.
    Table {
        values: Vec<f64>,
    },
}

impl Schedule {
    pub fn at(&self, n: usize) -> f64 {
        match self {
            Schedule::Constant { value } => *value,
            Schedule::Geometric { base } => base.powi(n as i32),
            Schedule::Table { values } => values[(n.max(1) - 1).min(values.len() - 1)],
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |x: f64| !x.is_finite() || x < 0.0;
        match self {
            Schedule::Constant { value } if bad(*value) => {
                domain(format!("schedule value {value} must be finite and nonnegative"))
            }
            Schedule::Geometric { base } if bad(*base) => {
                domain(format!("schedule base {base} must be finite and nonnegative"))
            }
            Schedule::Table { values } if values.is_empty() => domain("empty schedule table"),
            Schedule::Table { values } if values.iter().any(|&v| bad(v)) => {
                domain("schedule table entries must be finite and nonnegative")
            }
            _ => Ok(()),
        }
    }
}

/// Finite-alphabet source families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FiniteFamily {
    /// I.i.d. categorical over `{0, …, d}` with `θ_k = p(k)` for `k ≥ 1` and
    /// `p(0) = 1 - ‖θ‖₁`. `d = 1` is the Bernoulli family with `θ = p(1)`.
    Categorical { d: usize },
    /// Markov chain on `{0, …, states-1}` with a known initial state. The
    /// parameter stores rows of the transition matrix without their last
    /// column, row-major, giving `d = states·(states-1)`.
    Markov { states: usize, initial_state: usize },
    /// Binary source with `p(1 | ω_<n) = min{1, θ + a_n (θ - ½)²}`.
    Counterexample { schedule: Schedule },
    /// I.i.d. Bernoulli with `p(1) = ½ + (θ - θ₀)^{k/2}`, whose divergence
    /// from the source at `θ₀` is flat to order `k`.
    Flat { theta0: f64, k: u32 },
}

impl FiniteFamily {
    pub fn categorical(d: usize) -> Result<Self> {
        if d == 0 {
            return domain("categorical families need d ≥ 1");
        }
        Ok(FiniteFamily::Categorical { d })
    }

    pub fn markov(states: usize, initial_state: usize) -> Result<Self> {
        if states < 2 {
            return domain(format!("a Markov chain needs at least 2 states, got {states}"));
        }
        if initial_state >= states {
            return domain(format!(
                "initial state {initial_state} out of range for {states} states"
            ));
        }
        Ok(FiniteFamily::Markov { states, initial_state })
    }

    pub fn counterexample(schedule: Schedule) -> Result<Self> {
        schedule.validate()?;
        Ok(FiniteFamily::Counterexample { schedule })
    }

    pub fn flat(theta0: f64, k: u32) -> Result<Self> {
        if k < 4 || k % 2 == 1 {
            return domain(format!("flat family order k must be even and at least 4, got {k}"));
        }
        if !theta0.is_finite() {
            return domain("flat family centre must be finite");
        }
        Ok(FiniteFamily::Flat { theta0, k })
    }

    /// Checks structural invariants (used after deserialization).
    pub fn check(&self) -> Result<()> {
        match self {
            FiniteFamily::Categorical { d } => Self::categorical(*d).map(drop),
            FiniteFamily::Markov { states, initial_state } => Self::markov(*states, *initial_state).map(drop),
            FiniteFamily::Counterexample { schedule } => schedule.validate(),
            FiniteFamily::Flat { theta0, k } => Self::flat(*theta0, *k).map(drop),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FiniteFamily::Categorical { d } => *d,
            FiniteFamily::Markov { states, .. } => states * (states - 1),
            FiniteFamily::Counterexample { .. } | FiniteFamily::Flat { .. } => 1,
        }
    }

    pub fn alphabet_size(&self) -> usize {
        match self {
            FiniteFamily::Categorical { d } => d + 1,
            FiniteFamily::Markov { states, .. } => *states,
            FiniteFamily::Counterexample { .. } | FiniteFamily::Flat { .. } => 2,
        }
    }

    /// Number of distinct history summaries the conditional law depends on.
    pub fn context_count(&self) -> usize {
        match self {
            FiniteFamily::Markov { states, .. } => *states,
            _ => 1,
        }
    }

    pub fn initial_context(&self) -> usize {
        match self {
            FiniteFamily::Markov { initial_state, .. } => *initial_state,
            _ => 0,
        }
    }

    pub fn next_context(&self, context: usize, symbol: usize) -> usize {
        match self {
            FiniteFamily::Markov { .. } => symbol,
            _ => context,
        }
    }

    /// True when the conditional law ignores both the history and the time
    /// index, so symbol counts are sufficient.
    pub fn is_iid(&self) -> bool {
        matches!(self, FiniteFamily::Categorical { .. } | FiniteFamily::Flat { .. })
    }

    pub fn validate(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return domain(format!(
                "parameter has dimension {} but the family expects {}",
                theta.len(),
                self.dim()
            ));
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return domain("parameter coordinates must be finite");
        }
        match self {
            FiniteFamily::Categorical { .. } => check_open_simplex(theta),
            FiniteFamily::Markov { states, .. } => {
                for row in theta.chunks(states - 1) {
                    check_open_simplex(row)?;
                }
                Ok(())
            }
            FiniteFamily::Counterexample { .. } => {
                if (0.0..=1.0).contains(&theta[0]) {
                    Ok(())
                } else {
                    domain(format!("counterexample parameter {} outside [0, 1]", theta[0]))
                }
            }
            FiniteFamily::Flat { theta0, k } => {
                let shift = (theta[0] - theta0).abs().powi(*k as i32 / 2);
                if shift < 0.5 {
                    Ok(())
                } else {
                    domain(format!(
                        "flat family parameter {} is outside the region where p(1) ∈ (0, 1)",
                        theta[0]
                    ))
                }
            }
        }
    }

    /// Writes `ln p_θ(· | context)` for step `t` (1-based) into `out`. The
    /// parameter is assumed to be in the family's domain.
    pub fn log_conditional(&self, theta: &[f64], t: usize, context: usize, out: &mut [f64]) {
        match self {
            FiniteFamily::Categorical { .. } => categorical_logs(theta, out),
            FiniteFamily::Markov { states, .. } => {
                let w = states - 1;
                row_logs(&theta[context * w..(context + 1) * w], out)
            }
            FiniteFamily::Counterexample { .. } | FiniteFamily::Flat { .. } => {
                let p = self.binary_prob_one(theta[0], t).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
                out[0] = (-p).ln_1p();
                out[1] = p.ln();
            }
        }
    }

    /// The unclamped `p(1)` of the binary families at step `t`.
    ///
    /// # Panics
    /// If called on a categorical or Markov family.
    pub fn binary_prob_one(&self, theta: f64, t: usize) -> f64 {
        match self {
            FiniteFamily::Counterexample { schedule } => {
                let u = theta - 0.5;
                (theta + schedule.at(t) * u * u).min(1.0)
            }
            FiniteFamily::Flat { theta0, k } => 0.5 + (theta - theta0).powi(*k as i32 / 2),
            _ => panic!("binary_prob_one called on {self:?}"),
        }
    }

    /// Interior points of `[0, 1]` where the conditional law of a 1-d family
    /// has a kink at some step `t ≤ horizon`.
    pub fn breakpoints(&self, horizon: usize) -> Vec<f64> {
        let FiniteFamily::Counterexample { schedule } = self else {
            return Vec::new();
        };
        let mut points = Vec::new();
        for t in 1..=horizon {
            let a = schedule.at(t);
            if a <= 0.0 {
                continue;
            }
            // θ + a u² = 1 with u = θ - ½  ⇔  a u² + u - ½ = 0.
            let root = (1.0 + 2.0 * a).sqrt();
            for u in [(root - 1.0) / (2.0 * a), -(root + 1.0) / (2.0 * a)] {
                let theta = 0.5 + u;
                if theta > 0.0 && theta < 1.0 {
                    points.push(theta);
                }
            }
        }
        points.sort_by(f64::total_cmp);
        points.dedup();
        points
    }

    pub fn at(&self, theta: ParameterPoint) -> Result<FiniteSource> {
        FiniteSource::new(self.clone(), theta)
    }
}

fn check_open_simplex(theta: &[f64]) -> Result<()> {
    if let Some(x) = theta.iter().find(|&&x| x <= 0.0) {
        return domain(format!("simplex coordinate {x} is not strictly positive"));
    }
    let total: f64 = theta.iter().sum();
    if total >= 1.0 {
        return domain(format!("simplex coordinates sum to {total} ≥ 1"));
    }
    Ok(())
}

/// Categorical symbols: the implied mass `1 - Σθ` belongs to symbol 0.
fn categorical_logs(theta: &[f64], out: &mut [f64]) {
    out[0] = (1.0 - theta.iter().sum::<f64>()).ln();
    for (o, x) in out[1..].iter_mut().zip(theta) {
        *o = x.ln();
    }
}

/// Markov rows: the implied entry belongs to the last state.
fn row_logs(row: &[f64], out: &mut [f64]) {
    let last = row.len();
    for (o, x) in out[..last].iter_mut().zip(row) {
        *o = x.ln();
    }
    out[last] = (1.0 - row.iter().sum::<f64>()).ln();
}

/// A family pinned at a validated parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteSource {
    family: FiniteFamily,
    theta: ParameterPoint,
}

impl FiniteSource {
    pub fn new(family: FiniteFamily, theta: ParameterPoint) -> Result<Self> {
        family.check()?;
        family.validate(theta.as_slice())?;
        Ok(Self { family, theta })
    }

    pub fn family(&self) -> &FiniteFamily {
        &self.family
    }

    pub fn theta(&self) -> &ParameterPoint {
        &self.theta
    }

    pub fn alphabet_size(&self) -> usize {
        self.family.alphabet_size()
    }

    pub fn log_conditional(&self, t: usize, context: usize, out: &mut [f64]) {
        self.family.log_conditional(self.theta.as_slice(), t, context, out)
    }

    /// `ln p_θ(ω_{1:n})`.
    pub fn log_prob(&self, sequence: &[usize]) -> Result<f64> {
        let k = self.alphabet_size();
        let mut buf = vec![0.0; k];
        let mut ctx = self.family.initial_context();
        let mut total = 0.0;
        for (i, &s) in sequence.iter().enumerate() {
            if s >= k {
                return domain(format!("symbol {s} outside alphabet of size {k}"));
            }
            self.log_conditional(i + 1, ctx, &mut buf);
            total += buf[s];
            ctx = self.family.next_context(ctx, s);
        }
        Ok(total)
    }

    /// Draws `n` symbols, returning the sequence and its log-probability.
    pub fn sample_with_log_prob<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (Vec<usize>, f64) {
        let k = self.alphabet_size();
        let mut buf = vec![0.0; k];
        let mut ctx = self.family.initial_context();
        let mut seq = Vec::with_capacity(n);
        let mut log_p = 0.0;
        for t in 1..=n {
            self.log_conditional(t, ctx, &mut buf);
            let s = draw_from_logs(&buf, rng.random::<f64>());
            log_p += buf[s];
            seq.push(s);
            ctx = self.family.next_context(ctx, s);
        }
        (seq, log_p)
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        self.sample_with_log_prob(n, rng).0
    }
}

/// Inverse-CDF draw from log-probabilities given a uniform variate.
fn draw_from_logs(log_probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, lp) in log_probs.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap above the last cumulative value.
    log_probs
        .iter()
        .rposition(|lp| *lp > f64::NEG_INFINITY)
        .unwrap_or(log_probs.len() - 1)
}

/// I.i.d. categorical source at an interior simplex point.
pub fn make_categorical(theta: &[f64]) -> Result<FiniteSource> {
    FiniteSource::new(
        FiniteFamily::categorical(theta.len())?,
        ParameterPoint::new(theta.to_vec())?,
    )
}

/// Markov source from a full row-stochastic transition matrix.
pub fn make_markov(transition: &[Vec<f64>], initial_state: usize) -> Result<FiniteSource> {
    let states = transition.len();
    let family = FiniteFamily::markov(states, initial_state)?;
    let mut theta = Vec::with_capacity(states * (states - 1));
    for (j, row) in transition.iter().enumerate() {
        if row.len() != states {
            return domain(format!(
                "transition row {j} has {} entries, expected {states}",
                row.len()
            ));
        }
        if let Some(x) = row.iter().find(|&&x| !(x > 0.0 && x < 1.0)) {
            return domain(format!("transition row {j} has entry {x} outside (0, 1)"));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return domain(format!("transition row {j} sums to {sum}"));
        }
        theta.extend_from_slice(&row[..states - 1]);
    }
    FiniteSource::new(family, ParameterPoint::new(theta)?)
}

/// Full transition matrix of a Markov parameter vector.
pub fn transition_matrix(states: usize, theta: &[f64]) -> Vec<Vec<f64>> {
    theta
        .chunks(states - 1)
        .map(|row| {
            let mut full = row.to_vec();
            full.push(1.0 - row.iter().sum::<f64>());
            full
        })
        .collect()
}

pub fn make_counterexample(schedule: Schedule) -> Result<FiniteFamily> {
    FiniteFamily::counterexample(schedule)
}

pub fn make_flat_family(theta0: f64, k: u32) -> Result<FiniteFamily> {
    FiniteFamily::flat(theta0, k)
}

/// `n` symbols from replicate 0 of `seed`.
pub fn sample_sequence(source: &FiniteSource, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::Config("sample length must be at least 1".into()));
    }
    Ok(source.sample(n, &mut crate::rng::replicate_rng(seed, 0)))
}

#[cfg(test)]
mod tests;
