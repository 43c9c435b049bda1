//! The redundancy `Dₙ = D(Pⁿ_θ₀ ‖ Mⁿ)`: exact by enumeration or over
//! sufficient-count classes, and by Monte Carlo.

mod linreg;

pub use linreg::{linreg_chain_rule, linreg_mc_redundancy, linreg_redundancy_exact};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::families::{FiniteFamily, FiniteSource};
use crate::mixtures::SequentialPredictor;
use crate::numeric::{ln_gamma, NeumaierSum};
use crate::rng::replicate_rng;

/// Largest `|Ω|ⁿ` [`exact_redundancy_enumeration`] accepts.
pub const ENUMERATION_CAP: u64 = 10_000_000;
/// Largest number of count classes the counts-exact paths visit.
pub const COUNT_CLASS_CAP: u64 = 50_000_000;
pub const MIN_MC_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Enumeration,
    CountsExact,
    MonteCarlo,
    /// Gaussian closed form of the regression family.
    ClosedForm,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Enumeration => "enumeration",
            Method::CountsExact => "counts-exact",
            Method::MonteCarlo => "monte-carlo",
            Method::ClosedForm => "closed-form",
        }
    }

    pub fn is_exact(self) -> bool {
        self != Method::MonteCarlo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedundancyEstimate {
    pub n: usize,
    /// Nats.
    pub value: f64,
    /// Nats; zero for exact methods.
    pub std_error: f64,
    pub method: Method,
    pub samples: usize,
}

impl RedundancyEstimate {
    fn exact(n: usize, value: f64, method: Method) -> Self {
        Self {
            n,
            value,
            std_error: 0.0,
            method,
            samples: 0,
        }
    }

    /// `value ± 1.96·SE`.
    pub fn ci95(&self) -> (f64, f64) {
        (self.value - 1.96 * self.std_error, self.value + 1.96 * self.std_error)
    }

    pub fn value_bits(&self) -> f64 {
        self.value / std::f64::consts::LN_2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryKind {
    /// `E[d_t]`, the expected per-step predictive divergence.
    Expected,
    /// `ln p(ω_t | ω_<t) − ln m(ω_t | ω_<t)` along one realization.
    PerSequence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedundancyTrajectory {
    pub kind: TrajectoryKind,
    pub terms: Vec<f64>,
}

impl RedundancyTrajectory {
    pub fn cumulative(&self) -> Vec<f64> {
        let mut acc = NeumaierSum::new();
        self.terms
            .iter()
            .map(|&x| {
                acc.add(x);
                acc.value()
            })
            .collect()
    }

    pub fn total(&self) -> f64 {
        self.terms.iter().copied().collect::<NeumaierSum>().value()
    }
}

fn check_alphabets<P: SequentialPredictor>(source: &FiniteSource, mixture: &P) -> Result<()> {
    if source.alphabet_size() != mixture.alphabet_size() {
        return config(format!(
            "source alphabet {} does not match mixture alphabet {}",
            source.alphabet_size(),
            mixture.alphabet_size()
        ));
    }
    if mixture.steps() != 0 {
        return config("the mixture must be fresh (no symbols observed)");
    }
    Ok(())
}

fn check_enumerable(k: usize, n: usize) -> Result<()> {
    let size = (k as f64).powi(n as i32);
    if size > ENUMERATION_CAP as f64 {
        return config(format!(
            "{k}^{n} sequences exceed the enumeration cap of {ENUMERATION_CAP}"
        ));
    }
    Ok(())
}

struct Walk<'a> {
    source: &'a FiniteSource,
    n: usize,
    k: usize,
    total: NeumaierSum,
    per_step: Vec<NeumaierSum>,
}

impl Walk<'_> {
    /// Visits every history of length `depth` below this node. `log_p`,
    /// `log_m` are the history's probabilities; `mixture` has observed it.
    fn visit<P: SequentialPredictor + Clone>(&mut self, depth: usize, ctx: usize, log_p: f64, log_m: f64, mixture: P) {
        let mut p = vec![0.0; self.k];
        let mut m = vec![0.0; self.k];
        self.source.log_conditional(depth + 1, ctx, &mut p);
        mixture.predictive_log_probs(&mut m);
        let weight = log_p.exp();
        let mut step = 0.0;
        for s in 0..self.k {
            let ps = p[s].exp();
            if ps > 0.0 {
                step += ps * (p[s] - m[s]);
            }
        }
        self.per_step[depth].add(weight * step);
        if depth + 1 == self.n {
            for s in 0..self.k {
                let (lp, lm) = (log_p + p[s], log_m + m[s]);
                let w = lp.exp();
                if w > 0.0 {
                    self.total.add(w * (lp - lm));
                }
            }
            return;
        }
        let family = self.source.family();
        let mut mixture = Some(mixture);
        for s in 0..self.k {
            let mut child = if s + 1 == self.k {
                mixture.take().expect("unused")
            } else {
                mixture.clone().expect("present")
            };
            child.observe(s).expect("symbol in range");
            self.visit(
                depth + 1,
                family.next_context(ctx, s),
                log_p + p[s],
                log_m + m[s],
                child,
            );
        }
    }
}

fn enumerate<P: SequentialPredictor + Clone>(source: &FiniteSource, mixture: &P, n: usize) -> Result<(f64, Vec<f64>)> {
    check_alphabets(source, mixture)?;
    check_enumerable(source.alphabet_size(), n)?;
    if n == 0 {
        return Ok((0.0, Vec::new()));
    }
    let mut walk = Walk {
        source,
        n,
        k: source.alphabet_size(),
        total: NeumaierSum::new(),
        per_step: vec![NeumaierSum::new(); n],
    };
    walk.visit(0, source.family().initial_context(), 0.0, 0.0, mixture.clone());
    Ok((
        walk.total.value(),
        walk.per_step.iter().map(NeumaierSum::value).collect(),
    ))
}

/// `Σ_{ω ∈ Ωⁿ} pⁿ(ω) ln(pⁿ(ω)/mⁿ(ω))` by walking the tree of histories.
pub fn exact_redundancy_enumeration<P: SequentialPredictor + Clone>(
    source: &FiniteSource,
    mixture: &P,
    n: usize,
) -> Result<RedundancyEstimate> {
    let (value, _) = enumerate(source, mixture, n)?;
    Ok(RedundancyEstimate::exact(n, value, Method::Enumeration))
}

/// Exact `E[d_t]` for `t = 1..n`.
pub fn chain_rule_decomposition<P: SequentialPredictor + Clone>(
    source: &FiniteSource,
    mixture: &P,
    n: usize,
) -> Result<RedundancyTrajectory> {
    let (_, terms) = enumerate(source, mixture, n)?;
    Ok(RedundancyTrajectory {
        kind: TrajectoryKind::Expected,
        terms,
    })
}

/// Exact `Dₙ` by summing over sufficient-count classes: symbol counts for
/// i.i.d. sources, transition counts for two-state chains.
pub fn exact_redundancy_counts<P: SequentialPredictor>(
    source: &FiniteSource,
    mixture: &P,
    n: usize,
) -> Result<RedundancyEstimate> {
    check_alphabets(source, mixture)?;
    let family = source.family();
    let k = source.alphabet_size();
    if family.is_iid() && mixture.log_marginal_of_symbol_counts(&vec![0; k]).is_some() {
        return iid_counts(source, mixture, n);
    }
    if let FiniteFamily::Markov {
        states: 2,
        initial_state,
    } = family
    {
        if mixture.log_marginal_of_transition_counts(&[0; 4]).is_some() {
            return markov2_counts(source, *initial_state, mixture, n);
        }
    }
    Err(Error::Unsupported(
        "counts-exact redundancy needs an i.i.d. or two-state Markov source and a count-sufficient mixture".into(),
    ))
}

fn ln_binomial(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

fn iid_counts<P: SequentialPredictor>(source: &FiniteSource, mixture: &P, n: usize) -> Result<RedundancyEstimate> {
    let k = source.alphabet_size();
    let classes = (ln_binomial((n + k - 1) as u64, (k - 1) as u64)).exp();
    if classes > COUNT_CLASS_CAP as f64 {
        return config(format!(
            "{classes:.0} count classes exceed the cap of {COUNT_CLASS_CAP}"
        ));
    }
    let mut logp = vec![0.0; k];
    source.log_conditional(1, source.family().initial_context(), &mut logp);
    let ln_nfact = ln_gamma(n as f64 + 1.0);
    let mut acc = NeumaierSum::new();
    let mut counts = vec![0u64; k];
    let mut err = None;
    for_each_composition(n as u64, &mut counts, 0, &mut |c| {
        let lp: f64 = c
            .iter()
            .zip(&logp)
            .map(|(&ci, &l)| if ci == 0 { 0.0 } else { ci as f64 * l })
            .sum();
        let ln_mult = ln_nfact - c.iter().map(|&ci| ln_gamma(ci as f64 + 1.0)).sum::<f64>();
        let w = (ln_mult + lp).exp();
        if w > 0.0 {
            match mixture.log_marginal_of_symbol_counts(c) {
                Some(lm) => acc.add(w * (lp - lm)),
                None => err = Some(Error::Unsupported("mixture is not count-sufficient".into())),
            }
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(RedundancyEstimate::exact(n, acc.value(), Method::CountsExact))
}

/// Calls `f` on every vector of `counts.len()` nonnegative integers summing
/// to `remaining + Σ counts[..pos]`.
fn for_each_composition(remaining: u64, counts: &mut [u64], pos: usize, f: &mut impl FnMut(&[u64])) {
    if pos + 1 == counts.len() {
        counts[pos] = remaining;
        f(counts);
        return;
    }
    for c in 0..=remaining {
        counts[pos] = c;
        for_each_composition(remaining - c, counts, pos + 1, f);
    }
}

/// Two-state chains: a history from `ω₀ = s` is a run decomposition, so the
/// number of histories with transition counts `n_{jk}` is a product of two
/// binomials. With `a = s` and `b = 1 − s`, runs of `a` number `n_{ba} + 1`
/// and runs of `b` number `n_{ab}`, so `n_{ab} ∈ {n_{ba}, n_{ba} + 1}` and
/// the count is `C(n_aa + n_ba, n_ba) · C(n_bb + n_ab − 1, n_ab − 1)` (the
/// second factor is 1 when `n_ab = n_bb = 0`).
fn markov2_counts<P: SequentialPredictor>(
    source: &FiniteSource,
    start: usize,
    mixture: &P,
    n: usize,
) -> Result<RedundancyEstimate> {
    let (a, b) = (start, 1 - start);
    let mut logs = [[0.0; 2]; 2];
    for (j, row) in logs.iter_mut().enumerate() {
        source.log_conditional(1, j, row);
    }
    let n = n as u64;
    let mut acc = NeumaierSum::new();
    for n_ab in 0..=n {
        for n_ba in [n_ab.wrapping_sub(1), n_ab] {
            if n_ba > n_ab || n_ab + n_ba > n {
                continue;
            }
            let free = n - n_ab - n_ba;
            for n_aa in 0..=free {
                let n_bb = free - n_aa;
                let ln_count = if n_ab == 0 {
                    if n_bb != 0 {
                        continue;
                    }
                    0.0
                } else {
                    ln_binomial(n_aa + n_ba, n_ba) + ln_binomial(n_bb + n_ab - 1, n_ab - 1)
                };
                let mut c = [0u64; 4];
                c[a * 2 + a] = n_aa;
                c[a * 2 + b] = n_ab;
                c[b * 2 + a] = n_ba;
                c[b * 2 + b] = n_bb;
                let lp: f64 = (0..4)
                    .map(|i| {
                        if c[i] == 0 {
                            0.0
                        } else {
                            c[i] as f64 * logs[i / 2][i % 2]
                        }
                    })
                    .sum();
                let w = (ln_count + lp).exp();
                if w > 0.0 {
                    let lm = mixture
                        .log_marginal_of_transition_counts(&c)
                        .ok_or_else(|| Error::Unsupported("mixture is not count-sufficient".into()))?;
                    acc.add(w * (lp - lm));
                }
            }
        }
    }
    Ok(RedundancyEstimate::exact(n as usize, acc.value(), Method::CountsExact))
}

/// Per-replicate `ln pⁿ(ω) − ln mⁿ(ω)` for replicates `0..samples` of `seed`.
///
/// Each value is a compensated sum of per-step log-ratios rather than a
/// difference of two joint log-probabilities, which would lose about
/// `n·ε·|ln pⁿ|` to cancellation when the mixture has locked onto the source.
pub fn mc_redundancy_samples<P: SequentialPredictor + Clone + Sync>(
    source: &FiniteSource,
    mixture: &P,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    check_alphabets(source, mixture)?;
    (0..samples as u64)
        .into_par_iter()
        .map(|r| {
            let (seq, _) = source.sample_with_log_prob(n, &mut replicate_rng(seed, r));
            let terms = per_sequence_redundancy(source, mixture, &seq)?.terms;
            Ok(terms.into_iter().collect::<NeumaierSum>().value())
        })
        .collect()
}

/// Mean and standard error of a sample, with a fixed summation order.
pub(crate) fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let s = values.len() as f64;
    let mean = values.iter().copied().collect::<NeumaierSum>().value() / s;
    let ss = values
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .collect::<NeumaierSum>()
        .value();
    let sd = if values.len() > 1 { (ss / (s - 1.0)).sqrt() } else { 0.0 };
    (mean, sd / s.sqrt())
}

/// Monte Carlo `Dₙ` over `samples` seeded draws from `Pⁿ_θ₀`.
pub fn mc_redundancy<P: SequentialPredictor + Clone + Sync>(
    source: &FiniteSource,
    mixture: &P,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<RedundancyEstimate> {
    if samples < MIN_MC_SAMPLES {
        return config(format!(
            "Monte Carlo needs at least {MIN_MC_SAMPLES} samples, got {samples}"
        ));
    }
    let values = mc_redundancy_samples(source, mixture, n, samples, seed)?;
    let (value, std_error) = mean_and_se(&values);
    Ok(RedundancyEstimate {
        n,
        value,
        std_error,
        method: Method::MonteCarlo,
        samples,
    })
}

/// `ln p(ω_t | ω_<t) − ln m(ω_t | ω_<t)` along `sequence`.
pub fn per_sequence_redundancy<P: SequentialPredictor + Clone>(
    source: &FiniteSource,
    mixture: &P,
    sequence: &[usize],
) -> Result<RedundancyTrajectory> {
    check_alphabets(source, mixture)?;
    let family = source.family();
    let mut m = mixture.clone();
    let mut ctx = family.initial_context();
    let mut p = vec![0.0; source.alphabet_size()];
    let mut terms = Vec::with_capacity(sequence.len());
    for (i, &s) in sequence.iter().enumerate() {
        source.log_conditional(i + 1, ctx, &mut p);
        let lm = m.observe(s)?;
        terms.push(p[s] - lm);
        ctx = family.next_context(ctx, s);
    }
    Ok(RedundancyTrajectory {
        kind: TrajectoryKind::PerSequence,
        terms,
    })
}

/// CSV header matching [`csv_row`].
pub const CSV_HEADER: &str = "n,value,std_error,method";

/// `n,value,std_error,method` with 12 significant digits.
pub fn csv_row(e: &RedundancyEstimate) -> String {
    format!(
        "{},{},{},{}",
        e.n,
        fmt_sig(e.value),
        fmt_sig(e.std_error),
        e.method.as_str()
    )
}

/// A number with 12 significant digits in scientific notation.
pub fn fmt_sig(x: f64) -> String {
    format!("{x:.11e}")
}
