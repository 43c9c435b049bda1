//! Bayes mixture predictors.
//!
//! Each predictor is a streaming object: feed symbols in order with
//! [`SequentialPredictor::observe`], read the one-step predictive
//! distribution with [`SequentialPredictor::predictive_log_probs`]. Cloning a
//! predictor snapshots its state, and every predictor serializes to JSON for
//! checkpointing.

mod countable;
mod gaussian;
mod kt;
mod quadrature;

pub use countable::{countable_mixture, CountablePredictor};
pub use gaussian::{linreg_posterior_update, linreg_predictive, GaussianPosterior, LinRegPredictor};
pub use kt::{dirichlet_predictive, markov_predictive, KtPredictor, MarkovKtPredictor, KT_ALPHA};
pub use quadrature::{quadrature_mixture, QuadraturePredictor, MIN_QUADRATURE_NODES, PANEL_ORDER};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::families::FiniteSource;

/// A sequential probability assignment over a finite alphabet.
pub trait SequentialPredictor {
    fn alphabet_size(&self) -> usize;

    /// Writes `ln m(· | ω_<t)` for the next step into `out`.
    fn predictive_log_probs(&self, out: &mut [f64]);

    /// Conditions on `symbol`, returning `ln m(symbol | ω_<t)`.
    fn observe(&mut self, symbol: usize) -> Result<f64>;

    /// Cumulative `ln mᵗ(ω_{1:t})`.
    fn log_marginal(&self) -> f64;

    /// Number of symbols observed so far.
    fn steps(&self) -> usize;

    fn predictive_probs(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.alphabet_size()];
        self.predictive_log_probs(&mut out);
        out.iter_mut().for_each(|x| *x = x.exp());
        out
    }

    /// `ln mⁿ` of any sequence with the given symbol counts, for fresh
    /// predictors whose marginal depends on the data only through them.
    fn log_marginal_of_symbol_counts(&self, _counts: &[u64]) -> Option<f64> {
        None
    }

    /// As above for row-major `N × N` transition counts.
    fn log_marginal_of_transition_counts(&self, _counts: &[u64]) -> Option<f64> {
        None
    }
}

/// The true source used as its own predictor; its redundancy is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourcePredictor {
    source: FiniteSource,
    context: usize,
    t: usize,
    log_marginal: f64,
}

impl SourcePredictor {
    pub fn new(source: FiniteSource) -> Self {
        let context = source.family().initial_context();
        Self {
            source,
            context,
            t: 0,
            log_marginal: 0.0,
        }
    }
}

impl SequentialPredictor for SourcePredictor {
    fn alphabet_size(&self) -> usize {
        self.source.alphabet_size()
    }

    fn predictive_log_probs(&self, out: &mut [f64]) {
        self.source.log_conditional(self.t + 1, self.context, out);
    }

    fn observe(&mut self, symbol: usize) -> Result<f64> {
        check_symbol(symbol, self.alphabet_size())?;
        let mut buf = vec![0.0; self.alphabet_size()];
        self.predictive_log_probs(&mut buf);
        self.t += 1;
        self.context = self.source.family().next_context(self.context, symbol);
        self.log_marginal += buf[symbol];
        Ok(buf[symbol])
    }

    fn log_marginal(&self) -> f64 {
        self.log_marginal
    }

    fn steps(&self) -> usize {
        self.t
    }
}

/// Every finite-alphabet predictor behind one serializable type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MixturePredictor {
    Kt(KtPredictor),
    MarkovKt(MarkovKtPredictor),
    Quadrature(QuadraturePredictor),
    Countable(CountablePredictor),
    Source(SourcePredictor),
}

macro_rules! dispatch {
    ($self:ident, $p:ident => $e:expr) => {
        match $self {
            MixturePredictor::Kt($p) => $e,
            MixturePredictor::MarkovKt($p) => $e,
            MixturePredictor::Quadrature($p) => $e,
            MixturePredictor::Countable($p) => $e,
            MixturePredictor::Source($p) => $e,
        }
    };
}

impl SequentialPredictor for MixturePredictor {
    fn alphabet_size(&self) -> usize {
        dispatch!(self, p => p.alphabet_size())
    }

    fn predictive_log_probs(&self, out: &mut [f64]) {
        dispatch!(self, p => p.predictive_log_probs(out))
    }

    fn observe(&mut self, symbol: usize) -> Result<f64> {
        dispatch!(self, p => p.observe(symbol))
    }

    fn log_marginal(&self) -> f64 {
        dispatch!(self, p => p.log_marginal())
    }

    fn steps(&self) -> usize {
        dispatch!(self, p => p.steps())
    }

    fn log_marginal_of_symbol_counts(&self, counts: &[u64]) -> Option<f64> {
        dispatch!(self, p => p.log_marginal_of_symbol_counts(counts))
    }

    fn log_marginal_of_transition_counts(&self, counts: &[u64]) -> Option<f64> {
        dispatch!(self, p => p.log_marginal_of_transition_counts(counts))
    }
}

impl From<KtPredictor> for MixturePredictor {
    fn from(p: KtPredictor) -> Self {
        MixturePredictor::Kt(p)
    }
}

impl From<MarkovKtPredictor> for MixturePredictor {
    fn from(p: MarkovKtPredictor) -> Self {
        MixturePredictor::MarkovKt(p)
    }
}

impl From<QuadraturePredictor> for MixturePredictor {
    fn from(p: QuadraturePredictor) -> Self {
        MixturePredictor::Quadrature(p)
    }
}

impl From<CountablePredictor> for MixturePredictor {
    fn from(p: CountablePredictor) -> Self {
        MixturePredictor::Countable(p)
    }
}

impl From<SourcePredictor> for MixturePredictor {
    fn from(p: SourcePredictor) -> Self {
        MixturePredictor::Source(p)
    }
}

/// Feeds a whole sequence, returning the per-step `ln m(ω_t | ω_<t)`.
pub fn observe_all<P: SequentialPredictor>(predictor: &mut P, sequence: &[usize]) -> Result<Vec<f64>> {
    sequence.iter().map(|&s| predictor.observe(s)).collect()
}

pub(crate) fn check_symbol(symbol: usize, alphabet: usize) -> Result<()> {
    if symbol < alphabet {
        Ok(())
    } else {
        domain(format!("symbol {symbol} outside alphabet of size {alphabet}"))
    }
}
