use serde::{Deserialize, Serialize};

use super::{check_symbol, SequentialPredictor};
use crate::error::{domain, Result};
use crate::numeric::ln_gamma;

/// Concentration of the Jeffreys (Krichevsky–Trofimov) Dirichlet prior.
pub const KT_ALPHA: f64 = 0.5;

/// `(n_k + ½) / (t + K/2)` for alphabet size `K = counts.len()`.
pub fn dirichlet_predictive(counts: &[u64], symbol: usize) -> Result<f64> {
    check_symbol(symbol, counts.len())?;
    let total: u64 = counts.iter().sum();
    Ok((counts[symbol] as f64 + KT_ALPHA) / (total as f64 + KT_ALPHA * counts.len() as f64))
}

/// Per-row KT estimate `(n_{j→k} + ½) / (n_{j→·} + N/2)`. `counts` is
/// row-major `N × N`.
pub fn markov_predictive(counts: &[u64], states: usize, current: usize, symbol: usize) -> Result<f64> {
    if counts.len() != states * states {
        return domain(format!(
            "expected {} transition counts, got {}",
            states * states,
            counts.len()
        ));
    }
    if current >= states {
        return domain(format!("state {current} out of range for {states} states"));
    }
    dirichlet_predictive(&counts[current * states..(current + 1) * states], symbol)
}

/// `ln ∫ Π θ_k^{n_k} Dir(θ; ½) dθ` in closed form.
fn dirichlet_log_marginal(counts: &[u64]) -> f64 {
    let k = counts.len() as f64;
    let n: u64 = counts.iter().sum();
    ln_gamma(KT_ALPHA * k) - k * ln_gamma(KT_ALPHA) + counts.iter().map(|&c| ln_gamma(c as f64 + KT_ALPHA)).sum::<f64>()
        - ln_gamma(n as f64 + KT_ALPHA * k)
}

/// Dirichlet(½) mixture over i.i.d. categorical sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KtPredictor {
    counts: Vec<u64>,
    t: usize,
    log_marginal: f64,
}

impl KtPredictor {
    pub fn new(alphabet_size: usize) -> Result<Self> {
        if alphabet_size < 2 {
            return domain("KT predictor needs an alphabet of at least 2 symbols");
        }
        Ok(Self {
            counts: vec![0; alphabet_size],
            t: 0,
            log_marginal: 0.0,
        })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }
}

impl SequentialPredictor for KtPredictor {
    fn alphabet_size(&self) -> usize {
        self.counts.len()
    }

    fn predictive_log_probs(&self, out: &mut [f64]) {
        let denom = (self.t as f64 + KT_ALPHA * self.counts.len() as f64).ln();
        for (o, &c) in out.iter_mut().zip(&self.counts) {
            *o = (c as f64 + KT_ALPHA).ln() - denom;
        }
    }

    fn observe(&mut self, symbol: usize) -> Result<f64> {
        let lp = dirichlet_predictive(&self.counts, symbol)?.ln();
        self.counts[symbol] += 1;
        self.t += 1;
        self.log_marginal += lp;
        Ok(lp)
    }

    fn log_marginal(&self) -> f64 {
        self.log_marginal
    }

    fn steps(&self) -> usize {
        self.t
    }

    fn log_marginal_of_symbol_counts(&self, counts: &[u64]) -> Option<f64> {
        (self.t == 0 && counts.len() == self.counts.len()).then(|| dirichlet_log_marginal(counts))
    }
}

/// Product of Dirichlet(½) priors over the rows of a transition matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovKtPredictor {
    states: usize,
    state: usize,
    counts: Vec<u64>,
    t: usize,
    log_marginal: f64,
}

impl MarkovKtPredictor {
    pub fn new(states: usize, initial_state: usize) -> Result<Self> {
        if states < 2 {
            return domain("Markov KT predictor needs at least 2 states");
        }
        if initial_state >= states {
            return domain(format!("initial state {initial_state} out of range"));
        }
        Ok(Self {
            states,
            state: initial_state,
            counts: vec![0; states * states],
            t: 0,
            log_marginal: 0.0,
        })
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn transition_counts(&self) -> &[u64] {
        &self.counts
    }
}

impl SequentialPredictor for MarkovKtPredictor {
    fn alphabet_size(&self) -> usize {
        self.states
    }

    fn predictive_log_probs(&self, out: &mut [f64]) {
        let row = &self.counts[self.state * self.states..(self.state + 1) * self.states];
        let total: u64 = row.iter().sum();
        let denom = (total as f64 + KT_ALPHA * self.states as f64).ln();
        for (o, &c) in out.iter_mut().zip(row) {
            *o = (c as f64 + KT_ALPHA).ln() - denom;
        }
    }

    fn observe(&mut self, symbol: usize) -> Result<f64> {
        let lp = markov_predictive(&self.counts, self.states, self.state, symbol)?.ln();
        self.counts[self.state * self.states + symbol] += 1;
        self.state = symbol;
        self.t += 1;
        self.log_marginal += lp;
        Ok(lp)
    }

    fn log_marginal(&self) -> f64 {
        self.log_marginal
    }

    fn steps(&self) -> usize {
        self.t
    }

    fn log_marginal_of_transition_counts(&self, counts: &[u64]) -> Option<f64> {
        if self.t != 0 || counts.len() != self.states * self.states {
            return None;
        }
        Some(counts.chunks(self.states).map(dirichlet_log_marginal).sum())
    }
}
