use serde::{Deserialize, Serialize};

use super::{check_symbol, SequentialPredictor};
use crate::error::Result;
use crate::families::{CountableFamily, FiniteSource};
use crate::numeric::log_sum_exp;

/// `m(ω) = Σ_i w(i) p_i(ω)` over a finite list of sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountablePredictor {
    members: Vec<FiniteSource>,
    /// Posterior log-weights, normalized so that they log-sum-exp to 0.
    log_weights: Vec<f64>,
    contexts: Vec<usize>,
    t: usize,
    log_marginal: f64,
}

pub fn countable_mixture(family: &CountableFamily) -> CountablePredictor {
    let members = family.members().to_vec();
    let contexts = members.iter().map(|m| m.family().initial_context()).collect();
    CountablePredictor {
        log_weights: family.mass().iter().map(|w| w.ln()).collect(),
        members,
        contexts,
        t: 0,
        log_marginal: 0.0,
    }
}

impl CountablePredictor {
    /// Posterior mass `w(i | ω_{1:t})` of each member.
    pub fn posterior_weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    /// `ln p_i(· | history)` for each member, row per member.
    fn member_logs(&self) -> Vec<Vec<f64>> {
        let k = self.alphabet_size();
        self.members
            .iter()
            .zip(&self.contexts)
            .map(|(m, &ctx)| {
                let mut buf = vec![0.0; k];
                m.log_conditional(self.t + 1, ctx, &mut buf);
                buf
            })
            .collect()
    }
}

impl SequentialPredictor for CountablePredictor {
    fn alphabet_size(&self) -> usize {
        self.members[0].alphabet_size()
    }

    fn predictive_log_probs(&self, out: &mut [f64]) {
        let logs = self.member_logs();
        let mut terms = vec![0.0; self.members.len()];
        for (s, o) in out.iter_mut().enumerate() {
            for (i, term) in terms.iter_mut().enumerate() {
                *term = self.log_weights[i] + logs[i][s];
            }
            *o = log_sum_exp(&terms);
        }
    }

    fn observe(&mut self, symbol: usize) -> Result<f64> {
        check_symbol(symbol, self.alphabet_size())?;
        let logs = self.member_logs();
        for (w, l) in self.log_weights.iter_mut().zip(&logs) {
            *w += l[symbol];
        }
        let lp = log_sum_exp(&self.log_weights);
        self.log_weights.iter_mut().for_each(|w| *w -= lp);
        for (ctx, m) in self.contexts.iter_mut().zip(&self.members) {
            *ctx = m.family().next_context(*ctx, symbol);
        }
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
}
