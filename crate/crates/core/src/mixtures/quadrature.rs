use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{check_symbol, SequentialPredictor};
use crate::error::{config, Result};
use crate::families::{FiniteFamily, PriorDensity};
use crate::numeric::{gauss_legendre, log_sum_exp};

/// Nodes per Gauss-Legendre panel.
pub const PANEL_ORDER: usize = 16;
pub const MIN_QUADRATURE_NODES: usize = PANEL_ORDER;

/// Numerical mixture `∫ w(θ) pⁿ_θ dθ` over a 1-d parameter, as a finite
/// mixture of the sources at the quadrature nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraturePredictor {
    family: FiniteFamily,
    nodes: Vec<f64>,
    /// `ln(node weight · w(θ_g)) + ln pᵗ_{θ_g}`, shifted to log-sum-exp to 0.
    log_weights: Vec<f64>,
    context: usize,
    t: usize,
    log_marginal: f64,
}

/// How the integration variable maps to `θ`.
#[derive(Clone, Copy)]
enum Map {
    /// `θ = x` on `[lo, hi]`; the prior density is constant.
    Linear { lo: f64, hi: f64 },
    /// `θ = lo + (hi - lo)(1 - cos φ)/2` on `φ ∈ [0, π]`. For the Bernoulli
    /// Jeffreys prior `w(θ)dθ = dφ/π`, so the endpoint singularities vanish.
    Cosine { lo: f64, hi: f64 },
}

impl Map {
    fn range(self) -> (f64, f64) {
        match self {
            Map::Linear { lo, hi } => (lo, hi),
            Map::Cosine { .. } => (0.0, PI),
        }
    }

    fn theta(self, x: f64) -> f64 {
        match self {
            Map::Linear { .. } => x,
            Map::Cosine { lo, hi } => lo + (hi - lo) * 0.5 * (1.0 - x.cos()),
        }
    }

    fn inverse(self, theta: f64) -> f64 {
        match self {
            Map::Linear { .. } => theta,
            Map::Cosine { lo, hi } => (1.0 - 2.0 * (theta - lo) / (hi - lo)).clamp(-1.0, 1.0).acos(),
        }
    }

    /// `ln` of the prior mass density in the integration variable.
    fn log_density(self) -> f64 {
        match self {
            Map::Linear { lo, hi } => -(hi - lo).ln(),
            Map::Cosine { .. } => -PI.ln(),
        }
    }
}

/// Builds the quadrature mixture for a 1-d family with `nodes` nodes.
///
/// The interval is cut at every kink of the family's conditionals up to
/// `horizon` and each piece is covered by 16-point Gauss-Legendre panels;
/// `nodes / 16` panels are shared out in proportion to piece length with at
/// least one per piece.
pub fn quadrature_mixture(
    family: &FiniteFamily,
    prior: &PriorDensity,
    nodes: usize,
    horizon: usize,
) -> Result<QuadraturePredictor> {
    family.check()?;
    prior.check()?;
    if nodes < MIN_QUADRATURE_NODES {
        return config(format!(
            "quadrature needs at least {MIN_QUADRATURE_NODES} nodes, got {nodes}"
        ));
    }
    if family.dim() != 1 {
        return config(format!(
            "quadrature mixtures need a 1-d family, got d = {}",
            family.dim()
        ));
    }
    let map = match prior {
        PriorDensity::JeffreysCategorical { d: 1 } => Map::Cosine { lo: 0.0, hi: 1.0 },
        PriorDensity::Uniform { low, high } => Map::Linear { lo: *low, hi: *high },
        other => return config(format!("no quadrature rule for a {:?} prior", other.kind())),
    };

    let (a, b) = map.range();
    let mut cuts = vec![a];
    for theta in family.breakpoints(horizon) {
        let x = map.inverse(theta);
        if x > a && x < b {
            cuts.push(x);
        }
    }
    cuts.push(b);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let pieces: Vec<(f64, f64)> = cuts.windows(2).map(|w| (w[0], w[1])).collect();
    let panels = allocate_panels(&pieces, (nodes / PANEL_ORDER).max(pieces.len()));

    let (gx, gw) = gauss_legendre(PANEL_ORDER);
    let mut thetas = Vec::with_capacity(panels.iter().sum::<usize>() * PANEL_ORDER);
    let mut log_weights = Vec::with_capacity(thetas.capacity());
    for (&(lo, hi), &count) in pieces.iter().zip(&panels) {
        let width = (hi - lo) / count as f64;
        for p in 0..count {
            let left = lo + p as f64 * width;
            for (x, w) in gx.iter().zip(&gw) {
                let theta = map.theta(left + 0.5 * width * (x + 1.0));
                if family.validate(&[theta]).is_err() {
                    return config(format!(
                        "prior support reaches θ = {theta}, outside the family's domain"
                    ));
                }
                thetas.push(theta);
                log_weights.push((0.5 * width * w).ln() + map.log_density());
            }
        }
    }
    // The rule integrates the prior to 1 only up to quadrature error.
    let total = log_sum_exp(&log_weights);
    log_weights.iter_mut().for_each(|w| *w -= total);

    Ok(QuadraturePredictor {
        family: family.clone(),
        nodes: thetas,
        log_weights,
        context: family.initial_context(),
        t: 0,
        log_marginal: 0.0,
    })
}

/// Shares `total` panels over the pieces, one each to start, then repeatedly
/// to the piece with the widest panels.
fn allocate_panels(pieces: &[(f64, f64)], total: usize) -> Vec<usize> {
    let mut counts = vec![1usize; pieces.len()];
    for _ in pieces.len()..total {
        let (i, _) = pieces
            .iter()
            .zip(&counts)
            .map(|(&(lo, hi), &c)| (hi - lo) / c as f64)
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("at least one piece");
        counts[i] += 1;
    }
    counts
}

impl QuadraturePredictor {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Normalized posterior log-weights of the nodes.
    pub fn posterior_log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    fn node_logs(&self, theta: f64, out: &mut [f64]) {
        self.family.log_conditional(&[theta], self.t + 1, self.context, out);
    }
}

impl SequentialPredictor for QuadraturePredictor {
    fn alphabet_size(&self) -> usize {
        self.family.alphabet_size()
    }

    fn predictive_log_probs(&self, out: &mut [f64]) {
        let k = self.alphabet_size();
        let mut buf = vec![0.0; k];
        let mut terms: Vec<Vec<f64>> = vec![Vec::with_capacity(self.nodes.len()); k];
        for (&theta, &lw) in self.nodes.iter().zip(&self.log_weights) {
            self.node_logs(theta, &mut buf);
            for (col, &l) in terms.iter_mut().zip(&buf) {
                col.push(lw + l);
            }
        }
        for (o, col) in out.iter_mut().zip(&terms) {
            *o = log_sum_exp(col);
        }
    }

    fn observe(&mut self, symbol: usize) -> Result<f64> {
        check_symbol(symbol, self.alphabet_size())?;
        let mut buf = vec![0.0; self.alphabet_size()];
        for i in 0..self.nodes.len() {
            self.node_logs(self.nodes[i], &mut buf);
            self.log_weights[i] += buf[symbol];
        }
        let lp = log_sum_exp(&self.log_weights);
        self.log_weights.iter_mut().for_each(|w| *w -= lp);
        self.context = self.family.next_context(self.context, symbol);
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
        if self.t != 0 || !self.family.is_iid() || counts.len() != self.alphabet_size() {
            return None;
        }
        let mut buf = vec![0.0; counts.len()];
        let terms: Vec<f64> = self
            .nodes
            .iter()
            .zip(&self.log_weights)
            .map(|(&theta, &lw)| {
                self.node_logs(theta, &mut buf);
                lw + counts.iter().zip(&buf).map(|(&c, &l)| c as f64 * l).sum::<f64>()
            })
            .collect();
        Some(log_sum_exp(&terms))
    }
}
