use std::f64::consts::PI;

use anyhow::{bail, Context, Result};
use mixred::bounds::{
    bound_countable, bound_higher_order, bound_thm1, bound_thm3, gap_report, BoundReport, GapReport, MONOTONE_TOL,
};
use mixred::families::{
    make_countable, make_linreg, transition_matrix, FiniteFamily, FiniteSource, LinRegSource, ParameterPoint,
    PriorDensity,
};
use mixred::fisher::{
    categorical_fisher, finite_diff_fisher, lambda_n, linreg_fisher, markov_fisher_det, structured_det, FisherMatrix,
    KlEvaluator, H_HIGHER, H_SECOND,
};
use mixred::mixtures::{countable_mixture, quadrature_mixture, KtPredictor, MarkovKtPredictor, MixturePredictor};
use mixred::redundancy::{
    exact_redundancy_counts, exact_redundancy_enumeration, fmt_sig, linreg_mc_redundancy, linreg_redundancy_exact,
    mc_redundancy, RedundancyEstimate,
};
use mixred::Error;
use serde::Serialize;

use crate::config::{BoundSpec, ExperimentConfig, FamilySpec, MethodSpec};

/// The true source together with the mixture coding it.
pub enum Model {
    Finite {
        source: FiniteSource,
        mixture: MixturePredictor,
    },
    Linreg {
        source: LinRegSource,
        prior: PriorDensity,
    },
}

/// Mixture for a finite family: KT for categorical sources under the
/// Jeffreys prior, per-row KT for Markov chains, quadrature for any other
/// one-parameter family.
pub fn build_mixture(
    family: &FiniteFamily,
    prior: &PriorDensity,
    nodes: usize,
    horizon: usize,
) -> Result<MixturePredictor> {
    Ok(match (family, prior) {
        (FiniteFamily::Categorical { d }, PriorDensity::JeffreysCategorical { d: pd }) if d == pd => {
            KtPredictor::new(d + 1)?.into()
        }
        (FiniteFamily::Markov { states, initial_state }, PriorDensity::ProductDirichlet { states: ps })
            if states == ps =>
        {
            MarkovKtPredictor::new(*states, *initial_state)?.into()
        }
        (f, PriorDensity::JeffreysCategorical { d: 1 } | PriorDensity::Uniform { .. }) if f.dim() == 1 => {
            quadrature_mixture(f, prior, nodes, horizon)?.into()
        }
        _ => bail!("no mixture available for this family and prior"),
    })
}

pub fn build_model(cfg: &ExperimentConfig, horizon: usize) -> Result<Model> {
    Ok(match &cfg.family {
        FamilySpec::Finite { family } => Model::Finite {
            source: family.at(ParameterPoint::new(cfg.theta0.clone())?)?,
            mixture: build_mixture(family, &cfg.prior, cfg.quadrature_nodes, horizon)?,
        },
        FamilySpec::Countable { family, members } => {
            let PriorDensity::DiscreteMass { mass } = &cfg.prior else {
                bail!("countable families need a discrete-mass prior");
            };
            let sources = members
                .iter()
                .map(|m| family.at(ParameterPoint::new(m.clone())?))
                .collect::<mixred::Result<Vec<_>>>()?;
            let fam = make_countable(sources, mass.clone())?;
            let index = cfg.theta0[0] as usize;
            Model::Finite {
                source: fam.member(index)?.clone(),
                mixture: countable_mixture(&fam).into(),
            }
        }
        FamilySpec::Linreg { side } => Model::Linreg {
            source: make_linreg(side.clone(), &cfg.theta0)?,
            prior: cfg.prior.clone(),
        },
    })
}

pub fn estimate(model: &Model, n: usize, method: MethodSpec, seed: u64) -> Result<RedundancyEstimate> {
    Ok(match (model, method) {
        (Model::Finite { source, mixture }, MethodSpec::Exact) => match exact_redundancy_counts(source, mixture, n) {
            Err(Error::Unsupported(_)) => exact_redundancy_enumeration(source, mixture, n)?,
            r => r?,
        },
        (Model::Finite { source, mixture }, MethodSpec::Mc { samples }) => {
            mc_redundancy(source, mixture, n, samples, seed)?
        }
        (Model::Linreg { source, prior }, MethodSpec::Exact) => {
            linreg_redundancy_exact(source.side(), prior, source.theta(), n)?
        }
        (Model::Linreg { source, prior }, MethodSpec::Mc { samples }) => {
            linreg_mc_redundancy(source, prior, n, samples, seed)?
        }
    })
}

fn fisher_at(cfg: &ExperimentConfig, family: &FiniteFamily, n: usize) -> Result<FisherMatrix> {
    Ok(match family {
        FiniteFamily::Categorical { .. } => categorical_fisher(&cfg.theta0)?,
        _ => finite_diff_fisher(family, &cfg.theta0, n, H_SECOND, KlEvaluator::Exact)?,
    })
}

fn det_at(cfg: &ExperimentConfig, family: &FiniteFamily, n: usize) -> Result<f64> {
    Ok(match family {
        FiniteFamily::Categorical { .. } => structured_det(&cfg.theta0)?,
        FiniteFamily::Markov { states, .. } => markov_fisher_det(&transition_matrix(*states, &cfg.theta0))?,
        _ => fisher_at(cfg, family, n)?.det()?,
    })
}

pub fn bound(cfg: &ExperimentConfig, n: usize) -> Result<BoundReport> {
    let ln_w0 = match &cfg.prior {
        PriorDensity::DiscreteMass { mass } => mass[cfg.theta0[0] as usize].ln(),
        p => p.log_density(&cfg.theta0),
    };
    let d = cfg.theta0.len();
    Ok(match (&cfg.family, cfg.bound) {
        (FamilySpec::Finite { family }, BoundSpec::Thm1) => bound_thm1(ln_w0, d, n, det_at(cfg, family, n)?)?,
        (FamilySpec::Finite { family }, BoundSpec::Thm3 { epsilon }) => {
            bound_thm3(ln_w0, d, n, fisher_at(cfg, family, n)?.spectral_norm()?, epsilon)?
        }
        (FamilySpec::Finite { family }, BoundSpec::HigherOrder { k, lambda }) => {
            let lambda = match lambda {
                Some(l) => l,
                None => lambda_n(family, &cfg.theta0, k, n, H_HIGHER, KlEvaluator::Exact)?.lambda,
            };
            bound_higher_order(ln_w0, d, k, n, lambda)?
        }
        (FamilySpec::Linreg { side }, BoundSpec::Thm1) => {
            bound_thm1(ln_w0, d, n, linreg_fisher(side, n)?.fisher.det()?)?
        }
        (FamilySpec::Linreg { side }, BoundSpec::Thm3 { epsilon }) => {
            bound_thm3(ln_w0, d, n, linreg_fisher(side, n)?.spectral_norm, epsilon)?
        }
        (FamilySpec::Countable { .. }, BoundSpec::Countable) => bound_countable(ln_w0.exp(), n)?,
        (_, b) => bail!("bound {b:?} does not apply to this family"),
    })
}

/// Rounds to 12 significant digits so JSON output matches the CSV.
pub fn sig(x: f64) -> f64 {
    fmt_sig(x).parse().unwrap_or(x)
}

pub struct Series {
    pub estimates: Vec<RedundancyEstimate>,
    pub bounds: Vec<BoundReport>,
    pub report: GapReport,
}

pub const SERIES_HEADER: &str = "n,D_n,std_error,method,bound_total,gap";

impl Series {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SERIES_HEADER);
        out.push('\n');
        for ((e, b), g) in self.estimates.iter().zip(&self.bounds).zip(&self.report.gaps) {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.n,
                fmt_sig(e.value),
                fmt_sig(e.std_error),
                e.method.as_str(),
                fmt_sig(b.total),
                fmt_sig(*g)
            ));
        }
        out
    }

    pub fn report_json(&self) -> String {
        let r = GapReport {
            slope: sig(self.report.slope),
            gaps: self.report.gaps.iter().map(|&g| sig(g)).collect(),
            monotone_tail: self.report.monotone_tail,
        };
        serde_json::to_string_pretty(&r).expect("gap report serializes") + "\n"
    }

    /// Failed trend conditions, empty when all hold.
    pub fn trend_failures(&self, cfg: &ExperimentConfig) -> Vec<String> {
        let Some(t) = cfg.trend else { return Vec::new() };
        let mut out = Vec::new();
        let s = self.report.slope;
        if !(t.slope_min..=t.slope_max).contains(&s) {
            out.push(format!("slope {s:.4} outside [{}, {}]", t.slope_min, t.slope_max));
        }
        if t.require_monotone_tail && !self.report.monotone_tail {
            out.push("gaps are not nonincreasing over the tail".into());
        }
        if let Some(max) = t.gap_excess_max {
            for (g, b) in self.report.gaps.iter().zip(&self.bounds) {
                if g - b.prior_term > max {
                    out.push(format!(
                        "n = {}: gap exceeds ln 1/w(θ₀) by {:.4} > {max}",
                        b.n,
                        g - b.prior_term
                    ));
                }
            }
        }
        out
    }
}

pub fn run_series(cfg: &ExperimentConfig) -> Result<Series> {
    let grid = cfg.n_grid.points();
    let model = build_model(cfg, *grid.last().expect("validated grid"))?;
    let mut estimates = Vec::with_capacity(grid.len());
    let mut bounds = Vec::with_capacity(grid.len());
    for &n in &grid {
        estimates.push(estimate(&model, n, cfg.method, cfg.seed).with_context(|| format!("redundancy at n = {n}"))?);
        bounds.push(bound(cfg, n).with_context(|| format!("bound at n = {n}"))?);
    }
    let report = gap_report(&estimates, &bounds)?;
    Ok(Series {
        estimates,
        bounds,
        report,
    })
}

pub const BOUND_HEADER: &str = "n,prior_term,dimension_term,information_term,total";

pub fn bounds_csv(cfg: &ExperimentConfig) -> Result<String> {
    let mut out = String::from(BOUND_HEADER);
    out.push('\n');
    for n in cfg.n_grid.points() {
        let b = bound(cfg, n)?;
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            n,
            fmt_sig(b.prior_term),
            fmt_sig(b.dimension_term),
            fmt_sig(b.information_term),
            fmt_sig(b.total)
        ));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Divergence {
    /// Strictly increasing, gaining at least one nat over the grid.
    Diverging,
    /// Nonincreasing over the last four points.
    Converging,
    Undetermined,
}

pub struct CounterexampleSeries {
    pub estimates: Vec<RedundancyEstimate>,
    /// `Dₙ − ½ ln(n/2π)`.
    pub excess: Vec<f64>,
    pub flag: Divergence,
}

pub const COUNTEREXAMPLE_HEADER: &str = "n,D_n,std_error,method,excess";

impl CounterexampleSeries {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(COUNTEREXAMPLE_HEADER);
        out.push('\n');
        for (e, x) in self.estimates.iter().zip(&self.excess) {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.n,
                fmt_sig(e.value),
                fmt_sig(e.std_error),
                e.method.as_str(),
                fmt_sig(*x)
            ));
        }
        out
    }
}

pub fn classify(excess: &[f64]) -> Divergence {
    let increasing = excess.windows(2).all(|w| w[1] > w[0]);
    if increasing && excess.last().expect("nonempty") - excess[0] >= 1.0 {
        return Divergence::Diverging;
    }
    let tail = &excess[excess.len().saturating_sub(4)..];
    if tail.windows(2).all(|w| w[1] <= w[0] + MONOTONE_TOL) {
        return Divergence::Converging;
    }
    Divergence::Undetermined
}

pub fn run_counterexample(cfg: &ExperimentConfig) -> Result<CounterexampleSeries> {
    let FamilySpec::Finite { family } = &cfg.family else {
        bail!("the counterexample runner needs a one-parameter finite family");
    };
    if family.dim() != 1 {
        bail!(
            "the counterexample runner needs a one-parameter family, got d = {}",
            family.dim()
        );
    }
    let grid = cfg.n_grid.points();
    let horizon = *grid.last().expect("validated grid");
    let source = family.at(ParameterPoint::new(cfg.theta0.clone())?)?;
    let mixture: MixturePredictor = quadrature_mixture(family, &cfg.prior, cfg.quadrature_nodes, horizon)?.into();
    let model = Model::Finite { source, mixture };
    let estimates = grid
        .iter()
        .map(|&n| estimate(&model, n, cfg.method, cfg.seed))
        .collect::<Result<Vec<_>>>()?;
    let excess: Vec<f64> = estimates
        .iter()
        .map(|e| e.value - 0.5 * (e.n as f64 / (2.0 * PI)).ln())
        .collect();
    let flag = classify(&excess);
    Ok(CounterexampleSeries {
        estimates,
        excess,
        flag,
    })
}
