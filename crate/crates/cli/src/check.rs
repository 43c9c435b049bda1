//! Fast invariant suite behind `mixred check`.

use anyhow::{ensure, Result};
use mixred::bounds::{bound_higher_order, bound_thm1, component_sum};
use mixred::coder::{decode, encode_with_stats};
use mixred::families::{
    make_categorical, make_linreg, make_markov, sample_sequence, Basis, Covariates, PriorDensity, SideInfoStream,
};
use mixred::mixtures::{KtPredictor, MarkovKtPredictor, MixturePredictor};
use mixred::redundancy::{
    chain_rule_decomposition, exact_redundancy_counts, exact_redundancy_enumeration, linreg_chain_rule,
    linreg_redundancy_exact, mc_redundancy,
};

fn counts_match_enumeration() -> Result<()> {
    let src = make_categorical(&[0.3])?;
    let kt = KtPredictor::new(2)?;
    for n in [1, 4, 10] {
        let a = exact_redundancy_counts(&src, &kt, n)?.value;
        let b = exact_redundancy_enumeration(&src, &kt, n)?.value;
        ensure!((a - b).abs() < 1e-10, "n = {n}: counts {a} vs enumeration {b}");
    }
    Ok(())
}

fn chain_rule_sums() -> Result<()> {
    let src = make_markov(&[vec![0.7, 0.3], vec![0.2, 0.8]], 0)?;
    let mix = MarkovKtPredictor::new(2, 0)?;
    let total = chain_rule_decomposition(&src, &mix, 10)?.total();
    let d = exact_redundancy_counts(&src, &mix, 10)?.value;
    ensure!((total - d).abs() < 1e-9, "chain rule {total} vs {d}");
    Ok(())
}

fn regression_closed_form() -> Result<()> {
    let side = SideInfoStream::new(Covariates::Seeded { seed: 1 }, Basis::Monomial { degree: 1 }, 1.0)?;
    let prior = PriorDensity::gaussian(vec![0.0, 0.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]])?;
    let theta0 = [0.5, -0.5];
    make_linreg(side.clone(), &theta0)?;
    let a = linreg_redundancy_exact(&side, &prior, &theta0, 40)?.value;
    let b = linreg_chain_rule(&side, &prior, &theta0, 40)?.total();
    ensure!((a - b).abs() < 1e-8, "closed form {a} vs per-step {b}");
    Ok(())
}

fn coder_roundtrip() -> Result<()> {
    let src = make_categorical(&[0.2, 0.5])?;
    let p: MixturePredictor = KtPredictor::new(3)?.into();
    for r in 0..50 {
        let seq = sample_sequence(&src, 200 + r, r as u64)?;
        let (stream, stats) = encode_with_stats(&p, &seq)?;
        ensure!(decode(&p, &stream)? == seq, "replicate {r} does not roundtrip");
        ensure!(
            stats.payload_bits as f64 <= stats.quantized_bits.ceil() + 2.0,
            "replicate {r} exceeds the length bound"
        );
    }
    Ok(())
}

fn bound_components() -> Result<()> {
    for n in [1, 10, 1000] {
        let a = bound_thm1(-0.5, 2, n, 3.0)?;
        ensure!(
            (a.total - component_sum(&a)).abs() < 1e-12,
            "total is not the sum of its terms"
        );
        let b = bound_higher_order(-0.5, 1, 2, n, 3.0)?;
        let c = bound_thm1(-0.5, 1, n, 3.0)?;
        ensure!(
            (b.total - c.total).abs() < 1e-12,
            "k = 2 form differs from the determinant form"
        );
    }
    Ok(())
}

fn monte_carlo_determinism() -> Result<()> {
    let src = make_categorical(&[0.4])?;
    let kt = KtPredictor::new(2)?;
    let a = mc_redundancy(&src, &kt, 50, 500, 3)?;
    let b = mc_redundancy(&src, &kt, 50, 500, 3)?;
    ensure!(a == b, "same seed gave different estimates");
    Ok(())
}

pub type Check = (&'static str, fn() -> Result<()>);

pub const CHECKS: &[Check] = &[
    ("counts-match-enumeration", counts_match_enumeration),
    ("chain-rule-sums", chain_rule_sums),
    ("regression-closed-form", regression_closed_form),
    ("coder-roundtrip", coder_roundtrip),
    ("bound-components", bound_components),
    ("monte-carlo-determinism", monte_carlo_determinism),
];

/// Runs every check, returning one line per check and whether all passed.
pub fn run_checks() -> (Vec<String>, bool) {
    let mut ok = true;
    let lines = CHECKS
        .iter()
        .map(|(name, f)| match f() {
            Ok(()) => format!("PASS {name}"),
            Err(e) => {
                ok = false;
                format!("FAIL {name}: {e:#}")
            }
        })
        .collect();
    (lines, ok)
}
