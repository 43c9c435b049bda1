//! End-to-end acceptance criteria. Runs without the libtest harness so every
//! criterion prints its PASS/FAIL line; exits nonzero if any fails.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use mixred::bounds::{bound_higher_order, bound_thm1, normal_concentration_check};
use mixred::coder::{codelength_report, decode, encode_with_stats};
use mixred::families::{
    make_categorical, make_countable, make_markov, transition_matrix, Basis, Covariates, FiniteFamily, PriorDensity,
    Schedule, SideInfoStream,
};
use mixred::fisher::{
    categorical_fisher, det, finite_diff_fisher, lambda_n, linreg_fisher, markov_fisher_det, quadratic_form,
    spectral_norm, structured_det, KlEvaluator, H_HIGHER, H_SECOND,
};
use mixred::mixtures::{countable_mixture, quadrature_mixture, KtPredictor, MarkovKtPredictor, MixturePredictor};
use mixred::redundancy::{
    exact_redundancy_counts, exact_redundancy_enumeration, linreg_chain_rule, linreg_redundancy_exact, mc_redundancy,
};
use mixred::rng::replicate_rng;
use mixred_cli::config::{ExperimentConfig, FamilySpec};
use mixred_cli::run::{run_counterexample, run_series};
use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

type Outcome = Result<String, String>;

fn config(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    ExperimentConfig::load(&path).expect("bundled config loads")
}

fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn slope_of(cfg: &ExperimentConfig) -> Result<(f64, Vec<f64>), String> {
    let s = run_series(cfg).map_err(|e| format!("{e:#}"))?;
    Ok((s.report.slope, s.report.gaps))
}

fn criterion_1() -> Outcome {
    let (slope, g) = slope_of(&config("kt_bernoulli.json"))?;
    // Grid 16 … 4096: g[2] is n = 64, g[8] is n = 4096.
    let tail_ok = g[g.len() - 5..].windows(2).all(|w| w[1] <= w[0]);
    let last_ok = g[8].abs() <= g[2].abs().min(0.1);
    check(
        (0.45..=0.55).contains(&slope) && tail_ok && last_ok,
        format!(
            "slope {slope:.5}; last-5 gaps nonincreasing: {tail_ok} ({:?}); |g_4096| = {:.7} vs min(|g_64|, 0.1) = {:.7}",
            g[g.len() - 5..].iter().map(|x| format!("{x:.8}")).collect::<Vec<_>>(),
            g[8].abs(),
            g[2].abs().min(0.1)
        ),
    )
}

fn criterion_2() -> Outcome {
    let cases: Vec<(&str, _, MixturePredictor)> = vec![
        (
            "bernoulli(0.3)",
            make_categorical(&[0.3]).unwrap(),
            KtPredictor::new(2).unwrap().into(),
        ),
        (
            "bernoulli(0.5)",
            make_categorical(&[0.5]).unwrap(),
            KtPredictor::new(2).unwrap().into(),
        ),
        (
            "categorical(1/3,1/3)",
            make_categorical(&[1.0 / 3.0, 1.0 / 3.0]).unwrap(),
            KtPredictor::new(3).unwrap().into(),
        ),
        (
            "markov uniform",
            make_markov(&[vec![0.5, 0.5], vec![0.5, 0.5]], 0).unwrap(),
            MarkovKtPredictor::new(2, 0).unwrap().into(),
        ),
        (
            "markov 0.9/0.1",
            make_markov(&[vec![0.9, 0.1], vec![0.1, 0.9]], 0).unwrap(),
            MarkovKtPredictor::new(2, 0).unwrap().into(),
        ),
    ];
    let mut worst_exact: f64 = 0.0;
    let mut worst_z: f64 = 0.0;
    for (i, (name, src, mix)) in cases.iter().enumerate() {
        for n in [2, 4, 8, 10] {
            let e = exact_redundancy_enumeration(src, mix, n)
                .map_err(|e| e.to_string())?
                .value;
            let c = exact_redundancy_counts(src, mix, n).map_err(|e| e.to_string())?.value;
            let mc = mc_redundancy(src, mix, n, 100_000, 1000 + i as u64).map_err(|e| e.to_string())?;
            worst_exact = worst_exact.max((e - c).abs());
            let z = (mc.value - e).abs() / mc.std_error;
            worst_z = worst_z.max(z);
            if (e - c).abs() > 1e-10 || z > 3.0 {
                return Err(format!(
                    "{name} n = {n}: enumeration {e}, counts {c}, MC {} ± {}",
                    mc.value, mc.std_error
                ));
            }
        }
    }
    Ok(format!(
        "20 cells; max |enumeration − counts| = {worst_exact:.2e}; max MC z-score = {worst_z:.2}"
    ))
}

fn criterion_3() -> Outcome {
    let mut rng = replicate_rng(3, 0);
    let mut worst_cat: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.random_range(1..=4);
        let raw: Vec<f64> = (0..=d).map(|_| rng.random_range(0.2..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let theta: Vec<f64> = raw[1..].iter().map(|x| x / total).collect();
        let closed = categorical_fisher(&theta).unwrap().matrix();
        let fd = finite_diff_fisher(
            &FiniteFamily::Categorical { d },
            &theta,
            1,
            H_SECOND,
            KlEvaluator::Exact,
        )
        .map_err(|e| e.to_string())?
        .matrix();
        let lu = det(&closed).unwrap();
        let sd = structured_det(&theta).unwrap();
        let rel_entry = (&closed - &fd).abs().max() / closed.abs().max();
        let rel_det = (sd - lu).abs() / lu;
        worst_cat = worst_cat.max(rel_entry).max(rel_det);
    }
    let mut worst_markov: f64 = 0.0;
    for _ in 0..10 {
        let theta = [rng.random_range(0.2..0.8), rng.random_range(0.2..0.8)];
        let family = FiniteFamily::Markov {
            states: 2,
            initial_state: 0,
        };
        let fd = finite_diff_fisher(&family, &theta, 512, H_SECOND, KlEvaluator::Exact)
            .map_err(|e| e.to_string())?
            .det()
            .unwrap();
        let formula = markov_fisher_det(&transition_matrix(2, &theta)).unwrap();
        worst_markov = worst_markov.max((fd - formula).abs() / formula);
    }
    let mut linreg_ok = true;
    for r in 0..100 {
        let degree = rng.random_range(0..=3);
        let beta = rng.random_range(0.1..5.0);
        let values: Vec<f64> = (0..rng.random_range(1..30))
            .map(|_| rng.random_range(0.0..1.0))
            .collect();
        let side = SideInfoStream::new(Covariates::Table { values }, Basis::Monomial { degree }, beta).unwrap();
        let f = linreg_fisher(&side, 1 + r).map_err(|e| e.to_string())?;
        linreg_ok &= f.within_bound && f.spectral_norm <= (degree + 1) as f64 * beta * (1.0 + 1e-12);
    }
    check(
        worst_cat <= 1e-3 && worst_markov <= 0.05 && linreg_ok,
        format!(
            "categorical max rel. error {worst_cat:.2e}; Markov n = 512 max rel. error {:.2}%; regression ‖Iₙ‖ ≤ dβ on 100 bases: {linreg_ok}",
            100.0 * worst_markov
        ),
    )
}

fn criterion_4() -> Outcome {
    let (slope, _) = slope_of(&config("markov2.json"))?;
    check(
        (0.85..=1.15).contains(&slope),
        format!("slope {slope:.4} (prediction 1)"),
    )
}

fn criterion_5() -> Outcome {
    let cfg = config("linreg.json");
    let FamilySpec::Linreg { side } = &cfg.family else {
        return Err("linreg.json is not a regression config".into());
    };
    let mut worst: f64 = 0.0;
    for n in cfg.n_grid.points() {
        let a = linreg_redundancy_exact(side, &cfg.prior, &cfg.theta0, n)
            .map_err(|e| e.to_string())?
            .value;
        let b = linreg_chain_rule(side, &cfg.prior, &cfg.theta0, n)
            .map_err(|e| e.to_string())?
            .total();
        worst = worst.max((a - b).abs());
    }
    let s = run_series(&cfg).map_err(|e| format!("{e:#}"))?;
    let excess = s
        .report
        .gaps
        .iter()
        .zip(&s.bounds)
        .filter(|(_, b)| b.n >= 256)
        .map(|(g, b)| g - b.prior_term)
        .fold(f64::NEG_INFINITY, f64::max);
    check(
        worst <= 1e-8 && excess <= 0.5,
        format!("closed form vs per-step max |Δ| = {worst:.2e}; max gap − ln 1/w(θ₀) = {excess:.4} (limit 0.5)"),
    )
}

fn criterion_6() -> Outcome {
    let geo = run_counterexample(&config("counterexample_geometric.json")).map_err(|e| format!("{e:#}"))?;
    let zero = run_counterexample(&config("counterexample_zero.json")).map_err(|e| format!("{e:#}"))?;
    let x = &geo.excess;
    let increasing = x.windows(2).all(|w| w[1] > w[0]);
    let rise = x[x.len() - 1] - x[0];
    let z = &zero.excess;
    let settled = z[z.len() - 4..].windows(2).all(|w| w[1] <= w[0]);
    check(
        increasing && rise >= 1.0 && settled,
        format!(
            "aₙ = 4ⁿ: strictly increasing {increasing}, rise {rise:.3} nats; aₙ = 0: last 4 nonincreasing {settled}"
        ),
    )
}

fn criterion_7() -> Outcome {
    let cfg = config("flat_k4.json");
    let (slope, _) = slope_of(&cfg)?;
    let FamilySpec::Finite { family } = &cfg.family else {
        return Err("flat_k4.json is not a finite family".into());
    };
    let lambda = lambda_n(family, &cfg.theta0, 4, 1024, H_HIGHER, KlEvaluator::Exact)
        .map_err(|e| e.to_string())?
        .lambda;
    check(
        (0.18..=0.32).contains(&slope) && (lambda - 48.0).abs() <= 0.02 * 48.0,
        format!("slope {slope:.4} (prediction 0.25); Λₙ = {lambda:.3}"),
    )
}

fn criterion_8() -> Outcome {
    let members = vec![
        make_categorical(&[1.0 / 3.0]).unwrap(),
        make_categorical(&[2.0 / 3.0]).unwrap(),
    ];
    let fam = make_countable(members.clone(), vec![0.5, 0.5]).unwrap();
    let mix = countable_mixture(&fam);
    let ln2 = 2f64.ln();
    let mut worst = f64::NEG_INFINITY;
    let mut d1 = 0.0;
    for n in 1..=20 {
        let d = exact_redundancy_enumeration(&members[0], &mix, n)
            .map_err(|e| e.to_string())?
            .value;
        if n == 1 {
            d1 = d;
        }
        worst = worst.max(d);
    }
    let oracle = (2.0f64 / 3.0).ln() / 3.0 + 2.0 / 3.0 * (4.0f64 / 3.0).ln();
    let mc = mc_redundancy(&members[0], &mix, 1000, 10_000, 8).map_err(|e| e.to_string())?;
    check(
        worst <= ln2
            && mc.value <= ln2 + 3.0 * mc.std_error
            && (d1 - oracle).abs() <= 1e-10
            && (d1 - 0.05663).abs() < 5e-6,
        format!(
            "max exact D_n (n ≤ 20) = {worst:.6} ≤ ln 2; MC D_1000 = {:.5} ± {:.5}; D_1 = {d1:.10}",
            mc.value, mc.std_error
        ),
    )
}

fn roundtrip_case(r: u64) -> Result<(), String> {
    let mut rng = replicate_rng(9, r);
    let n = rng.random_range(0..200);
    let (src, p): (_, MixturePredictor) = match r % 5 {
        0 => (
            make_categorical(&[rng.random_range(0.05..0.95)]).unwrap(),
            KtPredictor::new(2).unwrap().into(),
        ),
        1 => {
            let a = rng.random_range(0.05..0.45);
            let b = rng.random_range(0.05..0.45);
            (make_categorical(&[a, b]).unwrap(), KtPredictor::new(3).unwrap().into())
        }
        2 => {
            let theta = [rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)];
            let m = transition_matrix(2, &theta);
            (
                make_markov(&m, 1).unwrap(),
                MarkovKtPredictor::new(2, 1).unwrap().into(),
            )
        }
        3 => {
            let fam = FiniteFamily::Counterexample {
                schedule: Schedule::Constant { value: 1.0 },
            };
            let prior = PriorDensity::Uniform { low: 0.0, high: 1.0 };
            let q = quadrature_mixture(&fam, &prior, 64, n.max(1)).unwrap();
            let src = fam
                .at(mixred::families::ParameterPoint::new(vec![rng.random_range(0.1..0.9)]).unwrap())
                .unwrap();
            (src, q.into())
        }
        _ => {
            let members = vec![make_categorical(&[0.2]).unwrap(), make_categorical(&[0.7]).unwrap()];
            let fam = make_countable(members.clone(), vec![0.4, 0.6]).unwrap();
            (members[1].clone(), countable_mixture(&fam).into())
        }
    };
    let seq = src.sample(n, &mut rng);
    let (stream, stats) = encode_with_stats(&p, &seq).map_err(|e| e.to_string())?;
    if decode(&p, &stream).map_err(|e| e.to_string())? != seq {
        return Err(format!("case {r}: roundtrip mismatch"));
    }
    if stats.payload_bits as f64 > stats.quantized_bits.ceil() + 2.0 {
        return Err(format!(
            "case {r}: {} payload bits > ⌈{}⌉ + 2",
            stats.payload_bits, stats.quantized_bits
        ));
    }
    Ok(())
}

fn criterion_9() -> Outcome {
    (0..10_000u64)
        .into_par_iter()
        .map(roundtrip_case)
        .collect::<Result<Vec<()>, String>>()?;
    let src = make_categorical(&[0.5]).unwrap();
    let kt = KtPredictor::new(2).unwrap();
    let d = exact_redundancy_counts(&src, &kt, 1024)
        .map_err(|e| e.to_string())?
        .value
        / std::f64::consts::LN_2;
    let rep = codelength_report(&src, &kt, 1024, 200, 1).map_err(|e| e.to_string())?;
    let ok = rep.mean_overhead_bits >= d - 0.5 && rep.mean_overhead_bits <= d + 2.5 && rep.within_bound;
    check(
        ok,
        format!(
            "10⁴ roundtrips within ⌈−log₂ m̃⌉ + 2; Bernoulli n = 1024 overhead {:.4} bits vs D_n/ln 2 = {d:.4}",
            rep.mean_overhead_bits
        ),
    )
}

fn random_spd(rng: &mut impl Rng, d: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &m * m.transpose() + DMatrix::identity(d, d) * 0.05
}

fn criterion_10() -> Outcome {
    let mut rng = replicate_rng(10, 0);
    let mut worst_margin = f64::INFINITY;
    for i in 0..50 {
        let d = rng.random_range(1..=5);
        let sigma = random_spd(&mut rng, d);
        let c = normal_concentration_check(&sigma, 4.0 * d as f64, 100_000, 100 + i).map_err(|e| e.to_string())?;
        if !c.pass {
            return Err(format!(
                "concentration fails for d = {d}: coverage {} < bound {}",
                c.coverage, c.bound
            ));
        }
        worst_margin = worst_margin.min(c.coverage - c.bound);
    }
    for _ in 0..1000 {
        let d = rng.random_range(1..=5);
        let a = random_spd(&mut rng, d);
        let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let b = &m + m.transpose();
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let xx: f64 = x.iter().map(|v| v * v).sum();
        let a_inv = a.clone().try_inverse().ok_or("singular SPD draw")?;
        let a_inv = (&a_inv + a_inv.transpose()) * 0.5;
        let first = xx <= quadratic_form(&a, &x) * spectral_norm(&a_inv).unwrap() * (1.0 + 1e-10) + 1e-12;
        let second = quadratic_form(&b, &x) <= xx * spectral_norm(&b).unwrap() * (1.0 + 1e-10) + 1e-12;
        if !(first && second) {
            return Err(format!("norm inequality fails for x = {x:?}"));
        }
    }
    let mut worst_k2: f64 = 0.0;
    for i in 0..20 {
        let n = 1 + 50 * i * i;
        let lambda = 0.5 + i as f64;
        let a = bound_higher_order(-0.3, 1, 2, n, lambda).unwrap().total;
        let b = bound_thm1(-0.3, 1, n, lambda).unwrap().total;
        worst_k2 = worst_k2.max((a - b).abs());
    }
    check(
        worst_k2 <= 1e-12,
        format!(
            "50 concentration checks pass (min coverage − bound {worst_margin:.4}); 10³ norm pairs hold; k = 2 vs determinant bound max |Δ| = {worst_k2:.1e}"
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(u32, fn() -> Outcome); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let mut failed = 0;
    for (i, f) in criteria {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS criterion {i} ({secs:.1} s): {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {i} ({secs:.1} s): {msg}");
            }
        }
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
