use proptest::prelude::*;

use super::*;
use crate::rng::replicate_rng;

fn probs(source: &FiniteSource, t: usize, ctx: usize) -> Vec<f64> {
    let mut buf = vec![0.0; source.alphabet_size()];
    source.log_conditional(t, ctx, &mut buf);
    buf.iter().map(|l| l.exp()).collect()
}

#[test]
fn categorical_examples() {
    let bern = make_categorical(&[0.5]).unwrap();
    for t in 1..5 {
        assert_eq!(probs(&bern, t, 0), vec![0.5, 0.5]);
    }
    let uni = make_categorical(&[1.0 / 3.0, 1.0 / 3.0]).unwrap();
    for p in probs(&uni, 1, 0) {
        assert!((p - 1.0 / 3.0).abs() < 1e-15);
    }
    assert!(matches!(make_categorical(&[1.2]), Err(Error::Domain(_))));
    assert!(matches!(make_categorical(&[0.0]), Err(Error::Domain(_))));
    assert!(matches!(make_categorical(&[0.5, 0.5]), Err(Error::Domain(_))));
}

#[test]
fn markov_examples() {
    let uniform = make_markov(&[vec![0.5, 0.5], vec![0.5, 0.5]], 0).unwrap();
    for ctx in 0..2 {
        assert_eq!(probs(&uniform, 1, ctx), vec![0.5, 0.5]);
    }
    let sticky = make_markov(&[vec![0.9, 0.1], vec![0.1, 0.9]], 0).unwrap();
    let p = probs(&sticky, 1, sticky.family().initial_context());
    assert!((p[0] - 0.9).abs() < 1e-15);
    assert!(matches!(
        make_markov(&[vec![0.5, 0.4], vec![0.5, 0.5]], 0),
        Err(Error::Domain(_))
    ));
    assert!(matches!(
        make_markov(&[vec![1.0, 0.0], vec![0.5, 0.5]], 0),
        Err(Error::Domain(_))
    ));
}

#[test]
fn three_state_markov_uses_last_column_as_implied_entry() {
    let rows = vec![vec![0.2, 0.3, 0.5], vec![0.6, 0.3, 0.1], vec![0.1, 0.1, 0.8]];
    let src = make_markov(&rows, 2).unwrap();
    assert_eq!(src.theta().dim(), 6);
    for (j, row) in rows.iter().enumerate() {
        let p = probs(&src, 1, j);
        for (a, b) in p.iter().zip(row) {
            assert!((a - b).abs() < 1e-15);
        }
    }
    let full = transition_matrix(3, src.theta().as_slice());
    for (a, b) in full[1].iter().zip(&rows[1]) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn linreg_examples() {
    let side = SideInfoStream::new(Covariates::Cyclic { period: 1 }, Basis::Constant, 1.0).unwrap();
    let src = make_linreg(side, &[0.0]).unwrap();
    assert!((src.log_density(1, 0.0) + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);

    let side = SideInfoStream::new(Covariates::Cyclic { period: 1 }, Basis::Constant, 4.0).unwrap();
    let src = make_linreg(side, &[2.0]).unwrap();
    let expected = (4.0 / (2.0 * std::f64::consts::PI)).sqrt();
    assert!((src.log_density(3, 2.0).exp() - expected).abs() < 1e-14);

    assert!(SideInfoStream::new(Covariates::Cyclic { period: 1 }, Basis::Constant, 0.0).is_err());
    let side = SideInfoStream::new(Covariates::Cyclic { period: 1 }, Basis::Constant, 1.0).unwrap();
    assert!(matches!(make_linreg(side, &[0.0, 1.0]), Err(Error::Domain(_))));
}

#[test]
fn seeded_covariates_are_a_function_of_t() {
    let c = Covariates::Seeded { seed: 11 };
    let xs: Vec<f64> = (1..50).map(|t| c.at(t)).collect();
    assert!(xs.iter().all(|x| (0.0..1.0).contains(x)));
    assert_eq!(c.at(17), xs[16]);
    assert_ne!(c.at(1), c.at(2));
}

#[test]
fn counterexample_examples() {
    let fam = make_counterexample(Schedule::Constant { value: 4.0 }).unwrap();
    assert_eq!(fam.binary_prob_one(0.75, 1), 1.0);
    let fam1 = make_counterexample(Schedule::Constant { value: 1.0 }).unwrap();
    assert!((fam1.binary_prob_one(0.6, 3) - 0.61).abs() < 1e-15);
    let geo = make_counterexample(Schedule::Geometric { base: 4.0 }).unwrap();
    for t in 1..20 {
        assert_eq!(geo.binary_prob_one(0.5, t), 0.5);
    }
    assert!(make_counterexample(Schedule::Constant { value: -1.0 }).is_err());
    assert!(make_counterexample(Schedule::Table {
        values: vec![1.0, -0.5]
    })
    .is_err());
}

#[test]
fn counterexample_breakpoints_are_where_the_clip_engages() {
    let fam = make_counterexample(Schedule::Geometric { base: 4.0 }).unwrap();
    let bps = fam.breakpoints(6);
    assert!(!bps.is_empty());
    for &b in &bps {
        let hits = (1..=6).any(|t| (b + 4f64.powi(t) * (b - 0.5) * (b - 0.5) - 1.0).abs() < 1e-12);
        assert!(hits, "{b}");
    }
    assert!(make_counterexample(Schedule::Constant { value: 0.0 })
        .unwrap()
        .breakpoints(10)
        .is_empty());
}

#[test]
fn flat_family_examples() {
    let fam = make_flat_family(0.5, 4).unwrap();
    assert_eq!(fam.binary_prob_one(0.5, 1), 0.5);
    assert!((fam.binary_prob_one(0.6, 1) - 0.51).abs() < 1e-15);
    assert!(make_flat_family(0.5, 5).is_err());
    assert!(make_flat_family(0.5, 2).is_err());
    assert!(fam.validate(&[0.5 + 0.8]).is_err());
}

#[test]
fn flat_family_divergence_matches_closed_form() {
    // KL(Bern(½) ‖ Bern(½ + u²)) = -½ ln(1 - 4u⁴).
    let fam = make_flat_family(0.3, 4).unwrap();
    let mut q = [0.0; 2];
    for u in [1e-3, 0.01, 0.1, 0.3] {
        fam.log_conditional(&[0.3 + u], 1, 0, &mut q);
        let kl = 0.5 * (0.5f64.ln() - q[0]) + 0.5 * (0.5f64.ln() - q[1]);
        let closed = -0.5 * (1.0 - 4.0 * u.powi(4)).ln();
        assert!((kl - closed).abs() < 1e-15, "u={u}: {kl} vs {closed}");
    }
}

#[test]
fn countable_examples() {
    let members = vec![
        make_categorical(&[1.0 / 3.0]).unwrap(),
        make_categorical(&[2.0 / 3.0]).unwrap(),
    ];
    let fam = make_countable(members.clone(), vec![0.5, 0.5]).unwrap();
    assert_eq!(fam.mass()[1], 0.5);
    assert!(make_countable(vec![], vec![]).is_err());
    assert!(make_countable(members.clone(), vec![0.3, 0.3]).is_err());
    assert!(make_countable(members, vec![1.0]).is_err());
}

#[test]
fn jeffreys_examples() {
    let w = jeffreys_categorical(1).unwrap();
    let lw = w.log_density(&[0.5]);
    assert!((lw.exp() - 2.0 / std::f64::consts::PI).abs() < 1e-15);
    assert!((-lw - 0.451_582_705_289_454_9).abs() < 1e-12);

    let w2 = jeffreys_categorical(2).unwrap();
    let expected = crate::numeric::gamma(1.5) * std::f64::consts::PI.powf(-1.5) * 27f64.sqrt();
    assert!((w2.log_density(&[1.0 / 3.0, 1.0 / 3.0]).exp() - expected).abs() < 1e-13);
    assert_eq!(w2.log_density(&[0.0, 0.5]), f64::NEG_INFINITY);
    assert_eq!(w2.log_density(&[0.5, 0.5]), f64::NEG_INFINITY);
    assert!(jeffreys_categorical(0).is_err());
}

/// Trapezoid rule on `[0, a] × [0, b]` with `m` intervals per axis.
/// Open rule: never touches the boundary, where the Jeffreys integrand is
/// only defined as a limit.
fn midpoint_2d(f: impl Fn(f64, f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let (hx, hy) = (a / m as f64, b / m as f64);
    let mut s = 0.0;
    for i in 0..m {
        for j in 0..m {
            s += f((i as f64 + 0.5) * hx, (j as f64 + 0.5) * hy);
        }
    }
    s * hx * hy
}

fn trapezoid_2d(f: impl Fn(f64, f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let (hx, hy) = (a / m as f64, b / m as f64);
    let mut s = 0.0;
    for i in 0..=m {
        for j in 0..=m {
            let wx = if i == 0 || i == m { 0.5 } else { 1.0 };
            let wy = if j == 0 || j == m { 0.5 } else { 1.0 };
            s += wx * wy * f(i as f64 * hx, j as f64 * hy);
        }
    }
    s * hx * hy
}

#[test]
fn priors_integrate_to_one() {
    use std::f64::consts::FRAC_PI_2;
    // d = 1 Jeffreys with θ = sin²ψ: w(θ) dθ/dψ is bounded on [0, π/2].
    let w1 = jeffreys_categorical(1).unwrap();
    let m = 400;
    let h = FRAC_PI_2 / m as f64;
    let mut s = 0.0;
    for i in 1..m {
        let psi = i as f64 * h;
        let theta = psi.sin().powi(2);
        s += w1.log_density(&[theta]).exp() * 2.0 * psi.sin() * psi.cos();
    }
    // Endpoint values of the transformed integrand are 2/π each.
    s += 2.0 / std::f64::consts::PI;
    assert!((s * h - 1.0).abs() < 1e-3, "{}", s * h);

    // d = 2 Jeffreys with θ₁ = r² cos²φ, θ₂ = r² sin²φ, r = sin ψ.
    let w2 = jeffreys_categorical(2).unwrap();
    let integrand = |psi: f64, phi: f64| {
        let r = psi.sin();
        let theta = [r * r * phi.cos().powi(2), r * r * phi.sin().powi(2)];
        let jac = 4.0 * r.powi(3) * psi.cos() * phi.sin() * phi.cos();
        w2.log_density(&theta).exp() * jac
    };
    let total = midpoint_2d(integrand, FRAC_PI_2, FRAC_PI_2, 300);
    assert!((total - 1.0).abs() < 1e-3, "{total}");

    let g = PriorDensity::gaussian(vec![0.3, -0.2], vec![vec![1.0, 0.4], vec![0.4, 0.5]]).unwrap();
    let shifted = |x: f64, y: f64| g.log_density(&[x - 8.0 + 0.3, y - 6.0 - 0.2]).exp();
    let total = trapezoid_2d(shifted, 16.0, 12.0, 400);
    assert!((total - 1.0).abs() < 1e-3, "{total}");

    let u = PriorDensity::uniform(0.0, 1.0).unwrap();
    let s: f64 = (0..=100)
        .map(|i| {
            let w = if i == 0 || i == 100 { 0.5 } else { 1.0 };
            w * u.log_density(&[i as f64 / 100.0]).exp()
        })
        .sum::<f64>()
        / 100.0;
    assert!((s - 1.0).abs() < 1e-12);
}

#[test]
fn prior_validation() {
    assert!(PriorDensity::gaussian(vec![0.0], vec![vec![-1.0]]).is_err());
    assert!(PriorDensity::gaussian(vec![0.0, 0.0], vec![vec![1.0, 2.0], vec![0.0, 1.0]]).is_err());
    assert!(PriorDensity::uniform(1.0, 0.0).is_err());
    assert!(PriorDensity::DiscreteMass { mass: vec![0.5, 0.4] }.check().is_err());
}

#[test]
fn sampling_is_deterministic() {
    let src = make_categorical(&[0.3, 0.2]).unwrap();
    assert_eq!(
        sample_sequence(&src, 200, 5).unwrap(),
        sample_sequence(&src, 200, 5).unwrap()
    );
    assert_ne!(
        sample_sequence(&src, 200, 5).unwrap(),
        sample_sequence(&src, 200, 6).unwrap()
    );
    assert!(sample_sequence(&src, 0, 5).is_err());
}

#[test]
fn bernoulli_frequency_within_binomial_interval() {
    // For n = 1e5 the 0.99 interval half-width is 2.576 · 0.5/√n ≈ 0.0041.
    let src = make_categorical(&[0.5]).unwrap();
    let seq = sample_sequence(&src, 100_000, 42).unwrap();
    let frac = seq.iter().filter(|&&s| s == 1).count() as f64 / 1e5;
    assert!((0.494..=0.506).contains(&frac), "{frac}");
}

#[test]
fn markov_transition_counts_within_three_sigma() {
    let src = make_markov(&[vec![0.5, 0.5], vec![0.5, 0.5]], 0).unwrap();
    let seq = sample_sequence(&src, 40_000, 9).unwrap();
    let mut counts = [[0usize; 2]; 2];
    let mut prev = 0;
    for &s in &seq {
        counts[prev][s] += 1;
        prev = s;
    }
    for row in counts {
        let n = (row[0] + row[1]) as f64;
        let sigma = (n * 0.25).sqrt();
        assert!((row[0] as f64 - n / 2.0).abs() < 3.0 * sigma, "{row:?}");
    }
}

#[test]
fn empirical_log_loss_matches_entropy() {
    let theta = [0.2, 0.5];
    let src = make_categorical(&theta).unwrap();
    let p: [f64; 3] = [0.3, 0.2, 0.5];
    let entropy: f64 = -p.iter().map(|x| x * x.ln()).sum::<f64>();
    let n = 20_000;
    let seq = sample_sequence(&src, n, 3).unwrap();
    let losses: Vec<f64> = seq.iter().map(|&s| -p[s].ln()).collect();
    let mean = losses.iter().sum::<f64>() / n as f64;
    let var = losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    assert!((mean - entropy).abs() < 3.0 * se, "{mean} vs {entropy} (se {se})");
    assert!((-src.log_prob(&seq).unwrap() / n as f64 - mean).abs() < 1e-12);
}

fn arb_source() -> impl Strategy<Value = FiniteSource> {
    let cat = prop::collection::vec(0.05f64..1.0, 2..5).prop_map(|w| {
        let s: f64 = w.iter().sum();
        make_categorical(&w[1..].iter().map(|x| x / s).collect::<Vec<_>>()).unwrap()
    });
    let markov = (2usize..4, prop::collection::vec(0.05f64..1.0, 9), 0usize..2).prop_map(|(n, w, init)| {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                let r = &w[j * 3..j * 3 + n];
                let s: f64 = r.iter().sum();
                let mut row: Vec<f64> = r.iter().map(|x| x / s).collect();
                let head: f64 = row[..n - 1].iter().sum();
                row[n - 1] = 1.0 - head;
                row
            })
            .collect();
        make_markov(&rows, init).unwrap()
    });
    let counter = (0.0f64..=1.0, 0.0f64..50.0).prop_map(|(theta, a)| {
        make_counterexample(Schedule::Constant { value: a })
            .unwrap()
            .at(ParameterPoint::new(vec![theta]).unwrap())
            .unwrap()
    });
    let flat = (-0.6f64..0.6).prop_map(|u| {
        make_flat_family(0.5, 4)
            .unwrap()
            .at(ParameterPoint::new(vec![0.5 + u]).unwrap())
            .unwrap()
    });
    prop_oneof![cat, markov, counter, flat]
}

proptest! {
    #[test]
    fn conditionals_normalize(source in arb_source(), seed in 0u64..1000, t in 1usize..50) {
        let hist = source.sample(t, &mut replicate_rng(seed, 0));
        let fam = source.family();
        let mut ctx = fam.initial_context();
        for &s in &hist {
            ctx = fam.next_context(ctx, s);
        }
        let total: f64 = probs(&source, t + 1, ctx).iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12, "{total}");
    }

    #[test]
    fn counterexample_ignores_history(theta in 0.0f64..=1.0, a in 0.0f64..100.0, t in 1usize..30) {
        let src = make_counterexample(Schedule::Constant { value: a }).unwrap()
            .at(ParameterPoint::new(vec![theta]).unwrap()).unwrap();
        let fam = src.family();
        // Every history of length t-1 maps to the same context.
        let a_ctx = (0..t).fold(fam.initial_context(), |c, _| fam.next_context(c, 0));
        let b_ctx = (0..t).fold(fam.initial_context(), |c, i| fam.next_context(c, i % 2));
        prop_assert_eq!(probs(&src, t, a_ctx), probs(&src, t, b_ctx));
    }
}
