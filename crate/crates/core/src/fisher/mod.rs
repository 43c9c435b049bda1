//! Mean Fisher information: closed forms, a finite-difference oracle built
//! on `f_n(θ) = (1/n) D(Pⁿ_θ₀ ‖ Pⁿ_θ)`, and the higher-order curvature `Λₙ`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::families::{FiniteFamily, ParameterPoint, SideInfoStream, STOCHASTIC_TOL};
use crate::numeric::{lu_determinant, NeumaierSum};
use crate::rng::replicate_rng;

/// Default stencil spacing for second derivatives.
pub const H_SECOND: f64 = 1e-3;
/// Default stencil spacing for fourth and higher derivatives.
pub const H_HIGHER: f64 = 5e-2;
/// Lower-order derivatives below this count as vanished in [`lambda_n`].
pub const VANISHING_TOL: f64 = 1e-3;
/// Directions tried by the `d > 1` search in [`lambda_n`].
pub const LAMBDA_DIRECTIONS: usize = 10_000;

const SYMMETRY_TOL: f64 = 1e-8;
const STATIONARY_TOL: f64 = 1e-12;
const STATIONARY_MAX_ITER: usize = 1_000_000;

/// `Iₙ(θ₀)` together with the horizon it was computed for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherMatrix {
    d: usize,
    /// Row-major entries.
    data: Vec<f64>,
    n: usize,
    theta0: Vec<f64>,
}

impl FisherMatrix {
    pub fn new(matrix: DMatrix<f64>, n: usize, theta0: Vec<f64>) -> Self {
        let d = matrix.nrows();
        let data = (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| matrix[(i, j)])
            .collect();
        Self { d, data, n, theta0 }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn horizon(&self) -> usize {
        self.n
    }

    pub fn theta0(&self) -> &[f64] {
        &self.theta0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.d + j]
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.d, self.d, &self.data)
    }

    pub fn det(&self) -> Result<f64> {
        det(&self.matrix())
    }

    pub fn spectral_norm(&self) -> Result<f64> {
        spectral_norm(&self.matrix())
    }

    /// Rows as CSV lines.
    pub fn to_csv(&self) -> String {
        self.data
            .chunks(self.d)
            .map(|row| row.iter().map(|x| format!("{x:.12e}")).collect::<Vec<_>>().join(","))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

fn check_interior(theta: &[f64]) -> Result<f64> {
    if theta.is_empty() {
        return domain("parameter must have dimension ≥ 1");
    }
    if let Some(x) = theta.iter().find(|&&x| !(x > 0.0)) {
        return domain(format!("coordinate {x} is on or outside the simplex boundary"));
    }
    let rest = 1.0 - theta.iter().sum::<f64>();
    if !(rest > 0.0) {
        return domain(format!("coordinates leave implied mass {rest} ≤ 0"));
    }
    Ok(rest)
}

/// `I_{ij} = δ_{ij}/θ_i + 1/θ₀` for the i.i.d. categorical family.
pub fn categorical_fisher(theta: &[f64]) -> Result<FisherMatrix> {
    let rest = check_interior(theta)?;
    let d = theta.len();
    let m = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 / theta[i] } else { 0.0 } + 1.0 / rest);
    Ok(FisherMatrix::new(m, 1, theta.to_vec()))
}

/// `Π_{j=0}^d 1/θ_j`, the determinant of [`categorical_fisher`].
pub fn structured_det(theta: &[f64]) -> Result<f64> {
    let rest = check_interior(theta)?;
    Ok(1.0 / (rest * theta.iter().product::<f64>()))
}

fn check_chain(transition: &[Vec<f64>]) -> Result<()> {
    let n = transition.len();
    if n < 2 {
        return domain("a chain needs at least 2 states");
    }
    for (j, row) in transition.iter().enumerate() {
        if row.len() != n {
            return domain(format!("row {j} has {} entries, expected {n}", row.len()));
        }
        if let Some(x) = row.iter().find(|&&x| !(x > 0.0 && x < 1.0)) {
            return domain(format!("row {j} has entry {x} outside (0, 1)"));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > STOCHASTIC_TOL {
            return domain(format!("row {j} sums to {s}"));
        }
    }
    Ok(())
}

/// Stationary law `πP = π` by power iteration.
pub fn markov_stationary(transition: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_chain(transition)?;
    let n = transition.len();
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..STATIONARY_MAX_ITER {
        let mut next = vec![0.0; n];
        for (j, row) in transition.iter().enumerate() {
            for (k, p) in row.iter().enumerate() {
                next[k] += pi[j] * p;
            }
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= total);
        let resid: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if resid <= STATIONARY_TOL {
            return Ok(pi);
        }
    }
    Err(Error::Numeric(format!(
        "power iteration did not converge in {STATIONARY_MAX_ITER} steps"
    )))
}

/// Asymptotic `det Iₙ = Π_j π_j^{N-1} / Π_{j,k} θ_j^k` of a Markov chain.
pub fn markov_fisher_det(transition: &[Vec<f64>]) -> Result<f64> {
    let pi = markov_stationary(transition)?;
    let n = transition.len() as i32;
    let log: f64 = pi
        .iter()
        .zip(transition)
        .map(|(p, row)| (n - 1) as f64 * p.ln() - row.iter().map(|x| x.ln()).sum::<f64>())
        .sum();
    Ok(log.exp())
}

/// Regression information `(β/n) Σ_t Φ(x_t)Φ(x_t)ᵀ` with its spectral-norm
/// check against `d·β`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinRegFisher {
    pub fisher: FisherMatrix,
    pub spectral_norm: f64,
    pub norm_bound: f64,
    pub within_bound: bool,
}

pub fn linreg_fisher(side: &SideInfoStream, n: usize) -> Result<LinRegFisher> {
    side.check()?;
    if n == 0 {
        return domain("horizon must be at least 1");
    }
    let d = side.dim();
    let mut m = DMatrix::zeros(d, d);
    for t in 1..=n {
        let phi = side.features(t);
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] += phi[i] * phi[j];
            }
        }
    }
    m *= side.beta / n as f64;
    let spec = spectral_norm(&m)?;
    let bound = d as f64 * side.beta;
    Ok(LinRegFisher {
        fisher: FisherMatrix::new(m, n, Vec::new()),
        spectral_norm: spec,
        norm_bound: bound,
        within_bound: spec <= bound * (1.0 + 1e-12),
    })
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.iter().fold(1.0f64, |a, x| a.max(x.abs()));
    m.is_square() && (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= SYMMETRY_TOL * scale))
}

/// Largest eigenvalue magnitude of a symmetric matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> Result<f64> {
    if !is_symmetric(m) {
        return domain("spectral_norm needs a symmetric matrix");
    }
    let eig = SymmetricEigen::new(m.clone());
    Ok(eig.eigenvalues.iter().fold(0.0f64, |a, x| a.max(x.abs())))
}

/// `‖x‖²_A = xᵀAx`.
pub fn quadratic_form(m: &DMatrix<f64>, x: &[f64]) -> f64 {
    let v = nalgebra::DVector::from_column_slice(x);
    v.dot(&(m * &v))
}

/// Determinant by LU with partial pivoting.
pub fn det(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() {
        return domain("determinant of a non-square matrix");
    }
    let n = m.nrows();
    let rows: Vec<f64> = (0..n).flat_map(|i| (0..n).map(move |j| m[(i, j)])).collect();
    lu_determinant(&rows, n)
}

/// How `f_n` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KlEvaluator {
    /// Exact, by propagating the law of the family's context forward in time.
    Exact,
    /// Sample mean over `samples` sequences from `P_θ₀`; every parameter
    /// shares the same draws, so finite differences stay smooth.
    MonteCarlo { samples: usize, seed: u64 },
}

/// `f_n(θ) = (1/n) D(Pⁿ_θ₀ ‖ Pⁿ_θ)`.
pub fn kl_rate(family: &FiniteFamily, theta0: &[f64], theta: &[f64], n: usize, eval: KlEvaluator) -> Result<f64> {
    family.validate(theta0)?;
    family.validate(theta)?;
    if n == 0 {
        return domain("horizon must be at least 1");
    }
    let total = match eval {
        KlEvaluator::Exact => exact_kl(family, theta0, theta, n),
        KlEvaluator::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return domain("Monte Carlo needs at least one sample");
            }
            let src = family.at(ParameterPoint::new(theta0.to_vec())?)?;
            let alt = family.at(ParameterPoint::new(theta.to_vec())?)?;
            let vals: Vec<f64> = (0..samples)
                .into_par_iter()
                .map(|r| {
                    let (seq, lp0) = src.sample_with_log_prob(n, &mut replicate_rng(seed, r as u64));
                    lp0 - alt.log_prob(&seq).expect("sampled symbols are in range")
                })
                .collect();
            vals.into_iter().collect::<NeumaierSum>().value() / samples as f64
        }
    };
    Ok(total / n as f64)
}

fn exact_kl(family: &FiniteFamily, theta0: &[f64], theta: &[f64], n: usize) -> f64 {
    let k = family.alphabet_size();
    let mut law = vec![0.0; family.context_count()];
    law[family.initial_context()] = 1.0;
    let (mut p, mut q) = (vec![0.0; k], vec![0.0; k]);
    let mut acc = NeumaierSum::new();
    for t in 1..=n {
        let mut next = vec![0.0; law.len()];
        for (c, &w) in law.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            family.log_conditional(theta0, t, c, &mut p);
            family.log_conditional(theta, t, c, &mut q);
            for s in 0..k {
                let ps = p[s].exp();
                acc.add(w * ps * (p[s] - q[s]));
                next[family.next_context(c, s)] += w * ps;
            }
        }
        law = next;
    }
    acc.value()
}

/// Central-difference Hessian of `f_n` at `θ₀` with spacing `h`.
pub fn finite_diff_fisher(
    family: &FiniteFamily,
    theta0: &[f64],
    n: usize,
    h: f64,
    eval: KlEvaluator,
) -> Result<FisherMatrix> {
    if !(h > 0.0) {
        return domain(format!("step h = {h} must be positive"));
    }
    family.validate(theta0)?;
    let d = theta0.len();
    let f = |di: &[(usize, f64)]| -> Result<f64> {
        let mut th = theta0.to_vec();
        for &(i, s) in di {
            th[i] += s;
        }
        family
            .validate(&th)
            .map_err(|e| Error::Domain(format!("stencil point leaves the domain: {e}")))?;
        kl_rate(family, theta0, &th, n, eval)
    };
    let f0 = f(&[])?;
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        m[(i, i)] = (f(&[(i, h)])? - 2.0 * f0 + f(&[(i, -h)])?) / (h * h);
        for j in 0..i {
            let v = (f(&[(i, h), (j, h)])? - f(&[(i, h), (j, -h)])? - f(&[(i, -h), (j, h)])? + f(&[(i, -h), (j, -h)])?)
                / (4.0 * h * h);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(FisherMatrix::new(m, n, theta0.to_vec()))
}

/// `Λₙ` together with the order and point it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HigherOrderForm {
    pub k: u32,
    pub lambda: f64,
    pub theta0: Vec<f64>,
    pub n: usize,
    /// Maximizing direction on the unit `k`-norm sphere.
    pub direction: Vec<f64>,
    /// For `d > 1` the maximum comes from a finite search and is only a
    /// lower bound on the true `Λₙ`.
    pub lower_bound_only: bool,
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `j`-th central difference of `s ↦ g(s)` at 0 with spacing `h`.
fn central_derivative(g: &dyn Fn(f64) -> Result<f64>, j: u32, h: f64) -> Result<f64> {
    let mut acc = 0.0;
    for i in 0..=j {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * binomial(j, i) * g((j as f64 / 2.0 - i as f64) * h)?;
    }
    Ok(acc / h.powi(j as i32))
}

/// `Λₙ = max_{‖x‖_k = 1} ∂^k f_n(θ₀)[x, …, x]`, the `k`-th directional
/// derivative of `f_n`, after checking that all lower orders vanish.
pub fn lambda_n(
    family: &FiniteFamily,
    theta0: &[f64],
    k: u32,
    n: usize,
    h: f64,
    eval: KlEvaluator,
) -> Result<HigherOrderForm> {
    if k < 2 || k % 2 == 1 {
        return domain(format!("order k = {k} must be even and ≥ 2"));
    }
    if !(h > 0.0) {
        return domain(format!("step h = {h} must be positive"));
    }
    family.validate(theta0)?;
    let d = theta0.len();
    let along = |x: &[f64], s: f64| -> Result<f64> {
        let th: Vec<f64> = theta0.iter().zip(x).map(|(a, b)| a + s * b).collect();
        family
            .validate(&th)
            .map_err(|e| Error::Domain(format!("stencil point leaves the domain: {e}")))?;
        kl_rate(family, theta0, &th, n, eval)
    };
    let kth = |x: &[f64]| central_derivative(&|s| along(x, s), k, h);

    let mut checks: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            e
        })
        .collect();
    let (direction, lambda) = if d == 1 {
        (vec![1.0], kth(&[1.0])?)
    } else {
        let mut rng = replicate_rng(0x005e_ed1a_3bda, 0);
        let dirs: Vec<Vec<f64>> = (0..LAMBDA_DIRECTIONS)
            .map(|_| random_on_sphere(&mut rng, d, k))
            .collect();
        checks.extend(dirs.iter().take(16).cloned());
        let vals: Vec<Result<f64>> = dirs.par_iter().map(|x| kth(x)).collect();
        let mut best = (dirs[0].clone(), f64::NEG_INFINITY);
        for (x, v) in dirs.iter().zip(vals) {
            let v = v?;
            if v > best.1 {
                best = (x.clone(), v);
            }
        }
        refine(&kth, best, k, &mut rng)?
    };

    let mut offenders = Vec::new();
    for x in &checks {
        for j in 1..k {
            let v = central_derivative(&|s| along(x, s), j, H_SECOND)?;
            if v.abs() > VANISHING_TOL {
                offenders.push(format!("order {j} along {x:?}: {v:.3e}"));
            }
        }
    }
    if !offenders.is_empty() {
        return Err(Error::Precondition(format!(
            "lower-order derivatives do not vanish: {}",
            offenders.join("; ")
        )));
    }
    if !(lambda > 0.0) {
        return Err(Error::Precondition(format!(
            "order-{k} derivative {lambda} is not positive"
        )));
    }
    Ok(HigherOrderForm {
        k,
        lambda,
        theta0: theta0.to_vec(),
        n,
        direction,
        lower_bound_only: d > 1,
    })
}

fn k_normalize(mut x: Vec<f64>, k: u32) -> Vec<f64> {
    let norm = x
        .iter()
        .map(|v| v.abs().powi(k as i32))
        .sum::<f64>()
        .powf(1.0 / k as f64);
    x.iter_mut().for_each(|v| *v /= norm);
    x
}

fn random_on_sphere(rng: &mut crate::rng::Rng, d: usize, k: u32) -> Vec<f64> {
    k_normalize((0..d).map(|_| StandardNormal.sample(rng)).collect(), k)
}

/// Random local search around the best grid direction with a shrinking
/// radius.
fn refine(
    kth: &(dyn Fn(&[f64]) -> Result<f64> + Sync),
    start: (Vec<f64>, f64),
    k: u32,
    rng: &mut crate::rng::Rng,
) -> Result<(Vec<f64>, f64)> {
    let mut best = start;
    let mut radius = 0.1;
    while radius > 1e-4 {
        let mut improved = false;
        for _ in 0..32 {
            let cand: Vec<f64> = best
                .0
                .iter()
                .map(|v| v + radius * (rng.random::<f64>() * 2.0 - 1.0))
                .collect();
            let cand = k_normalize(cand, k);
            let v = kth(&cand)?;
            if v > best.1 {
                best = (cand, v);
                improved = true;
            }
        }
        if !improved {
            radius *= 0.5;
        }
    }
    Ok(best)
}
