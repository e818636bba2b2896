//! Seeded generators shared by the integration suites.
#![allow(dead_code)]

pub mod oracle;

use gaugekit::linalg::RealMatrix;
use gaugekit::odeint::{integrate_dense, OdeOptions};
use gaugekit::polyfield::{MultiIndex, PolyField};
use gaugekit::timexpr::{Node, TimeExpr};
use gaugekit::{identify::NonAutoSystem, matcurve::MatrixCurve};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// All exponent vectors of total degree `j` in `n` variables.
pub fn monomials(n: usize, j: u32) -> Vec<MultiIndex> {
    if n == 1 {
        return vec![vec![j]];
    }
    (0..=j)
        .rev()
        .flat_map(|k| {
            monomials(n - 1, j - k).into_iter().map(move |mut rest| {
                rest.insert(0, k);
                rest
            })
        })
        .collect()
}

/// Homogeneous degree-`j` field with dense coefficients uniform in `[-scale, scale]`.
pub fn random_homogeneous(rng: &mut ChaCha8Rng, n: usize, j: u32, scale: f64) -> PolyField {
    let mut terms = Vec::new();
    for comp in 0..n {
        for alpha in monomials(n, j) {
            terms.push((comp, alpha, rng.gen_range(-scale..scale)));
        }
    }
    PolyField::from_terms(n, terms).unwrap()
}

/// Field with parts of every degree in `degrees`.
pub fn random_field(rng: &mut ChaCha8Rng, n: usize, degrees: &[u32], scale: f64) -> PolyField {
    degrees.iter().fold(PolyField::new(n), |acc, &j| {
        acc.add(&random_homogeneous(rng, n, j, scale)).unwrap()
    })
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> RealMatrix {
    RealMatrix::from_fn(n, n, |_, _| rng.gen_range(-scale..scale))
}

/// Well-conditioned matrix `I + E` with `|E_ij| <= 0.3 / n`.
pub fn random_invertible(rng: &mut ChaCha8Rng, n: usize) -> RealMatrix {
    RealMatrix::identity(n, n) + random_matrix(rng, n, 0.3 / n as f64)
}

pub fn random_point(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

fn random_leaf(rng: &mut ChaCha8Rng) -> TimeExpr {
    if rng.gen_bool(0.55) {
        TimeExpr::t()
    } else {
        // quarter steps keep printed literals short
        let v = (rng.gen_range(-12..=12) as f64) / 4.0;
        TimeExpr::num(if v == 0.0 { 1.5 } else { v })
    }
}

/// Random expression of depth at most `depth` over all grammar constructs.
pub fn random_expr(rng: &mut ChaCha8Rng, depth: u32) -> TimeExpr {
    if depth == 0 || rng.gen_bool(0.2) {
        return random_leaf(rng);
    }
    let d = depth - 1;
    let e = match rng.gen_range(0..10) {
        0 => random_expr(rng, d).add(&random_expr(rng, d)),
        1 => random_expr(rng, d).sub(&random_expr(rng, d)),
        2 | 3 => random_expr(rng, d).mul(&random_expr(rng, d)),
        4 => random_expr(rng, d).div(&random_expr(rng, d)),
        5 => random_expr(rng, d).neg(),
        6 => random_expr(rng, d).powi(rng.gen_range(2..=3)),
        7 => random_expr(rng, d).exp(),
        8 => random_expr(rng, d).sin(),
        _ => random_expr(rng, d).cos(),
    };
    // literal folding can overflow; printed `inf`/`NaN` are not in the grammar
    match e.as_num() {
        Some(v) if !v.is_finite() || v.abs() > 1e6 => random_leaf(rng),
        _ => e,
    }
}

pub const FD_STEP: f64 = 1e-5;

/// Central difference of `e` at `t` with step `h`.
pub fn central_difference(e: &TimeExpr, t: f64, h: f64) -> f64 {
    (e.eval(t + h).unwrap() - e.eval(t - h).unwrap()) / (2.0 * h)
}

/// Like [`safe_time`], and additionally the central difference with step
/// [`FD_STEP`] must resolve the derivative: its truncation error, estimated
/// from steps `h` and `2h`, stays below `1e-7 (1 + |fd|)`.
pub fn fd_resolvable_time(e: &TimeExpr, rng: &mut ChaCha8Rng, margin: f64) -> Option<(f64, usize)> {
    for rejected in 0..500 {
        let t = safe_time(e, rng, margin)?;
        let fd1 = central_difference(e, t, FD_STEP);
        let fd2 = central_difference(e, t, 2.0 * FD_STEP);
        if (fd2 - fd1).abs() / 3.0 <= 1e-7 * (1.0 + fd1.abs()) {
            return Some((t, rejected));
        }
    }
    None
}

/// The seeded corpus used by the differentiation checks.
pub fn expression_corpus(count: usize, seed: u64) -> Vec<TimeExpr> {
    let mut r = rng(seed);
    (0..count).map(|_| random_expr(&mut r, 6)).collect()
}

/// Every subexpression evaluates to a finite value and every denominator
/// has magnitude at least `margin` at `t`.
fn well_conditioned(e: &TimeExpr, t: f64, margin: f64) -> bool {
    let mut stack = vec![e.clone()];
    while let Some(x) = stack.pop() {
        if !x.eval(t).map(f64::is_finite).unwrap_or(false) {
            return false;
        }
        match x.node() {
            Node::Num(_) | Node::T => {}
            Node::Neg(a) | Node::Pow(a, _) | Node::Func(_, a) => stack.push(a.clone()),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) => {
                stack.push(a.clone());
                stack.push(b.clone());
            }
            Node::Div(a, b) => {
                if b.eval(t).map(f64::abs).unwrap_or(0.0) < margin {
                    return false;
                }
                stack.push(a.clone());
                stack.push(b.clone());
            }
        }
    }
    true
}

/// A time in `[-1, 1]` where the expression is well conditioned (see
/// above) with a moderate value, or `None` after many draws.
pub fn safe_time(e: &TimeExpr, rng: &mut ChaCha8Rng, margin: f64) -> Option<f64> {
    for _ in 0..500 {
        let t: f64 = rng.gen_range(-1.0..1.0);
        let ok = [t - 1e-4, t, t + 1e-4].iter().all(|&s| {
            well_conditioned(e, s, margin) && e.eval(s).map(|v| v.abs() <= 1e3).unwrap_or(false)
        });
        if ok {
            return Some(t);
        }
    }
    None
}

/// Rotation `[[cos, -sin], [sin, cos]]` by `theta(t)` in the `(0, 1)` plane,
/// identity on the remaining coordinates.
pub fn rotation_curve(n: usize, theta: &TimeExpr) -> MatrixCurve {
    let (c, s) = (theta.cos(), theta.sin());
    let entries: Vec<Vec<TimeExpr>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| match (i, j) {
                    (0, 0) | (1, 1) => c.clone(),
                    (0, 1) => s.neg(),
                    (1, 0) => s.clone(),
                    _ if i == j => TimeExpr::one(),
                    _ => TimeExpr::zero(),
                })
                .collect()
        })
        .collect();
    let inverse: Vec<Vec<TimeExpr>> = (0..n)
        .map(|i| (0..n).map(|j| entries[j][i].clone()).collect())
        .collect();
    MatrixCurve::closed_form(entries, Some(inverse)).unwrap()
}

/// Angles with `theta(0) = 0`, so the rotation curve starts at the identity.
pub fn angle_corpus() -> Vec<TimeExpr> {
    [
        "t + 0.5*t^2",
        "sin(t)",
        "0.3*t^3 - t",
        "2*t",
        "t*exp(-t)",
        "1 - cos(2*t)",
        "t/(1 + t^2)",
    ]
    .iter()
    .map(|s| gaugekit::timexpr::parse_expr(s).unwrap())
    .collect()
}

/// Largest relative gap `|w - A z| / (1 + |A z|)` over 200 samples, where
/// `z` solves the autonomous field and `w` the system `q` from `A(0) x0`.
pub fn resimulation_gap(
    f: &PolyField,
    q: &NonAutoSystem,
    a: &MatrixCurve,
    x0: &[f64],
    t1: f64,
) -> f64 {
    let opts = OdeOptions::with_tol(1e-11);
    let z = integrate_dense(f, x0, 0.0, t1, &opts).unwrap();
    let a0 = a.value(0.0).unwrap();
    let w0: Vec<f64> = (0..x0.len())
        .map(|i| (0..x0.len()).map(|j| a0[(i, j)] * x0[j]).sum())
        .collect();
    let w = integrate_dense(q, &w0, 0.0, t1, &opts).unwrap();
    assert!(
        z.blow_up.is_none() && w.blow_up.is_none(),
        "fixture escaped"
    );
    let mut worst: f64 = 0.0;
    for k in 0..200 {
        let t = t1 * k as f64 / 199.0;
        let at = a.value(t).unwrap();
        let zt = z.eval(t).unwrap();
        let wt = w.eval(t).unwrap();
        let n = zt.len();
        let mut gap = 0.0;
        let mut size = 0.0;
        for i in 0..n {
            let az: f64 = (0..n).map(|j| at[(i, j)] * zt[j]).sum();
            gap += (wt[i] - az).powi(2);
            size += az * az;
        }
        worst = worst.max(gap.sqrt() / (1.0 + size.sqrt()));
    }
    worst
}
