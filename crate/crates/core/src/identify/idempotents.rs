//! Idempotents `p(c) = c, c != 0` of a homogeneous polynomial map over the
//! complex numbers. When they span `C^n`, the bracket map `B -> [B, p]` is
//! injective, so the first-order conditions determine `B` uniquely.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::polyfield::PolyField;

const MAX_NEWTON: usize = 100;
const CONVERGED: f64 = 1e-8;
const DEDUP_RADIUS: f64 = 1e-6;
const MIN_NORM: f64 = 1e-8;
const RANK_THRESHOLD: f64 = 1e-8;
/// Start points are drawn from this box in each real and imaginary part.
const START_BOX: f64 = 1.5;

#[derive(Clone, Debug, PartialEq)]
pub struct IdempotentSet {
    /// Distinct idempotents, sorted lexicographically by (re, im) per component.
    pub points: Vec<Vec<Complex64>>,
    /// The points span `C^n` (numerical rank `n`).
    pub spanning: bool,
    /// False when some root is not isolated (singular Newton Jacobian), in
    /// which case the point list samples a continuum.
    pub reliable: bool,
    /// Newton starts that converged to a nonzero root.
    pub converged: usize,
}

impl IdempotentSet {
    /// Short human-readable verdict.
    pub fn verdict(&self) -> &'static str {
        if self.points.is_empty() {
            "none found (inconclusive)"
        } else if !self.reliable {
            "non-isolated roots (inconclusive)"
        } else if self.spanning {
            "spanning"
        } else {
            "not spanning"
        }
    }
}

fn smallest_singular_ratio(m: &DMatrix<Complex64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.max();
    if max == 0.0 {
        0.0
    } else {
        sv.min() / max
    }
}

fn residual(p: &PolyField, c: &[Complex64]) -> Result<Vec<Complex64>> {
    Ok(p.eval_complex(c)?
        .into_iter()
        .zip(c)
        .map(|(a, b)| a - b)
        .collect())
}

fn cnorm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Newton iteration on `p(c) - c = 0`; returns the root and whether the
/// Jacobian there is numerically singular.
fn newton(p: &PolyField, mut c: Vec<Complex64>) -> Result<Option<(Vec<Complex64>, bool)>> {
    let n = c.len();
    for _ in 0..MAX_NEWTON {
        let f = residual(p, &c)?;
        if cnorm(&f) <= 1e-14 * (1.0 + cnorm(&c)) {
            break;
        }
        let mut jac = p.jacobian_complex(&c)?;
        for i in 0..n {
            jac[(i, i)] -= Complex64::new(1.0, 0.0);
        }
        let rhs = DVector::from_vec(f);
        let step = jac
            .svd(true, true)
            .solve(&rhs, 1e-14)
            .map_err(|e| Error::invalid(e.to_string()))?;
        for (ci, si) in c.iter_mut().zip(step.iter()) {
            *ci -= *si;
        }
        if c.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) || cnorm(&c) > 1e8 {
            return Ok(None);
        }
        if cnorm(step.as_slice()) <= 1e-15 * (1.0 + cnorm(&c)) {
            break;
        }
    }
    let f = residual(p, &c)?;
    if cnorm(&f) > CONVERGED * (1.0 + cnorm(&c)) {
        return Ok(None);
    }
    let mut jac = p.jacobian_complex(&c)?;
    for i in 0..n {
        jac[(i, i)] -= Complex64::new(1.0, 0.0);
    }
    Ok(Some((c, smallest_singular_ratio(&jac) < RANK_THRESHOLD)))
}

// Rounded below the dedup radius so root noise cannot reorder equal parts.
fn sort_key(v: f64) -> f64 {
    (v / (0.01 * DEDUP_RADIUS)).round() + 0.0
}

fn lex_cmp(a: &[Complex64], b: &[Complex64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = sort_key(x.re)
            .total_cmp(&sort_key(y.re))
            .then(sort_key(x.im).total_cmp(&sort_key(y.im)));
        if o != std::cmp::Ordering::Equal {
            return o;
        }
    }
    std::cmp::Ordering::Equal
}

/// Runs Newton from `starts` seeded random complex points and clusters the
/// nonzero roots.
pub fn find_idempotents(p: &PolyField, starts: usize, seed: u64) -> Result<IdempotentSet> {
    let n = p.dim();
    let degrees = p.degrees();
    if degrees.len() > 1 || degrees.iter().any(|&d| d < 2) {
        return Err(Error::invalid(
            "idempotent search needs a homogeneous field of degree at least 2",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<Vec<Complex64>> = Vec::new();
    let mut reliable = true;
    let mut converged = 0;
    for _ in 0..starts {
        let c0: Vec<Complex64> = (0..n)
            .map(|_| {
                Complex64::new(
                    rng.gen_range(-START_BOX..START_BOX),
                    rng.gen_range(-START_BOX..START_BOX),
                )
            })
            .collect();
        if p.is_zero() {
            continue;
        }
        let Some((c, singular)) = newton(p, c0)? else {
            continue;
        };
        if cnorm(&c) < MIN_NORM {
            continue;
        }
        converged += 1;
        if singular {
            reliable = false;
        }
        let dup = points.iter().any(|q| {
            let d: Vec<Complex64> = q.iter().zip(&c).map(|(a, b)| a - b).collect();
            cnorm(&d) <= DEDUP_RADIUS
        });
        if !dup {
            points.push(c);
        }
    }
    points.sort_by(|a, b| lex_cmp(a, b));
    let spanning = if points.len() >= n {
        let m = DMatrix::from_fn(n, points.len(), |i, j| points[j][i]);
        let sv = m.singular_values();
        let max = sv.max();
        max > 0.0 && sv.iter().filter(|s| **s > RANK_THRESHOLD * max).count() == n
    } else {
        false
    };
    Ok(IdempotentSet {
        points,
        spanning: spanning && reliable,
        reliable,
        converged,
    })
}
