//! Exact oracle for the first-order conditions in dimension two.
//!
//! For quadratic `p = (a1 x1^2 + b1 x1 x2 + c1 x2^2, a2 x1^2 + b2 x1 x2 + c2 x2^2)`
//! and `M = [[m1, m2], [m3, m4]]`, expanding `[M, p] = Dp M x - M p` by hand
//! gives, on the monomials `x1^2, x1 x2, x2^2` of each component,
//!
//! ```text
//! 1: a1 m1 - a2 m2 + b1 m3              2: 2 a2 m1 + (b2 - a1) m3 - a2 m4
//!    (2 a1 - b2) m2 + 2 c1 m3 + b1 m4      b2 m1 + 2 a2 m2 + (2 c2 - b1) m3
//!    -c1 m1 + (b1 - c2) m2 + 2 c1 m4       b2 m2 - c1 m3 + c2 m4
//! ```
//!
//! The systems are solved by Gauss-Jordan elimination over the rationals.

use num_rational::Rational64 as Q;

/// `[[a1, b1, c1], [a2, b2, c2]]`.
pub type Quadratic = [[i64; 3]; 2];

fn q(v: i64) -> Q {
    Q::from_integer(v)
}

/// Rows in the order comp 1 `(x1^2, x1 x2, x2^2)`, comp 2 likewise; columns `m1..m4`.
pub fn bracket_rows(p: &Quadratic) -> Vec<[Q; 4]> {
    let [[a1, b1, c1], [a2, b2, c2]] = *p;
    let z = 0;
    [
        [a1, -a2, b1, z],
        [z, 2 * a1 - b2, 2 * c1, b1],
        [-c1, b1 - c2, z, 2 * c1],
        [2 * a2, z, b2 - a1, -a2],
        [b2, 2 * a2, 2 * c2 - b1, z],
        [z, b2, -c1, c2],
    ]
    .iter()
    .map(|r| r.map(q))
    .collect()
}

/// Coefficients of `[M, p]` in the row order of [`bracket_rows`].
pub fn apply(rows: &[[Q; 4]], m: &[Q; 4]) -> Vec<Q> {
    rows.iter()
        .map(|r| (0..4).map(|k| r[k] * m[k]).sum())
        .collect()
}

/// Rows `M c0 = -cdot0` for the constant part.
pub fn constant_rows(c0: [i64; 2]) -> Vec<[Q; 4]> {
    vec![
        [q(c0[0]), q(c0[1]), q(0), q(0)],
        [q(0), q(0), q(c0[0]), q(c0[1])],
    ]
}

#[derive(Clone, Debug)]
pub struct ExactSolution {
    pub particular: [Q; 4],
    pub kernel: Vec<[Q; 4]>,
}

/// Solution set of `rows * m = rhs`, or `None` when inconsistent.
pub fn solve(rows: &[[Q; 4]], rhs: &[Q]) -> Option<ExactSolution> {
    let mut a: Vec<Vec<Q>> = rows
        .iter()
        .zip(rhs)
        .map(|(r, b)| r.iter().copied().chain([*b]).collect())
        .collect();
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..4 {
        let Some(p) = (row..a.len()).find(|&i| a[i][col] != q(0)) else {
            continue;
        };
        a.swap(row, p);
        let inv = q(1) / a[row][col];
        for v in a[row].iter_mut() {
            *v *= inv;
        }
        let pivot = a[row].clone();
        for (i, r) in a.iter_mut().enumerate() {
            if i != row && r[col] != q(0) {
                let f = r[col];
                for (x, p) in r.iter_mut().zip(&pivot) {
                    *x -= f * p;
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    if a[row..].iter().any(|r| r[4] != q(0)) {
        return None;
    }
    let mut particular = [q(0); 4];
    for (i, &c) in pivots.iter().enumerate() {
        particular[c] = a[i][4];
    }
    let kernel = (0..4)
        .filter(|c| !pivots.contains(c))
        .map(|free| {
            let mut v = [q(0); 4];
            v[free] = q(1);
            for (i, &c) in pivots.iter().enumerate() {
                v[c] = -a[i][free];
            }
            v
        })
        .collect();
    Some(ExactSolution { particular, kernel })
}

pub fn to_f64(v: Q) -> f64 {
    *v.numer() as f64 / *v.denom() as f64
}
