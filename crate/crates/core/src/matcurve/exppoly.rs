//! Exponential polynomials `sum c t^k exp(lambda t)` with complex rates and
//! coefficients, used to express `exp(s t M)` and pushforwards by it in
//! closed form.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::expm::mat_exp;
use crate::linalg::RealMatrix;
use crate::polyfield::Coeff;
use crate::timexpr::TimeExpr;

/// Rates closer than this are merged.
const RATE_MERGE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct ExpTerm {
    pub rate: Complex64,
    pub power: u32,
    pub coeff: Complex64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExpPoly {
    terms: Vec<ExpTerm>,
}

fn same_rate(a: Complex64, b: Complex64) -> bool {
    (a - b).norm() <= RATE_MERGE * (1.0 + a.norm())
}

impl ExpPoly {
    pub fn term(rate: Complex64, power: u32, coeff: Complex64) -> Self {
        let mut p = ExpPoly::default();
        p.push(ExpTerm { rate, power, coeff });
        p
    }

    pub fn terms(&self) -> &[ExpTerm] {
        &self.terms
    }

    fn push(&mut self, term: ExpTerm) {
        if term.coeff == Complex64::new(0.0, 0.0) {
            return;
        }
        match self
            .terms
            .iter_mut()
            .find(|t| t.power == term.power && same_rate(t.rate, term.rate))
        {
            Some(t) => t.coeff += term.coeff,
            None => self.terms.push(term),
        }
        self.terms.retain(|t| t.coeff != Complex64::new(0.0, 0.0));
    }

    /// Real part of the value at `t`.
    pub fn eval(&self, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|term| (term.coeff * t.powi(term.power as i32) * (term.rate * t).exp()).re)
            .sum()
    }

    pub fn max_coeff(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coeff.norm())
            .fold(0.0, f64::max)
    }

    /// Real-valued expression for the real part, dropping terms whose
    /// coefficients are at most `prune` in magnitude.
    pub fn to_expr(&self, prune: f64) -> TimeExpr {
        // Group conjugate rates: (a, b >= 0, power) -> (cos coefficient, sin coefficient).
        let mut groups: Vec<(f64, f64, u32, f64, f64)> = Vec::new();
        for term in &self.terms {
            let (a, b) = (term.rate.re, term.rate.im);
            let (c, s) = if b >= 0.0 {
                (term.coeff.re, -term.coeff.im)
            } else {
                (term.coeff.re, term.coeff.im)
            };
            let b = b.abs();
            match groups.iter_mut().find(|g| {
                g.2 == term.power && same_rate(Complex64::new(g.0, g.1), Complex64::new(a, b))
            }) {
                Some(g) => {
                    g.3 += c;
                    g.4 += s;
                }
                None => groups.push((a, b, term.power, c, s)),
            }
        }
        groups.sort_by(|x, y| {
            (x.2, x.0, x.1)
                .partial_cmp(&(y.2, y.0, y.1))
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut out = TimeExpr::zero();
        for (a, b, k, c, s) in groups {
            let b = if b <= RATE_MERGE * (1.0 + a.abs()) {
                0.0
            } else {
                b
            };
            let mut base = TimeExpr::t().powi(k);
            if a != 0.0 {
                base = base.mul(&rate_times_t(a).exp());
            }
            let mut add = |coef: f64, osc: Option<TimeExpr>| {
                if coef.abs() <= prune {
                    return;
                }
                let body = match osc {
                    Some(o) => base.mul(&o),
                    None => base.clone(),
                };
                let coef = snap(coef);
                let term = if coef == 1.0 {
                    body
                } else if coef == -1.0 {
                    body.neg()
                } else {
                    TimeExpr::num(coef).mul(&body)
                };
                out = if out.is_zero_literal() {
                    term
                } else {
                    out.add(&term)
                };
            };
            if b == 0.0 {
                add(c, None);
            } else {
                add(c, Some(rate_times_t(b).cos()));
                add(s, Some(rate_times_t(b).sin()));
            }
        }
        out
    }
}

/// Rounds values within a few ulps of an integer.
fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-13 * x.abs().max(1.0) {
        r
    } else {
        x
    }
}

fn rate_times_t(a: f64) -> TimeExpr {
    let a = snap(a);
    if a == 1.0 {
        TimeExpr::t()
    } else if a == -1.0 {
        TimeExpr::t().neg()
    } else {
        TimeExpr::num(a).mul(&TimeExpr::t())
    }
}

impl Coeff for ExpPoly {
    fn zero() -> Self {
        ExpPoly::default()
    }

    fn from_f64(x: f64) -> Self {
        ExpPoly::term(Complex64::new(0.0, 0.0), 0, Complex64::new(x, 0.0))
    }

    fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for t in &other.terms {
            out.push(t.clone());
        }
        out
    }

    fn mul(&self, other: &Self) -> Self {
        let mut out = ExpPoly::default();
        for a in &self.terms {
            for b in &other.terms {
                out.push(ExpTerm {
                    rate: a.rate + b.rate,
                    power: a.power + b.power,
                    coeff: a.coeff * b.coeff,
                });
            }
        }
        out
    }

    fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
}

pub type ExpPolyMatrix = Vec<Vec<ExpPoly>>;

fn complex(m: &RealMatrix) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

fn from_complex_matrix(
    m: &DMatrix<Complex64>,
    rate: Complex64,
    power: u32,
    scale: f64,
    out: &mut ExpPolyMatrix,
) {
    for (i, row) in out.iter_mut().enumerate() {
        for (j, e) in row.iter_mut().enumerate() {
            e.push(ExpTerm {
                rate,
                power,
                coeff: m[(i, j)] * scale,
            });
        }
    }
}

/// `exp(sign * t * M)` as a matrix of exponential polynomials in `t`, when
/// `M` is diagonal, has well separated eigenvalues, or has a single
/// eigenvalue. The result is checked against [`mat_exp`] at a few times;
/// `None` means no reliable closed form was found.
pub fn exp_closed_form(m: &RealMatrix, sign: f64) -> Option<ExpPolyMatrix> {
    let n = m.nrows();
    let mut out: ExpPolyMatrix = vec![vec![ExpPoly::default(); n]; n];
    let is_diag = (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] == 0.0));
    if is_diag {
        for (i, row) in out.iter_mut().enumerate() {
            row[i] = ExpPoly::term(
                Complex64::new(sign * m[(i, i)], 0.0),
                0,
                Complex64::new(1.0, 0.0),
            );
        }
        return Some(out);
    }

    let eig: Vec<Complex64> = m.clone().complex_eigenvalues().iter().copied().collect();
    let scale = 1.0 + eig.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let mut min_gap = f64::INFINITY;
    let mut max_gap: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let g = (eig[i] - eig[j]).norm();
            min_gap = min_gap.min(g);
            max_gap = max_gap.max(g);
        }
    }
    let mc = complex(m);
    let id = DMatrix::<Complex64>::identity(n, n);
    if min_gap > 1e-3 * scale {
        // Lagrange–Sylvester: exp(tM) = sum_i exp(t l_i) prod_{j != i} (M - l_j) / (l_i - l_j).
        for i in 0..n {
            let mut p = id.clone();
            for j in 0..n {
                if j != i {
                    p = p * (&mc - &id * eig[j]) / (eig[i] - eig[j]);
                }
            }
            from_complex_matrix(&p, eig[i] * sign, 0, 1.0, &mut out);
        }
    } else if max_gap <= 1e-10 * scale {
        let lambda = eig.iter().sum::<Complex64>() / n as f64;
        if lambda.im.abs() > 1e-12 * scale {
            return None;
        }
        let lambda = lambda.re;
        let nil = m - RealMatrix::identity(n, n) * lambda;
        let mut pow = RealMatrix::identity(n, n);
        let mut fact = 1.0;
        for k in 0..n as u32 {
            if k > 0 {
                pow = &pow * &nil;
                fact *= k as f64;
            }
            from_complex_matrix(
                &complex(&pow),
                Complex64::new(sign * lambda, 0.0),
                k,
                sign.powi(k as i32) / fact,
                &mut out,
            );
        }
    } else {
        return None;
    }
    // Reject closed forms that lost accuracy to nearby eigenvalues.
    for &t in &[0.25, 0.5, 1.0] {
        let reference = mat_exp(&(m * (sign * t)));
        let err = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (out[i][j].eval(t) - reference[(i, j)]).abs())
            .fold(0.0, f64::max);
        if err > 1e-11 * (1.0 + reference.norm()) {
            return None;
        }
    }
    Some(out)
}
