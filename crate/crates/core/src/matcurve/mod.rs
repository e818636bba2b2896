//! Invertible matrix curves `t -> A(t)`.
//!
//! Three representations are supported: closed-form expression tables,
//! one-parameter groups `exp(s t M)`, and numerical solutions of
//! `A' = C(t) A - A B`. The block lift `[[A, 0], [A', A]]` used for second
//! order equations is available for all of them.

mod expm;
mod exppoly;

use std::sync::{Arc, RwLock};

pub use expm::mat_exp;
pub use exppoly::{exp_closed_form, ExpPoly, ExpPolyMatrix, ExpTerm};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, RealMatrix};
use crate::odeint::{solve_dense, DenseSolution, OdeOptions};
use crate::timexpr::{Tape, TimeExpr};

pub type ExprMatrix = Vec<Vec<TimeExpr>>;

/// Default validity span of curves.
pub const DEFAULT_SPAN: (f64, f64) = (0.0, 1.0);

/// Value, derivative and inverse at one time.
#[derive(Clone, Debug)]
pub struct Frame {
    pub a: RealMatrix,
    pub a_dot: RealMatrix,
    pub a_inv: RealMatrix,
}

#[derive(Clone, Debug)]
pub struct ClosedForm {
    entries: ExprMatrix,
    inverse: Option<ExprMatrix>,
    inverse_given: bool,
    d1: ExprMatrix,
    // entries, d1, d2, then inverse entries when present
    tape: Arc<Tape>,
}

impl ClosedForm {
    pub fn entries(&self) -> &ExprMatrix {
        &self.entries
    }

    pub fn derivative_entries(&self) -> &ExprMatrix {
        &self.d1
    }

    /// Symbolic inverse (supplied or derived by adjugate for `n <= 3`).
    pub fn inverse_entries(&self) -> Option<&ExprMatrix> {
        self.inverse.as_ref()
    }

    pub fn inverse_given(&self) -> bool {
        self.inverse_given
    }
}

#[derive(Debug)]
struct FlowCache {
    forward: Option<DenseSolution>,
    backward: Option<DenseSolution>,
}

/// Numerical solution of `A' = C(t) A - A B`, `A(0) = A0`, memoized as dense
/// output and extended from the nearest endpoint on demand.
#[derive(Debug)]
pub struct FlowCurve {
    n: usize,
    c: ExprMatrix,
    // C entries then their derivatives
    c_tape: Tape,
    b: RealMatrix,
    a0: RealMatrix,
    opts: OdeOptions,
    cache: RwLock<FlowCache>,
}

impl FlowCurve {
    pub fn coefficient(&self) -> &ExprMatrix {
        &self.c
    }

    pub fn parameter(&self) -> &RealMatrix {
        &self.b
    }

    pub fn initial(&self) -> &RealMatrix {
        &self.a0
    }

    fn c_at(&self, t: f64) -> Result<(RealMatrix, RealMatrix)> {
        let n = self.n;
        let v = self.c_tape.eval(t)?;
        let c = RealMatrix::from_fn(n, n, |i, j| v[i * n + j]);
        let dc = RealMatrix::from_fn(n, n, |i, j| v[n * n + i * n + j]);
        Ok((c, dc))
    }

    fn rhs(&self, t: f64, y: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.n;
        let v = self.c_tape.eval(t)?;
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += v[i * n + k] * y[k * n + j] - y[i * n + k] * self.b[(k, j)];
                }
                out[i * n + j] = s;
            }
        }
        Ok(())
    }

    fn covered(&self, t: f64) -> bool {
        let cache = self.cache.read().expect("flow cache lock poisoned");
        let sol = if t >= 0.0 {
            &cache.forward
        } else {
            &cache.backward
        };
        sol.as_ref().is_some_and(|s| s.contains(t))
    }

    /// Integrates far enough that `t` is covered.
    pub fn ensure(&self, t: f64) -> Result<()> {
        if !t.is_finite() {
            return Err(Error::invalid("non-finite time"));
        }
        if self.covered(t) {
            return Ok(());
        }
        let mut cache = self.cache.write().expect("flow cache lock poisoned");
        let slot = if t >= 0.0 {
            &mut cache.forward
        } else {
            &mut cache.backward
        };
        if slot.as_ref().is_some_and(|s| s.contains(t)) {
            return Ok(());
        }
        let (start, y0) = match slot {
            Some(s) => (s.t_end(), s.final_state().to_vec()),
            None => (0.0, self.a0.transpose().as_slice().to_vec()),
        };
        let next = solve_dense(|tt, y, out| self.rhs(tt, y, out), start, t, &y0, &self.opts)?;
        if let Some(tb) = next.blow_up {
            return Err(Error::BlowUp {
                t: tb,
                bound: self.opts.blow_up,
            });
        }
        match slot {
            Some(s) => s.append(next),
            None => *slot = Some(next),
        }
        Ok(())
    }

    fn value(&self, t: f64) -> Result<RealMatrix> {
        self.ensure(t)?;
        let cache = self.cache.read().expect("flow cache lock poisoned");
        let sol = if t >= 0.0 {
            cache.forward.as_ref()
        } else {
            cache.backward.as_ref()
        };
        let y = sol.expect("span integrated").eval(t)?;
        let n = self.n;
        Ok(RealMatrix::from_fn(n, n, |i, j| y[i * n + j]))
    }

    /// Step boundaries of the integrated span, in increasing order.
    pub fn checkpoints(&self) -> Vec<f64> {
        let cache = self.cache.read().expect("flow cache lock poisoned");
        let mut v: Vec<f64> = Vec::new();
        if let Some(b) = &cache.backward {
            v.extend(b.checkpoints());
        }
        if let Some(f) = &cache.forward {
            v.extend(f.checkpoints());
        }
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }
}

#[derive(Clone, Debug)]
pub enum CurveRepr {
    ClosedForm(ClosedForm),
    Exponential {
        generator: RealMatrix,
        sign: f64,
    },
    Flow(Arc<FlowCurve>),
    /// Block curve `[[A, 0], [A', A]]` of an inner curve.
    Lift(Box<MatrixCurve>),
}

#[derive(Clone, Debug)]
pub struct MatrixCurve {
    dim: usize,
    repr: CurveRepr,
}

fn eval_matrix(v: &[f64], offset: usize, n: usize) -> RealMatrix {
    RealMatrix::from_fn(n, n, |i, j| v[offset + i * n + j])
}

fn map_exprs(m: &ExprMatrix, f: impl Fn(&TimeExpr) -> TimeExpr) -> ExprMatrix {
    m.iter().map(|row| row.iter().map(&f).collect()).collect()
}

fn flatten(m: &ExprMatrix) -> impl Iterator<Item = TimeExpr> + '_ {
    m.iter().flat_map(|row| row.iter().cloned())
}

fn minor(m: &ExprMatrix, skip_row: usize, skip_col: usize) -> ExprMatrix {
    m.iter()
        .enumerate()
        .filter(|(i, _)| *i != skip_row)
        .map(|(_, row)| {
            row.iter()
                .enumerate()
                .filter(|(j, _)| *j != skip_col)
                .map(|(_, e)| e.clone())
                .collect()
        })
        .collect()
}

fn det_expr(m: &ExprMatrix) -> TimeExpr {
    match m.len() {
        0 => TimeExpr::one(),
        1 => m[0][0].clone(),
        2 => m[0][0].mul(&m[1][1]).sub(&m[0][1].mul(&m[1][0])),
        n => {
            let mut acc = TimeExpr::zero();
            for j in 0..n {
                let term = m[0][j].mul(&det_expr(&minor(m, 0, j)));
                acc = if j % 2 == 0 {
                    acc.add(&term)
                } else {
                    acc.sub(&term)
                };
            }
            acc
        }
    }
}

/// Symbolic inverse by adjugate over determinant.
fn adjugate_inverse(m: &ExprMatrix) -> ExprMatrix {
    let n = m.len();
    if n == 1 {
        return vec![vec![TimeExpr::one().div(&m[0][0])]];
    }
    let det = det_expr(m);
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    // inverse[i][j] = cofactor(j, i) / det
                    let c = det_expr(&minor(m, j, i));
                    let c = if (i + j) % 2 == 0 { c } else { c.neg() };
                    c.div(&det)
                })
                .collect()
        })
        .collect()
}

/// Times at which a supplied inverse is checked against the entries.
const INVERSE_CHECK_TIMES: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

impl MatrixCurve {
    pub fn identity(n: usize) -> Self {
        let entries = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            TimeExpr::one()
                        } else {
                            TimeExpr::zero()
                        }
                    })
                    .collect()
            })
            .collect();
        Self::closed_form(entries, None).expect("identity curve is valid")
    }

    /// Closed-form curve. Without a supplied inverse, one is derived
    /// symbolically for `n <= 3`; larger curves invert numerically.
    pub fn closed_form(entries: ExprMatrix, inverse: Option<ExprMatrix>) -> Result<Self> {
        let n = entries.len();
        if n == 0 {
            return Err(Error::invalid("curve dimension must be positive"));
        }
        for row in &entries {
            check_dim(n, row.len())?;
        }
        if let Some(inv) = &inverse {
            check_dim(n, inv.len())?;
            for row in inv {
                check_dim(n, row.len())?;
            }
        }
        let inverse_given = inverse.is_some();
        let inverse = inverse.or_else(|| (n <= 3).then(|| adjugate_inverse(&entries)));
        let d1 = map_exprs(&entries, TimeExpr::diff);
        let d2 = map_exprs(&d1, TimeExpr::diff);
        let mut exprs: Vec<TimeExpr> = flatten(&entries)
            .chain(flatten(&d1))
            .chain(flatten(&d2))
            .collect();
        if let Some(inv) = &inverse {
            exprs.extend(flatten(inv));
        }
        let tape = Arc::new(Tape::compile(&exprs));
        let curve = MatrixCurve {
            dim: n,
            repr: CurveRepr::ClosedForm(ClosedForm {
                entries,
                inverse,
                inverse_given,
                d1,
                tape,
            }),
        };
        curve.value(0.0)?;
        if inverse_given {
            for &t in &INVERSE_CHECK_TIMES {
                let v = curve.closed_values(t)?;
                let prod =
                    v[0].as_ref().expect("value present") * v[3].as_ref().expect("inverse present");
                let err = linalg::max_abs(&(prod - RealMatrix::identity(n, n)));
                if err > 1e-10 {
                    return Err(Error::invalid(format!(
                        "supplied inverse does not invert the entries at t = {t} (error {err:e})"
                    )));
                }
            }
        }
        Ok(curve)
    }

    /// `A(t) = exp(sign * t * M)`.
    pub fn exponential(generator: RealMatrix, sign: f64) -> Result<Self> {
        if !generator.is_square() || generator.nrows() == 0 {
            return Err(Error::invalid("generator must be a nonempty square matrix"));
        }
        if sign != 1.0 && sign != -1.0 {
            return Err(Error::invalid("exponential sign must be 1 or -1"));
        }
        if generator.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite generator entry"));
        }
        Ok(MatrixCurve {
            dim: generator.nrows(),
            repr: CurveRepr::Exponential { generator, sign },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn repr(&self) -> &CurveRepr {
        &self.repr
    }

    // [value, derivative, second derivative, symbolic inverse]
    fn closed_values(&self, t: f64) -> Result<[Option<RealMatrix>; 4]> {
        let CurveRepr::ClosedForm(cf) = &self.repr else {
            unreachable!()
        };
        let n = self.dim;
        let v = cf.tape.eval(t)?;
        let nn = n * n;
        Ok([
            Some(eval_matrix(&v, 0, n)),
            Some(eval_matrix(&v, nn, n)),
            Some(eval_matrix(&v, 2 * nn, n)),
            cf.inverse.as_ref().map(|_| eval_matrix(&v, 3 * nn, n)),
        ])
    }

    /// Value without the invertibility check.
    fn raw_value(&self, t: f64) -> Result<RealMatrix> {
        match &self.repr {
            CurveRepr::ClosedForm(_) => {
                let [v, ..] = self.closed_values(t)?;
                Ok(v.expect("value present"))
            }
            CurveRepr::Exponential { generator, sign } => Ok(mat_exp(&(generator * (sign * t)))),
            CurveRepr::Flow(flow) => flow.value(t),
            CurveRepr::Lift(inner) => {
                let a = inner.raw_value(t)?;
                let ad = inner.raw_derivative(t, &a)?;
                Ok(block_lower(&a, &ad, &a))
            }
        }
    }

    fn raw_derivative(&self, t: f64, a: &RealMatrix) -> Result<RealMatrix> {
        match &self.repr {
            CurveRepr::ClosedForm(_) => {
                let [_, d, ..] = self.closed_values(t)?;
                Ok(d.expect("derivative present"))
            }
            CurveRepr::Exponential { generator, sign } => Ok(generator * a * *sign),
            CurveRepr::Flow(flow) => {
                let (c, _) = flow.c_at(t)?;
                Ok(&c * a - a * &flow.b)
            }
            CurveRepr::Lift(inner) => {
                let n = inner.dim;
                let ai = a.view((0, 0), (n, n)).into_owned();
                let ad = inner.raw_derivative(t, &ai)?;
                let add = inner.second_derivative(t)?;
                Ok(block_lower(&ad, &add, &ad))
            }
        }
    }

    pub fn value(&self, t: f64) -> Result<RealMatrix> {
        let a = self.raw_value(t)?;
        linalg::check_invertible(&a)?;
        Ok(a)
    }

    pub fn derivative(&self, t: f64) -> Result<RealMatrix> {
        let a = self.value(t)?;
        self.raw_derivative(t, &a)
    }

    pub fn inverse(&self, t: f64) -> Result<RealMatrix> {
        Ok(self.frame(t)?.a_inv)
    }

    /// Value, derivative and inverse at `t`, with one invertibility check.
    pub fn frame(&self, t: f64) -> Result<Frame> {
        match &self.repr {
            CurveRepr::ClosedForm(_) => {
                let [a, d, _, inv] = self.closed_values(t)?;
                let a = a.expect("value present");
                linalg::check_invertible(&a)?;
                let a_inv = match inv {
                    Some(inv) => inv,
                    None => linalg::inverse(&a)?,
                };
                Ok(Frame {
                    a,
                    a_dot: d.expect("derivative present"),
                    a_inv,
                })
            }
            CurveRepr::Exponential { generator, sign } => {
                let a = mat_exp(&(generator * (sign * t)));
                linalg::check_invertible(&a)?;
                let a_inv = mat_exp(&(generator * (-sign * t)));
                let a_dot = generator * &a * *sign;
                Ok(Frame { a, a_dot, a_inv })
            }
            CurveRepr::Flow(_) => {
                let a = self.value(t)?;
                let a_dot = self.raw_derivative(t, &a)?;
                let a_inv = linalg::inverse(&a)?;
                Ok(Frame { a, a_dot, a_inv })
            }
            CurveRepr::Lift(inner) => {
                let f = inner.frame(t)?;
                let add = inner.second_derivative(t)?;
                let corner = -(&f.a_inv * &f.a_dot * &f.a_inv);
                Ok(Frame {
                    a: block_lower(&f.a, &f.a_dot, &f.a),
                    a_dot: block_lower(&f.a_dot, &add, &f.a_dot),
                    a_inv: block_lower(&f.a_inv, &corner, &f.a_inv),
                })
            }
        }
    }

    /// `A''(t)`. Lifted curves do not provide it.
    pub fn second_derivative(&self, t: f64) -> Result<RealMatrix> {
        match &self.repr {
            CurveRepr::ClosedForm(_) => {
                let [_, _, d2, _] = self.closed_values(t)?;
                Ok(d2.expect("second derivative present"))
            }
            CurveRepr::Exponential { generator, sign } => {
                let a = mat_exp(&(generator * (sign * t)));
                Ok(generator * generator * a)
            }
            CurveRepr::Flow(flow) => {
                let a = flow.value(t)?;
                let (c, dc) = flow.c_at(t)?;
                let ad = &c * &a - &a * &flow.b;
                Ok(dc * &a + &c * &ad - ad * &flow.b)
            }
            CurveRepr::Lift(_) => Err(Error::Unsupported(
                "second derivative of a lifted curve".into(),
            )),
        }
    }

    /// Pre-integrates a flow curve over `[t0, t1]`; no-op for other curves.
    pub fn prepare(&self, t0: f64, t1: f64) -> Result<()> {
        match &self.repr {
            CurveRepr::Flow(flow) => {
                flow.ensure(t0)?;
                flow.ensure(t1)
            }
            CurveRepr::Lift(inner) => inner.prepare(t0, t1),
            _ => Ok(()),
        }
    }

    /// Symbolic entries and inverse when both are available.
    pub fn symbolic(&self) -> Option<(&ExprMatrix, &ExprMatrix, &ExprMatrix)> {
        match &self.repr {
            CurveRepr::ClosedForm(cf) => cf.inverse.as_ref().map(|inv| (&cf.entries, inv, &cf.d1)),
            _ => None,
        }
    }
}

fn block_lower(a: &RealMatrix, c: &RealMatrix, d: &RealMatrix) -> RealMatrix {
    let n = a.nrows();
    let mut m = RealMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(a);
    m.view_mut((n, 0), (n, n)).copy_from(c);
    m.view_mut((n, n), (n, n)).copy_from(d);
    m
}

/// Solves `A' = C(t) A - A B`, `A(0) = A0` over `t_span` with absolute and
/// relative tolerance `tol`, and checks invertibility at every step boundary.
/// Sample count for the pole scan of `C` entries before integration.
const POLE_SCAN_SAMPLES: usize = 4096;

pub fn solve_gauge_ode(
    c: ExprMatrix,
    b: &RealMatrix,
    a0: &RealMatrix,
    t_span: (f64, f64),
    tol: f64,
) -> Result<MatrixCurve> {
    let n = a0.nrows();
    if n == 0 || !a0.is_square() {
        return Err(Error::invalid(
            "initial value must be a nonempty square matrix",
        ));
    }
    check_dim(n, c.len())?;
    for row in &c {
        check_dim(n, row.len())?;
    }
    check_dim(n, b.nrows())?;
    check_dim(n, b.ncols())?;
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    linalg::check_invertible(a0)?;
    let (lo, hi) = (t_span.0.min(0.0), t_span.1.max(0.0));
    for e in c.iter().flatten() {
        if let Some(err) = e.find_pole(lo, hi, POLE_SCAN_SAMPLES) {
            return Err(err.into());
        }
    }
    let dc = map_exprs(&c, TimeExpr::diff);
    let exprs: Vec<TimeExpr> = flatten(&c).chain(flatten(&dc)).collect();
    let flow = FlowCurve {
        n,
        c_tape: Tape::compile(&exprs),
        c,
        b: b.clone(),
        a0: a0.clone(),
        opts: OdeOptions::with_tol(tol),
        cache: RwLock::new(FlowCache {
            forward: None,
            backward: None,
        }),
    };
    let curve = MatrixCurve {
        dim: n,
        repr: CurveRepr::Flow(Arc::new(flow)),
    };
    curve.prepare(t_span.0.min(0.0), t_span.1.max(0.0))?;
    if let CurveRepr::Flow(flow) = &curve.repr {
        for t in flow.checkpoints() {
            curve.value(t)?;
        }
    }
    Ok(curve)
}

/// Block curve `[[A, 0], [A', A]]` carrying `(z, z')` to `(w, w')`.
pub fn second_order_lift(a: &MatrixCurve) -> Result<MatrixCurve> {
    match &a.repr {
        CurveRepr::ClosedForm(cf) => {
            let n = a.dim;
            let zero = TimeExpr::zero();
            let block = |tl: &ExprMatrix, bl: &ExprMatrix, br: &ExprMatrix| -> ExprMatrix {
                (0..2 * n)
                    .map(|i| {
                        (0..2 * n)
                            .map(|j| match (i < n, j < n) {
                                (true, true) => tl[i][j].clone(),
                                (true, false) => zero.clone(),
                                (false, true) => bl[i - n][j].clone(),
                                (false, false) => br[i - n][j - n].clone(),
                            })
                            .collect()
                    })
                    .collect()
            };
            let entries = block(&cf.entries, &cf.d1, &cf.entries);
            let inverse = cf.inverse.as_ref().map(|inv| {
                // lower-left block of the inverse: -A^{-1} A' A^{-1}
                let prod = |x: &ExprMatrix, y: &ExprMatrix| -> ExprMatrix {
                    (0..n)
                        .map(|i| {
                            (0..n)
                                .map(|j| {
                                    (0..n).fold(TimeExpr::zero(), |acc, k| {
                                        acc.add(&x[i][k].mul(&y[k][j]))
                                    })
                                })
                                .collect()
                        })
                        .collect()
                };
                let corner = map_exprs(&prod(&prod(inv, &cf.d1), inv), TimeExpr::neg);
                block(inv, &corner, inv)
            });
            match inverse {
                Some(inv) => MatrixCurve::closed_form(entries, Some(inv)),
                None => Ok(MatrixCurve {
                    dim: 2 * n,
                    repr: CurveRepr::Lift(Box::new(a.clone())),
                }),
            }
        }
        CurveRepr::Lift(_) => Err(Error::Unsupported("lift of a lifted curve".into())),
        _ => Ok(MatrixCurve {
            dim: 2 * a.dim,
            repr: CurveRepr::Lift(Box::new(a.clone())),
        }),
    }
}
