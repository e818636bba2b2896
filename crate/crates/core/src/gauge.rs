//! Gauge transforms `f*(t, y) = A' A^{-1} y + A f(A^{-1} y)` of autonomous
//! polynomial fields, and the induced action on solutions, point maps and
//! symmetries.

use std::collections::BTreeMap;

use crate::error::{check_dim, Error, Result};
use crate::identify::NonAutoSystem;
use crate::linalg::{mat_vec, norm2, RealMatrix};
use crate::matcurve::{exp_closed_form, CurveRepr, ExpPoly, MatrixCurve};
use crate::odeint::{integrate_dense, OdeOptions, Trajectory, VectorField};
use crate::polyfield::{pushforward_with, Coeff, MultiIndex, PolyField};
use crate::timexpr::TimeExpr;

/// Right-hand side of a gauge transform, evaluated from the curve frame at
/// each time, with a closed-form realization when one exists.
#[derive(Clone, Debug)]
pub struct NonAutoEvaluator {
    f: PolyField,
    curve: MatrixCurve,
    closed: Option<NonAutoSystem>,
}

impl NonAutoEvaluator {
    pub fn field(&self) -> &PolyField {
        &self.f
    }

    pub fn curve(&self) -> &MatrixCurve {
        &self.curve
    }

    /// Closed-form system, available for closed-form curves with a symbolic
    /// inverse and for exponential curves whose generator has a closed form.
    pub fn closed_form(&self) -> Option<&NonAutoSystem> {
        self.closed.as_ref()
    }

    /// `f*(t, y)` from the defining formula.
    pub fn eval_direct(&self, t: f64, y: &[f64]) -> Result<Vec<f64>> {
        self.eval_at(t, y)
    }

    /// `f*(t, .)` as a polynomial field at a frozen time.
    pub fn frozen(&self, t: f64) -> Result<PolyField> {
        let fr = self.curve.frame(t)?;
        let lin = PolyField::linear(&(&fr.a_dot * &fr.a_inv));
        lin.add(&self.f.pushforward_pair(&fr.a, &fr.a_inv))
    }

    pub fn sample(&self, times: &[f64]) -> Result<SampledSystem> {
        let fields = times
            .iter()
            .map(|&t| self.frozen(t))
            .collect::<Result<Vec<_>>>()?;
        Ok(SampledSystem {
            dim: self.f.dim(),
            t: times.to_vec(),
            fields,
        })
    }
}

impl VectorField for NonAutoEvaluator {
    fn dim(&self) -> usize {
        self.f.dim()
    }

    fn eval_into(&self, t: f64, y: &[f64], out: &mut [f64]) -> Result<()> {
        let fr = self.curve.frame(t)?;
        let u = mat_vec(&fr.a_inv, y);
        let fu = self.f.eval(&u)?;
        let lin = mat_vec(&fr.a_dot, &u);
        let nonlin = mat_vec(&fr.a, &fu);
        for ((o, l), q) in out.iter_mut().zip(lin).zip(nonlin) {
            *o = l + q;
        }
        Ok(())
    }
}

/// Coefficient tables of a nonautonomous polynomial system at sample times.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledSystem {
    pub dim: usize,
    pub t: Vec<f64>,
    pub fields: Vec<PolyField>,
}

fn to_table<R: Clone>(m: &[Vec<R>]) -> Vec<Vec<R>> {
    m.to_vec()
}

fn expr_matmul(a: &[Vec<TimeExpr>], b: &[Vec<TimeExpr>]) -> Vec<Vec<TimeExpr>> {
    let n = a.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..n).fold(TimeExpr::zero(), |acc, k| acc.add(&a[i][k].mul(&b[k][j]))))
                .collect()
        })
        .collect()
}

fn closed_system(f: &PolyField, curve: &MatrixCurve) -> Result<Option<NonAutoSystem>> {
    let n = f.dim();
    match curve.repr() {
        CurveRepr::ClosedForm(_) => {
            let Some((entries, inverse, d1)) = curve.symbolic() else {
                return Ok(None);
            };
            let mut map = pushforward_with(f, &to_table(entries), &to_table(inverse));
            let lin = expr_matmul(d1, inverse);
            for (i, row) in lin.into_iter().enumerate() {
                for (j, c) in row.into_iter().enumerate() {
                    if c.is_zero_literal() {
                        continue;
                    }
                    let mut e = vec![0; n];
                    e[j] = 1;
                    let slot = map.entry((i, e)).or_insert_with(TimeExpr::zero);
                    *slot = slot.add(&c);
                }
            }
            Ok(Some(NonAutoSystem::from_terms(
                n,
                map.into_iter().map(|((i, a), c)| (i, a, c)),
            )?))
        }
        CurveRepr::Exponential { generator, sign } => {
            let (Some(a), Some(a_inv)) = (
                exp_closed_form(generator, *sign),
                exp_closed_form(generator, -*sign),
            ) else {
                return Ok(None);
            };
            let mut map: BTreeMap<(usize, MultiIndex), ExpPoly> = pushforward_with(f, &a, &a_inv);
            for i in 0..n {
                for j in 0..n {
                    let v = sign * generator[(i, j)];
                    if v == 0.0 {
                        continue;
                    }
                    let mut e = vec![0; n];
                    e[j] = 1;
                    let slot = map.entry((i, e)).or_insert_with(ExpPoly::zero);
                    *slot = slot.add(&ExpPoly::from_f64(v));
                }
            }
            let scale = map.values().map(ExpPoly::max_coeff).fold(1.0, f64::max);
            let prune = 1e-13 * scale;
            let terms = map
                .into_iter()
                .map(|((i, a), c)| (i, a, c.to_expr(prune)))
                .filter(|(_, _, c)| !c.is_zero_literal());
            let sys = NonAutoSystem::from_terms(n, terms)?;
            Ok(if closed_form_is_accurate(f, curve, &sys)? {
                Some(sys)
            } else {
                None
            })
        }
        CurveRepr::Flow(_) | CurveRepr::Lift(_) => Ok(None),
    }
}

/// Sample times for accepting an exponential-polynomial closed form.
const CLOSED_FORM_CHECK_TIMES: [f64; 9] = [-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0];

/// Nearly coincident eigenvalues give large exp-polynomial coefficients that
/// cancel; such closed forms are rejected.
fn closed_form_is_accurate(
    f: &PolyField,
    curve: &MatrixCurve,
    sys: &NonAutoSystem,
) -> Result<bool> {
    for &t in &CLOSED_FORM_CHECK_TIMES {
        let fr = curve.frame(t)?;
        let direct = PolyField::linear(&(&fr.a_dot * &fr.a_inv))
            .add(&f.pushforward_pair(&fr.a, &fr.a_inv))?;
        let Ok(closed) = sys.frozen(t) else {
            return Ok(false);
        };
        if closed.max_coeff_diff(&direct) > 1e-12 * (1.0 + direct.max_abs_coeff()) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// The gauge transform of `f` by `a`.
pub fn gauge_transform(f: &PolyField, a: &MatrixCurve) -> Result<NonAutoEvaluator> {
    check_dim(f.dim(), a.dim())?;
    let closed = closed_system(f, a)?;
    Ok(NonAutoEvaluator {
        f: f.clone(),
        curve: a.clone(),
        closed,
    })
}

/// `w(t_i) = A(t_i) z(t_i)`.
pub fn transform_solution(z: &Trajectory, a: &MatrixCurve) -> Result<Trajectory> {
    let mut x = Vec::with_capacity(z.len());
    for (t, zi) in z.t.iter().zip(&z.x) {
        check_dim(a.dim(), zi.len())?;
        x.push(mat_vec(&a.value(*t)?, zi));
    }
    Ok(Trajectory {
        t: z.t.clone(),
        x,
        rtol: z.rtol,
        atol: z.atol,
        blow_up: z.blow_up,
    })
}

/// Point maps the conjugation acts on.
#[derive(Clone, Debug)]
pub enum PointMap {
    Linear(RealMatrix),
    Polynomial(PolyField),
    /// Time-`s` flow of a polynomial field.
    Flow {
        field: PolyField,
        s: f64,
    },
}

impl PointMap {
    pub fn identity(n: usize) -> Self {
        PointMap::Linear(RealMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        match self {
            PointMap::Linear(m) => m.nrows(),
            PointMap::Polynomial(p) => p.dim(),
            PointMap::Flow { field, .. } => field.dim(),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        match self {
            PointMap::Linear(m) => Ok(mat_vec(m, x)),
            PointMap::Polynomial(p) => p.eval(x),
            PointMap::Flow { field, s } => {
                let opts = OdeOptions::with_tol(1e-12);
                let sol = integrate_dense(field, x, 0.0, *s, &opts)?;
                if let Some(t) = sol.blow_up {
                    return Err(Error::BlowUp {
                        t,
                        bound: opts.blow_up,
                    });
                }
                Ok(sol.final_state().to_vec())
            }
        }
    }
}

/// `x -> A(t) Phi(A(t)^{-1} x)`, expressed in the same family as `Phi`.
pub fn conjugate_map(phi: &PointMap, a: &MatrixCurve, t: f64) -> Result<PointMap> {
    check_dim(a.dim(), phi.dim())?;
    let fr = a.frame(t)?;
    Ok(match phi {
        PointMap::Linear(m) => PointMap::Linear(&fr.a * m * &fr.a_inv),
        PointMap::Polynomial(p) => PointMap::Polynomial(p.pushforward_pair(&fr.a, &fr.a_inv)),
        PointMap::Flow { field, s } => PointMap::Flow {
            field: field.pushforward_pair(&fr.a, &fr.a_inv),
            s: *s,
        },
    })
}

/// `h^(t, x) = A(t) h(A(t)^{-1} x)` at a frozen time.
pub fn hat_transform(h: &PolyField, a: &MatrixCurve, t: f64) -> Result<PolyField> {
    check_dim(a.dim(), h.dim())?;
    let fr = a.frame(t)?;
    Ok(h.pushforward_pair(&fr.a, &fr.a_inv))
}

#[derive(Clone, Copy, Debug)]
pub struct MixedBracketResidual {
    /// `|[h^, f*]_x - D_t h^ - hat([h, f])|` at the point.
    pub residual: f64,
    /// Largest norm among the three terms.
    pub scale: f64,
}

/// Checks `[h^, f*]_x = D_t h^ + hat([h, f])` at `(t, x)`, with `D_t h^`
/// taken from `A' h(y) - A Dh(y) A^{-1} A' A^{-1} x`, `y = A^{-1} x`.
pub fn mixed_bracket_residual(
    h: &PolyField,
    f: &PolyField,
    a: &MatrixCurve,
    t: f64,
    x: &[f64],
) -> Result<MixedBracketResidual> {
    check_dim(h.dim(), f.dim())?;
    check_dim(h.dim(), a.dim())?;
    check_dim(h.dim(), x.len())?;
    let fr = a.frame(t)?;
    let h_hat = h.pushforward_pair(&fr.a, &fr.a_inv);
    let f_star =
        PolyField::linear(&(&fr.a_dot * &fr.a_inv)).add(&f.pushforward_pair(&fr.a, &fr.a_inv))?;
    let lhs = h_hat.lie_bracket(&f_star)?.eval(x)?;

    let y = mat_vec(&fr.a_inv, x);
    let w = mat_vec(&(&fr.a_inv * &fr.a_dot * &fr.a_inv), x);
    let dh_w = mat_vec(&h.jacobian(&y)?, &w);
    let dt_hat: Vec<f64> = mat_vec(&fr.a_dot, &h.eval(&y)?)
        .into_iter()
        .zip(mat_vec(&fr.a, &dh_w))
        .map(|(p, q)| p - q)
        .collect();

    let rhs2 = h
        .lie_bracket(f)?
        .pushforward_pair(&fr.a, &fr.a_inv)
        .eval(x)?;
    let diff: Vec<f64> = (0..x.len()).map(|i| lhs[i] - dt_hat[i] - rhs2[i]).collect();
    Ok(MixedBracketResidual {
        residual: norm2(&diff),
        scale: norm2(&lhs).max(norm2(&dt_hat)).max(norm2(&rhs2)),
    })
}
