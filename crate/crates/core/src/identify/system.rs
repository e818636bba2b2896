use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::linalg::RealMatrix;
use crate::odeint::VectorField;
use crate::polyfield::{degree, MultiIndex, PolyField};
use crate::timexpr::{Tape, TimeExpr};

/// Polynomial right-hand side `c(t) + C(t) x + sum_j q_j(t, x)` with
/// closed-form time-dependent coefficients.
#[derive(Clone, Debug)]
pub struct NonAutoSystem {
    dim: usize,
    constant: Vec<TimeExpr>,
    linear: Vec<Vec<TimeExpr>>,
    higher: BTreeMap<(usize, MultiIndex), TimeExpr>,
    // constant, linear (row-major), then higher in key order
    tape: Arc<Tape>,
}

/// Coefficient tables of a [`NonAutoSystem`] at one time.
#[derive(Clone, Debug)]
pub struct Coefficients {
    pub c: Vec<f64>,
    pub cmat: RealMatrix,
    /// Parts of degree two and higher.
    pub q: PolyField,
}

impl NonAutoSystem {
    /// Builds a system from `(component, exponents, coefficient)` terms of any
    /// degree. Repeated keys are summed; literal zeros are dropped.
    pub fn from_terms<I>(dim: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, MultiIndex, TimeExpr)>,
    {
        if dim == 0 {
            return Err(Error::invalid("system dimension must be positive"));
        }
        let mut constant = vec![TimeExpr::zero(); dim];
        let mut linear = vec![vec![TimeExpr::zero(); dim]; dim];
        let mut higher: BTreeMap<(usize, MultiIndex), TimeExpr> = BTreeMap::new();
        for (comp, alpha, c) in terms {
            if comp >= dim {
                return Err(Error::invalid(format!(
                    "component {comp} out of range for dim {dim}"
                )));
            }
            check_dim(dim, alpha.len())?;
            match degree(&alpha) {
                0 => constant[comp] = constant[comp].add(&c),
                1 => {
                    let j = alpha.iter().position(|&k| k == 1).expect("degree one");
                    linear[comp][j] = linear[comp][j].add(&c);
                }
                _ => {
                    let slot = higher.entry((comp, alpha)).or_insert_with(TimeExpr::zero);
                    *slot = slot.add(&c);
                }
            }
        }
        Self::new(constant, linear, higher)
    }

    pub fn new(
        constant: Vec<TimeExpr>,
        linear: Vec<Vec<TimeExpr>>,
        mut higher: BTreeMap<(usize, MultiIndex), TimeExpr>,
    ) -> Result<Self> {
        let dim = constant.len();
        if dim == 0 {
            return Err(Error::invalid("system dimension must be positive"));
        }
        check_dim(dim, linear.len())?;
        for row in &linear {
            check_dim(dim, row.len())?;
        }
        for (comp, alpha) in higher.keys() {
            if *comp >= dim {
                return Err(Error::invalid(format!(
                    "component {comp} out of range for dim {dim}"
                )));
            }
            check_dim(dim, alpha.len())?;
            if degree(alpha) < 2 {
                return Err(Error::invalid(
                    "higher-order terms must have total degree at least 2",
                ));
            }
        }
        higher.retain(|_, v| !v.is_zero_literal());
        let exprs: Vec<TimeExpr> = constant
            .iter()
            .cloned()
            .chain(linear.iter().flatten().cloned())
            .chain(higher.values().cloned())
            .collect();
        let tape = Arc::new(Tape::compile(&exprs));
        Ok(NonAutoSystem {
            dim,
            constant,
            linear,
            higher,
            tape,
        })
    }

    /// The autonomous field viewed as a system with constant coefficients.
    pub fn from_field(f: &PolyField) -> Self {
        Self::from_terms(
            f.dim(),
            f.terms().map(|(c, a, v)| (c, a.clone(), TimeExpr::num(v))),
        )
        .expect("field terms are valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constant(&self) -> &[TimeExpr] {
        &self.constant
    }

    pub fn linear(&self) -> &[Vec<TimeExpr>] {
        &self.linear
    }

    pub fn higher(&self) -> &BTreeMap<(usize, MultiIndex), TimeExpr> {
        &self.higher
    }

    /// All terms, constant and linear parts included, skipping literal zeros.
    pub fn terms(&self) -> Vec<(usize, MultiIndex, TimeExpr)> {
        let n = self.dim;
        let mut out = Vec::new();
        for (i, c) in self.constant.iter().enumerate() {
            if !c.is_zero_literal() {
                out.push((i, vec![0; n], c.clone()));
            }
        }
        for (i, row) in self.linear.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                if !c.is_zero_literal() {
                    let mut e = vec![0; n];
                    e[j] = 1;
                    out.push((i, e, c.clone()));
                }
            }
        }
        for ((i, a), c) in &self.higher {
            out.push((*i, a.clone(), c.clone()));
        }
        out.sort_by(|x, y| (x.0, &x.1).cmp(&(y.0, &y.1)));
        out
    }

    /// Degrees `>= 2` that carry at least one term.
    pub fn degrees(&self) -> BTreeSet<u32> {
        self.higher.keys().map(|(_, a)| degree(a)).collect()
    }

    pub fn max_degree(&self) -> u32 {
        self.degrees().last().copied().unwrap_or(1)
    }

    pub fn constant_is_zero(&self) -> bool {
        self.constant.iter().all(TimeExpr::is_zero_literal)
    }

    pub fn linear_is_zero(&self) -> bool {
        self.linear.iter().flatten().all(TimeExpr::is_zero_literal)
    }

    pub fn coefficients_at(&self, t: f64) -> Result<Coefficients> {
        let n = self.dim;
        let v = self.tape.eval(t)?;
        let c = v[..n].to_vec();
        let cmat = RealMatrix::from_fn(n, n, |i, j| v[n + i * n + j]);
        let q = PolyField::from_terms(
            n,
            self.higher
                .keys()
                .zip(&v[n + n * n..])
                .map(|((i, a), x)| (*i, a.clone(), *x)),
        )?;
        Ok(Coefficients { c, cmat, q })
    }

    /// The full right-hand side at a frozen time.
    pub fn frozen(&self, t: f64) -> Result<PolyField> {
        let co = self.coefficients_at(t)?;
        PolyField::constant(&co.c)
            .add(&PolyField::linear(&co.cmat))?
            .add(&co.q)
    }

    /// Evaluates every coefficient on `grid` and scans the interval spanned
    /// by `grid` and `0` for poles; fails on the first one.
    pub fn check_evaluable(&self, grid: &[f64]) -> Result<()> {
        let mut buf = vec![0.0; self.tape.outputs()];
        for &t in grid {
            self.tape.eval_into(t, &mut buf)?;
            if let Some(i) = buf.iter().position(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "coefficient {i} is not finite at t = {t}"
                )));
            }
        }
        let lo = grid.iter().copied().fold(0.0, f64::min);
        let hi = grid.iter().copied().fold(0.0, f64::max);
        if hi > lo {
            let all = self
                .constant
                .iter()
                .chain(self.linear.iter().flatten())
                .chain(self.higher.values());
            for e in all {
                if let Some(err) = e.find_pole(lo, hi, 1024) {
                    return Err(err.into());
                }
            }
        }
        Ok(())
    }
}

impl VectorField for NonAutoSystem {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.dim;
        let v = self.tape.eval(t)?;
        for i in 0..n {
            out[i] = v[i] + (0..n).map(|j| v[n + i * n + j] * x[j]).sum::<f64>();
        }
        for (((comp, alpha), _), c) in self.higher.iter().zip(&v[n + n * n..]) {
            let mut m = *c;
            for (xi, &k) in x.iter().zip(alpha) {
                if k > 0 {
                    m *= xi.powi(k as i32);
                }
            }
            out[*comp] += m;
        }
        Ok(())
    }
}
