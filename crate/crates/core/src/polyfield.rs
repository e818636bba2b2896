//! Autonomous polynomial vector fields stored as sparse coefficient tables.
//!
//! A field on `R^n` is a map `(component, multi-index) -> coefficient`.
//! The Lie bracket follows the convention `[f, g](x) = Dg(x) f(x) - Df(x) g(x)`,
//! so that for a linear field `B` and a field `p`,
//! `[B, p](x) = Dp(x) B x - B p(x)`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, RealMatrix};
use crate::timexpr::TimeExpr;

pub type MultiIndex = Vec<u32>;

/// Degree cap for fields read from files and produced by brackets.
pub const DEFAULT_MAX_DEGREE: u32 = 6;

pub fn degree(alpha: &[u32]) -> u32 {
    alpha.iter().sum()
}

/// Coefficient rings a field can be pushed forward over.
pub trait Coeff: Clone {
    fn zero() -> Self;
    fn from_f64(x: f64) -> Self;
    fn add(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn is_zero(&self) -> bool;
}

impl Coeff for f64 {
    fn zero() -> Self {
        0.0
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
}

impl Coeff for TimeExpr {
    fn zero() -> Self {
        TimeExpr::zero()
    }
    fn from_f64(x: f64) -> Self {
        TimeExpr::num(x)
    }
    fn add(&self, other: &Self) -> Self {
        TimeExpr::add(self, other)
    }
    fn mul(&self, other: &Self) -> Self {
        TimeExpr::mul(self, other)
    }
    fn is_zero(&self) -> bool {
        self.is_zero_literal()
    }
}

type ScalarPoly<R> = BTreeMap<MultiIndex, R>;

fn poly_mul<R: Coeff>(p: &ScalarPoly<R>, q: &ScalarPoly<R>) -> ScalarPoly<R> {
    let mut out: ScalarPoly<R> = BTreeMap::new();
    for (m1, c1) in p {
        for (m2, c2) in q {
            let key: MultiIndex = m1.iter().zip(m2).map(|(a, b)| a + b).collect();
            let prod = c1.mul(c2);
            if prod.is_zero() {
                continue;
            }
            match out.get_mut(&key) {
                Some(acc) => *acc = acc.add(&prod),
                None => {
                    out.insert(key, prod);
                }
            }
        }
    }
    out
}

/// Coefficients of `x -> A f(A_inv x)` over an arbitrary coefficient ring.
/// `a` and `a_inv` are row-major `n x n` tables.
pub fn pushforward_with<R: Coeff>(
    f: &PolyField,
    a: &[Vec<R>],
    a_inv: &[Vec<R>],
) -> BTreeMap<(usize, MultiIndex), R> {
    let n = f.dim;
    let linear_forms: Vec<ScalarPoly<R>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| !a_inv[i][j].is_zero())
                .map(|j| {
                    let mut e = vec![0; n];
                    e[j] = 1;
                    (e, a_inv[i][j].clone())
                })
                .collect()
        })
        .collect();

    let mut powers: HashMap<(usize, u32), ScalarPoly<R>> = HashMap::new();
    let mut power = |i: usize, k: u32| -> ScalarPoly<R> {
        if let Some(p) = powers.get(&(i, k)) {
            return p.clone();
        }
        let mut p: ScalarPoly<R> = BTreeMap::from([(vec![0; n], R::from_f64(1.0))]);
        for _ in 0..k {
            p = poly_mul(&p, &linear_forms[i]);
        }
        powers.insert((i, k), p.clone());
        p
    };

    let mut expanded: HashMap<MultiIndex, ScalarPoly<R>> = HashMap::new();
    let mut out: BTreeMap<(usize, MultiIndex), R> = BTreeMap::new();
    for ((comp, alpha), &c) in &f.terms {
        if !expanded.contains_key(alpha) {
            let mut p: ScalarPoly<R> = BTreeMap::from([(vec![0; n], R::from_f64(1.0))]);
            for (i, &k) in alpha.iter().enumerate() {
                if k > 0 {
                    p = poly_mul(&p, &power(i, k));
                }
            }
            expanded.insert(alpha.clone(), p);
        }
        let p = &expanded[alpha];
        let c = R::from_f64(c);
        for (r, row) in a.iter().enumerate() {
            let arc = &row[*comp];
            if arc.is_zero() {
                continue;
            }
            let factor = arc.mul(&c);
            for (beta, v) in p {
                let term = factor.mul(v);
                if term.is_zero() {
                    continue;
                }
                match out.get_mut(&(r, beta.clone())) {
                    Some(acc) => *acc = acc.add(&term),
                    None => {
                        out.insert((r, beta.clone()), term);
                    }
                }
            }
        }
    }
    out.retain(|_, v| !v.is_zero());
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolyField {
    dim: usize,
    terms: BTreeMap<(usize, MultiIndex), f64>,
}

impl PolyField {
    /// The zero field on `R^dim`.
    pub fn new(dim: usize) -> Self {
        PolyField {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn from_terms<I>(dim: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, MultiIndex, f64)>,
    {
        if dim == 0 {
            return Err(Error::invalid("field dimension must be positive"));
        }
        let mut f = PolyField::new(dim);
        for (comp, alpha, c) in terms {
            if comp >= dim {
                return Err(Error::invalid(format!(
                    "component {comp} out of range for dim {dim}"
                )));
            }
            check_dim(dim, alpha.len())?;
            if !c.is_finite() {
                return Err(Error::invalid("non-finite coefficient"));
            }
            f.add_term(comp, alpha, c);
        }
        Ok(f)
    }

    pub fn constant(b: &[f64]) -> Self {
        let n = b.len();
        let mut f = PolyField::new(n);
        for (i, &v) in b.iter().enumerate() {
            f.add_term(i, vec![0; n], v);
        }
        f
    }

    /// The linear field `x -> M x`.
    pub fn linear(m: &RealMatrix) -> Self {
        let n = m.nrows();
        let mut f = PolyField::new(n);
        for i in 0..n {
            for j in 0..n {
                let mut e = vec![0; n];
                e[j] = 1;
                f.add_term(i, e, m[(i, j)]);
            }
        }
        f
    }

    pub(crate) fn from_map(dim: usize, mut terms: BTreeMap<(usize, MultiIndex), f64>) -> Self {
        terms.retain(|_, v| *v != 0.0);
        PolyField { dim, terms }
    }

    /// Adds `c x^alpha` to component `comp`; exact zeros are never stored.
    pub fn add_term(&mut self, comp: usize, alpha: MultiIndex, c: f64) {
        debug_assert_eq!(alpha.len(), self.dim);
        let key = (comp, alpha);
        let v = self.terms.get(&key).copied().unwrap_or(0.0) + c;
        if v == 0.0 {
            self.terms.remove(&key);
        } else {
            self.terms.insert(key, v);
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (usize, &MultiIndex, f64)> + '_ {
        self.terms.iter().map(|((c, a), v)| (*c, a, *v))
    }

    pub fn coeff(&self, comp: usize, alpha: &[u32]) -> f64 {
        self.terms
            .get(&(comp, alpha.to_vec()))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn max_degree(&self) -> Option<u32> {
        self.terms.keys().map(|(_, a)| degree(a)).max()
    }

    pub fn degrees(&self) -> BTreeSet<u32> {
        self.terms.keys().map(|(_, a)| degree(a)).collect()
    }

    /// Homogeneous part of total degree `j`.
    pub fn grade(&self, j: u32) -> PolyField {
        PolyField {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .filter(|((_, a), _)| degree(a) == j)
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
        }
    }

    pub fn constant_part(&self) -> Vec<f64> {
        let zero = vec![0; self.dim];
        (0..self.dim).map(|i| self.coeff(i, &zero)).collect()
    }

    pub fn linear_part(&self) -> RealMatrix {
        let n = self.dim;
        RealMatrix::from_fn(n, n, |i, j| {
            let mut e = vec![0; n];
            e[j] = 1;
            self.coeff(i, &e)
        })
    }

    pub fn add(&self, other: &PolyField) -> Result<PolyField> {
        check_dim(self.dim, other.dim)?;
        let mut out = self.clone();
        for ((c, a), v) in &other.terms {
            out.add_term(*c, a.clone(), *v);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &PolyField) -> Result<PolyField> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> PolyField {
        PolyField::from_map(
            self.dim,
            self.terms.iter().map(|(k, v)| (k.clone(), v * s)).collect(),
        )
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Largest coefficientwise difference.
    pub fn max_coeff_diff(&self, other: &PolyField) -> f64 {
        let keys: BTreeSet<_> = self.terms.keys().chain(other.terms.keys()).collect();
        keys.into_iter()
            .map(|k| {
                let a = self.terms.get(k).copied().unwrap_or(0.0);
                let b = other.terms.get(k).copied().unwrap_or(0.0);
                (a - b).abs()
            })
            .fold(0.0, f64::max)
    }

    pub(crate) fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for ((comp, alpha), c) in &self.terms {
            let mut m = *c;
            for (xi, &k) in x.iter().zip(alpha) {
                if k > 0 {
                    m *= xi.powi(k as i32);
                }
            }
            out[*comp] += m;
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        let mut out = vec![0.0; self.dim];
        self.eval_into(x, &mut out);
        Ok(out)
    }

    pub fn eval_complex(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        check_dim(self.dim, x.len())?;
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim];
        for ((comp, alpha), c) in &self.terms {
            let mut m = Complex64::new(*c, 0.0);
            for (xi, &k) in x.iter().zip(alpha) {
                if k > 0 {
                    m *= xi.powu(k);
                }
            }
            out[*comp] += m;
        }
        Ok(out)
    }

    /// Jacobian from exact differentiation of the coefficient table.
    pub fn jacobian(&self, x: &[f64]) -> Result<RealMatrix> {
        check_dim(self.dim, x.len())?;
        let mut jac = RealMatrix::zeros(self.dim, self.dim);
        for ((comp, alpha), c) in &self.terms {
            for k in 0..self.dim {
                if alpha[k] == 0 {
                    continue;
                }
                let mut m = c * alpha[k] as f64;
                for (i, (xi, &e)) in x.iter().zip(alpha).enumerate() {
                    let e = if i == k { e - 1 } else { e };
                    if e > 0 {
                        m *= xi.powi(e as i32);
                    }
                }
                jac[(*comp, k)] += m;
            }
        }
        Ok(jac)
    }

    pub fn jacobian_complex(&self, x: &[Complex64]) -> Result<DMatrix<Complex64>> {
        check_dim(self.dim, x.len())?;
        let mut jac = DMatrix::from_element(self.dim, self.dim, Complex64::new(0.0, 0.0));
        for ((comp, alpha), c) in &self.terms {
            for k in 0..self.dim {
                if alpha[k] == 0 {
                    continue;
                }
                let mut m = Complex64::new(c * alpha[k] as f64, 0.0);
                for (i, (xi, &e)) in x.iter().zip(alpha).enumerate() {
                    let e = if i == k { e - 1 } else { e };
                    if e > 0 {
                        m *= xi.powu(e);
                    }
                }
                jac[(*comp, k)] += m;
            }
        }
        Ok(jac)
    }

    fn component_poly(&self, comp: usize) -> ScalarPoly<f64> {
        self.terms
            .iter()
            .filter(|((c, _), _)| *c == comp)
            .map(|((_, a), v)| (a.clone(), *v))
            .collect()
    }

    fn partial(p: &ScalarPoly<f64>, k: usize) -> ScalarPoly<f64> {
        p.iter()
            .filter(|(a, _)| a[k] > 0)
            .map(|(a, v)| {
                let mut b = a.clone();
                b[k] -= 1;
                (b, v * a[k] as f64)
            })
            .collect()
    }

    /// `[self, g] = Dg * self - Dself * g`, computed on coefficients.
    pub fn lie_bracket(&self, g: &PolyField) -> Result<PolyField> {
        check_dim(self.dim, g.dim)?;
        let n = self.dim;
        let f_comps: Vec<_> = (0..n).map(|i| self.component_poly(i)).collect();
        let g_comps: Vec<_> = (0..n).map(|i| g.component_poly(i)).collect();
        // Dg f and Df g are summed separately and subtracted once, so that
        // swapping f and g negates every coefficient exactly.
        let mut dg_f: BTreeMap<(usize, MultiIndex), f64> = BTreeMap::new();
        let mut df_g: BTreeMap<(usize, MultiIndex), f64> = BTreeMap::new();
        for i in 0..n {
            for k in 0..n {
                let dg = Self::partial(&g_comps[i], k);
                for (m, v) in poly_mul(&dg, &f_comps[k]) {
                    *dg_f.entry((i, m)).or_insert(0.0) += v;
                }
                let df = Self::partial(&f_comps[i], k);
                for (m, v) in poly_mul(&df, &g_comps[k]) {
                    *df_g.entry((i, m)).or_insert(0.0) += v;
                }
            }
        }
        for (key, v) in df_g {
            let slot = dg_f.entry(key).or_insert(0.0);
            *slot -= v;
        }
        Ok(PolyField::from_map(n, dg_f))
    }

    /// Coefficients of `x -> A f(A^{-1} x)`.
    pub fn linear_pushforward(&self, a: &RealMatrix) -> Result<PolyField> {
        check_dim(self.dim, a.nrows())?;
        let a_inv = linalg::inverse(a)?;
        Ok(self.pushforward_pair(a, &a_inv))
    }

    /// Pushforward with a caller-supplied inverse.
    pub(crate) fn pushforward_pair(&self, a: &RealMatrix, a_inv: &RealMatrix) -> PolyField {
        let rows = linalg::to_rows(a);
        let inv_rows = linalg::to_rows(a_inv);
        PolyField::from_map(self.dim, pushforward_with(self, &rows, &inv_rows))
    }
}

/// Human-readable number with at most 12 significant digits. Reports that
/// must round-trip use the JSON writers instead.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let a = v.abs();
    if (1e-4..1e6).contains(&a) {
        let digits = (11 - a.log10().floor() as i32).max(0) as usize;
        let s = format!("{v:.digits$}");
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if s == "-0" {
            "0".into()
        } else {
            s
        }
    } else {
        let s = format!("{v:.11e}");
        let (mant, exp) = s.split_once('e').expect("exponent form");
        let mant = mant.trim_end_matches('0').trim_end_matches('.');
        format!("{mant}e{exp}")
    }
}

fn write_monomial(f: &mut fmt::Formatter<'_>, alpha: &[u32]) -> fmt::Result {
    let mut first = true;
    for (i, &k) in alpha.iter().enumerate() {
        if k == 0 {
            continue;
        }
        if !first {
            write!(f, "*")?;
        }
        first = false;
        write!(f, "x{}", i + 1)?;
        if k > 1 {
            write!(f, "^{k}")?;
        }
    }
    Ok(())
}

impl fmt::Display for PolyField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for comp in 0..self.dim {
            if comp > 0 {
                writeln!(f)?;
            }
            write!(f, "dx{}/dt =", comp + 1)?;
            let mut any = false;
            for ((c, alpha), v) in &self.terms {
                if *c != comp {
                    continue;
                }
                let sign = if *v < 0.0 { "-" } else { "+" };
                let mag = v.abs();
                if any {
                    write!(f, " {sign} ")?;
                } else if *v < 0.0 {
                    write!(f, " -")?;
                } else {
                    write!(f, " ")?;
                }
                any = true;
                if degree(alpha) == 0 {
                    write!(f, "{}", fmt_num(mag))?;
                } else {
                    let m = fmt_num(mag);
                    if m != "1" {
                        write!(f, "{m}*")?;
                    }
                    write_monomial(f, alpha)?;
                }
            }
            if !any {
                write!(f, " 0")?;
            }
        }
        Ok(())
    }
}
