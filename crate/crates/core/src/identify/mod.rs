//! Deciding whether a nonautonomous polynomial system is the gauge transform
//! of an autonomous one, and reconstructing the curve generator `B` and the
//! autonomous field.
//!
//! With the normalization `A(0) = I`, a system `c(t) + C(t) x + sum q_j(t, x)`
//! is the gauge transform of `f = b + B x + sum f_j` exactly when
//! `A' = C A - A B`, `c(t) = A(t) c(0)` and `q_j(t, x) = A(t) q_j(0, A(t)^{-1} x)`.
//! Differentiating at `t = 0` gives linear conditions on `M = B - C(0)`:
//! `[M, p_j] = r_j` and `M c(0) = -c'(0)`. These narrow the candidates; the
//! full identities are then checked on a time grid.

mod idempotents;
mod system;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

pub use idempotents::{find_idempotents, IdempotentSet};
pub use system::{Coefficients, NonAutoSystem};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, elementary, mat_vec, norm2, solve_min_norm, RealMatrix};
use crate::matcurve::{mat_exp, solve_gauge_ode, MatrixCurve};
use crate::polyfield::{MultiIndex, PolyField};
use crate::timexpr::TimeExpr;

pub const DEFAULT_GRID_POINTS: usize = 33;
pub const DEFAULT_TOL: f64 = 1e-6;
/// Singular values below this fraction of the largest count as zero.
pub const RANK_CUTOFF: f64 = 1e-10;
/// Relative least-squares residual above which the first-order system is
/// declared inconsistent.
pub const SOLVE_RESIDUAL: f64 = 1e-8;
/// Tolerance of the matrix ODE solve used during verification.
pub const FLOW_TOL: f64 = 1e-11;

const ZERO_COEFF: f64 = 1e-14;
const NONZERO_ON_GRID: f64 = 1e-12;
const MAX_REFINE_ITERATIONS: usize = 50;

/// `points` equispaced times on `[t0, t1]`.
pub fn grid(t0: f64, t1: f64, points: usize) -> Result<Vec<f64>> {
    if !(t1 > t0) || points < 2 {
        return Err(Error::invalid("grid needs t1 > t0 and at least 2 points"));
    }
    Ok((0..points)
        .map(|i| t0 + (t1 - t0) * i as f64 / (points - 1) as f64)
        .collect())
}

/// Values and first time derivatives of the coefficients at `t = 0`.
#[derive(Clone, Debug)]
pub struct JetData {
    pub p: BTreeMap<u32, PolyField>,
    pub r: BTreeMap<u32, PolyField>,
    pub c0: Vec<f64>,
    pub cdot0: Vec<f64>,
    pub cmat0: RealMatrix,
}

impl JetData {
    pub fn dim(&self) -> usize {
        self.c0.len()
    }

    /// The autonomous field `c0 + B x + sum p_j`.
    pub fn reconstruct(&self, b: &RealMatrix) -> Result<PolyField> {
        let mut f = PolyField::constant(&self.c0).add(&PolyField::linear(b))?;
        for p in self.p.values() {
            f = f.add(p)?;
        }
        Ok(f)
    }
}

pub fn extract_jet(q: &NonAutoSystem) -> Result<JetData> {
    let n = q.dim();
    let at0 = |e: &TimeExpr| e.eval(0.0);
    let d0 = |e: &TimeExpr| e.diff().eval(0.0);
    let c0 = q
        .constant()
        .iter()
        .map(at0)
        .collect::<Result<Vec<_>, _>>()?;
    let cdot0 = q.constant().iter().map(d0).collect::<Result<Vec<_>, _>>()?;
    let mut cmat0 = RealMatrix::zeros(n, n);
    for (i, row) in q.linear().iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            cmat0[(i, j)] = at0(e)?;
        }
    }
    let mut p: BTreeMap<u32, PolyField> = BTreeMap::new();
    let mut r: BTreeMap<u32, PolyField> = BTreeMap::new();
    for j in q.degrees() {
        p.insert(j, PolyField::new(n));
        r.insert(j, PolyField::new(n));
    }
    for ((comp, alpha), e) in q.higher() {
        let j = crate::polyfield::degree(alpha);
        p.get_mut(&j)
            .expect("degree registered")
            .add_term(*comp, alpha.clone(), at0(e)?);
        r.get_mut(&j)
            .expect("degree registered")
            .add_term(*comp, alpha.clone(), d0(e)?);
    }
    Ok(JetData {
        p,
        r,
        c0,
        cdot0,
        cmat0,
    })
}

/// Affine family `B = particular + span(kernel)` of first-order solutions.
#[derive(Clone, Debug)]
pub struct CandidateSet {
    pub particular: RealMatrix,
    pub kernel: Vec<RealMatrix>,
    /// Least-squares residual of the particular solution.
    pub residual: f64,
    /// Number of scalar constraints.
    pub rows: usize,
}

fn matrix_from_vec(v: &DVector<f64>, n: usize) -> RealMatrix {
    RealMatrix::from_fn(n, n, |i, j| v[i * n + j])
}

/// Solves `[M, p_j] = r_j` and `M c0 = -c'0` for `M = B - C(0)` and returns
/// the candidate family for `B`, or `None` when the conditions are
/// inconsistent.
#[allow(non_snake_case)]
pub fn solve_candidate_B(jet: &JetData) -> Result<Option<CandidateSet>> {
    let n = jet.dim();
    check_dim(n, jet.cmat0.nrows())?;
    let unknowns = n * n;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();

    for (j, p) in &jet.p {
        let zero = PolyField::new(n);
        let r = jet.r.get(j).unwrap_or(&zero);
        if p.is_zero() && r.is_zero() {
            continue;
        }
        let columns: Vec<PolyField> = (0..unknowns)
            .map(|k| PolyField::linear(&elementary(n, k / n, k % n)).lie_bracket(p))
            .collect::<Result<_>>()?;
        let mut keys: Vec<(usize, MultiIndex)> = columns
            .iter()
            .chain(std::iter::once(r))
            .flat_map(|f| f.terms().map(|(c, a, _)| (c, a.clone())))
            .collect();
        keys.sort();
        keys.dedup();
        for (comp, alpha) in keys {
            rows.push(columns.iter().map(|col| col.coeff(comp, &alpha)).collect());
            rhs.push(r.coeff(comp, &alpha));
        }
    }
    if jet.c0.iter().chain(&jet.cdot0).any(|v| *v != 0.0) {
        for i in 0..n {
            let mut row = vec![0.0; unknowns];
            for l in 0..n {
                row[i * n + l] = jet.c0[l];
            }
            rows.push(row);
            rhs.push(-jet.cdot0[i]);
        }
    }

    if rows.is_empty() {
        return Ok(Some(CandidateSet {
            particular: jet.cmat0.clone(),
            kernel: (0..unknowns).map(|k| elementary(n, k / n, k % n)).collect(),
            residual: 0.0,
            rows: 0,
        }));
    }
    let l = DMatrix::from_fn(rows.len(), unknowns, |i, k| rows[i][k]);
    let b = DVector::from_vec(rhs);
    let sol = solve_min_norm(&l, &b, RANK_CUTOFF);
    if sol.residual > SOLVE_RESIDUAL * (1.0 + b.norm()) {
        return Ok(None);
    }
    Ok(Some(CandidateSet {
        particular: &jet.cmat0 + matrix_from_vec(&sol.particular, n),
        kernel: sol.kernel.iter().map(|v| matrix_from_vec(v, n)).collect(),
        residual: sol.residual,
        rows: rows.len(),
    }))
}

/// Grid maxima of the normalized residuals `|lhs - rhs| / (1 + scale)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Residuals {
    /// `c(t)` against `A(t) c(0)`.
    pub constant: f64,
    /// `q_j(t, .)` against `A(t) p_j(A(t)^{-1} .)`, coefficientwise.
    pub per_degree: BTreeMap<u32, f64>,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.per_degree
            .values()
            .copied()
            .fold(self.constant, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct Verification {
    pub residuals: Residuals,
    pub passed: bool,
    /// True when `C` vanished on the grid and `A = exp(-t B)` was used.
    pub exponential: bool,
}

fn coefficient_is_zero_on_grid(e: &TimeExpr, grid: &[f64]) -> Result<bool> {
    if e.is_zero_literal() {
        return Ok(true);
    }
    for &t in grid {
        if e.eval(t)?.abs() > ZERO_COEFF {
            return Ok(false);
        }
    }
    Ok(true)
}

fn linear_part_vanishes(q: &NonAutoSystem, grid: &[f64]) -> Result<bool> {
    for e in q.linear().iter().flatten() {
        if !coefficient_is_zero_on_grid(e, grid)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// The curve `A` with `A' = C A - A B`, `A(0) = I`, over the grid span.
fn candidate_curve(
    q: &NonAutoSystem,
    b: &RealMatrix,
    grid: &[f64],
    exponential: bool,
) -> Result<MatrixCurve> {
    let n = q.dim();
    if exponential {
        return MatrixCurve::exponential(b.clone(), -1.0);
    }
    let lo = grid.iter().copied().fold(0.0, f64::min);
    let hi = grid.iter().copied().fold(0.0, f64::max);
    solve_gauge_ode(
        q.linear().to_vec(),
        b,
        &RealMatrix::identity(n, n),
        (lo, hi),
        FLOW_TOL,
    )
}

/// Raw residual vector and normalized per-condition maxima.
fn residual_data(
    q: &NonAutoSystem,
    jet: &JetData,
    b: &RealMatrix,
    grid: &[f64],
    exponential: bool,
) -> Result<(Vec<f64>, Residuals)> {
    let curve = candidate_curve(q, b, grid, exponential)?;
    let mut raw = Vec::new();
    let mut res = Residuals::default();
    for j in jet.p.keys() {
        res.per_degree.insert(*j, 0.0);
    }
    for &t in grid {
        let co = q.coefficients_at(t)?;
        let fr = curve.frame(t)?;
        let ac0 = mat_vec(&fr.a, &jet.c0);
        let d: Vec<f64> = co.c.iter().zip(&ac0).map(|(x, y)| x - y).collect();
        let scale = norm2(&co.c).max(norm2(&ac0));
        res.constant = res.constant.max(norm2(&d) / (1.0 + scale));
        raw.extend(d);
        for (j, p) in &jet.p {
            let pushed = p.pushforward_pair(&fr.a, &fr.a_inv);
            let actual = co.q.grade(*j);
            let diff = actual.sub(&pushed)?;
            let scale = actual.max_abs_coeff().max(pushed.max_abs_coeff());
            let e = diff.max_abs_coeff() / (1.0 + scale);
            let slot = res.per_degree.get_mut(j).expect("degree registered");
            *slot = slot.max(e);
            for alpha in monomials(q.dim(), *j) {
                for comp in 0..q.dim() {
                    raw.push(diff.coeff(comp, &alpha));
                }
            }
        }
    }
    Ok((raw, res))
}

/// All exponent vectors of total degree `j` in `n` variables.
fn monomials(n: usize, j: u32) -> Vec<MultiIndex> {
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

/// Checks the gauge identities for the candidate `B` on `grid`.
pub fn verify_candidate(
    q: &NonAutoSystem,
    b: &RealMatrix,
    grid: &[f64],
    tol: f64,
) -> Result<Verification> {
    check_dim(q.dim(), b.nrows())?;
    check_dim(q.dim(), b.ncols())?;
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite candidate matrix"));
    }
    q.check_evaluable(grid)?;
    let jet = extract_jet(q)?;
    let exponential = linear_part_vanishes(q, grid)?;
    let (_, residuals) = residual_data(q, &jet, b, grid, exponential)?;
    let passed = residuals.max() <= tol;
    Ok(Verification {
        residuals,
        passed,
        exponential,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Gauge,
    NotGauge,
    LinearFamily,
    Undetermined,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Gauge => "gauge",
            Status::NotGauge => "not_gauge",
            Status::LinearFamily => "linear_family",
            Status::Undetermined => "undetermined",
        }
    }
}

#[derive(Clone, Debug)]
pub struct GaugeCertificate {
    pub status: Status,
    /// Candidate generator (minimum-norm member of the family, or the refined one).
    pub b_matrix: RealMatrix,
    pub kernel_basis: Vec<RealMatrix>,
    /// `c(0)`.
    pub b: Vec<f64>,
    /// Reconstructed autonomous field `c(0) + B x + sum p_j`.
    pub f: PolyField,
    pub residuals: Residuals,
    pub grid: Vec<f64>,
    pub diagnostics: Vec<String>,
}

impl GaugeCertificate {
    pub fn kernel_dim(&self) -> usize {
        self.kernel_basis.len()
    }

    /// The curve `A` of the certificate, `A(0) = I`.
    pub fn curve(&self, q: &NonAutoSystem) -> Result<MatrixCurve> {
        let exponential = linear_part_vanishes(q, &self.grid)?;
        candidate_curve(q, &self.b_matrix, &self.grid, exponential)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct IdentifyOptions {
    pub tol: f64,
}

impl Default for IdentifyOptions {
    fn default() -> Self {
        IdentifyOptions { tol: DEFAULT_TOL }
    }
}

fn undetermined(n: usize, grid: &[f64], msg: String) -> GaugeCertificate {
    GaugeCertificate {
        status: Status::Undetermined,
        b_matrix: RealMatrix::zeros(n, n),
        kernel_basis: Vec::new(),
        b: vec![0.0; n],
        f: PolyField::new(n),
        residuals: Residuals::default(),
        grid: grid.to_vec(),
        diagnostics: vec![msg],
    }
}

/// Levenberg–Marquardt over the kernel coordinates, minimizing the summed
/// squared grid residuals.
fn refine(
    q: &NonAutoSystem,
    jet: &JetData,
    cand: &CandidateSet,
    grid: &[f64],
    exponential: bool,
) -> Result<RealMatrix> {
    let k = cand.kernel.len();
    let b_of = |theta: &[f64]| -> RealMatrix {
        let mut b = cand.particular.clone();
        for (th, dir) in theta.iter().zip(&cand.kernel) {
            b += dir * *th;
        }
        b
    };
    let objective = |theta: &[f64]| -> Result<Vec<f64>> {
        Ok(residual_data(q, jet, &b_of(theta), grid, exponential)?.0)
    };
    let mut theta = vec![0.0; k];
    let mut r = objective(&theta)?;
    let mut cost: f64 = r.iter().map(|v| v * v).sum();
    let mut lambda = 1e-3;
    for _ in 0..MAX_REFINE_ITERATIONS {
        if cost < 1e-28 {
            break;
        }
        let mut jac = DMatrix::zeros(r.len(), k);
        for c in 0..k {
            let h = 1e-7 * (1.0 + theta[c].abs());
            let mut tp = theta.clone();
            tp[c] += h;
            let rp = objective(&tp)?;
            for (i, (a, b)) in rp.iter().zip(&r).enumerate() {
                jac[(i, c)] = (a - b) / h;
            }
        }
        let rv = DVector::from_vec(r.clone());
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &rv;
        let mut improved = false;
        for _ in 0..10 {
            let mut sys = jtj.clone();
            for d in 0..k {
                sys[(d, d)] += lambda * (1.0 + jtj[(d, d)]);
            }
            let Some(step) = sys.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let rt = match objective(&trial) {
                Ok(v) => v,
                Err(_) => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let ct: f64 = rt.iter().map(|v| v * v).sum();
            if ct < cost {
                theta = trial;
                r = rt;
                let rel = (cost - ct) / cost.max(1e-300);
                cost = ct;
                lambda = (lambda / 10.0).max(1e-12);
                improved = rel > 1e-12;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    Ok(b_of(&theta))
}

/// Full identification pipeline with verification on `grid`.
pub fn identify(q: &NonAutoSystem, grid: &[f64], opts: &IdentifyOptions) -> GaugeCertificate {
    match identify_inner(q, grid, opts) {
        Ok(cert) => cert,
        Err(e) => undetermined(q.dim(), grid, e.to_string()),
    }
}

fn identify_inner(
    q: &NonAutoSystem,
    grid: &[f64],
    opts: &IdentifyOptions,
) -> Result<GaugeCertificate> {
    let n = q.dim();
    q.check_evaluable(grid)?;
    let jet = extract_jet(q)?;
    let mut cert = GaugeCertificate {
        status: Status::NotGauge,
        b_matrix: jet.cmat0.clone(),
        kernel_basis: Vec::new(),
        b: jet.c0.clone(),
        f: jet.reconstruct(&jet.cmat0)?,
        residuals: Residuals::default(),
        grid: grid.to_vec(),
        diagnostics: Vec::new(),
    };

    // q_j(0) = 0 forces q_j to vanish identically.
    for (j, p) in &jet.p {
        if p.max_abs_coeff() > ZERO_COEFF {
            continue;
        }
        for &t in grid {
            let size = q.coefficients_at(t)?.q.grade(*j).max_abs_coeff();
            if size > NONZERO_ON_GRID {
                cert.diagnostics.push(format!(
                    "degree {j} part vanishes at t = 0 but has coefficient size {size:e} at t = {t}"
                ));
                return Ok(cert);
            }
        }
    }

    let exponential = linear_part_vanishes(q, grid)?;
    let all_p_zero = jet.p.values().all(|p| p.max_abs_coeff() <= ZERO_COEFF);
    let c_zero = q
        .constant()
        .iter()
        .map(|e| coefficient_is_zero_on_grid(e, grid))
        .collect::<Result<Vec<_>>>()?;
    if all_p_zero && c_zero.iter().all(|z| *z) {
        let (_, residuals) = residual_data(q, &jet, &jet.cmat0, grid, exponential)?;
        cert.status = Status::LinearFamily;
        cert.kernel_basis = (0..n * n).map(|k| elementary(n, k / n, k % n)).collect();
        cert.residuals = residuals;
        cert.diagnostics
            .push("linear system: every B is admissible; reporting B = C(0)".into());
        return Ok(cert);
    }

    let Some(cand) = solve_candidate_B(&jet)? else {
        cert.diagnostics
            .push("first-order conditions at t = 0 are inconsistent".into());
        return Ok(cert);
    };
    cert.kernel_basis = cand.kernel.clone();
    let (_, mut residuals) = residual_data(q, &jet, &cand.particular, grid, exponential)?;
    let mut b = cand.particular.clone();
    if residuals.max() > opts.tol && !cand.kernel.is_empty() {
        cert.diagnostics.push(format!(
            "minimum-norm candidate failed verification (residual {:e}); refining over a {}-dimensional family",
            residuals.max(),
            cand.kernel.len()
        ));
        b = refine(q, &jet, &cand, grid, exponential)?;
        residuals = residual_data(q, &jet, &b, grid, exponential)?.1;
    }
    cert.b_matrix = b.clone();
    cert.f = jet.reconstruct(&b)?;
    cert.status = if residuals.max() <= opts.tol {
        Status::Gauge
    } else {
        Status::NotGauge
    };
    if cert.status == Status::NotGauge {
        cert.diagnostics.push(format!(
            "grid verification failed: residual {:e} exceeds tolerance {:e}",
            residuals.max(),
            opts.tol
        ));
    }
    cert.residuals = residuals;
    Ok(cert)
}

/// A system with its linear part removed by the fundamental matrix `T`,
/// `T' = C T`, `T(0) = I`: `q~_j(t, y) = T^{-1} q_j(t, T y)`, `c~ = T^{-1} c`.
#[derive(Clone, Debug)]
pub struct ReducedSystem {
    pub t: Vec<f64>,
    pub constant: Vec<Vec<f64>>,
    /// Parts of degree two and higher at each grid time.
    pub higher: Vec<PolyField>,
    /// Exact jet at `t = 0`: `p~_j = p_j`, `r~_j = r_j + [C(0), p_j]`,
    /// `c~'(0) = c'(0) - C(0) c(0)`, `C~(0) = 0`.
    pub jet: JetData,
    pub transform: MatrixCurve,
}

pub fn remove_linear_part(q: &NonAutoSystem, grid: &[f64]) -> Result<ReducedSystem> {
    let n = q.dim();
    q.check_evaluable(grid)?;
    let lo = grid.iter().copied().fold(0.0, f64::min);
    let hi = grid.iter().copied().fold(0.0, f64::max);
    let transform = solve_gauge_ode(
        q.linear().to_vec(),
        &RealMatrix::zeros(n, n),
        &RealMatrix::identity(n, n),
        (lo, hi),
        FLOW_TOL,
    )?;
    let mut constant = Vec::with_capacity(grid.len());
    let mut higher = Vec::with_capacity(grid.len());
    for &t in grid {
        let co = q.coefficients_at(t)?;
        let fr = transform.frame(t)?;
        constant.push(mat_vec(&fr.a_inv, &co.c));
        higher.push(co.q.pushforward_pair(&fr.a_inv, &fr.a));
    }
    let jet0 = extract_jet(q)?;
    let c0mat = PolyField::linear(&jet0.cmat0);
    let mut r = BTreeMap::new();
    for (j, p) in &jet0.p {
        r.insert(*j, jet0.r[j].add(&c0mat.lie_bracket(p)?)?);
    }
    let cc0 = mat_vec(&jet0.cmat0, &jet0.c0);
    let jet = JetData {
        p: jet0.p.clone(),
        r,
        c0: jet0.c0.clone(),
        cdot0: jet0.cdot0.iter().zip(&cc0).map(|(a, b)| a - b).collect(),
        cmat0: RealMatrix::zeros(n, n),
    };
    Ok(ReducedSystem {
        t: grid.to_vec(),
        constant,
        higher,
        jet,
        transform,
    })
}

impl ReducedSystem {
    /// Residuals of `c~(t) = exp(-tB) c(0)` and
    /// `q~_j(t, .) = exp(-tB) p_j(exp(tB) .)` on the grid.
    pub fn verify(&self, b: &RealMatrix, tol: f64) -> Result<Verification> {
        let mut res = Residuals::default();
        for (i, &t) in self.t.iter().enumerate() {
            let a = mat_exp(&(b * -t));
            let a_inv = mat_exp(&(b * t));
            let ac0 = mat_vec(&a, &self.jet.c0);
            let d: Vec<f64> = self.constant[i]
                .iter()
                .zip(&ac0)
                .map(|(x, y)| x - y)
                .collect();
            let scale = norm2(&self.constant[i]).max(norm2(&ac0));
            res.constant = res.constant.max(norm2(&d) / (1.0 + scale));
            for (j, p) in &self.jet.p {
                let pushed = p.pushforward_pair(&a, &a_inv);
                let actual = self.higher[i].grade(*j);
                let scale = actual.max_abs_coeff().max(pushed.max_abs_coeff());
                let e = actual.max_coeff_diff(&pushed) / (1.0 + scale);
                let slot = res.per_degree.entry(*j).or_insert(0.0);
                *slot = slot.max(e);
            }
        }
        let passed = res.max() <= tol;
        Ok(Verification {
            residuals: res,
            passed,
            exponential: true,
        })
    }
}

/// Largest entry difference between two matrices.
pub fn matrix_distance(a: &RealMatrix, b: &RealMatrix) -> f64 {
    linalg::max_abs(&(a - b))
}
