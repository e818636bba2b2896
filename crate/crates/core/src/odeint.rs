//! Dormand–Prince 5(4) integration with dense output, trajectories, and the
//! solution-correspondence check for gauge transforms.

use crate::error::{check_dim, Error, Result};
use crate::gauge;
use crate::linalg::{mat_vec, norm2};
use crate::matcurve::MatrixCurve;
use crate::polyfield::PolyField;

/// Right-hand side of `x' = F(t, x)`.
pub trait VectorField {
    fn dim(&self) -> usize;
    fn eval_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()>;

    fn eval_at(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, x, &mut out)?;
        Ok(out)
    }
}

impl VectorField for PolyField {
    fn dim(&self) -> usize {
        PolyField::dim(self)
    }

    fn eval_into(&self, _t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        PolyField::eval_into(self, x, out);
        Ok(())
    }
}

/// Adapter for closures.
pub struct FnField<F> {
    pub dim: usize,
    pub f: F,
}

impl<F> VectorField for FnField<F>
where
    F: Fn(f64, &[f64], &mut [f64]) -> Result<()>,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        (self.f)(t, x, out)
    }
}

/// `k` independent copies of one field, stacked into a single state vector.
pub struct Stacked<'a, V: ?Sized> {
    pub field: &'a V,
    pub copies: usize,
}

impl<V: VectorField + ?Sized> VectorField for Stacked<'_, V> {
    fn dim(&self) -> usize {
        self.field.dim() * self.copies
    }

    fn eval_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.field.dim();
        for (xs, os) in x.chunks(n).zip(out.chunks_mut(n)) {
            self.field.eval_into(t, xs, os)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// States with Euclidean norm above this bound end the integration.
    pub blow_up: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-10,
            atol: 1e-10,
            max_steps: 500_000,
            blow_up: 1e8,
        }
    }
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        OdeOptions {
            rtol: tol,
            atol: tol,
            ..Default::default()
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Clone, Debug)]
struct Segment {
    t: f64,
    h: f64,
    // Five continuous-extension coefficient vectors, concatenated.
    rcont: Vec<f64>,
}

/// Piecewise-polynomial dense output of one integration run.
#[derive(Clone, Debug)]
pub struct DenseSolution {
    dim: usize,
    t_start: f64,
    t_end: f64,
    segments: Vec<Segment>,
    final_state: Vec<f64>,
    /// Set when the run stopped because the state exceeded the bound.
    pub blow_up: Option<f64>,
}

impl DenseSolution {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    /// Last time covered (the blow-up time when the run was truncated).
    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn final_state(&self) -> &[f64] {
        &self.final_state
    }

    pub fn steps(&self) -> usize {
        self.segments.len()
    }

    fn forward(&self) -> bool {
        self.t_end >= self.t_start
    }

    pub fn contains(&self, t: f64) -> bool {
        let (lo, hi) = if self.forward() {
            (self.t_start, self.t_end)
        } else {
            (self.t_end, self.t_start)
        };
        let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        t >= lo - slack && t <= hi + slack
    }

    /// Step boundaries, including both endpoints.
    pub fn checkpoints(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.segments.iter().map(|s| s.t).collect();
        v.push(self.t_end);
        v
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        if !self.contains(t) {
            let (lo, hi) = if self.forward() {
                (self.t_start, self.t_end)
            } else {
                (self.t_end, self.t_start)
            };
            return Err(Error::OutOfSpan { t, lo, hi });
        }
        if self.segments.is_empty() {
            out.copy_from_slice(&self.final_state);
            return Ok(());
        }
        // Segments are ordered along the integration direction.
        let fwd = self.forward();
        let idx = self
            .segments
            .partition_point(|s| if fwd { s.t <= t } else { s.t >= t })
            .saturating_sub(1);
        let seg = &self.segments[idx];
        let theta = (t - seg.t) / seg.h;
        let theta1 = 1.0 - theta;
        let n = self.dim;
        let r = &seg.rcont;
        for i in 0..n {
            out[i] = r[i]
                + theta
                    * (r[n + i]
                        + theta1 * (r[2 * n + i] + theta * (r[3 * n + i] + theta1 * r[4 * n + i])));
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out)?;
        Ok(out)
    }

    /// Appends a continuation that starts where `self` ends.
    pub(crate) fn append(&mut self, next: DenseSolution) {
        debug_assert!((next.t_start - self.t_end).abs() <= 1e-12 * (1.0 + self.t_end.abs()));
        self.segments.extend(next.segments);
        self.t_end = next.t_end;
        self.final_state = next.final_state;
        self.blow_up = next.blow_up;
    }
}

fn weighted_rms(e: &[f64], y0: &[f64], y1: &[f64], opts: &OdeOptions) -> f64 {
    let n = e.len().max(1) as f64;
    let s: f64 = e
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(ei, (a, b))| {
            let sk = opts.atol + opts.rtol * a.abs().max(b.abs());
            (ei / sk).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

struct Stages {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y1: Vec<f64>,
}

impl Stages {
    fn new(n: usize) -> Self {
        Stages {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            y1: vec![0.0; n],
        }
    }

    /// One Dormand–Prince step; expects `k[0] = f(t, y)` and leaves the
    /// fifth-order result in `y1` and `f(t + h, y1)` in `k[6]`.
    fn step<F>(&mut self, rhs: &mut F, t: f64, h: f64, y: &[f64]) -> Result<()>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    {
        let n = y.len();
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let tmp = &mut self.tmp;
        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        rhs(t + C2 * h, tmp, k2)?;
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(t + C3 * h, tmp, k3)?;
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(t + C4 * h, tmp, k4)?;
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(t + C5 * h, tmp, k5)?;
        for i in 0..n {
            tmp[i] =
                y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        rhs(t + h, tmp, k6)?;
        for i in 0..n {
            self.y1[i] =
                y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        rhs(t + h, &self.y1, k7)?;
        Ok(())
    }

    fn error_vec(&self, h: f64) -> Vec<f64> {
        let [k1, _, k3, k4, k5, k6, k7] = &self.k;
        (0..k1.len())
            .map(|i| {
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
            })
            .collect()
    }

    fn dense(&self, h: f64, y0: &[f64]) -> Vec<f64> {
        let n = y0.len();
        let [k1, _, k3, k4, k5, k6, k7] = &self.k;
        let mut r = vec![0.0; 5 * n];
        for i in 0..n {
            let ydiff = self.y1[i] - y0[i];
            let bspl = h * k1[i] - ydiff;
            r[i] = y0[i];
            r[n + i] = ydiff;
            r[2 * n + i] = bspl;
            r[3 * n + i] = ydiff - h * k7[i] - bspl;
            r[4 * n + i] =
                h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        }
        r
    }
}

fn initial_step<F>(
    rhs: &mut F,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    dir: f64,
    hmax: f64,
    opts: &OdeOptions,
) -> Result<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let sk: Vec<f64> = y0.iter().map(|y| opts.atol + opts.rtol * y.abs()).collect();
    let dnf: f64 = f0.iter().zip(&sk).map(|(f, s)| (f / s).powi(2)).sum();
    let dny: f64 = y0.iter().zip(&sk).map(|(y, s)| (y / s).powi(2)).sum();
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        (dny / dnf).sqrt() * 0.01
    };
    h = h.min(hmax);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + dir * h * f).collect();
    let mut f1 = vec![0.0; y0.len()];
    rhs(t0 + dir * h, &y1, &mut f1)?;
    let der2 = f1
        .iter()
        .zip(f0)
        .zip(&sk)
        .map(|((a, b), s)| ((a - b) / s).powi(2))
        .sum::<f64>()
        .sqrt()
        / h;
    let der12 = der2.abs().max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(0.2)
    };
    Ok((100.0 * h).min(h1).min(hmax))
}

/// Adaptive integration of `y' = rhs(t, y)` from `t0` to `t1` (either
/// direction) with dense output.
pub fn solve_dense<F>(
    mut rhs: F,
    t0: f64,
    t1: f64,
    y0: &[f64],
    opts: &OdeOptions,
) -> Result<DenseSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y0.len();
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite initial state"));
    }
    let mut sol = DenseSolution {
        dim: n,
        t_start: t0,
        t_end: t0,
        segments: Vec::new(),
        final_state: y0.to_vec(),
        blow_up: None,
    };
    if t1 == t0 {
        return Ok(sol);
    }
    let dir = if t1 > t0 { 1.0 } else { -1.0 };
    let span = (t1 - t0).abs();
    let mut st = Stages::new(n);
    let mut y = y0.to_vec();
    let mut t = t0;
    rhs(t, &y, &mut st.k[0])?;
    let mut h = initial_step(&mut rhs, t0, &y, &st.k[0].clone(), dir, span, opts)?;
    let mut last_rejected = false;

    for _ in 0..opts.max_steps {
        let remaining = (t1 - t) * dir;
        if remaining <= 1e-14 * (1.0 + t1.abs()) {
            sol.t_end = t1;
            sol.final_state = y;
            return Ok(sol);
        }
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        if h < 1e-14 * (1.0 + t.abs()) {
            return Err(Error::StepUnderflow { t });
        }
        let hs = dir * h;
        st.step(&mut rhs, t, hs, &y)?;
        let err = weighted_rms(&st.error_vec(hs), &y, &st.y1, opts);
        if !err.is_finite() {
            h *= 0.1;
            last_rejected = true;
            continue;
        }
        if err <= 1.0 {
            let t_new = if last { t1 } else { t + hs };
            sol.segments.push(Segment {
                t,
                h: hs,
                rcont: st.dense(hs, &y),
            });
            y.copy_from_slice(&st.y1);
            let k7 = st.k[6].clone();
            st.k[0].copy_from_slice(&k7);
            t = t_new;
            sol.t_end = t;
            sol.final_state = y.clone();
            if norm2(&y) > opts.blow_up || y.iter().any(|v| !v.is_finite()) {
                sol.blow_up = Some(t);
                return Ok(sol);
            }
            let mut fac = 0.9 * err.max(1e-10).powf(-0.2);
            fac = fac.clamp(0.2, 5.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h *= fac;
            last_rejected = false;
        } else {
            let fac = (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            h *= fac;
            last_rejected = true;
        }
    }
    Err(Error::TooManySteps {
        steps: opts.max_steps,
        t,
    })
}

/// Fixed-step Dormand–Prince (fifth-order solution), used for order checks.
pub fn solve_fixed<F>(mut rhs: F, t0: f64, t1: f64, y0: &[f64], steps: usize) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y0.len();
    let h = (t1 - t0) / steps as f64;
    let mut st = Stages::new(n);
    let mut y = y0.to_vec();
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        rhs(t, &y, &mut st.k[0])?;
        st.step(&mut rhs, t, h, &y)?;
        y.copy_from_slice(&st.y1);
    }
    Ok(y)
}

pub fn integrate_dense<V: VectorField + ?Sized>(
    field: &V,
    x0: &[f64],
    t0: f64,
    t1: f64,
    opts: &OdeOptions,
) -> Result<DenseSolution> {
    check_dim(field.dim(), x0.len())?;
    solve_dense(|t, x, out| field.eval_into(t, x, out), t0, t1, x0, opts)
}

/// Sampled solution.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub rtol: f64,
    pub atol: f64,
    /// Time at which the run was truncated because of blow-up.
    pub blow_up: Option<f64>,
}

impl Trajectory {
    pub fn new(t: Vec<f64>, x: Vec<Vec<f64>>) -> Result<Self> {
        if t.len() != x.len() {
            return Err(Error::invalid(
                "trajectory times and states differ in length",
            ));
        }
        if t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid(
                "trajectory times must be strictly increasing",
            ));
        }
        if let Some(first) = x.first() {
            if x.iter().any(|s| s.len() != first.len()) {
                return Err(Error::invalid("trajectory states differ in dimension"));
            }
        }
        if x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("trajectory contains non-finite states"));
        }
        Ok(Trajectory {
            t,
            x,
            rtol: 0.0,
            atol: 0.0,
            blow_up: None,
        })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn from_dense(sol: &DenseSolution, samples: usize, opts: &OdeOptions) -> Result<Self> {
        let (a, b) = (sol.t_start(), sol.t_end());
        let samples = samples.max(2);
        let t: Vec<f64> = if a == b {
            vec![a]
        } else {
            (0..samples)
                .map(|i| a + (b - a) * i as f64 / (samples - 1) as f64)
                .collect()
        };
        let x = t
            .iter()
            .map(|&ti| sol.eval(ti))
            .collect::<Result<Vec<_>>>()?;
        let (t, x) = if b < a {
            (t.into_iter().rev().collect(), x.into_iter().rev().collect())
        } else {
            (t, x)
        };
        Ok(Trajectory {
            t,
            x,
            rtol: opts.rtol,
            atol: opts.atol,
            blow_up: sol.blow_up,
        })
    }
}

/// Default number of samples per span.
pub const DEFAULT_SAMPLES: usize = 200;

pub fn integrate<V: VectorField + ?Sized>(
    field: &V,
    x0: &[f64],
    t_span: (f64, f64),
    opts: &OdeOptions,
    samples: usize,
) -> Result<Trajectory> {
    let sol = integrate_dense(field, x0, t_span.0, t_span.1, opts)?;
    Trajectory::from_dense(&sol, samples, opts)
}

#[derive(Clone, Debug)]
pub struct CorrespondenceReport {
    pub max_deviation: f64,
    /// End of the compared interval; short of the span when either run blew up.
    pub t_end: f64,
    pub truncated: bool,
}

/// Integrates `z' = f(z)` from `x0` and `w' = f*(t, w)` from `A(t0) x0`, and
/// returns the largest relative gap `|w - A z| / (1 + |A z|)` over 200
/// sample times.
pub fn verify_correspondence(
    f: &PolyField,
    a: &MatrixCurve,
    x0: &[f64],
    t_span: (f64, f64),
    tol: f64,
) -> Result<CorrespondenceReport> {
    check_dim(f.dim(), a.dim())?;
    check_dim(f.dim(), x0.len())?;
    let (t0, t1) = t_span;
    let opts = OdeOptions::with_tol(tol);
    let z = integrate_dense(f, x0, t0, t1, &opts)?;
    let fstar = gauge::gauge_transform(f, a)?;
    let w0 = mat_vec(&a.value(t0)?, x0);
    let w = integrate_dense(&fstar, &w0, t0, t1, &opts)?;
    let end = if (t1 - t0) >= 0.0 {
        z.t_end().min(w.t_end())
    } else {
        z.t_end().max(w.t_end())
    };
    let truncated = z.blow_up.is_some() || w.blow_up.is_some();
    let mut worst: f64 = 0.0;
    for i in 0..DEFAULT_SAMPLES {
        let t = t0 + (end - t0) * i as f64 / (DEFAULT_SAMPLES - 1) as f64;
        let az = mat_vec(&a.value(t)?, &z.eval(t)?);
        let wt = w.eval(t)?;
        let gap: Vec<f64> = wt.iter().zip(&az).map(|(p, q)| p - q).collect();
        worst = worst.max(norm2(&gap) / (1.0 + norm2(&az)));
    }
    Ok(CorrespondenceReport {
        max_deviation: worst,
        t_end: end,
        truncated,
    })
}
