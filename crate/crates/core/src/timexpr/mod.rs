//! Closed-form scalar functions of time.
//!
//! A [`TimeExpr`] is an immutable expression DAG over the time variable `t`
//! built from numeric literals, the four arithmetic operations, nonnegative
//! integer powers and the unary functions `exp`, `sin` and `cos`.
//! Subtrees are reference counted so that large coefficient expressions
//! produced by symbolic pushforwards share their building blocks.
//!
//! Differentiation is exact (product, quotient and chain rules). The only
//! rewriting performed is constant folding of literal-only subtrees and
//! elimination of literal `0`/`1` operands in the arithmetic constructors.

mod parse;
mod tape;

use std::collections::HashMap;
use std::fmt;
use std::ops;
use std::sync::Arc;

use thiserror::Error;

pub use parse::{parse_expr, ParseError, ParseErrorKind};
pub use tape::Tape;

/// Denominators with magnitude at or below this value are treated as poles.
pub const POLE_THRESHOLD: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Sin,
    Cos,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        match name {
            "exp" => Some(Func::Exp),
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            _ => None,
        }
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Func::Exp => x.exp(),
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Num(f64),
    T,
    Neg(TimeExpr),
    Add(TimeExpr, TimeExpr),
    Sub(TimeExpr, TimeExpr),
    Mul(TimeExpr, TimeExpr),
    Div(TimeExpr, TimeExpr),
    Pow(TimeExpr, u32),
    Func(Func, TimeExpr),
}

/// Shared, immutable expression node. Equality is structural.
#[derive(Clone)]
pub struct TimeExpr(Arc<Node>);

impl PartialEq for TimeExpr {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || *self.0 == *other.0
    }
}

impl fmt::Debug for TimeExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TimeExpr({self})")
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("division by near-zero value {value:e} at t = {t} in `{subexpr}`")]
pub struct EvalError {
    pub subexpr: String,
    pub t: f64,
    pub value: f64,
}

impl TimeExpr {
    /// Wraps a node without any folding.
    pub fn from_node(node: Node) -> Self {
        TimeExpr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub(crate) fn ptr(&self) -> *const Node {
        Arc::as_ptr(&self.0)
    }

    pub fn num(x: f64) -> Self {
        Self::from_node(Node::Num(x))
    }

    pub fn zero() -> Self {
        Self::num(0.0)
    }

    pub fn one() -> Self {
        Self::num(1.0)
    }

    pub fn t() -> Self {
        Self::from_node(Node::T)
    }

    pub fn as_num(&self) -> Option<f64> {
        match *self.0 {
            Node::Num(x) => Some(x),
            _ => None,
        }
    }

    /// Literal zero (structurally, not by evaluation).
    pub fn is_zero_literal(&self) -> bool {
        self.as_num() == Some(0.0)
    }

    pub fn is_one_literal(&self) -> bool {
        self.as_num() == Some(1.0)
    }

    pub fn neg(&self) -> Self {
        match *self.0 {
            Node::Num(x) => Self::num(-x),
            _ => Self::from_node(Node::Neg(self.clone())),
        }
    }

    pub fn add(&self, rhs: &Self) -> Self {
        match (self.as_num(), rhs.as_num()) {
            (Some(a), Some(b)) => Self::num(a + b),
            (Some(0.0), _) => rhs.clone(),
            (_, Some(0.0)) => self.clone(),
            _ => Self::from_node(Node::Add(self.clone(), rhs.clone())),
        }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        match (self.as_num(), rhs.as_num()) {
            (Some(a), Some(b)) => Self::num(a - b),
            (Some(0.0), _) => rhs.neg(),
            (_, Some(0.0)) => self.clone(),
            _ => Self::from_node(Node::Sub(self.clone(), rhs.clone())),
        }
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        match (self.as_num(), rhs.as_num()) {
            (Some(a), Some(b)) => Self::num(a * b),
            (Some(0.0), _) => Self::zero(),
            (_, Some(0.0)) => Self::zero(),
            (Some(1.0), _) => rhs.clone(),
            (_, Some(1.0)) => self.clone(),
            (Some(-1.0), _) => rhs.neg(),
            (_, Some(-1.0)) => self.neg(),
            _ => Self::from_node(Node::Mul(self.clone(), rhs.clone())),
        }
    }

    pub fn div(&self, rhs: &Self) -> Self {
        match (self.as_num(), rhs.as_num()) {
            (Some(a), Some(b)) if b != 0.0 => Self::num(a / b),
            (_, Some(1.0)) => self.clone(),
            (Some(0.0), _) => Self::zero(),
            _ => Self::from_node(Node::Div(self.clone(), rhs.clone())),
        }
    }

    pub fn powi(&self, n: u32) -> Self {
        match (n, self.as_num()) {
            (0, _) => Self::one(),
            (1, _) => self.clone(),
            (_, Some(a)) => Self::num(a.powi(n as i32)),
            _ => Self::from_node(Node::Pow(self.clone(), n)),
        }
    }

    pub fn func(f: Func, arg: &Self) -> Self {
        match arg.as_num() {
            Some(a) => Self::num(f.apply(a)),
            None => Self::from_node(Node::Func(f, arg.clone())),
        }
    }

    pub fn exp(&self) -> Self {
        Self::func(Func::Exp, self)
    }

    pub fn sin(&self) -> Self {
        Self::func(Func::Sin, self)
    }

    pub fn cos(&self) -> Self {
        Self::func(Func::Cos, self)
    }

    /// Number of distinct nodes in the DAG.
    pub fn node_count(&self) -> usize {
        fn walk(e: &TimeExpr, seen: &mut std::collections::HashSet<*const Node>) {
            if !seen.insert(e.ptr()) {
                return;
            }
            match e.node() {
                Node::Num(_) | Node::T => {}
                Node::Neg(a) | Node::Pow(a, _) | Node::Func(_, a) => walk(a, seen),
                Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                    walk(a, seen);
                    walk(b, seen);
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        walk(self, &mut seen);
        seen.len()
    }

    /// True when the expression does not mention `t`.
    pub fn is_constant(&self) -> bool {
        match self.node() {
            Node::Num(_) => true,
            Node::T => false,
            Node::Neg(a) | Node::Pow(a, _) | Node::Func(_, a) => a.is_constant(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                a.is_constant() && b.is_constant()
            }
        }
    }

    /// Evaluates the expression at `t`.
    pub fn eval(&self, t: f64) -> Result<f64, EvalError> {
        let mut memo = HashMap::new();
        self.eval_memo(t, &mut memo)
    }

    fn eval_memo(&self, t: f64, memo: &mut HashMap<*const Node, f64>) -> Result<f64, EvalError> {
        if let Some(&v) = memo.get(&self.ptr()) {
            return Ok(v);
        }
        let v = match self.node() {
            Node::Num(x) => *x,
            Node::T => t,
            Node::Neg(a) => -a.eval_memo(t, memo)?,
            Node::Add(a, b) => a.eval_memo(t, memo)? + b.eval_memo(t, memo)?,
            Node::Sub(a, b) => a.eval_memo(t, memo)? - b.eval_memo(t, memo)?,
            Node::Mul(a, b) => a.eval_memo(t, memo)? * b.eval_memo(t, memo)?,
            Node::Div(a, b) => {
                let num = a.eval_memo(t, memo)?;
                let den = b.eval_memo(t, memo)?;
                if den.abs() <= POLE_THRESHOLD {
                    return Err(EvalError {
                        subexpr: self.to_string(),
                        t,
                        value: den,
                    });
                }
                num / den
            }
            Node::Pow(a, n) => a.eval_memo(t, memo)?.powi(*n as i32),
            Node::Func(f, a) => f.apply(a.eval_memo(t, memo)?),
        };
        memo.insert(self.ptr(), v);
        Ok(v)
    }

    /// Looks for a pole in `[lo, hi]`: a denominator that vanishes at one of
    /// `samples + 1` equispaced points or changes sign between two of them.
    /// Sign changes are bisected to the crossing. Even-order zeros strictly
    /// between samples are missed.
    pub fn find_pole(&self, lo: f64, hi: f64, samples: usize) -> Option<EvalError> {
        let mut quotients = Vec::new();
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(e) = stack.pop() {
            if !seen.insert(e.ptr()) {
                continue;
            }
            match e.node() {
                Node::Num(_) | Node::T => {}
                Node::Neg(a) | Node::Pow(a, _) | Node::Func(_, a) => stack.push(a.clone()),
                Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) => {
                    stack.push(a.clone());
                    stack.push(b.clone());
                }
                Node::Div(a, b) => {
                    quotients.push(e.clone());
                    stack.push(a.clone());
                    stack.push(b.clone());
                }
            }
        }
        let samples = samples.max(1);
        let at = |k: usize| lo + (hi - lo) * k as f64 / samples as f64;
        for q in quotients {
            let Node::Div(_, den) = q.node() else {
                unreachable!()
            };
            let mut prev: Option<(f64, f64)> = None;
            for k in 0..=samples {
                let t = at(k);
                let v = match den.eval(t) {
                    Ok(v) => v,
                    Err(e) => return Some(e),
                };
                if v.abs() <= POLE_THRESHOLD {
                    return Some(EvalError {
                        subexpr: q.to_string(),
                        t,
                        value: v,
                    });
                }
                if let Some((tp, vp)) = prev {
                    if vp.signum() != v.signum() {
                        let (mut a, mut b, mut va) = (tp, t, vp);
                        for _ in 0..200 {
                            let m = 0.5 * (a + b);
                            if m <= a.min(b) || m >= a.max(b) {
                                break;
                            }
                            let Ok(vm) = den.eval(m) else { break };
                            if vm.signum() == va.signum() {
                                a = m;
                                va = vm;
                            } else {
                                b = m;
                            }
                        }
                        let t = 0.5 * (a + b);
                        return Some(EvalError {
                            subexpr: q.to_string(),
                            t,
                            value: den.eval(t).unwrap_or(0.0),
                        });
                    }
                }
                prev = Some((t, v));
            }
        }
        None
    }

    /// Exact derivative with respect to `t`.
    pub fn diff(&self) -> TimeExpr {
        let mut memo = HashMap::new();
        self.diff_memo(&mut memo)
    }

    fn diff_memo(&self, memo: &mut HashMap<*const Node, TimeExpr>) -> TimeExpr {
        if let Some(d) = memo.get(&self.ptr()) {
            return d.clone();
        }
        let d = match self.node() {
            Node::Num(_) => TimeExpr::zero(),
            Node::T => TimeExpr::one(),
            Node::Neg(a) => a.diff_memo(memo).neg(),
            Node::Add(a, b) => a.diff_memo(memo).add(&b.diff_memo(memo)),
            Node::Sub(a, b) => a.diff_memo(memo).sub(&b.diff_memo(memo)),
            Node::Mul(a, b) => {
                let da = a.diff_memo(memo);
                let db = b.diff_memo(memo);
                da.mul(b).add(&a.mul(&db))
            }
            Node::Div(a, b) => {
                let da = a.diff_memo(memo);
                let db = b.diff_memo(memo);
                da.mul(b).sub(&a.mul(&db)).div(&b.powi(2))
            }
            Node::Pow(a, n) => match n {
                0 => TimeExpr::zero(),
                _ => TimeExpr::num(*n as f64)
                    .mul(&a.powi(n - 1))
                    .mul(&a.diff_memo(memo)),
            },
            Node::Func(f, a) => {
                let da = a.diff_memo(memo);
                match f {
                    Func::Exp => self.mul(&da),
                    Func::Sin => a.cos().mul(&da),
                    Func::Cos => a.sin().neg().mul(&da),
                }
            }
        };
        memo.insert(self.ptr(), d.clone());
        d
    }

    /// Sampled equality: agreement at 20 points of [-1, 1] within `1e-10`
    /// relative. Points where either side has a pole are skipped.
    pub fn sample_eq(&self, other: &TimeExpr) -> bool {
        (0..20).all(|i| {
            let t = -1.0 + 2.0 * i as f64 / 19.0;
            match (self.eval(t), other.eval(t)) {
                (Ok(a), Ok(b)) => (a - b).abs() <= 1e-10 * (1.0 + a.abs().max(b.abs())),
                _ => true,
            }
        })
    }
}

impl From<f64> for TimeExpr {
    fn from(x: f64) -> Self {
        TimeExpr::num(x)
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident) => {
        impl ops::$trait<&TimeExpr> for &TimeExpr {
            type Output = TimeExpr;
            fn $method(self, rhs: &TimeExpr) -> TimeExpr {
                TimeExpr::$method(self, rhs)
            }
        }
        impl ops::$trait<TimeExpr> for TimeExpr {
            type Output = TimeExpr;
            fn $method(self, rhs: TimeExpr) -> TimeExpr {
                TimeExpr::$method(&self, &rhs)
            }
        }
    };
}

binop!(Add, add);
binop!(Sub, sub);
binop!(Mul, mul);
binop!(Div, div);

impl ops::Neg for &TimeExpr {
    type Output = TimeExpr;
    fn neg(self) -> TimeExpr {
        TimeExpr::neg(self)
    }
}

impl ops::Neg for TimeExpr {
    type Output = TimeExpr;
    fn neg(self) -> TimeExpr {
        TimeExpr::neg(&self)
    }
}

/// Formats a literal so that it reads back to the same `f64`.
pub fn format_number(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x:?}")
    }
}

// Printing precedence: 0 = sum, 1 = product, 2 = power, 3 = base.
fn level(node: &Node) -> u8 {
    match node {
        Node::Add(..) | Node::Sub(..) => 0,
        Node::Mul(..) | Node::Div(..) => 1,
        Node::Pow(..) => 2,
        Node::Num(x) if *x < 0.0 => 2,
        Node::Neg(_) => 2,
        Node::Num(_) | Node::T | Node::Func(..) => 3,
    }
}

fn write_at(e: &TimeExpr, min_level: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if level(e.node()) < min_level {
        write!(f, "(")?;
        write_node(e, f)?;
        write!(f, ")")
    } else {
        write_node(e, f)
    }
}

fn write_node(e: &TimeExpr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e.node() {
        Node::Num(x) => write!(f, "{}", format_number(*x)),
        Node::T => write!(f, "t"),
        Node::Neg(a) => {
            write!(f, "-")?;
            write_at(a, 3, f)
        }
        Node::Add(a, b) => {
            write_at(a, 0, f)?;
            write!(f, " + ")?;
            write_at(b, 1, f)
        }
        Node::Sub(a, b) => {
            write_at(a, 0, f)?;
            write!(f, " - ")?;
            write_at(b, 1, f)
        }
        Node::Mul(a, b) => {
            write_at(a, 1, f)?;
            write!(f, "*")?;
            write_at(b, 3, f)
        }
        Node::Div(a, b) => {
            write_at(a, 1, f)?;
            write!(f, "/")?;
            write_at(b, 3, f)
        }
        Node::Pow(a, n) => {
            write_at(a, 3, f)?;
            write!(f, "^{n}")
        }
        Node::Func(func, a) => {
            write!(f, "{}(", func.name())?;
            write_at(a, 0, f)?;
            write!(f, ")")
        }
    }
}

impl fmt::Display for TimeExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(self, f)
    }
}
