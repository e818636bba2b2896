use std::collections::HashMap;

use super::{EvalError, Func, Node, TimeExpr, POLE_THRESHOLD};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Op {
    Const(u64),
    T,
    Neg(u32),
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Pow(u32, u32),
    Func(Func, u32),
}

/// A batch of expressions compiled to a straight-line program with
/// structurally identical subexpressions merged.
#[derive(Clone, Debug)]
pub struct Tape {
    ops: Vec<Op>,
    outputs: Vec<u32>,
    // Quotient nodes, kept for error messages.
    quotients: HashMap<u32, TimeExpr>,
}

struct Compiler {
    ops: Vec<Op>,
    interned: HashMap<Op, u32>,
    by_ptr: HashMap<*const Node, u32>,
    quotients: HashMap<u32, TimeExpr>,
}

impl Compiler {
    fn intern(&mut self, op: Op) -> u32 {
        if let Some(&id) = self.interned.get(&op) {
            return id;
        }
        let id = self.ops.len() as u32;
        self.ops.push(op);
        self.interned.insert(op, id);
        id
    }

    fn visit(&mut self, e: &TimeExpr) -> u32 {
        if let Some(&id) = self.by_ptr.get(&e.ptr()) {
            return id;
        }
        let op = match e.node() {
            Node::Num(x) => Op::Const(x.to_bits()),
            Node::T => Op::T,
            Node::Neg(a) => Op::Neg(self.visit(a)),
            Node::Add(a, b) => Op::Add(self.visit(a), self.visit(b)),
            Node::Sub(a, b) => Op::Sub(self.visit(a), self.visit(b)),
            Node::Mul(a, b) => Op::Mul(self.visit(a), self.visit(b)),
            Node::Div(a, b) => Op::Div(self.visit(a), self.visit(b)),
            Node::Pow(a, n) => Op::Pow(self.visit(a), *n),
            Node::Func(f, a) => Op::Func(*f, self.visit(a)),
        };
        let id = self.intern(op);
        if matches!(op, Op::Div(..)) {
            self.quotients.entry(id).or_insert_with(|| e.clone());
        }
        self.by_ptr.insert(e.ptr(), id);
        id
    }
}

impl Tape {
    pub fn compile(exprs: &[TimeExpr]) -> Tape {
        let mut c = Compiler {
            ops: Vec::new(),
            interned: HashMap::new(),
            by_ptr: HashMap::new(),
            quotients: HashMap::new(),
        };
        let outputs = exprs.iter().map(|e| c.visit(e)).collect();
        Tape {
            ops: c.ops,
            outputs,
            quotients: c.quotients,
        }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn outputs(&self) -> usize {
        self.outputs.len()
    }

    /// Evaluates every compiled expression at `t`, writing the results to
    /// `out` in input order.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<(), EvalError> {
        let mut slots = vec![0.0; self.ops.len()];
        for (i, op) in self.ops.iter().enumerate() {
            let s = |k: u32| slots[k as usize];
            let v = match *op {
                Op::Const(bits) => f64::from_bits(bits),
                Op::T => t,
                Op::Neg(a) => -s(a),
                Op::Add(a, b) => s(a) + s(b),
                Op::Sub(a, b) => s(a) - s(b),
                Op::Mul(a, b) => s(a) * s(b),
                Op::Div(a, b) => {
                    let den = s(b);
                    if den.abs() <= POLE_THRESHOLD {
                        let subexpr = self
                            .quotients
                            .get(&(i as u32))
                            .map(|e| e.to_string())
                            .unwrap_or_default();
                        return Err(EvalError {
                            subexpr,
                            t,
                            value: den,
                        });
                    }
                    s(a) / den
                }
                Op::Pow(a, n) => s(a).powi(n as i32),
                Op::Func(f, a) => f.apply(s(a)),
            };
            slots[i] = v;
        }
        for (o, &id) in out.iter_mut().zip(&self.outputs) {
            *o = slots[id as usize];
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; self.outputs.len()];
        self.eval_into(t, &mut out)?;
        Ok(out)
    }
}
