//! Fixed-point arithmetic on binary variables through Boolean ripple
//! adders, lowered with the NOT/AND simulation.

use circuit_core::rational::{dyadic_bits, pow2};
use circuit_core::Rational;
use num_traits::Signed;

use crate::binary::{lower_boolean, BinaryVar, GadgetBuilder};
use crate::boolean::{BoolBuilder, BooleanCircuit};
use crate::error::GadgetError;

/// Expression over binary variables (referenced by index) and dyadic constants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BinExpr {
    Var(usize),
    Const(Rational),
    Add(Box<BinExpr>, Box<BinExpr>),
    Sub(Box<BinExpr>, Box<BinExpr>),
    Neg(Box<BinExpr>),
    /// Multiplication by a dyadic constant.
    Scale(Box<BinExpr>, Rational),
}

impl BinExpr {
    pub fn var(i: usize) -> Self {
        BinExpr::Var(i)
    }

    pub fn constant(c: Rational) -> Self {
        BinExpr::Const(c)
    }

    pub fn add(self, other: BinExpr) -> Self {
        BinExpr::Add(Box::new(self), Box::new(other))
    }

    pub fn sub(self, other: BinExpr) -> Self {
        BinExpr::Sub(Box::new(self), Box::new(other))
    }

    pub fn neg(self) -> Self {
        BinExpr::Neg(Box::new(self))
    }

    pub fn scale(self, c: Rational) -> Self {
        BinExpr::Scale(Box::new(self), c)
    }
}

/// Integer and fractional bits available to every intermediate value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WidthBudget {
    pub int_bits: u32,
    pub frac_bits: u32,
}

fn var_frac(v: &BinaryVar) -> u32 {
    v.width() as u32 - v.int_bits
}

fn budget_err(msg: String) -> GadgetError {
    GadgetError::WidthBudget(msg)
}

/// Largest magnitude and fractional precision of every subexpression,
/// checked against the budget.
fn analyse(e: &BinExpr, vars: &[BinaryVar], w: WidthBudget) -> Result<(Rational, u32), GadgetError> {
    let limit = pow2(w.int_bits as i64);
    let (mag, frac) = match e {
        BinExpr::Var(i) => {
            let v = vars.get(*i).ok_or_else(|| budget_err(format!("variable {i} is not supplied")))?;
            if v.int_bits > w.int_bits {
                return Err(budget_err(format!("variable {i} has {} integer bits", v.int_bits)));
            }
            (pow2(v.int_bits as i64) - pow2(-(var_frac(v) as i64)), var_frac(v))
        }
        BinExpr::Const(c) => {
            let bits = dyadic_bits(c).ok_or_else(|| budget_err(format!("{c} is not dyadic")))?;
            (c.abs(), bits)
        }
        BinExpr::Add(a, b) | BinExpr::Sub(a, b) => {
            let (ma, fa) = analyse(a, vars, w)?;
            let (mb, fb) = analyse(b, vars, w)?;
            (ma + mb, fa.max(fb))
        }
        BinExpr::Neg(a) => analyse(a, vars, w)?,
        BinExpr::Scale(a, c) => {
            let bits = dyadic_bits(c).ok_or_else(|| budget_err(format!("{c} is not dyadic")))?;
            let (ma, fa) = analyse(a, vars, w)?;
            (ma * c.abs(), fa + bits)
        }
    };
    if mag >= limit {
        return Err(budget_err(format!("a subexpression can reach {mag}, beyond 2^{}", w.int_bits)));
    }
    if frac > w.frac_bits {
        return Err(budget_err(format!("a subexpression needs {frac} fractional bits")));
    }
    Ok((mag, frac))
}

/// Two's-complement word, least significant bit first, `I + F + 1` bits.
type Word = Vec<usize>;

struct Lowering<'a> {
    b: BoolBuilder,
    w: WidthBudget,
    len: usize,
    offsets: Vec<usize>,
    vars: &'a [BinaryVar],
}

impl Lowering<'_> {
    fn zero(&mut self) -> usize {
        self.b.zero().expect("inputs exist")
    }

    fn one(&mut self) -> usize {
        self.b.one().expect("inputs exist")
    }

    fn add(&mut self, x: &Word, y: &Word, carry_in: usize) -> Word {
        let mut c = carry_in;
        let mut out = Vec::with_capacity(self.len);
        for k in 0..self.len {
            let (s, nc) = self.b.full_add(x[k], y[k], c);
            out.push(s);
            c = nc;
        }
        out
    }

    fn negate(&mut self, x: &Word) -> Word {
        let inv: Word = x.iter().map(|&v| self.b.not(v)).collect();
        let z = vec![self.zero(); self.len];
        let one = self.one();
        self.add(&inv, &z, one)
    }

    /// Arithmetic shift by `k` (positive = towards higher weights).
    fn shift(&mut self, x: &Word, k: i64) -> Word {
        let zero = self.zero();
        let sign = x[self.len - 1];
        (0..self.len as i64)
            .map(|i| {
                let src = i - k;
                if src < 0 {
                    zero
                } else if src >= self.len as i64 {
                    sign
                } else {
                    x[src as usize]
                }
            })
            .collect()
    }

    fn magnitude(&mut self, bank: &[usize], v: &BinaryVar) -> Word {
        let zero = self.zero();
        let f = self.w.frac_bits as i64;
        let mut word = vec![zero; self.len];
        for (k, &bit) in bank.iter().enumerate() {
            // weight 2^(int_bits − 1 − k) sits at position F + int_bits − 1 − k
            let pos = f + v.int_bits as i64 - 1 - k as i64;
            word[pos as usize] = bit;
        }
        word
    }

    fn constant(&mut self, c: &Rational) -> Word {
        let scaled = (c.abs() * pow2(self.w.frac_bits as i64)).to_integer();
        let (zero, one) = (self.zero(), self.one());
        let word: Word = (0..self.len).map(|k| if scaled.bit(k as u64) { one } else { zero }).collect();
        if c.is_negative() {
            self.negate(&word)
        } else {
            word
        }
    }

    fn lower(&mut self, e: &BinExpr) -> Word {
        match e {
            BinExpr::Var(i) => {
                let v = &self.vars[*i];
                let off = self.offsets[*i];
                let plus: Vec<usize> = (0..v.width()).map(|k| off + k + 1).collect();
                let minus: Vec<usize> = (0..v.width()).map(|k| off + v.width() + k + 1).collect();
                let p = self.magnitude(&plus, v);
                let m = self.magnitude(&minus, v);
                let nm = self.negate(&m);
                let zero = self.zero();
                self.add(&p, &nm, zero)
            }
            BinExpr::Const(c) => self.constant(c),
            BinExpr::Add(a, b) => {
                let (x, y) = (self.lower(a), self.lower(b));
                let zero = self.zero();
                self.add(&x, &y, zero)
            }
            BinExpr::Sub(a, b) => {
                let (x, y) = (self.lower(a), self.lower(b));
                let ny: Word = y.iter().map(|&v| self.b.not(v)).collect();
                let one = self.one();
                self.add(&x, &ny, one)
            }
            BinExpr::Neg(a) => {
                let x = self.lower(a);
                self.negate(&x)
            }
            BinExpr::Scale(a, c) => {
                let x = self.lower(a);
                let word = if c.is_negative() { self.negate(&x) } else { x };
                // |c| = num / 2^d; add shifted copies for every set bit of num.
                let d = dyadic_bits(c).expect("checked dyadic") as i64;
                let num = (c.abs() * pow2(d)).to_integer();
                let zero = self.zero();
                let mut acc: Option<Word> = None;
                for k in 0..num.bits() {
                    if num.bit(k) {
                        let sh = self.shift(&word, k as i64 - d);
                        acc = Some(match acc {
                            None => sh,
                            Some(prev) => self.add(&prev, &sh, zero),
                        });
                    }
                }
                acc.unwrap_or_else(|| vec![zero; self.len])
            }
        }
    }
}

/// Builds the Boolean circuit for `expr` whose inputs are the plus then
/// minus banks of each variable in order, and whose outputs are the plus
/// then minus banks (most significant first) of the result.
pub fn binary_arith_circuit(expr: &BinExpr, vars: &[BinaryVar], w: WidthBudget) -> Result<BooleanCircuit, GadgetError> {
    analyse(expr, vars, w)?;
    let inputs: usize = vars.iter().map(|v| 2 * v.width()).sum();
    if inputs == 0 {
        return Err(GadgetError::Boolean("Boolean constants need at least one input bit".into()));
    }
    let mut offsets = Vec::with_capacity(vars.len());
    let mut acc = 0;
    for v in vars {
        offsets.push(acc);
        acc += 2 * v.width();
    }
    let len = (w.int_bits + w.frac_bits + 1) as usize;
    let mut l = Lowering { b: BoolBuilder::new(inputs), w, len, offsets, vars };
    let t = l.lower(expr);
    let s = t[len - 1];
    let flipped: Word = t.iter().map(|&v| l.b.xor(v, s)).collect();
    let zero = l.zero();
    let zeros = vec![zero; len];
    let mag = l.add(&flipped, &zeros, s);
    let ns = l.b.not(s);
    let width = len - 1;
    let mut plus = Vec::with_capacity(width);
    let mut minus = Vec::with_capacity(width);
    for k in (0..width).rev() {
        plus.push(l.b.and(mag[k], ns));
        minus.push(l.b.and(mag[k], s));
    }
    let outputs = plus.into_iter().chain(minus).collect();
    Ok(l.b.finish(outputs))
}

/// `E(expr)`: the result as a binary variable with `int_bits` integer and
/// `frac_bits` fractional bits.
pub fn build_binary_arith(
    b: &mut GadgetBuilder,
    expr: &BinExpr,
    vars: &[BinaryVar],
    w: WidthBudget,
) -> Result<BinaryVar, GadgetError> {
    let circuit = binary_arith_circuit(expr, vars, w)?;
    let inputs: Vec<usize> = vars.iter().flat_map(|v| v.plus.iter().chain(&v.minus).copied()).collect();
    let outs = lower_boolean(b, &circuit, &inputs);
    let width = (w.int_bits + w.frac_bits) as usize;
    Ok(BinaryVar { int_bits: w.int_bits, plus: outs[..width].to_vec(), minus: outs[width..].to_vec() })
}

/// Exact value of `expr` for decoded operands, for tests and reports.
pub fn eval_expr(expr: &BinExpr, values: &[Rational]) -> Rational {
    match expr {
        BinExpr::Var(i) => values[*i].clone(),
        BinExpr::Const(c) => c.clone(),
        BinExpr::Add(a, b) => eval_expr(a, values) + eval_expr(b, values),
        BinExpr::Sub(a, b) => eval_expr(a, values) - eval_expr(b, values),
        BinExpr::Neg(a) => -eval_expr(a, values),
        BinExpr::Scale(a, c) => eval_expr(a, values) * c,
    }
}
