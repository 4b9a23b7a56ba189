//! Binary variables inside linear circuits: decoding, bit extraction,
//! Boolean simulation and multiplication by binary operands.

use std::collections::HashMap;

use circuit_core::rational::pow2;
use circuit_core::{CircuitBuilder, EvalTrace, LinearCircuit, Rational};
use num_traits::{One, Zero};

use crate::boolean::{BoolGate, BooleanCircuit, LookupTable};
use crate::error::GadgetError;

/// Sign-magnitude binary variable. Bit `k` (0-based, most significant
/// first) of either bank has weight `2^(int_bits − 1 − k)`, so with
/// `int_bits = 0` the weights are `1/2, 1/4, …`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryVar {
    pub int_bits: u32,
    pub plus: Vec<usize>,
    pub minus: Vec<usize>,
}

impl BinaryVar {
    pub fn width(&self) -> usize {
        self.plus.len()
    }

    pub fn weight(&self, k: usize) -> Rational {
        pow2(self.int_bits as i64 - 1 - k as i64)
    }

    /// Decoded value if every bit is 0 or 1 and at most one bank is nonzero.
    pub fn read(&self, t: &EvalTrace) -> Option<Rational> {
        let mut value = Rational::zero();
        let (mut pos, mut neg) = (false, false);
        for (k, (&p, &m)) in self.plus.iter().zip(&self.minus).enumerate() {
            let (vp, vm) = (t.value(p), t.value(m));
            for v in [vp, vm] {
                if !v.is_zero() && !v.is_one() {
                    return None;
                }
            }
            pos |= vp.is_one();
            neg |= vm.is_one();
            value += self.weight(k) * (vp - vm);
        }
        if pos && neg {
            return None;
        }
        Some(value)
    }
}

/// A `CircuitBuilder` with cached constant wires.
pub struct GadgetBuilder {
    pub inner: CircuitBuilder,
    constants: HashMap<Rational, usize>,
}

impl GadgetBuilder {
    pub fn new(input_count: usize) -> Self {
        GadgetBuilder { inner: CircuitBuilder::new(input_count), constants: HashMap::new() }
    }

    /// Wire holding `c`: an affine gate without inputs, so exact under any π.
    pub fn constant(&mut self, c: Rational) -> usize {
        if let Some(&w) = self.constants.get(&c) {
            return w;
        }
        let w = self.inner.constant(c.clone());
        self.constants.insert(c, w);
        w
    }

    pub fn lin(&mut self, terms: Vec<(Rational, usize)>, c: Rational) -> usize {
        self.inner.lin(terms, c)
    }

    pub fn tl(&mut self, terms: Vec<(Rational, usize)>, c: Rational) -> usize {
        self.inner.tl(terms, c)
    }

    pub fn min(&mut self, left: usize, right: usize) -> usize {
        self.inner.min(left, right)
    }

    pub fn max(&mut self, left: usize, right: usize) -> usize {
        self.inner.max(left, right)
    }

    /// Encodes a dyadic constant on constant wires.
    pub fn constant_var(&mut self, value: &Rational, int_bits: u32, frac_bits: u32) -> Result<BinaryVar, GadgetError> {
        let width = (int_bits + frac_bits) as usize;
        let mag = num_traits::Signed::abs(value) * pow2(frac_bits as i64);
        if !mag.is_integer() || mag >= pow2(width as i64) {
            return Err(GadgetError::WidthBudget(format!("{value} needs more than {int_bits}.{frac_bits} bits")));
        }
        let mag = mag.to_integer();
        let (one, zero) = (self.constant(Rational::one()), self.constant(Rational::zero()));
        let bits: Vec<usize> = (0..width).map(|k| if mag.bit((width - 1 - k) as u64) { one } else { zero }).collect();
        let zeros = vec![zero; width];
        Ok(if num_traits::Signed::is_negative(value) {
            BinaryVar { int_bits, plus: zeros, minus: bits }
        } else {
            BinaryVar { int_bits, plus: bits, minus: zeros }
        })
    }

    pub fn finish(self, output: usize) -> Result<LinearCircuit, GadgetError> {
        Ok(self.inner.finish(output)?)
    }
}

/// `Σ w_k b_k⁺ − Σ w_k b_k⁻` as one affine gate.
pub fn build_decode(b: &mut GadgetBuilder, v: &BinaryVar) -> usize {
    b.lin(decode_terms(v, &Rational::one()), Rational::zero())
}

pub fn decode_terms(v: &BinaryVar, scale: &Rational) -> Vec<(Rational, usize)> {
    let mut terms = Vec::with_capacity(2 * v.width());
    for k in 0..v.width() {
        let w = v.weight(k) * scale;
        terms.push((w.clone(), v.plus[k]));
        terms.push((-w, v.minus[k]));
    }
    terms
}

/// Output of [`build_extract_bits`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extraction {
    pub bits: BinaryVar,
    /// `x_1, …, x_n`, the residual after each bit.
    pub residuals: Vec<usize>,
}

/// `b_i = trunc((x_{i−1} − 2^{−i})/L)`, `x_i = x_{i−1} − b_i/2^i`, with the
/// minus bank tied to zero.
pub fn build_extract_bits(b: &mut GadgetBuilder, x: usize, n: usize, ell_cap: &Rational) -> Extraction {
    let inv = Rational::one() / ell_cap;
    let zero = b.constant(Rational::zero());
    let mut cur = x;
    let mut plus = Vec::with_capacity(n);
    let mut residuals = Vec::with_capacity(n);
    for i in 1..=n {
        let w = pow2(-(i as i64));
        let bit = b.tl(vec![(inv.clone(), cur)], -(&w * &inv));
        cur = b.lin(vec![(Rational::one(), cur), (-w, bit)], Rational::zero());
        plus.push(bit);
        residuals.push(cur);
    }
    Extraction { bits: BinaryVar { int_bits: 0, plus, minus: vec![zero; n] }, residuals }
}

/// NOT as `1 − v`, AND as `trunc(4(v_j + v_k − 3/2))`. Returns the wire of
/// every Boolean variable (inputs included), indexed from 0.
pub fn lower_boolean_all(b: &mut GadgetBuilder, g: &BooleanCircuit, inputs: &[usize]) -> Vec<usize> {
    assert_eq!(inputs.len(), g.input_count, "Boolean input arity");
    let four = Rational::from_integer(4.into());
    let mut wires: Vec<usize> = inputs.to_vec();
    for gate in &g.gates {
        let w = match *gate {
            BoolGate::Not { input, .. } => b.lin(vec![(-Rational::one(), wires[input - 1])], Rational::one()),
            BoolGate::And { left, right, .. } => b.tl(
                vec![(four.clone(), wires[left - 1]), (four.clone(), wires[right - 1])],
                Rational::from_integer((-6).into()),
            ),
        };
        wires.push(w);
    }
    wires
}

/// Wires of the Boolean circuit's outputs.
pub fn lower_boolean(b: &mut GadgetBuilder, g: &BooleanCircuit, inputs: &[usize]) -> Vec<usize> {
    let all = lower_boolean_all(b, g, inputs);
    g.outputs.iter().map(|&o| all[o - 1]).collect()
}

/// `4(1 − b) + max(−4, x − 8(1 − b))`.
pub fn build_bit_multiply(b: &mut GadgetBuilder, x: usize, bit: usize) -> usize {
    let eight = Rational::from_integer(8.into());
    let four = Rational::from_integer(4.into());
    let t = b.lin(vec![(Rational::one(), x), (eight.clone(), bit)], -eight);
    let c = b.constant(-four.clone());
    let m = b.max(c, t);
    b.lin(vec![(-four.clone(), bit), (Rational::one(), m)], four)
}

/// `Σ w_k BM(x, y_k⁺) − Σ w_k BM(x, y_k⁻)`. Bits on the constant-zero wire
/// are skipped, since `BM(x, 0) = 0` under every admissible π.
pub fn build_cont_times_bin(b: &mut GadgetBuilder, x: usize, y: &BinaryVar) -> usize {
    let zero = b.constant(Rational::zero());
    let mut terms = Vec::new();
    for k in 0..y.width() {
        let w = y.weight(k);
        for (bank, sign) in [(&y.plus, Rational::one()), (&y.minus, -Rational::one())] {
            if bank[k] == zero {
                continue;
            }
            let bm = build_bit_multiply(b, x, bank[k]);
            terms.push((&w * &sign, bm));
        }
    }
    b.lin(terms, Rational::zero())
}

/// `CTB(x₁ − Dec p¹, g¹) + CTB(x₂ − Dec p², g²) + Dec a`.
#[allow(clippy::too_many_arguments)]
pub fn build_affine(
    b: &mut GadgetBuilder,
    x1: usize,
    x2: usize,
    p1: &BinaryVar,
    p2: &BinaryVar,
    a: &BinaryVar,
    g1: &BinaryVar,
    g2: &BinaryVar,
) -> usize {
    let mut d1 = decode_terms(p1, &-Rational::one());
    d1.push((Rational::one(), x1));
    let d1 = b.lin(d1, Rational::zero());
    let mut d2 = decode_terms(p2, &-Rational::one());
    d2.push((Rational::one(), x2));
    let d2 = b.lin(d2, Rational::zero());
    let c1 = build_cont_times_bin(b, d1, g1);
    let c2 = build_cont_times_bin(b, d2, g2);
    let mut terms = decode_terms(a, &Rational::one());
    terms.push((Rational::one(), c1));
    terms.push((Rational::one(), c2));
    b.lin(terms, Rational::zero())
}

/// Minterm indicators of `bits` (most significant first), via an AND tree
/// lowered like any Boolean circuit. With no bits, the single indicator is
/// the constant 1.
pub fn build_minterms(b: &mut GadgetBuilder, bits: &[usize]) -> Vec<usize> {
    let four = Rational::from_integer(4.into());
    let mut out = vec![b.constant(Rational::one())];
    for (depth, &v) in bits.iter().enumerate() {
        let neg = b.lin(vec![(-Rational::one(), v)], Rational::one());
        let mut next = Vec::with_capacity(out.len() * 2);
        for &m in &out {
            for lit in [neg, v] {
                next.push(if depth == 0 {
                    lit
                } else {
                    b.tl(vec![(four.clone(), m), (four.clone(), lit)], Rational::from_integer((-6).into()))
                });
            }
        }
        out = next;
    }
    out
}

/// Value selected by mutually exclusive 0/1 indicators: `Σ_m ind_m · v_m`.
/// Rows with value 0 contribute nothing.
pub fn select_terms(indicators: &[usize], values: &[Rational]) -> Vec<(Rational, usize)> {
    indicators
        .iter()
        .zip(values)
        .filter(|(_, v)| !v.is_zero())
        .map(|(&w, v)| (v.clone(), w))
        .collect()
}

/// Evaluates a truth table on wires: minterm decoder, then each output bit
/// as the affine sum of the minterms where it is set. Outputs that are 0 on
/// every row become the constant-zero wire.
pub fn build_lookup(b: &mut GadgetBuilder, bits: &[usize], table: &LookupTable) -> Vec<usize> {
    assert_eq!(bits.len(), table.in_bits, "lookup input arity");
    let minterms = build_minterms(b, bits);
    lookup_from_minterms(b, &minterms, table)
}

pub fn lookup_from_minterms(b: &mut GadgetBuilder, minterms: &[usize], table: &LookupTable) -> Vec<usize> {
    let zero = b.constant(Rational::zero());
    (0..table.out_bits)
        .map(|o| {
            let terms: Vec<(Rational, usize)> = minterms
                .iter()
                .zip(&table.rows)
                .filter(|(_, row)| row[o])
                .map(|(&m, _)| (Rational::one(), m))
                .collect();
            if terms.is_empty() {
                zero
            } else {
                b.lin(terms, Rational::zero())
            }
        })
        .collect()
}

/// Perturbable gates of `c` with wire index in `range`.
pub fn perturbable_in(c: &LinearCircuit, range: std::ops::Range<usize>) -> Vec<usize> {
    range
        .filter(|w| matches!(c.gate_at(*w), Some(g) if g.is_perturbable()))
        .collect()
}
