//! Gate-list representation of linear arithmetic circuits.
//!
//! Wires are numbered from 1. Wires `1..=input_count` are the inputs and
//! gate number `t` (0-based in [`LinearCircuit::gates`]) drives wire
//! `input_count + 1 + t`. Every gate reads only strictly earlier wires.

use num_traits::{One, Signed, Zero};

use crate::error::CircuitError;
use crate::rational::Rational;

/// `Σ a_t · x_{j_t} + c` over earlier wires.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearForm {
    pub terms: Vec<(Rational, usize)>,
    pub constant: Rational,
}

impl LinearForm {
    pub fn new(terms: Vec<(Rational, usize)>, constant: Rational) -> Self {
        LinearForm { terms, constant }
    }

    /// The constant form `c`.
    pub fn constant(c: Rational) -> Self {
        LinearForm { terms: Vec::new(), constant: c }
    }

    /// Evaluates the form; `wires[w - 1]` holds wire `w`.
    pub fn eval(&self, wires: &[Rational]) -> Rational {
        let mut acc = self.constant.clone();
        for (a, j) in &self.terms {
            let x = &wires[*j - 1];
            if a.is_one() {
                acc += x;
            } else if a.is_zero() || x.is_zero() {
            } else if (-a).is_one() {
                acc -= x;
            } else {
                acc += a * x;
            }
        }
        acc
    }

    /// `Σ |a_t|`.
    pub fn coefficient_l1(&self) -> Rational {
        self.terms
            .iter()
            .fold(Rational::zero(), |acc, (a, _)| acc + a.abs())
    }
}

/// One gate of a circuit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Gate {
    /// `trunc01(form + π)`.
    TruncLinear(LinearForm),
    /// `form`, never perturbed.
    AffineLinear(LinearForm),
    /// `trunc_[lo,hi](x_input + π)`.
    TruncInterval {
        lo: Rational,
        hi: Rational,
        input: usize,
    },
    /// `min(x_left, x_right + π)`.
    Min { left: usize, right: usize },
    /// `max(x_left, x_right + π)`.
    Max { left: usize, right: usize },
}

impl Gate {
    /// Wires this gate reads, in syntactic order.
    pub fn inputs(&self) -> Vec<usize> {
        match self {
            Gate::TruncLinear(f) | Gate::AffineLinear(f) => {
                f.terms.iter().map(|(_, j)| *j).collect()
            }
            Gate::TruncInterval { input, .. } => vec![*input],
            Gate::Min { left, right } | Gate::Max { left, right } => vec![*left, *right],
        }
    }

    /// Whether the gate carries a perturbation slot.
    pub fn is_perturbable(&self) -> bool {
        !matches!(self, Gate::AffineLinear(_))
    }

    /// Convenience constructor for the classic two-input trunc-linear gate.
    pub fn tl2(a: Rational, j: usize, b: Rational, k: usize, c: Rational) -> Gate {
        Gate::TruncLinear(LinearForm::new(vec![(a, j), (b, k)], c))
    }
}

/// A validated circuit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearCircuit {
    input_count: usize,
    gates: Vec<Gate>,
    output: usize,
}

impl LinearCircuit {
    /// Validates topology, index ranges and interval bounds.
    pub fn new(input_count: usize, gates: Vec<Gate>, output: usize) -> Result<Self, CircuitError> {
        if input_count == 0 {
            return Err(CircuitError::NoInputs);
        }
        for (t, gate) in gates.iter().enumerate() {
            let idx = input_count + 1 + t;
            for w in gate.inputs() {
                if w == 0 {
                    return Err(CircuitError::IndexOutOfRange { index: w, max: idx - 1 });
                }
                if w >= idx {
                    return Err(CircuitError::Topology { gate: idx, wire: w });
                }
            }
            if let Gate::TruncInterval { lo, hi, .. } = gate {
                if lo >= hi {
                    return Err(CircuitError::EmptyInterval { gate: idx });
                }
            }
        }
        let max = input_count + gates.len();
        if output == 0 || output > max {
            return Err(CircuitError::IndexOutOfRange { index: output, max });
        }
        Ok(LinearCircuit { input_count, gates, output })
    }

    pub fn input_count(&self) -> usize {
        self.input_count
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn output(&self) -> usize {
        self.output
    }

    /// Total number of wires `N` (inputs plus gates).
    pub fn wire_count(&self) -> usize {
        self.input_count + self.gates.len()
    }

    /// Wire index driven by the `t`-th gate.
    pub fn gate_wire(&self, t: usize) -> usize {
        self.input_count + 1 + t
    }

    /// Gate driving `wire`, or `None` for inputs.
    pub fn gate_at(&self, wire: usize) -> Option<&Gate> {
        if wire <= self.input_count {
            None
        } else {
            self.gates.get(wire - self.input_count - 1)
        }
    }

    /// Iterates `(wire, gate)` pairs in topological order.
    pub fn indexed_gates(&self) -> impl Iterator<Item = (usize, &Gate)> {
        let m = self.input_count;
        self.gates.iter().enumerate().map(move |(t, g)| (m + 1 + t, g))
    }

    /// Wire indices of all perturbable gates.
    pub fn perturbable_wires(&self) -> Vec<usize> {
        self.indexed_gates()
            .filter(|(_, g)| g.is_perturbable())
            .map(|(w, _)| w)
            .collect()
    }

    /// True if every gate is trunc-linear.
    pub fn is_trunc_only(&self) -> bool {
        self.gates.iter().all(|g| matches!(g, Gate::TruncLinear(_)))
    }
}

/// Incremental construction of circuits; each push returns the new wire.
#[derive(Debug, Clone)]
pub struct CircuitBuilder {
    input_count: usize,
    gates: Vec<Gate>,
}

impl CircuitBuilder {
    pub fn new(input_count: usize) -> Self {
        CircuitBuilder { input_count, gates: Vec::new() }
    }

    /// Index that the next pushed gate will receive.
    pub fn next_wire(&self) -> usize {
        self.input_count + 1 + self.gates.len()
    }

    pub fn input_count(&self) -> usize {
        self.input_count
    }

    pub fn gate_count(&self) -> usize {
        self.gates.len()
    }

    pub fn push(&mut self, gate: Gate) -> usize {
        let w = self.next_wire();
        self.gates.push(gate);
        w
    }

    pub fn tl(&mut self, terms: Vec<(Rational, usize)>, c: Rational) -> usize {
        self.push(Gate::TruncLinear(LinearForm::new(terms, c)))
    }

    pub fn lin(&mut self, terms: Vec<(Rational, usize)>, c: Rational) -> usize {
        self.push(Gate::AffineLinear(LinearForm::new(terms, c)))
    }

    pub fn truncab(&mut self, lo: Rational, hi: Rational, input: usize) -> usize {
        self.push(Gate::TruncInterval { lo, hi, input })
    }

    pub fn min(&mut self, left: usize, right: usize) -> usize {
        self.push(Gate::Min { left, right })
    }

    pub fn max(&mut self, left: usize, right: usize) -> usize {
        self.push(Gate::Max { left, right })
    }

    /// A constant wire (unperturbed affine gate with no terms).
    pub fn constant(&mut self, c: Rational) -> usize {
        self.lin(Vec::new(), c)
    }

    pub fn finish(self, output: usize) -> Result<LinearCircuit, CircuitError> {
        LinearCircuit::new(self.input_count, self.gates, output)
    }
}
