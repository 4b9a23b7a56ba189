//! Exact gate-by-gate evaluation under a perturbation vector.

use std::collections::BTreeMap;

use num_traits::{Signed, Zero};

use crate::circuit::{Gate, LinearCircuit};
use crate::error::CircuitError;
use crate::rational::{trunc01, trunc_interval, Rational};

/// Perturbations `π_i` keyed by gate wire, with a declared sup-norm bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerturbationVector {
    pub entries: BTreeMap<usize, Rational>,
    pub bound: Rational,
}

impl PerturbationVector {
    /// The all-zero perturbation.
    pub fn zero() -> Self {
        PerturbationVector { entries: BTreeMap::new(), bound: Rational::zero() }
    }

    /// Empty vector with the given bound.
    pub fn with_bound(bound: Rational) -> Self {
        PerturbationVector { entries: BTreeMap::new(), bound }
    }

    /// Sets `π_wire = value`, widening the bound if needed. Zero values are
    /// not stored.
    pub fn set(&mut self, wire: usize, value: Rational) {
        if value.abs() > self.bound {
            self.bound = value.abs();
        }
        if value.is_zero() {
            self.entries.remove(&wire);
        } else {
            self.entries.insert(wire, value);
        }
    }

    pub fn get(&self, wire: usize) -> Option<&Rational> {
        self.entries.get(&wire)
    }

    /// Largest `|π_i|` actually present.
    pub fn max_abs(&self) -> Rational {
        self.entries
            .values()
            .map(|v| v.abs())
            .max()
            .unwrap_or_else(Rational::zero)
    }

    /// Checks that only perturbable gates carry entries and all respect the bound.
    pub fn validate(&self, c: &LinearCircuit) -> Result<(), CircuitError> {
        for (w, v) in &self.entries {
            match c.gate_at(*w) {
                None => {
                    return Err(CircuitError::Perturbation(format!(
                        "wire {w} is not a gate"
                    )))
                }
                Some(g) if !g.is_perturbable() => {
                    return Err(CircuitError::Perturbation(format!(
                        "gate {w} is affine and cannot be perturbed"
                    )))
                }
                _ => {}
            }
            if v.abs() > self.bound {
                return Err(CircuitError::Perturbation(format!(
                    "entry at gate {w} exceeds the declared bound"
                )));
            }
        }
        Ok(())
    }
}

/// Values of every wire, inputs first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalTrace {
    pub wire_values: Vec<Rational>,
    pub output_index: usize,
}

impl EvalTrace {
    /// Value on wire `w` (1-based).
    pub fn value(&self, w: usize) -> &Rational {
        &self.wire_values[w - 1]
    }

    pub fn output(&self) -> &Rational {
        self.value(self.output_index)
    }
}

/// The quantity a perturbable gate compares against its breakpoints:
/// the perturbed argument for truncations, the difference
/// `x_left − (x_right + π)` for min/max; `None` for affine gates.
pub(crate) fn pre_activation(
    gate: &Gate,
    wires: &[Rational],
    pi: Option<&Rational>,
) -> Option<Rational> {
    let add_pi = |mut v: Rational| {
        if let Some(p) = pi {
            v += p;
        }
        v
    };
    match gate {
        Gate::TruncLinear(f) => Some(add_pi(f.eval(wires))),
        Gate::AffineLinear(_) => None,
        Gate::TruncInterval { input, .. } => Some(add_pi(wires[input - 1].clone())),
        Gate::Min { left, right } | Gate::Max { left, right } => {
            Some(&wires[left - 1] - add_pi(wires[right - 1].clone()))
        }
    }
}

/// Evaluates one gate given earlier wires.
pub(crate) fn eval_gate(gate: &Gate, wires: &[Rational], pi: Option<&Rational>) -> Rational {
    match gate {
        Gate::AffineLinear(f) => f.eval(wires),
        Gate::TruncLinear(f) => {
            let mut v = f.eval(wires);
            if let Some(p) = pi {
                v += p;
            }
            trunc01(&v)
        }
        Gate::TruncInterval { lo, hi, input } => {
            let mut v = wires[input - 1].clone();
            if let Some(p) = pi {
                v += p;
            }
            trunc_interval(lo, hi, &v)
        }
        Gate::Min { left, right } => {
            let mut r = wires[right - 1].clone();
            if let Some(p) = pi {
                r += p;
            }
            if wires[left - 1] <= r {
                wires[left - 1].clone()
            } else {
                r
            }
        }
        Gate::Max { left, right } => {
            let mut r = wires[right - 1].clone();
            if let Some(p) = pi {
                r += p;
            }
            if wires[left - 1] >= r {
                wires[left - 1].clone()
            } else {
                r
            }
        }
    }
}

/// Evaluates without validating `pi` (for hot loops that built `pi` themselves).
pub fn evaluate_unchecked(c: &LinearCircuit, pi: &PerturbationVector, x: &[Rational]) -> EvalTrace {
    let mut wires: Vec<Rational> = Vec::with_capacity(c.wire_count());
    wires.extend_from_slice(x);
    for (w, gate) in c.indexed_gates() {
        let v = eval_gate(gate, &wires, pi.get(w));
        wires.push(v);
    }
    EvalTrace { wire_values: wires, output_index: c.output() }
}

/// Exact perturbed evaluation.
pub fn evaluate_perturbed(
    c: &LinearCircuit,
    pi: &PerturbationVector,
    x: &[Rational],
) -> Result<EvalTrace, CircuitError> {
    if x.len() != c.input_count() {
        return Err(CircuitError::DimensionMismatch { expected: c.input_count(), got: x.len() });
    }
    pi.validate(c)?;
    Ok(evaluate_unchecked(c, pi, x))
}

/// Unperturbed evaluation.
pub fn evaluate(c: &LinearCircuit, x: &[Rational]) -> Result<EvalTrace, CircuitError> {
    evaluate_perturbed(c, &PerturbationVector::zero(), x)
}
