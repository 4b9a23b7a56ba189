//! Exact rational arithmetic and the linear-arithmetic-circuit IR shared by
//! the rest of the workspace: `.lac` parsing and serialization, perturbed
//! evaluation, and regional gradients.

mod circuit;
mod error;
mod eval;
mod gradient;
mod lac;
pub mod rational;

pub use circuit::{CircuitBuilder, Gate, LinearCircuit, LinearForm};
pub use error::CircuitError;
pub use eval::{evaluate, evaluate_perturbed, evaluate_unchecked, EvalTrace, PerturbationVector};
pub use gradient::{
    coefficient_bound, gate_statuses, region_gradient, unbounded_radius, GateStatus,
    RegionGradient,
};
pub use lac::{form_from_tokens, parse_circuit, serialize_circuit};
pub use rational::{int, parse_rational, rat, Rational};

/// Re-exported so downstream crates agree on the big-integer type.
pub use num_bigint::BigInt;

/// The circuit `x₂ := trunc(2x₁)`, `x₃ := trunc(x₁ − 1/2)`,
/// `x₄ := trunc(x₂/2 + x₃ − x₁/2)`, which computes `x₁ ↦ x₁/2` on `[0,1]`.
pub fn halving_example() -> LinearCircuit {
    let mut b = CircuitBuilder::new(1);
    let x2 = b.tl(vec![(int(2), 1)], int(0));
    let x3 = b.tl(vec![(int(1), 1)], rat(-1, 2));
    let x4 = b.tl(vec![(rat(1, 2), x2), (int(1), x3), (rat(-1, 2), 1)], int(0));
    b.finish(x4).expect("static circuit is valid")
}
