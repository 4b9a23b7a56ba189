//! Reduction from trunc-linear circuits to box-constrained quadratic
//! programs.
//!
//! Each gate `x_i := trunc(Σ a_ij x_j + c_i)` contributes a penalty
//! polynomial `q_i` in the wire variable `y_i` and two slack variables
//! `z_i^±`; the QP objective is `δ^{N+1} y_out + Σ δ^i q_i`. At any KKT
//! point the wires simulate the circuit up to `(2Kδ)^{N+1−i}` and the input
//! gradient is certified by a [`BackpropCertificate`].

mod backprop;
mod boxqp;
mod compile;
mod error;

pub use backprop::{
    backprop_failures, build_backprop_certificate, mu, scaled_input_gradient,
    verify_backprop_identity, BackpropCertificate, MAX_SIGN_ENUMERATION,
};
pub use boxqp::{check_kkt, parse_bqp, qp_gradient, serialize_bqp, BoxQP, KktSide, KktVerdict, KktViolation};
pub use compile::{
    choose_delta, compile_qp, compile_qp_with_k, compiled_residuals, gate_polynomial, trace_point,
    CompiledQP, GateResidual, VarLabel, VarMap,
};
pub use error::QpError;
