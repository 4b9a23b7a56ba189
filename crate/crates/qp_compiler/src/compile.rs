//! The circuit-to-polynomial construction: one penalty polynomial `q_i` per
//! gate plus the seed term on the output, weighted by powers of `δ`.

use circuit_core::rational::{rpow, trunc01};
use circuit_core::{coefficient_bound, Gate, LinearCircuit, LinearForm, Rational};
use num_traits::{One, Signed, Zero};

use crate::boxqp::BoxQP;
use crate::error::QpError;

/// Role of a QP variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarLabel {
    /// Wire value `y_i`.
    Y(usize),
    /// Positive overflow slack `z_i^+` of gate `i`.
    ZPlus(usize),
    /// Negative overflow slack `z_i^-` of gate `i`.
    ZMinus(usize),
}

impl std::fmt::Display for VarLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VarLabel::Y(i) => write!(f, "y{i}"),
            VarLabel::ZPlus(i) => write!(f, "zp{i}"),
            VarLabel::ZMinus(i) => write!(f, "zm{i}"),
        }
    }
}

/// Variable layout: `y_1..y_N` first, then `(z_i^+, z_i^-)` per gate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarMap {
    pub input_count: usize,
    pub wire_count: usize,
}

impl VarMap {
    pub fn new(c: &LinearCircuit) -> Self {
        VarMap { input_count: c.input_count(), wire_count: c.wire_count() }
    }

    pub fn var_count(&self) -> usize {
        self.wire_count + 2 * (self.wire_count - self.input_count)
    }

    pub fn y(&self, wire: usize) -> usize {
        wire - 1
    }

    pub fn zp(&self, wire: usize) -> usize {
        self.wire_count + 2 * (wire - self.input_count - 1)
    }

    pub fn zm(&self, wire: usize) -> usize {
        self.zp(wire) + 1
    }

    pub fn label(&self, index: usize) -> VarLabel {
        if index < self.wire_count {
            VarLabel::Y(index + 1)
        } else {
            let off = index - self.wire_count;
            let wire = self.input_count + 1 + off / 2;
            if off % 2 == 0 {
                VarLabel::ZPlus(wire)
            } else {
                VarLabel::ZMinus(wire)
            }
        }
    }

    pub fn labels(&self) -> Vec<String> {
        (0..self.var_count()).map(|i| self.label(i).to_string()).collect()
    }
}

/// A compiled circuit: the weighted polynomial together with the unweighted
/// per-gate penalties it was assembled from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompiledQP {
    pub qp: BoxQP,
    pub source: LinearCircuit,
    pub delta: Rational,
    pub k: Rational,
    pub var_map: VarMap,
    /// `q_i` for each gate, in gate order, without the `δ^i` weight.
    pub gate_polys: Vec<BoxQP>,
}

/// `δ := min{δ'/(8K²), 1/(32K²)}`.
pub fn choose_delta(delta_prime: &Rational, k: &Rational) -> Result<Rational, QpError> {
    if !delta_prime.is_positive() {
        return Err(QpError::BadParameter("delta' must be positive".into()));
    }
    if *k < Rational::one() {
        return Err(QpError::BadParameter("K must be at least 1".into()));
    }
    let k2 = k * k;
    let a = delta_prime / (Rational::from_integer(8.into()) * &k2);
    let b = Rational::one() / (Rational::from_integer(32.into()) * k2);
    Ok(if a < b { a } else { b })
}

fn trunc_form(gate: &Gate, wire: usize) -> Result<&LinearForm, QpError> {
    match gate {
        Gate::TruncLinear(f) => Ok(f),
        _ => Err(QpError::Circuit(circuit_core::CircuitError::ExtendedGate { gate: wire })),
    }
}

/// Unweighted penalty
/// `q_i = (y_i + K z_i^+ − K z_i^− − Σ a_ij y_j − c_i)² + 2K² z_i^+ z_i^− + 2K z_i^+(1 − y_i) + 2K z_i^− y_i`.
pub fn gate_polynomial(
    c: &LinearCircuit,
    k: &Rational,
    wire: usize,
) -> Result<BoxQP, QpError> {
    let vm = VarMap::new(c);
    let gate = c
        .gate_at(wire)
        .ok_or(QpError::IndexOutOfRange { index: wire, vars: c.wire_count() })?;
    let form = trunc_form(gate, wire)?;
    let mut q = BoxQP::new(vm.var_count());
    let (yi, zp, zm) = (vm.y(wire), vm.zp(wire), vm.zm(wire));
    let mut terms: Vec<(Rational, usize)> = vec![
        (Rational::one(), yi),
        (k.clone(), zp),
        (-k.clone(), zm),
    ];
    // Merge repeated wires so the square is expanded over distinct variables.
    for (a, j) in &form.terms {
        let v = vm.y(*j);
        match terms.iter_mut().find(|(_, u)| *u == v) {
            Some(slot) => slot.0 -= a,
            None => terms.push((-a.clone(), v)),
        }
    }
    terms.retain(|(a, _)| !a.is_zero());
    q.add_square(&terms, &-form.constant.clone(), &Rational::one());
    let two_k = Rational::from_integer(2.into()) * k;
    q.add_quad(zp, zm, &two_k * k);
    q.add_lin(zp, two_k.clone());
    q.add_quad(zp, yi, -two_k.clone());
    q.add_quad(zm, yi, two_k);
    Ok(q)
}

/// Compiles with the minimal admissible `K`.
pub fn compile_qp(c: &LinearCircuit, delta: &Rational) -> Result<CompiledQP, QpError> {
    let k = coefficient_bound(c)?;
    compile_qp_with_k(c, delta, &k)
}

/// Compiles with an explicit `K ≥ coefficient_bound(c)`.
pub fn compile_qp_with_k(
    c: &LinearCircuit,
    delta: &Rational,
    k: &Rational,
) -> Result<CompiledQP, QpError> {
    let k_min = coefficient_bound(c)?;
    if *k < k_min {
        return Err(QpError::BadParameter("K is below the coefficient bound".into()));
    }
    let cap = Rational::one() / (Rational::from_integer(16.into()) * k * k);
    if !delta.is_positive() || *delta >= cap {
        return Err(QpError::BadParameter("delta must lie in (0, 1/(16K^2))".into()));
    }
    let vm = VarMap::new(c);
    let n = c.wire_count();
    let mut qp = BoxQP::new(vm.var_count());
    qp.add_lin(vm.y(c.output()), rpow(delta, (n + 1) as i32));
    let mut gate_polys = Vec::with_capacity(c.gates().len());
    let mut weight = rpow(delta, c.input_count() as i32);
    for (wire, _) in c.indexed_gates() {
        weight *= delta;
        let q = gate_polynomial(c, k, wire)?;
        qp.add_scaled(&q, &weight);
        gate_polys.push(q);
    }
    Ok(CompiledQP { qp, source: c.clone(), delta: delta.clone(), k: k.clone(), var_map: vm, gate_polys })
}

/// Lemma-style diagnostics for one gate at a point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateResidual {
    pub wire: usize,
    /// `Σ a_ij y_j + c_i`.
    pub argument: Rational,
    /// `trunc(arg) = arg − K z^+ + K z^-` holds exactly.
    pub identity_holds: bool,
    /// `|y_i − trunc(arg)|`.
    pub eval_error: Rational,
    /// `(2Kδ)^{N+1−i}`.
    pub bound: Rational,
    pub within_bound: bool,
}

/// Per-gate residual report at a point.
pub fn compiled_residuals(cqp: &CompiledQP, point: &[Rational]) -> Result<Vec<GateResidual>, QpError> {
    let vm = &cqp.var_map;
    if point.len() != vm.var_count() {
        return Err(QpError::DimensionMismatch { expected: vm.var_count(), got: point.len() });
    }
    let n = vm.wire_count;
    let two_k_delta = Rational::from_integer(2.into()) * &cqp.k * &cqp.delta;
    let mut out = Vec::new();
    for (wire, gate) in cqp.source.indexed_gates() {
        let form = trunc_form(gate, wire)?;
        let wires = &point[..n];
        let arg = form.eval(wires);
        let t = trunc01(&arg);
        let rhs = &arg - &cqp.k * &point[vm.zp(wire)] + &cqp.k * &point[vm.zm(wire)];
        let err = (&point[vm.y(wire)] - &t).abs();
        let bound = rpow(&two_k_delta, (n + 1 - wire) as i32);
        out.push(GateResidual {
            wire,
            identity_holds: rhs == t,
            within_bound: err <= bound,
            argument: arg,
            eval_error: err,
            bound,
        });
    }
    Ok(out)
}

/// The exact point the construction associates with a circuit trace:
/// `y` = wire values, `K z^+ = max(0, arg − 1)`, `K z^- = max(0, −arg)`.
/// At such points every unweighted `q_i` vanishes.
pub fn trace_point(c: &LinearCircuit, k: &Rational, wires: &[Rational]) -> Result<Vec<Rational>, QpError> {
    let vm = VarMap::new(c);
    let mut x = vec![Rational::zero(); vm.var_count()];
    x[..wires.len()].clone_from_slice(wires);
    for (wire, gate) in c.indexed_gates() {
        let arg = trunc_form(gate, wire)?.eval(wires);
        if arg > Rational::one() {
            x[vm.zp(wire)] = (arg - Rational::one()) / k;
        } else if arg.is_negative() {
            x[vm.zm(wire)] = -arg / k;
        }
    }
    Ok(x)
}
