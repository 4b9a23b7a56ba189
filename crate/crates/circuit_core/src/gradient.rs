//! Regional gradients: gate statuses, chain rule, and a certified radius of
//! affinity around the query point.

use num_traits::{One, Signed, Zero};

use crate::circuit::{Gate, LinearCircuit};
use crate::error::CircuitError;
use crate::eval::{eval_gate, pre_activation, PerturbationVector};
use crate::rational::{pow2, Rational};

/// Where a gate's pre-activation sits relative to its breakpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateStatus {
    /// Affine gate: no breakpoints.
    Linear,
    SaturatedLow,
    Interior,
    SaturatedHigh,
    /// min/max picked the left (unperturbed) argument.
    Left,
    /// min/max picked the right (perturbed) argument.
    Right,
    /// Exactly on a breakpoint.
    Breakpoint,
}

/// Result of [`region_gradient`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionGradient {
    pub differentiable: bool,
    pub gradient: Option<Vec<Rational>>,
    pub region_radius: Option<Rational>,
}

/// Radius reported when no gate constrains the region (e.g. identity circuit).
pub fn unbounded_radius() -> Rational {
    pow2(64)
}

fn status_of(gate: &Gate, pre: &Rational) -> (GateStatus, Rational) {
    let zero = Rational::zero();
    let one = Rational::one();
    let classify = |lo: &Rational, hi: &Rational| {
        if pre < lo {
            (GateStatus::SaturatedLow, lo - pre)
        } else if pre > hi {
            (GateStatus::SaturatedHigh, pre - hi)
        } else if pre == lo || pre == hi {
            (GateStatus::Breakpoint, Rational::zero())
        } else {
            let m = std::cmp::min(pre - lo, hi - pre);
            (GateStatus::Interior, m)
        }
    };
    match gate {
        Gate::AffineLinear(_) => (GateStatus::Linear, Rational::zero()),
        Gate::TruncLinear(_) => classify(&zero, &one),
        Gate::TruncInterval { lo, hi, .. } => classify(lo, hi),
        Gate::Min { .. } | Gate::Max { .. } => {
            // pre = x_left − (x_right + π)
            if pre.is_zero() {
                (GateStatus::Breakpoint, Rational::zero())
            } else {
                let left_wins = match gate {
                    Gate::Min { .. } => pre.is_negative(),
                    _ => pre.is_positive(),
                };
                let st = if left_wins { GateStatus::Left } else { GateStatus::Right };
                (st, pre.abs())
            }
        }
    }
}

/// Statuses of all gates at `x` under `pi` (one entry per gate, in order).
pub fn gate_statuses(
    c: &LinearCircuit,
    pi: &PerturbationVector,
    x: &[Rational],
) -> Result<Vec<GateStatus>, CircuitError> {
    if x.len() != c.input_count() {
        return Err(CircuitError::DimensionMismatch { expected: c.input_count(), got: x.len() });
    }
    pi.validate(c)?;
    let mut wires: Vec<Rational> = x.to_vec();
    let mut out = Vec::with_capacity(c.gates().len());
    for (w, gate) in c.indexed_gates() {
        let p = pi.get(w);
        let st = match pre_activation(gate, &wires, p) {
            None => GateStatus::Linear,
            Some(pre) => status_of(gate, &pre).0,
        };
        out.push(st);
        wires.push(eval_gate(gate, &wires, p));
    }
    Ok(out)
}

fn add_scaled(acc: &mut [Rational], a: &Rational, g: &[Rational]) {
    if a.is_zero() {
        return;
    }
    for (t, v) in acc.iter_mut().zip(g) {
        if v.is_zero() {
            continue;
        }
        if a.is_one() {
            *t += v;
        } else {
            *t += a * v;
        }
    }
}

/// Gradient of `f^π` at `x` when every gate is strictly off its breakpoints.
pub fn region_gradient(
    c: &LinearCircuit,
    pi: &PerturbationVector,
    x: &[Rational],
) -> Result<RegionGradient, CircuitError> {
    if x.len() != c.input_count() {
        return Err(CircuitError::DimensionMismatch { expected: c.input_count(), got: x.len() });
    }
    pi.validate(c)?;
    let m = c.input_count();
    let mut wires: Vec<Rational> = x.to_vec();
    let mut grads: Vec<Vec<Rational>> = (0..m)
        .map(|k| {
            let mut e = vec![Rational::zero(); m];
            e[k] = Rational::one();
            e
        })
        .collect();
    // Sup-norm Lipschitz constant of each wire as a function of the input.
    let mut lips: Vec<Rational> = vec![Rational::one(); m];
    let mut radius: Option<Rational> = None;
    let zero_grad = || vec![Rational::zero(); m];

    for (w, gate) in c.indexed_gates() {
        let p = pi.get(w);
        let (status, margin) = match pre_activation(gate, &wires, p) {
            None => (GateStatus::Linear, Rational::zero()),
            Some(pre) => status_of(gate, &pre),
        };
        if status == GateStatus::Breakpoint {
            return Ok(RegionGradient { differentiable: false, gradient: None, region_radius: None });
        }
        let (grad, pre_lip, lip) = match gate {
            Gate::AffineLinear(f) | Gate::TruncLinear(f) => {
                let mut g = zero_grad();
                let mut l = Rational::zero();
                for (a, j) in &f.terms {
                    add_scaled(&mut g, a, &grads[j - 1]);
                    l += a.abs() * &lips[j - 1];
                }
                match status {
                    GateStatus::SaturatedLow | GateStatus::SaturatedHigh => {
                        (zero_grad(), l.clone(), l)
                    }
                    _ => (g, l.clone(), l),
                }
            }
            Gate::TruncInterval { input, .. } => {
                let l = lips[input - 1].clone();
                let g = match status {
                    GateStatus::Interior => grads[input - 1].clone(),
                    _ => zero_grad(),
                };
                (g, l.clone(), l)
            }
            Gate::Min { left, right } | Gate::Max { left, right } => {
                let (lj, lk) = (&lips[left - 1], &lips[right - 1]);
                let g = if status == GateStatus::Left {
                    grads[left - 1].clone()
                } else {
                    grads[right - 1].clone()
                };
                (g, lj + lk, std::cmp::max(lj, lk).clone())
            }
        };
        if status != GateStatus::Linear && pre_lip.is_positive() {
            let r = margin / &pre_lip;
            radius = Some(match radius {
                Some(old) if old <= r => old,
                _ => r,
            });
        }
        wires.push(eval_gate(gate, &wires, p));
        grads.push(grad);
        lips.push(lip);
    }
    let out = c.output();
    Ok(RegionGradient {
        differentiable: true,
        gradient: Some(grads[out - 1].clone()),
        region_radius: Some(radius.unwrap_or_else(unbounded_radius)),
    })
}

/// `K = max(1, max_i Σ_j |a_ij| + |c_i|)` for a trunc-linear circuit.
pub fn coefficient_bound(c: &LinearCircuit) -> Result<Rational, CircuitError> {
    let mut k = Rational::one();
    for (w, gate) in c.indexed_gates() {
        match gate {
            Gate::TruncLinear(f) => {
                let s = f.coefficient_l1() + f.constant.abs();
                if s > k {
                    k = s;
                }
            }
            _ => return Err(CircuitError::ExtendedGate { gate: w }),
        }
    }
    Ok(k)
}
