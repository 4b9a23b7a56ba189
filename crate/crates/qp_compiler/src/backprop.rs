//! The perturbation/weight certificate showing that the input block of
//! `∇p` at a KKT point is a convex combination of gradients of perturbed
//! copies of the circuit.

use std::collections::BTreeMap;

use circuit_core::rational::{rpow, trunc01};
use circuit_core::{region_gradient, Gate, PerturbationVector, Rational};
use num_traits::{One, Signed, Zero};

use crate::boxqp::check_kkt;
use crate::compile::CompiledQP;
use crate::error::QpError;

/// `(π, λ, ε)` witness at one KKT point. Keys are gate wires (ε: wire `i`
/// for `i ∈ m..=N`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackpropCertificate {
    pub pi: BTreeMap<usize, Rational>,
    pub lambda: BTreeMap<usize, Rational>,
    pub eps_schedule: BTreeMap<usize, Rational>,
}

/// Largest number of non-zero perturbations whose sign patterns we enumerate.
pub const MAX_SIGN_ENUMERATION: usize = 20;

fn two() -> Rational {
    Rational::from_integer(2.into())
}

fn gate_form(cqp: &CompiledQP, wire: usize) -> &circuit_core::LinearForm {
    match cqp.source.gate_at(wire) {
        Some(Gate::TruncLinear(f)) => f,
        _ => unreachable!("compiled circuits contain only trunc-linear gates"),
    }
}

/// `μ_i = (1/(2δ^i)) ∂p_i/∂y_i`, where `p_i` keeps the seed and the
/// penalties of gates after `i`.
pub fn mu(cqp: &CompiledQP, point: &[Rational], wire: usize) -> Rational {
    let vm = &cqp.var_map;
    let n = vm.wire_count;
    let delta = &cqp.delta;
    let mut d = Rational::zero();
    if wire == cqp.source.output() {
        d += rpow(delta, (n + 1) as i32);
    }
    for (l, _) in cqp.source.indexed_gates().filter(|(l, _)| *l > wire) {
        let form = gate_form(cqp, l);
        let a: Rational = form
            .terms
            .iter()
            .filter(|(_, j)| *j == wire)
            .fold(Rational::zero(), |s, (a, _)| s + a);
        if a.is_zero() {
            continue;
        }
        let residual = &point[vm.y(l)] + &cqp.k * &point[vm.zp(l)]
            - &cqp.k * &point[vm.zm(l)]
            - form.eval(&point[..n]);
        d += rpow(delta, l as i32) * (-two() * a * residual);
    }
    d / (two() * rpow(delta, wire as i32))
}

fn eps(cqp: &CompiledQP, i: usize) -> Rational {
    let n = cqp.var_map.wire_count;
    rpow(&(two() * &cqp.k * &cqp.delta), (n - i) as i32)
}

/// Builds `π` and `λ` by the three-case and four-case rules.
pub fn build_backprop_certificate(
    cqp: &CompiledQP,
    point: &[Rational],
) -> Result<BackpropCertificate, QpError> {
    let k = &cqp.k;
    let cap = Rational::one() / (Rational::from_integer(16.into()) * k * k);
    if cqp.delta >= cap {
        return Err(QpError::BadParameter("delta must be below 1/(16K^2)".into()));
    }
    let verdict = check_kkt(&cqp.qp, point, &Rational::zero())?;
    if !verdict.satisfied {
        return Err(QpError::NotKkt { violations: verdict.violations.len() });
    }
    let vm = &cqp.var_map;
    let n = vm.wire_count;
    let mut cert = BackpropCertificate {
        pi: BTreeMap::new(),
        lambda: BTreeMap::new(),
        eps_schedule: BTreeMap::new(),
    };
    for i in vm.input_count..=n {
        cert.eps_schedule.insert(i, eps(cqp, i));
    }
    let one = Rational::one();
    for (wire, _) in cqp.source.indexed_gates() {
        let e = &cert.eps_schedule[&(wire - 1)];
        let w = two() * k * e;
        let s = gate_form(cqp, wire).eval(&point[..n]);
        let pi = if (&s - &one).abs() <= w {
            -(two() * two() * k * e)
        } else if s.abs() <= w {
            two() * two() * k * e
        } else {
            Rational::zero()
        };
        let lambda = if s < -w.clone() || s > &one + &w {
            Rational::zero()
        } else if s > w && s < &one - &w {
            Rational::one()
        } else {
            let m = mu(cqp, point, wire);
            if m.is_zero() {
                Rational::one()
            } else {
                (trunc01(&s) - trunc01(&(&s - &m))) / m
            }
        };
        cert.pi.insert(wire, pi);
        cert.lambda.insert(wire, lambda);
    }
    Ok(cert)
}

/// `δ^{-(N+1)} ∂p/∂y_k` for every input `k`.
pub fn scaled_input_gradient(cqp: &CompiledQP, point: &[Rational]) -> Result<Vec<Rational>, QpError> {
    let g = cqp.qp.gradient(point)?;
    let scale = rpow(&cqp.delta, -((cqp.var_map.wire_count + 1) as i32));
    Ok(g[..cqp.var_map.input_count].iter().map(|d| d * &scale).collect())
}

/// Every failed check of the certificate; empty means the identity holds.
/// Returns `Err` when a perturbed circuit is not differentiable.
pub fn backprop_failures(
    cqp: &CompiledQP,
    point: &[Rational],
    cert: &BackpropCertificate,
) -> Result<Vec<String>, QpError> {
    let vm = &cqp.var_map;
    if point.len() != vm.var_count() {
        return Err(QpError::DimensionMismatch { expected: vm.var_count(), got: point.len() });
    }
    let n = vm.wire_count;
    let m = vm.input_count;
    let k = &cqp.k;
    let one = Rational::one();
    let bound = Rational::from_integer(8.into()) * k * k * &cqp.delta;
    let mut fails = Vec::new();

    for (wire, _) in cqp.source.indexed_gates() {
        let (Some(pi), Some(lambda)) = (cert.pi.get(&wire), cert.lambda.get(&wire)) else {
            fails.push(format!("gate {wire}: missing certificate entry"));
            continue;
        };
        if pi.abs() > bound {
            fails.push(format!("gate {wire}: |pi| exceeds 8K^2 delta"));
        }
        if lambda.is_negative() || *lambda > one {
            fails.push(format!("gate {wire}: lambda outside [0,1]"));
        }
        let s = gate_form(cqp, wire).eval(&point[..n]);
        let y = &point[vm.y(wire)];
        if mu(cqp, point, wire) * lambda != trunc01(&s) - y {
            fails.push(format!("gate {wire}: mu * lambda != trunc(s) - y"));
        }
        let e = eps(cqp, wire - 1);
        let w = two() * k * &e;
        let mut slope = |arg: Rational| -> Option<Rational> {
            let bad = (arg > -w.clone() && arg < w) || (arg > &one - &w && arg < &one + &w);
            if bad {
                fails.push(format!("gate {wire}: s +/- pi within 2K eps of a breakpoint"));
                return None;
            }
            Some(if arg.is_positive() && arg < one { one.clone() } else { Rational::zero() })
        };
        let (dp, dm) = (slope(&s + pi), slope(&s - pi));
        if let (Some(dp), Some(dm)) = (dp, dm) {
            if lambda * dp + (&one - lambda) * dm != lambda * one.clone() {
                fails.push(format!("gate {wire}: lambda-weighted slopes inconsistent"));
            }
        }
    }

    // Sum over sign patterns on the gates with π ≠ 0.
    let active: Vec<usize> = cert
        .pi
        .iter()
        .filter(|(_, p)| !p.is_zero())
        .map(|(w, _)| *w)
        .collect();
    if active.len() > MAX_SIGN_ENUMERATION {
        return Err(QpError::TooManySigns(active.len()));
    }
    let y_inputs = &point[..m];
    let mut sum = vec![Rational::zero(); m];
    for mask in 0u64..(1u64 << active.len()) {
        let mut pv = PerturbationVector::with_bound(Rational::zero());
        let mut weight = Rational::one();
        for (t, w) in active.iter().enumerate() {
            let plus = mask & (1 << t) == 0;
            let p = &cert.pi[w];
            let l = &cert.lambda[w];
            pv.set(*w, if plus { p.clone() } else { -p.clone() });
            weight *= if plus { l.clone() } else { &one - l };
        }
        let rg = region_gradient(&cqp.source, &pv, y_inputs)?;
        if !rg.differentiable || !rg.region_radius.as_ref().is_some_and(|r| r.is_positive()) {
            return Err(QpError::NonDifferentiable(format!("{mask:b}")));
        }
        if weight.is_zero() {
            continue;
        }
        for (acc, g) in sum.iter_mut().zip(rg.gradient.unwrap()) {
            *acc += &weight * g;
        }
    }
    let grad = cqp.qp.gradient(point)?;
    let seed = rpow(&cqp.delta, (n + 1) as i32);
    for kk in 0..m {
        if grad[kk] != &seed * &sum[kk] {
            fails.push(format!("input {}: dp/dy differs from the weighted gradient sum", kk + 1));
        }
    }
    Ok(fails)
}

/// True iff every certificate check passes.
pub fn verify_backprop_identity(
    cqp: &CompiledQP,
    point: &[Rational],
    cert: &BackpropCertificate,
) -> Result<bool, QpError> {
    Ok(backprop_failures(cqp, point, cert)?.is_empty())
}
