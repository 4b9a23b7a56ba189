//! Normalization of piecewise-linear circuits to circuits built only from
//! `trunc_[0,1]` gates.
//!
//! The work happens in two stages:
//!
//! 1. [`preprocess_extended`] rewrites trunc-linear, min and max gates into
//!    affine gates plus interval truncations (`min{x_j, x_k}` becomes
//!    `x_j − trunc_[0,3B](x_j − x_k)`, and max goes through negation).
//! 2. [`lower_to_trunc01`] encodes every value `x ∈ [−B, B]` as
//!    `φ(x) = 1/2 + x/(4B)` and replaces each gate by unit truncations
//!    acting on encodings.
//!
//! [`transfer_perturbation`] maps any perturbation `π` of the lowered circuit
//! with `|π| ≤ 1/K`, `K = 4B^N`, to a perturbation `σ` of the original one
//! with identical outputs.

use circuit_core::rational::rpow;
use circuit_core::{CircuitBuilder, CircuitError, Gate, LinearCircuit, PerturbationVector, Rational};
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NormalizeError {
    #[error("output gate must be a trunc_[0,1] gate that no other gate reads")]
    OutputNotUnitTruncation,
    #[error("circuit still contains a {0} gate; run preprocess_extended first")]
    NotPreprocessed(&'static str),
    #[error("perturbation exceeds 1/K")]
    PerturbationTooLarge,
    #[error("perturbation touches wire {0}, which is not a lowered gate")]
    UnknownWire(usize),
    #[error("circuit does not match the normalization it is paired with")]
    Mismatch,
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

/// A bound `B` on every wire value under `±1` perturbations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValueBound {
    pub b: Rational,
}

#[derive(Clone)]
struct Iv {
    lo: Rational,
    hi: Rational,
}

fn one() -> Rational {
    Rational::one()
}

fn r(n: i64) -> Rational {
    Rational::from_integer(n.into())
}

/// Exact interval propagation over inputs in `[0,1]` with a `[−1,1]` slack on
/// every perturbable gate, enlarged to satisfy `B ≥ 2`, `B ≥ Σ|a| + 1` for
/// linear gates and `B ≥ hi − lo` for interval truncations, then rounded up
/// to an integer.
pub fn value_bound(c: &LinearCircuit) -> ValueBound {
    let mut b = r(2);
    let raise = |v: &Rational, b: &mut Rational| {
        if v > b {
            *b = v.clone();
        }
    };
    let mut iv: Vec<Iv> = (0..c.input_count()).map(|_| Iv { lo: Rational::zero(), hi: one() }).collect();
    for (_, gate) in c.indexed_gates() {
        let next = match gate {
            Gate::AffineLinear(f) | Gate::TruncLinear(f) => {
                raise(&(f.coefficient_l1() + one()), &mut b);
                let mut lo = f.constant.clone();
                let mut hi = f.constant.clone();
                for (a, j) in &f.terms {
                    let s = &iv[j - 1];
                    if a.is_negative() {
                        lo += a * &s.hi;
                        hi += a * &s.lo;
                    } else {
                        lo += a * &s.lo;
                        hi += a * &s.hi;
                    }
                }
                if matches!(gate, Gate::TruncLinear(_)) {
                    Iv { lo: clamp(&(lo - one()), &Rational::zero(), &one()), hi: clamp(&(hi + one()), &Rational::zero(), &one()) }
                } else {
                    Iv { lo, hi }
                }
            }
            Gate::TruncInterval { lo, hi, input } => {
                raise(&(hi - lo), &mut b);
                let s = &iv[input - 1];
                Iv { lo: clamp(&(&s.lo - one()), lo, hi), hi: clamp(&(&s.hi + one()), lo, hi) }
            }
            Gate::Min { left, right } => {
                let (l, rr) = (&iv[left - 1], &iv[right - 1]);
                Iv { lo: minr(&l.lo, &(&rr.lo - one())), hi: minr(&l.hi, &(&rr.hi + one())) }
            }
            Gate::Max { left, right } => {
                let (l, rr) = (&iv[left - 1], &iv[right - 1]);
                Iv { lo: maxr(&l.lo, &(&rr.lo - one())), hi: maxr(&l.hi, &(&rr.hi + one())) }
            }
        };
        iv.push(next);
    }
    for s in &iv {
        raise(&s.lo.abs(), &mut b);
        raise(&s.hi.abs(), &mut b);
    }
    ValueBound { b: b.ceil() }
}

fn clamp(v: &Rational, lo: &Rational, hi: &Rational) -> Rational {
    if v < lo {
        lo.clone()
    } else if v > hi {
        hi.clone()
    } else {
        v.clone()
    }
}

fn minr(a: &Rational, b: &Rational) -> Rational {
    if a <= b { a.clone() } else { b.clone() }
}

fn maxr(a: &Rational, b: &Rational) -> Rational {
    if a >= b { a.clone() } else { b.clone() }
}

/// How an original perturbable gate's perturbation is carried by the
/// preprocessed circuit: `σ_original = sign · σ_pre[truncation]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CarriedPerturbation {
    pub original: usize,
    pub truncation: usize,
    pub sign: i8,
}

/// Correspondence between an original circuit and its preprocessed form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreprocessMap {
    /// `wire_map[w - 1]` is the preprocessed wire holding original wire `w`.
    pub wire_map: Vec<usize>,
    pub carried: Vec<CarriedPerturbation>,
    /// Bound used for the `3B` window of min/max lowering.
    pub window_bound: Rational,
}

/// Rewrites into affine-linear and interval-truncation gates only.
pub fn preprocess_extended(c: &LinearCircuit) -> LinearCircuit {
    preprocess_with_map(c).0
}

/// [`preprocess_extended`] together with the wire correspondence.
pub fn preprocess_with_map(c: &LinearCircuit) -> (LinearCircuit, PreprocessMap) {
    let window_bound = value_bound(c).b;
    let window = r(3) * &window_bound;
    let m = c.input_count();
    let mut b = CircuitBuilder::new(m);
    let mut wire_map: Vec<usize> = (1..=m).collect();
    let mut carried = Vec::new();
    for (w, gate) in c.indexed_gates() {
        let at = |j: &usize, map: &Vec<usize>| map[j - 1];
        let out = match gate {
            Gate::AffineLinear(f) => {
                let terms = f.terms.iter().map(|(a, j)| (a.clone(), at(j, &wire_map))).collect();
                b.lin(terms, f.constant.clone())
            }
            Gate::TruncLinear(f) => {
                let terms = f.terms.iter().map(|(a, j)| (a.clone(), at(j, &wire_map))).collect();
                let s = b.lin(terms, f.constant.clone());
                let t = b.truncab(Rational::zero(), one(), s);
                carried.push(CarriedPerturbation { original: w, truncation: t, sign: 1 });
                t
            }
            Gate::TruncInterval { lo, hi, input } => {
                let t = b.truncab(lo.clone(), hi.clone(), at(input, &wire_map));
                carried.push(CarriedPerturbation { original: w, truncation: t, sign: 1 });
                t
            }
            Gate::Min { left, right } => {
                let (j, k) = (at(left, &wire_map), at(right, &wire_map));
                let d = b.lin(vec![(one(), j), (-one(), k)], Rational::zero());
                let t = b.truncab(Rational::zero(), window.clone(), d);
                carried.push(CarriedPerturbation { original: w, truncation: t, sign: -1 });
                b.lin(vec![(one(), j), (-one(), t)], Rational::zero())
            }
            Gate::Max { left, right } => {
                let (j, k) = (at(left, &wire_map), at(right, &wire_map));
                let nj = b.lin(vec![(-one(), j)], Rational::zero());
                let nk = b.lin(vec![(-one(), k)], Rational::zero());
                let d = b.lin(vec![(one(), nj), (-one(), nk)], Rational::zero());
                let t = b.truncab(Rational::zero(), window.clone(), d);
                carried.push(CarriedPerturbation { original: w, truncation: t, sign: 1 });
                let mn = b.lin(vec![(one(), nj), (-one(), t)], Rational::zero());
                b.lin(vec![(-one(), mn)], Rational::zero())
            }
        };
        wire_map.push(out);
    }
    let output = wire_map[c.output() - 1];
    let pre = b.finish(output).expect("rewriting preserves topology");
    (pre, PreprocessMap { wire_map, carried, window_bound })
}

/// Where a preprocessed wire lives in the lowered circuit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedWire {
    /// Wire holding `φ(x)` (or the raw output for the output wire).
    pub encoded: usize,
    /// For interval truncations, the wire holding `ψ(·)`.
    pub psi: Option<usize>,
}

/// The lowered circuit and everything needed to relate it to its source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizationResult {
    /// Circuit of trunc-linear gates only.
    pub output: LinearCircuit,
    /// The preprocessed circuit that was lowered.
    pub preprocessed: LinearCircuit,
    pub b: Rational,
    /// Wire count `N` of the preprocessed circuit, the exponent in `K = 4B^N`.
    pub n: usize,
    /// Per preprocessed wire (index `w − 1`).
    pub wire_map: Vec<EncodedWire>,
    /// Link back to the circuit before preprocessing, if any.
    pub origin: Option<PreprocessMap>,
}

impl NormalizationResult {
    /// `K = 4·B^N`.
    pub fn k(&self) -> Rational {
        r(4) * rpow(&self.b, self.n as i32)
    }

    /// Bit length of `K` without computing it.
    pub fn k_bits_estimate(&self) -> u64 {
        let b_bits = self.b.to_integer().bits();
        2 + self.n as u64 * b_bits
    }

    /// `φ(x) = 1/2 + x/(4B)`.
    pub fn phi(&self, x: &Rational) -> Rational {
        Rational::new(1.into(), 2.into()) + x / (r(4) * &self.b)
    }

    /// `φ⁻¹(x) = 4B(x − 1/2)`.
    pub fn phi_inv(&self, x: &Rational) -> Rational {
        r(4) * &self.b * (x - Rational::new(1.into(), 2.into()))
    }
}

/// Lowers a preprocessed circuit to unit truncations.
pub fn lower_to_trunc01(pre: &LinearCircuit) -> Result<NormalizationResult, NormalizeError> {
    let out_wire = pre.output();
    match pre.gate_at(out_wire) {
        Some(Gate::TruncInterval { lo, hi, .. }) if lo.is_zero() && hi.is_one() => {}
        _ => return Err(NormalizeError::OutputNotUnitTruncation),
    }
    if pre.gates().iter().any(|g| g.inputs().contains(&out_wire)) {
        return Err(NormalizeError::OutputNotUnitTruncation);
    }
    for g in pre.gates() {
        match g {
            Gate::TruncLinear(_) => return Err(NormalizeError::NotPreprocessed("trunc-linear")),
            Gate::Min { .. } => return Err(NormalizeError::NotPreprocessed("min")),
            Gate::Max { .. } => return Err(NormalizeError::NotPreprocessed("max")),
            _ => {}
        }
    }
    let b = value_bound(pre).b;
    let four_b = r(4) * &b;
    let half = Rational::new(1.into(), 2.into());
    let m = pre.input_count();
    let mut lb = CircuitBuilder::new(m);
    let mut wire_map: Vec<EncodedWire> = Vec::with_capacity(pre.wire_count());
    for i in 1..=m {
        let e = lb.tl(vec![(one() / &four_b, i)], half.clone());
        wire_map.push(EncodedWire { encoded: e, psi: None });
    }
    for (w, gate) in pre.indexed_gates() {
        let enc = |j: &usize, map: &Vec<EncodedWire>| map[j - 1].encoded;
        let entry = match gate {
            Gate::AffineLinear(f) => {
                let sum_a = f.terms.iter().fold(Rational::zero(), |s, (a, _)| s + a);
                let terms = f.terms.iter().map(|(a, j)| (a.clone(), enc(j, &wire_map))).collect();
                let c = &half - &sum_a * &half + &f.constant / &four_b;
                EncodedWire { encoded: lb.tl(terms, c), psi: None }
            }
            Gate::TruncInterval { lo, hi, input } => {
                let j = enc(input, &wire_map);
                if w == out_wire {
                    let e = lb.tl(vec![(four_b.clone(), j)], -(r(2) * &b));
                    EncodedWire { encoded: e, psi: None }
                } else {
                    let width = hi - lo;
                    let z = lb.tl(vec![(&four_b / &width, j)], -((r(2) * &b + lo) / &width));
                    let e = lb.tl(vec![(&width / &four_b, z)], &half + lo / &four_b);
                    EncodedWire { encoded: e, psi: Some(z) }
                }
            }
            _ => unreachable!("checked above"),
        };
        wire_map.push(entry);
    }
    let output = lb.finish(wire_map[out_wire - 1].encoded)?;
    Ok(NormalizationResult { output, preprocessed: pre.clone(), n: pre.wire_count(), b, wire_map, origin: None })
}

/// Preprocess then lower, keeping the link to the original circuit.
pub fn normalize(c: &LinearCircuit) -> Result<NormalizationResult, NormalizeError> {
    let (pre, map) = preprocess_with_map(c);
    let mut res = lower_to_trunc01(&pre)?;
    res.origin = Some(map);
    Ok(res)
}

/// Transferred perturbation on the preprocessed circuit, with the encoding
/// offsets `ε_w` satisfying `x̄_w^π = φ(x_w^σ + ε_w)` (non-output wires).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferDetail {
    pub sigma_preprocessed: PerturbationVector,
    pub offsets: Vec<Rational>,
}

/// σ on the preprocessed circuit plus encoding offsets.
pub fn transfer_detail(norm: &NormalizationResult, pi: &PerturbationVector) -> Result<TransferDetail, NormalizeError> {
    let k = norm.k();
    if pi.max_abs() > Rational::one() / &k {
        return Err(NormalizeError::PerturbationTooLarge);
    }
    for w in pi.entries.keys() {
        if norm.output.gate_at(*w).is_none() {
            return Err(NormalizeError::UnknownWire(*w));
        }
    }
    let p = |w: usize| pi.get(w).cloned().unwrap_or_else(Rational::zero);
    let four_b = r(4) * &norm.b;
    let pre = &norm.preprocessed;
    let mut sigma = PerturbationVector::with_bound(Rational::zero());
    let mut eps: Vec<Rational> = Vec::with_capacity(pre.wire_count());
    for i in 1..=pre.input_count() {
        eps.push(&four_b * p(norm.wire_map[i - 1].encoded));
    }
    for (w, gate) in pre.indexed_gates() {
        let entry = &norm.wire_map[w - 1];
        let e = match gate {
            Gate::AffineLinear(f) => {
                let mut e = &four_b * p(entry.encoded);
                for (a, j) in &f.terms {
                    e += a * &eps[j - 1];
                }
                e
            }
            Gate::TruncInterval { lo, hi, input } => {
                if w == pre.output() {
                    sigma.set(w, &eps[input - 1] + p(entry.encoded));
                    Rational::zero()
                } else {
                    let z = entry.psi.expect("interval truncations carry a psi wire");
                    sigma.set(w, &eps[input - 1] + (hi - lo) * p(z));
                    &four_b * p(entry.encoded)
                }
            }
            _ => return Err(NormalizeError::NotPreprocessed("extended")),
        };
        eps.push(e);
    }
    Ok(TransferDetail { sigma_preprocessed: sigma, offsets: eps })
}

/// Perturbation `σ` of `c` with `f^σ = f̄^π` on `[0,1]` inputs.
pub fn transfer_perturbation(
    c: &LinearCircuit,
    norm: &NormalizationResult,
    pi: &PerturbationVector,
) -> Result<PerturbationVector, NormalizeError> {
    let detail = transfer_detail(norm, pi)?;
    let bound = pi.max_abs() * norm.k();
    let sp = detail.sigma_preprocessed;
    match &norm.origin {
        None => {
            if *c != norm.preprocessed {
                return Err(NormalizeError::Mismatch);
            }
            let mut out = PerturbationVector::with_bound(bound);
            for (w, v) in sp.entries {
                out.set(w, v);
            }
            Ok(out)
        }
        Some(map) => {
            if map.wire_map.len() != c.wire_count() {
                return Err(NormalizeError::Mismatch);
            }
            let mut out = PerturbationVector::with_bound(bound);
            for cp in &map.carried {
                if let Some(v) = sp.get(cp.truncation) {
                    out.set(cp.original, if cp.sign < 0 { -v.clone() } else { v.clone() });
                }
            }
            Ok(out)
        }
    }
}

/// Helper for reports: `K` as an exact big integer.
pub fn k_integer(norm: &NormalizationResult) -> BigInt {
    norm.k().to_integer()
}

/// JSON sidecar describing the encoding: `B`, `N`, the per-wire map and the
/// `ψ` window of every interval truncation.
pub fn sidecar_json(norm: &NormalizationResult) -> serde_json::Value {
    use circuit_core::rational::fmt_rational;
    let wires: Vec<serde_json::Value> = norm
        .wire_map
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let w = i + 1;
            let mut entry = serde_json::json!({ "wire": w, "encoded": e.encoded });
            if let Some(z) = e.psi {
                entry["psi_wire"] = z.into();
            }
            if let Some(Gate::TruncInterval { lo, hi, .. }) = norm.preprocessed.gate_at(w) {
                entry["psi"] = serde_json::json!({ "lo": fmt_rational(lo), "hi": fmt_rational(hi) });
            }
            if w == norm.preprocessed.output() {
                entry["unencoded"] = true.into();
            }
            entry
        })
        .collect();
    let mut doc = serde_json::json!({
        "B": fmt_rational(&norm.b),
        "N": norm.n,
        "K": format!("4*{}^{}", fmt_rational(&norm.b), norm.n),
        "phi": format!("x -> 1/2 + x/{}", fmt_rational(&(r(4) * &norm.b))),
        "wires": wires,
    });
    if let Some(map) = &norm.origin {
        doc["original_wires"] = serde_json::json!(map.wire_map);
        doc["carried"] = map
            .carried
            .iter()
            .map(|c| serde_json::json!({ "original": c.original, "truncation": c.truncation, "sign": c.sign }))
            .collect::<Vec<_>>()
            .into();
    }
    doc
}
