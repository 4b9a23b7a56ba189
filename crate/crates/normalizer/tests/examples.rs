use circuit_core::{
    evaluate, evaluate_perturbed, halving_example, rat, CircuitBuilder, Gate, LinearCircuit, PerturbationVector,
    Rational,
};
use normalizer::{
    lower_to_trunc01, normalize, preprocess_extended, preprocess_with_map, sidecar_json, transfer_perturbation,
    value_bound, NormalizeError,
};
use num_traits::{One, Zero};

fn int(n: i64) -> Rational {
    Rational::from_integer(n.into())
}

#[test]
fn min_of_constants_lowers_to_smaller_value() {
    let mut b = CircuitBuilder::new(1);
    let p = b.constant(rat(3, 10));
    let q = b.constant(rat(7, 10));
    let m = b.min(p, q);
    let c = b.finish(m).unwrap();
    let pre = preprocess_extended(&c);
    let window = int(3) * value_bound(&c).b;
    assert!(pre
        .gates()
        .iter()
        .any(|g| matches!(g, Gate::TruncInterval { lo, hi, .. } if lo.is_zero() && *hi == window)));
    assert!(pre.gates().iter().all(|g| matches!(g, Gate::AffineLinear(_) | Gate::TruncInterval { .. })));
    let out = evaluate(&pre, &[Rational::zero()]).unwrap();
    assert_eq!(*out.output(), rat(3, 10));
}

#[test]
fn max_goes_through_negated_min() {
    let mut b = CircuitBuilder::new(2);
    let m = b.max(1, 2);
    let c = b.finish(m).unwrap();
    let pre = preprocess_extended(&c);
    let negations = pre
        .gates()
        .iter()
        .filter(|g| matches!(g, Gate::AffineLinear(f) if f.terms.len() == 1 && f.terms[0].0 == -Rational::one()))
        .count();
    assert!(negations >= 3, "expected −x_j, −x_k and the final negation");
    for (x, y) in [(rat(1, 5), rat(4, 5)), (rat(9, 10), rat(1, 3)), (rat(1, 2), rat(1, 2))] {
        let want = if x > y { x.clone() } else { y.clone() };
        assert_eq!(*evaluate(&pre, &[x, y]).unwrap().output(), want);
    }
}

#[test]
fn affine_only_circuit_is_unchanged() {
    let mut b = CircuitBuilder::new(2);
    let s = b.lin(vec![(int(2), 1), (rat(-1, 3), 2)], rat(1, 7));
    let t = b.lin(vec![(int(1), s)], int(0));
    let c = b.finish(t).unwrap();
    assert_eq!(preprocess_extended(&c), c);
}

#[test]
fn value_bound_examples() {
    let mut b = CircuitBuilder::new(1);
    let g = b.lin(vec![(int(3), 1)], int(1));
    assert_eq!(value_bound(&b.finish(g).unwrap()).b, int(4));

    let id = LinearCircuit::new(1, vec![], 1).unwrap();
    assert_eq!(value_bound(&id).b, int(2));

    let mut b = CircuitBuilder::new(1);
    let g = b.truncab(int(-5), int(5), 1);
    assert!(value_bound(&b.finish(g).unwrap()).b >= int(10));
}

fn unit_output_identity() -> LinearCircuit {
    let mut b = CircuitBuilder::new(1);
    let x2 = b.lin(vec![(int(1), 1)], int(0));
    let x3 = b.truncab(int(0), int(1), x2);
    b.finish(x3).unwrap()
}

#[test]
fn input_encodes_zero_as_one_half() {
    let norm = lower_to_trunc01(&unit_output_identity()).unwrap();
    let enc = norm.wire_map[0].encoded;
    let trace = evaluate(&norm.output, &[Rational::zero()]).unwrap();
    assert_eq!(*trace.value(enc), rat(1, 2));
}

#[test]
fn affine_identity_encodes_to_identity() {
    let c = unit_output_identity();
    let norm = lower_to_trunc01(&c).unwrap();
    assert_eq!(norm.b, int(2));
    let x1 = norm.wire_map[0].encoded;
    let x2 = norm.wire_map[1].encoded;
    match norm.output.gate_at(x2).unwrap() {
        Gate::TruncLinear(f) => {
            assert_eq!(f.terms, vec![(int(1), x1)]);
            assert!(f.constant.is_zero());
        }
        g => panic!("unexpected gate {g:?}"),
    }
}

#[test]
fn halving_example_survives_normalization() {
    let c = halving_example();
    let norm = normalize(&c).unwrap();
    assert!(norm.output.is_trunc_only());
    assert_eq!(norm.k(), int(4) * circuit_core::rational::rpow(&norm.b, norm.n as i32));
    let out = evaluate(&norm.output, &[rat(1, 2)]).unwrap();
    assert_eq!(*out.output(), rat(1, 4));
}

#[test]
fn non_unit_output_is_rejected() {
    let mut b = CircuitBuilder::new(1);
    let g = b.lin(vec![(int(2), 1)], int(0));
    let c = b.finish(g).unwrap();
    assert_eq!(lower_to_trunc01(&c), Err(NormalizeError::OutputNotUnitTruncation));
}

#[test]
fn zero_perturbation_transfers_to_zero() {
    let c = halving_example();
    let norm = normalize(&c).unwrap();
    let sigma = transfer_perturbation(&c, &norm, &PerturbationVector::zero()).unwrap();
    assert!(sigma.entries.is_empty());
    for x in [rat(0, 1), rat(1, 3), rat(1, 2), rat(1, 1)] {
        assert_eq!(
            evaluate_perturbed(&c, &sigma, &[x.clone()]).unwrap().output(),
            evaluate(&norm.output, &[x]).unwrap().output()
        );
    }
}

#[test]
fn min_truncation_perturbation_negates_onto_min_gate() {
    let mut b = CircuitBuilder::new(2);
    let m = b.min(1, 2);
    let o = b.tl(vec![(int(1), m)], int(0));
    let c = b.finish(o).unwrap();

    // Preprocessing level: perturbing the inner truncation by π is the min
    // gate perturbed by −π.
    let (pre, map) = preprocess_with_map(&c);
    let carried = map.carried.iter().find(|cp| cp.original == m).unwrap();
    assert_eq!(carried.sign, -1);
    let mut pi = PerturbationVector::zero();
    pi.set(carried.truncation, rat(1, 8));
    let mut sigma = PerturbationVector::zero();
    sigma.set(m, rat(-1, 8));
    for (x, y) in [(rat(1, 2), rat(1, 4)), (rat(1, 4), rat(1, 2)), (rat(3, 5), rat(3, 5))] {
        assert_eq!(
            evaluate_perturbed(&pre, &pi, &[x.clone(), y.clone()]).unwrap().value(map.wire_map[m - 1]),
            evaluate_perturbed(&c, &sigma, &[x, y]).unwrap().value(m)
        );
    }

    // Lowered level: π on the ψ wire of that truncation comes back negated
    // and scaled by the window width.
    let norm = normalize(&c).unwrap();
    let z = norm.wire_map[carried.truncation - 1].psi.unwrap();
    let mut pi = PerturbationVector::zero();
    let tiny = Rational::one() / (int(2) * norm.k());
    pi.set(z, tiny.clone());
    let sigma = transfer_perturbation(&c, &norm, &pi).unwrap();
    let width = int(3) * &map.window_bound;
    assert_eq!(sigma.get(m), Some(&-(width * tiny)));
}

#[test]
fn oversized_perturbation_is_rejected() {
    let c = halving_example();
    let norm = normalize(&c).unwrap();
    let mut pi = PerturbationVector::zero();
    pi.set(norm.output.output(), int(2) / norm.k());
    assert_eq!(transfer_perturbation(&c, &norm, &pi), Err(NormalizeError::PerturbationTooLarge));
}

#[test]
fn sidecar_lists_every_preprocessed_wire() {
    let norm = normalize(&halving_example()).unwrap();
    let doc = sidecar_json(&norm);
    assert_eq!(doc["wires"].as_array().unwrap().len(), norm.n);
    assert_eq!(doc["N"], norm.n);
}
