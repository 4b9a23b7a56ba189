use num_traits::Signed;
use circuit_core::rational::rpow;
use circuit_core::{halving_example, int, rat, CircuitBuilder, Rational};
use qp_compiler::{
    backprop_failures, build_backprop_certificate, check_kkt, choose_delta, compile_qp,
    compiled_residuals, parse_bqp, qp_gradient, scaled_input_gradient, serialize_bqp,
    verify_backprop_identity, BoxQP, KktSide, QpError,
};

fn delta() -> Rational {
    rat(1, 128)
}

/// The KKT point of the halving circuit at `y₁ = 1/2 + δ²/4`, with the
/// slack `z₂⁺ = δ²/4` forced by `K z⁺ = max(0, arg − 1)` for `arg = 1 + δ²/2`.
fn halving_point(d: &Rational) -> Vec<Rational> {
    let d2 = d * d;
    let mut x = vec![
        rat(1, 2) + &d2 / int(4),
        int(1),
        int(0),
        rat(1, 4) - &d2 / int(8) - d / int(2),
    ];
    x.push(&d2 / int(4));
    x.extend(std::iter::repeat(int(0)).take(5));
    x
}

#[test]
fn delta_choice() {
    assert_eq!(choose_delta(&rat(1, 4), &int(2)).unwrap(), rat(1, 128));
    assert_eq!(choose_delta(&int(1_000_000), &int(1)).unwrap(), rat(1, 32));
    assert!(choose_delta(&int(0), &int(1)).is_err());
}

#[test]
fn halving_compilation_shape() {
    let cqp = compile_qp(&halving_example(), &delta()).unwrap();
    assert_eq!(cqp.qp.var_count, 10);
    assert_eq!(cqp.k, int(2));
    assert_eq!(cqp.var_map.labels()[..5], ["y1", "y2", "y3", "y4", "zp2"]);
    // Seed δ⁵ = 2⁻³⁵ on y₄; the only other linear term on y₄ comes from 2K z⁻ y₄,
    // which is quadratic, so the linear coefficient is exactly the seed.
    assert_eq!(cqp.qp.lin_terms[&3], rpow(&rat(1, 2), 35));
}

#[test]
fn single_gate_expansion_matches_hand_formula() {
    let mut b = CircuitBuilder::new(1);
    let g = b.tl(vec![(int(1), 1)], int(0));
    let c = b.finish(g).unwrap();
    let d = rat(1, 64);
    let cqp = compile_qp(&c, &d).unwrap();
    assert_eq!(cqp.k, int(1));
    let oracle = |y1: &Rational, y2: &Rational, zp: &Rational, zm: &Rational| {
        let sq = y2 + zp - zm - y1;
        &d * &d * &d * y2
            + &d * &d
                * (&sq * &sq
                    + int(2) * zp * zm
                    + int(2) * zp * (int(1) - y2)
                    + int(2) * zm * y2)
    };
    for (a, b2, c2, e) in [(0, 0, 0, 0), (1, 2, 3, 4), (7, 1, 5, 2), (9, 9, 0, 9)] {
        let x = vec![rat(a, 9), rat(b2, 9), rat(c2, 9), rat(e, 9)];
        assert_eq!(cqp.qp.eval(&x).unwrap(), oracle(&x[0], &x[1], &x[2], &x[3]));
    }
}

#[test]
fn delta_at_cap_is_rejected() {
    let c = halving_example();
    assert!(matches!(compile_qp(&c, &rat(1, 64)), Err(QpError::BadParameter(_))));
}

#[test]
fn gradients() {
    let mut sq = BoxQP::new(1);
    sq.add_quad(0, 0, int(1));
    assert_eq!(qp_gradient(&sq, &[rat(1, 2)]).unwrap(), vec![int(1)]);

    let mut xy = BoxQP::new(2);
    xy.add_quad(0, 1, int(1));
    assert_eq!(qp_gradient(&xy, &[rat(1, 3), rat(1, 4)]).unwrap(), vec![rat(1, 4), rat(1, 3)]);

    let mut shifted = BoxQP::new(1);
    shifted.add_square(&[(int(1), 0)], &rat(-1, 2), &int(1));
    assert_eq!(qp_gradient(&shifted, &[rat(1, 2)]).unwrap(), vec![int(0)]);
    assert!(qp_gradient(&shifted, &[]).is_err());
}

#[test]
fn kkt_checks() {
    let mut p = BoxQP::new(1);
    p.add_lin(0, int(1));
    assert!(check_kkt(&p, &[int(0)], &int(0)).unwrap().satisfied);
    let v = check_kkt(&p, &[rat(1, 2)], &int(0)).unwrap();
    assert!(!v.satisfied);
    assert_eq!(v.violations[0].side, KktSide::Positive);
    assert_eq!(v.violations[0].partial, int(1));
    assert!(matches!(check_kkt(&p, &[int(2)], &int(0)), Err(QpError::OutsideBox { index: 0 })));
}

#[test]
fn halving_point_is_kkt() {
    let cqp = compile_qp(&halving_example(), &delta()).unwrap();
    let x = halving_point(&delta());
    let v = check_kkt(&cqp.qp, &x, &int(0)).unwrap();
    assert!(v.satisfied, "{:?}", v.violations);
}

#[test]
fn halving_residuals() {
    let d = delta();
    let cqp = compile_qp(&halving_example(), &d).unwrap();
    let report = compiled_residuals(&cqp, &halving_point(&d)).unwrap();
    assert_eq!(report.len(), 3);
    assert!(report.iter().all(|r| r.identity_holds && r.within_bound));
    assert_eq!(report[2].eval_error, &d / int(2));
    assert_eq!(report[2].bound, int(4) * &d);

    let mut off = halving_point(&d);
    off[4] = &off[4] + rat(1, 1000);
    let report = compiled_residuals(&cqp, &off).unwrap();
    assert!(!report[0].identity_holds);

    let id = circuit_core::parse_circuit("inputs 1\noutput 1\n").unwrap();
    let cqp = compile_qp(&id, &rat(1, 32)).unwrap();
    assert!(compiled_residuals(&cqp, &[rat(1, 3)]).unwrap().is_empty());
}

#[test]
fn halving_certificate() {
    let d = delta();
    let cqp = compile_qp(&halving_example(), &d).unwrap();
    let x = halving_point(&d);
    let cert = build_backprop_certificate(&cqp, &x).unwrap();
    assert_eq!(cert.pi[&2], int(-512) * rpow(&d, 3));
    assert_eq!(cert.pi[&3], int(128) * &d * &d);
    assert_eq!(cert.pi[&4], int(0));
    assert_eq!(cert.lambda[&4], int(1));
    let bound = int(8) * int(4) * &d;
    assert_eq!(bound, rat(1, 4));
    assert!(cert.pi.values().all(|p| p.abs() <= bound));
    assert!(cert.lambda.values().all(|l| *l >= int(0) && *l <= int(1)));

    assert!(verify_backprop_identity(&cqp, &x, &cert).unwrap());
    assert_eq!(scaled_input_gradient(&cqp, &x).unwrap(), vec![int(0)]);
}

#[test]
fn tampered_lambda_is_rejected() {
    let d = delta();
    let cqp = compile_qp(&halving_example(), &d).unwrap();
    let x = halving_point(&d);
    let mut cert = build_backprop_certificate(&cqp, &x).unwrap();
    cert.lambda.insert(4, int(0));
    assert!(!verify_backprop_identity(&cqp, &x, &cert).unwrap());
    let fails = backprop_failures(&cqp, &x, &cert).unwrap();
    assert!(fails.iter().any(|f| f.starts_with("gate 4")), "{fails:?}");
}

#[test]
fn certificate_requires_kkt_point() {
    let d = delta();
    let cqp = compile_qp(&halving_example(), &d).unwrap();
    let mut x = halving_point(&d);
    x[0] = rat(1, 3);
    assert!(matches!(build_backprop_certificate(&cqp, &x), Err(QpError::NotKkt { .. })));
}

#[test]
fn interior_chain_has_single_summand() {
    // x₂ = trunc(x₁/2 + 1/4), x₃ = trunc(x₂/2 + 1/4): interior everywhere on [0,1].
    let mut b = CircuitBuilder::new(1);
    let g2 = b.tl(vec![(rat(1, 2), 1)], rat(1, 4));
    let g3 = b.tl(vec![(rat(1, 2), g2)], rat(1, 4));
    let c = b.finish(g3).unwrap();
    let d = rat(1, 64);
    let cqp = compile_qp(&c, &d).unwrap();
    // Stationarity in y₃ and y₂ gives y₃ − s₃ = −δ/2 and y₂ − s₂ = (δ/2)(y₃ − s₃)
    // = −δ²/4; then ∂p/∂y₁ = δ⁴/4 > 0, so y₁ = 0.
    let y2 = rat(1, 4) - &d * &d / int(4);
    let y3 = &y2 / int(2) + rat(1, 4) - &d / int(2);
    let mut x = vec![int(0), y2, y3];
    x.extend(std::iter::repeat(int(0)).take(4));
    assert!(check_kkt(&cqp.qp, &x, &int(0)).unwrap().satisfied);
    let cert = build_backprop_certificate(&cqp, &x).unwrap();
    assert!(cert.pi.values().all(|p| *p == int(0)));
    assert!(cert.lambda.values().all(|l| *l == int(1)));
    assert!(verify_backprop_identity(&cqp, &x, &cert).unwrap());
    assert_eq!(scaled_input_gradient(&cqp, &x).unwrap(), vec![rat(1, 4)]);
}

#[test]
fn bqp_round_trip() {
    let cqp = compile_qp(&halving_example(), &delta()).unwrap();
    let text = serialize_bqp(&cqp.qp);
    assert!(text.starts_with("bqp 1\nvars 10\n"));
    assert_eq!(parse_bqp(&text).unwrap(), cqp.qp);
    assert!(parse_bqp("bqp 1\nvars 2\nq 1 0 3\n").is_err());
    assert!(parse_bqp("bqp 1\nvars 2\nl 5 3\n").is_err());
}
