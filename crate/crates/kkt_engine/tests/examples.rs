use circuit_core::{halving_example, int, rat, CircuitBuilder, PerturbationVector, Rational};
use kkt_engine::lp::{LinearProgram, LpOutcome, Relation};
use kkt_engine::{
    check_2dlinear_kkt, circuit_gradient_hull, compute_epsilon_gap, enumerate_exact_kkt,
    enumerate_exact_kkt_with_cap, inner_hull, outer_hull, projected_gradient_solve,
    round_to_exact, HullMode, KktCheck, KktError, SolverConfig,
};
use num_traits::Signed;
use qp_compiler::{check_kkt, compile_qp, BoxQP};

fn shifted_square() -> BoxQP {
    let mut qp = BoxQP::new(1);
    qp.add_square(&[(int(1), 0)], &rat(-1, 2), &int(1));
    qp
}

fn linear() -> BoxQP {
    let mut qp = BoxQP::new(1);
    qp.add_lin(0, int(1));
    qp
}

fn pow2(e: i64) -> Rational {
    circuit_core::rational::pow2(e)
}

#[test]
fn simplex_basics() {
    // max x + y s.t. x + 2y ≤ 4, 3x + y ≤ 6  → (8/5, 6/5)
    let mut lp = LinearProgram::new(2);
    lp.objective = vec![int(-1), int(-1)];
    lp.add(vec![int(1), int(2)], Relation::Le, int(4));
    lp.add(vec![int(3), int(1)], Relation::Le, int(6));
    assert_eq!(lp.solve(), LpOutcome::Optimal { x: vec![rat(8, 5), rat(6, 5)], value: rat(-14, 5) });

    let mut bad = LinearProgram::new(1);
    bad.add(vec![int(1)], Relation::Ge, int(2));
    bad.add(vec![int(1)], Relation::Le, int(1));
    assert_eq!(bad.solve(), LpOutcome::Infeasible);

    let mut open = LinearProgram::new(1);
    open.objective = vec![int(-1)];
    open.add(vec![int(1)], Relation::Ge, int(0));
    assert_eq!(open.solve(), LpOutcome::Unbounded);

    let mut eq = LinearProgram::new(2);
    eq.objective = vec![int(1), int(0)];
    eq.add(vec![int(1), int(1)], Relation::Eq, int(1));
    eq.add(vec![int(2), int(2)], Relation::Eq, int(2));
    eq.add(vec![int(1), int(-1)], Relation::Ge, int(-1));
    assert_eq!(eq.solve(), LpOutcome::Optimal { x: vec![int(0), int(1)], value: int(0) });
}

#[test]
fn descent_on_shifted_square() {
    let eps = pow2(-20);
    let cfg = SolverConfig { start: Some(vec![int(0)]), ..SolverConfig::default() };
    let x = projected_gradient_solve(&shifted_square(), &eps, &cfg).unwrap();
    assert!((&x[0] - rat(1, 2)).abs() <= &eps / int(2));
}

#[test]
fn descent_on_linear_takes_one_step() {
    for start in [int(1), rat(1, 3), int(0)] {
        let cfg = SolverConfig { start: Some(vec![start]), max_iters: 1, ..SolverConfig::default() };
        assert_eq!(projected_gradient_solve(&linear(), &pow2(-10), &cfg).unwrap(), vec![int(0)]);
    }
}

#[test]
fn descent_on_single_gate_qp() {
    let mut b = CircuitBuilder::new(1);
    let g = b.tl(vec![(int(1), 1)], int(0));
    let c = b.finish(g).unwrap();
    let d = rat(1, 64);
    let cqp = compile_qp(&c, &d).unwrap();
    let eps = &d * &d * &d / int(16);
    let x = projected_gradient_solve(&cqp.qp, &eps, &SolverConfig::default()).unwrap();
    assert!(check_kkt(&cqp.qp, &x, &eps).unwrap().satisfied);
}

#[test]
fn descent_rejects_nonpositive_eps() {
    assert!(projected_gradient_solve(&linear(), &int(0), &SolverConfig::default()).is_err());
}

#[test]
fn enumeration_examples() {
    let mut concave = BoxQP::new(1);
    concave.add_quad(0, 0, int(-1));
    assert_eq!(enumerate_exact_kkt(&concave).unwrap(), vec![vec![int(0)], vec![int(1)]]);
    assert_eq!(enumerate_exact_kkt(&linear()).unwrap(), vec![vec![int(0)]]);
}

#[test]
fn enumeration_finds_halving_point() {
    let d = rat(1, 128);
    let cqp = compile_qp(&halving_example(), &d).unwrap();
    assert!(matches!(enumerate_exact_kkt(&cqp.qp), Err(KktError::TooManyVariables { vars: 10, .. })));
    let points = enumerate_exact_kkt_with_cap(&cqp.qp, 10).unwrap();
    let d2 = &d * &d;
    let mut expected = vec![
        rat(1, 2) + &d2 / int(4),
        int(1),
        int(0),
        rat(1, 4) - &d2 / int(8) - &d / int(2),
        &d2 / int(4),
    ];
    expected.extend(std::iter::repeat(int(0)).take(5));
    assert!(points.contains(&expected), "{} points", points.len());
    for p in &points {
        assert!(check_kkt(&cqp.qp, p, &int(0)).unwrap().satisfied);
    }
}

#[test]
fn epsilon_gap_examples() {
    assert!(compute_epsilon_gap(&linear()) <= rat(1, 2));
    let zero = BoxQP::new(3);
    assert_eq!(compute_epsilon_gap(&zero), rat(1, 2));

    // Integer data: the gap must respect the factorial floor.
    let mut qp = BoxQP::new(2);
    qp.add_quad(0, 1, int(3));
    qp.add_lin(0, int(-2));
    qp.add_lin(1, int(1));
    let m = int(3);
    let floor = int(1) / (int(2) * int(6) * &m * &m * &m);
    assert!(compute_epsilon_gap(&qp) >= floor);
}

#[test]
fn rounding_examples() {
    let sq = shifted_square();
    let gap = compute_epsilon_gap(&sq);
    let approx = vec![rat(1, 2) + pow2(-25)];
    let eps = int(2) * pow2(-25);
    assert!(eps <= gap);
    let r = round_to_exact(&sq, &approx, &eps).unwrap();
    assert_eq!(r.exact_point, vec![rat(1, 2)]);
    assert_eq!(r.lp_value, int(0));

    // x = 2⁻³⁰ is only ε-KKT for ε ≥ 1, far above the gap of p(x) = x, and
    // LP(∅, ∅) keeps z ≥ ∂p = 1, so rounding must refuse rather than return 0.
    let lin = linear();
    let approx = vec![pow2(-30)];
    assert!(matches!(
        round_to_exact(&lin, &approx, &compute_epsilon_gap(&lin)),
        Err(KktError::NotApproximateKkt)
    ));
    assert!(matches!(round_to_exact(&lin, &approx, &int(2)), Err(KktError::NonzeroLpOptimum(v)) if v == int(1)));

    let r = round_to_exact(&lin, &[int(0)], &int(0)).unwrap();
    assert_eq!(r.exact_point, vec![int(0)]);
    assert_eq!(r.active_sets.0, vec![0]);

    assert!(matches!(round_to_exact(&lin, &[rat(1, 2)], &pow2(-5)), Err(KktError::NotApproximateKkt)));
}

#[test]
fn halving_outer_hull() {
    let d = rat(1, 128);
    let y = vec![rat(1, 2) + &d * &d / int(4)];
    let hull = outer_hull(&halving_example(), &y, &rat(1, 4)).unwrap();
    assert_eq!(hull.vertices, vec![vec![rat(-1, 2)], vec![rat(3, 2)]]);

    let hull = circuit_gradient_hull(&halving_example(), &[rat(3, 10)], &rat(1, 100), HullMode::IntervalOuter).unwrap();
    assert_eq!(hull.vertices, vec![vec![rat(1, 2)]]);
}

#[test]
fn outer_hull_contains_nearby_gradients() {
    let c = halving_example();
    let delta = rat(1, 50);
    let zero = PerturbationVector::zero();
    for centre in [rat(1, 2), rat(3, 10), int(0), rat(51, 100)] {
        let hull = outer_hull(&c, &[centre.clone()], &delta).unwrap();
        let (lo, hi) = (&hull.vertices[0][0], &hull.vertices[hull.vertices.len() - 1][0]);
        for k in [-3, -1, 1, 3] {
            let y = &centre + rat(k, 1000);
            let rg = circuit_core::region_gradient(&c, &zero, &[y]).unwrap();
            if let Some(g) = rg.gradient {
                assert!(&g[0] >= lo && &g[0] <= hi);
            }
        }
    }
}

#[test]
fn sampled_inner_keeps_only_differentiable() {
    let c = halving_example();
    let zero = PerturbationVector::zero();
    let mut pushed = PerturbationVector::with_bound(rat(1, 8));
    pushed.set(2, rat(-1, 8));
    pushed.set(3, rat(1, 8));
    let hull = inner_hull(&c, &[rat(1, 2)], &rat(1, 8), &[zero, pushed.clone()]).unwrap();
    assert_eq!(hull.vertices.len(), 1);
    assert_eq!(hull.witnesses, vec![pushed]);
}

#[test]
fn two_d_kkt_examples() {
    let c = halving_example();
    let d = rat(1, 128);
    let y = vec![rat(1, 2) + &d * &d / int(4)];
    let verdict = check_2dlinear_kkt(&c, &y, &rat(1, 1000), &rat(1, 4)).unwrap();
    assert_eq!(verdict.label(), "yes-witnessed");

    let verdict = check_2dlinear_kkt(&c, &[rat(3, 10)], &rat(1, 1000), &rat(1, 100)).unwrap();
    assert_eq!(verdict, KktCheck::NoCertified);

    let mut b = CircuitBuilder::new(2);
    let g = b.tl(vec![(rat(1, 2), 1), (rat(1, 4), 2)], rat(1, 8));
    let up = b.finish(g).unwrap();
    let verdict = check_2dlinear_kkt(&up, &[int(0), int(0)], &int(0), &rat(1, 100)).unwrap();
    assert_eq!(verdict.label(), "yes-witnessed");
    assert!(check_2dlinear_kkt(&up, &[int(0)], &int(0), &rat(1, 100)).is_err());
}
