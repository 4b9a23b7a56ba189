//! Named verification suites. Each one re-derives its expectations from an
//! independent oracle (direct interpretation, brute-force enumeration,
//! plain rational arithmetic) and reports every mismatch.

use std::fmt;

use circuit_core::rational::{fmt_rational, int, pow2, rat};
use circuit_core::{
    evaluate, evaluate_perturbed, halving_example, parse_circuit, serialize_circuit, Gate, LinearCircuit, LinearForm,
    PerturbationVector, Rational,
};
use gadgets::field::extraction_l;
use gadgets::{
    bad_regions_disjoint, build_affine, build_bit_multiply, build_cont_times_bin, build_extract_bits,
    build_mesa_pieces, lower_boolean, BinaryVar, BoolBuilder, BoolGate, BooleanCircuit, GadgetBuilder,
};
use kkt_engine::{compute_epsilon_gap, enumerate_exact_kkt_with_cap, projected_gradient_solve, round_to_exact, SolverConfig};
use mesa::sample::{check_field_assumptions, check_mesa_field_assumptions, sample_field_from_target, SmoothTarget};
use mesa::{field_gradient, field_max, mesa_value, piece_value, GridSpec, MesaEnv, MesaField, MesaParams, Piece, PointParams};
use normalizer::{normalize, transfer_perturbation};
use num_traits::{One, Signed, Zero};
use qp_compiler::{
    build_backprop_certificate, check_kkt, compile_qp_with_k, compiled_residuals, scaled_input_gradient,
    verify_backprop_identity, BoxQP,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Shipped fixture names, in the order `verify --all` runs them.
pub const FIXTURES: [&str; 6] = [
    "example-3-2",
    "toy-smooth-target",
    "gadget-lemma-suite",
    "mesa-lemma-suite",
    "appendix-a-suite",
    "appendix-b-suite",
];

/// The three-gate halving circuit in `.lac` form.
pub const EXAMPLE_3_2_LAC: &str = include_str!("../../../fixtures/example-3-2.lac");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub name: String,
    pub passed: bool,
    pub checks: usize,
    pub failures: Vec<String>,
    pub details: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownFixture(pub String);

impl fmt::Display for UnknownFixture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown fixture `{}` (known: {})", self.0, FIXTURES.join(", "))
    }
}

impl std::error::Error for UnknownFixture {}

/// Runs the named suite with the given seed.
pub fn verify_fixture(name: &str, seed: u64) -> Result<SuiteReport, UnknownFixture> {
    let (tally, details) = match name {
        "example-3-2" => example_3_2(),
        "toy-smooth-target" => toy_smooth_target(),
        "gadget-lemma-suite" => gadget_lemma_suite(seed),
        "mesa-lemma-suite" => mesa_lemma_suite(seed),
        "appendix-a-suite" => appendix_a_suite(seed),
        "appendix-b-suite" => appendix_b_suite(seed),
        other => return Err(UnknownFixture(other.to_string())),
    };
    let mut failures = tally.failures;
    if tally.dropped > 0 {
        failures.push(format!("... and {} more", tally.dropped));
    }
    Ok(SuiteReport {
        name: name.to_string(),
        passed: failures.is_empty(),
        checks: tally.checks,
        failures,
        details,
    })
}

/// Keeps the first few failure messages; later ones are only counted.
#[derive(Default)]
struct Tally {
    checks: usize,
    failures: Vec<String>,
    dropped: usize,
}

impl Tally {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) -> bool {
        self.checks += 1;
        if !ok {
            if self.failures.len() < 20 {
                self.failures.push(what());
            } else {
                self.dropped += 1;
            }
        }
        ok
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn uniform(rng: &mut ChaCha8Rng, lo: i64, hi: i64, den: i64) -> Rational {
    rat(rng.gen_range(lo..=hi), den)
}

// ---------------------------------------------------------------- Example 3.2

/// The stated KKT point at `δ`, with `z₂⁺ = δ²/4` from `K z⁺ = max(0, arg − 1)`.
pub fn example_3_2_point(d: &Rational) -> Vec<Rational> {
    let d2 = d * d;
    let mut x = vec![rat(1, 2) + &d2 / int(4), int(1), int(0), rat(1, 4) - &d2 / int(8) - d / int(2)];
    x.push(&d2 / int(4));
    x.extend(std::iter::repeat(int(0)).take(5));
    x
}

fn example_3_2() -> (Tally, serde_json::Value) {
    let mut t = Tally::default();
    let d = rat(1, 128);
    let parsed = parse_circuit(EXAMPLE_3_2_LAC);
    let c = match parsed {
        Ok(c) => c,
        Err(e) => {
            t.check(false, || format!("fixture does not parse: {e}"));
            return (t, serde_json::json!({}));
        }
    };
    t.check(c == halving_example(), || "fixture differs from the halving circuit".into());
    t.check(serialize_circuit(&c) == EXAMPLE_3_2_LAC, || "fixture is not in canonical form".into());
    let cqp = match compile_qp_with_k(&c, &d, &int(2)) {
        Ok(q) => q,
        Err(e) => {
            t.check(false, || format!("compilation failed: {e}"));
            return (t, serde_json::json!({}));
        }
    };
    let x = example_3_2_point(&d);
    let v = check_kkt(&cqp.qp, &x, &Rational::zero()).expect("point lies in the box");
    t.check(v.satisfied, || format!("exact KKT check failed: {:?}", v.violations));
    let res = compiled_residuals(&cqp, &x).expect("well-formed point");
    t.check(res.iter().all(|r| r.identity_holds && r.within_bound), || "Lemma 3.3/3.4 residuals".into());
    let cert = build_backprop_certificate(&cqp, &x);
    let cert_ok = cert.as_ref().is_ok_and(|c| verify_backprop_identity(&cqp, &x, c).unwrap_or(false));
    t.check(cert_ok, || "backpropagation certificate".into());
    let g = scaled_input_gradient(&cqp, &x).ok();
    t.check(g == Some(vec![Rational::zero()]), || format!("scaled input gradient {g:?}"));
    let all = enumerate_exact_kkt_with_cap(&cqp.qp, cqp.qp.var_count);
    let listed = all.as_ref().is_ok_and(|pts| pts.contains(&x));
    t.check(listed, || "point missing from the exact enumeration".into());
    let details = serde_json::json!({
        "delta": fmt_rational(&d),
        "K": "2",
        "var_count": cqp.qp.var_count,
        "enumerated_points": all.map(|p| p.len()).unwrap_or(0),
    });
    (t, details)
}

// ---------------------------------------------------------- toy smooth target

fn toy_smooth_target() -> (Tally, serde_json::Value) {
    let mut t = Tally::default();
    let bowl = SmoothTarget::quadratic_bowl();
    let mut sizes = Vec::new();
    for n in 1..=4u32 {
        let grid = GridSpec::new(n).expect("small grid");
        let ell = grid.ell();
        let tau = &ell * &ell / int(100);
        let f = match sample_field_from_target(&bowl, grid) {
            Ok(f) => f,
            Err(e) => {
                t.check(false, || format!("n = {n}: sampling failed: {e}"));
                continue;
            }
        };
        let report = check_field_assumptions(&f, &tau);
        t.check(report.passed(), || format!("n = {n}: {} adjacency violations", report.violations.len()));
        t.check(report.g_within_hundredth, || format!("n = {n}: g leaves [-0.01, 0.01]^2"));
        for (&(i, j), a) in &f.a_table {
            let (x1, x2) = grid.point(i, j);
            let h = rat(1, 2) + (&x1 * &x1 + &x2 * &x2) / int(2000);
            t.check((a - &h).abs() <= tau, || format!("n = {n}: a({i},{j}) = {} vs h = {}", a, h));
            let g = &f.g_table[&(i, j)];
            let want = (&x1 / int(2000), &x2 / int(2000));
            let tol_g = &ell / int(100);
            t.check((&g.0 - &want.0).abs() <= tol_g && (&g.1 - &want.1).abs() <= tol_g, || {
                format!("n = {n}: g({i},{j}) far from grad h / 2")
            });
        }
        sizes.push(f.a_table.len());
    }
    // A constant target inside the window samples to a flat field; one
    // outside it is refused.
    let flat = sample_field_from_target(&SmoothTarget::constant(rat(1, 2)), GridSpec::new(2).expect("grid"));
    t.check(
        flat.is_ok_and(|f| f.a_table.values().all(|a| *a == rat(1, 2)) && f.g_table.values().all(|g| g.0.is_zero() && g.1.is_zero())),
        || "flat target did not sample to a = 1/2, g = 0".into(),
    );
    let high = sample_field_from_target(&SmoothTarget::constant(rat(3, 5)), GridSpec::new(2).expect("grid"));
    t.check(high.is_err(), || "target 3/5 was accepted".into());
    (t, serde_json::json!({ "grid_points": sizes }))
}

// ------------------------------------------------------------- gadget lemmas

/// Uniform draws `bound·r/10⁶` on every perturbable gate.
pub fn random_pi(c: &LinearCircuit, bound: &Rational, rng: &mut ChaCha8Rng) -> PerturbationVector {
    let mut pi = PerturbationVector::with_bound(bound.clone());
    for w in c.perturbable_wires() {
        pi.set(w, bound * rat(rng.gen_range(-1_000_000..=1_000_000), 1_000_000));
    }
    pi
}

/// Sign-magnitude inputs for `value` with `width` fractional bits.
fn encode(value: &Rational, width: usize) -> Vec<Rational> {
    let k = (value.abs() * pow2(width as i64)).to_integer();
    let bits: Vec<Rational> = (0..width).map(|i| int(k.bit((width - 1 - i) as u64) as i64)).collect();
    let zeros = vec![Rational::zero(); width];
    if value.is_negative() {
        [zeros, bits].concat()
    } else {
        [bits, zeros].concat()
    }
}

fn var_at(base: usize, width: usize) -> BinaryVar {
    BinaryVar { int_bits: 0, plus: (base..base + width).collect(), minus: (base + width..base + 2 * width).collect() }
}

fn signed_dyadic(rng: &mut ChaCha8Rng, width: usize) -> Rational {
    let top = (1i64 << width) - 1;
    rat(rng.gen_range(-top..=top), 1 << width)
}

fn random_boolean(rng: &mut ChaCha8Rng, inputs: usize, gates: usize) -> BooleanCircuit {
    let mut b = BoolBuilder::new(inputs);
    let mut count = inputs;
    for _ in 0..gates {
        let (l, r) = (rng.gen_range(1..=count), rng.gen_range(1..=count));
        if rng.gen_bool(0.5) {
            b.and(l, r);
        } else {
            b.not(l);
        }
        count += 1;
    }
    b.finish((inputs + 1..=count).collect())
}

fn interpret(g: &BooleanCircuit, x: &[bool]) -> Vec<bool> {
    let mut vals = x.to_vec();
    for gate in &g.gates {
        let v = match *gate {
            BoolGate::Not { input, .. } => !vals[input - 1],
            BoolGate::And { left, right, .. } => vals[left - 1] && vals[right - 1],
        };
        vals.push(v);
    }
    g.outputs.iter().map(|&o| vals[o - 1]).collect()
}

/// Draws per gadget lemma in the gadget suite.
pub const GADGET_DRAWS: usize = 500;

fn gadget_lemma_suite(seed: u64) -> (Tally, serde_json::Value) {
    let mut t = Tally::default();
    let mut rng = rng_for(seed, 5);
    let just_under_one = rat(999_999, 1_000_000);

    // Lemma 5.3: extraction outside the expanded bad regions.
    let mut extraction_hits = 0;
    let mut extraction_draws = 0;
    while extraction_hits < GADGET_DRAWS {
        extraction_draws += 1;
        let n = rng.gen_range(1..=5usize);
        let l = [rat(1, 100), rat(1, 1000), extraction_l(n as u32)][rng.gen_range(0..3)].clone();
        let x = uniform(&mut rng, 0, 999_999, 1_000_000);
        let mut b = GadgetBuilder::new(1);
        let e = build_extract_bits(&mut b, 1, n, &l);
        let last = *e.residuals.last().expect("n ≥ 1");
        let c = b.finish(last).expect("well-formed");
        let pi = random_pi(&c, &(&l * &l / int(2)), &mut rng);
        let m = pi.max_abs();
        let scale = pow2(n as i64);
        let bad = (0..=(1i64 << n)).any(|k| {
            let edge = int(k) / &scale;
            x >= &edge - &m / &l && x <= &edge + &l + &m / &l
        });
        if bad {
            continue;
        }
        extraction_hits += 1;
        let tr = evaluate_perturbed(&c, &pi, &[x.clone()]).expect("admissible");
        let prefix = (&x * &scale).floor() / &scale;
        t.check(e.bits.read(&tr) == Some(prefix.clone()) && tr.output() == &(&x - &prefix), || {
            format!("extraction of {x} with n = {n}, L = {l}")
        });
    }

    // Lemma 5.4: NOT/AND lowering is exact under π ∈ (−1, 1).
    for _ in 0..GADGET_DRAWS {
        let inputs = rng.gen_range(1..=4);
        let gates = rng.gen_range(1..12);
        let g = random_boolean(&mut rng, inputs, gates);
        let x: Vec<bool> = (0..inputs).map(|_| rng.gen_bool(0.5)).collect();
        let mut b = GadgetBuilder::new(inputs);
        let outs = lower_boolean(&mut b, &g, &(1..=inputs).collect::<Vec<_>>());
        let c = b.finish(*outs.last().expect("one gate")).expect("well-formed");
        let pi = random_pi(&c, &just_under_one, &mut rng);
        let xs: Vec<Rational> = x.iter().map(|&v| int(v as i64)).collect();
        let tr = evaluate_perturbed(&c, &pi, &xs).expect("admissible");
        let want = interpret(&g, &x);
        let ok = outs.iter().zip(&want).all(|(w, v)| tr.value(*w) == &int(*v as i64));
        t.check(ok, || format!("Boolean lowering differs on {x:?}"));
    }

    // Lemma 5.5: BitMultiply.
    for _ in 0..GADGET_DRAWS {
        let x = uniform(&mut rng, -200_000, 200_000, 100_000);
        let bit = rng.gen_bool(0.5);
        let mut b = GadgetBuilder::new(2);
        let out = build_bit_multiply(&mut b, 1, 2);
        let c = b.finish(out).expect("well-formed");
        let pi = random_pi(&c, &just_under_one, &mut rng);
        let v = evaluate_perturbed(&c, &pi, &[x.clone(), int(bit as i64)]).expect("admissible").output().clone();
        let ok = if bit { (&v - &x).abs() <= pi.max_abs() } else { v.is_zero() };
        t.check(ok, || format!("BitMultiply({x}, {bit}) = {v}"));
    }

    // Lemma 5.6: ContTimesBin, with an x-independent offset.
    for _ in 0..GADGET_DRAWS {
        let width = rng.gen_range(1..=6usize);
        let y = signed_dyadic(&mut rng, width);
        let (x1, x2) = (uniform(&mut rng, -200_000, 200_000, 100_000), uniform(&mut rng, -200_000, 200_000, 100_000));
        let mut b = GadgetBuilder::new(1 + 2 * width);
        let out = build_cont_times_bin(&mut b, 1, &var_at(2, width));
        let c = b.finish(out).expect("well-formed");
        let pi = random_pi(&c, &just_under_one, &mut rng);
        let run = |x: &Rational| {
            let mut inputs = vec![x.clone()];
            inputs.extend(encode(&y, width));
            evaluate_perturbed(&c, &pi, &inputs).expect("admissible").output().clone() - x * &y
        };
        let (s1, s2) = (run(&x1), run(&x2));
        t.check(s1.abs() <= pi.max_abs() && s1 == s2, || format!("ContTimesBin offset {s1} / {s2} for y = {y}"));
    }

    // Lemmas 5.7 and 5.8: Affine and the five mesa pieces.
    let w = 3;
    let env = MesaEnv::steep(rat(1, 8));
    for _ in 0..GADGET_DRAWS {
        let p = (rat(rng.gen_range(0..8), 8), rat(rng.gen_range(0..8), 8));
        let a = rat(rng.gen_range(0..8), 8);
        let g = (signed_dyadic(&mut rng, w), signed_dyadic(&mut rng, w));
        let mut b = GadgetBuilder::new(2 + 5 * 2 * w);
        let vars: Vec<BinaryVar> = (0..5).map(|k| var_at(3 + 2 * w * k, w)).collect();
        let affine = build_affine(&mut b, 1, 2, &vars[0], &vars[1], &vars[2], &vars[3], &vars[4]);
        let pieces = build_mesa_pieces(
            &mut b,
            (1, 2),
            &(vars[0].clone(), vars[1].clone()),
            &vars[2],
            &(vars[3].clone(), vars[4].clone()),
            &env.ell,
            &env.gamma,
        );
        let c = b.finish(pieces[4]).expect("well-formed");
        let pi = random_pi(&c, &just_under_one, &mut rng);
        let params = MesaParams::uniform(p.clone(), a.clone(), g.clone());
        let inputs_for = |x: &(Rational, Rational)| {
            let mut inputs = vec![x.0.clone(), x.1.clone()];
            for v in [&p.0, &p.1, &a, &g.0, &g.1] {
                inputs.extend(encode(v, w));
            }
            inputs
        };
        let offsets = |rng: &mut ChaCha8Rng| {
            let x = (&p.0 + uniform(rng, -100_000, 100_000, 100_000), &p.1 + uniform(rng, -100_000, 100_000, 100_000));
            let tr = evaluate_perturbed(&c, &pi, &inputs_for(&x)).expect("admissible");
            let exact = (&x.0 - &p.0) * &g.0 + (&x.1 - &p.1) * &g.1 + &a;
            let aff = tr.value(affine) - exact;
            let pcs = Piece::ALL.map(|d| tr.value(pieces[d.index()]) - piece_value(d, &x, &params, &env));
            (aff, pcs)
        };
        let (a1, p1) = offsets(&mut rng);
        let (a2, p2) = offsets(&mut rng);
        let bound = int(2) * pi.max_abs();
        t.check(a1.abs() <= bound && a1 == a2, || format!("Affine offset {a1} / {a2}"));
        t.check(p1.iter().all(|s| s.abs() <= bound) && p1 == p2, || format!("mesa piece offsets {p1:?} / {p2:?}"));
    }

    // Disjointness of the k bad regions, symbolically per grid size.
    for n in 2..=10 {
        t.check(bad_regions_disjoint(n), || format!("bad regions overlap at n = {n}"));
    }
    let details = serde_json::json!({
        "draws_per_lemma": GADGET_DRAWS,
        "extraction_draws_including_bad_regions": extraction_draws,
        "disjointness_n": [2, 10],
    });
    (t, details)
}

// --------------------------------------------------------------- mesa lemmas

/// Random draws of the mesa suite.
pub const MESA_DRAWS: usize = 1000;
/// Query points per draw for the range lemma.
pub const MESA_QUERIES: usize = 100;

fn linf(x: &(Rational, Rational), p: &(Rational, Rational)) -> Rational {
    (&x.0 - &p.0).abs().max((&x.1 - &p.1).abs())
}

fn admissible_field(rng: &mut ChaCha8Rng, bits: u32) -> MesaField {
    let grid = GridSpec::new(bits).expect("small grid");
    let mut f = MesaField::new(grid);
    for (i, j) in grid.indices() {
        let a = std::array::from_fn(|_| rat(rng.gen_range(40..=60), 100));
        let g = (rat(rng.gen_range(-100..=100), 10_000), rat(rng.gen_range(-100..=100), 10_000));
        f.insert(i, j, PointParams { a, g });
    }
    f
}

/// A 5×5 patch at `n = 11` around `centre` from a quadratic with gradient
/// `2g`, plus per-piece offsets bounded by `ℓ²/100`.
fn patch(rng: &mut ChaCha8Rng) -> (MesaField, (usize, usize)) {
    let grid = GridSpec::new(11).expect("grid");
    let ell = grid.ell();
    let centre = (rng.gen_range(10..2000), rng.gen_range(10..2000));
    let g0 = (rat(rng.gen_range(-90..=90), 10_000), rat(rng.gen_range(-90..=90), 10_000));
    let hess = (rat(rng.gen_range(-25..=25), 100), rat(rng.gen_range(-25..=25), 100));
    let tau_unit = &ell * &ell / int(10_000);
    let mut f = MesaField::new(grid);
    for (i, j) in grid.neighbourhood(centre.0, centre.1, 2) {
        let d = (int(i as i64 - centre.0 as i64) * &ell, int(j as i64 - centre.1 as i64) * &ell);
        let g = (&g0.0 + &hess.0 * &d.0, &g0.1 + &hess.1 * &d.1);
        let base = rat(1, 2) + int(2) * (&g0.0 * &d.0 + &g0.1 * &d.1) + &hess.0 * &d.0 * &d.0 + &hess.1 * &d.1 * &d.1;
        let a = std::array::from_fn(|_| &base + &tau_unit * int(rng.gen_range(-100..=100)));
        f.insert(i, j, PointParams { a, g });
    }
    (f, centre)
}

fn interior_clean(f: &MesaField, centre: (usize, usize)) -> bool {
    let report = check_mesa_field_assumptions(f, &Rational::zero());
    let interior = f.grid.neighbourhood(centre.0, centre.1, 1);
    report.violations.iter().all(|v| {
        !matches!(v,
            mesa::Violation::GradientJump { p, .. } | mesa::Violation::OffsetMismatch { p, .. } | mesa::Violation::OffsetRange { p }
            if interior.contains(p))
    })
}

fn mesa_lemma_suite(seed: u64) -> (Tally, serde_json::Value) {
    let mut t = Tally::default();
    let mut rng = rng_for(seed, 4);
    let gammas = [rat(1, 10), int(1), int(12), int(84), int(1000)];
    let (mut drop_checked, mut grad_checked, mut grad_skipped) = (0usize, 0usize, 0usize);
    for draw in 0..MESA_DRAWS {
        // Lemma 4.2: a single mesa is ≤ 0 outside its ℓ/2 + 3/Γ box.
        let ell = rat(1, *[1i64, 3, 7, 15, 31].choose(&mut rng).expect("non-empty"));
        let env = MesaEnv::new(ell.clone(), int(12 + rng.gen_range(0..=8)) / &ell);
        let reach = &ell / int(2) + int(3) / &env.gamma;
        let p = (uniform(&mut rng, 0, 64, 64), uniform(&mut rng, 0, 64, 64));
        let m = MesaParams {
            p: p.clone(),
            a: std::array::from_fn(|_| uniform(&mut rng, 0, 16, 16)),
            g: (uniform(&mut rng, -16, 16, 16), uniform(&mut rng, -16, 16, 16)),
        };
        for _ in 0..256 {
            let x = (uniform(&mut rng, 0, 256, 256), uniform(&mut rng, 0, 256, 256));
            if linf(&x, &p) >= reach {
                drop_checked += 1;
                let v = mesa_value(&x, &m, &env);
                t.check(!v.is_positive(), || format!("draw {draw}: mesa value {v} > 0 at distance ≥ {reach}"));
                break;
            }
        }

        // Lemma 4.3: the field maximum stays in [1/3, 2/3].
        let bits = rng.gen_range(1..=2);
        let f = admissible_field(&mut rng, bits);
        let env = MesaEnv::new(f.grid.ell(), gammas.choose(&mut rng).expect("non-empty").clone());
        for _ in 0..MESA_QUERIES {
            let x = (uniform(&mut rng, 0, 997, 997), uniform(&mut rng, 0, 997, 997));
            let v = field_max(&x, &f, &env).expect("x in the unit square");
            t.check(v >= rat(1, 3) && v <= rat(2, 3), || format!("draw {draw}: field value {v} outside [1/3, 2/3]"));
        }

        // Lemma 4.4: steep gradients survive in the field maximum.
        let (f, centre) = patch(&mut rng);
        if !interior_clean(&f, centre) {
            grad_skipped += 1;
            continue;
        }
        let grid = f.grid;
        let ell = grid.ell();
        let env = MesaEnv::steep(ell.clone());
        let p = grid.point(centre.0, centre.1);
        let u = (rat(rng.gen_range(0..=1000), 1000) - rat(1, 2), rat(rng.gen_range(0..=1000), 1000) - rat(1, 2));
        let x = (&p.0 + &u.0 * &ell, &p.1 + &u.1 * &ell);
        let Some(grad) = field_gradient(&x, &f, &env).expect("x in the unit square") else {
            grad_skipped += 1;
            continue;
        };
        grad_checked += 1;
        let g = &f.entries[&centre].g;
        let ten = int(10) * &ell;
        let ok = (g.0 < ten || grad.0 >= &g.0 - &ell)
            && (g.0 > -ten.clone() || grad.0 <= &g.0 + &ell)
            && (g.1 < ten || grad.1 >= &g.1 - &ell)
            && (g.1 > -ten.clone() || grad.1 <= &g.1 + &ell);
        t.check(ok, || format!("draw {draw}: gradient {:?} vs g {:?}", grad, g));
    }
    let details = serde_json::json!({
        "draws": MESA_DRAWS,
        "range_queries_per_draw": MESA_QUERIES,
        "drop_points_checked": drop_checked,
        "gradient_points_checked": grad_checked,
        "gradient_points_skipped": grad_skipped,
    });
    (t, details)
}

// ------------------------------------------------------------- Appendix A

/// Random box QPs in the Appendix A suite.
pub const APPENDIX_A_QPS: usize = 50;

fn det(mut a: Vec<Vec<Rational>>) -> Rational {
    let n = a.len();
    let mut d = Rational::one();
    for col in 0..n {
        let Some(p) = (col..n).find(|&r| !a[r][col].is_zero()) else { return Rational::zero() };
        if p != col {
            a.swap(p, col);
            d = -d;
        }
        d *= a[col][col].clone();
        for r in col + 1..n {
            let f = &a[r][col] / &a[col][col];
            for c in col..n {
                let v = &f * &a[col][c];
                a[r][c] -= v;
            }
        }
    }
    d
}

/// Every principal minor of the gradient's linear part is nonsingular, so
/// each active-set pattern has at most one candidate point.
pub fn principal_minors_nonsingular(qp: &BoxQP) -> bool {
    let (h, _) = qp.gradient_affine_map();
    let n = qp.var_count;
    (1u32..(1 << n)).all(|mask| {
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        !det(idx.iter().map(|&i| idx.iter().map(|&j| h[i][j].clone()).collect()).collect()).is_zero()
    })
}

/// Integer coefficients in `[−4, 4]` on every monomial of degree ≤ 2.
pub fn random_box_qp(rng: &mut ChaCha8Rng, n: usize) -> BoxQP {
    let mut qp = BoxQP::new(n);
    for i in 0..n {
        for j in i..n {
            qp.add_quad(i, j, int(rng.gen_range(-4..=4)));
        }
        qp.add_lin(i, int(rng.gen_range(-4..=4)));
    }
    qp
}

fn appendix_a_suite(seed: u64) -> (Tally, serde_json::Value) {
    let mut t = Tally::default();
    let mut rng = rng_for(seed, 1);
    let mut rejected = 0usize;
    let mut sizes = Vec::new();
    let cfg = SolverConfig { max_iters: 200_000, ..SolverConfig::default() };
    while sizes.len() < APPENDIX_A_QPS {
        let n = rng.gen_range(1..=5);
        let qp = random_box_qp(&mut rng, n);
        if !principal_minors_nonsingular(&qp) {
            rejected += 1;
            continue;
        }
        sizes.push(n);
        let k = sizes.len();
        let eps = compute_epsilon_gap(&qp);
        let approx = match projected_gradient_solve(&qp, &eps, &cfg) {
            Ok(x) => x,
            Err(e) => {
                t.check(false, || format!("QP {k}: descent failed: {e}"));
                continue;
            }
        };
        let near = check_kkt(&qp, &approx, &eps).is_ok_and(|v| v.satisfied);
        t.check(near, || format!("QP {k}: descent output is not ε-KKT"));
        let exact = match round_to_exact(&qp, &approx, &eps) {
            Ok(r) => r.exact_point,
            Err(e) => {
                t.check(false, || format!("QP {k}: rounding failed: {e}"));
                continue;
            }
        };
        let ok = check_kkt(&qp, &exact, &Rational::zero()).is_ok_and(|v| v.satisfied);
        t.check(ok, || format!("QP {k}: rounded point fails the exact check"));
        let all = enumerate_exact_kkt_with_cap(&qp, 5);
        t.check(all.is_ok_and(|pts| pts.contains(&exact)), || format!("QP {k}: rounded point not enumerated"));
    }
    let details = serde_json::json!({
        "qps": sizes.len(),
        "sizes": sizes,
        "rejected_singular": rejected,
    });
    (t, details)
}

// ------------------------------------------------------------- Appendix B

/// Random circuits in the Appendix B suite.
pub const APPENDIX_B_CIRCUITS: usize = 50;
/// Inputs per circuit for both agreement checks.
pub const APPENDIX_B_INPUTS: usize = 20;

fn small_rational(rng: &mut ChaCha8Rng) -> Rational {
    rat(rng.gen_range(-6..=6), rng.gen_range(1..=4))
}

/// Mixed-gate circuit of at most `max_gates` gates ending in a trunc-linear
/// output gate.
pub fn random_mixed_circuit(rng: &mut ChaCha8Rng, max_gates: usize) -> LinearCircuit {
    let m = rng.gen_range(1..=2);
    let body = rng.gen_range(0..max_gates);
    let mut gates = Vec::with_capacity(body + 1);
    for t in 0..=body {
        let idx = m + 1 + t;
        let mut pick = || rng.gen_range(1..idx);
        let (j, k) = (pick(), pick());
        let form = LinearForm::new(vec![(small_rational(rng), j), (small_rational(rng), k)], small_rational(rng));
        let kind = if t == body { 0 } else { rng.gen_range(0..5) };
        gates.push(match kind {
            0 => Gate::TruncLinear(form),
            1 => Gate::AffineLinear(form),
            2 => {
                let lo = small_rational(rng);
                Gate::TruncInterval { hi: &lo + int(2), lo, input: j }
            }
            3 => Gate::Min { left: j, right: k },
            _ => Gate::Max { left: j, right: k },
        });
    }
    LinearCircuit::new(m, gates, m + body + 1).expect("gates read earlier wires only")
}

fn appendix_b_suite(seed: u64) -> (Tally, serde_json::Value) {
    let mut t = Tally::default();
    let mut rng = rng_for(seed, 2);
    let mut k_bits = Vec::new();
    for idx in 0..APPENDIX_B_CIRCUITS {
        let c = random_mixed_circuit(&mut rng, 10);
        let norm = match normalize(&c) {
            Ok(n) => n,
            Err(e) => {
                t.check(false, || format!("circuit {idx}: {e}"));
                continue;
            }
        };
        t.check(norm.output.is_trunc_only(), || format!("circuit {idx}: output has non-trunc gates"));
        let k = norm.k();
        k_bits.push(k.numer().bits());
        let mut pi = PerturbationVector::zero();
        for w in norm.output.perturbable_wires() {
            pi.set(w, rat(rng.gen_range(-8..=8), 8) / &k);
        }
        let delta = pi.max_abs();
        let sigma = match transfer_perturbation(&c, &norm, &pi) {
            Ok(s) => s,
            Err(e) => {
                t.check(false, || format!("circuit {idx}: transfer failed: {e}"));
                continue;
            }
        };
        t.check(sigma.max_abs() <= &delta * &k, || format!("circuit {idx}: |σ| exceeds δK"));
        for _ in 0..APPENDIX_B_INPUTS {
            let x: Vec<Rational> = (0..c.input_count()).map(|_| uniform(&mut rng, 0, 97, 97)).collect();
            let want = evaluate(&c, &x).expect("unit inputs");
            let got = evaluate(&norm.output, &x).expect("unit inputs");
            t.check(want.output() == got.output(), || format!("circuit {idx}: π = 0 mismatch at {x:?}"));
            let lowered = evaluate_perturbed(&norm.output, &pi, &x).expect("|π| ≤ 1/K");
            let original = evaluate_perturbed(&c, &sigma, &x).expect("|σ| ≤ δK");
            t.check(lowered.output() == original.output(), || format!("circuit {idx}: f^σ ≠ f̄^π at {x:?}"));
        }
    }
    let details = serde_json::json!({
        "circuits": APPENDIX_B_CIRCUITS,
        "inputs_per_circuit": APPENDIX_B_INPUTS,
        "max_k_bits": k_bits.iter().max(),
    });
    (t, details)
}
