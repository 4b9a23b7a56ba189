//! Acceptance criteria, one line per criterion. Every tolerance and sample
//! count is pinned below; the process exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use circuit_core::rational::{rpow, trunc01};
use circuit_core::{
    evaluate, evaluate_perturbed, halving_example, int, parse_circuit, rat, region_gradient, CircuitBuilder, Gate,
    LinearCircuit, PerturbationVector, Rational,
};
use cli::pipeline::{run_pipeline, PipelineOptions, TargetSpec};
use cli::verify_fixture;
use gadgets::{build_mesa_field, tables_from_sampled_field};
use kkt_engine::{check_2dlinear_kkt, enumerate_exact_kkt_with_cap, KktCheck};
use mesa::sample::{check_field_assumptions, sample_field_from_target, SmoothTarget};
use mesa::{field_max, GridSpec, MesaEnv};
use num_traits::{One, Signed, Zero};
use qp_compiler::{build_backprop_certificate, check_kkt, compile_qp, compile_qp_with_k, BoxQP, CompiledQP};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_240_601;

// Criterion 1
const AC1_DELTA: (i64, i64) = (1, 128);
const AC1_K: i64 = 2;
const AC1_BUDGET: Duration = Duration::from_secs(1);

// Criteria 2 and 3
const AC2_RANDOM_CIRCUITS: usize = 20;
const AC2_MAX_GATES: usize = 6;
const AC2_MAX_INPUTS: usize = 2;
/// Enumeration visits 3^n patterns; compiled QPs have `m + 3·gates` variables.
const AC2_VAR_CAP: usize = 11;

// Criterion 4
const AC4_DRAWS: u64 = 1000;
const AC4_QUERIES: u64 = 100;

// Criterion 5
const AC5_DRAWS: u64 = 500;

// Criterion 6
const AC6_BITS: u32 = 3;
const AC6_K: i64 = 12;
const AC6_POINTS: usize = 200;
const AC6_PERTURBATIONS: usize = 200;
const AC6_OFFSET_FACTOR: i64 = 11;

// Criteria 7 and 8
const AC7_CIRCUITS: u64 = 50;
const AC7_INPUTS: u64 = 20;
const AC8_QPS: u64 = 50;

// Criterion 9
const AC9_BITS: u32 = 3;
const AC9_EPS: (i64, i64) = (1, 2000);
const AC9_GRID_POINTS: usize = 50;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// ------------------------------------------------------------ criterion 1

fn example_point(d: &Rational) -> Vec<Rational> {
    let d2 = d * d;
    let mut x = vec![rat(1, 2) + &d2 / int(4), int(1), int(0), rat(1, 4) - &d2 / int(8) - d / int(2)];
    x.push(&d2 / int(4));
    x.extend(std::iter::repeat(int(0)).take(5));
    x
}

fn ac1() -> Outcome {
    let start = Instant::now();
    let d = rat(AC1_DELTA.0, AC1_DELTA.1);
    let cqp = compile_qp_with_k(&halving_example(), &d, &int(AC1_K)).map_err(|e| e.to_string())?;
    let x = example_point(&d);
    let v = check_kkt(&cqp.qp, &x, &Rational::zero()).map_err(|e| e.to_string())?;
    let took = start.elapsed();
    ensure(v.satisfied, || format!("violations {:?}", v.violations))?;
    ensure(took < AC1_BUDGET, || format!("took {took:?}"))?;
    Ok(format!("exact KKT at eps = 0, {} vars, {took:?}", cqp.qp.var_count))
}

// -------------------------------------------------------- criteria 2 and 3

fn random_trunc_circuit(rng: &mut ChaCha8Rng) -> LinearCircuit {
    loop {
        let m = rng.gen_range(1..=AC2_MAX_INPUTS);
        let gates = rng.gen_range(1..=AC2_MAX_GATES);
        if m + 3 * gates > AC2_VAR_CAP {
            continue;
        }
        let mut b = CircuitBuilder::new(m);
        let mut last = 0;
        for _ in 0..gates {
            let w = b.next_wire();
            let mut coeff = || rat(rng.gen_range(-8..=8), rng.gen_range(1..=4));
            let (a1, a2, c) = (coeff(), coeff(), coeff());
            last = b.tl(vec![(a1, rng.gen_range(1..w)), (a2, rng.gen_range(1..w))], c);
        }
        return b.finish(last).expect("gates read earlier wires");
    }
}

/// `∂p/∂x_i` from the exact central difference of a quadratic.
fn partials(qp: &BoxQP, x: &[Rational]) -> Vec<Rational> {
    (0..qp.var_count)
        .map(|i| {
            let (mut up, mut down) = (x.to_vec(), x.to_vec());
            up[i] += Rational::one();
            down[i] -= Rational::one();
            (qp.eval(&up).unwrap() - qp.eval(&down).unwrap()) / int(2)
        })
        .collect()
}

/// Certificate bounds and the backpropagation identity, recomputed from the
/// circuit's own region gradients.
fn check_certificate(cqp: &CompiledQP, p: &[Rational]) -> Result<(), String> {
    let cert = build_backprop_certificate(cqp, p).map_err(|e| e.to_string())?;
    let k = &cqp.k;
    let bound = int(8) * k * k * &cqp.delta;
    for (w, _) in cqp.source.indexed_gates() {
        let (pi, lambda) = (&cert.pi[&w], &cert.lambda[&w]);
        ensure(pi.abs() <= bound, || format!("|pi_{w}| = {pi} > 8K^2 delta"))?;
        ensure(!lambda.is_negative() && *lambda <= Rational::one(), || format!("lambda_{w} = {lambda}"))?;
    }
    let active: Vec<usize> = cert.pi.iter().filter(|(_, v)| !v.is_zero()).map(|(w, _)| *w).collect();
    let m = cqp.source.input_count();
    let mut sum = vec![Rational::zero(); m];
    for mask in 0u64..(1 << active.len()) {
        let mut pv = PerturbationVector::with_bound(Rational::zero());
        let mut weight = Rational::one();
        for (t, w) in active.iter().enumerate() {
            let plus = mask & (1 << t) == 0;
            pv.set(*w, if plus { cert.pi[w].clone() } else { -cert.pi[w].clone() });
            weight *= if plus { cert.lambda[w].clone() } else { Rational::one() - &cert.lambda[w] };
        }
        let rg = region_gradient(&cqp.source, &pv, &p[..m]).map_err(|e| e.to_string())?;
        let g = rg.gradient.ok_or("perturbed circuit not differentiable")?;
        for (acc, gi) in sum.iter_mut().zip(g) {
            *acc += &weight * gi;
        }
    }
    let dp = partials(&cqp.qp, p);
    let seed = rpow(&cqp.delta, (cqp.source.wire_count() + 1) as i32);
    for i in 0..m {
        ensure(dp[i] == &seed * &sum[i], || format!("input {}: dp/dy = {} vs {}", i + 1, dp[i], &seed * &sum[i]))?;
    }
    Ok(())
}

/// Lemma 3.3 (truncation identity) and Lemma 3.4 (error bound) per gate.
fn check_truncation(cqp: &CompiledQP, p: &[Rational]) -> Result<(), String> {
    let n = cqp.source.wire_count();
    let vm = &cqp.var_map;
    let two_k_delta = int(2) * &cqp.k * &cqp.delta;
    for (w, gate) in cqp.source.indexed_gates() {
        let Gate::TruncLinear(f) = gate else { return Err("non-trunc gate".into()) };
        let arg = f.eval(&p[..n]);
        let t = trunc01(&arg);
        ensure(&arg - &cqp.k * &p[vm.zp(w)] + &cqp.k * &p[vm.zm(w)] == t, || format!("gate {w}: truncation identity"))?;
        let err = (&p[vm.y(w)] - &t).abs();
        let cap = rpow(&two_k_delta, (n + 1 - w) as i32);
        ensure(err <= cap, || format!("gate {w}: error {err} > {cap}"))?;
    }
    Ok(())
}

fn backprop_instances() -> Result<Vec<(CompiledQP, Vec<Vec<Rational>>)>, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut out = Vec::new();
    let ex = compile_qp_with_k(&halving_example(), &rat(1, 128), &int(2)).map_err(|e| e.to_string())?;
    let pts = enumerate_exact_kkt_with_cap(&ex.qp, AC2_VAR_CAP).map_err(|e| e.to_string())?;
    out.push((ex, pts));
    while out.len() < 1 + AC2_RANDOM_CIRCUITS {
        let c = random_trunc_circuit(&mut rng);
        let k = circuit_core::coefficient_bound(&c).map_err(|e| e.to_string())?;
        // Admissible: δ < 1/(16K²).
        let delta = Rational::one() / (int(32) * &k * &k);
        let cqp = compile_qp(&c, &delta).map_err(|e| e.to_string())?;
        let pts = enumerate_exact_kkt_with_cap(&cqp.qp, AC2_VAR_CAP).map_err(|e| e.to_string())?;
        out.push((cqp, pts));
    }
    Ok(out)
}

fn ac2_ac3() -> (Outcome, Outcome) {
    let instances = match backprop_instances() {
        Ok(i) => i,
        Err(e) => return (Err(e.clone()), Err(e)),
    };
    let total: usize = instances.iter().map(|(_, p)| p.len()).sum();
    let run = |check: fn(&CompiledQP, &[Rational]) -> Result<(), String>| -> Outcome {
        for (idx, (cqp, pts)) in instances.iter().enumerate() {
            ensure(!pts.is_empty(), || format!("circuit {idx}: no exact KKT point"))?;
            for p in pts {
                ensure(check_kkt(&cqp.qp, p, &Rational::zero()).is_ok_and(|v| v.satisfied), || {
                    format!("circuit {idx}: enumerated point is not KKT")
                })?;
                check(cqp, p).map_err(|e| format!("circuit {idx}: {e}"))?;
            }
        }
        Ok(format!("{} circuits, {total} exact KKT points", instances.len()))
    };
    (run(check_certificate), run(check_truncation))
}

// ------------------------------------------------------------ criterion 4

fn ac4() -> Outcome {
    let r = verify_fixture("mesa-lemma-suite", SEED).map_err(|e| e.to_string())?;
    ensure(r.passed, || format!("{:?}", r.failures))?;
    ensure(r.details["draws"] == AC4_DRAWS && r.details["range_queries_per_draw"] == AC4_QUERIES, || {
        format!("{}", r.details)
    })?;
    let bowl = SmoothTarget::quadratic_bowl();
    for n in 1..=4 {
        let grid = GridSpec::new(n).unwrap();
        let ell = grid.ell();
        let f = sample_field_from_target(&bowl, grid).map_err(|e| e.to_string())?;
        let rep = check_field_assumptions(&f, &(&ell * &ell / int(100)));
        ensure(rep.passed(), || format!("n = {n}: {} violations", rep.violations.len()))?;
    }
    Ok(format!("{} checks over {AC4_DRAWS} draws; bowl fields n = 1..4 pass", r.checks))
}

// ------------------------------------------------------------ criterion 5

fn ac5() -> Outcome {
    let r = verify_fixture("gadget-lemma-suite", SEED).map_err(|e| e.to_string())?;
    ensure(r.passed, || format!("{:?}", r.failures))?;
    ensure(r.details["draws_per_lemma"] == AC5_DRAWS, || format!("{}", r.details))?;
    Ok(format!("{} checks, {AC5_DRAWS} draws per lemma", r.checks))
}

// ------------------------------------------------------------ criterion 6

fn ac6() -> Outcome {
    let grid = GridSpec::new(AC6_BITS).unwrap();
    let env = MesaEnv::steep(grid.ell());
    let dp = grid.ell() * grid.ell() / int(100);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 6);
    let mut unit = || rat(rng.gen_range(0..=1_000_000), 1_000_000);
    let points: Vec<[Rational; 2]> = (0..AC6_POINTS).map(|_| [unit(), unit()]).collect();

    let flat = sample_field_from_target(&SmoothTarget::constant(rat(1, 2)), grid).map_err(|e| e.to_string())?;
    let (a, g) = tables_from_sampled_field(&flat).map_err(|e| e.to_string())?;
    let mc = build_mesa_field(&a, &g, AC6_BITS, &env, &dp).map_err(|e| e.to_string())?;
    for x in &points {
        let v = evaluate(&mc.circuit, x).map_err(|e| e.to_string())?;
        ensure(v.output() == &rat(1, 2), || format!("flat field {} at {x:?}", v.output()))?;
    }

    let bowl = sample_field_from_target(&SmoothTarget::quadratic_bowl(), grid).map_err(|e| e.to_string())?;
    let (a, g) = tables_from_sampled_field(&bowl).map_err(|e| e.to_string())?;
    let mc = build_mesa_field(&a, &g, AC6_BITS, &env, &dp).map_err(|e| e.to_string())?;
    let l = Rational::one() / (int(24 * AC6_K) * rpow(&int(2), AC6_BITS as i32));
    let bound = &l * &l / int(2);
    ensure(mc.delta <= bound, || format!("mesa delta {} above (1/(24k 2^n))^2/2", mc.delta))?;
    let reference = mc.reference_field();
    let mut worst = Rational::zero();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 66);
    for (t, x) in points.iter().cycle().take(AC6_PERTURBATIONS).enumerate() {
        let mut pi = PerturbationVector::with_bound(bound.clone());
        for w in mc.circuit.perturbable_wires() {
            pi.set(w, &bound * rat(rng.gen_range(-1_000_000..=1_000_000), 1_000_000));
        }
        let want = field_max(&(x[0].clone(), x[1].clone()), &reference, &env).map_err(|e| e.to_string())?;
        let clean = evaluate(&mc.circuit, x).map_err(|e| e.to_string())?;
        ensure(clean.output() == &want, || format!("draw {t}: pi = 0 output differs from the mesa field"))?;
        let v = evaluate_perturbed(&mc.circuit, &pi, x).map_err(|e| e.to_string())?;
        let offset = (v.output() - &want).abs();
        ensure(offset <= int(AC6_OFFSET_FACTOR) * pi.max_abs(), || format!("draw {t}: offset {offset}"))?;
        if offset > worst {
            worst = offset;
        }
    }
    Ok(format!(
        "flat = 1/2 at {AC6_POINTS} points; worst offset/max|pi| = {:.3} over {AC6_PERTURBATIONS} draws",
        num_traits::ToPrimitive::to_f64(&(worst / bound)).unwrap_or(f64::NAN)
    ))
}

// -------------------------------------------------------- criteria 7 and 8

fn ac7() -> Outcome {
    let r = verify_fixture("appendix-b-suite", SEED).map_err(|e| e.to_string())?;
    ensure(r.passed, || format!("{:?}", r.failures))?;
    ensure(r.details["circuits"] == AC7_CIRCUITS && r.details["inputs_per_circuit"] == AC7_INPUTS, || {
        format!("{}", r.details)
    })?;
    Ok(format!("{} checks over {AC7_CIRCUITS} circuits", r.checks))
}

fn ac8() -> Outcome {
    let r = verify_fixture("appendix-a-suite", SEED).map_err(|e| e.to_string())?;
    ensure(r.passed, || format!("{:?}", r.failures))?;
    ensure(r.details["qps"] == AC8_QPS, || format!("{}", r.details))?;
    Ok(format!("{} checks over {AC8_QPS} QPs", r.checks))
}

// ------------------------------------------------------------ criterion 9

fn ac9() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let eps = rat(AC9_EPS.0, AC9_EPS.1);
    let opts = PipelineOptions {
        target: TargetSpec::Bowl,
        bits: AC9_BITS,
        eps: Some(eps.clone()),
        delta_prime: None,
        seed: SEED,
        samples: 20,
        outdir: dir.path().to_path_buf(),
    };
    let m = run_pipeline(&opts).map_err(|e| e.to_string())?;
    let v = &m.verification;
    ensure(v.passed && v.qp_identities_hold && v.max_wire_residual == "0", || format!("{v:?}"))?;

    // Contrapositive of the §4.3 claim at grid points of the built circuit.
    let text = std::fs::read_to_string(dir.path().join("mesa.lac")).map_err(|e| e.to_string())?;
    let circuit = parse_circuit(&text).map_err(|e| e.to_string())?;
    let delta = circuit_core::parse_rational(&m.parameters.delta).map_err(|e| e.to_string())?;
    let grid = GridSpec::new(AC9_BITS).unwrap();
    let mut all: Vec<(usize, usize)> = grid.indices().collect();
    all.shuffle(&mut ChaCha8Rng::seed_from_u64(SEED ^ 9));
    let third = &eps / int(3);
    let (mut violators, mut labels) = (0usize, std::collections::BTreeMap::<&str, usize>::new());
    for &(i, j) in all.iter().take(AC9_GRID_POINTS) {
        let (x1, x2) = grid.point(i, j);
        // ∇h = (x₁, x₂)/1000 ≥ 0, so only the "x_i > 0 ⇒ ∂_i h ≤ ε" side can fail.
        let grad = [&x1 / int(1000), &x2 / int(1000)];
        let y = [x1, x2];
        let kkt = (0..2).all(|t| !y[t].is_positive() || grad[t] <= eps);
        if kkt {
            continue;
        }
        violators += 1;
        let verdict = check_2dlinear_kkt(&circuit, &y, &third, &delta).map_err(|e| e.to_string())?;
        *labels.entry(verdict.label()).or_default() += 1;
        ensure(!matches!(verdict, KktCheck::YesWitnessed { .. }), || format!("({i},{j}) yes-witnessed at eps/3"))?;
    }
    ensure(violators > 0, || "no sampled grid point violates h's eps-KKT conditions".into())?;
    Ok(format!("pipeline verified; {violators}/{AC9_GRID_POINTS} grid points violate, verdicts {labels:?}"))
}

fn main() {
    let mut ok = true;
    let mut report = |label: &str, started: Instant, outcome: Outcome| {
        let took = started.elapsed();
        match outcome {
            Ok(d) => println!("PASS  {label}: {d} [{took:.1?}]"),
            Err(e) => {
                ok = false;
                println!("FAIL  {label}: {e} [{took:.1?}]");
            }
        }
    };
    let guarded = |f: &dyn Fn() -> Outcome| -> Outcome {
        catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        })
    };

    let t = Instant::now();
    report("AC1 Example 3.2 exact reproduction", t, guarded(&ac1));
    let t = Instant::now();
    let (r2, r3) = catch_unwind(ac2_ac3).unwrap_or_else(|_| (Err("panicked".into()), Err("panicked".into())));
    report("AC2 backpropagation certificates", t, r2);
    report("AC3 truncation identity and error bounds", t, r3);
    let t = Instant::now();
    report("AC4 mesa lemma suite", t, guarded(&ac4));
    let t = Instant::now();
    report("AC5 gadget lemma suite", t, guarded(&ac5));
    let t = Instant::now();
    report("AC6 field circuit at n = 3", t, guarded(&ac6));
    let t = Instant::now();
    report("AC7 normalization and perturbation transfer", t, guarded(&ac7));
    let t = Instant::now();
    report("AC8 approximate-to-exact rounding", t, guarded(&ac8));
    let t = Instant::now();
    report("AC9 pipeline structure and contrapositive", t, guarded(&ac9));
    drop(report);
    if !ok {
        std::process::exit(1);
    }
}
