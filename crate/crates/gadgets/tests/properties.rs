//! Perturbation bounds of the gadget lemmas, checked exactly on random
//! draws. Oracles: binary expansion via `floor`, a direct Boolean
//! interpreter, plain rational arithmetic, and `mesa` piece/field
//! evaluation.

use std::sync::OnceLock;

use circuit_core::rational::{pow2, rat};
use circuit_core::{evaluate, evaluate_perturbed, LinearCircuit, PerturbationVector, Rational};
use gadgets::field::{extraction_l, MesaTables};
use gadgets::*;
use mesa::sample::{sample_field_from_target, SmoothTarget};
use mesa::{field_max, mesa_value, piece_value, GridSpec, MesaEnv, MesaParams, Piece};
use num_traits::{One, Signed, Zero};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn int(v: i64) -> Rational {
    Rational::from_integer(v.into())
}

/// Uniform draws `bound·r/10⁶` on every perturbable gate.
fn random_pi(c: &LinearCircuit, bound: &Rational, seed: u64) -> PerturbationVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pi = PerturbationVector::with_bound(bound.clone());
    for w in c.perturbable_wires() {
        pi.set(w, bound * rat(rng.gen_range(-1_000_000..=1_000_000), 1_000_000));
    }
    pi
}

fn unit() -> impl Strategy<Value = Rational> {
    (0i64..1_000_000).prop_map(|n| rat(n, 1_000_000))
}

fn in_range(lo: i64, hi: i64) -> impl Strategy<Value = Rational> {
    (lo * 100_000..=hi * 100_000).prop_map(|n| rat(n, 100_000))
}

/// Inputs for a sign-magnitude value: plus bank then minus bank.
fn encode(value: &Rational, width: usize) -> Vec<Rational> {
    let scaled = value.abs() * pow2(width as i64);
    assert!(scaled.is_integer());
    let k = scaled.to_integer();
    let bits: Vec<Rational> = (0..width).map(|i| if k.bit((width - 1 - i) as u64) { int(1) } else { int(0) }).collect();
    let zeros = vec![Rational::zero(); width];
    if value.is_negative() {
        [zeros, bits].concat()
    } else {
        [bits, zeros].concat()
    }
}

fn signed_dyadic(width: usize) -> impl Strategy<Value = Rational> {
    let top = (1i64 << width) - 1;
    (-top..=top).prop_map(move |k| rat(k, 1 << width))
}

fn var_at(base: usize, width: usize) -> BinaryVar {
    BinaryVar { int_bits: 0, plus: (base..base + width).collect(), minus: (base + width..base + 2 * width).collect() }
}

fn random_boolean(inputs: usize, specs: &[(bool, usize, usize)]) -> BooleanCircuit {
    let mut b = BoolBuilder::new(inputs);
    let mut count = inputs;
    for &(is_and, l, r) in specs {
        let (l, r) = (l % count + 1, r % count + 1);
        if is_and {
            b.and(l, r);
        } else {
            b.not(l);
        }
        count += 1;
    }
    let outputs = (inputs + 1..=count).collect();
    b.finish(outputs)
}

/// Independent interpreter over all variables.
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

struct Fixture {
    n: u32,
    tables: MesaTables,
    components: Vec<(LinearCircuit, ComponentWiresShape)>,
    field: gadgets::MesaCircuit,
    reference: mesa::MesaField,
}

struct ComponentWiresShape {
    averaged: [usize; 5],
    output: usize,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let n = 3;
        let grid = GridSpec::new(n).unwrap();
        let f = sample_field_from_target(&SmoothTarget::quadratic_bowl(), grid).unwrap();
        let (a_circ, g_circ) = tables_from_sampled_field(&f).unwrap();
        let tables = MesaTables::from_circuits(&a_circ, &g_circ, n).unwrap();
        let env = MesaEnv::steep(grid.ell());
        let gamma_t = &env.gamma / tables.shrink();
        let components = (1..=4)
            .map(|index| {
                let mut b = GadgetBuilder::new(2);
                let comp = build_subgrid_component(&mut b, SubgridSpec { index }, (1, 2), &tables, &gamma_t);
                let shape = ComponentWiresShape { averaged: comp.averaged, output: comp.output };
                (b.finish(comp.output).unwrap(), shape)
            })
            .collect();
        let field = build_mesa_field(&a_circ, &g_circ, n, &env, &rat(1, 4900)).unwrap();
        let reference = field.reference_field();
        Fixture { n, tables, components, field, reference }
    })
}

fn rescaled_env(fx: &Fixture) -> MesaEnv {
    let ell = pow2(-(fx.n as i64));
    MesaEnv::new(ell, int(12) / &fx.field.env.ell / fx.tables.shrink())
}

/// Mesa parameters of the rescaled grid point `(i, j)`.
fn rescaled_params(fx: &Fixture, i: usize, j: usize) -> MesaParams {
    let side = 1usize << fx.n;
    let idx = i * side + j;
    let unit = pow2(-(fx.n as i64));
    MesaParams::uniform(
        (&unit * int(i as i64), &unit * int(j as i64)),
        fx.tables.a[idx].clone(),
        fx.tables.g[idx].clone(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn extraction_is_exact_outside_bad_regions(
        n in 1usize..=5,
        l_pick in 0usize..3,
        x in unit(),
        seed in any::<u64>(),
    ) {
        let l = [rat(1, 100), rat(1, 1000), extraction_l(n as u32)][l_pick].clone();
        let mut b = GadgetBuilder::new(1);
        let e = build_extract_bits(&mut b, 1, n, &l);
        let last = *e.residuals.last().unwrap();
        let c = b.finish(last).unwrap();
        let pi = random_pi(&c, &(&l * &l / int(2)), seed);
        let m = pi.max_abs();
        let scale = pow2(n as i64);
        let bad = (0..=(1i64 << n)).any(|k| {
            let edge = int(k) / &scale;
            x >= &edge - &m / &l && x <= &edge + &l + &m / &l
        });
        prop_assume!(!bad);
        let t = evaluate_perturbed(&c, &pi, &[x.clone()]).unwrap();
        let prefix = (&x * &scale).floor() / &scale;
        prop_assert_eq!(e.bits.read(&t), Some(prefix.clone()));
        prop_assert_eq!(t.output(), &(&x - &prefix));
    }

    #[test]
    fn lowered_boolean_matches_interpreter(
        inputs in 1usize..=4,
        specs in proptest::collection::vec((any::<bool>(), any::<usize>(), any::<usize>()), 1..12),
        assignment in any::<u8>(),
        seed in any::<u64>(),
    ) {
        let g = random_boolean(inputs, &specs);
        let x: Vec<bool> = (0..inputs).map(|k| assignment >> k & 1 == 1).collect();
        let mut b = GadgetBuilder::new(inputs);
        let input_wires: Vec<usize> = (1..=inputs).collect();
        let outs = lower_boolean(&mut b, &g, &input_wires);
        let c = b.finish(*outs.last().unwrap()).unwrap();
        // Entries strictly inside (−1, 1).
        let pi = random_pi(&c, &rat(999_999, 1_000_000), seed);
        let t = evaluate_perturbed(&c, &pi, &x.iter().map(|&v| int(v as i64)).collect::<Vec<_>>()).unwrap();
        let want = interpret(&g, &x);
        prop_assert_eq!(&g.eval(&x), &want);
        for (w, v) in outs.iter().zip(want) {
            prop_assert_eq!(t.value(*w), &int(v as i64));
        }
    }

    #[test]
    fn bit_multiply_bound(x in in_range(-2, 2), bit in any::<bool>(), seed in any::<u64>()) {
        let mut b = GadgetBuilder::new(2);
        let out = build_bit_multiply(&mut b, 1, 2);
        let c = b.finish(out).unwrap();
        let pi = random_pi(&c, &rat(999_999, 1_000_000), seed);
        let v = evaluate_perturbed(&c, &pi, &[x.clone(), int(bit as i64)]).unwrap().output().clone();
        if bit {
            prop_assert!((&v - &x).abs() <= pi.max_abs());
        } else {
            prop_assert!(v.is_zero());
        }
    }

    #[test]
    fn cont_times_bin_bound_is_x_independent(
        width in 1usize..=6,
        raw in any::<i64>(),
        x in in_range(-2, 2),
        x2 in in_range(-2, 2),
        seed in any::<u64>(),
    ) {
        let top = (1i64 << width) - 1;
        let y = rat(raw.rem_euclid(2 * top + 1) - top, 1 << width);
        let mut b = GadgetBuilder::new(1 + 2 * width);
        let out = build_cont_times_bin(&mut b, 1, &var_at(2, width));
        let c = b.finish(out).unwrap();
        let pi = random_pi(&c, &rat(999_999, 1_000_000), seed);
        let run = |x: &Rational| {
            let mut inputs = vec![x.clone()];
            inputs.extend(encode(&y, width));
            evaluate_perturbed(&c, &pi, &inputs).unwrap().output().clone() - x * &y
        };
        let (s1, s2) = (run(&x), run(&x2));
        prop_assert!(s1.abs() <= pi.max_abs());
        prop_assert_eq!(s1, s2);
    }

    #[test]
    fn affine_bound_is_x_independent(
        x in (unit(), unit()),
        x2 in (unit(), unit()),
        p in (0i64..8, 0i64..8),
        a in 0i64..8,
        g in (signed_dyadic(3), signed_dyadic(3)),
        seed in any::<u64>(),
    ) {
        let w = 3;
        let mut b = GadgetBuilder::new(2 + 5 * 2 * w);
        let vars: Vec<BinaryVar> = (0..5).map(|k| var_at(3 + 2 * w * k, w)).collect();
        let out = build_affine(&mut b, 1, 2, &vars[0], &vars[1], &vars[2], &vars[3], &vars[4]);
        let c = b.finish(out).unwrap();
        let pi = random_pi(&c, &rat(999_999, 1_000_000), seed);
        let (p1, p2, av) = (rat(p.0, 8), rat(p.1, 8), rat(a, 8));
        let run = |x: &(Rational, Rational)| {
            let mut inputs = vec![x.0.clone(), x.1.clone()];
            for v in [&p1, &p2, &av, &g.0, &g.1] {
                inputs.extend(encode(v, w));
            }
            let exact = (&x.0 - &p1) * &g.0 + (&x.1 - &p2) * &g.1 + &av;
            evaluate_perturbed(&c, &pi, &inputs).unwrap().output() - exact
        };
        let (s1, s2) = (run(&x), run(&x2));
        prop_assert!(s1.abs() <= int(2) * pi.max_abs());
        prop_assert_eq!(s1, s2);
    }

    #[test]
    fn mesa_piece_offsets_are_bounded_and_constant(
        offset in (in_range(-1, 1), in_range(-1, 1)),
        offset2 in (in_range(-1, 1), in_range(-1, 1)),
        p in (0i64..8, 0i64..8),
        a in 0i64..8,
        g in (signed_dyadic(3), signed_dyadic(3)),
        seed in any::<u64>(),
    ) {
        let w = 3;
        let env = MesaEnv::steep(rat(1, 8));
        let mut b = GadgetBuilder::new(2 + 5 * 2 * w);
        let vars: Vec<BinaryVar> = (0..5).map(|k| var_at(3 + 2 * w * k, w)).collect();
        let pieces = build_mesa_pieces(
            &mut b, (1, 2), &(vars[0].clone(), vars[1].clone()), &vars[2], &(vars[3].clone(), vars[4].clone()),
            &env.ell, &env.gamma,
        );
        let c = b.finish(pieces[4]).unwrap();
        let pi = random_pi(&c, &rat(999_999, 1_000_000), seed);
        let params = MesaParams::uniform((rat(p.0, 8), rat(p.1, 8)), rat(a, 8), g.clone());
        // x − p ± ℓ/2 stays inside [−2, 2] for |x − p| ≤ 1.
        let offsets = |o: &(Rational, Rational)| {
            let x = (&params.p.0 + &o.0, &params.p.1 + &o.1);
            let mut inputs = vec![x.0.clone(), x.1.clone()];
            for v in [&params.p.0, &params.p.1, &params.a[0], &g.0, &g.1] {
                inputs.extend(encode(v, w));
            }
            let t = evaluate_perturbed(&c, &pi, &inputs).unwrap();
            Piece::ALL.map(|d| t.value(pieces[d.index()]) - piece_value(d, &x, &params, &env))
        };
        let (s1, s2) = (offsets(&offset), offsets(&offset2));
        for d in 0..5 {
            prop_assert!(s1[d].abs() <= int(2) * pi.max_abs());
        }
        prop_assert_eq!(s1, s2);
    }
}

/// The chain of inequalities separating the `k` bad regions holds
/// symbolically for every grid size we build.
#[test]
fn bad_regions_never_overlap() {
    for n in 2..=10 {
        assert!(bad_regions_disjoint(n), "n = {n}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn component_is_a_perturbed_mesa_near_its_subgrid(
        index in 1usize..=4,
        m in (0usize..4, 0usize..4),
        u in (-750i64..=750, -750i64..=750),
        u2 in (-750i64..=750, -750i64..=750),
        seed in any::<u64>(),
    ) {
        let fx = fixture();
        let (c, shape) = &fx.components[index - 1];
        let (a1, a2) = SubgridSpec { index }.offset();
        let (i, j) = (2 * m.0 + a1, 2 * m.1 + a2);
        let params = rescaled_params(fx, i, j);
        let env = rescaled_env(fx);
        let unit = pow2(-(fx.n as i64));
        let at = |u: (i64, i64)| {
            (&params.p.0 + &unit * rat(u.0, 1000), &params.p.1 + &unit * rat(u.1, 1000))
        };
        let (x, x2) = (at(u), at(u2));
        let top = Rational::one() - &unit;
        for v in [&x.0, &x.1, &x2.0, &x2.1] {
            prop_assume!(!v.is_negative() && *v <= top);
        }
        let l = extraction_l(fx.n);
        let pi = random_pi(c, &(&l * &l / int(2)), seed);
        let mx = pi.max_abs();
        // Pieces above 1 are clamped by the min with 1 and cannot be the
        // active piece (the mesa stays below 2/3); only the others carry
        // an offset.
        let live = |x: &(Rational, Rational)| Piece::ALL.map(|d| piece_value(d, x, &params, &env) <= rat(2, 3));
        let sigma = |x: &(Rational, Rational)| {
            let t = evaluate_perturbed(c, &pi, &[x.0.clone(), x.1.clone()]).unwrap();
            let s = Piece::ALL.map(|d| t.value(shape.averaged[d.index()]) - piece_value(d, x, &params, &env));
            let clamped = Piece::ALL.map(|d| t.value(shape.averaged[d.index()]) >= &(Rational::one() - &mx));
            (s, clamped, t.value(shape.output).clone())
        };
        let (s1, clamped1, out1) = sigma(&x);
        let (s2, _, _) = sigma(&x2);
        let (live1, live2) = (live(&x), live(&x2));
        let mut shifted = params.clone();
        for d in 0..5 {
            if live1[d] {
                prop_assert!(s1[d].abs() <= int(3) * &mx);
                if live2[d] {
                    prop_assert_eq!(&s1[d], &s2[d]);
                }
                shifted.a[d] = &params.a[d] + &s1[d];
            } else if piece_value(Piece::ALL[d], &x, &params, &env) >= Rational::one() {
                prop_assert!(clamped1[d]);
            }
        }
        prop_assert!(mesa_value(&x, &params, &env) <= rat(2, 3));
        prop_assert!((&out1 - mesa_value(&x, &shifted, &env)).abs() <= int(4) * &mx);
        prop_assert!((&out1 - mesa_value(&x, &params, &env)).abs() <= int(7) * &mx);
    }

    #[test]
    fn component_is_small_away_from_its_subgrid(
        index in 1usize..=4,
        x in (0i64..=7000, 0i64..=7000),
        seed in any::<u64>(),
    ) {
        let fx = fixture();
        let (c, shape) = &fx.components[index - 1];
        let (a1, a2) = SubgridSpec { index }.offset();
        let x = (rat(x.0, 8000), rat(x.1, 8000));
        let unit = pow2(-(fx.n as i64));
        // Distance from the nearest point of this sub-grid, per coordinate.
        let dist = |v: &Rational, a: usize| {
            (0..4).map(|m| (v - &unit * int((2 * m + a) as i64)).abs()).min().unwrap()
        };
        let near = rat(3, 4) * &unit;
        prop_assume!(dist(&x.0, a1) > near || dist(&x.1, a2) > near);
        let l = extraction_l(fx.n);
        let pi = random_pi(c, &(&l * &l / int(2)), seed);
        let t = evaluate_perturbed(c, &pi, &[x.0, x.1]).unwrap();
        prop_assert!(t.value(shape.output) < &rat(1, 4));
    }

    #[test]
    fn field_offsets_stay_within_eleven_perturbations(
        x in (0i64..=10_000, 0i64..=10_000),
        seed in any::<u64>(),
    ) {
        let fx = fixture();
        let mc = &fx.field;
        let x = [rat(x.0, 10_000), rat(x.1, 10_000)];
        let want = field_max(&(x[0].clone(), x[1].clone()), &fx.reference, &mc.env).unwrap();
        let clean = evaluate(&mc.circuit, &x).unwrap();
        prop_assert_eq!(clean.output(), &want);
        let pi = random_pi(&mc.circuit, &mc.delta, seed);
        let t = evaluate_perturbed(&mc.circuit, &pi, &x).unwrap();
        let tau = t.output() - &want;
        prop_assert!(tau.abs() <= int(11) * pi.max_abs());
        prop_assert!(tau.abs() <= mc.delta_prime);
        prop_assert!((t.value(mc.field) - &want).abs() <= int(11) * pi.max_abs());
    }
}
