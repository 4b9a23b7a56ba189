use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use circuit_core::rational::{fmt_rational, parse_rational};
use circuit_core::{
    evaluate, evaluate_perturbed, parse_circuit, serialize_circuit, LinearCircuit, PerturbationVector, Rational,
};
use clap::{Args, Parser, Subcommand};
use cli::pipeline::{run_pipeline, stale_artifacts, PipelineOptions, TargetSpec};
use cli::suites::{random_pi, verify_fixture, FIXTURES};
use cli::{circuit_heightmap, parse_point};
use gadgets::{build_mesa_field, tables_from_sampled_field};
use kkt_engine::{
    check_2dlinear_kkt, default_perturbations, inner_hull, outer_hull, projected_gradient_solve, round_to_exact,
    SolverConfig,
};
use mesa::sample::sample_field_from_target;
use mesa::{field_max, write_field_csv, GridSpec, MesaEnv};
use num_traits::{One, Zero};
use qp_compiler::{check_kkt, choose_delta, compile_qp_with_k, parse_bqp, serialize_bqp, BoxQP};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

/// Reduction workbench: linear arithmetic circuits, compiled box QPs,
/// mesa gadgets and exact KKT certification.
#[derive(Parser)]
#[command(name = "kktred", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// KKT tolerance, as a rational such as `1/1000`.
    #[arg(long, global = true)]
    eps: Option<String>,
    /// Target perturbation budget δ' (rational).
    #[arg(long = "delta-prime", global = true)]
    delta_prime: Option<String>,
    /// Grid bits n (the grid has side 2^n).
    #[arg(long, global = true)]
    bits: Option<u32>,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a trunc-only circuit into a `.bqp` box QP.
    CompileQp {
        circuit: PathBuf,
        /// Use this K instead of the coefficient bound.
        #[arg(long)]
        k: Option<String>,
        /// Use this δ directly instead of deriving it from δ'.
        #[arg(long)]
        delta: Option<String>,
    },
    /// Evaluate a circuit at an input point.
    Eval {
        circuit: PathBuf,
        /// Comma-separated inputs.
        #[arg(long)]
        x: String,
    },
    /// Evaluate under a perturbation, given explicitly or drawn at random.
    PerturbEval {
        circuit: PathBuf,
        #[arg(long)]
        x: String,
        /// `wire:value` pairs, comma-separated.
        #[arg(long)]
        pi: Option<String>,
        /// Draw π uniformly with this sup-norm instead.
        #[arg(long)]
        bound: Option<String>,
    },
    /// Lower a circuit to unit truncations only.
    Normalize {
        circuit: PathBuf,
        /// Inputs checked for agreement after lowering.
        #[arg(long, default_value_t = 20)]
        samples: usize,
    },
    /// Build the mesa-field circuit for a smooth target.
    BuildMesa {
        #[arg(long, default_value = "bowl")]
        target: String,
        #[arg(long, default_value_t = 20)]
        samples: usize,
    },
    /// Projected-gradient search for an ε-KKT point.
    Solve {
        qp: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        max_iters: usize,
    },
    /// Check the ε-KKT conditions at a point (exact with `--eps 0`).
    CheckKkt {
        qp: PathBuf,
        #[arg(long)]
        x: String,
    },
    /// Round an ε-KKT point to an exact KKT point.
    RoundExact {
        qp: PathBuf,
        #[arg(long)]
        x: String,
    },
    /// Gradient hull of a circuit at a point.
    Hull {
        circuit: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long)]
        delta: String,
        /// Sampled inner approximation instead of the interval outer one.
        #[arg(long)]
        inner: bool,
    },
    /// The 2D-linear-KKT check of a circuit at a point.
    #[command(name = "check-2dkkt")]
    Check2dkkt {
        circuit: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long)]
        delta: String,
    },
    /// Run the full reduction from a smooth target.
    Pipeline {
        #[arg(long, default_value = "bowl")]
        target: String,
        #[arg(long, default_value_t = 20)]
        samples: usize,
    },
    /// Run a shipped verification suite.
    Verify {
        /// Fixture name; omit with `--all`.
        name: Option<String>,
        #[arg(long)]
        all: bool,
    },
    /// Write a CSV heightmap, of a circuit over [0,1]² or of a sampled target.
    SampleField {
        circuit: Option<PathBuf>,
        #[arg(long)]
        target: Option<String>,
        /// Points per side.
        #[arg(long, default_value_t = 33)]
        grid: usize,
    },
}

fn rational(s: &str) -> Result<Rational> {
    parse_rational(s).with_context(|| format!("bad rational `{s}`"))
}

fn opt_rational(s: &Option<String>) -> Result<Option<Rational>> {
    s.as_deref().map(rational).transpose()
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_circuit(path: &Path) -> Result<LinearCircuit> {
    parse_circuit(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn load_qp(path: &Path) -> Result<BoxQP> {
    parse_bqp(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn strings(v: &[Rational]) -> Vec<String> {
    v.iter().map(fmt_rational).collect()
}

fn write_out(out: &Option<PathBuf>, contents: &str) -> Result<Option<String>> {
    match out {
        Some(p) => {
            std::fs::write(p, contents).with_context(|| format!("writing {}", p.display()))?;
            Ok(Some(p.display().to_string()))
        }
        None => Ok(None),
    }
}

fn parse_pi(text: &str) -> Result<PerturbationVector> {
    let mut pi = PerturbationVector::zero();
    for pair in text.split(',').filter(|s| !s.trim().is_empty()) {
        let (w, v) = pair.split_once(':').with_context(|| format!("expected wire:value, got `{pair}`"))?;
        pi.set(w.trim().parse().with_context(|| format!("bad wire `{w}`"))?, rational(v.trim())?);
    }
    Ok(pi)
}

fn point(text: &str) -> Result<Vec<Rational>> {
    Ok(parse_point(text)?)
}

/// Returns the JSON report and whether every requested verification passed.
fn run(cli: Cli) -> Result<(Value, bool)> {
    let c = &cli.common;
    match cli.command {
        Command::CompileQp { circuit, k, delta } => {
            let circ = load_circuit(&circuit)?;
            let k = match opt_rational(&k)? {
                Some(k) => k,
                None => circuit_core::coefficient_bound(&circ)?,
            };
            let delta = match (opt_rational(&delta)?, opt_rational(&c.delta_prime)?) {
                (Some(d), _) => d,
                (None, Some(dp)) => choose_delta(&dp, &k)?,
                (None, None) => choose_delta(&Rational::one(), &k)?,
            };
            let cqp = compile_qp_with_k(&circ, &delta, &k)?;
            let text = serialize_bqp(&cqp.qp);
            let round_trip = parse_bqp(&text)? == cqp.qp;
            let path = write_out(&c.out, &text)?;
            Ok((
                json!({
                    "var_count": cqp.qp.var_count,
                    "K": fmt_rational(&cqp.k),
                    "delta": fmt_rational(&cqp.delta),
                    "labels": cqp.var_map.labels(),
                    "written": path,
                    "bqp": if c.out.is_none() { Value::from(text) } else { Value::Null },
                    "round_trip": round_trip,
                }),
                round_trip,
            ))
        }
        Command::Eval { circuit, x } => {
            let circ = load_circuit(&circuit)?;
            let t = evaluate(&circ, &point(&x)?)?;
            Ok((json!({ "output": fmt_rational(t.output()), "wires": strings(&t.wire_values) }), true))
        }
        Command::PerturbEval { circuit, x, pi, bound } => {
            let circ = load_circuit(&circuit)?;
            let pi = match (pi, bound) {
                (Some(text), None) => parse_pi(&text)?,
                (None, Some(b)) => random_pi(&circ, &rational(&b)?, &mut ChaCha8Rng::seed_from_u64(c.seed)),
                _ => bail!("give exactly one of --pi and --bound"),
            };
            let x = point(&x)?;
            let t = evaluate_perturbed(&circ, &pi, &x)?;
            let clean = evaluate(&circ, &x)?;
            let pis: serde_json::Map<String, Value> =
                pi.entries.iter().map(|(w, v)| (w.to_string(), Value::from(fmt_rational(v)))).collect();
            Ok((
                json!({
                    "output": fmt_rational(t.output()),
                    "unperturbed": fmt_rational(clean.output()),
                    "max_abs_pi": fmt_rational(&pi.max_abs()),
                    "pi": pis,
                    "wires": strings(&t.wire_values),
                }),
                true,
            ))
        }
        Command::Normalize { circuit, samples } => {
            let circ = load_circuit(&circuit)?;
            let norm = normalizer::normalize(&circ)?;
            let text = serialize_circuit(&norm.output);
            let mut agree = norm.output.is_trunc_only();
            for x in cli::pipeline::unit_points(samples, circ.input_count(), c.seed) {
                agree &= evaluate(&circ, &x)?.output() == evaluate(&norm.output, &x)?.output();
            }
            let sidecar = normalizer::sidecar_json(&norm);
            if let Some(p) = &c.out {
                std::fs::write(p, &text)?;
                std::fs::write(p.with_extension("json"), serde_json::to_string_pretty(&sidecar)?)?;
            }
            Ok((
                json!({
                    "wires": norm.output.wire_count(),
                    "B": fmt_rational(&norm.b),
                    "N": norm.n,
                    "K": format!("4*{}^{}", fmt_rational(&norm.b), norm.n),
                    "K_bits": norm.k_bits_estimate(),
                    "agrees_on_samples": agree,
                    "lac": if c.out.is_none() { Value::from(text) } else { Value::Null },
                }),
                agree,
            ))
        }
        Command::BuildMesa { target, samples } => {
            let target: TargetSpec = target.parse().map_err(anyhow::Error::msg)?;
            let n = c.bits.unwrap_or(3);
            let grid = GridSpec::new(n)?;
            let ell = grid.ell();
            let env = MesaEnv::steep(ell.clone());
            let dp = opt_rational(&c.delta_prime)?.unwrap_or_else(|| &ell * &ell / Rational::from_integer(100.into()));
            let sampled = sample_field_from_target(&target.build(), grid)?;
            let (a_circ, g_circ) = tables_from_sampled_field(&sampled)?;
            let mc = build_mesa_field(&a_circ, &g_circ, n, &env, &dp)?;
            let reference = mc.reference_field();
            let mut agree = true;
            for x in cli::pipeline::sample_points(samples, c.seed) {
                let want = field_max(&(x[0].clone(), x[1].clone()), &reference, &env)?;
                agree &= evaluate(&mc.circuit, &x)?.output() == &want;
            }
            if let Some(dir) = &c.out {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("a.bool"), gadgets::serialize_bool(&a_circ))?;
                std::fs::write(dir.join("g.bool"), gadgets::serialize_bool(&g_circ))?;
                std::fs::write(dir.join("mesa.lac"), serialize_circuit(&mc.circuit))?;
                std::fs::write(dir.join("mesa.json"), serde_json::to_string_pretty(&mc.manifest_json())?)?;
            }
            let mut report = mc.manifest_json();
            report["matches_reference_on_samples"] = agree.into();
            Ok((report, agree))
        }
        Command::Solve { qp, max_iters } => {
            let qp = load_qp(&qp)?;
            let eps = opt_rational(&c.eps)?.context("--eps is required")?;
            let cfg = SolverConfig { max_iters, ..SolverConfig::default() };
            let x = projected_gradient_solve(&qp, &eps, &cfg)?;
            let verdict = check_kkt(&qp, &x, &eps)?;
            Ok((json!({ "x": strings(&x), "eps": fmt_rational(&eps), "verified": verdict.satisfied }), verdict.satisfied))
        }
        Command::CheckKkt { qp, x } => {
            let qp = load_qp(&qp)?;
            let eps = opt_rational(&c.eps)?.unwrap_or_else(Rational::zero);
            let v = check_kkt(&qp, &point(&x)?, &eps)?;
            let violations: Vec<Value> = v
                .violations
                .iter()
                .map(|v| json!({ "index": v.index, "side": format!("{:?}", v.side), "partial": fmt_rational(&v.partial) }))
                .collect();
            Ok((json!({ "satisfied": v.satisfied, "violations": violations }), v.satisfied))
        }
        Command::RoundExact { qp, x } => {
            let qp = load_qp(&qp)?;
            let eps = opt_rational(&c.eps)?.context("--eps is required")?;
            let r = round_to_exact(&qp, &point(&x)?, &eps)?;
            let exact = check_kkt(&qp, &r.exact_point, &Rational::zero())?.satisfied;
            Ok((
                json!({
                    "x": strings(&r.exact_point),
                    "I0": r.active_sets.0,
                    "I1": r.active_sets.1,
                    "lp_value": fmt_rational(&r.lp_value),
                    "exact_kkt": exact,
                }),
                exact && r.lp_value.is_zero(),
            ))
        }
        Command::Hull { circuit, x, delta, inner } => {
            let circ = load_circuit(&circuit)?;
            let (y, delta) = (point(&x)?, rational(&delta)?);
            let hull = if inner {
                inner_hull(&circ, &y, &delta, &default_perturbations(&circ, &delta, 32, c.seed))?
            } else {
                outer_hull(&circ, &y, &delta)?
            };
            let vertices: Vec<Vec<String>> = hull.vertices.iter().map(|v| strings(v)).collect();
            Ok((json!({ "mode": format!("{:?}", hull.mode), "vertices": vertices }), true))
        }
        Command::Check2dkkt { circuit, x, delta } => {
            let circ = load_circuit(&circuit)?;
            let eps = opt_rational(&c.eps)?.context("--eps is required")?;
            let verdict = check_2dlinear_kkt(&circ, &point(&x)?, &eps, &rational(&delta)?)?;
            let mut report = json!({ "verdict": verdict.label() });
            if let kkt_engine::KktCheck::YesWitnessed { weights, hull } = &verdict {
                report["weights"] = strings(weights).into();
                report["vertices"] = hull.vertices.iter().map(|v| strings(v)).collect::<Vec<_>>().into();
            }
            let yes = matches!(verdict, kkt_engine::KktCheck::YesWitnessed { .. });
            Ok((report, yes))
        }
        Command::Pipeline { target, samples } => {
            let outdir = c.out.clone().unwrap_or_else(|| PathBuf::from("pipeline-out"));
            let opts = PipelineOptions {
                target: target.parse().map_err(anyhow::Error::msg)?,
                bits: c.bits.unwrap_or(3),
                eps: opt_rational(&c.eps)?,
                delta_prime: opt_rational(&c.delta_prime)?,
                seed: c.seed,
                samples,
                outdir: outdir.clone(),
            };
            let manifest = run_pipeline(&opts)?;
            let stale = stale_artifacts(&outdir, &manifest);
            let ok = manifest.verification.passed && stale.is_empty();
            let mut report = serde_json::to_value(&manifest)?;
            report["stale_artifacts"] = stale.into();
            Ok((report, ok))
        }
        Command::Verify { name, all } => {
            let names: Vec<String> = match (name, all) {
                (Some(n), false) => vec![n],
                (None, true) => FIXTURES.iter().map(|s| s.to_string()).collect(),
                _ => bail!("give a fixture name or --all"),
            };
            let mut reports = Vec::new();
            let mut ok = true;
            for n in &names {
                let r = verify_fixture(n, c.seed)?;
                ok &= r.passed;
                reports.push(serde_json::to_value(&r)?);
            }
            let report = if reports.len() == 1 { reports.pop().expect("one report") } else { Value::from(reports) };
            Ok((report, ok))
        }
        Command::SampleField { circuit, target, grid } => {
            let csv = match (circuit, target) {
                (Some(path), None) => circuit_heightmap(&load_circuit(&path)?, grid)?,
                (None, Some(t)) => {
                    let t: TargetSpec = t.parse().map_err(anyhow::Error::msg)?;
                    write_field_csv(&sample_field_from_target(&t.build(), GridSpec::new(c.bits.unwrap_or(3))?)?)
                }
                _ => bail!("give a circuit file or --target"),
            };
            let rows = csv.lines().count().saturating_sub(1);
            let path = write_out(&c.out, &csv)?;
            if path.is_none() {
                print!("{csv}");
                return Ok((Value::Null, true));
            }
            Ok((json!({ "rows": rows, "written": path }), true))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok((report, ok)) => {
            if !report.is_null() {
                println!("{}", serde_json::to_string_pretty(&report).expect("JSON values serialize"));
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            println!("{}", json!({ "error": format!("{e:#}") }));
            ExitCode::from(2)
        }
    }
}
