//! Smooth target → sampled field → Boolean tables → mesa circuit →
//! trunc-only circuit → quadratic program, with every stage re-checked
//! from the artifacts it wrote.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use circuit_core::rational::{fmt_rational, parse_rational, trunc01};
use circuit_core::{coefficient_bound, evaluate, parse_circuit, serialize_circuit, Gate, LinearCircuit, Rational};
use gadgets::field::field_delta;
use gadgets::{build_mesa_field, parse_bool, serialize_bool, tables_from_sampled_field};
use mesa::sample::{check_field_assumptions, sample_field_from_target, SmoothTarget};
use mesa::{field_max, write_field_csv, GridSpec, MesaEnv};
use num_traits::{Signed, Zero};
use qp_compiler::{choose_delta, compile_qp_with_k, serialize_bqp, trace_point, VarMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::{sha256_hex, write_artifact};

/// Normalized circuits up to this many wires get a literal `.bqp`; beyond
/// it the `δ^i` weights have too many bits to write out.
pub const FULL_QP_WIRES: usize = 24;

#[derive(Debug, Error)]
#[error("stage `{stage}` failed: {message}")]
pub struct PipelineError {
    pub stage: &'static str,
    pub message: String,
}

fn at<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError { stage, message: e.to_string() }
}

/// Which smooth target to reduce.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetSpec {
    /// `h(x) = 1/2 + (x₁² + x₂²)/2000`.
    Bowl,
    Constant(Rational),
}

impl FromStr for TargetSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bowl" | "quadratic-bowl" => Ok(TargetSpec::Bowl),
            _ => match s.strip_prefix("const:") {
                Some(v) => parse_rational(v).map(TargetSpec::Constant).map_err(|e| e.to_string()),
                None => Err(format!("unknown target `{s}` (expected `bowl` or `const:<rational>`)")),
            },
        }
    }
}

impl TargetSpec {
    pub fn build(&self) -> SmoothTarget {
        match self {
            TargetSpec::Bowl => SmoothTarget::quadratic_bowl(),
            TargetSpec::Constant(c) => SmoothTarget::constant(c.clone()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            TargetSpec::Bowl => "bowl".into(),
            TargetSpec::Constant(c) => format!("const:{}", fmt_rational(c)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub target: TargetSpec,
    pub bits: u32,
    /// Defaults to `1/2000`, half the largest gradient of the bowl target.
    pub eps: Option<Rational>,
    /// Defaults to `ℓ²/100`.
    pub delta_prime: Option<Rational>,
    pub seed: u64,
    pub samples: usize,
    pub outdir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageRecord {
    pub name: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<Artifact>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Parameters {
    pub target: String,
    pub n: u32,
    pub ell: String,
    pub gamma: String,
    pub eps: String,
    pub grid_resolves_eps: bool,
    pub delta_prime: String,
    /// Admissible perturbation of the mesa circuit.
    pub delta: String,
    /// `K = 4·B^N` of the normalization, as a formula.
    pub k: String,
    pub k_bits: u64,
    /// Coefficient bound of the trunc-only circuit (the QP's `K`).
    pub k_qp: String,
    /// Bit length of the QP's `δ` denominator.
    pub delta_qp_bits: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Verification {
    pub samples: usize,
    pub mesa_matches_reference: bool,
    pub normalized_matches_mesa: bool,
    pub outputs_in_middle_third: bool,
    /// Every gate identity `trunc(arg) = arg − K z⁺ + K z⁻` holds at the
    /// trace point, so the Lemma 3.4 residual is zero at every wire.
    pub qp_identities_hold: bool,
    pub max_wire_residual: String,
    pub delta_recomputed: bool,
    pub k_recomputed: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PipelineManifest {
    pub stages: Vec<StageRecord>,
    pub parameters: Parameters,
    pub verification: Verification,
}

struct Stages {
    dir: PathBuf,
    records: Vec<StageRecord>,
}

impl Stages {
    fn write(&mut self, stage: &'static str, inputs: &[&str], files: Vec<(&str, String)>) -> Result<(), PipelineError> {
        let mut outputs = Vec::with_capacity(files.len());
        for (name, contents) in files {
            let digest = write_artifact(&self.dir, name, &contents).map_err(at(stage))?;
            outputs.push(Artifact { path: name.to_string(), sha256: digest });
        }
        self.records.push(StageRecord {
            name: stage.to_string(),
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            outputs,
        });
        Ok(())
    }

    fn read(&self, stage: &'static str, name: &str) -> Result<String, PipelineError> {
        std::fs::read_to_string(self.dir.join(name)).map_err(at(stage))
    }
}

/// Deterministic sample points in `[0,1]²`.
pub fn sample_points(count: usize, seed: u64) -> Vec<[Rational; 2]> {
    unit_points(count, 2, seed).into_iter().map(|p| [p[0].clone(), p[1].clone()]).collect()
}

/// Deterministic points of `[0,1]^dim` on the `2^-20` grid.
pub fn unit_points(count: usize, dim: usize, seed: u64) -> Vec<Vec<Rational>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let den = 1 << 20;
    (0..count)
        .map(|_| (0..dim).map(|_| Rational::new(rng.gen_range(0..=den).into(), den.into())).collect())
        .collect()
}

fn json_str<'a>(v: &'a serde_json::Value, key: &str, stage: &'static str) -> Result<&'a str, PipelineError> {
    v[key].as_str().ok_or(PipelineError { stage, message: format!("`{key}` missing from manifest") })
}

/// Largest `|y_i − trunc(arg_i)|` at the QP point associated with the
/// wire values, or `None` if some gate identity fails.
fn qp_residual(c: &LinearCircuit, k: &Rational, wires: &[Rational]) -> Result<Option<Rational>, PipelineError> {
    let point = trace_point(c, k, wires).map_err(at("verify"))?;
    let vm = VarMap::new(c);
    let mut worst = Rational::zero();
    for (w, gate) in c.indexed_gates() {
        let Gate::TruncLinear(f) = gate else {
            return Err(PipelineError { stage: "verify", message: format!("gate {w} is not trunc-linear") });
        };
        let arg = f.eval(&point[..vm.wire_count]);
        let t = trunc01(&arg);
        let rhs = &arg - k * &point[vm.zp(w)] + k * &point[vm.zm(w)];
        if rhs != t {
            return Ok(None);
        }
        let err = (&point[vm.y(w)] - &t).abs();
        if err > worst {
            worst = err;
        }
    }
    Ok(Some(worst))
}

/// Runs every stage, writing artifacts and `manifest.json` into the output
/// directory. Identical options give byte-identical artifacts.
pub fn run_pipeline(opts: &PipelineOptions) -> Result<PipelineManifest, PipelineError> {
    std::fs::create_dir_all(&opts.outdir).map_err(at("setup"))?;
    let mut st = Stages { dir: opts.outdir.clone(), records: Vec::new() };

    // Stage 1: sample the target on the grid.
    let grid = GridSpec::new(opts.bits).map_err(at("sample"))?;
    let ell = grid.ell();
    let env = MesaEnv::steep(ell.clone());
    let eps = opts.eps.clone().unwrap_or_else(|| Rational::new(1.into(), 2000.into()));
    let delta_prime = opts.delta_prime.clone().unwrap_or_else(|| &ell * &ell / Rational::from_integer(100.into()));
    if !eps.is_positive() || !delta_prime.is_positive() {
        return Err(PipelineError { stage: "sample", message: "eps and delta' must be positive".into() });
    }
    let sampled = sample_field_from_target(&opts.target.build(), grid).map_err(at("sample"))?;
    let report = check_field_assumptions(&sampled, &(&ell * &ell / Rational::from_integer(100.into())));
    if !report.passed() {
        return Err(PipelineError { stage: "sample", message: format!("{} adjacency violations", report.violations.len()) });
    }
    st.write("sample", &[], vec![("field.csv", write_field_csv(&sampled))])?;

    // Stage 2: Boolean lookup circuits for a and g.
    let (a_circ, g_circ) = tables_from_sampled_field(&sampled).map_err(at("tables"))?;
    st.write("tables", &["field.csv"], vec![("a.bool", serialize_bool(&a_circ)), ("g.bool", serialize_bool(&g_circ))])?;

    // Stage 3: the mesa circuit, rebuilt from the files just written.
    let a_back = parse_bool(&st.read("mesa", "a.bool")?).map_err(at("mesa"))?;
    let g_back = parse_bool(&st.read("mesa", "g.bool")?).map_err(at("mesa"))?;
    let mc = build_mesa_field(&a_back, &g_back, opts.bits, &env, &delta_prime).map_err(at("mesa"))?;
    let mesa_manifest = serde_json::to_string_pretty(&mc.manifest_json()).map_err(at("mesa"))?;
    st.write("mesa", &["a.bool", "g.bool"], vec![("mesa.lac", serialize_circuit(&mc.circuit)), ("mesa.json", mesa_manifest)])?;

    // Stage 4: normalization to unit truncations.
    let norm = normalizer::normalize(&mc.circuit).map_err(at("normalize"))?;
    let sidecar = serde_json::to_string_pretty(&normalizer::sidecar_json(&norm)).map_err(at("normalize"))?;
    st.write(
        "normalize",
        &["mesa.lac"],
        vec![("normalized.lac", serialize_circuit(&norm.output)), ("normalized.json", sidecar)],
    )?;

    // Stage 5: the quadratic program. A normalized perturbation of size
    // δ/K transfers to one of size δ on the mesa circuit, and the QP's δ is
    // chosen so its certificates stay below that.
    let k_norm = norm.k();
    let k_qp = coefficient_bound(&norm.output).map_err(at("compile"))?;
    let delta_norm = &mc.delta / &k_norm;
    let delta_qp = choose_delta(&delta_norm, &k_qp).map_err(at("compile"))?;
    let wires = norm.output.wire_count();
    let vm = VarMap::new(&norm.output);
    let qp_file = if wires <= FULL_QP_WIRES {
        let cqp = compile_qp_with_k(&norm.output, &delta_qp, &k_qp).map_err(at("compile"))?;
        ("qp.bqp", serialize_bqp(&cqp.qp))
    } else {
        let descriptor = serde_json::json!({
            "format": "bqp-descriptor",
            "reason": "coefficients delta^i are too large to write out",
            "wires": wires,
            "gates": norm.output.gates().len(),
            "var_count": vm.var_count(),
            "K": fmt_rational(&k_qp),
            "delta_denominator_bits": delta_qp.denom().bits(),
            "seed_term_bits": delta_qp.denom().bits() * (wires as u64 + 1),
            "objective": "delta^(N+1) y_out + sum_i delta^i q_i",
        });
        ("qp.json", serde_json::to_string_pretty(&descriptor).map_err(at("compile"))?)
    };
    st.write("compile", &["normalized.lac"], vec![qp_file])?;

    // Stage 6: independent re-verification from the written artifacts.
    let mesa_c = parse_circuit(&st.read("verify", "mesa.lac")?).map_err(at("verify"))?;
    let norm_c = parse_circuit(&st.read("verify", "normalized.lac")?).map_err(at("verify"))?;
    let mesa_json: serde_json::Value = serde_json::from_str(&st.read("verify", "mesa.json")?).map_err(at("verify"))?;
    let side_json: serde_json::Value =
        serde_json::from_str(&st.read("verify", "normalized.json")?).map_err(at("verify"))?;
    let recorded_delta = parse_rational(json_str(&mesa_json, "delta", "verify")?).map_err(at("verify"))?;
    let recorded_dp = parse_rational(json_str(&mesa_json, "delta_prime", "verify")?).map_err(at("verify"))?;
    let delta_recomputed = recorded_delta == field_delta(opts.bits, &recorded_dp) && recorded_delta == mc.delta;
    let b = parse_rational(json_str(&side_json, "B", "verify")?).map_err(at("verify"))?;
    let n_rec = side_json["N"].as_u64().unwrap_or(0) as usize;
    let k_recomputed = b == norm.b
        && n_rec == norm.n
        && json_str(&side_json, "K", "verify")? == format!("4*{}^{}", fmt_rational(&b), n_rec);
    let reference = mc.reference_field();
    let mut mesa_ok = true;
    let mut norm_ok = true;
    let mut range_ok = true;
    let mut qp_ok = true;
    let mut worst = Rational::zero();
    let points = sample_points(opts.samples, opts.seed);
    let (third, two_thirds) = (Rational::new(1.into(), 3.into()), Rational::new(2.into(), 3.into()));
    for x in &points {
        let direct = evaluate(&mesa_c, x).map_err(at("verify"))?;
        let want = field_max(&(x[0].clone(), x[1].clone()), &reference, &env).map_err(at("verify"))?;
        mesa_ok &= direct.output() == &want;
        range_ok &= want >= third && want <= two_thirds;
        let lowered = evaluate(&norm_c, x).map_err(at("verify"))?;
        norm_ok &= lowered.output() == direct.output();
        match qp_residual(&norm_c, &k_qp, &lowered.wire_values)? {
            Some(r) => {
                if r > worst {
                    worst = r;
                }
            }
            None => qp_ok = false,
        }
    }
    let verification = Verification {
        samples: points.len(),
        mesa_matches_reference: mesa_ok,
        normalized_matches_mesa: norm_ok,
        outputs_in_middle_third: range_ok,
        qp_identities_hold: qp_ok,
        max_wire_residual: fmt_rational(&worst),
        delta_recomputed,
        k_recomputed,
        passed: mesa_ok && norm_ok && range_ok && qp_ok && worst.is_zero() && delta_recomputed && k_recomputed,
    };
    let report = serde_json::to_string_pretty(&verification).map_err(at("verify"))?;
    st.write(
        "verify",
        &["mesa.lac", "mesa.json", "normalized.lac", "normalized.json"],
        vec![("report.json", report)],
    )?;

    let parameters = Parameters {
        target: opts.target.label(),
        n: opts.bits,
        ell: fmt_rational(&ell),
        gamma: fmt_rational(&env.gamma),
        grid_resolves_eps: &ell * Rational::from_integer(100.into()) <= eps,
        eps: fmt_rational(&eps),
        delta_prime: fmt_rational(&delta_prime),
        delta: fmt_rational(&mc.delta),
        k: format!("4*{}^{}", fmt_rational(&norm.b), norm.n),
        k_bits: norm.k_bits_estimate(),
        k_qp: fmt_rational(&k_qp),
        delta_qp_bits: delta_qp.denom().bits(),
        seed: opts.seed,
    };
    let manifest = PipelineManifest { stages: st.records, parameters, verification };
    let text = serde_json::to_string_pretty(&manifest).map_err(at("manifest"))?;
    std::fs::write(opts.outdir.join("manifest.json"), text).map_err(at("manifest"))?;
    Ok(manifest)
}

/// Re-hashes every artifact listed in a manifest; returns the paths whose
/// contents no longer match.
pub fn stale_artifacts(dir: &Path, manifest: &PipelineManifest) -> Vec<String> {
    manifest
        .stages
        .iter()
        .flat_map(|s| &s.outputs)
        .filter(|a| match std::fs::read(dir.join(&a.path)) {
            Ok(bytes) => sha256_hex(&bytes) != a.sha256,
            Err(_) => true,
        })
        .map(|a| a.path.clone())
        .collect()
}
