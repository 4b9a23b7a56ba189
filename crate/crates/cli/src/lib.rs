//! Orchestration for the reduction workbench: the end-to-end pipeline from
//! a smooth target to a compiled quadratic program, and named verification
//! suites over shipped fixtures.

pub mod pipeline;
pub mod suites;

use std::path::Path;

use sha2::{Digest, Sha256};

pub use pipeline::{run_pipeline, PipelineError, PipelineManifest, PipelineOptions, TargetSpec};
pub use suites::{verify_fixture, SuiteReport, FIXTURES};

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `contents` to `dir/name` and returns its digest.
pub fn write_artifact(dir: &Path, name: &str, contents: &str) -> std::io::Result<String> {
    std::fs::write(dir.join(name), contents)?;
    Ok(sha256_hex(contents.as_bytes()))
}

/// Parses `"a,b,c"` into rationals.
pub fn parse_point(text: &str) -> Result<Vec<circuit_core::Rational>, circuit_core::CircuitError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',').map(|t| circuit_core::rational::parse_rational(t.trim())).collect()
}

/// `x1,x2,value` rows of a two-input circuit on a `side × side` grid of
/// `[0,1]²`, corners included.
pub fn circuit_heightmap(
    c: &circuit_core::LinearCircuit,
    side: usize,
) -> Result<String, circuit_core::CircuitError> {
    use circuit_core::rational::fmt_rational;
    use circuit_core::Rational;
    if c.input_count() != 2 {
        return Err(circuit_core::CircuitError::DimensionMismatch { expected: 2, got: c.input_count() });
    }
    let steps = side.max(2) - 1;
    let mut out = String::from("x1,x2,value\n");
    for i in 0..=steps {
        for j in 0..=steps {
            let x = [Rational::new(i.into(), steps.into()), Rational::new(j.into(), steps.into())];
            let v = circuit_core::evaluate(c, &x)?;
            out.push_str(&format!("{},{},{}\n", fmt_rational(&x[0]), fmt_rational(&x[1]), fmt_rational(v.output())));
        }
    }
    Ok(out)
}
