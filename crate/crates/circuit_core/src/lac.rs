//! Reader and writer for the line-oriented `.lac` circuit format.
//!
//! ```text
//! lac 1
//! inputs 1
//! gate 2 tl 2 1 0
//! gate 3 tl 1 1 -1/2
//! gate 4 tl 1/2 2 1 3 -1/2 1 0
//! output 4
//! ```
//!
//! `tl` and `lin` gates take coefficient/wire pairs followed by the constant,
//! so the two-input form is `tl a j b k c`. A `#` starts a comment. The
//! `lac 1` header is written on output and optional on input.

use std::fmt::Write as _;

use crate::circuit::{Gate, LinearCircuit, LinearForm};
use crate::error::CircuitError;
use crate::rational::{fmt_rational, parse_rational};

fn syntax(line: usize, message: impl Into<String>) -> CircuitError {
    CircuitError::Syntax { line, message: message.into() }
}

fn at_line(line: usize, e: CircuitError) -> CircuitError {
    match e {
        CircuitError::BadRational(tok) => syntax(line, format!("malformed rational `{tok}`")),
        other => other,
    }
}

fn parse_index(tok: &str, line: usize) -> Result<usize, CircuitError> {
    tok.parse::<usize>()
        .map_err(|_| syntax(line, format!("expected a wire index, found `{tok}`")))
}

fn parse_form(toks: &[&str], line: usize) -> Result<LinearForm, CircuitError> {
    if toks.len() % 2 == 0 {
        return Err(syntax(line, "linear gate needs coefficient/wire pairs and a constant"));
    }
    let mut terms = Vec::with_capacity(toks.len() / 2);
    for pair in toks[..toks.len() - 1].chunks(2) {
        let a = parse_rational(pair[0]).map_err(|e| at_line(line, e))?;
        terms.push((a, parse_index(pair[1], line)?));
    }
    let c = parse_rational(toks[toks.len() - 1]).map_err(|e| at_line(line, e))?;
    Ok(LinearForm::new(terms, c))
}

/// Parses and validates `.lac` text.
pub fn parse_circuit(text: &str) -> Result<LinearCircuit, CircuitError> {
    let mut inputs: Option<usize> = None;
    let mut gates: Vec<Gate> = Vec::new();
    let mut output: Option<(usize, usize)> = None;
    let mut seen_body = false;

    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("");
        let toks: Vec<&str> = content.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if output.is_some() {
            return Err(syntax(line, "content after `output`"));
        }
        match toks[0] {
            "lac" => {
                if seen_body {
                    return Err(syntax(line, "header must come first"));
                }
                if toks.len() != 2 || toks[1] != "1" {
                    return Err(syntax(line, "unsupported header; expected `lac 1`"));
                }
                seen_body = true;
            }
            "inputs" => {
                if inputs.is_some() {
                    return Err(syntax(line, "duplicate `inputs` line"));
                }
                if toks.len() != 2 {
                    return Err(syntax(line, "expected `inputs <m>`"));
                }
                let m = parse_index(toks[1], line)?;
                if m == 0 {
                    return Err(syntax(line, "a circuit needs at least one input"));
                }
                inputs = Some(m);
                seen_body = true;
            }
            "gate" => {
                let m = inputs.ok_or_else(|| syntax(line, "`gate` before `inputs`"))?;
                if toks.len() < 3 {
                    return Err(syntax(line, "expected `gate <idx> <kind> ...`"));
                }
                let idx = parse_index(toks[1], line)?;
                let expected = m + 1 + gates.len();
                if idx != expected {
                    return Err(syntax(line, format!("gate index {idx}, expected {expected}")));
                }
                let args = &toks[3..];
                let gate = match toks[2] {
                    "tl" => Gate::TruncLinear(parse_form(args, line)?),
                    "lin" => Gate::AffineLinear(parse_form(args, line)?),
                    "truncab" => {
                        if args.len() != 3 {
                            return Err(syntax(line, "expected `truncab <lo> <hi> <j>`"));
                        }
                        Gate::TruncInterval {
                            lo: parse_rational(args[0]).map_err(|e| at_line(line, e))?,
                            hi: parse_rational(args[1]).map_err(|e| at_line(line, e))?,
                            input: parse_index(args[2], line)?,
                        }
                    }
                    kind @ ("min" | "max") => {
                        if args.len() != 2 {
                            return Err(syntax(line, format!("expected `{kind} <j> <k>`")));
                        }
                        let left = parse_index(args[0], line)?;
                        let right = parse_index(args[1], line)?;
                        if kind == "min" {
                            Gate::Min { left, right }
                        } else {
                            Gate::Max { left, right }
                        }
                    }
                    other => return Err(syntax(line, format!("unknown gate kind `{other}`"))),
                };
                for w in gate.inputs() {
                    if w == 0 {
                        return Err(CircuitError::IndexOutOfRange { index: 0, max: idx - 1 });
                    }
                    if w >= idx {
                        return Err(CircuitError::Topology { gate: idx, wire: w });
                    }
                }
                gates.push(gate);
            }
            "output" => {
                if inputs.is_none() {
                    return Err(syntax(line, "`output` before `inputs`"));
                }
                if toks.len() != 2 {
                    return Err(syntax(line, "expected `output <idx>`"));
                }
                output = Some((parse_index(toks[1], line)?, line));
            }
            other => return Err(syntax(line, format!("unknown directive `{other}`"))),
        }
    }
    let m = inputs.ok_or_else(|| syntax(text.lines().count().max(1), "missing `inputs` line"))?;
    let (out, _) = output.ok_or_else(|| syntax(text.lines().count().max(1), "missing `output` line"))?;
    LinearCircuit::new(m, gates, out)
}

fn write_form(s: &mut String, form: &LinearForm) {
    for (a, j) in &form.terms {
        let _ = write!(s, " {} {}", fmt_rational(a), j);
    }
    let _ = write!(s, " {}", fmt_rational(&form.constant));
}

/// Canonical `.lac` rendering.
pub fn serialize_circuit(c: &LinearCircuit) -> String {
    let mut s = String::new();
    s.push_str("lac 1\n");
    let _ = writeln!(s, "inputs {}", c.input_count());
    for (w, gate) in c.indexed_gates() {
        let _ = write!(s, "gate {w} ");
        match gate {
            Gate::TruncLinear(f) => {
                s.push_str("tl");
                write_form(&mut s, f);
            }
            Gate::AffineLinear(f) => {
                s.push_str("lin");
                write_form(&mut s, f);
            }
            Gate::TruncInterval { lo, hi, input } => {
                let _ = write!(s, "truncab {} {} {}", fmt_rational(lo), fmt_rational(hi), input);
            }
            Gate::Min { left, right } => {
                let _ = write!(s, "min {left} {right}");
            }
            Gate::Max { left, right } => {
                let _ = write!(s, "max {left} {right}");
            }
        }
        s.push('\n');
    }
    let _ = writeln!(s, "output {}", c.output());
    s
}

/// Shorthand used by fixtures: a rational token list into a form.
pub fn form_from_tokens(tokens: &[&str]) -> Result<LinearForm, CircuitError> {
    parse_form(tokens, 0)
}

