//! NOT/AND Boolean circuits, the `.bool` format and truth-table lookups.

use crate::error::GadgetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoolGate {
    /// `out = 1 − input`
    Not { out: usize, input: usize },
    /// `out = left ∧ right`
    And { out: usize, left: usize, right: usize },
}

impl BoolGate {
    pub fn out(&self) -> usize {
        match *self {
            BoolGate::Not { out, .. } | BoolGate::And { out, .. } => out,
        }
    }
}

/// Variables are numbered from 1: inputs `1..=input_count`, then one
/// variable per gate in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BooleanCircuit {
    pub input_count: usize,
    pub gates: Vec<BoolGate>,
    pub outputs: Vec<usize>,
}

impl BooleanCircuit {
    pub fn new(input_count: usize, gates: Vec<BoolGate>, outputs: Vec<usize>) -> Result<Self, GadgetError> {
        for (t, g) in gates.iter().enumerate() {
            let idx = input_count + 1 + t;
            if g.out() != idx {
                return Err(GadgetError::Boolean(format!("gate {} must define variable {idx}", g.out())));
            }
            let ins = match *g {
                BoolGate::Not { input, .. } => vec![input],
                BoolGate::And { left, right, .. } => vec![left, right],
            };
            for v in ins {
                if v == 0 || v >= idx {
                    return Err(GadgetError::Boolean(format!("variable {idx} reads {v}")));
                }
            }
        }
        let n = input_count + gates.len();
        if let Some(&bad) = outputs.iter().find(|&&o| o == 0 || o > n) {
            return Err(GadgetError::Boolean(format!("output {bad} does not exist")));
        }
        Ok(BooleanCircuit { input_count, gates, outputs })
    }

    pub fn var_count(&self) -> usize {
        self.input_count + self.gates.len()
    }

    /// Direct interpreter.
    pub fn eval(&self, inputs: &[bool]) -> Vec<bool> {
        assert_eq!(inputs.len(), self.input_count, "input arity");
        let mut v: Vec<bool> = inputs.to_vec();
        for g in &self.gates {
            let x = match *g {
                BoolGate::Not { input, .. } => !v[input - 1],
                BoolGate::And { left, right, .. } => v[left - 1] && v[right - 1],
            };
            v.push(x);
        }
        self.outputs.iter().map(|&o| v[o - 1]).collect()
    }
}

/// Incremental construction with derived connectives.
pub struct BoolBuilder {
    input_count: usize,
    gates: Vec<BoolGate>,
    zero: Option<usize>,
}

impl BoolBuilder {
    pub fn new(input_count: usize) -> Self {
        BoolBuilder { input_count, gates: Vec::new(), zero: None }
    }

    fn next(&self) -> usize {
        self.input_count + self.gates.len() + 1
    }

    pub fn not(&mut self, input: usize) -> usize {
        let out = self.next();
        self.gates.push(BoolGate::Not { out, input });
        out
    }

    pub fn and(&mut self, left: usize, right: usize) -> usize {
        let out = self.next();
        self.gates.push(BoolGate::And { out, left, right });
        out
    }

    pub fn or(&mut self, a: usize, b: usize) -> usize {
        let (na, nb) = (self.not(a), self.not(b));
        let both = self.and(na, nb);
        self.not(both)
    }

    pub fn xor(&mut self, a: usize, b: usize) -> usize {
        let (na, nb) = (self.not(a), self.not(b));
        let l = self.and(a, nb);
        let r = self.and(na, b);
        self.or(l, r)
    }

    /// Constant 0, built as `x₁ ∧ ¬x₁`; needs at least one input.
    pub fn zero(&mut self) -> Result<usize, GadgetError> {
        if let Some(z) = self.zero {
            return Ok(z);
        }
        if self.input_count == 0 {
            return Err(GadgetError::Boolean("constants need at least one input variable".into()));
        }
        let n = self.not(1);
        let z = self.and(1, n);
        self.zero = Some(z);
        Ok(z)
    }

    pub fn one(&mut self) -> Result<usize, GadgetError> {
        let z = self.zero()?;
        Ok(self.not(z))
    }

    /// `(sum, carry)` of a full adder.
    pub fn full_add(&mut self, a: usize, b: usize, c: usize) -> (usize, usize) {
        let ab = self.xor(a, b);
        let sum = self.xor(ab, c);
        let c1 = self.and(a, b);
        let c2 = self.and(ab, c);
        (sum, self.or(c1, c2))
    }

    pub fn finish(self, outputs: Vec<usize>) -> BooleanCircuit {
        BooleanCircuit::new(self.input_count, self.gates, outputs).expect("builder keeps circuits well formed")
    }
}

pub fn serialize_bool(c: &BooleanCircuit) -> String {
    let mut s = format!("bool 1\ninputs {}\n", c.input_count);
    for g in &c.gates {
        match *g {
            BoolGate::Not { out, input } => s.push_str(&format!("not {out} {input}\n")),
            BoolGate::And { out, left, right } => s.push_str(&format!("and {out} {left} {right}\n")),
        }
    }
    let outs: Vec<String> = c.outputs.iter().map(|o| o.to_string()).collect();
    s.push_str(&format!("outputs {}\n", outs.join(" ")));
    s
}

pub fn parse_bool(text: &str) -> Result<BooleanCircuit, GadgetError> {
    let mut inputs: Option<usize> = None;
    let mut gates = Vec::new();
    let mut outputs: Option<Vec<usize>> = None;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: &str| GadgetError::Syntax { line: n + 1, message: message.to_string() };
        let toks: Vec<&str> = line.split_whitespace().collect();
        let num = |t: &str| t.parse::<usize>().map_err(|_| err(&format!("expected an index, found `{t}`")));
        match toks[0] {
            "bool" => {
                if toks.get(1) != Some(&"1") {
                    return Err(err("unsupported .bool version"));
                }
            }
            "inputs" if toks.len() == 2 => inputs = Some(num(toks[1])?),
            "not" if toks.len() == 3 => gates.push(BoolGate::Not { out: num(toks[1])?, input: num(toks[2])? }),
            "and" if toks.len() == 4 => {
                gates.push(BoolGate::And { out: num(toks[1])?, left: num(toks[2])?, right: num(toks[3])? })
            }
            "outputs" => outputs = Some(toks[1..].iter().map(|t| num(t)).collect::<Result<_, _>>()?),
            _ => return Err(err(&format!("unrecognised line `{line}`"))),
        }
    }
    let inputs = inputs.ok_or(GadgetError::Syntax { line: 0, message: "missing `inputs` line".into() })?;
    let outputs = outputs.ok_or(GadgetError::Syntax { line: 0, message: "missing `outputs` line".into() })?;
    BooleanCircuit::new(inputs, gates, outputs)
}

/// A Boolean function given by its truth table. Row `r` holds the outputs
/// for the input whose bits, most significant first, spell `r`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LookupTable {
    pub in_bits: usize,
    pub out_bits: usize,
    pub rows: Vec<Vec<bool>>,
}

impl LookupTable {
    pub fn new(in_bits: usize, out_bits: usize, rows: Vec<Vec<bool>>) -> Result<Self, GadgetError> {
        if rows.len() != 1 << in_bits || rows.iter().any(|r| r.len() != out_bits) {
            return Err(GadgetError::Boolean("truth table has the wrong shape".into()));
        }
        Ok(LookupTable { in_bits, out_bits, rows })
    }

    /// Tabulates a circuit over all `2^inputs` assignments.
    pub fn from_circuit(c: &BooleanCircuit) -> Self {
        let k = c.input_count;
        let rows = (0..1usize << k).map(|r| c.eval(&index_bits(r, k))).collect();
        LookupTable { in_bits: k, out_bits: c.outputs.len(), rows }
    }

    /// Minterm decoder followed by an OR over the rows where each output is set.
    pub fn to_circuit(&self) -> BooleanCircuit {
        let k = self.in_bits;
        let mut b = BoolBuilder::new(k.max(1));
        let lits: Vec<(usize, usize)> = (1..=k).map(|v| (b.not(v), v)).collect();
        let mut minterms: Vec<Option<usize>> = vec![None];
        for &(neg, pos) in &lits {
            let mut next = Vec::with_capacity(minterms.len() * 2);
            for m in &minterms {
                for lit in [neg, pos] {
                    next.push(Some(match m {
                        None => lit,
                        Some(p) => b.and(*p, lit),
                    }));
                }
            }
            minterms = next;
        }
        let mut outputs = Vec::with_capacity(self.out_bits);
        for o in 0..self.out_bits {
            let mut acc: Option<usize> = None;
            for (r, m) in minterms.iter().enumerate() {
                if !self.rows[r][o] {
                    continue;
                }
                let term = match m {
                    Some(t) => *t,
                    None => b.one().expect("at least one input"),
                };
                acc = Some(match acc {
                    None => term,
                    Some(a) => b.or(a, term),
                });
            }
            outputs.push(match acc {
                Some(a) => a,
                None => b.zero().expect("at least one input"),
            });
        }
        b.finish(outputs)
    }
}

/// Bits of `r` as `k` booleans, most significant first.
pub fn index_bits(r: usize, k: usize) -> Vec<bool> {
    (0..k).map(|i| (r >> (k - 1 - i)) & 1 == 1).collect()
}
