//! Sparse quadratic polynomials over the unit box, their exact gradients,
//! the (ε-)KKT check and the `.bqp` text format.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use circuit_core::rational::{fmt_rational, parse_rational};
use circuit_core::Rational;
use num_traits::{One, Signed, Zero};

use crate::error::QpError;

/// `Σ_{i≤j} q_ij x_i x_j + Σ l_i x_i + c0` on `[0,1]^var_count`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BoxQP {
    pub var_count: usize,
    pub quad_terms: BTreeMap<(usize, usize), Rational>,
    pub lin_terms: BTreeMap<usize, Rational>,
    pub constant: Rational,
}

fn bump<K: Ord + Clone>(map: &mut BTreeMap<K, Rational>, key: K, v: Rational) {
    if v.is_zero() {
        return;
    }
    let slot = map.entry(key.clone()).or_insert_with(Rational::zero);
    *slot += v;
    if slot.is_zero() {
        // Keep the representation free of explicit zero coefficients.
        map.remove(&key);
    }
}

impl BoxQP {
    pub fn new(var_count: usize) -> Self {
        BoxQP { var_count, ..Default::default() }
    }

    /// Adds `v · x_i x_j` (order of `i`, `j` irrelevant).
    pub fn add_quad(&mut self, i: usize, j: usize, v: Rational) {
        let key = if i <= j { (i, j) } else { (j, i) };
        bump(&mut self.quad_terms, key, v);
    }

    pub fn add_lin(&mut self, i: usize, v: Rational) {
        bump(&mut self.lin_terms, i, v);
    }

    pub fn add_constant(&mut self, v: Rational) {
        self.constant += v;
    }

    /// Adds `weight · (Σ a_t x_{v_t} + c)²`.
    pub fn add_square(&mut self, terms: &[(Rational, usize)], c: &Rational, weight: &Rational) {
        for (s, (a, i)) in terms.iter().enumerate() {
            self.add_quad(*i, *i, weight * a * a);
            for (b, j) in &terms[s + 1..] {
                self.add_quad(*i, *j, weight * Rational::from_integer(2.into()) * a * b);
            }
            self.add_lin(*i, weight * Rational::from_integer(2.into()) * a * c);
        }
        self.add_constant(weight * c * c);
    }

    /// Adds `weight · other`.
    pub fn add_scaled(&mut self, other: &BoxQP, weight: &Rational) {
        for ((i, j), v) in &other.quad_terms {
            self.add_quad(*i, *j, weight * v);
        }
        for (i, v) in &other.lin_terms {
            self.add_lin(*i, weight * v);
        }
        self.add_constant(weight * &other.constant);
    }

    fn check_dim(&self, x: &[Rational]) -> Result<(), QpError> {
        if x.len() != self.var_count {
            return Err(QpError::DimensionMismatch { expected: self.var_count, got: x.len() });
        }
        Ok(())
    }

    /// Value of the polynomial at `x`.
    pub fn eval(&self, x: &[Rational]) -> Result<Rational, QpError> {
        self.check_dim(x)?;
        let mut acc = self.constant.clone();
        for ((i, j), v) in &self.quad_terms {
            acc += v * &x[*i] * &x[*j];
        }
        for (i, v) in &self.lin_terms {
            acc += v * &x[*i];
        }
        Ok(acc)
    }

    /// Exact gradient at `x`.
    pub fn gradient(&self, x: &[Rational]) -> Result<Vec<Rational>, QpError> {
        self.check_dim(x)?;
        let mut g = vec![Rational::zero(); self.var_count];
        for (i, v) in &self.lin_terms {
            g[*i] += v;
        }
        for ((i, j), v) in &self.quad_terms {
            if i == j {
                g[*i] += Rational::from_integer(2.into()) * v * &x[*i];
            } else {
                g[*i] += v * &x[*j];
                g[*j] += v * &x[*i];
            }
        }
        Ok(g)
    }

    /// Dense symmetric Hessian-style data `(H, c)` with `∇p(x) = Hx + c`.
    pub fn gradient_affine_map(&self) -> (Vec<Vec<Rational>>, Vec<Rational>) {
        let n = self.var_count;
        let mut h = vec![vec![Rational::zero(); n]; n];
        for ((i, j), v) in &self.quad_terms {
            if i == j {
                h[*i][*i] += Rational::from_integer(2.into()) * v;
            } else {
                h[*i][*j] += v;
                h[*j][*i] += v;
            }
        }
        let mut c = vec![Rational::zero(); n];
        for (i, v) in &self.lin_terms {
            c[*i] += v;
        }
        (h, c)
    }

    pub fn validate(&self) -> Result<(), QpError> {
        for (i, j) in self.quad_terms.keys() {
            if *j >= self.var_count || i > j {
                return Err(QpError::IndexOutOfRange { index: *j.max(i), vars: self.var_count });
            }
        }
        for i in self.lin_terms.keys() {
            if *i >= self.var_count {
                return Err(QpError::IndexOutOfRange { index: *i, vars: self.var_count });
            }
        }
        Ok(())
    }
}

/// Exact gradient (free-function form).
pub fn qp_gradient(qp: &BoxQP, x: &[Rational]) -> Result<Vec<Rational>, QpError> {
    qp.gradient(x)
}

/// Which KKT implication failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KktSide {
    /// `x_i > 0` but `∂_i p > ε`.
    Positive,
    /// `x_i < 1` but `∂_i p < −ε`.
    BelowUpper,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KktViolation {
    pub index: usize,
    pub side: KktSide,
    pub partial: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KktVerdict {
    pub satisfied: bool,
    pub violations: Vec<KktViolation>,
}

/// Checks ε-KKT conditions on the unit box (`eps = 0` is the exact check).
pub fn check_kkt(qp: &BoxQP, x: &[Rational], eps: &Rational) -> Result<KktVerdict, QpError> {
    qp.check_dim(x)?;
    for (i, v) in x.iter().enumerate() {
        if v.is_negative() || *v > Rational::one() {
            return Err(QpError::OutsideBox { index: i });
        }
    }
    let g = qp.gradient(x)?;
    let mut violations = Vec::new();
    for (i, d) in g.into_iter().enumerate() {
        if x[i].is_positive() && d > *eps {
            violations.push(KktViolation { index: i, side: KktSide::Positive, partial: d.clone() });
        }
        if x[i] < Rational::one() && d < -eps.clone() {
            violations.push(KktViolation { index: i, side: KktSide::BelowUpper, partial: d });
        }
    }
    Ok(KktVerdict { satisfied: violations.is_empty(), violations })
}

/// Renders the canonical `.bqp` text (0-based variable indices).
pub fn serialize_bqp(qp: &BoxQP) -> String {
    let mut s = String::new();
    s.push_str("bqp 1\n");
    let _ = writeln!(s, "vars {}", qp.var_count);
    for ((i, j), v) in &qp.quad_terms {
        let _ = writeln!(s, "q {i} {j} {}", fmt_rational(v));
    }
    for (i, v) in &qp.lin_terms {
        let _ = writeln!(s, "l {i} {}", fmt_rational(v));
    }
    let _ = writeln!(s, "c0 {}", fmt_rational(&qp.constant));
    s
}

/// Parses `.bqp` text.
pub fn parse_bqp(text: &str) -> Result<BoxQP, QpError> {
    let syntax = |line: usize, m: &str| QpError::Syntax { line, message: m.to_string() };
    let mut qp: Option<BoxQP> = None;
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let toks: Vec<&str> = raw.split('#').next().unwrap_or("").split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        let idx = |t: &str| t.parse::<usize>().map_err(|_| syntax(line, "bad index"));
        let num = |t: &str| parse_rational(t).map_err(|_| syntax(line, "bad rational"));
        match (toks[0], toks.len()) {
            ("bqp", 2) if toks[1] == "1" => {}
            ("vars", 2) => qp = Some(BoxQP::new(idx(toks[1])?)),
            ("q", 4) => {
                let p = qp.as_mut().ok_or_else(|| syntax(line, "`q` before `vars`"))?;
                let (i, j) = (idx(toks[1])?, idx(toks[2])?);
                if i > j {
                    return Err(syntax(line, "quadratic terms need i <= j"));
                }
                p.add_quad(i, j, num(toks[3])?);
            }
            ("l", 3) => {
                let p = qp.as_mut().ok_or_else(|| syntax(line, "`l` before `vars`"))?;
                p.add_lin(idx(toks[1])?, num(toks[2])?);
            }
            ("c0", 2) => {
                let p = qp.as_mut().ok_or_else(|| syntax(line, "`c0` before `vars`"))?;
                p.add_constant(num(toks[1])?);
            }
            _ => return Err(syntax(line, "unrecognised line")),
        }
    }
    let qp = qp.ok_or_else(|| syntax(1, "missing `vars` line"))?;
    qp.validate()?;
    Ok(qp)
}
