//! Projected gradient descent, exhaustive active-set enumeration, the
//! LP-gap bound and LP-based rounding of approximate KKT points.

use std::collections::BTreeSet;

use circuit_core::rational::{ceil_dyadic, ceil_sqrt, denominator_lcm, floor_dyadic};
use circuit_core::Rational;
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use qp_compiler::{check_kkt, BoxQP, KktVerdict};

use crate::error::KktError;
use crate::lp::{lexicographic_min, LinearProgram, LpOutcome, Relation};

/// Settings for [`projected_gradient_solve`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Iterates are rounded onto the grid `2^-grid_bits`.
    pub grid_bits: u32,
    /// Starting point; `None` means the box centre.
    pub start: Option<Vec<Rational>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { max_iters: 10_000, grid_bits: 256, start: None }
    }
}

/// `Λ = max_i Σ_{terms ∋ x_i} 2|q|`; a purely linear objective gets `Λ = 1/2`,
/// i.e. a unit step.
pub fn lipschitz_bound(qp: &BoxQP) -> Rational {
    let mut rows = vec![Rational::zero(); qp.var_count];
    for ((i, j), v) in &qp.quad_terms {
        let w = Rational::from_integer(2.into()) * v.abs();
        rows[*i] += &w;
        if i != j {
            rows[*j] += w;
        }
    }
    let lambda = rows.into_iter().fold(Rational::zero(), |a, b| if b > a { b } else { a });
    if lambda.is_zero() {
        Rational::new(1.into(), 2.into())
    } else {
        lambda
    }
}

/// Fixed-step projected gradient descent with step `1/(2Λ)`.
pub fn projected_gradient_solve(
    qp: &BoxQP,
    eps: &Rational,
    cfg: &SolverConfig,
) -> Result<Vec<Rational>, KktError> {
    if !eps.is_positive() {
        return Err(KktError::BadParameter("eps must be positive".into()));
    }
    let n = qp.var_count;
    let half = Rational::new(1.into(), 2.into());
    let mut x = match &cfg.start {
        Some(s) if s.len() != n => return Err(KktError::DimensionMismatch { expected: n, got: s.len() }),
        Some(s) => s.clone(),
        None => vec![half.clone(); n],
    };
    let step = Rational::one() / (Rational::from_integer(2.into()) * lipschitz_bound(qp));
    let mut verdict: KktVerdict = check_kkt(qp, &x, eps)?;
    for _ in 0..cfg.max_iters {
        if verdict.satisfied {
            return Ok(x);
        }
        let g = qp.gradient(&x)?;
        for (xi, gi) in x.iter_mut().zip(&g) {
            let v = &*xi - &step * gi;
            *xi = if !v.is_positive() {
                Rational::zero()
            } else if v >= Rational::one() {
                Rational::one()
            } else if v < half {
                ceil_dyadic(&v, cfg.grid_bits)
            } else {
                floor_dyadic(&v, cfg.grid_bits)
            };
        }
        verdict = check_kkt(qp, &x, eps)?;
    }
    if verdict.satisfied {
        return Ok(x);
    }
    Err(KktError::BudgetExhausted { iterations: cfg.max_iters, best: x, verdict })
}

/// Default variable cap for [`enumerate_exact_kkt`].
pub const DEFAULT_ENUMERATION_CAP: usize = 8;

/// All exact KKT points found by active-set enumeration (default cap).
pub fn enumerate_exact_kkt(qp: &BoxQP) -> Result<Vec<Vec<Rational>>, KktError> {
    enumerate_exact_kkt_with_cap(qp, DEFAULT_ENUMERATION_CAP)
}

/// Gauss–Jordan inverse; `None` if singular.
fn invert(a: &[Vec<Rational>]) -> Option<Vec<Vec<Rational>>> {
    let n = a.len();
    let mut m: Vec<Vec<Rational>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { Rational::one() } else { Rational::zero() }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, piv);
        let p = m[col][col].clone();
        for v in m[col].iter_mut() {
            *v /= &p;
        }
        let prow = m[col].clone();
        for (r, row) in m.iter_mut().enumerate() {
            if r != col && !row[col].is_zero() {
                let f = row[col].clone();
                for (v, pv) in row.iter_mut().zip(&prow) {
                    *v -= &f * pv;
                }
            }
        }
    }
    Some(m.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// Enumerates lower/upper/free patterns; see [`enumerate_exact_kkt`].
pub fn enumerate_exact_kkt_with_cap(qp: &BoxQP, cap: usize) -> Result<Vec<Vec<Rational>>, KktError> {
    let n = qp.var_count;
    if n > cap {
        return Err(KktError::TooManyVariables { vars: n, cap });
    }
    let (h, c) = qp.gradient_affine_map();
    let mut found: BTreeSet<Vec<Rational>> = BTreeSet::new();
    for free_mask in 0u32..(1u32 << n) {
        let free: Vec<usize> = (0..n).filter(|i| free_mask & (1 << i) != 0).collect();
        let bound: Vec<usize> = (0..n).filter(|i| free_mask & (1 << i) == 0).collect();
        let hff: Vec<Vec<Rational>> = free.iter().map(|&i| free.iter().map(|&j| h[i][j].clone()).collect()).collect();
        match invert(&hff) {
            Some(inv) => enumerate_regular(&h, &c, &free, &bound, &inv, &mut found),
            None => enumerate_singular(&h, &c, &free, &bound, &mut found),
        }
    }
    Ok(found.into_iter().collect())
}

fn enumerate_regular(
    h: &[Vec<Rational>],
    c: &[Rational],
    free: &[usize],
    bound: &[usize],
    inv: &[Vec<Rational>],
    found: &mut BTreeSet<Vec<Rational>>,
) {
    let (nf, nb) = (free.len(), bound.len());
    // x_F = v + M x_B and g_B = w + P x_B.
    let v: Vec<Rational> = (0..nf)
        .map(|r| -(0..nf).fold(Rational::zero(), |s, t| s + &inv[r][t] * &c[free[t]]))
        .collect();
    let mcols: Vec<Vec<Rational>> = bound
        .iter()
        .map(|&b| {
            (0..nf)
                .map(|r| -(0..nf).fold(Rational::zero(), |s, t| s + &inv[r][t] * &h[free[t]][b]))
                .collect()
        })
        .collect();
    let w: Vec<Rational> = bound
        .iter()
        .map(|&i| (0..nf).fold(c[i].clone(), |s, t| s + &h[i][free[t]] * &v[t]))
        .collect();
    let pcols: Vec<Vec<Rational>> = bound
        .iter()
        .enumerate()
        .map(|(bi, &b)| {
            bound
                .iter()
                .map(|&i| (0..nf).fold(h[i][b].clone(), |s, t| s + &h[i][free[t]] * &mcols[bi][t]))
                .collect()
        })
        .collect();
    let mut xf = v;
    let mut gb = w;
    let mut assignment = vec![false; nb];
    let total: u64 = 1u64 << nb;
    for step in 0..total {
        if step > 0 {
            // Gray code: flip the lowest set bit position of `step`.
            let bit = step.trailing_zeros() as usize;
            let on = !assignment[bit];
            assignment[bit] = on;
            for (x, m) in xf.iter_mut().zip(&mcols[bit]) {
                if on { *x += m } else { *x -= m }
            }
            for (g, p) in gb.iter_mut().zip(&pcols[bit]) {
                if on { *g += p } else { *g -= p }
            }
        }
        if xf.iter().any(|x| x.is_negative() || *x > Rational::one()) {
            continue;
        }
        let signs_ok = gb.iter().zip(&assignment).all(|(g, up)| if *up { !g.is_positive() } else { !g.is_negative() });
        if !signs_ok {
            continue;
        }
        let mut point = vec![Rational::zero(); nf + nb];
        for (t, &i) in free.iter().enumerate() {
            point[i] = xf[t].clone();
        }
        for (t, &i) in bound.iter().enumerate() {
            if assignment[t] {
                point[i] = Rational::one();
            }
        }
        found.insert(point);
    }
}

fn enumerate_singular(
    h: &[Vec<Rational>],
    c: &[Rational],
    free: &[usize],
    bound: &[usize],
    found: &mut BTreeSet<Vec<Rational>>,
) {
    let (nf, nb) = (free.len(), bound.len());
    for bits in 0u64..(1u64 << nb) {
        let xb: Vec<Rational> = (0..nb)
            .map(|t| if bits & (1 << t) != 0 { Rational::one() } else { Rational::zero() })
            .collect();
        let mut lp = LinearProgram::new(nf);
        for &i in free {
            let row: Vec<Rational> = free.iter().map(|&j| h[i][j].clone()).collect();
            let rhs = -(bound.iter().zip(&xb).fold(c[i].clone(), |s, (&b, x)| s + &h[i][b] * x));
            lp.add(row, Relation::Eq, rhs);
        }
        for (t, &i) in bound.iter().enumerate() {
            let row: Vec<Rational> = free.iter().map(|&j| h[i][j].clone()).collect();
            let rhs = -(bound.iter().zip(&xb).fold(c[i].clone(), |s, (&b, x)| s + &h[i][b] * x));
            // g_i = row·x_F − rhs; lower bound needs g ≥ 0, upper needs g ≤ 0.
            let rel = if xb[t].is_zero() { Relation::Ge } else { Relation::Le };
            lp.add(row, rel, rhs);
        }
        for t in 0..nf {
            let mut row = vec![Rational::zero(); nf];
            row[t] = Rational::one();
            lp.add(row, Relation::Le, Rational::one());
        }
        if let Some(xf) = lexicographic_min(&lp) {
            let mut point = vec![Rational::zero(); nf + nb];
            for (t, &i) in free.iter().enumerate() {
                point[i] = xf[t].clone();
            }
            for (t, &i) in bound.iter().enumerate() {
                point[i] = xb[t].clone();
            }
            found.insert(point);
        }
    }
}

/// `ε = 1/(2D)` with `D = d · ⌈sqrt(Π of the n+1 largest squared row norms)⌉`,
/// where `d` clears the denominators of the gradient data and the rows are
/// `(1, ±d·H_i)` of the scaled LP constraints.
pub fn compute_epsilon_gap(qp: &BoxQP) -> Rational {
    let (h, c) = qp.gradient_affine_map();
    let n = qp.var_count;
    let d = denominator_lcm(h.iter().flatten().chain(c.iter()));
    let dr = Rational::from_integer(d.clone());
    let mut norms: Vec<BigInt> = Vec::with_capacity(2 * n);
    for row in &h {
        let mut s = BigInt::one();
        for v in row {
            let scaled = (v * &dr).to_integer();
            s += &scaled * &scaled;
        }
        norms.push(s.clone());
        norms.push(s);
    }
    norms.sort_by(|a, b| b.cmp(a));
    let prod = norms.iter().take(n + 1).fold(BigInt::one(), |p, v| p * v);
    let big_d = d * ceil_sqrt(&prod);
    Rational::new(BigInt::one(), BigInt::from(2) * big_d)
}

/// Outcome of [`round_to_exact`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundingResult {
    pub exact_point: Vec<Rational>,
    pub active_sets: (Vec<usize>, Vec<usize>),
    pub lp_value: Rational,
}

/// Builds `LP(I₀, I₁)` over `(z, x)`; see [`round_to_exact`].
pub fn build_rounding_lp(qp: &BoxQP, i0: &[usize], i1: &[usize]) -> LinearProgram {
    let n = qp.var_count;
    let (h, c) = qp.gradient_affine_map();
    let mut lp = LinearProgram::new(n + 1);
    lp.objective[0] = Rational::one();
    for i in 0..n {
        // z − H_i·x ≥ c_i   (z ≥ ∂_i p)
        if !i0.contains(&i) {
            let mut row = vec![Rational::one()];
            row.extend(h[i].iter().map(|v| -v));
            lp.add(row, Relation::Ge, c[i].clone());
        }
        // z + H_i·x ≥ −c_i  (z ≥ −∂_i p)
        if !i1.contains(&i) {
            let mut row = vec![Rational::one()];
            row.extend(h[i].iter().cloned());
            lp.add(row, Relation::Ge, -c[i].clone());
        }
        let mut unit = vec![Rational::zero(); n + 1];
        unit[i + 1] = Rational::one();
        if i0.contains(&i) {
            lp.add(unit, Relation::Eq, Rational::zero());
        } else if i1.contains(&i) {
            lp.add(unit, Relation::Eq, Rational::one());
        } else {
            lp.add(unit, Relation::Le, Rational::one());
        }
    }
    lp
}

/// Turns an ε-KKT point into an exact KKT point by solving `LP(I₀, I₁)`.
pub fn round_to_exact(qp: &BoxQP, approx: &[Rational], eps: &Rational) -> Result<RoundingResult, KktError> {
    if !check_kkt(qp, approx, eps)?.satisfied {
        return Err(KktError::NotApproximateKkt);
    }
    let i0: Vec<usize> = (0..qp.var_count).filter(|&i| approx[i].is_zero()).collect();
    let i1: Vec<usize> = (0..qp.var_count).filter(|&i| approx[i].is_one()).collect();
    let lp = build_rounding_lp(qp, &i0, &i1);
    let (x, value) = match lp.solve() {
        LpOutcome::Optimal { x, value } => (x, value),
        // (ε, approx) is feasible and z ≥ 0, so neither case can occur.
        _ => return Err(KktError::RoundingFailed),
    };
    if !value.is_zero() {
        return Err(KktError::NonzeroLpOptimum(value));
    }
    let point = x[1..].to_vec();
    if !check_kkt(qp, &point, &Rational::zero())?.satisfied {
        return Err(KktError::RoundingFailed);
    }
    Ok(RoundingResult { exact_point: point, active_sets: (i0, i1), lp_value: value })
}
