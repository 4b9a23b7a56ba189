//! Dense-tableau two-phase simplex over exact rationals with Bland's rule.
//!
//! Problems are stated as `min c·x` subject to rows `a·x {≤,=,≥} b` and
//! `x ≥ 0`. Everything here is tiny (a few dozen columns), so clarity wins
//! over speed.

use circuit_core::Rational;
use num_traits::{Signed, Zero};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    pub coeffs: Vec<Rational>,
    pub relation: Relation,
    pub rhs: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearProgram {
    pub n_vars: usize,
    pub objective: Vec<Rational>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LpOutcome {
    Optimal { x: Vec<Rational>, value: Rational },
    Infeasible,
    Unbounded,
}

impl LinearProgram {
    pub fn new(n_vars: usize) -> Self {
        LinearProgram { n_vars, objective: vec![Rational::zero(); n_vars], constraints: Vec::new() }
    }

    pub fn add(&mut self, coeffs: Vec<Rational>, relation: Relation, rhs: Rational) {
        debug_assert_eq!(coeffs.len(), self.n_vars);
        self.constraints.push(Constraint { coeffs, relation, rhs });
    }

    /// Solves the program exactly.
    pub fn solve(&self) -> LpOutcome {
        Tableau::build(self).run(self)
    }
}

struct Tableau {
    rows: Vec<Vec<Rational>>,
    basis: Vec<usize>,
    obj: Vec<Rational>,
    /// Columns `>= artificial_start` are artificial.
    artificial_start: usize,
    cols: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Tableau {
        let n = lp.n_vars;
        let m = lp.constraints.len();
        // Normalise to non-negative right-hand sides.
        let normalised: Vec<(Vec<Rational>, Relation, Rational)> = lp
            .constraints
            .iter()
            .map(|c| {
                if c.rhs.is_negative() {
                    let rel = match c.relation {
                        Relation::Le => Relation::Ge,
                        Relation::Ge => Relation::Le,
                        Relation::Eq => Relation::Eq,
                    };
                    (c.coeffs.iter().map(|v| -v).collect(), rel, -c.rhs.clone())
                } else {
                    (c.coeffs.clone(), c.relation, c.rhs.clone())
                }
            })
            .collect();
        let slack_count = normalised.iter().filter(|c| c.1 != Relation::Eq).count();
        let art_count = normalised.iter().filter(|c| c.1 != Relation::Le).count();
        let artificial_start = n + slack_count;
        let cols = artificial_start + art_count;
        let mut rows = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let (mut s, mut a) = (n, artificial_start);
        for (coeffs, rel, rhs) in normalised {
            let mut row = vec![Rational::zero(); cols + 1];
            row[..n].clone_from_slice(&coeffs);
            row[cols] = rhs;
            match rel {
                Relation::Le => {
                    row[s] = Rational::from_integer(1.into());
                    basis.push(s);
                    s += 1;
                }
                Relation::Ge => {
                    row[s] = Rational::from_integer((-1).into());
                    s += 1;
                    row[a] = Rational::from_integer(1.into());
                    basis.push(a);
                    a += 1;
                }
                Relation::Eq => {
                    row[a] = Rational::from_integer(1.into());
                    basis.push(a);
                    a += 1;
                }
            }
            rows.push(row);
        }
        Tableau { rows, basis, obj: vec![Rational::zero(); cols + 1], artificial_start, cols }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c].clone();
        for v in self.rows[r].iter_mut() {
            if !v.is_zero() {
                *v /= &p;
            }
        }
        let pivot_row = self.rows[r].clone();
        let eliminate = |row: &mut Vec<Rational>| {
            let f = row[c].clone();
            if f.is_zero() {
                return;
            }
            for (v, pr) in row.iter_mut().zip(&pivot_row) {
                if !pr.is_zero() {
                    *v -= &f * pr;
                }
            }
        };
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                eliminate(row);
            }
        }
        eliminate(&mut self.obj);
        self.basis[r] = c;
    }

    /// Sets the reduced-cost row for costs `cost` (indexed by column).
    fn price(&mut self, cost: &[Rational]) {
        let mut obj: Vec<Rational> = cost.to_vec();
        obj.push(Rational::zero());
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            let cb = &cost[b];
            if cb.is_zero() {
                continue;
            }
            for (o, v) in obj.iter_mut().zip(row) {
                if !v.is_zero() {
                    *o -= cb * v;
                }
            }
        }
        self.obj = obj;
    }

    /// Bland-rule iterations over columns `< limit`. Returns false if unbounded.
    fn iterate(&mut self, limit: usize) -> bool {
        loop {
            let Some(enter) = (0..limit).find(|&j| self.obj[j].is_negative()) else {
                return true;
            };
            let mut best: Option<(usize, Rational)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[enter].is_positive() {
                    let ratio = &row[self.cols] / &row[enter];
                    let better = match &best {
                        None => true,
                        Some((bi, br)) => ratio < *br || (ratio == *br && self.basis[i] < self.basis[*bi]),
                    };
                    if better {
                        best = Some((i, ratio));
                    }
                }
            }
            match best {
                None => return false,
                Some((r, _)) => self.pivot(r, enter),
            }
        }
    }

    fn run(mut self, lp: &LinearProgram) -> LpOutcome {
        let n = lp.n_vars;
        if self.artificial_start < self.cols {
            let mut cost = vec![Rational::zero(); self.cols];
            for c in cost.iter_mut().skip(self.artificial_start) {
                *c = Rational::from_integer(1.into());
            }
            self.price(&cost);
            self.iterate(self.cols);
            if !self.obj[self.cols].is_zero() {
                return LpOutcome::Infeasible;
            }
            // Drive remaining (zero-valued) artificials out of the basis.
            let mut r = 0;
            while r < self.rows.len() {
                if self.basis[r] >= self.artificial_start {
                    match (0..self.artificial_start).find(|&j| !self.rows[r][j].is_zero()) {
                        Some(j) => {
                            self.pivot(r, j);
                            r += 1;
                        }
                        None => {
                            self.rows.remove(r);
                            self.basis.remove(r);
                        }
                    }
                } else {
                    r += 1;
                }
            }
        }
        let mut cost = vec![Rational::zero(); self.cols];
        cost[..n].clone_from_slice(&lp.objective);
        self.price(&cost);
        if !self.iterate(self.artificial_start) {
            return LpOutcome::Unbounded;
        }
        let mut x = vec![Rational::zero(); n];
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            if b < n {
                x[b] = row[self.cols].clone();
            }
        }
        let value = x.iter().zip(&lp.objective).fold(Rational::zero(), |s, (a, b)| s + a * b);
        LpOutcome::Optimal { x, value }
    }
}

/// Lexicographically smallest point of `{x ≥ 0 : constraints}` by a
/// sequence of LPs minimising one coordinate at a time.
pub fn lexicographic_min(lp: &LinearProgram) -> Option<Vec<Rational>> {
    let mut work = lp.clone();
    let mut fixed = Vec::with_capacity(lp.n_vars);
    for j in 0..lp.n_vars {
        work.objective = vec![Rational::zero(); lp.n_vars];
        work.objective[j] = Rational::from_integer(1.into());
        match work.solve() {
            LpOutcome::Optimal { x, .. } => {
                let mut row = vec![Rational::zero(); lp.n_vars];
                row[j] = Rational::from_integer(1.into());
                work.add(row, Relation::Eq, x[j].clone());
                fixed.push(x[j].clone());
            }
            _ => return None,
        }
    }
    Some(fixed)
}

/// Whether some convex combination of `points` satisfies the per-coordinate
/// bounds `lower[i] ≤ u_i ≤ upper[i]` (`None` = unconstrained). Returns the
/// weights of a witness.
pub fn convex_combination_in_box(
    points: &[Vec<Rational>],
    lower: &[Option<Rational>],
    upper: &[Option<Rational>],
) -> Option<Vec<Rational>> {
    if points.is_empty() {
        return None;
    }
    let k = points.len();
    let mut lp = LinearProgram::new(k);
    lp.add(vec![Rational::from_integer(1.into()); k], Relation::Eq, Rational::from_integer(1.into()));
    for d in 0..lower.len() {
        let row: Vec<Rational> = points.iter().map(|p| p[d].clone()).collect();
        if let Some(lo) = &lower[d] {
            lp.add(row.clone(), Relation::Ge, lo.clone());
        }
        if let Some(hi) = &upper[d] {
            lp.add(row, Relation::Le, hi.clone());
        }
    }
    match lp.solve() {
        LpOutcome::Optimal { x, .. } => Some(x),
        _ => None,
    }
}
