use std::collections::BTreeMap;

use circuit_core::rational::{ceil_log2, fmt_rational, rat, round_dyadic};
use circuit_core::Rational;
use num_traits::{Signed, Zero};

use crate::error::MesaError;
use crate::field::{GridSpec, MesaField, PointParams};
use crate::piece::half;

type Scalar = dyn Fn(&Rational, &Rational) -> Rational + Send + Sync;
type Vector = dyn Fn(&Rational, &Rational) -> (Rational, Rational) + Send + Sync;

/// A smooth target `h` with exact evaluators for `h` and `∇h`.
pub struct SmoothTarget {
    pub h: Box<Scalar>,
    pub grad_h: Box<Vector>,
    /// Declared Lipschitz constant of `∇h`.
    pub lipschitz: Rational,
}

impl SmoothTarget {
    /// `h(x) = 1/2 + (x₁² + x₂²)/2000`, with `∇h = x/1000` and `L = 1/1000`.
    pub fn quadratic_bowl() -> Self {
        SmoothTarget {
            h: Box::new(|x1, x2| half() + (x1 * x1 + x2 * x2) / Rational::from_integer(2000.into())),
            grad_h: Box::new(|x1, x2| {
                let k = Rational::from_integer(1000.into());
                (x1 / &k, x2 / &k)
            }),
            lipschitz: rat(1, 1000),
        }
    }

    pub fn constant(c: Rational) -> Self {
        SmoothTarget {
            h: Box::new(move |_, _| c.clone()),
            grad_h: Box::new(|_, _| (Rational::zero(), Rational::zero())),
            lipschitz: Rational::zero(),
        }
    }
}

/// Sampled offsets `a(p)` and half-gradients `g(p)` on the grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledField {
    pub grid: GridSpec,
    pub a_table: BTreeMap<(usize, usize), Rational>,
    pub g_table: BTreeMap<(usize, usize), (Rational, Rational)>,
}

impl SampledField {
    /// Mesa field with all five offsets equal to `a(p)`.
    pub fn to_mesa_field(&self) -> MesaField {
        let mut f = MesaField::new(self.grid);
        for (k, a) in &self.a_table {
            let g = self.g_table[k].clone();
            f.insert(k.0, k.1, PointParams { a: std::array::from_fn(|_| a.clone()), g });
        }
        f
    }
}

/// Fractional bits for the offsets: `⌈log₂(100/ℓ²)⌉`.
pub fn offset_bits(ell: &Rational) -> u32 {
    ceil_log2(&(Rational::from_integer(100.into()) / (ell * ell))).max(0) as u32
}

/// Fractional bits for the half-gradients: three more than the offsets.
pub fn gradient_bits(ell: &Rational) -> u32 {
    offset_bits(ell) + 3
}

fn clamp(v: Rational, lo: &Rational, hi: &Rational) -> Rational {
    if &v < lo {
        lo.clone()
    } else if &v > hi {
        hi.clone()
    } else {
        v
    }
}

/// Rounds `h` and `∇h/2` to dyadics at every grid point and verifies
/// `|a − h| ≤ ℓ²/100` and `‖2g − ∇h‖∞ ≤ ℓ/100` afterwards.
pub fn sample_field_from_target(t: &SmoothTarget, grid: GridSpec) -> Result<SampledField, MesaError> {
    if t.lipschitz > rat(1, 100) {
        return Err(MesaError::TargetOutOfRange(format!("L = {} > 1/100", fmt_rational(&t.lipschitz))));
    }
    let ell = grid.ell();
    let (fa, fg) = (offset_bits(&ell), gradient_bits(&ell));
    let (a_lo, a_hi) = (rat(45, 100), rat(55, 100));
    let (g_lo, g_hi) = (rat(-1, 100), rat(1, 100));
    let tol_a = &ell * &ell / Rational::from_integer(100.into());
    let tol_g = &ell / Rational::from_integer(100.into());
    let mut a_table = BTreeMap::new();
    let mut g_table = BTreeMap::new();
    for (i, j) in grid.indices() {
        let (x1, x2) = grid.point(i, j);
        let h = (t.h)(&x1, &x2);
        let dh = (t.grad_h)(&x1, &x2);
        if h < rat(49, 100) || h > rat(51, 100) {
            return Err(MesaError::TargetOutOfRange(format!("h({i},{j}) = {}", fmt_rational(&h))));
        }
        if dh.0.abs() > rat(1, 1000) || dh.1.abs() > rat(1, 1000) {
            return Err(MesaError::TargetOutOfRange(format!("∇h at ({i},{j}) leaves [−0.001, 0.001]²")));
        }
        let a = clamp(round_dyadic(&h, fa), &a_lo, &a_hi);
        let g = (
            clamp(round_dyadic(&(&dh.0 * half()), fg), &g_lo, &g_hi),
            clamp(round_dyadic(&(&dh.1 * half()), fg), &g_lo, &g_hi),
        );
        let two = Rational::from_integer(2.into());
        if (&a - &h).abs() > tol_a {
            return Err(MesaError::ToleranceViolation(format!("|a − h| at ({i},{j})")));
        }
        if (&two * &g.0 - &dh.0).abs() > tol_g || (&two * &g.1 - &dh.1).abs() > tol_g {
            return Err(MesaError::ToleranceViolation(format!("‖2g − ∇h‖ at ({i},{j})")));
        }
        a_table.insert((i, j), a);
        g_table.insert((i, j), g);
    }
    Ok(SampledField { grid, a_table, g_table })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// `‖g(p) − g(p')‖∞ > ℓ`.
    GradientJump { p: (usize, usize), q: (usize, usize) },
    /// `|a_i^{p'} − a_j^p − ⟨2g(p), p' − p⟩| > ℓ²` for some offsets.
    OffsetMismatch { p: (usize, usize), q: (usize, usize) },
    /// Some `a_i^p` can leave `[0.4, 0.6]`.
    OffsetRange { p: (usize, usize) },
    MissingPoint { p: (usize, usize) },
}

/// Outcome of the adjacency checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldReport {
    pub violations: Vec<Violation>,
    /// All `g(p) ∈ [−0.01, 0.01]²` (the hypothesis of the range lemmas).
    pub g_within_hundredth: bool,
    /// All `g(p) ∈ [−0.02, 0.02]²` (the range produced after rescaling).
    pub g_within_two_hundredths: bool,
    pub pairs_checked: usize,
}

impl FieldReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Adjacency conditions for a sampled field under every offset perturbation
/// `τ` with `|τ| ≤ tau_bound`.
pub fn check_field_assumptions(f: &SampledField, tau_bound: &Rational) -> FieldReport {
    check_mesa_field_assumptions(&f.to_mesa_field(), tau_bound)
}

/// Same checks for a field with explicit per-piece offsets. Each offset may
/// additionally move by up to `tau_bound`; the worst case is taken exactly.
pub fn check_mesa_field_assumptions(f: &MesaField, tau_bound: &Rational) -> FieldReport {
    let ell = f.grid.ell();
    let ell2 = &ell * &ell;
    let two = Rational::from_integer(2.into());
    let (lo, hi) = (rat(4, 10), rat(6, 10));
    let mut violations = Vec::new();
    let mut pairs = 0;
    let mut g1 = true;
    let mut g2 = true;
    for (&(i, j), e) in &f.entries {
        let ga = e.g.0.abs().max(e.g.1.abs());
        g1 &= ga <= rat(1, 100);
        g2 &= ga <= rat(2, 100);
        let amin = e.a.iter().min().unwrap() - tau_bound;
        let amax = e.a.iter().max().unwrap() + tau_bound;
        if amin < lo || amax > hi {
            violations.push(Violation::OffsetRange { p: (i, j) });
        }
        for q in f.grid.neighbourhood(i, j, 1) {
            let Some(eq) = f.entries.get(&q) else {
                violations.push(Violation::MissingPoint { p: q });
                continue;
            };
            pairs += 1;
            if (&e.g.0 - &eq.g.0).abs() > ell || (&e.g.1 - &eq.g.1).abs() > ell {
                violations.push(Violation::GradientJump { p: (i, j), q });
            }
            let di = Rational::from_integer((q.0 as i64 - i as i64).into()) * &ell;
            let dj = Rational::from_integer((q.1 as i64 - j as i64).into()) * &ell;
            let inner = &two * (&e.g.0 * di + &e.g.1 * dj);
            // max over i, j of |a_i' − a_j − inner| plus worst-case τ on both.
            let qmax = eq.a.iter().max().unwrap();
            let qmin = eq.a.iter().min().unwrap();
            let pmax = e.a.iter().max().unwrap();
            let pmin = e.a.iter().min().unwrap();
            let worst = (qmax - pmin - &inner).abs().max((qmin - pmax - &inner).abs()) + &two * tau_bound;
            if worst > ell2 {
                violations.push(Violation::OffsetMismatch { p: (i, j), q });
            }
        }
    }
    FieldReport { violations, g_within_hundredth: g1, g_within_two_hundredths: g2, pairs_checked: pairs }
}
