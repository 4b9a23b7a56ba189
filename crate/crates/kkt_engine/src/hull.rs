//! Inner and outer approximations of the δ-generalized circuit gradient
//! `conv{∇f^π(y) : |π| ≤ δ, f^π differentiable at y}` and the resulting
//! three-valued 2D-linear-KKT check.

use circuit_core::{region_gradient, Gate, LinearCircuit, PerturbationVector, Rational};
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::KktError;
use crate::lp::convex_combination_in_box;

/// Which approximation a [`GradientHull`] is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HullMode {
    SampledInner,
    IntervalOuter,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GradientHull {
    pub vertices: Vec<Vec<Rational>>,
    pub mode: HullMode,
    /// For sampled-inner hulls, the perturbation realising each vertex.
    pub witnesses: Vec<PerturbationVector>,
}

/// Largest gradient set tracked on a single wire by the outer hull.
pub const OUTER_SET_CAP: usize = 4096;

type Point = Vec<Rational>;

fn cross(o: &Point, a: &Point, b: &Point) -> Rational {
    (&a[0] - &o[0]) * (&b[1] - &o[1]) - (&a[1] - &o[1]) * (&b[0] - &o[0])
}

/// Reduces a finite set to something with the same convex hull: extremes in
/// 1D, the strict convex hull in 2D, a deduplicated set otherwise.
fn reduce(mut pts: Vec<Point>, dim: usize) -> Result<Vec<Point>, KktError> {
    pts.sort();
    pts.dedup();
    match dim {
        0 => Ok(pts.into_iter().take(1).collect()),
        1 => {
            if pts.len() <= 2 {
                return Ok(pts);
            }
            let lo = pts.first().unwrap().clone();
            let hi = pts.last().unwrap().clone();
            Ok(vec![lo, hi])
        }
        2 => {
            if pts.len() <= 2 {
                return Ok(pts);
            }
            // Andrew's monotone chain, dropping collinear points.
            let mut lower: Vec<Point> = Vec::new();
            for p in &pts {
                while lower.len() >= 2 && !cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p).is_positive() {
                    lower.pop();
                }
                lower.push(p.clone());
            }
            let mut upper: Vec<Point> = Vec::new();
            for p in pts.iter().rev() {
                while upper.len() >= 2 && !cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p).is_positive() {
                    upper.pop();
                }
                upper.push(p.clone());
            }
            lower.pop();
            upper.pop();
            lower.extend(upper);
            Ok(lower)
        }
        _ => {
            if pts.len() > OUTER_SET_CAP {
                return Err(KktError::HullTooLarge(OUTER_SET_CAP));
            }
            Ok(pts)
        }
    }
}

fn minkowski_linear(sets: &[(Rational, &Vec<Point>)], dim: usize) -> Result<Vec<Point>, KktError> {
    let mut acc: Vec<Point> = vec![vec![Rational::zero(); dim]];
    for (a, set) in sets {
        if a.is_zero() {
            continue;
        }
        let mut next = Vec::with_capacity(acc.len() * set.len());
        for p in &acc {
            for q in set.iter() {
                next.push(p.iter().zip(q).map(|(u, v)| u + a * v).collect());
            }
        }
        acc = reduce(next, dim)?;
    }
    Ok(acc)
}

#[derive(Clone)]
struct Interval {
    lo: Rational,
    hi: Rational,
}

impl Interval {
    fn point(v: Rational) -> Self {
        Interval { lo: v.clone(), hi: v }
    }
    fn add(&self, o: &Interval) -> Interval {
        Interval { lo: &self.lo + &o.lo, hi: &self.hi + &o.hi }
    }
    fn scale(&self, a: &Rational) -> Interval {
        if a.is_negative() {
            Interval { lo: a * &self.hi, hi: a * &self.lo }
        } else {
            Interval { lo: a * &self.lo, hi: a * &self.hi }
        }
    }
    fn clamp(&self, lo: &Rational, hi: &Rational) -> Interval {
        let c = |v: &Rational| if v < lo { lo.clone() } else if v > hi { hi.clone() } else { v.clone() };
        Interval { lo: c(&self.lo), hi: c(&self.hi) }
    }
}

fn min_r(a: &Rational, b: &Rational) -> Rational {
    if a <= b { a.clone() } else { b.clone() }
}

fn max_r(a: &Rational, b: &Rational) -> Rational {
    if a >= b { a.clone() } else { b.clone() }
}

/// Certified outer approximation: interval reachability of every wire value
/// under `π ∈ [−δ, δ]`, closed status feasibility, and forward propagation
/// of gradient sets through every feasible status.
pub fn outer_hull(c: &LinearCircuit, y: &[Rational], delta: &Rational) -> Result<GradientHull, KktError> {
    let m = c.input_count();
    if y.len() != m {
        return Err(KktError::DimensionMismatch { expected: m, got: y.len() });
    }
    let slack = Interval { lo: -delta.clone(), hi: delta.clone() };
    let zero_set = || vec![vec![Rational::zero(); m]];
    let mut vals: Vec<Interval> = y.iter().cloned().map(Interval::point).collect();
    let mut sets: Vec<Vec<Point>> = (0..m)
        .map(|k| {
            let mut e = vec![Rational::zero(); m];
            e[k] = Rational::one();
            vec![e]
        })
        .collect();
    for (_, gate) in c.indexed_gates() {
        let (val, set) = match gate {
            Gate::AffineLinear(f) | Gate::TruncLinear(f) => {
                let mut pre = Interval::point(f.constant.clone());
                for (a, j) in &f.terms {
                    pre = pre.add(&vals[j - 1].scale(a));
                }
                let terms: Vec<(Rational, &Vec<Point>)> = f.terms.iter().map(|(a, j)| (a.clone(), &sets[j - 1])).collect();
                let linear = minkowski_linear(&terms, m)?;
                if matches!(gate, Gate::AffineLinear(_)) {
                    (pre, linear)
                } else {
                    let pre = pre.add(&slack);
                    trunc_step(pre, &Rational::zero(), &Rational::one(), linear, zero_set(), m)?
                }
            }
            Gate::TruncInterval { lo, hi, input } => {
                let pre = vals[input - 1].add(&slack);
                trunc_step(pre, lo, hi, sets[input - 1].clone(), zero_set(), m)?
            }
            Gate::Min { left, right } | Gate::Max { left, right } => {
                let l = &vals[left - 1];
                let r = vals[right - 1].add(&slack);
                let is_min = matches!(gate, Gate::Min { .. });
                let (left_ok, right_ok) = if is_min {
                    (l.lo <= r.hi, r.lo <= l.hi)
                } else {
                    (l.hi >= r.lo, r.hi >= l.lo)
                };
                let val = if is_min {
                    Interval { lo: min_r(&l.lo, &r.lo), hi: min_r(&l.hi, &r.hi) }
                } else {
                    Interval { lo: max_r(&l.lo, &r.lo), hi: max_r(&l.hi, &r.hi) }
                };
                let mut pts = Vec::new();
                if left_ok {
                    pts.extend(sets[left - 1].iter().cloned());
                }
                if right_ok {
                    pts.extend(sets[right - 1].iter().cloned());
                }
                (val, reduce(pts, m)?)
            }
        };
        vals.push(val);
        sets.push(set);
    }
    Ok(GradientHull { vertices: sets[c.output() - 1].clone(), mode: HullMode::IntervalOuter, witnesses: Vec::new() })
}

fn trunc_step(
    pre: Interval,
    lo: &Rational,
    hi: &Rational,
    interior: Vec<Point>,
    zero: Vec<Point>,
    m: usize,
) -> Result<(Interval, Vec<Point>), KktError> {
    let saturated = pre.lo <= *lo || pre.hi >= *hi;
    let inside = pre.lo <= *hi && pre.hi >= *lo;
    let mut pts = Vec::new();
    if inside {
        pts.extend(interior);
    }
    if saturated {
        pts.extend(zero);
    }
    Ok((pre.clamp(lo, hi), reduce(pts, m)?))
}

/// Inner approximation from explicit perturbations: keeps the gradients of
/// those `f^π` that are differentiable at `y` with `|π| ≤ δ`.
pub fn inner_hull(
    c: &LinearCircuit,
    y: &[Rational],
    delta: &Rational,
    perturbations: &[PerturbationVector],
) -> Result<GradientHull, KktError> {
    let mut vertices = Vec::new();
    let mut witnesses = Vec::new();
    for pi in perturbations {
        if pi.max_abs() > *delta {
            return Err(KktError::BadParameter("perturbation exceeds delta".into()));
        }
        let rg = region_gradient(c, pi, y)?;
        if rg.differentiable {
            let g = rg.gradient.unwrap();
            if !vertices.contains(&g) {
                vertices.push(g);
                witnesses.push(pi.clone());
            }
        }
    }
    Ok(GradientHull { vertices, mode: HullMode::SampledInner, witnesses })
}

/// Heuristic perturbations: zero, `±δ` on every gate, and `samples` seeded
/// random draws from the grid `δ·{−64..64}/64`.
pub fn default_perturbations(c: &LinearCircuit, delta: &Rational, samples: usize, seed: u64) -> Vec<PerturbationVector> {
    let wires = c.perturbable_wires();
    let mut out = vec![PerturbationVector::with_bound(delta.clone())];
    for sign in [1i64, -1] {
        let mut pv = PerturbationVector::with_bound(delta.clone());
        for &w in &wires {
            pv.set(w, delta * Rational::from_integer(sign.into()));
        }
        out.push(pv);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let mut pv = PerturbationVector::with_bound(delta.clone());
        for &w in &wires {
            let k: i64 = rng.gen_range(-64..=64);
            pv.set(w, delta * Rational::new(k.into(), 64.into()));
        }
        out.push(pv);
    }
    out
}

/// Either approximation, by mode (sampled-inner uses [`default_perturbations`]).
pub fn circuit_gradient_hull(
    c: &LinearCircuit,
    y: &[Rational],
    delta: &Rational,
    mode: HullMode,
) -> Result<GradientHull, KktError> {
    match mode {
        HullMode::IntervalOuter => outer_hull(c, y, delta),
        HullMode::SampledInner => inner_hull(c, y, delta, &default_perturbations(c, delta, 32, 0)),
    }
}

/// Three-valued answer of [`check_2dlinear_kkt`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KktCheck {
    /// Convex weights over the sampled-inner vertices whose combination
    /// satisfies the ε-KKT conditions.
    YesWitnessed { weights: Vec<Rational>, hull: GradientHull },
    /// No point of the outer hull satisfies the conditions.
    NoCertified,
    Inconclusive,
}

impl KktCheck {
    pub fn label(&self) -> &'static str {
        match self {
            KktCheck::YesWitnessed { .. } => "yes-witnessed",
            KktCheck::NoCertified => "no-certified",
            KktCheck::Inconclusive => "inconclusive",
        }
    }
}

/// ε-KKT side conditions on a gradient `u` at `y ∈ [0,1]^m`.
pub fn kkt_box(y: &[Rational], eps: &Rational) -> (Vec<Option<Rational>>, Vec<Option<Rational>>) {
    let lower = y.iter().map(|v| if *v < Rational::one() { Some(-eps.clone()) } else { None }).collect();
    let upper = y.iter().map(|v| if v.is_positive() { Some(eps.clone()) } else { None }).collect();
    (lower, upper)
}

/// Definition-style ε-KKT check against the δ-generalized gradient, using
/// the given perturbations for the inner approximation.
pub fn check_2dlinear_kkt_with(
    c: &LinearCircuit,
    y: &[Rational],
    eps: &Rational,
    delta: &Rational,
    perturbations: &[PerturbationVector],
) -> Result<KktCheck, KktError> {
    let m = c.input_count();
    if y.len() != m || m > 2 {
        return Err(KktError::DimensionMismatch { expected: m.min(2), got: y.len() });
    }
    let (lower, upper) = kkt_box(y, eps);
    let inner = inner_hull(c, y, delta, perturbations)?;
    if let Some(weights) = convex_combination_in_box(&inner.vertices, &lower, &upper) {
        return Ok(KktCheck::YesWitnessed { weights, hull: inner });
    }
    let outer = outer_hull(c, y, delta)?;
    if convex_combination_in_box(&outer.vertices, &lower, &upper).is_none() {
        return Ok(KktCheck::NoCertified);
    }
    Ok(KktCheck::Inconclusive)
}

/// [`check_2dlinear_kkt_with`] using [`default_perturbations`].
pub fn check_2dlinear_kkt(
    c: &LinearCircuit,
    y: &[Rational],
    eps: &Rational,
    delta: &Rational,
) -> Result<KktCheck, KktError> {
    let pis = default_perturbations(c, delta, 32, 0);
    check_2dlinear_kkt_with(c, y, eps, delta, &pis)
}
