use std::collections::BTreeMap;

use circuit_core::Rational;
use num_traits::{One, Signed, ToPrimitive};

use crate::error::MesaError;
use crate::piece::{mesa_argmin, piece_gradient, MesaEnv, MesaParams, Piece};

/// Grid `G = {0, ℓ, …, 1}²` with `ℓ = 1/(2^n − 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub bits: u32,
}

/// Full enumeration is used up to this many bits.
pub const FULL_ENUMERATION_BITS: u32 = 6;

impl GridSpec {
    pub fn new(bits: u32) -> Result<Self, MesaError> {
        if bits == 0 || bits > 62 {
            return Err(MesaError::BadGrid);
        }
        Ok(GridSpec { bits })
    }

    /// Points per axis, `2^n`.
    pub fn side(&self) -> usize {
        1usize << self.bits
    }

    pub fn ell(&self) -> Rational {
        Rational::one() / Rational::from_integer(((1i64 << self.bits) - 1).into())
    }

    pub fn point(&self, i: usize, j: usize) -> (Rational, Rational) {
        let ell = self.ell();
        (&ell * Rational::from_integer(i.into()), ell * Rational::from_integer(j.into()))
    }

    /// Index of the grid coordinate nearest to `t`, clamped to the grid.
    pub fn nearest_index(&self, t: &Rational) -> usize {
        let scaled = t / self.ell();
        let r = scaled.round();
        if r.is_negative() {
            0
        } else {
            r.to_integer().to_usize().unwrap_or(usize::MAX).min(self.side() - 1)
        }
    }

    pub fn indices(&self) -> impl Iterator<Item = (usize, usize)> {
        let s = self.side();
        (0..s).flat_map(move |i| (0..s).map(move |j| (i, j)))
    }

    /// Grid neighbours `(i', j')` with `|i − i'|, |j − j'| ≤ radius`, including `(i, j)`.
    pub fn neighbourhood(&self, i: usize, j: usize, radius: usize) -> Vec<(usize, usize)> {
        let s = self.side();
        let lo = |v: usize| v.saturating_sub(radius);
        let hi = |v: usize| (v + radius).min(s - 1);
        (lo(i)..=hi(i)).flat_map(|a| (lo(j)..=hi(j)).map(move |b| (a, b))).collect()
    }
}

/// Per-point mesa data: five offsets and a gradient.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointParams {
    pub a: [Rational; 5],
    pub g: (Rational, Rational),
}

/// Mesa parameters for (possibly a subset of) the grid points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MesaField {
    pub grid: GridSpec,
    pub entries: BTreeMap<(usize, usize), PointParams>,
}

impl MesaField {
    pub fn new(grid: GridSpec) -> Self {
        MesaField { grid, entries: BTreeMap::new() }
    }

    pub fn insert(&mut self, i: usize, j: usize, params: PointParams) {
        self.entries.insert((i, j), params);
    }

    pub fn params(&self, i: usize, j: usize) -> Result<MesaParams, MesaError> {
        let e = self.entries.get(&(i, j)).ok_or(MesaError::MissingGridPoint { i, j })?;
        Ok(MesaParams { p: self.grid.point(i, j), a: e.a.clone(), g: e.g.clone() })
    }

    /// Grid points whose mesas can be the maximum at `x`.
    ///
    /// Small grids are enumerated in full. Larger ones with `Γℓ ≥ 12` use
    /// the 3×3 block around the nearest grid point: every other mesa is
    /// `≤ 0` there, which is below the maximum for any field with offsets in
    /// `[0.4, 0.6]`.
    fn candidates(&self, x: &(Rational, Rational), env: &MesaEnv) -> Vec<(usize, usize)> {
        let steep = &env.gamma * &env.ell >= Rational::from_integer(12.into());
        if self.grid.bits <= FULL_ENUMERATION_BITS || !steep {
            self.grid.indices().collect()
        } else {
            let (i, j) = (self.grid.nearest_index(&x.0), self.grid.nearest_index(&x.1));
            self.grid.neighbourhood(i, j, 1)
        }
    }
}

/// Result of evaluating the grid maximum at one point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldEval {
    pub value: Rational,
    pub argmax: (usize, usize),
    pub piece: Piece,
    /// Both the maximising mesa and its minimising piece are unique.
    pub strict: bool,
}

/// `f(x) = max_p M(x; p, A^p, g^p)`.
pub fn field_max(x: &(Rational, Rational), field: &MesaField, env: &MesaEnv) -> Result<Rational, MesaError> {
    Ok(field_max_with_argmax(x, field, env)?.value)
}

pub fn field_max_with_argmax(
    x: &(Rational, Rational),
    field: &MesaField,
    env: &MesaEnv,
) -> Result<FieldEval, MesaError> {
    let mut best: Option<FieldEval> = None;
    for (i, j) in field.candidates(x, env) {
        let m = field.params(i, j)?;
        let (piece, value, strict_piece) = mesa_argmin(x, &m, env);
        match &mut best {
            None => best = Some(FieldEval { value, argmax: (i, j), piece, strict: strict_piece }),
            Some(b) if value > b.value => *b = FieldEval { value, argmax: (i, j), piece, strict: strict_piece },
            Some(b) if value == b.value => b.strict = false,
            _ => {}
        }
    }
    Ok(best.expect("grids are non-empty"))
}

/// Gradient of `f` at `x`, or `None` when the maximising mesa or its
/// minimising piece is tied (treated as a possible kink).
pub fn field_gradient(
    x: &(Rational, Rational),
    field: &MesaField,
    env: &MesaEnv,
) -> Result<Option<(Rational, Rational)>, MesaError> {
    let e = field_max_with_argmax(x, field, env)?;
    if !e.strict {
        return Ok(None);
    }
    let m = field.params(e.argmax.0, e.argmax.1)?;
    Ok(Some(piece_gradient(e.piece, &m, env)))
}

