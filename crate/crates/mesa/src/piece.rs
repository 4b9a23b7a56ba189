use circuit_core::Rational;
use num_traits::{One, Zero};

/// Side length `ℓ` and boundary slope `Γ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MesaEnv {
    pub ell: Rational,
    pub gamma: Rational,
}

impl MesaEnv {
    pub fn new(ell: Rational, gamma: Rational) -> Self {
        assert!(ell > Rational::zero() && gamma > Rational::zero(), "ℓ and Γ must be positive");
        MesaEnv { ell, gamma }
    }

    /// `Γ = 12/ℓ`, the slope used by the construction.
    pub fn steep(ell: Rational) -> Self {
        let gamma = Rational::from_integer(12.into()) / &ell;
        MesaEnv::new(ell, gamma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Piece {
    Center,
    Right,
    Top,
    Left,
    Bottom,
}

impl Piece {
    pub const ALL: [Piece; 5] = [Piece::Center, Piece::Right, Piece::Top, Piece::Left, Piece::Bottom];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Piece::Center => "c",
            Piece::Right => "r",
            Piece::Top => "t",
            Piece::Left => "l",
            Piece::Bottom => "b",
        }
    }
}

/// Centre `p`, offsets `A = (a_c, a_r, a_t, a_l, a_b)` and gradient `g`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MesaParams {
    pub p: (Rational, Rational),
    pub a: [Rational; 5],
    pub g: (Rational, Rational),
}

impl MesaParams {
    pub fn uniform(p: (Rational, Rational), a: Rational, g: (Rational, Rational)) -> Self {
        MesaParams { p, a: std::array::from_fn(|_| a.clone()), g }
    }
}

/// Gradient of one piece.
pub fn piece_gradient(piece: Piece, m: &MesaParams, env: &MesaEnv) -> (Rational, Rational) {
    let (g1, g2) = (&m.g.0, &m.g.1);
    let gm = &env.gamma;
    match piece {
        Piece::Center => (g1.clone(), g2.clone()),
        Piece::Right => (g1 - gm, g2.clone()),
        Piece::Top => (g1.clone(), g2 - gm),
        Piece::Left => (g1 + gm, g2.clone()),
        Piece::Bottom => (g1.clone(), g2 + gm),
    }
}

/// Value of one piece at `x`. Boundary pieces agree with the centre piece
/// at the corner `p ± (ℓ/2, ℓ/2)` on their side.
pub fn piece_value(piece: Piece, x: &(Rational, Rational), m: &MesaParams, env: &MesaEnv) -> Rational {
    let half = &env.ell / Rational::from_integer(2.into());
    let a = &m.a[piece.index()];
    let (g1, g2) = (&m.g.0, &m.g.1);
    let (d1, d2) = (&x.0 - &m.p.0, &x.1 - &m.p.1);
    if piece == Piece::Center {
        return &d1 * g1 + &d2 * g2 + a;
    }
    let (k1, k2) = piece_gradient(piece, m, env);
    let gsum_half = (g1 + g2) * &half;
    match piece {
        Piece::Right | Piece::Top => (&d1 - &half) * k1 + (&d2 - &half) * k2 + gsum_half + a,
        _ => (&d1 + &half) * k1 + (&d2 + &half) * k2 - gsum_half + a,
    }
}

/// `M(x; p, A, g)`.
pub fn mesa_value(x: &(Rational, Rational), m: &MesaParams, env: &MesaEnv) -> Rational {
    mesa_argmin(x, m, env).1
}

/// The minimising piece (first in `Piece::ALL` order on ties), its value and
/// whether the minimum is attained strictly.
pub fn mesa_argmin(x: &(Rational, Rational), m: &MesaParams, env: &MesaEnv) -> (Piece, Rational, bool) {
    let mut best: Option<(Piece, Rational)> = None;
    let mut strict = true;
    for piece in Piece::ALL {
        let v = piece_value(piece, x, m, env);
        match &best {
            None => best = Some((piece, v)),
            Some((_, b)) if v < *b => {
                best = Some((piece, v));
                strict = true;
            }
            Some((_, b)) if v == *b => strict = false,
            _ => {}
        }
    }
    let (p, v) = best.expect("five pieces");
    (p, v, strict)
}

pub(crate) fn half() -> Rational {
    Rational::one() / Rational::from_integer(2.into())
}
