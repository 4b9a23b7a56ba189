//! The averaged sub-grid components `g_i` and the field `f̃ = max_i g_i`.

use circuit_core::rational::{fmt_rational, pow2, rat, round_dyadic};
use circuit_core::{LinearCircuit, Rational};
use mesa::sample::{gradient_bits, offset_bits};
use mesa::{GridSpec, MesaEnv, MesaField, PointParams, SampledField};
use num_traits::{One, Signed, Zero};

use crate::binary::{
    build_affine, build_extract_bits, build_minterms, decode_terms, lookup_from_minterms, BinaryVar, GadgetBuilder,
};
use crate::boolean::{BooleanCircuit, LookupTable};
use crate::error::GadgetError;

/// Number of shifted extractions averaged per piece.
pub const K_SAMPLES: usize = 12;

/// Offsets `a^i` of the four sub-grids, in units of `2^{−n}`.
pub const SUBGRID_OFFSETS: [(usize, usize); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];

/// Lookup data on the rescaled grid `G̃ = {0, 2^{−n}, …, 1 − 2^{−n}}²`;
/// index `(i, j)` is the same as on the original grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MesaTables {
    pub bits: u32,
    pub a_bits: u32,
    pub g_bits: u32,
    /// `ã(p) = a(p)`, row-major over `(i, j)`.
    pub a: Vec<Rational>,
    /// `g̃(p) ≈ g(p)/(1 − 2^{−n})`, rounded to `g_bits` fractional bits.
    pub g: Vec<(Rational, Rational)>,
}

impl MesaTables {
    fn side(&self) -> usize {
        1 << self.bits
    }

    fn at(&self, i: usize, j: usize) -> usize {
        i * self.side() + j
    }

    /// `1 − 2^{−n}`.
    pub fn shrink(&self) -> Rational {
        Rational::one() - pow2(-(self.bits as i64))
    }

    /// Tabulates `a_circ` and `g_circ` (inputs: the `n` bits of `i` then of
    /// `j`; outputs: `a` bits, and `g₁⁺, g₁⁻, g₂⁺, g₂⁻` banks), checks the
    /// ranges `a ∈ [0.45, 0.55]`, `g ∈ [−0.01, 0.01]²`, and rescales `g`.
    pub fn from_circuits(a_circ: &BooleanCircuit, g_circ: &BooleanCircuit, n: u32) -> Result<Self, GadgetError> {
        let inputs = 2 * n as usize;
        if a_circ.input_count != inputs || g_circ.input_count != inputs {
            return Err(GadgetError::Hypothesis(format!("lookup circuits must read {inputs} bits")));
        }
        if g_circ.outputs.len() % 4 != 0 {
            return Err(GadgetError::Hypothesis("g circuit must output four equal banks".into()));
        }
        let a_bits = a_circ.outputs.len() as u32;
        let g_bits = (g_circ.outputs.len() / 4) as u32;
        let at = LookupTable::from_circuit(a_circ);
        let gt = LookupTable::from_circuit(g_circ);
        let value = |bits: &[bool]| -> Rational {
            bits.iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .fold(Rational::zero(), |s, (k, _)| s + pow2(-(k as i64) - 1))
        };
        let side = 1usize << n;
        let s = Rational::one() - pow2(-(n as i64));
        let mut a = Vec::with_capacity(side * side);
        let mut g = Vec::with_capacity(side * side);
        for r in 0..side * side {
            let av = value(&at.rows[r]);
            if av < rat(45, 100) || av > rat(55, 100) {
                return Err(GadgetError::Hypothesis(format!("a at row {r} is {}", fmt_rational(&av))));
            }
            let gw = g_bits as usize;
            let bank = |k: usize| value(&gt.rows[r][k * gw..(k + 1) * gw]);
            let (g1, g2) = (bank(0) - bank(1), bank(2) - bank(3));
            for v in [&g1, &g2] {
                if v.abs() > rat(1, 100) {
                    return Err(GadgetError::Hypothesis(format!("g at row {r} leaves [−0.01, 0.01]")));
                }
            }
            a.push(av);
            g.push((round_dyadic(&(g1 / &s), g_bits), round_dyadic(&(g2 / &s), g_bits)));
        }
        Ok(MesaTables { bits: n, a_bits, g_bits, a, g })
    }
}

fn bits_of(v: &Rational, width: u32) -> Result<Vec<bool>, GadgetError> {
    let scaled = v.abs() * pow2(width as i64);
    if !scaled.is_integer() || scaled >= pow2(width as i64) {
        return Err(GadgetError::WidthBudget(format!("{} does not fit {width} fractional bits", fmt_rational(v))));
    }
    let int = scaled.to_integer();
    Ok((0..width).map(|k| int.bit((width - 1 - k) as u64)).collect())
}

/// Boolean circuits for `a` and `g` of a sampled field, as truth-table
/// lookups over the grid index bits.
pub fn tables_from_sampled_field(f: &SampledField) -> Result<(BooleanCircuit, BooleanCircuit), GadgetError> {
    let n = f.grid.bits as usize;
    let ell = f.grid.ell();
    let (fa, fg) = (offset_bits(&ell), gradient_bits(&ell));
    let side = 1usize << n;
    let mut a_rows = Vec::with_capacity(side * side);
    let mut g_rows = Vec::with_capacity(side * side);
    for r in 0..side * side {
        let key = (r / side, r % side);
        let a = f.a_table.get(&key).ok_or(mesa::MesaError::MissingGridPoint { i: key.0, j: key.1 })?;
        let g = &f.g_table[&key];
        a_rows.push(bits_of(a, fa)?);
        let mut row = Vec::with_capacity(4 * fg as usize);
        for v in [&g.0, &g.1] {
            let mag = bits_of(v, fg)?;
            let zero = vec![false; fg as usize];
            if v.is_negative() {
                row.extend(zero);
                row.extend(mag);
            } else {
                row.extend(mag);
                row.extend(zero);
            }
        }
        g_rows.push(row);
    }
    let a_circ = LookupTable::new(2 * n, fa as usize, a_rows)?.to_circuit();
    let g_circ = LookupTable::new(2 * n, 4 * fg as usize, g_rows)?.to_circuit();
    Ok((a_circ, g_circ))
}

/// Which sub-grid a component covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubgridSpec {
    /// 1..=4
    pub index: usize,
}

impl SubgridSpec {
    pub fn offset(&self) -> (usize, usize) {
        SUBGRID_OFFSETS[self.index - 1]
    }
}

/// Shift `t_j = (9/8 − j/(8k))·2^{−n}`.
pub fn shift(n: u32, j: usize) -> Rational {
    (rat(9, 8) - Rational::new(j.into(), (8 * K_SAMPLES).into())) * pow2(-(n as i64))
}

/// Extraction threshold `L = 1/(24k·2^n)`.
pub fn extraction_l(n: u32) -> Rational {
    Rational::new(1.into(), (24 * K_SAMPLES).into()) * pow2(-(n as i64))
}

/// Bad regions `R_j` (in rescaled coordinates) of one coordinate of one
/// component: where an extraction may fail under `max|π| ≤ L²/2`.
pub fn bad_regions(n: u32, spec: SubgridSpec, coord: usize) -> Vec<(usize, Rational, Rational)> {
    if n < 2 {
        return Vec::new();
    }
    let l = extraction_l(n);
    let a = [spec.offset().0, spec.offset().1][coord];
    let base = pow2(-(n as i64)) * Rational::from_integer(a.into());
    let mut out = Vec::new();
    for m in 0..(1usize << (n - 1)) {
        let centre = &base + Rational::from_integer(m.into()) * pow2(1 - n as i64);
        for j in 1..=K_SAMPLES {
            let t = shift(n, j);
            out.push((j, &centre - &t - &l / Rational::from_integer(2.into()), &centre - &t + rat(3, 2) * &l));
        }
    }
    out
}

/// The bad regions of every component and coordinate are pairwise
/// disjoint, and each lies within `[c − (9/8)2^{−n}, c − (7/8)2^{−n}]` of
/// its sub-grid centre `c`.
pub fn bad_regions_disjoint(n: u32) -> bool {
    if n < 2 {
        return true;
    }
    let unit = pow2(-(n as i64));
    for index in 1..=4 {
        let spec = SubgridSpec { index };
        for coord in 0..2 {
            let mut regions = bad_regions(n, spec, coord);
            let a = [spec.offset().0, spec.offset().1][coord];
            for (idx, (_, lo, hi)) in regions.iter().enumerate() {
                let m = idx / K_SAMPLES;
                let c = &unit * Rational::from_integer(a.into()) + Rational::from_integer(m.into()) * pow2(1 - n as i64);
                if *lo < &c - rat(9, 8) * &unit || *hi > &c - rat(7, 8) * &unit {
                    return false;
                }
            }
            regions.sort_by(|x, y| x.1.cmp(&y.1));
            if regions.windows(2).any(|w| w[0].2 >= w[1].1) {
                return false;
            }
        }
    }
    true
}

/// Wires of one extraction and its five pieces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeWires {
    pub y: (BinaryVar, BinaryVar),
    pub pieces: [usize; 5],
    /// `min(1, P_d)`.
    pub capped: [usize; 5],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentWires {
    pub spec: SubgridSpec,
    pub decodes: Vec<DecodeWires>,
    /// Averaged pieces `p^i_d`.
    pub averaged: [usize; 5],
    pub output: usize,
}

/// The five pieces for grid point `y`, offset `a` and gradient `g`.
///
/// `P_c` is one `Affine` call. The boundary pieces differ from it by the
/// exact affine term `∓Γ(x_l − y_l ∓ ℓ/2)`, which involves no perturbable
/// gate, so every piece inherits the centre piece's offset.
#[allow(clippy::too_many_arguments)]
pub fn build_mesa_pieces(
    b: &mut GadgetBuilder,
    x: (usize, usize),
    y: &(BinaryVar, BinaryVar),
    a: &BinaryVar,
    g: &(BinaryVar, BinaryVar),
    ell: &Rational,
    gamma: &Rational,
) -> [usize; 5] {
    let pc = build_affine(b, x.0, x.1, &y.0, &y.1, a, &g.0, &g.1);
    let half = ell / Rational::from_integer(2.into());
    let boundary = |b: &mut GadgetBuilder, coord: usize, sign: i64| {
        // sign = −1: P_c − Γ(x − y − ℓ/2); sign = +1: P_c + Γ(x − y + ℓ/2)
        let s = Rational::from_integer(sign.into());
        let (xw, yv) = if coord == 0 { (x.0, &y.0) } else { (x.1, &y.1) };
        let mut terms = decode_terms(yv, &-(&s * gamma));
        terms.push((Rational::one(), pc));
        terms.push((&s * gamma, xw));
        b.lin(terms, gamma * &half)
    };
    let pr = boundary(b, 0, -1);
    let pt = boundary(b, 1, -1);
    let pl = boundary(b, 0, 1);
    let pb = boundary(b, 1, 1);
    [pc, pr, pt, pl, pb]
}

/// One averaged sub-grid component `g_i`, reading rescaled inputs `x̃`.
pub fn build_subgrid_component(
    b: &mut GadgetBuilder,
    spec: SubgridSpec,
    x: (usize, usize),
    tables: &MesaTables,
    gamma_t: &Rational,
) -> ComponentWires {
    let n = tables.bits;
    let nb = (n - 1) as usize;
    let unit = pow2(-(n as i64));
    let l = extraction_l(n);
    let (a1, a2) = spec.offset();
    let (one, zero) = (b.constant(Rational::one()), b.constant(Rational::zero()));
    let sub = 1usize << nb;
    // Truth tables restricted to this sub-grid, indexed by the extracted bits.
    let mut a_rows = Vec::with_capacity(sub * sub);
    let mut g_rows = Vec::with_capacity(sub * sub);
    let (fa, fg) = (tables.a_bits, tables.g_bits);
    for r in 0..sub * sub {
        let (m1, m2) = (r / sub, r % sub);
        let idx = tables.at(2 * m1 + a1, 2 * m2 + a2);
        a_rows.push(bits_of(&tables.a[idx], fa).expect("table a fits its width"));
        let mut row = Vec::with_capacity(4 * fg as usize);
        for v in [&tables.g[idx].0, &tables.g[idx].1] {
            let mag = bits_of(v, fg).expect("table g fits its width");
            let zeros = vec![false; fg as usize];
            if v.is_negative() {
                row.extend(zeros);
                row.extend(mag);
            } else {
                row.extend(mag);
                row.extend(zeros);
            }
        }
        g_rows.push(row);
    }
    let a_table = LookupTable { in_bits: 2 * nb, out_bits: fa as usize, rows: a_rows };
    let g_table = LookupTable { in_bits: 2 * nb, out_bits: 4 * fg as usize, rows: g_rows };

    let mut decodes = Vec::with_capacity(K_SAMPLES);
    for j in 1..=K_SAMPLES {
        let t = shift(n, j);
        let mut ys = Vec::with_capacity(2);
        for (coord, a_off) in [(x.0, a1), (x.1, a2)] {
            let c = &t - &unit * Rational::from_integer(a_off.into());
            let v = b.lin(vec![(Rational::one(), coord)], c);
            let ext = build_extract_bits(b, v, nb, &l);
            let mut plus = ext.bits.plus;
            plus.push(if a_off == 1 { one } else { zero });
            ys.push(BinaryVar { int_bits: 0, minus: vec![zero; plus.len()], plus });
        }
        let y = (ys[0].clone(), ys[1].clone());
        let in_bits: Vec<usize> = y.0.plus[..nb].iter().chain(&y.1.plus[..nb]).copied().collect();
        let minterms = build_minterms(b, &in_bits);
        let a_out = lookup_from_minterms(b, &minterms, &a_table);
        let g_out = lookup_from_minterms(b, &minterms, &g_table);
        let w = fg as usize;
        let av = BinaryVar { int_bits: 0, plus: a_out, minus: vec![zero; fa as usize] };
        let g1 = BinaryVar { int_bits: 0, plus: g_out[0..w].to_vec(), minus: g_out[w..2 * w].to_vec() };
        let g2 = BinaryVar { int_bits: 0, plus: g_out[2 * w..3 * w].to_vec(), minus: g_out[3 * w..].to_vec() };
        let pieces = build_mesa_pieces(b, x, &y, &av, &(g1, g2), &unit, gamma_t);
        let capped = pieces.map(|p| b.min(one, p));
        decodes.push(DecodeWires { y, pieces, capped });
    }
    let inv_k = Rational::new(1.into(), K_SAMPLES.into());
    let averaged: [usize; 5] = std::array::from_fn(|d| {
        let terms = decodes.iter().map(|dw| (inv_k.clone(), dw.capped[d])).collect();
        b.lin(terms, Rational::zero())
    });
    let m4 = b.min(averaged[3], averaged[4]);
    let m3 = b.min(averaged[2], m4);
    let m2 = b.min(averaged[1], m3);
    let output = b.min(averaged[0], m2);
    ComponentWires { spec, decodes, averaged, output }
}

/// A built mesa field.
#[derive(Debug, Clone)]
pub struct MesaCircuit {
    pub circuit: LinearCircuit,
    pub delta: Rational,
    pub delta_prime: Rational,
    pub grid: GridSpec,
    /// Original-domain `ℓ` and `Γ`.
    pub env: MesaEnv,
    pub k: usize,
    pub tables: MesaTables,
    pub a_circ: BooleanCircuit,
    pub g_circ: BooleanCircuit,
    /// `x̃ = (1 − 2^{−n})x`.
    pub scaled_inputs: (usize, usize),
    pub components: Vec<ComponentWires>,
    /// `f̃` before the final truncation.
    pub field: usize,
}

impl MesaCircuit {
    /// `ℓ̃ = 2^{−n}`.
    pub fn ell_rescaled(&self) -> Rational {
        pow2(-(self.grid.bits as i64))
    }

    /// `Γ̃ = Γ/(1 − 2^{−n})`.
    pub fn gamma_rescaled(&self) -> Rational {
        &self.env.gamma / self.tables.shrink()
    }

    pub fn extraction_l(&self) -> Rational {
        extraction_l(self.grid.bits)
    }

    /// The mesa field on the original grid that this circuit computes
    /// exactly at `π = 0`: offsets `ã(p)` and gradients `(1 − 2^{−n})·g̃(p)`.
    pub fn reference_field(&self) -> MesaField {
        let s = self.tables.shrink();
        let mut f = MesaField::new(self.grid);
        for (i, j) in self.grid.indices() {
            let idx = self.tables.at(i, j);
            let a = self.tables.a[idx].clone();
            let g = (&self.tables.g[idx].0 * &s, &self.tables.g[idx].1 * &s);
            f.insert(i, j, PointParams { a: std::array::from_fn(|_| a.clone()), g });
        }
        f
    }

    pub fn manifest_json(&self) -> serde_json::Value {
        serde_json::json!({
            "n": self.grid.bits,
            "ell": fmt_rational(&self.env.ell),
            "Gamma": fmt_rational(&self.env.gamma),
            "delta": fmt_rational(&self.delta),
            "delta_prime": fmt_rational(&self.delta_prime),
            "k": self.k,
            "L": fmt_rational(&self.extraction_l()),
            "a_bits": self.tables.a_bits,
            "g_bits": self.tables.g_bits,
            "gates": self.circuit.gates().len(),
        })
    }
}

/// `δ = min(δ'/11, L²/2)` with `L = 1/(24k·2^n)`.
pub fn field_delta(n: u32, delta_prime: &Rational) -> Rational {
    let l = extraction_l(n);
    let a = delta_prime / Rational::from_integer(11.into());
    let b = &l * &l / Rational::from_integer(2.into());
    if a < b { a } else { b }
}

/// The full circuit over `(x₁, x₂) ∈ [0,1]²`: rescale, four components,
/// `max(g₁, max(g₂, max(g₃, g₄)))`, then a final trunc-linear output gate.
pub fn build_mesa_field(
    a_circ: &BooleanCircuit,
    g_circ: &BooleanCircuit,
    n: u32,
    env: &MesaEnv,
    delta_prime: &Rational,
) -> Result<MesaCircuit, GadgetError> {
    let grid = GridSpec::new(n)?;
    if env.ell != grid.ell() {
        return Err(GadgetError::Hypothesis(format!("ℓ must be 1/(2^{n} − 1)")));
    }
    if &env.gamma * &env.ell < Rational::from_integer(12.into()) {
        return Err(GadgetError::Hypothesis("Γ must be at least 12/ℓ".into()));
    }
    if !delta_prime.is_positive() {
        return Err(GadgetError::Hypothesis("δ' must be positive".into()));
    }
    let tables = MesaTables::from_circuits(a_circ, g_circ, n)?;
    let s = tables.shrink();
    let gamma_t = &env.gamma / &s;
    let mut b = GadgetBuilder::new(2);
    let x1 = b.lin(vec![(s.clone(), 1)], Rational::zero());
    let x2 = b.lin(vec![(s.clone(), 2)], Rational::zero());
    let components: Vec<ComponentWires> = (1..=4)
        .map(|index| build_subgrid_component(&mut b, SubgridSpec { index }, (x1, x2), &tables, &gamma_t))
        .collect();
    let m34 = b.max(components[2].output, components[3].output);
    let m234 = b.max(components[1].output, m34);
    let field = b.max(components[0].output, m234);
    let out = b.tl(vec![(Rational::one(), field)], Rational::zero());
    let circuit = b.finish(out)?;
    Ok(MesaCircuit {
        circuit,
        delta: field_delta(n, delta_prime),
        delta_prime: delta_prime.clone(),
        grid,
        env: env.clone(),
        k: K_SAMPLES,
        tables,
        a_circ: a_circ.clone(),
        g_circ: g_circ.clone(),
        scaled_inputs: (x1, x2),
        components,
        field,
    })
}
