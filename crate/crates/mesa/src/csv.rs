//! `p1,p2,a,g1,g2` field tables and `x1,x2,value` heightmaps.

use std::collections::BTreeMap;

use circuit_core::rational::{fmt_rational, parse_rational};
use circuit_core::Rational;

use crate::error::MesaError;
use crate::field::{field_max, GridSpec, MesaField};
use crate::piece::MesaEnv;
use crate::sample::SampledField;

const HEADER: &str = "p1,p2,a,g1,g2";

pub fn write_field_csv(f: &SampledField) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for (k, a) in &f.a_table {
        let (p1, p2) = f.grid.point(k.0, k.1);
        let g = &f.g_table[k];
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_rational(&p1),
            fmt_rational(&p2),
            fmt_rational(a),
            fmt_rational(&g.0),
            fmt_rational(&g.1)
        ));
    }
    out
}

/// Parses a field table; every row's point must lie on `grid`.
pub fn parse_field_csv(text: &str, grid: GridSpec) -> Result<SampledField, MesaError> {
    let ell = grid.ell();
    let mut a_table = BTreeMap::new();
    let mut g_table = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (n == 0 && line == HEADER) {
            continue;
        }
        let err = |message: String| MesaError::Csv { line: n + 1, message };
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != 5 {
            return Err(err(format!("expected 5 columns, found {}", cells.len())));
        }
        let vals = cells
            .iter()
            .map(|c| parse_rational(c).map_err(|e| err(e.to_string())))
            .collect::<Result<Vec<Rational>, _>>()?;
        let idx = |v: &Rational| -> Result<usize, MesaError> {
            let k = v / &ell;
            if !k.is_integer() {
                return Err(err(format!("{} is not a grid coordinate", fmt_rational(v))));
            }
            let k: i64 = k.to_integer().try_into().map_err(|_| err("coordinate out of range".into()))?;
            if k < 0 || k as usize >= grid.side() {
                return Err(err("coordinate outside [0,1]".into()));
            }
            Ok(k as usize)
        };
        let key = (idx(&vals[0])?, idx(&vals[1])?);
        a_table.insert(key, vals[2].clone());
        g_table.insert(key, (vals[3].clone(), vals[4].clone()));
    }
    Ok(SampledField { grid, a_table, g_table })
}

/// Values of the grid maximum on a `samples × samples` lattice of `[0,1]²`.
pub fn heightmap_csv(field: &MesaField, env: &MesaEnv, samples: usize) -> Result<String, MesaError> {
    let mut out = String::from("x1,x2,value\n");
    let steps = samples.max(2) - 1;
    for i in 0..=steps {
        for j in 0..=steps {
            let x = (Rational::new(i.into(), steps.into()), Rational::new(j.into(), steps.into()));
            let v = field_max(&x, field, env)?;
            out.push_str(&format!("{},{},{}\n", fmt_rational(&x.0), fmt_rational(&x.1), fmt_rational(&v)));
        }
    }
    Ok(out)
}
