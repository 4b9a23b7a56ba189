//! Mesa functions: minima of five affine pieces around a grid centre, and
//! the maximum of such mesas over a grid.
//!
//! Everything is exact rational arithmetic. The circuit realisation lives in
//! the `gadgets` crate; this crate is the reference it is checked against.

pub mod csv;
pub mod error;
pub mod field;
pub mod piece;
pub mod sample;

pub use csv::{heightmap_csv, parse_field_csv, write_field_csv};
pub use error::MesaError;
pub use field::{field_gradient, field_max, field_max_with_argmax, GridSpec, MesaField, PointParams};
pub use piece::{mesa_argmin, mesa_value, piece_gradient, piece_value, MesaEnv, MesaParams, Piece};
pub use sample::{
    check_field_assumptions, check_mesa_field_assumptions, sample_field_from_target, FieldReport, SampledField,
    SmoothTarget, Violation,
};
