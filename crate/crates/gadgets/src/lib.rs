//! Gadgets that realise a robust mesa field as a linear arithmetic circuit.
//!
//! The layers, bottom up: binary variables and their decoding, bit
//! extraction from a continuous value, simulation of NOT/AND circuits,
//! multiplication of a continuous value by a binary one, affine mesa
//! pieces, and finally the averaged sub-grid components whose maximum is
//! the field.

pub mod arith;
pub mod binary;
pub mod boolean;
pub mod error;
pub mod field;

pub use arith::{build_binary_arith, BinExpr, WidthBudget};
pub use binary::{
    build_affine, build_bit_multiply, build_cont_times_bin, build_decode, build_extract_bits, build_lookup,
    lower_boolean, BinaryVar, Extraction, GadgetBuilder,
};
pub use boolean::{parse_bool, serialize_bool, BoolBuilder, BoolGate, BooleanCircuit, LookupTable};
pub use error::GadgetError;
pub use field::{
    bad_regions, bad_regions_disjoint, build_mesa_field, build_mesa_pieces, build_subgrid_component,
    tables_from_sampled_field, MesaCircuit, MesaTables, SubgridSpec, K_SAMPLES,
};
