//! Solving and certification for box-constrained quadratic programs and
//! perturbed circuits: exact simplex, projected gradient descent, active-set
//! enumeration, LP rounding of ε-KKT points, and gradient-hull oracles.

mod error;
mod hull;
pub mod lp;
mod solve;

pub use error::KktError;
pub use hull::{
    check_2dlinear_kkt, check_2dlinear_kkt_with, circuit_gradient_hull, default_perturbations,
    inner_hull, kkt_box, outer_hull, GradientHull, HullMode, KktCheck, OUTER_SET_CAP,
};
pub use solve::{
    build_rounding_lp, compute_epsilon_gap, enumerate_exact_kkt, enumerate_exact_kkt_with_cap,
    lipschitz_bound, projected_gradient_solve, round_to_exact, RoundingResult, SolverConfig,
    DEFAULT_ENUMERATION_CAP,
};
