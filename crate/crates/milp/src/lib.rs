//! Mixed-integer linear models and the solvers used to train networks with
//! them: an in-memory IR with MPS/LP text formats, a bounded primal simplex
//! and a best-bound branch-and-bound over binary variables.

pub mod branch_bound;
mod lu;
pub mod lp_format;
pub mod model;
pub mod mps;
pub mod simplex;
pub mod solution;

pub use branch_bound::{export_node_log, solve_mip, solve_mip_with_start, MipParams, MipSolution, MipStatus};
pub use model::{ConstraintId, LinConstraint, LinExpr, ModelError, ModelIR, ModelWarning, Sense, VarId, VarKind, VarSpec};
pub use simplex::{solve_lp, LpParams, LpSolution, LpStatus};
