//! Mixed-integer linear programming: model builder, simplex and branch-and-bound.

pub mod bnb;
pub mod lpfile;
pub mod model;
pub mod simplex;

pub use bnb::{solve_mip, solve_mip_with_hint, MipOptions, MipSolution, MipStatus};
pub use lpfile::write_lp;
pub use model::{secant_breakpoints, secant_value, LinExpr, MipModel, Row, Sense, Var, VarKind};
pub use simplex::{dual_objective, solve_lp, solve_lp_with, Basis, LpOptions, LpResult, LpStatus, Simplex};
