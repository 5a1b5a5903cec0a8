//! Exact symbolic operator algebra and spectral numerics for weighted
//! (Carleman) estimates of third-order operators built from families of
//! first-order fields.
//!
//! The symbolic side works over Gaussian rationals, so every identity check
//! is exact: a reported residual is a real discrepancy, not roundoff. The
//! numeric side measures lower bounds for the weighted operators on
//! periodic grids.

pub mod builders;
pub mod catalog;
pub mod diffop;
pub mod error;
pub mod field;
mod fft;
pub mod grid;
pub mod harness;
pub mod hypotheses;
pub mod identities;
pub mod lambda;
pub mod parse;
pub mod report;
mod profiles;
pub mod scalar;
pub mod sysfile;
pub mod system;

pub use builders::{
    build_cdoubleprime, build_cprime, build_p1, build_p1_star, build_qj, build_qj_prime,
    carleman_decomposition, conjugation_cross_term, second_order_part, CarlemanDecomposition,
};
pub use catalog::{catalog, catalog_entry, catalog_ids, heisenberg, heisenberg_embedded, heisenberg_generators, kdv_1d, non_kdv, zk_2d, CatalogEntry, ExpectedVerdicts};
pub use diffop::{adjoint, DiffOp};
pub use error::{Error, Result};
pub use field::VectorField;
pub use grid::{
    apply_op, discretize, discretize_with, inner, sobolev_norm, weight_multiply, Grid,
    GridFunction, DEFAULT_PADDING_FRACTION, MAX_SPECTRAL_ORDER, MIN_PADDING_FRACTION,
    SUPPORT_LEAK_TOL, WEIGHT_EXP_LIMIT,
};
pub use harness::{
    carleman_ratio, gen_test_functions, rothschild_stein_check, run_sweep, solvability_ratio,
    SubellipticReport, SweepConfig, SweepEcho, SweepReport, Target, WeightSpec,
};
pub use hypotheses::{
    check_hypotheses, check_nondegeneracy, hormander_rank, verify_involutivity, HypothesisReport,
    Involutivity, Nondegeneracy, Region,
};
pub use identities::{
    verify_adjoint_expansion, verify_all, verify_conjugation, verify_qj_consistency,
    verify_skew_part, IdentityReport, IdentityStatus,
};
pub use lambda::{conjugate, LambdaOp};
pub use parse::{parse_expr, AliasTable};
pub use report::{emit_report, parse_report_csv, render_csv, render_summary, summary_path_for, CSV_HEADER};
pub use scalar::{GaussianRational, Reality, ScalarExpr, DEFAULT_EXPONENT_CAP};
pub use sysfile::{parse_system_file, read_system_file, render_system_file, SystemFile};
pub use system::{StructureCoeffs, SystemSpec};
