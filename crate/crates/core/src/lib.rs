//! Feenberg perturbation theory for finite N-level Hermitian problems.
//!
//! The Hamiltonian is `H = diag(ω) + λV`. Each eigenvalue is the fixed point
//! of `E = ω_τ0 + Δ_τ0τ0(E)`. The local self-energies Δ are continued
//! fractions over nested subspaces, memoized by excluded-level set.
//!
//! ```
//! use feenberg::{benchmark_problem, solve_eigenvalue, Level, SolverConfig};
//!
//! let p = benchmark_problem::<f64>(0.01);
//! let sol = solve_eigenvalue(&p, Level(1), None, &SolverConfig::default()).unwrap();
//! assert!((sol.energy - 0.07).abs() < 0.01);
//! ```
//!
//! Everything is generic over [`Real`] (`f32` or `f64`). The unsuffixed
//! aliases at the crate root fix the scalar to `f64`.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod continuation;
pub mod eigenstate;
pub mod error;
pub mod greens;
pub mod level;
pub mod linalg;
pub mod problem;
pub mod scalar;
pub mod series;
pub mod solver;

pub use continuation::{
    common_grid, sample_at, trace_all, trace_eigenpath, ContinuationConfig, EigenPath, NearCrossing, PathSample, PathStatus, PathValue,
    TraceSet, NEAR_CROSSING,
};
pub use eigenstate::{
    attach_state, build_eigenstate, build_eigenstate_series, composition_probabilities, energy_slope, general_term,
    general_term_permuted, EigenState, TermOrdering, TransitionPath, MAX_SERIES_LEVELS,
};
pub use error::{Error, Result};
pub use greens::{count_identities, propagator_det_ratio, CountIdentities, Order, ShiftedEnergyTable, DEFAULT_GUARD};
pub use level::{Level, SubspaceMask, MAX_LEVELS};
pub use linalg::{
    determinant, eig_hermitian_oracle, hermitian_from_polar, principal_submatrix, solve_linear, ComplexMatrix,
    HermitianEigen, HermitianMatrix, PolarEntry,
};
pub use problem::{benchmark_entries, benchmark_problem, SpectralProblem};
pub use scalar::{Real, C};
pub use series::{
    benchmark, benchmark_cell, benchmark_row, bwpt_energy, bwpt_map, fpt_energy, gmre, nearest_pairing,
    oracle_energies, resummation_partial_sums, rspt_coefficients, rspt_energy, BenchmarkRow, PerturbationOrder,
    Theory, FLOOR_EPS,
};
pub use solver::{
    feenberg_map, feenberg_map_order, pole_residual, regularity_check, solve_eigenvalue, steffensen_iterate,
    Acceleration, EigenSolution, FixedPoint, Regularity, SolverConfig,
};

pub type Complex64 = C<f64>;
pub type Problem = SpectralProblem<f64>;
pub type Hermitian = HermitianMatrix<f64>;
pub type Matrix = ComplexMatrix<f64>;
pub type Solution = EigenSolution<f64>;
pub type State = EigenState<f64>;
pub type Config = SolverConfig<f64>;
pub type Continuation = ContinuationConfig<f64>;
pub type Path = EigenPath<f64>;
pub type Trace = TraceSet<f64>;
pub type Row = BenchmarkRow<f64>;
pub type Table<'p> = ShiftedEnergyTable<'p, f64>;

pub type ProblemF32 = SpectralProblem<f32>;
pub type SolutionF32 = EigenSolution<f32>;
pub type ConfigF32 = SolverConfig<f32>;
