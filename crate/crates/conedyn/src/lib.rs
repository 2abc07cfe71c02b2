//! Numerics for linear random dynamical systems in finite dimension:
//! rank-k cone geometry, Lyapunov exponents, dominated-splitting
//! extraction, co-invariant cone construction and automated verification
//! of contraction/domination conditions on sampled orbits.

pub mod checks;
pub mod cocycle;
pub mod cone;
pub mod error;
pub mod linalg;
pub mod scaled;
pub mod scenario;
pub mod splitting;

pub use checks::{ConditionId, Verdict};
pub use cocycle::{BaseSystem, CocycleSpec, ExponentReport, OrbitTrace};
pub use cone::{ConePair, ConeRankK};
pub use error::{Error, Result};
pub use linalg::{
    gap_distance, make_splitting, make_subspace, operator_norm, separation_index, LinearMap,
    NumericsConfig, RealVector, SeparationTarget, Splitting, Subspace,
};
pub use splitting::{ChiFunction, ConeFamily, SplittingFamily};
