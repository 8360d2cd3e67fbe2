//! Joint communication-sensing transmit beamforming.
//!
//! A base station with an N-antenna uniform linear array serves K single-antenna
//! downlink users while shaping its transmit beampattern toward a set of sensing
//! targets. Communication beams are reused for sensing: dedicated virtual beams
//! are superimposed on the user signals and removed at each receiver through
//! successive interference cancellation, so they add no effective interference.
//!
//! The design problem minimizes the squared mismatch between the transmit
//! beampattern and a rectangular desired pattern, subject to per-user minimum
//! rates, cancellation-feasibility conditions for the virtual beams, and a total
//! power budget. The nonconvex beamformer program is lifted to covariance form
//! (semidefinite relaxation) and the rank-one requirement is restored by a
//! penalized successive convex approximation loop.
//!
//! Crate layout:
//! - [`scenario`]: configuration, unit conversions, random channel generation
//! - [`array`]: steering vectors, beampatterns, desired patterns, matching error
//! - [`conic`]: small modeling layer over a sparse conic (SDP) interior-point solver
//! - [`linalg`]: Hermitian eigendecomposition helpers
//! - [`schemes`]: lifted program builders for the proposed design and benchmarks
//! - [`sca`]: the penalty-based successive convex approximation driver
//! - [`evaluate`]: beamformer recovery, achieved rates, feasibility audits
//! - [`experiment`]: Monte Carlo sweeps, aggregation, artifact output
//! - [`cli`]: command-line front end

// The conic solver links LAPACK/BLAS through the system OpenBLAS.
use openblas_src as _;

pub mod array;
pub mod cli;
pub mod conic;
pub mod evaluate;
pub mod experiment;
pub mod linalg;
pub mod scenario;
pub mod sca;
pub mod schemes;

/// Complex double-precision matrix, the working type for channels and covariances.
pub type CMat = nalgebra::DMatrix<num_complex::Complex<f64>>;
/// Complex double-precision column vector.
pub type CVec = nalgebra::DVector<num_complex::Complex<f64>>;
