//! Numerical toolkit for population persistence under a moving climate envelope.
//!
//! The model is a reaction-diffusion equation in the frame of the shifting
//! habitat, `u_t - u_zz - c u_z = f(z, u)`, where the reaction is favourable
//! on a bounded patch and `-delta u` outside. The crate provides:
//!
//! * [`reaction`]: the nonlinearity catalog with exact antiderivatives,
//! * [`grid`]: uniform grids, nodal fields, and overflow-safe weighted norms,
//! * [`energy`]: the weighted energy functional and descent minimization,
//! * [`stationary`]: damped Newton for wave profiles plus continuation in `c`,
//! * [`evolution`]: IMEX time stepping with energy-dissipation diagnostics,
//! * [`spectral`]: principal eigenvalues and persistence speed bounds,
//! * [`lab`]: reproducible experiment drivers (sweeps, shape studies, demos).
//!
//! All weighted quantities use the substitution `v = e^{cz/2} u`, so the
//! weight `e^{cz}` itself never materializes; see [`grid::WeightedNorms`].

pub mod energy;
pub mod evolution;
pub mod grid;
pub mod lab;
pub mod linalg;
pub mod operator;
pub mod reaction;
pub mod spectral;
pub mod stationary;
pub mod validate;
