//! Dyadic cascade model of the Navier–Stokes equations with
//! hyper-dissipation.
//!
//! The state is one real coefficient per dyadic cube of `[0,1]^d`. The
//! nonlinearity moves energy between a cube, its children and its
//! grandchildren; dissipation damps level `j` at rate `2^{2 alpha j}`.
//!
//! - [`lattice`]: cube indexing, cascade enumeration, Vitali subcovers and
//!   growth-exponent dimension estimates.
//! - [`dynamics`]: cascade operators, right-hand sides and norms.
//! - [`integrator`]: integrating-factor Runge–Kutta with adaptive steps.
//! - [`regularity`]: critical thresholds, bad cubes and their counts.
//! - [`experiment`]: configuration, initial data, runs and output files.

pub mod dynamics;
pub mod experiment;
pub mod integrator;
pub mod lattice;
pub mod numerics;
pub mod regularity;
pub mod rng;
