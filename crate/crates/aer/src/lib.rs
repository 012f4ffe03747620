//! Asymptotic-expansion toolkit for a singularly perturbed reaction–
//! advection–diffusion model with a moving interior transition layer:
//!
//! * [`asymptotics`] — zero-order asymptotic solution (regular branches,
//!   front dynamics, layer profile);
//! * [`fvm`] — conservative finite-volume reference solver for the full PDE;
//! * [`inversion`] — source reconstruction from one-time-slice noisy data
//!   (noise model, layer exclusion, smoothing splines, shape-constrained
//!   least squares);
//! * [`bounds`] — a posteriori error bounds over admissible polytopes and
//!   pointwise error envelopes;
//! * [`lp`] — small dense exact-pivot simplex used by the bounds machinery;
//! * [`io`] — CSV serialization of the artifact types.

pub mod asymptotics;
pub mod bounds;
pub mod inversion;
pub mod fvm;
pub mod io;
pub mod lp;
pub mod source;
