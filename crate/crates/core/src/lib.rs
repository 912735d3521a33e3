//! Simulation of SLE traces with the Ninomiya-Victoir splitting of the
//! backward Loewner equation, and Monte Carlo experiments on the error of
//! one-step stochastic Taylor approximations of the same equation.
//!
//! Module map:
//!
//! * [`halfplane`]: upper half-plane points and the branch-correct square root,
//! * [`brownian`]: seeded Brownian paths with bridge refinement,
//! * [`vf_algebra`]: exact compositions of the Loewner vector fields,
//! * [`iter_integrals`]: iterated integrals of the space-time path `(t, B)`,
//! * [`schemes`]: split flows, NV, Euler and Taylor steps, reference solver,
//! * [`trace`]: adaptive trace construction and SVG rendering,
//! * [`experiments`]: reproducible scaling and moment experiments,
//! * [`cli`]: the `sle-nv` command line.

// `!(x > 0.0)` is how NaN gets rejected along with the bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod brownian;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod halfplane;
pub mod iter_integrals;
pub mod rng;
pub mod schemes;
pub mod stats;
pub mod trace;
pub mod vf_algebra;

pub use error::{Error, Result};
pub use halfplane::{sqrt_h, HalfPlanePoint};
