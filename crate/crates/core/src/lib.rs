//! Distributed resilient model-free adaptive control (DRMFAC) for asymmetric
//! bipartite consensus of nonlinear MIMO multi-agent systems on signed
//! digraphs, with Bernoulli denial-of-service attacks on the measurement
//! channels.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`]: signed digraphs, structural balance, leader reachability and
//!   the asymmetric (scaled) Laplacian.
//! * [`nabce`]: the neighbourhood asymmetric bipartite consensus error in its
//!   partition-branched, scaled and global matrix forms.
//! * [`attack`]: per-channel Bernoulli DoS masks and hold-last-value
//!   compensation.
//! * [`controller`]: the per-agent data-driven controller: Jacobian
//!   estimator, extended state observer and control update.
//! * [`plant`]: agent dynamics interface, the six-agent MIMO benchmark and
//!   reference schedules.
//! * [`sim`], [`metrics`], [`trace`]: the closed loop, summary metrics and the
//!   CSV trace format.
//! * [`config`], [`cli`]: JSON configuration and the command-line surface.

// `!(x > 0.0)` is deliberate: it also rejects NaN. Index loops walk several
// parallel arrays at once.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod attack;
pub mod cli;
pub mod config;
pub mod controller;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod nabce;
pub mod plant;
pub mod sim;
pub mod trace;

pub use error::{Error, Result};
