//! Cascading failures in cross-holding financial networks.
//!
//! The crate models company market values as a discrete-time piecewise
//! affine system, checks the sign and stability conditions under which
//! failures cannot propagate, estimates cascade sizes on large random
//! networks and synthesizes feedback-feedforward investment controls by
//! linear programming.

pub mod analysis;
pub mod control;
pub mod dynamics;
pub mod estimate;
pub mod harness;
pub mod lp;
pub mod network;
pub mod numerics;
