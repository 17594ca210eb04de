//! Safety-filtered reinforcement learning on a desk-scale 2D robot
//! simulator.
//!
//! The crate wires together: nominal/true robot dynamics with wind and
//! internal model error ([`dynamics`], [`disturbance`]), online residual
//! model learning on a minimal MLP engine ([`nn`], [`residual`]), a
//! piecewise-constant disturbance observer ([`dob`]), robust higher-order
//! control-barrier-function constraints ([`cbf`]), an exact active-set QP
//! safety filter ([`qpfilter`]), a PPO-Lagrangian agent ([`rl`]),
//! navigation environments ([`env`]), and the training/evaluation harness
//! ([`harness`]).

pub mod cbf;
pub mod disturbance;
pub mod dob;
pub mod dynamics;
pub mod env;
pub mod harness;
pub mod nn;
pub mod qpfilter;
pub mod residual;
pub mod rl;
