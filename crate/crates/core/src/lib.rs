//! Simulation, control and Bayesian tuning of a pneumatic-muscle arm.

pub mod bayesopt;
pub mod control;
pub mod gp;
pub mod kinematics;
pub mod plant;
pub mod trajgen;
pub mod tuner;
