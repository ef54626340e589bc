//! Belief propagation and loop cluster expansions for finite tensor-network
//! states.
//!
//! A typical run prepares a ground state by simple update
//! ([`gauge_su::su_ground_state`]), builds the double-layer norm network
//! ([`bp::build_doubled`]), converges BP messages ([`bp::bp_iterate`]) and
//! then evaluates loop-cluster estimates of local observables
//! ([`estimator::ClusterEstimator`]) for a range of cluster sizes, which
//! [`extrapolate::extrapolate`] accelerates.

pub mod bp;
pub mod clusters;
pub mod error;
pub mod estimator;
pub mod extrapolate;
pub mod gauge_su;
pub mod labels;
pub mod models;
pub mod oracle;
pub mod tensor;
pub mod tngraph;

pub use error::{Error, Result};
