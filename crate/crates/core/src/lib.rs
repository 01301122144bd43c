//! Pedestrian motion prediction over a road graph.
//!
//! Gaussian beliefs are propagated along straight walkable edges with an
//! LQR-tracked, linearized unicycle model; predictions branch at nodes with
//! several outgoing edges. A grid value-iteration baseline and an evaluation
//! harness (signed error statistics, covariance agreement, runtime) are
//! included for comparison.

pub mod config;
pub mod dynamics;
pub mod evaluation;
pub mod lqr;
pub mod map;
pub mod plot;
pub mod predictor;
pub mod rl_baseline;
pub mod roadgraph;
pub mod scenario;
