//! Adaptive mechanism design in matrix-game social dilemmas.
//!
//! Independent sigmoid learners repeatedly play a social dilemma and follow
//! their own reward gradients, which in the base game drags them toward
//! defection. A planning agent observes each round's actions and hands out
//! bounded extra rewards. It trains those extras by looking one step ahead
//! through the learners' parameter updates: the gradient of next-step social
//! welfare with respect to the planner's parameters flows through the
//! learners' gradient-ascent rule. Exact closed-form gradients and sampled
//! policy-gradient estimates are both supported, as are a revenue-neutral
//! variant, a cost on handed-out rewards, and an opponent model for when the
//! learners' parameters are hidden.

pub mod agents;
pub mod config;
pub mod engine;
pub mod error;
pub mod exact;
pub mod game;
pub mod opponent;
pub mod planner;
pub mod report;
pub mod reproduce;
pub mod verify;

pub use error::{Error, Result};
