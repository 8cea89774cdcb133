//! Monte Carlo pricing and hedging of FX put options under permanent market
//! impact from a large trader.
//!
//! The pipeline simulates an unaffected exchange-rate process, distorts it
//! through a linear supply-curve order book driven by a postulated hedging
//! schedule, builds hedge-portfolio rewards on the distorted (quoted) process
//! and fits a quadratic-in-action Q-function backward in time with cubic
//! B-spline state features. The fitted model yields optimal hedges, a risk
//! adjusted price and the implied exchange-rate process the optimal hedges
//! would produce.
//!
//! Modules mirror the stages:
//!
//! - [`market`]: unaffected dynamics, supply curve, impact propagation, states.
//! - [`hedging`]: strategies, hedge portfolio, rewards, costs, fair price.
//! - [`features`]: clamped B-spline basis and state-action features.
//! - [`fqi`]: dataset, backward fitted Q-iteration, optimal actions, pricing.
//! - [`harness`]: experiment configuration, batches, presets and reports.

pub mod error;
pub mod features;
pub mod fqi;
pub mod grid;
pub mod harness;
pub mod hedging;
pub mod market;
pub mod numfmt;
pub mod rng;

pub use error::{Error, Result};
