//! Link-mixture autoregressive models for spatio-temporal infection counts.
//!
//! Counts follow a negative binomial whose mean adds an autoregressive
//! term, a spatial term over neighbouring areas and an endemic term. The
//! autoregressive and spatial coefficients mix an unbounded log link with a
//! bounded link under a period-specific weight. The crate covers ingestion,
//! spatial weights, priors, an adaptive Metropolis-within-Gibbs sampler,
//! scoring, one-step forecasts and simulation.

pub mod error;
pub mod forecast;
pub mod graph;
pub mod io;
pub mod model;
pub mod posterior;
pub mod priors;

pub use error::{Error, Result};
pub mod sampler;
pub mod scoring;
pub mod simulate;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/model.md")]
    struct Model;
    #[doc = include_str!("../../../book/src/spatial.md")]
    struct Spatial;
    #[doc = include_str!("../../../book/src/sampler.md")]
    struct Sampler;
    #[doc = include_str!("../../../book/src/scoring.md")]
    struct Scoring;
    #[doc = include_str!("../../../book/src/forecasting.md")]
    struct Forecasting;
    #[doc = include_str!("../../../book/src/simulation.md")]
    struct Simulation;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
