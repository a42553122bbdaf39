//! Hybrid beamforming design for millimeter-wave MIMO integrated sensing and
//! communications.
//!
//! The pipeline designs the transmit beamformers of a dual-function
//! radar-communication base station so that the radiated beam pattern tracks
//! an objective radar pattern while every communication user keeps its SINR
//! above a threshold, and then splits the design into a unit-modulus analog
//! precoder and an unconstrained digital precoder.
//!
//! ```no_run
//! use hbf_isac::{altmin, factorize, metrics, model, pattern};
//!
//! let scenario = model::Scenario::baseline();
//! let channels = model::generate_channels(&scenario, &mut model::stage_rng(7, model::RngStage::Channels));
//! let pattern = pattern::PatternSpec::new(&scenario).unwrap();
//! let design = altmin::design_transmit_beam(
//!     &scenario,
//!     &channels,
//!     &pattern,
//!     &altmin::StopRule::design_default(),
//!     &Default::default(),
//!     &mut model::stage_rng(7, model::RngStage::PhaseInit),
//! )
//! .unwrap();
//! let factors = factorize::factorize(
//!     &design.beams,
//!     scenario.p_t,
//!     &altmin::StopRule::factorization_default(),
//!     &Default::default(),
//!     &mut model::stage_rng(7, model::RngStage::AnalogInit),
//! )
//! .unwrap();
//! let report = metrics::evaluate(&design, &factors, &channels, &pattern, &scenario).unwrap();
//! println!("mse without hbf {:.4}, with hbf {:.4}", report.mse_no_hbf, report.mse_hbf);
//! ```

pub mod altmin;
pub mod config;
pub mod conic;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod factorize;
pub mod metrics;
pub mod model;
pub mod pattern;
pub mod phase;

pub use error::{Error, Result};
pub use model::C64;
