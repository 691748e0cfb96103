//! Position-error bounds for RIS-assisted mmWave localization and RIS phase
//! design that minimizes them.
//!
//! The numerical core is generic over the float type ([`Real`], implemented
//! for `f32` and `f64`); the aliases below fix it to `f64`.

// `!(x > 0)` is deliberate throughout: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beamforming;
pub mod channel;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod fim;
pub mod geometry;
pub mod scalar;
pub mod validation;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Position = geometry::Position3D<f64>;
pub type Layout = geometry::RisLayout<f64>;
pub type Geometry = geometry::ScenarioGeometry<f64>;
pub type Transform = geometry::TransformMatrix<f64>;
pub type Array = channel::ArrayConfig<f64>;
pub type Gains = channel::PathGains<f64>;
pub type Phases = channel::PhaseVector<f64>;
pub type Pilot = channel::PilotMatrix<f64>;
pub type Params = fim::ParamVector<f64>;
pub type Kappa = fim::KappaTensor<f64>;
pub type Fim = fim::PositionFim<f64>;
pub type Gdm = beamforming::GdmConfig<f64>;
pub type Trace = beamforming::OptimizationTrace<f64>;
pub type Scenario = beamforming::Scenario<f64>;
pub type Config = experiments::ScenarioConfig;
