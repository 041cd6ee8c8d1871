//! Eye-gaze, pupil and flight-telemetry analytics for cockpit evaluation.
//!
//! Numeric routines in [`geometry`], [`ingest`], [`pupil`], [`perf`] and
//! [`stats`] are generic over [`Real`]; the aliases below fix them to `f64`
//! or `f32`.

pub mod analysis;
pub mod geometry;
pub mod ingest;
pub mod model;
pub mod perf;
pub mod pupil;
pub mod report;
pub mod scalar;
pub mod scan;
pub mod stats;
pub mod synth;

pub use model::{
    load_aoi_model, AoiModel, DwellVisit, Fixation, FlightSample, GazeSample, Segment, OTH,
};
pub use scalar::Real;

pub type Vec3f64 = geometry::Vec3<f64>;
pub type Vec3f32 = geometry::Vec3<f32>;
pub type Quadf64 = geometry::Quad<f64>;
pub type Quadf32 = geometry::Quad<f32>;

pub type Spectrumf64 = pupil::Spectrum<f64>;
pub type Spectrumf32 = pupil::Spectrum<f32>;
pub type BandPowerf64 = pupil::BandPowerResult<f64>;
pub type BandPowerf32 = pupil::BandPowerResult<f32>;
pub type ButterworthHighpassf64 = pupil::ButterworthHighpass<f64>;
pub type ButterworthHighpassf32 = pupil::ButterworthHighpass<f32>;
pub type UniformSeriesf64 = ingest::UniformSeries<f64>;
pub type UniformSeriesf32 = ingest::UniformSeries<f32>;

pub type Piwf64 = perf::PiwResult<f64>;
pub type Piwf32 = perf::PiwResult<f32>;

pub type AnovaResultf64 = stats::AnovaResult<f64>;
pub type AnovaResultf32 = stats::AnovaResult<f32>;
pub type TukeyResultf64 = stats::TukeyResult<f64>;
pub type TukeyResultf32 = stats::TukeyResult<f32>;
pub type TTestResultf64 = stats::TTestResult<f64>;
pub type TTestResultf32 = stats::TTestResult<f32>;
