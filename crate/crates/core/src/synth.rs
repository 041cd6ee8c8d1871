//! Synthetic scenario generator with known ground truth.
//!
//! All randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`, a 64-bit
//! counter-based stream cipher generator) seeded with `seed_from_u64`, so a
//! script and seed reproduce byte-identical logs on every platform.
//!
//! Gaze rays start at the script's eye point and aim at the centre of the
//! scheduled AOI with Gaussian angular jitter. Moving to a different AOI
//! begins with a 40-60 ms straight-line sweep that replaces the start of
//! the new dwell; the sweep's samples are spaced evenly strictly between
//! the two targets. Flight traces follow the segment targets (or a linear
//! ramp) plus tracking-error sinusoids with a whole number of cycles per
//! segment, which makes the injected RMS exact.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{nearest_hit, Vec3};
use crate::ingest::{write_flight_log, write_gaze_log, wrap_heading};
use crate::model::{
    AoiModel, FlightSample, FlightTargets, GazeSample, InceptorAxis, Inceptors, Segment, OTH,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("unknown scenario '{name}' (valid: {})", valid.join(", "))]
    UnknownScenario { name: String, valid: Vec<String> },
    #[error("unknown AOI '{aoi}' in schedule of segment '{segment}'")]
    UnknownAoi { segment: String, aoi: String },
    #[error("schedule of segment '{segment}' covers {scheduled_ms} ms, segment lasts {segment_ms} ms")]
    ScheduleMismatch {
        segment: String,
        scheduled_ms: u64,
        segment_ms: u64,
    },
    #[error("segments must be contiguous and non-empty ('{0}')")]
    SegmentLayout(String),
    #[error("invalid script: {0}")]
    Invalid(String),
    #[error("no direction from the eye point misses every surface")]
    NoOthDirection,
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const PRESETS: [&str; 3] = ["nominal", "stall", "lowvis"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledDwell {
    pub aoi: String,
    pub dwell_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    pub freq_hz: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PupilModel {
    pub baseline_mm: f64,
    #[serde(default)]
    pub tones: Vec<Tone>,
    #[serde(default)]
    pub noise_sd_mm: f64,
}

/// Eyelid held at `eyelid_open` over `[t_start_ms, t_end_ms)`. Openings
/// below 0.1 are blinks and carry no pupil value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosureEpisode {
    pub t_start_ms: u64,
    pub t_end_ms: u64,
    pub eyelid_open: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackedChannel {
    AltitudeFt,
    AirspeedKt,
    HeadingDeg,
}

/// Tracking-error sinusoid completing `cycles` periods over the segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingError {
    pub channel: TrackedChannel,
    pub amplitude: f64,
    pub cycles: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InceptorTone {
    pub axis: InceptorAxis,
    pub freq_hz: f64,
    pub amplitude: f64,
}

/// Reference trajectory used where the segment has no target: values
/// ramp linearly from the first to the second entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlightProfile {
    pub altitude_ft: [f64; 2],
    pub airspeed_kt: [f64; 2],
    pub heading_deg: f64,
    pub throttle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentScript {
    pub segment: Segment,
    pub schedule: Vec<ScheduledDwell>,
    pub pupil: PupilModel,
    #[serde(default)]
    pub closures: Vec<ClosureEpisode>,
    pub profile: FlightProfile,
    #[serde(default)]
    pub tracking: Vec<TrackingError>,
    #[serde(default)]
    pub inceptors: Vec<InceptorTone>,
    #[serde(default)]
    pub inceptor_noise_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub name: String,
    pub seed: u64,
    pub gaze_rate_hz: f64,
    pub flight_rate_hz: f64,
    /// Radial RMS of the angular gaze jitter.
    pub jitter_deg: f64,
    pub saccade_ms: [u64; 2],
    pub eye_point: [f64; 3],
    pub segments: Vec<SegmentScript>,
}

impl ScenarioScript {
    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("script serializes")
    }

    pub fn segments(&self) -> Vec<Segment> {
        self.segments.iter().map(|s| s.segment.clone()).collect()
    }

    /// Empty script with the default rates and jitter.
    pub fn new(name: impl Into<String>, seed: u64) -> Self {
        Self {
            name: name.into(),
            seed,
            gaze_rate_hz: 40.0,
            flight_rate_hz: 20.0,
            jitter_deg: 0.3,
            saccade_ms: [40, 60],
            eye_point: [0.0; 3],
            segments: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentTruth {
    pub segment: Segment,
    pub schedule: Vec<ScheduledDwell>,
    /// Scheduled share of the segment per AOI, percent. Always has OTH.
    pub expected_pdt: BTreeMap<String, f64>,
    /// Dwells (after merging repeats, across segment borders) that start
    /// inside this segment.
    pub dwell_count: usize,
    pub fixation_tolerance: usize,
    pub pupil_tones: Vec<Tone>,
    pub tracking: Vec<TrackingError>,
    pub tracking_rms: BTreeMap<TrackedChannel, f64>,
    pub inceptor_tones: Vec<InceptorTone>,
    /// Share of the segment with the eyelid at most 30 % open.
    pub closure_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub scenario: String,
    pub seed: u64,
    pub gaze_rate_hz: f64,
    pub flight_rate_hz: f64,
    pub jitter_deg: f64,
    pub segments: Vec<SegmentTruth>,
}

impl GroundTruth {
    pub fn segment(&self, name: &str) -> Option<&SegmentTruth> {
        self.segments.iter().find(|s| s.segment.name == name)
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub gaze: Vec<GazeSample>,
    pub flight: Vec<FlightSample>,
    pub truth: GroundTruth,
    pub segments: Vec<Segment>,
}

impl Scenario {
    /// Writes `gaze.csv`, `flight.csv`, `segments.json` and `truth.json`.
    pub fn write_to(&self, dir: &Path) -> Result<(), SynthError> {
        std::fs::create_dir_all(dir)?;
        let mut g = Vec::new();
        write_gaze_log(&mut g, &self.gaze)?;
        std::fs::write(dir.join("gaze.csv"), g)?;
        let mut f = Vec::new();
        write_flight_log(&mut f, &self.flight)?;
        std::fs::write(dir.join("flight.csv"), f)?;
        std::fs::write(
            dir.join("segments.json"),
            serde_json::to_string_pretty(&self.segments)? + "\n",
        )?;
        std::fs::write(
            dir.join("truth.json"),
            serde_json::to_string_pretty(&self.truth)? + "\n",
        )?;
        Ok(())
    }
}

fn validate(script: &ScenarioScript, model: &AoiModel) -> Result<(), SynthError> {
    if !(script.gaze_rate_hz > 0.0 && script.flight_rate_hz > 0.0) {
        return Err(SynthError::Invalid("rates must be positive".into()));
    }
    if !(script.jitter_deg >= 0.0) || script.saccade_ms[0] > script.saccade_ms[1] {
        return Err(SynthError::Invalid("bad jitter or saccade range".into()));
    }
    let mut prev_end = None;
    for s in &script.segments {
        let seg = &s.segment;
        if seg.t_end_ms <= seg.t_start_ms || prev_end.is_some_and(|e| e != seg.t_start_ms) {
            return Err(SynthError::SegmentLayout(seg.name.clone()));
        }
        prev_end = Some(seg.t_end_ms);
        let total: u64 = s.schedule.iter().map(|d| d.dwell_ms).sum();
        if total != seg.duration_ms() {
            return Err(SynthError::ScheduleMismatch {
                segment: seg.name.clone(),
                scheduled_ms: total,
                segment_ms: seg.duration_ms(),
            });
        }
        for d in &s.schedule {
            if d.aoi != OTH && model.lookup(&d.aoi).is_none() {
                return Err(SynthError::UnknownAoi {
                    segment: seg.name.clone(),
                    aoi: d.aoi.clone(),
                });
            }
        }
    }
    if script.segments.is_empty() {
        return Err(SynthError::SegmentLayout("<none>".into()));
    }
    Ok(())
}

/// Direction from `eye` that misses every surface of the model.
fn oth_direction(model: &AoiModel, eye: [f64; 3]) -> Result<Vec3<f64>, SynthError> {
    const CANDIDATES: [[f64; 3]; 6] = [
        [-3.0, 0.5, 1.0],
        [3.0, 0.5, 1.0],
        [0.0, 3.0, 1.0],
        [0.0, -3.0, 1.0],
        [0.0, 0.0, -1.0],
        [0.0, 1.0, 0.0],
    ];
    for c in CANDIDATES {
        let d = Vec3::from(c).normalized().expect("non-zero");
        let probe = GazeSample {
            t_ms: 0,
            origin: eye,
            dir: d.into(),
            pupil_mm: None,
            eyelid_open: None,
            quality: 1.0,
            low_quality: false,
        };
        if nearest_hit(&probe, model).is_none() {
            return Ok(d);
        }
    }
    Err(SynthError::NoOthDirection)
}

fn target_direction(model: &AoiModel, aoi: &str, eye: Vec3<f64>, oth: Vec3<f64>) -> Vec3<f64> {
    if aoi == OTH {
        return oth;
    }
    let r = model.lookup(aoi).expect("validated");
    let (u, v) = r.center_uv();
    let p = Vec3::from(r.surface.point_at(u, v));
    (p - eye).normalized().expect("target differs from eye point")
}

fn perpendicular_basis(d: Vec3<f64>) -> (Vec3<f64>, Vec3<f64>) {
    let helper = if d.x.abs() < 0.9 {
        Vec3::new(1.0, 0.0, 0.0)
    } else {
        Vec3::new(0.0, 1.0, 0.0)
    };
    let p = d.cross(helper).normalized().expect("not parallel");
    (p, d.cross(p))
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Jitter with radial RMS `sigma_rad`, redrawn beyond three radial sigmas.
fn jittered(d: Vec3<f64>, sigma_rad: f64, rng: &mut ChaCha8Rng) -> Vec3<f64> {
    if sigma_rad == 0.0 {
        return d;
    }
    let (p, q) = perpendicular_basis(d);
    let axis_sd = sigma_rad / std::f64::consts::SQRT_2;
    loop {
        let (a, b) = (gauss(rng) * axis_sd, gauss(rng) * axis_sd);
        if a.hypot(b) <= 3.0 * sigma_rad {
            return (d + p * a.tan() + q * b.tan()).normalized().expect("near unit");
        }
    }
}

fn merged_schedule(script: &ScenarioScript) -> Vec<(String, u64, u64)> {
    let mut out: Vec<(String, u64, u64)> = Vec::new();
    for s in &script.segments {
        let mut t = s.segment.t_start_ms;
        for d in &s.schedule {
            if d.dwell_ms == 0 {
                continue;
            }
            match out.last_mut() {
                Some(last) if last.0 == d.aoi => last.2 = t + d.dwell_ms,
                _ => out.push((d.aoi.clone(), t, t + d.dwell_ms)),
            }
            t += d.dwell_ms;
        }
    }
    out
}

fn sample_times(t0: u64, t1: u64, rate_hz: f64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut k = 0u64;
    loop {
        let t = t0 + (k as f64 * 1000.0 / rate_hz).round() as u64;
        if t >= t1 {
            return out;
        }
        out.push(t);
        k += 1;
    }
}

fn closure_at(closures: &[ClosureEpisode], t: u64) -> Option<f64> {
    closures
        .iter()
        .find(|c| (c.t_start_ms..c.t_end_ms).contains(&t))
        .map(|c| c.eyelid_open)
}

fn tracked_base(seg: &SegmentScript, channel: TrackedChannel, frac: f64) -> f64 {
    let targets = seg.segment.targets.unwrap_or_default();
    let lerp = |r: [f64; 2]| r[0] + (r[1] - r[0]) * frac;
    match channel {
        TrackedChannel::AltitudeFt => targets.altitude_ft.unwrap_or_else(|| lerp(seg.profile.altitude_ft)),
        TrackedChannel::AirspeedKt => targets.airspeed_kt.unwrap_or_else(|| lerp(seg.profile.airspeed_kt)),
        TrackedChannel::HeadingDeg => targets.heading_deg.unwrap_or(seg.profile.heading_deg),
    }
}

fn tracked_value(seg: &SegmentScript, channel: TrackedChannel, t: u64) -> f64 {
    let s = &seg.segment;
    let frac = (t - s.t_start_ms) as f64 / s.duration_ms() as f64;
    let err: f64 = seg
        .tracking
        .iter()
        .filter(|e| e.channel == channel)
        .map(|e| e.amplitude * (2.0 * std::f64::consts::PI * e.cycles as f64 * frac).sin())
        .sum();
    tracked_base(seg, channel, frac) + err
}

/// Generates gaze and flight logs plus the ground-truth record.
pub fn generate(script: &ScenarioScript, model: &AoiModel) -> Result<Scenario, SynthError> {
    validate(script, model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(script.seed);
    let eye = Vec3::from(script.eye_point);
    let oth = oth_direction(model, script.eye_point)?;
    let sigma = script.jitter_deg.to_radians();
    let dwells = merged_schedule(script);
    let first = script.segments[0].segment.t_start_ms;
    let last = script.segments[script.segments.len() - 1].segment.t_end_ms;

    // Saccade length for every dwell after the first.
    let saccades: Vec<u64> = (0..dwells.len())
        .map(|i| {
            if i == 0 {
                0
            } else {
                rng.random_range(script.saccade_ms[0]..=script.saccade_ms[1])
            }
        })
        .collect();
    let targets: Vec<Vec3<f64>> = dwells
        .iter()
        .map(|d| target_direction(model, &d.0, eye, oth))
        .collect();

    let times = sample_times(first, last, script.gaze_rate_hz);
    let mut gaze = Vec::new();
    let mut di = 0usize;
    let mut si = 0usize;
    for (k, &t) in times.iter().enumerate() {
        while dwells[di].2 <= t {
            di += 1;
        }
        while script.segments[si].segment.t_end_ms <= t {
            si += 1;
        }
        let seg = &script.segments[si];
        let (_, start, _) = dwells[di];
        let dir = if di > 0 && t < start + saccades[di] {
            // The n sweep samples sit strictly between the two targets.
            let lo = times.partition_point(|&x| x < start);
            let n = times.partition_point(|&x| x < start + saccades[di]) - lo;
            let f = (k - lo + 1) as f64 / (n + 1) as f64;
            (targets[di - 1] * (1.0 - f) + targets[di] * f)
                .normalized()
                .unwrap_or(targets[di])
        } else {
            jittered(targets[di], sigma, &mut rng)
        };
        let ts = t as f64 / 1000.0;
        let noise = gauss(&mut rng) * seg.pupil.noise_sd_mm;
        let eyelid = closure_at(&seg.closures, t).unwrap_or(1.0);
        let pupil = if eyelid < 0.1 {
            None
        } else {
            let tones: f64 = seg
                .pupil
                .tones
                .iter()
                .map(|k| k.amplitude * (2.0 * std::f64::consts::PI * k.freq_hz * ts).sin())
                .sum();
            Some((seg.pupil.baseline_mm + tones + noise).clamp(1.0, 10.0))
        };
        gaze.push(GazeSample {
            t_ms: t,
            origin: script.eye_point,
            dir: dir.into(),
            pupil_mm: pupil,
            eyelid_open: Some(eyelid),
            quality: 1.0,
            low_quality: false,
        });
    }

    let mut flight = Vec::new();
    for seg in &script.segments {
        let s = &seg.segment;
        for t in sample_times(s.t_start_ms, s.t_end_ms, script.flight_rate_hz) {
            let ts = t as f64 / 1000.0;
            let mut inc = Inceptors {
                throttle: seg.profile.throttle,
                ..Default::default()
            };
            for axis in InceptorAxis::ALL {
                let v: f64 = seg
                    .inceptors
                    .iter()
                    .filter(|k| k.axis == axis)
                    .map(|k| k.amplitude * (2.0 * std::f64::consts::PI * k.freq_hz * ts).sin())
                    .sum::<f64>()
                    + gauss(&mut rng) * seg.inceptor_noise_sd;
                match axis {
                    InceptorAxis::Pitch => inc.pitch = v.clamp(-1.0, 1.0),
                    InceptorAxis::Roll => inc.roll = v.clamp(-1.0, 1.0),
                    InceptorAxis::Rudder => inc.rudder = v.clamp(-1.0, 1.0),
                    InceptorAxis::Throttle => inc.throttle = (inc.throttle + v).clamp(0.0, 1.0),
                }
            }
            let roll_err = inc.roll * 25.0;
            flight.push(FlightSample {
                t_ms: t,
                altitude_ft: tracked_value(seg, TrackedChannel::AltitudeFt, t),
                airspeed_kt: tracked_value(seg, TrackedChannel::AirspeedKt, t),
                heading_deg: wrap_heading(tracked_value(seg, TrackedChannel::HeadingDeg, t)),
                bank_deg: roll_err,
                pitch_deg: 2.0 + inc.pitch * 10.0,
                inceptors: inc,
            });
        }
    }

    let truth = ground_truth(script, &dwells);
    Ok(Scenario {
        gaze,
        flight,
        truth,
        segments: script.segments(),
    })
}

fn ground_truth(script: &ScenarioScript, dwells: &[(String, u64, u64)]) -> GroundTruth {
    let segments = script
        .segments
        .iter()
        .map(|s| {
            let seg = &s.segment;
            let dur = seg.duration_ms() as f64;
            let mut pdt: BTreeMap<String, f64> = BTreeMap::new();
            for d in &s.schedule {
                *pdt.entry(d.aoi.clone()).or_insert(0.0) += d.dwell_ms as f64 * 100.0 / dur;
            }
            pdt.entry(OTH.to_string()).or_insert(0.0);
            let dwell_count = dwells
                .iter()
                .filter(|d| seg.contains(d.1))
                .count();
            let mut rms: BTreeMap<TrackedChannel, f64> = BTreeMap::new();
            for e in &s.tracking {
                *rms.entry(e.channel).or_insert(0.0) += e.amplitude * e.amplitude / 2.0;
            }
            let has_target = |c: TrackedChannel| {
                let t = seg.targets.unwrap_or_default();
                match c {
                    TrackedChannel::AltitudeFt => t.altitude_ft.is_some(),
                    TrackedChannel::AirspeedKt => t.airspeed_kt.is_some(),
                    TrackedChannel::HeadingDeg => t.heading_deg.is_some(),
                }
            };
            let tracking_rms = rms
                .into_iter()
                .filter(|(c, _)| has_target(*c))
                .map(|(c, v)| (c, v.sqrt()))
                .collect();
            let closed_ms: u64 = s
                .closures
                .iter()
                .filter(|c| c.eyelid_open <= 0.3)
                .map(|c| c.t_end_ms.min(seg.t_end_ms).saturating_sub(c.t_start_ms.max(seg.t_start_ms)))
                .sum();
            SegmentTruth {
                segment: seg.clone(),
                schedule: s.schedule.clone(),
                expected_pdt: pdt,
                dwell_count,
                fixation_tolerance: dwell_count.div_ceil(10),
                pupil_tones: s.pupil.tones.clone(),
                tracking: s.tracking.clone(),
                tracking_rms,
                inceptor_tones: s.inceptors.clone(),
                closure_fraction: closed_ms as f64 / dur,
            }
        })
        .collect();
    GroundTruth {
        scenario: script.name.clone(),
        seed: script.seed,
        gaze_rate_hz: script.gaze_rate_hz,
        flight_rate_hz: script.flight_rate_hz,
        jitter_deg: script.jitter_deg,
        segments,
    }
}

const QUANTUM_MS: u64 = 50;

/// Builds a dwell schedule from percentage shares. Each AOI's time is
/// split into chunks of about `chunk_ms`, chunks are interleaved round
/// robin in the listed order, and OTH receives whatever the listed shares
/// leave over. Repeats that end up adjacent are merged.
pub fn schedule_from_shares(duration_ms: u64, shares: &[(&str, f64)], chunk_ms: u64) -> Vec<ScheduledDwell> {
    let mut totals: Vec<(String, u64)> = shares
        .iter()
        .filter(|(a, _)| *a != OTH)
        .map(|&(a, p)| {
            let q = (p / 100.0 * duration_ms as f64 / QUANTUM_MS as f64).round() as u64;
            (a.to_string(), q * QUANTUM_MS)
        })
        .collect();
    let used: u64 = totals.iter().map(|t| t.1).sum();
    assert!(used <= duration_ms, "shares exceed 100 %");
    let oth_pos = shares.iter().position(|(a, _)| *a == OTH).unwrap_or(totals.len());
    totals.insert(oth_pos.min(totals.len()), (OTH.to_string(), duration_ms - used));

    let chunked: Vec<Vec<u64>> = totals
        .iter()
        .map(|(_, ms)| {
            let quanta = ms / QUANTUM_MS;
            if quanta == 0 {
                return Vec::new();
            }
            let n = ((*ms as f64 / chunk_ms as f64).round() as u64).clamp(1, quanta);
            (0..n)
                .map(|i| (quanta / n + u64::from(i < quanta % n)) * QUANTUM_MS)
                .collect()
        })
        .collect();
    let rounds = chunked.iter().map(Vec::len).max().unwrap_or(0);
    let mut out: Vec<ScheduledDwell> = Vec::new();
    for r in 0..rounds {
        for (k, chunks) in chunked.iter().enumerate() {
            let Some(&ms) = chunks.get(r) else { continue };
            match out.last_mut() {
                Some(last) if last.aoi == totals[k].0 => last.dwell_ms += ms,
                _ => out.push(ScheduledDwell {
                    aoi: totals[k].0.clone(),
                    dwell_ms: ms,
                }),
            }
        }
    }
    out
}

struct SegPlan<'a> {
    name: &'a str,
    dur_s: u64,
    targets: Option<FlightTargets>,
    profile: FlightProfile,
    shares: &'a [(&'a str, f64)],
    tracking: Vec<TrackingError>,
}

fn tracking(alt: f64, spd: f64, hdg: f64) -> Vec<TrackingError> {
    vec![
        TrackingError { channel: TrackedChannel::AltitudeFt, amplitude: alt, cycles: 3 },
        TrackingError { channel: TrackedChannel::AltitudeFt, amplitude: alt / 3.0, cycles: 11 },
        TrackingError { channel: TrackedChannel::AirspeedKt, amplitude: spd, cycles: 4 },
        TrackingError { channel: TrackedChannel::HeadingDeg, amplitude: hdg, cycles: 2 },
    ]
}

fn profile(alt: [f64; 2], spd: [f64; 2], throttle: f64) -> FlightProfile {
    FlightProfile {
        altitude_ft: alt,
        airspeed_kt: spd,
        heading_deg: 90.0,
        throttle,
    }
}

fn level_targets(alt: f64) -> Option<FlightTargets> {
    Some(FlightTargets {
        altitude_ft: Some(alt),
        airspeed_kt: Some(130.0),
        heading_deg: Some(90.0),
    })
}

const TAKEOFF: &[(&str, f64)] = &[
    ("OTW", 55.0),
    ("PFD.A1", 12.0),
    ("PFD.A3", 12.0),
    ("EICAS.A1", 8.0),
    ("GEAR", 4.0),
    (OTH, 9.0),
];

const CLIMB: &[(&str, f64)] = &[
    ("OTW", 30.0),
    ("PFD.A2", 20.0),
    ("PFD.A3", 18.0),
    ("PFD.A1", 10.0),
    ("EICAS.A1", 8.0),
    ("PFD.A5", 6.0),
    (OTH, 8.0),
];

const DESCENT: &[(&str, f64)] = &[
    ("OTW", 40.0),
    ("PFD.A2", 15.0),
    ("PFD.A3", 12.0),
    ("PFD.A1", 10.0),
    ("EICAS.A1", 6.0),
    ("PFD.A6", 5.0),
    ("GEAR", 3.0),
    (OTH, 9.0),
];

/// Level segment shares following the nominal scan proportions: OTW,
/// attitude, altitude, heading, airspeed and torque first.
const NOMINAL_LEVEL: &[(&str, f64)] = &[
    ("OTW", 30.6),
    ("PFD.A3", 10.8),
    ("PFD.A2", 7.75),
    ("PFD.A5", 4.43),
    ("PFD.A1", 3.87),
    ("EICAS.A1", 2.97),
    ("PFD.A4", 3.0),
    ("PFD.A6", 3.0),
    ("PFD.A7", 3.0),
    ("EICAS.A2", 4.0),
    ("EICAS.A3", 2.0),
    ("EICAS.A4", 2.0),
    ("EICAS.A5", 2.0),
    ("EICAS.A6", 2.0),
    ("RTU", 3.0),
    ("AUTOPILOT", 3.0),
    ("ISIS", 3.0),
    ("GEAR", 1.5),
    (OTH, 8.08),
];

const STALL_LEVEL: &[(&str, f64)] = &[
    ("OTW", 15.7),
    ("PFD.A3", 11.7),
    ("PFD.A2", 11.8),
    ("PFD.A5", 9.5),
    ("PFD.A1", 3.55),
    ("EICAS.A1", 4.86),
    ("PFD.A4", 2.8),
    ("PFD.A6", 3.54),
    ("EICAS.A3", 0.5),
    ("PFD.A7", 4.0),
    ("EICAS.A2", 5.0),
    ("EICAS.A4", 2.0),
    ("EICAS.A6", 2.0),
    ("RTU", 2.0),
    ("AUTOPILOT", 3.0),
    ("ISIS", 4.0),
    (OTH, 14.05),
];

const STALL_RECOVERY: &[(&str, f64)] = &[
    ("PFD.A4", 15.0),
    ("PFD.A6", 15.0),
    ("EICAS.A1", 12.0),
    ("PFD.A1", 10.0),
    ("PFD.A2", 10.0),
    ("PFD.A3", 10.0),
    ("OTW", 10.0),
    ("EICAS.A3", 8.0),
    (OTH, 10.0),
];

const LOWVIS_LEVEL: &[(&str, f64)] = &[
    ("OTW", 6.0),
    ("PFD.A3", 18.0),
    ("PFD.A2", 16.0),
    ("PFD.A5", 8.0),
    ("PFD.A1", 2.5),
    ("EICAS.A1", 6.0),
    ("PFD.A4", 4.0),
    ("PFD.A6", 6.0),
    ("PFD.A7", 4.0),
    ("EICAS.A2", 5.0),
    ("EICAS.A3", 2.0),
    ("EICAS.A4", 2.0),
    ("EICAS.A6", 2.0),
    ("RTU", 2.0),
    ("AUTOPILOT", 4.0),
    ("ISIS", 6.0),
    (OTH, 6.5),
];

const LOWVIS_TRANSIT: &[(&str, f64)] = &[
    ("PFD.A3", 25.0),
    ("PFD.A2", 20.0),
    ("PFD.A1", 12.0),
    ("PFD.A5", 10.0),
    ("EICAS.A1", 10.0),
    ("OTW", 8.0),
    ("ISIS", 7.0),
    (OTH, 8.0),
];

fn inceptor_tones(gain: f64) -> Vec<InceptorTone> {
    vec![
        InceptorTone { axis: InceptorAxis::Pitch, freq_hz: 0.2, amplitude: 0.05 * gain },
        InceptorTone { axis: InceptorAxis::Pitch, freq_hz: 0.7, amplitude: 0.02 * gain },
        InceptorTone { axis: InceptorAxis::Roll, freq_hz: 0.3, amplitude: 0.06 * gain },
        InceptorTone { axis: InceptorAxis::Roll, freq_hz: 1.1, amplitude: 0.015 * gain },
        InceptorTone { axis: InceptorAxis::Rudder, freq_hz: 0.1, amplitude: 0.02 * gain },
        InceptorTone { axis: InceptorAxis::Throttle, freq_hz: 0.05, amplitude: 0.03 * gain },
    ]
}

fn build(name: &str, seed: u64, plans: Vec<SegPlan<'_>>, pupil: PupilModel, gain: f64, closures: &[ClosureEpisode]) -> ScenarioScript {
    let mut script = ScenarioScript::new(name, seed);
    let mut t = 0u64;
    for p in plans {
        let dur = p.dur_s * 1000;
        let segment = Segment {
            name: p.name.to_string(),
            t_start_ms: t,
            t_end_ms: t + dur,
            targets: p.targets,
        };
        let seg_closures = closures
            .iter()
            .filter(|c| c.t_start_ms >= t && c.t_start_ms < t + dur)
            .copied()
            .collect();
        script.segments.push(SegmentScript {
            segment,
            schedule: schedule_from_shares(dur, p.shares, 5000),
            pupil: pupil.clone(),
            closures: seg_closures,
            profile: p.profile,
            tracking: p.tracking,
            inceptors: inceptor_tones(gain),
            inceptor_noise_sd: 0.002,
        });
        t += dur;
    }
    script
}

fn blinks(every_s: u64, until_s: u64) -> Vec<ClosureEpisode> {
    (1..until_s / every_s)
        .map(|k| {
            let t = k * every_s * 1000 + 300;
            ClosureEpisode { t_start_ms: t, t_end_ms: t + 150, eyelid_open: 0.0 }
        })
        .collect()
}

/// Preset scripts: `nominal`, `stall` and `lowvis`.
pub fn preset(name: &str, seed: u64) -> Result<ScenarioScript, SynthError> {
    let takeoff = |shares| SegPlan {
        name: "takeoff",
        dur_s: 40,
        targets: None,
        profile: profile([0.0, 500.0], [0.0, 110.0], 0.9),
        shares,
        tracking: vec![],
    };
    let climb = |shares| SegPlan {
        name: "climb",
        dur_s: 60,
        targets: None,
        profile: profile([500.0, 4000.0], [110.0, 130.0], 0.85),
        shares,
        tracking: vec![],
    };
    let descent = |shares| SegPlan {
        name: "descent",
        dur_s: 60,
        targets: None,
        profile: profile([4000.0, 1500.0], [130.0, 120.0], 0.4),
        shares,
        tracking: vec![],
    };
    let script = match name {
        "nominal" => build(
            name,
            seed,
            vec![
                takeoff(TAKEOFF),
                climb(CLIMB),
                SegPlan {
                    name: "level1",
                    dur_s: 300,
                    targets: level_targets(4000.0),
                    profile: profile([4000.0; 2], [130.0; 2], 0.6),
                    shares: NOMINAL_LEVEL,
                    tracking: tracking(30.0, 3.0, 2.0),
                },
                descent(DESCENT),
            ],
            PupilModel {
                baseline_mm: 4.0,
                tones: vec![
                    Tone { freq_hz: 0.08, amplitude: 0.06 },
                    Tone { freq_hz: 0.3, amplitude: 0.05 },
                ],
                noise_sd_mm: 0.02,
            },
            1.0,
            &blinks(20, 460),
        ),
        "stall" => build(
            name,
            seed,
            vec![
                takeoff(TAKEOFF),
                climb(CLIMB),
                SegPlan {
                    name: "level1",
                    dur_s: 300,
                    targets: level_targets(6000.0),
                    profile: profile([6000.0; 2], [130.0; 2], 0.65),
                    shares: STALL_LEVEL,
                    tracking: tracking(80.0, 4.0, 4.0),
                },
                SegPlan {
                    name: "level2",
                    dur_s: 120,
                    targets: level_targets(4000.0),
                    profile: profile([4000.0; 2], [130.0; 2], 0.3),
                    shares: STALL_RECOVERY,
                    tracking: tracking(150.0, 12.0, 5.0),
                },
                descent(DESCENT),
            ],
            PupilModel {
                baseline_mm: 4.3,
                tones: vec![
                    Tone { freq_hz: 0.08, amplitude: 0.12 },
                    Tone { freq_hz: 0.3, amplitude: 0.04 },
                ],
                noise_sd_mm: 0.02,
            },
            1.8,
            &blinks(25, 580),
        ),
        "lowvis" => {
            let mut closures = blinks(15, 460);
            closures.push(ClosureEpisode { t_start_ms: 200_000, t_end_ms: 203_000, eyelid_open: 0.25 });
            closures.push(ClosureEpisode { t_start_ms: 330_000, t_end_ms: 332_000, eyelid_open: 0.2 });
            build(
                name,
                seed,
                vec![
                    takeoff(LOWVIS_TRANSIT),
                    climb(LOWVIS_TRANSIT),
                    SegPlan {
                        name: "level1",
                        dur_s: 300,
                        targets: level_targets(4000.0),
                        profile: profile([4000.0; 2], [130.0; 2], 0.6),
                        shares: LOWVIS_LEVEL,
                        tracking: tracking(45.0, 8.0, 3.0),
                    },
                    descent(LOWVIS_TRANSIT),
                ],
                PupilModel {
                    baseline_mm: 3.9,
                    tones: vec![
                        Tone { freq_hz: 0.08, amplitude: 0.07 },
                        Tone { freq_hz: 0.3, amplitude: 0.05 },
                    ],
                    noise_sd_mm: 0.02,
                },
                1.2,
                &closures,
            )
        }
        _ => {
            return Err(SynthError::UnknownScenario {
                name: name.to_string(),
                valid: PRESETS.iter().map(|s| s.to_string()).collect(),
            })
        }
    };
    Ok(script)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::default_cockpit;

    #[test]
    fn shares_cover_duration() {
        let s = schedule_from_shares(60_000, &[("OTW", 30.6), ("PFD.A3", 10.8)], 5000);
        assert_eq!(s.iter().map(|d| d.dwell_ms).sum::<u64>(), 60_000);
        assert!(s.windows(2).all(|w| w[0].aoi != w[1].aoi));
        let otw: u64 = s.iter().filter(|d| d.aoi == "OTW").map(|d| d.dwell_ms).sum();
        assert_eq!(otw, 18_350);
    }

    #[test]
    fn presets_are_valid() {
        let m = default_cockpit();
        for p in PRESETS {
            let s = preset(p, 1).unwrap();
            validate(&s, &m).unwrap();
            let back = ScenarioScript::from_json(&s.to_json()).unwrap();
            assert_eq!(back, s);
        }
        let e = preset("cruise", 1).unwrap_err().to_string();
        assert!(e.contains("nominal") && e.contains("lowvis"));
    }

    #[test]
    fn stall_has_six_thousand_feet() {
        let s = preset("stall", 3).unwrap();
        assert!(s
            .segments
            .iter()
            .any(|g| g.segment.targets.and_then(|t| t.altitude_ft) == Some(6000.0)));
    }

    #[test]
    fn schedule_mismatch_rejected() {
        let mut s = ScenarioScript::new("x", 0);
        s.segments.push(SegmentScript {
            segment: Segment::new("a", 0, 10_000),
            schedule: vec![ScheduledDwell { aoi: "OTW".into(), dwell_ms: 3000 }],
            pupil: PupilModel { baseline_mm: 4.0, tones: vec![], noise_sd_mm: 0.0 },
            closures: vec![],
            profile: profile([0.0; 2], [0.0; 2], 0.5),
            tracking: vec![],
            inceptors: vec![],
            inceptor_noise_sd: 0.0,
        });
        assert!(matches!(
            generate(&s, &default_cockpit()),
            Err(SynthError::ScheduleMismatch { scheduled_ms: 3000, .. })
        ));
        s.segments[0].schedule[0] = ScheduledDwell { aoi: "PFD.A9".into(), dwell_ms: 10_000 };
        assert!(matches!(generate(&s, &default_cockpit()), Err(SynthError::UnknownAoi { .. })));
    }
}
