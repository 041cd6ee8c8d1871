//! Flight-performance and control-strategy metrics.
//!
//! Pilot inceptor workload and power frequency are reconstructions: the
//! former summarizes stick activity as the RMS deflection rate
//! ("aggressiveness") and the fraction of time the inceptor is moving
//! ("duty cycle"); the latter is the power-weighted mean frequency of
//! inceptor activity over a sliding window.

use std::collections::BTreeMap;

use num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::ingest::resample_uniform;
use crate::model::{FlightSample, InceptorAxis, Segment};
use crate::pupil::Taper;
use crate::scalar::{median_interval_ms, Real};

#[derive(Debug, Error, PartialEq)]
pub enum PerfError {
    #[error("no samples in segment")]
    Empty,
    #[error("need at least {need} samples, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("sampling rate must be positive")]
    BadRate,
    #[error("window must hold at least 10 samples and fit in the series")]
    BadWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Linear,
    /// Errors wrapped into [-180, 180) degrees before squaring.
    Angular,
}

/// Signed difference `value - target` wrapped into [-180, 180).
pub fn wrap_deg<T: Real>(d: T) -> T {
    let full = T::lit(360.0);
    let half = T::lit(180.0);
    let w = (d + half) % full;
    let w = if w < T::zero() { w + full } else { w };
    w - half
}

/// Root-mean-square deviation of `series` from `target`.
pub fn rmse<T: Real>(series: &[T], target: T, kind: ErrorKind) -> Result<T, PerfError> {
    if series.is_empty() {
        return Err(PerfError::Empty);
    }
    let ss: T = series
        .iter()
        .map(|&x| {
            let e = match kind {
                ErrorKind::Linear => x - target,
                ErrorKind::Angular => wrap_deg(x - target),
            };
            e * e
        })
        .sum();
    Ok((ss / T::from_count(series.len())).sqrt())
}

/// Circular mean of angles in degrees, in [0, 360).
pub fn circular_mean_deg<T: Real>(angles: &[T]) -> Option<T> {
    if angles.is_empty() {
        return None;
    }
    let (s, c) = angles.iter().fold((T::zero(), T::zero()), |(s, c), &a| {
        let r = a.to_radians();
        (s + r.sin(), c + r.cos())
    });
    let m = s.atan2(c).to_degrees();
    Some(if m < T::zero() { m + T::lit(360.0) } else { m })
}

/// Pilot inceptor workload of one control channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiwResult<T> {
    /// RMS deflection rate, deflection units per second.
    pub aggressiveness: T,
    /// Fraction of samples during which the inceptor is moving.
    pub duty_cycle: T,
}

pub const DEFAULT_MOTION_THRESHOLD: f64 = 0.01;

/// Deflection rate by central differences, one-sided at the ends.
pub fn deflection_rate<T: Real>(series: &[T], fs: T) -> Vec<T> {
    let n = series.len();
    (0..n)
        .map(|i| {
            if i == 0 {
                (series[1] - series[0]) * fs
            } else if i == n - 1 {
                (series[n - 1] - series[n - 2]) * fs
            } else {
                (series[i + 1] - series[i - 1]) * fs / T::lit(2.0)
            }
        })
        .collect()
}

/// Aggressiveness is the RMS of the central-difference rate. A sample
/// counts towards the duty cycle when either adjacent one-sided rate
/// exceeds `motion_threshold`, so reversals at the sample rate still count
/// as motion.
pub fn piw<T: Real>(series: &[T], fs: T, motion_threshold: T) -> Result<PiwResult<T>, PerfError> {
    if series.len() < 3 {
        return Err(PerfError::TooFew {
            need: 3,
            got: series.len(),
        });
    }
    if !(fs > T::zero()) {
        return Err(PerfError::BadRate);
    }
    let rate = deflection_rate(series, fs);
    let n = series.len();
    let aggressiveness = (rate.iter().map(|&r| r * r).sum::<T>() / T::from_count(n)).sqrt();
    let step = |a: usize, b: usize| ((series[b] - series[a]) * fs).abs();
    let moving = (0..n)
        .filter(|&i| {
            let back = if i > 0 { step(i - 1, i) } else { T::zero() };
            let fwd = if i + 1 < n { step(i, i + 1) } else { T::zero() };
            back.max(fwd) > motion_threshold
        })
        .count();
    Ok(PiwResult {
        aggressiveness,
        duty_cycle: T::from_count(moving) / T::from_count(n),
    })
}

/// Power frequency: spectral centroid of each Hann-tapered, mean-removed
/// window. Returns `(window centre in seconds, Hz)` pairs; windows with no
/// variation give `None`.
pub fn power_frequency<T: Real>(
    series: &[T],
    fs: T,
    window_s: T,
    hop_s: T,
) -> Result<Vec<(T, Option<T>)>, PerfError> {
    if !(fs > T::zero()) || !(hop_s > T::zero()) {
        return Err(PerfError::BadRate);
    }
    let win = (window_s * fs).round().to_usize().unwrap_or(0);
    let hop = (hop_s * fs).round().to_usize().unwrap_or(0).max(1);
    if win < 10 || win > series.len() {
        return Err(PerfError::BadWindow);
    }
    let taper: Vec<T> = Taper::Hann.coefficients(win);
    let fft = FftPlanner::<T>::new().plan_fft_forward(win);
    let mut buf = vec![Complex::new(T::zero(), T::zero()); win];
    let df = fs / T::from_count(win);
    let mut out = Vec::new();
    let mut start = 0;
    while start + win <= series.len() {
        let seg = &series[start..start + win];
        let m = seg.iter().copied().sum::<T>() / T::from_count(win);
        let scale = seg.iter().fold(T::one(), |a, &x| a.max(x.abs()));
        let centre = (T::from_count(start) + T::from_count(win) / T::lit(2.0)) / fs;
        if seg.iter().all(|&x| (x - m).abs() <= T::lit(1e-12) * scale) {
            out.push((centre, None));
        } else {
            for (b, (&x, &w)) in buf.iter_mut().zip(seg.iter().zip(&taper)) {
                *b = Complex::new((x - m) * w, T::zero());
            }
            fft.process(&mut buf);
            let (mut num, mut den) = (T::zero(), T::zero());
            for (k, c) in buf.iter().enumerate().take(win / 2 + 1).skip(1) {
                let p = c.norm_sqr();
                num = num + T::from_count(k) * df * p;
                den = den + p;
            }
            out.push((centre, if den > T::zero() { Some(num / den) } else { None }));
        }
        start += hop;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerfParams {
    pub motion_threshold: f64,
    pub pf_window_s: f64,
    pub pf_hop_s: f64,
    /// Span at the start of a segment whose circular mean heading is used
    /// when no heading target is given.
    pub heading_reference_ms: u64,
}

impl Default for PerfParams {
    fn default() -> Self {
        Self {
            motion_threshold: DEFAULT_MOTION_THRESHOLD,
            pf_window_s: 10.0,
            pf_hop_s: 1.0,
            heading_reference_ms: 5000,
        }
    }
}

/// Flight-performance summary for one segment.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SegmentPerf {
    pub segment: String,
    pub rmse_altitude_ft: Option<f64>,
    pub rmse_airspeed_kt: Option<f64>,
    pub rmse_heading_deg: Option<f64>,
    pub heading_target_deg: Option<f64>,
    pub piw: BTreeMap<InceptorAxis, PiwResult<f64>>,
    /// `(seconds from segment start, Hz)` per inceptor.
    pub power_frequency: BTreeMap<InceptorAxis, Vec<(f64, Option<f64>)>>,
}

/// RMSE against the segment targets plus inceptor workload and power
/// frequency. Segments without targets get no RMSE values; a targeted
/// segment without a heading target is held to the circular mean heading
/// of its first five seconds.
pub fn segment_perf(
    flight: &[FlightSample],
    segment: &Segment,
    params: &PerfParams,
) -> Result<SegmentPerf, PerfError> {
    let rows: Vec<&FlightSample> = flight.iter().filter(|s| segment.contains(s.t_ms)).collect();
    if rows.is_empty() {
        return Err(PerfError::Empty);
    }
    let mut out = SegmentPerf {
        segment: segment.name.clone(),
        ..Default::default()
    };
    if let Some(t) = segment.targets {
        let alt: Vec<f64> = rows.iter().map(|s| s.altitude_ft).collect();
        let spd: Vec<f64> = rows.iter().map(|s| s.airspeed_kt).collect();
        let hdg: Vec<f64> = rows.iter().map(|s| s.heading_deg).collect();
        if let Some(a) = t.altitude_ft {
            out.rmse_altitude_ft = Some(rmse(&alt, a, ErrorKind::Linear)?);
        }
        if let Some(v) = t.airspeed_kt {
            out.rmse_airspeed_kt = Some(rmse(&spd, v, ErrorKind::Linear)?);
        }
        let heading_target = t.heading_deg.or_else(|| {
            let head: Vec<f64> = rows
                .iter()
                .filter(|s| s.t_ms < segment.t_start_ms + params.heading_reference_ms)
                .map(|s| s.heading_deg)
                .collect();
            circular_mean_deg(&head)
        });
        if let Some(h) = heading_target {
            out.rmse_heading_deg = Some(rmse(&hdg, h, ErrorKind::Angular)?);
        }
        out.heading_target_deg = heading_target;
    }

    let ts: Vec<u64> = rows.iter().map(|s| s.t_ms).collect();
    let dt = median_interval_ms(&ts);
    if dt == 0 {
        return Ok(out);
    }
    let fs = 1000.0 / dt as f64;
    for axis in InceptorAxis::ALL {
        let raw: Vec<(u64, f64)> = rows.iter().map(|s| (s.t_ms, s.inceptors.get(axis))).collect();
        let Some(uniform) = resample_uniform(&raw, fs, u64::MAX)
            .ok()
            .and_then(|u| u.filled())
        else {
            continue;
        };
        if let Ok(p) = piw(&uniform, fs, params.motion_threshold) {
            out.piw.insert(axis, p);
        }
        if let Ok(pf) = power_frequency(&uniform, fs, params.pf_window_s, params.pf_hop_s) {
            out.power_frequency.insert(axis, pf);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rmse_cases() {
        assert_relative_eq!(rmse(&[4100.0; 10], 4000.0, ErrorKind::Linear).unwrap(), 100.0);
        assert_relative_eq!(rmse(&[359.0, 1.0], 0.0, ErrorKind::Angular).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(rmse(&[3990.0, 4010.0], 4000.0, ErrorKind::Linear).unwrap(), 10.0);
        assert_eq!(rmse::<f64>(&[], 0.0, ErrorKind::Linear), Err(PerfError::Empty));
    }

    #[test]
    fn wrap_and_circular_mean() {
        assert_relative_eq!(wrap_deg(350.0), -10.0);
        assert_relative_eq!(wrap_deg(-190.0), 170.0);
        assert_relative_eq!(circular_mean_deg(&[350.0, 10.0]).unwrap() % 360.0, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn piw_cases() {
        let p = piw(&[0.3; 50], 20.0, 0.01).unwrap();
        assert_eq!((p.aggressiveness, p.duty_cycle), (0.0, 0.0));
        let sq: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 0.1 } else { -0.1 }).collect();
        assert_relative_eq!(piw(&sq, 20.0, 0.01).unwrap().duty_cycle, 1.0);
        assert!(matches!(piw(&[0.0, 1.0], 20.0, 0.01), Err(PerfError::TooFew { .. })));
    }

    #[test]
    fn constant_window_has_no_power_frequency() {
        let pf = power_frequency(&[0.2; 200], 10.0, 5.0, 1.0).unwrap();
        assert!(!pf.is_empty());
        assert!(pf.iter().all(|(_, v)| v.is_none()));
        assert_eq!(power_frequency(&[0.2; 20], 10.0, 5.0, 1.0), Err(PerfError::BadWindow));
    }
}
