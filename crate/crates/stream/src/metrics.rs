//! Rolling once-per-second analytics over the recent sample window.

use std::collections::VecDeque;

use gazelab::geometry::ClassifiedSample;
use gazelab::ingest::pupil_series;
use gazelab::model::{GazeSample, Segment};
use gazelab::pupil::{workload_bands, PupilPipelineParams, Taper, WelchParams};
use gazelab::scan::{pdt, segment_dwells, PdtTable};

use crate::wire::{BandPower, MetricsFrame};

pub const DEFAULT_WINDOW_MS: u64 = 120_000;
pub const FRAME_MS: u64 = 1000;
/// Pupil data span needed before the band ratio is reported.
pub const MIN_BAND_SPAN_MS: u64 = 60_000;

/// Pupil pipeline used on the rolling window: 40 s Welch segments at 2 Hz,
/// which keeps the 0.025 Hz resolution the band ratio needs while fitting
/// inside the window.
pub fn live_pupil_params() -> PupilPipelineParams<f64> {
    PupilPipelineParams {
        welch: WelchParams {
            seg_len: 80,
            overlap_frac: 0.5,
            taper: Taper::Hann,
        },
        ..PupilPipelineParams::default()
    }
}

/// Median of a non-empty list; the mean of the middle two for even counts.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

/// Dwell percentages over `[start, end)` from the samples inside it.
pub fn window_pdt(samples: &[ClassifiedSample], start_ms: u64, end_ms: u64) -> PdtTable {
    let visits = segment_dwells(samples, 0);
    pdt(&visits, &Segment::new("window", start_ms, end_ms.max(start_ms + 1)))
        .expect("window has positive length")
}

/// LF/HF band means of the window's pupil trace, when it spans enough time.
pub fn window_bands(gaze: &[GazeSample]) -> Option<BandPower> {
    let series = pupil_series(gaze);
    let span = series.last()?.0 - series.first()?.0;
    if span < MIN_BAND_SPAN_MS {
        return None;
    }
    let (_, b) = workload_bands(&series, &live_pupil_params()).ok()?;
    Some(BandPower {
        lf_mean: b.lf_mean,
        hf_mean: b.hf_mean,
        ratio: b.ratio,
    })
}

/// Samples from the last `window_ms` of data time, in arrival order.
#[derive(Debug, Clone)]
pub struct RollingWindow {
    window_ms: u64,
    entries: VecDeque<(GazeSample, ClassifiedSample)>,
}

impl RollingWindow {
    pub fn new(window_ms: u64) -> Self {
        Self {
            window_ms,
            entries: VecDeque::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, raw: GazeSample, classified: ClassifiedSample) {
        self.entries.push_back((raw, classified));
    }

    /// Frame for the second ending at `boundary_ms`, over samples earlier
    /// than the boundary. Older samples are discarded.
    pub fn frame(&mut self, boundary_ms: u64, session_start_ms: u64) -> MetricsFrame {
        let start = boundary_ms.saturating_sub(self.window_ms).max(session_start_ms);
        while self.entries.front().is_some_and(|e| e.0.t_ms < start) {
            self.entries.pop_front();
        }
        let inside: Vec<&(GazeSample, ClassifiedSample)> = self
            .entries
            .iter()
            .take_while(|e| e.0.t_ms < boundary_ms)
            .collect();
        let mut last_second: Vec<f64> = inside
            .iter()
            .filter(|e| e.0.t_ms + FRAME_MS >= boundary_ms && !e.0.is_blink())
            .filter_map(|e| e.0.pupil_mm)
            .collect();
        let classified: Vec<ClassifiedSample> = inside.iter().map(|e| e.1.clone()).collect();
        let raw: Vec<GazeSample> = inside.iter().map(|e| e.0.clone()).collect();
        MetricsFrame {
            t_ms: boundary_ms,
            window_start_ms: start,
            median_pupil_mm: median(&mut last_second),
            aoi: classified.last().map(|c| c.label.clone()),
            pdt: window_pdt(&classified, start, boundary_ms).entries,
            lf_hf: window_bands(&raw),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gazelab::model::OTH;

    fn sample(t: u64, pupil: Option<f64>) -> (GazeSample, ClassifiedSample) {
        let g = GazeSample {
            t_ms: t,
            origin: [0.0; 3],
            dir: [0.0, 0.0, 1.0],
            pupil_mm: pupil,
            eyelid_open: Some(1.0),
            quality: 1.0,
            low_quality: false,
        };
        let c = ClassifiedSample {
            t_ms: t,
            dir: g.dir,
            label: OTH.into(),
            hit: None,
        };
        (g, c)
    }

    #[test]
    fn median_of_one_to_sixty_shuffled() {
        let mut v: Vec<f64> = (1..=60).map(|i| ((i * 37) % 60 + 1) as f64).collect();
        assert_eq!(median(&mut v), Some(30.5));
        assert_eq!(median(&mut []), None);
    }

    #[test]
    fn all_oth_window_is_all_oth() {
        let mut w = RollingWindow::new(DEFAULT_WINDOW_MS);
        for i in 0..60 {
            let (g, c) = sample(i * 16, Some(4.0));
            w.push(g, c);
        }
        let f = w.frame(1000, 0);
        assert_eq!(f.pdt.len(), 1);
        assert!((f.pdt[OTH] - 100.0).abs() < 1e-12);
        assert_eq!(f.median_pupil_mm, Some(4.0));
        assert!(f.lf_hf.is_none());
    }

    #[test]
    fn bands_need_sixty_seconds() {
        let mut w = RollingWindow::new(DEFAULT_WINDOW_MS);
        for i in 0..(61 * 40) {
            let t = i * 25;
            let p = 4.0 + 0.1 * (2.0 * std::f64::consts::PI * 0.1 * t as f64 / 1000.0).sin();
            let (g, c) = sample(t, Some(p));
            w.push(g, c);
        }
        assert!(w.frame(50_000, 0).lf_hf.is_none());
        let f = w.frame(61_000, 0);
        assert!(f.lf_hf.unwrap().ratio > 5.0);
    }

    #[test]
    fn window_drops_old_samples() {
        let mut w = RollingWindow::new(10_000);
        for i in 0..100 {
            let (g, c) = sample(i * 1000, None);
            w.push(g, c);
        }
        let f = w.frame(100_000, 0);
        assert_eq!(f.window_start_ms, 90_000);
        assert_eq!(w.len(), 10);
        assert_eq!(f.median_pupil_mm, None);
    }
}
