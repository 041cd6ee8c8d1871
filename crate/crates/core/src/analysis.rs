//! Offline session analysis: the full pipeline from parsed logs to a
//! [`SessionReport`].

use std::collections::BTreeMap;

use thiserror::Error;

use crate::geometry::{classify_all, ClassifiedSample, DEFAULT_QUALITY_FLOOR};
use crate::ingest::{align_streams, pupil_series, IngestError};
use crate::model::{AoiModel, Fixation, FlightSample, GazeSample, Segment};
use crate::perf::{segment_perf, PerfParams, SegmentPerf};
use crate::pupil::{
    eye_closure_fraction, fatigue_spectrum, workload_bands, BandPowerResult, PupilPipelineParams,
    Spectrum,
};
use crate::scalar::median;
use crate::scan::{
    detect_fixations, fixation_map, pdt, sample_heat_map, segment_dwells, transition_matrix,
    FixationMapGrid, FixationParams, PdtTable, ScanError, TransitionMatrix, DEFAULT_BIN_PX,
};
use crate::stats::{anderson_darling_normal, one_way_anova, t_test, tukey_hsd, TTestVariant};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Scan(#[from] ScanError),
    #[error("unknown segment '{0}'")]
    UnknownSegment(String),
    #[error("no segments to analyze")]
    NoSegments,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MapMode {
    /// Fixation durations binned at fixation centroids.
    #[default]
    Fixation,
    /// Every sample's covered time binned at its own hit point.
    Sample,
}

impl MapMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Fixation => "fixation",
            Self::Sample => "sample",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisParams {
    pub gaze_offset_ms: i64,
    pub quality_floor: f64,
    pub fixation: FixationParams,
    pub gap_tolerance_ms: u64,
    pub bin_px: u32,
    pub map_mode: MapMode,
    pub pupil: PupilPipelineParams<f64>,
    pub closed_threshold: f64,
    pub perf: PerfParams,
    pub alpha: f64,
    pub t_test: TTestVariant,
    /// Restrict outputs to this segment.
    pub segment: Option<String>,
    /// Segment pairs whose one-second pupil medians are compared.
    pub compare: Vec<(String, String)>,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        Self {
            gaze_offset_ms: 0,
            quality_floor: DEFAULT_QUALITY_FLOOR,
            fixation: FixationParams::default(),
            gap_tolerance_ms: 0,
            bin_px: DEFAULT_BIN_PX,
            map_mode: MapMode::Fixation,
            pupil: PupilPipelineParams::default(),
            closed_threshold: 0.7,
            perf: PerfParams::default(),
            alpha: 0.05,
            t_test: TTestVariant::Pooled,
            segment: None,
            compare: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentAnalysis {
    pub segment: Segment,
    pub pdt: PdtTable,
    /// Fixations starting inside the segment.
    pub fixations: Vec<Fixation>,
    pub spectrum: Option<Spectrum<f64>>,
    pub bands: Option<BandPowerResult<f64>>,
    pub fluctuation_index: Option<f64>,
    pub closure_fraction: Option<f64>,
    pub perf: Option<SegmentPerf>,
    pub pupil_1s_medians: Vec<f64>,
    /// Reasons for absent values.
    pub notes: Vec<String>,
}

/// One row of the statistics report.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsRow {
    pub comparison: String,
    pub statistic: String,
    pub value: f64,
    pub p: Option<f64>,
    pub effect_size: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionReport {
    pub session: String,
    pub params: AnalysisParams,
    pub segments: Vec<SegmentAnalysis>,
    pub fixation_maps: Vec<FixationMapGrid>,
    pub transitions: TransitionMatrix,
    pub stats: Vec<StatsRow>,
    pub notes: Vec<String>,
    pub gaze_samples: usize,
    pub flight_samples: usize,
}

fn in_segment<'a>(samples: &'a [ClassifiedSample], seg: &Segment) -> &'a [ClassifiedSample] {
    let a = samples.partition_point(|s| s.t_ms < seg.t_start_ms);
    let b = samples.partition_point(|s| s.t_ms < seg.t_end_ms);
    &samples[a..b]
}

/// Medians of the pupil series over consecutive whole seconds.
pub fn one_second_medians(pupil: &[(u64, f64)]) -> Vec<f64> {
    let mut buckets: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for &(t, v) in pupil {
        buckets.entry(t / 1000).or_default().push(v);
    }
    buckets.values().filter_map(|b| median(b)).collect()
}

fn analyze_segment(
    seg: &Segment,
    gaze: &[GazeSample],
    fixations: &[Fixation],
    visits: &[crate::model::DwellVisit],
    flight: &[FlightSample],
    params: &AnalysisParams,
) -> Result<SegmentAnalysis, AnalysisError> {
    let mut notes = Vec::new();
    let table = pdt(visits, seg)?;
    let fix: Vec<Fixation> = fixations
        .iter()
        .filter(|f| seg.contains(f.t_start_ms))
        .cloned()
        .collect();
    let seg_gaze: Vec<GazeSample> = gaze.iter().filter(|s| seg.contains(s.t_ms)).cloned().collect();
    let pupil = pupil_series(&seg_gaze);
    let (spectrum, bands) = match workload_bands(&pupil, &params.pupil) {
        Ok((s, b)) => (Some(s), Some(b)),
        Err(e) => {
            notes.push(format!("lf/hf: {e}"));
            (None, None)
        }
    };
    let fluctuation_index = match fatigue_spectrum(&pupil, &params.pupil) {
        Ok(f) => Some(f.fluctuation_index),
        Err(e) => {
            notes.push(format!("fatigue: {e}"));
            None
        }
    };
    let eyelid: Vec<(u64, f64)> = seg_gaze
        .iter()
        .filter_map(|s| s.eyelid_open.map(|e| (s.t_ms, e)))
        .collect();
    let closure_fraction = match eye_closure_fraction(&eyelid, params.closed_threshold) {
        Ok(c) => Some(c),
        Err(e) => {
            notes.push(format!("closure: {e}"));
            None
        }
    };
    let perf = match segment_perf(flight, seg, &params.perf) {
        Ok(p) => Some(p),
        Err(e) => {
            notes.push(format!("perf: {e}"));
            None
        }
    };
    Ok(SegmentAnalysis {
        segment: seg.clone(),
        pdt: table,
        fixations: fix,
        spectrum,
        bands,
        fluctuation_index,
        closure_fraction,
        perf,
        pupil_1s_medians: one_second_medians(&pupil),
        notes,
    })
}

fn session_stats(segments: &[SegmentAnalysis], model: &AoiModel, params: &AnalysisParams, notes: &mut Vec<String>) -> Vec<StatsRow> {
    let mut rows = Vec::new();
    for s in segments {
        if s.pupil_1s_medians.len() >= 8 {
            if let Ok(ad) = anderson_darling_normal(&s.pupil_1s_medians) {
                rows.push(StatsRow {
                    comparison: format!("normality:{}:pupil_1s", s.segment.name),
                    statistic: "A2_adjusted".into(),
                    value: ad.a2_adjusted,
                    p: None,
                    effect_size: None,
                });
            }
        }
    }

    let surfaces: Vec<&str> = ["OTW", "PFD", "EICAS"]
        .into_iter()
        .filter(|s| model.surface(s).is_some())
        .collect();
    if segments.len() >= 2 && surfaces.len() >= 2 {
        let groups: Vec<Vec<f64>> = surfaces
            .iter()
            .map(|id| segments.iter().map(|s| s.pdt.by_surface().get(id)).collect())
            .collect();
        let label = surfaces.join("|");
        match one_way_anova(&groups) {
            Ok(a) => {
                rows.push(StatsRow {
                    comparison: format!("anova:pdt_surface({label})"),
                    statistic: "F".into(),
                    value: a.f_stat,
                    p: Some(a.p_value),
                    effect_size: Some(a.eta_squared),
                });
                if let Ok(t) = tukey_hsd(&groups, params.alpha) {
                    for p in &t.pairs {
                        rows.push(StatsRow {
                            comparison: format!("tukey:{}-{}", surfaces[p.i], surfaces[p.j]),
                            statistic: "q".into(),
                            value: p.q_stat,
                            p: Some(p.p_value),
                            effect_size: Some(p.mean_diff),
                        });
                    }
                }
            }
            Err(e) => notes.push(format!("anova on surface PDT: {e}")),
        }
    }

    for (a, b) in &params.compare {
        let find = |n: &str| segments.iter().find(|s| s.segment.name == n);
        match (find(a), find(b)) {
            (Some(sa), Some(sb)) => match t_test(&sa.pupil_1s_medians, &sb.pupil_1s_medians, params.t_test) {
                Ok(t) => rows.push(StatsRow {
                    comparison: format!("ttest:{a}-{b}:pupil_1s"),
                    statistic: "t".into(),
                    value: t.t_stat,
                    p: Some(t.p_value),
                    effect_size: Some(t.cohens_d),
                }),
                Err(e) => notes.push(format!("t-test {a} vs {b}: {e}")),
            },
            _ => notes.push(format!("t-test {a} vs {b}: segment not analyzed")),
        }
    }
    rows
}

/// Runs the offline pipeline: align, classify, detect fixations and
/// dwells, then per segment PDT, pupil bands, fatigue index, closure
/// fraction and flight performance, then fixation maps and statistics.
pub fn analyze_session(
    session: &str,
    gaze: Vec<GazeSample>,
    flight: Vec<FlightSample>,
    segments: &[Segment],
    model: &AoiModel,
    params: &AnalysisParams,
) -> Result<SessionReport, AnalysisError> {
    let selected: Vec<&Segment> = match &params.segment {
        Some(name) => {
            let s = segments
                .iter()
                .find(|s| &s.name == name)
                .ok_or_else(|| AnalysisError::UnknownSegment(name.clone()))?;
            vec![s]
        }
        None => segments.iter().collect(),
    };
    if selected.is_empty() {
        return Err(AnalysisError::NoSegments);
    }
    let (n_gaze, n_flight) = (gaze.len(), flight.len());
    let aligned = align_streams(gaze, flight, params.gaze_offset_ms)?;
    let classified = classify_all(&aligned.gaze, model, params.quality_floor);
    let fixations = detect_fixations(&classified, params.fixation);
    let visits = segment_dwells(&classified, params.gap_tolerance_ms);

    let seg_results = selected
        .iter()
        .map(|seg| {
            analyze_segment(
                seg,
                &aligned.gaze,
                &fixations,
                &visits,
                &aligned.flight,
                params,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut fixation_maps = Vec::new();
    for surf in &model.surfaces {
        let grid = match params.map_mode {
            MapMode::Fixation => {
                let fx: Vec<Fixation> = seg_results.iter().flat_map(|s| s.fixations.iter().cloned()).collect();
                fixation_map(&fx, model, &surf.id, params.bin_px)?
            }
            MapMode::Sample => {
                let mut merged: Option<FixationMapGrid> = None;
                for seg in &selected {
                    let g = sample_heat_map(in_segment(&classified, seg), model, &surf.id, params.bin_px)?;
                    merged = Some(match merged {
                        None => g,
                        Some(mut m) => {
                            m.cells.iter_mut().zip(&g.cells).for_each(|(a, b)| *a += b);
                            m
                        }
                    });
                }
                merged.expect("at least one segment")
            }
        };
        fixation_maps.push(grid);
    }

    let seg_visits: Vec<crate::model::DwellVisit> = visits
        .iter()
        .filter(|v| selected.iter().any(|s| s.contains(v.t_start_ms)))
        .cloned()
        .collect();
    let transitions = transition_matrix(&seg_visits);

    let mut notes = Vec::new();
    let stats = session_stats(&seg_results, model, params, &mut notes);
    Ok(SessionReport {
        session: session.to_string(),
        params: params.clone(),
        segments: seg_results,
        fixation_maps,
        transitions,
        stats,
        notes,
        gaze_samples: n_gaze,
        flight_samples: n_flight,
    })
}
