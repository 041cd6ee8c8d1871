//! Scan-behaviour metrics: fixations, dwell visits, percentage dwell time,
//! fixation maps and AOI transition counts.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::geometry::{ClassifiedSample, Vec3};
use crate::model::{surface_of, AoiModel, DwellVisit, Fixation, Segment, OTH};
use crate::scalar::median_interval_ms;

#[derive(Debug, Error, PartialEq)]
pub enum ScanError {
    #[error("segment '{0}' has zero duration")]
    ZeroLengthSegment(String),
    #[error("unknown surface '{0}'")]
    UnknownSurface(String),
    #[error("bin size must be positive")]
    ZeroBin,
}

/// Dispersion-threshold fixation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixationParams {
    /// Maximum angle between any sample and the window's mean direction.
    pub dispersion_deg: f64,
    /// Minimum window span (last minus first timestamp).
    pub min_dur_ms: u64,
}

impl Default for FixationParams {
    fn default() -> Self {
        Self {
            dispersion_deg: 1.0,
            min_dur_ms: 100,
        }
    }
}

fn dir_of(s: &ClassifiedSample) -> Vec3<f64> {
    Vec3::from(s.dir)
}

/// Dispersion-threshold (I-DT) fixation detection.
///
/// The stream is partitioned greedily into maximal windows: starting at
/// the first unconsumed sample, the window grows while every direction in
/// it stays within `dispersion_deg` of the window's mean direction. Windows
/// spanning at least `min_dur_ms` become fixations. Because the partition
/// does not depend on `min_dur_ms`, raising it can only remove fixations.
pub fn detect_fixations(samples: &[ClassifiedSample], params: FixationParams) -> Vec<Fixation> {
    let cos_limit = params.dispersion_deg.to_radians().cos();
    let mut out = Vec::new();
    let n = samples.len();
    let mut i = 0;
    while i < n {
        let mut sum = dir_of(&samples[i]);
        let mut j = i;
        while j + 1 < n {
            let cand = sum + dir_of(&samples[j + 1]);
            let Some(mean) = cand.normalized() else { break };
            if samples[i..=j + 1]
                .iter()
                .all(|s| dir_of(s).dot(mean) >= cos_limit)
            {
                sum = cand;
                j += 1;
            } else {
                break;
            }
        }
        let window = &samples[i..=j];
        if window[window.len() - 1].t_ms - window[0].t_ms >= params.min_dur_ms {
            out.push(summarize_fixation(window));
        }
        i = j + 1;
    }
    out
}

fn modal_label(window: &[ClassifiedSample]) -> &str {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in window {
        *counts.entry(s.label.as_str()).or_insert(0) += 1;
    }
    // BTreeMap order makes ties go to the lexicographically smaller label.
    let best = counts.values().copied().max().unwrap_or(0);
    counts
        .into_iter()
        .find(|&(_, c)| c == best)
        .map_or(OTH, |(l, _)| l)
}

fn summarize_fixation(window: &[ClassifiedSample]) -> Fixation {
    let aoi = modal_label(window).to_string();
    let (surface, uv) = if aoi == OTH {
        (None, None)
    } else {
        let sid = surface_of(&aoi);
        let uvs: Vec<(f64, f64)> = window
            .iter()
            .filter_map(|s| s.hit.as_ref())
            .filter(|h| h.surface_id == sid)
            .map(|h| h.uv)
            .collect();
        let n = uvs.len() as f64;
        let mean = (
            uvs.iter().map(|p| p.0).sum::<f64>() / n,
            uvs.iter().map(|p| p.1).sum::<f64>() / n,
        );
        (Some(sid.to_string()), Some(mean))
    };
    Fixation {
        t_start_ms: window[0].t_ms,
        t_end_ms: window[window.len() - 1].t_ms,
        centroid_surface: surface,
        centroid_uv: uv,
        aoi_id: aoi,
    }
}

/// Blink-bridging preset for [`segment_dwells`].
pub const BLINK_BRIDGING_GAP_MS: u64 = 75;

/// End of the timeline covered by a sample stream: the last sample is
/// taken to last one nominal (median) sample interval.
pub fn stream_end_ms(samples: &[ClassifiedSample]) -> u64 {
    let ts: Vec<u64> = samples.iter().map(|s| s.t_ms).collect();
    ts.last().map_or(0, |&t| t + median_interval_ms(&ts))
}

/// Groups labelled samples into dwell visits.
///
/// Each sample covers the interval up to the next sample. Consecutive
/// equal labels form one visit; an excursion to other labels lasting less
/// than `gap_tolerance_ms` between two visits of the same AOI is absorbed
/// into that AOI. The result partitions `[first sample, stream end)`.
pub fn segment_dwells(samples: &[ClassifiedSample], gap_tolerance_ms: u64) -> Vec<DwellVisit> {
    if samples.is_empty() {
        return Vec::new();
    }
    let end = stream_end_ms(samples);
    let mut runs: Vec<DwellVisit> = Vec::new();
    for (k, s) in samples.iter().enumerate() {
        let t_next = samples.get(k + 1).map_or(end, |n| n.t_ms);
        match runs.last_mut() {
            Some(r) if r.aoi_id == s.label => r.t_end_ms = t_next,
            _ => runs.push(DwellVisit {
                aoi_id: s.label.clone(),
                t_start_ms: s.t_ms,
                t_end_ms: t_next,
            }),
        }
    }
    if gap_tolerance_ms == 0 {
        return runs;
    }
    let mut out: Vec<DwellVisit> = Vec::with_capacity(runs.len());
    for r in runs {
        // Look back for an earlier visit of the same AOI separated from this
        // one by less than the tolerance.
        let mut merge_at = None;
        for idx in (0..out.len()).rev() {
            if r.t_start_ms - out[idx].t_end_ms >= gap_tolerance_ms {
                break;
            }
            if out[idx].aoi_id == r.aoi_id {
                merge_at = Some(idx);
                break;
            }
        }
        match merge_at {
            Some(idx) => {
                out.truncate(idx + 1);
                out[idx].t_end_ms = r.t_end_ms;
            }
            None => out.push(r),
        }
    }
    out
}

/// Percentage of a segment's duration spent in each AOI. Always contains
/// [`OTH`]; entries sum to 100.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PdtTable {
    pub entries: BTreeMap<String, f64>,
}

impl PdtTable {
    pub fn get(&self, aoi: &str) -> f64 {
        self.entries.get(aoi).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }

    /// Children folded into their parent surface.
    pub fn by_surface(&self) -> PdtTable {
        PdtTable {
            entries: crate::model::roll_up_to_surfaces(&self.entries),
        }
    }
}

/// Percentage dwell time per AOI within `segment`.
pub fn pdt(visits: &[DwellVisit], segment: &Segment) -> Result<PdtTable, ScanError> {
    let dur = segment.duration_ms();
    if dur == 0 {
        return Err(ScanError::ZeroLengthSegment(segment.name.clone()));
    }
    let mut ms: BTreeMap<String, u64> = BTreeMap::new();
    for v in visits {
        let a = v.t_start_ms.max(segment.t_start_ms);
        let b = v.t_end_ms.min(segment.t_end_ms);
        if b > a && v.aoi_id != OTH {
            *ms.entry(v.aoi_id.clone()).or_insert(0) += b - a;
        }
    }
    let mut entries: BTreeMap<String, f64> = ms
        .into_iter()
        .map(|(k, t)| (k, t as f64 * 100.0 / dur as f64))
        .collect();
    let visited: f64 = entries.values().sum();
    entries.insert(OTH.to_string(), (100.0 - visited).max(0.0));
    Ok(PdtTable { entries })
}

/// Accumulated fixation time per pixel bin of one surface.
#[derive(Debug, Clone, PartialEq)]
pub struct FixationMapGrid {
    pub surface_id: String,
    pub bin_px: u32,
    pub cols: usize,
    pub rows: usize,
    /// Row-major; row index follows the surface's v axis.
    pub cells: Vec<f64>,
}

pub const DEFAULT_BIN_PX: u32 = 20;

impl FixationMapGrid {
    fn empty(model: &AoiModel, surface_id: &str, bin_px: u32) -> Result<Self, ScanError> {
        if bin_px == 0 {
            return Err(ScanError::ZeroBin);
        }
        let s = model
            .surface(surface_id)
            .ok_or_else(|| ScanError::UnknownSurface(surface_id.to_string()))?;
        let cols = s.px[0].div_ceil(bin_px) as usize;
        let rows = s.px[1].div_ceil(bin_px) as usize;
        Ok(Self {
            surface_id: surface_id.to_string(),
            bin_px,
            cols,
            rows,
            cells: vec![0.0; cols * rows],
        })
    }

    pub fn cell(&self, col: usize, row: usize) -> f64 {
        self.cells[row * self.cols + col]
    }

    pub fn total(&self) -> f64 {
        self.cells.iter().sum()
    }

    fn add(&mut self, px: [u32; 2], uv: (f64, f64), ms: f64) {
        let bin = self.bin_px as f64;
        let col = ((uv.0.clamp(0.0, 1.0) * px[0] as f64) / bin).floor() as usize;
        let row = ((uv.1.clamp(0.0, 1.0) * px[1] as f64) / bin).floor() as usize;
        let (col, row) = (col.min(self.cols - 1), row.min(self.rows - 1));
        self.cells[row * self.cols + col] += ms;
    }

    /// Milliseconds per cell, one CSV line per row.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for r in 0..self.rows {
            let line: Vec<String> = (0..self.cols).map(|c| format!("{}", self.cell(c, r))).collect();
            let _ = writeln!(s, "{}", line.join(","));
        }
        s
    }

    /// Binary 8-bit portable graymap scaled to the busiest cell.
    pub fn to_pgm(&self) -> Vec<u8> {
        let max = self.cells.iter().copied().fold(0.0, f64::max);
        let mut out = format!("P5\n{} {}\n255\n", self.cols, self.rows).into_bytes();
        out.extend(self.cells.iter().map(|&v| {
            if max > 0.0 {
                (v / max * 255.0).round() as u8
            } else {
                0
            }
        }));
        out
    }
}

/// Mean fixation map: each fixation on `surface_id` adds its duration to
/// the bin holding its centroid.
pub fn fixation_map(
    fixations: &[Fixation],
    model: &AoiModel,
    surface_id: &str,
    bin_px: u32,
) -> Result<FixationMapGrid, ScanError> {
    let mut g = FixationMapGrid::empty(model, surface_id, bin_px)?;
    let px = model.surface(surface_id).expect("checked above").px;
    for f in fixations {
        if f.centroid_surface.as_deref() != Some(surface_id) {
            continue;
        }
        if let Some(uv) = f.centroid_uv {
            g.add(px, uv, f.duration_ms() as f64);
        }
    }
    Ok(g)
}

/// Per-sample alternative to [`fixation_map`]: every sample hitting the
/// surface adds the time it covers to its own bin.
pub fn sample_heat_map(
    samples: &[ClassifiedSample],
    model: &AoiModel,
    surface_id: &str,
    bin_px: u32,
) -> Result<FixationMapGrid, ScanError> {
    let mut g = FixationMapGrid::empty(model, surface_id, bin_px)?;
    let px = model.surface(surface_id).expect("checked above").px;
    let end = stream_end_ms(samples);
    for (k, s) in samples.iter().enumerate() {
        let Some(h) = s.hit.as_ref().filter(|h| h.surface_id == surface_id) else {
            continue;
        };
        let next = samples.get(k + 1).map_or(end, |n| n.t_ms);
        g.add(px, h.uv, (next - s.t_ms) as f64);
    }
    Ok(g)
}

/// Counts of immediate AOI-to-AOI transitions between consecutive visits.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransitionMatrix {
    pub ids: Vec<String>,
    pub counts: Vec<Vec<u32>>,
}

impl TransitionMatrix {
    pub fn count(&self, from: &str, to: &str) -> u32 {
        let i = self.ids.iter().position(|x| x == from);
        let j = self.ids.iter().position(|x| x == to);
        match (i, j) {
            (Some(i), Some(j)) => self.counts[i][j],
            _ => 0,
        }
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().flatten().sum()
    }
}

pub fn transition_matrix(visits: &[DwellVisit]) -> TransitionMatrix {
    let mut ids: Vec<String> = visits.iter().map(|v| v.aoi_id.clone()).collect();
    ids.sort();
    ids.dedup();
    let index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut counts = vec![vec![0u32; ids.len()]; ids.len()];
    for w in visits.windows(2) {
        let (a, b) = (index[w[0].aoi_id.as_str()], index[w[1].aoi_id.as_str()]);
        if a != b {
            counts[a][b] += 1;
        }
    }
    TransitionMatrix { ids, counts }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SurfaceHit;
    use crate::model::load_aoi_model;

    fn cs(t: u64, label: &str) -> ClassifiedSample {
        ClassifiedSample {
            t_ms: t,
            dir: [0.0, 0.0, 1.0],
            label: label.to_string(),
            hit: None,
        }
    }

    fn visit(a: &str, s: u64, e: u64) -> DwellVisit {
        DwellVisit {
            aoi_id: a.into(),
            t_start_ms: s,
            t_end_ms: e,
        }
    }

    #[test]
    fn dwells_split_at_label_change() {
        let s: Vec<_> = ["A", "A", "A", "B", "B"]
            .iter()
            .enumerate()
            .map(|(k, l)| cs(25 * k as u64, l))
            .collect();
        let v = segment_dwells(&s, 0);
        assert_eq!(v, vec![visit("A", 0, 75), visit("B", 75, 125)]);
    }

    #[test]
    fn all_oth_single_visit() {
        let s: Vec<_> = (0..40).map(|k| cs(25 * k, OTH)).collect();
        assert_eq!(segment_dwells(&s, 0), vec![visit(OTH, 0, 1000)]);
    }

    #[test]
    fn short_excursion_merged() {
        // A for 200 ms (20 ms samples), OTH for 20 ms, A for 200 ms.
        let mut s: Vec<_> = (0..10).map(|k| cs(20 * k, "A")).collect();
        s.push(cs(200, OTH));
        s.extend((0..10).map(|k| cs(220 + 20 * k, "A")));
        let v = segment_dwells(&s, 25);
        assert_eq!(v, vec![visit("A", 0, 420)]);
        assert_eq!(segment_dwells(&s, 0).len(), 3);
        // At exactly the tolerance the excursion splits the visit.
        assert_eq!(segment_dwells(&s, 20).len(), 3);
    }

    #[test]
    fn pdt_simple() {
        let seg = Segment::new("s", 0, 10_000);
        let t = pdt(&[visit("OTW", 2000, 5000)], &seg).unwrap();
        assert!((t.get("OTW") - 30.0).abs() < 1e-12);
        assert!((t.get(OTH) - 70.0).abs() < 1e-12);
        let t = pdt(&[visit("PFD.A2", 0, 10_000)], &seg).unwrap();
        assert_eq!(t.get("PFD.A2"), 100.0);
        assert_eq!(t.get(OTH), 0.0);
        assert!(pdt(&[], &Segment::new("z", 5, 5)).is_err());
    }

    #[test]
    fn pdt_clips_to_window_and_rolls_up() {
        let seg = Segment::new("s", 1000, 2000);
        let t = pdt(&[visit("PFD.A1", 0, 1500), visit("PFD", 1500, 3000)], &seg).unwrap();
        assert!((t.get("PFD.A1") - 50.0).abs() < 1e-12);
        assert!((t.by_surface().get("PFD") - 100.0).abs() < 1e-12);
    }

    const MODEL: &str = r#"{"surfaces":[{"id":"PFD","origin":[-1,-1,1],"e1":[2,0,0],"e2":[0,2,0],"px":[200,200]},
        {"id":"OTW","origin":[-1,-1,3],"e1":[2,0,0],"e2":[0,2,0],"px":[30,50]}]}"#;

    fn fix(uv: (f64, f64), s: u64, e: u64) -> Fixation {
        Fixation {
            t_start_ms: s,
            t_end_ms: e,
            centroid_surface: Some("PFD".into()),
            centroid_uv: Some(uv),
            aoi_id: "PFD".into(),
        }
    }

    #[test]
    fn fixation_map_binning() {
        let m = load_aoi_model(MODEL).unwrap();
        let g = fixation_map(&[fix((0.5, 0.5), 0, 200)], &m, "PFD", 20).unwrap();
        assert_eq!((g.cols, g.rows), (10, 10));
        assert_eq!(g.cell(5, 5), 200.0);
        assert_eq!(g.total(), 200.0);

        let g = fixation_map(&[], &m, "PFD", 20).unwrap();
        assert!(g.cells.iter().all(|&c| c == 0.0));

        let g = fixation_map(&[fix((0.51, 0.52), 0, 100), fix((0.55, 0.58), 500, 650)], &m, "PFD", 20).unwrap();
        assert_eq!(g.cell(5, 5), 250.0);

        let g = fixation_map(&[fix((1.0, 1.0), 0, 100)], &m, "PFD", 20).unwrap();
        assert_eq!(g.cell(9, 9), 100.0);

        // ceil(30/20) x ceil(50/20)
        let g = fixation_map(&[], &m, "OTW", 20).unwrap();
        assert_eq!((g.cols, g.rows), (2, 3));
        assert_eq!(fixation_map(&[], &m, "NOPE", 20), Err(ScanError::UnknownSurface("NOPE".into())));
    }

    #[test]
    fn pgm_header_and_scaling() {
        let m = load_aoi_model(MODEL).unwrap();
        let mut f = fix((0.0, 0.0), 0, 100);
        f.centroid_surface = Some("OTW".into());
        let g = fixation_map(&[f], &m, "OTW", 20).unwrap();
        let p = g.to_pgm();
        assert!(p.starts_with(b"P5\n2 3\n255\n"));
        assert_eq!(p[p.len() - 6], 255);
        assert_eq!(g.to_csv().lines().count(), 3);
    }

    #[test]
    fn heat_map_accumulates_samples() {
        let m = load_aoi_model(MODEL).unwrap();
        let mut s: Vec<_> = (0..4).map(|k| cs(25 * k, "PFD")).collect();
        for x in &mut s {
            x.hit = Some(SurfaceHit {
                surface_id: "PFD".into(),
                uv: (0.5, 0.5),
                distance_m: 1.0,
            });
        }
        let g = sample_heat_map(&s, &m, "PFD", 20).unwrap();
        assert_eq!(g.cell(5, 5), 100.0);
    }

    #[test]
    fn transitions() {
        let t = transition_matrix(&[visit("A", 0, 1), visit("B", 1, 2), visit("A", 2, 3)]);
        assert_eq!(t.count("A", "B"), 1);
        assert_eq!(t.count("B", "A"), 1);
        assert_eq!(t.count("A", "A"), 0);
        assert_eq!(transition_matrix(&[visit("A", 0, 1)]).total(), 0);
        let t = transition_matrix(&[visit("A", 0, 1), visit(OTH, 1, 2), visit("A", 2, 3)]);
        assert_eq!(t.count("A", OTH), 1);
        assert_eq!(t.count(OTH, "A"), 1);
    }
}
