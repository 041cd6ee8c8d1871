//! Domain records and the hierarchical AOI model.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Quad, Vec3};

/// Label given to gaze that is not inside any configured AOI.
pub const OTH: &str = "OTH";

/// One time-stamped gaze record in the cockpit frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GazeSample {
    pub t_ms: u64,
    /// Eye point, metres.
    pub origin: [f64; 3],
    /// Unit gaze direction.
    pub dir: [f64; 3],
    pub pupil_mm: Option<f64>,
    /// Eyelid opening, 1 = fully open.
    pub eyelid_open: Option<f64>,
    pub quality: f64,
    /// Set at ingestion when `quality` is below the configured floor.
    pub low_quality: bool,
}

impl GazeSample {
    /// Blink rule used before any pupil processing.
    pub fn is_blink(&self) -> bool {
        self.pupil_mm.is_none() || self.eyelid_open.is_some_and(|e| e < 0.1)
    }
}

/// Control inceptor channels recorded with the flight log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InceptorAxis {
    Pitch,
    Roll,
    Rudder,
    Throttle,
}

impl InceptorAxis {
    pub const ALL: [InceptorAxis; 4] = [Self::Pitch, Self::Roll, Self::Rudder, Self::Throttle];

    pub fn name(self) -> &'static str {
        match self {
            Self::Pitch => "pitch",
            Self::Roll => "roll",
            Self::Rudder => "rudder",
            Self::Throttle => "throttle",
        }
    }
}

impl fmt::Display for InceptorAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Normalized inceptor deflections: pitch, roll and rudder in [-1, 1],
/// throttle in [0, 1].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Inceptors {
    pub pitch: f64,
    pub roll: f64,
    pub rudder: f64,
    pub throttle: f64,
}

impl Inceptors {
    pub fn get(&self, axis: InceptorAxis) -> f64 {
        match axis {
            InceptorAxis::Pitch => self.pitch,
            InceptorAxis::Roll => self.roll,
            InceptorAxis::Rudder => self.rudder,
            InceptorAxis::Throttle => self.throttle,
        }
    }
}

/// One time-stamped flight and control record.
#[derive(Debug, Clone, PartialEq)]
pub struct FlightSample {
    pub t_ms: u64,
    pub altitude_ft: f64,
    pub airspeed_kt: f64,
    /// Wrapped into [0, 360).
    pub heading_deg: f64,
    pub bank_deg: f64,
    pub pitch_deg: f64,
    pub inceptors: Inceptors,
}

/// Target values a pilot is asked to hold during a segment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FlightTargets {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub altitude_ft: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub airspeed_kt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading_deg: Option<f64>,
}

/// A named analysis window on the session clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub t_start_ms: u64,
    pub t_end_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<FlightTargets>,
}

impl Segment {
    pub fn new(name: impl Into<String>, t_start_ms: u64, t_end_ms: u64) -> Self {
        Self {
            name: name.into(),
            t_start_ms,
            t_end_ms,
            targets: None,
        }
    }

    pub fn duration_ms(&self) -> u64 {
        self.t_end_ms.saturating_sub(self.t_start_ms)
    }

    /// Half-open membership test `[t_start, t_end)`.
    pub fn contains(&self, t_ms: u64) -> bool {
        t_ms >= self.t_start_ms && t_ms < self.t_end_ms
    }
}

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("segment file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("segment '{0}': t_start_ms must be < t_end_ms")]
    EmptyWindow(String),
    #[error("duplicate segment name '{0}'")]
    DuplicateName(String),
}

/// Parses a segment file: a JSON array of `{name, t_start_ms, t_end_ms, targets}`.
pub fn load_segments(text: &str) -> Result<Vec<Segment>, SegmentError> {
    let segments: Vec<Segment> = serde_json::from_str(text)?;
    let mut seen = HashSet::new();
    for s in &segments {
        if s.t_start_ms >= s.t_end_ms {
            return Err(SegmentError::EmptyWindow(s.name.clone()));
        }
        if !seen.insert(s.name.as_str()) {
            return Err(SegmentError::DuplicateName(s.name.clone()));
        }
    }
    Ok(segments)
}

/// A fixation with its AOI label.
#[derive(Debug, Clone, PartialEq)]
pub struct Fixation {
    pub t_start_ms: u64,
    pub t_end_ms: u64,
    pub centroid_surface: Option<String>,
    pub centroid_uv: Option<(f64, f64)>,
    pub aoi_id: String,
}

impl Fixation {
    pub fn duration_ms(&self) -> u64 {
        self.t_end_ms - self.t_start_ms
    }
}

/// One maximal stay of the gaze inside a single AOI.
#[derive(Debug, Clone, PartialEq)]
pub struct DwellVisit {
    pub aoi_id: String,
    pub t_start_ms: u64,
    pub t_end_ms: u64,
}

impl DwellVisit {
    pub fn duration_ms(&self) -> u64 {
        self.t_end_ms - self.t_start_ms
    }
}

/// A named sub-rectangle of a surface, in surface-local `(u0, v0, u1, v1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AoiChild {
    pub id: String,
    pub rect: [f64; 4],
}

impl AoiChild {
    pub fn contains(&self, u: f64, v: f64) -> bool {
        let [u0, v0, u1, v1] = self.rect;
        u >= u0 && u <= u1 && v >= v0 && v <= v1
    }

    pub fn center(&self) -> (f64, f64) {
        let [u0, v0, u1, v1] = self.rect;
        ((u0 + u1) / 2.0, (v0 + v1) / 2.0)
    }
}

/// A planar rectangular display or window in the cockpit frame.
///
/// The rectangle is `origin + u * e1 + v * e2` for `u, v` in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AoiSurface {
    pub id: String,
    pub origin: [f64; 3],
    pub e1: [f64; 3],
    pub e2: [f64; 3],
    /// Pixel width and height used for fixation-map binning.
    pub px: [u32; 2],
    #[serde(default)]
    pub children: Vec<AoiChild>,
}

impl AoiSurface {
    pub fn quad(&self) -> Quad<f64> {
        Quad::new(
            Vec3::from(self.origin),
            Vec3::from(self.e1),
            Vec3::from(self.e2),
        )
    }

    /// World point at surface coordinates `(u, v)`.
    pub fn point_at(&self, u: f64, v: f64) -> [f64; 3] {
        self.quad().point_at(u, v).into()
    }

    /// Child containing `(u, v)`, first in declaration order.
    pub fn child_at(&self, u: f64, v: f64) -> Option<&AoiChild> {
        self.children.iter().find(|c| c.contains(u, v))
    }

    pub fn child_label(&self, child: &AoiChild) -> String {
        format!("{}.{}", self.id, child.id)
    }
}

/// Reference to one declared AOI, returned by [`AoiModel::lookup`].
#[derive(Debug, Clone, Copy)]
pub struct AoiRef<'a> {
    pub surface: &'a AoiSurface,
    pub child: Option<&'a AoiChild>,
}

impl AoiRef<'_> {
    /// Surface coordinates of the AOI centre.
    pub fn center_uv(&self) -> (f64, f64) {
        self.child.map_or((0.5, 0.5), AoiChild::center)
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("AOI config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("AOI config has no surfaces")]
    NoSurfaces,
    #[error("invalid AOI id '{0}': ids must be non-empty, must not contain '.', and must not be 'OTH'")]
    InvalidId(String),
    #[error("duplicate AOI id '{0}'")]
    DuplicateId(String),
    #[error("surface '{0}' has degenerate edge vectors")]
    DegenerateQuad(String),
    #[error("surface '{0}' has zero pixel dimensions")]
    ZeroPixels(String),
    #[error("AOI '{id}': rect {rect:?} is not an ordered rectangle inside [0,1]^2")]
    RectOutOfRange { id: String, rect: [f64; 4] },
    #[error("AOIs '{0}' and '{1}' overlap")]
    Overlap(String, String),
    #[error("AOI '{0}' has a non-finite coordinate")]
    NonFinite(String),
}

/// Validated set of AOI surfaces. Immutable once loaded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AoiModel {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub surfaces: Vec<AoiSurface>,
}

/// Parses and validates an AOI configuration document.
pub fn load_aoi_model(config_text: &str) -> Result<AoiModel, ModelError> {
    let model: AoiModel = serde_json::from_str(config_text)?;
    model.validate()?;
    Ok(model)
}

/// Cockpit layout shipped with the crate: a reconstruction of a twin
/// turboprop flight deck (OTW window, PFD A1..A7, EICAS A1..A6, RTU,
/// autopilot panel, standby instrument, gear lever). Coordinates are
/// illustrative, not surveyed.
pub const DEFAULT_COCKPIT_JSON: &str = include_str!("../configs/cockpit_default.json");

pub fn default_cockpit() -> AoiModel {
    load_aoi_model(DEFAULT_COCKPIT_JSON).expect("bundled cockpit config is valid")
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && !id.contains('.') && id != OTH
}

fn rects_overlap(a: &[f64; 4], b: &[f64; 4]) -> bool {
    // Shared edges are allowed; only positive-area intersection counts.
    a[0] < b[2] && b[0] < a[2] && a[1] < b[3] && b[1] < a[3]
}

impl AoiModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.surfaces.is_empty() {
            return Err(ModelError::NoSurfaces);
        }
        let mut ids = HashSet::new();
        for s in &self.surfaces {
            if !valid_id(&s.id) {
                return Err(ModelError::InvalidId(s.id.clone()));
            }
            if !ids.insert(s.id.clone()) {
                return Err(ModelError::DuplicateId(s.id.clone()));
            }
            if s.origin.iter().chain(&s.e1).chain(&s.e2).any(|c| !c.is_finite()) {
                return Err(ModelError::NonFinite(s.id.clone()));
            }
            if !s.quad().is_non_degenerate() {
                return Err(ModelError::DegenerateQuad(s.id.clone()));
            }
            if s.px[0] == 0 || s.px[1] == 0 {
                return Err(ModelError::ZeroPixels(s.id.clone()));
            }
            for c in &s.children {
                let label = s.child_label(c);
                if !valid_id(&c.id) {
                    return Err(ModelError::InvalidId(label));
                }
                if !ids.insert(label.clone()) {
                    return Err(ModelError::DuplicateId(label));
                }
                let [u0, v0, u1, v1] = c.rect;
                if c.rect.iter().any(|x| !x.is_finite()) {
                    return Err(ModelError::NonFinite(label));
                }
                let inside = (0.0..=1.0).contains(&u0)
                    && (0.0..=1.0).contains(&u1)
                    && (0.0..=1.0).contains(&v0)
                    && (0.0..=1.0).contains(&v1);
                if !inside || u0 >= u1 || v0 >= v1 {
                    return Err(ModelError::RectOutOfRange {
                        id: label,
                        rect: c.rect,
                    });
                }
            }
            for (i, a) in s.children.iter().enumerate() {
                for b in &s.children[i + 1..] {
                    if rects_overlap(&a.rect, &b.rect) {
                        return Err(ModelError::Overlap(s.child_label(a), s.child_label(b)));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("AOI model serializes")
    }

    pub fn surface(&self, id: &str) -> Option<&AoiSurface> {
        self.surfaces.iter().find(|s| s.id == id)
    }

    /// Resolves `"SURF"` or `"SURF.CHILD"`.
    pub fn lookup(&self, id: &str) -> Option<AoiRef<'_>> {
        match id.split_once('.') {
            None => self.surface(id).map(|surface| AoiRef {
                surface,
                child: None,
            }),
            Some((sid, cid)) => {
                let surface = self.surface(sid)?;
                let child = surface.children.iter().find(|c| c.id == cid)?;
                Some(AoiRef {
                    surface,
                    child: Some(child),
                })
            }
        }
    }

    /// Every declared AOI id: surfaces followed by their children.
    pub fn aoi_ids(&self) -> Vec<String> {
        let mut out = Vec::new();
        for s in &self.surfaces {
            out.push(s.id.clone());
            out.extend(s.children.iter().map(|c| s.child_label(c)));
        }
        out
    }

    pub fn depth(&self) -> usize {
        if self.surfaces.iter().any(|s| !s.children.is_empty()) {
            2
        } else {
            1
        }
    }
}

/// Top-level surface of a label (`"PFD.A3"` -> `"PFD"`).
pub fn surface_of(label: &str) -> &str {
    label.split_once('.').map_or(label, |(s, _)| s)
}

/// Sums a per-AOI table into per-surface totals.
pub fn roll_up_to_surfaces(table: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for (k, v) in table {
        *out.entry(surface_of(k).to_string()).or_insert(0.0) += v;
    }
    out
}
