//! Recorded log parsing, clock alignment, outlier fencing and resampling.

use std::collections::HashMap;
use std::io::{Read, Write};

use thiserror::Error;

use crate::geometry::Vec3;
use crate::model::{FlightSample, GazeSample, Inceptors, Segment};
use crate::scalar::Real;

pub const GAZE_COLUMNS: [&str; 10] = [
    "t_ms", "ox", "oy", "oz", "dx", "dy", "dz", "pupil_mm", "eyelid", "quality",
];

pub const FLIGHT_COLUMNS: [&str; 10] = [
    "t_ms",
    "altitude_ft",
    "airspeed_kt",
    "heading_deg",
    "bank_deg",
    "pitch_deg",
    "pitch_in",
    "roll_in",
    "rudder_in",
    "throttle_in",
];

/// Pupil diameters outside this envelope are treated as absent.
pub const PUPIL_PLAUSIBLE_MM: (f64, f64) = (1.0, 10.0);

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("empty log")]
    Empty,
    #[error("missing column '{0}'")]
    MissingColumn(&'static str),
    #[error("line {line}: {msg}")]
    Malformed { line: u64, msg: String },
    #[error("line {line}: timestamp {t_ms} is not after previous {prev_ms}")]
    TimestampOrder { line: u64, t_ms: u64, prev_ms: u64 },
    #[error("stream '{0}' is empty")]
    EmptyStream(&'static str),
    #[error("gaze and flight streams do not overlap after applying the offset")]
    NoOverlap,
    #[error("series too short: need at least {need} values, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("resample rate must be positive")]
    BadRate,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy)]
pub struct GazeParseOptions {
    /// Rows with quality below this value are kept but flagged.
    pub quality_floor: f64,
}

impl Default for GazeParseOptions {
    fn default() -> Self {
        Self {
            quality_floor: crate::geometry::DEFAULT_QUALITY_FLOOR,
        }
    }
}

struct Table<R: Read> {
    reader: csv::Reader<R>,
    index: HashMap<String, usize>,
}

impl<R: Read> Table<R> {
    fn open(input: R, required: &[&'static str]) -> Result<Self, IngestError> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(input);
        let headers = reader.headers()?.clone();
        if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
            return Err(IngestError::Empty);
        }
        let index: HashMap<String, usize> = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.to_string(), i))
            .collect();
        for col in required {
            if !index.contains_key(*col) {
                return Err(IngestError::MissingColumn(col));
            }
        }
        Ok(Self { reader, index })
    }
}

struct Row<'a> {
    rec: &'a csv::StringRecord,
    index: &'a HashMap<String, usize>,
    line: u64,
}

impl Row<'_> {
    fn raw(&self, col: &str) -> Result<&str, IngestError> {
        let i = self.index[col];
        self.rec.get(i).ok_or_else(|| IngestError::Malformed {
            line: self.line,
            msg: format!("missing field '{col}'"),
        })
    }

    fn opt_f64(&self, col: &str) -> Result<Option<f64>, IngestError> {
        let s = self.raw(col)?;
        if s.is_empty() {
            return Ok(None);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Some(v)),
            _ => Err(IngestError::Malformed {
                line: self.line,
                msg: format!("field '{col}': invalid number '{s}'"),
            }),
        }
    }

    fn f64(&self, col: &str) -> Result<f64, IngestError> {
        self.opt_f64(col)?.ok_or_else(|| IngestError::Malformed {
            line: self.line,
            msg: format!("field '{col}' is required"),
        })
    }

    fn t_ms(&self) -> Result<u64, IngestError> {
        let s = self.raw("t_ms")?;
        s.parse::<u64>().map_err(|_| IngestError::Malformed {
            line: self.line,
            msg: format!("field 't_ms': invalid timestamp '{s}'"),
        })
    }
}

fn for_each_row<R: Read, T>(
    input: R,
    required: &[&'static str],
    mut parse: impl FnMut(&Row<'_>) -> Result<T, IngestError>,
    t_of: impl Fn(&T) -> u64,
) -> Result<Vec<T>, IngestError> {
    let mut table = Table::open(input, required)?;
    let mut out: Vec<T> = Vec::new();
    let mut rec = csv::StringRecord::new();
    loop {
        if !table.reader.read_record(&mut rec)? {
            break;
        }
        let line = rec.position().map_or(0, |p| p.line());
        let row = Row {
            rec: &rec,
            index: &table.index,
            line,
        };
        let item = parse(&row)?;
        if let Some(prev) = out.last() {
            let (p, t) = (t_of(prev), t_of(&item));
            if t <= p {
                return Err(IngestError::TimestampOrder {
                    line,
                    t_ms: t,
                    prev_ms: p,
                });
            }
        }
        out.push(item);
    }
    if out.is_empty() {
        return Err(IngestError::Empty);
    }
    Ok(out)
}

/// Builds a gaze sample from raw fields: normalizes the direction (left
/// bit-exact when already unit to 1e-12) and applies the pupil
/// plausibility envelope.
pub fn gaze_from_fields(
    t_ms: u64,
    origin: [f64; 3],
    dir: [f64; 3],
    pupil_mm: Option<f64>,
    eyelid: Option<f64>,
    quality: f64,
    quality_floor: f64,
) -> Option<GazeSample> {
    let v = Vec3::from(dir);
    let dir = if (v.norm() - 1.0).abs() <= 1e-12 { v } else { v.normalized()? };
    let pupil_mm =
        pupil_mm.filter(|p| (PUPIL_PLAUSIBLE_MM.0..=PUPIL_PLAUSIBLE_MM.1).contains(p));
    Some(GazeSample {
        t_ms,
        origin,
        dir: dir.into(),
        pupil_mm,
        eyelid_open: eyelid.map(|e| e.clamp(0.0, 1.0)),
        quality: quality.clamp(0.0, 1.0),
        low_quality: quality < quality_floor,
    })
}

/// Parses a gaze CSV log (see [`GAZE_COLUMNS`]). Lines starting with `#`
/// are ignored.
pub fn parse_gaze_log<R: Read>(
    input: R,
    opts: GazeParseOptions,
) -> Result<Vec<GazeSample>, IngestError> {
    for_each_row(
        input,
        &GAZE_COLUMNS,
        |r| {
            let t_ms = r.t_ms()?;
            let origin = [r.f64("ox")?, r.f64("oy")?, r.f64("oz")?];
            let dir = [r.f64("dx")?, r.f64("dy")?, r.f64("dz")?];
            gaze_from_fields(
                t_ms,
                origin,
                dir,
                r.opt_f64("pupil_mm")?,
                r.opt_f64("eyelid")?,
                r.opt_f64("quality")?.unwrap_or(1.0),
                opts.quality_floor,
            )
            .ok_or_else(|| IngestError::Malformed {
                line: r.line,
                msg: "zero gaze direction".into(),
            })
        },
        |s| s.t_ms,
    )
}

/// Wraps an angle in degrees into [0, 360).
pub fn wrap_heading(deg: f64) -> f64 {
    let w = deg.rem_euclid(360.0);
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// Parses a flight CSV log (see [`FLIGHT_COLUMNS`]).
pub fn parse_flight_log<R: Read>(input: R) -> Result<Vec<FlightSample>, IngestError> {
    for_each_row(
        input,
        &FLIGHT_COLUMNS,
        |r| {
            Ok(FlightSample {
                t_ms: r.t_ms()?,
                altitude_ft: r.f64("altitude_ft")?,
                airspeed_kt: r.f64("airspeed_kt")?,
                heading_deg: wrap_heading(r.f64("heading_deg")?),
                bank_deg: r.f64("bank_deg")?,
                pitch_deg: r.f64("pitch_deg")?,
                inceptors: Inceptors {
                    pitch: r.f64("pitch_in")?,
                    roll: r.f64("roll_in")?,
                    rudder: r.f64("rudder_in")?,
                    throttle: r.f64("throttle_in")?,
                },
            })
        },
        |s| s.t_ms,
    )
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn gaze_csv_header() -> String {
    GAZE_COLUMNS.join(",")
}

/// One gaze CSV data row (no trailing newline).
pub fn gaze_csv_row(s: &GazeSample) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        s.t_ms,
        s.origin[0],
        s.origin[1],
        s.origin[2],
        s.dir[0],
        s.dir[1],
        s.dir[2],
        opt(s.pupil_mm),
        opt(s.eyelid_open),
        s.quality
    )
}

pub fn write_gaze_log<W: Write>(mut w: W, samples: &[GazeSample]) -> std::io::Result<()> {
    writeln!(w, "{}", gaze_csv_header())?;
    for s in samples {
        writeln!(w, "{}", gaze_csv_row(s))?;
    }
    Ok(())
}

pub fn write_flight_log<W: Write>(mut w: W, samples: &[FlightSample]) -> std::io::Result<()> {
    writeln!(w, "{}", FLIGHT_COLUMNS.join(","))?;
    for s in samples {
        let i = &s.inceptors;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            s.t_ms,
            s.altitude_ft,
            s.airspeed_kt,
            s.heading_deg,
            s.bank_deg,
            s.pitch_deg,
            i.pitch,
            i.roll,
            i.rudder,
            i.throttle
        )?;
    }
    Ok(())
}

/// Offsets applied when bringing both streams onto the session clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClockPolicy {
    /// Added to every gaze timestamp.
    pub gaze_offset_ms: i64,
    /// Subtracted from both streams afterwards so the session starts at 0.
    pub rebase_ms: u64,
}

#[derive(Debug, Clone)]
pub struct AlignedSession {
    pub gaze: Vec<GazeSample>,
    pub flight: Vec<FlightSample>,
    pub t0_policy: ClockPolicy,
    /// Analysis windows on the aligned clock.
    pub segments: Vec<Segment>,
}

impl AlignedSession {
    pub fn with_segments(mut self, segments: Vec<Segment>) -> Self {
        self.segments = segments;
        self
    }

    pub fn end_ms(&self) -> u64 {
        let g = self.gaze.last().map_or(0, |s| s.t_ms);
        let f = self.flight.last().map_or(0, |s| s.t_ms);
        g.max(f)
    }
}

/// Shifts gaze timestamps by a fixed offset, trims both streams to their
/// common span and rebases the result so the session starts at t = 0.
pub fn align_streams(
    gaze: Vec<GazeSample>,
    flight: Vec<FlightSample>,
    gaze_t0_offset_ms: i64,
) -> Result<AlignedSession, IngestError> {
    if gaze.is_empty() {
        return Err(IngestError::EmptyStream("gaze"));
    }
    if flight.is_empty() {
        return Err(IngestError::EmptyStream("flight"));
    }
    let shifted: Vec<(i64, GazeSample)> = gaze
        .into_iter()
        .map(|s| (s.t_ms as i64 + gaze_t0_offset_ms, s))
        .collect();
    let g_first = shifted[0].0;
    let g_last = shifted[shifted.len() - 1].0;
    let f_first = flight[0].t_ms as i64;
    let f_last = flight[flight.len() - 1].t_ms as i64;
    let start = g_first.max(f_first).max(0);
    let end = g_last.min(f_last);
    if end < start {
        return Err(IngestError::NoOverlap);
    }
    let gaze: Vec<GazeSample> = shifted
        .into_iter()
        .filter(|(t, _)| (start..=end).contains(t))
        .map(|(t, mut s)| {
            s.t_ms = (t - start) as u64;
            s
        })
        .collect();
    let flight: Vec<FlightSample> = flight
        .into_iter()
        .filter(|s| (start..=end).contains(&(s.t_ms as i64)))
        .map(|mut s| {
            s.t_ms -= start as u64;
            s
        })
        .collect();
    if gaze.is_empty() || flight.is_empty() {
        return Err(IngestError::NoOverlap);
    }
    Ok(AlignedSession {
        gaze,
        flight,
        t0_policy: ClockPolicy {
            gaze_offset_ms: gaze_t0_offset_ms,
            rebase_ms: start as u64,
        },
        segments: Vec::new(),
    })
}

/// Quantile by linear interpolation between order statistics at
/// position `p * (n - 1)` of the sorted sample.
pub fn quantile_sorted<T: Real>(sorted: &[T], p: T) -> T {
    let n = sorted.len();
    let pos = p * T::from_count(n - 1);
    let lo = pos.floor();
    let frac = pos - lo;
    let i = lo.to_usize().unwrap_or(0).min(n - 1);
    if i + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[i] + (sorted[i + 1] - sorted[i]) * frac
    }
}

/// Outer fences `[Q1 - 3 IQR, Q3 + 3 IQR]` of a sample.
pub fn outer_fences<T: Real>(values: &[T]) -> (T, T) {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let q1 = quantile_sorted(&v, T::lit(0.25));
    let q3 = quantile_sorted(&v, T::lit(0.75));
    let k = T::lit(3.0) * (q3 - q1);
    (q1 - k, q3 + k)
}

/// Removes outer-fence outliers, repeating until no value lies outside the
/// fences of the remaining data. Returns the kept series in input order and
/// the indices (into the input) that were removed, ascending.
pub fn outer_fence_filter<T: Real>(
    series: &[(u64, T)],
) -> Result<(Vec<(u64, T)>, Vec<usize>), IngestError> {
    if series.len() < 4 {
        return Err(IngestError::TooShort {
            need: 4,
            got: series.len(),
        });
    }
    let mut keep: Vec<usize> = (0..series.len()).collect();
    loop {
        if keep.len() < 4 {
            break;
        }
        let vals: Vec<T> = keep.iter().map(|&i| series[i].1).collect();
        let (lo, hi) = outer_fences(&vals);
        let before = keep.len();
        keep.retain(|&i| series[i].1 >= lo && series[i].1 <= hi);
        if keep.len() == before {
            break;
        }
    }
    let mut removed = Vec::new();
    let mut k = keep.iter().peekable();
    for i in 0..series.len() {
        if k.peek() == Some(&&i) {
            k.next();
        } else {
            removed.push(i);
        }
    }
    Ok((keep.into_iter().map(|i| series[i]).collect(), removed))
}

/// Series on a uniform time grid; absent values mark unbridged gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformSeries<T> {
    pub t0_ms: u64,
    pub rate_hz: T,
    pub values: Vec<Option<T>>,
}

impl<T: Real> UniformSeries<T> {
    pub fn time_ms(&self, k: usize) -> T {
        T::from_u64(self.t0_ms).unwrap() + T::from_count(k) * T::lit(1000.0) / self.rate_hz
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn absent_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    /// Values with internal gaps filled by linear interpolation and edge
    /// gaps by the nearest present value. `None` when nothing is present.
    pub fn filled(&self) -> Option<Vec<T>> {
        let present: Vec<usize> = (0..self.values.len())
            .filter(|&i| self.values[i].is_some())
            .collect();
        let (&first, &last) = (present.first()?, present.last()?);
        let mut out = Vec::with_capacity(self.values.len());
        let mut next = 0usize;
        for i in 0..self.values.len() {
            if let Some(v) = self.values[i] {
                out.push(v);
                continue;
            }
            if i < first {
                out.push(self.values[first].unwrap());
            } else if i > last {
                out.push(self.values[last].unwrap());
            } else {
                while present[next] < i {
                    next += 1;
                }
                let (a, b) = (present[next - 1], present[next]);
                let (va, vb) = (self.values[a].unwrap(), self.values[b].unwrap());
                let w = T::from_count(i - a) / T::from_count(b - a);
                out.push(va + (vb - va) * w);
            }
        }
        Some(out)
    }
}

/// Linearly interpolates `series` onto a uniform grid starting at its first
/// timestamp. Grid points whose bracketing samples are more than
/// `max_gap_ms` apart are left absent.
pub fn resample_uniform<T: Real>(
    series: &[(u64, T)],
    rate_hz: T,
    max_gap_ms: u64,
) -> Result<UniformSeries<T>, IngestError> {
    if !(rate_hz > T::zero()) || !rate_hz.is_finite() {
        return Err(IngestError::BadRate);
    }
    let (&(t0, _), &(t_last, _)) = match (series.first(), series.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(IngestError::EmptyStream("resample input")),
    };
    let step = T::lit(1000.0) / rate_hz;
    let span = T::from_u64(t_last - t0).unwrap();
    // Small slack so the last sample lands on the grid despite rounding.
    let n = ((span / step) + T::lit(1e-9)).floor().to_usize().unwrap_or(0) + 1;
    let mut values = Vec::with_capacity(n);
    let mut j = 0usize;
    for k in 0..n {
        let rel = T::from_count(k) * step;
        // Bracket: series[j].t <= t < series[j+1].t
        while j + 1 < series.len() && T::from_u64(series[j + 1].0 - t0).unwrap() <= rel {
            j += 1;
        }
        let (ta, va) = series[j];
        let ta_rel = T::from_u64(ta - t0).unwrap();
        if (rel - ta_rel).abs() <= T::lit(1e-9) * step {
            values.push(Some(va));
            continue;
        }
        let Some(&(tb, vb)) = series.get(j + 1) else {
            values.push(None);
            continue;
        };
        if tb - ta > max_gap_ms {
            values.push(None);
            continue;
        }
        let tb_rel = T::from_u64(tb - t0).unwrap();
        let w = (rel - ta_rel) / (tb_rel - ta_rel);
        values.push(Some(va + (vb - va) * w));
    }
    Ok(UniformSeries {
        t0_ms: t0,
        rate_hz,
        values,
    })
}

/// Pupil series with blinks removed: samples with no pupil value or with
/// eyelid opening below 0.1 are dropped.
pub fn pupil_series(gaze: &[GazeSample]) -> Vec<(u64, f64)> {
    gaze.iter()
        .filter(|s| !s.is_blink())
        .filter_map(|s| s.pupil_mm.map(|p| (s.t_ms, p)))
        .collect()
}
