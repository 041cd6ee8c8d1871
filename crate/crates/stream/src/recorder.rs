//! Session recording: the gaze CSV log, annotations and the AOI model in use.
//!
//! A recording directory holds `gaze.csv` (the ingest format, finished by a
//! `# received=.. recorded=.. dropped=..` footer), `annotations.csv`
//! (`t_ms,text`) and `aoi.json`.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use gazelab::ingest::{gaze_csv_header, gaze_csv_row, parse_gaze_log, GazeParseOptions, IngestError};
use gazelab::model::{default_cockpit, load_aoi_model, AoiModel, GazeSample, ModelError};
use thiserror::Error;

use crate::wire::{Annotation, Counters};

pub const GAZE_FILE: &str = "gaze.csv";
pub const ANNOTATIONS_FILE: &str = "annotations.csv";
pub const AOI_FILE: &str = "aoi.json";

pub struct Recorder {
    dir: PathBuf,
    gaze: BufWriter<File>,
    annotations: csv::Writer<File>,
    rows: u64,
}

impl Recorder {
    pub fn create(dir: &Path, model: &AoiModel) -> io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(AOI_FILE), model.to_json())?;
        let mut gaze = BufWriter::new(File::create(dir.join(GAZE_FILE))?);
        writeln!(gaze, "{}", gaze_csv_header())?;
        let mut annotations = csv::Writer::from_writer(File::create(dir.join(ANNOTATIONS_FILE))?);
        annotations.write_record(["t_ms", "text"])?;
        annotations.flush()?;
        Ok(Self {
            dir: dir.to_path_buf(),
            gaze,
            annotations,
            rows: 0,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }

    pub fn write_sample(&mut self, s: &GazeSample) -> io::Result<()> {
        writeln!(self.gaze, "{}", gaze_csv_row(s))?;
        self.rows += 1;
        Ok(())
    }

    pub fn write_annotation(&mut self, a: &Annotation) -> io::Result<()> {
        self.annotations.write_record([a.t_ms.to_string(), a.text.clone()])?;
        self.annotations.flush()
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.gaze.flush()
    }

    /// Writes the footer and closes both files.
    pub fn finish(mut self, c: &Counters) -> io::Result<()> {
        writeln!(self.gaze, "{}", footer_line(c))?;
        self.gaze.flush()?;
        self.annotations.flush()
    }
}

pub fn footer_line(c: &Counters) -> String {
    format!("# received={} recorded={} dropped={}", c.received, c.recorded, c.dropped)
}

/// Counts from a footer line, if `line` is one.
pub fn parse_footer(line: &str) -> Option<Counters> {
    let rest = line.trim().strip_prefix('#')?;
    let mut c = Counters::default();
    let mut seen = 0;
    for part in rest.split_whitespace() {
        let (k, v) = part.split_once('=')?;
        let v: u64 = v.parse().ok()?;
        match k {
            "received" => c.received = v,
            "recorded" => c.recorded = v,
            "dropped" => c.dropped = v,
            _ => return None,
        }
        seen += 1;
    }
    (seen == 3).then_some(c)
}

#[derive(Debug, Error)]
pub enum SessionLoadError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Gaze { path: PathBuf, source: IngestError },
    #[error("{}: {source}", path.display())]
    Annotations { path: PathBuf, source: csv::Error },
    #[error("{}: {source}", path.display())]
    Model { path: PathBuf, source: ModelError },
}

/// A finished (or synthesized) session read back from disk.
#[derive(Debug, Clone)]
pub struct RecordedSession {
    pub gaze: Vec<GazeSample>,
    pub annotations: Vec<Annotation>,
    /// `aoi.json` when present, else the bundled cockpit.
    pub model: AoiModel,
    pub footer: Option<Counters>,
}

pub fn load_session(dir: &Path) -> Result<RecordedSession, SessionLoadError> {
    let gaze_path = dir.join(GAZE_FILE);
    let text = std::fs::read_to_string(&gaze_path).map_err(|source| SessionLoadError::Io {
        path: gaze_path.clone(),
        source,
    })?;
    // A session stopped before any sample is header plus footer.
    let has_rows = text
        .lines()
        .skip(1)
        .any(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let gaze = if has_rows {
        parse_gaze_log(text.as_bytes(), GazeParseOptions::default()).map_err(|source| {
            SessionLoadError::Gaze {
                path: gaze_path.clone(),
                source,
            }
        })?
    } else {
        Vec::new()
    };
    let footer = text.lines().rev().find(|l| !l.trim().is_empty()).and_then(parse_footer);

    let ann_path = dir.join(ANNOTATIONS_FILE);
    let mut annotations = Vec::new();
    if ann_path.exists() {
        let err = |source| SessionLoadError::Annotations {
            path: ann_path.clone(),
            source,
        };
        let mut r = csv::Reader::from_path(&ann_path).map_err(err)?;
        for rec in r.deserialize::<(u64, String)>() {
            let (t_ms, text) = rec.map_err(err)?;
            annotations.push(Annotation { t_ms, text });
        }
    }

    let aoi_path = dir.join(AOI_FILE);
    let model = if aoi_path.exists() {
        let text = std::fs::read_to_string(&aoi_path).map_err(|source| SessionLoadError::Io {
            path: aoi_path.clone(),
            source,
        })?;
        load_aoi_model(&text).map_err(|source| SessionLoadError::Model {
            path: aoi_path.clone(),
            source,
        })?
    } else {
        default_cockpit()
    };
    Ok(RecordedSession {
        gaze,
        annotations,
        model,
        footer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t: u64) -> GazeSample {
        GazeSample {
            t_ms: t,
            origin: [0.0; 3],
            dir: [0.6, 0.0, 0.8],
            pupil_mm: Some(3.5),
            eyelid_open: None,
            quality: 1.0,
            low_quality: false,
        }
    }

    #[test]
    fn footer_round_trips() {
        let c = Counters {
            received: 7,
            dropped: 2,
            classified_oth: 0,
            recorded: 5,
        };
        assert_eq!(parse_footer(&footer_line(&c)), Some(c));
        assert_eq!(parse_footer("# hello"), None);
        assert_eq!(parse_footer("1,2,3"), None);
    }

    #[test]
    fn empty_session_is_a_valid_log() {
        let dir = tempfile::tempdir().unwrap();
        let rec = Recorder::create(dir.path(), &default_cockpit()).unwrap();
        rec.finish(&Counters::default()).unwrap();
        let text = std::fs::read_to_string(dir.path().join(GAZE_FILE)).unwrap();
        assert_eq!(text.lines().count(), 2);
        let s = load_session(dir.path()).unwrap();
        assert!(s.gaze.is_empty());
        assert_eq!(s.footer, Some(Counters::default()));
    }

    #[test]
    fn samples_and_annotations_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let mut rec = Recorder::create(dir.path(), &default_cockpit()).unwrap();
        for t in [0, 25, 50] {
            rec.write_sample(&sample(t)).unwrap();
        }
        rec.write_annotation(&Annotation {
            t_ms: 5000,
            text: "stall onset, left wing".into(),
        })
        .unwrap();
        let c = Counters {
            received: 4,
            dropped: 1,
            classified_oth: 0,
            recorded: 3,
        };
        rec.finish(&c).unwrap();
        let s = load_session(dir.path()).unwrap();
        assert_eq!(s.gaze, vec![sample(0), sample(25), sample(50)]);
        assert_eq!(s.annotations[0].text, "stall onset, left wing");
        assert_eq!(s.annotations[0].t_ms, 5000);
        assert_eq!(s.footer, Some(c));
        assert_eq!(s.model, default_cockpit());
    }
}
