//! Live session state shared by the ingest listener, control endpoints,
//! replay and push-channel subscribers.
//!
//! All mutation happens under one lock, so control commands are serialized
//! with ingest. Events go out on a `tokio::sync::broadcast` ring: each
//! subscriber reads at its own pace and a subscriber that falls more than
//! `queue_capacity` events behind loses the oldest ones, never blocking
//! ingest.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use gazelab::geometry::{classify, DEFAULT_QUALITY_FLOOR};
use gazelab::model::{AoiModel, GazeSample, ModelError, OTH};
use thiserror::Error;
use tokio::sync::broadcast;

use crate::metrics::{RollingWindow, DEFAULT_WINDOW_MS, FRAME_MS};
use crate::recorder::Recorder;
use crate::wire::{
    parse_packet, Annotation, Counters, GazeEvent, PushEvent, SessionStatus, StatusSnapshot,
};

pub const DEFAULT_QUEUE_CAPACITY: usize = 256;
pub const DEFAULT_GAZE_EVENT_HZ: f64 = 25.0;
/// Crossing more boundaries than this at once (a long data gap) emits only
/// the latest frame.
const MAX_CATCH_UP_FRAMES: u64 = 120;

#[derive(Debug, Clone)]
pub struct HubConfig {
    pub window_ms: u64,
    pub queue_capacity: usize,
    pub gaze_event_hz: f64,
    pub quality_floor: f64,
    /// Sessions are recorded under `<record_dir>/<session_id>/` when set.
    pub record_dir: Option<PathBuf>,
}

impl Default for HubConfig {
    fn default() -> Self {
        Self {
            window_ms: DEFAULT_WINDOW_MS,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            gaze_event_hz: DEFAULT_GAZE_EVENT_HZ,
            quality_floor: DEFAULT_QUALITY_FLOOR,
            record_dir: None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error("no session is running")]
    NotRunning,
    #[error("annotation text is empty")]
    EmptyAnnotation,
    #[error("cannot create recording: {0}")]
    Recording(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestOutcome {
    Accepted,
    Dropped,
    /// No session running; nothing counted.
    Ignored,
}

struct LiveSession {
    id: String,
    status: SessionStatus,
    t_start_unix_ms: u64,
    started: Instant,
    counters: Counters,
    window: RollingWindow,
    annotations: Vec<Annotation>,
    recorder: Option<Recorder>,
    first_t: Option<u64>,
    last_t: Option<u64>,
    next_gaze_slot: u64,
    next_boundary: u64,
    error: Option<String>,
}

struct State {
    model: AoiModel,
    session: Option<LiveSession>,
    sessions_started: u64,
}

pub struct Hub {
    cfg: HubConfig,
    tx: broadcast::Sender<Arc<PushEvent>>,
    state: Mutex<State>,
    producer: AtomicBool,
}

/// Held by the connected producer; releases the slot when dropped.
pub struct ProducerGuard {
    hub: Arc<Hub>,
}

impl Drop for ProducerGuard {
    fn drop(&mut self) {
        self.hub.producer.store(false, Ordering::SeqCst);
    }
}

fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

impl Hub {
    pub fn new(model: AoiModel, cfg: HubConfig) -> Arc<Self> {
        let (tx, _) = broadcast::channel(cfg.queue_capacity.max(1));
        Arc::new(Self {
            cfg,
            tx,
            state: Mutex::new(State {
                model,
                session: None,
                sessions_started: 0,
            }),
            producer: AtomicBool::new(false),
        })
    }

    pub fn config(&self) -> &HubConfig {
        &self.cfg
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Arc<PushEvent>> {
        self.tx.subscribe()
    }

    pub fn subscriber_count(&self) -> usize {
        self.tx.receiver_count()
    }

    fn emit(&self, e: PushEvent) {
        // No subscribers is fine.
        let _ = self.tx.send(Arc::new(e));
    }

    pub fn try_claim_producer(self: &Arc<Self>) -> Option<ProducerGuard> {
        self.producer
            .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
            .ok()
            .map(|_| ProducerGuard { hub: self.clone() })
    }

    fn snapshot(&self, st: &State) -> StatusSnapshot {
        let producer_connected = self.producer.load(Ordering::SeqCst);
        match &st.session {
            None => StatusSnapshot {
                session_id: None,
                status: SessionStatus::Idle,
                t_start_unix_ms: None,
                counters: Counters::default(),
                observed_rate_hz: None,
                producer_connected,
                annotations: 0,
                error: None,
            },
            Some(s) => StatusSnapshot {
                session_id: Some(s.id.clone()),
                status: s.status,
                t_start_unix_ms: Some(s.t_start_unix_ms),
                counters: s.counters,
                observed_rate_hz: match (s.first_t, s.last_t) {
                    (Some(a), Some(b)) if b > a => {
                        Some((s.counters.recorded.saturating_sub(1)) as f64 * 1000.0 / (b - a) as f64)
                    }
                    _ => None,
                },
                producer_connected,
                annotations: s.annotations.len(),
                error: s.error.clone(),
            },
        }
    }

    pub fn status(&self) -> StatusSnapshot {
        let st = self.lock();
        self.snapshot(&st)
    }

    pub fn aoi_model(&self) -> AoiModel {
        self.lock().model.clone()
    }

    /// Replaces the AOI model; samples arriving afterwards use it.
    pub fn set_aoi_model(&self, model: AoiModel) -> Result<(), ModelError> {
        model.validate()?;
        self.lock().model = model;
        Ok(())
    }

    /// Starts a new session. Returns `false` (and changes nothing) when one
    /// is already running.
    pub fn start(&self) -> Result<(bool, StatusSnapshot), ControlError> {
        let mut st = self.lock();
        if st.session.as_ref().is_some_and(|s| s.status == SessionStatus::Running) {
            return Ok((false, self.snapshot(&st)));
        }
        st.sessions_started += 1;
        let t_start_unix_ms = unix_ms();
        let id = format!("session-{}-{}", t_start_unix_ms, st.sessions_started);
        let recorder = match &self.cfg.record_dir {
            Some(root) => Some(
                Recorder::create(&root.join(&id), &st.model)
                    .map_err(|e| ControlError::Recording(e.to_string()))?,
            ),
            None => None,
        };
        st.session = Some(LiveSession {
            id,
            status: SessionStatus::Running,
            t_start_unix_ms,
            started: Instant::now(),
            counters: Counters::default(),
            window: RollingWindow::new(self.cfg.window_ms),
            annotations: Vec::new(),
            recorder,
            first_t: None,
            last_t: None,
            next_gaze_slot: 0,
            next_boundary: 0,
            error: None,
        });
        let snap = self.snapshot(&st);
        self.emit(PushEvent::Status(snap.clone()));
        Ok((true, snap))
    }

    /// Stops the running session and finalizes its recording.
    pub fn stop(&self) -> Result<StatusSnapshot, ControlError> {
        let mut st = self.lock();
        let s = match st.session.as_mut() {
            Some(s) if s.status == SessionStatus::Running => s,
            _ => return Err(ControlError::NotRunning),
        };
        s.status = SessionStatus::Stopped;
        if let Some(rec) = s.recorder.take() {
            if let Err(e) = rec.finish(&s.counters) {
                tracing::error!("finalizing recording failed: {e}");
                s.error = Some(format!("recording: {e}"));
            }
        }
        let snap = self.snapshot(&st);
        self.emit(PushEvent::Status(snap.clone()));
        Ok(snap)
    }

    /// Directory of the current (or last) session's recording.
    pub fn recording_dir(&self) -> Option<PathBuf> {
        let st = self.lock();
        let id = &st.session.as_ref()?.id;
        self.cfg.record_dir.as_ref().map(|r| r.join(id))
    }

    /// Annotates at the session clock: the latest sample time, or the
    /// wall time since start before any sample arrived.
    pub fn annotate(&self, text: &str) -> Result<Annotation, ControlError> {
        let t = {
            let st = self.lock();
            match &st.session {
                Some(s) if s.status == SessionStatus::Running => s
                    .last_t
                    .unwrap_or_else(|| s.started.elapsed().as_millis() as u64),
                _ => return Err(ControlError::NotRunning),
            }
        };
        self.annotate_at(t, text)
    }

    pub fn annotate_at(&self, t_ms: u64, text: &str) -> Result<Annotation, ControlError> {
        if text.trim().is_empty() {
            return Err(ControlError::EmptyAnnotation);
        }
        let mut st = self.lock();
        let s = match st.session.as_mut() {
            Some(s) if s.status == SessionStatus::Running => s,
            _ => return Err(ControlError::NotRunning),
        };
        let a = Annotation {
            t_ms,
            text: text.to_string(),
        };
        if let Some(rec) = s.recorder.as_mut() {
            if let Err(e) = rec.write_annotation(&a) {
                Self::fail_recording(s, e);
            }
        }
        s.annotations.push(a.clone());
        self.emit(PushEvent::Annotation(a.clone()));
        Ok(a)
    }

    pub fn annotations(&self) -> Vec<Annotation> {
        self.lock()
            .session
            .as_ref()
            .map(|s| s.annotations.clone())
            .unwrap_or_default()
    }

    fn fail_recording(s: &mut LiveSession, e: std::io::Error) {
        tracing::error!("recording failed, stopping session: {e}");
        s.error = Some(format!("recording: {e}"));
        s.status = SessionStatus::Stopped;
        s.recorder = None;
    }

    /// Parses and ingests one producer line.
    pub fn ingest_line(&self, line: &str) -> IngestOutcome {
        match parse_packet(line.trim(), self.cfg.quality_floor) {
            Ok(s) => self.ingest_sample(s),
            Err(_) => self.ingest_malformed(),
        }
    }

    /// Counts a packet that could not be read at all.
    pub fn ingest_malformed(&self) -> IngestOutcome {
        let mut st = self.lock();
        match st.session.as_mut() {
            Some(s) if s.status == SessionStatus::Running => {
                s.counters.received += 1;
                s.counters.dropped += 1;
                IngestOutcome::Dropped
            }
            _ => IngestOutcome::Ignored,
        }
    }

    pub fn ingest_sample(&self, sample: GazeSample) -> IngestOutcome {
        let mut guard = self.lock();
        let st = &mut *guard;
        let Some(s) = st.session.as_mut().filter(|s| s.status == SessionStatus::Running) else {
            return IngestOutcome::Ignored;
        };
        s.counters.received += 1;
        if s.last_t.is_some_and(|t| sample.t_ms <= t) {
            s.counters.dropped += 1;
            return IngestOutcome::Dropped;
        }
        if s.first_t.is_none() {
            s.first_t = Some(sample.t_ms);
            s.next_boundary = (sample.t_ms / FRAME_MS + 1) * FRAME_MS;
        }

        // Frames for every whole second that ended before this sample.
        if sample.t_ms >= s.next_boundary {
            let crossed = (sample.t_ms - s.next_boundary) / FRAME_MS + 1;
            if crossed > MAX_CATCH_UP_FRAMES {
                s.next_boundary += (crossed - 1) * FRAME_MS;
            }
            let start = s.first_t.unwrap_or(0);
            while sample.t_ms >= s.next_boundary {
                let frame = s.window.frame(s.next_boundary, start);
                self.emit(PushEvent::Metrics(frame));
                s.next_boundary += FRAME_MS;
            }
            if let Some(rec) = s.recorder.as_mut() {
                if let Err(e) = rec.flush() {
                    Self::fail_recording(s, e);
                }
            }
        }

        if let Some(rec) = s.recorder.as_mut() {
            if let Err(e) = rec.write_sample(&sample) {
                Self::fail_recording(s, e);
                let snap = self.snapshot(st);
                self.emit(PushEvent::Status(snap));
                return IngestOutcome::Dropped;
            }
        }
        s.counters.recorded += 1;
        s.last_t = Some(sample.t_ms);

        let c = classify(&sample, &st.model, self.cfg.quality_floor);
        if c.label == OTH {
            s.counters.classified_oth += 1;
        }
        if sample.t_ms >= s.next_gaze_slot {
            let slot = (1000.0 / self.cfg.gaze_event_hz).round().max(1.0) as u64;
            s.next_gaze_slot = (sample.t_ms / slot + 1) * slot;
            self.emit(PushEvent::Gaze(GazeEvent {
                t_ms: sample.t_ms,
                aoi: c.label.clone(),
                surface: c.hit.as_ref().map(|h| h.surface_id.clone()),
                uv: c.hit.as_ref().map(|h| [h.uv.0, h.uv.1]),
            }));
        }
        s.window.push(sample, c);
        IngestOutcome::Accepted
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::WirePacket;
    use gazelab::model::default_cockpit;
    use tokio::sync::broadcast::error::TryRecvError;

    fn packet(t: u64) -> String {
        WirePacket {
            t_ms: t,
            ox: 0.0,
            oy: 0.0,
            oz: 0.0,
            dx: 0.0,
            dy: 0.3,
            dz: 1.0,
            pupil_mm: Some(4.0),
            eyelid: Some(1.0),
            q: 1.0,
        }
        .to_line()
    }

    fn drain(rx: &mut broadcast::Receiver<Arc<PushEvent>>) -> Vec<Arc<PushEvent>> {
        let mut out = Vec::new();
        loop {
            match rx.try_recv() {
                Ok(e) => out.push(e),
                Err(TryRecvError::Lagged(_)) => continue,
                Err(_) => return out,
            }
        }
    }

    #[test]
    fn idle_hub_ignores_samples() {
        let hub = Hub::new(default_cockpit(), HubConfig::default());
        assert_eq!(hub.ingest_line(&packet(0)), IngestOutcome::Ignored);
        assert_eq!(hub.status().counters, Counters::default());
    }

    #[test]
    fn counters_and_decimation() {
        let hub = Hub::new(default_cockpit(), HubConfig { queue_capacity: 4096, ..HubConfig::default() });
        let mut rx = hub.subscribe();
        hub.start().unwrap();
        for i in 0..240 {
            hub.ingest_line(&packet(i * 1000 / 60));
        }
        hub.ingest_line("{\"t_ms\":1}");
        hub.ingest_line(&packet(5)); // out of order
        let c = hub.status().counters;
        assert_eq!((c.received, c.recorded, c.dropped), (242, 240, 2));
        let events = drain(&mut rx);
        let gaze = events.iter().filter(|e| matches!(***e, PushEvent::Gaze(_))).count();
        assert!((99..=101).contains(&gaze), "{gaze}");
        let frames: Vec<u64> = events
            .iter()
            .filter_map(|e| match &**e {
                PushEvent::Metrics(m) => Some(m.t_ms),
                _ => None,
            })
            .collect();
        assert_eq!(frames, vec![1000, 2000, 3000]);
    }

    #[test]
    fn start_twice_is_a_no_op_and_stop_needs_running() {
        let hub = Hub::new(default_cockpit(), HubConfig::default());
        assert_eq!(hub.stop(), Err(ControlError::NotRunning));
        let (fresh, a) = hub.start().unwrap();
        let (again, b) = hub.start().unwrap();
        assert!(fresh && !again);
        assert_eq!(a.session_id, b.session_id);
        hub.stop().unwrap();
        assert_eq!(hub.annotate("late"), Err(ControlError::NotRunning));
    }

    #[test]
    fn stalled_subscriber_keeps_newest_events() {
        let hub = Hub::new(default_cockpit(), HubConfig::default());
        let mut rx = hub.subscribe();
        hub.start().unwrap();
        for i in 0..20_000u64 {
            hub.ingest_line(&packet(i * 1000 / 60));
        }
        assert_eq!(hub.status().counters.recorded, 20_000);
        let mut lagged = false;
        let mut got = Vec::new();
        loop {
            match rx.try_recv() {
                Ok(e) => got.push(e),
                Err(TryRecvError::Lagged(_)) => lagged = true,
                Err(_) => break,
            }
        }
        assert!(lagged);
        assert_eq!(got.len(), DEFAULT_QUEUE_CAPACITY);
        let last = got.iter().rev().find_map(|e| match &**e {
            PushEvent::Gaze(g) => Some(g.t_ms),
            _ => None,
        });
        let newest = 19_999 * 1000 / 60;
        assert!(last.is_some_and(|t| t + 40 > newest), "{last:?}");
    }

    #[test]
    fn aoi_edit_changes_later_labels() {
        let hub = Hub::new(default_cockpit(), HubConfig::default());
        let mut rx = hub.subscribe();
        hub.start().unwrap();
        let line = |t: u64| {
            WirePacket { t_ms: t, ox: 0.0, oy: 0.0, oz: 0.0, dx: 0.0, dy: 0.3, dz: 1.0, pupil_mm: None, eyelid: None, q: 1.0 }
                .to_line()
        };
        hub.ingest_line(&line(0));
        let mut m = hub.aoi_model();
        m.surfaces.retain(|s| s.id != "OTW");
        hub.set_aoi_model(m).unwrap();
        hub.ingest_line(&line(100));
        let labels: Vec<String> = drain(&mut rx)
            .iter()
            .filter_map(|e| match &**e {
                PushEvent::Gaze(g) => Some(g.aoi.clone()),
                _ => None,
            })
            .collect();
        assert_eq!(labels, vec!["OTW".to_string(), OTH.to_string()]);
    }
}
