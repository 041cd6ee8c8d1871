//! Re-emits a recorded session through a hub as if it were live.

use std::time::Duration;

use thiserror::Error;
use tokio::time::{sleep_until, Instant};

use crate::hub::{ControlError, Hub};
use crate::recorder::RecordedSession;
use crate::wire::StatusSnapshot;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("speed must be positive, got {0}")]
    BadSpeed(f64),
    #[error("invalid AOI model: {0}")]
    Model(#[from] gazelab::model::ModelError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

/// Plays `session` into `hub`: installs its AOI model, starts a session,
/// feeds samples and annotations at their log times scaled by `1/speed`,
/// then stops. An infinite speed feeds without pacing.
///
/// Metrics depend on log timestamps only, so every speed yields the same
/// frames.
pub async fn replay(
    hub: &Hub,
    session: &RecordedSession,
    speed: f64,
) -> Result<StatusSnapshot, ReplayError> {
    if !(speed > 0.0) {
        return Err(ReplayError::BadSpeed(speed));
    }
    hub.set_aoi_model(session.model.clone())?;
    hub.start()?;
    let t0 = Instant::now();
    let first = session.gaze.first().map_or(0, |s| s.t_ms);
    let mut notes = session.annotations.iter().peekable();
    for s in &session.gaze {
        if speed.is_finite() {
            let offset = (s.t_ms - first) as f64 / speed;
            sleep_until(t0 + Duration::from_secs_f64(offset / 1000.0)).await;
        }
        while let Some(a) = notes.next_if(|a| a.t_ms <= s.t_ms) {
            hub.annotate_at(a.t_ms, &a.text)?;
        }
        hub.ingest_sample(s.clone());
    }
    for a in notes {
        hub.annotate_at(a.t_ms, &a.text)?;
    }
    Ok(hub.stop()?)
}
