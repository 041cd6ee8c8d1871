//! Live gaze service: TCP ingest, recording, rolling 1 Hz analytics, a
//! WebSocket push channel with HTTP control endpoints, and replay.

pub mod hub;
pub mod metrics;
pub mod recorder;
pub mod replay;
pub mod server;
pub mod wire;

pub use hub::{ControlError, Hub, HubConfig, IngestOutcome};
pub use recorder::{load_session, RecordedSession, Recorder};
pub use replay::replay;
pub use server::Server;
pub use wire::{MetricsFrame, PushEvent, StatusSnapshot, WirePacket};
