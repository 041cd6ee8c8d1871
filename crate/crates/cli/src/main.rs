use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gazelab::analysis::{analyze_session, AnalysisParams, MapMode};
use gazelab::ingest::{parse_flight_log, parse_gaze_log, GazeParseOptions};
use gazelab::model::{default_cockpit, load_aoi_model, load_segments, AoiModel};
use gazelab::perf::PerfParams;
use gazelab::pupil::{NormalizationBasis, PupilPipelineParams, Taper, WelchParams};
use gazelab::report::{write_report, InputFile};
use gazelab::scan::FixationParams;
use gazelab::stats::TTestVariant;
use gazelab::synth::{generate, preset, ScenarioScript, PRESETS};
use gazelab_stream::recorder::AOI_FILE;
use gazelab_stream::{load_session, replay, Hub, HubConfig, Server};
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(name = "gazelab", version, about = "Cockpit eye-gaze and flight telemetry analytics")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Analyze a recorded session and write CSV/PGM/text reports.
    Analyze(AnalyzeArgs),
    /// Generate a synthetic session with known ground truth.
    Synth(SynthArgs),
    /// Run the live ingest, recording and push service.
    Serve(ServeArgs),
    /// Re-emit a recorded session through the push service.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MapModeArg {
    Fixation,
    Sample,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaperArg {
    Hann,
    Hamming,
    Rectangular,
}

#[derive(Clone, Copy, ValueEnum)]
enum TTestArg {
    Pooled,
    Welch,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    gaze: PathBuf,
    #[arg(long)]
    flight: PathBuf,
    #[arg(long)]
    aoi: PathBuf,
    #[arg(long)]
    segments: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Session name used in report rows; defaults to the gaze file stem.
    #[arg(long)]
    session: Option<String>,
    /// Restrict outputs to one segment.
    #[arg(long)]
    segment: Option<String>,
    /// Pair of segments whose pupil medians are compared, as A:B. Repeatable.
    #[arg(long = "compare", value_name = "A:B")]
    compare: Vec<String>,
    /// Added to gaze timestamps before alignment with the flight log.
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    offset_ms: i64,
    #[arg(long, default_value_t = GazeParseOptions::default().quality_floor)]
    quality_floor: f64,
    #[arg(long, default_value_t = FixationParams::default().dispersion_deg)]
    dispersion_deg: f64,
    #[arg(long, default_value_t = FixationParams::default().min_dur_ms)]
    min_fixation_ms: u64,
    /// Same-AOI gaps up to this length are merged into one dwell.
    #[arg(long, default_value_t = 0)]
    gap_tolerance_ms: u64,
    /// Fixation map cell size in surface pixels.
    #[arg(long, default_value_t = AnalysisParams::default().bin_px)]
    bin_px: u32,
    #[arg(long, value_enum, default_value_t = MapModeArg::Fixation)]
    map_mode: MapModeArg,
    /// Normalize pupil by the mean of the first N samples instead of the maximum.
    #[arg(long, value_name = "N")]
    baseline_samples: Option<usize>,
    #[arg(long, default_value_t = PupilPipelineParams::<f64>::default().resample_hz)]
    resample_hz: f64,
    #[arg(long, default_value_t = PupilPipelineParams::<f64>::default().max_gap_ms)]
    max_gap_ms: u64,
    #[arg(long, default_value_t = PupilPipelineParams::<f64>::default().smooth_window)]
    smooth_window: usize,
    #[arg(long, default_value_t = WelchParams::<f64>::default().seg_len)]
    welch_segment: usize,
    #[arg(long, default_value_t = WelchParams::<f64>::default().overlap_frac)]
    welch_overlap: f64,
    #[arg(long, value_enum, default_value_t = TaperArg::Hann)]
    taper: TaperArg,
    #[arg(long, default_value_t = PupilPipelineParams::<f64>::default().highpass_cutoff_hz)]
    highpass_cutoff_hz: f64,
    #[arg(long, default_value_t = PupilPipelineParams::<f64>::default().highpass_order)]
    highpass_order: usize,
    /// Eyelid openness below which the eye counts as closed.
    #[arg(long, default_value_t = AnalysisParams::default().closed_threshold)]
    closed_threshold: f64,
    #[arg(long, default_value_t = PerfParams::default().motion_threshold)]
    motion_threshold: f64,
    #[arg(long, default_value_t = PerfParams::default().pf_window_s)]
    pf_window_s: f64,
    #[arg(long, default_value_t = PerfParams::default().pf_hop_s)]
    pf_hop_s: f64,
    #[arg(long, default_value_t = AnalysisParams::default().alpha)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = TTestArg::Pooled)]
    t_test: TTestArg,
}

#[derive(Args)]
struct SynthArgs {
    /// Preset name (nominal, stall, lowvis) or path to a scenario script.
    /// Writes gaze.csv, flight.csv, segments.json, truth.json and aoi.json.
    scenario: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// AOI model the schedule refers to; defaults to the bundled cockpit.
    #[arg(long)]
    aoi: Option<PathBuf>,
}

#[derive(Args)]
struct ServiceArgs {
    /// HTTP port for control endpoints and the /ws push channel.
    #[arg(long, default_value = "127.0.0.1:8080")]
    http: SocketAddr,
    /// AOI model; defaults to the bundled cockpit.
    #[arg(long)]
    aoi: Option<PathBuf>,
    /// Rolling analytics window in seconds.
    #[arg(long, default_value_t = 120)]
    window_s: u64,
    /// Events buffered per push subscriber before the oldest are dropped.
    #[arg(long, default_value_t = 256)]
    queue: usize,
}

#[derive(Args)]
struct ServeArgs {
    /// TCP address producers connect to.
    #[arg(long, default_value = "0.0.0.0:7070")]
    ingest: SocketAddr,
    /// Sessions are recorded under this directory.
    #[arg(long, default_value = "sessions")]
    record_dir: PathBuf,
    #[command(flatten)]
    service: ServiceArgs,
}

#[derive(Args)]
struct ReplayArgs {
    /// Directory holding gaze.csv, and optionally annotations.csv and aoi.json.
    session_dir: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    /// Wait for a push subscriber before starting.
    #[arg(long)]
    wait_subscriber: bool,
    #[command(flatten)]
    service: ServiceArgs,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn load_model(path: Option<&Path>) -> Result<AoiModel> {
    match path {
        Some(p) => load_aoi_model(&read(p)?).with_context(|| format!("{}", p.display())),
        None => Ok(default_cockpit()),
    }
}

fn analysis_params(a: &AnalyzeArgs) -> Result<AnalysisParams> {
    let compare = a
        .compare
        .iter()
        .map(|c| {
            c.split_once(':')
                .map(|(x, y)| (x.to_string(), y.to_string()))
                .ok_or_else(|| anyhow!("--compare expects A:B, got '{c}'"))
        })
        .collect::<Result<_>>()?;
    Ok(AnalysisParams {
        gaze_offset_ms: a.offset_ms,
        quality_floor: a.quality_floor,
        fixation: FixationParams {
            dispersion_deg: a.dispersion_deg,
            min_dur_ms: a.min_fixation_ms,
        },
        gap_tolerance_ms: a.gap_tolerance_ms,
        bin_px: a.bin_px,
        map_mode: match a.map_mode {
            MapModeArg::Fixation => MapMode::Fixation,
            MapModeArg::Sample => MapMode::Sample,
        },
        pupil: PupilPipelineParams {
            basis: a
                .baseline_samples
                .map_or(NormalizationBasis::Max, |n| NormalizationBasis::Baseline { n }),
            resample_hz: a.resample_hz,
            max_gap_ms: a.max_gap_ms,
            smooth_window: a.smooth_window,
            welch: WelchParams {
                seg_len: a.welch_segment,
                overlap_frac: a.welch_overlap,
                taper: match a.taper {
                    TaperArg::Hann => Taper::Hann,
                    TaperArg::Hamming => Taper::Hamming,
                    TaperArg::Rectangular => Taper::Rectangular,
                },
            },
            highpass_cutoff_hz: a.highpass_cutoff_hz,
            highpass_order: a.highpass_order,
        },
        closed_threshold: a.closed_threshold,
        perf: PerfParams {
            motion_threshold: a.motion_threshold,
            pf_window_s: a.pf_window_s,
            pf_hop_s: a.pf_hop_s,
            ..PerfParams::default()
        },
        alpha: a.alpha,
        t_test: match a.t_test {
            TTestArg::Pooled => TTestVariant::Pooled,
            TTestArg::Welch => TTestVariant::Welch,
        },
        segment: a.segment.clone(),
        compare,
    })
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    let params = analysis_params(&a)?;
    let mut inputs = Vec::new();
    let mut load = |role: &str, path: &Path| -> Result<String> {
        let text = read(path)?;
        inputs.push(InputFile {
            role: role.into(),
            path: path.display().to_string(),
            sha256: sha256_hex(text.as_bytes()),
        });
        Ok(text)
    };
    let gaze_text = load("gaze", &a.gaze)?;
    let flight_text = load("flight", &a.flight)?;
    let aoi_text = load("aoi", &a.aoi)?;
    let seg_text = load("segments", &a.segments)?;

    let opts = GazeParseOptions {
        quality_floor: a.quality_floor,
    };
    let gaze = parse_gaze_log(gaze_text.as_bytes(), opts)
        .with_context(|| format!("{}", a.gaze.display()))?;
    let flight =
        parse_flight_log(flight_text.as_bytes()).with_context(|| format!("{}", a.flight.display()))?;
    let model = load_aoi_model(&aoi_text).with_context(|| format!("{}", a.aoi.display()))?;
    let segments = load_segments(&seg_text).with_context(|| format!("{}", a.segments.display()))?;
    let session = a.session.clone().unwrap_or_else(|| {
        a.gaze
            .file_stem()
            .map_or("session".into(), |s| s.to_string_lossy().into_owned())
    });

    let report = analyze_session(&session, gaze, flight, &segments, &model, &params)?;
    let written = write_report(&a.out, &report, &inputs)
        .with_context(|| format!("cannot write reports to {}", a.out.display()))?;
    let mut out = std::io::stdout().lock();
    for p in written {
        // A closed stdout (e.g. piped into `head`) is not an analysis failure.
        let _ = writeln!(out, "{}", p.display());
    }
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let model = load_model(a.aoi.as_deref())?;
    let script = if PRESETS.contains(&a.scenario.as_str()) || !Path::new(&a.scenario).exists() {
        preset(&a.scenario, a.seed)?
    } else {
        let mut s = ScenarioScript::from_json(&read(Path::new(&a.scenario))?)
            .with_context(|| a.scenario.clone())?;
        s.seed = a.seed;
        s
    };
    let scenario = generate(&script, &model)?;
    scenario.write_to(&a.out)?;
    std::fs::write(a.out.join(AOI_FILE), model.to_json())?;
    println!(
        "{}: {} gaze samples, {} flight samples, {} segments",
        a.out.display(),
        scenario.gaze.len(),
        scenario.flight.len(),
        scenario.segments.len()
    );
    Ok(())
}

fn hub_config(s: &ServiceArgs, record_dir: Option<PathBuf>) -> Result<HubConfig> {
    if s.window_s == 0 || s.queue == 0 {
        bail!("--window-s and --queue must be positive");
    }
    Ok(HubConfig {
        window_ms: s.window_s * 1000,
        queue_capacity: s.queue,
        record_dir,
        ..HubConfig::default()
    })
}

async fn serve(a: ServeArgs) -> Result<()> {
    let model = load_model(a.service.aoi.as_deref())?;
    let hub = Hub::new(model, hub_config(&a.service, Some(a.record_dir.clone()))?);
    let server = Server::spawn(hub, Some(a.ingest), a.service.http)
        .await
        .context("cannot bind service ports")?;
    eprintln!(
        "ingest on {}, control and /ws on http://{}",
        server.ingest_addr.expect("ingest bound"),
        server.http_addr
    );
    tokio::signal::ctrl_c().await?;
    let dir = server.hub.recording_dir();
    server.shutdown().await;
    if let Some(d) = dir {
        eprintln!("last recording: {}", d.display());
    }
    Ok(())
}

async fn replay_cmd(a: ReplayArgs) -> Result<()> {
    if !(a.speed > 0.0) {
        bail!("--speed must be positive");
    }
    let session = load_session(&a.session_dir)?;
    let model = match &a.service.aoi {
        Some(p) => load_model(Some(p))?,
        None => session.model.clone(),
    };
    let session = gazelab_stream::RecordedSession { model, ..session };
    let hub = Hub::new(session.model.clone(), hub_config(&a.service, None)?);
    let server = Server::spawn(hub.clone(), None, a.service.http)
        .await
        .context("cannot bind service port")?;
    eprintln!("control and /ws on http://{}", server.http_addr);
    if a.wait_subscriber {
        while hub.subscriber_count() == 0 {
            tokio::time::sleep(Duration::from_millis(50)).await;
        }
    }
    let run = replay_until_interrupt(&hub, &session, a.speed);
    let result = run.await;
    server.shutdown().await;
    let end = result?;
    eprintln!(
        "replayed {} samples, {} annotations",
        end.counters.recorded, end.annotations
    );
    Ok(())
}

async fn replay_until_interrupt(
    hub: &Arc<Hub>,
    session: &gazelab_stream::RecordedSession,
    speed: f64,
) -> Result<gazelab_stream::StatusSnapshot> {
    tokio::select! {
        r = replay(hub, session, speed) => Ok(r?),
        _ = tokio::signal::ctrl_c() => {
            Ok(hub.stop().unwrap_or_else(|_| hub.status()))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .init();
    let result = match cli.cmd {
        Cmd::Analyze(a) => analyze(a),
        Cmd::Synth(a) => synth(a),
        Cmd::Serve(a) => runtime().and_then(|rt| rt.block_on(serve(a))),
        Cmd::Replay(a) => runtime().and_then(|rt| rt.block_on(replay_cmd(a))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}
