mod common;

use std::collections::HashMap;
use std::time::Duration;

use common::*;
use gazelab_stream::recorder::{load_session, ANNOTATIONS_FILE, GAZE_FILE};
use gazelab_stream::server::BUSY_LINE;
use gazelab_stream::wire::{PushEvent, SessionStatus};
use gazelab_stream::HubConfig;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::TcpStream;
use tokio::time::Instant;

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn sixty_hz_for_ten_seconds_is_conserved_recorded_and_fast() {
    let rec = tempfile::tempdir().unwrap();
    let server = serve(HubConfig {
        record_dir: Some(rec.path().to_path_buf()),
        ..HubConfig::default()
    })
    .await;
    let http_addr = server.http_addr;
    let (code, _) = http(http_addr, "POST", "/start", None).await;
    assert_eq!(code, 200);

    let mut ws = subscribe(http_addr).await;
    let first = next_event(&mut ws, Duration::from_secs(2)).await;
    assert!(matches!(first, Some(PushEvent::Status(_))));
    let subscriber = tokio::spawn(async move {
        let mut got = Vec::new();
        while let Some(e) = next_event(&mut ws, Duration::from_secs(2)).await {
            got.push((Instant::now(), e));
        }
        got
    });

    let mut producer = TcpStream::connect(server.ingest_addr.unwrap()).await.unwrap();
    producer.set_nodelay(true).unwrap();
    let t0 = Instant::now();
    let mut sent = HashMap::new();
    for i in 0..600u64 {
        let t_ms = i * 1000 / 60;
        tokio::time::sleep_until(t0 + Duration::from_millis(t_ms)).await;
        sent.insert(t_ms, Instant::now());
        producer.write_all(packet(t_ms).to_line().as_bytes()).await.unwrap();
    }
    let elapsed = t0.elapsed();
    assert!(elapsed >= Duration::from_millis(9900), "{elapsed:?}");

    let s = wait_for(http_addr, |s| s.counters.received == 600).await;
    assert_eq!(s.counters.received, 600);
    assert_eq!(s.counters.dropped, 0);
    assert_eq!(s.counters.recorded + s.counters.dropped, s.counters.received);
    let rate = s.observed_rate_hz.unwrap();
    assert!((rate - 60.0).abs() < 0.1, "{rate}");

    let (code, body) = http(http_addr, "POST", "/stop", None).await;
    assert_eq!(code, 200, "{body}");
    let events = subscriber.await.unwrap();

    let mut latencies: Vec<Duration> = events
        .iter()
        .filter_map(|(at, e)| match e {
            PushEvent::Gaze(g) => Some(*at - sent[&g.t_ms]),
            _ => None,
        })
        .collect();
    latencies.sort();
    let p95 = latencies[latencies.len() * 95 / 100];
    assert!(p95 < Duration::from_millis(50), "p95 {p95:?}");

    let gaze_in_4s = events
        .iter()
        .filter(|(_, e)| matches!(e, PushEvent::Gaze(g) if g.t_ms < 4000))
        .count();
    assert!((96..=104).contains(&gaze_in_4s), "{gaze_in_4s}");
    let frames: Vec<u64> = events
        .iter()
        .filter_map(|(_, e)| match e {
            PushEvent::Metrics(m) => Some(m.t_ms),
            _ => None,
        })
        .collect();
    assert_eq!(frames, (1..=9).map(|k| k * 1000).collect::<Vec<_>>());
    for (_, e) in &events {
        if let PushEvent::Metrics(m) = e {
            let total: f64 = m.pdt.values().sum();
            assert!((total - 100.0).abs() < 1e-9);
            assert_eq!(m.aoi.as_deref(), Some("OTW"));
        }
    }

    let dir = rec.path().join(s.session_id.unwrap());
    let text = std::fs::read_to_string(dir.join(GAZE_FILE)).unwrap();
    assert_eq!(text.lines().count(), 602);
    let back = load_session(&dir).unwrap();
    assert_eq!(back.gaze.len(), 600);
    let footer = back.footer.unwrap();
    assert_eq!((footer.received, footer.recorded, footer.dropped), (600, 600, 0));
    server.shutdown().await;
}

#[tokio::test]
async fn malformed_packets_are_counted_and_skipped() {
    let server = serve(HubConfig::default()).await;
    let addr = server.http_addr;
    http(addr, "POST", "/start", None).await;
    let mut p = TcpStream::connect(server.ingest_addr.unwrap()).await.unwrap();
    let missing = packet(20).to_line().replace("\"q\":1.0", "\"x\":1");
    let lines = [
        packet(0).to_line(),
        missing,
        "not json\n".to_string(),
        packet(10).to_line(),
        packet(10).to_line(),
        packet(30).to_line(),
    ];
    for l in &lines {
        p.write_all(l.as_bytes()).await.unwrap();
    }
    p.write_all(&[0xff, 0xfe, b'\n']).await.unwrap();
    let s = wait_for(addr, |s| s.counters.received == 7).await;
    assert_eq!(s.counters.recorded, 3);
    assert_eq!(s.counters.dropped, 4);
    server.shutdown().await;
}

#[tokio::test]
async fn second_producer_is_refused_with_an_error_line() {
    let server = serve(HubConfig::default()).await;
    let ingest = server.ingest_addr.unwrap();
    let _first = TcpStream::connect(ingest).await.unwrap();
    wait_for(server.http_addr, |s| s.producer_connected).await;
    let second = TcpStream::connect(ingest).await.unwrap();
    let mut line = String::new();
    BufReader::new(second).read_line(&mut line).await.unwrap();
    assert_eq!(line, BUSY_LINE);
    drop(_first);
    wait_for(server.http_addr, |s| !s.producer_connected).await;
    let third = TcpStream::connect(ingest).await.unwrap();
    wait_for(server.http_addr, |s| s.producer_connected).await;
    drop(third);
    server.shutdown().await;
}

#[tokio::test]
async fn producer_disconnect_keeps_session_running() {
    let server = serve(HubConfig::default()).await;
    let addr = server.http_addr;
    http(addr, "POST", "/start", None).await;
    let mut p = TcpStream::connect(server.ingest_addr.unwrap()).await.unwrap();
    p.write_all(packet(0).to_line().as_bytes()).await.unwrap();
    drop(p);
    let s = wait_for(addr, |s| s.counters.received == 1 && !s.producer_connected).await;
    assert_eq!(s.status, SessionStatus::Running);
    server.shutdown().await;
}

#[tokio::test]
async fn control_endpoints_follow_session_state() {
    let rec = tempfile::tempdir().unwrap();
    let server = serve(HubConfig {
        record_dir: Some(rec.path().to_path_buf()),
        ..HubConfig::default()
    })
    .await;
    let addr = server.http_addr;

    assert_eq!(status(addr).await.status, SessionStatus::Idle);
    assert_eq!(http(addr, "POST", "/stop", None).await.0, 409);
    assert_eq!(http(addr, "POST", "/annotate", Some(r#"{"text":"x"}"#)).await.0, 409);

    let (code, body) = http(addr, "POST", "/start", None).await;
    assert_eq!(code, 200);
    let v: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["started"], true);
    let (_, body) = http(addr, "POST", "/start", None).await;
    let again: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(again["started"], false);
    assert_eq!(again["status"]["session_id"], v["status"]["session_id"]);

    let mut ws = subscribe(addr).await;
    assert!(matches!(next_event(&mut ws, Duration::from_secs(2)).await, Some(PushEvent::Status(_))));

    let hub = hub_of(&server);
    hub.ingest_sample(sample(5000));
    let (code, body) = http(addr, "POST", "/annotate", Some(r#"{"text":"stall onset"}"#)).await;
    assert_eq!(code, 200, "{body}");
    assert_eq!(body, r#"{"t_ms":5000,"text":"stall onset"}"#);
    assert_eq!(http(addr, "POST", "/annotate", Some(r#"{"text":"  "}"#)).await.0, 400);
    assert_eq!(http(addr, "POST", "/annotate", Some("{}")).await.0 / 100, 4);

    let mut saw_annotation = false;
    while let Some(e) = next_event(&mut ws, Duration::from_millis(500)).await {
        if let PushEvent::Annotation(a) = e {
            assert_eq!((a.t_ms, a.text.as_str()), (5000, "stall onset"));
            saw_annotation = true;
            break;
        }
    }
    assert!(saw_annotation);

    let (code, model) = http(addr, "GET", "/aoi_model", None).await;
    assert_eq!(code, 200);
    assert_eq!(gazelab::model::load_aoi_model(&model).unwrap(), hub.aoi_model());
    assert_eq!(http(addr, "PUT", "/aoi_model", Some(r#"{"surfaces":[]}"#)).await.0, 400);
    assert_eq!(http(addr, "PUT", "/aoi_model", Some("nope")).await.0, 400);
    assert_eq!(http(addr, "PUT", "/aoi_model", Some(&model)).await.0, 204);

    let (code, body) = http(addr, "POST", "/stop", None).await;
    assert_eq!(code, 200);
    let stopped: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(stopped["status"], "stopped");
    assert_eq!(http(addr, "POST", "/annotate", Some(r#"{"text":"late"}"#)).await.0, 409);
    assert_eq!(http(addr, "POST", "/stop", None).await.0, 409);

    let dir = rec.path().join(stopped["session_id"].as_str().unwrap());
    let ann = std::fs::read_to_string(dir.join(ANNOTATIONS_FILE)).unwrap();
    assert_eq!(ann, "t_ms,text\n5000,stall onset\n");
    server.shutdown().await;
}

#[tokio::test]
async fn shutdown_finalizes_a_running_recording() {
    let rec = tempfile::tempdir().unwrap();
    let server = serve(HubConfig {
        record_dir: Some(rec.path().to_path_buf()),
        ..HubConfig::default()
    })
    .await;
    let hub = hub_of(&server);
    hub.start().unwrap();
    for t in [0, 25, 50] {
        hub.ingest_sample(sample(t));
    }
    let dir = hub.recording_dir().unwrap();
    server.shutdown().await;
    let s = load_session(&dir).unwrap();
    assert_eq!(s.gaze.len(), 3);
    assert_eq!(s.footer.unwrap().recorded, 3);
}

#[tokio::test]
async fn stalled_subscriber_does_not_slow_ingest() {
    let server = serve(HubConfig::default()).await;
    let addr = server.http_addr;
    // Connected but never read.
    let _stalled = subscribe(addr).await;
    let hub = hub_of(&server);
    hub.start().unwrap();
    let t0 = std::time::Instant::now();
    for i in 0..1200u64 {
        hub.ingest_sample(sample(i * 1000 / 60));
    }
    assert_eq!(hub.status().counters.recorded, 1200);
    assert!(t0.elapsed() < Duration::from_secs(5));
    server.shutdown().await;
}
