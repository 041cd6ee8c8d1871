#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use futures::StreamExt;
use gazelab::model::{default_cockpit, GazeSample};
use gazelab_stream::wire::{PushEvent, StatusSnapshot, WirePacket};
use gazelab_stream::{Hub, HubConfig, Server};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;

pub async fn serve(cfg: HubConfig) -> Server {
    let hub = Hub::new(default_cockpit(), cfg);
    let any: SocketAddr = "127.0.0.1:0".parse().unwrap();
    Server::spawn(hub, Some(any), any).await.unwrap()
}

pub fn hub_of(server: &Server) -> Arc<Hub> {
    server.hub.clone()
}

/// One HTTP/1.1 exchange over a fresh connection: (status code, body).
pub async fn http(addr: SocketAddr, method: &str, path: &str, body: Option<&str>) -> (u16, String) {
    let mut s = TcpStream::connect(addr).await.unwrap();
    let body = body.unwrap_or("");
    let req = format!(
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    s.write_all(req.as_bytes()).await.unwrap();
    let mut raw = Vec::new();
    s.read_to_end(&mut raw).await.unwrap();
    let text = String::from_utf8(raw).unwrap();
    let code = text[9..12].parse().unwrap();
    let (head, rest) = text.split_once("\r\n\r\n").unwrap_or((&text, ""));
    let chunked = head.to_ascii_lowercase().contains("transfer-encoding: chunked");
    (code, if chunked { dechunk(rest) } else { rest.to_string() })
}

fn dechunk(mut s: &str) -> String {
    let mut out = String::new();
    while let Some((len, rest)) = s.split_once("\r\n") {
        let n = usize::from_str_radix(len.trim(), 16).unwrap_or(0);
        if n == 0 {
            break;
        }
        out.push_str(&rest[..n]);
        s = &rest[n + 2..];
    }
    out
}

pub async fn status(addr: SocketAddr) -> StatusSnapshot {
    let (code, body) = http(addr, "GET", "/status", None).await;
    assert_eq!(code, 200);
    serde_json::from_str(&body).unwrap()
}

/// Polls until `pred` holds, for at most five seconds.
pub async fn wait_for(addr: SocketAddr, pred: impl Fn(&StatusSnapshot) -> bool) -> StatusSnapshot {
    for _ in 0..500 {
        let s = status(addr).await;
        if pred(&s) {
            return s;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    panic!("condition not reached: {:?}", status(addr).await);
}

pub type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<TcpStream>>;

pub async fn subscribe(addr: SocketAddr) -> Ws {
    let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap();
    ws
}

pub async fn next_event(ws: &mut Ws, within: Duration) -> Option<PushEvent> {
    loop {
        match tokio::time::timeout(within, ws.next()).await {
            Ok(Some(Ok(Message::Text(t)))) => return Some(serde_json::from_str(&t).unwrap()),
            Ok(Some(Ok(_))) => continue,
            _ => return None,
        }
    }
}

pub fn packet(t_ms: u64) -> WirePacket {
    WirePacket {
        t_ms,
        ox: 0.0,
        oy: 0.0,
        oz: 0.0,
        dx: 0.0,
        dy: 0.3,
        dz: 1.0,
        pupil_mm: Some(4.0 + 0.1 * (t_ms as f64 / 1000.0).sin()),
        eyelid: Some(1.0),
        q: 1.0,
    }
}

pub fn sample(t_ms: u64) -> GazeSample {
    packet(t_ms).into_sample(0.2).unwrap()
}
