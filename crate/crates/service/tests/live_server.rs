//! End to end over a real socket with a bare HTTP/1.1 client.

use std::net::SocketAddr;
use std::time::Duration;

use robbins_service::{router, AppState, ServiceConfig};
use serde_json::{json, Value};
use tokio::io::{AsyncBufReadExt, AsyncReadExt, AsyncWriteExt, BufReader};
use tokio::net::TcpStream;

async fn start() -> (SocketAddr, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig { data_dir: dir.path().into(), ..ServiceConfig::default() };
    let (state, _) = AppState::open(config).unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(state)).await.unwrap() });
    (addr, dir)
}

async fn request(addr: SocketAddr, method: &str, path: &str, body: Option<Value>) -> (u16, Value) {
    let mut s = TcpStream::connect(addr).await.unwrap();
    let body = body.map(|b| b.to_string()).unwrap_or_default();
    let head = format!(
        "{method} {path} HTTP/1.1\r\nHost: x\r\nConnection: close\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n",
        body.len()
    );
    s.write_all(head.as_bytes()).await.unwrap();
    s.write_all(body.as_bytes()).await.unwrap();
    let mut raw = Vec::new();
    s.read_to_end(&mut raw).await.unwrap();
    let text = String::from_utf8(raw).unwrap();
    let status = text[9..12].parse().unwrap();
    let (_, payload) = text.split_once("\r\n\r\n").unwrap();
    (status, serde_json::from_str(payload).unwrap_or(Value::Null))
}

/// Opens an event stream and returns the `id:` values of the first `n`
/// events, then drops the connection.
async fn stream_ids(addr: SocketAddr, path: &str, last: Option<usize>, n: usize) -> Vec<usize> {
    let mut s = TcpStream::connect(addr).await.unwrap();
    let resume = last.map(|l| format!("Last-Event-ID: {l}\r\n")).unwrap_or_default();
    s.write_all(format!("GET {path} HTTP/1.1\r\nHost: x\r\nConnection: close\r\n{resume}\r\n").as_bytes()).await.unwrap();
    let mut lines = BufReader::new(s).lines();
    let mut ids = Vec::new();
    while ids.len() < n {
        let line = tokio::time::timeout(Duration::from_secs(5), lines.next_line()).await.expect("stalled").unwrap();
        let Some(line) = line else { break };
        if let Some(id) = line.strip_prefix("id:") {
            ids.push(id.trim().parse().unwrap());
        }
    }
    ids
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn full_game_with_a_dropped_event_stream() {
    let (addr, _dir) = start().await;
    let (status, v) = request(addr, "POST", "/sessions", Some(json!({ "M": 40, "seed": 2024 }))).await;
    assert_eq!(status, 201);
    let id = v["id"].as_str().unwrap().to_string();
    let events = format!("/sessions/{id}/events");

    let mut seen = Vec::new();
    let mut closed = Value::Null;
    for round in 0.. {
        let (status, v) = request(addr, "POST", &format!("/sessions/{id}/advance"), None).await;
        assert_eq!(status, 200);
        if v["closed"] == true {
            closed = v;
            break;
        }
        let d = if round >= 6 && v["arrivals"][round]["rel_rank"] == 1 { "ACCEPT" } else { "PASS" };
        let (status, v) = request(addr, "POST", &format!("/sessions/{id}/decision"), Some(json!({ "decision": d }))).await;
        assert_eq!(status, 200);
        let emitted = 2 * (round + 1);
        if v["closed"] == true {
            closed = v;
            break;
        }
        // Every third round the client reconnects and catches up from the
        // last id it saw.
        if round % 3 == 2 {
            let new = stream_ids(addr, &events, seen.last().copied(), emitted - seen.len()).await;
            seen.extend(new);
        }
    }
    let rest = stream_ids(addr, &events, seen.last().copied(), usize::MAX).await;
    seen.extend(rest);
    assert_eq!(seen, (1..=seen.len()).collect::<Vec<_>>(), "no event lost or repeated");
    let (_, rec) = request(addr, "GET", &format!("/sessions/{id}/reveal"), None).await;
    let arrivals = rec["arrivals"].as_array().unwrap().len();
    let decisions = rec["decisions"].as_array().unwrap().len();
    assert_eq!(seen.len(), arrivals + decisions + 1);
    assert_eq!(rec["outcome"], closed["outcome"]);
}
