use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use swarmlink_core::sim::trace::{rows_to_csv, TRACE_FILE};
use swarmlink_core::sim::{read_recording, replay, HandConfig, PlantParams, ScenarioConfig, StartLayout};
use swarmlink_core::topology::{TopologyConfig, TopologyKind};
use swarmlink_core::Vec3;
use swarmlink_server::protocol::{ErrorFrame, SnapshotMessage};
use swarmlink_server::{spawn, RunningServer, ServerOptions};

type Socket = WebSocketStream<MaybeTlsStream<TcpStream>>;

fn live_scenario() -> ScenarioConfig {
    ScenarioConfig {
        seed: 5,
        plant: PlantParams::default().noise_free(),
        hand: HandConfig::Live { initial: Vec3::new(0.0, 0.0, 1.0), smoothing_s: 0.1 },
        start: StartLayout::Slots,
        ..ScenarioConfig::default()
    }
}

async fn start(options: ServerOptions) -> (RunningServer, Socket) {
    let server = spawn(ServerOptions { bind: "127.0.0.1:0".parse().unwrap(), ..options }).await.unwrap();
    let (socket, _) = connect_async(format!("ws://{}/ws", server.addr)).await.unwrap();
    (server, socket)
}

enum Frame {
    Snapshot(Box<SnapshotMessage>),
    Error(ErrorFrame),
}

async fn next(socket: &mut Socket) -> Frame {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(10), socket.next())
            .await
            .expect("frame within 10 s")
            .expect("socket open")
            .expect("valid frame");
        if let Message::Text(text) = msg {
            if let Ok(s) = serde_json::from_str::<SnapshotMessage>(&text) {
                return Frame::Snapshot(Box::new(s));
            }
            return Frame::Error(serde_json::from_str(&text).expect("snapshot or error frame"));
        }
    }
}

async fn snapshot(socket: &mut Socket) -> SnapshotMessage {
    loop {
        if let Frame::Snapshot(s) = next(socket).await {
            return *s;
        }
    }
}

async fn error_frame(socket: &mut Socket) -> ErrorFrame {
    loop {
        if let Frame::Error(e) = next(socket).await {
            return e;
        }
    }
}

async fn send(socket: &mut Socket, text: &str) {
    socket.send(Message::text(text)).await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn idle_client_sees_monotone_ticks() {
    let (server, mut ws) = start(ServerOptions { scenario: live_scenario(), speed: 4.0, ..Default::default() }).await;
    let mut last = None;
    for _ in 0..15 {
        let s = snapshot(&mut ws).await;
        assert_eq!(s.schema_version, 1);
        assert_eq!(s.world.drones.len(), 3);
        if let Some(prev) = last {
            assert!(s.world.tick > prev, "tick {} after {prev}", s.world.tick);
        }
        last = Some(s.world.tick);
    }
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn drones_follow_a_new_hand_target() {
    let (server, mut ws) = start(ServerOptions { scenario: live_scenario(), speed: 8.0, ..Default::default() }).await;
    let first = snapshot(&mut ws).await;
    send(&mut ws, r#"{"type":"set_hand_target","x":0.4,"y":-0.2,"z":1.1}"#).await;
    let offsets = TopologyConfig::default().build(Default::default()).unwrap().offsets;
    let hand = Vec3::new(0.4, -0.2, 1.1);
    loop {
        let s = snapshot(&mut ws).await;
        let worst = s.world.drones.iter().map(|d| d.position.distance(hand + offsets[d.id])).fold(0.0, f64::max);
        if worst < 0.02 {
            assert!(s.world.t - first.world.t <= 5.5, "took {} s", s.world.t - first.world.t);
            break;
        }
        assert!(s.world.t - first.world.t < 5.5, "still {worst} m away");
    }
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn bad_commands_get_error_frames_and_the_connection_survives() {
    let (server, mut ws) = start(ServerOptions { scenario: live_scenario(), speed: 4.0, ..Default::default() }).await;
    send(&mut ws, r#"{"type":"set_impedance","M":1.9,"D":12.6,"K":20.88,"K_v":3}"#).await;
    let e = error_frame(&mut ws).await;
    assert_eq!(e.error, "invalid_command");
    assert!(e.detail.contains("not critically damped"), "{}", e.detail);

    send(&mut ws, "{not json").await;
    assert_eq!(error_frame(&mut ws).await.error, "malformed_command");
    send(&mut ws, r#"{"type":"engage","force":true}"#).await;
    assert_eq!(error_frame(&mut ws).await.error, "malformed_command");

    let before = snapshot(&mut ws).await.world.tick;
    assert!(snapshot(&mut ws).await.world.tick > before);

    send(&mut ws, r#"{"type":"set_impedance","M":1.9,"D":12.6,"K":20.88,"K_v":3,"recompute_D":true}"#).await;
    send(&mut ws, r#"{"type":"set_topology","kind":"ring"}"#).await;
    loop {
        let s = snapshot(&mut ws).await;
        if s.world.topology.kind == TopologyKind::Ring {
            assert_eq!(s.world.topology.edges.len(), 4, "hand link plus a three-drone loop");
            break;
        }
        assert_eq!(s.world.topology.edges.len(), 3);
    }
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn pattern_trigger_fires_fingers_in_order() {
    let (server, mut ws) = start(ServerOptions { scenario: live_scenario(), speed: 2.0, ..Default::default() }).await;
    send(&mut ws, r#"{"type":"trigger_pattern","label":"RR"}"#).await;
    let mut onsets = Vec::new();
    let mut saw_label = false;
    while onsets.len() < 3 {
        let s = snapshot(&mut ws).await;
        saw_label |= s.world.pattern.map(|l| l.to_string()).as_deref() == Some("RR");
        for e in &s.events {
            let v = serde_json::to_value(e).unwrap();
            if v["event"] == "actuator" && v["on"] == true {
                onsets.push(v["finger"].as_u64().unwrap());
            }
        }
    }
    assert!(saw_label);
    assert_eq!(onsets, vec![0, 1, 2]);
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn pause_stops_the_clock_and_resume_restarts_it() {
    let (server, mut ws) = start(ServerOptions { scenario: live_scenario(), speed: 4.0, ..Default::default() }).await;
    snapshot(&mut ws).await;
    send(&mut ws, r#"{"type":"pause"}"#).await;
    send(&mut ws, r#"{"type":"pause"}"#).await;
    // let the pause reach the stepper and drain what was already published
    tokio::time::sleep(Duration::from_millis(200)).await;
    let mut paused_at = None;
    while let Ok(Some(Ok(Message::Text(t)))) = tokio::time::timeout(Duration::from_millis(300), ws.next()).await {
        paused_at = serde_json::from_str::<SnapshotMessage>(&t).ok().map(|s| s.world.tick).or(paused_at);
    }
    assert!(
        tokio::time::timeout(Duration::from_millis(400), ws.next()).await.is_err(),
        "snapshots kept coming while paused"
    );
    send(&mut ws, r#"{"type":"set_speed","factor":6}"#).await;
    send(&mut ws, r#"{"type":"resume"}"#).await;
    let s = snapshot(&mut ws).await;
    assert!(!s.paused);
    assert_eq!(s.speed, 6.0);
    if let Some(p) = paused_at {
        assert!(s.world.tick > p);
    }
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn recorded_session_replays_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut scenario = live_scenario();
    scenario.plant = PlantParams::default();
    scenario.start = StartLayout::Ground;
    let options = ServerOptions { scenario, speed: 10.0, record: Some(dir.path().to_path_buf()), ..Default::default() };
    let (server, mut ws) = start(options).await;
    snapshot(&mut ws).await;
    send(&mut ws, r#"{"type":"set_hand_target","x":0.3,"y":0.1,"z":1.0}"#).await;
    for _ in 0..5 {
        snapshot(&mut ws).await;
    }
    send(&mut ws, r#"{"type":"set_topology","kind":"tree"}"#).await;
    send(&mut ws, r#"{"type":"trigger_pattern","label":"SL"}"#).await;
    send(&mut ws, r#"{"type":"pause"}"#).await;
    tokio::time::sleep(Duration::from_millis(300)).await;
    let csv = std::fs::read_to_string(dir.path().join(TRACE_FILE)).unwrap();
    tokio::time::sleep(Duration::from_millis(300)).await;
    assert_eq!(csv, std::fs::read_to_string(dir.path().join(TRACE_FILE)).unwrap(), "rows appended while paused");
    send(&mut ws, r#"{"type":"resume"}"#).await;
    send(&mut ws, r#"{"type":"set_hand_target","x":-0.2,"y":0.0,"z":0.9}"#).await;
    for _ in 0..8 {
        snapshot(&mut ws).await;
    }
    server.shutdown().await;

    let (config, rows, events) = read_recording(dir.path()).unwrap();
    assert!(rows.len() > 300, "only {} rows recorded", rows.len());
    assert_eq!(rows.len() % 3, 0);
    let replayed = replay(&config, &rows, &events).unwrap();
    assert_eq!(rows_to_csv(&replayed.rows), std::fs::read_to_string(dir.path().join(TRACE_FILE)).unwrap());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn static_bundle_is_served_at_root() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<!doctype html><title>steer</title>").unwrap();
    let options =
        ServerOptions { scenario: live_scenario(), static_dir: dir.path().to_path_buf(), ..Default::default() };
    let (server, _ws) = start(options).await;
    let mut tcp = TcpStream::connect(server.addr).await.unwrap();
    tcp.write_all(b"GET / HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").await.unwrap();
    let mut body = String::new();
    tcp.read_to_string(&mut body).await.unwrap();
    assert!(body.starts_with("HTTP/1.1 200"), "{body}");
    assert!(body.contains("<title>steer</title>"));
    server.shutdown().await;
}

#[tokio::test]
async fn invalid_scenario_is_refused() {
    let mut scenario = live_scenario();
    scenario.impedance.damping = Some(12.6);
    let err = spawn(ServerOptions { scenario, bind: "127.0.0.1:0".parse().unwrap(), ..Default::default() })
        .await
        .err()
        .expect("spawn fails");
    assert!(err.to_string().contains("not critically damped"), "{err}");
}
