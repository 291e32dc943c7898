use std::net::TcpStream;
use std::thread;

use lapkit::envcore::{EnvConfig, StepResult};
use lapkit::envs::{make_env, EnvId};
use lapkit::envserver::{
    default_port, ErrorCode, MessageType, ProtocolMessage, Server, ServerHandle, ServerOptions, TcpClient, Transport,
    DEFAULT_PORT,
};
use lapkit::trajstore;
use serde_json::{json, Value};
use tungstenite::Message;

fn spawn(options: ServerOptions) -> ServerHandle {
    Server::bind("127.0.0.1:0", options).unwrap().spawn().unwrap()
}

fn ok(reply: ProtocolMessage) -> Value {
    assert_eq!(reply.kind, MessageType::Ok, "{:?}", reply.payload);
    reply.payload
}

#[test]
fn sessions_are_isolated() {
    let server = spawn(ServerOptions::default());
    let addr = server.local_addr();
    let workers: Vec<_> = [(EnvId::Reach, 1u64), (EnvId::DeflectSpheres, 2), (EnvId::Reach, 1)]
        .into_iter()
        .map(|(id, seed)| {
            thread::spawn(move || {
                let mut c = TcpClient::connect(addr).unwrap();
                ok(c.request(MessageType::Make, json!({"env": id})).unwrap());
                ok(c.request(MessageType::Reset, json!({"seed": seed})).unwrap());
                let mut local = make_env(id, EnvConfig::default_for(id)).unwrap();
                local.reset(seed).unwrap();
                let dim = local.action_dim();
                for k in 0..25 {
                    let action: Vec<f64> = (0..dim).map(|j| ((k + j) as f64 * 0.37).sin()).collect();
                    let remote: StepResult =
                        serde_json::from_value(ok(c.request(MessageType::Step, json!({"action": action})).unwrap()))
                            .unwrap();
                    assert_eq!(remote, local.step(&action).unwrap());
                }
            })
        })
        .collect();
    for w in workers {
        w.join().unwrap();
    }
}

#[test]
fn lifecycle_errors_over_tcp() {
    let server = spawn(ServerOptions::default());
    let mut c = TcpClient::connect(server.local_addr()).unwrap();
    let hello = ok(c.request(MessageType::Hello, Value::Null).unwrap());
    assert_eq!(hello["protocol_version"], 1);
    let r = c.request(MessageType::Step, json!({"action": [0.0]})).unwrap();
    assert_eq!(r.error_code(), Some(ErrorCode::NotReady));
    let r = c.send_raw(b"\xff\xfe not utf8").unwrap();
    assert_eq!(r.error_code(), Some(ErrorCode::BadMessage));
    let r = c
        .request(MessageType::Make, json!({"env": "reach", "config": {"bogus_key": 1}}))
        .unwrap();
    assert_eq!(r.error_code(), Some(ErrorCode::InvalidConfig));
    ok(c.request(MessageType::Make, json!({"env": "reach"})).unwrap());
    ok(c.request(MessageType::Reset, json!({"seed": 0})).unwrap());
    let r = c.request(MessageType::Step, json!({"action": [0.0, 0.0]})).unwrap();
    assert_eq!(r.error_code(), Some(ErrorCode::ActionShape));
    ok(c.request(MessageType::Close, Value::Null).unwrap());
    assert!(c.request(MessageType::Hello, Value::Null).is_err());
}

#[test]
fn session_limit_rejects_extra_connections() {
    let server = spawn(ServerOptions {
        max_sessions: 1,
        ..ServerOptions::default()
    });
    let mut first = TcpClient::connect(server.local_addr()).unwrap();
    ok(first.request(MessageType::Hello, Value::Null).unwrap());
    let mut second = TcpClient::connect(server.local_addr()).unwrap();
    let r = second.request(MessageType::Hello, Value::Null);
    assert!(r.map(|m| m.kind == MessageType::Error).unwrap_or(true));
    ok(first.request(MessageType::Hello, Value::Null).unwrap());
}

#[test]
fn websocket_transport_and_server_side_recording() {
    let dir = tempfile::tempdir().unwrap();
    let server = spawn(ServerOptions {
        transport: Transport::WebSocket,
        record_dir: dir.path().to_path_buf(),
        ..ServerOptions::default()
    });
    let stream = TcpStream::connect(server.local_addr()).unwrap();
    let (mut ws, _) = tungstenite::client(format!("ws://{}/", server.local_addr()), stream).unwrap();
    let mut send = |kind: MessageType, id: i64, payload: Value| -> ProtocolMessage {
        ws.send(Message::text(ProtocolMessage::request(kind, id, payload).to_json()))
            .unwrap();
        loop {
            match ws.read().unwrap() {
                Message::Text(t) => return serde_json::from_str(t.as_str()).unwrap(),
                Message::Binary(b) => return serde_json::from_slice(&b).unwrap(),
                _ => continue,
            }
        }
    };
    ok(send(
        MessageType::Make,
        1,
        json!({"env": "reach", "config": {"observation_type": "rgb"}}),
    ));
    ok(send(MessageType::Reset, 2, json!({"seed": 9})));
    for k in 0..3 {
        ok(send(MessageType::Step, 10 + k, json!({"action": [0.2, 0.1, -0.1]})));
    }
    let started = ok(send(MessageType::RecordStart, 3, json!({"path": "demo.lgtraj"})));
    assert_eq!(started["backfilled_steps"], 3);
    let bad = send(MessageType::RecordStart, 4, json!({"path": "../escape.lgtraj"}));
    assert_eq!(bad.error_code(), Some(ErrorCode::BadMessage));
    for k in 0..7 {
        ok(send(MessageType::Step, 20 + k, json!({"action": [-0.3, 0.4, 0.0]})));
    }
    let frame = send(MessageType::Render, 5, Value::Null);
    assert_eq!(frame.kind, MessageType::Frame);
    assert_eq!(frame.id, Some(5));
    assert_eq!(frame.payload["shape"], json!([64, 64]));
    let stopped = ok(send(MessageType::RecordStop, 6, Value::Null));
    assert_eq!(stopped["steps"], 10);

    let record = trajstore::read(&dir.path().join("demo.lgtraj")).unwrap();
    assert_eq!(record.steps.len(), 10);
    assert_eq!(record.header.seed, 9);
    assert_eq!(record.header.source, trajstore::Source::Human);
    assert!(trajstore::replay_matches(&record).unwrap());
    let frames = dir.path().join("frames");
    assert_eq!(trajstore::replay_to_frames(&record, &frames).unwrap(), 10);
    assert!(frames.join("frame_00009.ppm").exists());
}

#[test]
fn port_defaults() {
    if std::env::var_os("LAPKIT_PORT").is_none() {
        assert_eq!(default_port(), DEFAULT_PORT);
    }
}
