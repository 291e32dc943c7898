//! Environment server: remote agents drive sessions over length-prefixed TCP
//! or websocket JSON messages. See `docs/protocol.md` for the schema.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::envcore::{EnvConfig, EnvError, Environment, Observation};
use crate::envs::{make_env, EnvId};
use crate::trajstore::{Source, StepRecord, TrajectoryHeader, TrajectoryWriter};

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_PORT: u16 = 7801;
pub const PORT_ENV_VAR: &str = "LAPKIT_PORT";
pub const DEFAULT_MAX_FRAME_BYTES: usize = 16 * 1024 * 1024;

/// Port from `LAPKIT_PORT`, falling back to 7801.
pub fn default_port() -> u16 {
    std::env::var(PORT_ENV_VAR)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_PORT)
}

pub fn default_addr() -> String {
    format!("127.0.0.1:{}", default_port())
}

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot bind {addr}: {source}")]
    BindFailure { addr: String, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageType {
    Hello,
    Make,
    Reset,
    Step,
    Render,
    RecordStart,
    RecordStop,
    Close,
    Ok,
    Error,
    Frame,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    BadMessage,
    NotReady,
    InvalidConfig,
    ActionShape,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolMessage {
    #[serde(rename = "type")]
    pub kind: MessageType,
    /// Correlation id chosen by the client; `null` when a request could not be parsed.
    pub id: Option<i64>,
    #[serde(default)]
    pub payload: Value,
}

impl ProtocolMessage {
    pub fn request(kind: MessageType, id: i64, payload: Value) -> Self {
        Self {
            kind,
            id: Some(id),
            payload,
        }
    }

    fn ok(id: Option<i64>, payload: Value) -> Self {
        Self {
            kind: MessageType::Ok,
            id,
            payload,
        }
    }

    fn error(id: Option<i64>, code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            kind: MessageType::Error,
            id,
            payload: json!({ "code": code, "message": message.into() }),
        }
    }

    pub fn error_code(&self) -> Option<ErrorCode> {
        if self.kind != MessageType::Error {
            return None;
        }
        serde_json::from_value(self.payload.get("code")?.clone()).ok()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("protocol messages always serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    Tcp,
    WebSocket,
}

#[derive(Debug, Clone)]
pub struct ServerOptions {
    pub transport: Transport,
    pub max_sessions: usize,
    pub max_frame_bytes: usize,
    /// Directory that `record_start` paths are resolved against.
    pub record_dir: PathBuf,
}

impl Default for ServerOptions {
    fn default() -> Self {
        Self {
            transport: Transport::Tcp,
            max_sessions: 16,
            max_frame_bytes: DEFAULT_MAX_FRAME_BYTES,
            record_dir: PathBuf::from("."),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MakePayload {
    env: EnvId,
    #[serde(default)]
    config: Value,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResetPayload {
    seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepPayload {
    action: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordStartPayload {
    path: String,
    #[serde(default = "default_source")]
    source: Source,
}

fn default_source() -> Source {
    Source::Human
}

struct Recording {
    path: PathBuf,
    writer: TrajectoryWriter<BufWriter<File>>,
}

/// Per-connection state: at most one live environment and one recording.
pub struct Session {
    record_dir: PathBuf,
    env: Option<Environment>,
    initial_observation: Option<Observation>,
    history: Vec<StepRecord>,
    recording: Option<Recording>,
    closed: bool,
}

type Reply = Result<ProtocolMessage, (ErrorCode, String)>;

impl Session {
    pub fn new(record_dir: impl Into<PathBuf>) -> Self {
        Self {
            record_dir: record_dir.into(),
            env: None,
            initial_observation: None,
            history: Vec::new(),
            recording: None,
            closed: false,
        }
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn env(&self) -> Option<&Environment> {
        self.env.as_ref()
    }

    /// Handles one raw frame and returns the serialized response.
    pub fn handle_bytes(&mut self, bytes: &[u8]) -> String {
        let response = match std::str::from_utf8(bytes) {
            Ok(text) => self.handle_text(text),
            Err(_) => ProtocolMessage::error(None, ErrorCode::BadMessage, "frame is not UTF-8"),
        };
        response.to_json()
    }

    pub fn handle_text(&mut self, text: &str) -> ProtocolMessage {
        let raw: Value = match serde_json::from_str(text) {
            Ok(v) => v,
            Err(e) => return ProtocolMessage::error(None, ErrorCode::BadMessage, format!("invalid JSON: {e}")),
        };
        let id = raw.get("id").and_then(Value::as_i64);
        match serde_json::from_value::<ProtocolMessage>(raw) {
            Ok(msg) => self.handle(msg),
            Err(e) => ProtocolMessage::error(id, ErrorCode::BadMessage, format!("invalid message: {e}")),
        }
    }

    pub fn handle(&mut self, msg: ProtocolMessage) -> ProtocolMessage {
        let id = msg.id;
        let outcome = panic::catch_unwind(AssertUnwindSafe(|| self.dispatch(msg)));
        match outcome {
            Ok(Ok(mut reply)) => {
                reply.id = id;
                reply
            }
            Ok(Err((code, message))) => ProtocolMessage::error(id, code, message),
            Err(_) => {
                self.env = None;
                self.recording = None;
                self.history.clear();
                ProtocolMessage::error(id, ErrorCode::Internal, "environment panicked; session env discarded")
            }
        }
    }

    fn dispatch(&mut self, msg: ProtocolMessage) -> Reply {
        match msg.kind {
            MessageType::Hello => Ok(ProtocolMessage::ok(
                None,
                json!({
                    "server_version": env!("CARGO_PKG_VERSION"),
                    "protocol_version": PROTOCOL_VERSION,
                    "envs": EnvId::ALL.iter().map(|e| e.as_str()).collect::<Vec<_>>(),
                }),
            )),
            MessageType::Make => self.make(parse_payload(msg.payload)?),
            MessageType::Reset => self.reset(parse_payload(msg.payload)?),
            MessageType::Step => self.step(parse_payload(msg.payload)?),
            MessageType::Render => self.render(),
            MessageType::RecordStart => self.record_start(parse_payload(msg.payload)?),
            MessageType::RecordStop => {
                let stopped = self.stop_recording()?;
                match stopped {
                    Some(v) => Ok(ProtocolMessage::ok(None, v)),
                    None => Err((ErrorCode::NotReady, "no recording in progress".into())),
                }
            }
            MessageType::Close => {
                self.stop_recording()?;
                self.env = None;
                self.closed = true;
                Ok(ProtocolMessage::ok(None, json!({})))
            }
            MessageType::Ok | MessageType::Error | MessageType::Frame => Err((
                ErrorCode::BadMessage,
                "response types cannot be sent as requests".into(),
            )),
        }
    }

    fn make(&mut self, p: MakePayload) -> Reply {
        let overrides = if p.config.is_null() { json!({}) } else { p.config };
        let config = EnvConfig::resolve(p.env, &overrides).map_err(|e| (ErrorCode::InvalidConfig, e.to_string()))?;
        let env = make_env(p.env, config).map_err(|e| (ErrorCode::InvalidConfig, e.to_string()))?;
        self.stop_recording()?;
        self.history.clear();
        self.initial_observation = None;
        let payload = json!({
            "env": env.id(),
            "action_dim": env.action_dim(),
            "action_len": env.action_len(),
            "discrete_action_count": env.discrete_action_count(),
            "state_dim": env.state_dim(),
            "observation_shape": env.observation_shape(),
            "config": env.config(),
        });
        self.env = Some(env);
        Ok(ProtocolMessage::ok(None, payload))
    }

    fn reset(&mut self, p: ResetPayload) -> Reply {
        let stopped = self.stop_recording()?;
        let env = self
            .env
            .as_mut()
            .ok_or((ErrorCode::NotReady, "no environment; send make first".into()))?;
        let observation = env.reset(p.seed).map_err(env_error)?;
        self.history.clear();
        self.initial_observation = Some(observation.clone());
        let mut payload = json!({ "seed": p.seed, "observation": observation });
        if let Some(s) = stopped {
            payload["recording_stopped"] = s;
        }
        Ok(ProtocolMessage::ok(None, payload))
    }

    fn step(&mut self, p: StepPayload) -> Reply {
        let env = self
            .env
            .as_mut()
            .ok_or((ErrorCode::NotReady, "no environment; send make first".into()))?;
        let result = env.step(&p.action).map_err(env_error)?;
        let record = StepRecord::from_result(self.history.len() as u64, &p.action, &result, Default::default());
        if let Some(rec) = self.recording.as_mut() {
            rec.writer.append(&record).map_err(internal)?;
        }
        self.history.push(record);
        let payload = serde_json::to_value(&result).map_err(internal)?;
        Ok(ProtocolMessage::ok(None, payload))
    }

    fn render(&mut self) -> Reply {
        let env = self
            .env
            .as_ref()
            .ok_or((ErrorCode::NotReady, "no environment; send make first".into()))?;
        if env.seed().is_none() {
            return Err((ErrorCode::NotReady, "environment not reset".into()));
        }
        let fb = env.render();
        let depth: Vec<u8> = fb.depth.iter().flat_map(|d| d.to_le_bytes()).collect();
        let seg: Vec<u8> = fb.segmentation.iter().flat_map(|s| s.to_le_bytes()).collect();
        Ok(ProtocolMessage {
            kind: MessageType::Frame,
            id: None,
            payload: json!({
                "shape": [fb.resolution, fb.resolution],
                "rgb": BASE64.encode(&fb.rgb),
                "depth": BASE64.encode(depth),
                "segmentation": BASE64.encode(seg),
            }),
        })
    }

    fn record_start(&mut self, p: RecordStartPayload) -> Reply {
        let env = self
            .env
            .as_ref()
            .ok_or((ErrorCode::NotReady, "no environment; send make first".into()))?;
        let initial = self
            .initial_observation
            .clone()
            .ok_or((ErrorCode::NotReady, "environment not reset".into()))?;
        let path = resolve_record_path(&self.record_dir, &p.path).map_err(|m| (ErrorCode::BadMessage, m))?;
        let mut header = TrajectoryHeader::for_env(env, p.source).map_err(internal)?;
        header.initial_observation = initial;
        self.stop_recording()?;
        let mut writer = TrajectoryWriter::create(&path, &header).map_err(internal)?;
        for s in &self.history {
            writer.append(s).map_err(internal)?;
        }
        let backfilled = self.history.len();
        self.recording = Some(Recording {
            path: path.clone(),
            writer,
        });
        Ok(ProtocolMessage::ok(
            None,
            json!({ "path": path.display().to_string(), "backfilled_steps": backfilled }),
        ))
    }

    fn stop_recording(&mut self) -> Result<Option<Value>, (ErrorCode, String)> {
        let Some(rec) = self.recording.take() else {
            return Ok(None);
        };
        let steps = rec.writer.steps_written();
        rec.writer.finish().map_err(internal)?;
        Ok(Some(json!({ "path": rec.path.display().to_string(), "steps": steps })))
    }
}

fn parse_payload<T: for<'de> Deserialize<'de>>(payload: Value) -> Result<T, (ErrorCode, String)> {
    let payload = if payload.is_null() { json!({}) } else { payload };
    serde_json::from_value(payload).map_err(|e| (ErrorCode::BadMessage, format!("invalid payload: {e}")))
}

fn env_error(e: EnvError) -> (ErrorCode, String) {
    let code = match e {
        EnvError::NotReset | EnvError::EpisodeOver => ErrorCode::NotReady,
        EnvError::ActionShapeMismatch { .. } | EnvError::InvalidAction(_) => ErrorCode::ActionShape,
        EnvError::InvalidConfig(_) | EnvError::UnknownEnv(_) => ErrorCode::InvalidConfig,
        _ => ErrorCode::Internal,
    };
    (code, e.to_string())
}

fn internal(e: impl std::fmt::Display) -> (ErrorCode, String) {
    (ErrorCode::Internal, e.to_string())
}

fn resolve_record_path(dir: &Path, requested: &str) -> Result<PathBuf, String> {
    let rel = Path::new(requested);
    let plain = !requested.is_empty() && rel.components().all(|c| matches!(c, Component::Normal(_)));
    if !plain {
        return Err(format!("record path must be relative without '..': {requested}"));
    }
    Ok(dir.join(rel))
}

/// Writes one length-prefixed frame (4-byte big-endian length, then the body).
pub fn write_frame(out: &mut impl Write, body: &[u8]) -> io::Result<()> {
    let len = u32::try_from(body.len()).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    out.write_all(&len.to_be_bytes())?;
    out.write_all(body)?;
    out.flush()
}

/// Reads one length-prefixed frame; `Ok(None)` on clean end of stream.
pub fn read_frame(input: &mut impl Read, max_bytes: usize) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match input.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > max_bytes {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("frame of {len} bytes exceeds limit {max_bytes}"),
        ));
    }
    let mut body = vec![0u8; len];
    input.read_exact(&mut body)?;
    Ok(Some(body))
}

pub struct Server {
    listener: TcpListener,
    options: ServerOptions,
    shutdown: Arc<AtomicBool>,
    active: Arc<AtomicUsize>,
}

pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    thread: Option<JoinHandle<Result<(), ServerError>>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting connections and waits for the accept loop to exit.
    pub fn shutdown(mut self) -> Result<(), ServerError> {
        self.stop()
    }

    fn stop(&mut self) -> Result<(), ServerError> {
        self.shutdown.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_secs(1));
        match self.thread.take() {
            Some(t) => t.join().unwrap_or(Ok(())),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop();
    }
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs + std::fmt::Display, options: ServerOptions) -> Result<Self, ServerError> {
        let listener = TcpListener::bind(&addr).map_err(|source| ServerError::BindFailure {
            addr: addr.to_string(),
            source,
        })?;
        Ok(Self {
            listener,
            options,
            shutdown: Arc::new(AtomicBool::new(false)),
            active: Arc::new(AtomicUsize::new(0)),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Runs the accept loop on a background thread.
    pub fn spawn(self) -> Result<ServerHandle, ServerError> {
        let addr = self.local_addr()?;
        let shutdown = self.shutdown.clone();
        let thread = thread::spawn(move || self.run());
        Ok(ServerHandle {
            addr,
            shutdown,
            thread: Some(thread),
        })
    }

    /// Accepts connections until shut down, one thread per session.
    pub fn run(self) -> Result<(), ServerError> {
        for stream in self.listener.incoming() {
            if self.shutdown.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = stream else { continue };
            let _ = stream.set_nodelay(true);
            if self.active.fetch_add(1, Ordering::SeqCst) >= self.options.max_sessions {
                self.active.fetch_sub(1, Ordering::SeqCst);
                reject(stream, &self.options);
                continue;
            }
            let options = self.options.clone();
            let active = self.active.clone();
            thread::spawn(move || {
                let _ = match options.transport {
                    Transport::Tcp => serve_tcp(stream, &options),
                    Transport::WebSocket => serve_websocket(stream, &options),
                };
                active.fetch_sub(1, Ordering::SeqCst);
            });
        }
        Ok(())
    }
}

/// Binds `addr` and serves until the process exits.
pub fn serve(addr: &str, options: ServerOptions) -> Result<(), ServerError> {
    Server::bind(addr, options)?.run()
}

fn reject(stream: TcpStream, options: &ServerOptions) {
    let msg = ProtocolMessage::error(None, ErrorCode::Internal, "session limit reached").to_json();
    match options.transport {
        Transport::Tcp => {
            let mut s = stream;
            let _ = write_frame(&mut s, msg.as_bytes());
        }
        Transport::WebSocket => {
            if let Ok(mut ws) = tungstenite::accept(stream) {
                let _ = ws.send(tungstenite::Message::text(msg));
                let _ = ws.close(None);
            }
        }
    }
}

fn serve_tcp(stream: TcpStream, options: &ServerOptions) -> io::Result<()> {
    let mut reader = stream.try_clone()?;
    let mut writer = stream;
    let mut session = Session::new(&options.record_dir);
    loop {
        let body = match read_frame(&mut reader, options.max_frame_bytes) {
            Ok(Some(b)) => b,
            Ok(None) => return Ok(()),
            Err(e) if e.kind() == io::ErrorKind::InvalidData => {
                let msg = ProtocolMessage::error(None, ErrorCode::BadMessage, e.to_string()).to_json();
                let _ = write_frame(&mut writer, msg.as_bytes());
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        let reply = session.handle_bytes(&body);
        write_frame(&mut writer, reply.as_bytes())?;
        if session.is_closed() {
            return Ok(());
        }
    }
}

fn serve_websocket(stream: TcpStream, options: &ServerOptions) -> io::Result<()> {
    let config = tungstenite::protocol::WebSocketConfig::default()
        .max_message_size(Some(options.max_frame_bytes))
        .max_frame_size(Some(options.max_frame_bytes));
    let mut ws = tungstenite::accept_with_config(stream, Some(config)).map_err(io::Error::other)?;
    let mut session = Session::new(&options.record_dir);
    loop {
        let msg = match ws.read() {
            Ok(m) => m,
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(()),
            Err(e) => return Err(io::Error::other(e)),
        };
        let reply = match msg {
            tungstenite::Message::Text(t) => session.handle_bytes(t.as_bytes()),
            tungstenite::Message::Binary(b) => session.handle_bytes(&b),
            tungstenite::Message::Close(_) => return Ok(()),
            _ => continue,
        };
        ws.send(tungstenite::Message::text(reply)).map_err(io::Error::other)?;
        if session.is_closed() {
            let _ = ws.close(None);
            let _ = ws.flush();
            return Ok(());
        }
    }
}

/// Blocking TCP client for the framed protocol.
pub struct TcpClient {
    stream: TcpStream,
    next_id: i64,
}

impl TcpClient {
    pub fn connect(addr: impl ToSocketAddrs) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Self { stream, next_id: 1 })
    }

    /// Sends a request and waits for its response.
    pub fn request(&mut self, kind: MessageType, payload: Value) -> io::Result<ProtocolMessage> {
        let id = self.next_id;
        self.next_id += 1;
        let msg = ProtocolMessage::request(kind, id, payload);
        self.send_raw(msg.to_json().as_bytes())
    }

    /// Sends an arbitrary frame body and parses the response.
    pub fn send_raw(&mut self, body: &[u8]) -> io::Result<ProtocolMessage> {
        write_frame(&mut self.stream, body)?;
        let reply = read_frame(&mut self.stream, usize::MAX)?
            .ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "server closed the connection"))?;
        serde_json::from_slice(&reply).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(s: &mut Session, kind: MessageType, payload: Value) -> ProtocolMessage {
        s.handle(ProtocolMessage::request(kind, 7, payload))
    }

    #[test]
    fn hello_lists_envs() {
        let mut s = Session::new(".");
        let r = request(&mut s, MessageType::Hello, Value::Null);
        assert_eq!(r.kind, MessageType::Ok);
        assert_eq!(r.id, Some(7));
        assert_eq!(r.payload["protocol_version"], 1);
        assert_eq!(r.payload["envs"].as_array().unwrap().len(), 5);
    }

    #[test]
    fn step_before_make_is_not_ready() {
        let mut s = Session::new(".");
        let r = request(&mut s, MessageType::Step, json!({"action": [0.0, 0.0, 0.0]}));
        assert_eq!(r.error_code(), Some(ErrorCode::NotReady));
    }

    #[test]
    fn malformed_json_keeps_session_open() {
        let mut s = Session::new(".");
        let r: ProtocolMessage = serde_json::from_str(&s.handle_bytes(b"{not json")).unwrap();
        assert_eq!(r.error_code(), Some(ErrorCode::BadMessage));
        assert_eq!(r.id, None);
        assert!(!s.is_closed());
        let r = s.handle_text(r#"{"type":"bogus","id":3}"#);
        assert_eq!(r.error_code(), Some(ErrorCode::BadMessage));
        assert_eq!(r.id, Some(3));
        assert_eq!(request(&mut s, MessageType::Hello, Value::Null).kind, MessageType::Ok);
    }

    #[test]
    fn action_shape_and_config_errors() {
        let mut s = Session::new(".");
        let r = request(
            &mut s,
            MessageType::Make,
            json!({"env": "reach", "config": {"frame_skip": 3}}),
        );
        assert_eq!(r.error_code(), Some(ErrorCode::InvalidConfig));
        let r = request(&mut s, MessageType::Make, json!({"env": "reach"}));
        assert_eq!(r.kind, MessageType::Ok);
        assert_eq!(r.payload["state_dim"], 6);
        request(&mut s, MessageType::Reset, json!({"seed": 1}));
        let r = request(&mut s, MessageType::Step, json!({"action": [0.0]}));
        assert_eq!(r.error_code(), Some(ErrorCode::ActionShape));
    }

    #[test]
    fn reset_is_deterministic() {
        let mut s = Session::new(".");
        request(&mut s, MessageType::Make, json!({"env": "deflect_spheres"}));
        let a = request(&mut s, MessageType::Reset, json!({"seed": 4})).to_json();
        let b = request(&mut s, MessageType::Reset, json!({"seed": 4})).to_json();
        assert_eq!(a, b);
    }

    #[test]
    fn render_frame_sizes() {
        let mut s = Session::new(".");
        request(
            &mut s,
            MessageType::Make,
            json!({"env": "reach", "config": {"image_resolution": 32}}),
        );
        assert_eq!(
            request(&mut s, MessageType::Render, Value::Null).error_code(),
            Some(ErrorCode::NotReady)
        );
        request(&mut s, MessageType::Reset, json!({"seed": 0}));
        let f = request(&mut s, MessageType::Render, Value::Null);
        assert_eq!(f.kind, MessageType::Frame);
        let rgb = BASE64.decode(f.payload["rgb"].as_str().unwrap()).unwrap();
        let depth = BASE64.decode(f.payload["depth"].as_str().unwrap()).unwrap();
        assert_eq!(rgb.len(), 32 * 32 * 3);
        assert_eq!(depth.len(), 32 * 32 * 4);
    }

    #[test]
    fn record_path_must_stay_inside_dir() {
        assert!(resolve_record_path(Path::new("/tmp"), "../x.lgtraj").is_err());
        assert!(resolve_record_path(Path::new("/tmp"), "/etc/x").is_err());
        assert!(resolve_record_path(Path::new("/tmp"), "").is_err());
        assert_eq!(
            resolve_record_path(Path::new("/tmp"), "a/b.lgtraj").unwrap(),
            PathBuf::from("/tmp/a/b.lgtraj")
        );
    }

    #[test]
    fn frame_round_trip_and_limit() {
        let mut buf = Vec::new();
        write_frame(&mut buf, b"hello").unwrap();
        assert_eq!(&buf[..4], &[0, 0, 0, 5]);
        let mut cur = io::Cursor::new(buf.clone());
        assert_eq!(read_frame(&mut cur, 16).unwrap().unwrap(), b"hello");
        assert!(read_frame(&mut cur, 16).unwrap().is_none());
        assert!(read_frame(&mut io::Cursor::new(buf), 4).is_err());
    }
}
