//! Line-delimited JSON protocol between the search and an external
//! generator process. See [`protocol_spec`] for the wire format.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::field::{NoiseField, Shape};
use crate::harness::config::{GeneratorKind, RunConfig};
use crate::reward::{EvalMode, Evaluation, FlowRewardScorer, RewardSpec, Scorer};

pub const PROTOCOL_VERSION: u64 = 1;

const SPEC: &str = r#"SES bridge wire protocol, version 1

Transport
  The search process spawns the bridge and talks to it over the bridge's
  standard input (requests) and standard output (responses). Every message is
  one JSON object on a single line terminated by "\n". Diagnostics must go to
  standard error; standard output carries protocol messages only.

Handshake
  request:  {"op":"hello","version":1}
  response: {"op":"hello","version":1,"shape":[C,H,W]}

Scoring
  request:  {"op":"generate_and_score","id":<int>,"noise_b64":<string>,"steps":<int>}
  response: {"id":<int>,"score":<real>}
        or  {"id":<int>,"error":<string>}

  noise_b64 is the standard base64 encoding (with padding) of C*H*W float32
  values, little-endian, row-major (channel, then row, then column). The
  decoded payload must be exactly 4*C*H*W bytes. steps is the number of Euler
  steps the generator should use. The score is the reward of the generated
  output; higher is better.

Shutdown
  request:  {"op":"bye"}
  The bridge exits without replying. Closing its standard input has the same
  effect.

Rules
  - One request in flight per connection: the client waits for the response
    before sending the next request. Parallel scoring uses several bridges.
  - Every scoring response carries the id of the request it answers. A client
    treats a response with any other id as a protocol error.
  - A payload of the wrong length, invalid base64 or a failed generation gets
    an error response with the request's id; the session continues.
  - A line that is not valid JSON, has an unknown op or lacks a required field
    terminates the session. The bridge sends an error response first when the
    line's id can be read.
"#;

/// The canonical protocol description for bridge authors.
pub fn protocol_spec() -> &'static str {
    SPEC
}

/// Base64 of the field's float32 little-endian row-major values.
pub fn encode_noise(x: &NoiseField) -> String {
    let mut bytes = Vec::with_capacity(4 * x.shape().len());
    for &v in x.as_slice() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    STANDARD.encode(bytes)
}

pub fn decode_noise(payload_b64: &str, shape: Shape) -> Result<NoiseField> {
    let bytes = STANDARD
        .decode(payload_b64)
        .map_err(|e| Error::Protocol(format!("invalid base64 payload: {e}")))?;
    let expected = 4 * shape.len();
    if bytes.len() != expected {
        return Err(Error::Protocol(format!(
            "payload has {} bytes, expected {expected} (4*C*H*W for shape {shape})",
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    NoiseField::from_vec(shape, data)
}

#[derive(Debug, Serialize, Deserialize)]
struct HelloResponse {
    op: String,
    version: u64,
    shape: [usize; 3],
}

#[derive(Debug, Deserialize)]
struct ScoreResponse {
    id: u64,
    #[serde(default)]
    score: Option<f64>,
    #[serde(default)]
    error: Option<String>,
}

fn write_line(w: &mut impl Write, v: &Value) -> Result<()> {
    let mut line = serde_json::to_string(v).map_err(|e| Error::Protocol(e.to_string()))?;
    line.push('\n');
    w.write_all(line.as_bytes())?;
    w.flush()?;
    Ok(())
}

/// Serve requests from `reader` until `bye` or end of input. `score` receives
/// the decoded noise and requested step count.
pub fn serve<R, W, F>(reader: R, mut writer: W, shape: Shape, mut score: F) -> Result<()>
where
    R: BufRead,
    W: Write,
    F: FnMut(&NoiseField, usize) -> Result<f64>,
{
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let msg: Value = serde_json::from_str(&line)
            .map_err(|e| Error::Protocol(format!("malformed request line: {e}")))?;
        let id = msg.get("id").and_then(Value::as_u64);
        let fatal = |writer: &mut W, message: String| -> Result<()> {
            if let Some(id) = id {
                write_line(writer, &json!({"id": id, "error": message}))?;
            }
            Err(Error::Protocol(message))
        };
        match msg.get("op").and_then(Value::as_str) {
            Some("hello") => {
                let version = msg.get("version").and_then(Value::as_u64);
                if version != Some(PROTOCOL_VERSION) {
                    return fatal(&mut writer, format!("unsupported protocol version {version:?}"));
                }
                write_line(
                    &mut writer,
                    &json!({"op": "hello", "version": PROTOCOL_VERSION, "shape": shape.as_array()}),
                )?;
            }
            Some("generate_and_score") => {
                let Some(id) = id else {
                    return Err(Error::Protocol("generate_and_score without an integer id".into()));
                };
                let Some(payload) = msg.get("noise_b64").and_then(Value::as_str) else {
                    return fatal(&mut writer, "missing noise_b64".into());
                };
                let steps = match msg.get("steps").and_then(Value::as_u64) {
                    Some(s) if s >= 1 => s as usize,
                    _ => return fatal(&mut writer, "steps must be a positive integer".into()),
                };
                let reply = match decode_noise(payload, shape).and_then(|x| score(&x, steps)) {
                    Ok(s) if s.is_finite() => json!({"id": id, "score": s}),
                    Ok(s) => json!({"id": id, "error": format!("non-finite score {s}")}),
                    Err(e) => json!({"id": id, "error": e.to_string()}),
                };
                write_line(&mut writer, &reply)?;
            }
            Some("bye") => return Ok(()),
            other => return fatal(&mut writer, format!("unknown op {other:?}")),
        }
    }
    Ok(())
}

/// Client end of a session over any reader/writer pair.
#[derive(Debug)]
pub struct BridgeClient<R, W> {
    reader: R,
    writer: W,
    next_id: u64,
    broken: bool,
}

impl<R: BufRead, W: Write> BridgeClient<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        Self {
            reader,
            writer,
            next_id: 0,
            broken: false,
        }
    }

    fn read_line(&mut self) -> Result<String> {
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            self.broken = true;
            return Err(Error::Protocol("bridge closed its output".into()));
        }
        Ok(line)
    }

    fn ensure_open(&self) -> Result<()> {
        if self.broken {
            return Err(Error::Protocol("session terminated by an earlier protocol error".into()));
        }
        Ok(())
    }

    pub fn hello(&mut self) -> Result<Shape> {
        self.ensure_open()?;
        write_line(&mut self.writer, &json!({"op": "hello", "version": PROTOCOL_VERSION}))?;
        let line = self.read_line()?;
        let resp: HelloResponse = serde_json::from_str(&line).map_err(|e| {
            self.broken = true;
            Error::Protocol(format!("malformed hello response: {e}"))
        })?;
        if resp.op != "hello" || resp.version != PROTOCOL_VERSION {
            self.broken = true;
            return Err(Error::Protocol(format!(
                "unexpected hello response (op {:?}, version {})",
                resp.op, resp.version
            )));
        }
        Ok(Shape::new(resp.shape[0], resp.shape[1], resp.shape[2]))
    }

    /// Send one scoring request and wait for its response.
    pub fn generate_and_score(&mut self, noise: &NoiseField, steps: usize) -> Result<f64> {
        self.ensure_open()?;
        let id = self.next_id;
        self.next_id += 1;
        write_line(
            &mut self.writer,
            &json!({"op": "generate_and_score", "id": id, "noise_b64": encode_noise(noise), "steps": steps}),
        )?;
        let line = self.read_line()?;
        let resp: ScoreResponse = serde_json::from_str(&line).map_err(|e| {
            self.broken = true;
            Error::Protocol(format!("malformed response: {e}"))
        })?;
        if resp.id != id {
            self.broken = true;
            return Err(Error::Protocol(format!("response id {} does not match request id {id}", resp.id)));
        }
        match (resp.score, resp.error) {
            (_, Some(message)) => Err(Error::External { id, message }),
            (Some(s), None) if s.is_finite() => Ok(s),
            (Some(s), None) => Err(Error::NonFinite(format!("bridge score {s} for request {id}"))),
            (None, None) => {
                self.broken = true;
                Err(Error::Protocol(format!("response {id} has neither score nor error")))
            }
        }
    }

    pub fn bye(&mut self) -> Result<()> {
        if !self.broken {
            write_line(&mut self.writer, &json!({"op": "bye"}))?;
        }
        Ok(())
    }
}

struct Session {
    child: Child,
    client: Option<BridgeClient<BufReader<ChildStdout>, ChildStdin>>,
}

/// Scorer backed by a bridge child process. Requests are serialized through a
/// mutex, matching the one-request-in-flight rule.
pub struct ExternalScorer {
    shape: Shape,
    steps: usize,
    session: Mutex<Session>,
}

impl std::fmt::Debug for ExternalScorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalScorer")
            .field("shape", &self.shape)
            .field("steps", &self.steps)
            .finish_non_exhaustive()
    }
}

impl ExternalScorer {
    /// Start `command` and perform the handshake; the bridge must report
    /// `shape`.
    pub fn spawn(command: &[String], cwd: Option<&Path>, shape: Shape, steps: usize) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::Config("empty bridge command".into()))?;
        let mut cmd = Command::new(program);
        cmd.args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit());
        if let Some(dir) = cwd {
            cmd.current_dir(dir);
        }
        let mut child = cmd.spawn().map_err(|e| Error::io(program, e))?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        let mut client = BridgeClient::new(BufReader::new(stdout), stdin);
        let reported = match client.hello() {
            Ok(s) => s,
            Err(e) => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(e);
            }
        };
        if reported != shape {
            let _ = client.bye();
            let _ = child.wait();
            return Err(Error::ShapeMismatch {
                expected: shape.to_string(),
                actual: format!("{reported} (reported by bridge)"),
            });
        }
        Ok(Self {
            shape,
            steps,
            session: Mutex::new(Session {
                child,
                client: Some(client),
            }),
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}

impl Scorer for ExternalScorer {
    fn shape(&self) -> Shape {
        self.shape
    }

    fn evaluate(&self, noise: &NoiseField) -> Result<Evaluation> {
        let mut s = self
            .session
            .lock()
            .map_err(|_| Error::Protocol("bridge session poisoned".into()))?;
        let client = s
            .client
            .as_mut()
            .ok_or_else(|| Error::Protocol("bridge session closed".into()))?;
        let score = client.generate_and_score(noise, self.steps)?;
        Ok(Evaluation { score, output: None })
    }
}

impl Drop for ExternalScorer {
    fn drop(&mut self) {
        if let Ok(s) = self.session.get_mut() {
            if let Some(mut client) = s.client.take() {
                let _ = client.bye();
                // dropping the client closes stdin, so a bridge that missed
                // the bye still sees end of input
            }
            let _ = s.child.wait();
        }
    }
}

/// In-process flowsim + reward behind the protocol, one cached scorer per
/// requested step count. This is what `ses bridge` serves.
#[derive(Debug)]
pub struct FlowBridge {
    config: RunConfig,
    spec: RewardSpec,
    scorers: HashMap<usize, FlowRewardScorer>,
}

impl FlowBridge {
    pub fn new(config: &RunConfig) -> Result<Self> {
        if config.generator.kind != GeneratorKind::Flowsim {
            return Err(Error::Config("the reference bridge serves flowsim generators only".into()));
        }
        Ok(Self {
            config: config.clone(),
            spec: config.reward_spec()?,
            scorers: HashMap::new(),
        })
    }

    pub fn shape(&self) -> Shape {
        self.config.generator.shape()
    }

    pub fn score(&mut self, noise: &NoiseField, steps: usize) -> Result<f64> {
        if !self.scorers.contains_key(&steps) {
            let g = self.config.generator.flowsim(steps)?;
            let s = FlowRewardScorer::new(g, &self.spec, EvalMode::new(steps)?)?;
            self.scorers.insert(steps, s);
        }
        Ok(self.scorers[&steps].evaluate(noise)?.score)
    }

    pub fn serve<R: BufRead, W: Write>(&mut self, reader: R, writer: W) -> Result<()> {
        let shape = self.shape();
        serve(reader, writer, shape, |x, steps| self.score(x, steps))
    }
}
