//! Trajectory recording and replay in the `.lgtraj` JSON Lines format.
//!
//! Line 1 is the header, each following line one environment step.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::envcore::{EnvConfig, EnvError, Environment, Observation, StepInfo, StepResult};
use crate::envs::{make_env, EnvId};

pub const TRAJ_FORMAT: &str = "lapkit-trajectory";
pub const TRAJ_VERSION: u32 = 1;
pub const TRAJ_EXTENSION: &str = "lgtraj";

#[derive(Debug, Error)]
pub enum TrajError {
    #[error("corrupt trajectory at line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error("trajectory version {found} is newer than supported version {supported}")]
    VersionMismatch { found: u64, supported: u32 },
    #[error("callback '{name}' failed: {reason}")]
    CallbackFailure { name: String, reason: String },
    #[error("policy failed: {0}")]
    Policy(String),
    #[error("invalid trajectory: {0}")]
    Invalid(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Human,
    Scripted,
    Planner,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryHeader {
    pub format: String,
    pub version: u32,
    pub env: EnvId,
    pub config: EnvConfig,
    pub seed: u64,
    pub source: Source,
    /// Seconds since the Unix epoch.
    pub created_unix_s: u64,
    /// Observation returned by `reset`.
    pub initial_observation: Observation,
}

impl TrajectoryHeader {
    /// Header for an environment that has been reset.
    pub fn for_env(env: &Environment, source: Source) -> Result<Self, TrajError> {
        let seed = env.seed().ok_or(EnvError::NotReset)?;
        Ok(Self {
            format: TRAJ_FORMAT.into(),
            version: TRAJ_VERSION,
            env: env.id(),
            config: env.config().clone(),
            seed,
            source,
            created_unix_s: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            initial_observation: env.observe(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    pub step: u64,
    pub action: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub info: StepInfo,
    #[serde(default)]
    pub custom: BTreeMap<String, Value>,
    pub observation: Observation,
}

impl StepRecord {
    pub fn from_result(step: u64, action: &[f64], result: &StepResult, custom: BTreeMap<String, Value>) -> Self {
        Self {
            step,
            action: action.to_vec(),
            reward: result.reward,
            terminated: result.terminated,
            truncated: result.truncated,
            info: result.info.clone(),
            custom,
            observation: result.observation.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub header: TrajectoryHeader,
    pub steps: Vec<StepRecord>,
}

impl TrajectoryRecord {
    pub fn validate(&self) -> Result<(), TrajError> {
        for (n, s) in self.steps.iter().enumerate() {
            if s.step != n as u64 {
                return Err(TrajError::Invalid(format!("step index {} at position {n}", s.step)));
            }
            if (s.terminated || s.truncated) && n + 1 != self.steps.len() {
                return Err(TrajError::Invalid(format!("step {n} ends the episode but is not last")));
            }
        }
        Ok(())
    }

    pub fn actions(&self) -> impl Iterator<Item = &[f64]> {
        self.steps.iter().map(|s| s.action.as_slice())
    }
}

/// A named per-step probe whose value is stored under `custom[name]`.
pub struct Callback<'a> {
    pub name: String,
    #[allow(clippy::type_complexity)]
    pub probe: Box<dyn FnMut(&Environment) -> Result<Value, String> + 'a>,
}

impl<'a> Callback<'a> {
    pub fn new(name: &str, probe: impl FnMut(&Environment) -> Result<Value, String> + 'a) -> Self {
        Self {
            name: name.to_string(),
            probe: Box::new(probe),
        }
    }
}

/// Runs `policy` on a reset environment until the episode ends.
pub fn record(
    env: &mut Environment,
    source: Source,
    mut policy: impl FnMut(&Environment) -> Result<Vec<f64>, String>,
    callbacks: &mut [Callback<'_>],
) -> Result<TrajectoryRecord, TrajError> {
    let header = TrajectoryHeader::for_env(env, source)?;
    let mut steps = Vec::new();
    loop {
        let action = policy(env).map_err(TrajError::Policy)?;
        let result = env.step(&action)?;
        let mut custom = BTreeMap::new();
        for cb in callbacks.iter_mut() {
            let value = (cb.probe)(env).map_err(|reason| TrajError::CallbackFailure {
                name: cb.name.clone(),
                reason,
            })?;
            custom.insert(cb.name.clone(), value);
        }
        let done = result.terminated || result.truncated;
        steps.push(StepRecord::from_result(steps.len() as u64, &action, &result, custom));
        if done {
            break;
        }
    }
    Ok(TrajectoryRecord { header, steps })
}

/// Streaming writer: header first, then one line per appended step.
pub struct TrajectoryWriter<W: Write> {
    out: W,
    next_step: u64,
    closed: bool,
}

impl TrajectoryWriter<BufWriter<File>> {
    pub fn create(path: &Path, header: &TrajectoryHeader) -> Result<Self, TrajError> {
        Self::new(BufWriter::new(File::create(path)?), header)
    }
}

impl<W: Write> TrajectoryWriter<W> {
    pub fn new(mut out: W, header: &TrajectoryHeader) -> Result<Self, TrajError> {
        write_line(&mut out, header)?;
        Ok(Self {
            out,
            next_step: 0,
            closed: false,
        })
    }

    pub fn append(&mut self, step: &StepRecord) -> Result<(), TrajError> {
        if self.closed {
            return Err(TrajError::Invalid("episode already ended".into()));
        }
        if step.step != self.next_step {
            return Err(TrajError::Invalid(format!(
                "expected step {}, got {}",
                self.next_step, step.step
            )));
        }
        write_line(&mut self.out, step)?;
        self.next_step += 1;
        self.closed = step.terminated || step.truncated;
        Ok(())
    }

    pub fn steps_written(&self) -> u64 {
        self.next_step
    }

    pub fn finish(mut self) -> Result<W, TrajError> {
        self.out.flush()?;
        Ok(self.out)
    }
}

fn write_line<T: Serialize>(out: &mut impl Write, value: &T) -> Result<(), TrajError> {
    serde_json::to_writer(&mut *out, value).map_err(io::Error::other)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn write_to(record: &TrajectoryRecord, out: impl Write) -> Result<(), TrajError> {
    record.validate()?;
    let mut w = TrajectoryWriter::new(out, &record.header)?;
    for s in &record.steps {
        w.append(s)?;
    }
    w.finish()?;
    Ok(())
}

pub fn write(record: &TrajectoryRecord, path: &Path) -> Result<(), TrajError> {
    write_to(record, BufWriter::new(File::create(path)?))
}

pub fn read_from(input: impl BufRead) -> Result<TrajectoryRecord, TrajError> {
    let mut lines = input.lines();
    let first = lines.next().ok_or(TrajError::Corrupt {
        line: 1,
        reason: "empty file".into(),
    })??;
    let raw: Value = serde_json::from_str(&first).map_err(|e| TrajError::Corrupt {
        line: 1,
        reason: e.to_string(),
    })?;
    if raw.get("format").and_then(Value::as_str) != Some(TRAJ_FORMAT) {
        return Err(TrajError::Corrupt {
            line: 1,
            reason: "not a lapkit trajectory".into(),
        });
    }
    let version = raw.get("version").and_then(Value::as_u64).ok_or(TrajError::Corrupt {
        line: 1,
        reason: "missing version".into(),
    })?;
    if version != u64::from(TRAJ_VERSION) {
        return Err(TrajError::VersionMismatch {
            found: version,
            supported: TRAJ_VERSION,
        });
    }
    let header: TrajectoryHeader = serde_json::from_value(raw).map_err(|e| TrajError::Corrupt {
        line: 1,
        reason: e.to_string(),
    })?;
    let mut steps: Vec<StepRecord> = Vec::new();
    for (n, line) in lines.enumerate() {
        let number = n + 2;
        let line = line?;
        let step: StepRecord = serde_json::from_str(&line).map_err(|e| TrajError::Corrupt {
            line: number,
            reason: e.to_string(),
        })?;
        if step.step != steps.len() as u64 {
            return Err(TrajError::Corrupt {
                line: number,
                reason: format!("expected step {}, found {}", steps.len(), step.step),
            });
        }
        if steps.last().is_some_and(|s| s.terminated || s.truncated) {
            return Err(TrajError::Corrupt {
                line: number,
                reason: "step after the end of the episode".into(),
            });
        }
        steps.push(step);
    }
    Ok(TrajectoryRecord { header, steps })
}

pub fn read(path: &Path) -> Result<TrajectoryRecord, TrajError> {
    read_from(BufReader::new(File::open(path)?))
}

/// Fresh environment rebuilt from the header and reset with its seed.
pub fn rebuild_env(header: &TrajectoryHeader) -> Result<Environment, TrajError> {
    let mut env = make_env(header.env, header.config.clone())?;
    env.reset(header.seed)?;
    Ok(env)
}

/// Re-executes the recorded actions and returns the new step results.
pub fn replay(record: &TrajectoryRecord) -> Result<Vec<StepResult>, TrajError> {
    let mut env = rebuild_env(&record.header)?;
    record
        .steps
        .iter()
        .map(|s| env.step(&s.action).map_err(TrajError::from))
        .collect()
}

/// Whether replaying reproduces every recorded reward and flag exactly.
pub fn replay_matches(record: &TrajectoryRecord) -> Result<bool, TrajError> {
    let results = replay(record)?;
    Ok(results.len() == record.steps.len()
        && results.iter().zip(&record.steps).all(|(r, s)| {
            r.reward.to_bits() == s.reward.to_bits() && r.terminated == s.terminated && r.truncated == s.truncated
        }))
}

/// Replays the trajectory and writes one PPM frame per step into `dir`.
pub fn replay_to_frames(record: &TrajectoryRecord, dir: &Path) -> Result<usize, TrajError> {
    std::fs::create_dir_all(dir)?;
    let mut env = rebuild_env(&record.header)?;
    for s in &record.steps {
        env.step(&s.action)?;
        env.render().save_ppm(&dir.join(format!("frame_{:05}.ppm", s.step)))?;
    }
    Ok(record.steps.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::default_config;

    fn reach_record(steps: usize) -> TrajectoryRecord {
        let mut env = make_env(EnvId::Reach, default_config(EnvId::Reach)).unwrap();
        env.reset(21).unwrap();
        let mut n = 0;
        let mut rec = record(
            &mut env,
            Source::Scripted,
            |e| e.scripted_expert().map_err(|e| e.to_string()),
            &mut [Callback::new("step_count", |_| {
                n += 1;
                Ok(Value::from(n))
            })],
        )
        .unwrap();
        rec.steps.truncate(steps);
        rec
    }

    #[test]
    fn callbacks_populate_every_step() {
        let rec = reach_record(usize::MAX);
        assert!(rec.steps.iter().all(|s| s.custom.contains_key("step_count")));
        let last = rec.steps.last().unwrap();
        assert!(last.terminated && last.info.success);
    }

    #[test]
    fn failing_callback_aborts() {
        let mut env = make_env(EnvId::Reach, default_config(EnvId::Reach)).unwrap();
        env.reset(1).unwrap();
        let err = record(
            &mut env,
            Source::Agent,
            |_| Ok(vec![0.0; 3]),
            &mut [Callback::new("broken", |_| Err("boom".into()))],
        )
        .unwrap_err();
        assert!(matches!(err, TrajError::CallbackFailure { ref name, .. } if name == "broken"));
    }

    #[test]
    fn round_trip_in_memory() {
        let rec = reach_record(10);
        let mut buf = Vec::new();
        write_to(&rec, &mut buf).unwrap();
        assert_eq!(read_from(io::Cursor::new(buf)).unwrap(), rec);
    }

    #[test]
    fn truncated_file_reports_line() {
        let rec = reach_record(10);
        let mut buf = Vec::new();
        write_to(&rec, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut = &text[..text.len() - 20];
        match read_from(io::Cursor::new(cut.as_bytes())) {
            Err(TrajError::Corrupt { line, .. }) => assert_eq!(line, 11),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn future_version_rejected() {
        let rec = reach_record(1);
        let mut buf = Vec::new();
        write_to(&rec, &mut buf).unwrap();
        let text = String::from_utf8(buf)
            .unwrap()
            .replacen("\"version\":1", "\"version\":2", 1);
        assert!(matches!(
            read_from(io::Cursor::new(text.as_bytes())),
            Err(TrajError::VersionMismatch { found: 2, .. })
        ));
    }

    #[test]
    fn replay_reproduces_rewards() {
        assert!(replay_matches(&reach_record(usize::MAX)).unwrap());
    }
}
