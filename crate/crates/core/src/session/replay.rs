//! JSON-lines replay logs.
//!
//! The first line is a header naming the spec hash, seed and effective rules;
//! every following line is one accepted input. Replaying the inputs on a fresh
//! session reproduces the event log exactly.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{InputRecord, Session, SessionError, Stroke};
use crate::catalog::{ArtifactSpec, SessionParams};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayHeader {
    pub format_version: u32,
    pub spec_hash: String,
    pub seed: u64,
    pub params: SessionParams,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("replay log is empty")]
    Empty,
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("unsupported replay format version {0}")]
    Version(u32),
    #[error("replay was recorded against spec {found}, not {expected}")]
    SpecMismatch { expected: String, found: String },
    #[error("line {line}: {source}")]
    Session { line: usize, source: SessionError },
}

impl Session {
    pub fn replay_header(&self) -> ReplayHeader {
        ReplayHeader {
            format_version: FORMAT_VERSION,
            spec_hash: self.spec_hash.clone(),
            seed: self.seed,
            params: self.params,
        }
    }

    pub fn export_replay(&self) -> String {
        let mut out = serde_json::to_string(&self.replay_header()).expect("header serializes");
        out.push('\n');
        for input in &self.inputs {
            out.push_str(&serde_json::to_string(input).expect("input serializes"));
            out.push('\n');
        }
        out
    }
}

/// Parses a replay document into its header and inputs.
pub fn parse(doc: &str) -> Result<(ReplayHeader, Vec<InputRecord>), ReplayError> {
    let mut lines = doc
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or(ReplayError::Empty)?;
    let header: ReplayHeader =
        serde_json::from_str(first).map_err(|source| ReplayError::Parse { line: 1, source })?;
    if header.format_version != FORMAT_VERSION {
        return Err(ReplayError::Version(header.format_version));
    }
    let inputs = lines
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|source| ReplayError::Parse { line: i + 1, source })
        })
        .collect::<Result<_, _>>()?;
    Ok((header, inputs))
}

/// Re-runs a recorded session against `spec` and returns the resulting session.
pub fn replay(doc: &str, spec: impl Into<Arc<ArtifactSpec>>) -> Result<Session, ReplayError> {
    let spec = spec.into();
    let (header, inputs) = parse(doc)?;
    let expected = spec.spec_hash();
    if header.spec_hash != expected {
        return Err(ReplayError::SpecMismatch {
            expected,
            found: header.spec_hash,
        });
    }
    let mut session = Session::start_with_params(spec, header.params, header.seed)
        .map_err(|source| ReplayError::Session { line: 1, source })?;
    for (i, input) in inputs.iter().enumerate() {
        let result = match input {
            InputRecord::Stroke { t, payload } => {
                session.apply_stroke(&Stroke::new(*t, *payload)).map(drop)
            }
            InputRecord::Tick { t } => session.tick(*t).map(drop),
            InputRecord::SelectTool { payload, .. } => session.select_tool(&payload.tool),
        };
        result.map_err(|source| ReplayError::Session { line: i + 2, source })?;
    }
    Ok(session)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::tests::ball_spec;
    use crate::voxel::Pose;

    fn played() -> Session {
        let mut s = Session::start(ball_spec(), 9).unwrap();
        s.apply_stroke(&Stroke::new(0.5, Pose::at([0.0, 0.0, 0.36]))).unwrap();
        s.select_tool("shovel").unwrap();
        s.apply_stroke(&Stroke::new(
            0.6,
            Pose {
                position: [0.1, 0.0, 0.32],
                rotation: [0.9238795325112867, 0.0, 0.3826834323650898, 0.0],
            },
        ))
        .unwrap();
        s.tick(0.7).unwrap();
        s.apply_stroke(&Stroke::new(0.9, Pose::at([0.0, 0.0, 0.32]))).unwrap();
        s.tick(500.0).unwrap();
        s
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let s = played();
        let doc = s.export_replay();
        let again = replay(&doc, ball_spec()).unwrap();
        assert_eq!(again.export_replay(), doc);
        assert_eq!(again.event_log_jsonl(), s.event_log_jsonl());
        assert_eq!(again.final_report().unwrap(), s.final_report().unwrap());
        let (header, inputs) = parse(&doc).unwrap();
        assert_eq!(header.seed, 9);
        assert_eq!(inputs.len(), 6);
    }

    #[test]
    fn wrong_spec_is_refused() {
        let doc = played().export_replay();
        let mut other = ball_spec();
        other.name = "other".into();
        assert!(matches!(
            replay(&doc, other),
            Err(ReplayError::SpecMismatch { .. })
        ));
    }

    #[test]
    fn malformed_lines_report_position() {
        let doc = played().export_replay();
        let mut lines: Vec<&str> = doc.lines().collect();
        lines[2] = "{\"kind\":\"dance\",\"t\":1}";
        match replay(&lines.join("\n"), ball_spec()) {
            Err(ReplayError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {:?}", other.map(|_| ())),
        }
        assert!(matches!(replay("", ball_spec()), Err(ReplayError::Empty)));
    }

    #[test]
    fn params_override_survives_replay() {
        let spec = ball_spec();
        let params = SessionParams {
            time_limit_s: 2.0,
            ..spec.session
        };
        let mut s = Session::start_with_params(spec, params, 3).unwrap();
        s.tick(3.0).unwrap();
        let again = replay(&s.export_replay(), ball_spec()).unwrap();
        assert_eq!(again.params().time_limit_s, 2.0);
        assert_eq!(again.final_report().unwrap().duration, 2.0);
    }
}
