//! JSON shapes served to clients.

use serde::{Deserialize, Serialize};

use guiliner_core::model::{OptionDef, OptionState, SessionState};
use guiliner_core::runner::{OutputChunk, RunRecord, RunStatus, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecSummary {
    pub name: String,
    pub title: String,
    pub executable: String,
    pub version: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRecord {
    pub name: String,
    pub doc: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceRecord {
    pub value: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeRecord {
    pub min: String,
    pub max: String,
}

/// One option as the option tree and options pane see it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionRecord {
    pub id: String,
    pub group: String,
    pub label: String,
    pub kind: String,
    pub flag: String,
    pub style: String,
    pub required: bool,
    pub repeatable: bool,
    /// `required-unset`, `optional-unset` or `set`.
    pub state: String,
    /// Canonical raw value; present only for a set, non-repeatable option.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    /// Canonical raw values in order; empty when unset.
    pub values: Vec<String>,
    /// Editor pre-fill. Never applied to the session.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<String>,
    pub choices: Vec<ChoiceRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<RangeRecord>,
    pub doc: String,
}

impl OptionRecord {
    pub fn new(def: &OptionDef, group: &str, state: &OptionState) -> Self {
        let values = state.value().map(|v| v.rendered()).unwrap_or_default();
        let value = match state {
            OptionState::Set(_) if !def.repeatable => values.first().cloned(),
            _ => None,
        };
        OptionRecord {
            id: def.id.clone(),
            group: group.to_string(),
            label: def.label.clone(),
            kind: def.kind.as_str().to_string(),
            flag: def.flag.clone(),
            style: def.style.as_str().to_string(),
            required: def.required,
            repeatable: def.repeatable,
            state: state.wire_name().to_string(),
            value,
            values,
            default: def.default.as_ref().map(|v| v.render()),
            choices: def
                .choices
                .iter()
                .map(|c| ChoiceRecord {
                    value: c.value.clone(),
                    label: c.label.clone(),
                })
                .collect(),
            range: def.range.map(|r| {
                let (min, max) = r.render();
                RangeRecord { min, max }
            }),
            doc: def.doc.clone(),
        }
    }
}

/// Full session view. A pure function of the session state, so equal states
/// always serialize identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResource {
    pub session_id: String,
    pub spec: SpecSummary,
    pub working_dir: String,
    pub groups: Vec<GroupRecord>,
    pub options: Vec<OptionRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_run: Option<String>,
}

impl SessionResource {
    pub fn from_state(session_id: &str, state: &SessionState) -> Self {
        let spec = state.spec();
        let mut options = Vec::new();
        for group in &spec.groups {
            for def in &group.options {
                let st = state.state(&def.id).expect("session has a state for every option");
                options.push(OptionRecord::new(def, &group.name, st));
            }
        }
        SessionResource {
            session_id: session_id.to_string(),
            spec: SpecSummary {
                name: spec.name.clone(),
                title: spec.display_title.clone(),
                executable: spec.executable.clone(),
                version: spec.version.clone(),
                description: spec.description.clone(),
            },
            working_dir: state.working_dir().display().to_string(),
            groups: spec
                .groups
                .iter()
                .map(|g| GroupRecord {
                    name: g.name.clone(),
                    doc: g.doc.clone(),
                })
                .collect(),
            options,
            active_run: state.active_run().map(str::to_string),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreviewResponse {
    pub text: String,
    pub missing: Vec<String>,
    /// The exact argv that would run; absent while required options are unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub argv: Option<Vec<String>>,
    pub cwd: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetValueRequest {
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStarted {
    pub run_id: String,
    pub argv: Vec<String>,
    pub preview: String,
    pub cwd: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub argv: Vec<String>,
    pub cwd: String,
    pub status: RunStatus,
    pub error_notice: bool,
    pub stdout_bytes: u64,
    pub stderr_bytes: u64,
}

impl RunSummary {
    pub fn new(record: &RunRecord) -> Self {
        let len = |s: Stream| record.transcript(s).iter().map(|c| c.bytes.len() as u64).sum();
        RunSummary {
            run_id: record.run_id.clone(),
            argv: record.command.argv.clone(),
            cwd: record.command.cwd.display().to_string(),
            status: record.status.clone(),
            error_notice: record.error_notice(),
            stdout_bytes: len(Stream::Stdout),
            stderr_bytes: len(Stream::Stderr),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KillResponse {
    pub status: RunStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocResponse {
    pub id: String,
    pub label: String,
    pub doc: String,
}

/// One event on a run's output channel. The terminal status is always last;
/// chunk `seq` numbers are gapless per stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum RunEvent {
    Chunk {
        stream: Stream,
        seq: u64,
        /// UTF-8-lossy rendering for display.
        text: String,
        /// Exact bytes, base64.
        b64: String,
    },
    Status {
        status: RunStatus,
        error_notice: bool,
    },
}

impl RunEvent {
    pub fn chunk(chunk: &OutputChunk) -> Self {
        use base64::Engine;
        RunEvent::Chunk {
            stream: chunk.stream,
            seq: chunk.seq,
            text: String::from_utf8_lossy(&chunk.bytes).into_owned(),
            b64: base64::engine::general_purpose::STANDARD.encode(&chunk.bytes),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RunEvent::Chunk { .. } => "chunk",
            RunEvent::Status { .. } => "status",
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, RunEvent::Status { status, .. } if status.is_terminal())
    }

    /// Decoded bytes of a chunk event.
    pub fn bytes(&self) -> Option<Vec<u8>> {
        use base64::Engine;
        match self {
            RunEvent::Chunk { b64, .. } => base64::engine::general_purpose::STANDARD.decode(b64).ok(),
            RunEvent::Status { .. } => None,
        }
    }
}

/// Error body for every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    /// Machine-readable code, e.g. `MissingRequired` or `ValueError`.
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing: Vec<String>,
}

/// Decodes a `text/event-stream` body into `(id, event)` pairs. Comment and
/// keep-alive frames are skipped.
pub fn parse_sse(body: &str) -> Result<Vec<(Option<u64>, RunEvent)>, String> {
    let mut out = Vec::new();
    for frame in body.split("\n\n") {
        let mut id = None;
        let mut data = String::new();
        for line in frame.lines() {
            if let Some(v) = line.strip_prefix("id:") {
                id = Some(v.trim().parse::<u64>().map_err(|e| format!("bad id `{v}`: {e}"))?);
            } else if let Some(v) = line.strip_prefix("data:") {
                if !data.is_empty() {
                    data.push('\n');
                }
                data.push_str(v.strip_prefix(' ').unwrap_or(v));
            }
        }
        if data.is_empty() {
            continue;
        }
        let event = serde_json::from_str(&data).map_err(|e| format!("bad event `{data}`: {e}"))?;
        out.push((id, event));
    }
    Ok(out)
}
