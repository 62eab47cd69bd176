//! Append-only JSONL dialog logs: one record per turn.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::dialog::{AgentAction, DialogContext, MetadataType, PromptId, Slot, TurnRecord, UserIntent};
use crate::error::{Error, Result};
use crate::usersim::Style;

pub const LOG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSummary {
    pub first_time: bool,
    pub style: Style,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DialogLogRecord {
    pub format_version: u32,
    pub session_id: String,
    pub turn_index: u32,
    pub user_utterance: String,
    pub user_intent: UserIntent,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<Slot>,
    pub agent_action: AgentAction,
    pub prompt_id: PromptId,
    pub metadata_type: MetadataType,
    pub reward: f64,
    pub done: bool,
    pub profile: ProfileSummary,
}

impl DialogLogRecord {
    pub fn from_turn(session_id: &str, profile: ProfileSummary, turn: &TurnRecord, done: bool) -> Self {
        Self {
            format_version: LOG_FORMAT_VERSION,
            session_id: session_id.to_string(),
            turn_index: turn.turn_index,
            user_utterance: turn.user_utterance.clone(),
            user_intent: turn.user_intent,
            slot: turn.slot.clone(),
            agent_action: turn.agent_action,
            prompt_id: turn.prompt_id,
            metadata_type: turn.metadata_type,
            reward: turn.reward,
            done,
            profile,
        }
    }

    pub fn to_turn(&self) -> TurnRecord {
        TurnRecord {
            turn_index: self.turn_index,
            user_utterance: self.user_utterance.clone(),
            user_intent: self.user_intent,
            slot: self.slot.clone(),
            agent_action: self.agent_action,
            prompt_id: self.prompt_id,
            metadata_type: self.metadata_type,
            reward: self.reward,
        }
    }
}

/// All turns of one session, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub session_id: String,
    pub first_time: bool,
    pub turns: Vec<TurnRecord>,
}

impl EpisodeLog {
    pub fn from_context(session_id: impl Into<String>, ctx: &DialogContext) -> Self {
        Self {
            session_id: session_id.into(),
            first_time: ctx.state.first_time_user,
            turns: ctx.episode_log.clone(),
        }
    }

    pub fn records(&self, style: Style) -> Vec<DialogLogRecord> {
        let profile = ProfileSummary {
            first_time: self.first_time,
            style,
        };
        let last = self.turns.len().saturating_sub(1);
        self.turns
            .iter()
            .enumerate()
            .map(|(i, t)| DialogLogRecord::from_turn(&self.session_id, profile.clone(), t, i == last))
            .collect()
    }
}

/// Groups records by session, keeping first-appearance order of sessions
/// and turn order within each.
pub fn group_episodes(records: &[DialogLogRecord]) -> Vec<EpisodeLog> {
    let mut order = Vec::new();
    let mut by_session: BTreeMap<&str, EpisodeLog> = BTreeMap::new();
    for r in records {
        let episode = by_session.entry(&r.session_id).or_insert_with(|| {
            order.push(r.session_id.as_str());
            EpisodeLog {
                session_id: r.session_id.clone(),
                first_time: r.profile.first_time,
                turns: Vec::new(),
            }
        });
        episode.turns.push(r.to_turn());
    }
    order
        .into_iter()
        .filter_map(|id| by_session.remove(id))
        .collect()
}

/// Line-atomic appender; safe to share between sessions.
#[derive(Debug)]
pub struct LogWriter {
    path: PathBuf,
    file: Mutex<File>,
}

impl LogWriter {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            path,
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes one line and flushes it before returning.
    pub fn append(&self, record: &DialogLogRecord) -> Result<()> {
        let mut line = serde_json::to_string(record).map_err(|e| Error::parse("log record", e))?;
        line.push('\n');
        let mut file = self.file.lock().unwrap_or_else(|p| p.into_inner());
        file.write_all(line.as_bytes())
            .and_then(|()| file.flush())
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn append_all(&self, records: &[DialogLogRecord]) -> Result<()> {
        records.iter().try_for_each(|r| self.append(r))
    }
}

/// Parsed log plus the number of skipped lines.
#[derive(Debug, Clone, Default)]
pub struct LogContents {
    pub records: Vec<DialogLogRecord>,
    pub skipped: usize,
}

/// Reads a JSONL log. A malformed final line (a crash mid-write) is skipped
/// with a warning; a malformed line anywhere else is an error.
pub fn read_log(path: impl AsRef<Path>) -> Result<LogContents> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(path, e))?;
    parse_log_lines(&lines)
}

pub fn parse_log_lines(lines: &[String]) -> Result<LogContents> {
    let mut out = LogContents::default();
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<DialogLogRecord>(line) {
            Ok(r) if r.format_version == LOG_FORMAT_VERSION => out.records.push(r),
            Ok(r) => {
                return Err(Error::parse(
                    "log record",
                    format!("line {}: unsupported format_version {}", i + 1, r.format_version),
                ))
            }
            Err(e) if Some(i) == last => {
                tracing::warn!(line = i + 1, error = %e, "skipping truncated final log line");
                out.skipped += 1;
            }
            Err(e) => return Err(Error::parse("log record", format!("line {}: {e}", i + 1))),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(session: &str, turn: u32) -> DialogLogRecord {
        DialogLogRecord {
            format_version: LOG_FORMAT_VERSION,
            session_id: session.into(),
            turn_index: turn,
            user_utterance: "hi".into(),
            user_intent: UserIntent::Start,
            slot: None,
            agent_action: AgentAction::OfferThreeCategories,
            prompt_id: PromptId(0),
            metadata_type: MetadataType::NoMetadata,
            reward: 0.0,
            done: false,
            profile: ProfileSummary {
                first_time: true,
                style: Style::Brief,
            },
        }
    }

    #[test]
    fn one_line_per_record_and_truncated_tail_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let writer = LogWriter::open(&path).unwrap();
        for t in 1..=6 {
            writer.append(&record("a", t)).unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 6);

        std::fs::write(&path, format!("{text}{{\"format_version\":1,\"sess")).unwrap();
        let log = read_log(&path).unwrap();
        assert_eq!(log.records.len(), 6);
        assert_eq!(log.skipped, 1);
    }

    #[test]
    fn malformed_middle_line_is_an_error() {
        let good = serde_json::to_string(&record("a", 1)).unwrap();
        let lines = vec![good.clone(), "{oops".into(), good];
        assert!(parse_log_lines(&lines).is_err());
    }

    #[test]
    fn unknown_fields_rejected() {
        let mut v = serde_json::to_value(record("a", 1)).unwrap();
        v["extra"] = 1.into();
        let lines = vec![v.to_string(), serde_json::to_string(&record("a", 2)).unwrap()];
        assert!(parse_log_lines(&lines).is_err());
    }

    #[test]
    fn grouping_keeps_session_order() {
        let records = vec![record("b", 1), record("a", 1), record("b", 2)];
        let eps = group_episodes(&records);
        assert_eq!(eps.len(), 2);
        assert_eq!(eps[0].session_id, "b");
        assert_eq!(eps[0].turns.len(), 2);
    }
}
