//! Append-only persistence: session events, bandit pulls, and a rebuildable snapshot.

use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use trustloop::bandit::{read_jsonl, write_pull, ArmId, BanditSnapshot, PullRecord, Role};

use crate::error::ServiceError;
use crate::session::Expect;

pub const SESSIONS_LOG: &str = "sessions.jsonl";
pub const PULLS_LOG: &str = "pulls.jsonl";
pub const SNAPSHOT_FILE: &str = "bandit_snapshot.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Started {
        session_id: String,
        role: Role,
        part1_arm: ArmId,
        part2_arm: ArmId,
        timestamp: String,
    },
    Answered {
        session_id: String,
        step_ref: usize,
        kind: Expect,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rating: Option<i64>,
        timestamp: String,
    },
    Abandoned {
        session_id: String,
        timestamp: String,
    },
}

/// Where events go. `None` keeps everything in memory (simulations, tests).
pub struct Store {
    dir: Option<PathBuf>,
    sessions: Option<File>,
    pulls: Option<File>,
}

/// Everything read back from disk on open.
#[derive(Default)]
pub struct Recovered {
    pub events: Vec<SessionEvent>,
    pub pulls: Vec<PullRecord>,
}

fn append_handle(path: &Path) -> Result<File, ServiceError> {
    Ok(OpenOptions::new().create(true).append(true).open(path)?)
}

fn read_log<V: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<V>, ServiceError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    Ok(read_jsonl(BufReader::new(File::open(path)?))?)
}

/// Drops a torn final line so later appends start on a fresh line.
fn trim_torn_tail(path: &Path) -> Result<(), ServiceError> {
    if !path.exists() {
        return Ok(());
    }
    let bytes = fs::read(path)?;
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let f = OpenOptions::new().write(true).open(path)?;
    f.set_len(keep as u64)?;
    Ok(())
}

impl Store {
    pub fn in_memory() -> Self {
        Store { dir: None, sessions: None, pulls: None }
    }

    /// Opens (creating if needed) a data directory and reads its logs.
    pub fn open(dir: &Path) -> Result<(Self, Recovered), ServiceError> {
        fs::create_dir_all(dir)?;
        let (s, p) = (dir.join(SESSIONS_LOG), dir.join(PULLS_LOG));
        let recovered = Recovered { events: read_log(&s)?, pulls: read_log(&p)? };
        trim_torn_tail(&s)?;
        trim_torn_tail(&p)?;
        let store = Store { dir: Some(dir.to_owned()), sessions: Some(append_handle(&s)?), pulls: Some(append_handle(&p)?) };
        Ok((store, recovered))
    }

    /// Reads a data directory's logs without touching the files.
    pub fn read(dir: &Path) -> Result<Recovered, ServiceError> {
        Ok(Recovered { events: read_log(&dir.join(SESSIONS_LOG))?, pulls: read_log(&dir.join(PULLS_LOG))? })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn append_event(&mut self, event: &SessionEvent) -> Result<(), ServiceError> {
        if let Some(f) = self.sessions.as_mut() {
            let mut line = serde_json::to_vec(event).map_err(|e| ServiceError::Storage(e.to_string()))?;
            line.push(b'\n');
            f.write_all(&line)?;
        }
        Ok(())
    }

    pub fn append_pull(&mut self, pull: &PullRecord) -> Result<(), ServiceError> {
        if let Some(f) = self.pulls.as_mut() {
            let mut line = Vec::new();
            write_pull(&mut line, pull)?;
            f.write_all(&line)?;
        }
        Ok(())
    }

    /// Atomically replaces the snapshot file.
    pub fn write_snapshot(&self, snapshot: &BanditSnapshot) -> Result<(), ServiceError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let text = serde_json::to_string_pretty(snapshot).map_err(|e| ServiceError::Storage(e.to_string()))?;
        fs::write(&tmp, text + "\n")?;
        fs::rename(&tmp, dir.join(SNAPSHOT_FILE))?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), ServiceError> {
        for f in [self.sessions.as_mut(), self.pulls.as_mut()].into_iter().flatten() {
            f.sync_data()?;
        }
        Ok(())
    }
}

pub fn read_snapshot(dir: &Path) -> Result<Option<BanditSnapshot>, ServiceError> {
    let p = dir.join(SNAPSHOT_FILE);
    if !p.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(p)?;
    Ok(Some(serde_json::from_str(&text).map_err(|e| ServiceError::Storage(e.to_string()))?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torn_tail_is_dropped_and_appends_continue() {
        let dir = tempfile::tempdir().unwrap();
        let ev = SessionEvent::Abandoned { session_id: "a".into(), timestamp: "t".into() };
        {
            let (mut s, rec) = Store::open(dir.path()).unwrap();
            assert!(rec.events.is_empty());
            s.append_event(&ev).unwrap();
        }
        let path = dir.path().join(SESSIONS_LOG);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"event\":\"aband").unwrap();
        drop(f);
        let (mut s, rec) = Store::open(dir.path()).unwrap();
        assert_eq!(rec.events, vec![ev.clone()]);
        s.append_event(&ev).unwrap();
        let (_, rec) = Store::open(dir.path()).unwrap();
        assert_eq!(rec.events.len(), 2);
    }
}
