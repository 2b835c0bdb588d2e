use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::catalog::{ArmCatalog, ArmId, Part, Role};
use super::state::{ArmBound, BanditState, Reward};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const SNAPSHOT_SCHEMA_VERSION: u32 = 1;

/// One credited pull, as written to the append-only log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PullRecord {
    pub timestamp: String,
    pub part: Part,
    pub role: Role,
    pub arm_id: ArmId,
    pub reward: f64,
    pub session_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmSnapshot {
    pub arm_id: ArmId,
    pub pulls: u64,
    pub reward_sum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSnapshot {
    pub part: Part,
    pub role: Role,
    pub total_pulls: u64,
    pub arms: Vec<ArmSnapshot>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BanditSnapshot {
    pub schema_version: u32,
    pub n_records: u64,
    pub instances: Vec<InstanceSnapshot>,
}

/// Independent bandits for every (part, role) pair over shared catalogs.
#[derive(Clone, Debug, PartialEq)]
pub struct BanditBook<T> {
    part1: ArmCatalog,
    part2: ArmCatalog,
    states: BTreeMap<(Part, Role), BanditState<T>>,
    n_records: u64,
}

impl<T: Scalar> BanditBook<T> {
    pub fn new(part1: ArmCatalog, part2: ArmCatalog) -> Result<Self> {
        if part1.part != Part::One || part2.part != Part::Two {
            return Err(Error::InvalidConfig("catalogs must be for parts 1 and 2".into()));
        }
        let mut states = BTreeMap::new();
        for role in Role::ALL {
            states.insert((Part::One, role), BanditState::new(part1.len()));
            states.insert((Part::Two, role), BanditState::new(part2.len()));
        }
        Ok(BanditBook { part1, part2, states, n_records: 0 })
    }

    /// Rebuilds a book by applying logged pulls in order.
    pub fn replay<'a>(part1: ArmCatalog, part2: ArmCatalog, records: impl IntoIterator<Item = &'a PullRecord>) -> Result<Self> {
        let mut book = Self::new(part1, part2)?;
        for r in records {
            book.apply(r)?;
        }
        Ok(book)
    }

    pub fn catalog(&self, part: Part) -> &ArmCatalog {
        match part {
            Part::One => &self.part1,
            Part::Two => &self.part2,
        }
    }

    pub fn state(&self, part: Part, role: Role) -> &BanditState<T> {
        &self.states[&(part, role)]
    }

    pub fn select(&self, part: Part, role: Role) -> Result<ArmId> {
        let i = self.state(part, role).select_arm()?;
        Ok(self.catalog(part).arms[i].id)
    }

    pub fn record(&mut self, part: Part, role: Role, arm: ArmId, reward: Reward<T>) -> Result<()> {
        let i = self.catalog(part).index_of(arm)?;
        self.states.get_mut(&(part, role)).expect("all instances exist").record_reward(i, reward)?;
        self.n_records += 1;
        Ok(())
    }

    pub fn apply(&mut self, r: &PullRecord) -> Result<()> {
        let reward = Reward::new(T::lit(r.reward))?;
        self.record(r.part, r.role, r.arm_id, reward)
    }

    pub fn bounds(&self, part: Part, role: Role) -> Vec<(ArmId, ArmBound<T>)> {
        self.catalog(part)
            .arms
            .iter()
            .map(|a| a.id)
            .zip(self.state(part, role).ucb_bounds())
            .collect()
    }

    pub fn n_records(&self) -> u64 {
        self.n_records
    }

    pub fn snapshot(&self) -> BanditSnapshot {
        let instances = self
            .states
            .iter()
            .map(|(&(part, role), st)| InstanceSnapshot {
                part,
                role,
                total_pulls: st.total_pulls(),
                arms: self
                    .catalog(part)
                    .arms
                    .iter()
                    .zip(st.arms())
                    .map(|(a, s)| ArmSnapshot { arm_id: a.id, pulls: s.pulls, reward_sum: s.reward_sum.as_f64() })
                    .collect(),
            })
            .collect();
        BanditSnapshot { schema_version: SNAPSHOT_SCHEMA_VERSION, n_records: self.n_records, instances }
    }
}

pub fn write_pull<W: Write>(out: &mut W, record: &PullRecord) -> Result<()> {
    serde_json::to_writer(&mut *out, record)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Reads a JSON-lines pull log. A torn final line (no trailing newline) is
/// dropped; any other malformed line is an error.
pub fn read_pull_log<R: BufRead>(input: R) -> Result<Vec<PullRecord>> {
    read_jsonl(input)
}

/// Reads JSON lines with the same torn-tail rule as [`read_pull_log`].
pub fn read_jsonl<R: BufRead, V: serde::de::DeserializeOwned>(mut input: R) -> Result<Vec<V>> {
    let mut out = Vec::new();
    let mut line = String::new();
    let mut lineno = 0;
    loop {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            break;
        }
        lineno += 1;
        let complete = line.ends_with('\n');
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        match serde_json::from_str(text) {
            Ok(v) => out.push(v),
            Err(_) if !complete => break,
            Err(e) => return Err(Error::Parse(format!("log line {lineno}: {e}"))),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandit::build_catalogs;

    fn rec(part: Part, role: Role, arm: char, reward: f64) -> PullRecord {
        PullRecord {
            timestamp: "2026-01-01T00:00:00Z".into(),
            part,
            role,
            arm_id: ArmId::new(arm).unwrap(),
            reward,
            session_id: "s".into(),
        }
    }

    #[test]
    fn roles_are_independent() {
        let (p1, p2) = build_catalogs();
        let mut b = BanditBook::<f64>::new(p1, p2).unwrap();
        b.apply(&rec(Part::One, Role::Clinician, 'A', 0.75)).unwrap();
        assert_eq!(b.select(Part::One, Role::Clinician).unwrap().letter(), 'B');
        assert_eq!(b.select(Part::One, Role::MlExpert).unwrap().letter(), 'A');
        assert_eq!(b.select(Part::Two, Role::Clinician).unwrap().letter(), 'A');
        assert!(b.apply(&rec(Part::Two, Role::Clinician, 'H', 0.5)).is_err());
        assert!(b.apply(&rec(Part::Two, Role::Clinician, 'A', 1.5)).is_err());
        assert_eq!(b.n_records(), 1);
    }

    #[test]
    fn log_round_trip_and_torn_tail() {
        let recs = vec![rec(Part::One, Role::Clinician, 'A', 0.25), rec(Part::Two, Role::MlExpert, 'F', 0.625)];
        let mut buf = Vec::new();
        for r in &recs {
            write_pull(&mut buf, r).unwrap();
        }
        buf.extend_from_slice(b"{\"timestamp\":\"2026");
        let back = read_pull_log(buf.as_slice()).unwrap();
        assert_eq!(back, recs);
        let (p1, p2) = build_catalogs();
        let a = BanditBook::<f64>::replay(p1.clone(), p2.clone(), &recs).unwrap();
        let b = BanditBook::<f64>::replay(p1, p2, &back).unwrap();
        assert_eq!(a.snapshot(), b.snapshot());
        assert!(read_pull_log(&b"garbage\n"[..]).is_err());
    }
}
