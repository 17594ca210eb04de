//! Run logs: a meta line plus one line-delimited record per iteration,
//! with a CSV export for downstream scripts.
//!
//! The log is a pure function of the run configuration: wall-clock timing
//! is reported separately and never serialized here, so identical runs
//! produce byte-identical files.

use super::config::ModeFlags;
use crate::dynamics::RobotKind;
use crate::env::TaskKind;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunLogError {
    #[error("empty log file")]
    Empty,
    #[error("line {0}: {1}")]
    Parse(usize, String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// First line of a log: what produced the records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMeta {
    pub format: u32,
    pub flags: ModeFlags,
    pub seed: u64,
    pub task: TaskKind,
    pub robot: RobotKind,
}

/// One training iteration's aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iteration: u32,
    pub mean_episode_reward: f64,
    pub mean_episode_cost: f64,
    /// Steps with any barrier violated.
    pub violations: u64,
    /// Steps where the filter needed the infeasibility slack.
    pub slack_events: u64,
    /// Fraction of steps where the filter changed the action.
    pub intervention_rate: f64,
    /// Mean distance between the estimate and the measured lumped
    /// disturbance net of the residual prediction (0 when the observer is
    /// off).
    pub dob_error_estimate: f64,
    /// Mean residual training loss (0 when residual learning is off).
    pub residual_loss: f64,
    /// Cumulative simulated seconds at the end of the iteration.
    pub sim_time_s: f64,
}

/// Append-only per-run record set.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub meta: RunMeta,
    pub records: Vec<IterRecord>,
}

const CSV_HEADER: &str = "iteration,mean_episode_reward,mean_episode_cost,violations,slack_events,intervention_rate,dob_error_estimate,residual_loss,sim_time_s";

impl RunLog {
    pub fn new(meta: RunMeta) -> Self {
        Self { meta, records: Vec::new() }
    }

    pub fn push(&mut self, rec: IterRecord) {
        debug_assert_eq!(rec.iteration as usize, self.records.len() + 1);
        self.records.push(rec);
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = serde_json::to_string(&self.meta).expect("meta serializes");
        s.push('\n');
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).expect("record serializes"));
            s.push('\n');
        }
        s
    }

    pub fn from_jsonl(text: &str) -> Result<Self, RunLogError> {
        let mut lines = text.lines().enumerate();
        let (_, first) = lines.next().ok_or(RunLogError::Empty)?;
        let meta: RunMeta =
            serde_json::from_str(first).map_err(|e| RunLogError::Parse(1, e.to_string()))?;
        let mut records = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let rec: IterRecord = serde_json::from_str(line)
                .map_err(|e| RunLogError::Parse(idx + 1, e.to_string()))?;
            records.push(rec);
        }
        Ok(Self { meta, records })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.iteration,
                r.mean_episode_reward,
                r.mean_episode_cost,
                r.violations,
                r.slack_events,
                r.intervention_rate,
                r.dob_error_estimate,
                r.residual_loss,
                r.sim_time_s
            ));
        }
        s
    }

    /// Write `runlog.jsonl` and `runlog.csv` into `dir`.
    pub fn write_files(&self, dir: &Path) -> Result<(), RunLogError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("runlog.jsonl"), self.to_jsonl())?;
        std::fs::write(dir.join("runlog.csv"), self.to_csv())?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self, RunLogError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_jsonl(&text)
    }
}
