//! Append-only JSON-lines log of individual steps.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Action, AgentPose, Reward, SimError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub layout_id: u32,
    pub target: usize,
    pub episode: u64,
    pub step: usize,
    /// Pose after the action.
    pub pose: AgentPose,
    pub action: Action,
    pub reward: Reward,
    pub terminated: bool,
    pub success: bool,
}

pub struct TrajectoryLog {
    path: PathBuf,
    out: BufWriter<File>,
}

impl TrajectoryLog {
    pub fn open(path: &Path) -> Result<Self, SimError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        Ok(TrajectoryLog { path: path.to_path_buf(), out: BufWriter::new(file) })
    }

    pub fn append(&mut self, record: &StepRecord) -> Result<(), SimError> {
        let line = serde_json::to_string(record).map_err(|e| SimError::Io(e.to_string()))?;
        writeln!(self.out, "{line}").map_err(|e| SimError::Io(format!("{}: {e}", self.path.display())))
    }

    pub fn flush(&mut self) -> Result<(), SimError> {
        self.out.flush().map_err(|e| SimError::Io(format!("{}: {e}", self.path.display())))
    }

    pub fn read(path: &Path) -> Result<Vec<StepRecord>, SimError> {
        let file = File::open(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        let mut out = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| SimError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(&line).map_err(|e| SimError::Parse { line: i + 1, msg: e.to_string() })?;
            out.push(rec);
        }
        Ok(out)
    }
}

impl Drop for TrajectoryLog {
    fn drop(&mut self) {
        let _ = self.out.flush();
    }
}
