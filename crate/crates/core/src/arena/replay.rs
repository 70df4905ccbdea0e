use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{ArenaError, Outcome};

/// One line of a JSON-lines replay log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayLine {
    pub step: u32,
    /// Hash of the state the actions were applied to.
    pub state_hash: String,
    pub actions: Vec<usize>,
    pub reward: f64,
    pub outcome: Outcome,
}

pub struct ReplayWriter<W: Write> {
    out: W,
}

impl<W: Write> ReplayWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn write(&mut self, line: &ReplayLine) -> Result<(), ArenaError> {
        serde_json::to_writer(&mut self.out, line)
            .map_err(|e| ArenaError::Io(std::io::Error::other(e)))?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

pub fn read_replay(text: &str) -> Result<Vec<ReplayLine>, ArenaError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| ArenaError::Config(format!("replay line: {e}"))))
        .collect()
}
