use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Result, TribeError};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Diagnostic {
    DroppedWords { count: usize, num_steps: usize },
    PaddedWindow {
        session_id: String,
        start_tr: usize,
        padded_steps: usize,
    },
}

/// Collected alignment events, written as JSON lines.
#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    pub events: Vec<Diagnostic>,
}

impl Diagnostics {
    pub fn push(&mut self, event: Diagnostic) {
        self.events.push(event);
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("diagnostic serializes"));
            out.push('\n');
        }
        out
    }

    pub fn append_to(&self, path: &Path) -> Result<()> {
        let mut file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| TribeError::io(path, e))?;
        file.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| TribeError::io(path, e))
    }
}
