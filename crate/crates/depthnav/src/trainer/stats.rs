//! Episode metrics and the learning-curve CSV.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::sim::TerminalCause;
use crate::{Error, Result};

pub const CURVE_HEADER: &str =
    "episode,steps,return,ma_return_100,loss_mean,epsilon,terminal_cause,wall_s";

/// Window for the moving-average return column.
pub const MA_WINDOW: usize = 100;

/// Per-episode record, one CSV row each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub episode: u32,
    pub steps: u32,
    pub ret: f64,
    pub ma_return_100: f64,
    /// Mean training loss across this episode's updates; absent before
    /// warmup or in eval mode.
    pub loss_mean: Option<f64>,
    /// Exploration rate at episode end.
    pub epsilon: f64,
    pub terminal_cause: TerminalCause,
    pub wall_s: f64,
}

impl EpisodeStats {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.episode,
            self.steps,
            self.ret,
            self.ma_return_100,
            self.loss_mean.map_or(String::new(), |l| l.to_string()),
            self.epsilon,
            self.terminal_cause.as_str(),
            self.wall_s
        )
    }
}

/// Moving average over the last `MA_WINDOW` episode returns.
#[derive(Debug, Clone, Default)]
pub struct MovingAverage {
    window: Vec<f64>,
    cursor: usize,
}

impl MovingAverage {
    pub fn push(&mut self, value: f64) -> f64 {
        if self.window.len() < MA_WINDOW {
            self.window.push(value);
        } else {
            self.window[self.cursor] = value;
            self.cursor = (self.cursor + 1) % MA_WINDOW;
        }
        self.mean()
    }

    pub fn mean(&self) -> f64 {
        if self.window.is_empty() {
            0.0
        } else {
            self.window.iter().sum::<f64>() / self.window.len() as f64
        }
    }
}

/// Incremental CSV writer, flushed per row so partial curves survive
/// aborted runs.
pub struct CurveWriter {
    out: BufWriter<File>,
    rows: u64,
}

impl CurveWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{CURVE_HEADER}").map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))?;
        Ok(CurveWriter { out, rows: 0 })
    }

    /// Reopen an existing curve for appending (resume path); the header
    /// is assumed present.
    pub fn append(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(CurveWriter {
            out: BufWriter::new(file),
            rows: 0,
        })
    }

    pub fn write(&mut self, stats: &EpisodeStats) -> Result<()> {
        writeln!(self.out, "{}", stats.csv_row())
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::Io {
                path: "learning curve".into(),
                source: e,
            })?;
        self.rows += 1;
        Ok(())
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }
}

/// Write `content` to a temporary sibling and atomically rename into
/// place, so readers never observe partial artifacts.
pub fn write_atomic(path: impl AsRef<Path>, content: &[u8]) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, content).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_windows_correctly() {
        let mut ma = MovingAverage::default();
        assert_eq!(ma.push(2.0), 2.0);
        assert_eq!(ma.push(4.0), 3.0);
        for _ in 0..200 {
            ma.push(10.0);
        }
        assert_eq!(ma.mean(), 10.0);
    }

    #[test]
    fn csv_row_matches_header_arity() {
        let stats = EpisodeStats {
            episode: 3,
            steps: 77,
            ret: 1.5,
            ma_return_100: 0.75,
            loss_mean: None,
            epsilon: 0.9,
            terminal_cause: TerminalCause::Collision,
            wall_s: 0.01,
        };
        let row = stats.csv_row();
        assert_eq!(
            row.split(',').count(),
            CURVE_HEADER.split(',').count(),
            "{row}"
        );
        assert!(row.contains(",,"), "empty loss field expected: {row}");
    }

    #[test]
    fn curve_writer_appends_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        let mut w = CurveWriter::create(&path).unwrap();
        let stats = EpisodeStats {
            episode: 1,
            steps: 10,
            ret: 0.5,
            ma_return_100: 0.5,
            loss_mean: Some(0.25),
            epsilon: 1.0,
            terminal_cause: TerminalCause::StepLimit,
            wall_s: 0.2,
        };
        w.write(&stats).unwrap();
        w.write(&stats).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with(CURVE_HEADER));
    }

    #[test]
    fn atomic_write_leaves_no_tmp() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("artifact.json");
        write_atomic(&path, b"{}").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"{}");
        assert!(!path.with_extension("tmp").exists());
    }
}
