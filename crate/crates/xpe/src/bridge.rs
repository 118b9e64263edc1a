//! Black-box models behind a shell command.
//!
//! Protocol: the command reads headerless CSV feature rows on stdin and
//! writes one comma-separated probability row per input row on stdout.
//! Predictions are cached per run, keyed by the exact bit pattern of each
//! row, so every distinct row is sent to the command at most once.

use std::collections::HashMap;
use std::io::Write;
use std::process::{Command, Stdio};
use std::sync::Mutex;

use xpe_core::Classifier;

use crate::csv_io::{parse_matrix, render_matrix};
use crate::error::{Error, Result};

/// Largest tolerated deviation of a probability row sum from 1.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

pub struct ExternalModel {
    command: String,
    input_dim: usize,
    class_count: usize,
    cache: Mutex<HashMap<Vec<u64>, Vec<f64>>>,
}

impl std::fmt::Debug for ExternalModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalModel")
            .field("command", &self.command)
            .field("input_dim", &self.input_dim)
            .field("class_count", &self.class_count)
            .finish()
    }
}

impl ExternalModel {
    /// Connects to `command`, learning the class count from one probe row.
    pub fn connect(command: &str, probe: &[f64]) -> Result<Self> {
        if probe.is_empty() {
            return Err(Error::Bridge("probe row is empty".into()));
        }
        let out = run_command(command, probe, probe.len())?;
        if out.0.is_empty() {
            return Err(Error::Bridge(format!("model command `{command}` produced no output for a nonempty input")));
        }
        let class_count = out.2;
        let model = Self { command: command.to_owned(), input_dim: probe.len(), class_count, cache: Mutex::new(HashMap::new()) };
        model.check_rows(&out.0, out.1, 1)?;
        model.cache.lock().expect("cache poisoned").insert(key(probe), out.0);
        Ok(model)
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    /// Number of distinct rows evaluated so far.
    pub fn cached_rows(&self) -> usize {
        self.cache.lock().expect("cache poisoned").len()
    }

    fn check_rows(&self, probs: &[f64], rows: usize, expected: usize) -> Result<()> {
        if rows != expected {
            return Err(Error::Bridge(format!("model command returned {rows} rows for {expected} inputs")));
        }
        for (r, p) in probs.chunks(self.class_count).enumerate() {
            if p.len() != self.class_count {
                return Err(Error::Bridge(format!("output row {} has {} values, expected {}", r + 1, p.len(), self.class_count)));
            }
            let sum: f64 = p.iter().sum();
            if p.iter().any(|&v| !(v >= 0.0)) || (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
                return Err(Error::Bridge(format!("output row {} is not a probability vector: {p:?}", r + 1)));
            }
        }
        Ok(())
    }

    fn predict_uncached(&self, rows: &[f64]) -> Result<Vec<f64>> {
        let n = rows.len() / self.input_dim;
        let (probs, got, width) = run_command(&self.command, rows, self.input_dim)?;
        if got == 0 {
            return Err(Error::Bridge(format!("model command `{}` produced no output for {n} rows", self.command)));
        }
        if width != self.class_count {
            return Err(Error::Bridge(format!("model command returned {width} classes, expected {}", self.class_count)));
        }
        self.check_rows(&probs, got, n)?;
        Ok(probs)
    }
}

fn key(row: &[f64]) -> Vec<u64> {
    row.iter().map(|v| v.to_bits()).collect()
}

fn run_command(command: &str, rows: &[f64], dim: usize) -> Result<(Vec<f64>, usize, usize)> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|e| Error::Bridge(format!("cannot start `{command}`: {e}")))?;
    let input = render_matrix(rows, dim);
    let mut stdin = child.stdin.take().expect("stdin is piped");
    let writer = std::thread::spawn(move || stdin.write_all(input.as_bytes()));
    let output = child.wait_with_output().map_err(|e| Error::Bridge(format!("`{command}` failed: {e}")))?;
    // a command that exits without reading its input closes the pipe early
    let _ = writer.join();
    if !output.status.success() {
        return Err(Error::Bridge(format!("`{command}` exited with {}", output.status)));
    }
    let text = String::from_utf8(output.stdout).map_err(|_| Error::Bridge("model output is not UTF-8".into()))?;
    parse_matrix(&text, "model output")
}

impl Classifier for ExternalModel {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn class_count(&self) -> usize {
        self.class_count
    }

    fn predict_proba_batch(&self, rows: &[f64]) -> xpe_core::Result<Vec<f64>> {
        let d = self.input_dim;
        if rows.len() % d != 0 {
            return Err(xpe_core::Error::Shape(format!("{} values do not form rows of {d}", rows.len())));
        }
        let mut pending: Vec<f64> = Vec::new();
        let mut pending_keys: Vec<Vec<u64>> = Vec::new();
        {
            let cache = self.cache.lock().expect("cache poisoned");
            let mut seen = std::collections::HashSet::new();
            for row in rows.chunks(d) {
                let k = key(row);
                if !cache.contains_key(&k) && seen.insert(k.clone()) {
                    pending.extend_from_slice(row);
                    pending_keys.push(k);
                }
            }
        }
        if !pending.is_empty() {
            let probs = self.predict_uncached(&pending).map_err(|e| xpe_core::Error::Prediction(e.to_string()))?;
            let mut cache = self.cache.lock().expect("cache poisoned");
            for (k, p) in pending_keys.into_iter().zip(probs.chunks(self.class_count)) {
                cache.insert(k, p.to_vec());
            }
        }
        let cache = self.cache.lock().expect("cache poisoned");
        Ok(rows.chunks(d).flat_map(|row| cache[&key(row)].iter().copied()).collect())
    }
}
