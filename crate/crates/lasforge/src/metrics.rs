//! Run artifacts: per-epoch metric records, sampled-strategy histograms,
//! the update log, and their file formats.
//!
//! Everything written here is deterministic given the run's seed, so two
//! identically-seeded runs emit byte-identical CSVs. Wall-clock time is
//! deliberately kept out of the CSVs and lives only in the JSON summary.
//! Floats are printed with the shortest round-trip formatting and parsed
//! back exactly, so `write -> read` loses nothing.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attack::StrategySpace;
use crate::error::{Error, Result};

/// One epoch's scalar metrics. `mean_l2`/`mean_l3` are the batch means of
/// the two lookahead terms (zero when their coefficients are zero);
/// `grad_norm_sq` is the epoch mean of the squared gradient norm of the
/// adversarial loss with respect to the target weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub clean_acc: f64,
    pub robust_acc: f64,
    pub mean_l1: f64,
    pub mean_l2: f64,
    pub mean_l3: f64,
    pub grad_norm_sq: f64,
}

/// Counts of sampled strategy options for one epoch, aligned index-for-index
/// with the space's option lists (epsilon, step, iterations).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochHistogram {
    pub epoch: usize,
    pub counts: [Vec<u64>; 3],
}

impl EpochHistogram {
    pub fn zeros(epoch: usize, space: &StrategySpace) -> Self {
        let [e, s, i] = space.head_sizes();
        EpochHistogram { epoch, counts: [vec![0; e], vec![0; s], vec![0; i]] }
    }

    /// Records one sampled strategy by its per-head indices.
    pub fn record(&mut self, indices: [usize; 3]) {
        for (head, &idx) in indices.iter().enumerate() {
            self.counts[head][idx] += 1;
        }
    }

    /// Total draws recorded; identical across heads by construction.
    pub fn draws(&self) -> u64 {
        self.counts[0].iter().sum()
    }

    /// Count-weighted mean of the option values on one head.
    pub fn mean_option(&self, head: usize, options: &[u32]) -> f64 {
        let total: u64 = self.counts[head].iter().sum();
        if total == 0 {
            return f64::NAN;
        }
        let weighted: f64 = self.counts[head]
            .iter()
            .zip(options)
            .map(|(&c, &v)| c as f64 * v as f64)
            .sum();
        weighted / total as f64
    }
}

/// Which networks were stepped on one batch; the alternation schedule's
/// audit trail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateEvent {
    pub epoch: usize,
    pub batch: usize,
    pub updated_target: bool,
    pub updated_strategy: bool,
}

/// Everything a training run records besides the final parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetrics {
    pub space: StrategySpace,
    pub epochs: Vec<EpochRecord>,
    pub histograms: Vec<EpochHistogram>,
    pub updates: Vec<UpdateEvent>,
    pub wall_clock_secs: f64,
}

impl RunMetrics {
    pub fn final_epoch(&self) -> Result<&EpochRecord> {
        self.epochs.last().ok_or(Error::EmptyMetrics)
    }

    /// Count-weighted mean sampled epsilon per epoch.
    pub fn mean_epsilon_by_epoch(&self) -> Vec<(usize, f64)> {
        self.histograms
            .iter()
            .map(|h| (h.epoch, h.mean_option(0, self.space.epsilons())))
            .collect()
    }
}

pub const METRICS_HEADER: &str = "epoch,clean_acc,robust_acc,mean_l1,mean_l2,mean_l3,grad_norm_sq";
pub const HISTOGRAM_HEADER: &str = "epoch,parameter,option,count";
pub const PARAMETER_NAMES: [&str; 3] = ["epsilon", "step", "iterations"];

/// Writes one CSV row per epoch under [`METRICS_HEADER`]. `{}` formatting
/// prints the shortest representation that parses back to the same bits.
pub fn write_metrics_csv(path: &Path, records: &[EpochRecord]) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{METRICS_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.epoch, r.clean_acc, r.robust_acc, r.mean_l1, r.mean_l2, r.mean_l3, r.grad_norm_sq
        )?;
    }
    Ok(())
}

fn csv_error(path: &Path, row: usize, col: usize, msg: impl Into<String>) -> Error {
    Error::Csv { path: path.display().to_string(), row, col, msg: msg.into() }
}

fn parse_cell<T: std::str::FromStr>(path: &Path, row: usize, col: usize, cell: &str) -> Result<T> {
    cell.trim()
        .parse::<T>()
        .map_err(|_| csv_error(path, row, col, format!("cannot parse {cell:?}")))
}

/// Reads a file written by [`write_metrics_csv`]; errors carry 1-based
/// row/column positions.
pub fn read_metrics_csv(path: &Path) -> Result<Vec<EpochRecord>> {
    let file = std::fs::File::open(path)?;
    let mut lines = std::io::BufReader::new(file).lines();
    let header = lines.next().ok_or_else(|| csv_error(path, 1, 1, "empty file"))??;
    if header.trim() != METRICS_HEADER {
        return Err(csv_error(path, 1, 1, format!("unexpected header {header:?}")));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let row = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 7 {
            return Err(csv_error(path, row, 1, format!("expected 7 cells, got {}", cells.len())));
        }
        records.push(EpochRecord {
            epoch: parse_cell(path, row, 1, cells[0])?,
            clean_acc: parse_cell(path, row, 2, cells[1])?,
            robust_acc: parse_cell(path, row, 3, cells[2])?,
            mean_l1: parse_cell(path, row, 4, cells[3])?,
            mean_l2: parse_cell(path, row, 5, cells[4])?,
            mean_l3: parse_cell(path, row, 6, cells[5])?,
            grad_norm_sq: parse_cell(path, row, 7, cells[6])?,
        });
    }
    Ok(records)
}

/// One parsed histogram CSV row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistogramRow {
    pub epoch: usize,
    pub parameter: String,
    pub option: u32,
    pub count: u64,
}

/// Long-format histogram CSV: every option of every parameter appears each
/// epoch, zeros included, so the file's shape is independent of what was
/// actually sampled.
pub fn write_histograms_csv(path: &Path, space: &StrategySpace, histograms: &[EpochHistogram]) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{HISTOGRAM_HEADER}")?;
    let options: [&[u32]; 3] = [space.epsilons(), space.steps(), space.iters()];
    for h in histograms {
        for (head, name) in PARAMETER_NAMES.iter().enumerate() {
            for (j, &value) in options[head].iter().enumerate() {
                writeln!(out, "{},{},{},{}", h.epoch, name, value, h.counts[head][j])?;
            }
        }
    }
    Ok(())
}

pub fn read_histograms_csv(path: &Path) -> Result<Vec<HistogramRow>> {
    let file = std::fs::File::open(path)?;
    let mut lines = std::io::BufReader::new(file).lines();
    let header = lines.next().ok_or_else(|| csv_error(path, 1, 1, "empty file"))??;
    if header.trim() != HISTOGRAM_HEADER {
        return Err(csv_error(path, 1, 1, format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let row = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 4 {
            return Err(csv_error(path, row, 1, format!("expected 4 cells, got {}", cells.len())));
        }
        let parameter = cells[1].trim().to_string();
        if !PARAMETER_NAMES.contains(&parameter.as_str()) {
            return Err(csv_error(path, row, 2, format!("unknown parameter {parameter:?}")));
        }
        rows.push(HistogramRow {
            epoch: parse_cell(path, row, 1, cells[0])?,
            parameter,
            option: parse_cell(path, row, 3, cells[2])?,
            count: parse_cell(path, row, 4, cells[3])?,
        });
    }
    Ok(rows)
}

/// Count-weighted mean option value per epoch for one parameter, from
/// long-format rows (epochs in first-seen order).
pub fn mean_option_by_epoch(rows: &[HistogramRow], parameter: &str) -> Vec<(usize, f64)> {
    let mut epochs: Vec<usize> = Vec::new();
    let mut sums: Vec<(f64, u64)> = Vec::new();
    for r in rows.iter().filter(|r| r.parameter == parameter) {
        let at = match epochs.iter().position(|&e| e == r.epoch) {
            Some(i) => i,
            None => {
                epochs.push(r.epoch);
                sums.push((0.0, 0));
                epochs.len() - 1
            }
        };
        sums[at].0 += r.option as f64 * r.count as f64;
        sums[at].1 += r.count;
    }
    epochs
        .into_iter()
        .zip(sums)
        .map(|(e, (weighted, total))| (e, if total == 0 { f64::NAN } else { weighted / total as f64 }))
        .collect()
}
