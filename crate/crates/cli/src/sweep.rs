//! Seeded grids of training runs along the rollout-horizon or
//! selected-horizon axis.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{Context, Result};
use dmve::agent::{run_training, Estimator, TrainConfig};

use crate::commands::load_config;
use crate::usage;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Maximum imagination horizon.
    H,
    /// Number of selected horizons.
    K,
}

impl Axis {
    fn key(self) -> &'static str {
        match self {
            Axis::H => "horizon",
            Axis::K => "top_k",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::H => "H",
            Axis::K => "K",
        })
    }
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "H" | "h" => Ok(Axis::H),
            "K" | "k" => Ok(Axis::K),
            other => Err(format!("unknown axis `{other}` (H or K)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: TrainConfig,
    pub axis: Axis,
    pub values: Vec<usize>,
    pub seeds: Vec<u64>,
    pub estimators: Vec<Estimator>,
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| usage(format!("`{key}`: cannot parse `{s}`: {e}"))))
        .collect()
}

impl SweepSpec {
    /// Parses `key = value` lines: `base` (config path, relative to
    /// `dir`), `axis`, `values`, `seeds` and optionally `estimators`.
    pub fn parse(text: &str, dir: &Path) -> Result<Self> {
        let (mut base, mut axis, mut values, mut seeds, mut estimators) = (None, None, None, None, None);
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("sweep spec line {}: expected `key = value`", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "base" => base = Some(load_config(&dir.join(v))?),
                "axis" => axis = Some(v.parse::<Axis>().map_err(usage)?),
                "values" => values = Some(list::<usize>(k, v)?),
                "seeds" => seeds = Some(list::<u64>(k, v)?),
                "estimators" => estimators = Some(list::<Estimator>(k, v)?),
                other => return Err(usage(format!("unknown sweep key `{other}`"))),
            }
        }
        let missing = |k: &str| usage(format!("sweep spec lacks `{k}`"));
        let spec = SweepSpec {
            base: base.ok_or_else(|| missing("base"))?,
            axis: axis.ok_or_else(|| missing("axis"))?,
            values: values.ok_or_else(|| missing("values"))?,
            seeds: seeds.ok_or_else(|| missing("seeds"))?,
            estimators: estimators.unwrap_or_else(|| vec![Estimator::Dmve]),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| usage(format!("sweep spec {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() || self.seeds.is_empty() || self.estimators.is_empty() {
            return Err(usage("sweep needs at least one value, seed and estimator"));
        }
        for (i, s) in self.seeds.iter().enumerate() {
            if self.seeds[..i].contains(s) {
                return Err(usage(format!("seed {s} listed twice")));
            }
        }
        for cell in self.cells() {
            cell.config
                .validate()
                .map_err(|e| usage(format!("cell {}: {e}", cell.name())))?;
        }
        Ok(())
    }

    /// Cells in output order: estimator, then value, then seed.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &estimator in &self.estimators {
            for &value in &self.values {
                for &seed in &self.seeds {
                    let mut config = self.base.clone();
                    config.estimator = estimator;
                    config.seed = seed;
                    config
                        .set(self.axis.key(), &value.to_string())
                        .expect("axis keys are config keys");
                    out.push(Cell {
                        axis: self.axis,
                        value,
                        config,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub axis: Axis,
    pub value: usize,
    pub config: TrainConfig,
}

impl Cell {
    /// Directory name, e.g. `estimator=dmve_H=15_seed=1`.
    pub fn name(&self) -> String {
        format!("estimator={}_{}={}_seed={}", self.config.estimator, self.axis, self.value, self.config.seed)
    }
}

pub const SUMMARY_CSV_HEADER: &str = "estimator,axis,value,seed,final_eval_return,mean_selected_horizon,status";

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub estimator: Estimator,
    pub axis: Axis,
    pub value: usize,
    pub seed: u64,
    pub final_eval_return: Option<f64>,
    pub mean_selected_horizon: Option<f64>,
    /// `ok` or the failure message.
    pub status: String,
}

impl SummaryRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }

    fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        let status = self.status.replace([',', '\n', '\r'], " ");
        format!(
            "{},{},{},{},{},{},{}",
            self.estimator,
            self.axis,
            self.value,
            self.seed,
            opt(self.final_eval_return),
            opt(self.mean_selected_horizon),
            status
        )
    }
}

fn run_cell(cell: &Cell, out: &Path) -> SummaryRow {
    let dir = out.join(cell.name());
    let result = run_training::<f64>(&cell.config, Some(&dir));
    let (final_eval_return, mean_selected_horizon, status) = match result {
        Ok(s) => (s.final_eval().map(|e| e.mean), s.mean_selected_horizon(), "ok".to_string()),
        Err(e) => (None, None, format!("failed: {e}")),
    };
    SummaryRow {
        estimator: cell.config.estimator,
        axis: cell.axis,
        value: cell.value,
        seed: cell.config.seed,
        final_eval_return,
        mean_selected_horizon,
        status,
    }
}

/// Runs every cell, on up to `parallel` worker threads, writes
/// `summary.csv` and returns its rows in cell order. Failed cells are
/// recorded and do not stop the sweep.
pub fn run_sweep(spec: &SweepSpec, out: &Path, parallel: usize) -> Result<Vec<SummaryRow>> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let cells = spec.cells();
    let slots: Vec<Mutex<Option<SummaryRow>>> = cells.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = parallel.clamp(1, cells.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cell) = cells.get(i) else { break };
                let row = run_cell(cell, out);
                *slots[i].lock().expect("unpoisoned") = Some(row);
            });
        }
    });
    let rows: Vec<SummaryRow> = slots
        .into_iter()
        .map(|s| s.into_inner().expect("unpoisoned").expect("every cell ran"))
        .collect();
    write_summary(&summary_path(out), &rows)?;
    Ok(rows)
}

pub fn summary_path(out: &Path) -> PathBuf {
    out.join("summary.csv")
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut text = format!("{SUMMARY_CSV_HEADER}\n");
    for r in rows {
        text.push_str(&r.to_csv());
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
