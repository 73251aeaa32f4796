use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Metrics for one FL round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub test_accuracy: f64,
    pub test_loss: f64,
    pub n_malicious_selected: usize,
    pub aggregate_norm: f64,
    /// Mean L2 norm of the benign updates submitted this round.
    pub mean_benign_norm: f64,
    /// L2 norm of the crafted update before any server-side clipping.
    pub mean_malicious_norm: f64,
}

/// Attacked run plus its paired clean run for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub n_compromised: usize,
    pub n_fake: usize,
    pub malicious_ratio: f64,
    pub attack_cost: f64,
    pub max_test_accuracy: f64,
    pub clean_max_test_accuracy: f64,
    pub attack_impact: f64,
    /// Rounds in which the Multi-Krum search found no feasible scale.
    pub constraint_unmet_rounds: usize,
    /// First round whose global model was no longer finite.
    pub diverged_at_round: Option<usize>,
    #[serde(skip)]
    pub per_round: Vec<RoundRecord>,
    #[serde(skip)]
    pub clean_per_round: Vec<RoundRecord>,
}

impl ExperimentReport {
    pub fn max_accuracy_of(records: &[RoundRecord]) -> f64 {
        records
            .iter()
            .map(|r| r.test_accuracy)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub max_test_accuracy: f64,
    pub clean_max_test_accuracy: f64,
    pub attack_impact: f64,
}

/// Median and sample standard deviation of a metric across seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub median: f64,
    pub std: f64,
}

impl Spread {
    /// Values are sorted first so the result ignores input order. A single
    /// value has std 0.
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n == 0 {
            return Self {
                median: f64::NAN,
                std: 0.0,
            };
        }
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        };
        let std = if n < 2 {
            0.0
        } else {
            let mean = v.iter().sum::<f64>() / n as f64;
            (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { median, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub n_compromised: usize,
    pub n_fake: usize,
    pub malicious_ratio: f64,
    pub attack_cost: f64,
    pub per_seed: Vec<SeedSummary>,
    pub max_test_accuracy: Spread,
    pub clean_max_test_accuracy: Spread,
    pub attack_impact: Spread,
    #[serde(skip)]
    pub runs: Vec<ExperimentReport>,
}

impl SweepReport {
    pub fn from_runs(runs: Vec<ExperimentReport>) -> Result<Self> {
        let first = runs.first().ok_or_else(|| invalid("seeds", "need at least one seed"))?;
        let per_seed: Vec<SeedSummary> = runs
            .iter()
            .map(|r| SeedSummary {
                seed: r.seed,
                max_test_accuracy: r.max_test_accuracy,
                clean_max_test_accuracy: r.clean_max_test_accuracy,
                attack_impact: r.attack_impact,
            })
            .collect();
        let pick = |f: fn(&SeedSummary) -> f64| Spread::of(&per_seed.iter().map(f).collect::<Vec<_>>());
        Ok(Self {
            n_compromised: first.n_compromised,
            n_fake: first.n_fake,
            malicious_ratio: first.malicious_ratio,
            attack_cost: first.attack_cost,
            max_test_accuracy: pick(|s| s.max_test_accuracy),
            clean_max_test_accuracy: pick(|s| s.clean_max_test_accuracy),
            attack_impact: pick(|s| s.attack_impact),
            per_seed,
            runs,
        })
    }
}

pub const ROUNDS_FILE: &str = "rounds.csv";
pub const CLEAN_ROUNDS_FILE: &str = "clean_rounds.csv";
pub const SUMMARY_FILE: &str = "summary.json";

fn write_rounds(path: &Path, records: &[RoundRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rounds(path: &Path) -> Result<Vec<RoundRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| Ok(row?)).collect()
}

/// Summary JSON text. Stable for identical reports.
pub fn summary_json<T: Serialize>(summary: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(summary)? + "\n")
}

/// Writes `rounds.csv`, `clean_rounds.csv` and `summary.json` into `dir`.
pub fn emit_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_rounds(&dir.join(ROUNDS_FILE), &report.per_round)?;
    write_rounds(&dir.join(CLEAN_ROUNDS_FILE), &report.clean_per_round)?;
    std::fs::write(dir.join(SUMMARY_FILE), summary_json(report)?)?;
    Ok(())
}

pub fn load_report(dir: &Path) -> Result<ExperimentReport> {
    let mut report: ExperimentReport = serde_json::from_reader(File::open(dir.join(SUMMARY_FILE))?)?;
    report.per_round = read_rounds(&dir.join(ROUNDS_FILE))?;
    report.clean_per_round = read_rounds(&dir.join(CLEAN_ROUNDS_FILE))?;
    Ok(report)
}

/// Writes the sweep summary plus one sub-directory per seed.
pub fn emit_sweep(sweep: &SweepReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for run in &sweep.runs {
        emit_report(run, &dir.join(format!("seed_{}", run.seed)))?;
    }
    std::fs::write(dir.join(SUMMARY_FILE), summary_json(sweep)?)?;
    Ok(())
}

pub fn load_sweep(dir: &Path) -> Result<SweepReport> {
    let mut sweep: SweepReport = serde_json::from_reader(File::open(dir.join(SUMMARY_FILE))?)?;
    sweep.runs = sweep
        .per_seed
        .iter()
        .map(|s| load_report(&dir.join(format!("seed_{}", s.seed))))
        .collect::<Result<_>>()?;
    Ok(sweep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spread_examples() {
        assert_eq!(Spread::of(&[10.0, 20.0, 30.0]).median, 20.0);
        assert_eq!(Spread::of(&[30.0, 10.0, 20.0]), Spread::of(&[10.0, 20.0, 30.0]));
        let one = Spread::of(&[0.7]);
        assert_eq!((one.median, one.std), (0.7, 0.0));
        assert_eq!(Spread::of(&[1.0, 3.0]).median, 2.0);
        assert!((Spread::of(&[1.0, 2.0, 3.0, 4.0]).std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn impact_arithmetic() {
        // paper-scale illustration: clean 76.05, attacked 33.10
        let impact: f64 = 76.05 - 33.10;
        assert!((impact - 42.95).abs() < 1e-9);
    }
}
