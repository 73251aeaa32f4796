//! Per-label data synthesizers used by the hybrid adversary to turn a few
//! stolen samples into training data for its fake clients.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{partition_dirichlet, LabelSets, LabeledDataset};
use crate::error::{invalid, Error, Result};
use crate::rng::{derive_seed, rng_from, Stream};

/// Fit once on per-label sample sets, then sample rows for any fitted label.
pub trait Synthesizer: Send + Sync {
    fn input_dim(&self) -> usize;
    fn num_classes(&self) -> usize;
    /// Labels that had at least one sample at fit time.
    fn fitted_labels(&self) -> Vec<usize>;
    /// `count` feature rows for `label`. Errors for labels without fit data.
    fn sample(&self, label: usize, count: usize, seed: u64) -> Result<Vec<Vec<f64>>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceMode {
    Diagonal,
    Spherical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaussianSynthConfig {
    pub covariance_mode: CovarianceMode,
    pub variance_floor: f64,
}

impl Default for GaussianSynthConfig {
    fn default() -> Self {
        Self {
            covariance_mode: CovarianceMode::Diagonal,
            variance_floor: 1e-3,
        }
    }
}

impl GaussianSynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.variance_floor > 0.0 && self.variance_floor.is_finite()) {
            return Err(invalid("synthesizer.variance_floor", "must be > 0"));
        }
        Ok(())
    }
}

/// Which synthesizer the hybrid adversary uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SynthesizerConfig {
    Gaussian(GaussianSynthConfig),
    Replay,
}

impl Default for SynthesizerConfig {
    fn default() -> Self {
        SynthesizerConfig::Gaussian(GaussianSynthConfig::default())
    }
}

impl SynthesizerConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            SynthesizerConfig::Gaussian(g) => g.validate(),
            SynthesizerConfig::Replay => Ok(()),
        }
    }

    pub fn fit(&self, sets: &LabelSets) -> Result<Box<dyn Synthesizer>> {
        Ok(match self {
            SynthesizerConfig::Gaussian(g) => Box::new(fit_synthesizer(sets, g)?),
            SynthesizerConfig::Replay => Box::new(ReplaySynthesizer::fit(sets)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
struct LabelGaussian {
    mean: Vec<f64>,
    variance: Vec<f64>,
}

/// Independent Gaussian per label with floored variances.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSynthesizer {
    input_dim: usize,
    labels: Vec<Option<LabelGaussian>>,
}

impl GaussianSynthesizer {
    pub fn mean(&self, label: usize) -> Option<&[f64]> {
        self.labels.get(label)?.as_ref().map(|g| g.mean.as_slice())
    }

    pub fn variance(&self, label: usize) -> Option<&[f64]> {
        self.labels.get(label)?.as_ref().map(|g| g.variance.as_slice())
    }
}

fn check_nonempty(sets: &LabelSets) -> Result<()> {
    if sets.total() == 0 {
        return Err(Error::NoCompromisedData);
    }
    Ok(())
}

/// Fits the Gaussian synthesizer: per-label mean and n-1 variance, floored.
pub fn fit_synthesizer(sets: &LabelSets, cfg: &GaussianSynthConfig) -> Result<GaussianSynthesizer> {
    cfg.validate()?;
    check_nonempty(sets)?;
    let d = sets.input_dim;
    let labels = sets
        .sets
        .iter()
        .map(|rows| {
            if rows.is_empty() {
                return Ok(None);
            }
            let n = rows.len() as f64;
            let mut mean = vec![0.0; d];
            for row in rows {
                if row.len() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: row.len(),
                    });
                }
                mean.iter_mut().zip(row).for_each(|(m, x)| *m += x);
            }
            mean.iter_mut().for_each(|m| *m /= n);
            let mut variance = vec![cfg.variance_floor; d];
            if rows.len() > 1 {
                let mut acc = vec![0.0; d];
                for row in rows {
                    for ((a, x), m) in acc.iter_mut().zip(row).zip(&mean) {
                        *a += (x - m) * (x - m);
                    }
                }
                match cfg.covariance_mode {
                    CovarianceMode::Diagonal => {
                        for (v, a) in variance.iter_mut().zip(&acc) {
                            *v = (a / (n - 1.0)).max(cfg.variance_floor);
                        }
                    }
                    CovarianceMode::Spherical => {
                        let pooled = acc.iter().sum::<f64>() / ((n - 1.0) * d as f64);
                        variance.iter_mut().for_each(|v| *v = pooled.max(cfg.variance_floor));
                    }
                }
            }
            Ok(Some(LabelGaussian { mean, variance }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GaussianSynthesizer { input_dim: d, labels })
}

impl Synthesizer for GaussianSynthesizer {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn num_classes(&self) -> usize {
        self.labels.len()
    }

    fn fitted_labels(&self) -> Vec<usize> {
        (0..self.labels.len()).filter(|&l| self.labels[l].is_some()).collect()
    }

    fn sample(&self, label: usize, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let g = self
            .labels
            .get(label)
            .and_then(Option::as_ref)
            .ok_or(Error::EmptyLabel(label))?;
        let mut rng = rng_from(seed);
        let stds: Vec<f64> = g.variance.iter().map(|v| v.sqrt()).collect();
        Ok((0..count)
            .map(|_| {
                g.mean
                    .iter()
                    .zip(&stds)
                    .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect())
    }
}

/// Re-emits the fitted samples unchanged, drawn with replacement.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplaySynthesizer {
    sets: LabelSets,
}

impl ReplaySynthesizer {
    pub fn fit(sets: &LabelSets) -> Result<Self> {
        check_nonempty(sets)?;
        Ok(Self { sets: sets.clone() })
    }
}

impl Synthesizer for ReplaySynthesizer {
    fn input_dim(&self) -> usize {
        self.sets.input_dim
    }

    fn num_classes(&self) -> usize {
        self.sets.num_classes()
    }

    fn fitted_labels(&self) -> Vec<usize> {
        (0..self.sets.num_classes())
            .filter(|&l| !self.sets.sets[l].is_empty())
            .collect()
    }

    fn sample(&self, label: usize, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let rows = self
            .sets
            .sets
            .get(label)
            .filter(|r| !r.is_empty())
            .ok_or(Error::EmptyLabel(label))?;
        let mut rng = rng_from(seed);
        Ok((0..count)
            .map(|_| rows[rng.random_range(0..rows.len())].clone())
            .collect())
    }
}

/// `samples_per_label * n_fake` rows for every fitted label, ordered by label.
pub fn generate_fake_pool(
    synth: &dyn Synthesizer,
    n_fake: usize,
    samples_per_label: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    if n_fake == 0 {
        return Err(invalid("n_fake", "must be >= 1"));
    }
    let mut pool = LabeledDataset::empty(synth.input_dim(), synth.num_classes());
    for label in synth.fitted_labels() {
        let rows = synth.sample(
            label,
            samples_per_label * n_fake,
            derive_seed(seed, Stream::Synthesis, label as u64, 0),
        )?;
        for row in &rows {
            pool.push(row, label);
        }
    }
    Ok(pool)
}

/// Splits the pool over the fake clients with a Dirichlet(beta) partition.
pub fn assign_fake_data(pool: &LabeledDataset, n_fake: usize, beta: f64, seed: u64) -> Result<Vec<LabeledDataset>> {
    let plan = partition_dirichlet(pool, n_fake, beta, seed)?;
    plan.assignments.values().map(|idx| Ok(pool.subset(idx))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sets(rows: Vec<Vec<Vec<f64>>>, d: usize) -> LabelSets {
        LabelSets {
            input_dim: d,
            sets: rows,
        }
    }

    #[test]
    fn variance_example() {
        let s = sets(vec![vec![vec![0.0, 0.0], vec![2.0, 0.0]]], 2);
        let g = fit_synthesizer(&s, &GaussianSynthConfig::default()).unwrap();
        assert_eq!(g.mean(0).unwrap(), &[1.0, 0.0]);
        assert_eq!(g.variance(0).unwrap(), &[2.0, 1e-3]);
    }

    #[test]
    fn single_sample_label_is_memorized_with_noise() {
        let s = sets(vec![vec![vec![4.0, -1.0]], vec![]], 2);
        let g = fit_synthesizer(&s, &GaussianSynthConfig::default()).unwrap();
        assert_eq!(g.variance(0).unwrap(), &[1e-3, 1e-3]);
        let rows = g.sample(0, 200, 1).unwrap();
        let max_dev = rows
            .iter()
            .flat_map(|r| [(r[0] - 4.0).abs(), (r[1] + 1.0).abs()])
            .fold(0.0, f64::max);
        assert!(max_dev > 0.0 && max_dev < 6.0 * 1e-3f64.sqrt());
        assert!(matches!(g.sample(1, 1, 1), Err(Error::EmptyLabel(1))));
    }

    #[test]
    fn all_empty_errors() {
        let s = LabelSets::empty(3, 4);
        let err = fit_synthesizer(&s, &GaussianSynthConfig::default()).unwrap_err();
        assert_eq!(err.to_string(), "no compromised data");
        assert!(ReplaySynthesizer::fit(&s).is_err());
    }

    #[test]
    fn spherical_pools_variance() {
        let s = sets(vec![vec![vec![0.0, 0.0], vec![2.0, 0.0]]], 2);
        let cfg = GaussianSynthConfig {
            covariance_mode: CovarianceMode::Spherical,
            variance_floor: 1e-3,
        };
        let g = fit_synthesizer(&s, &cfg).unwrap();
        assert_eq!(g.variance(0).unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn pool_sizes() {
        let full = sets((0..10).map(|l| vec![vec![l as f64, 1.0]]).collect(), 2);
        let g = fit_synthesizer(&full, &GaussianSynthConfig::default()).unwrap();
        let pool = generate_fake_pool(&g, 100, 5, 3).unwrap();
        assert_eq!(pool.len(), 5000);

        let partial = sets(
            (0..10)
                .map(|l| {
                    if [3, 6, 9].contains(&l) {
                        vec![]
                    } else {
                        vec![vec![l as f64, 1.0]]
                    }
                })
                .collect(),
            2,
        );
        let g = fit_synthesizer(&partial, &GaussianSynthConfig::default()).unwrap();
        let pool = generate_fake_pool(&g, 10, 5, 3).unwrap();
        assert_eq!(pool.len(), 350);
        assert!(pool.labels().iter().all(|l| ![3, 6, 9].contains(l)));
        assert!(generate_fake_pool(&g, 0, 5, 3).is_err());
    }

    #[test]
    fn sample_mean_is_close() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![(i % 7) as f64, (i % 3) as f64 * 2.0]).collect();
        let g = fit_synthesizer(&sets(vec![rows], 2), &GaussianSynthConfig::default()).unwrap();
        let k = 400;
        let draws = g.sample(0, k, 11).unwrap();
        for c in 0..2 {
            let m = draws.iter().map(|r| r[c]).sum::<f64>() / k as f64;
            let sigma = g.variance(0).unwrap()[c].sqrt();
            assert!((m - g.mean(0).unwrap()[c]).abs() <= 3.0 * sigma / (k as f64).sqrt());
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let s = sets(vec![vec![vec![0.0], vec![1.0]]], 1);
        let g = fit_synthesizer(&s, &GaussianSynthConfig::default()).unwrap();
        assert_eq!(g.sample(0, 5, 9).unwrap(), g.sample(0, 5, 9).unwrap());
        assert_ne!(g.sample(0, 5, 9).unwrap(), g.sample(0, 5, 10).unwrap());
    }

    #[test]
    fn replay_reemits_fitted_rows() {
        let s = sets(vec![vec![vec![1.0, 2.0], vec![3.0, 4.0]], vec![]], 2);
        let r = ReplaySynthesizer::fit(&s).unwrap();
        let rows = r.sample(0, 20, 2).unwrap();
        assert!(rows.iter().all(|row| s.sets[0].contains(row)));
        assert!(r.sample(1, 1, 0).is_err());
        assert_eq!(r.fitted_labels(), vec![0]);
    }

    #[test]
    fn assignment_conserves_pool() {
        let s = sets((0..4).map(|l| vec![vec![l as f64]]).collect(), 1);
        let g = fit_synthesizer(&s, &GaussianSynthConfig::default()).unwrap();
        let pool = generate_fake_pool(&g, 6, 5, 1).unwrap();
        let parts = assign_fake_data(&pool, 6, 0.5, 4).unwrap();
        assert_eq!(parts.len(), 6);
        assert_eq!(parts.iter().map(LabeledDataset::len).sum::<usize>(), pool.len());
        let mut seen: Vec<Vec<u64>> = parts
            .iter()
            .flat_map(|p| (0..p.len()).map(move |i| vec![p.row(i)[0].to_bits(), p.label(i) as u64]))
            .collect();
        let mut expected: Vec<Vec<u64>> = (0..pool.len())
            .map(|i| vec![pool.row(i)[0].to_bits(), pool.label(i) as u64])
            .collect();
        seen.sort();
        expected.sort();
        assert_eq!(seen, expected);
        let single = assign_fake_data(&pool, 1, 0.5, 4).unwrap();
        assert_eq!(single[0], pool);
        assert_eq!(parts, assign_fake_data(&pool, 6, 0.5, 4).unwrap());
    }
}
