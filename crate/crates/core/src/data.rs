//! Synthetic classification tasks, Dirichlet non-iid partitioning and
//! compromised-data collection.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::rng_from;

/// Row-major feature matrix with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    input_dim: usize,
    num_classes: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(input_dim: usize, num_classes: usize, features: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if input_dim == 0 {
            return Err(invalid("input_dim", "must be >= 1"));
        }
        if features.len() != labels.len() * input_dim {
            return Err(invalid(
                "features",
                format!(
                    "{} values do not form {} rows of width {}",
                    features.len(),
                    labels.len(),
                    input_dim
                ),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(invalid("labels", format!("label {bad} >= num_classes {num_classes}")));
        }
        Ok(Self {
            input_dim,
            num_classes,
            features,
            labels,
        })
    }

    pub fn empty(input_dim: usize, num_classes: usize) -> Self {
        Self {
            input_dim,
            num_classes,
            features: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn push(&mut self, row: &[f64], label: usize) {
        debug_assert_eq!(row.len(), self.input_dim);
        debug_assert!(label < self.num_classes);
        self.features.extend_from_slice(row);
        self.labels.push(label);
    }

    /// Dataset made of the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut out = Self::empty(self.input_dim, self.num_classes);
        out.features.reserve(indices.len() * self.input_dim);
        for &i in indices {
            out.push(self.row(i), self.labels[i]);
        }
        out
    }

    pub fn concat(parts: &[&LabeledDataset]) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptyDataset)?;
        let mut out = Self::empty(first.input_dim, first.num_classes);
        for p in parts {
            if p.input_dim != first.input_dim || p.num_classes != first.num_classes {
                return Err(invalid("dataset", "shape mismatch in concat"));
            }
            out.features.extend_from_slice(&p.features);
            out.labels.extend_from_slice(&p.labels);
        }
        Ok(out)
    }

    /// Writes the dataset as CSV: `x0,..,x{d-1},label`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.input_dim).map(|j| format!("x{j}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.labels[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, num_classes: usize) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.iter().next_back() != Some("label") || headers.len() < 2 {
            return Err(invalid("csv header", "expected feature columns then `label`"));
        }
        let input_dim = headers.len() - 1;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            for j in 0..input_dim {
                let v: f64 = rec[j]
                    .parse()
                    .map_err(|_| invalid("csv", format!("bad feature on row {line}")))?;
                features.push(v);
            }
            let l: usize = rec[input_dim]
                .parse()
                .map_err(|_| invalid("csv", format!("bad label on row {line}")))?;
            labels.push(l);
        }
        Self::new(input_dim, num_classes, features, labels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticTaskConfig {
    pub num_classes: usize,
    pub input_dim: usize,
    pub samples_per_class_train: usize,
    pub samples_per_class_test: usize,
    pub class_center_scale: f64,
    pub noise_sigma: f64,
    /// Sub-clusters per class; samples pick one uniformly.
    #[serde(default = "one")]
    pub modes_per_class: usize,
    /// Standard deviation of sub-cluster offsets around the class center.
    #[serde(default)]
    pub mode_spread: f64,
}

fn one() -> usize {
    1
}

impl SyntheticTaskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(invalid("task.num_classes", "must be >= 2"));
        }
        if self.input_dim == 0 {
            return Err(invalid("task.input_dim", "must be >= 1"));
        }
        if self.samples_per_class_train == 0 {
            return Err(invalid("task.samples_per_class_train", "must be >= 1"));
        }
        if self.samples_per_class_test == 0 {
            return Err(invalid("task.samples_per_class_test", "must be >= 1"));
        }
        if !(self.noise_sigma > 0.0) {
            return Err(invalid("task.noise_sigma", "must be > 0"));
        }
        if !(self.class_center_scale >= 0.0) {
            return Err(invalid("task.class_center_scale", "must be >= 0"));
        }
        if self.modes_per_class == 0 {
            return Err(invalid("task.modes_per_class", "must be >= 1"));
        }
        if !(self.mode_spread >= 0.0) {
            return Err(invalid("task.mode_spread", "must be >= 0"));
        }
        Ok(())
    }
}

/// Gaussian blobs per class, optionally split into several sub-clusters.
/// Centers are drawn once per seed; train and test samples are independent
/// draws around them.
pub fn generate_synthetic_task(cfg: &SyntheticTaskConfig, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    cfg.validate()?;
    let mut rng = rng_from(seed);
    let gaussian_vec = |rng: &mut rand_chacha::ChaCha8Rng, scale: f64| -> Vec<f64> {
        (0..cfg.input_dim)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };
    let centers: Vec<Vec<f64>> = (0..cfg.num_classes)
        .map(|_| gaussian_vec(&mut rng, cfg.class_center_scale))
        .collect();
    let modes: Vec<Vec<Vec<f64>>> = if cfg.modes_per_class > 1 {
        centers
            .iter()
            .map(|c| {
                (0..cfg.modes_per_class)
                    .map(|_| {
                        let offset = gaussian_vec(&mut rng, cfg.mode_spread);
                        c.iter().zip(offset).map(|(a, b)| a + b).collect()
                    })
                    .collect()
            })
            .collect()
    } else {
        centers.iter().map(|c| vec![c.clone()]).collect()
    };
    let mut draw = |per_class: usize| {
        let mut ds = LabeledDataset::empty(cfg.input_dim, cfg.num_classes);
        let mut row = vec![0.0; cfg.input_dim];
        for _ in 0..per_class {
            for (k, class_modes) in modes.iter().enumerate() {
                let center = if class_modes.len() > 1 {
                    &class_modes[rng.random_range(0..class_modes.len())]
                } else {
                    &class_modes[0]
                };
                for (x, c) in row.iter_mut().zip(center) {
                    *x = c + cfg.noise_sigma * rng.sample::<f64, _>(StandardNormal);
                }
                ds.push(&row, k);
            }
        }
        ds
    };
    let train = draw(cfg.samples_per_class_train);
    let test = draw(cfg.samples_per_class_test);
    Ok((train, test))
}

/// Client id to sample indices. Lists are disjoint and cover the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub assignments: BTreeMap<usize, Vec<usize>>,
}

impl PartitionPlan {
    pub fn n_clients(&self) -> usize {
        self.assignments.len()
    }

    pub fn indices(&self, client: usize) -> Result<&[usize]> {
        self.assignments
            .get(&client)
            .map(Vec::as_slice)
            .ok_or(Error::UnknownClient(client))
    }

    pub fn total_assigned(&self) -> usize {
        self.assignments.values().map(Vec::len).sum()
    }
}

fn dirichlet_sample<R: Rng>(rng: &mut R, n: usize, beta: f64) -> Vec<f64> {
    let gamma = Gamma::new(beta, 1.0).expect("beta > 0");
    let mut draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = draws.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        draws.iter_mut().for_each(|d| *d /= sum);
    } else {
        // every gamma draw underflowed; fall back to a uniform split
        draws.iter_mut().for_each(|d| *d = 1.0 / n as f64);
    }
    draws
}

/// Splits `total` into integer counts proportional to `proportions` using
/// largest-remainder rounding. Ties go to the lower index.
pub(crate) fn largest_remainder(total: usize, proportions: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = proportions.iter().map(|p| p * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut left = total.saturating_sub(assigned);
    let mut order: Vec<usize> = (0..proportions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Per-class Dirichlet(beta) allocation of samples over `n_clients` clients.
pub fn partition_dirichlet(data: &LabeledDataset, n_clients: usize, beta: f64, seed: u64) -> Result<PartitionPlan> {
    if n_clients == 0 {
        return Err(invalid("n_clients", "must be >= 1"));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(invalid("dirichlet_beta", "must be > 0"));
    }
    let mut rng = rng_from(seed);
    let mut assignments: BTreeMap<usize, Vec<usize>> = (0..n_clients).map(|c| (c, Vec::new())).collect();
    for class in 0..data.num_classes() {
        let mut members: Vec<usize> = (0..data.len()).filter(|&i| data.label(i) == class).collect();
        members.shuffle(&mut rng);
        let props = dirichlet_sample(&mut rng, n_clients, beta);
        let counts = largest_remainder(members.len(), &props);
        let mut cursor = 0;
        for (client, count) in counts.into_iter().enumerate() {
            let list = assignments.get_mut(&client).expect("client present");
            list.extend_from_slice(&members[cursor..cursor + count]);
            cursor += count;
        }
    }
    for list in assignments.values_mut() {
        list.sort_unstable();
    }
    Ok(PartitionPlan { assignments })
}

/// Feature rows grouped by label. Labels without samples hold empty lists.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSets {
    pub input_dim: usize,
    pub sets: Vec<Vec<Vec<f64>>>,
}

impl LabelSets {
    pub fn empty(input_dim: usize, num_classes: usize) -> Self {
        Self {
            input_dim,
            sets: vec![Vec::new(); num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.sets.len()
    }

    pub fn total(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }

    /// Flattens the sets back into a dataset, ordered by label.
    pub fn to_dataset(&self) -> LabeledDataset {
        let mut ds = LabeledDataset::empty(self.input_dim, self.num_classes());
        for (label, rows) in self.sets.iter().enumerate() {
            for row in rows {
                ds.push(row, label);
            }
        }
        ds
    }
}

/// Union of the compromised clients' samples, grouped by label.
pub fn collect_compromised_data(
    plan: &PartitionPlan,
    data: &LabeledDataset,
    compromised_ids: &[usize],
) -> Result<LabelSets> {
    let mut out = LabelSets::empty(data.input_dim(), data.num_classes());
    for &id in compromised_ids {
        for &i in plan.indices(id)? {
            out.sets[data.label(i)].push(data.row(i).to_vec());
        }
    }
    Ok(out)
}

/// Number of samples per label, zeros included.
pub fn label_histogram(sets: &LabelSets) -> Vec<usize> {
    sets.sets.iter().map(Vec::len).collect()
}
