use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aggregation::{AggregatorConfig, AggregatorKind};
use crate::attacks::{AttackConfig, AttackKind};
use crate::cost::{solve_fake_count, AdversaryModel, CostParams};
use crate::data::SyntheticTaskConfig;
use crate::error::{invalid, Error, Result};
use crate::model::{ModelSpec, TrainConfig};
use crate::synthesis::SynthesizerConfig;

fn default_clients_per_round() -> usize {
    25
}

fn default_beta() -> f64 {
    0.5
}

fn default_samples_per_label() -> usize {
    5
}

/// Who the adversary controls and how it attacks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversaryConfig {
    /// Real clients under adversary control (ids `0..n_compromised`).
    #[serde(default)]
    pub n_compromised: usize,
    /// Injected fake clients.
    #[serde(default)]
    pub n_fake: usize,
    /// Solve `n_fake` for this malicious ratio instead of giving it directly.
    #[serde(default)]
    pub malicious_ratio: Option<f64>,
    #[serde(default)]
    pub attack: AttackConfig,
}

impl Default for AdversaryConfig {
    fn default() -> Self {
        Self {
            n_compromised: 0,
            n_fake: 0,
            malicious_ratio: None,
            attack: AttackConfig::none(),
        }
    }
}

impl AdversaryConfig {
    pub fn none() -> Self {
        Self::default()
    }

    /// Fake-client count after resolving `malicious_ratio`.
    pub fn resolved_fake_count(&self, n_clients_total: usize) -> Result<usize> {
        match self.malicious_ratio {
            Some(r) => solve_fake_count(n_clients_total, self.n_compromised, r),
            None => Ok(self.n_fake),
        }
    }

    pub fn model(&self, n_clients_total: usize) -> Result<AdversaryModel> {
        Ok(AdversaryModel {
            n_benign: n_clients_total - self.n_compromised.min(n_clients_total),
            n_compromised: self.n_compromised,
            n_fake: self.resolved_fake_count(n_clients_total)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: SyntheticTaskConfig,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub rounds: usize,
    #[serde(default = "default_clients_per_round")]
    pub clients_per_round: usize,
    /// Real clients (benign plus compromised).
    pub n_clients_total: usize,
    #[serde(default)]
    pub adversary: AdversaryConfig,
    pub aggregator: AggregatorConfig,
    #[serde(default = "default_beta")]
    pub dirichlet_beta: f64,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub synthesizer: SynthesizerConfig,
    /// Synthetic samples per label per fake client.
    #[serde(default = "default_samples_per_label")]
    pub samples_per_label: usize,
    #[serde(default)]
    pub cost: CostParams,
    /// Size of the server's validation split for the stolen-data defense;
    /// 0 means "as many samples as were stolen".
    #[serde(default)]
    pub validation_size: usize,
}

impl ExperimentConfig {
    /// Desk-scale defaults: 10 classes, 20 features, 200 clients, 25 per
    /// round, 150 rounds, 5 seeds, clean FedAvg.
    pub fn desk_default() -> Self {
        Self {
            task: SyntheticTaskConfig {
                num_classes: 10,
                input_dim: 20,
                samples_per_class_train: 1000,
                samples_per_class_test: 1000,
                class_center_scale: 1.0,
                noise_sigma: 2.0,
                modes_per_class: 1,
                mode_spread: 0.0,
            },
            model: ModelSpec::logistic(20, 10),
            train: TrainConfig {
                local_epochs: 1,
                learning_rate: 0.05,
                momentum: 0.9,
                weight_decay: 1e-4,
                batch_size: 32,
            },
            rounds: 150,
            clients_per_round: 25,
            n_clients_total: 200,
            adversary: AdversaryConfig::none(),
            aggregator: AggregatorConfig::new(AggregatorKind::Fedavg),
            dirichlet_beta: 0.5,
            seeds: vec![0, 1, 2, 3, 4],
            synthesizer: SynthesizerConfig::default(),
            samples_per_label: 5,
            cost: CostParams::default(),
            validation_size: 0,
        }
    }

    pub fn population(&self) -> Result<usize> {
        Ok(self.n_clients_total + self.adversary.resolved_fake_count(self.n_clients_total)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.aggregator.validate()?;
        self.adversary.attack.validate()?;
        self.synthesizer.validate()?;
        self.cost.validate()?;
        if self.model.input_dim != self.task.input_dim || self.model.num_classes != self.task.num_classes {
            return Err(invalid("model", "input_dim and num_classes must match the task"));
        }
        if self.rounds == 0 {
            return Err(invalid("rounds", "must be >= 1"));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "need at least one seed"));
        }
        if self.n_clients_total == 0 {
            return Err(invalid("n_clients_total", "must be >= 1"));
        }
        if !(self.dirichlet_beta > 0.0 && self.dirichlet_beta.is_finite()) {
            return Err(invalid("dirichlet_beta", "must be > 0"));
        }
        if self.samples_per_label == 0 {
            return Err(invalid("samples_per_label", "must be >= 1"));
        }
        let adv = &self.adversary;
        if adv.n_compromised > self.n_clients_total {
            return Err(invalid("adversary.n_compromised", "exceeds n_clients_total"));
        }
        if adv.malicious_ratio.is_some() && adv.n_fake > 0 {
            return Err(invalid("adversary", "give either n_fake or malicious_ratio, not both"));
        }
        let n_fake = adv.resolved_fake_count(self.n_clients_total)?;
        match adv.attack.kind {
            AttackKind::None if adv.n_compromised + n_fake > 0 => {
                return Err(invalid("adversary.attack.kind", "malicious clients need an attack"));
            }
            AttackKind::FakeMpaf | AttackKind::DynOpt if adv.n_compromised + n_fake == 0 => {
                return Err(invalid("adversary", "an attack needs at least one malicious client"));
            }
            AttackKind::DynOpt if adv.n_compromised == 0 => {
                return Err(invalid(
                    "adversary.n_compromised",
                    "DYN-OPT needs compromised clients for references or synthetic data",
                ));
            }
            _ => {}
        }
        let population = self.n_clients_total + n_fake;
        if self.clients_per_round == 0 || self.clients_per_round > population {
            return Err(invalid("clients_per_round", "must lie in 1..=population"));
        }
        let target = adv.attack.target_agr.unwrap_or(self.aggregator.kind);
        if adv.attack.kind == AttackKind::DynOpt && target.uses_tau() && self.aggregator.tau.is_none() {
            return Err(invalid("aggregator.tau", "the norm-bounding attack needs tau"));
        }
        if self.aggregator.kind == AggregatorKind::AdaptiveStolen && adv.n_compromised == 0 {
            return Err(Error::NoCompromisedData);
        }
        Ok(())
    }

    /// Same task, partition and model, with the adversary removed.
    pub fn clean(&self) -> Self {
        Self {
            adversary: AdversaryConfig::none(),
            ..self.clone()
        }
    }
}

fn missing_field(path: &str, message: &str) -> Option<String> {
    let rest = message.strip_prefix("missing field `")?;
    let field = &rest[..rest.find('`')?];
    Some(if path == "." || path.is_empty() {
        field.to_string()
    } else {
        format!("{path}.{field}")
    })
}

/// Parses a JSON experiment config and validates it. Errors name the field.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let message = e.inner().to_string();
        match missing_field(&path, &message) {
            Some(field) => Error::MissingField(field),
            None => Error::Config { path, message },
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}
