use rand::seq::index::sample;
use rand::seq::{IndexedRandom, SliceRandom};

use crate::aggregation::{AggregatorKind, DefenseData, RoundContext};
use crate::attacks::{craft_update, AttackKind, AttackRound};
use crate::cost::{attack_cost, malicious_ratio};
use crate::data::{collect_compromised_data, generate_synthetic_task, partition_dirichlet, LabeledDataset};
use crate::error::{Error, Result};
use crate::exec;
use crate::model::{evaluate, init_model, local_train, ClientUpdate, ModelSpec, Role};
use crate::params::{apply_update, ParameterVector};
use crate::rng::{derive_seed, derived_rng, Stream};
use crate::synthesis::{assign_fake_data, generate_fake_pool};

use super::config::ExperimentConfig;
use super::report::{ExperimentReport, RoundRecord, SweepReport};

/// State of one FL run: data, population, adversary and the global model.
pub struct Simulation<'a> {
    cfg: &'a ExperimentConfig,
    seed: u64,
    spec: ModelSpec,
    client_data: Vec<LabeledDataset>,
    fake_data: Vec<LabeledDataset>,
    eval: LabeledDataset,
    stolen: Option<LabeledDataset>,
    validation: Option<LabeledDataset>,
    mpaf_base: Option<ParameterVector>,
    n_compromised: usize,
    n_fake: usize,
    attack: AttackKind,
    global: ParameterVector,
    diverged_at: Option<usize>,
    constraint_unmet: usize,
    gammas: Vec<(usize, f64)>,
}

impl<'a> Simulation<'a> {
    /// Builds the run for `seed`. With `attacked = false` the adversary is
    /// removed but data, partition, model and defense inputs are unchanged.
    pub fn new(cfg: &'a ExperimentConfig, seed: u64, attacked: bool) -> Result<Self> {
        cfg.validate()?;
        let spec = cfg.model;
        let (train, test) = generate_synthetic_task(&cfg.task, derive_seed(seed, Stream::Task, 0, 0))?;
        let plan = partition_dirichlet(
            &train,
            cfg.n_clients_total,
            cfg.dirichlet_beta,
            derive_seed(seed, Stream::Partition, 0, 0),
        )?;
        let client_data: Vec<LabeledDataset> = plan.assignments.values().map(|idx| train.subset(idx)).collect();
        let compromised_ids: Vec<usize> = (0..cfg.adversary.n_compromised).collect();

        let (stolen, validation, eval) = if cfg.aggregator.kind == AggregatorKind::AdaptiveStolen {
            let stolen = collect_compromised_data(&plan, &train, &compromised_ids)?.to_dataset();
            if stolen.is_empty() {
                return Err(Error::NoCompromisedData);
            }
            let wanted = if cfg.validation_size > 0 {
                cfg.validation_size
            } else {
                stolen.len()
            };
            let size = wanted.min(test.len() / 2).max(1);
            let mut order: Vec<usize> = (0..test.len()).collect();
            order.shuffle(&mut derived_rng(seed, Stream::Validation, 0, 0));
            let (val_idx, eval_idx) = order.split_at(size);
            let mut val_idx = val_idx.to_vec();
            let mut eval_idx = eval_idx.to_vec();
            val_idx.sort_unstable();
            eval_idx.sort_unstable();
            (Some(stolen), Some(test.subset(&val_idx)), test.subset(&eval_idx))
        } else {
            (None, None, test)
        };

        let global = init_model(&spec, derive_seed(seed, Stream::ModelInit, 0, 0))?;
        let adv = &cfg.adversary;
        let (attack, n_compromised, n_fake) = if attacked {
            (
                adv.attack.kind,
                adv.n_compromised,
                adv.resolved_fake_count(cfg.n_clients_total)?,
            )
        } else {
            (AttackKind::None, 0, 0)
        };

        let mpaf_base = if attack == AttackKind::FakeMpaf {
            Some(init_model(&spec, derive_seed(seed, Stream::MpafBase, 0, 0))?)
        } else {
            None
        };

        let fake_data = if attack == AttackKind::DynOpt && n_fake > 0 {
            let sets = collect_compromised_data(&plan, &train, &compromised_ids)?;
            let synth = cfg.synthesizer.fit(&sets)?;
            let pool = generate_fake_pool(
                synth.as_ref(),
                n_fake,
                cfg.samples_per_label,
                derive_seed(seed, Stream::Synthesis, 0, 0),
            )?;
            assign_fake_data(
                &pool,
                n_fake,
                cfg.dirichlet_beta,
                derive_seed(seed, Stream::FakeAssignment, 0, 0),
            )?
        } else {
            Vec::new()
        };

        Ok(Self {
            cfg,
            seed,
            spec,
            client_data,
            fake_data,
            eval,
            stolen,
            validation,
            mpaf_base,
            n_compromised,
            n_fake,
            attack,
            global,
            diverged_at: None,
            constraint_unmet: 0,
            gammas: Vec::new(),
        })
    }

    pub fn global(&self) -> &ParameterVector {
        &self.global
    }

    pub fn population(&self) -> usize {
        self.cfg.n_clients_total + self.n_fake
    }

    pub fn is_malicious(&self, id: usize) -> bool {
        id < self.n_compromised || id >= self.cfg.n_clients_total
    }

    pub fn diverged_at(&self) -> Option<usize> {
        self.diverged_at
    }

    /// (round, γ) for every round in which a DYN-OPT update was crafted.
    pub fn gammas(&self) -> &[(usize, f64)] {
        &self.gammas
    }

    pub fn constraint_unmet_rounds(&self) -> usize {
        self.constraint_unmet
    }

    /// Clients drawn uniformly without replacement, sorted by id.
    pub fn select_clients(&self, round: usize) -> Vec<usize> {
        let mut rng = derived_rng(self.seed, Stream::Sampling, round as u64, 0);
        let mut ids = sample(&mut rng, self.population(), self.cfg.clients_per_round).into_vec();
        ids.sort_unstable();
        ids
    }

    fn train_client(&self, data: &LabeledDataset, seed: u64) -> Result<ParameterVector> {
        if data.is_empty() {
            // a client without samples leaves the model unchanged
            return Ok(ParameterVector::zeros(self.spec.dim()));
        }
        local_train(&self.spec, &self.global, data, &self.cfg.train, seed)
    }

    /// Updates the adversary trains for its own reference set this round.
    fn reference_updates(&self, round: usize) -> Result<Vec<ParameterVector>> {
        let k = self.cfg.adversary.attack.n_references;
        let mut rng = derived_rng(self.seed, Stream::Attack, round as u64, 0);
        let train = |data: &LabeledDataset, id: usize| {
            self.train_client(
                data,
                derive_seed(self.seed, Stream::AdversaryTraining, round as u64, id as u64),
            )
        };
        let mut picked: Vec<(usize, &LabeledDataset)> = Vec::new();
        if self.n_fake > 0 {
            let candidates: Vec<usize> = (0..self.n_fake).filter(|&f| !self.fake_data[f].is_empty()).collect();
            let chosen = candidates.choose_multiple(&mut rng, k.min(candidates.len()));
            picked.extend(chosen.map(|&f| (self.cfg.n_clients_total + f, &self.fake_data[f])));
            if self.cfg.adversary.attack.use_compromised_refs {
                picked.extend((0..self.n_compromised).map(|c| (c, &self.client_data[c])));
            }
        } else {
            let ids: Vec<usize> = (0..self.n_compromised).collect();
            let chosen = ids.choose_multiple(&mut rng, k.min(ids.len()));
            picked.extend(chosen.map(|&c| (c, &self.client_data[c])));
        }
        picked.sort_by_key(|p| p.0);
        picked.retain(|p| !p.1.is_empty());
        if picked.is_empty() {
            return Err(Error::NoCompromisedData);
        }
        exec::map_collect(&picked, |&(id, data)| train(data, id))
            .into_iter()
            .collect()
    }

    fn diverged_record(&self, round: usize, n_malicious: usize) -> Result<RoundRecord> {
        let (_, accuracy) = evaluate(&self.spec, &self.global, &self.eval)?;
        Ok(RoundRecord {
            round,
            test_accuracy: accuracy,
            test_loss: f64::INFINITY,
            n_malicious_selected: n_malicious,
            aggregate_norm: 0.0,
            mean_benign_norm: 0.0,
            mean_malicious_norm: 0.0,
        })
    }

    /// One FL round: select, train, attack, aggregate, apply, evaluate.
    pub fn run_round(&mut self, round: usize) -> Result<RoundRecord> {
        let selected = self.select_clients(round);
        let (malicious, benign): (Vec<usize>, Vec<usize>) = selected.iter().partition(|&&id| self.is_malicious(id));
        let m_round = malicious.len();
        if self.diverged_at.is_some() {
            return self.diverged_record(round, m_round);
        }

        let mut updates: Vec<ClientUpdate> = exec::map_collect(&benign, |&id| {
            let seed = derive_seed(self.seed, Stream::Training, round as u64, id as u64);
            self.train_client(&self.client_data[id], seed)
                .map(|delta| ClientUpdate::new(id, Role::Benign, delta))
        })
        .into_iter()
        .collect::<Result<_>>()?;
        let mean_benign_norm = if updates.is_empty() {
            0.0
        } else {
            updates.iter().map(|u| u.delta.l2_norm()).sum::<f64>() / updates.len() as f64
        };

        let n = self.cfg.clients_per_round;
        let target = self.cfg.adversary.attack.target_agr.unwrap_or(self.cfg.aggregator.kind);
        let mut mean_malicious_norm = 0.0;
        if m_round > 0 && self.attack != AttackKind::None {
            let references = match self.attack {
                AttackKind::DynOpt => self.reference_updates(round)?,
                _ => Vec::new(),
            };
            let crafted = craft_update(
                &self.cfg.adversary.attack,
                &AttackRound {
                    global: &self.global,
                    references: &references,
                    mpaf_base: self.mpaf_base.as_ref(),
                    target,
                    tau: self.cfg.aggregator.tau,
                    n_round: n,
                    m_round,
                    seed: derive_seed(self.seed, Stream::Attack, round as u64, 1),
                },
            )?;
            if let Some(g) = crafted.gamma {
                self.gammas.push((round, g));
            }
            if !crafted.constraint_met {
                self.constraint_unmet += 1;
            }
            mean_malicious_norm = crafted.update.l2_norm();
            for &id in &malicious {
                let role = if id < self.n_compromised {
                    Role::Compromised
                } else {
                    Role::Fake
                };
                updates.push(ClientUpdate::new(id, role, crafted.update.clone()));
            }
        }

        let kind = self.cfg.aggregator.kind;
        let known_m = m_round.min(kind.max_known_m(updates.len()));
        let defense = match (&self.stolen, &self.validation) {
            (Some(stolen), Some(validation)) => Some(DefenseData {
                global: &self.global,
                stolen,
                validation,
                spec: &self.spec,
            }),
            _ => None,
        };
        let aggregate = self
            .cfg
            .aggregator
            .aggregate(&updates, &RoundContext { known_m, defense })?;
        let aggregate_norm = aggregate.l2_norm();

        match apply_update(&self.global, &aggregate) {
            Ok(next) => self.global = next,
            Err(Error::NonFinite) => {
                self.global = self.global.add_scaled(&aggregate, 1.0)?;
                self.diverged_at = Some(round);
                let mut record = self.diverged_record(round, m_round)?;
                record.mean_benign_norm = mean_benign_norm;
                record.mean_malicious_norm = mean_malicious_norm;
                return Ok(record);
            }
            Err(e) => return Err(e),
        }

        let (test_loss, test_accuracy) = evaluate(&self.spec, &self.global, &self.eval)?;
        Ok(RoundRecord {
            round,
            test_accuracy,
            test_loss,
            n_malicious_selected: m_round,
            aggregate_norm,
            mean_benign_norm,
            mean_malicious_norm,
        })
    }

    pub fn run(&mut self) -> Result<Vec<RoundRecord>> {
        (0..self.cfg.rounds).map(|t| self.run_round(t)).collect()
    }
}

/// Attacked run and its paired clean run for one seed.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut attacked = Simulation::new(cfg, seed, true)?;
    let per_round = attacked.run()?;
    let clean_per_round = if cfg.adversary.attack.kind == AttackKind::None {
        per_round.clone()
    } else {
        Simulation::new(cfg, seed, false)?.run()?
    };
    let adv = cfg.adversary.model(cfg.n_clients_total)?;
    let max_test_accuracy = ExperimentReport::max_accuracy_of(&per_round);
    let clean_max_test_accuracy = ExperimentReport::max_accuracy_of(&clean_per_round);
    Ok(ExperimentReport {
        seed,
        n_compromised: adv.n_compromised,
        n_fake: adv.n_fake,
        malicious_ratio: malicious_ratio(&adv)?,
        attack_cost: attack_cost(&adv, &cfg.cost),
        max_test_accuracy,
        clean_max_test_accuracy,
        attack_impact: clean_max_test_accuracy - max_test_accuracy,
        constraint_unmet_rounds: attacked.constraint_unmet_rounds(),
        diverged_at_round: attacked.diverged_at(),
        per_round,
        clean_per_round,
    })
}

/// One experiment per configured seed, summarized by median and sample std.
pub fn run_seed_sweep(cfg: &ExperimentConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let runs = exec::map_collect(&cfg.seeds, |&seed| run_experiment(cfg, seed))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    SweepReport::from_runs(runs)
}
