//! Malicious update crafting: MPAF for oblivious fake clients and DYN-OPT
//! (benign reference plus a scaled perturbation) tailored to each rule.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::aggregation::{median, multikrum_select, scale_to_norm, trimmed_mean, AggregatorKind};
use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::params::{check_dim, mean_of, ParameterVector};
use crate::rng::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    None,
    FakeMpaf,
    DynOpt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Perturbation {
    InverseUnit,
    InverseSign,
    InverseStd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GammaSearchConfig {
    pub gamma_init: f64,
    pub rel_precision: f64,
    pub grid_points: usize,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
}

impl Default for GammaSearchConfig {
    fn default() -> Self {
        Self {
            gamma_init: 1.0,
            rel_precision: 0.01,
            grid_points: 50,
            gamma_lo: 1e-2,
            gamma_hi: 1e2,
        }
    }
}

impl GammaSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_lo > 0.0 && self.gamma_lo < self.gamma_hi && self.gamma_hi.is_finite()) {
            return Err(invalid("attack.gamma_search", "need 0 < gamma_lo < gamma_hi"));
        }
        if !(self.rel_precision > 0.0 && self.rel_precision < 0.5) {
            return Err(invalid("attack.gamma_search.rel_precision", "must lie in (0, 0.5)"));
        }
        if self.grid_points < 10 {
            return Err(invalid("attack.gamma_search.grid_points", "must be >= 10"));
        }
        if !(self.gamma_init > 0.0 && self.gamma_init.is_finite()) {
            return Err(invalid("attack.gamma_search.gamma_init", "must be > 0"));
        }
        Ok(())
    }

    /// `grid_points` log-spaced values covering `[gamma_lo, gamma_hi]`.
    pub fn grid(&self) -> Vec<f64> {
        let (lo, hi) = (self.gamma_lo.ln(), self.gamma_hi.ln());
        let last = (self.grid_points - 1) as f64;
        (0..self.grid_points)
            .map(|i| match i {
                0 => self.gamma_lo,
                i if i == self.grid_points - 1 => self.gamma_hi,
                i => (lo + (hi - lo) * i as f64 / last).exp(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// Rule the adversary optimizes against; defaults to the server's rule.
    pub target_agr: Option<AggregatorKind>,
    /// MPAF scale.
    pub lambda: f64,
    /// Direction; defaults per target rule.
    pub perturbation: Option<Perturbation>,
    pub gamma_search: GammaSearchConfig,
    /// γ for the FedAvg and Norm-Bounding variants; defaults per target rule.
    pub fixed_gamma: Option<f64>,
    /// Hybrid adversaries also feed their compromised clients' real updates
    /// into the reference set.
    pub use_compromised_refs: bool,
    /// Number of reference updates the adversary drafts per round.
    pub n_references: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            kind: AttackKind::None,
            target_agr: None,
            lambda: 1e6,
            perturbation: None,
            gamma_search: GammaSearchConfig::default(),
            fixed_gamma: None,
            use_compromised_refs: false,
            n_references: 25,
        }
    }
}

impl AttackConfig {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn mpaf(lambda: f64) -> Self {
        Self {
            kind: AttackKind::FakeMpaf,
            lambda,
            ..Self::default()
        }
    }

    pub fn dyn_opt() -> Self {
        Self {
            kind: AttackKind::DynOpt,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(invalid("attack.lambda", "must be > 0"));
        }
        if let Some(g) = self.fixed_gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(invalid("attack.fixed_gamma", "must be > 0"));
            }
        }
        if self.kind == AttackKind::DynOpt && self.n_references == 0 {
            return Err(invalid("attack.n_references", "must be >= 1"));
        }
        self.gamma_search.validate()
    }

    pub fn perturbation_for(&self, target: AggregatorKind) -> Perturbation {
        self.perturbation.unwrap_or(match target {
            AggregatorKind::Fedavg => Perturbation::InverseUnit,
            _ => Perturbation::InverseStd,
        })
    }

    pub fn gamma_for(&self, target: AggregatorKind) -> f64 {
        self.fixed_gamma.unwrap_or(match target {
            AggregatorKind::Fedavg => 1e6,
            _ => 10.0,
        })
    }
}

/// Base model and scale of an MPAF adversary.
#[derive(Debug, Clone, PartialEq)]
pub struct MpafConfig {
    pub base_model: ParameterVector,
    pub lambda: f64,
}

/// `lambda * (base - global)`. Needs nothing beyond the current global model.
pub fn craft_mpaf(global: &ParameterVector, cfg: &MpafConfig) -> Result<ParameterVector> {
    check_dim(cfg.base_model.dim(), global.dim())?;
    Ok(cfg.base_model.sub(global)?.scaled(cfg.lambda))
}

/// Mean of the adversary's reference updates.
pub fn benign_reference<V: AsRef<ParameterVector>>(references: &[V]) -> Result<ParameterVector> {
    mean_of(references)
}

fn sample_std(references: &[impl AsRef<ParameterVector>]) -> Result<Vec<f64>> {
    let n = references.len();
    if n < 2 {
        return Err(Error::TooFewReferences(n));
    }
    let mean = mean_of(references)?;
    let mut var = vec![0.0; mean.dim()];
    for r in references {
        for ((v, x), m) in var.iter_mut().zip(r.as_ref().as_slice()).zip(mean.as_slice()) {
            *v += (x - m) * (x - m);
        }
    }
    Ok(var.into_iter().map(|v| (v / (n - 1) as f64).sqrt()).collect())
}

/// Data-dependent malicious direction.
pub fn perturbation_direction<V: AsRef<ParameterVector>>(
    kind: Perturbation,
    references: &[V],
) -> Result<ParameterVector> {
    let reference = benign_reference(references)?;
    let dir = match kind {
        Perturbation::InverseUnit => {
            let norm = reference.l2_norm();
            if norm > 0.0 {
                reference.scaled(-1.0 / norm)
            } else {
                ParameterVector::zeros(reference.dim())
            }
        }
        Perturbation::InverseSign => ParameterVector::new(
            reference
                .as_slice()
                .iter()
                .map(|&x| {
                    if x > 0.0 {
                        -1.0
                    } else if x < 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect(),
        ),
        Perturbation::InverseStd => ParameterVector::new(sample_std(references)?.into_iter().map(|s| -s).collect()),
    };
    Ok(dir)
}

/// Seeded direction drawn uniformly from the unit sphere.
pub fn random_unit_direction(dim: usize, seed: u64) -> ParameterVector {
    let mut rng = rng_from(seed);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 || dim == 0 {
            return ParameterVector::new(v.into_iter().map(|x| x / norm.max(f64::MIN_POSITIVE)).collect());
        }
    }
}

/// FedAvg variant: the reference pushed a distance `gamma` along a random direction.
pub fn dyn_opt_fedavg<V: AsRef<ParameterVector>>(references: &[V], gamma: f64, seed: u64) -> Result<ParameterVector> {
    let reference = benign_reference(references)?;
    let omega = random_unit_direction(reference.dim(), seed);
    reference.add_scaled(&omega, gamma)
}

/// Norm-Bounding variant: `Scale(reference + gamma * omega, tau)`.
pub fn dyn_opt_norm_bounding<V: AsRef<ParameterVector>>(
    references: &[V],
    perturbation: Perturbation,
    tau: f64,
    gamma: f64,
) -> Result<ParameterVector> {
    if !(tau > 0.0) {
        return Err(invalid("tau", "must be > 0"));
    }
    let reference = benign_reference(references)?;
    let omega = perturbation_direction(perturbation, references)?;
    Ok(scale_to_norm(&reference.add_scaled(&omega, gamma)?, tau))
}

/// Result of a γ search.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaOutcome {
    /// `reference + gamma * omega`.
    pub update: ParameterVector,
    pub gamma: f64,
    /// False when no feasible γ at or above `gamma_lo` was found.
    pub constraint_met: bool,
    /// Smallest γ that was probed and found infeasible (Multi-Krum search).
    pub first_infeasible: Option<f64>,
    /// Objective value at `gamma` (Trimmed-Mean/Median search).
    pub objective: Option<f64>,
    /// Every (γ, feasible-or-objective) probe, in order.
    pub probes: Vec<(f64, f64)>,
}

/// The round the adversary simulates: `n - m` stand-ins (cycled from the
/// references) followed by `m` copies of the malicious update.
pub fn simulated_round<V: AsRef<ParameterVector>>(
    standins: &[V],
    malicious: &ParameterVector,
    n_round: usize,
    m_round: usize,
) -> Result<Vec<ParameterVector>> {
    if standins.is_empty() {
        return Err(Error::EmptyUpdates);
    }
    if m_round > n_round {
        return Err(invalid("m_round", "exceeds n_round"));
    }
    let mut round: Vec<ParameterVector> = (0..n_round - m_round)
        .map(|i| standins[i % standins.len()].as_ref().clone())
        .collect();
    round.extend(std::iter::repeat_n(malicious.clone(), m_round));
    Ok(round)
}

/// Whether Multi-Krum selects every malicious copy of `reference + gamma * omega`.
pub fn multikrum_feasible<V: AsRef<ParameterVector>>(
    reference: &ParameterVector,
    omega: &ParameterVector,
    standins: &[V],
    n_round: usize,
    m_round: usize,
    gamma: f64,
) -> Result<bool> {
    let malicious = reference.add_scaled(omega, gamma)?;
    let round = simulated_round(standins, &malicious, n_round, m_round)?;
    let chosen = multikrum_select(&round, m_round.min(AggregatorKind::MultiKrum.max_known_m(n_round)))?;
    let first_bad = n_round - m_round;
    Ok((first_bad..n_round).all(|i| chosen.contains(&i)))
}

const MAX_DOUBLINGS: usize = 64;

/// Largest γ (to `rel_precision`) keeping all malicious copies in the
/// Multi-Krum selection: double or halve from `gamma_init` to bracket the
/// boundary, then bisect. The returned γ is always a probed feasible value
/// unless `constraint_met` is false.
pub fn multikrum_gamma_search<V: AsRef<ParameterVector>>(
    reference: &ParameterVector,
    omega: &ParameterVector,
    standins: &[V],
    n_round: usize,
    m_round: usize,
    search: &GammaSearchConfig,
) -> Result<GammaOutcome> {
    search.validate()?;
    if m_round == 0 {
        return Ok(GammaOutcome {
            update: reference.clone(),
            gamma: 0.0,
            constraint_met: true,
            first_infeasible: None,
            objective: None,
            probes: Vec::new(),
        });
    }
    let mut probes = Vec::new();
    let mut first_infeasible: Option<f64> = None;
    let mut probe = |g: f64| -> Result<bool> {
        let ok = multikrum_feasible(reference, omega, standins, n_round, m_round, g)?;
        probes.push((g, if ok { 1.0 } else { 0.0 }));
        if !ok {
            first_infeasible = Some(first_infeasible.map_or(g, |f: f64| f.min(g)));
        }
        Ok(ok)
    };

    let (mut lo, mut hi);
    if probe(search.gamma_init)? {
        lo = search.gamma_init;
        hi = None;
        for _ in 0..MAX_DOUBLINGS {
            let next = lo * 2.0;
            if probe(next)? {
                lo = next;
            } else {
                hi = Some(next);
                break;
            }
        }
    } else {
        let mut upper = search.gamma_init;
        let mut found = None;
        while upper / 2.0 >= search.gamma_lo {
            let next = upper / 2.0;
            if probe(next)? {
                found = Some(next);
                break;
            }
            upper = next;
        }
        if found.is_none() && upper > search.gamma_lo && probe(search.gamma_lo)? {
            found = Some(search.gamma_lo);
        }
        match found {
            Some(f) => {
                lo = f;
                hi = Some(upper);
            }
            None => {
                let update = reference.add_scaled(omega, search.gamma_lo)?;
                return Ok(GammaOutcome {
                    update,
                    gamma: search.gamma_lo,
                    constraint_met: false,
                    first_infeasible,
                    objective: None,
                    probes,
                });
            }
        }
    }
    if let Some(mut h) = hi {
        while h - lo > search.rel_precision * lo {
            let mid = 0.5 * (lo + h);
            if probe(mid)? {
                lo = mid;
            } else {
                h = mid;
            }
        }
    }
    Ok(GammaOutcome {
        update: reference.add_scaled(omega, lo)?,
        gamma: lo,
        constraint_met: true,
        first_infeasible,
        objective: None,
        probes,
    })
}

/// DYN-OPT against Multi-Krum, with the references standing in for benign clients.
pub fn dyn_opt_multikrum<V: AsRef<ParameterVector>>(
    references: &[V],
    perturbation: Perturbation,
    n_round: usize,
    m_round: usize,
    search: &GammaSearchConfig,
) -> Result<GammaOutcome> {
    let reference = benign_reference(references)?;
    let omega = perturbation_direction(perturbation, references)?;
    multikrum_gamma_search(&reference, &omega, references, n_round, m_round, search)
}

/// Coordinate-wise rule attacked by the Eq.-3-style objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordinateRule {
    TrimmedMean,
    Median,
}

/// `|| reference - rule(simulated round) ||` for one γ.
pub fn deviation_objective<V: AsRef<ParameterVector>>(
    reference: &ParameterVector,
    omega: &ParameterVector,
    standins: &[V],
    rule: CoordinateRule,
    n_round: usize,
    m_round: usize,
    gamma: f64,
) -> Result<f64> {
    let malicious = reference.add_scaled(omega, gamma)?;
    let round = simulated_round(standins, &malicious, n_round, m_round)?;
    let agg = match rule {
        CoordinateRule::TrimmedMean => {
            trimmed_mean(&round, m_round.min(AggregatorKind::TrimmedMean.max_known_m(n_round)))?
        }
        CoordinateRule::Median => median(&round)?,
    };
    Ok(reference.sub(&agg)?.l2_norm())
}

fn tie_tolerance(best: f64) -> f64 {
    1e-9 * best.abs().max(1e-300)
}

/// Maximizes the deviation objective over γ: log-spaced grid, golden-section
/// refinement around the best grid point, then a bisection toward the
/// smallest γ whose objective ties the maximum.
pub fn deviation_gamma_search<V: AsRef<ParameterVector> + Sync>(
    reference: &ParameterVector,
    omega: &ParameterVector,
    standins: &[V],
    rule: CoordinateRule,
    n_round: usize,
    m_round: usize,
    search: &GammaSearchConfig,
) -> Result<GammaOutcome> {
    search.validate()?;
    if m_round == 0 {
        return Ok(GammaOutcome {
            update: reference.add_scaled(omega, search.gamma_lo)?,
            gamma: search.gamma_lo,
            constraint_met: true,
            first_infeasible: None,
            objective: Some(deviation_objective(
                reference,
                omega,
                standins,
                rule,
                n_round,
                0,
                search.gamma_lo,
            )?),
            probes: Vec::new(),
        });
    }
    let objective = |g: f64| deviation_objective(reference, omega, standins, rule, n_round, m_round, g);
    let grid = search.grid();
    let values = exec::map_collect(&grid, |&g| objective(g))
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    let mut probes: Vec<(f64, f64)> = grid.iter().copied().zip(values.iter().copied()).collect();

    let grid_best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = tie_tolerance(grid_best);
    let idx = values
        .iter()
        .position(|&v| v >= grid_best - tol)
        .expect("grid is non-empty");

    // golden-section refinement on the neighbouring bracket
    let mut a = grid[idx.saturating_sub(1)];
    let mut b = grid[(idx + 1).min(grid.len() - 1)];
    let left_edge = a;
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (objective(c)?, objective(d)?);
    probes.push((c, fc));
    probes.push((d, fd));
    while b - a > search.rel_precision * a {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = objective(c)?;
            probes.push((c, fc));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = objective(d)?;
            probes.push((d, fd));
        }
    }
    let (mut best_gamma, mut best_value) = (grid[idx], values[idx]);
    for (g, v) in [(c, fc), (d, fd)] {
        if v > best_value + tie_tolerance(best_value) || (v >= best_value - tie_tolerance(best_value) && g < best_gamma)
        {
            best_gamma = g;
            best_value = v;
        }
    }

    // walk left to the smallest γ that still ties the best value
    let target = best_value - tie_tolerance(best_value);
    let mut lo = left_edge.min(best_gamma);
    let mut hi = best_gamma;
    let f_lo = objective(lo)?;
    probes.push((lo, f_lo));
    if f_lo >= target {
        hi = lo;
    } else {
        while hi - lo > search.rel_precision * lo {
            let mid = 0.5 * (lo + hi);
            let f = objective(mid)?;
            probes.push((mid, f));
            if f >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    let gamma = hi;
    let value = objective(gamma)?;
    Ok(GammaOutcome {
        update: reference.add_scaled(omega, gamma)?,
        gamma,
        constraint_met: true,
        first_infeasible: None,
        objective: Some(value),
        probes,
    })
}

/// DYN-OPT against Trimmed-Mean or Median.
pub fn dyn_opt_trimmed_median<V: AsRef<ParameterVector> + Sync>(
    references: &[V],
    perturbation: Perturbation,
    rule: CoordinateRule,
    n_round: usize,
    m_round: usize,
    search: &GammaSearchConfig,
) -> Result<GammaOutcome> {
    let reference = benign_reference(references)?;
    let omega = perturbation_direction(perturbation, references)?;
    deviation_gamma_search(&reference, &omega, references, rule, n_round, m_round, search)
}

/// The crafted update for one round plus what the search found.
#[derive(Debug, Clone, PartialEq)]
pub struct CraftedUpdate {
    pub update: ParameterVector,
    pub gamma: Option<f64>,
    pub constraint_met: bool,
}

/// Inputs available to the adversary in one round.
pub struct AttackRound<'a> {
    pub global: &'a ParameterVector,
    pub references: &'a [ParameterVector],
    pub mpaf_base: Option<&'a ParameterVector>,
    pub target: AggregatorKind,
    pub tau: Option<f64>,
    pub n_round: usize,
    pub m_round: usize,
    pub seed: u64,
}

/// Crafts the single update every selected malicious client submits.
pub fn craft_update(cfg: &AttackConfig, round: &AttackRound<'_>) -> Result<CraftedUpdate> {
    match cfg.kind {
        AttackKind::None => Err(invalid("attack.kind", "no attack configured")),
        AttackKind::FakeMpaf => {
            let base = round
                .mpaf_base
                .ok_or_else(|| invalid("attack", "MPAF needs a base model"))?;
            let update = craft_mpaf(
                round.global,
                &MpafConfig {
                    base_model: base.clone(),
                    lambda: cfg.lambda,
                },
            )?;
            Ok(CraftedUpdate {
                update,
                gamma: None,
                constraint_met: true,
            })
        }
        AttackKind::DynOpt => {
            let refs = round.references;
            let omega_kind = cfg.perturbation_for(round.target);
            let search = &cfg.gamma_search;
            let outcome = match round.target {
                AggregatorKind::Fedavg => {
                    let gamma = cfg.gamma_for(round.target);
                    return Ok(CraftedUpdate {
                        update: dyn_opt_fedavg(refs, gamma, round.seed)?,
                        gamma: Some(gamma),
                        constraint_met: true,
                    });
                }
                AggregatorKind::NormBounding | AggregatorKind::AdaptiveStolen => {
                    let tau = round
                        .tau
                        .ok_or_else(|| invalid("aggregator.tau", "needed by the norm-bounding attack"))?;
                    let gamma = cfg.gamma_for(round.target);
                    return Ok(CraftedUpdate {
                        update: dyn_opt_norm_bounding(refs, omega_kind, tau, gamma)?,
                        gamma: Some(gamma),
                        constraint_met: true,
                    });
                }
                AggregatorKind::MultiKrum => dyn_opt_multikrum(refs, omega_kind, round.n_round, round.m_round, search)?,
                AggregatorKind::TrimmedMean => dyn_opt_trimmed_median(
                    refs,
                    omega_kind,
                    CoordinateRule::TrimmedMean,
                    round.n_round,
                    round.m_round,
                    search,
                )?,
                AggregatorKind::Median => dyn_opt_trimmed_median(
                    refs,
                    omega_kind,
                    CoordinateRule::Median,
                    round.n_round,
                    round.m_round,
                    search,
                )?,
            };
            Ok(CraftedUpdate {
                update: outcome.update,
                gamma: Some(outcome.gamma),
                constraint_met: outcome.constraint_met,
            })
        }
    }
}
