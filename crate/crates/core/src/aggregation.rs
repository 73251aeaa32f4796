//! Server aggregation rules.
//!
//! Slice-level functions take updates in a fixed order; [`AggregatorConfig::aggregate`]
//! sorts [`ClientUpdate`]s by client id first so every rule is invariant to
//! submission order.

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::model::{evaluate, ClientUpdate, ModelSpec};
use crate::params::{check_dim, mean_of, ParameterVector};

const COORD_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregatorKind {
    Fedavg,
    Median,
    TrimmedMean,
    MultiKrum,
    NormBounding,
    AdaptiveStolen,
}

impl AggregatorKind {
    /// Rules that are told the per-round malicious count.
    pub fn uses_known_m(self) -> bool {
        matches!(self, Self::TrimmedMean | Self::MultiKrum)
    }

    pub fn uses_tau(self) -> bool {
        matches!(self, Self::NormBounding | Self::AdaptiveStolen)
    }

    /// Largest malicious count the rule accepts for a round of `n` updates.
    pub fn max_known_m(self, n: usize) -> usize {
        match self {
            Self::TrimmedMean => n.saturating_sub(1) / 2,
            Self::MultiKrum => n.saturating_sub(4) / 2,
            _ => n,
        }
    }
}

/// How the stolen-data defense turns losses into weights.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdaptiveWeighting {
    /// `L_v / (L_s + L_v)`: smaller stolen loss, larger weight.
    #[default]
    Intent,
    /// `L_s / (L_s + L_v)`, the formula read word for word.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregatorConfig {
    pub kind: AggregatorKind,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub adaptive_weighting: AdaptiveWeighting,
}

impl AggregatorConfig {
    pub fn new(kind: AggregatorKind) -> Self {
        Self {
            kind,
            tau: None,
            adaptive_weighting: AdaptiveWeighting::Intent,
        }
    }

    pub fn with_tau(kind: AggregatorKind, tau: f64) -> Self {
        Self {
            tau: Some(tau),
            ..Self::new(kind)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind.uses_tau() {
            match self.tau {
                Some(t) if t > 0.0 && t.is_finite() => {}
                _ => return Err(invalid("aggregator.tau", "must be > 0 for this aggregator")),
            }
        }
        Ok(())
    }

    /// Checks the n/m constraints of the adaptive rules.
    pub fn check_round(&self, n: usize, known_m: usize) -> Result<()> {
        match self.kind {
            AggregatorKind::TrimmedMean if n < 2 * known_m + 1 => Err(Error::OverTrimming { n, m: known_m }),
            AggregatorKind::MultiKrum if n < 2 * known_m + 4 => Err(Error::TooManyMalicious { n, m: known_m }),
            _ => Ok(()),
        }
    }

    fn tau(&self) -> Result<f64> {
        self.tau
            .ok_or_else(|| invalid("aggregator.tau", "required for this aggregator"))
    }

    /// Aggregates one round. Updates are sorted by client id first.
    pub fn aggregate(&self, updates: &[ClientUpdate], ctx: &RoundContext<'_>) -> Result<ParameterVector> {
        let mut sorted: Vec<&ClientUpdate> = updates.iter().collect();
        sorted.sort_by_key(|u| u.client_id);
        let deltas: Vec<&ParameterVector> = sorted.iter().map(|u| &u.delta).collect();
        self.aggregate_vectors(&deltas, ctx)
    }

    pub fn aggregate_vectors<V: AsRef<ParameterVector> + Sync>(
        &self,
        updates: &[V],
        ctx: &RoundContext<'_>,
    ) -> Result<ParameterVector> {
        match self.kind {
            AggregatorKind::Fedavg => fedavg(updates),
            AggregatorKind::Median => median(updates),
            AggregatorKind::TrimmedMean => trimmed_mean(updates, ctx.known_m),
            AggregatorKind::MultiKrum => multi_krum(updates, ctx.known_m),
            AggregatorKind::NormBounding => norm_bounding(updates, self.tau()?),
            AggregatorKind::AdaptiveStolen => {
                let defense = ctx
                    .defense
                    .ok_or_else(|| invalid("aggregator", "adaptive-stolen needs stolen and validation data"))?;
                adaptive_stolen(updates, defense, self.tau()?, self.adaptive_weighting).map(|(agg, _)| agg)
            }
        }
    }
}

/// Server-side knowledge available when aggregating a round.
#[derive(Debug, Clone, Copy, Default)]
pub struct RoundContext<'a> {
    /// Number of malicious updates in the round, for adaptive rules.
    pub known_m: usize,
    pub defense: Option<DefenseData<'a>>,
}

/// Inputs of the stolen-data defense.
#[derive(Debug, Clone, Copy)]
pub struct DefenseData<'a> {
    pub global: &'a ParameterVector,
    pub stolen: &'a LabeledDataset,
    pub validation: &'a LabeledDataset,
    pub spec: &'a ModelSpec,
}

fn common_dim<V: AsRef<ParameterVector>>(updates: &[V]) -> Result<usize> {
    let dim = updates.first().ok_or(Error::EmptyUpdates)?.as_ref().dim();
    for u in updates {
        check_dim(dim, u.as_ref().dim())?;
    }
    Ok(dim)
}

/// Runs `reduce` on the sorted column of every coordinate.
fn coordinatewise<V, F>(updates: &[V], reduce: F) -> Result<ParameterVector>
where
    V: AsRef<ParameterVector> + Sync,
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    let dim = common_dim(updates)?;
    let mut out = vec![0.0; dim];
    exec::fill_chunks(&mut out, COORD_CHUNK, |offset, chunk| {
        let mut column = Vec::with_capacity(updates.len());
        for (j, slot) in chunk.iter_mut().enumerate() {
            column.clear();
            column.extend(updates.iter().map(|u| u.as_ref()[offset + j]));
            column.sort_by(f64::total_cmp);
            *slot = reduce(&column);
        }
    });
    Ok(ParameterVector::new(out))
}

/// Unweighted coordinate-wise mean.
pub fn fedavg<V: AsRef<ParameterVector>>(updates: &[V]) -> Result<ParameterVector> {
    mean_of(updates)
}

/// Coordinate-wise median; an even count takes the midpoint of the two
/// central values.
pub fn median<V: AsRef<ParameterVector> + Sync>(updates: &[V]) -> Result<ParameterVector> {
    coordinatewise(updates, |col| {
        let n = col.len();
        if n % 2 == 1 {
            col[n / 2]
        } else {
            (col[n / 2 - 1] + col[n / 2]) / 2.0
        }
    })
}

/// Drops the `m` largest and `m` smallest values per coordinate and averages
/// the rest.
pub fn trimmed_mean<V: AsRef<ParameterVector> + Sync>(updates: &[V], m: usize) -> Result<ParameterVector> {
    let n = updates.len();
    if n == 0 {
        return Err(Error::EmptyUpdates);
    }
    if n < 2 * m + 1 {
        return Err(Error::OverTrimming { n, m });
    }
    coordinatewise(updates, |col| {
        let kept = &col[m..n - m];
        kept.iter().sum::<f64>() / kept.len() as f64
    })
}

fn pairwise_sq_distances<V: AsRef<ParameterVector> + Sync>(updates: &[V]) -> Vec<Vec<f64>> {
    let n = updates.len();
    let rows = exec::map_range(n, |i| {
        (0..n)
            .map(|j| {
                if i == j {
                    0.0
                } else {
                    updates[i].as_ref().squared_distance(updates[j].as_ref())
                }
            })
            .collect::<Vec<f64>>()
    });
    rows
}

/// Iterated Krum selection. Returns indices into `updates` in selection order.
///
/// Each pass scores every update left in the pool by the sum of squared
/// distances to its `pool - m - 2` nearest pool neighbours, moves the lowest
/// scorer (lowest index on ties) into the selection, and stops once
/// `n - 2m - 3` updates have been selected.
pub fn multikrum_select<V: AsRef<ParameterVector> + Sync>(updates: &[V], m: usize) -> Result<Vec<usize>> {
    let n = updates.len();
    if n == 0 {
        return Err(Error::EmptyUpdates);
    }
    common_dim(updates)?;
    if n < 2 * m + 4 {
        return Err(Error::TooManyMalicious { n, m });
    }
    let target = n - 2 * m - 3;
    let dist = pairwise_sq_distances(updates);
    let mut pool: Vec<usize> = (0..n).collect();
    let mut selected = Vec::with_capacity(target);
    let mut buf = Vec::with_capacity(n);
    while selected.len() < target {
        let neighbours = pool.len() - m - 2;
        let mut best: Option<(f64, usize)> = None;
        for (pos, &i) in pool.iter().enumerate() {
            buf.clear();
            buf.extend(pool.iter().filter(|&&j| j != i).map(|&j| dist[i][j]));
            buf.sort_by(f64::total_cmp);
            let score: f64 = buf[..neighbours].iter().sum();
            if best.is_none_or(|(s, _)| score < s) {
                best = Some((score, pos));
            }
        }
        let (_, pos) = best.expect("pool is non-empty");
        selected.push(pool.remove(pos));
    }
    Ok(selected)
}

/// Mean of the Multi-Krum selection.
pub fn multi_krum<V: AsRef<ParameterVector> + Sync>(updates: &[V], m: usize) -> Result<ParameterVector> {
    let chosen = multikrum_select(updates, m)?;
    let picked: Vec<&ParameterVector> = chosen.iter().map(|&i| updates[i].as_ref()).collect();
    mean_of(&picked)
}

/// `u * min(1, tau / ||u||)`.
pub fn scale_to_norm(u: &ParameterVector, tau: f64) -> ParameterVector {
    let norm = u.l2_norm();
    if norm <= tau {
        u.clone()
    } else {
        u.scaled(tau / norm)
    }
}

/// Mean of all updates after each is clipped to norm `tau`.
pub fn norm_bounding<V: AsRef<ParameterVector> + Sync>(updates: &[V], tau: f64) -> Result<ParameterVector> {
    if !(tau > 0.0) {
        return Err(invalid("tau", "must be > 0"));
    }
    common_dim(updates)?;
    let clipped = exec::map_collect(updates, |u| scale_to_norm(u.as_ref(), tau));
    mean_of(&clipped)
}

/// Normalized defense weights from (stolen loss, validation loss) pairs.
/// Falls back to uniform weights when any pair sums to zero.
pub fn adaptive_weights(losses: &[(f64, f64)], weighting: AdaptiveWeighting) -> Vec<f64> {
    let n = losses.len();
    let degenerate = losses.iter().any(|(s, v)| !(s + v > 0.0) || !(s + v).is_finite());
    if n == 0 || degenerate {
        return vec![1.0 / n.max(1) as f64; n];
    }
    let raw: Vec<f64> = losses
        .iter()
        .map(|&(s, v)| match weighting {
            AdaptiveWeighting::Intent => v / (s + v),
            AdaptiveWeighting::Literal => s / (s + v),
        })
        .collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return vec![1.0 / n as f64; n];
    }
    raw.iter().map(|w| w / total).collect()
}

/// Stolen-data defense: clip every update to `tau`, score `global + u` on the
/// stolen and validation sets, and take the loss-weighted average. Returns the
/// aggregate and the weights.
pub fn adaptive_stolen<V: AsRef<ParameterVector> + Sync>(
    updates: &[V],
    defense: DefenseData<'_>,
    tau: f64,
    weighting: AdaptiveWeighting,
) -> Result<(ParameterVector, Vec<f64>)> {
    if !(tau > 0.0) {
        return Err(invalid("tau", "must be > 0"));
    }
    if defense.stolen.is_empty() || defense.validation.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dim = common_dim(updates)?;
    check_dim(defense.global.dim(), dim)?;
    let clipped = exec::map_collect(updates, |u| scale_to_norm(u.as_ref(), tau));
    let losses = exec::map_collect(&clipped, |u| -> Result<(f64, f64)> {
        let candidate = defense.global.add_scaled(u, 1.0)?;
        let (ls, _) = evaluate(defense.spec, &candidate, defense.stolen)?;
        let (lv, _) = evaluate(defense.spec, &candidate, defense.validation)?;
        Ok((ls, lv))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let weights = adaptive_weights(&losses, weighting);
    let mut out = vec![0.0; dim];
    for (u, w) in clipped.iter().zip(&weights) {
        for (o, x) in out.iter_mut().zip(u.as_slice()) {
            *o += w * x;
        }
    }
    Ok((ParameterVector::new(out), weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic_task, SyntheticTaskConfig};
    use crate::model::{init_model, Role};
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ParameterVector {
        ParameterVector::new(v.to_vec())
    }

    #[test]
    fn fedavg_examples() {
        let u = pv(&[1.0, -2.0]);
        assert_eq!(fedavg(&[&u]).unwrap(), u);
        assert_eq!(fedavg(&[pv(&[1.0, 1.0]), pv(&[3.0, 3.0])]).unwrap(), pv(&[2.0, 2.0]));
        assert!(matches!(fedavg::<ParameterVector>(&[]), Err(Error::EmptyUpdates)));
    }

    #[test]
    fn fedavg_is_dominated_by_one_huge_update() {
        let mut ups: Vec<ParameterVector> = (0..24)
            .map(|i| {
                let a = i as f64 * 0.3;
                pv(&[a.cos(), a.sin()])
            })
            .collect();
        ups.push(pv(&[1e6, 0.0]));
        assert!(fedavg(&ups).unwrap().l2_norm() > 4e4);
    }

    #[test]
    fn median_examples() {
        let ups = [pv(&[1.0, 2.0]), pv(&[3.0, 4.0]), pv(&[100.0, -100.0])];
        assert_eq!(median(&ups).unwrap(), pv(&[3.0, 2.0]));
        let same = vec![pv(&[0.5, 7.0]); 4];
        assert_eq!(median(&same).unwrap(), pv(&[0.5, 7.0]));
        assert_eq!(median(&[pv(&[1.0]), pv(&[2.0])]).unwrap(), pv(&[1.5]));
        let rev: Vec<_> = ups.iter().rev().cloned().collect();
        assert_eq!(median(&rev).unwrap(), median(&ups).unwrap());
    }

    #[test]
    fn trimmed_mean_examples() {
        let ups: Vec<_> = [1.0, 2.0, 3.0, 100.0].iter().map(|&v| pv(&[v, v])).collect();
        assert_eq!(trimmed_mean(&ups, 1).unwrap(), pv(&[2.5, 2.5]));
        assert_eq!(trimmed_mean(&ups, 0).unwrap(), fedavg(&ups).unwrap());
        let err = trimmed_mean(&ups, 2).unwrap_err();
        assert!(err.to_string().starts_with("over-trimming"));
        let mut padded = ups.clone();
        padded.push(pv(&[1e9, 1e9]));
        padded.push(pv(&[-1e9, -1e9]));
        assert_eq!(trimmed_mean(&padded, 2).unwrap(), trimmed_mean(&ups, 1).unwrap());
    }

    #[test]
    fn multikrum_rejects_outlier() {
        let mut ups: Vec<ParameterVector> = (0..5).map(|i| pv(&[i as f64 * 0.1, 1.0])).collect();
        ups.insert(2, pv(&[50.0, -50.0]));
        let chosen = multikrum_select(&ups, 0).unwrap();
        assert_eq!(chosen.len(), 3);
        assert!(!chosen.contains(&2));
    }

    #[test]
    fn multikrum_selection_size_and_errors() {
        let ups: Vec<ParameterVector> = (0..7).map(|i| pv(&[i as f64])).collect();
        assert_eq!(multikrum_select(&ups, 1).unwrap().len(), 2);
        let err = multikrum_select(&ups, 2).unwrap_err();
        assert_eq!(
            err.to_string(),
            "too many malicious for Multi-Krum: n = 7, m = 2 gives c = n - 2m - 3 < 1"
        );
        let same = vec![pv(&[2.0, 3.0]); 6];
        assert_eq!(multi_krum(&same, 0).unwrap(), pv(&[2.0, 3.0]));
    }

    #[test]
    fn multi_krum_is_fedavg_of_selection() {
        let ups: Vec<ParameterVector> = (0..9).map(|i| pv(&[(i * i) as f64 % 7.0, i as f64])).collect();
        let chosen = multikrum_select(&ups, 1).unwrap();
        let subset: Vec<_> = chosen.iter().map(|&i| ups[i].clone()).collect();
        assert_eq!(multi_krum(&ups, 1).unwrap(), fedavg(&subset).unwrap());
    }

    #[test]
    fn scale_to_norm_examples() {
        assert_eq!(scale_to_norm(&pv(&[3.0, 4.0]), 2.5), pv(&[1.5, 2.0]));
        assert_eq!(scale_to_norm(&pv(&[0.3, 0.4]), 2.5), pv(&[0.3, 0.4]));
        assert_eq!(scale_to_norm(&pv(&[0.0, 0.0]), 1.0), pv(&[0.0, 0.0]));
    }

    #[test]
    fn norm_bounding_examples() {
        let small = [pv(&[0.1, 0.2]), pv(&[-0.3, 0.0])];
        assert_eq!(norm_bounding(&small, 1.0).unwrap(), fedavg(&small).unwrap());
        let mut ups: Vec<ParameterVector> = (0..10).map(|_| pv(&[0.6, 0.8])).collect();
        ups.push(pv(&[1e6, 0.0]));
        assert!(norm_bounding(&ups, 1.0).unwrap().l2_norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn adaptive_weight_formula() {
        let w = adaptive_weights(&[(1.0, 1.0), (3.0, 1.0)], AdaptiveWeighting::Intent);
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15 && (w[1] - 1.0 / 3.0).abs() < 1e-15);
        let lit = adaptive_weights(&[(1.0, 1.0), (3.0, 1.0)], AdaptiveWeighting::Literal);
        assert!((lit[0] - 0.5 / 1.25).abs() < 1e-15);
        assert_eq!(
            adaptive_weights(&[(0.0, 0.0), (1.0, 2.0)], AdaptiveWeighting::Intent),
            vec![0.5, 0.5]
        );
    }

    fn defense_fixture() -> (ModelSpec, ParameterVector, LabeledDataset, LabeledDataset) {
        let cfg = SyntheticTaskConfig {
            num_classes: 3,
            input_dim: 4,
            samples_per_class_train: 5,
            samples_per_class_test: 5,
            class_center_scale: 2.0,
            noise_sigma: 0.5,
            modes_per_class: 1,
            mode_spread: 0.0,
        };
        let (train, test) = generate_synthetic_task(&cfg, 21).unwrap();
        let spec = ModelSpec::logistic(4, 3);
        (spec, init_model(&spec, 4).unwrap(), train, test)
    }

    #[test]
    fn adaptive_identical_losses_match_norm_bounding() {
        let (spec, global, stolen, validation) = defense_fixture();
        let d = spec.dim();
        let u = ParameterVector::new((0..d).map(|j| (j as f64).sin()).collect());
        let ups = vec![u.clone(), u.clone(), u];
        let defense = DefenseData {
            global: &global,
            stolen: &stolen,
            validation: &validation,
            spec: &spec,
        };
        let (agg, w) = adaptive_stolen(&ups, defense, 0.7, AdaptiveWeighting::Intent).unwrap();
        let nb = norm_bounding(&ups, 0.7).unwrap();
        for (a, b) in agg.as_slice().iter().zip(nb.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(w.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn adaptive_weights_follow_stolen_loss() {
        let (spec, global, stolen, validation) = defense_fixture();
        let d = spec.dim();
        let ups: Vec<ParameterVector> = (0..6)
            .map(|k| ParameterVector::new((0..d).map(|j| ((j * (k + 3)) as f64).cos() * 0.5).collect()))
            .collect();
        let defense = DefenseData {
            global: &global,
            stolen: &stolen,
            validation: &validation,
            spec: &spec,
        };
        let (_, w) = adaptive_stolen(&ups, defense, 1.0, AdaptiveWeighting::Intent).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|&x| (0.0..=1.0).contains(&x)));
        // direct loss computation
        let ratio: Vec<f64> = ups
            .iter()
            .map(|u| {
                let c = global.add_scaled(&scale_to_norm(u, 1.0), 1.0).unwrap();
                let ls = evaluate(&spec, &c, &stolen).unwrap().0;
                let lv = evaluate(&spec, &c, &validation).unwrap().0;
                ls / lv
            })
            .collect();
        for a in 0..6 {
            for b in 0..6 {
                if ratio[a] < ratio[b] {
                    assert!(w[a] > w[b]);
                }
            }
        }
    }

    #[test]
    fn config_aggregate_sorts_by_client() {
        let ups = vec![
            ClientUpdate::new(4, Role::Benign, pv(&[1.0])),
            ClientUpdate::new(1, Role::Fake, pv(&[9.0])),
            ClientUpdate::new(2, Role::Benign, pv(&[3.0])),
        ];
        let cfg = AggregatorConfig::new(AggregatorKind::Median);
        let mut rev = ups.clone();
        rev.reverse();
        let ctx = RoundContext::default();
        assert_eq!(cfg.aggregate(&ups, &ctx).unwrap(), cfg.aggregate(&rev, &ctx).unwrap());
        assert!(AggregatorConfig::new(AggregatorKind::NormBounding).validate().is_err());
        assert!(AggregatorConfig::with_tau(AggregatorKind::NormBounding, 1.0)
            .validate()
            .is_ok());
    }

    fn updates_strategy() -> impl Strategy<Value = Vec<ParameterVector>> {
        (1usize..6, 1usize..12).prop_flat_map(|(d, n)| {
            prop::collection::vec(prop::collection::vec(-10.0f64..10.0, d), n)
                .prop_map(|vs| vs.into_iter().map(ParameterVector::new).collect())
        })
    }

    proptest! {
        #[test]
        fn coordinatewise_rules_are_bounded(ups in updates_strategy()) {
            let m = (ups.len() - 1) / 2;
            for out in [median(&ups).unwrap(), trimmed_mean(&ups, m).unwrap()] {
                for j in 0..out.dim() {
                    let lo = ups.iter().map(|u| u[j]).fold(f64::INFINITY, f64::min);
                    let hi = ups.iter().map(|u| u[j]).fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(out[j] >= lo - 1e-12 && out[j] <= hi + 1e-12);
                }
            }
        }

        #[test]
        fn norm_bounding_respects_clipped_norms(ups in updates_strategy(), tau in 0.1f64..20.0) {
            let bound = ups.iter().map(|u| u.l2_norm().min(tau)).fold(0.0, f64::max);
            prop_assert!(norm_bounding(&ups, tau).unwrap().l2_norm() <= bound + 1e-9);
        }

        #[test]
        fn rules_are_permutation_invariant(ups in updates_strategy(), rot in 0usize..12) {
            let n = ups.len();
            let tagged: Vec<ClientUpdate> = ups.iter().cloned().enumerate()
                .map(|(i, d)| ClientUpdate::new(i * 3, Role::Benign, d)).collect();
            let mut shuffled = tagged.clone();
            shuffled.rotate_left(rot % n);
            shuffled.reverse();
            let m = if n >= 6 { 1 } else { 0 };
            for kind in [AggregatorKind::Fedavg, AggregatorKind::Median, AggregatorKind::TrimmedMean,
                         AggregatorKind::MultiKrum, AggregatorKind::NormBounding] {
                if kind == AggregatorKind::MultiKrum && n < 2 * m + 4 { continue; }
                let cfg = AggregatorConfig::with_tau(kind, 3.0);
                let ctx = RoundContext { known_m: m, defense: None };
                prop_assert_eq!(cfg.aggregate(&tagged, &ctx).unwrap(), cfg.aggregate(&shuffled, &ctx).unwrap());
            }
        }

        #[test]
        fn multikrum_translation_invariant(
            grid in prop::collection::vec(prop::collection::vec(-20i32..20, 3), 4..10),
            shift in -1000i32..1000,
        ) {
            // integer coordinates keep distances exact under translation
            let ups: Vec<ParameterVector> = grid.iter()
                .map(|r| ParameterVector::new(r.iter().map(|&x| x as f64).collect())).collect();
            let moved: Vec<ParameterVector> = grid.iter()
                .map(|r| ParameterVector::new(r.iter().map(|&x| (x + shift) as f64).collect())).collect();
            prop_assert_eq!(multikrum_select(&ups, 0).unwrap(), multikrum_select(&moved, 0).unwrap());
        }

        #[test]
        fn trimmed_mean_ignores_extreme_outliers(ups in updates_strategy(), m in 1usize..3) {
            let mut with = ups.clone();
            let d = ups[0].dim();
            for k in 0..m {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                with.push(ParameterVector::new(vec![sign * 1e12; d]));
                with.push(ParameterVector::new(vec![-sign * 1e12; d]));
            }
            // m outliers above every inlier and m below leave the result unchanged
            let base = trimmed_mean(&ups, 0).unwrap();
            let out = trimmed_mean(&with, m).unwrap();
            for j in 0..d {
                prop_assert!((out[j] - base[j]).abs() <= 1e-9 * base[j].abs().max(1.0));
            }
        }
    }
}
