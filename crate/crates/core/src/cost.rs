//! Botnet cost model for fake, hybrid and compromised adversaries.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostParams {
    /// Price of one zombie device.
    pub device_price: f64,
    /// Fraction of devices that run the target app.
    pub app_prevalence: f64,
    /// Flat per-client costs. When both are set they replace the botnet model.
    pub fake_unit_cost: Option<f64>,
    pub compromised_unit_cost: Option<f64>,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            device_price: 1.0,
            app_prevalence: 0.01,
            fake_unit_cost: None,
            compromised_unit_cost: None,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.device_price > 0.0 && self.device_price.is_finite()) {
            return Err(invalid("cost.device_price", "must be > 0"));
        }
        if !(self.app_prevalence > 0.0 && self.app_prevalence <= 1.0) {
            return Err(invalid("cost.app_prevalence", "must lie in (0, 1]"));
        }
        for (field, v) in [
            ("cost.fake_unit_cost", self.fake_unit_cost),
            ("cost.compromised_unit_cost", self.compromised_unit_cost),
        ] {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(invalid(field, "must be >= 0"));
                }
            }
        }
        Ok(())
    }

    /// Devices bought per compromised client.
    pub fn devices_per_compromised(&self) -> f64 {
        1.0 / self.app_prevalence
    }
}

/// Population split as seen by the cost model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversaryModel {
    pub n_benign: usize,
    pub n_compromised: usize,
    pub n_fake: usize,
}

impl AdversaryModel {
    pub fn n_malicious(&self) -> usize {
        self.n_compromised + self.n_fake
    }

    pub fn total(&self) -> usize {
        self.n_benign + self.n_malicious()
    }
}

/// Cost of fielding the adversary. Compromised clients need `1/prevalence`
/// devices each; every device can also host a fake client.
pub fn attack_cost(adv: &AdversaryModel, p: &CostParams) -> f64 {
    if let (Some(f), Some(c)) = (p.fake_unit_cost, p.compromised_unit_cost) {
        return adv.n_fake as f64 * f + adv.n_compromised as f64 * c;
    }
    let m = adv.n_malicious() as f64;
    let compromised_devices = adv.n_compromised as f64 / p.app_prevalence;
    let devices = if adv.n_compromised == 0 {
        m
    } else if adv.n_fake == 0 {
        compromised_devices
    } else {
        compromised_devices.max(m)
    };
    devices * p.device_price
}

/// (fake + compromised) / total population.
pub fn malicious_ratio(adv: &AdversaryModel) -> Result<f64> {
    let total = adv.total();
    if total == 0 {
        return Err(invalid("adversary", "population is empty"));
    }
    Ok(adv.n_malicious() as f64 / total as f64)
}

/// Smallest fake-client count reaching `target_ratio` when `n_compromised`
/// of `n_real` real clients are compromised.
pub fn solve_fake_count(n_real: usize, n_compromised: usize, target_ratio: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&target_ratio) {
        return Err(Error::Infeasible(format!(
            "target ratio {target_ratio} must lie in [0, 1)"
        )));
    }
    if n_compromised > n_real {
        return Err(invalid("n_compromised", "exceeds the real population"));
    }
    let needed = (target_ratio * n_real as f64 - n_compromised as f64) / (1.0 - target_ratio);
    if needed <= 0.0 {
        return Ok(0);
    }
    Ok((needed - 1e-9 * needed.max(1.0)).ceil() as usize)
}

/// One row of the `cost` CLI table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostScenario {
    pub name: String,
    pub n_benign: usize,
    pub n_compromised: usize,
    pub n_fake: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostScenarioFile {
    #[serde(default)]
    pub params: CostParams,
    pub scenarios: Vec<CostScenario>,
}

impl CostScenario {
    pub fn model(&self) -> AdversaryModel {
        AdversaryModel {
            n_benign: self.n_benign,
            n_compromised: self.n_compromised,
            n_fake: self.n_fake,
        }
    }
}
