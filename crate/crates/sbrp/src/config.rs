//! Run configuration: TOML with dotted sections, `key=value` overrides and
//! a content hash for provenance.

use std::path::Path;

use sbrp_core::optout::CalibrationAnchors;
use sbrp_core::simulation::incentive_grid;
use sbrp_core::{ChanceParams, CostParams, DistanceTransform, OptOutModel, PlanningParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InstanceConfig {
    pub walk_limit: f64,
    pub stop_capacity: u32,
    pub side: f64,
    /// Grid spacing of candidate stops; `walk_limit / sqrt(2)` when absent.
    pub stop_spacing: Option<f64>,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        Self { walk_limit: 0.25, stop_capacity: 15, side: 3.0, stop_spacing: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformName {
    Identity,
    Log1p,
}

impl From<TransformName> for DistanceTransform {
    fn from(t: TransformName) -> Self {
        match t {
            TransformName::Identity => DistanceTransform::Identity,
            TransformName::Log1p => DistanceTransform::Log1p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RidershipConfig {
    /// School-wide mean ridership.
    pub mean: f64,
    pub transform: TransformName,
}

impl Default for RidershipConfig {
    fn default() -> Self {
        Self { mean: 0.3, transform: TransformName::Identity }
    }
}

/// Either explicit coefficients or calibration anchors. Anchors win when
/// all of them are given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptOutConfig {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d_close: Option<f64>,
    pub p_high: Option<f64>,
    pub tau_high: Option<f64>,
    pub d_far: Option<f64>,
    pub p_low: Option<f64>,
    pub tau_low: Option<f64>,
    pub epsilon0: Option<f64>,
}

impl Default for OptOutConfig {
    fn default() -> Self {
        let m = OptOutModel::default();
        Self {
            a: m.a,
            b: m.b,
            c: m.c,
            d_close: None,
            p_high: None,
            tau_high: None,
            d_far: None,
            p_low: None,
            tau_low: None,
            epsilon0: None,
        }
    }
}

impl OptOutConfig {
    pub fn anchors(&self) -> Option<CalibrationAnchors> {
        Some(CalibrationAnchors {
            d_close: self.d_close?,
            p_high: self.p_high?,
            tau_high: self.tau_high?,
            d_far: self.d_far?,
            p_low: self.p_low?,
            tau_low: self.tau_low?,
            epsilon0: self.epsilon0?,
        })
    }

    fn any_anchor(&self) -> bool {
        [self.d_close, self.p_high, self.tau_high, self.d_far, self.p_low, self.tau_low, self.epsilon0]
            .iter()
            .any(Option::is_some)
    }

    pub fn model(&self) -> Result<OptOutModel> {
        match self.anchors() {
            Some(anchors) => OptOutModel::calibrate(&anchors).map_err(|e| Error::invalid("optout", e)),
            None if self.any_anchor() => {
                Err(Error::invalid("optout", "calibration needs all seven anchors"))
            }
            None => OptOutModel::new(self.a, self.b, self.c).map_err(|e| Error::invalid("optout", e)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BusConfig {
    pub capacity: u32,
    pub alpha: f64,
    pub v_plus: Option<u32>,
    pub speed_mph: f64,
    pub dwell_base: f64,
    pub dwell_per_rider: f64,
    pub dt_max: f64,
}

impl Default for BusConfig {
    fn default() -> Self {
        Self {
            capacity: 48,
            alpha: 0.05,
            v_plus: None,
            speed_mph: 20.0,
            dwell_base: 0.5,
            dwell_per_rider: 0.1,
            dt_max: 40.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostConfig {
    pub bus_cost: f64,
    pub time_cost: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        let c = CostParams::default();
        Self { bus_cost: c.bus_cost, time_cost: c.time_cost }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Explicit grid; overrides `tau_max` and `tau_step`.
    pub taus: Option<Vec<f64>>,
    pub tau_max: f64,
    pub tau_step: f64,
    pub replicas: usize,
    pub base_seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { taus: None, tau_max: 2500.0, tau_step: 250.0, replicas: 100, base_seed: 1 }
    }
}

impl SweepConfig {
    pub fn grid(&self) -> Vec<f64> {
        match &self.taus {
            Some(t) => t.clone(),
            None => incentive_grid(self.tau_max, self.tau_step),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub instance: InstanceConfig,
    pub ridership: RidershipConfig,
    pub optout: OptOutConfig,
    pub bus: BusConfig,
    pub cost: CostConfig,
    pub sweep: SweepConfig,
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::invalid("--set", "empty key"))?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::invalid("--set", format!("{key}: {p} is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Parses TOML text, applies `key=value` overrides, then validates.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table =
            text.parse().map_err(|e: toml::de::Error| Error::invalid("config", e.message()))?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::invalid("--set", format!("expected key=value, got {o}")))?;
            set_path(&mut table, k.trim(), parse_value(v.trim()))?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::invalid("config", e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        let i = &self.instance;
        if !(i.walk_limit > 0.0 && i.walk_limit.is_finite()) {
            return Err(Error::invalid("instance.walk_limit", "must be positive"));
        }
        if i.stop_capacity == 0 {
            return Err(Error::invalid("instance.stop_capacity", "must be at least 1"));
        }
        if !(i.side > 0.0 && i.side.is_finite()) {
            return Err(Error::invalid("instance.side", "must be positive"));
        }
        if let Some(s) = i.stop_spacing {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::invalid("instance.stop_spacing", "must be positive"));
            }
        }
        let r = self.ridership.mean;
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::invalid("ridership.mean", "must lie strictly inside (0, 1)"));
        }
        self.optout.model()?;
        self.planning()?;
        self.cost_params()?;
        let s = &self.sweep;
        if s.replicas == 0 {
            return Err(Error::invalid("sweep.replicas", "must be at least 1"));
        }
        if s.taus.is_none() && !(s.tau_step > 0.0 && s.tau_max >= 0.0) {
            return Err(Error::invalid("sweep", "tau_step must be positive and tau_max nonnegative"));
        }
        sbrp_core::simulation::validate_grid(&s.grid()).map_err(|e| Error::invalid("sweep.taus", e))?;
        Ok(())
    }

    pub fn planning(&self) -> Result<PlanningParams> {
        let b = &self.bus;
        let chance = ChanceParams::new(b.capacity, b.alpha, b.v_plus).map_err(|e| Error::invalid("bus", e))?;
        let ok = b.speed_mph > 0.0
            && b.speed_mph.is_finite()
            && b.dwell_base >= 0.0
            && b.dwell_per_rider >= 0.0
            && b.dt_max >= 0.0
            && b.dt_max.is_finite();
        if !ok {
            return Err(Error::invalid(
                "bus",
                "speed must be positive; dwell times and dt_max nonnegative and finite",
            ));
        }
        Ok(PlanningParams {
            speed_mph: b.speed_mph,
            dwell_base: b.dwell_base,
            dwell_per_rider: b.dwell_per_rider,
            chance,
            dt_max: b.dt_max,
        })
    }

    pub fn cost_params(&self) -> Result<CostParams> {
        let c = &self.cost;
        if !(c.bus_cost > 0.0 && c.bus_cost.is_finite() && c.time_cost >= 0.0 && c.time_cost.is_finite()) {
            return Err(Error::invalid("cost", "bus_cost must be positive and time_cost nonnegative"));
        }
        Ok(CostParams { bus_cost: c.bus_cost, time_cost: c.time_cost })
    }

    /// SHA-256 over the canonical JSON form of the resolved values, so
    /// formatting, comments and key order do not change it.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("plain data serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let cfg = RunConfig::from_toml("", &[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.sweep.grid().len(), 11);
    }

    #[test]
    fn overrides_win_and_change_the_hash() {
        let text = "[bus]\ncapacity = 40\n";
        let base = RunConfig::from_toml(text, &[]).unwrap();
        let over = RunConfig::from_toml(text, &["bus.capacity=36".into(), "sweep.taus=[0, 500]".into()]).unwrap();
        assert_eq!(base.bus.capacity, 40);
        assert_eq!(over.bus.capacity, 36);
        assert_eq!(over.sweep.grid(), [0.0, 500.0]);
        assert_ne!(base.hash(), over.hash());
    }

    #[test]
    fn formatting_does_not_change_the_hash() {
        let a = RunConfig::from_toml("[bus]\ncapacity = 40 # seats\n", &[]).unwrap();
        let b = RunConfig::from_toml("bus.capacity=40", &[]).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn rejects_unknown_and_invalid_keys() {
        assert!(RunConfig::from_toml("[bus]\nseats = 3\n", &[]).is_err());
        assert!(RunConfig::from_toml("", &["bus.alpha=0.7".into()]).is_err());
        assert!(RunConfig::from_toml("", &["optout.a=-1".into()]).is_err());
        assert!(RunConfig::from_toml("", &["optout.d_close=0.5".into()]).is_err());
        assert!(RunConfig::from_toml("", &["nonsense".into()]).is_err());
    }

    #[test]
    fn anchors_calibrate_the_model() {
        let sets: Vec<String> = [
            "optout.d_close=0.5",
            "optout.p_high=0.8",
            "optout.tau_high=2000",
            "optout.d_far=2.5",
            "optout.p_low=0.05",
            "optout.tau_low=1000",
            "optout.epsilon0=0.01",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let cfg = RunConfig::from_toml("", &sets).unwrap();
        let m = cfg.optout.model().unwrap();
        assert!((m.probability(0.0, 0.0) - 0.01).abs() < 1e-12);
    }
}
