//! Experiment configuration: JSON schema, sweep axes, and the small
//! coupling-expression language used to tie scenario dimensions together.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::estimators::Method;
use crate::matkern::CMatrix;
use crate::sigmodel::{SignalMode, Subarray, UlaScenario};
use crate::Result;

/// Angle specification: explicit radians or a closely-spaced pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaSpec {
    /// Two sources at `theta1` and `theta1 + alpha / N`.
    CloselySpaced { theta1: f64, alpha: f64 },
}

/// Scenario as serialized in config files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thetas_rad: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thetas_spec: Option<ThetaSpec>,
    /// Row-major K*K complex entries as [re, im] pairs.
    #[serde(rename = "P")]
    pub p: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subarray: Option<Subarray>,
    #[serde(default)]
    pub snr_scale_db: f64,
    #[serde(default)]
    pub signal_mode: SignalMode,
}

/// Sweep axis selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    #[serde(rename = "snr_db")]
    SnrDb,
    #[serde(rename = "N")]
    N,
    #[serde(rename = "subarray_n")]
    SubarrayN,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

/// Dimension couplings, applied after a sweep override. Supported forms:
/// scalar multiples of N written as `a*N` or `a/b*N` (floored to an
/// integer), and `N-n` for the subarray shift.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CouplingConfig {
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub t: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<String>,
}

/// Which eigensolver backs the per-trial subspace extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EigenEngine {
    /// Full decomposition for small arrays, iterative for large ones.
    #[default]
    Auto,
    Full,
    Lanczos,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub methods: Vec<Method>,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<CouplingConfig>,
    #[serde(default)]
    pub eigen_engine: EigenEngine,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub music_grid: Option<usize>,
}

fn default_trials() -> u64 {
    100
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::config("trials must be >= 1"));
        }
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() {
                return Err(Error::config("sweep needs at least one value"));
            }
        }
        // Every sweep point must resolve to a valid scenario.
        for point in self.sweep_points() {
            self.resolve_at(point)?;
        }
        Ok(())
    }

    /// Sweep values, or a single `None` marker for unswept configs.
    pub fn sweep_points(&self) -> Vec<Option<f64>> {
        match &self.sweep {
            Some(sw) => sw.values.iter().map(|&v| Some(v)).collect(),
            None => vec![None],
        }
    }

    /// Resolves the scenario at one sweep point (`None` = base scenario).
    pub fn resolve_at(&self, point: Option<f64>) -> Result<UlaScenario> {
        let axis = self.sweep.as_ref().map(|s| s.axis);
        resolve_scenario(&self.scenario, self.coupling.as_ref(), axis, point)
    }

    /// Sweep value recorded in output rows for one point.
    pub fn point_label(&self, point: Option<f64>, scenario: &UlaScenario) -> f64 {
        match (self.sweep.as_ref().map(|s| s.axis), point) {
            (Some(_), Some(v)) => v,
            _ => 10.0 * scenario.snr_scale.log10(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum CouplingExpr {
    ScaleN(f64),
    NMinusSubN,
}

fn parse_coupling(text: &str) -> Result<CouplingExpr> {
    let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if compact == "N-n" {
        return Ok(CouplingExpr::NMinusSubN);
    }
    let body = compact
        .strip_suffix("*N")
        .ok_or_else(|| Error::config(format!("unsupported coupling expression '{text}'")))?;
    let value = if let Some((num, den)) = body.split_once('/') {
        let num: f64 = num
            .parse()
            .map_err(|_| Error::config(format!("bad coupling numerator in '{text}'")))?;
        let den: f64 = den
            .parse()
            .map_err(|_| Error::config(format!("bad coupling denominator in '{text}'")))?;
        if den == 0.0 {
            return Err(Error::config("coupling denominator is zero"));
        }
        num / den
    } else {
        body.parse()
            .map_err(|_| Error::config(format!("bad coupling factor in '{text}'")))?
    };
    if !(value > 0.0) || !value.is_finite() {
        return Err(Error::config(format!("coupling factor in '{text}' must be positive")));
    }
    Ok(CouplingExpr::ScaleN(value))
}

fn eval_scale(expr: CouplingExpr, n: usize, sub_n: Option<usize>) -> Result<usize> {
    match expr {
        CouplingExpr::ScaleN(a) => {
            let v = (a * n as f64).floor();
            if v < 1.0 {
                return Err(Error::config("coupling resolves to a non-positive size"));
            }
            Ok(v as usize)
        }
        CouplingExpr::NMinusSubN => {
            let sn = sub_n.ok_or_else(|| {
                Error::config("coupling 'N-n' needs the subarray size resolved first")
            })?;
            if sn >= n {
                return Err(Error::config("coupling 'N-n' resolves to a non-positive shift"));
            }
            Ok(n - sn)
        }
    }
}

fn resolve_scenario(
    cfg: &ScenarioConfig,
    coupling: Option<&CouplingConfig>,
    axis: Option<SweepAxis>,
    point: Option<f64>,
) -> Result<UlaScenario> {
    let mut n = cfg.n;
    let mut snr_db = cfg.snr_scale_db;
    let mut sub_n_override: Option<usize> = None;

    if let (Some(axis), Some(v)) = (axis, point) {
        match axis {
            SweepAxis::SnrDb => snr_db = v,
            SweepAxis::N => {
                if v < 1.0 || (v - v.round()).abs() > 1e-9 {
                    return Err(Error::config(format!("sweep value {v} is not a valid N")));
                }
                n = v.round() as usize;
            }
            SweepAxis::SubarrayN => {
                if v < 1.0 || (v - v.round()).abs() > 1e-9 {
                    return Err(Error::config(format!(
                        "sweep value {v} is not a valid subarray size"
                    )));
                }
                sub_n_override = Some(v.round() as usize);
            }
        }
    }

    let empty = CouplingConfig::default();
    let cp = coupling.unwrap_or(&empty);

    let t = match &cp.t {
        Some(expr) => eval_scale(parse_coupling(expr)?, n, None)?,
        None => cfg
            .t
            .ok_or_else(|| Error::config("scenario needs T or a T coupling"))?,
    };

    let base_sub = cfg.subarray;
    let start = base_sub.map(|s| s.start).unwrap_or(1);
    let sub_n = match (sub_n_override, &cp.n) {
        (Some(v), _) => v,
        (None, Some(expr)) => eval_scale(parse_coupling(expr)?, n, None)?,
        (None, None) => {
            base_sub
                .ok_or_else(|| Error::config("scenario needs a subarray or an n coupling"))?
                .n
        }
    };
    let delta = match &cp.delta {
        Some(expr) => eval_scale(parse_coupling(expr)?, n, Some(sub_n))?,
        None => {
            base_sub
                .ok_or_else(|| Error::config("scenario needs a subarray or a delta coupling"))?
                .delta
        }
    };

    let thetas = match (&cfg.thetas_rad, &cfg.thetas_spec) {
        (Some(th), None) => th.clone(),
        (None, Some(ThetaSpec::CloselySpaced { theta1, alpha })) => {
            if cfg.k != 2 {
                return Err(Error::config("closely_spaced angle form needs K = 2"));
            }
            vec![*theta1, *theta1 + *alpha / n as f64]
        }
        (Some(_), Some(_)) => {
            return Err(Error::config("give thetas_rad or thetas_spec, not both"))
        }
        (None, None) => return Err(Error::config("scenario needs thetas_rad or thetas_spec")),
    };

    if cfg.p.len() != cfg.k * cfg.k {
        return Err(Error::config(format!(
            "P needs K*K = {} entries, got {}",
            cfg.k * cfg.k,
            cfg.p.len()
        )));
    }
    let p = CMatrix::from_row_major(
        cfg.k,
        cfg.k,
        cfg.p.iter().map(|&[re, im]| Complex64::new(re, im)).collect(),
    )?;

    let scenario = UlaScenario {
        n,
        t,
        k: cfg.k,
        thetas,
        p,
        subarray: Subarray {
            n: sub_n,
            delta,
            start,
        },
        snr_scale: 10f64.powf(snr_db / 10.0),
        signal_mode: cfg.signal_mode,
    };
    scenario.validate()?;
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_json() -> String {
        r#"{
            "scenario": {
                "N": 80, "T": 160, "K": 2,
                "thetas_rad": [0.0, 0.7853981633974483],
                "P": [[2.0, 0.0], [0.8, 0.0], [0.8, 0.0], [2.0, 0.0]],
                "subarray": {"n": 79, "delta": 1, "start": 1},
                "snr_scale_db": 0.0
            },
            "methods": ["esprit", "gesprit"],
            "trials": 10,
            "master_seed": 42
        }"#
        .to_string()
    }

    #[test]
    fn parses_base_config() {
        let cfg = ExperimentConfig::from_json(&base_json()).unwrap();
        let s = cfg.resolve_at(None).unwrap();
        assert_eq!(s.n, 80);
        assert_eq!(s.t, 160);
        assert_eq!(s.subarray.n, 79);
        assert!((s.snr_scale - 1.0).abs() < 1e-12);
    }

    #[test]
    fn closely_spaced_resolution_uses_n() {
        let json = r#"{
            "scenario": {
                "N": 80, "K": 2,
                "thetas_spec": {"closely_spaced": {"theta1": 0.0, "alpha": 5.026548245743669}},
                "P": [[2.0, 0.0], [0.0, 0.0], [0.0, 0.0], [2.0, 0.0]]
            },
            "methods": ["esprit"],
            "coupling": {"T": "2*N", "n": "2/3*N", "delta": "1/3*N"},
            "sweep": {"axis": "N", "values": [80, 160]}
        }"#;
        let cfg = ExperimentConfig::from_json(json).unwrap();
        let s80 = cfg.resolve_at(Some(80.0)).unwrap();
        assert_eq!((s80.t, s80.subarray.n, s80.subarray.delta), (160, 53, 26));
        assert!((s80.thetas[1] - 0.8 * std::f64::consts::TAU / 80.0).abs() < 1e-12);
        let s160 = cfg.resolve_at(Some(160.0)).unwrap();
        assert_eq!((s160.t, s160.subarray.n, s160.subarray.delta), (320, 106, 53));
        assert!((s160.thetas[1] - 0.8 * std::f64::consts::TAU / 160.0).abs() < 1e-12);
    }

    #[test]
    fn tradeoff_coupling_n_minus_sub() {
        let json = r#"{
            "scenario": {
                "N": 80, "T": 160, "K": 2,
                "thetas_spec": {"closely_spaced": {"theta1": 0.0, "alpha": 5.026548245743669}},
                "P": [[2.0, 0.0], [0.0, 0.0], [0.0, 0.0], [2.0, 0.0]]
            },
            "methods": ["esprit"],
            "coupling": {"delta": "N-n"},
            "sweep": {"axis": "subarray_n", "values": [30, 53, 70]}
        }"#;
        let cfg = ExperimentConfig::from_json(json).unwrap();
        let s = cfg.resolve_at(Some(53.0)).unwrap();
        assert_eq!(s.subarray.n, 53);
        assert_eq!(s.subarray.delta, 27);
        let s = cfg.resolve_at(Some(70.0)).unwrap();
        assert_eq!(s.subarray.delta, 10);
    }

    #[test]
    fn snr_sweep_sets_scale() {
        let mut json: serde_json::Value = serde_json::from_str(&base_json()).unwrap();
        json["sweep"] = serde_json::json!({"axis": "snr_db", "values": [-6.0, 0.0, 6.0]});
        let cfg = ExperimentConfig::from_json(&json.to_string()).unwrap();
        let s = cfg.resolve_at(Some(-6.0)).unwrap();
        assert!((s.snr_scale - 10f64.powf(-0.6)).abs() < 1e-12);
    }

    #[test]
    fn rejects_invalid_sweep_point() {
        let mut json: serde_json::Value = serde_json::from_str(&base_json()).unwrap();
        // subarray n = 79 + delta 1 only fits N >= 80.
        json["sweep"] = serde_json::json!({"axis": "N", "values": [40.0]});
        assert!(ExperimentConfig::from_json(&json.to_string()).is_err());
    }

    #[test]
    fn rejects_bad_coupling_expression() {
        let mut json: serde_json::Value = serde_json::from_str(&base_json()).unwrap();
        json["coupling"] = serde_json::json!({"T": "N^2"});
        assert!(ExperimentConfig::from_json(&json.to_string()).is_err());
    }

    #[test]
    fn rejects_wrong_p_size() {
        let mut json: serde_json::Value = serde_json::from_str(&base_json()).unwrap();
        json["scenario"]["P"] = serde_json::json!([[2.0, 0.0]]);
        assert!(ExperimentConfig::from_json(&json.to_string()).is_err());
    }

    #[test]
    fn config_roundtrips_through_json() {
        let cfg = ExperimentConfig::from_json(&base_json()).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(back.scenario.n, cfg.scenario.n);
        assert_eq!(back.methods, cfg.methods);
    }
}
