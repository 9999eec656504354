//! Run configuration: one TOML file drives every subcommand.
//!
//! Units follow the lab: ns for times, mW for pump power, MHz for rates and
//! bandwidths. Everything is converted to SI once, here.

use std::path::Path;

use hsps::fit::{ParamSpec, Parameters};
use hsps::model::SpdcParams;
use hsps::response::{CoincidenceConfig, DetectorModel, EvalMode};
use hsps::simulate::{SimConfig, DEFAULT_TAG_BUDGET};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

const NS: f64 = 1e-9;
const MHZ: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Base seed; pump power `k` (in list order) simulates with `seed + k`.
    pub seed: u64,
    pub source: Source,
    #[serde(default)]
    pub detector: Detector,
    pub coincidence: Coincidence,
    #[serde(default)]
    pub simulate: Simulate,
    #[serde(default)]
    pub predict: Predict,
    #[serde(default)]
    pub count: Count,
    #[serde(default)]
    pub fit: Fit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Source {
    /// Pair rate per mW of pump (MHz/mW).
    pub rate_per_mw_mhz: f64,
    pub bandwidth_mhz: f64,
    pub pump_mw: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Detector {
    pub jitter_ns: f64,
    pub efficiency: f64,
    pub dead_time_ns: f64,
    pub tag_resolution_ns: f64,
}

impl Default for Detector {
    fn default() -> Self {
        let d = DetectorModel::reference();
        Self {
            jitter_ns: d.jitter_halfwidth / NS,
            efficiency: d.efficiency,
            dead_time_ns: d.dead_time / NS,
            tag_resolution_ns: d.tag_resolution / NS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coincidence {
    pub halfwidth_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Simulate {
    pub duration_s: f64,
    pub splitter_ratio: f64,
    /// Uncorrelated background per channel (MHz).
    pub background_mhz: f64,
    /// Half-range of the delay histograms (ns).
    pub range_ns: f64,
    pub tag_budget: u64,
}

impl Default for Simulate {
    fn default() -> Self {
        Self {
            duration_s: 1.0,
            splitter_ratio: 0.5,
            background_mhz: 0.0,
            range_ns: 12.0,
            tag_budget: DEFAULT_TAG_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Predict {
    pub delay_span_ns: f64,
    pub delay_step_ns: f64,
    pub mode: EvalMode,
    pub power_sweep_mw: Vec<f64>,
    /// Full window widths `2τ_coin` (ns).
    pub window_sweep_ns: Vec<f64>,
}

impl Default for Predict {
    fn default() -> Self {
        Self {
            delay_span_ns: 3.0,
            delay_step_ns: 0.01,
            mode: EvalMode::Delta,
            power_sweep_mw: (1..=20).map(f64::from).collect(),
            window_sweep_ns: (1..=40).map(|k| 0.5 * k as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Count {
    pub stride_ticks: u64,
    /// Delays kept for fitting (ns).
    pub max_delay_ns: f64,
    /// Wall position of the peak/wall ratio (ns).
    pub far_ns: f64,
}

impl Default for Count {
    fn default() -> Self {
        Self {
            stride_ticks: 1,
            max_delay_ns: 3.0,
            far_ns: 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bound {
    pub lower: f64,
    pub upper: f64,
    pub free: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fit {
    pub rate_per_mw_mhz: Bound,
    pub bandwidth_mhz: Bound,
    pub tau_d_ns: Bound,
    /// Also fit the conditional `ḡ_c(τ)` curves.
    pub include_g2c: bool,
    pub refine_starts: usize,
}

impl Default for Fit {
    fn default() -> Self {
        Self {
            rate_per_mw_mhz: Bound {
                lower: 1e-3,
                upper: 1e3,
                free: true,
            },
            bandwidth_mhz: Bound {
                lower: 1e4,
                upper: 1e8,
                free: false,
            },
            tau_d_ns: Bound {
                lower: 0.0,
                upper: 5.0,
                free: true,
            },
            include_g2c: false,
            refine_starts: 4,
        }
    }
}

fn bad(reason: impl Into<String>) -> CliError {
    CliError::config(reason)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every setting before any work starts.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.source.pump_mw.is_empty() {
            return Err(bad("source.pump_mw is empty"));
        }
        for k in 0..self.source.pump_mw.len() {
            self.source_at(k)?;
            self.sim_config(k)?.validate().map_err(CliError::from_config)?;
        }
        self.coincidence()?;
        let s = &self.simulate;
        if !(s.range_ns > 2.0 * self.coincidence.halfwidth_ns) {
            return Err(bad("simulate.range_ns must exceed the full coincidence window"));
        }
        if !(s.background_mhz.is_finite() && s.background_mhz >= 0.0) {
            return Err(bad("simulate.background_mhz must be >= 0"));
        }
        let p = &self.predict;
        if !(p.delay_span_ns > 0.0 && p.delay_step_ns > 0.0 && p.delay_span_ns / p.delay_step_ns <= 1e6) {
            return Err(bad("predict.delay_span_ns and delay_step_ns must be positive with at most 1e6 steps"));
        }
        if p.power_sweep_mw.iter().any(|&x| !(x > 0.0)) || p.window_sweep_ns.iter().any(|&x| !(x > 0.0)) {
            return Err(bad("predict sweeps must hold positive values"));
        }
        if self.count.stride_ticks == 0 || !(self.count.max_delay_ns > 0.0) || !(self.count.far_ns > 0.0) {
            return Err(bad("count.stride_ticks, max_delay_ns and far_ns must be positive"));
        }
        if self.count.far_ns + self.coincidence.halfwidth_ns > s.range_ns {
            return Err(bad("count.far_ns plus the window half-width must fit inside simulate.range_ns"));
        }
        if self.fit.refine_starts == 0 {
            return Err(bad("fit.refine_starts must be >= 1"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, so comments and layout of the
    /// TOML file do not change it.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn source_at(&self, k: usize) -> Result<SpdcParams, CliError> {
        let s = &self.source;
        SpdcParams::from_pump(s.rate_per_mw_mhz * MHZ, s.pump_mw[k], s.bandwidth_mhz * MHZ)
            .map_err(|e| bad(format!("source.pump_mw[{k}]: {e}")))
    }

    pub fn detector(&self) -> Result<DetectorModel, CliError> {
        let d = &self.detector;
        DetectorModel::new(
            d.jitter_ns * NS,
            d.efficiency,
            d.dead_time_ns * NS,
            d.tag_resolution_ns * NS,
        )
        .map_err(CliError::from_config)
    }

    pub fn coincidence(&self) -> Result<CoincidenceConfig, CliError> {
        CoincidenceConfig::new(self.coincidence.halfwidth_ns * NS).map_err(CliError::from_config)
    }

    pub fn seed_at(&self, k: usize) -> u64 {
        self.seed.wrapping_add(k as u64)
    }

    pub fn sim_config(&self, k: usize) -> Result<SimConfig, CliError> {
        let mut c = SimConfig::new(self.source_at(k)?, self.detector()?, self.simulate.duration_s, self.seed_at(k));
        c.splitter_ratio = self.simulate.splitter_ratio;
        c.tag_budget = self.simulate.tag_budget;
        Ok(c)
    }

    pub fn range(&self) -> f64 {
        self.simulate.range_ns * NS
    }

    pub fn halfwidth(&self) -> f64 {
        self.coincidence.halfwidth_ns * NS
    }

    pub fn fit_parameters(&self) -> Parameters {
        let f = &self.fit;
        let spec = |b: Bound, scale: f64, fixed: f64| {
            if b.free {
                ParamSpec::free(b.lower * scale, b.lower * scale, b.upper * scale)
            } else {
                ParamSpec::fixed(fixed)
            }
        };
        Parameters {
            rate_per_mw: spec(f.rate_per_mw_mhz, MHZ, self.source.rate_per_mw_mhz * MHZ),
            bandwidth: spec(f.bandwidth_mhz, MHZ, self.source.bandwidth_mhz * MHZ),
            tau_d: spec(f.tau_d_ns, NS, self.detector.jitter_ns * NS),
        }
    }
}

/// Annotated example configuration, printed by `hsps predict --example-config`.
pub const EXAMPLE: &str = r#"# hsps run configuration
schema_version = 1
seed = 42

[source]
rate_per_mw_mhz = 1.2        # pairs/s per mW, in MHz
bandwidth_mhz = 3.0e6        # down-conversion bandwidth
pump_mw = [2.0, 8.0, 15.0]

[detector]
jitter_ns = 0.35             # uniform jitter half-width
efficiency = 0.4
dead_time_ns = 45.0
tag_resolution_ns = 0.15625

[coincidence]
halfwidth_ns = 0.39

[simulate]
duration_s = 1.0
range_ns = 12.0

[fit]
include_g2c = false
"#;
