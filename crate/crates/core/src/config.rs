//! Run configuration: INI-style input overlaid on the shipped preset, and the
//! resolved JSON sidecar written next to every result file.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::des::{SimTime, PS_PER_SEC, PS_PER_US};
use crate::dwba::{compute_w_max, Scheme, SchemeConfig, Sizing};
use crate::traffic::{Area, FrameSizeMix, Scenario, ScenarioLoadTable};

pub const PRESET_NAME: &str = "tr38801-split6-dublin.preset";
pub const PRESET: &str = include_str!("../presets/tr38801-split6-dublin.preset");
pub const SIDECAR_FORMAT: &str = "mfh-pon-resolved-config";
pub const SIDECAR_VERSION: u32 = 1;

pub const B_FACTOR_RANGE: (f64, f64) = (0.5, 2.0);

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },
}

fn invalid(field: &str, reason: impl Display) -> ConfigError {
    ConfigError::Validation {
        field: field.to_string(),
        reason: reason.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scheme: Scheme,
    pub sizing: Sizing,
    pub prediction_error: f64,
    pub scenario: Scenario,
    pub b_factor: f64,
    #[serde(rename = "sim_duration_ps")]
    pub sim_duration: SimTime,
    #[serde(rename = "warmup_ps")]
    pub warmup: SimTime,
    pub replications: u32,
    pub base_seed: u64,
    pub n_onus: usize,
    pub n_mfh_onus: usize,
    pub n_wavelengths: usize,
    pub line_rate_bps: u64,
    #[serde(rename = "t_max_cycle_ps")]
    pub t_max_cycle: SimTime,
    #[serde(rename = "guard_time_ps")]
    pub guard_time: SimTime,
    #[serde(rename = "propagation_ps_per_km")]
    pub propagation_per_km: SimTime,
    pub report_bytes: u64,
    pub distances_m: Vec<u64>,
    pub mfh_peak_bps: Vec<u64>,
    pub mfh_areas: Vec<Area>,
    pub offpeak_residential_18h: f64,
    pub offpeak_commercial_24h: f64,
    pub custom_load_bps: Vec<u64>,
    #[serde(rename = "burst_period_ps")]
    pub burst_period: SimTime,
    pub ingress_rate_bps: u64,
    pub conventional_load_fraction: f64,
    pub frame_mix: FrameSizeMix,
    pub sweep_b_factors: Vec<f64>,
    pub sweep_schemes: Vec<Scheme>,
}

/// Quantities computed from a [`RunConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub capacity_bps: u64,
    pub mfh_guaranteed_bps: Vec<u64>,
    pub mfh_load_bps: Vec<u64>,
    pub conventional_guaranteed_bps: u64,
    pub conventional_load_bps: u64,
    /// Per ONU, MFH first.
    pub w_max_bytes: Vec<u64>,
    #[serde(rename = "propagation_ps")]
    pub propagation: Vec<SimTime>,
    /// Warm-up actually applied (clamped to a fifth of the run).
    #[serde(rename = "effective_warmup_ps")]
    pub effective_warmup: SimTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format: String,
    pub version: u32,
    pub preset: String,
    pub config: RunConfig,
    pub derived: Derived,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::from_ini_str("").expect("shipped preset is valid")
    }
}

/// Parses a decimal string into an integer count of `10^-scale` units,
/// rejecting values that would need rounding.
fn parse_scaled(text: &str, scale: u32) -> Result<u64, String> {
    let t = text.trim();
    let (int, frac) = t.split_once('.').unwrap_or((t, ""));
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !digits(int) || !(frac.is_empty() || digits(frac)) {
        return Err(format!("`{t}` is not a non-negative decimal"));
    }
    let frac = frac.trim_end_matches('0');
    if frac.len() > scale as usize {
        return Err(format!("`{t}` has more precision than the model resolves"));
    }
    let pow = 10u128.pow(scale);
    let i: u128 = int.parse().map_err(|e| format!("`{t}`: {e}"))?;
    let f: u128 = if frac.is_empty() {
        0
    } else {
        frac.parse::<u128>().map_err(|e| format!("`{t}`: {e}"))? * 10u128.pow(scale - frac.len() as u32)
    };
    u64::try_from(i * pow + f).map_err(|_| format!("`{t}` is too large"))
}

/// Flat `section.key -> value` view of an INI document.
struct Fields(BTreeMap<String, String>);

impl Fields {
    fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let ini = Ini::load_from_str(text).map_err(|e| ConfigError::Parse(format!("{origin}: {e}")))?;
        let mut map = BTreeMap::new();
        for (section, props) in ini.iter() {
            for (key, value) in props.iter() {
                let Some(section) = section else {
                    return Err(invalid(key, "keys must sit inside a [section]"));
                };
                map.insert(format!("{section}.{key}"), value.trim().to_string());
            }
        }
        Ok(Fields(map))
    }

    /// Overlays `other`; every key must already exist in `self`.
    fn overlay(&mut self, other: Fields) -> Result<(), ConfigError> {
        for (k, v) in other.0 {
            match self.0.get_mut(&k) {
                Some(slot) => *slot = v,
                None => return Err(invalid(&k, "unknown key")),
            }
        }
        Ok(())
    }

    fn raw(&self, key: &str) -> Result<&str, ConfigError> {
        self.0
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| invalid(key, "missing"))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: Display,
    {
        self.raw(key)?.parse::<T>().map_err(|e| invalid(key, e))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, ConfigError>
    where
        T::Err: Display,
    {
        self.raw(key)?
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<T>().map_err(|e| invalid(key, e)))
            .collect()
    }

    fn scaled(&self, key: &str, scale: u32) -> Result<u64, ConfigError> {
        parse_scaled(self.raw(key)?, scale).map_err(|e| invalid(key, e))
    }

    fn scaled_list(&self, key: &str, scale: u32) -> Result<Vec<u64>, ConfigError> {
        self.raw(key)?
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| parse_scaled(s, scale).map_err(|e| invalid(key, e)))
            .collect()
    }

    fn time(&self, key: &str, scale: u32) -> Result<SimTime, ConfigError> {
        self.scaled(key, scale).map(SimTime::from_ps)
    }
}

// picosecond scale exponents
const SECONDS: u32 = 12;
const MICROS: u32 = 6;

fn build(f: &Fields) -> Result<RunConfig, ConfigError> {
    let cfg = RunConfig {
        scheme: f.get("run.scheme")?,
        sizing: f.get("run.sizing")?,
        prediction_error: f.get("run.prediction_error")?,
        scenario: f.get("run.scenario")?,
        b_factor: f.get("run.b_factor")?,
        sim_duration: f.time("run.sim_duration_s", SECONDS)?,
        warmup: f.time("run.warmup_s", SECONDS)?,
        replications: f.get("run.replications")?,
        base_seed: f.get("run.base_seed")?,
        n_onus: f.get("pon.n_onus")?,
        n_mfh_onus: f.get("pon.n_mfh_onus")?,
        n_wavelengths: f.get("pon.n_wavelengths")?,
        line_rate_bps: f.scaled("pon.line_rate_gbps", 9)?,
        t_max_cycle: f.time("pon.t_max_cycle_us", MICROS)?,
        guard_time: f.time("pon.guard_time_us", MICROS)?,
        propagation_per_km: f.time("pon.propagation_us_per_km", MICROS)?,
        report_bytes: f.get("pon.report_bytes")?,
        distances_m: f.scaled_list("pon.distances_km", 3)?,
        mfh_peak_bps: f.scaled_list("mfh.peak_mbps", 6)?,
        mfh_areas: f.list("mfh.areas")?,
        offpeak_residential_18h: f.get("mfh.offpeak_residential_18h")?,
        offpeak_commercial_24h: f.get("mfh.offpeak_commercial_24h")?,
        custom_load_bps: f.scaled_list("mfh.custom_load_mbps", 6)?,
        burst_period: f.time("mfh.burst_period_us", MICROS)?,
        ingress_rate_bps: f.scaled("mfh.ingress_rate_gbps", 9)?,
        conventional_load_fraction: f.get("conventional.load_fraction")?,
        frame_mix: FrameSizeMix {
            sizes: f.list("conventional.frame_sizes")?,
            weights: f.list("conventional.frame_weights")?,
        },
        sweep_b_factors: f.list("sweep.b_factors")?,
        sweep_schemes: f.list("sweep.schemes")?,
    };
    Ok(cfg)
}

fn check_b_factor(field: &str, b: f64) -> Result<(), ConfigError> {
    let (lo, hi) = B_FACTOR_RANGE;
    if !(lo..=hi).contains(&b) {
        return Err(invalid(field, format!("{b} outside [{lo}, {hi}]")));
    }
    Ok(())
}

fn check_fraction(field: &str, v: f64) -> Result<(), ConfigError> {
    if !(0.0..=1.0).contains(&v) {
        return Err(invalid(field, format!("{v} outside [0, 1]")));
    }
    Ok(())
}

impl RunConfig {
    /// Preset defaults overlaid with `text`; validated.
    pub fn from_ini_str(text: &str) -> Result<Self, ConfigError> {
        Self::from_ini_with_overrides(text, &[])
    }

    /// Like [`RunConfig::from_ini_str`], then applies `section.key = value`
    /// overrides on top.
    pub fn from_ini_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut fields = Fields::parse(PRESET, PRESET_NAME)?;
        fields.overlay(Fields::parse(text, "config")?)?;
        fields.overlay(Fields(overrides.iter().cloned().collect()))?;
        let cfg = build(&fields)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a resolved-config sidecar.
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let sidecar: Sidecar = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if sidecar.format != SIDECAR_FORMAT {
            return Err(invalid("format", format!("expected `{SIDECAR_FORMAT}`")));
        }
        if sidecar.version != SIDECAR_VERSION {
            return Err(invalid("version", format!("unsupported version {}", sidecar.version)));
        }
        sidecar.config.validate()?;
        Ok(sidecar.config)
    }

    pub fn sidecar(&self) -> Result<Sidecar, ConfigError> {
        Ok(Sidecar {
            format: SIDECAR_FORMAT.to_string(),
            version: SIDECAR_VERSION,
            preset: PRESET_NAME.to_string(),
            config: self.clone(),
            derived: self.derive()?,
        })
    }

    pub fn to_json(&self) -> Result<String, ConfigError> {
        serde_json::to_string_pretty(&self.sidecar()?).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn scheme_config(&self) -> SchemeConfig {
        let mut sc = SchemeConfig::for_scheme(self.scheme);
        sc.sizing = self.sizing;
        sc.prediction_error = self.prediction_error;
        sc
    }

    pub fn n_conventional(&self) -> usize {
        self.n_onus - self.n_mfh_onus
    }

    /// Desk-scale defaults scaled up to the full protocol: 60 s x 10.
    pub fn full_scale(&mut self) {
        self.sim_duration = SimTime::from_secs_f64(60.0);
        self.replications = 10;
    }

    pub fn load_table(&self) -> ScenarioLoadTable {
        ScenarioLoadTable {
            peak_bps: self.mfh_peak_bps.clone(),
            areas: self.mfh_areas.clone(),
            offpeak_residential_18h: self.offpeak_residential_18h,
            offpeak_commercial_24h: self.offpeak_commercial_24h,
        }
    }

    /// Field-level checks; capacity checks live in [`RunConfig::derive`].
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.scheme_config()
            .validate()
            .map_err(|e| invalid("run.scheme", e))?;
        check_b_factor("run.b_factor", self.b_factor)?;
        if self.sim_duration == SimTime::ZERO {
            return Err(invalid("run.sim_duration_s", "must be positive"));
        }
        if self.replications == 0 {
            return Err(invalid("run.replications", "must be at least 1"));
        }
        if self.n_onus == 0 {
            return Err(invalid("pon.n_onus", "must be at least 1"));
        }
        if self.n_mfh_onus > self.n_onus {
            return Err(invalid("pon.n_mfh_onus", "exceeds n_onus"));
        }
        if self.n_wavelengths == 0 {
            return Err(invalid("pon.n_wavelengths", "must be at least 1"));
        }
        if self.line_rate_bps == 0 {
            return Err(invalid("pon.line_rate_gbps", "must be positive"));
        }
        if self.t_max_cycle == SimTime::ZERO {
            return Err(invalid("pon.t_max_cycle_us", "must be positive"));
        }
        if self.distances_m.len() != self.n_onus {
            return Err(invalid(
                "pon.distances_km",
                format!("{} entries for {} ONUs", self.distances_m.len(), self.n_onus),
            ));
        }
        if self.mfh_peak_bps.len() != self.n_mfh_onus {
            return Err(invalid(
                "mfh.peak_mbps",
                format!("{} entries for {} MFH ONUs", self.mfh_peak_bps.len(), self.n_mfh_onus),
            ));
        }
        if self.mfh_areas.len() != self.n_mfh_onus {
            return Err(invalid("mfh.areas", "one area per MFH ONU"));
        }
        if self.scenario == Scenario::Custom && self.custom_load_bps.len() != self.n_mfh_onus {
            return Err(invalid("mfh.custom_load_mbps", "one load per MFH ONU for scenario custom"));
        }
        check_fraction("mfh.offpeak_residential_18h", self.offpeak_residential_18h)?;
        check_fraction("mfh.offpeak_commercial_24h", self.offpeak_commercial_24h)?;
        if self.burst_period == SimTime::ZERO {
            return Err(invalid("mfh.burst_period_us", "must be positive"));
        }
        if self.ingress_rate_bps == 0 {
            return Err(invalid("mfh.ingress_rate_gbps", "must be positive"));
        }
        if let Some(p) = self.mfh_peak_bps.iter().chain(&self.custom_load_bps).find(|p| **p >= self.ingress_rate_bps) {
            return Err(invalid("mfh.peak_mbps", format!("{p} bit/s saturates the ingress link")));
        }
        if !(self.conventional_load_fraction >= 0.0 && self.conventional_load_fraction.is_finite()) {
            return Err(invalid("conventional.load_fraction", "must be finite and non-negative"));
        }
        self.frame_mix
            .validate()
            .map_err(|e| invalid("conventional.frame_sizes", e))?;
        for b in &self.sweep_b_factors {
            check_b_factor("sweep.b_factors", *b)?;
        }
        if self.sweep_schemes.is_empty() {
            return Err(invalid("sweep.schemes", "at least one scheme"));
        }
        Ok(())
    }

    /// SLA and load derivation; fails when the MFH guarantees do not fit.
    pub fn derive(&self) -> Result<Derived, ConfigError> {
        self.validate()?;
        let capacity_bps = self.line_rate_bps * self.n_wavelengths as u64;
        let mfh_guaranteed_bps: Vec<u64> = self
            .mfh_peak_bps
            .iter()
            .map(|p| (self.b_factor * *p as f64).round() as u64)
            .collect();
        let mfh_total: u64 = mfh_guaranteed_bps.iter().sum();
        if mfh_total > capacity_bps {
            return Err(invalid(
                "run.b_factor",
                format!("MFH guarantees {mfh_total} bit/s exceed PON capacity {capacity_bps} bit/s"),
            ));
        }
        let mfh_load_bps = match self.scenario {
            Scenario::Custom => self.custom_load_bps.clone(),
            s => self.load_table().loads(s),
        };
        let n_conv = self.n_conventional() as u64;
        let conventional_guaranteed_bps = (capacity_bps - mfh_total).checked_div(n_conv).unwrap_or(0);
        let conventional_load_bps = (self.conventional_load_fraction * conventional_guaranteed_bps as f64).round() as u64;
        let mut w_max_bytes = Vec::with_capacity(self.n_onus);
        for (i, b) in mfh_guaranteed_bps
            .iter()
            .copied()
            .chain(std::iter::repeat_n(conventional_guaranteed_bps, self.n_conventional()))
            .enumerate()
        {
            let w = compute_w_max(b, self.t_max_cycle).map_err(|e| invalid("run.b_factor", e))?;
            if w == 0 {
                let field = if i < self.n_mfh_onus { "mfh.peak_mbps" } else { "pon.n_onus" };
                return Err(invalid(field, format!("ONU {i} would get a zero per-cycle window")));
            }
            w_max_bytes.push(w);
        }
        let propagation = self
            .distances_m
            .iter()
            .map(|m| SimTime::from_ps((*m as u128 * self.propagation_per_km.as_ps() as u128 / 1000) as u64))
            .collect();
        let effective_warmup = self
            .warmup
            .min(SimTime::from_ps(self.sim_duration.as_ps() / 5));
        Ok(Derived {
            capacity_bps,
            mfh_guaranteed_bps,
            mfh_load_bps,
            conventional_guaranteed_bps,
            conventional_load_bps,
            w_max_bytes,
            propagation,
            effective_warmup,
        })
    }
}

/// Loads an INI config (overlaid on the preset) or a JSON sidecar, chosen
/// by the `.json` extension.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    load_config_with(path, &[])
}

/// [`load_config`] plus `section.key` overrides (INI input only; a sidecar
/// is reproduced as written).
pub fn load_config_with(path: &Path, overrides: &[(String, String)]) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        if !overrides.is_empty() {
            return Err(invalid("config", "a resolved JSON config takes no overrides"));
        }
        RunConfig::from_json_str(&text)
    } else {
        RunConfig::from_ini_with_overrides(&text, overrides)
    }
}

pub fn seconds(t: SimTime) -> f64 {
    t.as_ps() as f64 / PS_PER_SEC as f64
}

pub fn micros(t: SimTime) -> f64 {
    t.as_ps() as f64 / PS_PER_US as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_decimal_parsing() {
        assert_eq!(parse_scaled("0.624", 6), Ok(624_000));
        assert_eq!(parse_scaled("250", 6), Ok(250_000_000));
        assert_eq!(parse_scaled("4170", 6), Ok(4_170_000_000));
        assert_eq!(parse_scaled("1.50", 1), Ok(15));
        assert!(parse_scaled("0.0000001", 6).is_err());
        assert!(parse_scaled("-1", 6).is_err());
        assert!(parse_scaled("1e3", 6).is_err());
        assert!(parse_scaled(".5", 6).is_err());
    }

    #[test]
    fn empty_file_gives_preset() {
        let c = RunConfig::from_ini_str("").unwrap();
        assert_eq!(c.n_onus, 32);
        assert_eq!(c.n_mfh_onus, 6);
        assert_eq!(c.n_wavelengths, 2);
        assert_eq!(c.line_rate_bps, 25_000_000_000);
        assert_eq!(c.t_max_cycle, SimTime::from_us(250));
        assert_eq!(c.guard_time, SimTime::from_ps(624_000));
        assert_eq!(c.propagation_per_km, SimTime::from_us(5));
        assert_eq!(c.burst_period, SimTime::from_us(250));
        assert_eq!(c.ingress_rate_bps, 100_000_000_000);
        assert_eq!(c.conventional_load_fraction, 0.85);
        assert_eq!(c.sim_duration, SimTime::from_secs_f64(5.0));
        assert_eq!(c.replications, 3);
        assert_eq!(
            c.mfh_peak_bps,
            vec![4_170_000_000, 4_445_000_000, 3_927_000_000, 4_287_000_000, 4_041_000_000, 4_440_000_000]
        );
        assert_eq!(c.sweep_b_factors.len(), 9);
        assert_eq!(c.sweep_schemes.len(), 5);
        assert!(c.distances_m.iter().all(|d| *d <= 5_000));
    }

    #[test]
    fn b_factor_override_reaches_sla() {
        let c = RunConfig::from_ini_str("[run]\nb_factor = 1.05\n").unwrap();
        let d = c.derive().unwrap();
        assert_eq!(d.mfh_guaranteed_bps[0], 4_378_500_000);
        assert_eq!(d.w_max_bytes[0], 136_828);
    }

    #[test]
    fn oversubscribed_mfh_rejected() {
        let c = RunConfig::from_ini_str("[run]\nb_factor = 2.0\n").unwrap();
        let err = c.derive().unwrap_err();
        assert!(err.to_string().contains("run.b_factor"), "{err}");
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::from_ini_str("[pon]\nn_onu = 4\n").unwrap_err();
        assert!(err.to_string().contains("pon.n_onu"), "{err}");
    }

    #[test]
    fn bad_values_are_named() {
        for (text, field) in [
            ("[run]\nb_factor = 0.2\n", "run.b_factor"),
            ("[run]\nsim_duration_s = 0\n", "run.sim_duration_s"),
            ("[pon]\nn_mfh_onus = 40\n", "pon.n_mfh_onus"),
            ("[run]\nscheme = round-robin\n", "run.scheme"),
            ("[pon]\nguard_time_us = 0.6245555555\n", "pon.guard_time_us"),
        ] {
            let err = RunConfig::from_ini_str(text).unwrap_err();
            assert!(err.to_string().contains(field), "{text}: {err}");
        }
    }

    #[test]
    fn derived_loads_24h() {
        let d = RunConfig::default().derive().unwrap();
        assert_eq!(d.capacity_bps, 50_000_000_000);
        assert_eq!(d.mfh_load_bps[0], 4_170_000_000);
        assert_eq!(d.mfh_load_bps[3], 347_247_000);
        // (50e9 - 25 310e6) / 26
        assert_eq!(d.conventional_guaranteed_bps, 949_615_384);
        assert_eq!(d.conventional_load_bps, 807_173_076);
        assert_eq!(d.propagation[0], SimTime::from_us(6));
        assert_eq!(d.effective_warmup, SimTime::from_secs_f64(1.0));
    }

    #[test]
    fn json_round_trip() {
        let c = RunConfig::from_ini_str("[run]\nb_factor = 1.15\nprediction_error = 0.1\n").unwrap();
        let back = RunConfig::from_json_str(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
