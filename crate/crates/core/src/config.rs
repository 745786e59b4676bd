//! Experiment configuration: TOML with one table per namespace.
//!
//! Every key has a default, so an empty file reproduces the reference
//! setup: 7 cells of radius 500 m, 23 dBm transmit power, −174 dBm/Hz noise
//! over 10 MHz, 10 ms slots, `β_k = 1`, equal `γ_k`, 20 topologies of 100
//! slots. Single keys can be overridden as `section.key=value`.
//!
//! ```toml
//! [system]
//! tx_power = "23dBm"
//! noise_psd = "-174dBm/Hz"
//!
//! [sweep]
//! arrival_mbps = [20, 25, 30, 35]
//! ```

use std::fmt;
use std::path::Path;

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};

use crate::allocator::AllocatorConfig;
use crate::error::{Error, Result};
use crate::oracle::OracleGrids;
use crate::params::{dbm_to_watts, watts_to_dbm, SystemParams};
use crate::sim::{EpisodeConfig, Geometry, Scheme};

/// A power level in dBm. Reads `"23dBm"`, `"-7dBW"`, `"200mW"`, `"0.2W"` or
/// a bare number taken as dBm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerDbm(pub f64);

/// A power spectral density in dBm/Hz. Reads `"-174dBm/Hz"`, `"4e-21W/Hz"`
/// or a bare number taken as dBm/Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdDbmPerHz(pub f64);

fn split_unit(s: &str) -> (&str, &str) {
    let s = s.trim();
    let at = s
        .char_indices()
        .find(|&(i, c)| c.is_ascii_alphabetic() && !is_exponent(s, i))
        .map_or(s.len(), |(i, _)| i);
    (s[..at].trim(), s[at..].trim())
}

fn is_exponent(s: &str, i: usize) -> bool {
    let b = s.as_bytes();
    matches!(b[i], b'e' | b'E')
        && i > 0
        && b[i - 1].is_ascii_digit()
        && b.get(i + 1).is_some_and(|c| c.is_ascii_digit() || *c == b'-' || *c == b'+')
}

fn parse_number(s: &str, what: &str) -> std::result::Result<f64, String> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("cannot read `{s}` as a {what}"))
}

pub fn parse_power_dbm(s: &str) -> std::result::Result<f64, String> {
    let (num, unit) = split_unit(s);
    let v = parse_number(num, "power")?;
    let positive = |w: f64| {
        if w > 0.0 {
            Ok(watts_to_dbm(w))
        } else {
            Err(format!("power `{s}` must be > 0"))
        }
    };
    match unit.to_ascii_lowercase().as_str() {
        "" | "dbm" => Ok(v),
        "dbw" => Ok(v + 30.0),
        "w" => positive(v),
        "mw" => positive(v * 1e-3),
        _ => Err(format!("unknown power unit `{unit}` (dBm, dBW, W, mW)")),
    }
}

pub fn parse_psd_dbm_per_hz(s: &str) -> std::result::Result<f64, String> {
    let (num, unit) = split_unit(s);
    let v = parse_number(num, "spectral density")?;
    match unit.to_ascii_lowercase().replace(' ', "").as_str() {
        "" | "dbm/hz" => Ok(v),
        "dbw/hz" => Ok(v + 30.0),
        "w/hz" if v > 0.0 => Ok(watts_to_dbm(v)),
        "w/hz" => Err(format!("spectral density `{s}` must be > 0")),
        _ => Err(format!("unknown spectral density unit `{unit}` (dBm/Hz, dBW/Hz, W/Hz)")),
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NumberOrText {
    Number(f64),
    Text(String),
}

impl<'de> Deserialize<'de> for PowerDbm {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match NumberOrText::deserialize(d)? {
            NumberOrText::Number(v) => Ok(PowerDbm(v)),
            NumberOrText::Text(s) => parse_power_dbm(&s).map(PowerDbm).map_err(de::Error::custom),
        }
    }
}

impl Serialize for PowerDbm {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl fmt::Display for PowerDbm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}dBm", self.0)
    }
}

impl<'de> Deserialize<'de> for PsdDbmPerHz {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match NumberOrText::deserialize(d)? {
            NumberOrText::Number(v) => Ok(PsdDbmPerHz(v)),
            NumberOrText::Text(s) => parse_psd_dbm_per_hz(&s).map(PsdDbmPerHz).map_err(de::Error::custom),
        }
    }
}

impl Serialize for PsdDbmPerHz {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl fmt::Display for PsdDbmPerHz {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}dBm/Hz", self.0)
    }
}

/// Scale of the linear powers handed to the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScale {
    /// Powers relative to the noise power, so `N0 = 1`.
    Unit,
    /// Powers in Watts, `N0` being the noise power over the bandwidth.
    Watts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub num_cells: usize,
    pub cell_radius_m: f64,
    pub cross_scale: f64,
    pub tx_power: PowerDbm,
    pub noise_psd: PsdDbmPerHz,
    pub bandwidth_hz: f64,
    pub slot_s: f64,
    /// Delay weight shared by every flow.
    pub beta: f64,
    /// Base capacity price shared by every flow, before budget calibration.
    pub gamma: f64,
    pub noise_scale: NoiseScale,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            num_cells: 7,
            cell_radius_m: 500.0,
            cross_scale: 1.0,
            tx_power: PowerDbm(23.0),
            noise_psd: PsdDbmPerHz(-174.0),
            bandwidth_hz: 10e6,
            slot_s: 0.01,
            beta: 1.0,
            gamma: 0.01,
            noise_scale: NoiseScale::Unit,
        }
    }
}

impl SystemConfig {
    pub fn tx_power_w(&self) -> f64 {
        dbm_to_watts(self.tx_power.0)
    }

    /// Noise power over the whole bandwidth.
    pub fn noise_dbm(&self) -> f64 {
        self.noise_psd.0 + 10.0 * self.bandwidth_hz.log10()
    }

    pub fn noise_w(&self) -> f64 {
        dbm_to_watts(self.noise_dbm())
    }

    pub fn geometry(&self) -> Geometry {
        Geometry {
            num_cells: self.num_cells,
            cell_radius_m: self.cell_radius_m,
            cross_scale: self.cross_scale,
        }
    }

    /// Model parameters with every `λ_k` at zero; episodes fill them in.
    pub fn system_params(&self) -> Result<SystemParams> {
        let k = self.num_cells;
        let p = SystemParams::from_physical(
            self.tx_power_w(),
            self.noise_w(),
            self.bandwidth_hz,
            self.slot_s,
            vec![self.beta; k],
            vec![self.gamma; k],
            &vec![0.0; k],
        )?;
        Ok(match self.noise_scale {
            NoiseScale::Unit => p,
            NoiseScale::Watts => SystemParams {
                power: self.tx_power_w(),
                noise: self.noise_w(),
                ..p
            },
        })
    }

    fn validate(&self) -> Result<()> {
        if self.num_cells == 0 {
            return Err(Error::config("system.num_cells", "must be >= 1"));
        }
        positive("system.cell_radius_m", self.cell_radius_m)?;
        if !(self.cross_scale >= 0.0 && self.cross_scale.is_finite()) {
            return Err(Error::config("system.cross_scale", "must be finite and >= 0"));
        }
        finite("system.tx_power", self.tx_power.0)?;
        finite("system.noise_psd", self.noise_psd.0)?;
        positive("system.bandwidth_hz", self.bandwidth_hz)?;
        positive("system.slot_s", self.slot_s)?;
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::config("system.beta", "must be finite and >= 0"));
        }
        positive("system.gamma", self.gamma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Points of the arrival-rate sweep, `λ̄` in Mbit/s.
    pub arrival_mbps: Vec<f64>,
    /// Total capacity budget held during the arrival-rate sweep.
    pub budget_mbps: f64,
    /// Points of the capacity sweep, total budget in Mbit/s.
    pub capacity_mbps: Vec<f64>,
    /// `λ̄` held during the capacity sweep.
    pub fixed_arrival_mbps: f64,
    pub schemes: Vec<Scheme>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            arrival_mbps: vec![20.0, 25.0, 30.0, 35.0],
            budget_mbps: 350.0,
            capacity_mbps: vec![250.0, 300.0, 350.0, 400.0, 450.0],
            fixed_arrival_mbps: 30.0,
            schemes: Scheme::ALL.to_vec(),
        }
    }
}

impl SweepConfig {
    fn validate(&self) -> Result<()> {
        increasing("sweep.arrival_mbps", &self.arrival_mbps, 0.0)?;
        increasing("sweep.capacity_mbps", &self.capacity_mbps, f64::MIN_POSITIVE)?;
        positive("sweep.budget_mbps", self.budget_mbps)?;
        if !(self.fixed_arrival_mbps >= 0.0 && self.fixed_arrival_mbps.is_finite()) {
            return Err(Error::config("sweep.fixed_arrival_mbps", "must be finite and >= 0"));
        }
        if self.schemes.is_empty() {
            return Err(Error::config("sweep.schemes", "need at least one scheme"));
        }
        for (i, s) in self.schemes.iter().enumerate() {
            if self.schemes[..i].contains(s) {
                return Err(Error::config("sweep.schemes", format!("`{s}` listed twice")));
            }
        }
        Ok(())
    }
}

/// Settings of the one- and two-flow ground-truth comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    /// Average SNR of every direct link.
    pub snr_db: f64,
    /// `λ_k` as a fraction of the direct link's ergodic capacity.
    pub load: f64,
    pub gamma: f64,
    pub beta: f64,
    /// Cross gain relative to the direct gain at cross scale 1.
    pub cross_ratio: f64,
    pub cross_scales: Vec<f64>,
    pub tolerance: f64,
    pub single_flow_grids: OracleGrids,
    pub two_flow_grids: OracleGrids,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            snr_db: 10.0,
            load: 0.9,
            gamma: 0.005,
            beta: 1.0,
            cross_ratio: 0.3,
            cross_scales: vec![0.3, 0.1, 0.03],
            tolerance: 1e-7,
            single_flow_grids: OracleGrids::single_flow(),
            two_flow_grids: OracleGrids::two_flows(),
        }
    }
}

impl OracleConfig {
    fn validate(&self) -> Result<()> {
        finite("oracle.snr_db", self.snr_db)?;
        if !(self.load > 0.0 && self.load < 1.0) {
            return Err(Error::config("oracle.load", "must lie in (0, 1)"));
        }
        positive("oracle.gamma", self.gamma)?;
        positive("oracle.beta", self.beta)?;
        if !(self.cross_ratio >= 0.0 && self.cross_ratio.is_finite()) {
            return Err(Error::config("oracle.cross_ratio", "must be finite and >= 0"));
        }
        if self.cross_scales.is_empty() || self.cross_scales.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return Err(Error::config("oracle.cross_scales", "need at least one finite value >= 0"));
        }
        if self.cross_scales.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::config("oracle.cross_scales", "must be strictly decreasing"));
        }
        positive("oracle.tolerance", self.tolerance)?;
        self.single_flow_grids
            .validate(1)
            .map_err(|e| Error::config("oracle.single_flow_grids", e.to_string()))?;
        self.two_flow_grids
            .validate(2)
            .map_err(|e| Error::config("oracle.two_flow_grids", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    /// Also write per-slot traces in `run` mode.
    pub trace: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: "results".into(),
            trace: false,
        }
    }
}

/// Fully resolved configuration; echoed verbatim into every output.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub episode: EpisodeConfig,
    pub allocator: AllocatorConfig,
    pub sweep: SweepConfig,
    pub oracle: OracleConfig,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.episode.validate()?;
        self.allocator.validate()?;
        self.sweep.validate()?;
        self.oracle.validate()
    }

    /// Parses TOML text, applies `key=value` overrides in order and validates.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::config("config", e.message()))?;
        let mut table = toml::Table::try_from(Self::default()).expect("defaults serialize");
        merge(&mut table, user);
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let field = e.path().to_string();
            Error::config(field, e.into_inner().message())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// [`from_toml_str`](Self::from_toml_str) on a file, or on an empty
    /// document when `path` is `None`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Overlays `over` on `base`, recursing into tables present in both.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Sets `a.b.c = value` in `table`; `value` is read as a TOML value and
/// falls back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(assignment, "override must look like section.key=value"))?;
    let key = key.trim();
    let path: Vec<&str> = key.split('.').map(str::trim).collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::config(key, "empty key segment"));
    }
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let (last, parents) = path.split_last().expect("nonempty path");
    let mut cur = table;
    for (i, seg) in parents.iter().enumerate() {
        let entry = cur.entry(seg.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(path[..=i].join("."), "is not a table"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn finite(field: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, "must be finite"))
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be finite and > 0, got {v}")))
    }
}

fn increasing(field: &str, values: &[f64], min: f64) -> Result<()> {
    if values.is_empty() {
        return Err(Error::config(field, "need at least one value"));
    }
    if values.iter().any(|v| !(v.is_finite() && *v >= min)) {
        return Err(Error::config(field, format!("values must be finite and >= {min}")));
    }
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config(field, "must be strictly increasing"));
    }
    Ok(())
}
