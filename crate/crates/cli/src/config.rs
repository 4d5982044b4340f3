//! Configuration documents: a TOML file with `[sim]`, `[fsm]`, `[power]`,
//! `[traffic.ds]`, `[traffic.us]`, `[analysis]`, and an optional `[sweep]`
//! table. Every key defaults to the stock 32-ONU setup, so an empty document
//! (or none at all) is valid; unknown keys are rejected by name. Command
//! line `--set key=value` overrides land in the parsed document before type
//! checking, so a typo in an override fails exactly like a typo in the file.

use std::fmt;
use std::path::Path;

use ponsim_core::analysis::PkNumerator;
use ponsim_core::fsm::FsmConfig;
use ponsim_core::power::PowerProfile;
use ponsim_core::sim::{apply_axis, SimConfig, SweepAxis};
use ponsim_core::traffic::{TrafficConfig, TrafficModel};
use serde::{Deserialize, Deserializer};

/// A number that may be written as a TOML integer or float.
#[derive(Deserialize)]
#[serde(untagged)]
enum Num {
    I(i64),
    F(f64),
}

impl Num {
    fn get(&self) -> f64 {
        match *self {
            Num::I(i) => i as f64,
            Num::F(f) => f,
        }
    }
}

fn lenient_f64<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Num::deserialize(d)?.get())
}

fn lenient_f64_opt<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
    Ok(Option::<Num>::deserialize(d)?.map(|n| n.get()))
}

fn lenient_vec<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
    Ok(Vec::<Num>::deserialize(d)?.iter().map(Num::get).collect())
}

fn lenient_arr3<'de, D: Deserializer<'de>>(d: D) -> Result<[f64; 3], D::Error> {
    let v = Vec::<Num>::deserialize(d)?;
    if v.len() != 3 {
        return Err(serde::de::Error::custom(format!("expected 3 entries, got {}", v.len())));
    }
    Ok([v[0].get(), v[1].get(), v[2].get()])
}

fn lenient_mat3<'de, D: Deserializer<'de>>(d: D) -> Result<[[f64; 3]; 3], D::Error> {
    let rows = Vec::<Vec<Num>>::deserialize(d)?;
    if rows.len() != 3 || rows.iter().any(|r| r.len() != 3) {
        return Err(serde::de::Error::custom("expected a 3x3 table of numbers"));
    }
    let mut m = [[0.0; 3]; 3];
    for (i, row) in rows.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            m[i][j] = x.get();
        }
    }
    Ok(m)
}

/// `[sim]`: tree geometry, timing, horizons, and policy switches.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub n_onus: usize,
    #[serde(deserialize_with = "lenient_f64")]
    pub ds_rate_bps: f64,
    #[serde(deserialize_with = "lenient_f64")]
    pub us_rate_bps: f64,
    #[serde(deserialize_with = "lenient_f64")]
    pub cycle_s: f64,
    #[serde(deserialize_with = "lenient_f64")]
    pub propagation_s: f64,
    #[serde(deserialize_with = "lenient_f64")]
    pub wake_overhead_s: f64,
    pub warmup_cycles: u64,
    pub measured_cycles: u64,
    pub seed: u64,
    pub deadline_wake: bool,
    pub deadline_margin_cycles: u32,
    pub report_bytes: u64,
    #[serde(deserialize_with = "lenient_arr3")]
    pub thresholds_s: [f64; 3],
    pub pk_numerator: NumeratorName,
}

/// Residual-work convention of the priority waiting-time formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NumeratorName {
    AllClasses,
    UpToPriority,
}

/// `[fsm]`: listen and sleep windows in cycles.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FsmSection {
    pub rx_listen: u32,
    pub rx_sleep: u32,
    pub tx_listen: u32,
}

/// `[power]`: the joint watt table.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerSection {
    #[serde(deserialize_with = "lenient_mat3")]
    pub watts: [[f64; 3]; 3],
}

/// `[traffic.ds]` / `[traffic.us]`: one direction's arrival process. The
/// offered load is optional here because its stock value differs by
/// direction; every other key shares one default.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficSection {
    pub model: ModelName,
    #[serde(deserialize_with = "lenient_f64_opt")]
    pub load_bps: Option<f64>,
    #[serde(deserialize_with = "lenient_arr3")]
    pub byte_shares: [f64; 3],
    pub cbr_size_bytes: u32,
    pub size_min_bytes: u32,
    pub size_max_bytes: u32,
    #[serde(deserialize_with = "lenient_f64")]
    pub hurst: f64,
    pub num_sources: u32,
    #[serde(deserialize_with = "lenient_f64")]
    pub on_duty: f64,
    #[serde(deserialize_with = "lenient_f64")]
    pub burst_packets: f64,
}

/// Arrival process names accepted in the file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelName {
    Poisson,
    SelfSimilar,
}

/// The two traffic directions.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficPair {
    pub ds: TrafficSection,
    pub us: TrafficSection,
}

impl Default for TrafficSection {
    fn default() -> Self {
        let t = TrafficConfig::default();
        TrafficSection {
            model: ModelName::SelfSimilar,
            load_bps: None,
            byte_shares: t.byte_shares,
            cbr_size_bytes: t.cbr_size_bytes,
            size_min_bytes: t.size_min_bytes,
            size_max_bytes: t.size_max_bytes,
            hurst: t.hurst,
            num_sources: t.num_sources,
            on_duty: t.on_duty,
            burst_packets: t.burst_packets,
        }
    }
}

/// `[analysis]`: inputs only the analytical model needs.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    /// Queue cap (packets) of the occupancy chains.
    pub q_max: u32,
    /// Chain service rates; default to line share / mean packet size.
    #[serde(deserialize_with = "lenient_f64_opt")]
    pub mu_ds_pps: Option<f64>,
    #[serde(deserialize_with = "lenient_f64_opt")]
    pub mu_us_pps: Option<f64>,
}

/// `[sweep]`: which knob to vary and the values to visit.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: String,
    #[serde(deserialize_with = "lenient_vec")]
    pub values: Vec<f64>,
}

/// One whole configuration document.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub sim: SimSection,
    pub fsm: FsmSection,
    pub power: PowerSection,
    pub traffic: TrafficPair,
    pub analysis: AnalysisSection,
    pub sweep: Option<SweepSection>,
}

impl Default for SimSection {
    fn default() -> Self {
        let d = SimConfig::default();
        SimSection {
            n_onus: d.n_onus,
            ds_rate_bps: d.ds_rate_bps,
            us_rate_bps: d.us_rate_bps,
            cycle_s: d.cycle_s,
            propagation_s: d.propagation_s,
            wake_overhead_s: d.wake_overhead_s,
            warmup_cycles: d.warmup_cycles,
            measured_cycles: d.measured_cycles,
            seed: d.seed,
            deadline_wake: d.deadline_wake,
            deadline_margin_cycles: d.deadline_margin_cycles,
            report_bytes: d.report_bytes,
            thresholds_s: d.thresholds_s,
            pk_numerator: NumeratorName::AllClasses,
        }
    }
}

impl Default for FsmSection {
    fn default() -> Self {
        let d = FsmConfig::default();
        FsmSection { rx_listen: d.rx_listen, rx_sleep: d.rx_sleep, tx_listen: d.tx_listen }
    }
}

impl Default for PowerSection {
    fn default() -> Self {
        PowerSection { watts: PowerProfile::default().watts }
    }
}

impl TrafficSection {
    /// The core traffic settings, with the direction's stock load filling
    /// in when the document leaves `load_bps` out.
    fn to_core(&self, stock_load_bps: f64) -> TrafficConfig {
        TrafficConfig {
            model: match self.model {
                ModelName::Poisson => TrafficModel::Poisson,
                ModelName::SelfSimilar => TrafficModel::SelfSimilar,
            },
            load_bps: self.load_bps.unwrap_or(stock_load_bps),
            byte_shares: self.byte_shares,
            cbr_size_bytes: self.cbr_size_bytes,
            size_min_bytes: self.size_min_bytes,
            size_max_bytes: self.size_max_bytes,
            hurst: self.hurst,
            num_sources: self.num_sources,
            on_duty: self.on_duty,
            burst_packets: self.burst_packets,
        }
    }
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection { q_max: 200, mu_ds_pps: None, mu_us_pps: None }
    }
}

impl Default for FileConfig {
    fn default() -> Self {
        FileConfig {
            sim: SimSection::default(),
            fsm: FsmSection::default(),
            power: PowerSection::default(),
            traffic: TrafficPair::default(),
            analysis: AnalysisSection::default(),
            sweep: None,
        }
    }
}

/// Service rates the occupancy chains use when `[analysis]` leaves them out.
#[derive(Debug, Clone, Copy)]
pub struct AnalyzeInputs {
    pub q_max: u32,
    pub mu_ds_pps: f64,
    pub mu_us_pps: f64,
}

/// Fair line-rate share of one ONU expressed in packets/s of this mix.
fn share_rate_pps(rate_bps: f64, n_onus: usize, traffic: &TrafficConfig) -> f64 {
    rate_bps / n_onus.max(1) as f64 / (8.0 * traffic.class_mix().mean_packet_bytes)
}

impl FileConfig {
    /// The simulator configuration this document describes.
    pub fn sim_config(&self) -> SimConfig {
        let stock = SimConfig::default();
        SimConfig {
            n_onus: self.sim.n_onus,
            ds_rate_bps: self.sim.ds_rate_bps,
            us_rate_bps: self.sim.us_rate_bps,
            cycle_s: self.sim.cycle_s,
            propagation_s: self.sim.propagation_s,
            wake_overhead_s: self.sim.wake_overhead_s,
            warmup_cycles: self.sim.warmup_cycles,
            measured_cycles: self.sim.measured_cycles,
            seed: self.sim.seed,
            fsm: FsmConfig {
                rx_listen: self.fsm.rx_listen,
                rx_sleep: self.fsm.rx_sleep,
                tx_listen: self.fsm.tx_listen,
            },
            thresholds_s: self.sim.thresholds_s,
            ds_traffic: self.traffic.ds.to_core(stock.ds_traffic.load_bps),
            us_traffic: self.traffic.us.to_core(stock.us_traffic.load_bps),
            power: PowerProfile { watts: self.power.watts },
            deadline_wake: self.sim.deadline_wake,
            deadline_margin_cycles: self.sim.deadline_margin_cycles,
            pk_numerator: match self.sim.pk_numerator {
                NumeratorName::AllClasses => PkNumerator::AllClasses,
                NumeratorName::UpToPriority => PkNumerator::UpToPriority,
            },
            report_bytes: self.sim.report_bytes,
        }
    }

    /// Chain inputs with the defaults filled in.
    pub fn analyze_inputs(&self, cfg: &SimConfig) -> AnalyzeInputs {
        AnalyzeInputs {
            q_max: self.analysis.q_max,
            mu_ds_pps: self
                .analysis
                .mu_ds_pps
                .unwrap_or_else(|| share_rate_pps(cfg.ds_rate_bps, cfg.n_onus, &cfg.ds_traffic)),
            mu_us_pps: self
                .analysis
                .mu_us_pps
                .unwrap_or_else(|| share_rate_pps(cfg.us_rate_bps, cfg.n_onus, &cfg.us_traffic)),
        }
    }

    /// Check every invariant, reporting the first violation with the key
    /// path of the offending table.
    pub fn validate(&self) -> Result<(), String> {
        let cfg = self.sim_config();
        cfg.fsm.validate().map_err(|msg| format!("fsm: {msg}"))?;
        cfg.power.validate().map_err(|e| format!("power: {}", strip(e)))?;
        cfg.ds_traffic.validate().map_err(|e| format!("traffic.ds: {}", strip(e)))?;
        cfg.us_traffic.validate().map_err(|e| format!("traffic.us: {}", strip(e)))?;
        cfg.validate().map_err(|e| format!("sim: {}", strip(e)))?;
        if self.analysis.q_max < 1 {
            return Err("analysis.q_max must be >= 1".into());
        }
        for (name, mu) in [("mu_ds_pps", self.analysis.mu_ds_pps), ("mu_us_pps", self.analysis.mu_us_pps)] {
            if let Some(mu) = mu {
                if !(mu > 0.0) || !mu.is_finite() {
                    return Err(format!("analysis.{name} must be finite and > 0, got {mu}"));
                }
            }
        }
        if self.sweep.is_some() {
            self.sweep_spec()?;
        }
        Ok(())
    }

    /// The checked sweep axis and values; an error names what is missing or
    /// out of range.
    pub fn sweep_spec(&self) -> Result<(SweepAxis, Vec<f64>), String> {
        let Some(sw) = &self.sweep else {
            return Err("sweep.axis missing: add a [sweep] table with 'axis' and 'values'".into());
        };
        let axis = parse_axis(&sw.axis)?;
        if sw.values.is_empty() {
            return Err("sweep.values must list at least one value".into());
        }
        let base = self.sim_config();
        for &v in &sw.values {
            let mut probe = base.clone();
            apply_axis(&mut probe, axis, v).map_err(|e| format!("sweep.values: {}", strip(e)))?;
        }
        Ok((axis, sw.values.clone()))
    }
}

/// Drop the generic "invalid argument:" prefix; the key path we prepend
/// carries the same information.
fn strip(e: ponsim_core::Error) -> String {
    let s = e.to_string();
    s.strip_prefix("invalid argument: ").map(str::to_owned).unwrap_or(s)
}

/// Map an axis name from `[sweep]` to the simulator axis.
pub fn parse_axis(name: &str) -> Result<SweepAxis, String> {
    match name {
        "ds_load_bps" => Ok(SweepAxis::DsLoad),
        "us_load_bps" => Ok(SweepAxis::UsLoad),
        "rx_listen_cycles" => Ok(SweepAxis::RxListen),
        "rx_sleep_cycles" => Ok(SweepAxis::RxSleep),
        "tx_listen_cycles" => Ok(SweepAxis::TxListen),
        "delay_threshold_s" => Ok(SweepAxis::DelayThreshold),
        other => Err(format!(
            "sweep.axis '{other}' is not one of ds_load_bps, us_load_bps, \
             rx_listen_cycles, rx_sleep_cycles, tx_listen_cycles, delay_threshold_s"
        )),
    }
}

/// Where a failed load came from, so the caller can pick the exit code.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Read a document (or start empty), apply `--set` overrides then the seed
/// flag, and type-check the result.
pub fn load(
    path: Option<&Path>,
    sets: &[String],
    seed: Option<u64>,
) -> Result<FileConfig, ConfigError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| ConfigError(format!("cannot read config file {}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut doc: toml::Table =
        text.parse().map_err(|e| ConfigError(format!("config parse error: {e}")))?;
    for spec in sets {
        apply_set(&mut doc, spec).map_err(ConfigError)?;
    }
    if let Some(seed) = seed {
        apply_set(&mut doc, &format!("sim.seed={seed}")).map_err(ConfigError)?;
    }
    FileConfig::deserialize(toml::Value::Table(doc))
        .map_err(|e| ConfigError(format!("config error: {}", e.message())))
}

/// Write one `key=value` override into the document, creating intermediate
/// tables as needed; the value text is read as TOML, falling back to a
/// plain string (so `model=poisson` needs no quotes).
fn apply_set(doc: &mut toml::Table, spec: &str) -> Result<(), String> {
    let Some((key, raw)) = spec.split_once('=') else {
        return Err(format!("override '{spec}' must look like key=value"));
    };
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if key.is_empty() || parts.iter().any(|p| p.is_empty()) {
        return Err(format!("override '{spec}' has an empty key"));
    }
    let value = parse_value(raw.trim());
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        table = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| format!("override key '{key}' descends into the scalar '{part}'"))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Read one override value as TOML; bare words become strings.
fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load_str(text: &str, sets: &[&str]) -> Result<FileConfig, ConfigError> {
        let mut doc: toml::Table = text.parse().unwrap();
        for s in sets {
            apply_set(&mut doc, s).map_err(ConfigError)?;
        }
        FileConfig::deserialize(toml::Value::Table(doc))
            .map_err(|e| ConfigError(format!("config error: {}", e.message())))
    }

    #[test]
    fn empty_document_is_the_stock_configuration() {
        let cfg = load_str("", &[]).unwrap();
        assert_eq!(cfg.sim_config(), SimConfig::default());
        assert!(cfg.validate().is_ok());
        assert!(cfg.sweep.is_none());
    }

    #[test]
    fn shipped_default_file_matches_the_built_in_defaults() {
        let text = include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.toml"));
        let cfg = load_str(text, &[]).unwrap();
        assert_eq!(cfg.sim_config(), SimConfig::default());
        assert_eq!(cfg.analysis.q_max, AnalysisSection::default().q_max);
        assert!(cfg.sweep.is_none());
    }

    #[test]
    fn overrides_change_single_keys_without_touching_the_rest() {
        let cfg = load_str(
            "",
            &[
                "sim.seed=7",
                "traffic.us.model=poisson",
                "traffic.ds.load_bps=40e6",
                "fsm.rx_sleep=5",
                "sim.thresholds_s=[0.2, 2, 20]",
            ],
        )
        .unwrap();
        let sim = cfg.sim_config();
        assert_eq!(sim.seed, 7);
        assert_eq!(sim.us_traffic.model, TrafficModel::Poisson);
        assert_eq!(sim.ds_traffic.load_bps, 40e6);
        assert_eq!(sim.fsm.rx_sleep, 5);
        assert_eq!(sim.thresholds_s, [0.2, 2.0, 20.0]);
        assert_eq!(sim.n_onus, 32);
    }

    #[test]
    fn integer_text_is_accepted_for_float_keys() {
        let cfg = load_str("", &["traffic.ds.load_bps=2000000"]).unwrap();
        assert_eq!(cfg.sim_config().ds_traffic.load_bps, 2e6);
    }

    #[test]
    fn partial_traffic_tables_keep_the_stock_direction_loads() {
        let cfg = load_str("[traffic.ds]\nmodel = \"poisson\"\n", &[]).unwrap();
        let sim = cfg.sim_config();
        assert_eq!(sim.ds_traffic.model, TrafficModel::Poisson);
        assert_eq!(sim.ds_traffic.load_bps, SimConfig::default().ds_traffic.load_bps);
        assert_eq!(sim.us_traffic.load_bps, SimConfig::default().us_traffic.load_bps);
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let err = load_str("[sim]\ncyle_s = 1e-3\n", &[]).unwrap_err();
        assert!(err.0.contains("cyle_s"), "{err}");
        let err = load_str("", &["sim.cyle_s=1e-3"]).unwrap_err();
        assert!(err.0.contains("cyle_s"), "{err}");
        let err = load_str("", &["nonsense=1"]).unwrap_err();
        assert!(err.0.contains("nonsense"), "{err}");
    }

    #[test]
    fn malformed_overrides_are_rejected() {
        let mut doc = toml::Table::new();
        assert!(apply_set(&mut doc, "justakey").is_err());
        assert!(apply_set(&mut doc, "=5").is_err());
        assert!(apply_set(&mut doc, "a..b=5").is_err());
        apply_set(&mut doc, "sim.seed=3").unwrap();
        // Descending through a scalar is an error, not a silent overwrite.
        assert!(apply_set(&mut doc, "sim.seed.deeper=1").is_err());
    }

    #[test]
    fn validation_names_the_offending_table() {
        let cfg = load_str("", &["traffic.us.hurst=1.2"]).unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.starts_with("traffic.us:") && err.contains("hurst"), "{err}");

        let cfg = load_str("", &["power.watts=[[3.85,1.9,1.7],[2.8,1.55,1.0],[2.5,0.95,2.0]]"])
            .unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.starts_with("power:"), "{err}");

        let cfg = load_str("", &["fsm.rx_listen=0"]).unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.starts_with("fsm:"), "{err}");

        let cfg = load_str("", &["sim.cycle_s=0"]).unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.starts_with("sim:") && err.contains("cycle_s"), "{err}");
    }

    #[test]
    fn sweep_table_is_checked_with_the_config() {
        let cfg = load_str("[sweep]\naxis = \"ds_load_bps\"\nvalues = [1e6, 2e6]\n", &[]).unwrap();
        let (axis, values) = cfg.sweep_spec().unwrap();
        assert_eq!(axis, SweepAxis::DsLoad);
        assert_eq!(values, vec![1e6, 2e6]);

        let cfg = load_str("[sweep]\naxis = \"sideways\"\nvalues = [1]\n", &[]).unwrap();
        assert!(cfg.sweep_spec().unwrap_err().contains("sideways"));
        assert!(cfg.validate().is_err());

        let cfg = load_str("[sweep]\naxis = \"us_load_bps\"\nvalues = []\n", &[]).unwrap();
        assert!(cfg.sweep_spec().unwrap_err().contains("at least one"));

        let cfg =
            load_str("[sweep]\naxis = \"rx_sleep_cycles\"\nvalues = [1.5]\n", &[]).unwrap();
        assert!(cfg.sweep_spec().unwrap_err().starts_with("sweep.values:"));

        let cfg = load_str("", &[]).unwrap();
        assert!(cfg.sweep_spec().unwrap_err().contains("sweep.axis missing"));
    }

    #[test]
    fn analyze_service_rates_default_to_the_line_share() {
        let cfg = load_str("", &[]).unwrap();
        let sim = cfg.sim_config();
        let inputs = cfg.analyze_inputs(&sim);
        let mean_pkt = sim.ds_traffic.class_mix().mean_packet_bytes;
        let expect = 10e9 / 32.0 / (8.0 * mean_pkt);
        assert!((inputs.mu_ds_pps - expect).abs() < 1e-9 * expect);
        let cfg = load_str("[analysis]\nmu_us_pps = 5000.0\n", &[]).unwrap();
        assert_eq!(cfg.analyze_inputs(&sim).mu_us_pps, 5000.0);
    }
}
