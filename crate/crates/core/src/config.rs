//! Scenario configuration: flat dotted keys, loadable from TOML, with
//! per-key overrides. Every key has a default; unknown keys are rejected.

use std::fmt;
use std::fs;
use std::path::Path;

use thiserror::Error;
use toml::{Table, Value};

use crate::link::{ChannelModel, LossTable, RadioAddress, RadioConfig, SerialLink, UplinkModel};
use crate::node::{BaseStationParams, NetworkError, NetworkParams, TelemetryPhase};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {reason}")]
    BadValue { key: String, reason: String },
    #[error("malformed override `{0}`, expected key=value")]
    BadOverride(String),
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Invalid(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UplinkKind {
    Ethernet,
    Serial,
}

impl fmt::Display for UplinkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UplinkKind::Ethernet => "ethernet",
            UplinkKind::Serial => "serial",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub window: usize,
    pub warmup: usize,
    pub repeat: usize,
    pub max_time_us: u64,
    pub trace: bool,

    pub send_interval_us: u64,
    pub controlled_robots: usize,

    pub robot_count: usize,
    pub telemetry_interval_ms: u64,
    pub telemetry_phase: TelemetryPhase,

    pub base_station: BaseStationParams,

    pub control_radio: RadioConfig,
    pub telemetry_radio: RadioConfig,

    pub channel: ChannelModel,

    pub uplink_kind: UplinkKind,
    pub uplink_latency_us: f64,
    pub serial: SerialLink,

    /// Robots emitting telemetry in the telemetry sweep.
    pub telemetry_robots: usize,

    pub control_port: u16,
    pub telemetry_port: u16,
    /// 0 runs until interrupted.
    pub serve_duration_s: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            window: crate::metrics::DEFAULT_WINDOW,
            warmup: crate::metrics::DEFAULT_WARMUP,
            repeat: 25,
            max_time_us: 120_000_000,
            trace: false,
            send_interval_us: 500,
            controlled_robots: 0,
            robot_count: 1,
            telemetry_interval_ms: 0,
            telemetry_phase: TelemetryPhase::Staggered,
            base_station: BaseStationParams::default(),
            control_radio: RadioConfig::control_default(),
            telemetry_radio: RadioConfig::telemetry_default(),
            channel: ChannelModel::default(),
            uplink_kind: UplinkKind::Ethernet,
            uplink_latency_us: 50.0,
            serial: SerialLink::default(),
            telemetry_robots: 6,
            control_port: 10010,
            telemetry_port: 10011,
            serve_duration_s: 0.0,
        }
    }
}

/// Every accepted key, in echo order.
pub const KEYS: &[&str] = &[
    "sim.seed",
    "sim.window",
    "sim.warmup",
    "sim.repeat",
    "sim.max_time_us",
    "sim.trace",
    "computer.send_interval_us",
    "computer.controlled_robots",
    "robots.count",
    "robots.telemetry_interval_ms",
    "robots.telemetry_phase",
    "base_station.service_time_us",
    "base_station.telemetry_forward_time_us",
    "base_station.tx_fifo_depth",
    "base_station.telemetry_busy_blocks_control",
    "radio.data_rate_bps",
    "radio.preamble_bytes",
    "radio.address_bytes",
    "radio.crc_bytes",
    "radio.spi_rate_bps",
    "radio.control_frequency_mhz",
    "radio.control_address",
    "radio.telemetry_frequency_mhz",
    "radio.telemetry_address",
    "channel.p_loss",
    "channel.p_bitflip",
    "channel.distance_m",
    "channel.loss_table",
    "channel.collisions",
    "uplink.kind",
    "uplink.latency_us",
    "uplink.baud",
    "uplink.bits_per_byte",
    "uplink.buffer_bytes",
    "experiment.telemetry_robots",
    "serve.control_port",
    "serve.telemetry_port",
    "serve.duration_s",
];

fn bad(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn as_int<T: TryFrom<i64>>(key: &str, v: &Value) -> Result<T, ConfigError> {
    let i = v
        .as_integer()
        .ok_or_else(|| bad(key, format!("expected integer, got {v}")))?;
    T::try_from(i).map_err(|_| bad(key, format!("{i} out of range")))
}

fn as_float(key: &str, v: &Value) -> Result<f64, ConfigError> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(bad(key, format!("expected number, got {v}"))),
    }
}

fn as_bool(key: &str, v: &Value) -> Result<bool, ConfigError> {
    v.as_bool()
        .ok_or_else(|| bad(key, format!("expected boolean, got {v}")))
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str, ConfigError> {
    v.as_str()
        .ok_or_else(|| bad(key, format!("expected string, got {v}")))
}

fn as_address(key: &str, v: &Value) -> Result<RadioAddress, ConfigError> {
    match v {
        Value::String(s) => s.parse().map_err(|e| bad(key, format!("{e}"))),
        Value::Integer(i) => u64::try_from(*i)
            .ok()
            .and_then(RadioAddress::new)
            .ok_or_else(|| bad(key, "address exceeds 40 bits")),
        _ => Err(bad(key, "expected address string")),
    }
}

fn as_loss_table(key: &str, v: &Value) -> Result<LossTable, ConfigError> {
    let arr = v
        .as_array()
        .ok_or_else(|| bad(key, "expected array of [distance, p_loss] pairs"))?;
    let steps = arr
        .iter()
        .map(|pair| match pair.as_array().map(Vec::as_slice) {
            Some([d, p]) => Ok((as_float(key, d)?, as_float(key, p)?)),
            _ => Err(bad(key, format!("expected [distance, p_loss], got {pair}"))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    LossTable::new(steps).map_err(|e| bad(key, e.to_string()))
}

fn flatten(prefix: &str, table: &Table, out: &mut Vec<(String, Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.merge_toml_str(text)?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    /// Applies every key in `text` on top of the current values.
    pub fn merge_toml_str(&mut self, text: &str) -> Result<(), ConfigError> {
        let table: Table = text.parse()?;
        let mut entries = Vec::new();
        flatten("", &table, &mut entries);
        for (k, v) in entries {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    /// Applies a `key=value` override. The value is read as a TOML literal,
    /// falling back to a bare string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::BadOverride(assignment.to_string()))?;
        let key = key.trim();
        let raw = raw.trim();
        let value = format!("v = {raw}")
            .parse::<Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(raw.to_string()));
        self.set(key, &value)
    }

    pub fn set(&mut self, key: &str, v: &Value) -> Result<(), ConfigError> {
        match key {
            "sim.seed" => self.seed = as_int(key, v)?,
            "sim.window" => self.window = as_int(key, v)?,
            "sim.warmup" => self.warmup = as_int(key, v)?,
            "sim.repeat" => self.repeat = as_int(key, v)?,
            "sim.max_time_us" => self.max_time_us = as_int(key, v)?,
            "sim.trace" => self.trace = as_bool(key, v)?,
            "computer.send_interval_us" => self.send_interval_us = as_int(key, v)?,
            "computer.controlled_robots" => self.controlled_robots = as_int(key, v)?,
            "robots.count" => self.robot_count = as_int(key, v)?,
            "robots.telemetry_interval_ms" => self.telemetry_interval_ms = as_int(key, v)?,
            "robots.telemetry_phase" => {
                self.telemetry_phase = match as_str(key, v)? {
                    "staggered" => TelemetryPhase::Staggered,
                    "aligned" => TelemetryPhase::Aligned,
                    other => {
                        return Err(bad(key, format!("`{other}` is not staggered or aligned")))
                    }
                }
            }
            "base_station.service_time_us" => self.base_station.service_time_us = as_float(key, v)?,
            "base_station.telemetry_forward_time_us" => {
                self.base_station.telemetry_forward_time_us = as_float(key, v)?
            }
            "base_station.tx_fifo_depth" => {
                let d: usize = as_int(key, v)?;
                if d == 0 {
                    return Err(bad(key, "depth must be at least 1"));
                }
                self.base_station.tx_fifo_depth = d;
            }
            "base_station.telemetry_busy_blocks_control" => {
                self.base_station.telemetry_busy_blocks_control = as_bool(key, v)?
            }
            "radio.data_rate_bps" => {
                let r: u32 = as_int(key, v)?;
                if r == 0 {
                    return Err(bad(key, "rate must be positive"));
                }
                self.control_radio.data_rate_bps = r;
                self.telemetry_radio.data_rate_bps = r;
            }
            "radio.preamble_bytes" => {
                let n = as_int(key, v)?;
                self.control_radio.preamble_bytes = n;
                self.telemetry_radio.preamble_bytes = n;
            }
            "radio.address_bytes" => {
                let n = as_int(key, v)?;
                self.control_radio.address_bytes = n;
                self.telemetry_radio.address_bytes = n;
            }
            "radio.crc_bytes" => {
                let n = as_int(key, v)?;
                self.control_radio.crc_bytes = n;
                self.telemetry_radio.crc_bytes = n;
            }
            "radio.spi_rate_bps" => {
                let r: u32 = as_int(key, v)?;
                if r == 0 {
                    return Err(bad(key, "rate must be positive"));
                }
                self.control_radio.spi_rate_bps = r;
                self.telemetry_radio.spi_rate_bps = r;
            }
            "radio.control_frequency_mhz" => self.control_radio.frequency_mhz = as_int(key, v)?,
            "radio.control_address" => self.control_radio.address = as_address(key, v)?,
            "radio.telemetry_frequency_mhz" => self.telemetry_radio.frequency_mhz = as_int(key, v)?,
            "radio.telemetry_address" => self.telemetry_radio.address = as_address(key, v)?,
            "channel.p_loss" => self.channel.p_loss = as_float(key, v)?,
            "channel.p_bitflip" => self.channel.p_bitflip = as_float(key, v)?,
            "channel.distance_m" => self.channel.distance_m = as_float(key, v)?,
            "channel.loss_table" => self.channel.loss_vs_distance = as_loss_table(key, v)?,
            "channel.collisions" => self.channel.collisions_enabled = as_bool(key, v)?,
            "uplink.kind" => {
                self.uplink_kind = match as_str(key, v)? {
                    "ethernet" => UplinkKind::Ethernet,
                    "serial" => UplinkKind::Serial,
                    other => return Err(bad(key, format!("`{other}` is not ethernet or serial"))),
                }
            }
            "uplink.latency_us" => self.uplink_latency_us = as_float(key, v)?,
            "uplink.baud" => {
                let b: u32 = as_int(key, v)?;
                if b == 0 {
                    return Err(bad(key, "baud must be positive"));
                }
                self.serial.baud = b;
            }
            "uplink.bits_per_byte" => self.serial.bits_per_byte = as_int(key, v)?,
            "uplink.buffer_bytes" => self.serial.buffer_bytes = as_int(key, v)?,
            "experiment.telemetry_robots" => self.telemetry_robots = as_int(key, v)?,
            "serve.control_port" => self.control_port = as_int(key, v)?,
            "serve.telemetry_port" => self.telemetry_port = as_int(key, v)?,
            "serve.duration_s" => self.serve_duration_s = as_float(key, v)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Current value of `key` rendered as TOML.
    pub fn get(&self, key: &str) -> Option<String> {
        let s = match key {
            "sim.seed" => self.seed.to_string(),
            "sim.window" => self.window.to_string(),
            "sim.warmup" => self.warmup.to_string(),
            "sim.repeat" => self.repeat.to_string(),
            "sim.max_time_us" => self.max_time_us.to_string(),
            "sim.trace" => self.trace.to_string(),
            "computer.send_interval_us" => self.send_interval_us.to_string(),
            "computer.controlled_robots" => self.controlled_robots.to_string(),
            "robots.count" => self.robot_count.to_string(),
            "robots.telemetry_interval_ms" => self.telemetry_interval_ms.to_string(),
            "robots.telemetry_phase" => match self.telemetry_phase {
                TelemetryPhase::Staggered => "\"staggered\"".into(),
                TelemetryPhase::Aligned => "\"aligned\"".into(),
            },
            "base_station.service_time_us" => {
                Value::Float(self.base_station.service_time_us).to_string()
            }
            "base_station.telemetry_forward_time_us" => {
                Value::Float(self.base_station.telemetry_forward_time_us).to_string()
            }
            "base_station.tx_fifo_depth" => self.base_station.tx_fifo_depth.to_string(),
            "base_station.telemetry_busy_blocks_control" => {
                self.base_station.telemetry_busy_blocks_control.to_string()
            }
            "radio.data_rate_bps" => self.control_radio.data_rate_bps.to_string(),
            "radio.preamble_bytes" => self.control_radio.preamble_bytes.to_string(),
            "radio.address_bytes" => self.control_radio.address_bytes.to_string(),
            "radio.crc_bytes" => self.control_radio.crc_bytes.to_string(),
            "radio.spi_rate_bps" => self.control_radio.spi_rate_bps.to_string(),
            "radio.control_frequency_mhz" => self.control_radio.frequency_mhz.to_string(),
            "radio.control_address" => format!("\"{}\"", self.control_radio.address),
            "radio.telemetry_frequency_mhz" => self.telemetry_radio.frequency_mhz.to_string(),
            "radio.telemetry_address" => format!("\"{}\"", self.telemetry_radio.address),
            "channel.p_loss" => Value::Float(self.channel.p_loss).to_string(),
            "channel.p_bitflip" => Value::Float(self.channel.p_bitflip).to_string(),
            "channel.distance_m" => Value::Float(self.channel.distance_m).to_string(),
            "channel.loss_table" => {
                let parts: Vec<String> = self
                    .channel
                    .loss_vs_distance
                    .steps()
                    .iter()
                    .map(|(d, p)| format!("[{}, {}]", Value::Float(*d), Value::Float(*p)))
                    .collect();
                format!("[{}]", parts.join(", "))
            }
            "channel.collisions" => self.channel.collisions_enabled.to_string(),
            "uplink.kind" => format!("\"{}\"", self.uplink_kind),
            "uplink.latency_us" => Value::Float(self.uplink_latency_us).to_string(),
            "uplink.baud" => self.serial.baud.to_string(),
            "uplink.bits_per_byte" => self.serial.bits_per_byte.to_string(),
            "uplink.buffer_bytes" => self.serial.buffer_bytes.to_string(),
            "experiment.telemetry_robots" => self.telemetry_robots.to_string(),
            "serve.control_port" => self.control_port.to_string(),
            "serve.telemetry_port" => self.telemetry_port.to_string(),
            "serve.duration_s" => Value::Float(self.serve_duration_s).to_string(),
            _ => return None,
        };
        Some(s)
    }

    /// `key = value` for every key, suitable for a CSV preamble.
    pub fn echo_lines(&self) -> Vec<String> {
        KEYS.iter()
            .map(|k| format!("{k} = {}", self.get(k).expect("KEYS are all gettable")))
            .collect()
    }

    pub fn uplink(&self) -> UplinkModel {
        match self.uplink_kind {
            UplinkKind::Ethernet => UplinkModel::Ethernet {
                latency_us: self.uplink_latency_us,
            },
            UplinkKind::Serial => UplinkModel::Serial(self.serial.clone()),
        }
    }

    pub fn network_params(&self) -> NetworkParams {
        NetworkParams {
            seed: self.seed,
            send_interval_us: self.send_interval_us,
            robot_count: self.robot_count,
            controlled_robots: self.controlled_robots,
            telemetry_interval_ms: self.telemetry_interval_ms,
            telemetry_phase: self.telemetry_phase,
            base_station: self.base_station.clone(),
            control_radio: self.control_radio.clone(),
            telemetry_radio: self.telemetry_radio.clone(),
            channel: self.channel.clone(),
            robot_distances: Vec::new(),
            uplink: self.uplink(),
            window: self.window,
            warmup: self.warmup,
            max_time_us: self.max_time_us,
            record_trace: self.trace,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.network_params().validate()?;
        if self.uplink_latency_us < 0.0 || !self.uplink_latency_us.is_finite() {
            return Err(bad("uplink.latency_us", "must be a non-negative number"));
        }
        for (k, t) in [
            (
                "base_station.service_time_us",
                self.base_station.service_time_us,
            ),
            (
                "base_station.telemetry_forward_time_us",
                self.base_station.telemetry_forward_time_us,
            ),
        ] {
            if t < 0.0 || !t.is_finite() {
                return Err(bad(k, "must be a non-negative number"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ScenarioConfig::default().validate().unwrap();
    }

    #[test]
    fn nested_tables_flatten_to_keys() {
        let cfg = ScenarioConfig::from_toml_str(
            "[computer]\nsend_interval_us = 800\n[base_station]\ntelemetry_busy_blocks_control = false\n",
        )
        .unwrap();
        assert_eq!(cfg.send_interval_us, 800);
        assert!(!cfg.base_station.telemetry_busy_blocks_control);
        let dotted = ScenarioConfig::from_toml_str("computer.send_interval_us = 800").unwrap();
        assert_eq!(dotted.send_interval_us, 800);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = ScenarioConfig::from_toml_str("[computer]\nsend_intervall_us = 1").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey(k) if k == "computer.send_intervall_us"));
    }

    #[test]
    fn wrong_types_are_reported() {
        assert!(matches!(
            ScenarioConfig::from_toml_str("sim.seed = \"x\""),
            Err(ConfigError::BadValue { .. })
        ));
        assert!(ScenarioConfig::from_toml_str("sim.seed = -1").is_err());
        assert!(ScenarioConfig::from_toml_str("uplink.kind = \"usb\"").is_err());
    }

    #[test]
    fn overrides_parse_literals_and_strings() {
        let mut cfg = ScenarioConfig::default();
        cfg.apply_override("channel.p_loss=0.25").unwrap();
        cfg.apply_override("uplink.kind=serial").unwrap();
        cfg.apply_override("radio.control_address=0x753FAD299ALL")
            .unwrap();
        cfg.apply_override("channel.loss_table=[[0.0, 0.01], [5.0, 0.2]]")
            .unwrap();
        assert_eq!(cfg.channel.p_loss, 0.25);
        assert_eq!(cfg.uplink_kind, UplinkKind::Serial);
        assert_eq!(cfg.control_radio.address, RadioAddress::CONTROL);
        assert_eq!(cfg.channel.p_loss_at(6.0), 0.2);
        assert!(matches!(
            cfg.apply_override("nonsense"),
            Err(ConfigError::BadOverride(_))
        ));
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = ScenarioConfig::default();
        cfg.apply_override("channel.loss_table=[[1.0, 0.5]]")
            .unwrap();
        cfg.apply_override("robots.telemetry_phase=aligned")
            .unwrap();
        let text = cfg.echo_lines().join("\n");
        assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap(), cfg);
        assert_eq!(cfg.echo_lines().len(), KEYS.len());
    }

    #[test]
    fn invalid_probability_fails_validation() {
        let mut cfg = ScenarioConfig::default();
        cfg.channel.p_loss = 1.5;
        assert!(cfg.validate().is_err());
    }
}
