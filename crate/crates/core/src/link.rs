//! Timing and loss models for each hop: radio air interface, SPI, and the
//! computer uplink (Ethernet/UDP or Serial).
//!
//! Durations are `f64` microseconds and are never rounded here; the event
//! engine rounds when it schedules.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

/// Largest payload the transceiver accepts.
pub const MAX_RADIO_PAYLOAD: usize = 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinkError {
    #[error("oversized radio payload: {0} bytes (max {MAX_RADIO_PAYLOAD})")]
    OversizedPayload(usize),
    #[error("invalid radio address `{0}`")]
    BadAddress(String),
    #[error("probability `{name}` = {value} outside [0, 1]")]
    BadProbability { name: &'static str, value: f64 },
    #[error("invalid loss table: {0}")]
    BadLossTable(String),
}

/// 5-byte transceiver address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RadioAddress(u64);

impl RadioAddress {
    pub const CONTROL: Self = Self(0x75_3FAD_299A);
    pub const TELEMETRY: Self = Self(0x75_3FBD_299A);

    pub fn new(raw: u64) -> Option<Self> {
        (raw >> 40 == 0).then_some(Self(raw))
    }

    pub fn get(self) -> u64 {
        self.0
    }

    pub fn to_bytes(self) -> [u8; 5] {
        let b = self.0.to_be_bytes();
        [b[3], b[4], b[5], b[6], b[7]]
    }
}

impl FromStr for RadioAddress {
    type Err = LinkError;

    /// Accepts `0x753FAD299A`, with an optional C-style `LL` suffix.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || LinkError::BadAddress(s.to_string());
        let t = s.trim();
        let t = t
            .strip_prefix("0x")
            .or_else(|| t.strip_prefix("0X"))
            .unwrap_or(t);
        let t = t
            .strip_suffix("LL")
            .or_else(|| t.strip_suffix("ll"))
            .unwrap_or(t);
        if t.is_empty() || t.len() > 10 {
            return Err(bad());
        }
        let raw = u64::from_str_radix(t, 16).map_err(|_| bad())?;
        Self::new(raw).ok_or_else(bad)
    }
}

impl fmt::Display for RadioAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{:010X}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadioConfig {
    pub frequency_mhz: u32,
    pub address: RadioAddress,
    pub data_rate_bps: u32,
    pub preamble_bytes: u32,
    pub address_bytes: u32,
    pub crc_bytes: u32,
    pub spi_rate_bps: u32,
}

impl RadioConfig {
    pub fn control_default() -> Self {
        Self {
            frequency_mhz: 2504,
            address: RadioAddress::CONTROL,
            data_rate_bps: 2_000_000,
            preamble_bytes: 1,
            address_bytes: 5,
            crc_bytes: 2,
            spi_rate_bps: 10_000_000,
        }
    }

    pub fn telemetry_default() -> Self {
        Self {
            frequency_mhz: 2529,
            address: RadioAddress::TELEMETRY,
            ..Self::control_default()
        }
    }

    /// Channel index for frequencies in the nominal 2400..=2525 MHz table.
    /// Frequencies outside it are still accepted and simply have no index.
    pub fn channel_index(&self) -> Option<u8> {
        (2400..=2525)
            .contains(&self.frequency_mhz)
            .then(|| (self.frequency_mhz - 2400) as u8)
    }

    fn overhead_bytes(&self) -> u32 {
        self.preamble_bytes + self.address_bytes + self.crc_bytes
    }
}

/// Time a frame of `payload_len` bytes occupies the air, in µs.
pub fn air_time(payload_len: usize, cfg: &RadioConfig) -> Result<f64, LinkError> {
    if payload_len > MAX_RADIO_PAYLOAD {
        return Err(LinkError::OversizedPayload(payload_len));
    }
    let bits = 8.0 * (cfg.overhead_bytes() as f64 + payload_len as f64);
    Ok(bits * 1e6 / cfg.data_rate_bps as f64)
}

/// SPI transfer of one command byte plus the payload, in µs.
pub fn spi_time(payload_len: usize, cfg: &RadioConfig) -> f64 {
    (payload_len as f64 + 1.0) * 8.0 * 1e6 / cfg.spi_rate_bps as f64
}

/// Piecewise-constant distance → loss probability mapping.
///
/// Each step `(from_m, p)` applies to distances `>= from_m` up to the next
/// step. Distances below the first step fall back to the model's base
/// `p_loss`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossTable {
    steps: Vec<(f64, f64)>,
}

impl LossTable {
    pub fn new(mut steps: Vec<(f64, f64)>) -> Result<Self, LinkError> {
        for &(d, p) in &steps {
            if !(d.is_finite() && d >= 0.0) {
                return Err(LinkError::BadLossTable(format!("distance {d}")));
            }
            check_probability("loss_table", p)?;
        }
        steps.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[(f64, f64)] {
        &self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    fn lookup(&self, distance: f64) -> Option<f64> {
        self.steps
            .iter()
            .rev()
            .find(|(from, _)| distance >= *from)
            .map(|&(_, p)| p)
    }
}

fn check_probability(name: &'static str, value: f64) -> Result<f64, LinkError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(LinkError::BadProbability { name, value })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    pub p_loss: f64,
    pub p_bitflip: f64,
    pub distance_m: f64,
    pub loss_vs_distance: LossTable,
    pub collisions_enabled: bool,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self {
            p_loss: 0.0,
            p_bitflip: 0.0,
            distance_m: 0.4,
            loss_vs_distance: LossTable::default(),
            collisions_enabled: true,
        }
    }
}

impl ChannelModel {
    pub fn validate(&self) -> Result<(), LinkError> {
        check_probability("p_loss", self.p_loss)?;
        check_probability("p_bitflip", self.p_bitflip)?;
        if !(self.distance_m.is_finite() && self.distance_m >= 0.0) {
            return Err(LinkError::BadLossTable(format!(
                "distance {}",
                self.distance_m
            )));
        }
        Ok(())
    }

    pub fn p_loss_at(&self, distance_m: f64) -> f64 {
        self.loss_vs_distance
            .lookup(distance_m)
            .unwrap_or(self.p_loss)
    }

    pub fn at_distance(&self, distance_m: f64) -> Self {
        Self {
            distance_m,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransmitOutcome {
    Delivered(Vec<u8>),
    Lost,
    /// Corruption caught by the radio CRC; the frame never reaches software.
    CorruptDropped,
    /// Corruption on a link without CRC; the altered bytes are handed on.
    CorruptDelivered(Vec<u8>),
}

impl TransmitOutcome {
    pub fn bytes(&self) -> Option<&[u8]> {
        match self {
            Self::Delivered(b) | Self::CorruptDelivered(b) => Some(b),
            Self::Lost | Self::CorruptDropped => None,
        }
    }
}

/// Sends `frame` across a CRC-protected radio link.
///
/// Random draws happen in a fixed order: one uniform draw for loss, then one
/// per bit in frame order (MSB first). Bit draws are skipped entirely when
/// `p_bitflip` is zero.
pub fn channel_transmit<R: Rng + ?Sized>(
    frame: &[u8],
    model: &ChannelModel,
    rng: &mut R,
) -> TransmitOutcome {
    let p_loss = model.p_loss_at(model.distance_m);
    let u: f64 = rng.random();
    if u < p_loss {
        return TransmitOutcome::Lost;
    }
    if model.p_bitflip > 0.0 {
        let mut flipped = false;
        for _ in 0..frame.len() * 8 {
            let b: f64 = rng.random();
            flipped |= b < model.p_bitflip;
        }
        if flipped {
            return TransmitOutcome::CorruptDropped;
        }
    }
    TransmitOutcome::Delivered(frame.to_vec())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SerialLink {
    pub baud: u32,
    pub bits_per_byte: u32,
    pub buffer_bytes: usize,
}

impl Default for SerialLink {
    fn default() -> Self {
        Self {
            baud: 115_200,
            bits_per_byte: 10,
            buffer_bytes: 64,
        }
    }
}

impl SerialLink {
    pub fn byte_time(&self) -> f64 {
        self.bits_per_byte as f64 * 1e6 / self.baud as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum UplinkModel {
    /// One-way latency in µs; serialization time is below model resolution.
    Ethernet {
        latency_us: f64,
    },
    Serial(SerialLink),
}

impl Default for UplinkModel {
    fn default() -> Self {
        Self::Ethernet { latency_us: 50.0 }
    }
}

/// Pushes `frame` onto a serial line whose buffer already holds
/// `queue_depth` bytes.
///
/// Returns the frame's own drain time. If the frame does not fit, the bytes
/// past the buffer capacity are overwritten in flight: the lowest bit of each
/// overflowed byte position (counted from the end of the frame) is flipped.
pub fn serial_transfer(
    frame: &[u8],
    link: &SerialLink,
    queue_depth: usize,
) -> (f64, TransmitOutcome) {
    let duration = frame.len() as f64 * link.byte_time();
    let overflow = (queue_depth + frame.len())
        .saturating_sub(link.buffer_bytes)
        .min(frame.len());
    if overflow == 0 {
        return (duration, TransmitOutcome::Delivered(frame.to_vec()));
    }
    let mut bytes = frame.to_vec();
    let start = bytes.len() - overflow;
    for b in &mut bytes[start..] {
        *b ^= 0x01;
    }
    (duration, TransmitOutcome::CorruptDelivered(bytes))
}
