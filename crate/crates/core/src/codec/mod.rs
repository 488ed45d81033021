//! Bit-exact control and telemetry frames.
//!
//! Both frames start with one byte whose high nibble is the message type and
//! whose low nibble is the robot id. Every following field is packed MSB-first
//! in a fixed order with no padding, so a control frame is exactly 14 bytes
//! and a telemetry frame exactly 13.
//!
//! Physical quantities are carried as two's complement fixed point. Kinematic
//! fields (velocities, angular speed, heading) use 20 bits at a scale of 10⁴
//! per unit; motor speeds use 16 bits at a scale of 10² per unit. Quantization
//! saturates instead of wrapping.

mod bits;

use std::fmt;

use thiserror::Error;

use bits::{BitReader, BitWriter};

pub const CONTROL_FRAME_LEN: usize = 14;
pub const TELEMETRY_FRAME_LEN: usize = 13;

/// Field widths of the control frame, in wire order.
pub const CONTROL_LAYOUT: [(&str, u32); 13] = [
    ("msg_type", 4),
    ("robot_id", 4),
    ("vx", 20),
    ("vy", 20),
    ("omega", 20),
    ("theta", 20),
    ("kick_front", 1),
    ("kick_chip", 1),
    ("charge_kick", 1),
    ("kick_strength", 8),
    ("dribbler_on", 1),
    ("dribbler_speed", 8),
    ("extra_command", 4),
];

/// Field widths of the telemetry frame, in wire order.
pub const TELEMETRY_LAYOUT: [(&str, u32); 10] = [
    ("msg_type", 4),
    ("robot_id", 4),
    ("m1", 16),
    ("m2", 16),
    ("m3", 16),
    ("m4", 16),
    ("dribbler_speed", 15),
    ("kick_capacitor", 8),
    ("ball_detected", 1),
    ("battery", 8),
];

const fn layout_bits(layout: &[(&str, u32)]) -> u32 {
    let mut total = 0;
    let mut i = 0;
    while i < layout.len() {
        total += layout[i].1;
        i += 1;
    }
    total
}

const _: () = assert!(layout_bits(&CONTROL_LAYOUT) as usize == CONTROL_FRAME_LEN * 8);
const _: () = assert!(layout_bits(&TELEMETRY_LAYOUT) as usize == TELEMETRY_FRAME_LEN * 8);

const KINEMATIC_SCALE: f64 = 1e4;
const MOTOR_SCALE: f64 = 1e2;
const FIXED20_MIN: i32 = -(1 << 19);
const FIXED20_MAX: i32 = (1 << 19) - 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error("non-encodable value {0}")]
    NonEncodable(f64),
    #[error("field `{field}` out of range: {value}")]
    FieldOutOfRange { field: &'static str, value: i64 },
    #[error("malformed control frame: expected {CONTROL_FRAME_LEN} bytes, got {0}")]
    MalformedControl(usize),
    #[error("malformed telemetry frame: expected {TELEMETRY_FRAME_LEN} bytes, got {0}")]
    MalformedTelemetry(usize),
}

/// 4-bit message type. Codes 2..=15 are carried opaquely.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageType {
    Control,
    Telemetry,
    Unknown(u8),
}

impl MessageType {
    pub fn from_code(code: u8) -> Result<Self, CodecError> {
        match code {
            0 => Ok(Self::Control),
            1 => Ok(Self::Telemetry),
            2..=15 => Ok(Self::Unknown(code)),
            _ => Err(CodecError::FieldOutOfRange {
                field: "msg_type",
                value: code as i64,
            }),
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Self::Control => 0,
            Self::Telemetry => 1,
            Self::Unknown(c) => c,
        }
    }
}

/// 4-bit robot identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct RobotId(u8);

impl RobotId {
    pub const MAX: u8 = 15;

    pub fn new(id: u8) -> Result<Self, CodecError> {
        if id > Self::MAX {
            return Err(CodecError::FieldOutOfRange {
                field: "robot_id",
                value: id as i64,
            });
        }
        Ok(Self(id))
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl fmt::Display for RobotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Rounds `value * 10⁴` to the nearest integer, saturates to the signed
/// 20-bit range and returns the two's complement bit pattern.
pub fn quantize20(value: f64) -> Result<u32, CodecError> {
    Ok(Fixed20::from_f64(value)?.to_bits())
}

/// Inverse of [`quantize20`] on the 20-bit pattern.
pub fn dequantize20(bits: u32) -> f64 {
    Fixed20::from_bits(bits).to_f64()
}

/// Rounds `value * 10²` to the nearest integer, saturates to `i16` and
/// returns the two's complement bit pattern.
pub fn quantize16(value: f64) -> Result<u16, CodecError> {
    Ok(MotorSpeed::from_f64(value)?.to_bits())
}

pub fn dequantize16(bits: u16) -> f64 {
    MotorSpeed::from_bits(bits).to_f64()
}

/// Signed 20-bit fixed point value, 10⁻⁴ units per count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Fixed20(i32);

impl Fixed20 {
    pub const MIN: Self = Self(FIXED20_MIN);
    pub const MAX: Self = Self(FIXED20_MAX);

    pub fn from_f64(value: f64) -> Result<Self, CodecError> {
        if !value.is_finite() {
            return Err(CodecError::NonEncodable(value));
        }
        let scaled = (value * KINEMATIC_SCALE).round();
        let clamped = scaled.clamp(FIXED20_MIN as f64, FIXED20_MAX as f64);
        Ok(Self(clamped as i32))
    }

    pub fn from_raw(raw: i32) -> Option<Self> {
        (FIXED20_MIN..=FIXED20_MAX)
            .contains(&raw)
            .then_some(Self(raw))
    }

    pub fn raw(self) -> i32 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / KINEMATIC_SCALE
    }

    pub fn to_bits(self) -> u32 {
        (self.0 as u32) & 0xF_FFFF
    }

    pub fn from_bits(bits: u32) -> Self {
        // sign-extend from bit 19
        Self(((bits << 12) as i32) >> 12)
    }
}

/// Signed 16-bit motor speed, 10⁻² rad/s per count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct MotorSpeed(i16);

impl MotorSpeed {
    pub fn from_f64(value: f64) -> Result<Self, CodecError> {
        if !value.is_finite() {
            return Err(CodecError::NonEncodable(value));
        }
        let scaled = (value * MOTOR_SCALE).round();
        Ok(Self(scaled.clamp(i16::MIN as f64, i16::MAX as f64) as i16))
    }

    pub fn from_raw(raw: i16) -> Self {
        Self(raw)
    }

    pub fn raw(self) -> i16 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / MOTOR_SCALE
    }

    pub fn to_bits(self) -> u16 {
        self.0 as u16
    }

    pub fn from_bits(bits: u16) -> Self {
        Self(bits as i16)
    }
}

/// One robot's motion and peripheral command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ControlCommand {
    pub msg_type: MessageType,
    pub robot_id: RobotId,
    /// m/s
    pub vx: Fixed20,
    /// m/s
    pub vy: Fixed20,
    /// rad/s
    pub omega: Fixed20,
    /// rad
    pub theta: Fixed20,
    pub kick_front: bool,
    pub kick_chip: bool,
    pub charge_kick: bool,
    pub kick_strength: u8,
    pub dribbler_on: bool,
    pub dribbler_speed: u8,
    /// Opaque 4-bit command slot.
    pub extra_command: u8,
}

impl ControlCommand {
    /// Zeroed control command addressed to `robot_id`.
    pub fn new(robot_id: RobotId) -> Self {
        Self {
            msg_type: MessageType::Control,
            robot_id,
            vx: Fixed20::default(),
            vy: Fixed20::default(),
            omega: Fixed20::default(),
            theta: Fixed20::default(),
            kick_front: false,
            kick_chip: false,
            charge_kick: false,
            kick_strength: 0,
            dribbler_on: false,
            dribbler_speed: 0,
            extra_command: 0,
        }
    }

    /// Sets the kinematic fields from SI values, quantizing once.
    pub fn with_motion(
        mut self,
        vx: f64,
        vy: f64,
        omega: f64,
        theta: f64,
    ) -> Result<Self, CodecError> {
        self.vx = Fixed20::from_f64(vx)?;
        self.vy = Fixed20::from_f64(vy)?;
        self.omega = Fixed20::from_f64(omega)?;
        self.theta = Fixed20::from_f64(theta)?;
        Ok(self)
    }
}

/// One robot's status report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TelemetryReport {
    pub msg_type: MessageType,
    pub robot_id: RobotId,
    pub m1: MotorSpeed,
    pub m2: MotorSpeed,
    pub m3: MotorSpeed,
    pub m4: MotorSpeed,
    /// 15-bit raw motor units.
    pub dribbler_speed: u16,
    pub kick_capacitor: u8,
    pub ball_detected: bool,
    /// Decivolts.
    pub battery: u8,
}

impl TelemetryReport {
    pub const DRIBBLER_MAX: u16 = 0x7FFF;

    pub fn new(robot_id: RobotId) -> Self {
        Self {
            msg_type: MessageType::Telemetry,
            robot_id,
            m1: MotorSpeed::default(),
            m2: MotorSpeed::default(),
            m3: MotorSpeed::default(),
            m4: MotorSpeed::default(),
            dribbler_speed: 0,
            kick_capacitor: 0,
            ball_detected: false,
            battery: 0,
        }
    }
}

/// Exact on-wire bytes of one frame.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EncodedFrame(Vec<u8>);

impl EncodedFrame {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl AsRef<[u8]> for EncodedFrame {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

fn check_nibble(field: &'static str, value: u8) -> Result<u32, CodecError> {
    if value > 0x0F {
        return Err(CodecError::FieldOutOfRange {
            field,
            value: value as i64,
        });
    }
    Ok(value as u32)
}

fn check_fixed20(field: &'static str, value: Fixed20) -> Result<u32, CodecError> {
    if Fixed20::from_raw(value.raw()).is_none() {
        return Err(CodecError::FieldOutOfRange {
            field,
            value: value.raw() as i64,
        });
    }
    Ok(value.to_bits())
}

pub fn encode_control(cmd: &ControlCommand) -> Result<EncodedFrame, CodecError> {
    let mut w = BitWriter::<CONTROL_FRAME_LEN>::new();
    w.put(check_nibble("msg_type", cmd.msg_type.code())?, 4);
    w.put(check_nibble("robot_id", cmd.robot_id.get())?, 4);
    w.put(check_fixed20("vx", cmd.vx)?, 20);
    w.put(check_fixed20("vy", cmd.vy)?, 20);
    w.put(check_fixed20("omega", cmd.omega)?, 20);
    w.put(check_fixed20("theta", cmd.theta)?, 20);
    w.put_flag(cmd.kick_front);
    w.put_flag(cmd.kick_chip);
    w.put_flag(cmd.charge_kick);
    w.put(cmd.kick_strength as u32, 8);
    w.put_flag(cmd.dribbler_on);
    w.put(cmd.dribbler_speed as u32, 8);
    w.put(check_nibble("extra_command", cmd.extra_command)?, 4);
    Ok(EncodedFrame(w.finish().to_vec()))
}

pub fn decode_control(frame: &[u8]) -> Result<ControlCommand, CodecError> {
    if frame.len() != CONTROL_FRAME_LEN {
        return Err(CodecError::MalformedControl(frame.len()));
    }
    let mut r = BitReader::new(frame);
    let msg_type = MessageType::from_code(r.take(4) as u8)?;
    let robot_id = RobotId::new(r.take(4) as u8)?;
    Ok(ControlCommand {
        msg_type,
        robot_id,
        vx: Fixed20::from_bits(r.take(20)),
        vy: Fixed20::from_bits(r.take(20)),
        omega: Fixed20::from_bits(r.take(20)),
        theta: Fixed20::from_bits(r.take(20)),
        kick_front: r.take_flag(),
        kick_chip: r.take_flag(),
        charge_kick: r.take_flag(),
        kick_strength: r.take(8) as u8,
        dribbler_on: r.take_flag(),
        dribbler_speed: r.take(8) as u8,
        extra_command: r.take(4) as u8,
    })
}

pub fn encode_telemetry(rep: &TelemetryReport) -> Result<EncodedFrame, CodecError> {
    if rep.dribbler_speed > TelemetryReport::DRIBBLER_MAX {
        return Err(CodecError::FieldOutOfRange {
            field: "dribbler_speed",
            value: rep.dribbler_speed as i64,
        });
    }
    let mut w = BitWriter::<TELEMETRY_FRAME_LEN>::new();
    w.put(check_nibble("msg_type", rep.msg_type.code())?, 4);
    w.put(check_nibble("robot_id", rep.robot_id.get())?, 4);
    for m in [rep.m1, rep.m2, rep.m3, rep.m4] {
        w.put(m.to_bits() as u32, 16);
    }
    w.put(rep.dribbler_speed as u32, 15);
    w.put(rep.kick_capacitor as u32, 8);
    w.put_flag(rep.ball_detected);
    w.put(rep.battery as u32, 8);
    Ok(EncodedFrame(w.finish().to_vec()))
}

pub fn decode_telemetry(frame: &[u8]) -> Result<TelemetryReport, CodecError> {
    if frame.len() != TELEMETRY_FRAME_LEN {
        return Err(CodecError::MalformedTelemetry(frame.len()));
    }
    let mut r = BitReader::new(frame);
    let msg_type = MessageType::from_code(r.take(4) as u8)?;
    let robot_id = RobotId::new(r.take(4) as u8)?;
    let mut motor = || MotorSpeed::from_bits(r.take(16) as u16);
    let (m1, m2, m3, m4) = (motor(), motor(), motor(), motor());
    Ok(TelemetryReport {
        msg_type,
        robot_id,
        m1,
        m2,
        m3,
        m4,
        dribbler_speed: r.take(15) as u16,
        kick_capacitor: r.take(8) as u8,
        ball_detected: r.take_flag(),
        battery: r.take(8) as u8,
    })
}

/// Reads the shared one-byte prefix without decoding the rest.
pub fn peek_header(frame: &[u8]) -> Option<(MessageType, RobotId)> {
    let b0 = *frame.first()?;
    Some((
        MessageType::from_code(b0 >> 4).ok()?,
        RobotId::new(b0 & 0x0F).ok()?,
    ))
}
