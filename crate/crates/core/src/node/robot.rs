use crate::codec::{
    decode_control, encode_telemetry, EncodedFrame, MessageType, MotorSpeed, RobotId,
    TelemetryReport,
};
use crate::sim::SimTime;

/// How often a robot checks whether telemetry is due.
pub const TELEMETRY_CHECK_US: SimTime = 1_000;

pub trait TelemetrySource: Send {
    fn report(&mut self, robot: RobotId, now: SimTime) -> TelemetryReport;
}

/// Constant status per robot: wheels turning, capacitor charged, 16.8 V.
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateTelemetry;

impl TelemetrySource for TemplateTelemetry {
    fn report(&mut self, robot: RobotId, _now: SimTime) -> TelemetryReport {
        let mut rep = TelemetryReport::new(robot);
        rep.m1 = MotorSpeed::from_raw(1200);
        rep.m2 = MotorSpeed::from_raw(-1200);
        rep.m3 = MotorSpeed::from_raw(1150);
        rep.m4 = MotorSpeed::from_raw(-1150);
        rep.dribbler_speed = 3000;
        rep.kick_capacitor = 200;
        rep.battery = 168;
        rep
    }
}

pub struct RobotNode {
    pub my_id: RobotId,
    /// 0 disables telemetry.
    pub telemetry_interval_us: SimTime,
    last_telemetry_sent: SimTime,
    pub arrival_log: Vec<SimTime>,
    pub telemetry_log: Vec<SimTime>,
    /// Frames heard on the shared channel but addressed elsewhere.
    pub discarded: u64,
    source: Box<dyn TelemetrySource>,
}

impl RobotNode {
    pub fn new(my_id: RobotId, telemetry_interval_ms: u64) -> Self {
        Self {
            my_id,
            telemetry_interval_us: telemetry_interval_ms * 1_000,
            last_telemetry_sent: 0,
            arrival_log: Vec::new(),
            telemetry_log: Vec::new(),
            discarded: 0,
            source: Box::new(TemplateTelemetry),
        }
    }

    pub fn with_source(mut self, source: Box<dyn TelemetrySource>) -> Self {
        self.source = source;
        self
    }

    pub fn telemetry_enabled(&self) -> bool {
        self.telemetry_interval_us > 0
    }

    /// Starts the telemetry clock; the first report is due one interval later.
    pub fn boot(&mut self, now: SimTime) {
        self.last_telemetry_sent = now;
    }

    /// Logs `now` if the frame is a control frame for this robot.
    pub fn on_radio_rx(&mut self, frame: &[u8], now: SimTime) -> bool {
        match decode_control(frame) {
            Ok(cmd) if cmd.msg_type == MessageType::Control && cmd.robot_id == self.my_id => {
                self.arrival_log.push(now);
                true
            }
            _ => {
                self.discarded += 1;
                false
            }
        }
    }

    pub fn telemetry_tick(&mut self, now: SimTime) -> Option<EncodedFrame> {
        if !self.telemetry_enabled() || now - self.last_telemetry_sent < self.telemetry_interval_us
        {
            return None;
        }
        self.last_telemetry_sent = now;
        self.telemetry_log.push(now);
        let rep = self.source.report(self.my_id, now);
        Some(encode_telemetry(&rep).expect("telemetry source produced an out-of-range report"))
    }
}
