use crate::codec::{
    decode_telemetry, encode_control, ControlCommand, EncodedFrame, RobotId, TelemetryReport,
};
use crate::sim::SimTime;

/// Produces the command the computer sends to a robot at a given instant.
pub trait CommandSource: Send {
    fn command(&mut self, robot: RobotId, now: SimTime) -> ControlCommand;
}

/// Fixed per-robot command: a gentle forward drive with the dribbler on.
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateCommands;

impl CommandSource for TemplateCommands {
    fn command(&mut self, robot: RobotId, _now: SimTime) -> ControlCommand {
        let k = robot.get() as f64;
        let mut cmd = ControlCommand::new(robot)
            .with_motion(0.5, 0.05 * k, 1.0, 0.1 * k)
            .expect("template values are finite");
        cmd.dribbler_on = true;
        cmd.dribbler_speed = 120;
        cmd
    }
}

pub struct ComputerNode {
    pub send_interval_us: SimTime,
    robot_ids: Vec<RobotId>,
    cursor: usize,
    source: Box<dyn CommandSource>,
    pub received_telemetry: Vec<(SimTime, TelemetryReport)>,
    pub malformed_telemetry: u64,
}

impl ComputerNode {
    pub fn new(send_interval_us: SimTime, robot_ids: Vec<RobotId>) -> Self {
        Self::with_source(send_interval_us, robot_ids, Box::new(TemplateCommands))
    }

    pub fn with_source(
        send_interval_us: SimTime,
        robot_ids: Vec<RobotId>,
        source: Box<dyn CommandSource>,
    ) -> Self {
        Self {
            send_interval_us,
            robot_ids,
            cursor: 0,
            source,
            received_telemetry: Vec::new(),
            malformed_telemetry: 0,
        }
    }

    pub fn robot_ids(&self) -> &[RobotId] {
        &self.robot_ids
    }

    /// Encodes the command for the robot under the round-robin cursor and
    /// advances the cursor. `None` when there is nobody to command.
    pub fn tick(&mut self, now: SimTime) -> Option<(RobotId, EncodedFrame)> {
        let target = *self.robot_ids.get(self.cursor)?;
        self.cursor = (self.cursor + 1) % self.robot_ids.len();
        let cmd = self.source.command(target, now);
        let frame = encode_control(&cmd).expect("command source produced an out-of-range command");
        Some((target, frame))
    }

    pub fn next_tick(&self, now: SimTime) -> Option<SimTime> {
        (!self.robot_ids.is_empty()).then_some(now + self.send_interval_us)
    }

    pub fn on_telemetry(&mut self, frame: &[u8], now: SimTime) {
        match decode_telemetry(frame) {
            Ok(rep) => self.received_telemetry.push((now, rep)),
            Err(_) => self.malformed_telemetry += 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::decode_control;

    fn ids(n: u8) -> Vec<RobotId> {
        (0..n).map(|i| RobotId::new(i).unwrap()).collect()
    }

    #[test]
    fn round_robin_targets() {
        let mut c = ComputerNode::new(500, ids(6));
        let targets: Vec<u8> = (0..8).map(|k| c.tick(k * 500).unwrap().0.get()).collect();
        assert_eq!(targets, vec![0, 1, 2, 3, 4, 5, 0, 1]);
    }

    #[test]
    fn single_robot_schedule() {
        let mut c = ComputerNode::new(500, ids(1));
        let mut t = 0;
        let mut times = vec![];
        for _ in 0..4 {
            let (id, frame) = c.tick(t).unwrap();
            assert_eq!(id.get(), 0);
            assert_eq!(frame.len(), 14);
            assert_eq!(decode_control(frame.as_bytes()).unwrap().robot_id, id);
            times.push(t);
            t = c.next_tick(t).unwrap();
        }
        assert_eq!(times, vec![0, 500, 1000, 1500]);
    }

    #[test]
    fn empty_robot_list_sends_nothing() {
        let mut c = ComputerNode::new(500, vec![]);
        assert!(c.tick(0).is_none());
        assert!(c.next_tick(0).is_none());
    }
}
