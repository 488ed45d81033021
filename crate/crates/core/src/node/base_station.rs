//! Base station processor: a single non-preemptive worker that either runs
//! the control pipeline (service, SPI, air) for the head of the TX FIFO or
//! forwards one telemetry frame to the computer.

use std::collections::VecDeque;

use crate::codec::RobotId;
use crate::link::{air_time, spi_time, RadioConfig, MAX_RADIO_PAYLOAD};
use crate::sim::{round_us, SimTime};

#[derive(Debug, Clone, PartialEq)]
pub struct BaseStationParams {
    pub service_time_us: f64,
    pub telemetry_forward_time_us: f64,
    /// Capacity including the frame currently being transmitted.
    pub tx_fifo_depth: usize,
    pub telemetry_busy_blocks_control: bool,
}

impl Default for BaseStationParams {
    fn default() -> Self {
        Self {
            service_time_us: 622.0,
            telemetry_forward_time_us: 100.0,
            tx_fifo_depth: 3,
            telemetry_busy_blocks_control: true,
        }
    }
}

/// Bookkeeping that travels with a control frame so its outcome can be
/// charged to the intended robot even if the bytes are damaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameMeta {
    pub seq: u64,
    pub target: RobotId,
    pub serial_corrupted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueuedFrame {
    pub bytes: Vec<u8>,
    pub meta: FrameMeta,
}

/// Completion the caller must schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BsAction {
    ControlDone { at: SimTime },
    ForwardDone { at: SimTime },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BaseStationCounters {
    pub control_sent: u64,
    pub tx_fifo_drops: u64,
    pub oversized_drops: u64,
    pub telemetry_forwarded: u64,
    /// Total µs control frames were held back by telemetry forwarding.
    pub control_blocked_us: u64,
}

pub struct BaseStationNode {
    pub params: BaseStationParams,
    pub control_radio: RadioConfig,
    tx_fifo: VecDeque<(QueuedFrame, SimTime)>,
    telemetry_jobs: VecDeque<Vec<u8>>,
    control_busy: bool,
    forward_busy: bool,
    last_control_done: SimTime,
    pub counters: BaseStationCounters,
}

impl BaseStationNode {
    pub fn new(params: BaseStationParams, control_radio: RadioConfig) -> Self {
        Self {
            params,
            control_radio,
            tx_fifo: VecDeque::new(),
            telemetry_jobs: VecDeque::new(),
            control_busy: false,
            forward_busy: false,
            last_control_done: 0,
            counters: BaseStationCounters::default(),
        }
    }

    /// Service plus SPI plus air time for one control frame, in µs.
    pub fn control_pipeline_us(&self, len: usize) -> f64 {
        let air = air_time(len, &self.control_radio).expect("length checked on enqueue");
        self.params.service_time_us + spi_time(len, &self.control_radio) + air
    }

    pub fn tx_fifo_len(&self) -> usize {
        self.tx_fifo.len()
    }

    pub fn telemetry_backlog(&self) -> usize {
        self.telemetry_jobs.len()
    }

    pub fn is_idle(&self) -> bool {
        !self.control_busy && !self.forward_busy
    }

    /// Enqueues a control frame from the uplink. `Err` hands the frame back
    /// when it is dropped (FIFO full or too large for the radio).
    pub fn on_uplink(
        &mut self,
        frame: QueuedFrame,
        now: SimTime,
    ) -> Result<Vec<BsAction>, QueuedFrame> {
        if frame.bytes.len() > MAX_RADIO_PAYLOAD {
            self.counters.oversized_drops += 1;
            return Err(frame);
        }
        if self.tx_fifo.len() >= self.params.tx_fifo_depth {
            self.counters.tx_fifo_drops += 1;
            return Err(frame);
        }
        self.tx_fifo.push_back((frame, now));
        Ok(self.dispatch(now))
    }

    /// The head frame finished its air time and is now on the channel.
    pub fn on_control_done(&mut self, now: SimTime) -> (QueuedFrame, Vec<BsAction>) {
        debug_assert!(self.control_busy);
        self.control_busy = false;
        self.last_control_done = now;
        let (frame, _) = self
            .tx_fifo
            .pop_front()
            .expect("control completion without a frame");
        self.counters.control_sent += 1;
        (frame, self.dispatch(now))
    }

    pub fn on_telemetry_rx(&mut self, frame: Vec<u8>, now: SimTime) -> Vec<BsAction> {
        self.telemetry_jobs.push_back(frame);
        self.dispatch(now)
    }

    pub fn on_forward_done(&mut self, now: SimTime) -> (Vec<u8>, Vec<BsAction>) {
        debug_assert!(self.forward_busy);
        self.forward_busy = false;
        let frame = self
            .telemetry_jobs
            .pop_front()
            .expect("forward completion without a job");
        self.counters.telemetry_forwarded += 1;
        (frame, self.dispatch(now))
    }

    fn start_forward(&mut self, now: SimTime) -> BsAction {
        self.forward_busy = true;
        BsAction::ForwardDone {
            at: now + round_us(self.params.telemetry_forward_time_us),
        }
    }

    fn start_control(&mut self, now: SimTime) -> BsAction {
        self.control_busy = true;
        let (head, enqueued) = &self.tx_fifo[0];
        let len = head.bytes.len();
        // Waiting behind earlier control frames is not blocking.
        self.counters.control_blocked_us += now - (*enqueued).max(self.last_control_done);
        BsAction::ControlDone {
            at: now + round_us(self.control_pipeline_us(len)),
        }
    }

    // Shared processor: pending telemetry wins when both are waiting. With
    // blocking disabled the forwarder is an independent server.
    fn dispatch(&mut self, now: SimTime) -> Vec<BsAction> {
        let mut out = Vec::new();
        if self.params.telemetry_busy_blocks_control {
            if self.is_idle() {
                if !self.telemetry_jobs.is_empty() {
                    out.push(self.start_forward(now));
                } else if !self.tx_fifo.is_empty() {
                    out.push(self.start_control(now));
                }
            }
        } else {
            if !self.forward_busy && !self.telemetry_jobs.is_empty() {
                out.push(self.start_forward(now));
            }
            if !self.control_busy && !self.tx_fifo.is_empty() {
                out.push(self.start_control(now));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(seq: u64) -> QueuedFrame {
        QueuedFrame {
            bytes: vec![0; 14],
            meta: FrameMeta {
                seq,
                target: RobotId::new(0).unwrap(),
                serial_corrupted: false,
            },
        }
    }

    fn bs(blocks: bool) -> BaseStationNode {
        let params = BaseStationParams {
            telemetry_busy_blocks_control: blocks,
            ..Default::default()
        };
        BaseStationNode::new(params, RadioConfig::control_default())
    }

    #[test]
    fn pipeline_is_service_spi_air() {
        let b = bs(true);
        assert!((b.control_pipeline_us(14) - 722.0).abs() < 1e-9);
        let p = BaseStationParams {
            service_time_us: 620.0,
            ..Default::default()
        };
        let b = BaseStationNode::new(p, RadioConfig::control_default());
        assert!((b.control_pipeline_us(14) - 720.0).abs() < 1e-9);
    }

    #[test]
    fn fifo_drops_newest_when_full() {
        let mut b = bs(true);
        assert_eq!(
            b.on_uplink(frame(0), 0).unwrap(),
            vec![BsAction::ControlDone { at: 722 }]
        );
        assert!(b.on_uplink(frame(1), 1).unwrap().is_empty());
        assert!(b.on_uplink(frame(2), 2).unwrap().is_empty());
        let dropped = b.on_uplink(frame(3), 3).unwrap_err();
        assert_eq!(dropped.meta.seq, 3);
        assert_eq!(b.counters.tx_fifo_drops, 1);
        let (sent, next) = b.on_control_done(722);
        assert_eq!(sent.meta.seq, 0);
        assert_eq!(next, vec![BsAction::ControlDone { at: 1444 }]);
    }

    #[test]
    fn oversized_frames_are_dropped() {
        let mut b = bs(true);
        let mut f = frame(0);
        f.bytes = vec![0; 33];
        assert!(b.on_uplink(f, 0).is_err());
        assert_eq!(b.counters.oversized_drops, 1);
    }

    #[test]
    fn idle_forward_starts_immediately() {
        let mut b = bs(true);
        assert_eq!(
            b.on_telemetry_rx(vec![1; 13], 1000),
            vec![BsAction::ForwardDone { at: 1100 }]
        );
    }

    #[test]
    fn forward_waits_for_control_then_blocks_next_control() {
        let mut b = bs(true);
        b.on_uplink(frame(0), 0).unwrap();
        assert!(b.on_telemetry_rx(vec![1; 13], 100).is_empty());
        b.on_uplink(frame(1), 500).unwrap();
        let (_, next) = b.on_control_done(722);
        assert_eq!(next, vec![BsAction::ForwardDone { at: 822 }]);
        let (bytes, next) = b.on_forward_done(822);
        assert_eq!(bytes, vec![1; 13]);
        assert_eq!(next, vec![BsAction::ControlDone { at: 1544 }]);
        assert_eq!(b.counters.control_blocked_us, 100);
    }

    #[test]
    fn non_blocking_forwarder_runs_alongside() {
        let mut b = bs(false);
        b.on_uplink(frame(0), 0).unwrap();
        assert_eq!(
            b.on_telemetry_rx(vec![1; 13], 100),
            vec![BsAction::ForwardDone { at: 200 }]
        );
        let (_, next) = b.on_forward_done(200);
        assert!(next.is_empty());
        b.on_uplink(frame(1), 300).unwrap();
        let (_, next) = b.on_control_done(722);
        assert_eq!(next, vec![BsAction::ControlDone { at: 1444 }]);
    }
}
