//! Wires computer, base station and robots onto the event engine and runs a
//! scenario until every controlled robot has a full measurement window.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::base_station::{BaseStationNode, BaseStationParams, BsAction, FrameMeta, QueuedFrame};
use super::computer::ComputerNode;
use super::robot::{RobotNode, TELEMETRY_CHECK_US};
use crate::codec::{RobotId, TELEMETRY_FRAME_LEN};
use crate::link::{
    air_time, channel_transmit, serial_transfer, spi_time, ChannelModel, LinkError, RadioConfig,
    TransmitOutcome, UplinkModel,
};
use crate::metrics::{compute_stats, DeliveryStats, FrameCounters, MetricsError};
use crate::sim::{round_us, Engine, EventKind, NodeId, SimEvent, SimTime};

pub const COMPUTER: NodeId = NodeId(0);
pub const BASE_STATION: NodeId = NodeId(1);

pub fn robot_node(r: usize) -> NodeId {
    NodeId(2 + r as u32)
}

/// Simulated time advanced between completion checks.
const RUN_CHUNK_US: SimTime = 10_000;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("robot count {0} outside 1..=16")]
    RobotCount(usize),
    #[error("{controlled} controlled robots but only {count} exist")]
    Controlled { controlled: usize, count: usize },
    #[error("send interval must be positive")]
    ZeroInterval,
    #[error("{0} per-robot distances given for {1} robots")]
    Distances(usize, usize),
    #[error(transparent)]
    Link(#[from] LinkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TelemetryPhase {
    /// Robot `r` of `n` boots at `r * interval / n`.
    Staggered,
    /// All robots boot together.
    Aligned,
}

#[derive(Debug, Clone)]
pub struct NetworkParams {
    pub seed: u64,
    pub send_interval_us: SimTime,
    pub robot_count: usize,
    /// Robots `0..controlled_robots` receive commands; 0 means all.
    pub controlled_robots: usize,
    /// 0 disables telemetry.
    pub telemetry_interval_ms: u64,
    pub telemetry_phase: TelemetryPhase,
    pub base_station: BaseStationParams,
    pub control_radio: RadioConfig,
    pub telemetry_radio: RadioConfig,
    pub channel: ChannelModel,
    /// Per-robot distance overrides; empty uses `channel.distance_m`.
    pub robot_distances: Vec<f64>,
    pub uplink: UplinkModel,
    pub window: usize,
    pub warmup: usize,
    pub max_time_us: SimTime,
    pub record_trace: bool,
}

impl Default for NetworkParams {
    fn default() -> Self {
        Self {
            seed: 1,
            send_interval_us: 500,
            robot_count: 1,
            controlled_robots: 0,
            telemetry_interval_ms: 0,
            telemetry_phase: TelemetryPhase::Staggered,
            base_station: BaseStationParams::default(),
            control_radio: RadioConfig::control_default(),
            telemetry_radio: RadioConfig::telemetry_default(),
            channel: ChannelModel::default(),
            robot_distances: Vec::new(),
            uplink: UplinkModel::default(),
            window: crate::metrics::DEFAULT_WINDOW,
            warmup: crate::metrics::DEFAULT_WARMUP,
            max_time_us: 120_000_000,
            record_trace: false,
        }
    }
}

impl NetworkParams {
    pub fn controlled(&self) -> usize {
        if self.controlled_robots == 0 {
            self.robot_count
        } else {
            self.controlled_robots
        }
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if !(1..=16).contains(&self.robot_count) {
            return Err(NetworkError::RobotCount(self.robot_count));
        }
        if self.controlled() > self.robot_count {
            return Err(NetworkError::Controlled {
                controlled: self.controlled_robots,
                count: self.robot_count,
            });
        }
        if self.send_interval_us == 0 {
            return Err(NetworkError::ZeroInterval);
        }
        if !self.robot_distances.is_empty() && self.robot_distances.len() != self.robot_count {
            return Err(NetworkError::Distances(
                self.robot_distances.len(),
                self.robot_count,
            ));
        }
        self.channel.validate()?;
        air_time(TELEMETRY_FRAME_LEN, &self.telemetry_radio)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NetEvent {
    ComputerSend,
    UplinkArrival(FrameMeta),
    ControlTxDone,
    RadioRx,
    TelemetryTimer,
    TelemetryAirDone { tx: u64 },
    TelemetryRx,
    ForwardDone,
    ComputerTelemetryRx,
}

impl EventKind for NetEvent {
    fn label(&self) -> &'static str {
        match self {
            NetEvent::ComputerSend => "COMPUTER_SEND",
            NetEvent::UplinkArrival(_) => "UPLINK_ARRIVAL",
            NetEvent::ControlTxDone => "CONTROL_TX_DONE",
            NetEvent::RadioRx => "RADIO_RX",
            NetEvent::TelemetryTimer => "TELEMETRY_TIMER",
            NetEvent::TelemetryAirDone { .. } => "TELEMETRY_AIR_DONE",
            NetEvent::TelemetryRx => "TELEMETRY_RX",
            NetEvent::ForwardDone => "FORWARD_DONE",
            NetEvent::ComputerTelemetryRx => "COMPUTER_TELEMETRY_RX",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TelemetryCounters {
    pub sent: u64,
    pub collided: u64,
    pub lost: u64,
    pub corrupt_dropped: u64,
    pub forwarded: u64,
    pub received: u64,
}

#[derive(Debug, Clone)]
struct TelemetryTx {
    robot: usize,
    start: SimTime,
    end: SimTime,
    bytes: Vec<u8>,
    collided: bool,
}

/// One direction of a serial line: when its last queued byte finishes.
#[derive(Debug, Clone, Copy, Default)]
struct SerialLine {
    free_at: f64,
}

#[derive(Debug, Clone)]
pub struct RobotRun {
    pub id: RobotId,
    pub controlled: bool,
    pub arrivals: Vec<SimTime>,
    pub counters: FrameCounters,
    pub telemetry_times: Vec<SimTime>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub robots: Vec<RobotRun>,
    pub telemetry: TelemetryCounters,
    pub control_blocked_us: u64,
    pub end_time: SimTime,
    pub events: u64,
    /// True when every controlled robot collected a full window.
    pub satisfied: bool,
    pub trace_hash: String,
    pub trace: Vec<String>,
}

impl RunResult {
    pub fn stats(
        &self,
        robot: usize,
        window: usize,
        warmup: usize,
    ) -> Result<DeliveryStats, MetricsError> {
        let r = &self.robots[robot];
        Ok(compute_stats(r.id, &r.arrivals, window, warmup)?.with_counters(&r.counters))
    }

    pub fn is_conserved(&self) -> bool {
        self.robots.iter().all(|r| r.counters.is_conserved())
    }
}

struct Network {
    params: NetworkParams,
    computer: ComputerNode,
    base: BaseStationNode,
    robots: Vec<RobotNode>,
    counters: Vec<FrameCounters>,
    control_rngs: Vec<ChaCha8Rng>,
    telemetry_rngs: Vec<ChaCha8Rng>,
    channels: Vec<ChannelModel>,
    down_line: SerialLine,
    up_line: SerialLine,
    in_air: BTreeMap<u64, TelemetryTx>,
    next_tx: u64,
    next_seq: u64,
    telemetry: TelemetryCounters,
    draining: bool,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl Network {
    fn new(params: NetworkParams) -> Self {
        let n = params.robot_count;
        let ids: Vec<RobotId> = (0..n)
            .map(|r| RobotId::new(r as u8).expect("validated"))
            .collect();
        let computer =
            ComputerNode::new(params.send_interval_us, ids[..params.controlled()].to_vec());
        let base = BaseStationNode::new(params.base_station.clone(), params.control_radio.clone());
        let robots = ids
            .iter()
            .map(|&id| RobotNode::new(id, params.telemetry_interval_ms))
            .collect();
        let channels = (0..n)
            .map(|r| match params.robot_distances.get(r) {
                Some(&d) => params.channel.at_distance(d),
                None => params.channel.clone(),
            })
            .collect();
        Self {
            computer,
            base,
            robots,
            counters: vec![FrameCounters::default(); n],
            control_rngs: (0..n)
                .map(|r| stream_rng(params.seed, 2 * r as u64))
                .collect(),
            telemetry_rngs: (0..n)
                .map(|r| stream_rng(params.seed, 2 * r as u64 + 1))
                .collect(),
            channels,
            down_line: SerialLine::default(),
            up_line: SerialLine::default(),
            in_air: BTreeMap::new(),
            next_tx: 0,
            next_seq: 0,
            telemetry: TelemetryCounters::default(),
            draining: false,
            params,
        }
    }

    fn boot(&mut self, eng: &mut Engine<NetEvent>) {
        if !self.computer.robot_ids().is_empty() {
            eng.schedule_in(0, COMPUTER, NetEvent::ComputerSend, vec![]);
        }
        let n = self.robots.len() as u64;
        for (r, robot) in self.robots.iter_mut().enumerate() {
            if !robot.telemetry_enabled() {
                continue;
            }
            let offset = match self.params.telemetry_phase {
                TelemetryPhase::Staggered => r as u64 * robot.telemetry_interval_us / n,
                TelemetryPhase::Aligned => 0,
            };
            robot.boot(offset);
            eng.schedule_in(
                offset + TELEMETRY_CHECK_US,
                robot_node(r),
                NetEvent::TelemetryTimer,
                vec![],
            );
        }
    }

    fn satisfied(&self) -> bool {
        let need = self.params.warmup + self.params.window + 1;
        self.robots[..self.params.controlled()]
            .iter()
            .all(|r| r.arrival_log.len() >= need)
    }

    /// Returns the arrival time and the bytes as they leave the uplink.
    fn uplink(
        line: &mut SerialLine,
        model: &UplinkModel,
        frame: &[u8],
        now: SimTime,
    ) -> (SimTime, TransmitOutcome) {
        match model {
            UplinkModel::Ethernet { latency_us } => (
                now + round_us(*latency_us),
                TransmitOutcome::Delivered(frame.to_vec()),
            ),
            UplinkModel::Serial(link) => {
                let bt = link.byte_time();
                let t = now as f64;
                let pending = ((line.free_at - t) / bt).max(0.0);
                let depth = (pending - 1e-9).ceil().max(0.0) as usize;
                let (_, outcome) = serial_transfer(frame, link, depth);
                let occupied = (pending + frame.len() as f64).min(link.buffer_bytes as f64);
                line.free_at = t + occupied * bt;
                (round_us(line.free_at), outcome)
            }
        }
    }

    fn apply(eng: &mut Engine<NetEvent>, actions: Vec<BsAction>) {
        for a in actions {
            let (at, kind) = match a {
                BsAction::ControlDone { at } => (at, NetEvent::ControlTxDone),
                BsAction::ForwardDone { at } => (at, NetEvent::ForwardDone),
            };
            eng.schedule(at, BASE_STATION, kind, vec![])
                .expect("completion lies in the future");
        }
    }

    fn handle(&mut self, eng: &mut Engine<NetEvent>, ev: SimEvent<NetEvent>) {
        let now = ev.time;
        match ev.kind {
            NetEvent::ComputerSend => {
                if self.draining {
                    return;
                }
                let Some((target, frame)) = self.computer.tick(now) else {
                    return;
                };
                self.counters[target.get() as usize].sent += 1;
                let (at, outcome) = Self::uplink(
                    &mut self.down_line,
                    &self.params.uplink,
                    frame.as_bytes(),
                    now,
                );
                let meta = FrameMeta {
                    seq: self.next_seq,
                    target,
                    serial_corrupted: matches!(outcome, TransmitOutcome::CorruptDelivered(_)),
                };
                self.next_seq += 1;
                let bytes = outcome.bytes().expect("serial never loses bytes").to_vec();
                eng.schedule(at, BASE_STATION, NetEvent::UplinkArrival(meta), bytes)
                    .expect("future");
                if let Some(next) = self.computer.next_tick(now) {
                    eng.schedule(next, COMPUTER, NetEvent::ComputerSend, vec![])
                        .expect("future");
                }
            }
            NetEvent::UplinkArrival(meta) => {
                let frame = QueuedFrame {
                    bytes: ev.payload,
                    meta,
                };
                match self.base.on_uplink(frame, now) {
                    Ok(actions) => Self::apply(eng, actions),
                    Err(dropped) => self.counters[dropped.meta.target.get() as usize].bs_drops += 1,
                }
            }
            NetEvent::ControlTxDone => {
                let (frame, actions) = self.base.on_control_done(now);
                Self::apply(eng, actions);
                // Broadcast: every robot hears the frame through its own link.
                for r in 0..self.robots.len() {
                    let outcome = channel_transmit(
                        &frame.bytes,
                        &self.channels[r],
                        &mut self.control_rngs[r],
                    );
                    if r == frame.meta.target.get() as usize {
                        let c = &mut self.counters[r];
                        match &outcome {
                            TransmitOutcome::Delivered(_) if frame.meta.serial_corrupted => {
                                c.corrupt_delivered += 1
                            }
                            TransmitOutcome::Delivered(_)
                            | TransmitOutcome::CorruptDelivered(_) => c.delivered += 1,
                            TransmitOutcome::Lost => c.lost += 1,
                            TransmitOutcome::CorruptDropped => c.corrupt_dropped += 1,
                        }
                    }
                    if let Some(bytes) = outcome.bytes() {
                        eng.schedule_in(0, robot_node(r), NetEvent::RadioRx, bytes.to_vec());
                    }
                }
            }
            NetEvent::RadioRx => {
                let r = (ev.target.0 - 2) as usize;
                self.robots[r].on_radio_rx(&ev.payload, now);
            }
            NetEvent::TelemetryTimer => {
                if self.draining {
                    return;
                }
                let r = (ev.target.0 - 2) as usize;
                if let Some(frame) = self.robots[r].telemetry_tick(now) {
                    self.telemetry.sent += 1;
                    let radio = &self.params.telemetry_radio;
                    let spi = spi_time(frame.len(), radio);
                    let air = air_time(frame.len(), radio).expect("validated");
                    let start = round_us(now as f64 + spi);
                    let end = round_us(now as f64 + spi + air);
                    let mut collided = false;
                    if self.channels[r].collisions_enabled {
                        for other in self.in_air.values_mut() {
                            if other.start < end && start < other.end {
                                other.collided = true;
                                collided = true;
                            }
                        }
                    }
                    let tx = self.next_tx;
                    self.next_tx += 1;
                    self.in_air.insert(
                        tx,
                        TelemetryTx {
                            robot: r,
                            start,
                            end,
                            bytes: frame.into_bytes(),
                            collided,
                        },
                    );
                    eng.schedule(
                        end,
                        robot_node(r),
                        NetEvent::TelemetryAirDone { tx },
                        vec![],
                    )
                    .expect("future");
                }
                eng.schedule_in(
                    TELEMETRY_CHECK_US,
                    ev.target,
                    NetEvent::TelemetryTimer,
                    vec![],
                );
            }
            NetEvent::TelemetryAirDone { tx } => {
                let t = self
                    .in_air
                    .remove(&tx)
                    .expect("unknown telemetry transmission");
                if t.collided {
                    self.telemetry.collided += 1;
                    return;
                }
                let r = t.robot;
                match channel_transmit(&t.bytes, &self.channels[r], &mut self.telemetry_rngs[r]) {
                    TransmitOutcome::Delivered(b) | TransmitOutcome::CorruptDelivered(b) => {
                        eng.schedule_in(0, BASE_STATION, NetEvent::TelemetryRx, b);
                    }
                    TransmitOutcome::Lost => self.telemetry.lost += 1,
                    TransmitOutcome::CorruptDropped => self.telemetry.corrupt_dropped += 1,
                }
            }
            NetEvent::TelemetryRx => {
                let actions = self.base.on_telemetry_rx(ev.payload, now);
                Self::apply(eng, actions);
            }
            NetEvent::ForwardDone => {
                let (bytes, actions) = self.base.on_forward_done(now);
                Self::apply(eng, actions);
                self.telemetry.forwarded += 1;
                let (at, outcome) =
                    Self::uplink(&mut self.up_line, &self.params.uplink, &bytes, now);
                let bytes = outcome.bytes().expect("serial never loses bytes").to_vec();
                eng.schedule(at, COMPUTER, NetEvent::ComputerTelemetryRx, bytes)
                    .expect("future");
            }
            NetEvent::ComputerTelemetryRx => {
                self.telemetry.received += 1;
                self.computer.on_telemetry(&ev.payload, now);
            }
        }
    }
}

/// A configured network ready to run.
pub struct Simulation {
    engine: Engine<NetEvent>,
    net: Network,
}

impl Simulation {
    pub fn new(params: NetworkParams) -> Result<Self, NetworkError> {
        params.validate()?;
        let mut engine = Engine::new();
        if params.record_trace {
            engine.record_trace_lines();
        }
        let mut net = Network::new(params);
        net.boot(&mut engine);
        Ok(Self { engine, net })
    }

    /// Runs in chunks until the window is filled or the time cap is hit,
    /// then stops the sources and drains in-flight frames so every sent
    /// frame has an outcome.
    pub fn run(mut self) -> RunResult {
        let max = self.net.params.max_time_us;
        loop {
            let t = (self.engine.now() + RUN_CHUNK_US).min(max);
            let net = &mut self.net;
            self.engine.run_until(t, |eng, ev| net.handle(eng, ev));
            if self.net.satisfied() || self.engine.now() >= max {
                break;
            }
        }
        let satisfied = self.net.satisfied();
        self.net.draining = true;
        let net = &mut self.net;
        self.engine.run_to_completion(|eng, ev| net.handle(eng, ev));

        let controlled = self.net.params.controlled();
        let robots = self
            .net
            .robots
            .iter()
            .zip(&self.net.counters)
            .enumerate()
            .map(|(r, (robot, c))| RobotRun {
                id: robot.my_id,
                controlled: r < controlled,
                arrivals: robot.arrival_log.clone(),
                counters: *c,
                telemetry_times: robot.telemetry_log.clone(),
            })
            .collect();
        RunResult {
            robots,
            telemetry: self.net.telemetry,
            control_blocked_us: self.net.base.counters.control_blocked_us,
            end_time: self.engine.now(),
            events: self.engine.dispatched(),
            satisfied,
            trace_hash: self.engine.trace_hash(),
            trace: self.engine.take_trace_lines(),
        }
    }
}

pub fn run_network(params: NetworkParams) -> Result<RunResult, NetworkError> {
    Ok(Simulation::new(params)?.run())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(window: usize) -> NetworkParams {
        NetworkParams {
            window,
            warmup: 5,
            ..Default::default()
        }
    }

    #[test]
    fn single_robot_runs_at_pipeline_rate() {
        let res = run_network(small(50)).unwrap();
        assert!(res.satisfied);
        let s = res.stats(0, 50, 5).unwrap();
        assert_eq!(s.mean, 722.0);
        assert_eq!(s.stddev, 0.0);
        assert!(res.is_conserved());
    }

    #[test]
    fn slow_sender_is_not_throttled() {
        let p = NetworkParams {
            send_interval_us: 1000,
            ..small(50)
        };
        let res = run_network(p).unwrap();
        assert_eq!(res.stats(0, 50, 5).unwrap().mean, 1000.0);
        assert_eq!(res.robots[0].counters.bs_drops, 0);
    }

    #[test]
    fn bad_params_are_rejected() {
        assert!(matches!(
            run_network(NetworkParams {
                robot_count: 17,
                ..Default::default()
            }),
            Err(NetworkError::RobotCount(17))
        ));
        assert!(matches!(
            run_network(NetworkParams {
                controlled_robots: 2,
                ..Default::default()
            }),
            Err(NetworkError::Controlled { .. })
        ));
    }

    #[test]
    fn trace_lines_use_node_ids() {
        let p = NetworkParams {
            record_trace: true,
            ..small(3)
        };
        let res = run_network(p).unwrap();
        assert_eq!(res.trace[0], "0 0 0 COMPUTER_SEND");
        assert!(res.trace.iter().any(|l| l.ends_with(" 2 RADIO_RX")));
    }
}
