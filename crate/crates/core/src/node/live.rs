//! Real-time UDP bridge: control datagrams go through a wall-clock base
//! station pipeline into simulated robots; their telemetry comes back as
//! datagrams to the last control sender.
//!
//! Ingress, the control worker and telemetry egress are separate threads.
//! The base station processor is a mutex held for the pipeline or forward
//! duration, so telemetry can delay control by at most one forward time per
//! frame, and a slow telemetry peer never holds it at all.

use std::collections::VecDeque;
use std::io;
use std::net::{IpAddr, Ipv4Addr, SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::base_station::BaseStationParams;
use super::robot::{RobotNode, TELEMETRY_CHECK_US};
use crate::codec::{peek_header, RobotId, CONTROL_FRAME_LEN};
use crate::link::{
    air_time, channel_transmit, spi_time, ChannelModel, RadioConfig, MAX_RADIO_PAYLOAD,
};
use crate::sim::SimTime;

const POLL: Duration = Duration::from_millis(20);

#[derive(Debug, Error)]
pub enum LiveError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: io::Error },
    #[error("socket setup failed: {0}")]
    Io(#[from] io::Error),
    #[error("robot count {0} outside 1..=16")]
    RobotCount(usize),
}

#[derive(Debug, Clone)]
pub struct LiveConfig {
    pub bind_ip: IpAddr,
    /// 0 picks a free port.
    pub control_port: u16,
    /// Port on the control sender's host that receives telemetry.
    pub telemetry_port: u16,
    pub base_station: BaseStationParams,
    pub control_radio: RadioConfig,
    pub channel: ChannelModel,
    pub robot_count: usize,
    pub telemetry_interval_ms: u64,
    pub seed: u64,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            bind_ip: IpAddr::V4(Ipv4Addr::UNSPECIFIED),
            control_port: 10010,
            telemetry_port: 10011,
            base_station: BaseStationParams::default(),
            control_radio: RadioConfig::control_default(),
            channel: ChannelModel::default(),
            robot_count: 1,
            telemetry_interval_ms: 0,
            seed: 1,
        }
    }
}

#[derive(Debug, Default)]
struct Counters {
    ingress: AtomicU64,
    malformed: AtomicU64,
    bs_drops: AtomicU64,
    control_sent: AtomicU64,
    robot_receptions: AtomicU64,
    telemetry_out: AtomicU64,
    telemetry_unrouted: AtomicU64,
    control_blocked_us: AtomicU64,
    telemetry_hold_us: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LiveSnapshot {
    pub ingress: u64,
    pub malformed: u64,
    pub bs_drops: u64,
    pub control_sent: u64,
    pub robot_receptions: u64,
    pub telemetry_out: u64,
    /// Telemetry produced before any control sender was known.
    pub telemetry_unrouted: u64,
    /// Time control frames spent waiting for the processor.
    pub control_blocked_us: u64,
    /// Time the processor spent forwarding telemetry.
    pub telemetry_hold_us: u64,
}

impl Counters {
    fn snapshot(&self) -> LiveSnapshot {
        let g = |a: &AtomicU64| a.load(Ordering::Relaxed);
        LiveSnapshot {
            ingress: g(&self.ingress),
            malformed: g(&self.malformed),
            bs_drops: g(&self.bs_drops),
            control_sent: g(&self.control_sent),
            robot_receptions: g(&self.robot_receptions),
            telemetry_out: g(&self.telemetry_out),
            telemetry_unrouted: g(&self.telemetry_unrouted),
            control_blocked_us: g(&self.control_blocked_us),
            telemetry_hold_us: g(&self.telemetry_hold_us),
        }
    }
}

fn add(a: &AtomicU64, v: u64) {
    a.fetch_add(v, Ordering::Relaxed);
}

/// Sleeps most of the way, then yields until the deadline. OS sleeps
/// overshoot by tens to hundreds of µs, comparable to the pipeline itself.
fn precise_sleep(d: Duration) {
    let deadline = Instant::now() + d;
    let margin = Duration::from_millis(1);
    if d > margin {
        thread::sleep(d - margin);
    }
    while Instant::now() < deadline {
        thread::yield_now();
    }
}

struct Shared {
    cfg: LiveConfig,
    start: Instant,
    stop: AtomicBool,
    counters: Counters,
    fifo: Mutex<VecDeque<Vec<u8>>>,
    fifo_ready: Condvar,
    processor: Mutex<()>,
    last_sender: Mutex<Option<IpAddr>>,
    robots: Mutex<Vec<RobotNode>>,
}

impl Shared {
    fn now_us(&self) -> SimTime {
        self.start.elapsed().as_micros() as SimTime
    }

    fn stopped(&self) -> bool {
        self.stop.load(Ordering::Relaxed)
    }
}

pub struct LiveBridge {
    shared: Arc<Shared>,
    control_addr: SocketAddr,
    threads: Vec<JoinHandle<()>>,
}

impl LiveBridge {
    pub fn start(cfg: LiveConfig) -> Result<Self, LiveError> {
        if !(1..=16).contains(&cfg.robot_count) {
            return Err(LiveError::RobotCount(cfg.robot_count));
        }
        let addr = SocketAddr::new(cfg.bind_ip, cfg.control_port);
        let socket = UdpSocket::bind(addr).map_err(|source| LiveError::Bind { addr, source })?;
        socket.set_read_timeout(Some(POLL))?;
        let control_addr = socket.local_addr()?;
        let out_socket = UdpSocket::bind(SocketAddr::new(cfg.bind_ip, 0))?;

        let robots = (0..cfg.robot_count)
            .map(|r| {
                let mut robot = RobotNode::new(
                    RobotId::new(r as u8).expect("checked"),
                    cfg.telemetry_interval_ms,
                );
                robot.boot(0);
                robot
            })
            .collect();
        let shared = Arc::new(Shared {
            cfg,
            start: Instant::now(),
            stop: AtomicBool::new(false),
            counters: Counters::default(),
            fifo: Mutex::new(VecDeque::new()),
            fifo_ready: Condvar::new(),
            processor: Mutex::new(()),
            last_sender: Mutex::new(None),
            robots: Mutex::new(robots),
        });

        let (tx, rx) = mpsc::channel();
        let mut threads = Vec::new();
        let s = Arc::clone(&shared);
        threads.push(thread::spawn(move || ingress(&s, &socket)));
        let s = Arc::clone(&shared);
        threads.push(thread::spawn(move || control_worker(&s)));
        let s = Arc::clone(&shared);
        threads.push(thread::spawn(move || telemetry_timer(&s, &tx)));
        let s = Arc::clone(&shared);
        threads.push(thread::spawn(move || {
            telemetry_egress(&s, &rx, &out_socket)
        }));
        Ok(Self {
            shared,
            control_addr,
            threads,
        })
    }

    pub fn control_addr(&self) -> SocketAddr {
        self.control_addr
    }

    pub fn counters(&self) -> LiveSnapshot {
        self.shared.counters.snapshot()
    }

    /// Reception times (µs since start) logged by robot `r`.
    pub fn robot_arrivals(&self, r: usize) -> Vec<SimTime> {
        self.shared
            .robots
            .lock()
            .expect("robot lock")
            .get(r)
            .map(|x| x.arrival_log.clone())
            .unwrap_or_default()
    }

    pub fn is_stopped(&self) -> bool {
        self.shared.stopped()
    }

    pub fn stop_handle(&self) -> impl Fn() + Send + Sync + 'static {
        let s = Arc::clone(&self.shared);
        move || {
            s.stop.store(true, Ordering::Relaxed);
            s.fifo_ready.notify_all();
        }
    }

    pub fn shutdown(mut self) -> LiveSnapshot {
        self.stop_threads();
        self.counters()
    }

    fn stop_threads(&mut self) {
        self.shared.stop.store(true, Ordering::Relaxed);
        self.shared.fifo_ready.notify_all();
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for LiveBridge {
    fn drop(&mut self) {
        self.stop_threads();
    }
}

fn ingress(s: &Shared, socket: &UdpSocket) {
    let mut buf = [0u8; 1500];
    while !s.stopped() {
        let (n, from) = match socket.recv_from(&mut buf) {
            Ok(x) => x,
            Err(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                ) =>
            {
                continue
            }
            Err(_) => continue,
        };
        add(&s.counters.ingress, 1);
        if !(CONTROL_FRAME_LEN..=MAX_RADIO_PAYLOAD).contains(&n) {
            add(&s.counters.malformed, 1);
            continue;
        }
        *s.last_sender.lock().expect("sender lock") = Some(from.ip());
        let mut fifo = s.fifo.lock().expect("fifo lock");
        if fifo.len() >= s.cfg.base_station.tx_fifo_depth {
            add(&s.counters.bs_drops, 1);
            continue;
        }
        fifo.push_back(buf[..n].to_vec());
        s.fifo_ready.notify_one();
    }
}

fn control_worker(s: &Shared) {
    let radio = &s.cfg.control_radio;
    let mut rngs: Vec<ChaCha8Rng> = (0..s.cfg.robot_count)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(s.cfg.seed);
            rng.set_stream(2 * r as u64);
            rng
        })
        .collect();
    loop {
        // The frame stays at the FIFO head while it is being transmitted.
        let frame = {
            let mut fifo = s.fifo.lock().expect("fifo lock");
            while fifo.is_empty() && !s.stopped() {
                fifo = s.fifo_ready.wait_timeout(fifo, POLL).expect("fifo lock").0;
            }
            match fifo.front() {
                Some(f) if !s.stopped() => f.clone(),
                _ => return,
            }
        };
        let len = frame.len();
        let pipeline = s.cfg.base_station.service_time_us
            + spi_time(len, radio)
            + air_time(len, radio).expect("ingress bounds the length");
        let waiting = Instant::now();
        {
            let _busy = s.processor.lock().expect("processor lock");
            add(
                &s.counters.control_blocked_us,
                waiting.elapsed().as_micros() as u64,
            );
            precise_sleep(Duration::from_secs_f64(pipeline * 1e-6));
        }
        s.fifo.lock().expect("fifo lock").pop_front();
        add(&s.counters.control_sent, 1);
        let now = s.now_us();
        let target = peek_header(&frame).map(|(_, id)| id.get() as usize);
        let mut robots = s.robots.lock().expect("robot lock");
        for (r, robot) in robots.iter_mut().enumerate() {
            let outcome = channel_transmit(&frame, &s.cfg.channel, &mut rngs[r]);
            if let Some(bytes) = outcome.bytes() {
                if robot.on_radio_rx(bytes, now) && target == Some(r) {
                    add(&s.counters.robot_receptions, 1);
                }
            }
        }
    }
}

fn telemetry_timer(s: &Shared, tx: &mpsc::Sender<Vec<u8>>) {
    let n = s.cfg.robot_count;
    let mut rngs: Vec<ChaCha8Rng> = (0..n)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(s.cfg.seed);
            rng.set_stream(2 * r as u64 + 1);
            rng
        })
        .collect();
    if s.cfg.telemetry_interval_ms == 0 {
        return;
    }
    let step = Duration::from_micros(TELEMETRY_CHECK_US);
    let mut tick: SimTime = 0;
    while !s.stopped() {
        tick += TELEMETRY_CHECK_US;
        // Nominal tick time, so wake-up latency does not stretch the period.
        let due = s.start + step * (tick / TELEMETRY_CHECK_US) as u32;
        if let Some(d) = due.checked_duration_since(Instant::now()) {
            thread::sleep(d);
        }
        let now = tick;
        let frames: Vec<_> = {
            let mut robots = s.robots.lock().expect("robot lock");
            robots
                .iter_mut()
                .enumerate()
                .filter_map(|(r, robot)| robot.telemetry_tick(now).map(|f| (r, f)))
                .collect()
        };
        for (r, f) in frames {
            if let Some(bytes) =
                channel_transmit(f.as_bytes(), &s.cfg.channel, &mut rngs[r]).bytes()
            {
                if tx.send(bytes.to_vec()).is_err() {
                    return;
                }
            }
        }
    }
}

fn telemetry_egress(s: &Shared, rx: &mpsc::Receiver<Vec<u8>>, socket: &UdpSocket) {
    let forward = Duration::from_secs_f64(s.cfg.base_station.telemetry_forward_time_us * 1e-6);
    while !s.stopped() {
        let Ok(frame) = rx.recv_timeout(POLL) else {
            continue;
        };
        if s.cfg.base_station.telemetry_busy_blocks_control {
            let _busy = s.processor.lock().expect("processor lock");
            precise_sleep(forward);
            add(&s.counters.telemetry_hold_us, forward.as_micros() as u64);
        }
        let dest = *s.last_sender.lock().expect("sender lock");
        match dest {
            Some(ip) => {
                // A send error means the peer is gone; keep serving control.
                if socket
                    .send_to(&frame, SocketAddr::new(ip, s.cfg.telemetry_port))
                    .is_ok()
                {
                    add(&s.counters.telemetry_out, 1);
                }
            }
            None => add(&s.counters.telemetry_unrouted, 1),
        }
    }
}
