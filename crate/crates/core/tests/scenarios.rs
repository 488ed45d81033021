//! End-to-end behaviour of the simulated network, checked against
//! hand-computed timings.

use sslnet::config::ScenarioConfig;
use sslnet::experiment::{distance_sweep, telemetry_sweep};
use sslnet::link::{
    air_time, spi_time, ChannelModel, LossTable, RadioConfig, SerialLink, UplinkModel,
};
use sslnet::node::{run_network, NetworkParams, TelemetryPhase};

fn params() -> NetworkParams {
    NetworkParams {
        window: 100,
        warmup: 5,
        ..Default::default()
    }
}

#[test]
fn idle_pipeline_reception_time() {
    let mut p = NetworkParams {
        send_interval_us: 2_000,
        ..params()
    };
    p.base_station.service_time_us = 620.0;
    let res = run_network(p).unwrap();
    // 50 µs uplink, then 620 + 12 + 88
    let radio = RadioConfig::control_default();
    let oracle = 50.0 + 620.0 + spi_time(14, &radio) + air_time(14, &radio).unwrap();
    assert_eq!(oracle, 770.0);
    assert_eq!(res.robots[0].arrivals[0], 770);
    assert_eq!(res.robots[0].arrivals[1], 2_770);
}

#[test]
fn default_pipeline_is_722() {
    let res = run_network(NetworkParams {
        send_interval_us: 2_000,
        ..params()
    })
    .unwrap();
    assert_eq!(res.robots[0].arrivals[0], 50 + 722);
}

#[test]
fn steady_state_is_n_times_bottleneck() {
    for (n, interval, expect) in [
        (1, 500, 722.0),
        (3, 1_000, 3_000.0),
        (2, 500, 1_444.0),
        (4, 300, 2_888.0),
    ] {
        // Under overload FIFO drops perturb the round-robin pattern, so the
        // per-robot rate only converges to the bottleneck.
        let p = NetworkParams {
            robot_count: n,
            send_interval_us: interval,
            window: 500,
            warmup: 20,
            ..params()
        };
        let res = run_network(p).unwrap();
        for r in 0..n {
            let s = res.stats(r, 500, 20).unwrap();
            assert!(
                (s.mean - expect).abs() / expect < 0.01,
                "n={n} interval={interval} robot={r}: {}",
                s.mean
            );
        }
    }
}

#[test]
fn overload_drops_at_base_station() {
    let res = run_network(NetworkParams {
        send_interval_us: 250,
        ..params()
    })
    .unwrap();
    let c = res.robots[0].counters;
    assert!(c.bs_drops > 0);
    assert!(c.is_conserved());
    // roughly two of every three frames cannot be served
    let served = c.delivered as f64 / c.sent as f64;
    assert!((served - 250.0 / 722.0).abs() < 0.02, "{served}");
}

#[test]
fn no_telemetry_means_no_forwarding() {
    let res = run_network(NetworkParams {
        robot_count: 6,
        ..params()
    })
    .unwrap();
    assert_eq!(res.telemetry.sent, 0);
    assert_eq!(res.telemetry.forwarded, 0);
    assert_eq!(res.control_blocked_us, 0);
}

#[test]
fn telemetry_reaches_computer_intact() {
    let p = NetworkParams {
        robot_count: 3,
        telemetry_interval_ms: 10,
        ..params()
    };
    let res = run_network(p).unwrap();
    let t = res.telemetry;
    assert!(t.sent > 0);
    assert_eq!(t.collided + t.lost + t.corrupt_dropped, 0);
    assert_eq!(t.received, t.sent);
    assert_eq!(t.forwarded, t.sent);
}

#[test]
fn aligned_telemetry_collides() {
    let mut p = NetworkParams {
        robot_count: 2,
        telemetry_interval_ms: 10,
        ..params()
    };
    p.telemetry_phase = TelemetryPhase::Aligned;
    let res = run_network(p.clone()).unwrap();
    assert!(res.telemetry.sent > 0);
    assert_eq!(res.telemetry.collided, res.telemetry.sent);
    assert_eq!(res.telemetry.received, 0);

    p.channel.collisions_enabled = false;
    let res = run_network(p).unwrap();
    assert_eq!(res.telemetry.collided, 0);
    assert_eq!(res.telemetry.received, res.telemetry.sent);
}

#[test]
fn staggered_telemetry_never_collides() {
    let p = NetworkParams {
        robot_count: 6,
        telemetry_interval_ms: 10,
        ..params()
    };
    let res = run_network(p).unwrap();
    assert_eq!(res.telemetry.collided, 0);
}

#[test]
fn telemetry_first_report_after_one_interval() {
    let p = NetworkParams {
        telemetry_interval_ms: 50,
        window: 300,
        ..params()
    };
    let res = run_network(p).unwrap();
    assert_eq!(
        &res.robots[0].telemetry_times[..3],
        &[50_000, 100_000, 150_000]
    );
}

#[test]
fn non_blocking_forwarder_leaves_control_untouched() {
    let mut cfg = ScenarioConfig {
        window: 200,
        warmup: 10,
        ..Default::default()
    };
    cfg.base_station.telemetry_busy_blocks_control = false;
    let out = telemetry_sweep(&cfg, &[50, 10]).unwrap();
    let means = out.mean_by_param(Some(0));
    for (_, m) in means {
        assert_eq!(m, 722.0);
    }
    assert!(
        out.notes.iter().all(|n| n.ends_with("increase_pct=0.00")),
        "{:?}",
        out.notes
    );
}

#[test]
fn loss_table_raises_loss_with_distance() {
    let mut cfg = ScenarioConfig {
        window: 300,
        warmup: 0,
        ..Default::default()
    };
    cfg.send_interval_us = 1_000;
    cfg.channel.loss_vs_distance =
        LossTable::new(vec![(0.0, 0.0), (2.0, 0.1), (4.0, 0.3)]).unwrap();
    let out = distance_sweep(&cfg, &[0.4, 2.5, 5.0]).unwrap();
    let lost: Vec<u64> = out.rows.iter().map(|r| r.stats.lost).collect();
    assert_eq!(lost[0], 0);
    assert!(lost[0] < lost[1] && lost[1] < lost[2], "{lost:?}");
}

#[test]
fn single_distance_single_row() {
    let cfg = ScenarioConfig {
        window: 50,
        warmup: 5,
        ..Default::default()
    };
    assert_eq!(distance_sweep(&cfg, &[2.5]).unwrap().rows.len(), 1);
}

#[test]
fn bit_errors_are_caught_by_crc() {
    let p = NetworkParams {
        channel: ChannelModel {
            p_bitflip: 1e-3,
            ..Default::default()
        },
        ..params()
    };
    let res = run_network(p).unwrap();
    let c = res.robots[0].counters;
    assert!(c.corrupt_dropped > 0);
    assert_eq!(c.corrupt_delivered, 0);
    assert!(c.is_conserved());
}

#[test]
fn serial_overrun_corrupts_but_slow_rate_is_clean() {
    let serial = UplinkModel::Serial(SerialLink::default());
    let fast = run_network(NetworkParams {
        send_interval_us: 800,
        uplink: serial.clone(),
        ..params()
    })
    .unwrap();
    assert!(fast.robots[0].counters.corrupt_delivered > 0);
    let slow = run_network(NetworkParams {
        send_interval_us: 1_900,
        uplink: serial,
        ..params()
    })
    .unwrap();
    assert_eq!(slow.robots[0].counters.corrupt_delivered, 0);
    assert_eq!(slow.stats(0, 100, 5).unwrap().mean, 1_900.0);
}

#[test]
fn other_robots_frames_are_ignored() {
    let res = run_network(NetworkParams {
        robot_count: 2,
        ..params()
    })
    .unwrap();
    let a = &res.robots[0].arrivals;
    let b = &res.robots[1].arrivals;
    assert!(a.iter().all(|t| !b.contains(t)));
}

#[test]
fn unsatisfied_window_is_flagged() {
    let res = run_network(NetworkParams {
        max_time_us: 10_000,
        ..params()
    })
    .unwrap();
    assert!(!res.satisfied);
    assert!(res.is_conserved());
}
