use sslnet::config::ScenarioConfig;
use sslnet::experiment::{
    distance_sweep, interval_sweep, multi_robot, run_scenario, telemetry_sweep,
};
use sslnet::node::{run_network, NetworkParams};

fn lossy() -> ScenarioConfig {
    let mut c = ScenarioConfig {
        window: 120,
        warmup: 5,
        repeat: 3,
        ..Default::default()
    };
    c.channel.p_loss = 0.05;
    c.channel.p_bitflip = 2e-4;
    c
}

#[test]
fn experiments_render_identically_on_rerun() {
    let cfg = lossy();
    let runs: [&dyn Fn() -> sslnet::experiment::ExperimentOutput; 5] = [
        &|| interval_sweep(&cfg, &[400, 900]).unwrap(),
        &|| telemetry_sweep(&cfg, &[50, 10]).unwrap(),
        &|| distance_sweep(&cfg, &[0.4, 5.0]).unwrap(),
        &|| multi_robot(&cfg, &[1, 3]).unwrap(),
        &|| run_scenario(&cfg).unwrap(),
    ];
    for f in runs {
        let (a, b) = (f(), f());
        assert_eq!(a.render(&cfg).unwrap(), b.render(&cfg).unwrap());
        assert_eq!(a.trace_digest(), b.trace_digest());
    }
}

#[test]
fn written_files_are_byte_identical() {
    let cfg = lossy();
    let dir = tempfile::tempdir().unwrap();
    let (pa, pb) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    interval_sweep(&cfg, &[500])
        .unwrap()
        .write(&pa, &cfg)
        .unwrap();
    interval_sweep(&cfg, &[500])
        .unwrap()
        .write(&pb, &cfg)
        .unwrap();
    assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap());
}

#[test]
fn seed_changes_lossy_outcome() {
    let a = NetworkParams {
        seed: 1,
        ..lossy().network_params()
    };
    let b = NetworkParams {
        seed: 2,
        ..lossy().network_params()
    };
    assert_ne!(
        run_network(a).unwrap().trace_hash,
        run_network(b).unwrap().trace_hash
    );
}

#[test]
fn trace_lines_match_hash() {
    let p = NetworkParams {
        record_trace: true,
        ..lossy().network_params()
    };
    let a = run_network(p.clone()).unwrap();
    let b = run_network(p).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.trace_hash, b.trace_hash);
    assert_eq!(a.trace.len() as u64, a.events);
}

#[test]
fn adding_a_robot_does_not_perturb_existing_streams() {
    // Robot 0's outcomes come from its own stream; a second, uncommanded
    // robot must not change them.
    let mut one = lossy().network_params();
    one.send_interval_us = 1_000;
    let mut two = one.clone();
    two.robot_count = 2;
    two.controlled_robots = 1;
    let (a, b) = (run_network(one).unwrap(), run_network(two).unwrap());
    assert_eq!(a.robots[0].arrivals, b.robots[0].arrivals);
    assert_eq!(a.robots[0].counters, b.robots[0].counters);
}
