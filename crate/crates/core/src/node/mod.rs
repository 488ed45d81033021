//! Node state machines and the simulated network that connects them.

pub mod base_station;
pub mod computer;
pub mod live;
pub mod network;
pub mod robot;

pub use base_station::{BaseStationNode, BaseStationParams, BsAction, FrameMeta, QueuedFrame};
pub use computer::{CommandSource, ComputerNode, TemplateCommands};
pub use live::{LiveBridge, LiveConfig, LiveError, LiveSnapshot};
pub use network::{
    run_network, NetEvent, NetworkError, NetworkParams, RobotRun, RunResult, Simulation,
    TelemetryCounters, TelemetryPhase,
};
pub use robot::{RobotNode, TelemetrySource, TemplateTelemetry};
