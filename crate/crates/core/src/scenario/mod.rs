//! Scenario replay and throughput simulation.

mod model;
mod replay;
mod report;
mod throughput;

pub use model::{Action, Actor, ActorRole, Expectation, Lot, Scenario, ScenarioError, ScenarioEvent};
pub use replay::{run_scenario, EntryOutcome, LotSummary, Replay, ReplayReport, ReplayStatus, ReportEntry, TxOutcome};
pub use report::{curve_csv, report_json, write_curve_csv, write_report_json, CURVE_HEADER};
pub use throughput::{
    simulate_mining, throughput_curve, throughput_point, tx_per_block, SimulatedRun, ThroughputError, ThroughputPoint,
    TX_PER_FREEZER,
};
