//! Synthetic grid: topology, loads, DC power flow, sensors and trip simulation.

mod flow;
mod loads;
mod sensors;
mod sim;
mod topology;

pub use flow::{dc_power_flow, DcSolver, FlowSolution};
pub use loads::{generate_loads, net_injections, peak_loading, LoadConfig, LoadProfile, StressEvent};
pub use sensors::{place_sensors, sensor_count, SensorPlacement};
pub use sim::{
    events_json, simulate, simulate_observed, write_trace_csv, EventRecord, NoiseStd, SimConfig,
    SimulationTrace, SlotState, CHANNELS,
};
pub use topology::{load_case, parse_case, Bus, BusId, GridTopology, Line, LineId, BUNDLED_CASES};
