//! Quasi-steady-state simulation with overload-triggered line trips.

use std::io::Write;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::flow::{DcSolver, FlowSolution};
use super::loads::{net_injections, LoadProfile};
use super::sensors::SensorPlacement;
use super::topology::{BusId, GridTopology, LineId};
use crate::error::{Error, Result};
use crate::seed::rng;

/// Channels recorded at every sensor bus, in storage order.
pub const CHANNELS: [&str; 4] = ["vm", "va", "p", "q"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseStd {
    pub vm: f64,
    pub va: f64,
    pub p: f64,
    pub q: f64,
}

impl Default for NoiseStd {
    fn default() -> Self {
        Self {
            vm: 1e-3,
            va: 1e-3,
            p: 5e-3,
            q: 5e-3,
        }
    }
}

impl NoiseStd {
    pub fn zero() -> Self {
        Self { vm: 0.0, va: 0.0, p: 0.0, q: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Consecutive overloaded slots before a candidate line trips.
    pub trip_slots: usize,
    pub noise: NoiseStd,
    /// Voltage magnitude response per unit of net injection.
    pub vm_sensitivity: f64,
    /// Reactive injection as a fraction of active injection.
    pub reactive_ratio: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            trip_slots: 10,
            noise: NoiseStd::default(),
            vm_sensitivity: 0.05,
            reactive_ratio: 0.3,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trip_slots < 2 {
            return Err(Error::arg("trip_slots", "must be at least 2"));
        }
        let n = self.noise;
        if [n.vm, n.va, n.p, n.q].iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::arg("noise", "std values must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub line: LineId,
    pub overload_start: usize,
    pub trip_time: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub sensor_buses: Vec<BusId>,
    pub n_slots: usize,
    /// Slot-major measurements: `[slot][sensor][channel]`.
    pub data: Vec<f64>,
    pub events: Vec<EventRecord>,
    pub seed: u64,
    /// Set when a trip split the network and the run stopped early.
    pub truncated: bool,
    /// Global index of slot 0, used when traces are concatenated on export.
    pub origin: usize,
}

impl SimulationTrace {
    pub fn n_features(&self) -> usize {
        self.sensor_buses.len() * CHANNELS.len()
    }

    pub fn row(&self, slot: usize) -> &[f64] {
        let b = self.n_features();
        &self.data[slot * b..(slot + 1) * b]
    }

    /// `(bus, channel)` pairs in storage order.
    pub fn feature_order(&self) -> Vec<(BusId, String)> {
        self.sensor_buses
            .iter()
            .flat_map(|&b| CHANNELS.iter().map(move |c| (b, c.to_string())))
            .collect()
    }
}

/// Per-slot system state handed to simulation observers.
pub struct SlotState<'a> {
    pub slot: usize,
    pub active: &'a [bool],
    pub solution: &'a FlowSolution,
}

pub fn simulate(
    topology: &GridTopology,
    loads: &LoadProfile,
    placement: &SensorPlacement,
    config: &SimConfig,
    seed: u64,
) -> Result<SimulationTrace> {
    simulate_observed(topology, loads, placement, config, seed, |_| {})
}

/// Runs the simulation, calling `observer` with the full network state of every slot.
pub fn simulate_observed(
    topology: &GridTopology,
    loads: &LoadProfile,
    placement: &SensorPlacement,
    config: &SimConfig,
    seed: u64,
    mut observer: impl FnMut(&SlotState<'_>),
) -> Result<SimulationTrace> {
    config.validate()?;
    if loads.p.len() != topology.n_buses() {
        return Err(Error::DimensionMismatch {
            expected: topology.n_buses(),
            got: loads.p.len(),
        });
    }
    let sensor_idx: Vec<usize> = placement
        .sensor_buses
        .iter()
        .map(|&b| {
            topology
                .bus_index(b)
                .ok_or_else(|| Error::arg("placement", format!("bus {b} not in topology")))
        })
        .collect::<Result<_>>()?;

    let normal = |std: f64| Normal::new(0.0, std).expect("validated std");
    let (nvm, nva, np, nq) = (
        normal(config.noise.vm),
        normal(config.noise.va),
        normal(config.noise.p),
        normal(config.noise.q),
    );
    let mut noise_rng = rng(seed);

    let candidates: Vec<usize> = topology
        .candidate_lines
        .iter()
        .map(|&c| topology.line_index(c).expect("validated candidate"))
        .collect();
    let mut active = vec![true; topology.lines.len()];
    let mut solver = DcSolver::new(topology, &active)?;
    let mut run = vec![0usize; candidates.len()];

    let n_slots = loads.n_slots();
    let width = sensor_idx.len() * CHANNELS.len();
    let mut data = Vec::with_capacity(n_slots * width);
    let mut events = Vec::new();
    let mut truncated = false;
    let mut produced = 0;

    for slot in 0..n_slots {
        let sol = solver.solve(topology, &net_injections(topology, &loads.p_at(slot)))?;
        observer(&SlotState {
            slot,
            active: &active,
            solution: &sol,
        });
        for &b in &sensor_idx {
            let p_inj = sol.injections[b];
            data.push(1.0 + config.vm_sensitivity * p_inj + nvm.sample(&mut noise_rng));
            data.push(sol.angles[b] + nva.sample(&mut noise_rng));
            data.push(p_inj + np.sample(&mut noise_rng));
            data.push(config.reactive_ratio * p_inj + nq.sample(&mut noise_rng));
        }
        produced = slot + 1;

        let mut tripped = Vec::new();
        for (k, &li) in candidates.iter().enumerate() {
            if !active[li] {
                continue;
            }
            if sol.flows[li].abs() > topology.lines[li].rating {
                run[k] += 1;
                if run[k] == config.trip_slots {
                    events.push(EventRecord {
                        line: topology.lines[li].id,
                        overload_start: slot + 1 - config.trip_slots,
                        trip_time: slot,
                    });
                    tripped.push(li);
                }
            } else {
                run[k] = 0;
            }
        }
        if !tripped.is_empty() {
            for li in tripped {
                active[li] = false;
            }
            match DcSolver::new(topology, &active) {
                Ok(s) => solver = s,
                Err(Error::SingularNetwork(_)) => {
                    truncated = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
    }

    Ok(SimulationTrace {
        sensor_buses: placement.sensor_buses.clone(),
        n_slots: produced,
        data,
        events,
        seed,
        truncated,
        origin: 0,
    })
}

/// Writes traces as CSV rows `slot,bus,vm,va,p,q`; slots are offset by each trace's origin.
pub fn write_trace_csv<W: Write>(out: W, traces: &[SimulationTrace]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["slot", "bus", "vm", "va", "p", "q"])?;
    for t in traces {
        for slot in 0..t.n_slots {
            let row = t.row(slot);
            for (s, bus) in t.sensor_buses.iter().enumerate() {
                let m = &row[s * 4..s * 4 + 4];
                w.write_record([
                    (t.origin + slot).to_string(),
                    bus.to_string(),
                    m[0].to_string(),
                    m[1].to_string(),
                    m[2].to_string(),
                    m[3].to_string(),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io("trace csv", e))?;
    Ok(())
}

/// Event log of several traces as a JSON array with global slot indices.
pub fn events_json(traces: &[SimulationTrace]) -> Result<String> {
    let all: Vec<EventRecord> = traces
        .iter()
        .flat_map(|t| {
            t.events.iter().map(move |e| EventRecord {
                line: e.line,
                overload_start: e.overload_start + t.origin,
                trip_time: e.trip_time + t.origin,
            })
        })
        .collect();
    Ok(serde_json::to_string_pretty(&all)?)
}
