//! Diurnal load synthesis with optional stress days.

use rand::Rng as _;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use super::flow::{dc_power_flow, DcSolver};
use super::topology::{BusId, GridTopology, LineId};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadConfig {
    pub days: usize,
    /// Seconds per slot.
    pub step_seconds: u32,
    /// Hour of day at which the raised-cosine daily shape peaks.
    pub peak_hour: f64,
    /// Fraction of peak shed at the daily trough, in [0, 1).
    pub daily_swing: f64,
    /// Log-normal sigma of the per-bus scale factor.
    pub bus_scale_sigma: f64,
    /// Relative std of per-slot multiplicative noise.
    pub slot_noise: f64,
    /// Unstressed loads are scaled so no line exceeds this fraction of its rating.
    pub headroom: f64,
    /// Probability that a given day is a stress day.
    pub stress_fraction: f64,
    /// Peak flow on a stressed line as a multiple of its rating.
    pub stress_level: f64,
    /// Half-width of the stress bump in hours.
    pub stress_width_hours: f64,
    /// Probability that a stress day stresses a second candidate line at the same time.
    pub multi_stress_prob: f64,
}

impl Default for LoadConfig {
    fn default() -> Self {
        Self {
            days: 1,
            step_seconds: 1,
            peak_hour: 17.0,
            daily_swing: 0.45,
            bus_scale_sigma: 0.1,
            slot_noise: 0.01,
            headroom: 0.85,
            stress_fraction: 0.0,
            stress_level: 1.3,
            stress_width_hours: 1.5,
            multi_stress_prob: 0.2,
        }
    }
}

impl LoadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.days < 1 {
            return Err(Error::arg("days", "must be at least 1"));
        }
        if self.step_seconds == 0 || 86_400 % self.step_seconds != 0 {
            return Err(Error::arg("step_seconds", "must divide one day evenly"));
        }
        if !(0.0..1.0).contains(&self.daily_swing) {
            return Err(Error::arg("daily_swing", "must lie in [0, 1)"));
        }
        if !(self.headroom > 0.0 && self.headroom < 1.0) {
            return Err(Error::arg("headroom", "must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.stress_fraction) {
            return Err(Error::arg("stress_fraction", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.multi_stress_prob) {
            return Err(Error::arg("multi_stress_prob", "must lie in [0, 1]"));
        }
        if !(self.stress_level > 1.0) {
            return Err(Error::arg("stress_level", "must exceed 1"));
        }
        if !(self.stress_width_hours > 0.0) {
            return Err(Error::arg("stress_width_hours", "must be positive"));
        }
        if self.bus_scale_sigma < 0.0 || self.slot_noise < 0.0 {
            return Err(Error::arg("slot_noise", "noise levels must be non-negative"));
        }
        Ok(())
    }

    pub fn slots_per_day(&self) -> usize {
        (86_400 / self.step_seconds) as usize
    }
}

/// A stress injection applied to one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressEvent {
    pub day: usize,
    pub line: LineId,
    pub bus: BusId,
    pub center_slot: usize,
    pub extra_demand: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadProfile {
    pub step_seconds: u32,
    pub slots_per_day: usize,
    /// Active demand, `p[bus][slot]`, topology bus order.
    pub p: Vec<Vec<f64>>,
    /// Reactive demand, `q[bus][slot]`.
    pub q: Vec<Vec<f64>>,
    pub stress: Vec<StressEvent>,
}

impl LoadProfile {
    pub fn n_slots(&self) -> usize {
        self.p.first().map_or(0, Vec::len)
    }

    pub fn n_days(&self) -> usize {
        self.n_slots() / self.slots_per_day.max(1)
    }

    /// Active demand of every bus at one slot.
    pub fn p_at(&self, slot: usize) -> Vec<f64> {
        self.p.iter().map(|s| s[slot]).collect()
    }

    /// Contiguous sub-profile covering `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> LoadProfile {
        LoadProfile {
            step_seconds: self.step_seconds,
            slots_per_day: self.slots_per_day,
            p: self.p.iter().map(|s| s[start..end].to_vec()).collect(),
            q: self.q.iter().map(|s| s[start..end].to_vec()).collect(),
            stress: Vec::new(),
        }
    }

    /// Splits the profile into one profile per day.
    pub fn days(&self) -> Vec<LoadProfile> {
        let spd = self.slots_per_day;
        (0..self.n_days())
            .map(|d| {
                let mut day = self.slice(d * spd, (d + 1) * spd);
                day.stress = self.stress.iter().filter(|s| s.day == d).cloned().collect();
                day
            })
            .collect()
    }

    /// Mean demand of one bus over slots whose hour of day lies in `[from_h, to_h)`.
    pub fn band_mean(&self, bus: usize, from_h: f64, to_h: f64) -> f64 {
        let (mut sum, mut n) = (0.0, 0usize);
        for (slot, v) in self.p[bus].iter().enumerate() {
            let h = hour_of(slot, self.slots_per_day);
            if h >= from_h && h < to_h {
                sum += v;
                n += 1;
            }
        }
        sum / n.max(1) as f64
    }
}

fn hour_of(slot: usize, slots_per_day: usize) -> f64 {
    (slot % slots_per_day) as f64 * 24.0 / slots_per_day as f64
}

/// Raised-cosine daily shape, 1 at the peak hour and `1 - swing` twelve hours later.
fn daily_shape(hour: f64, peak_hour: f64, swing: f64) -> f64 {
    let phase = 2.0 * std::f64::consts::PI * (hour - peak_hour) / 24.0;
    (1.0 - swing) + swing * 0.5 * (1.0 + phase.cos())
}

/// Net injections (generation minus demand) for one slot of demand.
///
/// Each bus with a generation share supplies that fraction of the system
/// demand; the slack entry is left for the flow solver to balance.
pub fn net_injections(topology: &GridTopology, demand: &[f64]) -> Vec<f64> {
    let total: f64 = demand.iter().sum();
    topology
        .buses
        .iter()
        .zip(demand)
        .map(|(b, d)| b.gen_share * total - d)
        .collect()
}

/// Flow change on every line per unit of extra demand at `bus`.
fn demand_sensitivity(topology: &GridTopology, solver: &DcSolver, bus: usize) -> Result<Vec<f64>> {
    let mut demand = vec![0.0; topology.n_buses()];
    demand[bus] = 1.0;
    let inj = net_injections(topology, &demand);
    Ok(solver.solve(topology, &inj)?.flows)
}

pub fn generate_loads(topology: &GridTopology, config: &LoadConfig, seed: u64) -> Result<LoadProfile> {
    config.validate()?;
    let spd = config.slots_per_day();
    let n_slots = spd * config.days;
    let nb = topology.n_buses();

    let mut scale_rng = rng(derive_seed(seed, "load-scale", 0));
    let scale_dist = LogNormal::new(0.0, config.bus_scale_sigma)
        .map_err(|e| Error::arg("bus_scale_sigma", e.to_string()))?;
    let scales: Vec<f64> = (0..nb).map(|_| scale_dist.sample(&mut scale_rng)).collect();

    let noise = Normal::new(0.0, config.slot_noise).map_err(|e| Error::arg("slot_noise", e.to_string()))?;
    let mut noise_rng = rng(derive_seed(seed, "load-noise", 0));
    let mut p = vec![vec![0.0; n_slots]; nb];
    let mut q = vec![vec![0.0; n_slots]; nb];
    for slot in 0..n_slots {
        let shape = daily_shape(hour_of(slot, spd), config.peak_hour, config.daily_swing);
        for (b, bus) in topology.buses.iter().enumerate() {
            let eps = noise.sample(&mut noise_rng);
            let factor = (shape * scales[b] * (1.0 + eps)).max(0.0);
            p[b][slot] = bus.p_demand * factor;
            q[b][slot] = bus.q_demand * factor;
        }
    }

    // calibrate so the unstressed profile keeps every line below headroom × rating
    let active = vec![true; topology.lines.len()];
    let solver = DcSolver::new(topology, &active)?;
    let mut worst: f64 = 0.0;
    for slot in 0..n_slots {
        let demand: Vec<f64> = p.iter().map(|s| s[slot]).collect();
        let sol = solver.solve(topology, &net_injections(topology, &demand))?;
        for (f, line) in sol.flows.iter().zip(&topology.lines) {
            worst = worst.max(f.abs() / line.rating);
        }
    }
    if worst > config.headroom {
        let k = config.headroom / worst;
        for series in p.iter_mut().chain(q.iter_mut()) {
            for v in series.iter_mut() {
                *v *= k;
            }
        }
    }

    let mut stress = Vec::new();
    if config.stress_fraction > 0.0 && !topology.candidate_lines.is_empty() {
        let mut srng = rng(derive_seed(seed, "stress", 0));
        let width = config.stress_width_hours * spd as f64 / 24.0;
        let band = (15.0 * spd as f64 / 24.0, 19.0 * spd as f64 / 24.0);
        for day in 0..config.days {
            if !srng.random_bool(config.stress_fraction) {
                continue;
            }
            let c = topology.candidate_lines.len();
            let first = srng.random_range(0..c);
            let mut picked = vec![first];
            if c > 1 && srng.random_bool(config.multi_stress_prob) {
                let mut second = srng.random_range(0..c - 1);
                if second >= first {
                    second += 1;
                }
                picked.push(second);
            }
            let center = day * spd + srng.random_range(band.0..band.1).round() as usize;
            let demand: Vec<f64> = p.iter().map(|s| s[center]).collect();
            let base = solver.solve(topology, &net_injections(topology, &demand))?;
            for ci in picked {
                let line_id = topology.candidate_lines[ci];
                let li = topology.line_index(line_id).expect("validated candidate");
                let line = &topology.lines[li];
                let ends = [
                    topology.bus_index(line.from).expect("validated"),
                    topology.bus_index(line.to).expect("validated"),
                ];
                let mut best = (ends[0], 0.0f64);
                for &b in &ends {
                    if b == topology.bus_index(topology.slack_bus).expect("validated") {
                        continue;
                    }
                    let s = demand_sensitivity(topology, &solver, b)?[li];
                    if s.abs() > best.1.abs() {
                        best = (b, s);
                    }
                }
                let (bus, sens) = best;
                if sens.abs() < 1e-9 {
                    continue;
                }
                let target = config.stress_level * line.rating * sens.signum();
                let extra = ((target - base.flows[li]) / sens).max(0.0);
                let lo = (center as f64 - width).ceil().max((day * spd) as f64) as usize;
                let hi = ((center as f64 + width).floor() as usize).min((day + 1) * spd - 1);
                let q_ratio = if topology.buses[bus].p_demand > 0.0 {
                    topology.buses[bus].q_demand / topology.buses[bus].p_demand
                } else {
                    0.0
                };
                for slot in lo..=hi {
                    let bump = 0.5 * (1.0 + (std::f64::consts::PI * (slot as f64 - center as f64) / width).cos());
                    p[bus][slot] += extra * bump;
                    q[bus][slot] += extra * bump * q_ratio;
                }
                stress.push(StressEvent {
                    day,
                    line: line_id,
                    bus: topology.buses[bus].id,
                    center_slot: center,
                    extra_demand: extra,
                });
            }
        }
    }

    Ok(LoadProfile {
        step_seconds: config.step_seconds,
        slots_per_day: spd,
        p,
        q,
        stress,
    })
}

/// Largest |flow| / rating over all slots of a profile on the intact topology.
pub fn peak_loading(topology: &GridTopology, loads: &LoadProfile) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for slot in 0..loads.n_slots() {
        let sol = dc_power_flow(topology, &net_injections(topology, &loads.p_at(slot)))?;
        for (f, line) in sol.flows.iter().zip(&topology.lines) {
            worst = worst.max(f.abs() / line.rating);
        }
    }
    Ok(worst)
}
