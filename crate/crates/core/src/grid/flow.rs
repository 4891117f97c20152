//! DC power flow: B'θ = P with the slack angle pinned at zero.

use nalgebra::{DMatrix, DVector, LU};

use super::topology::GridTopology;
use crate::error::{Error, Result};

/// Solution of one DC power-flow snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSolution {
    /// Net active injections per bus, slack entry set to balance the rest.
    pub injections: Vec<f64>,
    /// Bus voltage angles in radians, topology bus order.
    pub angles: Vec<f64>,
    /// Line flows from→to in per-unit, topology line order. Zero on open lines.
    pub flows: Vec<f64>,
}

/// Factorized reduced susceptance matrix for one switching state.
///
/// Reused across time slots until a line trips.
#[derive(Debug, Clone)]
pub struct DcSolver {
    active: Vec<bool>,
    slack: usize,
    /// bus index → row of the reduced system (None for slack)
    reduced_row: Vec<Option<usize>>,
    from_to: Vec<(usize, usize)>,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl DcSolver {
    pub fn new(topology: &GridTopology, active: &[bool]) -> Result<Self> {
        let n = topology.n_buses();
        if active.len() != topology.lines.len() {
            return Err(Error::DimensionMismatch {
                expected: topology.lines.len(),
                got: active.len(),
            });
        }
        let slack = topology
            .bus_index(topology.slack_bus)
            .ok_or_else(|| Error::InvalidTopology("slack bus missing".into()))?;
        let mut reduced_row = vec![None; n];
        let mut r = 0;
        for (i, slot) in reduced_row.iter_mut().enumerate() {
            if i != slack {
                *slot = Some(r);
                r += 1;
            }
        }
        let from_to: Vec<(usize, usize)> = topology
            .lines
            .iter()
            .map(|l| {
                (
                    topology.bus_index(l.from).expect("validated topology"),
                    topology.bus_index(l.to).expect("validated topology"),
                )
            })
            .collect();

        let mut b = DMatrix::<f64>::zeros(n - 1, n - 1);
        for ((line, &(i, j)), on) in topology.lines.iter().zip(&from_to).zip(active) {
            if !on {
                continue;
            }
            let y = 1.0 / line.reactance;
            let (ri, rj) = (reduced_row[i], reduced_row[j]);
            if let Some(a) = ri {
                b[(a, a)] += y;
            }
            if let Some(c) = rj {
                b[(c, c)] += y;
            }
            if let (Some(a), Some(c)) = (ri, rj) {
                b[(a, c)] -= y;
                b[(c, a)] -= y;
            }
        }
        if n > 1 && !topology.is_connected(active) {
            return Err(Error::SingularNetwork(
                "network is split into islands".into(),
            ));
        }
        let lu = b.lu();
        if n > 1 && !lu.is_invertible() {
            return Err(Error::SingularNetwork("reduced matrix is not invertible".into()));
        }
        Ok(Self {
            active: active.to_vec(),
            slack,
            reduced_row,
            from_to,
            lu,
        })
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    /// Solves one snapshot. The slack injection is overwritten to balance the rest.
    pub fn solve(&self, topology: &GridTopology, injections: &[f64]) -> Result<FlowSolution> {
        let n = topology.n_buses();
        if injections.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: injections.len(),
            });
        }
        let mut p = injections.to_vec();
        let others: f64 = p
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != self.slack)
            .map(|(_, v)| v)
            .sum();
        p[self.slack] = -others;

        let mut angles = vec![0.0; n];
        if n > 1 {
            let rhs = DVector::from_iterator(
                n - 1,
                (0..n).filter(|&i| i != self.slack).map(|i| p[i]),
            );
            let theta = self
                .lu
                .solve(&rhs)
                .ok_or_else(|| Error::SingularNetwork("solve failed".into()))?;
            for (i, row) in self.reduced_row.iter().enumerate() {
                if let Some(r) = row {
                    angles[i] = theta[*r];
                }
            }
        }
        let flows = topology
            .lines
            .iter()
            .zip(&self.from_to)
            .zip(&self.active)
            .map(|((line, &(i, j)), on)| {
                if *on {
                    (angles[i] - angles[j]) / line.reactance
                } else {
                    0.0
                }
            })
            .collect();
        Ok(FlowSolution {
            injections: p,
            angles,
            flows,
        })
    }
}

/// One-shot DC power flow on the intact topology.
pub fn dc_power_flow(topology: &GridTopology, injections: &[f64]) -> Result<FlowSolution> {
    let active = vec![true; topology.lines.len()];
    DcSolver::new(topology, &active)?.solve(topology, injections)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::topology::parse_case;
    use approx::assert_abs_diff_eq;

    fn two_bus() -> GridTopology {
        parse_case("two", "BUS 1 0 0\nBUS 2 0 0\nLINE 1 1 2 0.1 5\nSLACK 2\n").unwrap()
    }

    fn triangle() -> GridTopology {
        parse_case(
            "tri",
            "BUS 1 0 0\nBUS 2 0 0\nBUS 3 0 0\nLINE 1 1 2 0.1 5\nLINE 2 2 3 0.1 5\nLINE 3 1 3 0.1 5\nSLACK 3\n",
        )
        .unwrap()
    }

    #[test]
    fn two_bus_hand_solution() {
        // 1x1 reduced system: 10·θ1 = 1
        let s = dc_power_flow(&two_bus(), &[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(s.angles[0], 0.1, epsilon = 1e-10);
        assert_abs_diff_eq!(s.angles[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.flows[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.injections[1], -1.0, epsilon = 1e-15);
    }

    #[test]
    fn triangle_hand_solution() {
        // [[20,-10],[-10,20]]^-1 · (1,-1) = (1/30, -1/30)
        let s = dc_power_flow(&triangle(), &[1.0, -1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(s.angles[0], 1.0 / 30.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.angles[1], -1.0 / 30.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.flows[0], 2.0 / 3.0, epsilon = 1e-10);
    }

    #[test]
    fn zero_injection_gives_flat_solution() {
        let t = crate::grid::load_case("ieee30").unwrap();
        let s = dc_power_flow(&t, &vec![0.0; 30]).unwrap();
        assert!(s.angles.iter().all(|&a| a == 0.0));
        assert!(s.flows.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn open_line_islanding_is_structured_error() {
        let t = two_bus();
        let err = DcSolver::new(&t, &[false]).unwrap_err();
        assert!(matches!(err, Error::SingularNetwork(_)));
    }
}
