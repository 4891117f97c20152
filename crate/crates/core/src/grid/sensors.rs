use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::topology::{BusId, GridTopology};
use crate::error::{Error, Result};
use crate::seed::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorPlacement {
    /// Sensor-equipped buses, ascending.
    pub sensor_buses: Vec<BusId>,
    pub penetration: f64,
}

/// Number of sensors for a penetration level: round to nearest, at least one.
pub fn sensor_count(n_buses: usize, penetration: f64) -> usize {
    ((penetration * n_buses as f64).round() as usize).clamp(1, n_buses)
}

/// Uniform sample of buses without replacement.
pub fn place_sensors(topology: &GridTopology, penetration: f64, seed: u64) -> Result<SensorPlacement> {
    if !(penetration > 0.0 && penetration <= 1.0) {
        return Err(Error::arg("penetration", format!("{penetration} is outside (0, 1]")));
    }
    let n = topology.n_buses();
    let count = sensor_count(n, penetration);
    let mut r = rng(seed);
    let mut sensor_buses: Vec<BusId> = sample(&mut r, n, count)
        .into_iter()
        .map(|i| topology.buses[i].id)
        .collect();
    sensor_buses.sort_unstable();
    Ok(SensorPlacement {
        sensor_buses,
        penetration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::load_case;

    #[test]
    fn twenty_percent_of_thirty_is_six() {
        let t = load_case("ieee30").unwrap();
        for seed in 0..20 {
            let p = place_sensors(&t, 0.2, seed).unwrap();
            assert_eq!(p.sensor_buses.len(), 6);
            let mut d = p.sensor_buses.clone();
            d.dedup();
            assert_eq!(d.len(), 6);
        }
    }

    #[test]
    fn minimum_one_sensor() {
        let t = load_case("toy5").unwrap();
        assert_eq!(place_sensors(&t, 0.05, 3).unwrap().sensor_buses.len(), 1);
    }

    #[test]
    fn deterministic_per_seed() {
        let t = load_case("ieee30").unwrap();
        assert_eq!(place_sensors(&t, 0.3, 9).unwrap(), place_sensors(&t, 0.3, 9).unwrap());
    }

    #[test]
    fn out_of_range_penetration() {
        let t = load_case("toy5").unwrap();
        assert!(place_sensors(&t, 0.0, 1).is_err());
        assert!(place_sensors(&t, 1.5, 1).is_err());
        assert!(place_sensors(&t, 1.0, 1).is_ok());
    }
}
