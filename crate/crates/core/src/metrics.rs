//! Waiting-time metrics and search-space accounting.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::network::{Seconds, ZoneId};

/// Passenger delay: `max(pickup - request, 0)`.
#[inline]
pub fn delay(pickup: Seconds, request: Seconds) -> Seconds {
    pickup.saturating_sub(request)
}

/// Time slot of a pickup; `[k*bin, (k+1)*bin)` maps to slot `k`.
#[inline]
pub fn pickup_bin(pickup: Seconds, bin_seconds: Seconds) -> u64 {
    pickup / bin_seconds
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassengerDelay {
    pub id: usize,
    pub delay_s: Seconds,
    pub origin: ZoneId,
    pub bin: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatCell {
    pub zone: ZoneId,
    pub bin: u64,
    pub mean_delay_min: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(default)]
    pub scenario: String,
    #[serde(default)]
    pub method: String,
    pub bin_seconds: Seconds,
    pub mean_wait_min: f64,
    pub per_passenger: Vec<PassengerDelay>,
    pub heatmap: Vec<HeatCell>,
    /// Fraction of generator responses that failed extraction.
    pub error_rate: f64,
}

impl Metrics {
    /// Aggregates per-passenger delays; heatmap cells are sorted by (zone, bin).
    pub fn from_delays(per_passenger: Vec<PassengerDelay>, bin_seconds: Seconds) -> Self {
        let total: u64 = per_passenger.iter().map(|p| p.delay_s).sum();
        let mean_wait_min = if per_passenger.is_empty() {
            0.0
        } else {
            total as f64 / per_passenger.len() as f64 / 60.0
        };
        let mut cells: BTreeMap<(ZoneId, u64), (u64, usize)> = BTreeMap::new();
        for p in &per_passenger {
            let e = cells.entry((p.origin, p.bin)).or_default();
            e.0 += p.delay_s;
            e.1 += 1;
        }
        let heatmap = cells
            .into_iter()
            .map(|((zone, bin), (sum, count))| HeatCell {
                zone,
                bin,
                mean_delay_min: sum as f64 / count as f64 / 60.0,
                count,
            })
            .collect();
        Self {
            scenario: String::new(),
            method: String::new(),
            bin_seconds,
            mean_wait_min,
            per_passenger,
            heatmap,
            error_rate: 0.0,
        }
    }

    pub fn with_labels(mut self, scenario: impl Into<String>, method: impl Into<String>) -> Self {
        self.scenario = scenario.into();
        self.method = method.into();
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    /// `zone,bin,mean_delay_min,count`
    pub fn heatmap_csv(&self) -> String {
        let mut s = String::from("zone,bin,mean_delay_min,count\n");
        for c in &self.heatmap {
            s.push_str(&format!("{},{},{},{}\n", c.zone, c.bin, c.mean_delay_min, c.count));
        }
        s
    }

    /// Last occupied time slot plus one.
    pub fn slots_used(&self) -> u64 {
        self.per_passenger.iter().map(|p| p.bin + 1).max().unwrap_or(0)
    }
}

/// `(V^P * (K!)^V)^T`: assignments times per-taxi orderings, over T epochs.
pub fn search_space_estimate(passengers: u32, vehicles: u32, per_taxi: u32, steps: u32) -> BigUint {
    let assign = BigUint::from(vehicles).pow(passengers);
    let k_fact: BigUint = (1..=per_taxi).map(BigUint::from).product();
    (assign * k_fact.pow(vehicles)).pow(steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pd(id: usize, delay_s: u64, origin: usize, bin: u64) -> PassengerDelay {
        PassengerDelay {
            id,
            delay_s,
            origin: ZoneId(origin),
            bin,
        }
    }

    #[test]
    fn delay_clamps() {
        assert_eq!(delay(900, 900), 0);
        assert_eq!(delay(1000, 900), 100);
        assert_eq!(delay(800, 900), 0);
    }

    #[test]
    fn bins() {
        assert_eq!(pickup_bin(700, 600), 1);
        assert_eq!(pickup_bin(599, 600), 0);
        assert_eq!(pickup_bin(1200, 600), 2);
    }

    #[test]
    fn mean_in_minutes() {
        let m = Metrics::from_delays(vec![pd(0, 0, 0, 0), pd(1, 60, 0, 0), pd(2, 120, 1, 0)], 600);
        assert_eq!(m.mean_wait_min, 1.0);
        assert_eq!(m.heatmap.len(), 2);
        assert_eq!(m.heatmap.iter().map(|c| c.count).sum::<usize>(), 3);
    }

    #[test]
    fn heatmap_weighted_mean_matches_global() {
        let per: Vec<_> = (0..40)
            .map(|i| pd(i, (i as u64 * 37) % 500, i % 5, (i as u64) % 3))
            .collect();
        let m = Metrics::from_delays(per, 600);
        let weighted: f64 = m
            .heatmap
            .iter()
            .map(|c| c.mean_delay_min * c.count as f64)
            .sum::<f64>()
            / 40.0;
        assert!((weighted - m.mean_wait_min).abs() < 1e-9);
    }

    #[test]
    fn search_space() {
        assert_eq!(search_space_estimate(1, 1, 1, 1), BigUint::from(1u32));
        assert_eq!(search_space_estimate(2, 2, 1, 1), BigUint::from(4u32));
        assert_eq!(search_space_estimate(2, 2, 2, 2), BigUint::from(256u32));
        assert!(search_space_estimate(200, 100, 5, 4).bits() > 64);
    }
}
