//! Model of the shared device: a cost budget per clock tier and the rate
//! at which device cycles elapse.

use std::time::Duration;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tier {
    /// Clock relative to the full tier.
    pub factor: f64,
    /// Cost units that meet timing at this clock.
    pub capacity: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceModel {
    /// Ordered fastest first; a slower clock admits a larger design.
    pub tiers: Vec<Tier>,
    pub compile_latency: Duration,
    /// Device cycles per wall second at the full tier; `None` runs
    /// unpaced.
    pub cycle_rate: Option<f64>,
}

impl DeviceModel {
    /// `capacity` at full speed; each slower tier's budget scales with
    /// the inverse of its clock.
    pub fn new(capacity: u64, factors: &[f64]) -> DeviceModel {
        DeviceModel {
            tiers: factors
                .iter()
                .map(|&f| Tier {
                    factor: f,
                    capacity: (capacity as f64 / f).round() as u64,
                })
                .collect(),
            compile_latency: Duration::from_secs(2),
            cycle_rate: Some(1_000_000.0),
        }
    }

    /// Index of the fastest tier admitting `cost`. Memoryless: depends
    /// only on the total.
    pub fn place(&self, cost: u64) -> Option<usize> {
        self.tiers.iter().position(|t| cost <= t.capacity)
    }

    /// Wall seconds one device cycle takes at `tier`.
    pub fn cycle_time(&self, tier: usize) -> Option<f64> {
        self.cycle_rate.map(|r| 1.0 / (r * self.tiers[tier].factor))
    }
}

impl Default for DeviceModel {
    fn default() -> Self {
        DeviceModel::new(10_000, &[1.0, 0.5])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiers_degrade_only_past_the_full_budget() {
        let d = DeviceModel::default();
        assert_eq!(d.place(0), Some(0));
        assert_eq!(d.place(10_000), Some(0));
        assert_eq!(d.place(10_001), Some(1));
        assert_eq!(d.place(20_000), Some(1));
        assert_eq!(d.place(20_001), None);
        assert_eq!(d.cycle_time(0), Some(1e-6));
        assert_eq!(d.cycle_time(1), Some(2e-6));
    }
}
