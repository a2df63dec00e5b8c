use serde::{Deserialize, Serialize};

pub const DEFAULT_TIME_SCALE: f64 = 144.0;

/// Simulated seconds since the scenario epoch, advanced from wall time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimClock {
    pub sim_time: f64,
    pub time_scale: f64,
}

impl SimClock {
    pub fn new(time_scale: f64) -> SimClock {
        assert!(time_scale > 0.0, "time scale must be positive");
        SimClock { sim_time: 0.0, time_scale }
    }

    /// Advances by `wall_ms` wall-clock milliseconds; returns the simulated delta.
    pub fn advance_wall_ms(&mut self, wall_ms: u64) -> f64 {
        let dt = wall_ms as f64 / 1000.0 * self.time_scale;
        self.sim_time += dt;
        dt
    }

    pub fn wall_ms_for(&self, sim_seconds: f64) -> u64 {
        (sim_seconds / self.time_scale * 1000.0).round() as u64
    }
}

impl Default for SimClock {
    fn default() -> Self {
        SimClock::new(DEFAULT_TIME_SCALE)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hundred_wall_seconds_is_four_hours() {
        let mut c = SimClock::default();
        let mut last = 0.0;
        for _ in 0..10_000 {
            c.advance_wall_ms(10);
            assert!(c.sim_time >= last);
            last = c.sim_time;
        }
        assert!((c.sim_time - 14_400.0).abs() < 1e-6);
        assert_eq!(c.wall_ms_for(14_400.0), 100_000);
    }
}
