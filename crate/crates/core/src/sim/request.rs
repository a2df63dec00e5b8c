use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::topology::{Point, Topology};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShipmentRequest {
    pub id: String,
    pub origin: Point,
    pub destination: Point,
    pub created_at: f64,
}

/// Samples origin and destination zones with probability proportional to
/// demand weight, then a uniform point inside each.
pub struct RequestSampler {
    zones: WeightedIndex<f64>,
    next_id: u64,
}

impl RequestSampler {
    pub fn new(topology: &Topology) -> RequestSampler {
        RequestSampler::starting_at(topology, 0)
    }

    pub fn starting_at(topology: &Topology, first_id: u64) -> RequestSampler {
        let weights: Vec<f64> = topology.zones.iter().map(|z| z.demand_weight).collect();
        RequestSampler {
            zones: WeightedIndex::new(weights).expect("weights are positive"),
            next_id: first_id,
        }
    }

    pub fn sample_zone(&self, rng: &mut ChaCha8Rng) -> usize {
        self.zones.sample(rng)
    }

    pub fn sample(&mut self, topology: &Topology, rng: &mut ChaCha8Rng, sim_time: f64) -> ShipmentRequest {
        let point_in = |zone: usize, rng: &mut ChaCha8Rng| {
            let r = topology.zones[zone].rect;
            Point::new(
                rng.gen_range(r.min.x..r.max.x),
                rng.gen_range(r.min.y..r.max.y),
            )
        };
        let oz = self.sample_zone(rng);
        let origin = point_in(oz, rng);
        let dz = self.sample_zone(rng);
        let destination = point_in(dz, rng);
        let id = self.next_id.to_string();
        self.next_id += 1;
        ShipmentRequest {
            id,
            origin,
            destination,
            created_at: sim_time,
        }
    }
}

/// Convenience wrapper over a fresh sampler.
pub fn sample_request(topology: &Topology, rng: &mut ChaCha8Rng, sim_time: f64) -> ShipmentRequest {
    RequestSampler::new(topology).sample(topology, rng, sim_time)
}
