use serde::Serialize;

use super::fleet::{Fleet, Role};
use super::request::ShipmentRequest;
use super::topology::{nearest, Point, Topology};
use crate::error::{Error, Result};

/// One carrier's share of a shipment: pick up at `pickup`, deliver at `dropoff`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Leg {
    pub agent: usize,
    /// Role the leg is planned for; the executing agent may cover it
    /// (a rider standing in for a missing shuttler).
    pub role: Role,
    pub pickup: Point,
    pub dropoff: Point,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoutePlan {
    pub legs: Vec<Leg>,
}

impl RoutePlan {
    pub fn action_count(&self) -> usize {
        self.legs.len() * 2
    }
}

/// Routes a request up and down the hub hierarchy:
/// same zone is one courier leg; same cell adds a rider between access
/// hubs; different cells go courier, rider, shuttler, rider, courier via
/// local hubs. Hand-offs where consecutive hubs coincide drop the leg
/// between them.
pub fn plan_route(topology: &Topology, fleet: &Fleet, request: &ShipmentRequest) -> Result<RoutePlan> {
    let (Some(oz), Some(dz)) = (
        topology.zone_of(&request.origin),
        topology.zone_of(&request.destination),
    ) else {
        return Err(Error::InvalidRequest(format!(
            "shipment {} has an endpoint outside the map",
            request.id
        )));
    };
    let (o, d) = (request.origin, request.destination);
    if oz == dz {
        return Ok(RoutePlan {
            legs: vec![Leg {
                agent: fleet.courier(oz),
                role: Role::Courier,
                pickup: o,
                dropoff: d,
            }],
        });
    }
    let (oc, dc) = (topology.cell_of_zone(oz), topology.cell_of_zone(dz));
    let h1 = nearest(&topology.zone_access_hubs(oz), &o);
    let h2 = nearest(&topology.zone_access_hubs(dz), &d);

    // Waypoints with the carrier of the leg that ends at the next waypoint.
    let mut stops: Vec<(Point, usize, Role)> = vec![(h1, fleet.courier(oz), Role::Courier)];
    if oc == dc {
        stops.push((h2, fleet.rider(oc), Role::Rider));
    } else {
        let l1 = nearest(&topology.cell_local_hubs(oc), &h1);
        let l2 = nearest(&topology.cell_local_hubs(dc), &h2);
        let shuttler = match fleet.shuttlers() {
            [] => fleet.rider(oc),
            s => {
                let n: u64 = request.id.parse().unwrap_or(0);
                s[(n % s.len() as u64) as usize]
            }
        };
        stops.push((l1, fleet.rider(oc), Role::Rider));
        stops.push((l2, shuttler, Role::Shuttler));
        stops.push((h2, fleet.rider(dc), Role::Rider));
    }
    stops.push((d, fleet.courier(dz), Role::Courier));

    let mut legs = Vec::with_capacity(stops.len());
    let mut at = o;
    for (i, (point, agent, role)) in stops.iter().enumerate() {
        let is_last = i + 1 == stops.len();
        if !is_last && i > 0 && *point == at {
            continue;
        }
        legs.push(Leg {
            agent: *agent,
            role: *role,
            pickup: at,
            dropoff: *point,
        });
        at = *point;
    }
    Ok(RoutePlan { legs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::fleet::{build_fleet, FleetConfig};
    use crate::sim::topology::{build_topology, TopologyConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn world(shuttlers: usize) -> (Topology, Fleet) {
        let t = build_topology(&TopologyConfig::default(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let f = build_fleet(&t, &FleetConfig { shuttlers, ..Default::default() }).unwrap();
        (t, f)
    }

    fn req(o: (f64, f64), d: (f64, f64)) -> ShipmentRequest {
        ShipmentRequest {
            id: "1".into(),
            origin: Point::new(o.0, o.1),
            destination: Point::new(d.0, d.1),
            created_at: 0.0,
        }
    }

    #[test]
    fn same_zone_single_leg() {
        let (t, f) = world(0);
        let p = plan_route(&t, &f, &req((10.0, 10.0), (200.0, 100.0))).unwrap();
        assert_eq!(p.legs.len(), 1);
        assert_eq!(p.action_count(), 2);
        assert_eq!(f.agents[p.legs[0].agent].name, "deliverers[0]");
    }

    #[test]
    fn same_cell_distinct_hubs() {
        let (t, f) = world(0);
        // Zone 0 origin near (0,0); zone 2 destination near (720,0).
        let p = plan_route(&t, &f, &req((10.0, 10.0), (700.0, 10.0))).unwrap();
        assert_eq!(p.legs.len(), 3);
        assert_eq!(p.legs[0].dropoff, Point::new(0.0, 0.0));
        assert_eq!(p.legs[1].role, Role::Rider);
        assert_eq!(p.legs[1].dropoff, Point::new(720.0, 0.0));
        assert_eq!(p.action_count(), 6);
    }

    #[test]
    fn same_cell_shared_hub_collapses_rider() {
        let (t, f) = world(0);
        // Adjacent zones 0 and 1, both points nearest the shared corner (240,0).
        let p = plan_route(&t, &f, &req((230.0, 5.0), (250.0, 5.0))).unwrap();
        assert_eq!(p.legs.len(), 2);
        assert_eq!(p.action_count(), 4);
        assert_eq!(p.legs[0].dropoff, Point::new(240.0, 0.0));
        assert_eq!(p.legs[1].pickup, Point::new(240.0, 0.0));
        assert!(p.legs.iter().all(|l| l.role == Role::Courier));
    }

    #[test]
    fn opposite_cells_full_chain() {
        let (t, f) = world(1);
        // Origin in zone 7 (cell 0), nearest hub (240,120); destination in
        // zone 28 (cell 3), nearest hub (1200,600).
        let p = plan_route(&t, &f, &req((250.0, 130.0), (1190.0, 590.0))).unwrap();
        let roles: Vec<Role> = p.legs.iter().map(|l| l.role).collect();
        assert_eq!(
            roles,
            vec![Role::Courier, Role::Rider, Role::Shuttler, Role::Rider, Role::Courier]
        );
        assert_eq!(p.action_count(), 10);
        assert_eq!(p.legs[1].dropoff, Point::new(0.0, 0.0));
        assert_eq!(p.legs[2].dropoff, Point::new(1440.0, 720.0));
        assert_eq!(f.agents[p.legs[2].agent].name, "transporters[4]");
        for w in p.legs.windows(2) {
            assert_eq!(w[0].dropoff, w[1].pickup);
        }
    }

    #[test]
    fn cross_cell_without_shuttlers_uses_origin_rider() {
        let (t, f) = world(0);
        let p = plan_route(&t, &f, &req((250.0, 130.0), (1190.0, 590.0))).unwrap();
        assert_eq!(p.legs.len(), 5);
        assert_eq!(p.legs[2].role, Role::Shuttler);
        assert_eq!(p.legs[2].agent, f.rider(0));
    }

    #[test]
    fn out_of_bounds_rejected() {
        let (t, f) = world(0);
        assert!(matches!(
            plan_route(&t, &f, &req((-5.0, 0.0), (1.0, 1.0))),
            Err(Error::InvalidRequest(_))
        ));
    }
}
