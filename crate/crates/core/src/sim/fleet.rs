use serde::{Deserialize, Serialize};

use super::topology::{Point, Topology, CELL_COUNT, ZONE_COUNT};
use crate::crypto::{create_account, Account};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Courier,
    Rider,
    Shuttler,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Assignment {
    Zone(usize),
    Cell(usize),
    Area,
}

#[derive(Clone, Debug)]
pub struct AgentSpec {
    pub index: usize,
    pub name: String,
    pub role: Role,
    pub assignment: Assignment,
    /// Map units per simulated second.
    pub speed: f64,
    pub account: Account,
    pub home: Point,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FleetConfig {
    pub courier_speed: f64,
    pub rider_speed: f64,
    pub shuttler_speed: f64,
    /// Dedicated shuttlers; with none, cross-cell legs go to the origin cell's rider.
    pub shuttlers: usize,
}

impl Default for FleetConfig {
    fn default() -> Self {
        FleetConfig {
            courier_speed: 2.0,
            rider_speed: 8.0,
            shuttler_speed: 14.0,
            shuttlers: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Fleet {
    pub agents: Vec<AgentSpec>,
    couriers: Vec<usize>,
    riders: Vec<usize>,
    shuttlers: Vec<usize>,
}

/// One courier per unit zone (`deliverers[k]`), one rider per local cell
/// and any shuttlers (`transporters[k]`).
pub fn build_fleet(topology: &Topology, config: &FleetConfig) -> Result<Fleet> {
    let mut agents = Vec::new();
    let mut couriers = Vec::new();
    let mut riders = Vec::new();
    let mut shuttlers = Vec::new();
    for zone in 0..ZONE_COUNT {
        couriers.push(agents.len());
        agents.push(AgentSpec {
            index: agents.len(),
            name: format!("deliverers[{zone}]"),
            role: Role::Courier,
            assignment: Assignment::Zone(zone),
            speed: config.courier_speed,
            account: create_account(&format!("courier-{zone:02}"))?,
            home: topology.zones[zone].rect.center(),
        });
    }
    for cell in 0..CELL_COUNT {
        riders.push(agents.len());
        agents.push(AgentSpec {
            index: agents.len(),
            name: format!("transporters[{cell}]"),
            role: Role::Rider,
            assignment: Assignment::Cell(cell),
            speed: config.rider_speed,
            account: create_account(&format!("rider-{cell:02}"))?,
            home: topology.cells[cell].rect.center(),
        });
    }
    let area_center = Point::new(topology.width as f64 / 2.0, topology.height as f64 / 2.0);
    for s in 0..config.shuttlers {
        shuttlers.push(agents.len());
        agents.push(AgentSpec {
            index: agents.len(),
            name: format!("transporters[{}]", CELL_COUNT + s),
            role: Role::Shuttler,
            assignment: Assignment::Area,
            speed: config.shuttler_speed,
            account: create_account(&format!("shuttler-{s:02}"))?,
            home: area_center,
        });
    }
    Ok(Fleet {
        agents,
        couriers,
        riders,
        shuttlers,
    })
}

impl Fleet {
    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn courier(&self, zone: usize) -> usize {
        self.couriers[zone]
    }

    pub fn rider(&self, cell: usize) -> usize {
        self.riders[cell]
    }

    pub fn shuttlers(&self) -> &[usize] {
        &self.shuttlers
    }

    pub fn by_name(&self, name: &str) -> Option<&AgentSpec> {
        self.agents.iter().find(|a| a.name == name)
    }
}
