use std::collections::VecDeque;

use chrono::{Duration, NaiveDateTime};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use super::fleet::{build_fleet, Fleet, FleetConfig};
use super::request::{RequestSampler, ShipmentRequest};
use super::route::{plan_route, RoutePlan};
use super::topology::{build_topology, Point, Topology, TopologyConfig};
use crate::contracts::{Action, DELIVERY, PICKUP, TIMESTAMP_FORMAT};
use crate::error::{Error, Result};

pub const DEFAULT_EPOCH: &str = "2018-06-12 00:00:00";

#[derive(Clone, Debug, PartialEq)]
pub struct WorldConfig {
    pub topology: TopologyConfig,
    pub fleet: FleetConfig,
    /// Shipment requests per simulated second.
    pub arrival_rate: f64,
    /// Simulated seconds spent at each pickup or drop-off.
    pub handling_s: f64,
    pub epoch: String,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            topology: TopologyConfig::default(),
            fleet: FleetConfig::default(),
            arrival_rate: super::DEFAULT_ARRIVAL_RATE,
            handling_s: 30.0,
            epoch: DEFAULT_EPOCH.into(),
            seed: 42,
        }
    }
}

/// An action produced by the simulation, with the agent that performed it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmittedAction {
    pub agent: usize,
    pub sim_time: f64,
    pub action: Action,
}

#[derive(Clone, Debug)]
struct Task {
    shipment: usize,
    leg: usize,
}

#[derive(Clone, Debug)]
enum Phase {
    Idle,
    ToPickup { task: Task, arrive: f64 },
    Loading { task: Task, until: f64 },
    ToDropoff { task: Task, arrive: f64 },
    Unloading { until: f64 },
}

#[derive(Clone, Debug)]
struct AgentState {
    pos: Point,
    queue: VecDeque<Task>,
    phase: Phase,
}

impl AgentState {
    fn next_event(&self) -> Option<f64> {
        match &self.phase {
            Phase::Idle => None,
            Phase::ToPickup { arrive, .. } | Phase::ToDropoff { arrive, .. } => Some(*arrive),
            Phase::Loading { until, .. } | Phase::Unloading { until } => Some(*until),
        }
    }
}

#[derive(Clone, Debug)]
struct Shipment {
    id: String,
    plan: RoutePlan,
    delivered_legs: usize,
}

#[derive(Clone, Debug)]
struct Handoff {
    ready_at: f64,
    agent: usize,
    task: Task,
}

/// Agent-based megacity: Poisson shipment arrivals, FIFO carriers moving in
/// straight lines, one action per pickup and per drop-off.
pub struct World {
    pub topology: Topology,
    pub fleet: Fleet,
    config: WorldConfig,
    epoch: NaiveDateTime,
    rng: ChaCha8Rng,
    sampler: RequestSampler,
    interarrival: Option<Exp<f64>>,
    now: f64,
    next_request: f64,
    agents: Vec<AgentState>,
    shipments: Vec<Shipment>,
    handoffs: Vec<Handoff>,
}

impl World {
    pub fn new(config: WorldConfig) -> Result<World> {
        if !(config.arrival_rate >= 0.0 && config.arrival_rate.is_finite()) {
            return Err(Error::InvalidConfig("arrival rate must be non-negative".into()));
        }
        if config.handling_s.is_nan() || config.handling_s <= 1.0 {
            return Err(Error::InvalidConfig(
                "handling time must exceed one second so per-shipment timestamps increase".into(),
            ));
        }
        for speed in [
            config.fleet.courier_speed,
            config.fleet.rider_speed,
            config.fleet.shuttler_speed,
        ] {
            if !(speed > 0.0 && speed.is_finite()) {
                return Err(Error::InvalidConfig("speeds must be positive".into()));
            }
        }
        let epoch = NaiveDateTime::parse_from_str(&config.epoch, TIMESTAMP_FORMAT)
            .map_err(|e| Error::InvalidConfig(format!("epoch {:?}: {e}", config.epoch)))?;
        let mut layout_rng = ChaCha8Rng::seed_from_u64(config.seed);
        let topology = build_topology(&config.topology, &mut layout_rng)?;
        let fleet = build_fleet(&topology, &config.fleet)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        let interarrival = (config.arrival_rate > 0.0)
            .then(|| Exp::new(config.arrival_rate).expect("positive rate"));
        let next_request = match &interarrival {
            Some(exp) => exp.sample(&mut rng),
            None => f64::INFINITY,
        };
        let agents = fleet
            .agents
            .iter()
            .map(|a| AgentState {
                pos: a.home,
                queue: VecDeque::new(),
                phase: Phase::Idle,
            })
            .collect();
        let sampler = RequestSampler::new(&topology);
        Ok(World {
            topology,
            fleet,
            config,
            epoch,
            rng,
            sampler,
            interarrival,
            now: 0.0,
            next_request,
            agents,
            shipments: Vec::new(),
            handoffs: Vec::new(),
        })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn shipments_created(&self) -> usize {
        self.shipments.len()
    }

    pub fn route(&self, shipment_id: &str) -> Option<&RoutePlan> {
        self.shipments
            .iter()
            .find(|s| s.id == shipment_id)
            .map(|s| &s.plan)
    }

    /// Simulation time rendered as an action timestamp.
    pub fn timestamp(&self, sim_time: f64) -> String {
        let t = self.epoch + Duration::seconds(sim_time.floor() as i64);
        t.format(TIMESTAMP_FORMAT).to_string()
    }

    /// Injects a specific request, planning and dispatching it now.
    pub fn submit_request(&mut self, request: ShipmentRequest) -> Result<()> {
        let plan = plan_route(&self.topology, &self.fleet, &request)?;
        let shipment = self.shipments.len();
        let first = plan.legs[0].agent;
        self.shipments.push(Shipment {
            id: request.id,
            plan,
            delivered_legs: 0,
        });
        self.agents[first].queue.push_back(Task { shipment, leg: 0 });
        self.kick(first);
        Ok(())
    }

    /// Advances the clock by `dt` simulated seconds, returning the actions
    /// performed in `[now, now + dt)` in time order.
    pub fn step(&mut self, dt: f64) -> Vec<EmittedAction> {
        assert!(dt > 0.0, "step size must be positive");
        let end = self.now + dt;
        let mut out = Vec::new();
        loop {
            let agent_next = self
                .agents
                .iter()
                .enumerate()
                .filter_map(|(i, a)| a.next_event().map(|t| (t, i)))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let handoff_next = self
                .handoffs
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.ready_at.total_cmp(&b.1.ready_at).then(a.0.cmp(&b.0)))
                .map(|(i, h)| (h.ready_at, i));

            let mut t = self.next_request;
            if let Some((h, _)) = handoff_next {
                t = t.min(h);
            }
            if let Some((a, _)) = agent_next {
                t = t.min(a);
            }
            if t >= end {
                break;
            }
            self.now = self.now.max(t);
            if self.next_request <= t {
                self.spawn_request();
            } else if let Some((h, i)) = handoff_next.filter(|(h, _)| *h <= t) {
                let _ = h;
                let handoff = self.handoffs.remove(i);
                self.agents[handoff.agent].queue.push_back(handoff.task);
                self.kick(handoff.agent);
            } else if let Some((_, i)) = agent_next {
                if let Some(a) = self.advance_agent(i) {
                    out.push(a);
                }
            }
        }
        self.now = end;
        out
    }

    fn spawn_request(&mut self) {
        let at = self.next_request;
        let request = self.sampler.sample(&self.topology, &mut self.rng, at);
        self.next_request = match &self.interarrival {
            Some(exp) => at + exp.sample(&mut self.rng),
            None => f64::INFINITY,
        };
        self.submit_request(request)
            .expect("sampled requests lie inside the map");
    }

    /// Starts the next queued task of an idle agent.
    fn kick(&mut self, agent: usize) {
        let state = &mut self.agents[agent];
        if !matches!(state.phase, Phase::Idle) {
            return;
        }
        let Some(task) = state.queue.pop_front() else {
            return;
        };
        let leg = &self.shipments[task.shipment].plan.legs[task.leg];
        let travel = state.pos.distance(&leg.pickup) / self.fleet.agents[agent].speed;
        state.phase = Phase::ToPickup {
            task,
            arrive: self.now + travel,
        };
    }

    fn action(&self, agent: usize, task: &Task, kind: u8, at: Point) -> EmittedAction {
        let spec = &self.fleet.agents[agent];
        let (x, y) = at.rounded();
        EmittedAction {
            agent,
            sim_time: self.now,
            action: Action {
                shipment_id: self.shipments[task.shipment].id.clone(),
                timestamp: self.timestamp(self.now),
                action_type: kind,
                agent_name: spec.name.clone(),
                agent_address: spec.account.address(),
                x,
                y,
            },
        }
    }

    fn advance_agent(&mut self, agent: usize) -> Option<EmittedAction> {
        let handling = self.config.handling_s;
        let speed = self.fleet.agents[agent].speed;
        let phase = std::mem::replace(&mut self.agents[agent].phase, Phase::Idle);
        match phase {
            Phase::Idle => None,
            Phase::ToPickup { task, .. } => {
                let at = self.shipments[task.shipment].plan.legs[task.leg].pickup;
                self.agents[agent].pos = at;
                let emitted = self.action(agent, &task, PICKUP, at);
                self.agents[agent].phase = Phase::Loading {
                    task,
                    until: self.now + handling,
                };
                Some(emitted)
            }
            Phase::Loading { task, .. } => {
                let to = self.shipments[task.shipment].plan.legs[task.leg].dropoff;
                let travel = self.agents[agent].pos.distance(&to) / speed;
                self.agents[agent].phase = Phase::ToDropoff {
                    task,
                    arrive: self.now + travel,
                };
                None
            }
            Phase::ToDropoff { task, .. } => {
                let at = self.shipments[task.shipment].plan.legs[task.leg].dropoff;
                self.agents[agent].pos = at;
                let emitted = self.action(agent, &task, DELIVERY, at);
                let shipment = &mut self.shipments[task.shipment];
                shipment.delivered_legs += 1;
                let next_leg = task.leg + 1;
                if let Some(leg) = shipment.plan.legs.get(next_leg) {
                    self.handoffs.push(Handoff {
                        ready_at: self.now + handling,
                        agent: leg.agent,
                        task: Task {
                            shipment: task.shipment,
                            leg: next_leg,
                        },
                    });
                }
                self.agents[agent].phase = Phase::Unloading {
                    until: self.now + handling,
                };
                Some(emitted)
            }
            Phase::Unloading { .. } => {
                self.kick(agent);
                None
            }
        }
    }
}
