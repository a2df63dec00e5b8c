//! Megacity logistics simulation.

pub mod clock;
pub mod fleet;
pub mod request;
pub mod route;
pub mod run;
pub mod topology;
pub mod world;


pub use clock::{SimClock, DEFAULT_TIME_SCALE};
pub use fleet::{build_fleet, AgentSpec, Assignment, Fleet, FleetConfig, Role};
pub use request::{sample_request, RequestSampler, ShipmentRequest};
pub use route::{plan_route, Leg, RoutePlan};
pub use run::{deliver_all, run, ActionSink, DeliveryFailure, FileSink, GroundTruthLog, MemorySink, DELIVERY_RETRIES};
pub use topology::{build_topology, nearest, Point, Rect, Topology, TopologyConfig};
pub use world::{EmittedAction, World, WorldConfig, DEFAULT_EPOCH};

/// Shipment requests per simulated second.
pub const DEFAULT_ARRIVAL_RATE: f64 = 0.0027;
