use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::crypto::Address;

pub const PICKUP: u8 = 1;
pub const DELIVERY: u8 = 2;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

/// One tracked pickup or delivery.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Action {
    pub shipment_id: String,
    /// Simulation time, `YYYY-MM-DD HH:MM:SS`.
    pub timestamp: String,
    /// 1 = pick up, 2 = delivery.
    pub action_type: u8,
    pub agent_name: String,
    pub agent_address: Address,
    pub x: i64,
    pub y: i64,
}

/// Map extent in map units; valid coordinates are `0..=width` by `0..=height`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapBounds {
    pub width: i64,
    pub height: i64,
}

impl MapBounds {
    pub fn contains(&self, x: i64, y: i64) -> bool {
        (0..=self.width).contains(&x) && (0..=self.height).contains(&y)
    }
}

pub fn is_valid_timestamp(s: &str) -> bool {
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
        .map(|t| t.format(TIMESTAMP_FORMAT).to_string() == s)
        .unwrap_or(false)
}

impl Action {
    /// Schema checks that do not depend on who sent the action.
    pub fn check_shape(&self, bounds: &MapBounds) -> Result<(), String> {
        if self.shipment_id.is_empty() {
            return Err("empty shipment id".into());
        }
        if self.agent_name.is_empty() {
            return Err("empty agent name".into());
        }
        if self.action_type != PICKUP && self.action_type != DELIVERY {
            return Err(format!("action_type {} not in {{1, 2}}", self.action_type));
        }
        if !is_valid_timestamp(&self.timestamp) {
            return Err(format!("bad timestamp {:?}", self.timestamp));
        }
        if !bounds.contains(self.x, self.y) {
            return Err(format!(
                "location ({}, {}) outside {}x{} map",
                self.x, self.y, bounds.width, bounds.height
            ));
        }
        Ok(())
    }
}
