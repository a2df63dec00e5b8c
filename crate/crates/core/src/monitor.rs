//! Event monitor: prints past actions, then follows new ones.

use crate::contracts::{Action, ActionEvent};
use crate::rpc::{ApiError, NodeApi};

/// `<timestamp> <shipment_id> <agent_name> <action_type> X: <x>, Y: <y>`
pub fn format_line(a: &Action) -> String {
    format!(
        "{} {} {} {} X: {}, Y: {}",
        a.timestamp, a.shipment_id, a.agent_name, a.action_type, a.x, a.y
    )
}

/// Tracks the last event printed so overlapping polls print each event
/// exactly once.
#[derive(Clone, Debug, Default)]
pub struct Monitor {
    from_block: u64,
    shipment: Option<String>,
    cursor: Option<(u64, u32)>,
}

impl Monitor {
    pub fn new(from_block: u64, shipment: Option<String>) -> Monitor {
        Monitor {
            from_block,
            shipment,
            cursor: None,
        }
    }

    pub fn cursor(&self) -> Option<(u64, u32)> {
        self.cursor
    }

    /// Block to ask for next; the block of the cursor is re-read since more
    /// of it may not have been seen.
    pub fn next_from_block(&self) -> u64 {
        self.cursor.map_or(self.from_block, |(h, _)| h.max(self.from_block))
    }

    /// Lines for events after the cursor, in chain order.
    pub fn feed(&mut self, events: &[ActionEvent]) -> Vec<String> {
        let mut lines = Vec::new();
        for e in events {
            let pos = e.position();
            if e.block_height < self.from_block || self.cursor.is_some_and(|c| pos <= c) {
                continue;
            }
            self.cursor = Some(pos);
            if self.shipment.as_deref().is_some_and(|s| s != e.action.shipment_id) {
                continue;
            }
            lines.push(format_line(&e.action));
        }
        lines
    }

    pub fn poll(&mut self, api: &mut dyn NodeApi) -> Result<Vec<String>, ApiError> {
        let events = api.get_events(self.next_from_block())?;
        Ok(self.feed(&events))
    }
}
