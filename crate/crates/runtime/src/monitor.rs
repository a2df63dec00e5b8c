//! Streaming monitor client: history first, then new events as they land.

use std::time::Duration;

use shiptrack_core::monitor::Monitor;
use shiptrack_core::rpc::ApiError;
use tokio::sync::watch;
use tracing::warn;

use crate::client::RpcClient;

/// Prints history, then polls for new events every `poll` until `stop`
/// turns true. A failed history fetch is an error; later failures are
/// retried from the last event seen.
pub async fn stream(
    client: &RpcClient,
    monitor: &mut Monitor,
    poll: Duration,
    mut stop: watch::Receiver<bool>,
    mut out: impl FnMut(&str),
) -> Result<(), ApiError> {
    let history = client.get_events(monitor.next_from_block()).await?;
    for line in monitor.feed(&history) {
        out(&line);
    }
    loop {
        let stopping = tokio::select! {
            _ = tokio::time::sleep(poll) => *stop.borrow(),
            r = stop.changed() => r.is_err() || *stop.borrow(),
        };
        match client.get_events(monitor.next_from_block()).await {
            Ok(events) => {
                for line in monitor.feed(&events) {
                    out(&line);
                }
            }
            Err(e) => warn!(error = %e, "monitor poll failed, will retry"),
        }
        if stopping {
            return Ok(());
        }
    }
}
