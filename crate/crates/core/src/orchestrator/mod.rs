//! Scenario setup shared by the in-process harness and live deployments:
//! accounts, genesis and the run manifest.

mod inprocess;

pub use inprocess::{
    run_in_process, AdminOp, KillPlan, MonitorPlan, RunOptions, RunOutcome, Submission,
};

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::crypto::{create_account, Account, Address, Hash32};
use crate::ledger::{Block, GenesisInfo};
use crate::sim::Fleet;

pub fn sealer_name(i: usize) -> String {
    format!("sealer{i}")
}

pub fn sealer_account(i: usize) -> Account {
    create_account(&format!("sealer-{i}")).expect("non-empty seed")
}

pub fn admin_account() -> Account {
    create_account("admin").expect("non-empty seed")
}

/// Genesis with the configured sealers, the admin account and every agent
/// authorized.
pub fn build_genesis(config: &ScenarioConfig, fleet: &Fleet) -> Block {
    Block::genesis(GenesisInfo {
        sealers: (0..config.sealers).map(|i| sealer_account(i).address()).collect(),
        admin: admin_account().address(),
        authorized: fleet.agents.iter().map(|a| a.account.address()).collect(),
        bounds: config.bounds(),
        poa: config.chain,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub address: Address,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p2p: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rpc: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manager: Option<String>,
}

/// Everything needed to find and talk to a deployment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub mode: String,
    pub seed: u64,
    pub genesis_hash: Hash32,
    pub admin: Address,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootnode: Option<String>,
    /// Unix milliseconds that block timestamps count from, for live runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clock_origin_ms: Option<u64>,
    pub sealers: Vec<ManifestEntry>,
    pub agents: Vec<ManifestEntry>,
}

impl Manifest {
    /// Manifest without endpoints; live deployments fill them in.
    pub fn new(mode: &str, config: &ScenarioConfig, fleet: &Fleet, genesis: &Block) -> Manifest {
        Manifest {
            mode: mode.into(),
            seed: config.seed,
            genesis_hash: genesis.hash(),
            admin: admin_account().address(),
            bootnode: None,
            clock_origin_ms: None,
            sealers: (0..config.sealers)
                .map(|i| ManifestEntry {
                    name: sealer_name(i),
                    address: sealer_account(i).address(),
                    p2p: None,
                    rpc: None,
                    manager: None,
                })
                .collect(),
            agents: fleet
                .agents
                .iter()
                .map(|a| ManifestEntry {
                    name: a.name.clone(),
                    address: a.account.address(),
                    p2p: None,
                    rpc: None,
                    manager: None,
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}
