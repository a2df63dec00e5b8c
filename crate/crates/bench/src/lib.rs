//! Fixtures shared by the benchmarks.

use shiptrack_core::consensus::PoAConfig;
use shiptrack_core::contracts::{Action, ContractCall, MapBounds, PICKUP};
use shiptrack_core::ledger::{sign_transaction, Block, Chain, GenesisInfo, SignedTransaction};
use shiptrack_core::network::{LoopbackNet, Node};
use shiptrack_core::{create_account, Account};

pub fn action(agent: &Account, shipment: usize, i: usize) -> Action {
    Action {
        shipment_id: shipment.to_string(),
        timestamp: "2018-06-12 12:00:00".into(),
        action_type: PICKUP,
        agent_name: "deliverers[0]".into(),
        agent_address: agent.address(),
        x: (i % 1440) as i64,
        y: (i % 720) as i64,
    }
}

pub fn add_action(agent: &Account, nonce: u64) -> SignedTransaction {
    let a = action(agent, nonce as usize % 50, nonce as usize);
    sign_transaction(
        agent,
        nonce,
        ContractCall::AddAction {
            shipment_id: a.shipment_id.clone(),
            action: a,
        },
    )
}

/// A sealed chain of `blocks` blocks after genesis, each holding
/// `txs_per_block` actions from one agent.
pub fn chain_fixture(blocks: usize, txs_per_block: usize) -> Chain {
    let sealer = create_account("bench-sealer").expect("seed");
    let agent = create_account("bench-agent").expect("seed");
    let genesis = Block::genesis(GenesisInfo {
        sealers: vec![sealer.address()],
        admin: create_account("bench-admin").expect("seed").address(),
        authorized: vec![agent.address()],
        bounds: MapBounds { width: 1440, height: 720 },
        poa: PoAConfig::default(),
    });
    let chain = Chain::from_genesis(genesis).expect("genesis");
    let mut net = LoopbackNet::new(1, 10);
    net.add_node(Node::new(sealer.address(), chain).with_sealer(sealer));
    let mut nonce = 0;
    while (net.node(0).expect("node").chain().height() as usize) < blocks {
        let before = net.node(0).expect("node").chain().height();
        for _ in 0..txs_per_block {
            net.submit(0, add_action(&agent, nonce)).expect("accepted");
            nonce += 1;
        }
        while net.node(0).expect("node").chain().height() == before {
            net.step();
        }
    }
    net.node(0).expect("node").chain().clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_blocks_are_full() {
        let c = chain_fixture(3, 20);
        assert_eq!(c.height(), 3);
        assert!(c.blocks()[1..].iter().all(|b| b.transactions.len() == 20));
        assert_eq!(c.events().len(), 60);
        let again = Chain::replay(c.blocks().to_vec()).unwrap();
        assert_eq!(again.state_hash(), c.state_hash());
    }
}
