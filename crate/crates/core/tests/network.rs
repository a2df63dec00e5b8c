use std::sync::Arc;

use shiptrack_core::consensus::{seal_block, PoAConfig, SealingContext, TxPool};
use shiptrack_core::contracts::{Action, ContractCall, MapBounds, PICKUP};
use shiptrack_core::ledger::{sign_transaction, Block, BlockRejection, Chain, GenesisInfo, SignedTransaction};
use shiptrack_core::network::{
    message_hash, LoopbackNet, Message, Node, Outgoing, Payload, SLICE_LIMIT,
};
use shiptrack_core::{create_account, Account, Address};

struct Setup {
    sealers: Vec<Account>,
    agents: Vec<Account>,
    genesis: Block,
}

fn setup(n_sealers: usize, n_agents: usize) -> Setup {
    let sealers: Vec<Account> = (0..n_sealers)
        .map(|i| create_account(&format!("sealer-{i}")).unwrap())
        .collect();
    let agents: Vec<Account> = (0..n_agents)
        .map(|i| create_account(&format!("agent-{i:02}")).unwrap())
        .collect();
    let genesis = Block::genesis(GenesisInfo {
        sealers: sealers.iter().map(Account::address).collect(),
        admin: create_account("admin").unwrap().address(),
        authorized: agents.iter().map(Account::address).collect(),
        bounds: MapBounds { width: 1440, height: 720 },
        poa: PoAConfig::default(),
    });
    Setup { sealers, agents, genesis }
}

impl Setup {
    fn chain(&self) -> Chain {
        Chain::from_genesis(self.genesis.clone()).unwrap()
    }

    /// Sealers first, then one node per agent.
    fn net(&self) -> LoopbackNet {
        let mut net = LoopbackNet::new(5, 10);
        for s in &self.sealers {
            net.add_node(Node::new(s.address(), self.chain()).with_sealer(s.clone()));
        }
        for a in &self.agents {
            net.add_node(Node::new(a.address(), self.chain()));
        }
        // Let the startup syncs finish.
        net.run_for(20);
        net
    }
}

fn action_tx(who: &Account, nonce: u64, shipment: &str) -> SignedTransaction {
    sign_transaction(
        who,
        nonce,
        ContractCall::AddAction {
            shipment_id: shipment.into(),
            action: Action {
                shipment_id: shipment.into(),
                timestamp: "2018-06-12 10:00:00".into(),
                action_type: PICKUP,
                agent_name: "deliverers[1]".into(),
                agent_address: who.address(),
                x: 10,
                y: 20,
            },
        },
    )
}

#[test]
fn transaction_reaches_every_pool_once() {
    let s = setup(3, 37);
    let mut net = s.net();
    let tx = action_tx(&s.agents[0], 0, "1");
    let startup = net.hub().delivered();
    let hash = net.submit(3, tx.clone()).unwrap();
    // Before the first block period elapses.
    net.run_for(100);
    assert_eq!(net.len(), 40);
    for node in net.nodes() {
        assert!(node.pool().contains(&hash));
        assert_eq!(node.pool().len(), 1);
    }
    // Each node forwards a message at most once: at most n * (n - 1) hops.
    let n = net.len() as u64;
    let hops = net.hub().delivered() - startup;
    assert!(hops <= n * (n - 1), "{hops}");

    // Re-sending an already seen transaction changes nothing.
    let before = net.hub().delivered();
    let payload: Payload = Arc::new(Message::NewTransaction(tx).encode());
    let from = s.agents[0].address();
    for node_id in s.agents.iter().skip(1).map(Account::address) {
        net.inject(from, node_id, payload.clone());
    }
    net.run_for(50);
    assert_eq!(net.hub().delivered() - before, s.agents.len() as u64 - 1);
    for node in net.nodes() {
        assert_eq!(node.pool().len(), 1);
    }
}

#[test]
fn blocks_converge_and_follow_rotation() {
    let s = setup(3, 10);
    let mut net = s.net();
    let mut nonce = vec![0u64; s.agents.len()];
    for round in 0..12 {
        for (k, a) in s.agents.iter().enumerate() {
            if (round + k) % 3 == 0 {
                net.submit(3 + k, action_tx(a, nonce[k], &format!("{k}"))).unwrap();
                nonce[k] += 1;
            }
        }
        net.run_for(300);
    }
    let took = net.run_until_converged(5_000).expect("converged");
    assert!(took <= 5_000);
    let heads = net.heads();
    assert!(heads[0].height >= 5);
    let reference = net.node(0).unwrap().chain();
    for node in net.nodes() {
        assert!(node.rejections().is_empty());
        assert_eq!(node.reorgs(), 0);
        assert_eq!(node.chain().blocks(), reference.blocks());
    }
    for b in reference.blocks().iter().skip(1) {
        assert_eq!(b.sealer, s.sealers[((b.height - 1) % 3) as usize].address());
    }
    let total: u64 = nonce.iter().sum();
    assert_eq!(reference.events().len() as u64, total);
}

#[test]
fn late_joiner_syncs_full_chain() {
    let s = setup(2, 4);
    let mut net = s.net();
    for (k, a) in s.agents.iter().enumerate() {
        net.submit(2 + k, action_tx(a, 0, "9")).unwrap();
    }
    net.run_for(3_000);
    assert!(net.run_until_converged(5_000).is_some());
    let newcomer = create_account("late").unwrap();
    let i = net.add_node(Node::new(newcomer.address(), s.chain()));
    net.run_for(200);
    let head = net.node(0).unwrap().head();
    assert_eq!(net.node(i).unwrap().head().hash, head.hash);
    assert_eq!(net.node(i).unwrap().head().state_hash, head.state_hash);

    // Gossip of a block we already hold is neither re-imported nor rejected.
    let last = net.node(0).unwrap().chain().head().clone();
    net.inject(s.sealers[0].address(), newcomer.address(), Arc::new(Message::NewBlock(last).encode()));
    net.run_for(50);
    let node = net.node(i).unwrap();
    assert_eq!(node.chain().height(), head.height);
    assert!(node.rejections().is_empty());
}

#[test]
fn chain_slice_requests() {
    let s = setup(1, 1);
    let mut node = Node::new(s.sealers[0].address(), s.chain()).with_sealer(s.sealers[0].clone());
    node.tick(5_000);
    assert_eq!(node.chain().height(), 1);
    let peer = s.agents[0].address();
    let ask = |node: &mut Node, h: u64| -> Vec<Block> {
        let out = node.handle_frame(peer, &Arc::new(Message::GetChainFrom(h).encode()), 0);
        match &out[..] {
            [Outgoing::Direct { to, payload }] => {
                assert_eq!(*to, peer);
                match Message::decode(payload).unwrap() {
                    Message::ChainSlice(b) => b,
                    other => panic!("{other:?}"),
                }
            }
            other => panic!("{other:?}"),
        }
    };
    assert_eq!(ask(&mut node, 0).len(), 2);
    assert_eq!(ask(&mut node, 1).len(), 1);
    assert!(ask(&mut node, 2).is_empty());
    assert!(ask(&mut node, 99).is_empty());
}

#[test]
fn long_sync_pages_through_slices() {
    let s = setup(1, 0);
    let sealer = &s.sealers[0];
    let mut chain = s.chain();
    let pool = TxPool::new();
    let target = SLICE_LIMIT as u64 + 100;
    let mut now = 0;
    while chain.height() < target {
        now += 5_000;
        let b = seal_block(&SealingContext { account: sealer, chain: &chain, pool: &pool }, now).unwrap();
        chain.append_block(b).unwrap();
    }
    let mut net = LoopbackNet::new(5, 10);
    net.add_node(Node::new(sealer.address(), chain));
    let late = create_account("late").unwrap();
    let i = net.add_node(Node::new(late.address(), s.chain()));
    net.run_for(200);
    let node = net.node(i).unwrap();
    assert_eq!(node.chain().height(), target);
    assert!(!node.is_syncing());
}

#[test]
fn non_sealer_block_rejected_everywhere() {
    let s = setup(3, 5);
    let mut net = s.net();
    net.submit(3, action_tx(&s.agents[0], 0, "1")).unwrap();
    net.run_for(1_000);
    assert!(net.run_until_converged(3_000).is_some());
    let before = net.heads();

    let rogue = create_account("rogue").unwrap();
    let chain = net.node(0).unwrap().chain();
    let h = chain.height() + 1;
    let block = Block::sealed(&rogue, h, chain.head_hash(), net.now_ms(), Vec::new(), chain.state_hash());
    let payload: Payload = Arc::new(Message::NewBlock(block.clone()).encode());
    let ids: Vec<Address> = s.sealers.iter().chain(&s.agents).map(Account::address).collect();
    for id in &ids {
        net.inject(rogue.address(), *id, payload.clone());
    }
    net.deliver_due();
    net.run_for(20);
    for (node, head) in net.nodes().zip(&before) {
        assert_eq!(node.head().hash, head.hash);
        let r = node.rejections();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].rejection, BlockRejection::BadSeal);
        assert_eq!(r[0].block_hash, block.hash());
    }
    // Rejected gossip is not forwarded.
    assert_eq!(net.hub().in_flight(), 0);
}

#[test]
fn in_turn_in_block_limits() {
    let s = setup(3, 0);
    let chain = s.chain();
    let senders: Vec<Account> = (0..300).map(|i| create_account(&format!("s-{i}")).unwrap()).collect();
    let mut pool = TxPool::new();
    for a in &senders {
        pool.insert(action_tx(a, 0, "5"), 0).unwrap();
    }
    let ctx = |acct| SealingContext { account: acct, chain: &chain, pool: &pool };
    assert!(seal_block(&ctx(&s.sealers[1]), 10_000).is_none());
    assert!(seal_block(&ctx(&s.sealers[0]), 100).is_none());
    let b = seal_block(&ctx(&s.sealers[0]), 10_000).unwrap();
    assert_eq!(b.transactions.len(), 256);
    let again = seal_block(&ctx(&s.sealers[0]), 10_000).unwrap();
    assert_eq!(b.encode(), again.encode());
    // Arrival order.
    let keys: Vec<Address> = b.transactions.iter().map(|t| t.sender).collect();
    let first: Vec<Address> = senders[..256].iter().map(Account::address).collect();
    assert_eq!(keys, first);

    let mut chain2 = chain.clone();
    chain2.append_block(b).unwrap();
    pool.prune(|a| chain2.next_nonce(a));
    assert_eq!(pool.len(), 44);
}

#[test]
fn pool_keeps_arrival_order_across_senders() {
    let a = create_account("zz-late-sorter").unwrap();
    let b = create_account("aa-early-sorter").unwrap();
    let mut pool = TxPool::new();
    // a1 arrives first but waits for a0; b0 arrived before a0.
    pool.insert(action_tx(&a, 1, "x"), 0).unwrap();
    pool.insert(action_tx(&b, 0, "x"), 0).unwrap();
    pool.insert(action_tx(&a, 0, "x"), 0).unwrap();
    pool.insert(action_tx(&b, 1, "x"), 0).unwrap();
    pool.insert(action_tx(&b, 3, "x"), 0).unwrap();
    let got: Vec<(Address, u64)> = pool.executable(|_| 0, 10).iter().map(|t| (t.sender, t.nonce)).collect();
    assert_eq!(
        got,
        vec![(b.address(), 0), (a.address(), 0), (a.address(), 1), (b.address(), 1)]
    );
    let got: Vec<(Address, u64)> = pool.executable(|_| 0, 3).iter().map(|t| (t.sender, t.nonce)).collect();
    assert_eq!(got.len(), 3);
    // With a0 already on chain, a1 is the oldest runnable arrival.
    let next = |who: &Address| u64::from(*who == a.address());
    let got: Vec<(Address, u64)> = pool.executable(next, 10).iter().map(|t| (t.sender, t.nonce)).collect();
    assert_eq!(got, vec![(a.address(), 1), (b.address(), 0), (b.address(), 1)]);
}

#[test]
fn three_pending_one_block() {
    let s = setup(3, 3);
    let chain = s.chain();
    let mut pool = TxPool::new();
    for a in &s.agents {
        pool.insert(action_tx(a, 0, "1"), 0).unwrap();
    }
    let ctx = SealingContext { account: &s.sealers[0], chain: &chain, pool: &pool };
    assert_eq!(seal_block(&ctx, 500).unwrap().transactions.len(), 3);
    assert!(seal_block(&ctx, 499).is_none());
    // Nothing pending: only a keepalive, after ten periods.
    let empty = TxPool::new();
    let ctx = SealingContext { account: &s.sealers[0], chain: &chain, pool: &empty };
    assert!(seal_block(&ctx, 4_999).is_none());
    assert!(seal_block(&ctx, 5_000).unwrap().transactions.is_empty());
}

#[test]
fn killed_node_catches_up_after_restart() {
    let s = setup(3, 6);
    let mut net = s.net();
    let victim = 3 + 2;
    let mut nonce = 0;
    for _ in 0..5 {
        net.submit(3, action_tx(&s.agents[0], nonce, "1")).unwrap();
        nonce += 1;
        net.run_for(600);
    }
    let dead = net.kill(victim).unwrap();
    let stale_height = dead.chain().height();
    for _ in 0..5 {
        net.submit(3, action_tx(&s.agents[0], nonce, "1")).unwrap();
        nonce += 1;
        net.run_for(600);
    }
    let chain = Chain::replay(dead.chain().blocks().to_vec()).unwrap();
    net.restart(victim, Node::new(s.agents[2].address(), chain));
    assert!(net.run_until_converged(5_000).is_some());
    let node = net.node(victim).unwrap();
    assert!(node.chain().height() > stale_height);
    assert_eq!(node.head().hash, net.node(0).unwrap().head().hash);
    assert!(node.rejections().is_empty());
}

#[test]
fn competing_block_resolved_by_lower_hash() {
    let s = setup(1, 1);
    let a = Node::new(s.sealers[0].address(), s.chain()).with_sealer(s.sealers[0].clone());
    let mut net = LoopbackNet::new(5, 10);
    net.add_node(a);
    let obs = net.add_node(Node::new(s.agents[0].address(), s.chain()));
    net.run_for(5_100);
    assert_eq!(net.node(obs).unwrap().chain().height(), 1);
    let held = net.node(obs).unwrap().chain().head().clone();
    // The same sealer equivocates at height 1 with a different timestamp.
    let chain = s.chain();
    let pool = TxPool::new();
    let mut rival = None;
    for t in 5_001..5_100 {
        let b = seal_block(&SealingContext { account: &s.sealers[0], chain: &chain, pool: &pool }, t).unwrap();
        if b.hash() < held.hash() {
            rival = Some(b);
            break;
        }
    }
    let rival = rival.expect("a lower-hash rival exists");
    let payload: Payload = Arc::new(Message::NewBlock(rival.clone()).encode());
    assert_ne!(message_hash(&payload), message_hash(&Arc::new(Message::NewBlock(held).encode())));
    net.inject(s.sealers[0].address(), s.agents[0].address(), payload);
    net.run_for(20);
    let node = net.node(obs).unwrap();
    assert_eq!(node.chain().head_hash(), rival.hash());
    assert_eq!(node.reorgs(), 1);
}
