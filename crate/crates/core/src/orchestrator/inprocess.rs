use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use tracing::info;

use super::{admin_account, build_genesis, sealer_account, sealer_name, Manifest};
use crate::config::ScenarioConfig;
use crate::contracts::{Action, ContractCall};
use crate::crypto::{create_account, Hash32};
use crate::error::Result;
use crate::ledger::{sign_transaction, Block, Chain};
use crate::manager::{ActionBody, ActionManager};
use crate::metrics::{Recorder, Sample};
use crate::monitor::Monitor;
use crate::network::{HeadInfo, LoopbackNet, Message, Node, Payload};
use crate::rpc::{LocalNode, NodeApi};
use crate::sim::{deliver_all, ActionSink, EmittedAction, FileSink, GroundTruthLog, World};

/// Stop agent `agent`'s node and manager at `at_ms`, restart both after
/// `down_ms`.
#[derive(Clone, Copy, Debug)]
pub struct KillPlan {
    pub agent: usize,
    pub at_ms: u64,
    pub down_ms: u64,
}

/// Allowlist change sent by the admin through sealer 0.
#[derive(Clone, Copy, Debug)]
pub struct AdminOp {
    pub at_ms: u64,
    pub agent: usize,
    pub allowed: bool,
}

/// Attach a monitor to an agent's node from `start_ms`, polling every
/// `poll_ms`.
#[derive(Clone, Debug)]
pub struct MonitorPlan {
    pub agent: usize,
    pub start_ms: u64,
    pub poll_ms: u64,
    pub from_block: u64,
    pub shipment: Option<String>,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub kill: Option<KillPlan>,
    pub admin: Vec<AdminOp>,
    /// Inject a block sealed by a non-sealer account at this time.
    pub rogue_block_at_ms: Option<u64>,
    pub monitor: Option<MonitorPlan>,
    /// Persist every node's chain here; in memory otherwise.
    pub chain_dir: Option<PathBuf>,
    pub metrics_csv: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    /// Print sealer 0's import lines.
    pub console: bool,
    /// How long to keep the network running after the simulation stops.
    pub settle_ms: u64,
}

/// An accepted POST: the action and the transaction that carries it.
#[derive(Clone, Debug, PartialEq)]
pub struct Submission {
    pub agent: usize,
    pub at_ms: u64,
    pub tx_hash: Hash32,
    pub nonce: u64,
    pub action: Action,
}

pub struct RunOutcome {
    pub config: ScenarioConfig,
    pub manifest: Manifest,
    pub world: World,
    pub net: LoopbackNet,
    pub log: GroundTruthLog,
    pub submissions: Vec<Submission>,
    pub samples: Vec<Sample>,
    pub console: Vec<String>,
    pub monitor_lines: Vec<String>,
    pub admin_txs: Vec<(AdminOp, Hash32)>,
    pub rogue_block: Option<Block>,
    /// Heads of all live nodes just before the rogue block was injected.
    pub heads_before_rogue: Vec<HeadInfo>,
    pub managers: Vec<ActionManager>,
    pub last_submission_ms: u64,
    /// Virtual time from the last submission until every node agreed.
    pub converged_after_ms: Option<u64>,
    pub wall_time: Duration,
    /// Node index of each agent (sealers come first).
    pub agent_nodes: Vec<usize>,
}

impl RunOutcome {
    pub fn reference_chain(&self) -> &Chain {
        self.net.node(0).expect("sealer 0 is never killed").chain()
    }
}

struct Gateway<'a> {
    net: &'a mut LoopbackNet,
    managers: &'a mut [Option<ActionManager>],
    agent_nodes: &'a [usize],
    submissions: &'a mut Vec<Submission>,
}

impl ActionSink for Gateway<'_> {
    fn name(&self) -> &str {
        "action-manager"
    }

    fn deliver(&mut self, emitted: &EmittedAction) -> std::result::Result<(), String> {
        let i = self.agent_nodes[emitted.agent];
        let Some(manager) = self.managers[emitted.agent].as_mut() else {
            return Err("action manager is down".into());
        };
        let body = serde_json::to_vec(&ActionBody::from(&emitted.action)).expect("serializable");
        let (reply, outgoing) = {
            let mut api = LocalNode::new(self.net.node_mut(i));
            let reply = manager.handle_post_action(&mut api, &body);
            (reply, api.outgoing)
        };
        self.net.send(i, outgoing);
        if reply.status != 202 {
            return Err(format!("{} {}", reply.status, reply.body));
        }
        let tx_hash = reply.tx_hash().expect("202 carries tx_hash");
        self.submissions.push(Submission {
            agent: emitted.agent,
            at_ms: self.net.now_ms(),
            tx_hash,
            nonce: *manager.submitted_nonces().last().expect("just submitted"),
            action: emitted.action.clone(),
        });
        Ok(())
    }
}

/// Runs the whole scenario in one thread on a virtual clock: sealers and
/// agent nodes on a loopback network, one manager per agent, the simulation
/// posting every action. Same config, same result.
pub fn run_in_process(config: &ScenarioConfig, options: &RunOptions) -> Result<RunOutcome> {
    config.validate()?;
    let started = Instant::now();
    let mut world = World::new(config.world_config())?;
    let genesis = build_genesis(config, &world.fleet);
    let manifest = Manifest::new("in-process", config, &world.fleet, &genesis);
    let chain = Chain::from_genesis(genesis.clone())?;
    if let Some(dir) = &options.chain_dir {
        std::fs::create_dir_all(dir)?;
    }
    let chain_file = |name: &str| options.chain_dir.as_ref().map(|d| d.join(format!("{name}.chain")));
    let make_node = |id, name: &str, chain: Chain| -> Result<Node> {
        let node = Node::new(id, chain);
        match chain_file(name) {
            Some(path) => node.with_chain_file(path),
            None => Ok(node),
        }
    };

    let mut net = LoopbackNet::new(config.network.latency_ms, config.network.tick_ms);
    for i in 0..config.sealers {
        let account = sealer_account(i);
        let node = make_node(account.address(), &sealer_name(i), chain.clone())?.with_sealer(account);
        net.add_node(node);
    }
    let mut agent_nodes = Vec::new();
    for a in &world.fleet.agents {
        agent_nodes.push(net.add_node(make_node(a.account.address(), &a.name, chain.clone())?));
    }
    let mut managers: Vec<Option<ActionManager>> = world
        .fleet
        .agents
        .iter()
        .map(|a| Some(ActionManager::new(a.name.clone(), a.account.clone())))
        .collect();

    let mut recorder = match &options.metrics_csv {
        Some(p) => Recorder::to_file(p)?,
        None => Recorder::in_memory(),
    };
    recorder.record(Sample {
        wall_ms: 0,
        sim_s: 0.0,
        height: 0,
        actions: 0,
        bytes: chain.byte_size(),
    })?;
    let mut file_sink = match &options.ground_truth {
        Some(p) => Some(FileSink::create(p)?),
        None => None,
    };

    let admin = admin_account();
    let mut admin_nonce = 0u64;
    let mut admin_txs = Vec::new();
    let mut pending_admin: Vec<AdminOp> = options.admin.clone();
    pending_admin.sort_by_key(|op| op.at_ms);
    let mut rogue_block = None;
    let mut heads_before_rogue = Vec::new();
    let mut monitor: Option<Monitor> = None;
    let mut monitor_lines = Vec::new();
    let mut next_poll_ms: Option<u64> = None;
    let mut dead: Option<(KillPlan, Chain)> = None;
    let mut killed = false;
    let mut log = GroundTruthLog::default();
    let mut submissions = Vec::new();
    let mut console = Vec::new();

    let duration_ms = config.duration_ms();
    let dt = config.sim_dt();
    let mut stop_ms = duration_ms + options.settle_ms.max(config.chain.block_period_ms * 20);
    let mut converged_at = None;

    while net.now_ms() < stop_ms {
        net.advance_clock();
        let now = net.now_ms();
        net.deliver_due();

        if let Some(plan) = options.kill.filter(|k| !killed && now >= k.at_ms) {
            killed = true;
            let i = agent_nodes[plan.agent];
            let node = net.kill(i).expect("node was up");
            managers[plan.agent] = None;
            info!(agent = plan.agent, height = node.chain().height(), "node and manager stopped");
            dead = Some((plan, node.chain().clone()));
        }
        if dead.as_ref().is_some_and(|(p, _)| now >= p.at_ms + p.down_ms) {
            let (plan, chain) = dead.take().expect("checked");
            let spec = &world.fleet.agents[plan.agent];
            let restored = match chain_file(&spec.name) {
                Some(path) => Chain::load(&path)?,
                None => chain,
            };
            let node = make_node(spec.account.address(), &spec.name, restored)?;
            net.restart(agent_nodes[plan.agent], node);
            managers[plan.agent] = Some(ActionManager::new(spec.name.clone(), spec.account.clone()));
            info!(agent = plan.agent, "node and manager restarted");
        }
        // Managers sync their nonce once their node has caught up.
        for (k, m) in managers.iter_mut().enumerate() {
            let Some(m) = m.as_mut().filter(|m| m.next_nonce().is_none()) else {
                continue;
            };
            let mut api = LocalNode::new(net.node_mut(agent_nodes[k]));
            let _ = m.startup_sync(&mut api);
        }

        while pending_admin.first().is_some_and(|op| op.at_ms <= now) {
            let op = pending_admin.remove(0);
            let target = world.fleet.agents[op.agent].account.address();
            let tx = sign_transaction(
                &admin,
                admin_nonce,
                ContractCall::SetAuthorized {
                    target,
                    allowed: op.allowed,
                },
            );
            let mut api = LocalNode::new(net.node_mut(0));
            let hash = api.submit_transaction(tx)?;
            let out = api.outgoing;
            net.send(0, out);
            admin_nonce += 1;
            admin_txs.push((op, hash));
        }

        if options.rogue_block_at_ms.is_some_and(|t| rogue_block.is_none() && now >= t) {
            heads_before_rogue = net.heads();
            let chain = net.node(0).expect("sealer 0 up").chain();
            let rogue = create_account("rogue")?;
            let block = Block::sealed(
                &rogue,
                chain.height() + 1,
                chain.head_hash(),
                now,
                Vec::new(),
                chain.state_hash(),
            );
            let payload: Payload = Arc::new(Message::NewBlock(block.clone()).encode());
            let ids: Vec<_> = net.nodes().map(Node::id).collect();
            for id in ids {
                net.inject(rogue.address(), id, payload.clone());
            }
            rogue_block = Some(block);
        }

        if now <= duration_ms {
            let emitted = world.step(dt);
            let mut gateway = Gateway {
                net: &mut net,
                managers: &mut managers,
                agent_nodes: &agent_nodes,
                submissions: &mut submissions,
            };
            match file_sink.as_mut() {
                Some(f) => deliver_all(&emitted, &mut [&mut gateway, f], &mut log),
                None => deliver_all(&emitted, &mut [&mut gateway], &mut log),
            }
        }

        net.tick_nodes();

        if let Some(node) = net.node_mut(0) {
            for imported in node.drain_imports() {
                let line = imported.console_line();
                if options.console {
                    println!("{} {line}", sealer_name(0));
                }
                console.push(line);
                recorder.record_import(&imported, now, world.now())?;
            }
        }
        for i in 1..net.len() {
            if let Some(node) = net.node_mut(i) {
                node.drain_imports();
            }
        }

        if let Some(plan) = &options.monitor {
            if now >= next_poll_ms.unwrap_or(plan.start_ms) {
                let step = plan.poll_ms.max(1);
                let mut due = next_poll_ms.unwrap_or(plan.start_ms);
                while due <= now {
                    due += step;
                }
                next_poll_ms = Some(due);
                let m = monitor.get_or_insert_with(|| Monitor::new(plan.from_block, plan.shipment.clone()));
                let mut api = LocalNode::new(net.node_mut(agent_nodes[plan.agent]));
                if let Ok(lines) = m.poll(&mut api) {
                    monitor_lines.extend(lines);
                }
            }
        }

        let scheduled_left = dead.is_some()
            || !pending_admin.is_empty()
            || options.kill.is_some_and(|_| !killed)
            || options.rogue_block_at_ms.is_some_and(|_| rogue_block.is_none());
        if now > duration_ms && !scheduled_left {
            if net.converged() {
                converged_at = Some(now);
                break;
            }
        } else if now > duration_ms {
            // Keep going until scheduled events have happened.
            stop_ms = stop_ms.max(now + config.network.tick_ms);
        }
    }

    if let (Some(plan), Some(m)) = (&options.monitor, monitor.as_mut()) {
        let mut api = LocalNode::new(net.node_mut(agent_nodes[plan.agent]));
        if let Ok(lines) = m.poll(&mut api) {
            monitor_lines.extend(lines);
        }
    }

    let last_submission_ms = submissions.iter().map(|s| s.at_ms).max().unwrap_or(0);
    let wall_time = started.elapsed();
    info!(
        actions = log.len(),
        height = net.node(0).map(|n| n.chain().height()),
        wall_ms = wall_time.as_millis() as u64,
        "in-process run finished"
    );
    Ok(RunOutcome {
        config: config.clone(),
        manifest,
        world,
        log,
        submissions,
        samples: recorder.samples().to_vec(),
        console,
        monitor_lines,
        admin_txs,
        rogue_block,
        heads_before_rogue,
        managers: managers
            .into_iter()
            .map(|m| m.expect("every manager is up at the end"))
            .collect(),
        last_submission_ms,
        converged_after_ms: converged_at.map(|t| t.saturating_sub(last_submission_ms)),
        wall_time,
        agent_nodes,
        net,
    })
}
