//! Live deployment in one process over real sockets: bootnode, sealers,
//! agent nodes, one action manager per agent, and the simulation posting
//! actions to the managers over HTTP.

use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use shiptrack_core::ledger::{Block, Chain, ImportedBlock};
use shiptrack_core::manager::ActionBody;
use shiptrack_core::metrics::{Recorder, Sample};
use shiptrack_core::network::{HeadInfo, Node};
use shiptrack_core::orchestrator::{build_genesis, sealer_account, sealer_name, Manifest};
use shiptrack_core::sim::{
    ActionSink, DeliveryFailure, EmittedAction, FileSink, GroundTruthLog, World, DELIVERY_RETRIES,
};
use shiptrack_core::{Account, ScenarioConfig};
use tokio::sync::broadcast;
use tokio::time::MissedTickBehavior;
use tracing::{info, warn};

use crate::bootnode::Bootnode;
use crate::client::RpcClient;
use crate::manager::{spawn_manager, ManagerHandle};
use crate::node::{spawn_node, LiveNodeConfig, NodeHandle};
use crate::{NetClock, RuntimeError, RuntimeResult};

/// Port offsets from `network.base_port`. A base port of 0 picks free
/// ports everywhere.
pub const P2P_OFFSET: u16 = 1;
pub const RPC_OFFSET: u16 = 1001;
pub const MANAGER_OFFSET: u16 = 2001;

#[derive(Clone, Debug)]
pub struct LiveOptions {
    /// Print sealer 0's import lines.
    pub console: bool,
    pub metrics_csv: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    /// How long to wait for convergence after the simulation ends.
    pub settle: Duration,
    /// How long every node and manager gets to become healthy.
    pub health_timeout: Duration,
}

impl Default for LiveOptions {
    fn default() -> LiveOptions {
        LiveOptions {
            console: false,
            metrics_csv: None,
            ground_truth: None,
            settle: Duration::from_secs(10),
            health_timeout: Duration::from_secs(30),
        }
    }
}

pub struct LiveOutcome {
    pub log: GroundTruthLog,
    pub samples: Vec<Sample>,
    pub console: Vec<String>,
    pub heads: Vec<HeadInfo>,
    /// Time from the last post until every node agreed.
    pub converged_after: Option<Duration>,
    pub wall_time: Duration,
}

struct Member {
    name: String,
    account: Account,
    sealer: bool,
    p2p: SocketAddr,
    rpc: SocketAddr,
}

pub struct Deployment {
    pub config: ScenarioConfig,
    pub manifest: Manifest,
    pub clock: NetClock,
    /// Time from launch until everything answered health checks.
    pub ready_after: Duration,
    bootnode: Option<Bootnode>,
    members: Vec<Member>,
    nodes: Vec<Option<NodeHandle>>,
    managers: Vec<Option<ManagerHandle>>,
    manager_addrs: Vec<SocketAddr>,
    agent_nodes: Vec<usize>,
    genesis: Block,
    data_dir: Option<PathBuf>,
}

fn addr(host: IpAddr, base: u16, offset: u16) -> SocketAddr {
    let port = if base == 0 { 0 } else { base + offset };
    SocketAddr::new(host, port)
}

fn chain_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.chain"))
}

/// Starts everything and waits until every node answers `get_head` and
/// every manager reports a nonce.
pub async fn launch(config: &ScenarioConfig, options: &LiveOptions) -> RuntimeResult<Deployment> {
    config.validate()?;
    let started = Instant::now();
    let clock = NetClock::starting_now();
    let host: IpAddr = config
        .network
        .host
        .parse()
        .map_err(|e| RuntimeError::Protocol(format!("host {:?}: {e}", config.network.host)))?;
    let base = config.network.base_port;
    let world = World::new(config.world_config())?;
    let genesis = build_genesis(config, &world.fleet);
    let mut manifest = Manifest::new("live", config, &world.fleet, &genesis);
    manifest.clock_origin_ms = Some(clock.origin_unix_ms);
    if let Some(dir) = &config.data_dir {
        std::fs::create_dir_all(dir)?;
    }

    let bootnode = Bootnode::start(addr(host, base, 0)).await?;
    manifest.bootnode = Some(bootnode.addr.to_string());

    let mut members = Vec::new();
    for i in 0..config.sealers {
        members.push((sealer_name(i), sealer_account(i), true));
    }
    for a in &world.fleet.agents {
        members.push((a.name.clone(), a.account.clone(), false));
    }
    let mut deployment = Deployment {
        config: config.clone(),
        manifest,
        clock,
        ready_after: Duration::ZERO,
        bootnode: Some(bootnode),
        members: Vec::new(),
        nodes: Vec::new(),
        managers: Vec::new(),
        manager_addrs: Vec::new(),
        agent_nodes: Vec::new(),
        genesis,
        data_dir: config.data_dir.clone(),
    };
    for (i, (name, account, sealer)) in members.into_iter().enumerate() {
        let k = i as u16;
        deployment.members.push(Member {
            name,
            account,
            sealer,
            p2p: addr(host, base, P2P_OFFSET + k),
            rpc: addr(host, base, RPC_OFFSET + k),
        });
        let handle = deployment.start_node(i, None).await?;
        deployment.members[i].p2p = handle.p2p;
        deployment.members[i].rpc = handle.rpc;
        deployment.nodes.push(Some(handle));
        if !deployment.members[i].sealer {
            deployment.agent_nodes.push(i);
        }
    }
    for (k, &i) in deployment.agent_nodes.clone().iter().enumerate() {
        let m = &deployment.members[i];
        let manager = spawn_manager(
            &m.name,
            m.account.clone(),
            &format!("http://{}", m.rpc),
            addr(host, base, MANAGER_OFFSET + k as u16),
        )
        .await?;
        deployment.manager_addrs.push(manager.addr);
        deployment.managers.push(Some(manager));
    }
    deployment.fill_manifest();
    deployment.wait_healthy(options.health_timeout).await?;
    deployment.ready_after = started.elapsed();
    info!(
        nodes = deployment.nodes.len(),
        managers = deployment.managers.len(),
        ready_ms = deployment.ready_after.as_millis() as u64,
        "deployment healthy"
    );
    Ok(deployment)
}

impl Deployment {
    async fn start_node(&self, i: usize, node: Option<Node>) -> RuntimeResult<NodeHandle> {
        let m = &self.members[i];
        let node = match node {
            Some(n) => n,
            None => {
                let path = self.data_dir.as_ref().map(|d| chain_path(d, &m.name));
                let chain = match &path {
                    Some(p) if p.exists() => {
                        let c = Chain::load(p)?;
                        if c.genesis_hash() != self.genesis.hash() {
                            return Err(RuntimeError::Protocol(format!(
                                "{} belongs to another network",
                                p.display()
                            )));
                        }
                        c
                    }
                    _ => Chain::from_genesis(self.genesis.clone())?,
                };
                let mut n = Node::new(m.account.address(), chain);
                if m.sealer {
                    n = n.with_sealer(m.account.clone());
                }
                match path {
                    Some(p) => n.with_chain_file(p)?,
                    None => n,
                }
            }
        };
        spawn_node(LiveNodeConfig {
            name: m.name.clone(),
            node,
            p2p_listen: m.p2p,
            rpc_listen: m.rpc,
            bootnode: self.manifest.bootnode.clone().expect("bootnode started"),
            clock: self.clock,
            tick_ms: self.config.network.tick_ms,
            bootnode_attempts: 10,
        })
        .await
    }

    fn fill_manifest(&mut self) {
        let n_sealers = self.config.sealers;
        for (i, m) in self.members.iter().enumerate() {
            let entry = if i < n_sealers {
                &mut self.manifest.sealers[i]
            } else {
                &mut self.manifest.agents[i - n_sealers]
            };
            entry.p2p = Some(m.p2p.to_string());
            entry.rpc = Some(format!("http://{}", m.rpc));
        }
        for (k, a) in self.manager_addrs.iter().enumerate() {
            self.manifest.agents[k].manager = Some(format!("http://{a}"));
        }
    }

    /// Polls `get_head` on every node and `/health` on every manager over
    /// HTTP until all answer and every manager has a nonce.
    pub async fn wait_healthy(&self, timeout: Duration) -> RuntimeResult<()> {
        let http = reqwest::Client::new();
        let deadline = Instant::now() + timeout;
        loop {
            let mut ok = true;
            for m in &self.members {
                if RpcClient::new(&m.rpc.to_string()).get_head().await.is_err() {
                    ok = false;
                    break;
                }
            }
            if ok {
                for a in &self.manager_addrs {
                    let synced = match http.get(format!("http://{a}/health")).send().await {
                        Ok(r) => r
                            .bytes()
                            .await
                            .ok()
                            .and_then(|b| serde_json::from_slice::<serde_json::Value>(&b).ok())
                            .is_some_and(|v| v["next_nonce"].is_u64()),
                        Err(_) => false,
                    };
                    if !synced {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                return Ok(());
            }
            if Instant::now() >= deadline {
                return Err(RuntimeError::Timeout("deployment did not become healthy".into()));
            }
            tokio::time::sleep(Duration::from_millis(100)).await;
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, i: usize) -> Option<&NodeHandle> {
        self.nodes.get(i)?.as_ref()
    }

    /// Node index of agent `k`.
    pub fn agent_node(&self, k: usize) -> usize {
        self.agent_nodes[k]
    }

    pub fn manager_url(&self, k: usize) -> String {
        format!("http://{}", self.manager_addrs[k])
    }

    /// Heads of every running node.
    pub async fn heads(&self) -> Vec<HeadInfo> {
        let mut heads = Vec::new();
        for n in self.nodes.iter().flatten() {
            if let Ok(h) = n.head().await {
                heads.push(h);
            }
        }
        heads
    }

    pub async fn converged(&self) -> bool {
        let heads = self.heads().await;
        let running = self.nodes.iter().flatten().count();
        heads.len() == running
            && heads.iter().all(|h| {
                h.height == heads[0].height
                    && h.hash == heads[0].hash
                    && h.state_hash == heads[0].state_hash
                    && h.pending == 0
                    && !h.syncing
            })
    }

    pub async fn wait_converged(&self, timeout: Duration) -> Option<Duration> {
        let start = Instant::now();
        loop {
            if self.converged().await {
                return Some(start.elapsed());
            }
            if start.elapsed() >= timeout {
                return None;
            }
            tokio::time::sleep(Duration::from_millis(50)).await;
        }
    }

    /// Stops agent `k`'s node and manager; returns the node.
    pub async fn kill_agent(&mut self, k: usize) -> Option<Node> {
        if let Some(mut m) = self.managers[k].take() {
            m.stop();
        }
        let i = self.agent_nodes[k];
        let handle = self.nodes[i].take()?;
        handle.shutdown().await
    }

    /// Restarts agent `k` on its old ports, from `node` or from its chain
    /// file, and waits for its manager to sync.
    pub async fn restart_agent(&mut self, k: usize, node: Option<Node>) -> RuntimeResult<()> {
        let i = self.agent_nodes[k];
        let handle = self.start_node(i, node).await?;
        self.nodes[i] = Some(handle);
        let m = &self.members[i];
        let manager = spawn_manager(
            &m.name,
            m.account.clone(),
            &format!("http://{}", m.rpc),
            self.manager_addrs[k],
        )
        .await?;
        self.managers[k] = Some(manager);
        Ok(())
    }

    /// Runs the simulation for the configured duration, posting every action
    /// to its agent's manager, then waits for the network to agree.
    pub async fn run_simulation(&mut self, options: &LiveOptions) -> RuntimeResult<LiveOutcome> {
        let started = Instant::now();
        let config = &self.config;
        let mut world = World::new(config.world_config())?;
        let sealer0 = self.node(0).ok_or_else(|| RuntimeError::Protocol("sealer 0 is down".into()))?;
        let mut imports = sealer0.subscribe_imports();
        let head = sealer0.head().await?;
        let rpc0 = RpcClient::new(&sealer0.rpc.to_string());
        let events = rpc0.get_events(0).await?.len() as u64;

        let mut recorder = match &options.metrics_csv {
            Some(p) => Recorder::to_file(p)?,
            None => Recorder::in_memory(),
        };
        recorder.record(Sample {
            wall_ms: self.clock.now_ms(),
            sim_s: 0.0,
            height: head.height,
            actions: events,
            bytes: head.byte_size,
        })?;
        let mut file_sink = match &options.ground_truth {
            Some(p) => Some(FileSink::create(p)?),
            None => None,
        };
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(10))
            .build()
            .expect("http client");
        let mut log = GroundTruthLog::default();
        let mut console = Vec::new();
        let mut last_post = Instant::now();

        let tick = Duration::from_millis(config.network.tick_ms);
        let steps = config.duration_ms() / config.network.tick_ms;
        let dt = config.sim_dt();
        let mut ticker = tokio::time::interval(tick);
        ticker.set_missed_tick_behavior(MissedTickBehavior::Burst);
        for _ in 0..steps {
            ticker.tick().await;
            for emitted in world.step(dt) {
                let index = log.actions.len();
                log.actions.push(emitted.action.clone());
                let url = self.manager_url(emitted.agent);
                if let Err(error) = post_with_retries(&http, &url, &emitted).await {
                    warn!(%url, %error, "action not delivered");
                    log.failures.push(DeliveryFailure {
                        index,
                        sink: "action-manager".into(),
                        error,
                    });
                }
                last_post = Instant::now();
                if let Some(f) = file_sink.as_mut() {
                    if let Err(error) = f.deliver(&emitted) {
                        log.failures.push(DeliveryFailure {
                            index,
                            sink: f.name().to_string(),
                            error,
                        });
                    }
                }
            }
            drain(&mut imports, &mut recorder, &mut console, self.clock, world.now(), options.console)?;
        }

        let deadline = Instant::now() + options.settle;
        let converged_after = loop {
            drain(&mut imports, &mut recorder, &mut console, self.clock, world.now(), options.console)?;
            if self.converged().await {
                break Some(last_post.elapsed());
            }
            if Instant::now() >= deadline {
                break None;
            }
            tokio::time::sleep(Duration::from_millis(50)).await;
        };
        // Imports that raced with the last head check.
        tokio::time::sleep(tick * 2).await;
        drain(&mut imports, &mut recorder, &mut console, self.clock, world.now(), options.console)?;
        Ok(LiveOutcome {
            log,
            samples: recorder.samples().to_vec(),
            console,
            heads: self.heads().await,
            converged_after,
            wall_time: started.elapsed(),
        })
    }

    /// Stops everything. Chain files stay on disk. Safe to call twice.
    pub async fn teardown(&mut self) {
        for m in self.managers.iter_mut() {
            if let Some(mut m) = m.take() {
                m.stop();
            }
        }
        for n in self.nodes.iter_mut() {
            if let Some(n) = n.take() {
                n.shutdown().await;
            }
        }
        if let Some(b) = self.bootnode.take() {
            b.stop();
        }
    }
}

fn drain(
    imports: &mut broadcast::Receiver<ImportedBlock>,
    recorder: &mut Recorder,
    console: &mut Vec<String>,
    clock: NetClock,
    sim_s: f64,
    print: bool,
) -> RuntimeResult<()> {
    loop {
        match imports.try_recv() {
            Ok(imported) => {
                let line = imported.console_line();
                if print {
                    println!("{} {line}", sealer_name(0));
                }
                console.push(line);
                recorder.record_import(&imported, clock.now_ms(), sim_s)?;
            }
            Err(broadcast::error::TryRecvError::Lagged(n)) => {
                warn!(missed = n, "metrics fell behind block imports");
            }
            Err(_) => return Ok(()),
        }
    }
}

async fn post_with_retries(
    http: &reqwest::Client,
    manager: &str,
    emitted: &EmittedAction,
) -> Result<(), String> {
    let body = serde_json::to_vec(&ActionBody::from(&emitted.action)).expect("serializable");
    let url = format!("{manager}/action");
    let mut last = String::new();
    for attempt in 0..=DELIVERY_RETRIES {
        if attempt > 0 {
            tokio::time::sleep(Duration::from_millis(50 << attempt)).await;
        }
        match http
            .post(&url)
            .header("content-type", "application/json")
            .body(body.clone())
            .send()
            .await
        {
            Ok(r) if r.status().as_u16() == 202 => return Ok(()),
            Ok(r) => {
                let status = r.status().as_u16();
                let text = r.text().await.unwrap_or_default();
                last = format!("{status} {text}");
                if status == 400 {
                    break;
                }
            }
            Err(e) => last = e.to_string(),
        }
    }
    Err(last)
}

impl Drop for Deployment {
    fn drop(&mut self) {
        for m in self.managers.iter_mut().flatten() {
            m.stop();
        }
        // Node handles abort their tasks when dropped.
        self.nodes.clear();
    }
}
