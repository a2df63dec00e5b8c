use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use shiptrack_core::ledger::Chain;
use shiptrack_core::metrics::{analyze, load_csv, Report};
use shiptrack_core::monitor::Monitor;
use shiptrack_core::network::{HeadInfo, Node};
use shiptrack_core::orchestrator::{build_genesis, run_in_process, sealer_account, RunOptions};
use shiptrack_core::sim::World;
use shiptrack_core::{Account, ScenarioConfig};
use shiptrack_runtime::bootnode::Bootnode;
use shiptrack_runtime::client::RpcClient;
use shiptrack_runtime::launch::{launch, LiveOptions};
use shiptrack_runtime::manager::spawn_manager;
use shiptrack_runtime::node::{spawn_node, LiveNodeConfig};
use shiptrack_runtime::NetClock;
use tokio::sync::watch;

#[derive(Debug, Parser)]
#[command(name = "shiptrack", version, about = "Shipment tracking on a proof-of-authority ledger")]
pub struct Cli {
    /// More log output (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a whole scenario and print its manifest as JSON.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// One process, virtual clock, loopback network.
        #[arg(long)]
        in_process: bool,
        /// Wall-clock seconds to simulate.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Print sealer 0's block imports.
        #[arg(long)]
        console: bool,
        /// Write ground truth, metrics, report and chains here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Start one node.
    Node {
        #[arg(long)]
        config: Option<PathBuf>,
        /// `sealer<i>` or an agent name such as `deliverers[3]`.
        #[arg(long)]
        name: String,
        #[arg(long)]
        bootnode: String,
        #[arg(long, default_value = "127.0.0.1:0")]
        p2p: SocketAddr,
        #[arg(long, default_value = "127.0.0.1:0")]
        rpc: SocketAddr,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Unix milliseconds block timestamps count from.
        #[arg(long)]
        clock_origin: Option<u64>,
    },
    /// Start the peer registry.
    Bootnode {
        #[arg(long, default_value = "127.0.0.1:30300")]
        listen: SocketAddr,
    },
    /// Start the action manager of one agent.
    Manager {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        agent: String,
        /// The agent's node RPC endpoint.
        #[arg(long)]
        rpc: String,
        #[arg(long, default_value = "127.0.0.1:0")]
        listen: SocketAddr,
    },
    /// Print past actions from a node, then follow new ones.
    Monitor {
        #[arg(long)]
        rpc: String,
        #[arg(long, default_value_t = 0)]
        from_block: u64,
        #[arg(long)]
        shipment: Option<String>,
        #[arg(long, default_value_t = 500)]
        poll_ms: u64,
        /// Exit after printing the history.
        #[arg(long)]
        history_only: bool,
    },
    /// Fit chain size against action count from a metrics CSV.
    Analyze {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the default scenario config as TOML.
    DefaultConfig,
}

pub fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

pub fn load_config(path: Option<&Path>) -> Result<ScenarioConfig> {
    match path {
        Some(p) => ScenarioConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(ScenarioConfig::default()),
    }
}

fn tokio_runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            in_process,
            duration,
            seed,
            console,
            out_dir,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(d) = duration {
                cfg.duration_s = d;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(dir) = &out_dir {
                std::fs::create_dir_all(dir)?;
            }
            cfg.validate()?;
            if in_process {
                run_in_process_cmd(&cfg, console, out_dir.as_deref())
            } else {
                tokio_runtime()?.block_on(run_live(cfg, console, out_dir))
            }
        }
        Command::Node {
            config,
            name,
            bootnode,
            p2p,
            rpc,
            data_dir,
            clock_origin,
        } => {
            let cfg = load_config(config.as_deref())?;
            tokio_runtime()?.block_on(node_cmd(cfg, name, bootnode, p2p, rpc, data_dir, clock_origin))
        }
        Command::Bootnode { listen } => tokio_runtime()?.block_on(async move {
            let b = Bootnode::start(listen).await?;
            println!("{}", b.addr);
            tokio::signal::ctrl_c().await?;
            Ok(())
        }),
        Command::Manager {
            config,
            agent,
            rpc,
            listen,
        } => {
            let cfg = load_config(config.as_deref())?;
            let account = agent_account(&cfg, &agent)?;
            tokio_runtime()?.block_on(async move {
                let m = spawn_manager(&agent, account, &rpc, listen).await?;
                println!("{}", m.url());
                tokio::signal::ctrl_c().await?;
                Ok(())
            })
        }
        Command::Monitor {
            rpc,
            from_block,
            shipment,
            poll_ms,
            history_only,
        } => tokio_runtime()?.block_on(monitor_cmd(rpc, from_block, shipment, poll_ms, history_only)),
        Command::Analyze { csv, out } => {
            let report = analyze_csv(&csv)?;
            let json = serde_json::to_string_pretty(&report)?;
            if let Some(out) = out {
                std::fs::write(out, &json)?;
            }
            println!("{json}");
            Ok(())
        }
        Command::DefaultConfig => {
            print!("{}", ScenarioConfig::default().to_toml_string());
            Ok(())
        }
    }
}

pub fn analyze_csv(path: &Path) -> Result<Report> {
    let samples = load_csv(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(analyze(&samples)?)
}

fn agent_account(cfg: &ScenarioConfig, name: &str) -> Result<Account> {
    let world = World::new(cfg.world_config())?;
    world
        .fleet
        .by_name(name)
        .map(|a| a.account.clone())
        .ok_or_else(|| anyhow!("no agent named {name:?}"))
}

/// Account and sealer flag for a node name.
fn member(cfg: &ScenarioConfig, name: &str) -> Result<(Account, bool)> {
    if let Some(i) = name.strip_prefix("sealer").and_then(|s| s.parse::<usize>().ok()) {
        if i >= cfg.sealers {
            bail!("{name}: only {} sealers configured", cfg.sealers);
        }
        return Ok((sealer_account(i), true));
    }
    Ok((agent_account(cfg, name)?, false))
}

fn summary(head: &HeadInfo, actions: usize, failures: usize) -> String {
    format!(
        "height {} head {} state {} bytes {} actions {} delivery failures {}",
        head.height, head.hash, head.state_hash, head.byte_size, actions, failures
    )
}

fn write_report(dir: &Path) -> Result<()> {
    match analyze_csv(&dir.join("metrics.csv")) {
        Ok(r) => {
            std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&r)?)?;
            eprintln!(
                "slope {:.0} B/action (reference 1.6 KB/action), R² {:.4}",
                r.slope_bytes_per_action, r.r2
            );
        }
        Err(e) => eprintln!("no report: {e}"),
    }
    Ok(())
}

fn run_in_process_cmd(cfg: &ScenarioConfig, console: bool, out_dir: Option<&Path>) -> Result<()> {
    let options = RunOptions {
        console,
        chain_dir: out_dir.map(|d| d.join("chains")),
        metrics_csv: out_dir.map(|d| d.join("metrics.csv")),
        ground_truth: out_dir.map(|d| d.join("ground_truth.jsonl")),
        ..RunOptions::default()
    };
    let out = run_in_process(cfg, &options)?;
    let json = out.manifest.to_json();
    println!("{json}");
    let head = out.reference_chain().head();
    let info = out.net.node(0).expect("sealer 0").head();
    eprintln!("{}", summary(&info, out.log.len(), out.log.failures.len()));
    eprintln!(
        "converged {} ms after the last submission, wall {:.1} s",
        out.converged_after_ms.map_or("never".to_string(), |v| v.to_string()),
        out.wall_time.as_secs_f64()
    );
    debug_assert_eq!(head.hash(), info.hash);
    if let Some(dir) = out_dir {
        std::fs::write(dir.join("manifest.json"), json)?;
        write_report(dir)?;
    }
    if out.converged_after_ms.is_none() {
        bail!("network did not converge");
    }
    Ok(())
}

async fn run_live(mut cfg: ScenarioConfig, console: bool, out_dir: Option<PathBuf>) -> Result<()> {
    if let Some(dir) = &out_dir {
        cfg.data_dir.get_or_insert_with(|| dir.join("chains"));
    }
    let options = LiveOptions {
        console,
        metrics_csv: out_dir.as_ref().map(|d| d.join("metrics.csv")),
        ground_truth: out_dir.as_ref().map(|d| d.join("ground_truth.jsonl")),
        ..LiveOptions::default()
    };
    let mut d = launch(&cfg, &options).await?;
    let json = d.manifest.to_json();
    println!("{json}");
    if let Some(dir) = &out_dir {
        std::fs::write(dir.join("manifest.json"), &json)?;
    }
    let result = d.run_simulation(&options).await;
    d.teardown().await;
    let out = result?;
    let head = out.heads.first().ok_or_else(|| anyhow!("no node answered"))?;
    eprintln!("{}", summary(head, out.log.len(), out.log.failures.len()));
    if let Some(dir) = &out_dir {
        write_report(dir)?;
    }
    match out.converged_after {
        Some(t) => {
            eprintln!("converged {} ms after the last submission", t.as_millis());
            Ok(())
        }
        None => bail!("network did not converge"),
    }
}

async fn node_cmd(
    cfg: ScenarioConfig,
    name: String,
    bootnode: String,
    p2p: SocketAddr,
    rpc: SocketAddr,
    data_dir: Option<PathBuf>,
    clock_origin: Option<u64>,
) -> Result<()> {
    let (account, sealer) = member(&cfg, &name)?;
    let world = World::new(cfg.world_config())?;
    let genesis = build_genesis(&cfg, &world.fleet);
    let path = data_dir.map(|d| d.join(format!("{name}.chain")));
    let chain = match &path {
        Some(p) if p.exists() => Chain::load(p)?,
        _ => Chain::from_genesis(genesis.clone())?,
    };
    if chain.genesis_hash() != genesis.hash() {
        bail!("chain file belongs to another network");
    }
    let mut node = Node::new(account.address(), chain);
    if sealer {
        node = node.with_sealer(account);
    }
    if let Some(p) = path {
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir)?;
        }
        node = node.with_chain_file(p)?;
    }
    let clock = clock_origin.map_or_else(NetClock::starting_now, |origin_unix_ms| NetClock { origin_unix_ms });
    let handle = spawn_node(LiveNodeConfig {
        name: name.clone(),
        node,
        p2p_listen: p2p,
        rpc_listen: rpc,
        bootnode,
        clock,
        tick_ms: cfg.network.tick_ms,
        bootnode_attempts: 10,
    })
    .await?;
    println!(
        "{}",
        serde_json::json!({"name": name, "address": handle.id, "p2p": handle.p2p.to_string(), "rpc": handle.rpc_url()})
    );
    tokio::signal::ctrl_c().await?;
    handle.shutdown().await;
    Ok(())
}

async fn monitor_cmd(
    rpc: String,
    from_block: u64,
    shipment: Option<String>,
    poll_ms: u64,
    history_only: bool,
) -> Result<()> {
    let client = RpcClient::new(&rpc);
    let mut monitor = Monitor::new(from_block, shipment);
    let (stop_tx, stop_rx) = watch::channel(history_only);
    if history_only {
        let events = client.get_events(from_block).await?;
        for line in monitor.feed(&events) {
            println!("{line}");
        }
        return Ok(());
    }
    tokio::spawn(async move {
        let _ = tokio::signal::ctrl_c().await;
        let _ = stop_tx.send(true);
    });
    shiptrack_runtime::monitor::stream(&client, &mut monitor, Duration::from_millis(poll_ms), stop_rx, |l| {
        println!("{l}")
    })
    .await?;
    Ok(())
}
