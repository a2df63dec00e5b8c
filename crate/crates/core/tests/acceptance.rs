//! Acceptance criteria 1 to 10. Runs as a plain binary so each verdict is
//! printed whether it passes or not; exits non-zero if any criterion fails.

use std::cmp::Reverse;
use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use shiptrack_core::contracts::{
    execute_block, Action, ContractError, ContractStore, ReceiptStatus, TxFailure,
};
use shiptrack_core::encoding::canonical_string;
use shiptrack_core::ledger::{BlockRejection, Chain};
use shiptrack_core::metrics::analyze;
use shiptrack_core::monitor::{format_line, Monitor};
use shiptrack_core::orchestrator::{
    run_in_process, AdminOp, KillPlan, MonitorPlan, RunOptions, RunOutcome,
};
use shiptrack_core::sim::{RequestSampler, World};
use shiptrack_core::{create_account, Address, ScenarioConfig};

const SETTLE_LIMIT_MS: u64 = 5_000;
const RUNTIME_LIMIT: Duration = Duration::from_secs(180);
const MIN_ACTIONS: usize = 300;
const MIN_R2: f64 = 0.99;
const MAX_SLOPE_SPREAD: f64 = 0.15;
const EMPTY_BLOCK_LIMIT: f64 = 0.05;
const REFERENCE_SLOPE: &str = "reference 1.6 KB/action";
const REVOKE_MS: u64 = 25_000;
const GRANT_MS: u64 = 60_000;
const KILL_AT_MS: u64 = 30_000;
const DOWN_MS: u64 = 20_000;
const SAMPLED_REQUESTS: usize = 10_000;
const SIGMAS: f64 = 3.0;
const MONITOR_LINE: &str = r"^\d{4}-\d{2}-\d{2} \d{2}:\d{2}:\d{2} \d+ \S+ [12] +X: \d+, +Y: \d+$";

type Verdict = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

/// Runs of the default scenario reused by several criteria.
struct Runs {
    default: RunOutcome,
    default_again: Option<RunOutcome>,
}

fn default_run() -> RunOutcome {
    run_in_process(&ScenarioConfig::default(), &RunOptions::default()).expect("default run")
}

fn key(a: &Action) -> String {
    canonical_string(a)
}

fn group(actions: impl IntoIterator<Item = Action>) -> HashMap<String, Vec<Action>> {
    let mut m: HashMap<String, Vec<Action>> = HashMap::new();
    for a in actions {
        m.entry(a.shipment_id.clone()).or_default().push(a);
    }
    m
}

fn stored(chain: &Chain) -> HashMap<String, Vec<Action>> {
    chain.state().shipments().map(|s| (s.id.clone(), s.actions().to_vec())).collect()
}

fn c1_convergence(r: &Runs) -> Verdict {
    let out = &r.default;
    let settled = out.converged_after_ms.ok_or("nodes never agreed")?;
    let heads = out.net.heads();
    ensure!(heads.len() == 43, "{} nodes reported a head", heads.len());
    let first = &heads[0];
    for h in &heads {
        ensure!(
            (h.height, h.hash, h.state_hash) == (first.height, first.hash, first.state_hash),
            "head mismatch: {h:?} vs {first:?}"
        );
    }
    ensure!(settled <= SETTLE_LIMIT_MS, "settled {settled} ms after the last submission");
    ensure!(out.wall_time <= RUNTIME_LIMIT, "runtime {:?}", out.wall_time);
    Ok(format!(
        "43 nodes at height {} settled {} ms after the last submission (limit {} ms), runtime {:.1} s (limit {} s)",
        first.height,
        settled,
        SETTLE_LIMIT_MS,
        out.wall_time.as_secs_f64(),
        RUNTIME_LIMIT.as_secs()
    ))
}

fn c2_fidelity(r: &Runs) -> Verdict {
    let out = &r.default;
    ensure!(out.log.failures.is_empty(), "{} delivery failures", out.log.failures.len());
    let truth = &out.log.actions;
    for node in out.net.nodes() {
        let mine: Vec<Action> = node.chain().state().shipments().flat_map(|s| s.actions().to_vec()).collect();
        let mut a: Vec<String> = mine.iter().map(key).collect();
        let mut b: Vec<String> = truth.iter().map(key).collect();
        a.sort();
        b.sort();
        ensure!(a == b, "node {} holds {} actions, ground truth has {}", node.id(), a.len(), b.len());
        ensure!(
            stored(node.chain()) == group(truth.iter().cloned()),
            "per-shipment order differs on node {}",
            node.id()
        );
    }
    Ok(format!(
        "{} actions over {} shipments identical on all {} nodes, 0 delivery failures",
        truth.len(),
        group(truth.iter().cloned()).len(),
        out.net.len()
    ))
}

fn c3_linearity() -> Verdict {
    let mut fits = Vec::new();
    for seed in [0, 1] {
        let config = ScenarioConfig { seed, ..ScenarioConfig::default() };
        let out = run_in_process(&config, &RunOptions::default()).map_err(|e| e.to_string())?;
        let n = out.log.len();
        ensure!(n >= MIN_ACTIONS, "seed {seed}: {n} actions, need {MIN_ACTIONS}");
        let blocks = &out.reference_chain().blocks()[1..];
        let empty = blocks.iter().filter(|b| b.transactions.is_empty()).count() as f64 / blocks.len() as f64;
        ensure!(empty < EMPTY_BLOCK_LIMIT, "seed {seed}: {:.1}% empty blocks", empty * 100.0);
        let report = analyze(&out.samples).map_err(|e| e.to_string())?;
        ensure!(report.r2 >= MIN_R2, "seed {seed}: R² {:.4}", report.r2);
        fits.push((seed, n, report.slope_bytes_per_action, report.r2));
    }
    let (a, b) = (fits[0].2, fits[1].2);
    let spread = (a - b).abs() / a.min(b);
    ensure!(spread <= MAX_SLOPE_SPREAD, "slopes {a:.0} and {b:.0} differ by {:.1}%", spread * 100.0);
    let each: Vec<String> = fits
        .iter()
        .map(|(s, n, slope, r2)| format!("seed {s}: {n} actions, slope {:.2} KB/action, R² {r2:.4}", slope / 1000.0))
        .collect();
    Ok(format!(
        "{}; spread {:.1}% (limit {:.0}%); {REFERENCE_SLOPE}",
        each.join("; "),
        spread * 100.0,
        MAX_SLOPE_SPREAD * 100.0
    ))
}

/// The courier with the most submissions both inside (`lo`, `hi`) and after
/// `hi` in the undisturbed default run. Admin calls and outages do not
/// change what the simulator emits.
fn courier_active_in(r: &Runs, lo: u64, hi: u64) -> Result<usize, String> {
    let out = &r.default;
    let margin = 2 * out.config.chain.block_period_ms;
    (0..out.world.fleet.len())
        .filter(|&i| out.world.fleet.agents[i].name.starts_with("deliverers"))
        .map(|i| {
            let at = |f: &dyn Fn(u64) -> bool| out.submissions.iter().filter(|s| s.agent == i && f(s.at_ms)).count();
            let inside = at(&|t| t > lo + margin && t + margin < hi);
            let after = at(&|t| t > hi + margin);
            (inside.min(after), Reverse(i))
        })
        .max()
        .filter(|(n, _)| *n > 0)
        .map(|(_, Reverse(i))| i)
        .ok_or_else(|| "no courier active in both windows".to_string())
}

fn c4_access_control(r: &Runs) -> Verdict {
    let config = ScenarioConfig::default();
    let agent = courier_active_in(r, REVOKE_MS, GRANT_MS)?;
    let options = RunOptions {
        admin: vec![
            AdminOp { at_ms: REVOKE_MS, agent, allowed: false },
            AdminOp { at_ms: GRANT_MS, agent, allowed: true },
        ],
        ..RunOptions::default()
    };
    let out = run_in_process(&config, &options).map_err(|e| e.to_string())?;
    let chain = out.reference_chain();
    let height_of = |h| chain.find_transaction(h).map(|p| p.0).ok_or("transaction not on chain");
    for (op, h) in &out.admin_txs {
        ensure!(chain.receipt_for(h).is_some_and(|r| r.is_ok()), "admin op {op:?} failed");
    }
    let revoked = height_of(&out.admin_txs[0].1)?;
    let granted = height_of(&out.admin_txs[1].1)?;
    let (mut failed, mut before, mut after, mut others) = (0, 0, 0, 0);
    for s in &out.submissions {
        let h = height_of(&s.tx_hash)?;
        let receipt = chain.receipt_for(&s.tx_hash).ok_or("no receipt")?;
        let in_store = chain
            .state()
            .shipment(&s.action.shipment_id)
            .is_some_and(|sh| sh.actions().contains(&s.action));
        if s.agent != agent {
            ensure!(receipt.is_ok() && in_store, "agent {} affected: {:?}", s.agent, receipt.status);
            others += 1;
        } else if h > revoked && h < granted {
            ensure!(
                receipt.status == ReceiptStatus::Failed { failure: TxFailure::UnauthorizedSender },
                "revoked courier got {:?}",
                receipt.status
            );
            ensure!(!in_store, "revoked courier's action is in state");
            failed += 1;
        } else if h < revoked || h > granted {
            ensure!(receipt.is_ok() && in_store, "courier outside the window got {:?}", receipt.status);
            if h > granted {
                after += 1;
            } else {
                before += 1;
            }
        }
    }
    ensure!(failed > 0, "no submissions while revoked");
    ensure!(after > 0, "no submissions after the re-grant");
    Ok(format!(
        "{}: {before} included before revoke, {failed} included-but-failed while revoked, {after} included after re-grant; {others} other submissions unaffected",
        out.manifest.agents[agent].name
    ))
}

fn c5_poa(r: &Runs) -> Verdict {
    let chain = r.default.reference_chain();
    let sealers = chain.sealers().addresses().to_vec();
    for b in &chain.blocks()[1..] {
        let want = sealers[((b.height - 1) % sealers.len() as u64) as usize];
        ensure!(b.sealer == want, "block {} sealed by {}, expected {}", b.height, b.sealer, want);
    }
    let options = RunOptions { rogue_block_at_ms: Some(5_000), ..RunOptions::default() };
    let config = ScenarioConfig { duration_s: 15.0, ..ScenarioConfig::default() };
    let out = run_in_process(&config, &options).map_err(|e| e.to_string())?;
    let rogue = out.rogue_block.as_ref().ok_or("no rogue block injected")?;
    ensure!(!sealers.contains(&rogue.sealer), "rogue sealer is authorized");
    for node in out.net.nodes() {
        ensure!(
            node.rejections()
                .iter()
                .any(|x| x.block_hash == rogue.hash() && x.rejection == BlockRejection::BadSeal),
            "node {} did not reject the rogue block with bad-seal",
            node.id()
        );
        ensure!(
            node.chain().blocks().iter().all(|b| b.hash() != rogue.hash() && b.sealer != rogue.sealer),
            "rogue block on node {}",
            node.id()
        );
    }
    ensure!(out.net.converged(), "network split after the rogue block");
    Ok(format!(
        "{} blocks follow the {}-sealer rotation; rogue block at height {} refused with bad-seal by all {} nodes",
        chain.height(),
        sealers.len(),
        rogue.height,
        out.net.len()
    ))
}

fn c6_contracts(r: &Runs) -> Verdict {
    let agent = create_account("acceptance-agent").unwrap();
    let admin = create_account("acceptance-admin").unwrap();
    let me = agent.address();
    let bounds = shiptrack_core::contracts::MapBounds { width: 1440, height: 720 };
    let mut store = ContractStore::new(admin.address(), [me], bounds);
    ensure!(store.get_shipment("nobody") == Address::ZERO, "unknown shipment has an address");
    let action = |i: i64| Action {
        shipment_id: "s1".into(),
        timestamp: "2018-06-12 10:00:00".into(),
        action_type: 1,
        agent_name: "deliverers[0]".into(),
        agent_address: me,
        x: i,
        y: 1,
    };
    let mut ok = 0;
    for i in 0..5 {
        if store.add_action(&me, "s1", action(i)).is_ok() {
            ok += 1;
        }
    }
    let stranger = create_account("acceptance-stranger").unwrap().address();
    ensure!(
        store.add_action(&stranger, "s1", action(9)) == Err(TxFailure::UnauthorizedSender),
        "unauthorized add succeeded"
    );
    ensure!(store.add_action(&me, "s1", Action { action_type: 3, ..action(1) }).is_err(), "bad type accepted");
    ensure!(store.get_action_count("s1") == Ok(ok), "count {:?} after {ok} adds", store.get_action_count("s1"));
    ensure!(
        matches!(store.get_action("s1", ok), Err(ContractError::IndexError { .. })),
        "out of range read gave {:?}",
        store.get_action("s1", ok)
    );
    ensure!(store.get_shipment("s1") != Address::ZERO, "created shipment has no address");
    let mut sh = store.shipment("s1").unwrap().clone();
    ensure!(
        matches!(sh.add_action(&me, action(2)), Err(ContractError::NotManager { .. })),
        "shipment accepted a non-manager caller"
    );

    let chain = r.default.reference_chain();
    let replayed = Chain::replay(chain.blocks().to_vec()).map_err(|e| e.to_string())?;
    ensure!(replayed.state_hash() == chain.state_hash(), "replay ends in another state");
    let mut state = chain.genesis().genesis.as_ref().ok_or("genesis without info")?.initial_store();
    for b in &chain.blocks()[1..] {
        state = execute_block(&state, b.height, &b.transactions).store;
        ensure!(state.state_hash() == b.state_hash, "state_hash differs at height {}", b.height);
    }
    Ok(format!(
        "zero address, count, index-error, not-manager, unauthorized; replay of {} blocks reproduces every state_hash",
        chain.height()
    ))
}

fn c7_topology() -> Verdict {
    let world = World::new(ScenarioConfig::default().world_config()).map_err(|e| e.to_string())?;
    let t = &world.topology;
    let counts = (t.zones.len(), t.cells.len(), t.access_hubs.len(), t.local_hubs.len());
    ensure!(counts == (36, 4, 49, 9), "zones, cells, access, local = {counts:?}");
    ensure!(t.local_hubs.iter().all(|h| t.access_hubs.contains(h)), "local hub outside the access hubs");
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut sampler = RequestSampler::new(t);
    let mut drawn = vec![0usize; t.zones.len()];
    for _ in 0..SAMPLED_REQUESTS {
        let req = sampler.sample(t, &mut rng, 0.0);
        let z = t.zone_of(&req.origin).ok_or("request outside every zone")?;
        drawn[z] += 1;
    }
    let total = t.total_weight();
    let n = SAMPLED_REQUESTS as f64;
    let mut worst: f64 = 0.0;
    for (zone, c) in drawn.iter().enumerate() {
        let p = t.zones[zone].demand_weight / total;
        let sigma = (n * p * (1.0 - p)).sqrt();
        let z = (*c as f64 - n * p).abs() / sigma;
        ensure!(z <= SIGMAS, "zone {zone}: {c} draws, expected {:.0}, {z:.2}σ", n * p);
        worst = worst.max(z);
    }
    Ok(format!(
        "36 zones, 4 cells, 49 access hubs, 9 local hubs; {SAMPLED_REQUESTS} requests, worst zone {worst:.2}σ (limit {SIGMAS}σ)"
    ))
}

fn c8_monitor(r: &Runs) -> Verdict {
    let re = Regex::new(MONITOR_LINE).unwrap();
    let expected: Vec<String> = r.default.reference_chain().events().iter().map(|e| format_line(&e.action)).collect();
    for line in &expected {
        ensure!(re.is_match(line), "bad line {line:?}");
    }
    // Polls landing on block boundaries, between them and across keepalives.
    let plans = [(5_000, 500), (7_250, 250), (3_000, 1_000), (1, 730)];
    let config = ScenarioConfig { duration_s: 20.0, ..ScenarioConfig::default() };
    let mut checked = 0;
    for (start_ms, poll_ms) in plans {
        let options = RunOptions {
            monitor: Some(MonitorPlan { agent: 5, start_ms, poll_ms, from_block: 0, shipment: None }),
            ..RunOptions::default()
        };
        let out = run_in_process(&config, &options).map_err(|e| e.to_string())?;
        let want: Vec<String> = out.reference_chain().events().iter().map(|e| format_line(&e.action)).collect();
        ensure!(!want.is_empty(), "no events");
        ensure!(
            out.monitor_lines == want,
            "start {start_ms} poll {poll_ms}: {} lines, chain has {}",
            out.monitor_lines.len(),
            want.len()
        );
        for line in &out.monitor_lines {
            ensure!(re.is_match(line), "bad line {line:?}");
        }
        checked += want.len();
    }
    // History then stream with overlapping batches.
    let events = r.default.reference_chain().events();
    let mut m = Monitor::new(0, None);
    let mut lines = Vec::new();
    let mut i = 0;
    while i < events.len() {
        let end = (i + 7).min(events.len());
        lines.extend(m.feed(&events[i.saturating_sub(3)..end]));
        i = end;
    }
    ensure!(lines == expected, "overlapping feeds gave {} lines, want {}", lines.len(), expected.len());
    Ok(format!(
        "{} default-run lines match the pattern; {} lines over {} poll schedules equal the event log exactly",
        expected.len(),
        checked,
        plans.len()
    ))
}

fn c9_determinism(r: &mut Runs) -> Verdict {
    let again = r.default_again.get_or_insert_with(default_run);
    let a = &r.default;
    ensure!(a.log.to_lines() == again.log.to_lines(), "ground-truth logs differ");
    ensure!(
        a.reference_chain().state_hash() == again.reference_chain().state_hash(),
        "state_hash differs"
    );
    let c = run_in_process(&ScenarioConfig { seed: 7, duration_s: 20.0, ..ScenarioConfig::default() }, &RunOptions::default())
        .map_err(|e| e.to_string())?;
    let d = run_in_process(&ScenarioConfig { seed: 7, duration_s: 20.0, ..ScenarioConfig::default() }, &RunOptions::default())
        .map_err(|e| e.to_string())?;
    ensure!(c.log.to_lines() == d.log.to_lines(), "seed 7 logs differ");
    ensure!(c.log.to_lines() != a.log.to_lines(), "different seeds gave the same log");
    Ok(format!(
        "seed 42: {} byte log identical twice, state {}",
        a.log.to_lines().len(),
        a.reference_chain().state_hash()
    ))
}

fn c10_resilience(r: &Runs) -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let agent = courier_active_in(r, 0, KILL_AT_MS + DOWN_MS)?;
    let options = RunOptions {
        kill: Some(KillPlan { agent, at_ms: KILL_AT_MS, down_ms: DOWN_MS }),
        chain_dir: Some(dir.path().to_path_buf()),
        ..RunOptions::default()
    };
    let config = ScenarioConfig::default();
    let out = run_in_process(&config, &options).map_err(|e| e.to_string())?;
    let node = out.net.node(out.agent_nodes[agent]).ok_or("agent node missing")?;
    let head = out.net.node(0).unwrap().head();
    ensure!(node.head() == head, "restarted node at {:?}, network at {:?}", node.head(), head);
    for n in out.net.nodes() {
        ensure!(
            !n.rejections().iter().any(|r| matches!(r.rejection, BlockRejection::BadTransaction(_))),
            "bad-transaction rejection on node {}",
            n.id()
        );
    }
    let mut nonces: Vec<u64> = out.submissions.iter().filter(|s| s.agent == agent).map(|s| s.nonce).collect();
    nonces.sort_unstable();
    ensure!(nonces == (0..nonces.len() as u64).collect::<Vec<_>>(), "nonce gap: {nonces:?}");
    let me = out.manifest.agents[agent].address;
    ensure!(
        out.reference_chain().next_nonce(&me) == nonces.len() as u64,
        "chain nonce {} after {} submissions",
        out.reference_chain().next_nonce(&me),
        nonces.len()
    );
    Ok(format!(
        "{} down {} s from {} s, synced at height {}; {} nonces contiguous, 0 bad-transaction rejections, {} actions lost to the outage",
        out.manifest.agents[agent].name,
        DOWN_MS / 1000,
        KILL_AT_MS / 1000,
        head.height,
        nonces.len(),
        out.log.failures.len()
    ))
}

fn main() {
    // `cargo test <filter>` passes the filter through; only run when it
    // could be meant for us.
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !filters.is_empty() && !filters.iter().any(|f| "acceptance".contains(f.as_str()) || f.parse::<u32>().is_ok()) {
        return;
    }
    let started = Instant::now();
    let mut runs = Runs { default: default_run(), default_again: None };
    let mut results = Vec::new();
    let mut check = |n: u32, name: &str, f: &mut dyn FnMut(&mut Runs) -> Verdict| {
        let verdict = catch_unwind(AssertUnwindSafe(|| f(&mut runs)))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        let (tag, detail) = match &verdict {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("criterion {n:>2} {name:<16} {tag}  {detail}");
        results.push(verdict.is_ok());
    };
    check(1, "convergence", &mut |r| c1_convergence(r));
    check(2, "fidelity", &mut |r| c2_fidelity(r));
    check(3, "linearity", &mut |_| c3_linearity());
    check(4, "access-control", &mut |r| c4_access_control(r));
    check(5, "poa", &mut |r| c5_poa(r));
    check(6, "contracts", &mut |r| c6_contracts(r));
    check(7, "topology", &mut |_| c7_topology());
    check(8, "monitor", &mut |r| c8_monitor(r));
    check(9, "determinism", &mut |r| c9_determinism(r));
    check(10, "resilience", &mut |r| c10_resilience(r));
    let passed = results.iter().filter(|&&ok| ok).count();
    println!("acceptance: {passed}/{} criteria passed in {:.1} s", results.len(), started.elapsed().as_secs_f64());
    if passed != results.len() {
        std::process::exit(1);
    }
}
