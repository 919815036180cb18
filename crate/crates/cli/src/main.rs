//! `hybridcc`: generate execution sequences, replay them against a checker,
//! drive the data gateway and inspect audit logs.
//!
//! Exit status is 0 when everything went as expected, 1 on a verdict or
//! completion mismatch (or a tampered log), 2 on operational errors.

mod remote;

use std::fs;
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hybridcc::audit::{verify_bytes, LogChain, VerifyOutcome};
use hybridcc::chain::LatencyPolicy;
use hybridcc::checker::Ordering;
use hybridcc::contract::{ContractGraph, REFERENCE_NAME};
use hybridcc::formats::{parse_event_xml, EventXml};
use hybridcc::harness::{
    latency_label, race_report, replay_sequence, Gateway, GatewayDecision, InProcess, ReplayPlan, ReplayTarget,
    Transcript,
};
use hybridcc::seqgen::{
    self, derive_retry_bound, CounterScope, ExecutionSequence, FailureModel, Listing, RightExpiry, SequenceSet,
};
use hybridcc_service::ServiceConfig;

use crate::remote::Remote;

#[derive(Parser)]
#[command(name = "hybridcc", version, about = "Hybrid smart contract compliance harness")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Enumerate execution sequences and export them as event files.
    Generate {
        #[arg(long, default_value = REFERENCE_NAME)]
        contract: String,
        #[arg(long, value_enum, default_value_t = Failures::None)]
        failures: Failures,
        /// Business failures allowed per operation.
        #[arg(long, default_value_t = seqgen::PINNED_RETRY_BOUND)]
        max_bizfails: u32,
        #[arg(long)]
        out: PathBuf,
        /// Also print the numbered listing.
        #[arg(long)]
        list: bool,
    },
    /// Replay exported sequences and print transcripts.
    Replay {
        #[command(flatten)]
        src: Source,
        /// Sequence number, `all`, or a token list such as `{BuyReq, Rej}`.
        #[arg(long, default_value = "all")]
        seq: String,
        #[command(flatten)]
        plan: PlanArgs,
        /// Write one JSON line per replayed sequence to this file.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Service base URL; replays in-process when absent.
        #[arg(long)]
        url: Option<String>,
        /// Save each instance's binary audit log as `seq<i>.log` here.
        #[arg(long)]
        save_logs: Option<PathBuf>,
        /// Only print the summary line of each transcript.
        #[arg(long)]
        quiet: bool,
    },
    /// Replay one sequence at several latencies and flag varying verdicts.
    RaceReport {
        #[command(flatten)]
        src: Source,
        #[arg(long)]
        seq: String,
        /// Comma-separated fixed latencies in chain ticks, e.g. `0,10`.
        #[arg(long, default_value = "0,10")]
        latencies: String,
    },
    /// Submit operations through the verdict-gated data gateway.
    Gateway {
        #[arg(long, default_value = REFERENCE_NAME)]
        contract: String,
        #[arg(long, default_value = "0")]
        latency: String,
        #[arg(long)]
        url: Option<String>,
        /// Repository item released when an operation is compliant.
        #[arg(long, default_value = "D1")]
        item: String,
        /// `originator:responder:Type[:status]`, or `@file.xml`.
        #[arg(required = true)]
        ops: Vec<String>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        listen: Option<SocketAddr>,
        #[arg(long)]
        contract: Option<String>,
        #[arg(long)]
        latency: Option<String>,
        #[arg(long)]
        settle_first: bool,
    },
    /// Print a binary audit log one record per line.
    LogDump { file: PathBuf },
    /// Recompute the hash chain of a binary audit log.
    LogVerify { file: PathBuf },
    /// Find the retry bound that yields a given sequence count.
    DeriveBound {
        #[arg(long, default_value = REFERENCE_NAME)]
        contract: String,
        #[arg(long, default_value_t = 246)]
        target: u64,
        #[arg(long, value_enum, default_value_t = Scope::PerOperation)]
        scope: Scope,
        #[arg(long, value_enum, default_value_t = Expiry::Explicit)]
        expiry: Expiry,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Failures {
    None,
    Bizfail,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scope {
    PerOperation,
    PerNode,
}

#[derive(Clone, Copy, ValueEnum)]
enum Expiry {
    Explicit,
    Implicit,
}

#[derive(Args)]
struct Source {
    /// Directory written by `generate`.
    #[arg(long)]
    dir: PathBuf,
    /// Contract name or path to a JSON contract graph.
    #[arg(long, default_value = REFERENCE_NAME)]
    contract: String,
}

#[derive(Args)]
struct PlanArgs {
    /// `0`, a tick count, `never`, or a per-payment script like `0,5,never`.
    #[arg(long, default_value = "0")]
    latency: String,
    /// Resubmit rejected events after the chain settles.
    #[arg(long)]
    retry: bool,
    /// Chain ticks between events.
    #[arg(long, default_value_t = 1)]
    gap_ticks: u64,
    /// Override the clock schedule: `TimeoutName=days`.
    #[arg(long = "clock", value_parser = parse_clock)]
    clock: Vec<(String, u32)>,
    /// Let pending confirmations settle before each verdict.
    #[arg(long)]
    settle_first: bool,
}

fn parse_clock(s: &str) -> Result<(String, u32), String> {
    let (name, days) = s.split_once('=').ok_or_else(|| format!("expected NAME=DAYS, got {s:?}"))?;
    Ok((name.to_owned(), days.parse().map_err(|_| format!("bad day count {days:?}"))?))
}

/// Error carrying an exit status other than 2.
#[derive(Debug)]
struct Mismatch(String);

impl std::fmt::Display for Mismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Mismatch {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<Mismatch>() => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_contract(spec: &str) -> Result<ContractGraph> {
    if let Ok(g) = hybridcc_service::contract_by_name(spec) {
        return Ok(g);
    }
    let path = Path::new(spec);
    if !path.exists() {
        bail!("unknown contract {spec:?} (not a built-in name or a file)");
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let g: ContractGraph = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let report = g.validate();
    if !report.is_valid() {
        bail!("invalid contract {}:\n{report}", path.display());
    }
    Ok(g)
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Generate { contract, failures, max_bizfails, out, list } => {
            let g = load_contract(&contract)?;
            let fm = match failures {
                Failures::None => FailureModel::NoFailures,
                Failures::Bizfail => FailureModel::bizfail(max_bizfails),
            };
            let set = seqgen::enumerate(&g, &fm)?;
            seqgen::export(&set, &out).with_context(|| format!("exporting to {}", out.display()))?;
            if list {
                print!("{}", set.listing(Listing::Plain));
            }
            println!("{}", set.len());
            Ok(())
        }
        Cmd::Replay { src, seq, plan, report, url, save_logs, quiet } => {
            let g = load_contract(&src.contract)?;
            let set = import(&src, &g)?;
            let plan_v = build_plan(&g, &plan)?;
            let missing = plan_v.uncovered(&set);
            if !missing.is_empty() {
                bail!("clock schedule has no entry for {}", missing.join(", "));
            }
            let chosen = select(&set, &seq)?;
            if let Some(dir) = &save_logs {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            let results: Vec<Result<(Transcript, Vec<u8>)>> = match &url {
                Some(url) => {
                    chosen.iter().map(|(i, s)| replay_remote(url, &g.name, &plan.latency, &g, *i, s, &plan_v)).collect()
                }
                None => replay_local_all(&g, &chosen, &plan_v),
            };
            let mut report_out = match &report {
                Some(p) => Some(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
                None => None,
            };
            let mut mismatches = 0;
            let mut errors = Vec::new();
            for ((i, _), r) in chosen.iter().zip(results) {
                match r {
                    Ok((t, log)) => {
                        if quiet {
                            print!("{}", t.render().lines().last().map(|l| format!("{l}\n")).unwrap_or_default());
                        } else {
                            print!("{}", t.render());
                        }
                        if !t.matches() {
                            mismatches += 1;
                        }
                        if let Some(f) = report_out.as_mut() {
                            writeln!(f, "{}", t.report_line())?;
                        }
                        if let Some(dir) = &save_logs {
                            let p = dir.join(format!("seq{i}.log"));
                            fs::write(&p, log).with_context(|| format!("writing {}", p.display()))?;
                        }
                    }
                    Err(e) => {
                        eprintln!("seq{i}: {e:#}");
                        errors.push(*i);
                    }
                }
            }
            if !errors.is_empty() {
                bail!("{} of {} sequences could not be replayed", errors.len(), chosen.len());
            }
            if mismatches > 0 {
                return Err(
                    Mismatch(format!("{mismatches} of {} sequences did not go as expected", chosen.len())).into()
                );
            }
            Ok(())
        }
        Cmd::RaceReport { src, seq, latencies } => {
            let g = load_contract(&src.contract)?;
            let set = import(&src, &g)?;
            let (i, s) = set.select(&seq).ok_or_else(|| anyhow!("no sequence {seq:?}"))?;
            let lats = latencies
                .split(',')
                .map(|t| t.trim().parse::<LatencyPolicy>().map_err(|e| anyhow!(e)))
                .collect::<Result<Vec<_>>>()?;
            let base = ReplayPlan::for_contract(&g, LatencyPolicy::Immediate);
            let r = race_report(&g, i, s, &base, &lats)?;
            println!("seq{i} {s}");
            print!("{}", r.render());
            Ok(())
        }
        Cmd::Gateway { contract, latency, url, item, ops } => {
            let g = load_contract(&contract)?;
            let target: Box<dyn ReplayTarget> = match &url {
                Some(u) => Box::new(Remote::create(u, &g.name, &latency)?),
                None => {
                    let plan = ReplayPlan::for_contract(&g, latency.parse().map_err(|e: String| anyhow!(e))?);
                    Box::new(InProcess::new(&g, &plan)?)
                }
            };
            let mut gw = Gateway::new(target);
            for op in &ops {
                let x = gateway_op(op)?;
                gw.target.tick_chain(1)?;
                match gw.request(&x, &item)? {
                    GatewayDecision::Granted { item, data } => println!("{}: granted {item}: {data}", x.op_type),
                    GatewayDecision::Denied { reason } => println!("{}: denied: {reason}", x.op_type),
                }
            }
            Ok(())
        }
        Cmd::Serve { config, listen, contract, latency, settle_first } => {
            let mut cfg = match &config {
                Some(p) => ServiceConfig::load(p)?,
                None => ServiceConfig::default(),
            };
            if let Some(l) = listen {
                cfg.listen = l;
            }
            if let Some(c) = contract {
                cfg.contract = c;
            }
            if let Some(l) = latency {
                cfg.latency = l;
            }
            cfg.settle_first |= settle_first;
            hybridcc_service::contract_by_name(&cfg.contract)?;
            cfg.latency_policy()?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(cfg.listen).await?;
                println!("listening on http://{}", listener.local_addr()?);
                std::io::stdout().flush()?;
                hybridcc_service::serve_on(listener, cfg).await
            })?;
            Ok(())
        }
        Cmd::LogDump { file } => {
            let bytes = fs::read(&file).with_context(|| format!("reading {}", file.display()))?;
            let log = LogChain::from_bytes(&bytes).map_err(|e| anyhow!("{}: {e}", file.display()))?;
            print!("{}", log.text_dump());
            Ok(())
        }
        Cmd::LogVerify { file } => {
            let bytes = fs::read(&file).with_context(|| format!("reading {}", file.display()))?;
            match verify_bytes(&bytes) {
                VerifyOutcome::Ok => {
                    let n = LogChain::from_bytes(&bytes).map(|l| l.len()).unwrap_or(0);
                    println!("ok: {n} records");
                    Ok(())
                }
                VerifyOutcome::TamperedAt(n) => Err(Mismatch(format!("tampered at record {n}")).into()),
            }
        }
        Cmd::DeriveBound { contract, target, scope, expiry } => {
            let g = load_contract(&contract)?;
            let scope = match scope {
                Scope::PerOperation => CounterScope::PerOperation,
                Scope::PerNode => CounterScope::PerNode,
            };
            let expiry = match expiry {
                Expiry::Explicit => RightExpiry::Explicit,
                Expiry::Implicit => RightExpiry::Implicit,
            };
            println!("{}", derive_retry_bound(&g, target, scope, expiry)?);
            Ok(())
        }
    }
}

fn import(src: &Source, g: &ContractGraph) -> Result<SequenceSet> {
    let set = seqgen::import(&src.dir, g).with_context(|| format!("importing {}", src.dir.display()))?;
    if set.is_empty() {
        bail!("no {} sequences under {}", g.name, src.dir.display());
    }
    Ok(set)
}

fn build_plan(g: &ContractGraph, args: &PlanArgs) -> Result<ReplayPlan> {
    let latency: LatencyPolicy = args.latency.parse().map_err(|e: String| anyhow!(e))?;
    let mut plan = ReplayPlan::for_contract(g, latency);
    plan.retry_after_settle = args.retry;
    plan.gap_ticks = args.gap_ticks;
    if args.settle_first {
        plan.ordering = Ordering::SettleFirst { max_ticks: plan.settle_limit };
    }
    for (name, days) in &args.clock {
        let node = g.node_by_timeout_name(name).ok_or_else(|| anyhow!("no timeout named {name}"))?;
        plan.clock_schedule.insert(node.timeout_name(), *days);
    }
    Ok(plan)
}

fn select<'a>(set: &'a SequenceSet, seq: &str) -> Result<Vec<(usize, &'a ExecutionSequence)>> {
    if seq == "all" {
        return Ok(set.sequences.iter().enumerate().map(|(i, s)| (i + 1, s)).collect());
    }
    set.select(seq).map(|p| vec![p]).ok_or_else(|| anyhow!("no sequence {seq:?} (have {})", set.len()))
}

fn replay_local(
    g: &ContractGraph,
    i: usize,
    s: &ExecutionSequence,
    plan: &ReplayPlan,
) -> Result<(Transcript, Vec<u8>)> {
    let mut target = InProcess::new(g, plan)?;
    let t = replay_sequence(&mut target, g, i, s, plan)?;
    Ok((t, target.checker.log().to_bytes()))
}

/// Independent instances, so the work splits across threads; output order
/// follows `chosen`.
fn replay_local_all(
    g: &ContractGraph,
    chosen: &[(usize, &ExecutionSequence)],
    plan: &ReplayPlan,
) -> Vec<Result<(Transcript, Vec<u8>)>> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(chosen.len()).max(1);
    let chunk = chosen.len().div_ceil(threads).max(1);
    std::thread::scope(|scope| {
        let handles: Vec<_> = chosen
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(|(i, s)| replay_local(g, *i, s, plan)).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("replay thread panicked")).collect()
    })
}

fn replay_remote(
    url: &str,
    contract: &str,
    latency: &str,
    g: &ContractGraph,
    i: usize,
    s: &ExecutionSequence,
    plan: &ReplayPlan,
) -> Result<(Transcript, Vec<u8>)> {
    let mut target = Remote::create(url, contract, latency)?;
    let mut t = replay_sequence(&mut target, g, i, s, plan)?;
    t.latency = format!("{} via {}", latency_label(&plan.latency), target.id);
    Ok((t, target.log_bytes()?))
}

fn gateway_op(spec: &str) -> Result<EventXml> {
    if let Some(path) = spec.strip_prefix('@') {
        let text = fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
        return parse_event_xml(&text).with_context(|| format!("parsing {path}"));
    }
    let parts: Vec<&str> = spec.split(':').collect();
    let (o, r, t, st) = match parts.as_slice() {
        [o, r, t] => (*o, *r, *t, "success"),
        [o, r, t, st] => (*o, *r, *t, *st),
        _ => bail!("expected originator:responder:Type[:status] or @file, got {spec:?}"),
    };
    Ok(EventXml { originator: o.into(), responder: r.into(), op_type: t.into(), status: st.into() })
}
