//! Replays execution sequences against a checker and reports what came
//! back.
//!
//! Chain time and contract time are driven explicitly: between two event
//! submissions the chain advances `gap_ticks`, and a timeout step advances
//! the contract clock by the scheduled number of days (and the chain by
//! `ticks_per_day` per day). A payment confirmation therefore reaches the
//! checker before the next event exactly when its latency is at most the
//! gap.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{ChainSim, CodeId, LatencyPolicy};
use crate::checker::{ChainPort, Checker, CheckerConfig, CheckerError, FiredTimeout, Ordering};
use crate::contract::{Completion, ContractGraph, EventRecord, Modality, Phase, RopState, Verdict};
use crate::formats::{exchange_block, EventXml};
use crate::seqgen::{ExecutionSequence, SequenceSet, Step};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayPlan {
    pub latency: LatencyPolicy,
    pub ordering: Ordering,
    /// Chain ticks between consecutive event submissions.
    pub gap_ticks: u64,
    pub ticks_per_day: u64,
    /// Days to advance for each timeout step, by canonical timeout name.
    pub clock_schedule: BTreeMap<String, u32>,
    /// Upper bound on ticks spent waiting for outstanding confirmations
    /// once the sequence is exhausted.
    pub settle_limit: u64,
    /// Resubmit rejected events once the chain has settled.
    pub retry_after_settle: bool,
}

impl ReplayPlan {
    /// Default plan: each timeout is reached by advancing one day past its
    /// deadline.
    pub fn for_contract(g: &ContractGraph, latency: LatencyPolicy) -> ReplayPlan {
        ReplayPlan {
            latency,
            ordering: Ordering::Arrival,
            gap_ticks: 1,
            ticks_per_day: 1,
            clock_schedule: g.nodes.iter().map(|n| (n.timeout_name(), n.deadline.get() + 1)).collect(),
            settle_limit: 64,
            retry_after_settle: false,
        }
    }

    /// Timeout names used in `set` that the schedule does not cover.
    pub fn uncovered(&self, set: &SequenceSet) -> Vec<String> {
        let mut missing: Vec<String> = set
            .sequences
            .iter()
            .flat_map(|s| s.steps.iter())
            .filter_map(|s| match s {
                Step::Timeout { name, .. } if !self.clock_schedule.contains_key(name) => Some(name.clone()),
                _ => None,
            })
            .collect();
        missing.sort();
        missing.dedup();
        missing
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TargetError {
    #[error("checker unreachable: {0}")]
    Unreachable(String),
    #[error("protocol error: {0}")]
    Protocol(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubmitOutcome {
    Verdict(bool),
    Ended,
    Malformed(String),
}

/// Something events can be replayed against: an in-process checker or a
/// remote service.
pub trait ReplayTarget {
    fn submit(&mut self, event: &EventRecord) -> Result<SubmitOutcome, TargetError>;
    fn advance_days(&mut self, days: u32) -> Result<Vec<FiredTimeout>, TargetError>;
    fn tick_chain(&mut self, ticks: u64) -> Result<(), TargetError>;
    fn state(&mut self) -> Result<RopState, TargetError>;
}

impl<T: ReplayTarget + ?Sized> ReplayTarget for Box<T> {
    fn submit(&mut self, event: &EventRecord) -> Result<SubmitOutcome, TargetError> {
        (**self).submit(event)
    }
    fn advance_days(&mut self, days: u32) -> Result<Vec<FiredTimeout>, TargetError> {
        (**self).advance_days(days)
    }
    fn tick_chain(&mut self, ticks: u64) -> Result<(), TargetError> {
        (**self).tick_chain(ticks)
    }
    fn state(&mut self) -> Result<RopState, TargetError> {
        (**self).state()
    }
}

/// A fresh checker on its own simulated chain.
pub struct InProcess {
    pub checker: Checker,
    pub chain: Arc<Mutex<ChainSim>>,
}

impl InProcess {
    pub fn new(g: &ContractGraph, plan: &ReplayPlan) -> Result<InProcess, CheckerError> {
        let chain = Arc::new(Mutex::new(ChainSim::new(plan.latency.clone())));
        let address = chain.lock().unwrap_or_else(|p| p.into_inner()).deploy(CodeId::CollectPayment);
        let checker = Checker::new(CheckerConfig {
            contract: g.clone(),
            chain: ChainPort { chain: chain.clone(), address },
            ordering: plan.ordering,
            payment_amount: 1,
        })?;
        Ok(InProcess { checker, chain })
    }
}

impl ReplayTarget for InProcess {
    fn submit(&mut self, event: &EventRecord) -> Result<SubmitOutcome, TargetError> {
        match self.checker.submit_event(event.clone()) {
            Ok(v) => Ok(SubmitOutcome::Verdict(v == Verdict::Compliant)),
            Err(CheckerError::ContractEnded) => Ok(SubmitOutcome::Ended),
            Err(CheckerError::MalformedEvent(m)) => Ok(SubmitOutcome::Malformed(m)),
            Err(e) => Err(TargetError::Protocol(e.to_string())),
        }
    }

    fn advance_days(&mut self, days: u32) -> Result<Vec<FiredTimeout>, TargetError> {
        self.checker.advance_clock(days).map_err(|e| TargetError::Protocol(e.to_string()))
    }

    fn tick_chain(&mut self, ticks: u64) -> Result<(), TargetError> {
        if ticks > 0 {
            self.chain
                .lock()
                .unwrap_or_else(|p| p.into_inner())
                .tick(ticks)
                .map_err(|e| TargetError::Protocol(e.to_string()))?;
        }
        self.checker.process_inbox();
        Ok(())
    }

    fn state(&mut self) -> Result<RopState, TargetError> {
        self.checker.process_inbox();
        Ok(self.checker.state())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Entry {
    Exchange { event: EventRecord, outcome: SubmitOutcome, retry: bool },
    Clock { timeout: String, days: u32, fired: Vec<FiredTimeout> },
    Settled { ticks: u64, pending: usize },
    Lapse { days: u32, fired: Vec<FiredTimeout> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub seq_index: usize,
    pub sequence: String,
    pub latency: String,
    pub entries: Vec<Entry>,
    pub expected: Completion,
    pub completion: Option<Completion>,
}

impl Transcript {
    /// Verdicts of the first submission of each event, in order.
    pub fn verdicts(&self) -> Vec<Option<bool>> {
        self.entries
            .iter()
            .filter_map(|e| match e {
                Entry::Exchange { outcome, retry: false, .. } => Some(match outcome {
                    SubmitOutcome::Verdict(v) => Some(*v),
                    _ => None,
                }),
                _ => None,
            })
            .collect()
    }

    pub fn retry_verdicts(&self) -> Vec<Option<bool>> {
        self.entries
            .iter()
            .filter_map(|e| match e {
                Entry::Exchange { outcome: SubmitOutcome::Verdict(v), retry: true, .. } => Some(Some(*v)),
                Entry::Exchange { retry: true, .. } => Some(None),
                _ => None,
            })
            .collect()
    }

    /// Every event accepted as compliant on first submission and the
    /// declared completion reached.
    pub fn matches(&self) -> bool {
        self.verdicts().iter().all(|v| *v == Some(true)) && self.completion == Some(self.expected)
    }

    /// Exchanges in the service framing, plus `#` lines for clock
    /// movements and the outcome.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            match e {
                Entry::Exchange { event, outcome, retry } => {
                    if *retry {
                        out.push_str("# retry\n");
                    }
                    match outcome {
                        SubmitOutcome::Verdict(v) => out.push_str(&exchange_block(event, *v)),
                        SubmitOutcome::Ended => writeln!(out, "# {} refused: contract ended\n", event.op_type).unwrap(),
                        SubmitOutcome::Malformed(m) => writeln!(out, "# {} refused: {m}\n", event.op_type).unwrap(),
                    }
                }
                Entry::Clock { timeout, days, fired } => {
                    writeln!(out, "# clock +{days} days for {timeout}: {}\n", fired_summary(fired)).unwrap()
                }
                Entry::Settled { ticks, pending } => {
                    writeln!(out, "# chain settled after {ticks} ticks, {pending} pending\n").unwrap()
                }
                Entry::Lapse { days, fired } => {
                    writeln!(out, "# clock +{days} days, right lapses: {}\n", fired_summary(fired)).unwrap()
                }
            }
        }
        let completion = self.completion.map_or_else(|| "none".to_owned(), |c| c.to_string());
        let verdict = if self.matches() { "as expected" } else { "MISMATCH" };
        writeln!(
            out,
            "# seq{} {} latency {}: completion {} (expected {}), {}",
            self.seq_index, self.sequence, self.latency, completion, self.expected, verdict
        )
        .unwrap();
        out
    }

    /// One JSON object for the `--report` stream.
    pub fn report_line(&self) -> String {
        serde_json::json!({
            "seq": self.seq_index,
            "sequence": self.sequence,
            "latency": self.latency,
            "verdicts": self.verdicts(),
            "retries": self.retry_verdicts(),
            "completion": self.completion,
            "expected": self.expected,
            "matches": self.matches(),
        })
        .to_string()
    }
}

fn fired_summary(fired: &[FiredTimeout]) -> String {
    if fired.is_empty() {
        return "nothing fired".to_owned();
    }
    fired.iter().map(|f| format!("{} fired ({})", f.name, f.completion)).collect::<Vec<_>>().join(", ")
}

/// Human label for a latency policy.
pub fn latency_label(p: &LatencyPolicy) -> String {
    match p {
        LatencyPolicy::Immediate => "0".to_owned(),
        LatencyPolicy::FixedTicks(n) => n.to_string(),
        LatencyPolicy::Never => "never".to_owned(),
        LatencyPolicy::Scripted(s) => s
            .iter()
            .map(|l| match l {
                crate::chain::Latency::Ticks(n) => n.to_string(),
                crate::chain::Latency::Never => "never".to_owned(),
            })
            .collect::<Vec<_>>()
            .join(","),
    }
}

fn settle<T: ReplayTarget + ?Sized>(target: &mut T, limit: u64) -> Result<(u64, usize), TargetError> {
    let mut ticks = 0;
    let mut pending = target.state()?.pending_onchain.len();
    while pending > 0 && ticks < limit {
        target.tick_chain(1)?;
        ticks += 1;
        pending = target.state()?.pending_onchain.len();
    }
    Ok((ticks, pending))
}

/// Drive one sequence through `target` following `plan`.
pub fn replay_sequence<T: ReplayTarget + ?Sized>(
    target: &mut T,
    g: &ContractGraph,
    seq_index: usize,
    seq: &ExecutionSequence,
    plan: &ReplayPlan,
) -> Result<Transcript, TargetError> {
    let mut entries = Vec::new();
    let mut first = true;
    for step in &seq.steps {
        match step {
            Step::Op { .. } => {
                if !first {
                    target.tick_chain(plan.gap_ticks)?;
                }
                first = false;
                let event = step.event().expect("operation step");
                let outcome = target.submit(&event)?;
                entries.push(Entry::Exchange { event, outcome, retry: false });
            }
            Step::Timeout { name, .. } => {
                let days = *plan
                    .clock_schedule
                    .get(name)
                    .ok_or_else(|| TargetError::Protocol(format!("clock schedule has no entry for {name}")))?;
                target.tick_chain(u64::from(days) * plan.ticks_per_day)?;
                let fired = target.advance_days(days)?;
                entries.push(Entry::Clock { timeout: name.clone(), days, fired });
            }
        }
    }

    let (ticks, pending) = settle(target, plan.settle_limit)?;
    if ticks > 0 || pending > 0 {
        entries.push(Entry::Settled { ticks, pending });
    }

    if plan.retry_after_settle {
        let rejected: Vec<EventRecord> = entries
            .iter()
            .filter_map(|e| match e {
                Entry::Exchange { event, outcome: SubmitOutcome::Verdict(false), retry: false } => Some(event.clone()),
                _ => None,
            })
            .collect();
        for event in rejected {
            let outcome = target.submit(&event)?;
            entries.push(Entry::Exchange { event, outcome, retry: true });
        }
    }

    // An outstanding right is left to lapse.
    let state = target.state()?;
    if let Phase::Node(id) = &state.phase {
        if let Some(node) = g.node(id).filter(|n| n.modality == Modality::Right) {
            let days = plan.clock_schedule.get(&node.timeout_name()).copied().unwrap_or(node.deadline.get() + 1);
            target.tick_chain(u64::from(days) * plan.ticks_per_day)?;
            let fired = target.advance_days(days)?;
            entries.push(Entry::Lapse { days, fired });
        }
    }

    Ok(Transcript {
        seq_index,
        sequence: seq.to_string(),
        latency: latency_label(&plan.latency),
        entries,
        expected: seq.completion,
        completion: target.state()?.completion(),
    })
}

/// Replay on a fresh in-process checker.
pub fn replay_in_process(
    g: &ContractGraph,
    seq_index: usize,
    seq: &ExecutionSequence,
    plan: &ReplayPlan,
) -> Result<Transcript, TargetError> {
    let mut target = InProcess::new(g, plan).map_err(|e| TargetError::Protocol(e.to_string()))?;
    replay_sequence(&mut target, g, seq_index, seq, plan)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaceReport {
    pub seq_index: usize,
    pub events: Vec<String>,
    /// Latency label and first-submission verdicts for that latency.
    pub rows: Vec<(String, Vec<Option<bool>>)>,
    /// Indices into `events` whose verdict differs between latencies.
    pub divergent: Vec<usize>,
}

impl RaceReport {
    pub fn divergent_events(&self) -> Vec<&str> {
        self.divergent.iter().map(|i| self.events[*i].as_str()).collect()
    }

    pub fn render(&self) -> String {
        let mut out = format!("{:<10}", "latency");
        for e in &self.events {
            write!(out, " {e:>8}").unwrap();
        }
        out.push('\n');
        for (label, verdicts) in &self.rows {
            write!(out, "{label:<10}").unwrap();
            for v in verdicts {
                let cell = match v {
                    Some(true) => "true",
                    Some(false) => "false",
                    None => "-",
                };
                write!(out, " {cell:>8}").unwrap();
            }
            out.push('\n');
        }
        if self.divergent.is_empty() {
            out.push_str("no divergence\n");
        } else {
            writeln!(out, "divergent: {}", self.divergent_events().join(", ")).unwrap();
        }
        out
    }
}

/// Replay one sequence once per latency and flag events whose verdict
/// varies.
pub fn race_report(
    g: &ContractGraph,
    seq_index: usize,
    seq: &ExecutionSequence,
    base: &ReplayPlan,
    latencies: &[LatencyPolicy],
) -> Result<RaceReport, TargetError> {
    let events: Vec<String> = seq.steps.iter().filter(|s| !s.is_timeout()).map(Step::token).collect();
    let mut rows = Vec::new();
    for latency in latencies {
        let plan = ReplayPlan { latency: latency.clone(), retry_after_settle: false, ..base.clone() };
        let t = replay_in_process(g, seq_index, seq, &plan)?;
        rows.push((latency_label(latency), t.verdicts()));
    }
    let divergent = (0..events.len())
        .filter(|i| {
            let mut seen = rows.iter().map(|(_, v)| v.get(*i).copied().flatten());
            let first = seen.next();
            seen.any(|v| Some(v) != first)
        })
        .collect();
    Ok(RaceReport { seq_index, events, rows, divergent })
}

/// Stub personal-data store behind the gateway.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataRepository {
    items: BTreeMap<String, String>,
}

impl Default for DataRepository {
    fn default() -> Self {
        DataRepository {
            items: [("D1", "personal data item D1"), ("D2", "personal data item D2"), ("D3", "personal data item D3")]
                .into_iter()
                .map(|(k, v)| (k.to_owned(), v.to_owned()))
                .collect(),
        }
    }
}

impl DataRepository {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.items.get(key).map(String::as_str)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GatewayDecision {
    Granted { item: String, data: String },
    Denied { reason: String },
}

/// Opens for an operation only when the checker rules it compliant.
pub struct Gateway<T: ReplayTarget> {
    pub target: T,
    pub repository: DataRepository,
}

impl<T: ReplayTarget> Gateway<T> {
    pub fn new(target: T) -> Self {
        Gateway { target, repository: DataRepository::default() }
    }

    /// `item` names the repository entry to release on success.
    pub fn request(&mut self, op: &EventXml, item: &str) -> Result<GatewayDecision, TargetError> {
        let denied = |reason: String| Ok(GatewayDecision::Denied { reason });
        let event = match op.to_event() {
            Ok(e) => e,
            Err(e) => return denied(e.to_string()),
        };
        match self.target.submit(&event)? {
            SubmitOutcome::Verdict(true) => match self.repository.get(item) {
                Some(data) => Ok(GatewayDecision::Granted { item: item.to_owned(), data: data.to_owned() }),
                None => denied(format!("no item {item} in repository")),
            },
            SubmitOutcome::Verdict(false) => denied(format!("{} is not contract compliant", event.op_type)),
            SubmitOutcome::Ended => denied("contract has ended".to_owned()),
            SubmitOutcome::Malformed(m) => denied(m),
        }
    }
}
