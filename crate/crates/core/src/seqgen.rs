//! Exhaustive enumeration of the executions a contract graph admits.
//!
//! At every choice point the active party may attempt any offered
//! operation. A successful attempt moves on; a business failure (bizfail)
//! leaves the node where it is, up to a retry bound. The deadline may pass
//! after any number of failed attempts. Sequences are kept in canonical
//! order: lexicographic over their step tokens.
//!
//! Two counting choices are left open by the contract model and are
//! explicit here:
//!
//! * [`CounterScope`]: whether the retry bound applies to each operation
//!   separately or to the node as a whole.
//! * [`RightExpiry`]: whether letting a right lapse is a step of its own
//!   (`GetVouTo`) or indistinguishable from simply not exercising it.
//!
//! With the bound exhausted, one further failed attempt is still possible;
//! the node then times out.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{Canonical, Digest, Encoder};
use crate::contract::{
    Completion, ContractGraph, Day, Effect, EventRecord, Input, Modality, NodeId, OperationId, OrExecNode, PartyId,
    Phase, Status, Target, TimeoutFiring, ValidationReport, Verdict,
};
use crate::formats::{parse_event_xml, EventXml, TIMEOUT_STATUS};

/// Retry bound that reproduces the 246-sequence execution model of the
/// reference contract (see [`derive_retry_bound`]).
pub const PINNED_RETRY_BOUND: u32 = 1;

/// Retry bounds tried by [`derive_retry_bound`].
pub const RETRY_SEARCH_RANGE: std::ops::RangeInclusive<u32> = 1..=6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CounterScope {
    PerNode,
    PerOperation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RightExpiry {
    /// Lapse of a right leaves no step behind.
    Implicit,
    /// Lapse is a timeout step; not attempting the right at all is a
    /// separate, silent ending.
    Explicit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BizfailPolicy {
    pub max_bizfails: u32,
    pub scope: CounterScope,
    pub right_expiry: RightExpiry,
}

impl BizfailPolicy {
    pub fn new(max_bizfails: u32) -> BizfailPolicy {
        BizfailPolicy { max_bizfails, scope: CounterScope::PerOperation, right_expiry: RightExpiry::Explicit }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailureModel {
    /// Every attempt succeeds; rights lapse implicitly.
    NoFailures,
    Bizfail(BizfailPolicy),
}

impl FailureModel {
    pub fn bizfail(max_bizfails: u32) -> FailureModel {
        FailureModel::Bizfail(BizfailPolicy::new(max_bizfails))
    }

    /// The model behind the reference contract's 246 sequences.
    pub fn pinned() -> FailureModel {
        FailureModel::bizfail(PINNED_RETRY_BOUND)
    }
}

/// How step tokens are spelled when listing sequences.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Listing {
    /// `BuyReq`, `Rej(BF)`, `RejConfTo`.
    #[default]
    Plain,
    /// `BuyReq(S)`, `Rej(BF)`, `RejConfTO`.
    Annotated,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Step {
    Op { op: OperationId, status: Status, originator: PartyId, responder: PartyId },
    Timeout { name: String, node: NodeId, holder: PartyId, counterparty: PartyId },
}

impl Step {
    /// Canonical token, used for ordering and lookup.
    pub fn token(&self) -> String {
        self.render(Listing::Plain)
    }

    pub fn render(&self, listing: Listing) -> String {
        match (self, listing) {
            (Step::Op { op, status: Status::Bizfail, .. }, _) => format!("{op}(BF)"),
            (Step::Op { op, .. }, Listing::Plain) => op.to_string(),
            (Step::Op { op, .. }, Listing::Annotated) => format!("{op}(S)"),
            (Step::Timeout { name, .. }, Listing::Plain) => name.clone(),
            (Step::Timeout { name, .. }, Listing::Annotated) => {
                format!("{}TO", name.strip_suffix("To").unwrap_or(name))
            }
        }
    }

    pub fn is_timeout(&self) -> bool {
        matches!(self, Step::Timeout { .. })
    }

    pub fn event(&self) -> Option<EventRecord> {
        match self {
            Step::Op { op, status, originator, responder } => Some(EventRecord {
                originator: originator.clone(),
                responder: responder.clone(),
                op_type: op.to_string(),
                status: *status,
            }),
            Step::Timeout { .. } => None,
        }
    }

    fn to_xml(&self) -> EventXml {
        match self {
            Step::Op { .. } => EventXml::from_event(&self.event().expect("operation step")),
            Step::Timeout { name, holder, counterparty, .. } => EventXml {
                originator: holder.to_string(),
                responder: counterparty.to_string(),
                op_type: name.clone(),
                status: TIMEOUT_STATUS.to_owned(),
            },
        }
    }
}

/// Normalise a token in either listing style to its canonical form.
pub fn canonical_token(token: &str) -> String {
    let t = token.trim();
    if let Some(op) = t.strip_suffix("(S)") {
        return op.to_owned();
    }
    if let Some(stem) = t.strip_suffix("TO") {
        return format!("{stem}To");
    }
    t.to_owned()
}

/// Parse `{BuyReq(S), Rej(BF), ...}` or `BuyReq,Rej` into canonical tokens.
pub fn parse_token_list(list: &str) -> Vec<String> {
    list.trim()
        .trim_start_matches('{')
        .trim_end_matches('}')
        .split(',')
        .map(canonical_token)
        .filter(|t| !t.is_empty())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExecutionSequence {
    pub steps: Vec<Step>,
    pub completion: Completion,
}

impl ExecutionSequence {
    pub fn tokens(&self) -> Vec<String> {
        self.steps.iter().map(Step::token).collect()
    }

    pub fn render(&self, listing: Listing) -> String {
        let parts: Vec<String> = self.steps.iter().map(|s| s.render(listing)).collect();
        format!("{{{}}}", parts.join(", "))
    }

    pub fn timeout(&self) -> Option<&Step> {
        self.steps.last().filter(|s| s.is_timeout())
    }

    pub fn has_bizfail(&self) -> bool {
        self.steps.iter().any(|s| matches!(s, Step::Op { status: Status::Bizfail, .. }))
    }
}

impl fmt::Display for ExecutionSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(Listing::Plain))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceSet {
    pub contract: String,
    pub graph_digest: Digest,
    pub sequences: Vec<ExecutionSequence>,
}

impl SequenceSet {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// 1-based position of the sequence with these canonical tokens.
    pub fn position(&self, tokens: &[String]) -> Option<usize> {
        self.sequences.iter().position(|s| s.tokens() == tokens).map(|i| i + 1)
    }

    /// Look up by 1-based index or by token list.
    pub fn select(&self, selector: &str) -> Option<(usize, &ExecutionSequence)> {
        let index = match selector.trim().parse::<usize>() {
            Ok(i) => i,
            Err(_) => self.position(&parse_token_list(selector))?,
        };
        self.sequences.get(index.checked_sub(1)?).map(|s| (index, s))
    }

    pub fn listing(&self, listing: Listing) -> String {
        self.sequences
            .iter()
            .enumerate()
            .map(|(i, s)| format!("seq{}: {} {}\n", i + 1, s.render(listing), s.completion))
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum SeqgenError {
    #[error("contract graph is invalid: {0}")]
    InvalidGraph(ValidationReport),
    #[error("retry bound must be at least 1")]
    ZeroBound,
    #[error("step {index} is not contract compliant: {reason}")]
    IllegalSequence { index: usize, reason: String },
    #[error("sequence stops with an obligation outstanding")]
    Incomplete,
    #[error("no unique retry bound gives {target} sequences (matches: {matches:?})")]
    NoUniqueN { target: u64, matches: Vec<u32> },
    #[error("{path}: {reason}")]
    MalformedEventFile { path: PathBuf, reason: String },
    #[error("{path}: {error}")]
    Io { path: PathBuf, error: io::Error },
}

fn check(g: &ContractGraph, fm: &FailureModel) -> Result<(), SeqgenError> {
    let report = g.validate();
    if !report.is_valid() {
        return Err(SeqgenError::InvalidGraph(report));
    }
    if let FailureModel::Bizfail(p) = fm {
        if p.max_bizfails == 0 {
            return Err(SeqgenError::ZeroBound);
        }
    }
    Ok(())
}

/// Per-node failure counters: one slot per choice, or one shared slot.
type Counters = Vec<u32>;

struct Walker<'g> {
    g: &'g ContractGraph,
    fm: FailureModel,
}

impl<'g> Walker<'g> {
    fn op_step(&self, node: &OrExecNode, op: &OperationId, status: Status) -> Step {
        Step::Op {
            op: op.clone(),
            status,
            originator: node.holder.clone(),
            responder: self.g.counterparty(&node.holder).cloned().expect("validated holder"),
        }
    }

    fn timeout_step(&self, node: &OrExecNode) -> Step {
        Step::Timeout {
            name: node.timeout_name(),
            node: node.id.clone(),
            holder: node.holder.clone(),
            counterparty: self.g.counterparty(&node.holder).cloned().expect("validated holder"),
        }
    }

    fn fresh_counters(&self, node: &OrExecNode) -> Counters {
        match self.fm {
            FailureModel::Bizfail(BizfailPolicy { scope: CounterScope::PerOperation, .. }) => {
                vec![0; node.choices.len()]
            }
            _ => vec![0],
        }
    }

    fn slot(&self, choice: usize) -> usize {
        match self.fm {
            FailureModel::Bizfail(BizfailPolicy { scope: CounterScope::PerOperation, .. }) => choice,
            _ => 0,
        }
    }

    fn explicit_expiry(&self) -> bool {
        matches!(self.fm, FailureModel::Bizfail(BizfailPolicy { right_expiry: RightExpiry::Explicit, .. }))
    }

    /// Endings reachable at `node` without a successful attempt, given the
    /// failure counters so far: each is the optional final step plus the
    /// completion.
    fn lapse_endings(&self, node: &OrExecNode, counters: &Counters) -> Vec<(Option<Step>, Completion)> {
        let completion = node.timeout_completion();
        match node.modality {
            Modality::Right if self.explicit_expiry() => {
                let mut out = vec![(Some(self.timeout_step(node)), completion)];
                if counters.iter().all(|c| *c == 0) {
                    out.push((None, completion));
                }
                out
            }
            Modality::Right => vec![(None, completion)],
            _ => vec![(Some(self.timeout_step(node)), completion)],
        }
    }

    /// Ending after one failed attempt too many.
    fn exhausted_ending(&self, node: &OrExecNode) -> (Option<Step>, Completion) {
        match node.modality {
            Modality::Right if !self.explicit_expiry() => (None, node.timeout_completion()),
            _ => (Some(self.timeout_step(node)), node.timeout_completion()),
        }
    }

    fn target(&self, t: &Target, prefix: &mut Vec<Step>, out: &mut Vec<ExecutionSequence>) {
        match t {
            Target::End(c) => out.push(ExecutionSequence { steps: prefix.clone(), completion: *c }),
            Target::Node(id) => {
                let node = self.g.node(id).expect("validated target");
                let counters = self.fresh_counters(node);
                self.node(node, counters, prefix, out);
            }
        }
    }

    fn node(&self, node: &OrExecNode, counters: Counters, prefix: &mut Vec<Step>, out: &mut Vec<ExecutionSequence>) {
        for (last, completion) in self.lapse_endings(node, &counters) {
            let mut steps = prefix.clone();
            steps.extend(last);
            out.push(ExecutionSequence { steps, completion });
        }
        for (i, op) in node.choices.iter().enumerate() {
            prefix.push(self.op_step(node, op, Status::Success));
            self.target(&node.on_success[op], prefix, out);
            prefix.pop();

            let FailureModel::Bizfail(policy) = self.fm else { continue };
            prefix.push(self.op_step(node, op, Status::Bizfail));
            let slot = self.slot(i);
            if counters[slot] < policy.max_bizfails {
                let mut next = counters.clone();
                next[slot] += 1;
                self.node(node, next, prefix, out);
            } else {
                let (last, completion) = self.exhausted_ending(node);
                let mut steps = prefix.clone();
                steps.extend(last);
                out.push(ExecutionSequence { steps, completion });
            }
            prefix.pop();
        }
    }

    // Counting mirrors the enumeration above without materialising paths.

    fn count_target(&self, t: &Target, memo: &mut HashMap<(NodeId, Counters), u64>) -> u64 {
        match t {
            Target::End(_) => 1,
            Target::Node(id) => {
                let node = self.g.node(id).expect("validated target");
                self.count_node(node, self.fresh_counters(node), memo)
            }
        }
    }

    fn count_node(&self, node: &OrExecNode, counters: Counters, memo: &mut HashMap<(NodeId, Counters), u64>) -> u64 {
        let key = (node.id.clone(), counters);
        if let Some(n) = memo.get(&key) {
            return *n;
        }
        let counters = &key.1;
        let mut total = self.lapse_endings(node, counters).len() as u64;
        for (i, op) in node.choices.iter().enumerate() {
            total += self.count_target(&node.on_success[op], memo);
            let FailureModel::Bizfail(policy) = self.fm else { continue };
            let slot = self.slot(i);
            if counters[slot] < policy.max_bizfails {
                let mut next = counters.clone();
                next[slot] += 1;
                total += self.count_node(node, next, memo);
            } else {
                total += 1;
            }
        }
        memo.insert(key, total);
        total
    }
}

fn opening_step(g: &ContractGraph) -> Step {
    Step::Op {
        op: g.opening.operation.clone(),
        status: Status::Success,
        originator: g.opening.holder.clone(),
        responder: g.counterparty(&g.opening.holder).cloned().expect("validated opening"),
    }
}

pub fn enumerate(g: &ContractGraph, fm: &FailureModel) -> Result<SequenceSet, SeqgenError> {
    check(g, fm)?;
    let walker = Walker { g, fm: *fm };
    let mut out = Vec::new();
    let mut prefix = vec![opening_step(g)];
    walker.target(&g.opening.next, &mut prefix, &mut out);
    let mut keyed: Vec<(Vec<String>, ExecutionSequence)> = out.into_iter().map(|s| (s.tokens(), s)).collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    keyed.dedup_by(|a, b| a.0 == b.0);
    Ok(SequenceSet {
        contract: g.name.clone(),
        graph_digest: g.digest(),
        sequences: keyed.into_iter().map(|(_, s)| s).collect(),
    })
}

/// Number of sequences [`enumerate`] yields, computed by memoised counting.
pub fn count(g: &ContractGraph, fm: &FailureModel) -> Result<u64, SeqgenError> {
    check(g, fm)?;
    let walker = Walker { g, fm: *fm };
    Ok(walker.count_target(&g.opening.next, &mut HashMap::new()))
}

/// Find the unique retry bound in [`RETRY_SEARCH_RANGE`] giving `target`
/// sequences under the given counting conventions.
pub fn derive_retry_bound(
    g: &ContractGraph,
    target: u64,
    scope: CounterScope,
    right_expiry: RightExpiry,
) -> Result<u32, SeqgenError> {
    let mut matches = Vec::new();
    for n in RETRY_SEARCH_RANGE {
        let fm = FailureModel::Bizfail(BizfailPolicy { max_bizfails: n, scope, right_expiry });
        if count(g, &fm)? == target {
            matches.push(n);
        }
    }
    match matches.as_slice() {
        [n] => Ok(*n),
        _ => Err(SeqgenError::NoUniqueN { target, matches }),
    }
}

/// Replay `seq` through the pure step function, confirming on-chain
/// forwards at once and firing timeouts on the first day past their
/// deadline. A sequence that stops while a right is outstanding completes
/// as if the right lapsed.
pub fn classify(seq: &ExecutionSequence, g: &ContractGraph) -> Result<Completion, SeqgenError> {
    let illegal = |index: usize, reason: String| SeqgenError::IllegalSequence { index: index + 1, reason };
    let mut state = g.initial_state().map_err(|e| illegal(0, e.to_string()))?;
    let mut day: Day = 0;
    for (i, step) in seq.steps.iter().enumerate() {
        let input = match step {
            Step::Op { .. } => Input::Event(step.event().expect("operation step")),
            Step::Timeout { name, node, .. } => {
                let expires = state
                    .entries
                    .iter()
                    .find(|e| e.node.as_ref() == Some(node))
                    .and_then(|e| e.expires_at)
                    .ok_or_else(|| illegal(i, format!("{name} is not active")))?;
                day = day.max(expires + 1);
                Input::Timeout(TimeoutFiring { node: node.clone(), name: name.clone() })
            }
        };
        let r = g.step(&state, day, &input).map_err(|e| illegal(i, e.to_string()))?;
        if r.verdict == Verdict::NonCompliant {
            return Err(illegal(i, format!("{} rejected", step.token())));
        }
        state = r.next_state;
        for effect in &r.effects {
            if let Effect::ForwardOnChain { operation, .. } = effect {
                let c = g
                    .step(&state, day, &Input::Confirmation { operation: operation.clone() })
                    .map_err(|e| illegal(i, e.to_string()))?;
                state = c.next_state;
            }
        }
    }
    match &state.phase {
        Phase::Ended(c) => Ok(*c),
        Phase::Node(n) if g.node(n).is_some_and(|n| n.modality == Modality::Right) => {
            Ok(g.node(n).expect("checked").timeout_completion())
        }
        _ => Err(SeqgenError::Incomplete),
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SeqgenError + '_ {
    move |error| SeqgenError::Io { path: path.to_owned(), error }
}

pub fn sequence_dir_name(contract: &str, index: usize) -> String {
    format!("{contract}.pmlExecSeq{index}")
}

/// Write `<dir>/<contract>.pmlExecSeq<i>/event<j>.xml`, numbering from 1.
pub fn export(set: &SequenceSet, dir: &Path) -> Result<(), SeqgenError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (i, seq) in set.sequences.iter().enumerate() {
        let sub = dir.join(sequence_dir_name(&set.contract, i + 1));
        fs::create_dir_all(&sub).map_err(io_err(&sub))?;
        for (j, step) in seq.steps.iter().enumerate() {
            let path = sub.join(format!("event{}.xml", j + 1));
            fs::write(&path, step.to_xml().to_xml()).map_err(io_err(&path))?;
        }
    }
    Ok(())
}

fn numbered_entries(dir: &Path, prefix: &str, suffix: &str) -> Result<Vec<(usize, PathBuf)>, SeqgenError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        let Some(n) = name.strip_prefix(prefix).and_then(|r| r.strip_suffix(suffix)) else { continue };
        if let Ok(n) = n.parse::<usize>() {
            out.push((n, entry.path()));
        }
    }
    out.sort();
    Ok(out)
}

fn import_step(g: &ContractGraph, path: &Path) -> Result<Step, SeqgenError> {
    let malformed = |reason: String| SeqgenError::MalformedEventFile { path: path.to_owned(), reason };
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let x = parse_event_xml(&text).map_err(|e| malformed(e.to_string()))?;
    if x.status == TIMEOUT_STATUS {
        let node =
            g.node_by_timeout_name(&x.op_type).ok_or_else(|| malformed(format!("unknown timeout {}", x.op_type)))?;
        return Ok(Step::Timeout {
            name: node.timeout_name(),
            node: node.id.clone(),
            holder: PartyId::new(x.originator).map_err(|e| malformed(e.to_string()))?,
            counterparty: PartyId::new(x.responder).map_err(|e| malformed(e.to_string()))?,
        });
    }
    let e = x.to_event().map_err(|e| malformed(e.to_string()))?;
    Ok(Step::Op {
        op: OperationId::new(e.op_type).map_err(|e| malformed(e.to_string()))?,
        status: e.status,
        originator: e.originator,
        responder: e.responder,
    })
}

/// Read sequences written by [`export`] (or by hand in the same layout).
/// Completions are recomputed with [`classify`].
pub fn import(dir: &Path, g: &ContractGraph) -> Result<SequenceSet, SeqgenError> {
    let mut sequences = Vec::new();
    for (_, sub) in numbered_entries(dir, &format!("{}.pmlExecSeq", g.name), "")? {
        let steps = numbered_entries(&sub, "event", ".xml")?
            .iter()
            .map(|(_, p)| import_step(g, p))
            .collect::<Result<Vec<_>, _>>()?;
        let mut seq = ExecutionSequence { steps, completion: Completion::Normal };
        seq.completion = classify(&seq, g)?;
        sequences.push(seq);
    }
    Ok(SequenceSet { contract: g.name.clone(), graph_digest: g.digest(), sequences })
}

impl Canonical for Step {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            Step::Op { op, status, originator, responder } => {
                enc.u8(0).value(op).value(status).value(originator).value(responder)
            }
            Step::Timeout { name, node, holder, counterparty } => {
                enc.u8(1).str(name).value(node).value(holder).value(counterparty)
            }
        };
    }
}

impl Canonical for ExecutionSequence {
    fn encode(&self, enc: &mut Encoder) {
        enc.list(&self.steps).value(&self.completion);
    }
}

impl Canonical for SequenceSet {
    fn encode(&self, enc: &mut Encoder) {
        enc.str(&self.contract).digest(&self.graph_digest).list(&self.sequences);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::reference_contract;

    fn tokens(s: &str) -> Vec<String> {
        parse_token_list(s)
    }

    #[test]
    fn no_failures_gives_six() {
        let g = reference_contract();
        let set = enumerate(&g, &FailureModel::NoFailures).unwrap();
        assert_eq!(set.len(), 6);
        assert_eq!(count(&g, &FailureModel::NoFailures).unwrap(), 6);
        for s in [
            "BuyReq, Rej",
            "BuyReq, Conf, Canc",
            "BuyReq, Conf, Pay",
            "BuyReq, RejConfTo",
            "BuyReq, Conf, PayCancTo",
            "BuyReq, Conf, Pay, GetVou",
        ] {
            assert!(set.position(&tokens(s)).is_some(), "{s}");
        }
    }

    #[test]
    fn pinned_model_gives_246() {
        let g = reference_contract();
        let set = enumerate(&g, &FailureModel::pinned()).unwrap();
        assert_eq!(set.len(), 246);
        assert_eq!(count(&g, &FailureModel::pinned()).unwrap(), 246);
    }

    #[test]
    fn counting_agrees_with_enumeration_across_models() {
        let g = reference_contract();
        for n in 1..=3 {
            for scope in [CounterScope::PerNode, CounterScope::PerOperation] {
                for right_expiry in [RightExpiry::Implicit, RightExpiry::Explicit] {
                    let fm = FailureModel::Bizfail(BizfailPolicy { max_bizfails: n, scope, right_expiry });
                    assert_eq!(enumerate(&g, &fm).unwrap().len() as u64, count(&g, &fm).unwrap(), "{fm:?}");
                }
            }
        }
    }

    #[test]
    fn implicit_expiry_count() {
        let g = reference_contract();
        let fm = FailureModel::Bizfail(BizfailPolicy {
            max_bizfails: 1,
            scope: CounterScope::PerOperation,
            right_expiry: RightExpiry::Implicit,
        });
        assert_eq!(count(&g, &fm).unwrap(), 221);
    }

    #[test]
    fn retry_bound_search() {
        let g = reference_contract();
        assert_eq!(derive_retry_bound(&g, 246, CounterScope::PerOperation, RightExpiry::Explicit).unwrap(), 1);
        assert!(matches!(
            derive_retry_bound(&g, 1_000_000_000, CounterScope::PerOperation, RightExpiry::Explicit),
            Err(SeqgenError::NoUniqueN { .. })
        ));
        assert!(matches!(enumerate(&g, &FailureModel::bizfail(0)), Err(SeqgenError::ZeroBound)));
    }

    #[test]
    fn classification() {
        let g = reference_contract();
        let set = enumerate(&g, &FailureModel::NoFailures).unwrap();
        let (_, seq4) = set.select("BuyReq, RejConfTo").unwrap();
        assert_eq!(classify(seq4, &g).unwrap(), Completion::Abnormal);
        let (_, seq1) = set.select("BuyReq, Rej").unwrap();
        assert_eq!(classify(seq1, &g).unwrap(), Completion::Normal);

        let lone = ExecutionSequence {
            steps: vec![Step::Op {
                op: "GetVou".parse().unwrap(),
                status: Status::Success,
                originator: "buyer".parse().unwrap(),
                responder: "store".parse().unwrap(),
            }],
            completion: Completion::Normal,
        };
        assert!(matches!(classify(&lone, &g), Err(SeqgenError::IllegalSequence { index: 1, .. })));
    }

    #[test]
    fn token_spellings() {
        assert_eq!(canonical_token("BuyReq(S)"), "BuyReq");
        assert_eq!(canonical_token(" PayCancTO"), "PayCancTo");
        assert_eq!(canonical_token("Rej(BF)"), "Rej(BF)");
        assert_eq!(tokens("{BuyReq(S), Rej(BF)}"), ["BuyReq", "Rej(BF)"]);
    }

    #[test]
    fn single_right_node_graph() {
        let mut g = reference_contract();
        g.nodes.truncate(1);
        let n = &mut g.nodes[0];
        n.modality = Modality::Right;
        n.on_timeout = Some(Completion::Normal);
        n.choices.truncate(1);
        n.on_success.retain(|k, _| k.as_str() == "Rej");
        g.operations.retain(|o| ["BuyReq", "Rej"].contains(&o.id.as_str()));
        assert!(g.validate().is_valid(), "{}", g.validate());
        let set = enumerate(&g, &FailureModel::NoFailures).unwrap();
        assert_eq!(set.len(), 2);
    }
}
