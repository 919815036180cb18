//! Deontic contract graphs and the pure state-transition function the
//! checker executes.
//!
//! A contract is a set of OR-exec nodes. At each node one party holds a
//! right or an obligation to perform one of up to two operations before a
//! deadline. Performing an operation successfully moves the contract to the
//! next node (or to an end); letting the deadline pass ends the contract,
//! abnormally when the expiring modality was an obligation.

mod reference;
mod validate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{Canonical, Encoder};

pub use reference::{reference_contract, REFERENCE_NAME};
pub use validate::{Finding, ValidationReport};

/// Virtual contract time, in whole days.
pub type Day = u32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("party name must be non-empty")]
    EmptyParty,
    #[error("operation name must be non-empty")]
    EmptyOperation,
    #[error("deadline must be at least one day")]
    ZeroDeadline,
    #[error("contract graph is invalid: {0}")]
    InvalidGraph(ValidationReport),
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PartyId(String);

impl PartyId {
    pub fn new(name: impl Into<String>) -> Result<Self, ModelError> {
        let name = name.into();
        if name.is_empty() {
            return Err(ModelError::EmptyParty);
        }
        Ok(PartyId(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for PartyId {
    type Error = ModelError;
    fn try_from(s: String) -> Result<Self, ModelError> {
        PartyId::new(s)
    }
}

impl From<PartyId> for String {
    fn from(p: PartyId) -> String {
        p.0
    }
}

impl FromStr for PartyId {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, ModelError> {
        PartyId::new(s)
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// Name of a contractual operation (`BuyReq`, `Pay`, ...).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct OperationId(String);

impl OperationId {
    pub fn new(name: impl Into<String>) -> Result<Self, ModelError> {
        let name = name.into();
        if name.is_empty() {
            return Err(ModelError::EmptyOperation);
        }
        Ok(OperationId(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for OperationId {
    type Error = ModelError;
    fn try_from(s: String) -> Result<Self, ModelError> {
        OperationId::new(s)
    }
}

impl From<OperationId> for String {
    fn from(o: OperationId) -> String {
        o.0
    }
}

impl FromStr for OperationId {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, ModelError> {
        OperationId::new(s)
    }
}

impl fmt::Display for OperationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for OperationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Modality {
    Right,
    Obligation,
    /// Representable, but carries no semantics beyond blocking the
    /// operations it lists.
    Prohibition,
}

/// Where an operation is enforced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Venue {
    OffChain,
    OnChain,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Operation {
    pub id: OperationId,
    pub venue: Venue,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Deadline(u32);

impl Deadline {
    pub fn days(days: u32) -> Result<Self, ModelError> {
        if days == 0 {
            return Err(ModelError::ZeroDeadline);
        }
        Ok(Deadline(days))
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Completion {
    Normal,
    Abnormal,
}

impl Completion {
    /// Completion reached when a node of the given modality times out.
    pub fn on_expiry_of(modality: Modality) -> Completion {
        match modality {
            Modality::Obligation => Completion::Abnormal,
            Modality::Right | Modality::Prohibition => Completion::Normal,
        }
    }
}

impl fmt::Display for Completion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Completion::Normal => "Normal",
            Completion::Abnormal => "Abnormal",
        })
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn new(name: impl Into<String>) -> Self {
        NodeId(name.into())
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Target {
    Node(NodeId),
    End(Completion),
}

/// An OR-exec choice point: `holder` may (Right) or must (Obligation)
/// perform one of `choices` within `deadline` days of the node becoming
/// active.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrExecNode {
    pub id: NodeId,
    pub holder: PartyId,
    pub modality: Modality,
    pub choices: Vec<OperationId>,
    pub deadline: Deadline,
    pub on_success: BTreeMap<OperationId, Target>,
    /// `None` is a structural defect reported by validation.
    pub on_timeout: Option<Completion>,
}

impl OrExecNode {
    /// `RejConfTo` for a node offering `Rej` and `Conf`.
    pub fn timeout_name(&self) -> String {
        let mut name: String = self.choices.iter().map(OperationId::as_str).collect();
        name.push_str("To");
        name
    }

    pub fn timeout_completion(&self) -> Completion {
        self.on_timeout.unwrap_or_else(|| Completion::on_expiry_of(self.modality))
    }
}

/// The initiating right: held from day 0, no deadline, consumed on use.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Opening {
    pub holder: PartyId,
    pub operation: OperationId,
    pub next: Target,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractGraph {
    pub name: String,
    pub parties: [PartyId; 2],
    pub operations: Vec<Operation>,
    pub opening: Opening,
    pub nodes: Vec<OrExecNode>,
}

/// One live right, obligation or prohibition.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RopEntry {
    pub modality: Modality,
    pub operations: BTreeSet<OperationId>,
    pub holder: PartyId,
    pub counterparty: PartyId,
    pub granted_at: Day,
    /// Last day on which the entry may still be exercised. `None` never
    /// expires.
    pub expires_at: Option<Day>,
    /// Node the entry belongs to; `None` for the opening right.
    pub node: Option<NodeId>,
}

impl RopEntry {
    /// Deadlines are inclusive: an entry expiring on day `d` is still live
    /// on day `d`.
    pub fn is_live(&self, at: Day) -> bool {
        self.expires_at.is_none_or(|e| at <= e)
    }

    pub fn summary(&self) -> String {
        let ops: Vec<&str> = self.operations.iter().map(OperationId::as_str).collect();
        let until = match self.expires_at {
            Some(d) => format!("day {d}"),
            None => "open".to_owned(),
        };
        format!("{:?} {}->{} {{{}}} until {}", self.modality, self.holder, self.counterparty, ops.join(","), until)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Opening,
    Node(NodeId),
    /// An on-chain operation was forwarded; the next node is entered when
    /// the confirmation arrives.
    AwaitingConfirmation,
    Ended(Completion),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PendingForward {
    pub operation: OperationId,
    pub next: Target,
    pub event: EventRecord,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RopState {
    pub entries: Vec<RopEntry>,
    pub now: Day,
    pub phase: Phase,
    pub pending_onchain: Vec<PendingForward>,
}

impl RopState {
    pub fn is_terminal(&self) -> bool {
        matches!(self.phase, Phase::Ended(_))
    }

    pub fn completion(&self) -> Option<Completion> {
        match self.phase {
            Phase::Ended(c) => Some(c),
            _ => None,
        }
    }

    pub fn active_node(&self) -> Option<&NodeId> {
        match &self.phase {
            Phase::Node(n) => Some(n),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Status {
    Success,
    Bizfail,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Success => "success",
            Status::Bizfail => "bizfail",
        }
    }
}

impl FromStr for Status {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "success" => Ok(Status::Success),
            "bizfail" => Ok(Status::Bizfail),
            other => Err(format!("unknown status {other:?}")),
        }
    }
}

/// Notification that `originator` executed `op_type` towards `responder`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EventRecord {
    pub originator: PartyId,
    pub responder: PartyId,
    pub op_type: String,
    pub status: Status,
}

impl EventRecord {
    pub fn new(originator: &str, responder: &str, op_type: &str, status: Status) -> Result<Self, String> {
        let event = EventRecord {
            originator: PartyId::new(originator).map_err(|e| e.to_string())?,
            responder: PartyId::new(responder).map_err(|e| e.to_string())?,
            op_type: op_type.to_owned(),
            status,
        };
        event.check()?;
        Ok(event)
    }

    pub fn success(originator: &str, responder: &str, op_type: &str) -> Result<Self, String> {
        EventRecord::new(originator, responder, op_type, Status::Success)
    }

    /// Field invariants: distinct parties, non-empty operation.
    pub fn check(&self) -> Result<(), String> {
        if self.originator == self.responder {
            return Err(format!("originator and responder are both {:?}", self.originator.as_str()));
        }
        if self.op_type.is_empty() {
            return Err("operation type is empty".to_owned());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeoutFiring {
    pub node: NodeId,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Input {
    Event(EventRecord),
    Timeout(TimeoutFiring),
    Confirmation { operation: OperationId },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Compliant,
    NonCompliant,
    /// Rulings on inputs that are not party actions (timeouts,
    /// confirmations).
    Info,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Compliant => "Compliant",
            Verdict::NonCompliant => "NonCompliant",
            Verdict::Info => "Info",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Effect {
    Grant(RopEntry),
    Revoke(RopEntry),
    ForwardOnChain { operation: OperationId, event: EventRecord },
    Complete(Completion),
}

impl Effect {
    pub fn summary(&self) -> String {
        match self {
            Effect::Grant(e) => format!("grant {}", e.summary()),
            Effect::Revoke(e) => format!("revoke {}", e.summary()),
            Effect::ForwardOnChain { operation, .. } => format!("forward {operation} on-chain"),
            Effect::Complete(c) => format!("complete {c}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepResult {
    pub verdict: Verdict,
    pub effects: Vec<Effect>,
    pub next_state: RopState,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StepError {
    #[error("contract instance has already ended")]
    InputAfterEnd,
    #[error("input stamped day {at} precedes current day {now}")]
    ClockRegression { now: Day, at: Day },
    #[error("no timeout {name} is active")]
    UnknownTimeout { name: String },
    #[error("timeout of node {node} is not due on day {at}")]
    TimeoutNotDue { node: NodeId, at: Day },
    #[error("no pending on-chain forward for {operation}")]
    UnknownConfirmation { operation: OperationId },
}

impl ContractGraph {
    pub fn node(&self, id: &NodeId) -> Option<&OrExecNode> {
        self.nodes.iter().find(|n| &n.id == id)
    }

    pub fn operation(&self, name: &str) -> Option<&Operation> {
        self.operations.iter().find(|o| o.id.as_str() == name)
    }

    pub fn counterparty(&self, party: &PartyId) -> Option<&PartyId> {
        match &self.parties {
            [a, b] if a == party => Some(b),
            [a, b] if b == party => Some(a),
            _ => None,
        }
    }

    pub fn start(&self) -> &Target {
        &self.opening.next
    }

    pub fn validate(&self) -> ValidationReport {
        validate::validate(self)
    }

    /// Node whose timeout pseudo-event is called `name` (either `To` or
    /// `TO` suffix).
    pub fn node_by_timeout_name(&self, name: &str) -> Option<&OrExecNode> {
        let stem = name.strip_suffix("To").or_else(|| name.strip_suffix("TO"))?;
        self.nodes.iter().find(|n| {
            let full = n.timeout_name();
            full.strip_suffix("To") == Some(stem)
        })
    }

    pub fn initial_state(&self) -> Result<RopState, ModelError> {
        let report = self.validate();
        if !report.is_valid() {
            return Err(ModelError::InvalidGraph(report));
        }
        let holder = self.opening.holder.clone();
        let counterparty = self.counterparty(&holder).cloned().expect("validated opening holder");
        Ok(RopState {
            entries: vec![RopEntry {
                modality: Modality::Right,
                operations: BTreeSet::from([self.opening.operation.clone()]),
                holder,
                counterparty,
                granted_at: 0,
                expires_at: None,
                node: None,
            }],
            now: 0,
            phase: Phase::Opening,
            pending_onchain: Vec::new(),
        })
    }

    /// Timeouts that fire if the clock moves to day `at`.
    pub fn due_timeouts(&self, state: &RopState, at: Day) -> Vec<TimeoutFiring> {
        if state.is_terminal() {
            return Vec::new();
        }
        state
            .entries
            .iter()
            .filter(|e| e.expires_at.is_some_and(|d| d < at))
            .filter_map(|e| e.node.as_ref())
            .filter_map(|n| self.node(n))
            .map(|n| TimeoutFiring { node: n.id.clone(), name: n.timeout_name() })
            .collect()
    }

    /// The pure transition function. `at` is the virtual day on which the
    /// input is processed and must not precede `state.now`.
    pub fn step(&self, state: &RopState, at: Day, input: &Input) -> Result<StepResult, StepError> {
        if state.is_terminal() {
            return Err(StepError::InputAfterEnd);
        }
        if at < state.now {
            return Err(StepError::ClockRegression { now: state.now, at });
        }
        let mut next = state.clone();
        next.now = at;
        match input {
            Input::Event(e) => Ok(self.step_event(next, e)),
            Input::Timeout(f) => self.step_timeout(next, f),
            Input::Confirmation { operation } => self.step_confirmation(next, operation),
        }
    }

    fn step_event(&self, mut next: RopState, event: &EventRecord) -> StepResult {
        let at = next.now;
        let reject = |next_state| StepResult { verdict: Verdict::NonCompliant, effects: Vec::new(), next_state };

        if event.check().is_err() {
            return reject(next);
        }
        let Some(op) = self.operation(&event.op_type) else {
            return reject(next);
        };
        let held_by_originator =
            |e: &&RopEntry| e.holder == event.originator && e.operations.contains(&op.id) && e.is_live(at);
        if next.entries.iter().filter(held_by_originator).any(|e| e.modality == Modality::Prohibition) {
            return reject(next);
        }
        let Some(idx) = next.entries.iter().position(|e| {
            e.modality != Modality::Prohibition && e.counterparty == event.responder && held_by_originator(&e)
        }) else {
            return reject(next);
        };

        if event.status == Status::Bizfail {
            // A failed attempt keeps the phase; the entry stays live.
            return StepResult { verdict: Verdict::Compliant, effects: Vec::new(), next_state: next };
        }

        let entry = next.entries.remove(idx);
        let target = match &entry.node {
            None => self.opening.next.clone(),
            Some(n) => {
                self.node(n).and_then(|n| n.on_success.get(&op.id)).cloned().unwrap_or(Target::End(Completion::Normal))
            }
        };
        let mut effects = vec![Effect::Revoke(entry)];
        match op.venue {
            Venue::OnChain => {
                effects.push(Effect::ForwardOnChain { operation: op.id.clone(), event: event.clone() });
                next.pending_onchain.push(PendingForward {
                    operation: op.id.clone(),
                    next: target,
                    event: event.clone(),
                });
                next.phase = Phase::AwaitingConfirmation;
            }
            Venue::OffChain => self.enter(&mut next, &target, &mut effects),
        }
        StepResult { verdict: Verdict::Compliant, effects, next_state: next }
    }

    fn step_timeout(&self, mut next: RopState, firing: &TimeoutFiring) -> Result<StepResult, StepError> {
        let unknown = || StepError::UnknownTimeout { name: firing.name.clone() };
        if next.active_node() != Some(&firing.node) {
            return Err(unknown());
        }
        let node = self.node(&firing.node).ok_or_else(unknown)?;
        let at = next.now;
        let idx = next.entries.iter().position(|e| e.node.as_ref() == Some(&node.id)).ok_or_else(unknown)?;
        if next.entries[idx].expires_at.is_none_or(|d| d >= at) {
            return Err(StepError::TimeoutNotDue { node: node.id.clone(), at });
        }
        let entry = next.entries.remove(idx);
        let mut effects = vec![Effect::Revoke(entry)];
        self.enter(&mut next, &Target::End(node.timeout_completion()), &mut effects);
        Ok(StepResult { verdict: Verdict::Info, effects, next_state: next })
    }

    fn step_confirmation(&self, mut next: RopState, operation: &OperationId) -> Result<StepResult, StepError> {
        let idx = next
            .pending_onchain
            .iter()
            .position(|p| &p.operation == operation)
            .ok_or_else(|| StepError::UnknownConfirmation { operation: operation.clone() })?;
        let pending = next.pending_onchain.remove(idx);
        let mut effects = Vec::new();
        self.enter(&mut next, &pending.next, &mut effects);
        Ok(StepResult { verdict: Verdict::Info, effects, next_state: next })
    }

    fn enter(&self, state: &mut RopState, target: &Target, effects: &mut Vec<Effect>) {
        match target {
            Target::Node(id) => {
                let node = self.node(id).expect("validated target");
                let counterparty = self.counterparty(&node.holder).cloned().expect("validated holder");
                let entry = RopEntry {
                    modality: node.modality,
                    operations: node.choices.iter().cloned().collect(),
                    holder: node.holder.clone(),
                    counterparty,
                    granted_at: state.now,
                    expires_at: Some(state.now + node.deadline.get()),
                    node: Some(node.id.clone()),
                };
                effects.push(Effect::Grant(entry.clone()));
                if !state.entries.contains(&entry) {
                    state.entries.push(entry);
                }
                state.phase = Phase::Node(node.id.clone());
            }
            Target::End(completion) => {
                for entry in state.entries.drain(..) {
                    effects.push(Effect::Revoke(entry));
                }
                effects.push(Effect::Complete(*completion));
                state.phase = Phase::Ended(*completion);
            }
        }
    }
}

// Canonical encodings. Enum tags are fixed small integers; never reorder.

impl Canonical for PartyId {
    fn encode(&self, enc: &mut Encoder) {
        enc.str(&self.0);
    }
}

impl Canonical for OperationId {
    fn encode(&self, enc: &mut Encoder) {
        enc.str(&self.0);
    }
}

impl Canonical for NodeId {
    fn encode(&self, enc: &mut Encoder) {
        enc.str(&self.0);
    }
}

impl Canonical for Modality {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(match self {
            Modality::Right => 0,
            Modality::Obligation => 1,
            Modality::Prohibition => 2,
        });
    }
}

impl Canonical for Completion {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(match self {
            Completion::Normal => 0,
            Completion::Abnormal => 1,
        });
    }
}

impl Canonical for Status {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(match self {
            Status::Success => 0,
            Status::Bizfail => 1,
        });
    }
}

impl Canonical for Verdict {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(match self {
            Verdict::Compliant => 0,
            Verdict::NonCompliant => 1,
            Verdict::Info => 2,
        });
    }
}

impl Canonical for Target {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            Target::Node(n) => enc.u8(0).value(n),
            Target::End(c) => enc.u8(1).value(c),
        };
    }
}

impl Canonical for Operation {
    fn encode(&self, enc: &mut Encoder) {
        enc.value(&self.id).u8(match self.venue {
            Venue::OffChain => 0,
            Venue::OnChain => 1,
        });
    }
}

impl Canonical for OrExecNode {
    fn encode(&self, enc: &mut Encoder) {
        enc.value(&self.id).value(&self.holder).value(&self.modality).list(&self.choices).u32(self.deadline.get());
        enc.u32(self.on_success.len() as u32);
        for (op, target) in &self.on_success {
            enc.value(op).value(target);
        }
        match self.on_timeout {
            None => enc.u8(0),
            Some(c) => enc.u8(1).value(&c),
        };
    }
}

impl Canonical for ContractGraph {
    fn encode(&self, enc: &mut Encoder) {
        enc.str(&self.name).list(&self.parties).list(&self.operations);
        enc.value(&self.opening.holder).value(&self.opening.operation).value(&self.opening.next);
        enc.list(&self.nodes);
    }
}

impl Canonical for EventRecord {
    fn encode(&self, enc: &mut Encoder) {
        enc.value(&self.originator).value(&self.responder).str(&self.op_type).value(&self.status);
    }
}

impl Canonical for TimeoutFiring {
    fn encode(&self, enc: &mut Encoder) {
        enc.value(&self.node).str(&self.name);
    }
}

impl Canonical for RopEntry {
    fn encode(&self, enc: &mut Encoder) {
        enc.value(&self.modality);
        enc.u32(self.operations.len() as u32);
        for op in &self.operations {
            enc.value(op);
        }
        enc.value(&self.holder).value(&self.counterparty).u32(self.granted_at).opt_u32(self.expires_at);
        match &self.node {
            None => enc.u8(0),
            Some(n) => enc.u8(1).value(n),
        };
    }
}

impl Canonical for Phase {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            Phase::Opening => enc.u8(0),
            Phase::Node(n) => enc.u8(1).value(n),
            Phase::AwaitingConfirmation => enc.u8(2),
            Phase::Ended(c) => enc.u8(3).value(c),
        };
    }
}

impl Canonical for PendingForward {
    fn encode(&self, enc: &mut Encoder) {
        enc.value(&self.operation).value(&self.next).value(&self.event);
    }
}

impl Canonical for RopState {
    fn encode(&self, enc: &mut Encoder) {
        enc.list(&self.entries).u32(self.now).value(&self.phase).list(&self.pending_onchain);
    }
}

impl Canonical for Effect {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            Effect::Grant(e) => enc.u8(0).value(e),
            Effect::Revoke(e) => enc.u8(1).value(e),
            Effect::ForwardOnChain { operation, event } => enc.u8(2).value(operation).value(event),
            Effect::Complete(c) => enc.u8(3).value(c),
        };
    }
}

impl Canonical for StepResult {
    fn encode(&self, enc: &mut Encoder) {
        enc.value(&self.verdict).list(&self.effects).value(&self.next_state);
    }
}
