//! Stateful compliance checker for one contract instance.
//!
//! Events, timeouts and chain confirmations all go through one lock, so the
//! log is a total order of everything the instance ruled on. Confirmations
//! are pushed by the chain simulator into a channel and drained before every
//! operation, which is what makes the Pay/GetVou race depend only on
//! when the confirmation reached the inbox.

use std::collections::BTreeMap;
use std::sync::mpsc::{self, Receiver};
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audit::{LogChain, LoggedInput, VerdictRecord};
use crate::chain::{Address, ChainError, ChainSim, Confirmation};
use crate::contract::{
    Completion, ContractGraph, Day, Effect, EventRecord, Input, ModelError, NodeId, OperationId, RopState, StepError,
    TimeoutFiring, Verdict,
};

/// Handle on the simulated chain and the payment contract this instance
/// forwards to.
#[derive(Clone, Debug)]
pub struct ChainPort {
    pub chain: Arc<Mutex<ChainSim>>,
    pub address: Address,
}

impl ChainPort {
    pub fn lock(&self) -> MutexGuard<'_, ChainSim> {
        self.chain.lock().unwrap_or_else(|p| p.into_inner())
    }
}

/// How events are ordered relative to outstanding confirmations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ordering {
    /// Judge each event against whatever has arrived so far.
    #[default]
    Arrival,
    /// Before judging an event, advance the chain until every pending
    /// forward is confirmed (at most `max_ticks`). Verdicts then no longer
    /// depend on latency, unless a confirmation is lost.
    SettleFirst { max_ticks: u64 },
}

#[derive(Clone, Debug)]
pub struct CheckerConfig {
    pub contract: ContractGraph,
    pub chain: ChainPort,
    pub ordering: Ordering,
    /// Amount passed to the payment contract for forwarded payments.
    pub payment_amount: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CheckerError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("malformed event: {0}")]
    MalformedEvent(String),
    #[error("contract instance has ended")]
    ContractEnded,
    #[error("no pending forward matches confirmation of tx {tx_num}")]
    UnknownConfirmation { tx_num: u64 },
    #[error("clock must advance by at least one day")]
    ZeroAdvance,
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Step(#[from] StepError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiredTimeout {
    pub name: String,
    pub node: NodeId,
    pub completion: Completion,
    pub day: Day,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConfirmationOutcome {
    Applied,
    /// The instance had already ended; logged as Info and flagged.
    Late,
}

struct Inner {
    graph: ContractGraph,
    state: RopState,
    log: LogChain,
    inbox: Receiver<Confirmation>,
    chain: ChainPort,
    ordering: Ordering,
    payment_amount: u64,
    /// tx number -> forwarded operation, for pending forwards.
    in_flight: BTreeMap<u64, OperationId>,
}

pub struct Checker {
    inner: Mutex<Inner>,
}

impl Checker {
    pub fn new(config: CheckerConfig) -> Result<Checker, CheckerError> {
        let state = config.contract.initial_state()?;
        let (tx, rx) = mpsc::channel();
        config.chain.lock().subscribe(&config.chain.address, tx)?;
        Ok(Checker {
            inner: Mutex::new(Inner {
                log: LogChain::for_contract(&config.contract),
                graph: config.contract,
                state,
                inbox: rx,
                chain: config.chain,
                ordering: config.ordering,
                payment_amount: config.payment_amount,
                in_flight: BTreeMap::new(),
            }),
        })
    }

    /// A checker on its own freshly deployed payment contract.
    pub fn standalone(contract: ContractGraph, chain: Arc<Mutex<ChainSim>>) -> Result<Checker, CheckerError> {
        let address = chain.lock().unwrap_or_else(|p| p.into_inner()).deploy(crate::chain::CodeId::CollectPayment);
        Checker::new(CheckerConfig {
            contract,
            chain: ChainPort { chain, address },
            ordering: Ordering::Arrival,
            payment_amount: 1,
        })
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn submit_event(&self, event: EventRecord) -> Result<Verdict, CheckerError> {
        let mut inner = self.lock();
        event.check().map_err(CheckerError::MalformedEvent)?;
        inner.drain_inbox();
        if let Ordering::SettleFirst { max_ticks } = inner.ordering {
            inner.settle(max_ticks)?;
        }
        if inner.state.is_terminal() {
            return Err(CheckerError::ContractEnded);
        }
        let verdict = inner.judge(event)?;
        inner.drain_inbox();
        Ok(verdict)
    }

    /// Feed a confirmation directly, bypassing the inbox.
    pub fn on_confirmation(&self, confirmation: Confirmation) -> Result<ConfirmationOutcome, CheckerError> {
        let mut inner = self.lock();
        inner.drain_inbox();
        inner.confirm(confirmation)
    }

    /// Process confirmations that have reached the inbox. Returns how many.
    pub fn process_inbox(&self) -> usize {
        self.lock().drain_inbox()
    }

    pub fn advance_clock(&self, days: u32) -> Result<Vec<FiredTimeout>, CheckerError> {
        if days == 0 {
            return Err(CheckerError::ZeroAdvance);
        }
        let mut inner = self.lock();
        inner.drain_inbox();
        let at = inner.state.now + days;
        let mut fired = Vec::new();
        for firing in inner.graph.due_timeouts(&inner.state, at) {
            if inner.state.is_terminal() {
                break;
            }
            let r = inner.graph.step(&inner.state, at, &Input::Timeout(firing.clone()))?;
            let completion = r.next_state.completion();
            inner.commit(at, LoggedInput::Timeout(firing.clone()), r.verdict, &r.effects, r.next_state);
            if let Some(completion) = completion {
                fired.push(FiredTimeout { name: firing.name, node: firing.node, completion, day: at });
            }
        }
        inner.state.now = at;
        Ok(fired)
    }

    pub fn now(&self) -> Day {
        self.lock().state.now
    }

    pub fn state(&self) -> RopState {
        self.lock().state.clone()
    }

    pub fn log(&self) -> LogChain {
        self.lock().log.clone()
    }

    pub fn contract(&self) -> ContractGraph {
        self.lock().graph.clone()
    }

    pub fn chain(&self) -> ChainPort {
        self.lock().chain.clone()
    }

    pub fn pending_forwards(&self) -> usize {
        self.lock().state.pending_onchain.len()
    }
}

impl Inner {
    fn judge(&mut self, event: EventRecord) -> Result<Verdict, CheckerError> {
        let at = self.state.now;
        let r = self.graph.step(&self.state, at, &Input::Event(event.clone()))?;
        let mut summaries = Vec::with_capacity(r.effects.len());
        let mut submissions = Vec::new();
        for effect in &r.effects {
            match effect {
                Effect::ForwardOnChain { operation, .. } => {
                    let sub = self.chain.lock().submit_payment(&self.chain.address, self.payment_amount)?;
                    summaries.push(format!("forward {operation} on-chain as tx {} ({})", sub.tx_num, sub.result));
                    submissions.push((sub.tx_num, operation.clone()));
                }
                other => summaries.push(other.summary()),
            }
        }
        self.in_flight.extend(submissions);
        self.state = r.next_state;
        self.log.append(at, LoggedInput::Event(event), r.verdict, summaries);
        Ok(r.verdict)
    }

    fn commit(&mut self, at: Day, input: LoggedInput, verdict: Verdict, effects: &[Effect], next: RopState) {
        self.state = next;
        self.log.append(at, input, verdict, effects.iter().map(Effect::summary).collect());
    }

    fn drain_inbox(&mut self) -> usize {
        let mut n = 0;
        while let Ok(c) = self.inbox.try_recv() {
            // Unknown confirmations cannot come from our own subscription.
            let _ = self.confirm(c);
            n += 1;
        }
        n
    }

    fn confirm(&mut self, c: Confirmation) -> Result<ConfirmationOutcome, CheckerError> {
        if c.address != self.chain.address {
            return Err(CheckerError::UnknownConfirmation { tx_num: c.tx_num });
        }
        let operation =
            self.in_flight.remove(&c.tx_num).ok_or(CheckerError::UnknownConfirmation { tx_num: c.tx_num })?;
        let at = self.state.now;
        let logged = |late| LoggedInput::Confirmation {
            operation: operation.clone(),
            tx_num: c.tx_num,
            address: c.address.to_string(),
            result: c.result.clone(),
            late,
        };
        if self.state.is_terminal() {
            self.log.append(at, logged(true), Verdict::Info, vec!["ignored".to_owned()]);
            return Ok(ConfirmationOutcome::Late);
        }
        let r = self.graph.step(&self.state, at, &Input::Confirmation { operation: operation.clone() })?;
        self.commit(at, logged(false), r.verdict, &r.effects, r.next_state);
        Ok(ConfirmationOutcome::Applied)
    }

    fn settle(&mut self, max_ticks: u64) -> Result<(), CheckerError> {
        let mut spent = 0;
        while !self.in_flight.is_empty() && spent < max_ticks {
            self.chain.lock().tick(1)?;
            spent += 1;
            self.drain_inbox();
        }
        Ok(())
    }
}

/// Replay the inputs recorded in `log` through the pure step function and
/// check that every verdict comes out the same. Returns the first record
/// that disagrees.
pub fn replay_log(graph: &ContractGraph, records: &[VerdictRecord]) -> Result<RopState, ReplayMismatch> {
    let mut state = graph.initial_state().map_err(|e| ReplayMismatch { seq_no: 0, reason: e.to_string() })?;
    for r in records {
        let input = match &r.input {
            LoggedInput::Event(e) => Input::Event(e.clone()),
            LoggedInput::Timeout(t) => Input::Timeout(t.clone()),
            LoggedInput::Confirmation { late: true, .. } => continue,
            LoggedInput::Confirmation { operation, .. } => Input::Confirmation { operation: operation.clone() },
        };
        let step = graph
            .step(&state, r.timestamp, &input)
            .map_err(|e| ReplayMismatch { seq_no: r.seq_no, reason: e.to_string() })?;
        if step.verdict != r.verdict {
            return Err(ReplayMismatch {
                seq_no: r.seq_no,
                reason: format!("logged {} but replay gives {}", r.verdict, step.verdict),
            });
        }
        state = step.next_state;
    }
    Ok(state)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("replay diverges at record {seq_no}: {reason}")]
pub struct ReplayMismatch {
    pub seq_no: u64,
    pub reason: String,
}

/// The timeout firing, if any, that `advance_clock(days)` would produce.
pub fn peek_timeouts(graph: &ContractGraph, state: &RopState, days: u32) -> Vec<TimeoutFiring> {
    graph.due_timeouts(state, state.now + days)
}
