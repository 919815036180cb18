//! In-process stand-in for the on-chain payment contract.
//!
//! The simulator keeps its own tick clock, separate from the contract's day
//! clock. Submitted payments become confirmations once their latency has
//! elapsed; confirmations are pushed into the subscriber's channel and never
//! delivered re-entrantly.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::mpsc::Sender;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Tick = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CodeId {
    CollectPayment,
}

impl FromStr for CodeId {
    type Err = ChainError;
    fn from_str(s: &str) -> Result<Self, ChainError> {
        match s {
            "collectPayment" | "collectPayment.sol" => Ok(CodeId::CollectPayment),
            other => Err(ChainError::UnknownCode(other.to_owned())),
        }
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Address(String);

impl Address {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Confirmation delay of a single transaction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Latency {
    Ticks(u64),
    /// The confirmation is lost.
    Never,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum LatencyPolicy {
    #[default]
    Immediate,
    FixedTicks(u64),
    /// Per-transaction latencies in submission order; transactions beyond
    /// the end of the script confirm immediately.
    Scripted(Vec<Latency>),
    Never,
}

impl LatencyPolicy {
    /// Latency of the `index`-th (0-based) transaction of a contract.
    pub fn latency_for(&self, index: usize) -> Latency {
        match self {
            LatencyPolicy::Immediate => Latency::Ticks(0),
            LatencyPolicy::FixedTicks(n) => Latency::Ticks(*n),
            LatencyPolicy::Scripted(script) => script.get(index).copied().unwrap_or(Latency::Ticks(0)),
            LatencyPolicy::Never => Latency::Never,
        }
    }
}

impl FromStr for LatencyPolicy {
    type Err = String;

    /// `0`/`immediate`, `never`, a tick count, or a comma-separated script
    /// such as `0,5,never`.
    fn from_str(s: &str) -> Result<Self, String> {
        let one = |t: &str| -> Result<Latency, String> {
            match t.trim() {
                "never" | "inf" => Ok(Latency::Never),
                n => n.parse().map(Latency::Ticks).map_err(|_| format!("bad latency {n:?}")),
            }
        };
        match s.trim() {
            "immediate" | "0" => Ok(LatencyPolicy::Immediate),
            "never" => Ok(LatencyPolicy::Never),
            t if t.contains(',') => t.split(',').map(one).collect::<Result<_, _>>().map(LatencyPolicy::Scripted),
            t => match one(t)? {
                Latency::Ticks(n) => Ok(LatencyPolicy::FixedTicks(n)),
                Latency::Never => Ok(LatencyPolicy::Never),
            },
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChainError {
    #[error("unknown contract code {0:?}")]
    UnknownCode(String),
    #[error("no contract deployed at {0}")]
    NoSuchContract(Address),
    #[error("tick count must be at least 1")]
    ZeroTicks,
}

/// Delivered to the subscriber of a contract address.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confirmation {
    pub address: Address,
    pub tx_num: u64,
    pub result: String,
    pub confirmed_at: Tick,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingTx {
    pub tx_num: u64,
    pub amount: u64,
    pub result: String,
    pub submitted_at: Tick,
    pub ready_at: Option<Tick>,
    pub delivered_at: Option<Tick>,
}

#[derive(Clone, Debug)]
pub struct DeployedContract {
    pub address: Address,
    pub code_id: CodeId,
    pub policy: LatencyPolicy,
    txs: Vec<PendingTx>,
    delivered: usize,
}

impl DeployedContract {
    pub fn transactions(&self) -> &[PendingTx] {
        &self.txs
    }

    pub fn pending(&self) -> impl Iterator<Item = &PendingTx> {
        self.txs[self.delivered..].iter()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submission {
    pub tx_num: u64,
    pub result: String,
}

/// Result string of the contract's payment function.
pub fn payment_result(pay: u64) -> String {
    format!("{pay}Received")
}

/// Result string of the contract's receipt function.
pub fn receipt_result(tx_num: u64) -> String {
    format!("Receipt 4 Tx{tx_num}")
}

#[derive(Debug, Default)]
pub struct ChainSim {
    contracts: BTreeMap<Address, DeployedContract>,
    subscribers: BTreeMap<Address, Sender<Confirmation>>,
    default_policy: LatencyPolicy,
    tick: Tick,
    deployed: u64,
}

impl ChainSim {
    pub fn new(default_policy: LatencyPolicy) -> Self {
        ChainSim { default_policy, ..ChainSim::default() }
    }

    pub fn now(&self) -> Tick {
        self.tick
    }

    pub fn deploy(&mut self, code_id: CodeId) -> Address {
        let policy = self.default_policy.clone();
        self.deploy_with(code_id, policy)
    }

    pub fn deploy_with(&mut self, code_id: CodeId, policy: LatencyPolicy) -> Address {
        self.deployed += 1;
        let address = Address(format!("0x{:040x}", 0x00c0_ffee_0000_u64 + self.deployed));
        self.contracts.insert(
            address.clone(),
            DeployedContract { address: address.clone(), code_id, policy, txs: Vec::new(), delivered: 0 },
        );
        address
    }

    /// Deploy by code name, as read from configuration.
    pub fn deploy_named(&mut self, code: &str) -> Result<Address, ChainError> {
        Ok(self.deploy(code.parse()?))
    }

    pub fn contract(&self, addr: &Address) -> Result<&DeployedContract, ChainError> {
        self.contracts.get(addr).ok_or_else(|| ChainError::NoSuchContract(addr.clone()))
    }

    pub fn set_policy(&mut self, addr: &Address, policy: LatencyPolicy) -> Result<(), ChainError> {
        self.contract_mut(addr)?.policy = policy;
        Ok(())
    }

    pub fn subscribe(&mut self, addr: &Address, sink: Sender<Confirmation>) -> Result<(), ChainError> {
        self.contract(addr)?;
        self.subscribers.insert(addr.clone(), sink);
        Ok(())
    }

    fn contract_mut(&mut self, addr: &Address) -> Result<&mut DeployedContract, ChainError> {
        self.contracts.get_mut(addr).ok_or_else(|| ChainError::NoSuchContract(addr.clone()))
    }

    pub fn submit_payment(&mut self, addr: &Address, pay: u64) -> Result<Submission, ChainError> {
        let now = self.tick;
        let c = self.contract_mut(addr)?;
        let index = c.txs.len();
        let tx_num = index as u64 + 1;
        let ready_at = match c.policy.latency_for(index) {
            Latency::Ticks(n) => Some(now.saturating_add(n)),
            Latency::Never => None,
        };
        let result = payment_result(pay);
        c.txs.push(PendingTx {
            tx_num,
            amount: pay,
            result: result.clone(),
            submitted_at: now,
            ready_at,
            delivered_at: None,
        });
        self.deliver_ready(addr);
        Ok(Submission { tx_num, result })
    }

    pub fn get_receipt(&self, addr: &Address, tx_num: u64) -> Result<String, ChainError> {
        self.contract(addr)?;
        Ok(receipt_result(tx_num))
    }

    /// Advance `n` ticks and deliver every confirmation that became ready.
    pub fn tick(&mut self, n: u64) -> Result<Vec<Confirmation>, ChainError> {
        if n == 0 {
            return Err(ChainError::ZeroTicks);
        }
        self.tick += n;
        let addrs: Vec<Address> = self.contracts.keys().cloned().collect();
        Ok(addrs.iter().flat_map(|a| self.deliver_ready(a)).collect())
    }

    pub fn pending_count(&self, addr: &Address) -> Result<usize, ChainError> {
        Ok(self.contract(addr)?.pending().count())
    }

    /// Ticks until every pending transaction of `addr` is delivered, or
    /// `None` if some confirmation is lost.
    pub fn ticks_to_settle(&self, addr: &Address) -> Result<Option<u64>, ChainError> {
        let mut worst = 0;
        for tx in self.contract(addr)?.pending() {
            match tx.ready_at {
                Some(r) => worst = worst.max(r.saturating_sub(self.tick)),
                None => return Ok(None),
            }
        }
        Ok(Some(worst))
    }

    /// Delivery is gated on all lower transaction numbers having been
    /// delivered, so confirmations always arrive in submission order.
    fn deliver_ready(&mut self, addr: &Address) -> Vec<Confirmation> {
        let now = self.tick;
        let Some(c) = self.contracts.get_mut(addr) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        while let Some(tx) = c.txs.get_mut(c.delivered) {
            match tx.ready_at {
                Some(r) if r <= now => {
                    tx.delivered_at = Some(now);
                    out.push(Confirmation {
                        address: addr.clone(),
                        tx_num: tx.tx_num,
                        result: tx.result.clone(),
                        confirmed_at: now,
                    });
                    c.delivered += 1;
                }
                _ => break,
            }
        }
        if let Some(sink) = self.subscribers.get(addr) {
            for conf in &out {
                // A dropped receiver only means nobody is listening any more.
                let _ = sink.send(conf.clone());
            }
        }
        out
    }

    /// One line per transaction: address, tx number, ready and delivery
    /// ticks.
    pub fn debug_dump(&self) -> String {
        let mut out = String::new();
        for c in self.contracts.values() {
            for tx in &c.txs {
                let ready = tx.ready_at.map_or_else(|| "never".to_owned(), |t| t.to_string());
                let delivered = tx.delivered_at.map_or_else(|| "pending".to_owned(), |t| t.to_string());
                out.push_str(&format!(
                    "{} tx_num={} amount={} ready_at={} delivered_at={}\n",
                    c.address, tx.tx_num, tx.amount, ready, delivered
                ));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use std::sync::mpsc;

    use super::*;

    #[test]
    fn addresses_are_unique() {
        let mut sim = ChainSim::default();
        let a = sim.deploy(CodeId::CollectPayment);
        let b = sim.deploy(CodeId::CollectPayment);
        assert_ne!(a, b);
        assert!(matches!("erc20".parse::<CodeId>(), Err(ChainError::UnknownCode(_))));
    }

    #[test]
    fn result_strings() {
        let mut sim = ChainSim::default();
        let a = sim.deploy(CodeId::CollectPayment);
        assert_eq!(sim.get_receipt(&a, 1).unwrap(), "Receipt 4 Tx1");
        assert_eq!(sim.submit_payment(&a, 42).unwrap().result, "42Received");
        assert_eq!(sim.submit_payment(&a, 0).unwrap().result, "0Received");
        assert_eq!(sim.get_receipt(&a, 7).unwrap(), "Receipt 4 Tx7");
    }

    #[test]
    fn undeployed_address_is_rejected() {
        let mut sim = ChainSim::default();
        let a = sim.deploy(CodeId::CollectPayment);
        let mut other = ChainSim::default();
        other.deploy(CodeId::CollectPayment);
        other.deploy(CodeId::CollectPayment);
        let b = other.deploy(CodeId::CollectPayment);
        assert!(matches!(sim.submit_payment(&b, 1), Err(ChainError::NoSuchContract(_))));
        assert!(sim.submit_payment(&a, 1).is_ok());
    }

    #[test]
    fn fixed_latency_trace() {
        let mut sim = ChainSim::new(LatencyPolicy::FixedTicks(3));
        let a = sim.deploy(CodeId::CollectPayment);
        let (tx, rx) = mpsc::channel();
        sim.subscribe(&a, tx).unwrap();
        sim.submit_payment(&a, 5).unwrap();
        assert!(sim.tick(2).unwrap().is_empty());
        assert!(rx.try_recv().is_err());
        let got = sim.tick(1).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(rx.try_recv().unwrap().tx_num, 1);
        assert_eq!(sim.debug_dump(), format!("{a} tx_num=1 amount=5 ready_at=3 delivered_at=3\n"));
    }

    #[test]
    fn immediate_is_delivered_without_tick() {
        let mut sim = ChainSim::default();
        let a = sim.deploy(CodeId::CollectPayment);
        let (tx, rx) = mpsc::channel();
        sim.subscribe(&a, tx).unwrap();
        sim.submit_payment(&a, 5).unwrap();
        assert_eq!(rx.try_recv().unwrap().result, "5Received");
    }

    #[test]
    fn scripted_delivery_stays_in_order() {
        let mut sim = ChainSim::new(LatencyPolicy::Scripted(vec![Latency::Ticks(5), Latency::Ticks(0)]));
        let a = sim.deploy(CodeId::CollectPayment);
        sim.submit_payment(&a, 1).unwrap();
        sim.submit_payment(&a, 2).unwrap();
        assert!(sim.tick(4).unwrap().is_empty());
        let got: Vec<u64> = sim.tick(1).unwrap().iter().map(|c| c.tx_num).collect();
        assert_eq!(got, [1, 2]);

        let mut sim = ChainSim::new("0,5".parse().unwrap());
        let a = sim.deploy(CodeId::CollectPayment);
        sim.submit_payment(&a, 1).unwrap();
        sim.submit_payment(&a, 2).unwrap();
        assert_eq!(sim.pending_count(&a).unwrap(), 1);
        assert_eq!(sim.ticks_to_settle(&a).unwrap(), Some(5));
    }

    #[test]
    fn never_loses_the_confirmation() {
        let mut sim = ChainSim::new(LatencyPolicy::Never);
        let a = sim.deploy(CodeId::CollectPayment);
        sim.submit_payment(&a, 1).unwrap();
        assert!(sim.tick(1_000).unwrap().is_empty());
        assert_eq!(sim.ticks_to_settle(&a).unwrap(), None);
        assert_eq!(sim.tick(0), Err(ChainError::ZeroTicks));
    }

    #[test]
    fn policy_parsing() {
        assert_eq!("0".parse(), Ok(LatencyPolicy::Immediate));
        assert_eq!("10".parse(), Ok(LatencyPolicy::FixedTicks(10)));
        assert_eq!("never".parse(), Ok(LatencyPolicy::Never));
        assert_eq!("0, never".parse(), Ok(LatencyPolicy::Scripted(vec![Latency::Ticks(0), Latency::Never])));
        assert!("soon".parse::<LatencyPolicy>().is_err());
    }
}
