//! Hybrid smart-contract compliance checking.
//!
//! A contract between two parties is modelled as a graph of deontic choice
//! points. The [`checker`] judges each business event reported by a party,
//! keeps the live rights and obligations, fires deadline timeouts, and hands
//! payment operations to a simulated blockchain ([`chain`]). Every ruling is
//! appended to a tamper-evident log ([`audit`]). [`seqgen`] enumerates every
//! execution the contract admits, and [`harness`] replays them against a
//! checker under controlled chain latency.

pub mod audit;
pub mod canonical;
pub mod chain;
pub mod checker;
pub mod contract;
pub mod formats;
pub mod harness;
pub mod seqgen;

pub use canonical::{Canonical, Digest};
pub use contract::{reference_contract, ContractGraph, EventRecord, Status, Verdict};

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/contract-model.md")]
    mod contract_model {}
    #[doc = include_str!("../../../book/src/checking.md")]
    mod checking {}
    #[doc = include_str!("../../../book/src/chain.md")]
    mod chain {}
    #[doc = include_str!("../../../book/src/sequences.md")]
    mod sequences {}
    #[doc = include_str!("../../../book/src/race.md")]
    mod race {}
    #[doc = include_str!("../../../book/src/audit-log.md")]
    mod audit_log {}
    #[doc = include_str!("../../../book/src/service.md")]
    mod service {}
}
