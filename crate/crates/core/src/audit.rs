//! Append-only, hash-chained log of checker rulings.
//!
//! Each record's `this_hash` is `sha256(prev_hash ‖ body)` where `body` is
//! the canonical encoding of every other field of the record. The first
//! record chains onto the digest of the genesis header, and the header
//! names the digest algorithm and carries the digest of the contract graph
//! the log belongs to.
//!
//! On disk a log is the magic line followed by length-prefixed canonical
//! fields: the header, then one field per record.

use std::fmt;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::canonical::{Canonical, DecodeError, Decoder, Digest, Encoder, DIGEST_ALGORITHM};
use crate::contract::{ContractGraph, Day, EventRecord, NodeId, OperationId, PartyId, Status, TimeoutFiring, Verdict};

pub const MAGIC: &[u8; 8] = b"HCCLOG1\n";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Genesis {
    pub algorithm: String,
    pub contract_digest: Digest,
}

impl Genesis {
    pub fn for_contract(graph: &ContractGraph) -> Genesis {
        Genesis { algorithm: DIGEST_ALGORITHM.to_owned(), contract_digest: graph.digest() }
    }
}

impl Canonical for Genesis {
    fn encode(&self, enc: &mut Encoder) {
        enc.str(&self.algorithm).digest(&self.contract_digest);
    }
}

/// What a record rules on.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LoggedInput {
    Event(EventRecord),
    Timeout(TimeoutFiring),
    Confirmation {
        operation: OperationId,
        tx_num: u64,
        address: String,
        result: String,
        /// Arrived after the instance had ended.
        late: bool,
    },
}

impl LoggedInput {
    pub fn summary(&self) -> String {
        match self {
            LoggedInput::Event(e) => {
                format!("event {}->{} {} {}", e.originator, e.responder, e.op_type, e.status.as_str())
            }
            LoggedInput::Timeout(t) => format!("timeout {} at {}", t.name, t.node),
            LoggedInput::Confirmation { operation, tx_num, result, late, .. } => {
                let late = if *late { " late" } else { "" };
                format!("confirmation {operation} tx {tx_num} {result:?}{late}")
            }
        }
    }
}

impl Canonical for LoggedInput {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            LoggedInput::Event(e) => enc.u8(0).value(e),
            LoggedInput::Timeout(t) => enc.u8(1).value(t),
            LoggedInput::Confirmation { operation, tx_num, address, result, late } => {
                enc.u8(2).value(operation).u64(*tx_num).str(address).str(result).u8(u8::from(*late))
            }
        };
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub seq_no: u64,
    pub timestamp: Day,
    pub input: LoggedInput,
    pub verdict: Verdict,
    pub effects: Vec<String>,
    pub prev_hash: Digest,
    pub this_hash: Digest,
}

impl VerdictRecord {
    fn body(seq_no: u64, timestamp: Day, input: &LoggedInput, verdict: Verdict, effects: &[String]) -> Vec<u8> {
        let mut enc = Encoder::default();
        enc.u64(seq_no).u32(timestamp).value(input).value(&verdict).list(effects);
        enc.into_bytes()
    }

    pub fn computed_hash(&self) -> Digest {
        let body = Self::body(self.seq_no, self.timestamp, &self.input, self.verdict, &self.effects);
        Digest::chained(&self.prev_hash, &body)
    }

    /// One line of the text dump.
    pub fn line(&self) -> String {
        let effects = if self.effects.is_empty() { "-".to_owned() } else { self.effects.join("; ") };
        format!(
            "{:>4} day {:>3} {:<12} {} [{}] {}",
            self.seq_no,
            self.timestamp,
            self.verdict.to_string(),
            self.input.summary(),
            effects,
            &self.this_hash.to_hex()[..16]
        )
    }
}

impl Canonical for VerdictRecord {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.seq_no)
            .u32(self.timestamp)
            .value(&self.input)
            .value(&self.verdict)
            .list(&self.effects)
            .digest(&self.prev_hash)
            .digest(&self.this_hash);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerifyOutcome {
    Ok,
    /// First record whose digests do not check out; 0 is the header.
    TamperedAt(u64),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogChain {
    pub genesis: Genesis,
    pub records: Vec<VerdictRecord>,
}

impl LogChain {
    pub fn new(genesis: Genesis) -> LogChain {
        LogChain { genesis, records: Vec::new() }
    }

    pub fn for_contract(graph: &ContractGraph) -> LogChain {
        LogChain::new(Genesis::for_contract(graph))
    }

    pub fn genesis_digest(&self) -> Digest {
        self.genesis.digest()
    }

    pub fn head(&self) -> Digest {
        self.records.last().map_or_else(|| self.genesis_digest(), |r| r.this_hash)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn append(
        &mut self,
        timestamp: Day,
        input: LoggedInput,
        verdict: Verdict,
        effects: Vec<String>,
    ) -> &VerdictRecord {
        let seq_no = self.records.len() as u64 + 1;
        let prev_hash = self.head();
        let body = VerdictRecord::body(seq_no, timestamp, &input, verdict, &effects);
        let this_hash = Digest::chained(&prev_hash, &body);
        self.records.push(VerdictRecord { seq_no, timestamp, input, verdict, effects, prev_hash, this_hash });
        self.records.last().expect("just pushed")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        let mut enc = Encoder::default();
        enc.bytes(&self.genesis.canonical_bytes());
        for r in &self.records {
            enc.bytes(&r.canonical_bytes());
        }
        out.extend(enc.into_bytes());
        out
    }

    /// Strict parse. Hash checks are left to [`verify_log`].
    pub fn from_bytes(bytes: &[u8]) -> Result<LogChain, LogReadError> {
        let body = bytes
            .strip_prefix(MAGIC.as_slice())
            .ok_or(LogReadError { record: 0, cause: DecodeError::Invalid("bad magic".into()) })?;
        let mut outer = Decoder::new(body);
        let header = outer.bytes().map_err(|cause| LogReadError { record: 0, cause })?;
        let genesis = decode_genesis(header).map_err(|cause| LogReadError { record: 0, cause })?;
        let mut records = Vec::new();
        while !outer.is_empty() {
            let index = records.len() as u64 + 1;
            let err = |cause| LogReadError { record: index, cause };
            let field = outer.bytes().map_err(err)?;
            records.push(decode_record(field).map_err(err)?);
        }
        Ok(LogChain { genesis, records })
    }

    pub fn write_to(&self, path: &Path) -> io::Result<()> {
        std::fs::write(path, self.to_bytes())
    }

    pub fn read_from(path: &Path) -> io::Result<Result<LogChain, LogReadError>> {
        Ok(LogChain::from_bytes(&std::fs::read(path)?))
    }

    /// Header line followed by one line per record.
    pub fn text_dump(&self) -> String {
        let mut out = format!(
            "# log {} contract {} records {}\n",
            self.genesis.algorithm,
            self.genesis.contract_digest,
            self.records.len()
        );
        for r in &self.records {
            out.push_str(&r.line());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("log record {record}: {cause}")]
pub struct LogReadError {
    /// 0 for the header.
    pub record: u64,
    pub cause: DecodeError,
}

impl fmt::Display for VerifyOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VerifyOutcome::Ok => f.write_str("Ok"),
            VerifyOutcome::TamperedAt(n) => write!(f, "TamperedAt({n})"),
        }
    }
}

/// Recompute every digest and report the first record that fails.
pub fn verify_log(chain: &LogChain) -> VerifyOutcome {
    if chain.genesis.algorithm != DIGEST_ALGORITHM {
        return VerifyOutcome::TamperedAt(0);
    }
    let mut prev = chain.genesis_digest();
    for (i, r) in chain.records.iter().enumerate() {
        let expected_seq = i as u64 + 1;
        if i == 0 && r.prev_hash != prev && r.computed_hash() == r.this_hash {
            // Record 1 is intact but no longer chains onto the header.
            return VerifyOutcome::TamperedAt(0);
        }
        if r.seq_no != expected_seq || r.prev_hash != prev || r.computed_hash() != r.this_hash {
            return VerifyOutcome::TamperedAt(expected_seq);
        }
        prev = r.this_hash;
    }
    VerifyOutcome::Ok
}

/// Verify a serialized log. Bytes that no longer parse count as tampering
/// at the record where parsing failed.
pub fn verify_bytes(bytes: &[u8]) -> VerifyOutcome {
    match LogChain::from_bytes(bytes) {
        Ok(chain) => verify_log(&chain),
        Err(e) => VerifyOutcome::TamperedAt(e.record),
    }
}

fn decode_genesis(bytes: &[u8]) -> Result<Genesis, DecodeError> {
    let mut d = Decoder::new(bytes);
    let g = Genesis { algorithm: d.string()?, contract_digest: d.digest()? };
    d.finish()?;
    Ok(g)
}

fn decode_record(bytes: &[u8]) -> Result<VerdictRecord, DecodeError> {
    let mut d = Decoder::new(bytes);
    let seq_no = d.u64()?;
    let timestamp = d.u32()?;
    let input = decode_input(&mut d)?;
    let verdict = match d.u8()? {
        0 => Verdict::Compliant,
        1 => Verdict::NonCompliant,
        2 => Verdict::Info,
        tag => return Err(DecodeError::UnknownTag { what: "verdict", tag }),
    };
    let n = d.u32()?;
    let effects = (0..n).map(|_| d.string()).collect::<Result<_, _>>()?;
    let prev_hash = d.digest()?;
    let this_hash = d.digest()?;
    d.finish()?;
    Ok(VerdictRecord { seq_no, timestamp, input, verdict, effects, prev_hash, this_hash })
}

fn invalid<E: fmt::Display>(e: E) -> DecodeError {
    DecodeError::Invalid(e.to_string())
}

fn decode_input(d: &mut Decoder<'_>) -> Result<LoggedInput, DecodeError> {
    match d.u8()? {
        0 => {
            let originator = PartyId::new(d.string()?).map_err(invalid)?;
            let responder = PartyId::new(d.string()?).map_err(invalid)?;
            let op_type = d.string()?;
            let status = match d.u8()? {
                0 => Status::Success,
                1 => Status::Bizfail,
                tag => return Err(DecodeError::UnknownTag { what: "status", tag }),
            };
            Ok(LoggedInput::Event(EventRecord { originator, responder, op_type, status }))
        }
        1 => Ok(LoggedInput::Timeout(TimeoutFiring { node: NodeId::new(d.string()?), name: d.string()? })),
        2 => Ok(LoggedInput::Confirmation {
            operation: OperationId::new(d.string()?).map_err(invalid)?,
            tx_num: d.u64()?,
            address: d.string()?,
            result: d.string()?,
            late: match d.u8()? {
                0 => false,
                1 => true,
                tag => return Err(DecodeError::UnknownTag { what: "late flag", tag }),
            },
        }),
        tag => Err(DecodeError::UnknownTag { what: "input", tag }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::reference_contract;

    fn sample(n: usize) -> LogChain {
        let mut log = LogChain::for_contract(&reference_contract());
        for i in 0..n {
            let e = EventRecord::success("buyer", "store", if i % 2 == 0 { "BuyReq" } else { "GetVou" }).unwrap();
            log.append(i as Day, LoggedInput::Event(e), Verdict::Compliant, vec![format!("effect {i}")]);
        }
        log
    }

    #[test]
    fn first_record_chains_onto_genesis() {
        let log = sample(2);
        assert_eq!(log.records[0].prev_hash, log.genesis_digest());
        assert_eq!(log.records[1].prev_hash, log.records[0].this_hash);
        assert_eq!(verify_log(&log), VerifyOutcome::Ok);
    }

    #[test]
    fn byte_round_trip() {
        let log = sample(10);
        let bytes = log.to_bytes();
        assert_eq!(LogChain::from_bytes(&bytes).unwrap(), log);
        assert_eq!(verify_bytes(&bytes), VerifyOutcome::Ok);
    }

    #[test]
    fn edited_event_is_caught_at_its_record() {
        let mut log = sample(10);
        if let LoggedInput::Event(e) = &mut log.records[3].input {
            e.op_type = "Pay".into();
        }
        assert_eq!(verify_log(&log), VerifyOutcome::TamperedAt(4));
    }

    #[test]
    fn deletion_with_reindex_is_caught() {
        let mut log = sample(10);
        log.records.remove(6);
        for (i, r) in log.records.iter_mut().enumerate() {
            r.seq_no = i as u64 + 1;
        }
        assert_eq!(verify_log(&log), VerifyOutcome::TamperedAt(7));
    }

    #[test]
    fn header_damage_reports_zero() {
        let log = sample(3);
        let mut bytes = log.to_bytes();
        bytes[0] ^= 1;
        assert_eq!(verify_bytes(&bytes), VerifyOutcome::TamperedAt(0));
    }

    #[test]
    fn dump_has_one_line_per_record() {
        let log = sample(4);
        let dump = log.text_dump();
        assert_eq!(dump.lines().count(), 5);
        assert!(dump.lines().nth(1).unwrap().contains("BuyReq"));
    }
}
