use std::sync::{Arc, Mutex};
use std::thread;

use hybridcc::audit::{verify_log, LoggedInput, VerifyOutcome};
use hybridcc::chain::{ChainSim, LatencyPolicy};
use hybridcc::checker::{replay_log, Checker};
use hybridcc::contract::{reference_contract, EventRecord, Verdict};

#[test]
fn concurrent_submissions_are_totally_ordered() {
    for round in 0..50 {
        let chain = Arc::new(Mutex::new(ChainSim::new(LatencyPolicy::FixedTicks(round % 3))));
        let checker = Arc::new(Checker::standalone(reference_contract(), chain.clone()).unwrap());
        checker.submit_event(EventRecord::success("buyer", "store", "BuyReq").unwrap()).unwrap();
        let mut handles = Vec::new();
        for (o, r, t) in [
            ("store", "buyer", "Conf"),
            ("store", "buyer", "Rej"),
            ("buyer", "store", "Pay"),
            ("buyer", "store", "GetVou"),
        ] {
            let c = checker.clone();
            let chain = chain.clone();
            handles.push(thread::spawn(move || {
                chain.lock().unwrap().tick(1).unwrap();
                let _ = c.submit_event(EventRecord::success(o, r, t).unwrap());
            }));
        }
        for h in handles {
            h.join().unwrap();
        }
        let log = checker.log();
        let seqs: Vec<u64> = log.records.iter().map(|r| r.seq_no).collect();
        assert_eq!(seqs, (1..=log.len() as u64).collect::<Vec<_>>());
        assert_eq!(verify_log(&log), VerifyOutcome::Ok);
        replay_log(&reference_contract(), &log.records).unwrap();
        // Exactly one of Conf/Rej can win the N1 obligation.
        let won = log
            .records
            .iter()
            .filter(|r| r.verdict == Verdict::Compliant)
            .filter(|r| matches!(&r.input, LoggedInput::Event(e) if e.op_type == "Conf" || e.op_type == "Rej"))
            .count();
        assert_eq!(won, 1);
    }
}

#[test]
fn no_verdicts_after_completion() {
    let checker = Checker::standalone(reference_contract(), Arc::new(Mutex::new(ChainSim::default()))).unwrap();
    checker.submit_event(EventRecord::success("buyer", "store", "BuyReq").unwrap()).unwrap();
    checker.advance_clock(4).unwrap();
    let len = checker.log().len();
    for t in ["Rej", "Conf", "Pay"] {
        assert!(checker.submit_event(EventRecord::success("store", "buyer", t).unwrap()).is_err());
    }
    assert!(checker.advance_clock(30).unwrap().is_empty());
    assert_eq!(checker.log().len(), len);
}
