//! One PASS/FAIL line per acceptance criterion. Runs without the libtest
//! harness so the lines are always printed; exits non-zero on any FAIL.

mod common;

use std::collections::BTreeSet;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use hybridcc::audit::{verify_bytes, verify_log, VerifyOutcome};
use hybridcc::chain::{payment_result, receipt_result, ChainSim, CodeId, LatencyPolicy};
use hybridcc::checker::{replay_log, Checker};
use hybridcc::contract::{
    reference_contract, Completion, ContractGraph, Effect, EventRecord, Input, Modality, Phase, Status, TimeoutFiring,
    Verdict,
};
use hybridcc::formats::verdict_xml;
use hybridcc::harness::{replay_in_process, ReplayPlan, Transcript};
use hybridcc::seqgen::{
    count, derive_retry_bound, enumerate, parse_token_list, CounterScope, FailureModel, RightExpiry, SequenceSet,
};
use hybridcc::Canonical;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

const SEQ1_6: [&str; 6] = [
    "{BuyReq, Rej}",
    "{BuyReq, Conf, Canc}",
    "{BuyReq, Conf, Pay}",
    "{BuyReq, RejConfTo}",
    "{BuyReq, Conf, PayCancTo}",
    "{BuyReq, Conf, Pay, GetVou}",
];
const SEQ130: &str = "{BuyReq(S), Rej(BF), Conf(BF), Conf(S), Pay(BF), Canc(BF), Pay(S), GetVou(S)}";
const SEQ150: &str = "{BuyReq(S), Rej(BF), Conf(BF), Conf(S), Pay(BF), Canc(BF), PayCancTO}";

fn sequence_counts() -> Outcome {
    let g = reference_contract();
    let start = Instant::now();
    let six = enumerate(&g, &FailureModel::NoFailures).map_err(|e| e.to_string())?;
    let got: BTreeSet<Vec<String>> = six.sequences.iter().map(|s| s.tokens()).collect();
    let want: BTreeSet<Vec<String>> = SEQ1_6.iter().map(|s| parse_token_list(s)).collect();
    ensure(six.len() == 6 && got == want, format!("no-failure set is {got:?}"))?;

    let n =
        derive_retry_bound(&g, 246, CounterScope::PerOperation, RightExpiry::Explicit).map_err(|e| e.to_string())?;
    let set = enumerate(&g, &FailureModel::bizfail(n)).map_err(|e| e.to_string())?;
    ensure(set.len() == 246, format!("bizfail set has {} sequences", set.len()))?;
    let p130 = set.position(&parse_token_list(SEQ130)).ok_or("seq130 missing")?;
    let p150 = set.position(&parse_token_list(SEQ150)).ok_or("seq150 missing")?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(1), format!("took {elapsed:?}"))?;
    Ok(format!("6 and 246 sequences with N*={n}; seq130 at #{p130}, seq150 at #{p150}; {elapsed:.0?}"))
}

fn seq6(g: &ContractGraph) -> Result<(usize, SequenceSet), String> {
    let set = enumerate(g, &FailureModel::NoFailures).map_err(|e| e.to_string())?;
    let i = set.position(&parse_token_list(SEQ1_6[5])).ok_or("seq6 missing")?;
    Ok((i, set))
}

fn last_response_body(t: &Transcript) -> Option<String> {
    let text = t.render();
    let start = text.rfind(hybridcc::formats::BEGIN_RESPONSE)? + hybridcc::formats::BEGIN_RESPONSE.len() + 1;
    let end = text.rfind(hybridcc::formats::END_RESPONSE)?;
    Some(text[start..end].trim_end_matches('\n').to_owned())
}

fn run_a() -> Outcome {
    let g = reference_contract();
    let (i, set) = seq6(&g)?;
    let plan = ReplayPlan::for_contract(&g, LatencyPolicy::Immediate);
    let t = replay_in_process(&g, i, &set.sequences[i - 1], &plan).map_err(|e| e.to_string())?;
    ensure(t.verdicts() == [Some(true); 4], format!("verdicts {:?}", t.verdicts()))?;
    let body = last_response_body(&t).ok_or("no response block")?;
    let expected = "<result>\n    <contractCompliant>true</contractCompliant>\n</result>";
    ensure(body == expected && verdict_xml(true) == expected, format!("final body {body:?}"))?;
    Ok("true, true, true, true; final body byte-identical".into())
}

fn run_b() -> Outcome {
    let g = reference_contract();
    let (i, set) = seq6(&g)?;
    let mut plan = ReplayPlan::for_contract(&g, LatencyPolicy::FixedTicks(plan_gap(&g) + 1));
    plan.retry_after_settle = true;
    let t = replay_in_process(&g, i, &set.sequences[i - 1], &plan).map_err(|e| e.to_string())?;
    let want = [Some(true), Some(true), Some(true), Some(false)];
    ensure(t.verdicts() == want, format!("verdicts {:?}", t.verdicts()))?;
    let body = last_response_body(&t).ok_or("no response block")?;
    ensure(t.retry_verdicts() == [Some(true)], format!("retry {:?}", t.retry_verdicts()))?;
    ensure(body.contains("<contractCompliant>true</contractCompliant>"), "retry body")?;
    Ok(format!("true, true, true, false at latency {}; retried GetVou true", plan.latency_label()))
}

trait Label {
    fn latency_label(&self) -> String;
}

impl Label for ReplayPlan {
    fn latency_label(&self) -> String {
        hybridcc::harness::latency_label(&self.latency)
    }
}

fn plan_gap(g: &ContractGraph) -> u64 {
    ReplayPlan::for_contract(g, LatencyPolicy::Immediate).gap_ticks
}

fn ev(o: &str, r: &str, t: &str) -> EventRecord {
    EventRecord::success(o, r, t).unwrap()
}

/// Advance one day at a time and return the first day on which the
/// instance has ended, with its completion.
fn first_end_day(c: &Checker, limit: u32) -> Option<(u32, Completion)> {
    for _ in 0..limit {
        c.advance_clock(1).ok()?;
        if let Some(done) = c.state().completion() {
            return Some((c.now(), done));
        }
    }
    None
}

fn fresh_checker() -> Checker {
    Checker::standalone(reference_contract(), Arc::new(Mutex::new(ChainSim::default()))).unwrap()
}

fn timeouts() -> Outcome {
    let c = fresh_checker();
    c.submit_event(ev("buyer", "store", "BuyReq")).unwrap();
    let s4 = first_end_day(&c, 20);
    ensure(s4 == Some((4, Completion::Abnormal)), format!("seq4 ended {s4:?}"))?;

    let c = fresh_checker();
    c.submit_event(ev("buyer", "store", "BuyReq")).unwrap();
    c.submit_event(ev("store", "buyer", "Conf")).unwrap();
    let s5 = first_end_day(&c, 20);
    ensure(s5 == Some((8, Completion::Abnormal)), format!("seq5 ended {s5:?}"))?;

    // Voucher granted on day 2; expiry lands six days later.
    let c = fresh_checker();
    c.submit_event(ev("buyer", "store", "BuyReq")).unwrap();
    c.submit_event(ev("store", "buyer", "Conf")).unwrap();
    c.advance_clock(2).unwrap();
    c.submit_event(ev("buyer", "store", "Pay")).unwrap();
    let vou = first_end_day(&c, 20);
    ensure(vou == Some((8, Completion::Normal)), format!("voucher ended {vou:?}"))?;

    // The same through the replay schedule.
    let g = reference_contract();
    let set = enumerate(&g, &FailureModel::NoFailures).unwrap();
    let plan = ReplayPlan::for_contract(&g, LatencyPolicy::Immediate);
    for s in [SEQ1_6[3], SEQ1_6[4]] {
        let (i, seq) = set.select(s).unwrap();
        let t = replay_in_process(&g, i, seq, &plan).map_err(|e| e.to_string())?;
        ensure(t.completion == Some(Completion::Abnormal) && t.matches(), format!("{s} replay: {:?}", t.completion))?;
    }
    Ok("RejConfTo on day 4, PayCancTo on day 8, voucher lapse 6 days after grant (Normal)".into())
}

fn oracle() -> Outcome {
    let start = Instant::now();
    let g = reference_contract();
    let ops = ["BuyReq", "Rej", "Conf", "Pay", "Canc", "GetVou"];
    let dirs = [("buyer", "store"), ("store", "buyer")];
    let letters: Vec<(&str, &str, &str)> =
        ops.iter().flat_map(|op| dirs.iter().map(move |(o, r)| (*o, *r, *op))).collect();

    let mut success_paths = BTreeSet::new();
    let mut timeout_paths = BTreeSet::new();
    let mut frontier: Vec<Vec<usize>> = vec![vec![]];
    for _len in 1..=4 {
        let mut next = Vec::new();
        for prefix in &frontier {
            for l in 0..letters.len() {
                let mut word = prefix.clone();
                word.push(l);
                let c = fresh_checker();
                let ok = word.iter().all(|&i| {
                    let (o, r, t) = letters[i];
                    c.submit_event(ev(o, r, t)) == Ok(Verdict::Compliant)
                });
                if !ok {
                    continue;
                }
                let tokens: Vec<String> = word.iter().map(|&i| letters[i].2.to_owned()).collect();
                let state = c.state();
                let right_only =
                    matches!(&state.phase, Phase::Node(n) if g.node(n).unwrap().modality == Modality::Right);
                if state.is_terminal() || right_only {
                    success_paths.insert(tokens.clone());
                }
                if let Phase::Node(n) = &state.phase {
                    let node = g.node(n).unwrap();
                    if node.modality == Modality::Obligation {
                        let fired = c.advance_clock(node.deadline.get() + 1).unwrap();
                        let mut with_timeout = tokens.clone();
                        with_timeout.extend(fired.iter().map(|f| f.name.clone()));
                        timeout_paths.insert(with_timeout);
                    }
                }
                next.push(word);
            }
        }
        frontier = next;
    }
    let set = enumerate(&g, &FailureModel::NoFailures).unwrap();
    let (want_timeout, want_success): (BTreeSet<Vec<String>>, BTreeSet<Vec<String>>) =
        set.sequences.iter().map(|s| s.tokens()).partition(|t| t.last().unwrap().ends_with("To"));
    ensure(success_paths == want_success, format!("brute force success paths {success_paths:?}"))?;
    ensure(timeout_paths == want_timeout, format!("brute force timeout paths {timeout_paths:?}"))?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(5), format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} success paths and {} timeout paths agree with the enumeration; {elapsed:.0?}",
        success_paths.len(),
        timeout_paths.len()
    ))
}

fn determinism() -> Outcome {
    let g = reference_contract();
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let events = [
        ev("buyer", "store", "BuyReq"),
        ev("store", "buyer", "Conf"),
        ev("buyer", "store", "Pay"),
        ev("buyer", "store", "GetVou"),
    ];
    let mut outcomes = BTreeSet::new();
    let mut last_bytes = Vec::new();
    for run in 0..1000 {
        let latency = LatencyPolicy::FixedTicks(rng.random_range(0..4));
        let chain = Arc::new(Mutex::new(ChainSim::new(latency)));
        let c = Checker::standalone(g.clone(), chain.clone()).unwrap();
        for e in &events {
            for _ in 0..rng.random_range(0..3) {
                match rng.random_range(0..3) {
                    0 => {
                        chain.lock().unwrap().tick(1).unwrap();
                    }
                    1 => {
                        c.process_inbox();
                    }
                    _ => {}
                }
            }
            let _ = c.submit_event(e.clone());
        }
        if rng.random_bool(0.5) {
            chain.lock().unwrap().tick(5).unwrap();
            let _ = c.submit_event(events[3].clone());
        }
        let log = c.log();
        replay_log(&g, &log.records).map_err(|e| format!("run {run}: {e}"))?;
        ensure(verify_log(&log) == VerifyOutcome::Ok, format!("run {run}: chain broken"))?;
        let getvou: Vec<Verdict> = log
            .records
            .iter()
            .filter(|r| matches!(&r.input, hybridcc::audit::LoggedInput::Event(e) if e.op_type == "GetVou"))
            .map(|r| r.verdict)
            .collect();
        outcomes.insert(format!("{getvou:?}"));
        last_bytes = log.to_bytes();
    }

    let mut detected = 0;
    for i in 0..100 {
        let mut bytes = last_bytes.clone();
        let pos = rng.random_range(0..bytes.len());
        bytes[pos] ^= rng.random_range(1..=255u8);
        if verify_bytes(&bytes) != VerifyOutcome::Ok {
            detected += 1;
        } else {
            return Err(format!("mutation {i} at byte {pos} undetected"));
        }
    }
    Ok(format!(
        "1000 interleavings replay and verify ({} distinct GetVou outcomes); {detected}/100 mutations detected",
        outcomes.len()
    ))
}

fn properties() -> Outcome {
    let mut graphs: Vec<ContractGraph> = (0..500u64).map(|s| common::random_graph(s, 5)).collect();
    graphs.push(reference_contract());
    let mut sequences_checked = 0usize;
    let mut rng = StdRng::seed_from_u64(7);
    for g in &graphs {
        ensure(g.validate().is_valid(), format!("{}: generator produced invalid graph: {}", g.name, g.validate()))?;

        // Prefix closure.
        for fm in [FailureModel::NoFailures, FailureModel::bizfail(1)] {
            if count(g, &fm).unwrap() > 3000 {
                continue;
            }
            let set = enumerate(g, &fm).unwrap();
            for s in &set.sequences {
                for k in 1..=s.steps.len() {
                    if let Err(i) = common::replay_steps(g, &s.steps[..k]) {
                        return Err(format!("{}: prefix {} of {} fails at step {}", g.name, k, s, i + 1));
                    }
                }
                sequences_checked += 1;
            }
        }

        // Timeout law and verdict/effect coupling on random walks.
        let mut state = g.initial_state().unwrap();
        let mut day = 0;
        for _ in 0..12 {
            if state.is_terminal() {
                break;
            }
            if let Phase::Node(n) = &state.phase {
                let node = g.node(n).unwrap();
                let due = day + node.deadline.get() + 1;
                let f = Input::Timeout(TimeoutFiring { node: node.id.clone(), name: node.timeout_name() });
                let r = g.step(&state, due.max(day), &f).unwrap();
                let want =
                    if node.modality == Modality::Obligation { Completion::Abnormal } else { Completion::Normal };
                ensure(
                    r.effects.last() == Some(&Effect::Complete(want)),
                    format!("{}: timeout law at {}", g.name, node.id),
                )?;
            }
            let op = &g.operations[rng.random_range(0..g.operations.len())];
            let (o, r) =
                if rng.random_bool(0.5) { (&g.parties[0], &g.parties[1]) } else { (&g.parties[1], &g.parties[0]) };
            let status = if rng.random_bool(0.2) { Status::Bizfail } else { Status::Success };
            let input = Input::Event(EventRecord {
                originator: o.clone(),
                responder: r.clone(),
                op_type: op.id.to_string(),
                status,
            });
            let res = g.step(&state, day, &input).unwrap();
            let again = g.step(&state, day, &input).unwrap();
            ensure(res.canonical_bytes() == again.canonical_bytes(), "step is not deterministic")?;
            if res.verdict == Verdict::NonCompliant {
                ensure(res.effects.is_empty(), "non-compliant verdict with effects")?;
                ensure(
                    res.next_state.entries == state.entries && res.next_state.phase == state.phase,
                    "non-compliant verdict changed state",
                )?;
            }
            state = res.next_state;
            for e in res.effects.clone() {
                if let Effect::ForwardOnChain { operation, .. } = e {
                    state = g.step(&state, day, &Input::Confirmation { operation }).unwrap().next_state;
                }
            }
            day += rng.random_range(0..2);
        }
    }

    // Chain result strings depend only on their argument.
    let mut sim = ChainSim::new(LatencyPolicy::FixedTicks(3));
    let a = sim.deploy(CodeId::CollectPayment);
    for _ in 0..500 {
        let pay: u64 = rng.random();
        let tx = rng.random_range(1..u64::MAX);
        let r1 = sim.submit_payment(&a, pay).unwrap().result;
        sim.tick(rng.random_range(1..4)).unwrap();
        let r2 = sim.submit_payment(&a, pay).unwrap().result;
        ensure(r1 == r2 && r1 == payment_result(pay) && r1 == format!("{pay}Received"), "payment result not pure")?;
        ensure(sim.get_receipt(&a, tx).unwrap() == receipt_result(tx), "receipt not pure")?;
    }
    Ok(format!("{} graphs, {sequences_checked} sequences, 500 chain samples", graphs.len()))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 7] = [
        ("sequence counts", sequence_counts),
        ("transcript run (a)", run_a),
        ("transcript run (b)", run_b),
        ("timeout semantics", timeouts),
        ("oracle equivalence", oracle),
        ("determinism and replay", determinism),
        ("property suite", properties),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
