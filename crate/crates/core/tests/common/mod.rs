#![allow(dead_code)]

use std::collections::BTreeMap;

use hybridcc::contract::{
    Completion, ContractGraph, Deadline, Effect, Input, Modality, NodeId, Opening, Operation, OperationId, OrExecNode,
    PartyId, RopState, Target, Venue, Verdict,
};
use hybridcc::seqgen::Step;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const PARTY_NAMES: [&str; 6] = ["buyer", "store", "alice", "bob", "bank", "courier"];

/// Random valid acyclic contract graph with up to `max_nodes` nodes.
pub fn random_graph(seed: u64, max_nodes: usize) -> ContractGraph {
    let mut rng = StdRng::seed_from_u64(seed);
    let a = rng.random_range(0..PARTY_NAMES.len());
    let b = (a + rng.random_range(1..PARTY_NAMES.len())) % PARTY_NAMES.len();
    let parties = [PartyId::new(PARTY_NAMES[a]).unwrap(), PartyId::new(PARTY_NAMES[b]).unwrap()];

    let mut operations: Vec<Operation> = Vec::new();
    let fresh_op = |rng: &mut StdRng, operations: &mut Vec<Operation>, avoid: &[OperationId]| -> OperationId {
        let reusable: Vec<OperationId> =
            operations.iter().map(|o| o.id.clone()).filter(|id| !avoid.contains(id)).collect();
        if !reusable.is_empty() && rng.random_bool(0.2) {
            return reusable[rng.random_range(0..reusable.len())].clone();
        }
        let id = OperationId::new(format!("Op{}", operations.len())).unwrap();
        let venue = if rng.random_bool(0.2) { Venue::OnChain } else { Venue::OffChain };
        operations.push(Operation { id: id.clone(), venue });
        id
    };

    let opening_op = OperationId::new("Start").unwrap();
    operations.push(Operation { id: opening_op.clone(), venue: Venue::OffChain });

    let n = rng.random_range(1..=max_nodes);
    let mut nodes: Vec<OrExecNode> = Vec::new();
    // Free success slots: (node index, choice index).
    let mut free: Vec<(usize, usize)> = Vec::new();
    let mut targets: BTreeMap<(usize, usize), Target> = BTreeMap::new();
    for i in 0..n {
        if i > 0 {
            if free.is_empty() {
                break;
            }
            let slot = free.swap_remove(rng.random_range(0..free.len()));
            targets.insert(slot, Target::Node(NodeId::new(format!("N{}", i + 1))));
        }
        let modality = if rng.random_bool(0.5) { Modality::Obligation } else { Modality::Right };
        let k = rng.random_range(1..=2);
        let mut choices = Vec::new();
        for _ in 0..k {
            let mut avoid = choices.clone();
            avoid.push(opening_op.clone());
            choices.push(fresh_op(&mut rng, &mut operations, &avoid));
        }
        for c in 0..k {
            free.push((i, c));
        }
        nodes.push(OrExecNode {
            id: NodeId::new(format!("N{}", i + 1)),
            holder: parties[rng.random_range(0..2)].clone(),
            modality,
            choices,
            deadline: Deadline::days(rng.random_range(1..=7)).unwrap(),
            on_success: BTreeMap::new(),
            on_timeout: Some(Completion::on_expiry_of(modality)),
        });
    }
    for slot in free {
        let c = if rng.random_bool(0.7) { Completion::Normal } else { Completion::Abnormal };
        targets.insert(slot, Target::End(c));
    }
    for ((i, c), t) in targets {
        let op = nodes[i].choices[c].clone();
        nodes[i].on_success.insert(op, t);
    }

    ContractGraph {
        name: format!("random{seed}"),
        parties: parties.clone(),
        operations,
        opening: Opening {
            holder: parties[rng.random_range(0..2)].clone(),
            operation: opening_op,
            next: Target::Node(NodeId::new("N1")),
        },
        nodes,
    }
}

/// Step through `steps` with immediate confirmations and timeouts fired
/// one day past their deadline. Returns the final state, or the index of
/// the first step that was not accepted.
pub fn replay_steps(g: &ContractGraph, steps: &[Step]) -> Result<RopState, usize> {
    let mut state = g.initial_state().map_err(|_| 0usize)?;
    let mut day = 0;
    for (i, step) in steps.iter().enumerate() {
        let input = match step {
            Step::Op { .. } => Input::Event(step.event().unwrap()),
            Step::Timeout { node, name, .. } => {
                let exp =
                    state.entries.iter().find(|e| e.node.as_ref() == Some(node)).and_then(|e| e.expires_at).ok_or(i)?;
                day = day.max(exp + 1);
                Input::Timeout(hybridcc::contract::TimeoutFiring { node: node.clone(), name: name.clone() })
            }
        };
        let r = g.step(&state, day, &input).map_err(|_| i)?;
        if r.verdict == Verdict::NonCompliant {
            return Err(i);
        }
        state = r.next_state;
        for e in &r.effects {
            if let Effect::ForwardOnChain { operation, .. } = e {
                state = g
                    .step(&state, day, &Input::Confirmation { operation: operation.clone() })
                    .map_err(|_| i)?
                    .next_state;
            }
        }
    }
    Ok(state)
}
