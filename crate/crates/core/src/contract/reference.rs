use std::collections::BTreeMap;

use super::*;

pub const REFERENCE_NAME: &str = "dataseller";

fn op(name: &str) -> OperationId {
    OperationId::new(name).expect("literal operation name")
}

fn party(name: &str) -> PartyId {
    PartyId::new(name).expect("literal party name")
}

fn days(d: u32) -> Deadline {
    Deadline::days(d).expect("literal deadline")
}

/// The buyer/store data purchase contract.
///
/// ```text
/// buyer: Right BuyReq ........................ -> N1
/// N1  store  Obligation {Rej, Conf}  3 days    Rej -> End(Normal), Conf -> N2, timeout Abnormal
/// N2  buyer  Obligation {Pay, Canc}  7 days    Pay (on-chain) -> N3, Canc -> End(Normal), timeout Abnormal
/// N3  buyer  Right {GetVou}          5 days    GetVou -> End(Normal), timeout Normal
/// ```
pub fn reference_contract() -> ContractGraph {
    let buyer = party("buyer");
    let store = party("store");
    let node =
        |id: &str, holder: &PartyId, modality, choices: &[&str], deadline, edges: &[(&str, Target)], on_timeout| {
            OrExecNode {
                id: NodeId::new(id),
                holder: holder.clone(),
                modality,
                choices: choices.iter().map(|c| op(c)).collect(),
                deadline: days(deadline),
                on_success: edges.iter().map(|(o, t)| (op(o), t.clone())).collect::<BTreeMap<_, _>>(),
                on_timeout: Some(on_timeout),
            }
        };
    let to = |n: &str| Target::Node(NodeId::new(n));
    let normal = Target::End(Completion::Normal);

    ContractGraph {
        name: REFERENCE_NAME.to_owned(),
        parties: [buyer.clone(), store.clone()],
        operations: [
            ("BuyReq", Venue::OffChain),
            ("Rej", Venue::OffChain),
            ("Conf", Venue::OffChain),
            ("Pay", Venue::OnChain),
            ("Canc", Venue::OffChain),
            ("GetVou", Venue::OffChain),
        ]
        .into_iter()
        .map(|(n, venue)| Operation { id: op(n), venue })
        .collect(),
        opening: Opening { holder: buyer.clone(), operation: op("BuyReq"), next: to("N1") },
        nodes: vec![
            node(
                "N1",
                &store,
                Modality::Obligation,
                &["Rej", "Conf"],
                3,
                &[("Rej", normal.clone()), ("Conf", to("N2"))],
                Completion::Abnormal,
            ),
            node(
                "N2",
                &buyer,
                Modality::Obligation,
                &["Pay", "Canc"],
                7,
                &[("Pay", to("N3")), ("Canc", normal.clone())],
                Completion::Abnormal,
            ),
            node("N3", &buyer, Modality::Right, &["GetVou"], 5, &[("GetVou", normal)], Completion::Normal),
        ],
    }
}
