use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ContractGraph, Modality, NodeId, Target};

/// A single structural defect of a contract graph.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Finding {
    SameParties,
    DuplicateOperation(String),
    UnknownParty { context: String, party: String },
    UnknownOperation { context: String, operation: String },
    DuplicateNode(NodeId),
    NoChoices(NodeId),
    TooManyChoices(NodeId),
    DuplicateChoice { node: NodeId, operation: String },
    MissingSuccessEdge { node: NodeId, operation: String },
    ExtraSuccessEdge { node: NodeId, operation: String },
    DanglingTarget { context: String, target: NodeId },
    MissingTimeout(NodeId),
    TimeoutMismatch(NodeId),
    UnsupportedModality(NodeId),
    Unreachable(NodeId),
    NoPathToEnd(NodeId),
    Cycle(NodeId),
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::SameParties => write!(f, "both parties have the same name"),
            Finding::DuplicateOperation(op) => write!(f, "operation {op} declared twice"),
            Finding::UnknownParty { context, party } => write!(f, "{context}: unknown party {party}"),
            Finding::UnknownOperation { context, operation } => {
                write!(f, "{context}: operation {operation} not in alphabet")
            }
            Finding::DuplicateNode(n) => write!(f, "node {n} declared twice"),
            Finding::NoChoices(n) => write!(f, "node {n} offers no operations"),
            Finding::TooManyChoices(n) => write!(f, "node {n} offers more than two operations"),
            Finding::DuplicateChoice { node, operation } => write!(f, "node {node} lists {operation} twice"),
            Finding::MissingSuccessEdge { node, operation } => {
                write!(f, "node {node} has no success edge for {operation}")
            }
            Finding::ExtraSuccessEdge { node, operation } => {
                write!(f, "node {node} has a success edge for non-choice {operation}")
            }
            Finding::DanglingTarget { context, target } => write!(f, "{context}: no node {target}"),
            Finding::MissingTimeout(n) => write!(f, "node {n} has no timeout edge"),
            Finding::TimeoutMismatch(n) => write!(f, "node {n} timeout completion contradicts its modality"),
            Finding::UnsupportedModality(n) => write!(f, "node {n} is a prohibition"),
            Finding::Unreachable(n) => write!(f, "node {n} is unreachable"),
            Finding::NoPathToEnd(n) => write!(f, "node {n} cannot reach an end"),
            Finding::Cycle(n) => write!(f, "node {n} lies on a cycle"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.findings.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.findings.is_empty() {
            return f.write_str("valid");
        }
        let parts: Vec<String> = self.findings.iter().map(Finding::to_string).collect();
        f.write_str(&parts.join("; "))
    }
}

pub(super) fn validate(g: &ContractGraph) -> ValidationReport {
    let mut out = Vec::new();

    if g.parties[0] == g.parties[1] {
        out.push(Finding::SameParties);
    }
    let mut alphabet = BTreeSet::new();
    for op in &g.operations {
        if !alphabet.insert(op.id.as_str()) {
            out.push(Finding::DuplicateOperation(op.id.to_string()));
        }
    }
    let is_party = |p: &super::PartyId| g.parties.contains(p);

    let mut ids = BTreeSet::new();
    for n in &g.nodes {
        if !ids.insert(&n.id) {
            out.push(Finding::DuplicateNode(n.id.clone()));
        }
    }
    let check_target = |out: &mut Vec<Finding>, context: String, t: &Target| {
        if let Target::Node(id) = t {
            if !ids.contains(id) {
                out.push(Finding::DanglingTarget { context, target: id.clone() });
            }
        }
    };

    if !is_party(&g.opening.holder) {
        out.push(Finding::UnknownParty { context: "opening".into(), party: g.opening.holder.to_string() });
    }
    if !alphabet.contains(g.opening.operation.as_str()) {
        out.push(Finding::UnknownOperation { context: "opening".into(), operation: g.opening.operation.to_string() });
    }
    check_target(&mut out, "opening".into(), &g.opening.next);

    for n in &g.nodes {
        let ctx = format!("node {}", n.id);
        if !is_party(&n.holder) {
            out.push(Finding::UnknownParty { context: ctx.clone(), party: n.holder.to_string() });
        }
        if n.modality == Modality::Prohibition {
            out.push(Finding::UnsupportedModality(n.id.clone()));
        }
        match n.choices.len() {
            0 => out.push(Finding::NoChoices(n.id.clone())),
            1 | 2 => {}
            _ => out.push(Finding::TooManyChoices(n.id.clone())),
        }
        let mut seen = BTreeSet::new();
        for c in &n.choices {
            if !seen.insert(c) {
                out.push(Finding::DuplicateChoice { node: n.id.clone(), operation: c.to_string() });
            }
            if !alphabet.contains(c.as_str()) {
                out.push(Finding::UnknownOperation { context: ctx.clone(), operation: c.to_string() });
            }
            if !n.on_success.contains_key(c) {
                out.push(Finding::MissingSuccessEdge { node: n.id.clone(), operation: c.to_string() });
            }
        }
        for (op, t) in &n.on_success {
            if !seen.contains(op) {
                out.push(Finding::ExtraSuccessEdge { node: n.id.clone(), operation: op.to_string() });
            }
            check_target(&mut out, format!("{ctx} on {op}"), t);
        }
        match n.on_timeout {
            None => out.push(Finding::MissingTimeout(n.id.clone())),
            Some(c) if c != super::Completion::on_expiry_of(n.modality) => {
                out.push(Finding::TimeoutMismatch(n.id.clone()))
            }
            Some(_) => {}
        }
    }

    // Graph-shape checks only make sense once node ids are unique.
    if ids.len() == g.nodes.len() {
        shape(g, &mut out);
    }
    out.sort();
    out.dedup();
    ValidationReport { findings: out }
}

fn shape(g: &ContractGraph, out: &mut Vec<Finding>) {
    let succ: BTreeMap<&NodeId, Vec<&NodeId>> = g
        .nodes
        .iter()
        .map(|n| {
            let next = n
                .on_success
                .values()
                .filter_map(|t| match t {
                    Target::Node(id) => g.node(id).map(|m| &m.id),
                    Target::End(_) => None,
                })
                .collect();
            (&n.id, next)
        })
        .collect();

    let mut reachable = BTreeSet::new();
    let mut stack: Vec<&NodeId> = match &g.opening.next {
        Target::Node(id) => g.node(id).map(|n| &n.id).into_iter().collect(),
        Target::End(_) => Vec::new(),
    };
    while let Some(id) = stack.pop() {
        if reachable.insert(id) {
            stack.extend(succ[id].iter().copied());
        }
    }
    for n in &g.nodes {
        if !reachable.contains(&n.id) {
            out.push(Finding::Unreachable(n.id.clone()));
        }
    }

    // Fixpoint: a node reaches an end if some success edge does.
    let mut ends = BTreeSet::new();
    loop {
        let before = ends.len();
        for n in &g.nodes {
            let ok = n.on_success.values().any(|t| match t {
                Target::End(_) => true,
                Target::Node(id) => ends.contains(id),
            });
            if ok {
                ends.insert(n.id.clone());
            }
        }
        if ends.len() == before {
            break;
        }
    }
    for n in &g.nodes {
        if !ends.contains(&n.id) {
            out.push(Finding::NoPathToEnd(n.id.clone()));
        }
    }

    // Colour DFS for cycles.
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        White,
        Grey,
        Black,
    }
    let mut mark: BTreeMap<&NodeId, Mark> = succ.keys().map(|k| (*k, Mark::White)).collect();
    fn visit<'a>(
        id: &'a NodeId,
        succ: &BTreeMap<&'a NodeId, Vec<&'a NodeId>>,
        mark: &mut BTreeMap<&'a NodeId, Mark>,
        out: &mut Vec<Finding>,
    ) {
        mark.insert(id, Mark::Grey);
        for next in &succ[id] {
            match mark[next] {
                Mark::Grey => out.push(Finding::Cycle((*next).clone())),
                Mark::White => visit(next, succ, mark, out),
                Mark::Black => {}
            }
        }
        mark.insert(id, Mark::Black);
    }
    let keys: Vec<&NodeId> = succ.keys().copied().collect();
    for id in keys {
        if mark[id] == Mark::White {
            visit(id, &succ, &mut mark, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use super::Finding;

    #[test]
    fn reference_contract_is_valid() {
        let r = reference_contract().validate();
        assert!(r.is_valid(), "{r}");
    }

    #[test]
    fn detects_missing_timeout_and_unreachable_node() {
        let mut g = reference_contract();
        g.nodes[1].on_timeout = None;
        g.nodes[0].on_success.insert("Conf".parse().unwrap(), Target::End(Completion::Normal));
        let r = g.validate();
        assert!(r.findings.contains(&Finding::MissingTimeout(NodeId::new("N2"))));
        assert!(r.findings.contains(&Finding::Unreachable(NodeId::new("N2"))));
        assert!(r.findings.contains(&Finding::Unreachable(NodeId::new("N3"))));
        assert!(matches!(g.initial_state(), Err(ModelError::InvalidGraph(_))));
    }

    #[test]
    fn detects_cycle_without_exit() {
        let mut g = reference_contract();
        g.nodes[2].on_success.insert("GetVou".parse().unwrap(), Target::Node(NodeId::new("N2")));
        g.nodes[1].on_success.insert("Canc".parse().unwrap(), Target::Node(NodeId::new("N3")));
        let r = g.validate();
        assert!(r.findings.iter().any(|f| matches!(f, Finding::Cycle(_))));
        assert!(r.findings.contains(&Finding::NoPathToEnd(NodeId::new("N3"))));
    }

    #[test]
    fn detects_timeout_modality_mismatch_and_dangling_target() {
        let mut g = reference_contract();
        g.nodes[2].on_timeout = Some(Completion::Abnormal);
        g.nodes[0].on_success.insert("Rej".parse().unwrap(), Target::Node(NodeId::new("N9")));
        let r = g.validate();
        assert!(r.findings.contains(&Finding::TimeoutMismatch(NodeId::new("N3"))));
        assert!(r.findings.iter().any(|f| matches!(f, Finding::DanglingTarget { .. })));
    }
}
