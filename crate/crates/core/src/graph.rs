//! Basis labels, ready/realized classification, Hamiltonian scopes and
//! their truncation, and the launch of a chosen ready component.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scheme::RabiOnset;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    A0,
    A1,
    A2,
}

impl Level {
    pub fn index(self) -> usize {
        match self {
            Level::A0 => 0,
            Level::A1 => 1,
            Level::A2 => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Level> {
        match i {
            0 => Some(Level::A0),
            1 => Some(Level::A1),
            2 => Some(Level::A2),
            _ => None,
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.index())
    }
}

/// Photon channel: the fast 1-0 transition or the slow 2-0 transition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Strong,
    Weak,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Strong => "strong",
            Channel::Weak => "weak",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strong" => Ok(Channel::Strong),
            "weak" => Ok(Channel::Weak),
            other => Err(format!("unknown channel `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmissionTag {
    pub channel: Channel,
    pub time: f64,
}

struct HistoryNode {
    tag: EmissionTag,
    len: usize,
    parent: EmissionHistory,
}

/// Persistent, append-only list of emission tags. Cloning and appending
/// are O(1); labels of one trajectory share their common prefix.
#[derive(Clone, Default)]
pub struct EmissionHistory(Option<Arc<HistoryNode>>);

impl EmissionHistory {
    pub fn new() -> Self {
        EmissionHistory(None)
    }

    pub fn len(&self) -> usize {
        self.0.as_ref().map_or(0, |n| n.len)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_none()
    }

    pub fn last(&self) -> Option<EmissionTag> {
        self.0.as_ref().map(|n| n.tag)
    }

    pub fn push(&self, tag: EmissionTag) -> Self {
        EmissionHistory(Some(Arc::new(HistoryNode {
            tag,
            len: self.len() + 1,
            parent: self.clone(),
        })))
    }

    /// History without its last tag.
    pub fn parent(&self) -> Self {
        self.0.as_ref().map_or_else(EmissionHistory::new, |n| n.parent.clone())
    }

    /// Tags in emission order.
    pub fn to_vec(&self) -> Vec<EmissionTag> {
        let mut out = Vec::with_capacity(self.len());
        let mut cur = self.0.as_ref();
        while let Some(node) = cur {
            out.push(node.tag);
            cur = node.parent.0.as_ref();
        }
        out.reverse();
        out
    }

    fn ptr_eq(&self, other: &Self) -> bool {
        match (&self.0, &other.0) {
            (None, None) => true,
            (Some(a), Some(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl PartialEq for EmissionHistory {
    fn eq(&self, other: &Self) -> bool {
        let (mut a, mut b) = (self.clone(), other.clone());
        loop {
            if a.ptr_eq(&b) {
                return true;
            }
            if a.len() != b.len() || a.last() != b.last() {
                return false;
            }
            a = a.parent();
            b = b.parent();
        }
    }
}

impl fmt::Debug for EmissionHistory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.to_vec()).finish()
    }
}

impl Drop for EmissionHistory {
    fn drop(&mut self) {
        // Unlink iteratively so long histories do not overflow the stack.
        let mut next = self.0.take();
        while let Some(node) = next {
            match Arc::try_unwrap(node) {
                Ok(mut owned) => next = owned.parent.0.take(),
                Err(_) => break,
            }
        }
    }
}

/// Atomic level plus photon bookkeeping. Absorbed counts are relative to
/// the initial laser reservoirs; stimulated emission decrements them.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisLabel {
    pub level: Level,
    pub strong_absorbed: i64,
    pub weak_absorbed: i64,
    pub emitted: EmissionHistory,
}

impl BasisLabel {
    pub fn ground(level: Level) -> Self {
        BasisLabel {
            level,
            strong_absorbed: 0,
            weak_absorbed: 0,
            emitted: EmissionHistory::new(),
        }
    }

    pub fn absorbed(&self, channel: Channel) -> i64 {
        match channel {
            Channel::Strong => self.strong_absorbed,
            Channel::Weak => self.weak_absorbed,
        }
    }

    fn same_atom_state(&self, other: &BasisLabel) -> bool {
        self.level == other.level
            && self.strong_absorbed == other.strong_absorbed
            && self.weak_absorbed == other.weak_absorbed
            && self.emitted.len() == other.emitted.len()
    }
}

impl fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} s{:+} w{:+} emitted={}",
            self.level,
            self.strong_absorbed,
            self.weak_absorbed,
            self.emitted.len()
        )?;
        if let Some(tag) = self.emitted.last() {
            write!(f, " last={}", tag.channel)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Ready,
    Realized,
}

/// Identifies the irreversible gap a ready component sits in: the launch
/// serial of its scope plus its slot within that scope.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GapId {
    pub scope: u64,
    pub slot: u32,
}

impl fmt::Display for GapId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "G{}.{}", self.scope, self.slot)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub label: BasisLabel,
    pub amplitude: Complex64,
    pub status: Status,
    pub gap_id: Option<GapId>,
}

impl Component {
    pub fn square_modulus(&self) -> f64 {
        self.amplitude.norm_sqr()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    /// Irreversible decay that appends an emission tag.
    Spontaneous,
    /// Laser absorption out of the resting (launch) level.
    Absorption,
    /// Any other coherent laser exchange, including stimulated emission.
    RabiExchange,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Spontaneous => "spontaneous",
            EdgeKind::Absorption => "absorption",
            EdgeKind::RabiExchange => "rabi",
        }
    }
}

impl FromStr for EdgeKind {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "spontaneous" => Ok(EdgeKind::Spontaneous),
            "absorption" => Ok(EdgeKind::Absorption),
            "rabi" | "stimulated" => Ok(EdgeKind::RabiExchange),
            other => Err(GraphError::UnknownEdgeKind(other.to_string())),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("unknown edge kind `{0}`")]
    UnknownEdgeKind(String),
    #[error("component {0} is not ready and cannot be launched")]
    NotReady(String),
    #[error("scope closure exceeded {0} realized components")]
    ScopeTooLarge(usize),
}

/// Decides whether an interaction produces a ready or a realized
/// component. Depends only on the edge kind and the label change.
pub fn classify(
    parent: &BasisLabel,
    candidate: &BasisLabel,
    kind: EdgeKind,
    onset: RabiOnset,
) -> Status {
    match kind {
        EdgeKind::Spontaneous if candidate.emitted.len() > parent.emitted.len() => Status::Ready,
        EdgeKind::Absorption if onset == RabiOnset::Delayed && candidate.level != parent.level => {
            Status::Ready
        }
        _ => Status::Realized,
    }
}

/// [`classify`] with the edge kind given by name.
pub fn classify_named(
    parent: &BasisLabel,
    candidate: &BasisLabel,
    kind: &str,
    onset: RabiOnset,
) -> Result<Status, GraphError> {
    Ok(classify(parent, candidate, kind.parse()?, onset))
}

/// One interaction available to an atom with a given label.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub kind: EdgeKind,
    pub channel: Channel,
    pub target_level: Level,
    pub strong_delta: i64,
    pub weak_delta: i64,
    /// Rabi coupling of the laser driving this pair.
    pub rabi: f64,
    /// Spontaneous decay rate of this pair.
    pub decay: f64,
}

impl Transition {
    pub fn target(&self, parent: &BasisLabel, time: f64) -> BasisLabel {
        let emitted = if self.kind == EdgeKind::Spontaneous {
            parent.emitted.push(EmissionTag {
                channel: self.channel,
                time,
            })
        } else {
            parent.emitted.clone()
        };
        BasisLabel {
            level: self.target_level,
            strong_absorbed: parent.strong_absorbed + self.strong_delta,
            weak_absorbed: parent.weak_absorbed + self.weak_delta,
            emitted,
        }
    }

    /// Coupling carried by the edge once the target status is known.
    pub fn coupling(&self, status: Status) -> Coupling {
        match (self.kind, status) {
            (EdgeKind::Spontaneous, _) => Coupling::Sink(self.decay),
            (_, Status::Ready) => Coupling::Sink(self.rabi * self.rabi / self.decay),
            (_, Status::Realized) => Coupling::Coherent(0.5 * self.rabi),
        }
    }
}

/// Source of the interactions a model allows.
pub trait TransitionRules {
    fn rabi_onset(&self) -> RabiOnset;

    /// Interactions out of `label`. `from_launch` is true for the launch
    /// component of a scope.
    fn transitions(&self, label: &BasisLabel, from_launch: bool) -> Vec<Transition>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Coupling {
    /// Hamiltonian matrix element between two realized components.
    Coherent(f64),
    /// Rate at which square modulus drains from the source into a ready
    /// target.
    Sink(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub kind: EdgeKind,
    pub channel: Channel,
    pub coupling: Coupling,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScopeNode {
    pub label: BasisLabel,
    pub status: Status,
    pub gap_id: Option<GapId>,
}

/// Components and interaction edges the Schrödinger evolution acts on.
/// Node 0 is the launch component.
#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianScope {
    pub serial: u64,
    pub launch_time: f64,
    pub nodes: Vec<ScopeNode>,
    pub edges: Vec<Edge>,
}

/// Closure limit; three atomic levels give at most three realized labels.
pub const MAX_REALIZED: usize = 3;

impl HamiltonianScope {
    /// Every edge the rules imply around `launch`: the realized closure
    /// under coherent exchange, the ready components fed by it, and the
    /// interactions out of those ready components.
    pub fn untruncated(
        launch: BasisLabel,
        rules: &dyn TransitionRules,
        time: f64,
        serial: u64,
    ) -> Result<Self, GraphError> {
        let onset = rules.rabi_onset();
        let mut scope = HamiltonianScope {
            serial,
            launch_time: time,
            nodes: vec![ScopeNode {
                label: launch,
                status: Status::Realized,
                gap_id: None,
            }],
            edges: Vec::new(),
        };
        let mut cursor = 0;
        while cursor < scope.nodes.len() {
            if scope.nodes[cursor].status == Status::Realized {
                scope.expand(cursor, rules, onset, time)?;
            }
            cursor += 1;
        }
        // One layer beyond each gap: what a ready component would couple to
        // if it were not ready.
        let ready: Vec<usize> = (0..scope.nodes.len())
            .filter(|&i| scope.nodes[i].status == Status::Ready)
            .collect();
        for r in ready {
            let parent = scope.nodes[r].label.clone();
            for tr in rules.transitions(&parent, false) {
                let label = tr.target(&parent, time);
                let status = classify(&parent, &label, tr.kind, onset);
                let target = scope.nodes.len();
                scope.nodes.push(ScopeNode {
                    label,
                    status,
                    gap_id: None,
                });
                scope.edges.push(Edge {
                    source: r,
                    target,
                    kind: tr.kind,
                    channel: tr.channel,
                    coupling: tr.coupling(status),
                });
            }
        }
        Ok(scope)
    }

    fn expand(
        &mut self,
        i: usize,
        rules: &dyn TransitionRules,
        onset: RabiOnset,
        time: f64,
    ) -> Result<(), GraphError> {
        let parent = self.nodes[i].label.clone();
        for tr in rules.transitions(&parent, i == 0) {
            let label = tr.target(&parent, time);
            let status = classify(&parent, &label, tr.kind, onset);
            let coupling = tr.coupling(status);
            match status {
                Status::Ready => {
                    let j = self.nodes.len();
                    self.nodes.push(ScopeNode {
                        label,
                        status,
                        gap_id: Some(GapId {
                            scope: self.serial,
                            slot: j as u32,
                        }),
                    });
                    self.edges.push(Edge {
                        source: i,
                        target: j,
                        kind: tr.kind,
                        channel: tr.channel,
                        coupling,
                    });
                }
                Status::Realized => {
                    let existing = self.nodes.iter().position(|n| {
                        n.status == Status::Realized && n.label.same_atom_state(&label)
                    });
                    let j = match existing {
                        Some(j) => j,
                        None => {
                            let realized =
                                self.nodes.iter().filter(|n| n.status == Status::Realized).count();
                            if realized >= MAX_REALIZED {
                                return Err(GraphError::ScopeTooLarge(MAX_REALIZED));
                            }
                            self.nodes.push(ScopeNode {
                                label,
                                status,
                                gap_id: None,
                            });
                            self.nodes.len() - 1
                        }
                    };
                    let bonded = self
                        .edges
                        .iter()
                        .any(|e| (e.source == i && e.target == j) || (e.source == j && e.target == i));
                    if !bonded && i != j {
                        self.edges.push(Edge {
                            source: i,
                            target: j,
                            kind: tr.kind,
                            channel: tr.channel,
                            coupling,
                        });
                        self.edges.push(Edge {
                            source: j,
                            target: i,
                            kind: EdgeKind::RabiExchange,
                            channel: tr.channel,
                            coupling,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// The truncated scope around `launch`.
    pub fn around(
        launch: BasisLabel,
        rules: &dyn TransitionRules,
        time: f64,
        serial: u64,
    ) -> Result<Self, GraphError> {
        Ok(truncate(Self::untruncated(launch, rules, time, serial)?))
    }

    pub fn ready_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(move |&i| self.nodes[i].status == Status::Ready)
    }

    pub fn realized_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(move |&i| self.nodes[i].status == Status::Realized)
    }

    pub fn edges_from(&self, node: usize) -> impl Iterator<Item = &Edge> + '_ {
        self.edges.iter().filter(move |e| e.source == node)
    }

    pub fn has_sinks(&self) -> bool {
        self.edges.iter().any(|e| matches!(e.coupling, Coupling::Sink(_)))
    }

    /// Text adjacency listing, optionally with amplitudes.
    pub fn dump(&self, amplitudes: Option<&[Complex64]>) -> String {
        let mut out = String::new();
        writeln!(out, "scope {} t={}", self.serial, self.launch_time).unwrap();
        for (i, node) in self.nodes.iter().enumerate() {
            let status = match node.status {
                Status::Ready => "ready",
                Status::Realized => "realized",
            };
            write!(out, "node {i} {status} {}", node.label).unwrap();
            if let Some(gap) = node.gap_id {
                write!(out, " gap={gap}").unwrap();
            }
            if let Some(amp) = amplitudes.and_then(|a| a.get(i)) {
                write!(out, " amp={:.6}{:+.6}i", amp.re, amp.im).unwrap();
            }
            out.push('\n');
        }
        for e in &self.edges {
            let (what, value) = match e.coupling {
                Coupling::Coherent(v) => ("coherent", v),
                Coupling::Sink(v) => ("sink", v),
            };
            writeln!(
                out,
                "edge {} -> {} {} {} {what} {value}",
                e.source,
                e.target,
                e.kind.as_str(),
                e.channel
            )
            .unwrap();
        }
        out
    }
}

/// Drops every edge out of a ready component and every node no longer
/// reachable from the launch component.
pub fn truncate(scope: HamiltonianScope) -> HamiltonianScope {
    let HamiltonianScope {
        serial,
        launch_time,
        nodes,
        edges,
    } = scope;
    let edges: Vec<Edge> = edges
        .into_iter()
        .filter(|e| nodes[e.source].status != Status::Ready)
        .collect();
    let mut reachable = vec![false; nodes.len()];
    if !nodes.is_empty() {
        reachable[0] = true;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            for e in edges.iter().filter(|e| e.source == n) {
                if !reachable[e.target] {
                    reachable[e.target] = true;
                    stack.push(e.target);
                }
            }
        }
    }
    let mut remap = vec![usize::MAX; nodes.len()];
    let mut kept = Vec::new();
    for (i, node) in nodes.into_iter().enumerate() {
        if reachable[i] {
            remap[i] = kept.len();
            kept.push(node);
        }
    }
    let edges = edges
        .into_iter()
        .filter(|e| reachable[e.source] && reachable[e.target])
        .map(|e| Edge {
            source: remap[e.source],
            target: remap[e.target],
            ..e
        })
        .collect();
    HamiltonianScope {
        serial,
        launch_time,
        nodes: kept,
        edges,
    }
}

/// Realizes a chosen ready component: a single component of unit square
/// modulus plus the truncated scope built around it.
pub fn launch(
    chosen: &Component,
    rules: &dyn TransitionRules,
    time: f64,
    serial: u64,
) -> Result<(Vec<Component>, HamiltonianScope), GraphError> {
    if chosen.status != Status::Ready {
        return Err(GraphError::NotReady(chosen.label.to_string()));
    }
    let scope = HamiltonianScope::around(chosen.label.clone(), rules, time, serial)?;
    let components = scope
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| Component {
            label: n.label.clone(),
            amplitude: if i == 0 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) },
            status: n.status,
            gap_id: n.gap_id,
        })
        .collect();
    Ok((components, scope))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn long_history_drops_without_overflow() {
        let mut h = EmissionHistory::new();
        for i in 0..2_000_000 {
            h = h.push(EmissionTag {
                channel: Channel::Strong,
                time: i as f64,
            });
        }
        assert_eq!(h.len(), 2_000_000);
        drop(h);
    }

    #[test]
    fn history_equality_walks_values() {
        let tag = EmissionTag {
            channel: Channel::Weak,
            time: 1.5,
        };
        let a = EmissionHistory::new().push(tag);
        let b = EmissionHistory::new().push(tag);
        assert_eq!(a, b);
        assert_ne!(a, b.push(tag));
        assert_eq!(a.parent(), EmissionHistory::new());
        assert_eq!(a.to_vec(), vec![tag]);
    }

    #[test]
    fn classify_cases() {
        let g = BasisLabel::ground(Level::A0);
        let excited = BasisLabel {
            level: Level::A1,
            strong_absorbed: 1,
            ..g.clone()
        };
        assert_eq!(classify(&g, &excited, EdgeKind::Absorption, RabiOnset::Delayed), Status::Ready);
        assert_eq!(
            classify(&g, &excited, EdgeKind::Absorption, RabiOnset::Immediate),
            Status::Realized
        );
        assert_eq!(
            classify(&excited, &g, EdgeKind::RabiExchange, RabiOnset::Delayed),
            Status::Realized
        );
        let emitted = BasisLabel {
            level: Level::A0,
            strong_absorbed: 1,
            weak_absorbed: 0,
            emitted: g.emitted.push(EmissionTag {
                channel: Channel::Strong,
                time: 0.0,
            }),
        };
        assert_eq!(
            classify(&excited, &emitted, EdgeKind::Spontaneous, RabiOnset::Delayed),
            Status::Ready
        );
        assert_eq!(
            classify_named(&excited, &emitted, "spontaneous", RabiOnset::Immediate),
            Ok(Status::Ready)
        );
        assert!(matches!(
            classify_named(&excited, &emitted, "tunnelling", RabiOnset::Delayed),
            Err(GraphError::UnknownEdgeKind(_))
        ));
    }

    #[test]
    fn truncate_without_ready_is_identity() {
        let scope = HamiltonianScope {
            serial: 0,
            launch_time: 0.0,
            nodes: vec![
                ScopeNode {
                    label: BasisLabel::ground(Level::A0),
                    status: Status::Realized,
                    gap_id: None,
                },
                ScopeNode {
                    label: BasisLabel::ground(Level::A1),
                    status: Status::Realized,
                    gap_id: None,
                },
            ],
            edges: vec![
                Edge {
                    source: 0,
                    target: 1,
                    kind: EdgeKind::RabiExchange,
                    channel: Channel::Strong,
                    coupling: Coupling::Coherent(0.1),
                },
                Edge {
                    source: 1,
                    target: 0,
                    kind: EdgeKind::RabiExchange,
                    channel: Channel::Strong,
                    coupling: Coupling::Coherent(0.1),
                },
            ],
        };
        assert_eq!(truncate(scope.clone()), scope);
    }

    #[test]
    fn launch_rejects_realized_component() {
        struct NoRules;
        impl TransitionRules for NoRules {
            fn rabi_onset(&self) -> RabiOnset {
                RabiOnset::Delayed
            }
            fn transitions(&self, _: &BasisLabel, _: bool) -> Vec<Transition> {
                Vec::new()
            }
        }
        let mut c = Component {
            label: BasisLabel::ground(Level::A0),
            amplitude: Complex64::new(0.37f64.sqrt(), 0.0),
            status: Status::Realized,
            gap_id: None,
        };
        assert!(matches!(launch(&c, &NoRules, 0.0, 1), Err(GraphError::NotReady(_))));
        c.status = Status::Ready;
        let (components, scope) = launch(&c, &NoRules, 0.0, 1).unwrap();
        assert_eq!(components.len(), 1);
        assert_eq!(components[0].square_modulus(), 1.0);
        assert_eq!(components[0].status, Status::Realized);
        assert!(!scope.has_sinks());
    }
}
