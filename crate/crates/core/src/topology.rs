//! Link graphs joining the hand and the drones.
//!
//! Wiring per kind, for drones `d0..d(n-1)`:
//! - `Star`: `hand–di` for every drone.
//! - `Ring`: `hand–d0` plus the cycle `d0–d1–…–d(n−1)–d0`.
//! - `Tree`: `hand–d0` plus `d0–di` for every other drone.
//!
//! For a single drone all three reduce to the one edge `hand–d0`.

use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::impedance::{ImpedanceError, ImpedanceParams};
use crate::vec3::Vec3;

pub const DEFAULT_SPACING_M: f64 = 0.3;
pub const DEFAULT_HEIGHT_M: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("a topology needs at least one drone")]
    NoDrones,
    #[error("formation spacing must be positive, got {0}")]
    NonPositiveSpacing(f64),
    #[error("unknown drone index {0}")]
    UnknownDrone(usize),
    #[error("self edge on {0}")]
    SelfEdge(Endpoint),
    #[error("duplicate edge {0}–{1}")]
    DuplicateEdge(Endpoint, Endpoint),
    #[error("override names edge {0}–{1}, which is not in the graph")]
    MissingEdge(Endpoint, Endpoint),
    #[error("drone {0} is not connected to the hand")]
    Disconnected(usize),
    #[error("unknown topology kind {0:?}")]
    UnknownKind(String),
    #[error("edge override: {0}")]
    Override(#[from] ImpedanceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    Star,
    Ring,
    Tree,
}

impl TopologyKind {
    pub const ALL: [TopologyKind; 3] = [TopologyKind::Star, TopologyKind::Ring, TopologyKind::Tree];

    pub fn as_str(self) -> &'static str {
        match self {
            TopologyKind::Star => "star",
            TopologyKind::Ring => "ring",
            TopologyKind::Tree => "tree",
        }
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TopologyKind {
    type Err = TopologyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "star" => Ok(TopologyKind::Star),
            "ring" => Ok(TopologyKind::Ring),
            "tree" => Ok(TopologyKind::Tree),
            other => Err(TopologyError::UnknownKind(other.to_string())),
        }
    }
}

/// One end of a link: the hand anchor or a drone index.
///
/// Serialized as the string `"hand"` or the drone index as an integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Endpoint {
    Hand,
    Drone(usize),
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Hand => f.write_str("hand"),
            Endpoint::Drone(i) => write!(f, "d{i}"),
        }
    }
}

impl Serialize for Endpoint {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Endpoint::Hand => s.serialize_str("hand"),
            Endpoint::Drone(i) => s.serialize_u64(*i as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Endpoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct EndpointVisitor;
        impl Visitor<'_> for EndpointVisitor {
            type Value = Endpoint;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("\"hand\" or a drone index")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Endpoint, E> {
                Ok(Endpoint::Drone(v as usize))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Endpoint, E> {
                usize::try_from(v).map(Endpoint::Drone).map_err(|_| E::custom("negative drone index"))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Endpoint, E> {
                if v == "hand" {
                    Ok(Endpoint::Hand)
                } else {
                    Err(E::custom(format!("unknown endpoint {v:?}")))
                }
            }
        }
        d.deserialize_any(EndpointVisitor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: Endpoint,
    pub b: Endpoint,
    pub params: ImpedanceParams,
}

impl Edge {
    pub fn touches(&self, e: Endpoint) -> bool {
        self.a == e || self.b == e
    }

    pub fn other(&self, e: Endpoint) -> Option<Endpoint> {
        if self.a == e {
            Some(self.b)
        } else if self.b == e {
            Some(self.a)
        } else {
            None
        }
    }

    pub fn is_hand_link(&self) -> bool {
        self.a == Endpoint::Hand || self.b == Endpoint::Hand
    }

    fn key(&self) -> (Endpoint, Endpoint) {
        if self.a <= self.b {
            (self.a, self.b)
        } else {
            (self.b, self.a)
        }
    }
}

/// Per-edge replacement of the shared impedance parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeOverride {
    pub edge: [Endpoint; 2],
    pub impedance: ImpedanceParams,
}

/// Topology section of a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub kind: TopologyKind,
    pub drones: usize,
    #[serde(default = "default_spacing")]
    pub spacing_m: f64,
    #[serde(default = "default_height")]
    pub height_m: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<EdgeOverride>,
}

fn default_spacing() -> f64 {
    DEFAULT_SPACING_M
}

fn default_height() -> f64 {
    DEFAULT_HEIGHT_M
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            kind: TopologyKind::Star,
            drones: 3,
            spacing_m: DEFAULT_SPACING_M,
            height_m: DEFAULT_HEIGHT_M,
            overrides: Vec::new(),
        }
    }
}

impl TopologyConfig {
    pub fn build(&self, params: ImpedanceParams) -> Result<LinkGraph, TopologyError> {
        let mut g = build_with(self.kind, self.drones, self.spacing_m, self.height_m, params)?;
        for o in &self.overrides {
            o.impedance.validate()?;
            let key = Edge { a: o.edge[0], b: o.edge[1], params: o.impedance }.key();
            let edge = g.edges.iter_mut().find(|e| e.key() == key).ok_or_else(|| {
                match o.edge.iter().find(|e| matches!(e, Endpoint::Drone(i) if *i >= self.drones)) {
                    Some(Endpoint::Drone(i)) => TopologyError::UnknownDrone(*i),
                    _ => TopologyError::MissingEdge(o.edge[0], o.edge[1]),
                }
            })?;
            edge.params = o.impedance;
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkGraph {
    pub kind: TopologyKind,
    pub edges: Vec<Edge>,
    /// Desired displacement of each drone from the hand anchor.
    pub offsets: Vec<Vec3>,
}

/// Builds a graph with the default formation height and link parameters.
pub fn build_topology(kind: TopologyKind, drones: usize, spacing: f64) -> Result<LinkGraph, TopologyError> {
    build_with(kind, drones, spacing, DEFAULT_HEIGHT_M, ImpedanceParams::default())
}

pub fn build_with(
    kind: TopologyKind,
    drones: usize,
    spacing: f64,
    height: f64,
    params: ImpedanceParams,
) -> Result<LinkGraph, TopologyError> {
    if drones == 0 {
        return Err(TopologyError::NoDrones);
    }
    if !(spacing > 0.0) {
        return Err(TopologyError::NonPositiveSpacing(spacing));
    }
    let edge = |a, b| Edge { a, b, params };
    let d = Endpoint::Drone;
    let mut edges = Vec::new();
    match kind {
        TopologyKind::Star => edges.extend((0..drones).map(|i| edge(Endpoint::Hand, d(i)))),
        TopologyKind::Ring => {
            edges.push(edge(Endpoint::Hand, d(0)));
            if drones == 2 {
                edges.push(edge(d(0), d(1)));
            } else if drones > 2 {
                edges.extend((0..drones).map(|i| edge(d(i), d((i + 1) % drones))));
            }
        }
        TopologyKind::Tree => {
            edges.push(edge(Endpoint::Hand, d(0)));
            edges.extend((1..drones).map(|i| edge(d(0), d(i))));
        }
    }
    let graph = LinkGraph { kind, edges, offsets: formation_offsets(drones, spacing, height) };
    graph.validate()?;
    Ok(graph)
}

/// Evenly spaced slots on a horizontal circle `height` above the hand. A
/// single drone sits directly above the hand.
pub fn formation_offsets(drones: usize, spacing: f64, height: f64) -> Vec<Vec3> {
    if drones == 1 {
        return vec![Vec3::new(0.0, 0.0, height)];
    }
    (0..drones)
        .map(|i| {
            let angle = std::f64::consts::TAU * i as f64 / drones as f64;
            Vec3::new(spacing * angle.cos(), spacing * angle.sin(), height)
        })
        .collect()
}

impl LinkGraph {
    pub fn drone_count(&self) -> usize {
        self.offsets.len()
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        let n = self.drone_count();
        if n == 0 {
            return Err(TopologyError::NoDrones);
        }
        let mut seen = HashSet::new();
        for e in &self.edges {
            for end in [e.a, e.b] {
                if let Endpoint::Drone(i) = end {
                    if i >= n {
                        return Err(TopologyError::UnknownDrone(i));
                    }
                }
            }
            if e.a == e.b {
                return Err(TopologyError::SelfEdge(e.a));
            }
            if !seen.insert(e.key()) {
                return Err(TopologyError::DuplicateEdge(e.a, e.b));
            }
        }
        let parents = self.leader_tree();
        if let Some(i) = parents.iter().position(Option::is_none) {
            return Err(TopologyError::Disconnected(i));
        }
        Ok(())
    }

    pub fn is_connected(&self) -> bool {
        self.leader_tree().iter().all(Option::is_some)
    }

    /// `hand_pose + offsets[drone]`.
    pub fn desired_position(&self, drone: usize, hand: Vec3) -> Result<Vec3, TopologyError> {
        self.offsets.get(drone).map(|o| hand + *o).ok_or(TopologyError::UnknownDrone(drone))
    }

    /// Breadth-first spanning tree rooted at the hand: for each drone, the
    /// index of the edge leading toward the hand, or `None` when unreachable.
    pub fn leader_edges(&self) -> Vec<Option<usize>> {
        let n = self.drone_count();
        let mut leader = vec![None; n];
        let mut queue = VecDeque::from([Endpoint::Hand]);
        let mut visited = HashSet::from([Endpoint::Hand]);
        while let Some(node) = queue.pop_front() {
            for (idx, e) in self.edges.iter().enumerate() {
                let Some(next) = e.other(node) else { continue };
                if let Endpoint::Drone(i) = next {
                    if i < n && visited.insert(next) {
                        leader[i] = Some(idx);
                        queue.push_back(next);
                    }
                }
            }
        }
        leader
    }

    /// For each drone, the endpoint it follows (the far end of its leader edge).
    pub fn leader_tree(&self) -> Vec<Option<Endpoint>> {
        self.leader_edges()
            .into_iter()
            .enumerate()
            .map(|(i, e)| e.and_then(|e| self.edges[e].other(Endpoint::Drone(i))))
            .collect()
    }

    /// Drone–drone edges that are not part of the leader tree.
    pub fn lateral_edges(&self) -> Vec<usize> {
        let tree: HashSet<usize> = self.leader_edges().into_iter().flatten().collect();
        (0..self.edges.len()).filter(|i| !tree.contains(i)).collect()
    }
}
