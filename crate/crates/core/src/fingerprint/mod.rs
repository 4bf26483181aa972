//! Entity and dependency checksums.
//!
//! An entity checksum hashes the canonical form of one entity. A dependency
//! checksum folds in the dependency checksums of everything the entity
//! depends on, so equality means nothing the entity's verdict relies on has
//! changed. Cycles are handled by hashing each strongly connected component
//! as a group.

pub mod canon;
pub mod scc;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::lang::{CallGraph, EntityId, EntityKind, Program};
pub use canon::canonicalize;
pub use scc::{condense, DepGraph};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Checksum(pub u64);

impl fmt::Display for Checksum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for Checksum {
    type Err = std::num::ParseIntError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        u64::from_str_radix(s, 16).map(Checksum)
    }
}

impl Serialize for Checksum {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Checksum {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s.len() != 16 {
            return Err(serde::de::Error::custom("checksum must be 16 hex digits"));
        }
        s.parse().map_err(serde::de::Error::custom)
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// H(list): FNV-1a over the length-prefixed concatenation of the parts.
pub fn combine<'a>(parts: impl IntoIterator<Item = &'a [u8]>) -> Checksum {
    let mut buf = Vec::new();
    for p in parts {
        buf.extend_from_slice(&(p.len() as u32).to_le_bytes());
        buf.extend_from_slice(p);
    }
    Checksum(fnv1a(&buf))
}

fn concat(sums: &[Checksum]) -> Vec<u8> {
    sums.iter().flat_map(|c| c.0.to_le_bytes()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EntityFingerprint {
    pub entity_checksum: Checksum,
    pub dependency_checksum: Checksum,
}

pub fn entity_checksum(entity: &crate::lang::Entity) -> Checksum {
    Checksum(fnv1a(&canonicalize(entity)))
}

/// The dependency relation used for checksums: the call graph, plus an edge
/// from every method spec to every function. Function definitions act as
/// background axioms for specifications, so changing any function may
/// change what a spec means.
pub fn dependency_edges(program: &Program) -> CallGraph {
    let mut g = program.call_graph.clone();
    let functions: Vec<EntityId> = program
        .entities
        .iter()
        .filter(|e| e.id.kind == EntityKind::FunctionDef)
        .map(|e| e.id.clone())
        .collect();
    for e in &program.entities {
        if e.id.kind == EntityKind::MethodSpec {
            g.entry(e.id.clone())
                .or_default()
                .extend(functions.iter().cloned());
        }
    }
    g
}

pub fn dependency_checksums(
    graph: &DepGraph,
    ecs: &HashMap<EntityId, Checksum>,
) -> HashMap<EntityId, Checksum> {
    let mut out: HashMap<EntityId, Checksum> = HashMap::with_capacity(ecs.len());
    for (idx, comp) in graph.sccs.iter().enumerate() {
        if !graph.is_cyclic(idx) {
            let e = &comp[0];
            // Edge sets are ordered by entity id already.
            let deps: Vec<Checksum> = graph.deps(e).map(|d| out[d]).collect();
            let sum = combine([&ecs[e].0.to_le_bytes()[..], &concat(&deps)]);
            out.insert(e.clone(), sum);
            continue;
        }
        let mut members: Vec<Checksum> = comp.iter().map(|e| ecs[e]).collect();
        members.sort_unstable();
        let mut external: Vec<Checksum> = comp
            .iter()
            .flat_map(|e| graph.deps(e))
            .filter(|d| graph.component_of(d) != Some(idx))
            .map(|d| out[d])
            .collect();
        external.sort_unstable();
        external.dedup();
        let group = combine([&concat(&members)[..], &concat(&external)]);
        for e in comp {
            let sum = combine([&ecs[e].0.to_le_bytes()[..], &group.0.to_le_bytes()]);
            out.insert(e.clone(), sum);
        }
    }
    out
}

/// Fingerprints every entity of a resolved program.
pub fn fingerprint(program: &Program) -> BTreeMap<EntityId, EntityFingerprint> {
    let ecs: HashMap<EntityId, Checksum> = program
        .entities
        .iter()
        .map(|e| (e.id.clone(), entity_checksum(e)))
        .collect();
    let nodes: Vec<EntityId> = program.entities.iter().map(|e| e.id.clone()).collect();
    let graph = condense(&nodes, &dependency_edges(program));
    let deps = dependency_checksums(&graph, &ecs);
    nodes
        .into_iter()
        .map(|id| {
            let fp = EntityFingerprint {
                entity_checksum: ecs[&id],
                dependency_checksum: deps[&id],
            };
            (id, fp)
        })
        .collect()
}
