//! Property-graph data model: typed nodes with attribute maps and labeled
//! relation edges, plus missing-value injection and domain indexing.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GigError, Result};
use crate::value::AttributeValue;

pub type Eid = String;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Node {
    pub eid: Eid,
    pub label: String,
    pub attrs: BTreeMap<String, AttributeValue>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq, PartialOrd, Ord)]
pub struct Edge {
    pub src: Eid,
    pub rela: String,
    pub dst: Eid,
}

/// Original values captured when cells are blanked out for evaluation.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct GroundTruth {
    pub entries: Vec<GroundTruthEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GroundTruthEntry {
    pub eid: Eid,
    pub attribute: String,
    pub value: AttributeValue,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<GroundTruth> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Numeric,
    Text,
}

/// The knowledge graph: immutable once built, cheap to share by reference.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyGraph {
    schema: BTreeMap<String, Vec<String>>,
    nodes: BTreeMap<Eid, Node>,
    edges: Vec<Edge>,
    /// (src eid, relation) -> sorted destination eids
    adjacency: HashMap<(Eid, String), Vec<Eid>>,
}

#[derive(Serialize, Deserialize)]
struct GraphDoc {
    schema: BTreeMap<String, Vec<String>>,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

impl PropertyGraph {
    /// Build a graph, checking eid uniqueness, schema conformance and
    /// referential integrity of edges.
    pub fn new(
        schema: BTreeMap<String, Vec<String>>,
        nodes: Vec<Node>,
        edges: Vec<Edge>,
    ) -> Result<PropertyGraph> {
        let mut node_map = BTreeMap::new();
        for node in nodes {
            let attrs_allowed = schema
                .get(&node.label)
                .ok_or_else(|| GigError::Graph(format!("unknown label `{}`", node.label)))?;
            for name in node.attrs.keys() {
                if !attrs_allowed.contains(name) {
                    return Err(GigError::Graph(format!(
                        "attribute `{name}` not in schema of label `{}`",
                        node.label
                    )));
                }
            }
            if node_map.insert(node.eid.clone(), node).is_some() {
                return Err(GigError::Graph("duplicate eid".into()));
            }
        }
        let mut edges = edges;
        edges.sort();
        edges.dedup();
        for edge in &edges {
            if !node_map.contains_key(&edge.src) || !node_map.contains_key(&edge.dst) {
                return Err(GigError::Graph(format!(
                    "dangling edge {} -{}-> {}",
                    edge.src, edge.rela, edge.dst
                )));
            }
        }
        let mut adjacency: HashMap<(Eid, String), Vec<Eid>> = HashMap::new();
        for edge in &edges {
            adjacency
                .entry((edge.src.clone(), edge.rela.clone()))
                .or_default()
                .push(edge.dst.clone());
        }
        Ok(PropertyGraph {
            schema,
            nodes: node_map,
            edges,
            adjacency,
        })
    }

    pub fn schema(&self) -> &BTreeMap<String, Vec<String>> {
        &self.schema
    }

    pub fn attributes_of(&self, label: &str) -> Option<&[String]> {
        self.schema.get(label).map(|v| v.as_slice())
    }

    pub fn node(&self, eid: &str) -> Option<&Node> {
        self.nodes.get(eid)
    }

    /// Nodes in ascending eid order.
    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Destinations of `rela` edges leaving `src`, in ascending eid order.
    pub fn relation_targets(&self, src: &str, rela: &str) -> &[Eid] {
        self.adjacency
            .get(&(src.to_string(), rela.to_string()))
            .map(|v| v.as_slice())
            .unwrap_or(&[])
    }

    pub fn value(&self, eid: &str, attribute: &str) -> Option<&AttributeValue> {
        self.nodes.get(eid).and_then(|n| n.attrs.get(attribute))
    }

    /// Total number of attribute cells over all nodes per the schema.
    pub fn cell_count(&self) -> usize {
        self.nodes
            .values()
            .map(|n| self.schema.get(&n.label).map_or(0, |a| a.len()))
            .sum()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<PropertyGraph> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<PropertyGraph> {
        let doc: GraphDoc = serde_json::from_str(text)?;
        PropertyGraph::new(doc.schema, doc.nodes, doc.edges)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// Canonical JSON rendering: sorted keys, nodes by eid, edges sorted.
    pub fn to_json(&self) -> Result<String> {
        let doc = GraphDoc {
            schema: self.schema.clone(),
            nodes: self.nodes.values().cloned().collect(),
            edges: self.edges.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)? + "\n")
    }

    /// Distinct non-missing values of (label, attribute) and the majority
    /// inferred kind. An all-missing column defaults to text.
    pub fn attribute_domain(
        &self,
        label: &str,
        attribute: &str,
    ) -> Result<(BTreeSet<AttributeValue>, ValueKind)> {
        let attrs = self
            .schema
            .get(label)
            .ok_or_else(|| GigError::Graph(format!("unknown label `{label}`")))?;
        if !attrs.iter().any(|a| a == attribute) {
            return Err(GigError::Graph(format!(
                "unknown attribute `{attribute}` for label `{label}`"
            )));
        }
        let mut domain = BTreeSet::new();
        let mut numeric = 0usize;
        let mut total = 0usize;
        for node in self.nodes.values().filter(|n| n.label == label) {
            if let Some(v) = node.attrs.get(attribute) {
                if !v.is_missing() {
                    total += 1;
                    if v.as_number().is_some() {
                        numeric += 1;
                    }
                    domain.insert(v.clone());
                }
            }
        }
        let kind = if total > 0 && numeric * 2 > total {
            ValueKind::Numeric
        } else {
            ValueKind::Text
        };
        Ok((domain, kind))
    }

    /// Blank out `round(pct * cells)` attribute cells chosen uniformly
    /// without replacement by a generator seeded with `seed`, recording the
    /// originals. Cells already missing are excluded from selection.
    pub fn inject_missing(&self, pct: f64, seed: u64) -> Result<(PropertyGraph, GroundTruth)> {
        self.inject_missing_in(pct, seed, None)
    }

    /// Overwrite one attribute cell; the attribute must be in the node's
    /// schema.
    pub fn set_value(&mut self, eid: &str, attribute: &str, value: AttributeValue) -> Result<()> {
        let node = self
            .nodes
            .get_mut(eid)
            .ok_or_else(|| GigError::Graph(format!("unknown eid `{eid}`")))?;
        if !self.schema[&node.label].iter().any(|a| a == attribute) {
            return Err(GigError::Graph(format!(
                "unknown attribute `{attribute}` for label `{}`",
                node.label
            )));
        }
        node.attrs.insert(attribute.to_string(), value);
        Ok(())
    }

    /// Blank an explicit list of cells, recording the originals.
    pub fn blank_cells(&self, cells: &[(Eid, String)]) -> Result<(PropertyGraph, GroundTruth)> {
        let mut perturbed = self.clone();
        let mut truth = GroundTruth::default();
        for (eid, attribute) in cells {
            let original = perturbed
                .value(eid, attribute)
                .cloned()
                .unwrap_or(AttributeValue::Missing);
            if original.is_missing() {
                return Err(GigError::Graph(format!(
                    "cell ({eid}, {attribute}) is absent or already missing"
                )));
            }
            perturbed.set_value(eid, attribute, AttributeValue::Missing)?;
            truth.entries.push(GroundTruthEntry {
                eid: eid.clone(),
                attribute: attribute.clone(),
                value: original,
            });
        }
        Ok((perturbed, truth))
    }

    /// Like `inject_missing` but restricted to the given attribute names;
    /// the count is then taken over the restricted cell population.
    pub fn inject_missing_in(
        &self,
        pct: f64,
        seed: u64,
        attributes: Option<&[&str]>,
    ) -> Result<(PropertyGraph, GroundTruth)> {
        if !(0.0..=1.0).contains(&pct) {
            return Err(GigError::Graph(format!("pct {pct} outside [0, 1]")));
        }
        let in_scope = |attr: &str| attributes.is_none_or(|list| list.contains(&attr));
        let population: usize = self
            .nodes
            .values()
            .map(|n| {
                self.schema[&n.label]
                    .iter()
                    .filter(|a| in_scope(a))
                    .count()
            })
            .sum();
        let count = missing_cell_count(pct, population);

        // Candidate cells in (eid, schema attribute order), excluding
        // already-missing cells.
        let mut candidates: Vec<(Eid, String)> = Vec::new();
        for node in self.nodes.values() {
            for attr in &self.schema[&node.label] {
                if !in_scope(attr) {
                    continue;
                }
                match node.attrs.get(attr) {
                    Some(v) if !v.is_missing() => {
                        candidates.push((node.eid.clone(), attr.clone()));
                    }
                    _ => {}
                }
            }
        }
        if count > candidates.len() {
            return Err(GigError::Graph(format!(
                "requested {count} missing cells but only {} are available",
                candidates.len()
            )));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = rand::seq::index::sample(&mut rng, candidates.len(), count).into_vec();
        picked.sort_unstable();

        let mut perturbed = self.clone();
        let mut truth = GroundTruth::default();
        for idx in picked {
            let (eid, attr) = &candidates[idx];
            let node = perturbed.nodes.get_mut(eid).expect("candidate eid exists");
            let original = node
                .attrs
                .insert(attr.clone(), AttributeValue::Missing)
                .unwrap_or(AttributeValue::Missing);
            truth.entries.push(GroundTruthEntry {
                eid: eid.clone(),
                attribute: attr.clone(),
                value: original,
            });
        }
        Ok((perturbed, truth))
    }
}

/// Number of cells to blank at rate `pct` over `cells` attribute cells.
pub fn missing_cell_count(pct: f64, cells: usize) -> usize {
    (pct * cells as f64).round() as usize
}
