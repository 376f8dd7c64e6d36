//! Scope patterns and homomorphism matching over the property graph.

use std::collections::BTreeSet;
use std::path::Path;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{GigError, Result};
use crate::graph::{Eid, PropertyGraph};

/// One pattern variable: a name, a node label, and an optional attribute
/// projection (defaults to the label's full schema).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternVariable {
    pub name: String,
    pub label: String,
    pub attrs: Option<Vec<String>>,
}

/// The scope: an ordered set of labeled variables plus relation edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphPattern {
    pub variables: Vec<PatternVariable>,
    pub edges: Vec<PatternEdge>,
    /// When set, variables sharing a label must bind nodes with strictly
    /// ascending eids in declaration order, so symmetric bindings collapse
    /// to one canonical match.
    pub distinct: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternEdge {
    pub src: String,
    pub rela: String,
    pub dst: String,
}

/// A binding of every pattern variable to a node, in variable order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Match {
    pub bindings: Vec<Eid>,
}

impl Match {
    pub fn get<'a>(&'a self, pattern: &GraphPattern, variable: &str) -> Option<&'a Eid> {
        pattern
            .variables
            .iter()
            .position(|v| v.name == variable)
            .map(|i| &self.bindings[i])
    }
}

impl GraphPattern {
    pub fn new(
        variables: Vec<PatternVariable>,
        edges: Vec<PatternEdge>,
        distinct: bool,
    ) -> Result<GraphPattern> {
        let pattern = GraphPattern {
            variables,
            edges,
            distinct,
        };
        pattern.validate()?;
        Ok(pattern)
    }

    fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for v in &self.variables {
            if !names.insert(v.name.as_str()) {
                return Err(GigError::Pattern(format!("duplicate variable `{}`", v.name)));
            }
        }
        for e in &self.edges {
            for end in [&e.src, &e.dst] {
                if !names.contains(end.as_str()) {
                    return Err(GigError::Pattern(format!("undeclared variable `{end}` in edge")));
                }
            }
        }
        if self.variables.len() >= 2 && !self.is_connected() {
            return Err(GigError::Pattern("pattern is not connected".into()));
        }
        Ok(())
    }

    fn is_connected(&self) -> bool {
        let n = self.variables.len();
        let index = |name: &str| self.variables.iter().position(|v| v.name == name).unwrap();
        let mut reached = vec![false; n];
        let mut stack = vec![0usize];
        reached[0] = true;
        while let Some(i) = stack.pop() {
            for e in &self.edges {
                let (a, b) = (index(&e.src), index(&e.dst));
                for (from, to) in [(a, b), (b, a)] {
                    if from == i && !reached[to] {
                        reached[to] = true;
                        stack.push(to);
                    }
                }
            }
        }
        reached.iter().all(|&r| r)
    }

    pub fn variable(&self, name: &str) -> Option<&PatternVariable> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<GraphPattern> {
        let text = std::fs::read_to_string(path)?;
        let pattern: GraphPattern = serde_json::from_str(&text)?;
        pattern.validate()?;
        Ok(pattern)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    /// All homomorphisms of the pattern into the graph, lexicographically
    /// ordered by the bound eid tuple.
    pub fn find_matches(&self, graph: &PropertyGraph) -> Result<Vec<Match>> {
        for v in &self.variables {
            if graph.attributes_of(&v.label).is_none() {
                return Err(GigError::Pattern(format!(
                    "unknown label `{}` for variable `{}`",
                    v.label, v.name
                )));
            }
        }
        let mut results = Vec::new();
        let mut bindings: Vec<Eid> = Vec::with_capacity(self.variables.len());
        self.extend(graph, &mut bindings, &mut results);
        results.sort();
        Ok(results)
    }

    fn extend(&self, graph: &PropertyGraph, bindings: &mut Vec<Eid>, out: &mut Vec<Match>) {
        let depth = bindings.len();
        if depth == self.variables.len() {
            out.push(Match {
                bindings: bindings.clone(),
            });
            return;
        }
        let var = &self.variables[depth];
        // Candidates from adjacency when an edge connects this variable to
        // an already-bound one; otherwise all nodes of the label.
        let mut candidates: Option<Vec<Eid>> = None;
        for e in &self.edges {
            let src_idx = self.variables.iter().position(|v| v.name == e.src).unwrap();
            let dst_idx = self.variables.iter().position(|v| v.name == e.dst).unwrap();
            if dst_idx == depth && src_idx < depth {
                let targets = graph.relation_targets(&bindings[src_idx], &e.rela).to_vec();
                candidates = Some(intersect(candidates, targets));
            }
        }
        let candidates = candidates.unwrap_or_else(|| {
            graph
                .nodes()
                .filter(|n| n.label == var.label)
                .map(|n| n.eid.clone())
                .collect()
        });

        'candidate: for eid in candidates {
            let node = match graph.node(&eid) {
                Some(n) if n.label == var.label => n,
                _ => continue,
            };
            if self.distinct {
                for (i, prev) in self.variables[..depth].iter().enumerate() {
                    if prev.label == var.label && bindings[i].as_str() >= node.eid.as_str() {
                        continue 'candidate;
                    }
                }
            }
            // Every pattern edge whose endpoints are now both bound must be
            // realized in the graph.
            for e in &self.edges {
                let src_idx = self.variables.iter().position(|v| v.name == e.src).unwrap();
                let dst_idx = self.variables.iter().position(|v| v.name == e.dst).unwrap();
                if src_idx > depth || dst_idx > depth {
                    continue;
                }
                let src = if src_idx == depth { &eid } else { &bindings[src_idx] };
                let dst = if dst_idx == depth { &eid } else { &bindings[dst_idx] };
                if !graph.relation_targets(src, &e.rela).contains(dst) {
                    continue 'candidate;
                }
            }
            bindings.push(eid);
            self.extend(graph, bindings, out);
            bindings.pop();
        }
    }
}

fn intersect(existing: Option<Vec<Eid>>, new: Vec<Eid>) -> Vec<Eid> {
    match existing {
        None => new,
        Some(old) => old.into_iter().filter(|e| new.contains(e)).collect(),
    }
}

// Pattern file format keeps variables as ["name", "label"] pairs, with an
// optional third element listing projected attributes.
#[derive(Serialize, Deserialize)]
struct PatternDoc {
    variables: Vec<serde_json::Value>,
    #[serde(default)]
    edges: Vec<[String; 3]>,
    #[serde(default = "default_distinct")]
    distinct: bool,
}

fn default_distinct() -> bool {
    true
}

impl Serialize for GraphPattern {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let variables = self
            .variables
            .iter()
            .map(|v| match &v.attrs {
                None => serde_json::json!([v.name, v.label]),
                Some(attrs) => serde_json::json!([v.name, v.label, attrs]),
            })
            .collect();
        let doc = PatternDoc {
            variables,
            edges: self
                .edges
                .iter()
                .map(|e| [e.src.clone(), e.rela.clone(), e.dst.clone()])
                .collect(),
            distinct: self.distinct,
        };
        doc.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for GraphPattern {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let doc = PatternDoc::deserialize(deserializer)?;
        let mut variables = Vec::new();
        for v in doc.variables {
            let arr = v
                .as_array()
                .ok_or_else(|| D::Error::custom("variable entry must be an array"))?;
            if arr.len() < 2 || arr.len() > 3 {
                return Err(D::Error::custom("variable entry needs 2 or 3 elements"));
            }
            let name = arr[0]
                .as_str()
                .ok_or_else(|| D::Error::custom("variable name must be a string"))?;
            let label = arr[1]
                .as_str()
                .ok_or_else(|| D::Error::custom("variable label must be a string"))?;
            let attrs = match arr.get(2) {
                None => None,
                Some(a) => Some(
                    a.as_array()
                        .ok_or_else(|| D::Error::custom("attribute projection must be an array"))?
                        .iter()
                        .map(|s| {
                            s.as_str()
                                .map(str::to_string)
                                .ok_or_else(|| D::Error::custom("attribute name must be a string"))
                        })
                        .collect::<std::result::Result<Vec<_>, _>>()?,
                ),
            };
            variables.push(PatternVariable {
                name: name.to_string(),
                label: label.to_string(),
                attrs,
            });
        }
        Ok(GraphPattern {
            variables,
            edges: doc
                .edges
                .into_iter()
                .map(|[src, rela, dst]| PatternEdge { src, rela, dst })
                .collect(),
            distinct: doc.distinct,
        })
    }
}
