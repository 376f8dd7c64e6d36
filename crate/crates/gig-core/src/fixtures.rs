//! The toy publisher/game dataset used across tests and the demo files.
//!
//! Two publishers (GL, EA) and five games connected by `publishes` edges.
//! In the perturbed variant game 7's Name is missing; its true value is
//! "F20".

use std::collections::BTreeMap;

use crate::graph::{Edge, GroundTruth, GroundTruthEntry, Node, PropertyGraph};
use crate::pattern::{GraphPattern, PatternEdge, PatternVariable};
use crate::value::AttributeValue;

fn game(eid: &str, name: Option<&str>, genre: &str, year: f64, price: &str) -> Node {
    let name_value = match name {
        Some(n) => AttributeValue::text(n),
        None => AttributeValue::Missing,
    };
    Node {
        eid: eid.into(),
        label: "game".into(),
        attrs: BTreeMap::from([
            ("Name".to_string(), name_value),
            ("Genre".to_string(), AttributeValue::text(genre)),
            ("Year".to_string(), AttributeValue::Number(year)),
            ("Price".to_string(), AttributeValue::text(price)),
        ]),
    }
}

fn publisher(eid: &str, name: &str) -> Node {
    Node {
        eid: eid.into(),
        label: "publisher".into(),
        attrs: BTreeMap::from([("Name".to_string(), AttributeValue::text(name))]),
    }
}

fn build(game7_name: Option<&str>) -> PropertyGraph {
    let schema = BTreeMap::from([
        ("publisher".to_string(), vec!["Name".to_string()]),
        (
            "game".to_string(),
            vec![
                "Name".to_string(),
                "Genre".to_string(),
                "Year".to_string(),
                "Price".to_string(),
            ],
        ),
    ]);
    let nodes = vec![
        publisher("1", "GL"),
        publisher("3", "EA"),
        game("4", Some("AF9"), "Racing", 2018.0, "£50"),
        game("5", Some("AF11"), "Racing", 2018.0, "£45"),
        game("7", game7_name, "Soccer", 2019.0, "£55"),
        game("8", Some("F20"), "Soccer", 2019.0, "£60"),
        game("9", Some("F21"), "Soccer", 2020.0, "£65"),
    ];
    let edges = [("1", "4"), ("1", "5"), ("3", "7"), ("3", "8"), ("3", "9")]
        .into_iter()
        .map(|(src, dst)| Edge {
            src: src.into(),
            rela: "publishes".into(),
            dst: dst.into(),
        })
        .collect();
    PropertyGraph::new(schema, nodes, edges).expect("fixture graph is valid")
}

/// Complete variant: game 7 carries its true Name "F20".
pub fn table1_graph_complete() -> PropertyGraph {
    build(Some("F20"))
}

/// Perturbed variant: game 7's Name is missing.
pub fn table1_graph_missing() -> PropertyGraph {
    build(None)
}

/// Ground truth for the perturbed variant.
pub fn table1_truth() -> GroundTruth {
    GroundTruth {
        entries: vec![GroundTruthEntry {
            eid: "7".into(),
            attribute: "Name".into(),
            value: AttributeValue::text("F20"),
        }],
    }
}

/// The x -> y, x -> y2 scope over publisher/game; y2 projects out Price so
/// the pseudo table has the canonical 11 columns.
pub fn table1_pattern() -> GraphPattern {
    GraphPattern::new(
        vec![
            PatternVariable {
                name: "x".into(),
                label: "publisher".into(),
                attrs: None,
            },
            PatternVariable {
                name: "y".into(),
                label: "game".into(),
                attrs: Some(vec!["Name".into(), "Genre".into(), "Year".into(), "Price".into()]),
            },
            PatternVariable {
                name: "y2".into(),
                label: "game".into(),
                attrs: Some(vec!["Name".into(), "Genre".into(), "Year".into()]),
            },
        ],
        vec![
            PatternEdge {
                src: "x".into(),
                rela: "publishes".into(),
                dst: "y".into(),
            },
            PatternEdge {
                src: "x".into(),
                rela: "publishes".into(),
                dst: "y2".into(),
            },
        ],
        true,
    )
    .expect("fixture pattern is valid")
}
