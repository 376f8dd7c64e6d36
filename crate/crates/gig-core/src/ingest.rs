//! CSV ingestion: one node per row, reference columns become edges.

use std::collections::BTreeMap;
use std::io::Read;

use crate::error::{GigError, Result};
use crate::graph::{Edge, Node, PropertyGraph};
use crate::value::AttributeValue;

/// Column roles for one CSV table.
#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    /// Column holding the entity id; row ordinals are used when absent.
    pub id_column: Option<String>,
    /// (column, referenced label): the column value is the eid of a node
    /// with that label, and becomes an edge named after the label.
    pub references: Vec<(String, String)>,
    pub delimiter: u8,
}

impl IngestOptions {
    pub fn new() -> IngestOptions {
        IngestOptions {
            id_column: None,
            references: Vec::new(),
            delimiter: b',',
        }
    }
}

/// Ingest a CSV table into a fresh graph.
pub fn ingest_csv<R: Read>(reader: R, table_name: &str, opts: &IngestOptions) -> Result<PropertyGraph> {
    ingest_csv_into(None, reader, table_name, opts)
}

/// Ingest a CSV table, merging with an existing graph so reference columns
/// can point at nodes ingested earlier.
pub fn ingest_csv_into<R: Read>(
    base: Option<&PropertyGraph>,
    reader: R,
    table_name: &str,
    opts: &IngestOptions,
) -> Result<PropertyGraph> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .flexible(false)
        .from_reader(reader);
    let headers: Vec<String> = csv_reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    if let Some(id_col) = &opts.id_column {
        if !headers.iter().any(|h| h == id_col) {
            return Err(GigError::Ingest(format!("id column `{id_col}` not in header")));
        }
    }
    let ref_of = |col: &str| -> Option<&str> {
        opts.references
            .iter()
            .find(|(c, _)| c == col)
            .map(|(_, label)| label.as_str())
    };

    let attr_columns: Vec<String> = headers
        .iter()
        .filter(|h| Some(h.as_str()) != opts.id_column.as_deref() && ref_of(h).is_none())
        .cloned()
        .collect();

    let mut schema: BTreeMap<String, Vec<String>> = base
        .map(|g| g.schema().clone())
        .unwrap_or_default();
    schema.insert(table_name.to_string(), attr_columns.clone());

    let mut nodes: Vec<Node> = base.map(|g| g.nodes().cloned().collect()).unwrap_or_default();
    let mut edges: Vec<Edge> = base.map(|g| g.edges().to_vec()).unwrap_or_default();

    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (row_idx, record) in csv_reader.records().enumerate() {
        let record = record.map_err(|e| GigError::Ingest(format!("row {}: {e}", row_idx + 1)))?;
        let field = |col: &str| -> &str {
            headers
                .iter()
                .position(|h| h == col)
                .map(|i| record.get(i).unwrap_or(""))
                .unwrap_or("")
        };
        let eid = match &opts.id_column {
            Some(col) => field(col).trim().to_string(),
            None => (row_idx + 1).to_string(),
        };
        if let Some(first) = seen.insert(eid.clone(), row_idx + 1) {
            return Err(GigError::Ingest(format!(
                "duplicate eid `{eid}` at rows {first} and {}",
                row_idx + 1
            )));
        }
        let mut attrs = BTreeMap::new();
        for col in &attr_columns {
            attrs.insert(col.clone(), AttributeValue::parse(field(col).trim()));
        }
        for (col, label) in &opts.references {
            if !headers.iter().any(|h| h == col) {
                return Err(GigError::Ingest(format!("reference column `{col}` not in header")));
            }
            let target = field(col).trim();
            if !target.is_empty() {
                edges.push(Edge {
                    src: eid.clone(),
                    rela: label.clone(),
                    dst: target.to_string(),
                });
            }
        }
        nodes.push(Node {
            eid,
            label: table_name.to_string(),
            attrs,
        });
    }

    PropertyGraph::new(schema, nodes, edges).map_err(|e| match e {
        GigError::Graph(msg) => GigError::Ingest(msg),
        other => other,
    })
}
