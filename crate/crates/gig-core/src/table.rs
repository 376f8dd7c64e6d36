//! The pseudo-relational table: one row per scope-pattern match, one
//! column per (variable, attribute) pair with a per-variable `id` column
//! first.

use std::io::{Read, Write};

use crate::error::{GigError, Result};
use crate::graph::PropertyGraph;
use crate::pattern::{GraphPattern, Match};
use crate::value::AttributeValue;

pub const ID_ATTR: &str = "id";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub variable: String,
    pub attribute: String,
    /// Node label of the variable; unknown for tables re-read from CSV.
    pub label: Option<String>,
}

impl Column {
    pub fn is_id(&self) -> bool {
        self.attribute == ID_ATTR
    }

    pub fn name(&self) -> String {
        format!("{}.{}", self.variable, self.attribute)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    /// Index of the originating match, stable under the deterministic
    /// match ordering.
    pub match_id: usize,
    pub values: Vec<AttributeValue>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoTable {
    pub columns: Vec<Column>,
    pub rows: Vec<Row>,
}

impl PseudoTable {
    /// Column layout for a pattern: per variable, `id` first then the
    /// projected attributes in schema order.
    pub fn columns_for(pattern: &GraphPattern, graph: &PropertyGraph) -> Result<Vec<Column>> {
        let mut columns = Vec::new();
        for var in &pattern.variables {
            let schema_attrs = graph.attributes_of(&var.label).ok_or_else(|| {
                GigError::Pattern(format!("unknown label `{}`", var.label))
            })?;
            columns.push(Column {
                variable: var.name.clone(),
                attribute: ID_ATTR.into(),
                label: Some(var.label.clone()),
            });
            let attrs: Vec<&String> = match &var.attrs {
                Some(projection) => {
                    for a in projection {
                        if !schema_attrs.contains(a) {
                            return Err(GigError::Pattern(format!(
                                "projected attribute `{a}` not in schema of `{}`",
                                var.label
                            )));
                        }
                    }
                    // Projection keeps schema order regardless of how it
                    // was written.
                    schema_attrs.iter().filter(|a| projection.contains(a)).collect()
                }
                None => schema_attrs.iter().collect(),
            };
            for attr in attrs {
                columns.push(Column {
                    variable: var.name.clone(),
                    attribute: attr.clone(),
                    label: Some(var.label.clone()),
                });
            }
        }
        Ok(columns)
    }

    /// One row per match; missing attribute values propagate as missing.
    pub fn build(graph: &PropertyGraph, pattern: &GraphPattern) -> Result<PseudoTable> {
        let columns = Self::columns_for(pattern, graph)?;
        let matches = pattern.find_matches(graph)?;
        let rows = matches
            .iter()
            .enumerate()
            .map(|(match_id, m)| Row {
                match_id,
                values: Self::row_values(&columns, pattern, m, graph),
            })
            .collect();
        Ok(PseudoTable { columns, rows })
    }

    fn row_values(
        columns: &[Column],
        pattern: &GraphPattern,
        m: &Match,
        graph: &PropertyGraph,
    ) -> Vec<AttributeValue> {
        columns
            .iter()
            .map(|col| {
                let eid = m.get(pattern, &col.variable).expect("column variable bound");
                if col.is_id() {
                    AttributeValue::text(eid.clone())
                } else {
                    graph
                        .value(eid, &col.attribute)
                        .cloned()
                        .unwrap_or(AttributeValue::Missing)
                }
            })
            .collect()
    }

    /// 0-based index of (variable, attribute) in the documented order.
    pub fn column_index(&self, variable: &str, attribute: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c.variable == variable && c.attribute == attribute)
            .ok_or_else(|| GigError::UnknownColumn {
                variable: variable.to_string(),
                attribute: attribute.to_string(),
            })
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    /// CSV rendering with `var.attr` headers and `?` for missing.
    pub fn to_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.columns.iter().map(|c| c.name()))?;
        for row in &self.rows {
            w.write_record(row.values.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read a table back from its CSV rendering. Labels are unknown and
    /// numeric-looking fields come back as numbers.
    pub fn from_csv<R: Read>(reader: R) -> Result<PseudoTable> {
        let mut r = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
        let mut columns = Vec::new();
        for header in r.headers()? {
            let (variable, attribute) = header.split_once('.').ok_or_else(|| {
                GigError::Pattern(format!("table header `{header}` is not var.attr"))
            })?;
            columns.push(Column {
                variable: variable.to_string(),
                attribute: attribute.to_string(),
                label: None,
            });
        }
        let mut rows = Vec::new();
        for (i, record) in r.records().enumerate() {
            let record = record?;
            let values = columns
                .iter()
                .enumerate()
                .map(|(c, col)| {
                    let field = record.get(c).unwrap_or("");
                    if field == "?" {
                        AttributeValue::Missing
                    } else if col.is_id() {
                        AttributeValue::text(field)
                    } else {
                        AttributeValue::parse(field)
                    }
                })
                .collect();
            rows.push(Row { match_id: i, values });
        }
        Ok(PseudoTable { columns, rows })
    }
}
