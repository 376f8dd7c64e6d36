//! The imputation loop: locate missing cells, pick the top covering
//! rule via positional masks, assemble an encoder input from the row,
//! predict, validate against the attribute's observed domain, and
//! write accepted values into a copy of the graph.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{GigError, Result};
use crate::graph::{PropertyGraph, ValueKind};
use crate::model::beam::{predict_topk, Prediction};
use crate::model::checkpoint::Checkpoint;
use crate::model::pairs::{lhs_tokens, rhs_group_for_column};
use crate::rule::{Gdd, PositionalMask};
use crate::table::{PseudoTable, ID_ATTR};
use crate::value::AttributeValue;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingSite {
    pub match_id: usize,
    /// Column index of the missing cell.
    pub m: usize,
    pub variable: String,
    pub attribute: String,
    pub eid: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Imputed,
    RejectedInconsistent,
    AbstainedNoRule,
    AbstainedMissingLhs,
    AbstainedUnk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationDecision {
    pub site: MissingSite,
    pub rule: Option<String>,
    /// LHS column indices supplying the encoder input.
    pub lhs_indices: Vec<usize>,
    pub predicted: Option<String>,
    pub status: Status,
}

/// One site per missing non-id cell, row-major order.
pub fn find_missing_sites(table: &PseudoTable) -> Result<Vec<MissingSite>> {
    let mut sites = Vec::new();
    for row in &table.rows {
        for (m, column) in table.columns.iter().enumerate() {
            if column.is_id() || !row.values[m].is_missing() {
                continue;
            }
            let id_col = table.column_index(&column.variable, ID_ATTR)?;
            sites.push(MissingSite {
                match_id: row.match_id,
                m,
                variable: column.variable.clone(),
                attribute: column.attribute.clone(),
                eid: row.values[id_col].to_string(),
            });
        }
    }
    Ok(sites)
}

/// Rules whose RHS mask covers column `m`, best first.
pub fn applicable_rules<'a>(
    masks: &'a [(Gdd, PositionalMask)],
    m: usize,
) -> Vec<&'a (Gdd, PositionalMask)> {
    let mut hits: Vec<&(Gdd, PositionalMask)> = masks
        .iter()
        .filter(|(_, mask)| mask.rhs_bits.get(m).copied().unwrap_or(false))
        .collect();
    hits.sort_by_key(|(rule, _)| rule.rank_key());
    hits
}

/// Encoder input for a rule on a row: the instantiated LHS literals and
/// the column indices they read. `None` when an LHS cell is missing.
pub fn assemble_input(
    rule: &Gdd,
    row: &crate::table::Row,
    table: &PseudoTable,
) -> Result<Option<(Vec<String>, Vec<usize>)>> {
    let mut indices = Vec::new();
    for c in &rule.phi_x {
        for (variable, attribute) in c.referenced_columns() {
            indices.push(table.column_index(&variable, &attribute)?);
        }
    }
    Ok(lhs_tokens(rule, row, table)?.map(|tokens| (tokens, indices)))
}

/// A proposed value is consistent when it belongs to the attribute's
/// observed domain; degenerate domains (fewer than 2 values) fall back
/// to a kind check. UNK never validates.
pub fn validate_semantic(value: &str, site: &MissingSite, graph: &PropertyGraph) -> Result<bool> {
    if value.is_empty() || value.contains("<unk>") {
        return Ok(false);
    }
    let node = graph
        .node(&site.eid)
        .ok_or_else(|| GigError::Graph(format!("unknown eid `{}`", site.eid)))?;
    let (domain, kind) = graph.attribute_domain(&node.label, &site.attribute)?;
    let parsed = AttributeValue::parse(value);
    if domain.len() >= 2 {
        Ok(domain.iter().any(|v| v.to_string() == value))
    } else {
        let value_kind = match parsed {
            AttributeValue::Number(_) => ValueKind::Numeric,
            _ => ValueKind::Text,
        };
        Ok(value_kind == kind)
    }
}

/// Anything that can produce a top-1 prediction from an encoder token
/// sequence. The checkpoint is the production implementation; tests
/// substitute forced predictors.
pub trait Predictor {
    fn predict(&self, enc_tokens: &[String]) -> Result<Prediction>;
}

impl Predictor for Checkpoint {
    fn predict(&self, enc_tokens: &[String]) -> Result<Prediction> {
        let enc: Vec<usize> = enc_tokens.iter().map(|t| self.vocab.id(t)).collect();
        predict_topk(self, &enc, 1)?
            .into_iter()
            .next()
            .ok_or_else(|| GigError::Model("beam search returned no candidate".into()))
    }
}

/// A predictor that always answers with one fixed value.
pub struct ForcedPredictor(pub String);

impl Predictor for ForcedPredictor {
    fn predict(&self, _enc_tokens: &[String]) -> Result<Prediction> {
        Ok(Prediction {
            token_ids: Vec::new(),
            groups: vec![self.0.clone()],
            score: 0.0,
            unk_input: false,
            unk_output: false,
        })
    }
}

/// Algorithm: per missing site, top-1 covering rule and top-1 predicted
/// value, semantic validation, write-back into a copy of the graph.
/// Sites sharing a cell (same eid and attribute) reuse the first
/// successful imputation; model calls never exceed the site count.
pub fn impute_graph(
    graph: &PropertyGraph,
    table: &PseudoTable,
    masks: &[(Gdd, PositionalMask)],
    predictor: &dyn Predictor,
) -> Result<(PropertyGraph, Vec<ImputationDecision>)> {
    for (rule, mask) in masks {
        if mask.rhs_bits.len() != table.width() {
            return Err(GigError::Rule(format!(
                "mask for rule {} has {} bits but the table has {} columns",
                rule.name,
                mask.rhs_bits.len(),
                table.width()
            )));
        }
    }
    let sites = find_missing_sites(table)?;
    let mut output = graph.clone();
    let mut decisions = Vec::with_capacity(sites.len());
    // First accepted value per cell, reused by later sites of the cell.
    let mut resolved: BTreeMap<(String, String), (String, Option<String>, Vec<usize>)> =
        BTreeMap::new();

    for site in sites {
        let cell = (site.eid.clone(), site.attribute.clone());
        if let Some((value, rule, indices)) = resolved.get(&cell) {
            decisions.push(ImputationDecision {
                site,
                rule: rule.clone(),
                lhs_indices: indices.clone(),
                predicted: Some(value.clone()),
                status: Status::Imputed,
            });
            continue;
        }
        let row = table
            .rows
            .iter()
            .find(|r| r.match_id == site.match_id)
            .ok_or_else(|| GigError::Rule(format!("no row for match {}", site.match_id)))?;
        let covering = applicable_rules(masks, site.m);
        let Some((rule, _)) = covering.first() else {
            decisions.push(ImputationDecision {
                site,
                rule: None,
                lhs_indices: Vec::new(),
                predicted: None,
                status: Status::AbstainedNoRule,
            });
            continue;
        };
        let Some((enc_tokens, lhs_indices)) = assemble_input(rule, row, table)? else {
            decisions.push(ImputationDecision {
                site,
                rule: Some(rule.name.clone()),
                lhs_indices: Vec::new(),
                predicted: None,
                status: Status::AbstainedMissingLhs,
            });
            continue;
        };
        let prediction = predictor.predict(&enc_tokens)?;
        let group = rhs_group_for_column(rule, table, site.m)?
            .ok_or_else(|| GigError::Rule(format!("rule {} does not cover column {}", rule.name, site.m)))?;
        let value = prediction.groups.get(group).cloned().unwrap_or_default();
        if prediction.unk_input || prediction.unk_output || value.is_empty() {
            decisions.push(ImputationDecision {
                site,
                rule: Some(rule.name.clone()),
                lhs_indices,
                predicted: (!value.is_empty()).then(|| value.clone()),
                status: Status::AbstainedUnk,
            });
            continue;
        }
        if validate_semantic(&value, &site, graph)? {
            output.set_value(&site.eid, &site.attribute, AttributeValue::parse(&value))?;
            resolved.insert(cell, (value.clone(), Some(rule.name.clone()), lhs_indices.clone()));
            decisions.push(ImputationDecision {
                site,
                rule: Some(rule.name.clone()),
                lhs_indices,
                predicted: Some(value),
                status: Status::Imputed,
            });
        } else {
            decisions.push(ImputationDecision {
                site,
                rule: Some(rule.name.clone()),
                lhs_indices,
                predicted: Some(value),
                status: Status::RejectedInconsistent,
            });
        }
    }
    Ok((output, decisions))
}

/// Serialize decisions as JSON lines.
pub fn write_decisions<W: std::io::Write>(
    decisions: &[ImputationDecision],
    mut writer: W,
) -> Result<()> {
    for d in decisions {
        serde_json::to_writer(&mut writer, d)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_decisions(text: &str) -> Result<Vec<ImputationDecision>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}
