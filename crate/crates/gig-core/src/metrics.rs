//! Precision/recall/F1 over imputation decision logs, scored per cell
//! (eid, attribute): several table rows can surface the same missing
//! cell, and the cell counts once.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{GigError, Result};
use crate::graph::GroundTruth;
use crate::impute::{ImputationDecision, Status};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub missing: usize,
    pub imputed: usize,
    pub true_count: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub pct: f64,
    pub missing: usize,
    pub imputed: usize,
    pub true_count: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when `imputed` is 0 and precision defaults to 0.
    pub zero_imputed_warning: bool,
    pub per_attribute: BTreeMap<String, Breakdown>,
}

fn rates(missing: usize, imputed: usize, true_count: usize) -> (f64, f64, f64) {
    let precision = if imputed == 0 { 0.0 } else { true_count as f64 / imputed as f64 };
    let recall = if missing == 0 { 0.0 } else { true_count as f64 / missing as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

/// Score a decision log against the injected ground truth. Correctness
/// is exact string equality after trimming surrounding whitespace.
pub fn score(truth: &GroundTruth, decisions: &[ImputationDecision]) -> Result<EvalReport> {
    let mut expected: BTreeMap<(String, String), String> = BTreeMap::new();
    for entry in &truth.entries {
        expected.insert(
            (entry.eid.clone(), entry.attribute.clone()),
            entry.value.to_string().trim().to_string(),
        );
    }
    let mut imputed_cells: BTreeMap<(String, String), String> = BTreeMap::new();
    for d in decisions {
        let cell = (d.site.eid.clone(), d.site.attribute.clone());
        if !expected.contains_key(&cell) {
            return Err(GigError::Eval(format!(
                "decision references unknown site ({}, {})",
                cell.0, cell.1
            )));
        }
        if d.status == Status::Imputed {
            let value = d
                .predicted
                .as_deref()
                .ok_or_else(|| GigError::Eval("imputed decision without a value".into()))?;
            imputed_cells.entry(cell).or_insert_with(|| value.trim().to_string());
        }
    }

    let correct: BTreeSet<&(String, String)> = imputed_cells
        .iter()
        .filter(|(cell, value)| expected.get(*cell) == Some(value))
        .map(|(cell, _)| cell)
        .collect();

    let mut per_attribute: BTreeMap<String, Breakdown> = BTreeMap::new();
    for cell in expected.keys() {
        per_attribute.entry(cell.1.clone()).or_default().missing += 1;
    }
    for cell in imputed_cells.keys() {
        let b = per_attribute.entry(cell.1.clone()).or_default();
        b.imputed += 1;
        if correct.contains(cell) {
            b.true_count += 1;
        }
    }
    for b in per_attribute.values_mut() {
        let (p, r, f1) = rates(b.missing, b.imputed, b.true_count);
        b.precision = p;
        b.recall = r;
        b.f1 = f1;
    }

    let missing = expected.len();
    let imputed = imputed_cells.len();
    let true_count = correct.len();
    let (precision, recall, f1) = rates(missing, imputed, true_count);
    Ok(EvalReport {
        dataset: String::new(),
        pct: 0.0,
        missing,
        imputed,
        true_count,
        precision,
        recall,
        f1,
        zero_imputed_warning: imputed == 0,
        per_attribute,
    })
}
