//! Levelwise GDD discovery over a pseudo-table with support/confidence
//! scoring. The candidate space is pair constraints on compatible columns
//! plus constant-equality constraints on frequent values.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::constraint::{satisfies, DistanceConstraint, EvalContext, Operand, Sat};
use crate::error::{GigError, Result};
use crate::graph::ValueKind;
use crate::rule::{Gdd, Provenance};
use crate::table::PseudoTable;
use crate::value::AttributeValue;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinerConfig {
    pub max_lhs_size: usize,
    pub edit_thresholds: Vec<u32>,
    pub numeric_thresholds: Vec<f64>,
    pub min_support: u64,
    pub min_confidence: f64,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            max_lhs_size: 2,
            edit_thresholds: vec![0, 1, 2],
            numeric_thresholds: vec![0.0],
            min_support: 2,
            min_confidence: 1.0,
        }
    }
}

impl MinerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_lhs_size < 1 {
            return Err(GigError::Config("max_lhs_size must be at least 1".into()));
        }
        if self.min_support < 1 {
            return Err(GigError::Config("min_support must be at least 1".into()));
        }
        if !(self.min_confidence > 0.0 && self.min_confidence <= 1.0) {
            return Err(GigError::Config("min_confidence must be in (0, 1]".into()));
        }
        if self.numeric_thresholds.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(GigError::Config("numeric thresholds must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Kind of a column judged from its non-missing values; `None` when the
/// column is entirely missing.
fn column_kind(table: &PseudoTable, index: usize) -> Option<ValueKind> {
    let mut kind = None;
    for row in &table.rows {
        match &row.values[index] {
            AttributeValue::Number(_) if kind.is_none() => kind = Some(ValueKind::Numeric),
            AttributeValue::Text(_) => return Some(ValueKind::Text),
            _ => {}
        }
    }
    kind
}

/// Enumerate the candidate constraints for one table, sorted by rendering.
///
/// Pair candidates cover column pairs with the same attribute name and
/// compatible labels; constant candidates cover values occurring at least
/// `min_support` times. `id` columns never appear in value constraints.
pub fn candidate_constraints(table: &PseudoTable, config: &MinerConfig) -> Result<Vec<DistanceConstraint>> {
    config.validate()?;
    if table.rows.is_empty() {
        return Err(GigError::Rule("cannot mine an empty table".into()));
    }
    let mut out = Vec::new();
    let cols = &table.columns;
    for i in 0..cols.len() {
        if cols[i].is_id() {
            continue;
        }
        for j in (i + 1)..cols.len() {
            if cols[j].is_id() || cols[i].attribute != cols[j].attribute {
                continue;
            }
            // Labels re-read from CSV are unknown; fall back to the
            // attribute-name check alone.
            if let (Some(a), Some(b)) = (&cols[i].label, &cols[j].label) {
                if a != b {
                    continue;
                }
            }
            let left = Operand::Cell {
                variable: cols[i].variable.clone(),
                attribute: cols[i].attribute.clone(),
            };
            let right = Operand::Cell {
                variable: cols[j].variable.clone(),
                attribute: cols[j].attribute.clone(),
            };
            let numeric = column_kind(table, i) == Some(ValueKind::Numeric)
                && column_kind(table, j) == Some(ValueKind::Numeric);
            if numeric {
                for t in &config.numeric_thresholds {
                    out.push(DistanceConstraint::abs(left.clone(), right.clone(), *t));
                }
            } else {
                for t in &config.edit_thresholds {
                    out.push(DistanceConstraint::edit(left.clone(), right.clone(), f64::from(*t)));
                }
            }
        }
    }
    for (index, col) in cols.iter().enumerate() {
        if col.is_id() {
            continue;
        }
        let mut counts: BTreeMap<&AttributeValue, u64> = BTreeMap::new();
        for row in &table.rows {
            let v = &row.values[index];
            if !v.is_missing() {
                *counts.entry(v).or_insert(0) += 1;
            }
        }
        for (value, count) in counts {
            if count >= config.min_support {
                out.push(DistanceConstraint::eq(
                    Operand::Cell {
                        variable: col.variable.clone(),
                        attribute: col.attribute.clone(),
                    },
                    Operand::Constant(value.clone()),
                ));
            }
        }
    }
    out.sort_by_key(|c| c.render());
    out.dedup_by_key(|c| c.render());
    Ok(out)
}

/// Support and confidence of a dependency on one table. Rows where either
/// side is undefined are excluded; support 0 leaves confidence undefined.
pub fn score(
    table: &PseudoTable,
    phi_x: &[DistanceConstraint],
    phi_y: &[DistanceConstraint],
) -> Result<(u64, Option<f64>)> {
    let ctx = EvalContext::new(table, None);
    let mut support = 0u64;
    let mut hits = 0u64;
    for row in &table.rows {
        let lhs = satisfies(row, phi_x, &ctx)?;
        let rhs = satisfies(row, phi_y, &ctx)?;
        if lhs == Sat::Undefined || rhs == Sat::Undefined {
            continue;
        }
        if lhs == Sat::Holds {
            support += 1;
            if rhs == Sat::Holds {
                hits += 1;
            }
        }
    }
    let confidence = (support > 0).then(|| hits as f64 / support as f64);
    Ok((support, confidence))
}

/// Rows where the LHS alone holds, undefined excluded. Anti-monotone in
/// the LHS, so it drives apriori pruning.
fn lhs_support(table: &PseudoTable, phi_x: &[DistanceConstraint], ctx: &EvalContext) -> Result<u64> {
    let mut support = 0u64;
    for row in &table.rows {
        if satisfies(row, phi_x, ctx)? == Sat::Holds {
            support += 1;
        }
    }
    Ok(support)
}

fn constraint_columns(c: &DistanceConstraint) -> BTreeSet<(String, String)> {
    c.referenced_columns().into_iter().collect()
}

/// Levelwise mining: singleton RHS, LHS of 1..=max_lhs_size candidates,
/// RHS columns disjoint from LHS columns. Output is minimal (no rule has
/// a returned strict LHS subset with the same RHS) and ordered by
/// confidence desc, support desc, then textual rendering.
pub fn mine(table: &PseudoTable, pattern_name: &str, config: &MinerConfig) -> Result<Vec<Gdd>> {
    let candidates = candidate_constraints(table, config)?;
    let ctx = EvalContext::new(table, None);
    let columns: Vec<BTreeSet<(String, String)>> =
        candidates.iter().map(constraint_columns).collect();

    // Accepted dependencies keyed by RHS rendering, each with its LHS
    // index set for the minimality pass.
    let mut accepted: Vec<(Vec<usize>, usize, u64, f64)> = Vec::new();
    let mut frontier: Vec<Vec<usize>> = (0..candidates.len()).map(|i| vec![i]).collect();
    let mut level = 1usize;
    while !frontier.is_empty() && level <= config.max_lhs_size {
        let mut frequent = Vec::new();
        for set in frontier {
            let phi_x: Vec<DistanceConstraint> =
                set.iter().map(|&i| candidates[i].clone()).collect();
            if lhs_support(table, &phi_x, &ctx)? < config.min_support {
                continue;
            }
            let lhs_cols: BTreeSet<(String, String)> =
                set.iter().flat_map(|&i| columns[i].iter().cloned()).collect();
            for (j, rhs) in candidates.iter().enumerate() {
                if set.contains(&j) || !columns[j].is_disjoint(&lhs_cols) {
                    continue;
                }
                let (support, confidence) = score(table, &phi_x, std::slice::from_ref(rhs))?;
                let Some(confidence) = confidence else { continue };
                if support >= config.min_support && confidence >= config.min_confidence {
                    accepted.push((set.clone(), j, support, confidence));
                }
            }
            frequent.push(set);
        }
        frontier = Vec::new();
        for set in &frequent {
            let last = *set.last().expect("sets are non-empty");
            for next in (last + 1)..candidates.len() {
                let mut extended = set.clone();
                extended.push(next);
                frontier.push(extended);
            }
        }
        level += 1;
    }

    // Minimality: drop a rule when a strict LHS subset was accepted for
    // the same RHS.
    let mut minimal = Vec::new();
    'outer: for (set, rhs, support, confidence) in &accepted {
        let as_set: BTreeSet<usize> = set.iter().copied().collect();
        for (other, other_rhs, _, _) in &accepted {
            if other_rhs == rhs && other.len() < set.len() {
                let other_set: BTreeSet<usize> = other.iter().copied().collect();
                if other_set.is_subset(&as_set) {
                    continue 'outer;
                }
            }
        }
        minimal.push((set.clone(), *rhs, *support, *confidence));
    }

    let mut rules: Vec<Gdd> = minimal
        .into_iter()
        .map(|(set, rhs, support, confidence)| {
            Gdd::new(
                "pending",
                pattern_name,
                set.iter().map(|&i| candidates[i].clone()).collect(),
                vec![candidates[rhs].clone()],
                Provenance::Mined { support, confidence },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    rules.sort_by_key(Gdd::rank_key);
    for (i, rule) in rules.iter_mut().enumerate() {
        rule.name = format!("r{}", i + 1);
    }
    Ok(rules)
}

/// Keep the best `top_k_per_rhs` rules per distinct RHS column target,
/// ranked by confidence desc, support desc, textual tiebreak.
pub fn select_rules(rules: &[Gdd], top_k_per_rhs: usize) -> Vec<Gdd> {
    let mut ranked: Vec<&Gdd> = rules.iter().collect();
    ranked.sort_by_key(|r| r.rank_key());
    let mut kept_per_target: BTreeMap<String, usize> = BTreeMap::new();
    let mut out = Vec::new();
    for rule in ranked {
        let target = format!(
            "{:?}",
            rule.phi_y
                .iter()
                .flat_map(|c| c.referenced_columns())
                .collect::<BTreeSet<_>>()
        );
        let kept = kept_per_target.entry(target).or_insert(0);
        if *kept < top_k_per_rhs {
            *kept += 1;
            out.push(rule.clone());
        }
    }
    out
}
