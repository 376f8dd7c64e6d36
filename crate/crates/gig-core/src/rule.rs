//! GDD rules: a scope name plus LHS/RHS constraint sets, consolidation,
//! positional masks, and table-level satisfaction checking.

use std::collections::BTreeMap;

use crate::constraint::{satisfies, DistanceConstraint, Sat, EvalContext};
use crate::error::{GigError, Result};
use crate::table::PseudoTable;

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Mined { support: u64, confidence: f64 },
    Loaded,
}

impl Provenance {
    /// Ranking key: loaded rules count as fully confident but unsupported.
    pub fn rank(&self) -> (f64, u64) {
        match self {
            Provenance::Mined { support, confidence } => (*confidence, *support),
            Provenance::Loaded => (1.0, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gdd {
    pub name: String,
    /// Name of the scope pattern the rule applies to.
    pub pattern_name: String,
    pub phi_x: Vec<DistanceConstraint>,
    pub phi_y: Vec<DistanceConstraint>,
    pub provenance: Provenance,
}

impl Gdd {
    pub fn new(
        name: impl Into<String>,
        pattern_name: impl Into<String>,
        phi_x: Vec<DistanceConstraint>,
        phi_y: Vec<DistanceConstraint>,
        provenance: Provenance,
    ) -> Result<Gdd> {
        if phi_y.is_empty() {
            return Err(GigError::Rule("a rule needs a non-empty RHS".into()));
        }
        let mut gdd = Gdd {
            name: name.into(),
            pattern_name: pattern_name.into(),
            phi_x,
            phi_y,
            provenance,
        };
        gdd.canonicalize();
        Ok(gdd)
    }

    /// Sort and dedupe both sides by their rendering.
    fn canonicalize(&mut self) {
        for phi in [&mut self.phi_x, &mut self.phi_y] {
            phi.sort_by_key(|c| c.render());
            phi.dedup_by_key(|c| c.render());
        }
    }

    pub fn render_lhs(&self) -> String {
        render_side(&self.phi_x)
    }

    pub fn render_rhs(&self) -> String {
        render_side(&self.phi_y)
    }

    /// Dependency body rendering, the textual tiebreak used for ordering.
    pub fn render_body(&self) -> String {
        format!("LHS: {} RHS: {}", self.render_lhs(), self.render_rhs())
    }

    /// Confidence/support ranking with textual tiebreak, best first.
    pub fn rank_key(&self) -> (std::cmp::Reverse<OrderedF64>, std::cmp::Reverse<u64>, String) {
        let (confidence, support) = self.provenance.rank();
        (
            std::cmp::Reverse(OrderedF64(confidence)),
            std::cmp::Reverse(support),
            self.render_body(),
        )
    }
}

#[derive(PartialEq, PartialOrd)]
pub struct OrderedF64(pub f64);

impl Eq for OrderedF64 {}

#[allow(clippy::derive_ord_xor_partial_ord)]
impl Ord for OrderedF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

fn render_side(phi: &[DistanceConstraint]) -> String {
    if phi.is_empty() {
        return ";".to_string();
    }
    phi.iter()
        .map(|c| format!("{}; ", c.render()))
        .collect::<String>()
        .trim_end()
        .to_string()
}

/// Merge rules sharing a scope: identical-LHS rules union their RHS, then
/// identical-RHS rules union their LHS (a grouping for training, not a
/// logical strengthening). Runs to a fixpoint so the result is idempotent.
pub fn consolidate(rules: &[Gdd]) -> Result<Vec<Gdd>> {
    if rules.is_empty() {
        return Ok(Vec::new());
    }
    let pattern_name = &rules[0].pattern_name;
    if rules.iter().any(|r| &r.pattern_name != pattern_name) {
        return Err(GigError::Rule("cannot consolidate rules over mixed scopes".into()));
    }
    let mut current: Vec<Gdd> = rules.to_vec();
    for _ in 0..rules.len() + 1 {
        let merged = merge_pass(&current)?;
        if merged.len() == current.len() {
            current = merged;
            break;
        }
        current = merged;
    }
    current.sort_by_key(|r| r.render_body());
    Ok(current)
}

fn merge_pass(rules: &[Gdd]) -> Result<Vec<Gdd>> {
    // Same LHS -> union of RHS.
    let mut by_lhs: BTreeMap<String, Gdd> = BTreeMap::new();
    for rule in rules {
        match by_lhs.get_mut(&rule.render_lhs()) {
            None => {
                by_lhs.insert(rule.render_lhs(), rule.clone());
            }
            Some(existing) => {
                existing.phi_y.extend(rule.phi_y.iter().cloned());
                existing.provenance = combine(&existing.provenance, &rule.provenance);
                existing.canonicalize();
            }
        }
    }
    // Same RHS -> union of LHS.
    let mut by_rhs: BTreeMap<String, Gdd> = BTreeMap::new();
    for rule in by_lhs.into_values() {
        match by_rhs.get_mut(&rule.render_rhs()) {
            None => {
                by_rhs.insert(rule.render_rhs(), rule);
            }
            Some(existing) => {
                existing.phi_x.extend(rule.phi_x.iter().cloned());
                existing.provenance = combine(&existing.provenance, &rule.provenance);
                existing.canonicalize();
            }
        }
    }
    Ok(by_rhs.into_values().collect())
}

fn combine(a: &Provenance, b: &Provenance) -> Provenance {
    match (a, b) {
        (
            Provenance::Mined { support: sa, confidence: ca },
            Provenance::Mined { support: sb, confidence: cb },
        ) => Provenance::Mined {
            support: (*sa).min(*sb),
            confidence: ca.min(*cb),
        },
        _ => Provenance::Loaded,
    }
}

/// Bit vector over pseudo-table columns; `rhs_bits` marks the subset of
/// set bits contributed by the RHS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositionalMask {
    pub bits: Vec<bool>,
    pub rhs_bits: Vec<bool>,
}

impl PositionalMask {
    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn as_ints(&self) -> Vec<u8> {
        self.bits.iter().map(|&b| u8::from(b)).collect()
    }
}

/// Mask over the table's columns: a bit per column referenced by either
/// side, with RHS columns also recorded in `rhs_bits`.
pub fn to_mask(gdd: &Gdd, table: &PseudoTable) -> Result<PositionalMask> {
    let mut bits = vec![false; table.width()];
    let mut rhs_bits = vec![false; table.width()];
    for (phi, rhs) in [(&gdd.phi_x, false), (&gdd.phi_y, true)] {
        for c in phi.iter() {
            for (variable, attribute) in c.referenced_columns() {
                let idx = table.column_index(&variable, &attribute)?;
                bits[idx] = true;
                if rhs {
                    rhs_bits[idx] = true;
                }
            }
        }
    }
    Ok(PositionalMask { bits, rhs_bits })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableSatisfaction {
    pub satisfied: bool,
    /// Match ids where the LHS holds and the RHS fails.
    pub violations: Vec<usize>,
    /// Match ids skipped because either side was undefined.
    pub skipped: Vec<usize>,
}

/// Check a rule against every row of its table.
pub fn table_satisfies(table: &PseudoTable, gdd: &Gdd, ctx: &EvalContext) -> Result<TableSatisfaction> {
    if !std::ptr::eq(ctx.table, table) {
        return Err(GigError::Rule("evaluation context bound to a different table".into()));
    }
    let mut violations = Vec::new();
    let mut skipped = Vec::new();
    for row in &table.rows {
        let lhs = satisfies(row, &gdd.phi_x, ctx)?;
        let rhs = satisfies(row, &gdd.phi_y, ctx)?;
        match (lhs, rhs) {
            (Sat::Undefined, _) | (_, Sat::Undefined) => skipped.push(row.match_id),
            (Sat::Holds, Sat::Fails) => violations.push(row.match_id),
            _ => {}
        }
    }
    Ok(TableSatisfaction {
        satisfied: violations.is_empty(),
        violations,
        skipped,
    })
}
