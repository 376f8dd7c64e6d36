//! Instantiated literal sequences: rule constraints rendered against a
//! row's values, shared between training-pair construction and the
//! imputer's encoder-input assembly.

use crate::constraint::{satisfies, DistanceConstraint, EvalContext, Sat};
use crate::error::{GigError, Result};
use crate::graph::PropertyGraph;
use crate::model::vocab::{op_token, value_words, Vocabulary, BOS, EOS, SEP, SPECIALS};
use crate::rule::Gdd;
use crate::table::{PseudoTable, Row};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingPair {
    pub enc: Vec<usize>,
    /// BOS-prefixed, EOS-terminated.
    pub dec: Vec<usize>,
    pub rule: String,
    pub match_id: usize,
}

/// Literal token strings for one side of a rule on one row: per
/// constraint `[column refs..., op-threshold, value words...]`, with
/// `<sep>` between constraints. On the RHS the value words of each
/// referenced column form their own `<sep>`-separated group so decoded
/// values stay attributable to a column.
///
/// `None` when a referenced cell of the row is missing.
fn literal_tokens(
    phi: &[DistanceConstraint],
    row: &Row,
    table: &PseudoTable,
    group_values: bool,
) -> Result<Option<Vec<String>>> {
    let sep = SPECIALS[SEP].to_string();
    let mut out = Vec::new();
    for (ci, c) in phi.iter().enumerate() {
        if ci > 0 {
            out.push(sep.clone());
        }
        let refs = c.referenced_columns();
        for (variable, attribute) in &refs {
            out.push(format!("{variable}.{attribute}"));
        }
        out.push(op_token(c));
        for (gi, (variable, attribute)) in refs.iter().enumerate() {
            if group_values && gi > 0 {
                out.push(sep.clone());
            }
            let index = table.column_index(variable, attribute)?;
            let value = &row.values[index];
            if value.is_missing() {
                return Ok(None);
            }
            out.extend(value_words(&value.to_string()));
        }
    }
    Ok(Some(out))
}

/// Encoder-side LHS literals of a rule on one row.
pub fn lhs_tokens(rule: &Gdd, row: &Row, table: &PseudoTable) -> Result<Option<Vec<String>>> {
    literal_tokens(&rule.phi_x, row, table, false)
}

/// Decoder-side RHS literals of a rule on one row.
pub fn rhs_tokens(rule: &Gdd, row: &Row, table: &PseudoTable) -> Result<Option<Vec<String>>> {
    literal_tokens(&rule.phi_y, row, table, true)
}

/// Flat index of the decoded value group that carries column `m`:
/// groups enumerate (constraint, referenced column) pairs in order.
pub fn rhs_group_for_column(rule: &Gdd, table: &PseudoTable, m: usize) -> Result<Option<usize>> {
    let mut group = 0usize;
    for c in &rule.phi_y {
        for (variable, attribute) in c.referenced_columns() {
            if table.column_index(&variable, &attribute)? == m {
                return Ok(Some(group));
            }
            group += 1;
        }
    }
    Ok(None)
}

fn encode(tokens: &[String], vocab: &Vocabulary) -> Vec<usize> {
    tokens.iter().map(|t| vocab.id(t)).collect()
}

/// One pair per (rule, row) where both sides hold; rows touching a
/// missing referenced cell evaluate as undefined and are excluded.
pub fn make_training_pairs(
    table: &PseudoTable,
    rules: &[Gdd],
    graph: &PropertyGraph,
    vocab: &Vocabulary,
    max_seq_len: usize,
) -> Result<Vec<TrainingPair>> {
    let ctx = EvalContext::new(table, Some(graph));
    let mut pairs = Vec::new();
    for rule in rules {
        for row in &table.rows {
            if satisfies(row, &rule.phi_x, &ctx)? != Sat::Holds
                || satisfies(row, &rule.phi_y, &ctx)? != Sat::Holds
            {
                continue;
            }
            let (Some(enc_tokens), Some(dec_tokens)) =
                (lhs_tokens(rule, row, table)?, rhs_tokens(rule, row, table)?)
            else {
                continue;
            };
            let enc = encode(&enc_tokens, vocab);
            let mut dec = Vec::with_capacity(dec_tokens.len() + 2);
            dec.push(BOS);
            dec.extend(encode(&dec_tokens, vocab));
            dec.push(EOS);
            if enc.len() > max_seq_len || dec.len() > max_seq_len {
                return Err(GigError::Model(format!(
                    "rule {} on match {} exceeds max_seq_len {max_seq_len}",
                    rule.name, row.match_id
                )));
            }
            pairs.push(TrainingPair {
                enc,
                dec,
                rule: rule.name.clone(),
                match_id: row.match_id,
            });
        }
    }
    Ok(pairs)
}
