//! Token inventory: specials at fixed ids, structural tokens (column
//! refs and op-thresholds) from the rules, value tokens from the cells
//! the rules reference.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::constraint::{CmpOp, DistanceConstraint};
use crate::error::{GigError, Result};
use crate::rule::Gdd;
use crate::table::PseudoTable;
use crate::value::format_number;

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const SEP: usize = 4;

pub const SPECIALS: [&str; 5] = ["<pad>", "<bos>", "<eos>", "<unk>", "<sep>"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenKind {
    Special,
    /// Column refs and op-threshold tokens taken from rule text.
    Structural,
    /// Whitespace-split attribute value words.
    Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    kinds: Vec<TokenKind>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Specials first, then structural and value tokens each in sorted
    /// order; duplicates keep their first (structural) classification.
    pub fn new(structural: BTreeSet<String>, values: BTreeSet<String>) -> Vocabulary {
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let mut kinds = vec![TokenKind::Special; SPECIALS.len()];
        for t in structural {
            if !tokens.contains(&t) {
                tokens.push(t);
                kinds.push(TokenKind::Structural);
            }
        }
        for t in values {
            if !tokens.contains(&t) {
                tokens.push(t);
                kinds.push(TokenKind::Value);
            }
        }
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { tokens, kinds, index }
    }

    /// Rebuild the lookup index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of a token; unknown tokens map to UNK.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Result<&str> {
        self.tokens
            .get(id)
            .map(String::as_str)
            .ok_or_else(|| GigError::Model(format!("token id {id} out of range")))
    }

    pub fn kind(&self, id: usize) -> Result<TokenKind> {
        self.kinds
            .get(id)
            .copied()
            .ok_or_else(|| GigError::Model(format!("token id {id} out of range")))
    }
}

/// The op-threshold token of a constraint, e.g. `=0` or `<=1`.
pub fn op_token(c: &DistanceConstraint) -> String {
    match c.op {
        CmpOp::Eq => format!("={}", format_number(c.threshold)),
        CmpOp::Le => format!("<={}", format_number(c.threshold)),
    }
}

/// Whitespace-split value words of one rendered attribute value.
pub fn value_words(rendered: &str) -> Vec<String> {
    rendered.split_whitespace().map(str::to_string).collect()
}

/// Vocabulary over everything the rules can mention in this table:
/// their column-ref and op tokens plus all distinct non-missing values
/// of rule-referenced columns.
pub fn build_vocab(table: &PseudoTable, rules: &[Gdd]) -> Vocabulary {
    let mut structural = BTreeSet::new();
    let mut values = BTreeSet::new();
    let mut referenced = BTreeSet::new();
    for rule in rules {
        for c in rule.phi_x.iter().chain(rule.phi_y.iter()) {
            structural.insert(op_token(c));
            for (variable, attribute) in c.referenced_columns() {
                structural.insert(format!("{variable}.{attribute}"));
                referenced.insert((variable, attribute));
            }
        }
    }
    for (variable, attribute) in &referenced {
        if let Ok(index) = table.column_index(variable, attribute) {
            for row in &table.rows {
                let v = &row.values[index];
                if !v.is_missing() {
                    values.extend(value_words(&v.to_string()));
                }
            }
        }
    }
    Vocabulary::new(structural, values)
}
