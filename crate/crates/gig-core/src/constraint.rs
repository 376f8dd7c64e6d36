//! Distance constraints and their three-valued evaluation over pseudo-table
//! rows: a constraint holds, fails, or is undefined when a referenced cell
//! is missing.

use std::fmt;

use crate::distance::DistanceRegistry;
use crate::error::{GigError, Result};
use crate::graph::PropertyGraph;
use crate::table::{PseudoTable, Row, ID_ATTR};
use crate::value::AttributeValue;

/// Function names for the two equality forms that do not live in the
/// distance registry.
pub const FN_EID: &str = "eid";
pub const FN_REL: &str = "rel";
pub const FN_EXACT: &str = "exact";
pub const FN_EDIT: &str = "edit";
pub const FN_ABS: &str = "abs";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Operand {
    /// A pseudo-table cell.
    Cell { variable: String, attribute: String },
    Constant(AttributeValue),
    Wildcard,
    /// The entity id bound to a pattern variable.
    Eid { variable: String },
    /// The set of nodes reached from a variable over a named relation.
    Relation { variable: String, rela: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CmpOp {
    Le,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceConstraint {
    /// Distance function name; `edit`/`abs`/`exact` resolve through the
    /// registry, `eid`/`rel` are the structural equality forms.
    pub func: String,
    pub left: Operand,
    pub right: Operand,
    pub op: CmpOp,
    pub threshold: f64,
}

impl DistanceConstraint {
    pub fn edit(left: Operand, right: Operand, threshold: f64) -> DistanceConstraint {
        DistanceConstraint {
            func: FN_EDIT.into(),
            left,
            right,
            op: CmpOp::Le,
            threshold,
        }
    }

    pub fn abs(left: Operand, right: Operand, threshold: f64) -> DistanceConstraint {
        DistanceConstraint {
            func: FN_ABS.into(),
            left,
            right,
            op: CmpOp::Le,
            threshold,
        }
    }

    /// Exact equality; picks the eid form when an operand is an eid.
    pub fn eq(left: Operand, right: Operand) -> DistanceConstraint {
        let structural = matches!(left, Operand::Eid { .. }) || matches!(right, Operand::Eid { .. });
        DistanceConstraint {
            func: if structural { FN_EID.into() } else { FN_EXACT.into() },
            left,
            right,
            op: CmpOp::Eq,
            threshold: 0.0,
        }
    }

    pub fn rel(variable: &str, rela: &str, end: Operand) -> DistanceConstraint {
        DistanceConstraint {
            func: FN_REL.into(),
            left: Operand::Relation {
                variable: variable.into(),
                rela: rela.into(),
            },
            right: end,
            op: CmpOp::Eq,
            threshold: 0.0,
        }
    }

    /// Table columns referenced by this constraint, left operand first.
    /// Eid and relation operands reference the variable's `id` column.
    pub fn referenced_columns(&self) -> Vec<(String, String)> {
        let mut refs = Vec::new();
        for operand in [&self.left, &self.right] {
            match operand {
                Operand::Cell { variable, attribute } => {
                    refs.push((variable.clone(), attribute.clone()));
                }
                Operand::Eid { variable } | Operand::Relation { variable, .. } => {
                    refs.push((variable.clone(), ID_ATTR.to_string()));
                }
                Operand::Constant(_) | Operand::Wildcard => {}
            }
        }
        refs
    }

    /// Canonical rendering, identical to the rule DSL constraint syntax.
    pub fn render(&self) -> String {
        self.to_string()
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Cell { variable, attribute } => write!(f, "{variable}.{attribute}"),
            Operand::Constant(v) => write!(f, "{}", quote(&v.to_string())),
            Operand::Wildcard => write!(f, "*"),
            Operand::Eid { variable } => write!(f, "{variable}.eid"),
            Operand::Relation { variable, .. } => write!(f, "{variable}"),
        }
    }
}

impl fmt::Display for DistanceConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.func.as_str() {
            FN_REL => {
                let rela = match &self.left {
                    Operand::Relation { rela, .. } => rela.as_str(),
                    _ => "?",
                };
                write!(f, "rel({}, {}, {})", self.left, quote(rela), self.right)
            }
            FN_EXACT | FN_EID => write!(f, "eq({}, {})", self.left, self.right),
            name => write!(
                f,
                "{name}({}, {}) <= {}",
                self.left,
                self.right,
                crate::value::format_number(self.threshold)
            ),
        }
    }
}

/// Three-valued satisfaction status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sat {
    Holds,
    Fails,
    Undefined,
}

/// Everything needed to evaluate constraints against one table.
pub struct EvalContext<'a> {
    pub table: &'a PseudoTable,
    pub graph: Option<&'a PropertyGraph>,
    pub registry: &'a DistanceRegistry,
}

impl<'a> EvalContext<'a> {
    pub fn new(table: &'a PseudoTable, graph: Option<&'a PropertyGraph>) -> EvalContext<'a> {
        static DEFAULT_REGISTRY: std::sync::OnceLock<DistanceRegistry> = std::sync::OnceLock::new();
        EvalContext {
            table,
            graph,
            registry: DEFAULT_REGISTRY.get_or_init(DistanceRegistry::default),
        }
    }

    fn cell<'r>(&self, row: &'r Row, variable: &str, attribute: &str) -> Result<&'r AttributeValue> {
        let idx = self.table.column_index(variable, attribute)?;
        Ok(&row.values[idx])
    }

    fn bound_eid(&self, row: &Row, variable: &str) -> Result<String> {
        let value = self.cell(row, variable, ID_ATTR)?;
        value
            .as_text()
            .ok_or_else(|| GigError::Rule(format!("no id bound for variable `{variable}`")))
    }
}

/// Evaluate one constraint on one row.
pub fn check_constraint(c: &DistanceConstraint, row: &Row, ctx: &EvalContext) -> Result<Sat> {
    let distance = match c.func.as_str() {
        FN_REL => return check_relation(c, row, ctx),
        FN_EID => {
            let left = resolve_id(&c.left, row, ctx)?;
            let right = resolve_id(&c.right, row, ctx)?;
            match (left, right) {
                (IdOperand::Wildcard, _) | (_, IdOperand::Wildcard) => Some(0.0),
                (IdOperand::Id(a), IdOperand::Id(b)) => Some(if a == b { 0.0 } else { 1.0 }),
            }
        }
        name => {
            let left = resolve_value(&c.left, row, ctx)?;
            let right = resolve_value(&c.right, row, ctx)?;
            match (left, right) {
                (ValueOperand::Wildcard, _) | (_, ValueOperand::Wildcard) => Some(0.0),
                (ValueOperand::Value(a), ValueOperand::Value(b)) => {
                    ctx.registry.eval(name, &a, &b)?
                }
            }
        }
    };
    Ok(match distance {
        None => Sat::Undefined,
        Some(d) if d <= c.threshold => Sat::Holds,
        Some(_) => Sat::Fails,
    })
}

enum ValueOperand {
    Value(AttributeValue),
    Wildcard,
}

enum IdOperand {
    Id(String),
    Wildcard,
}

fn resolve_value(operand: &Operand, row: &Row, ctx: &EvalContext) -> Result<ValueOperand> {
    Ok(match operand {
        Operand::Cell { variable, attribute } => {
            ValueOperand::Value(ctx.cell(row, variable, attribute)?.clone())
        }
        Operand::Constant(v) => ValueOperand::Value(v.clone()),
        Operand::Wildcard => ValueOperand::Wildcard,
        Operand::Eid { variable } => {
            ValueOperand::Value(AttributeValue::text(ctx.bound_eid(row, variable)?))
        }
        Operand::Relation { .. } => {
            return Err(GigError::Rule(
                "relation operand outside a rel(...) constraint".into(),
            ))
        }
    })
}

fn resolve_id(operand: &Operand, row: &Row, ctx: &EvalContext) -> Result<IdOperand> {
    Ok(match operand {
        Operand::Eid { variable } => IdOperand::Id(ctx.bound_eid(row, variable)?),
        Operand::Constant(v) => IdOperand::Id(
            v.as_text()
                .ok_or_else(|| GigError::Rule("missing constant in eid constraint".into()))?,
        ),
        Operand::Wildcard => IdOperand::Wildcard,
        other => {
            return Err(GigError::Rule(format!(
                "operand `{other}` not usable in an eid constraint"
            )))
        }
    })
}

fn check_relation(c: &DistanceConstraint, row: &Row, ctx: &EvalContext) -> Result<Sat> {
    let graph = ctx
        .graph
        .ok_or_else(|| GigError::Rule("relation constraint needs a graph".into()))?;
    let (variable, rela) = match &c.left {
        Operand::Relation { variable, rela } => (variable, rela),
        other => {
            return Err(GigError::Rule(format!(
                "rel constraint has non-relation left operand `{other}`"
            )))
        }
    };
    let src = ctx.bound_eid(row, variable)?;
    let targets = graph.relation_targets(&src, rela);
    let holds = match &c.right {
        Operand::Constant(v) => {
            let end = v
                .as_text()
                .ok_or_else(|| GigError::Rule("missing constant in rel constraint".into()))?;
            targets.contains(&end)
        }
        Operand::Relation {
            variable: other_var,
            rela: other_rela,
        } => {
            let other_src = ctx.bound_eid(row, other_var)?;
            let other_targets = graph.relation_targets(&other_src, other_rela);
            targets.iter().any(|t| other_targets.contains(t))
        }
        Operand::Wildcard => !targets.is_empty(),
        other => {
            return Err(GigError::Rule(format!(
                "operand `{other}` not usable in a rel constraint"
            )))
        }
    };
    Ok(if holds { Sat::Holds } else { Sat::Fails })
}

/// Conjunction over a constraint set: fails dominates, then undefined.
/// An empty set holds vacuously.
pub fn satisfies(row: &Row, phi: &[DistanceConstraint], ctx: &EvalContext) -> Result<Sat> {
    let mut saw_undefined = false;
    for c in phi {
        match check_constraint(c, row, ctx)? {
            Sat::Fails => return Ok(Sat::Fails),
            Sat::Undefined => saw_undefined = true,
            Sat::Holds => {}
        }
    }
    Ok(if saw_undefined { Sat::Undefined } else { Sat::Holds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn cell(variable: &str, attribute: &str) -> Operand {
        Operand::Cell {
            variable: variable.into(),
            attribute: attribute.into(),
        }
    }

    fn table1() -> (crate::graph::PropertyGraph, PseudoTable) {
        let graph = fixtures::table1_graph_missing();
        let table = PseudoTable::build(&graph, &fixtures::table1_pattern()).unwrap();
        (graph, table)
    }

    #[test]
    fn genre_equality_holds_on_h1() {
        let (graph, table) = table1();
        let ctx = EvalContext::new(&table, Some(&graph));
        let c = DistanceConstraint::eq(cell("y", "Genre"), cell("y2", "Genre"));
        assert_eq!(check_constraint(&c, &table.rows[0], &ctx).unwrap(), Sat::Holds);
    }

    #[test]
    fn year_equality_fails_on_h3() {
        let (graph, table) = table1();
        let ctx = EvalContext::new(&table, Some(&graph));
        let c = DistanceConstraint::eq(cell("y", "Year"), cell("y2", "Year"));
        assert_eq!(check_constraint(&c, &table.rows[2], &ctx).unwrap(), Sat::Fails);
    }

    #[test]
    fn missing_cell_makes_constraint_undefined() {
        let (graph, table) = table1();
        let ctx = EvalContext::new(&table, Some(&graph));
        let c = DistanceConstraint::edit(cell("y", "Name"), cell("y2", "Name"), 1.0);
        assert_eq!(
            check_constraint(&c, &table.rows[1], &ctx).unwrap(),
            Sat::Undefined
        );
    }

    #[test]
    fn wildcard_side_always_holds() {
        let (graph, table) = table1();
        let ctx = EvalContext::new(&table, Some(&graph));
        let c = DistanceConstraint::eq(cell("y", "Name"), Operand::Wildcard);
        // Even on the row whose y.Name is missing.
        for row in &table.rows {
            assert_eq!(check_constraint(&c, row, &ctx).unwrap(), Sat::Holds);
        }
    }

    #[test]
    fn eid_constant_form() {
        let (graph, table) = table1();
        let ctx = EvalContext::new(&table, Some(&graph));
        let c = DistanceConstraint::eq(
            Operand::Eid { variable: "x".into() },
            Operand::Constant(AttributeValue::text("3")),
        );
        assert_eq!(c.func, FN_EID);
        assert_eq!(check_constraint(&c, &table.rows[0], &ctx).unwrap(), Sat::Fails);
        assert_eq!(check_constraint(&c, &table.rows[1], &ctx).unwrap(), Sat::Holds);
    }

    #[test]
    fn relation_forms() {
        let (graph, table) = table1();
        let ctx = EvalContext::new(&table, Some(&graph));
        // x publishes y (constant end per row h1: node 4).
        let c = DistanceConstraint::rel("x", "publishes", Operand::Constant(AttributeValue::text("4")));
        assert_eq!(check_constraint(&c, &table.rows[0], &ctx).unwrap(), Sat::Holds);
        assert_eq!(check_constraint(&c, &table.rows[1], &ctx).unwrap(), Sat::Fails);
        // Pair form on the same variable trivially shares a target.
        let pair = DistanceConstraint::rel(
            "x",
            "publishes",
            Operand::Relation {
                variable: "x".into(),
                rela: "publishes".into(),
            },
        );
        assert_eq!(check_constraint(&pair, &table.rows[0], &ctx).unwrap(), Sat::Holds);
    }

    #[test]
    fn empty_phi_holds_vacuously() {
        let (graph, table) = table1();
        let ctx = EvalContext::new(&table, Some(&graph));
        for row in &table.rows {
            assert_eq!(satisfies(row, &[], &ctx).unwrap(), Sat::Holds);
        }
    }

    #[test]
    fn identity_constraint_holds_on_complete_rows() {
        let (graph, table) = table1();
        let ctx = EvalContext::new(&table, Some(&graph));
        let phi = vec![DistanceConstraint::edit(cell("x", "Name"), cell("x", "Name"), 0.0)];
        for row in &table.rows {
            assert_eq!(satisfies(row, &phi, &ctx).unwrap(), Sat::Holds);
        }
    }

    #[test]
    fn name_similarity_fails_at_distance_two() {
        let (graph, table) = table1();
        let ctx = EvalContext::new(&table, Some(&graph));
        // Row h1 has names AF9 / AF11 at edit distance 2.
        let phi = vec![DistanceConstraint::edit(cell("y", "Name"), cell("y2", "Name"), 1.0)];
        assert_eq!(satisfies(&table.rows[0], &phi, &ctx).unwrap(), Sat::Fails);
    }

    #[test]
    fn rendering_is_dsl_shaped() {
        let c = DistanceConstraint::edit(cell("y", "Name"), cell("y2", "Name"), 1.0);
        assert_eq!(c.render(), "edit(y.Name, y2.Name) <= 1");
        let c = DistanceConstraint::eq(cell("x", "Name"), Operand::Constant(AttributeValue::text("EA")));
        assert_eq!(c.render(), "eq(x.Name, \"EA\")");
        let c = DistanceConstraint::eq(
            Operand::Eid { variable: "x".into() },
            Operand::Constant(AttributeValue::text("C5")),
        );
        assert_eq!(c.render(), "eq(x.eid, \"C5\")");
    }
}
