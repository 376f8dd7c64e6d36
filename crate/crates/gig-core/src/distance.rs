//! Distance functions behind a common trait, registered by name so a
//! constraint can select its function at evaluation time.

use std::collections::BTreeMap;

use crate::error::{GigError, Result};
use crate::value::AttributeValue;

/// A symmetric, non-negative distance on attribute values.
pub trait DistanceFn: Send + Sync {
    fn name(&self) -> &'static str;
    fn eval(&self, a: &AttributeValue, b: &AttributeValue) -> Result<f64>;
}

/// Unit-cost Levenshtein distance on the textual forms; numbers are
/// stringified first.
pub struct EditDistance;

impl DistanceFn for EditDistance {
    fn name(&self) -> &'static str {
        "edit"
    }

    fn eval(&self, a: &AttributeValue, b: &AttributeValue) -> Result<f64> {
        let (a, b) = (text_of(a)?, text_of(b)?);
        Ok(levenshtein(&a, &b) as f64)
    }
}

/// |a - b| on numeric views; non-numeric text is a type error.
pub struct AbsoluteDifference;

impl DistanceFn for AbsoluteDifference {
    fn name(&self) -> &'static str {
        "abs"
    }

    fn eval(&self, a: &AttributeValue, b: &AttributeValue) -> Result<f64> {
        let na = a.as_number().ok_or_else(|| non_numeric(a))?;
        let nb = b.as_number().ok_or_else(|| non_numeric(b))?;
        Ok((na - nb).abs())
    }
}

/// 0 when the textual forms coincide, 1 otherwise.
pub struct ExactEquality;

impl DistanceFn for ExactEquality {
    fn name(&self) -> &'static str {
        "exact"
    }

    fn eval(&self, a: &AttributeValue, b: &AttributeValue) -> Result<f64> {
        Ok(if text_of(a)? == text_of(b)? { 0.0 } else { 1.0 })
    }
}

fn text_of(v: &AttributeValue) -> Result<String> {
    v.as_text()
        .ok_or_else(|| GigError::Distance("missing value has no distance".into()))
}

fn non_numeric(v: &AttributeValue) -> GigError {
    GigError::Distance(format!("`{v}` is not numeric"))
}

pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut current = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        current[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let substitution = prev[j] + usize::from(ca != cb);
            current[j + 1] = substitution.min(prev[j + 1] + 1).min(current[j] + 1);
        }
        std::mem::swap(&mut prev, &mut current);
    }
    prev[b.len()]
}

/// Named distance functions; `edit`, `abs` and `exact` are built in and
/// callers may register their own.
pub struct DistanceRegistry {
    fns: BTreeMap<&'static str, Box<dyn DistanceFn>>,
}

impl Default for DistanceRegistry {
    fn default() -> Self {
        let mut registry = DistanceRegistry { fns: BTreeMap::new() };
        registry.register(Box::new(EditDistance));
        registry.register(Box::new(AbsoluteDifference));
        registry.register(Box::new(ExactEquality));
        registry
    }
}

impl DistanceRegistry {
    pub fn register(&mut self, f: Box<dyn DistanceFn>) {
        self.fns.insert(f.name(), f);
    }

    pub fn get(&self, name: &str) -> Result<&dyn DistanceFn> {
        self.fns
            .get(name)
            .map(|f| f.as_ref())
            .ok_or_else(|| GigError::Distance(format!("unknown distance function `{name}`")))
    }

    /// Evaluate a named function; `None` when either side is missing.
    /// Wildcard operands are resolved to distance 0 before this point.
    pub fn eval(&self, name: &str, a: &AttributeValue, b: &AttributeValue) -> Result<Option<f64>> {
        if a.is_missing() || b.is_missing() {
            return Ok(None);
        }
        self.get(name)?.eval(a, b).map(Some)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent recursive definition used as the oracle.
    fn levenshtein_recursive(a: &[char], b: &[char]) -> usize {
        match (a.split_first(), b.split_first()) {
            (None, _) => b.len(),
            (_, None) => a.len(),
            (Some((ca, ra)), Some((cb, rb))) => {
                if ca == cb {
                    levenshtein_recursive(ra, rb)
                } else {
                    1 + levenshtein_recursive(ra, b)
                        .min(levenshtein_recursive(a, rb))
                        .min(levenshtein_recursive(ra, rb))
                }
            }
        }
    }

    #[test]
    fn edit_distance_af9_af11_is_2() {
        let oracle = levenshtein_recursive(
            &"AF9".chars().collect::<Vec<_>>(),
            &"AF11".chars().collect::<Vec<_>>(),
        );
        assert_eq!(oracle, 2);
        assert_eq!(levenshtein("AF9", "AF11"), 2);
    }

    #[test]
    fn identity_gives_zero_for_every_fn() {
        let registry = DistanceRegistry::default();
        let v = AttributeValue::text("F20");
        let n = AttributeValue::Number(3.5);
        for name in ["edit", "exact"] {
            assert_eq!(registry.eval(name, &v, &v).unwrap(), Some(0.0));
        }
        assert_eq!(registry.eval("abs", &n, &n).unwrap(), Some(0.0));
    }

    #[test]
    fn abs_on_text_is_a_type_error() {
        let registry = DistanceRegistry::default();
        let v = AttributeValue::text("£50");
        assert!(registry.eval("abs", &v, &v).is_err());
    }

    #[test]
    fn missing_side_is_undefined() {
        let registry = DistanceRegistry::default();
        let v = AttributeValue::text("a");
        let m = AttributeValue::Missing;
        assert_eq!(registry.eval("edit", &v, &m).unwrap(), None);
    }

    #[test]
    fn numbers_are_stringified_for_edit() {
        let registry = DistanceRegistry::default();
        let a = AttributeValue::Number(2018.0);
        let b = AttributeValue::text("2019");
        assert_eq!(registry.eval("edit", &a, &b).unwrap(), Some(1.0));
    }

    proptest! {
        #[test]
        fn edit_matches_recursive_oracle(a in "[a-c]{0,6}", b in "[a-c]{0,6}") {
            let oracle = levenshtein_recursive(
                &a.chars().collect::<Vec<_>>(),
                &b.chars().collect::<Vec<_>>(),
            );
            prop_assert_eq!(levenshtein(&a, &b), oracle);
        }

        #[test]
        fn distances_symmetric_and_nonnegative(a in "[a-d]{0,8}", b in "[a-d]{0,8}") {
            let registry = DistanceRegistry::default();
            let va = AttributeValue::text(a);
            let vb = AttributeValue::text(b);
            for name in ["edit", "exact"] {
                let ab = registry.eval(name, &va, &vb).unwrap().unwrap();
                let ba = registry.eval(name, &vb, &va).unwrap().unwrap();
                prop_assert_eq!(ab, ba);
                prop_assert!(ab >= 0.0);
            }
        }

        #[test]
        fn edit_triangle_inequality(
            a in "[a-c]{0,5}", b in "[a-c]{0,5}", c in "[a-c]{0,5}"
        ) {
            let ab = levenshtein(&a, &b);
            let bc = levenshtein(&b, &c);
            let ac = levenshtein(&a, &c);
            prop_assert!(ac <= ab + bc);
        }
    }
}
