//! The p-parametrized Kendall distance between top-k lists.

use crate::error::{Error, Result};
use crate::types::TopKList;

/// Pairwise disagreement between two top-k lists, restricted to pairs drawn
/// from the union of their ranked items.
///
/// A pair ordered oppositely by the two lists costs 1; a pair comparable in
/// exactly one list costs `p`; everything else costs 0. Symmetric in its
/// arguments, zero on identical lists. The two lists may have different k.
pub fn kendall_p_distance(a: &TopKList, b: &TopKList, p: f64) -> Result<f64> {
    if a.universe() != b.universe() {
        return Err(Error::UniverseMismatch);
    }
    let mut union: Vec<u32> = a.items().to_vec();
    for &x in b.items() {
        if !a.contains(x) {
            union.push(x);
        }
    }

    // rel > 0: first argument above second; rel < 0: below; None: incomparable.
    let relation = |list: &TopKList, x: u32, y: u32| -> Option<bool> {
        match (list.position_of(x), list.position_of(y)) {
            (Some(px), Some(py)) => Some(px < py),
            (Some(_), None) => Some(true),
            (None, Some(_)) => Some(false),
            (None, None) => None,
        }
    };

    let mut total = 0.0;
    for (idx, &x) in union.iter().enumerate() {
        for &y in &union[idx + 1..] {
            match (relation(a, x, y), relation(b, x, y)) {
                (Some(ra), Some(rb)) if ra != rb => total += 1.0,
                (Some(_), None) | (None, Some(_)) => total += p,
                _ => {}
            }
        }
    }
    Ok(total)
}
