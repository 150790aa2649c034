//! Order in which pending verticals are served.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{PriorityClass, VerticalId};

/// Groups verticals by priority, highest first. A vertical listed more than
/// once takes its highest priority. Members of a class are sorted by id.
pub fn priority_classes(pending: &[(VerticalId, i64)]) -> Vec<PriorityClass> {
    let mut best: BTreeMap<&VerticalId, i64> = BTreeMap::new();
    for (id, priority) in pending {
        best.entry(id)
            .and_modify(|p| *p = (*p).max(*priority))
            .or_insert(*priority);
    }
    let mut classes: BTreeMap<i64, Vec<VerticalId>> = BTreeMap::new();
    for (id, priority) in best {
        classes.entry(priority).or_default().push(id.clone());
    }
    classes
        .into_iter()
        .rev()
        .map(|(priority, vertical_ids)| PriorityClass {
            priority,
            vertical_ids,
        })
        .collect()
}

/// Serves classes in descending priority; inside a class the next vertical is
/// drawn uniformly among those not served yet. The same seed gives the same
/// order.
pub fn order_verticals(pending: &[(VerticalId, i64)], seed: u64) -> Vec<VerticalId> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = Vec::with_capacity(pending.len());
    for class in priority_classes(pending) {
        let mut left = class.vertical_ids;
        while !left.is_empty() {
            let pick = rng.gen_range(0..left.len());
            order.push(left.remove(pick));
        }
    }
    order
}
