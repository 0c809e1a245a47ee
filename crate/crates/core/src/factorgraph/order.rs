//! Greedy minimum-fill elimination ordering.

use std::collections::{BTreeMap, BTreeSet};

use crate::logtensor::AxisId;

/// A sequence of distinct variables to eliminate.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EliminationOrder(Vec<AxisId>);

impl EliminationOrder {
    pub fn new(order: Vec<AxisId>) -> Self {
        Self(order)
    }

    pub fn as_slice(&self) -> &[AxisId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<AxisId>> for EliminationOrder {
    fn from(v: Vec<AxisId>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Score {
    fill: usize,
    size: u128,
}

/// Orders every variable in `cards` by repeatedly eliminating the one whose
/// removal adds the fewest new edges to the interaction graph, breaking ties
/// by the size of the factor it would create and then by lowest id.
///
/// `scopes` are the factor scopes; axes not in `cards` are ignored.
pub fn greedy_order_for_scopes(scopes: &[Vec<AxisId>], cards: &BTreeMap<AxisId, usize>) -> EliminationOrder {
    let mut adj: BTreeMap<AxisId, BTreeSet<AxisId>> = cards.keys().map(|&a| (a, BTreeSet::new())).collect();
    for scope in scopes {
        let live: Vec<AxisId> = scope.iter().copied().filter(|a| cards.contains_key(a)).collect();
        for &a in &live {
            for &b in &live {
                if a != b {
                    adj.get_mut(&a).unwrap().insert(b);
                }
            }
        }
    }

    let score = |adj: &BTreeMap<AxisId, BTreeSet<AxisId>>, v: AxisId| -> Score {
        let nbrs = &adj[&v];
        let m = nbrs.len();
        // Count existing edges inside the neighbourhood from the sparser side.
        let mut twice_edges = 0usize;
        for u in nbrs {
            let au = &adj[u];
            if au.len() <= nbrs.len() {
                twice_edges += au.iter().filter(|w| nbrs.contains(w)).count();
            } else {
                twice_edges += nbrs.iter().filter(|w| au.contains(w)).count();
            }
        }
        let size = nbrs
            .iter()
            .fold(1u128, |acc, a| acc.saturating_mul(cards[a] as u128));
        Score {
            fill: m * m.saturating_sub(1) / 2 - twice_edges / 2,
            size,
        }
    };

    let mut scores: BTreeMap<AxisId, Score> = adj.keys().map(|&v| (v, score(&adj, v))).collect();
    let mut order = Vec::with_capacity(cards.len());
    while !scores.is_empty() {
        let (&v, _) = scores
            .iter()
            .min_by(|(a, sa), (b, sb)| sa.cmp(sb).then(a.cmp(b)))
            .unwrap();
        order.push(v);
        scores.remove(&v);
        let nbrs = adj.remove(&v).unwrap();
        for &a in &nbrs {
            let set = adj.get_mut(&a).unwrap();
            set.remove(&v);
            set.extend(nbrs.iter().copied().filter(|&b| b != a));
        }
        // Fill scores can change for the neighbours and for anything adjacent to them.
        let mut dirty: BTreeSet<AxisId> = nbrs.clone();
        for a in &nbrs {
            dirty.extend(adj[a].iter().copied());
        }
        for a in dirty {
            if scores.contains_key(&a) {
                scores.insert(a, score(&adj, a));
            }
        }
    }
    EliminationOrder(order)
}
