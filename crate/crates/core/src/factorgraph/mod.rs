//! Factor graphs over sample indices, evaluated by variable elimination.
//!
//! The TMC estimate is the normalised sum, over every combination of sample
//! indices, of a product of factors. Eliminating one index at a time replaces
//! the factors that mention it by their contraction, so the exponential sum
//! costs only as much as the largest intermediate factor.

mod directed;
mod order;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::logtensor::{contract, AxisId, LogTensor, TensorError};

pub use directed::{
    build_directed_factors, directed_factor_tensors, AxisLayout, DirectedModel, LatentSamples,
};
pub use order::{greedy_order_for_scopes, EliminationOrder};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("variable {0} is already registered")]
    DuplicateVariable(AxisId),
    #[error("variable {0} must have cardinality at least 1")]
    ZeroCardinality(AxisId),
    #[error("axis {0} is not a registered variable")]
    UnknownAxis(AxisId),
    #[error("axis {axis} has cardinality {registered} but a factor uses {found}")]
    CardinalityMismatch {
        axis: AxisId,
        registered: usize,
        found: usize,
    },
    #[error("variable {0} has already been eliminated")]
    AlreadyEliminated(AxisId),
    #[error("elimination order repeats {0}")]
    RepeatedInOrder(AxisId),
    #[error("elimination order leaves {0:?} uneliminated")]
    IncompleteOrder(Vec<AxisId>),
    #[error("factor {0} still has axes after elimination")]
    NonScalarRemainder(usize),
    #[error("node {node} names unknown parent latent {parent}")]
    UnknownParent { node: usize, parent: usize },
    #[error("latent {latent} has {found} samples but {expected} were expected")]
    SampleCount {
        latent: usize,
        expected: usize,
        found: usize,
    },
}

/// Whether a variable indexes Monte Carlo samples or enumerates a discrete support.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariableKind {
    SampleIndex,
    /// Stratified enumeration: one "sample" per support value under a uniform
    /// proposal, whose `-ln K` density is already inside the factors.
    EnumeratedDiscrete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Variable {
    pub axis: AxisId,
    pub cardinality: usize,
    pub kind: VariableKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub id: usize,
    pub tensor: LogTensor,
}

impl Factor {
    pub fn scope(&self) -> Vec<AxisId> {
        self.tensor.axis_ids().collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FactorGraph {
    variables: BTreeMap<AxisId, Variable>,
    factors: Vec<Factor>,
    eliminated: BTreeSet<AxisId>,
    next_id: usize,
}

impl FactorGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_variable(&mut self, axis: AxisId, cardinality: usize, kind: VariableKind) -> Result<(), GraphError> {
        if cardinality == 0 {
            return Err(GraphError::ZeroCardinality(axis));
        }
        if self.variables.contains_key(&axis) {
            return Err(GraphError::DuplicateVariable(axis));
        }
        self.variables.insert(
            axis,
            Variable {
                axis,
                cardinality,
                kind,
            },
        );
        Ok(())
    }

    /// Adds a factor over registered, live variables and returns its id.
    pub fn add_factor(&mut self, tensor: LogTensor) -> Result<usize, GraphError> {
        for &(axis, n) in tensor.axes() {
            let var = self.variables.get(&axis).ok_or(GraphError::UnknownAxis(axis))?;
            if self.eliminated.contains(&axis) {
                return Err(GraphError::AlreadyEliminated(axis));
            }
            if var.cardinality != n {
                return Err(GraphError::CardinalityMismatch {
                    axis,
                    registered: var.cardinality,
                    found: n,
                });
            }
        }
        let id = self.next_id;
        self.next_id += 1;
        self.factors.push(Factor { id, tensor });
        Ok(id)
    }

    pub fn variables(&self) -> impl Iterator<Item = &Variable> {
        self.variables.values()
    }

    pub fn variable(&self, axis: AxisId) -> Option<&Variable> {
        self.variables.get(&axis)
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn is_eliminated(&self, axis: AxisId) -> bool {
        self.eliminated.contains(&axis)
    }

    /// Registered variables that have not been eliminated, in id order.
    pub fn live_variables(&self) -> Vec<AxisId> {
        self.variables
            .keys()
            .copied()
            .filter(|a| !self.eliminated.contains(a))
            .collect()
    }

    /// A copy of this graph with every factor raised to the power `c` (log
    /// entries scaled by `c`); `c = 2` gives the graph of squared weights.
    pub fn powf(&self, c: f64) -> Self {
        let mut g = self.clone();
        for f in &mut g.factors {
            f.tensor = f.tensor.powf(c);
        }
        g
    }

    /// Sums `axis` out of the graph, returning the reduced graph.
    pub fn eliminate_variable(&self, axis: AxisId) -> Result<Self, GraphError> {
        let mut g = self.clone();
        g.eliminate_in_place(axis)?;
        Ok(g)
    }

    fn eliminate_in_place(&mut self, axis: AxisId) -> Result<(), GraphError> {
        if !self.variables.contains_key(&axis) {
            return Err(GraphError::UnknownAxis(axis));
        }
        if !self.eliminated.insert(axis) {
            return Err(GraphError::AlreadyEliminated(axis));
        }
        let (touching, rest): (Vec<Factor>, Vec<Factor>) = std::mem::take(&mut self.factors)
            .into_iter()
            .partition(|f| f.tensor.has_axis(axis));
        self.factors = rest;
        // With no factor mentioning the axis the normalised sum is exactly one.
        if touching.is_empty() {
            return Ok(());
        }
        let tensors: Vec<&LogTensor> = touching.iter().map(|f| &f.tensor).collect();
        let merged = contract(&tensors, axis, true)?;
        let id = self.next_id;
        self.next_id += 1;
        self.factors.push(Factor { id, tensor: merged });
        Ok(())
    }

    /// Greedy minimum-fill elimination order over the live variables.
    pub fn greedy_order(&self) -> EliminationOrder {
        let cards: BTreeMap<AxisId, usize> = self
            .variables
            .iter()
            .filter(|(a, _)| !self.eliminated.contains(a))
            .map(|(&a, v)| (a, v.cardinality))
            .collect();
        let scopes: Vec<Vec<AxisId>> = self.factors.iter().map(Factor::scope).collect();
        greedy_order_for_scopes(&scopes, &cards)
    }

    /// Eliminates every live variable in `order` and returns the log of the
    /// fully normalised sum (the sum of the remaining scalar factors).
    pub fn evaluate(&self, order: &EliminationOrder) -> Result<f64, GraphError> {
        self.check_order(order)?;
        let mut g = self.clone();
        for &axis in order.as_slice() {
            g.eliminate_in_place(axis)?;
        }
        let mut total = 0.0;
        for f in &g.factors {
            total += f.tensor.value().ok_or(GraphError::NonScalarRemainder(f.id))?;
        }
        Ok(total)
    }

    fn check_order(&self, order: &EliminationOrder) -> Result<(), GraphError> {
        let mut seen = BTreeSet::new();
        for &a in order.as_slice() {
            if !self.variables.contains_key(&a) {
                return Err(GraphError::UnknownAxis(a));
            }
            if self.eliminated.contains(&a) {
                return Err(GraphError::AlreadyEliminated(a));
            }
            if !seen.insert(a) {
                return Err(GraphError::RepeatedInOrder(a));
            }
        }
        let missing: Vec<AxisId> = self
            .live_variables()
            .into_iter()
            .filter(|a| !seen.contains(a))
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(GraphError::IncompleteOrder(missing))
        }
    }

    /// One line per factor: `factor <id> scope=[k1,k2] shape=[2,2]`.
    pub fn dump(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for FactorGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for factor in &self.factors {
            let scope: Vec<String> = factor.tensor.axis_ids().map(|a| a.to_string()).collect();
            let shape: Vec<String> = factor.tensor.shape().iter().map(|n| n.to_string()).collect();
            writeln!(
                f,
                "factor {} scope=[{}] shape=[{}]",
                factor.id,
                scope.join(","),
                shape.join(",")
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var(g: &mut FactorGraph, id: u32, n: usize) -> AxisId {
        let a = AxisId(id);
        g.add_variable(a, n, VariableKind::SampleIndex).unwrap();
        a
    }

    #[test]
    fn add_factor_validates_scope() {
        let mut g = FactorGraph::new();
        let a = var(&mut g, 0, 2);
        assert_eq!(
            g.add_factor(LogTensor::zeros(vec![(AxisId(9), 2)]).unwrap()),
            Err(GraphError::UnknownAxis(AxisId(9)))
        );
        assert!(matches!(
            g.add_factor(LogTensor::zeros(vec![(a, 3)]).unwrap()),
            Err(GraphError::CardinalityMismatch { .. })
        ));
        assert_eq!(g.add_variable(a, 2, VariableKind::SampleIndex), Err(GraphError::DuplicateVariable(a)));
        assert_eq!(
            g.add_variable(AxisId(5), 0, VariableKind::SampleIndex),
            Err(GraphError::ZeroCardinality(AxisId(5)))
        );
    }

    #[test]
    fn eliminating_twice_is_a_state_error() {
        let mut g = FactorGraph::new();
        let a = var(&mut g, 0, 2);
        g.add_factor(LogTensor::zeros(vec![(a, 2)]).unwrap()).unwrap();
        let g1 = g.eliminate_variable(a).unwrap();
        assert_eq!(g1.eliminate_variable(a), Err(GraphError::AlreadyEliminated(a)));
        // The original graph is untouched.
        assert!(!g.is_eliminated(a));
    }

    #[test]
    fn scalar_only_graph_evaluates_to_its_value() {
        let mut g = FactorGraph::new();
        g.add_factor(LogTensor::scalar(-1.5)).unwrap();
        let order = g.greedy_order();
        assert!(order.as_slice().is_empty());
        assert_eq!(g.evaluate(&order), Ok(-1.5));
    }

    #[test]
    fn unit_factors_give_zero() {
        let mut g = FactorGraph::new();
        let a = var(&mut g, 0, 3);
        let b = var(&mut g, 1, 2);
        let c = var(&mut g, 2, 4);
        g.add_factor(LogTensor::zeros(vec![(a, 3), (b, 2)]).unwrap()).unwrap();
        g.add_factor(LogTensor::zeros(vec![(b, 2), (c, 4)]).unwrap()).unwrap();
        g.add_factor(LogTensor::zeros(vec![(c, 4), (a, 3)]).unwrap()).unwrap();
        assert!(g.evaluate(&g.greedy_order()).unwrap().abs() < 1e-15);
    }

    #[test]
    fn order_must_cover_live_variables() {
        let mut g = FactorGraph::new();
        let a = var(&mut g, 0, 2);
        let b = var(&mut g, 1, 2);
        g.add_factor(LogTensor::zeros(vec![(a, 2), (b, 2)]).unwrap()).unwrap();
        assert_eq!(
            g.evaluate(&EliminationOrder::new(vec![a])),
            Err(GraphError::IncompleteOrder(vec![b]))
        );
        assert_eq!(
            g.evaluate(&EliminationOrder::new(vec![a, a, b])),
            Err(GraphError::RepeatedInOrder(a))
        );
    }

    #[test]
    fn variable_without_factors_contributes_nothing() {
        let mut g = FactorGraph::new();
        let a = var(&mut g, 0, 5);
        let b = var(&mut g, 1, 2);
        g.add_factor(LogTensor::new(vec![(b, 2)], vec![0.0, 1.0]).unwrap()).unwrap();
        let v = g.evaluate(&EliminationOrder::new(vec![a, b])).unwrap();
        let expected = ((1.0 + 1f64.exp()) / 2.0).ln();
        assert!((v - expected).abs() < 1e-15);
    }

    #[test]
    fn eliminated_factors_get_fresh_ids() {
        let mut g = FactorGraph::new();
        let a = var(&mut g, 0, 2);
        let b = var(&mut g, 1, 2);
        g.add_factor(LogTensor::zeros(vec![(a, 2)]).unwrap()).unwrap();
        g.add_factor(LogTensor::zeros(vec![(a, 2), (b, 2)]).unwrap()).unwrap();
        let g1 = g.eliminate_variable(a).unwrap();
        assert_eq!(g1.dump(), "factor 2 scope=[k1] shape=[2]\n");
    }
}
