//! Exhaustive enumeration for discrete noise on short horizons.
//!
//! Prices are computed without any state grid: the price at a node solves
//! `a = Σ_i p_i A_{t+1}(g − c(a) + e_i)`, where each child price is itself the
//! root of the same equation one period later. Every scalar root is found by
//! bisection run to machine precision, so nested evaluations cost
//! `(atoms · steps)^(T − t)`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::model::{AbatementFunction, NoiseModel};

pub const MAX_ATOMS: usize = 4;
pub const MAX_HORIZON: usize = 5;
pub const NODE_BUDGET: u128 = 1_000_000;
/// Bound on nested scalar evaluations per tree.
pub const WORK_BUDGET: u128 = 2_000_000_000;
const MAX_BISECTION_STEPS: usize = 64;

#[derive(Debug, Clone)]
pub struct TreeOracle {
    atoms: Vec<(f64, f64)>,
    abate: AbatementFunction,
    penalty: f64,
    horizon: usize,
}

impl TreeOracle {
    pub fn new(noise: &NoiseModel, abate: &AbatementFunction, penalty: f64, horizon: usize) -> Result<Self> {
        let atoms = match noise {
            NoiseModel::Discrete { atoms } => atoms.clone(),
            NoiseModel::Normal { .. } => return Err(invalid("tree enumeration needs discrete noise")),
        };
        noise.validate()?;
        if atoms.len() > MAX_ATOMS {
            return Err(invalid(format!("tree enumeration supports at most {MAX_ATOMS} atoms")));
        }
        if horizon == 0 || horizon > MAX_HORIZON {
            return Err(invalid(format!("tree horizon must be in 1..={MAX_HORIZON}, got {horizon}")));
        }
        if !(penalty.is_finite() && penalty > 0.0) {
            return Err(invalid("penalty must be positive"));
        }
        let k = atoms.len() as u128;
        let nodes: u128 = (0..=horizon as u32).map(|t| k.pow(t)).sum();
        if nodes > NODE_BUDGET {
            return Err(Error::TreeTooLarge { nodes, budget: NODE_BUDGET });
        }
        let work = (k * MAX_BISECTION_STEPS as u128).pow(horizon as u32);
        if work > WORK_BUDGET {
            return Err(Error::TreeTooLarge { nodes: work, budget: WORK_BUDGET });
        }
        Ok(TreeOracle { atoms, abate: abate.clone(), penalty, horizon })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Allowance price at time `t` in state `g`.
    pub fn price(&self, t: usize, g: f64) -> f64 {
        if t >= self.horizon {
            return if g >= 0.0 { self.penalty } else { 0.0 };
        }
        let f = |a: f64| a - self.expected_next(t, g, a);
        if self.abate.vanishes_below(self.penalty) {
            return self.expected_next(t, g, 0.0);
        }
        let (mut lo, mut hi) = (0.0_f64, self.penalty);
        for _ in 0..MAX_BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if f(mid) >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// `Σ_i p_i A_{t+1}(g − c(a) + e_i)`.
    pub fn expected_next(&self, t: usize, g: f64, a: f64) -> f64 {
        let next = g - self.abate.volume(a);
        self.atoms.iter().map(|(e, p)| p * self.price(t + 1, next + e)).sum()
    }

    /// Builds the full tree of reachable nodes from `initial` at time 0.
    pub fn build(&self, initial: f64) -> ExactTree {
        let mut levels: Vec<Vec<TreeNode>> = Vec::with_capacity(self.horizon + 1);
        levels.push(alloc::vec![TreeNode {
            state: initial,
            price: self.price(0, initial),
            probability: 1.0,
            parent: None,
            children: Vec::new(),
        }]);
        for t in 0..self.horizon {
            let mut next_level = Vec::with_capacity(levels[t].len() * self.atoms.len());
            for (idx, node) in levels[t].iter_mut().enumerate() {
                let base = node.state - self.abate.volume(node.price);
                for (e, p) in &self.atoms {
                    let state = base + e;
                    node.children.push(next_level.len());
                    next_level.push(TreeNode {
                        state,
                        price: self.price(t + 1, state),
                        probability: node.probability * p,
                        parent: Some(idx),
                        children: Vec::new(),
                    });
                }
            }
            levels.push(next_level);
        }
        ExactTree { levels, probabilities: self.atoms.iter().map(|a| a.1).collect(), penalty: self.penalty }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub state: f64,
    pub price: f64,
    /// Probability of reaching this node from the root.
    pub probability: f64,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ExactTree {
    pub levels: Vec<Vec<TreeNode>>,
    probabilities: Vec<f64>,
    penalty: f64,
}

impl ExactTree {
    pub fn horizon(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    pub fn root(&self) -> &TreeNode {
        &self.levels[0][0]
    }

    /// `|E[A_{t+1} | node] − A_t|` for every non-terminal node, level by level.
    pub fn martingale_residuals(&self) -> Vec<Vec<f64>> {
        (0..self.horizon())
            .map(|t| {
                self.levels[t]
                    .iter()
                    .map(|n| {
                        let mean: f64 = n
                            .children
                            .iter()
                            .zip(&self.probabilities)
                            .map(|(&c, p)| p * self.levels[t + 1][c].price)
                            .sum();
                        (mean - n.price).abs()
                    })
                    .collect()
            })
            .collect()
    }

    pub fn max_martingale_residual(&self) -> f64 {
        self.martingale_residuals().iter().flatten().copied().fold(0.0, f64::max)
    }

    /// Every terminal price is exactly 0 or π.
    pub fn terminal_is_digital(&self) -> bool {
        self.levels[self.horizon()].iter().all(|n| n.price == 0.0 || n.price == self.penalty)
    }

    /// Value of a European call `(A_τ − strike)⁺` at every node up to `tau`,
    /// by backward induction over the tree.
    pub fn call_values(&self, tau: usize, strike: f64) -> Result<Vec<Vec<f64>>> {
        if tau == 0 || tau > self.horizon() {
            return Err(invalid(format!("maturity {tau} outside 1..={}", self.horizon())));
        }
        let mut values: Vec<Vec<f64>> = alloc::vec![Vec::new(); tau + 1];
        values[tau] = self.levels[tau].iter().map(|n| (n.price - strike).max(0.0)).collect();
        for t in (0..tau).rev() {
            values[t] = self.levels[t]
                .iter()
                .map(|n| n.children.iter().zip(&self.probabilities).map(|(&c, p)| p * values[t + 1][c]).sum())
                .collect();
        }
        Ok(values)
    }
}

/// Builds the exhaustive tree from `initial` and checks the digital terminal
/// law. The martingale residuals are left to the caller to inspect: with
/// discrete noise the fixed-point map can jump over zero, in which case no
/// exact martingale exists at that node.
pub fn exact_tree_oracle(
    noise: &NoiseModel,
    abate: &AbatementFunction,
    penalty: f64,
    horizon: usize,
    initial: f64,
) -> Result<ExactTree> {
    let oracle = TreeOracle::new(noise, abate, penalty, horizon)?;
    let tree = oracle.build(initial);
    debug_assert!(tree.terminal_is_digital());
    Ok(tree)
}
