//! Formation reconfiguration as a balanced assignment problem.
//!
//! The leader keeps slot 0 (the frame origin). Followers are matched to the
//! remaining slots by a Kuhn-Munkres solver over leader-relative distances.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::AgentState;
use crate::formation::FormationSpec;
use crate::topology::LeaderDesignation;
use crate::{AgentId, Vec3};

#[derive(Debug, Error, PartialEq)]
pub enum AssignmentError {
    #[error("formation `{formation}` has {slots} slots but the swarm has {agents} agents")]
    CountMismatch {
        formation: String,
        slots: usize,
        agents: usize,
    },
    #[error("cost matrix is not square ({len} entries for n = {n})")]
    NotSquare { n: usize, len: usize },
    #[error("cost entry ({row}, {col}) = {value} is negative or not finite")]
    InvalidEntry { row: usize, col: usize, value: f64 },
}

/// Square matrix of non-negative costs, row = follower, column = slot.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    n: usize,
    c: Vec<f64>,
}

impl CostMatrix {
    pub fn new(n: usize, c: Vec<f64>) -> Result<Self, AssignmentError> {
        if c.len() != n * n {
            return Err(AssignmentError::NotSquare { n, len: c.len() });
        }
        for (k, &value) in c.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(AssignmentError::InvalidEntry { row: k / n, col: k % n, value });
            }
        }
        Ok(Self { n, c })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, AssignmentError> {
        let n = rows.len();
        let c: Vec<f64> = rows.iter().flatten().copied().collect();
        if rows.iter().any(|r| r.len() != n) {
            return Err(AssignmentError::NotSquare { n, len: c.len() });
        }
        Self::new(n, c)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.c[row * self.n + col]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.c
    }

    pub fn cost_of(&self, permutation: &[usize]) -> f64 {
        permutation.iter().enumerate().map(|(i, &k)| self.get(i, k)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// Column chosen for each row.
    pub permutation: Vec<usize>,
    pub total_cost: f64,
}

impl Assignment {
    pub fn is_bijection(&self) -> bool {
        let mut seen = vec![false; self.permutation.len()];
        for &k in &self.permutation {
            if k >= seen.len() || seen[k] {
                return false;
            }
            seen[k] = true;
        }
        true
    }
}

/// Minimum-cost perfect matching on an `n × n` row-major matrix of finite
/// reals. Shortest augmenting paths with dual potentials, O(n³).
///
/// Rows are inserted in index order and the first minimum wins every scan,
/// so equal-cost ties resolve toward lower row and column indices.
fn min_cost_matching(n: usize, cost: &[f64]) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    // 1-based internally; column 0 is the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        row_of_col[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = row_of_col[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let reduced = cost[(r - 1) * n + (col - 1)] - u[r] - v[col];
                if reduced < minv[col] {
                    minv[col] = reduced;
                    way[col] = col0;
                }
                if minv[col] < delta {
                    delta = minv[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[row_of_col[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if row_of_col[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            row_of_col[col0] = row_of_col[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut permutation = vec![0; n];
    for col in 1..=n {
        permutation[row_of_col[col] - 1] = col - 1;
    }
    permutation
}

/// Optimal minimum-total-cost assignment.
pub fn solve(cost: &CostMatrix) -> Assignment {
    let permutation = min_cost_matching(cost.n, &cost.c);
    let total_cost = cost.cost_of(&permutation);
    Assignment { permutation, total_cost }
}

/// Maximum-total-weight assignment over arbitrary finite weights, e.g. the
/// negated distance matrix. `total_cost` holds the achieved total weight.
pub fn solve_max_weight(weights: &[Vec<f64>]) -> Assignment {
    let n = weights.len();
    let negated: Vec<f64> = weights.iter().flatten().map(|w| -w).collect();
    assert_eq!(negated.len(), n * n, "weight matrix must be square");
    let permutation = min_cost_matching(n, &negated);
    let total_cost = permutation.iter().enumerate().map(|(i, &k)| weights[i][k]).sum();
    Assignment { permutation, total_cost }
}

/// Followers of `leader`, ascending.
pub fn followers(n: usize, leader: LeaderDesignation) -> Vec<AgentId> {
    (0..n).filter(|&i| i != leader.leader_index).collect()
}

/// `c[i][k] = ‖(ξ_i − ξ_leader) − δ_{k+1}‖` over followers `i` (ascending id)
/// and follower slots `k + 1`.
pub fn build_cost_matrix(
    states: &[AgentState],
    leader: LeaderDesignation,
    target: &FormationSpec,
) -> Result<CostMatrix, AssignmentError> {
    let relative: Vec<Vec3> = followers(states.len(), leader)
        .into_iter()
        .map(|i| states[i].position - states[leader.leader_index].position)
        .collect();
    cost_matrix_from_relative(&relative, target)
}

/// Same as [`build_cost_matrix`] but from leader-relative follower positions,
/// as delivered by the ground-truth relative-position service.
pub fn cost_matrix_from_relative(
    relative: &[Vec3],
    target: &FormationSpec,
) -> Result<CostMatrix, AssignmentError> {
    if target.len() != relative.len() + 1 {
        return Err(AssignmentError::CountMismatch {
            formation: target.name.clone(),
            slots: target.len(),
            agents: relative.len() + 1,
        });
    }
    let slots = &target.offsets[1..];
    let n = relative.len();
    let mut c = Vec::with_capacity(n * n);
    for r in relative {
        c.extend(slots.iter().map(|d| (r - d).norm()));
    }
    CostMatrix::new(n, c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotAssignment {
    pub agent: AgentId,
    pub slot: usize,
    pub offset: Vec3,
}

/// Result of a reconfiguration decided by the leader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconfiguration {
    pub formation: String,
    /// Leader first (slot 0), then followers ascending.
    pub mapping: Vec<SlotAssignment>,
    pub total_cost: f64,
    /// Cost had every follower kept the slot matching its rank.
    pub identity_cost: f64,
}

impl Reconfiguration {
    pub fn offset_of(&self, agent: AgentId) -> Option<Vec3> {
        self.mapping.iter().find(|m| m.agent == agent).map(|m| m.offset)
    }
}

/// Leader-side reconfiguration toward `target` from leader-relative follower
/// positions (`relative[k]` belongs to the k-th follower, ascending id).
pub fn reconfigure(
    target: &FormationSpec,
    leader: LeaderDesignation,
    relative: &[Vec3],
) -> Result<Reconfiguration, AssignmentError> {
    let n = relative.len() + 1;
    let cost = cost_matrix_from_relative(relative, target)?;
    let solved = solve(&cost);
    let identity: Vec<usize> = (0..cost.len()).collect();
    let mut mapping = vec![SlotAssignment {
        agent: leader.leader_index,
        slot: 0,
        offset: target.offsets[0],
    }];
    for (k, agent) in followers(n, leader).into_iter().enumerate() {
        let slot = solved.permutation[k] + 1;
        mapping.push(SlotAssignment { agent, slot, offset: target.offsets[slot] });
    }
    Ok(Reconfiguration {
        formation: target.name.clone(),
        mapping,
        total_cost: solved.total_cost,
        identity_cost: cost.cost_of(&identity),
    })
}
