//! Weighted communication graph and leader designation.
//!
//! `w[i][j] > 0` means agent `i` receives agent `j`'s state. Indices are
//! 0-based here; files and the console show 1-based ids.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::AgentId;

/// N×N non-negative weight matrix, row `i` lists what agent `i` listens to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyMatrix {
    n: usize,
    w: Vec<f64>,
}

impl TopologyMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, w: vec![0.0; n * n] }
    }

    /// Builds from row-major rows. Rows must all have length `rows.len()`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, String> {
        let n = rows.len();
        let mut w = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(format!(
                    "row {} has {} entries, expected {}",
                    i + 1,
                    row.len(),
                    n
                ));
            }
            w.extend_from_slice(row);
        }
        Ok(Self { n, w })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Weight of the edge `sender -> receiver`.
    pub fn weight(&self, receiver: AgentId, sender: AgentId) -> f64 {
        self.w[receiver * self.n + sender]
    }

    pub fn set_weight(&mut self, receiver: AgentId, sender: AgentId, value: f64) {
        self.w[receiver * self.n + sender] = value;
    }

    pub fn row(&self, receiver: AgentId) -> &[f64] {
        &self.w[receiver * self.n..(receiver + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    /// Agents that `receiver` hears from, ascending.
    pub fn in_neighbors(&self, receiver: AgentId) -> impl Iterator<Item = AgentId> + '_ {
        self.row(receiver)
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(j, _)| j)
    }

    pub fn in_degree(&self, receiver: AgentId) -> usize {
        self.in_neighbors(receiver).count()
    }

    /// Largest row sum of weights.
    pub fn max_weighted_in_degree(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).iter().sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Agents reachable from `source` following edges in the direction
    /// information flows (sender to receiver).
    pub fn reachable_from(&self, source: AgentId) -> Vec<bool> {
        let mut seen = vec![false; self.n];
        if source >= self.n {
            return seen;
        }
        let mut queue = VecDeque::from([source]);
        seen[source] = true;
        while let Some(sender) = queue.pop_front() {
            for receiver in 0..self.n {
                if !seen[receiver] && self.weight(receiver, sender) > 0.0 {
                    seen[receiver] = true;
                    queue.push_back(receiver);
                }
            }
        }
        seen
    }
}

/// Which agent sets the formation frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeaderDesignation {
    pub leader_index: AgentId,
}

impl LeaderDesignation {
    pub fn new(leader_index: AgentId) -> Self {
        Self { leader_index }
    }
}

/// A single broken topology invariant. Ids are 0-based.
#[derive(Debug, Clone, PartialEq)]
pub enum TopologyViolation {
    SelfEdge { agent: AgentId, weight: f64 },
    InvalidWeight { receiver: AgentId, sender: AgentId, weight: f64 },
    LeaderOutOfRange { leader: AgentId, n: usize },
    LeaderReceives { leader: AgentId, sender: AgentId, weight: f64 },
    UnreachableFollower { follower: AgentId },
}

impl fmt::Display for TopologyViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SelfEdge { agent, weight } => {
                write!(f, "self-edge w[{0}][{0}] = {weight}", agent + 1)
            }
            Self::InvalidWeight { receiver, sender, weight } => write!(
                f,
                "w[{}][{}] = {weight} is negative or not finite",
                receiver + 1,
                sender + 1
            ),
            Self::LeaderOutOfRange { leader, n } => {
                write!(f, "leader {} outside 1..={n}", leader + 1)
            }
            Self::LeaderReceives { leader, sender, weight } => write!(
                f,
                "leader row not zero: w[{}][{}] = {weight}",
                leader + 1,
                sender + 1
            ),
            Self::UnreachableFollower { follower } => write!(
                f,
                "follower {} has no directed path from the leader",
                follower + 1
            ),
        }
    }
}

/// The 6-agent leader-following matrix used with the `T` formation.
pub fn six_uav_example() -> TopologyMatrix {
    TopologyMatrix::from_rows(&[
        vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        vec![0.0, 1.0, 1.0, 0.0, 0.0, 0.0],
        vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.0, 1.0, 1.0, 0.0],
    ])
    .expect("square literal")
}

/// Agent `i` listens to its `fan_in` predecessors `max(0, i - fan_in)..i`,
/// leader is agent 0.
pub fn chain_topology(n: usize, fan_in: usize) -> TopologyMatrix {
    let mut m = TopologyMatrix::zeros(n);
    for i in 1..n {
        for j in i.saturating_sub(fan_in)..i {
            m.set_weight(i, j, 1.0);
        }
    }
    m
}

/// Checks every matrix and leader invariant; an empty list means valid.
pub fn validate(topology: &TopologyMatrix, leader: LeaderDesignation) -> Vec<TopologyViolation> {
    let n = topology.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let w = topology.weight(i, j);
            if !w.is_finite() || w < 0.0 {
                out.push(TopologyViolation::InvalidWeight { receiver: i, sender: j, weight: w });
            } else if i == j && w != 0.0 {
                out.push(TopologyViolation::SelfEdge { agent: i, weight: w });
            }
        }
    }
    let l = leader.leader_index;
    if l >= n {
        if n > 0 {
            out.push(TopologyViolation::LeaderOutOfRange { leader: l, n });
        }
        return out;
    }
    for (j, &w) in topology.row(l).iter().enumerate() {
        if j != l && w != 0.0 {
            out.push(TopologyViolation::LeaderReceives { leader: l, sender: j, weight: w });
        }
    }
    let reach = topology.reachable_from(l);
    for (follower, reached) in reach.into_iter().enumerate() {
        if !reached {
            out.push(TopologyViolation::UnreachableFollower { follower });
        }
    }
    out
}
