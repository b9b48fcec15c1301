//! Consensus formation controller and the built-in formation library.
//!
//! Each follower drives `u_i = -gain * Σ_j w_ij [(ξ_i - δ_i) - (ξ_j - δ_j)]`
//! using neighbour reports from the previous tick. Slot 0 of every
//! [`FormationSpec`] is the leader's and sits at the frame origin.

use serde::{Deserialize, Serialize};

use crate::dynamics::AgentState;
use crate::topology::TopologyMatrix;
use crate::{AgentId, Vec3};

/// Minimum slot separation the built-in library is checked against.
pub const BUILTIN_MIN_SEPARATION: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationSpec {
    pub name: String,
    pub offsets: Vec<Vec3>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FormationSpecError {
    Empty,
    LeaderSlotNotOrigin(Vec3),
    NonFinite { slot: usize },
    TooClose { a: usize, b: usize, distance: f64 },
}

impl std::fmt::Display for FormationSpecError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Empty => write!(f, "formation has no offsets"),
            Self::LeaderSlotNotOrigin(v) => {
                write!(f, "slot 1 (leader) must be [0,0,0], got [{}, {}, {}]", v.x, v.y, v.z)
            }
            Self::NonFinite { slot } => write!(f, "slot {} is not finite", slot + 1),
            Self::TooClose { a, b, distance } => write!(
                f,
                "slots {} and {} are {distance:.3} m apart",
                a + 1,
                b + 1
            ),
        }
    }
}

impl FormationSpec {
    pub fn new(name: impl Into<String>, offsets: Vec<Vec3>) -> Self {
        Self { name: name.into(), offsets }
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// All invariant violations for separation `d_min`.
    pub fn check(&self, d_min: f64) -> Vec<FormationSpecError> {
        let mut out = Vec::new();
        let Some(first) = self.offsets.first() else {
            out.push(FormationSpecError::Empty);
            return out;
        };
        if *first != Vec3::zeros() {
            out.push(FormationSpecError::LeaderSlotNotOrigin(*first));
        }
        for (slot, o) in self.offsets.iter().enumerate() {
            if !o.iter().all(|c| c.is_finite()) {
                out.push(FormationSpecError::NonFinite { slot });
            }
        }
        for a in 0..self.offsets.len() {
            for b in a + 1..self.offsets.len() {
                let distance = (self.offsets[a] - self.offsets[b]).norm();
                if distance < d_min {
                    out.push(FormationSpecError::TooClose { a, b, distance });
                }
            }
        }
        out
    }

    /// Smallest distance between any two slots.
    pub fn min_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for a in 0..self.offsets.len() {
            for b in a + 1..self.offsets.len() {
                best = best.min((self.offsets[a] - self.offsets[b]).norm());
            }
        }
        best
    }
}

const T6: &str = include_str!("../data/formations/t6.json");
const DIAMOND6: &str = include_str!("../data/formations/diamond6.json");
const CUBE9: &str = include_str!("../data/formations/cube9.json");
const PYRAMID9: &str = include_str!("../data/formations/pyramid9.json");
const TRIANGLE9: &str = include_str!("../data/formations/triangle9.json");

/// Named shapes shipped for 6 agents (`T`, `diamond`) and 9 agents (`cube`,
/// `pyramid`, `triangle`). Other sizes get an empty list; supply offsets in
/// the scenario file instead.
pub fn builtin_formations(n: usize) -> Vec<FormationSpec> {
    let sources: &[&str] = match n {
        6 => &[T6, DIAMOND6],
        9 => &[CUBE9, PYRAMID9, TRIANGLE9],
        _ => &[],
    };
    sources
        .iter()
        .map(|s| FormationSpec::from_json(s).expect("built-in formation parses"))
        .collect()
}

pub fn builtin_formation(n: usize, name: &str) -> Option<FormationSpec> {
    builtin_formations(n).into_iter().find(|f| f.name == name)
}

/// A neighbour's previous-tick report as seen by the receiving agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborReport {
    pub id: AgentId,
    pub position: Vec3,
    /// The neighbour's own formation offset; `None` until it has a slot.
    pub offset: Option<Vec3>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusOutput {
    pub u: Vec3,
    /// In-neighbours with no usable report this tick; their terms were skipped.
    pub missing: Vec<AgentId>,
}

pub fn consensus_velocity(
    i: AgentId,
    self_state: &AgentState,
    self_offset: Vec3,
    neighbors: &[NeighborReport],
    topology: &TopologyMatrix,
    gain: f64,
) -> ConsensusOutput {
    let own = self_state.position - self_offset;
    let mut sum = Vec3::zeros();
    let mut missing = Vec::new();
    for j in topology.in_neighbors(i) {
        let report = neighbors
            .iter()
            .find(|r| r.id == j)
            .and_then(|r| r.offset.map(|o| r.position - o));
        match report {
            Some(theirs) => sum += topology.weight(i, j) * (own - theirs),
            None => missing.push(j),
        }
    }
    ConsensusOutput { u: -gain * sum, missing }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormationError {
    /// `(i, j, e_ij)` for every unordered pair `i < j`.
    pub pairs: Vec<(AgentId, AgentId, f64)>,
    pub max_error: f64,
}

/// Global disagreement metric over all pairs; `offsets[i]` is agent `i`'s
/// assigned slot offset.
pub fn formation_error(states: &[AgentState], offsets: &[Vec3]) -> FormationError {
    assert_eq!(states.len(), offsets.len(), "one offset per agent");
    let mut pairs = Vec::new();
    let mut max_error: f64 = 0.0;
    for i in 0..states.len() {
        for j in i + 1..states.len() {
            let e = ((states[i].position - offsets[i]) - (states[j].position - offsets[j])).norm();
            max_error = max_error.max(e);
            pairs.push((i, j, e));
        }
    }
    FormationError { pairs, max_error }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{chain_topology, six_uav_example};
    use proptest::prelude::*;

    fn report(id: AgentId, p: Vec3, o: Vec3) -> NeighborReport {
        NeighborReport { id, position: p, offset: Some(o) }
    }

    #[test]
    fn on_formation_is_fixed_point() {
        let f = builtin_formation(6, "T").unwrap();
        let top = six_uav_example();
        let base = Vec3::new(3.0, -1.0, 10.0);
        let reports: Vec<_> = (0..6).map(|j| report(j, base + f.offsets[j], f.offsets[j])).collect();
        for i in 0..6 {
            let s = AgentState::at(i, base + f.offsets[i]);
            let out = consensus_velocity(i, &s, f.offsets[i], &reports, &top, 1.0);
            assert_eq!(out.u, Vec3::zeros());
            assert!(out.missing.is_empty());
        }
    }

    #[test]
    fn two_agent_substitution() {
        let top = chain_topology(2, 1);
        let reports = [report(0, Vec3::zeros(), Vec3::zeros())];
        let s = AgentState::at(1, Vec3::new(1.0, 0.0, 0.0));
        let out = consensus_velocity(1, &s, Vec3::new(2.0, 0.0, 0.0), &reports, &top, 1.0);
        assert_eq!(out.u, Vec3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn leader_has_empty_sum() {
        let top = six_uav_example();
        let reports: Vec<_> = (1..6).map(|j| report(j, Vec3::new(j as f64, 0.0, 0.0), Vec3::zeros())).collect();
        let out = consensus_velocity(0, &AgentState::at(0, Vec3::new(9.0, 9.0, 9.0)), Vec3::zeros(), &reports, &top, 1.0);
        assert_eq!(out.u, Vec3::zeros());
        assert!(out.missing.is_empty());
    }

    #[test]
    fn missing_neighbor_skipped() {
        let top = six_uav_example();
        // agent 3 (0-based 2) hears 0 and 1; only 0 reported
        let reports = [report(0, Vec3::zeros(), Vec3::zeros())];
        let s = AgentState::at(2, Vec3::new(1.0, 0.0, 0.0));
        let out = consensus_velocity(2, &s, Vec3::zeros(), &reports, &top, 1.0);
        assert_eq!(out.missing, vec![1]);
        assert_eq!(out.u, Vec3::new(-1.0, 0.0, 0.0));
    }

    #[test]
    fn formation_error_cases() {
        let f = builtin_formation(9, "cube").unwrap();
        let states: Vec<_> = f.offsets.iter().enumerate().map(|(i, o)| AgentState::at(i, o + Vec3::new(1.0, 2.0, 3.0))).collect();
        assert_eq!(formation_error(&states, &f.offsets).max_error, 0.0);

        let states = [AgentState::at(0, Vec3::zeros()), AgentState::at(1, Vec3::new(3.0, 4.0, 0.0))];
        let e = formation_error(&states, &[Vec3::zeros(), Vec3::zeros()]);
        assert_eq!(e.max_error, 5.0);
        assert_eq!(e.pairs, vec![(0, 1, 5.0)]);
    }

    #[test]
    fn builtin_library() {
        let six: Vec<_> = builtin_formations(6).into_iter().map(|f| f.name).collect();
        assert_eq!(six, ["T", "diamond"]);
        let nine: Vec<_> = builtin_formations(9).into_iter().map(|f| f.name).collect();
        assert_eq!(nine, ["cube", "pyramid", "triangle"]);
        assert!(builtin_formations(7).is_empty());
        for n in [6, 9] {
            for f in builtin_formations(n) {
                assert_eq!(f.len(), n);
                assert!(f.check(BUILTIN_MIN_SEPARATION).is_empty(), "{}", f.name);
            }
        }
    }

    #[test]
    fn cube_is_vertices_around_leader() {
        let cube = builtin_formation(9, "cube").unwrap();
        assert_eq!(cube.offsets[0], Vec3::zeros());
        let mut corners: Vec<[i32; 3]> = cube.offsets[1..]
            .iter()
            .map(|o| [o.x as i32, o.y as i32, o.z as i32])
            .collect();
        corners.sort();
        let mut expected = Vec::new();
        for x in [-2, 2] {
            for y in [-2, 2] {
                for z in [-2, 2] {
                    expected.push([x, y, z]);
                }
            }
        }
        assert_eq!(corners, expected);
    }

    #[test]
    fn t_is_vertical_with_two_metre_grid() {
        let t = builtin_formation(6, "T").unwrap();
        assert!(t.offsets.iter().all(|o| o.y == 0.0));
        assert!((t.min_separation() - 2.0).abs() < 1e-12);
        // bar of three at the top, stem of three below the centre
        let bar = t.offsets.iter().filter(|o| o.z == 0.0).count();
        let stem = t.offsets.iter().filter(|o| o.x == 0.0 && o.z < 0.0).count();
        assert_eq!((bar, stem), (3, 3));
    }

    #[test]
    fn spec_check_flags_problems() {
        let f = FormationSpec::new("bad", vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(1.2, 0.0, 0.0)]);
        let errs = f.check(1.0);
        assert!(matches!(errs[0], FormationSpecError::LeaderSlotNotOrigin(_)));
        assert!(matches!(errs[1], FormationSpecError::TooClose { a: 0, b: 1, .. }));
    }

    #[test]
    fn formation_json_shape() {
        let f = FormationSpec::from_json(r#"{"name":"x","offsets":[[0,0,0],[1,2,3]]}"#).unwrap();
        assert_eq!(f.offsets[1], Vec3::new(1.0, 2.0, 3.0));
    }

    fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
        (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn translation_invariance(
            positions in proptest::collection::vec(vec3(20.0), 6),
            shift in vec3(50.0),
        ) {
            let f = builtin_formation(6, "diamond").unwrap();
            let top = six_uav_example();
            let reports: Vec<_> = (0..6).map(|j| report(j, positions[j], f.offsets[j])).collect();
            let moved: Vec<_> = (0..6).map(|j| report(j, positions[j] + shift, f.offsets[j])).collect();
            for i in 0..6 {
                let a = consensus_velocity(i, &AgentState::at(i, positions[i]), f.offsets[i], &reports, &top, 1.0).u;
                let b = consensus_velocity(i, &AgentState::at(i, positions[i] + shift), f.offsets[i], &moved, &top, 1.0).u;
                prop_assert!((a - b).norm() <= 1e-9);
            }
            let states: Vec<_> = (0..6).map(|j| AgentState::at(j, positions[j])).collect();
            let shifted: Vec<_> = (0..6).map(|j| AgentState::at(j, positions[j] + shift)).collect();
            let e1 = formation_error(&states, &f.offsets).max_error;
            let e2 = formation_error(&shifted, &f.offsets).max_error;
            prop_assert!((e1 - e2).abs() <= 1e-9);
        }

        #[test]
        fn zero_velocity_iff_edges_agree(
            positions in proptest::collection::vec(vec3(20.0), 6),
            agree in proptest::bool::ANY,
        ) {
            let f = builtin_formation(6, "T").unwrap();
            let top = six_uav_example();
            let positions: Vec<Vec3> = if agree {
                (0..6).map(|j| positions[0].map(f64::round) + f.offsets[j]).collect()
            } else {
                positions
            };
            let reports: Vec<_> = (0..6).map(|j| report(j, positions[j], f.offsets[j])).collect();
            let all_zero = (0..6).all(|i| {
                consensus_velocity(i, &AgentState::at(i, positions[i]), f.offsets[i], &reports, &top, 1.0).u == Vec3::zeros()
            });
            let edges_agree = (0..6).all(|i| top.in_neighbors(i).all(|j| {
                ((positions[i] - f.offsets[i]) - (positions[j] - f.offsets[j])).norm() == 0.0
            }));
            prop_assert_eq!(all_zero, edges_agree);
        }
    }
}
