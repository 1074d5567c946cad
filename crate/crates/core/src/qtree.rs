//! The quasi-quantile tree.
//!
//! A [`Xenovert`] is a perfect binary tree of depth `L` whose nodes each hold a
//! scalar boundary `q` and a velocity `v`. Every input walks one root-to-leaf
//! path (`x < q` goes left, anything else goes right) and each node on that
//! path takes one step of the motion equation
//!
//! ```text
//! v' = theta * v + |q - x|
//! s  = -1 if q - x > 0 else +1
//! q' = q + alpha * v' * s
//! ```
//!
//! Under a stationary stream every boundary settles near the median of the
//! inputs routed through it, so the `2^L` leaf intervals end up with roughly
//! equal mass. When the stream shifts the boundaries follow it, which keeps
//! the interval index of an input meaningful to whatever consumes it.
//!
//! The branch taken at a node uses the value of `q` *before* that node's
//! update, so [`Xenovert::touched_path`] evaluated before an update names
//! exactly the nodes the update will mutate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported depth. `2^30` intervals is far past any practical use.
pub const MAX_LEVELS: u32 = 30;

/// Current snapshot payload version.
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("levels must be in 1..={max}, got {0}", max = MAX_LEVELS)]
    InvalidLevels(u32),
    #[error("learning rate must be finite and > 0, got {0}")]
    InvalidLearningRate(f64),
    #[error("velocity decay must be in [0, 1), got {0}")]
    InvalidVelocityDecay(f64),
    #[error("initial quantile value must be finite, got {0}")]
    InvalidInitialValue(f64),
    #[error("input value must be finite, got {0}")]
    NonFiniteInput(f64),
    #[error("expected {expected} node values, got {got}")]
    NodeCountMismatch { expected: usize, got: usize },
    #[error("unsupported snapshot version {0} (expected {SNAPSHOT_VERSION})")]
    UnsupportedVersion(u32),
    #[error("snapshot node {index} is invalid: q={q}, v={v}")]
    InvalidNode { index: usize, q: f64, v: f64 },
    #[error("malformed snapshot: {0}")]
    Malformed(String),
}

/// Hyperparameters of a tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XenovertConfig {
    /// Depth `L`: the tree has `2^L - 1` nodes and `2^L` intervals.
    #[serde(rename = "L")]
    pub levels: u32,
    #[serde(rename = "alpha")]
    pub learning_rate: f64,
    #[serde(rename = "theta")]
    pub velocity_decay: f64,
    pub initial_q: f64,
}

impl Default for XenovertConfig {
    fn default() -> Self {
        Self {
            levels: 5,
            learning_rate: 1e-5,
            velocity_decay: 0.99,
            initial_q: 0.0,
        }
    }
}

impl XenovertConfig {
    pub fn with_levels(levels: u32) -> Self {
        Self {
            levels,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TreeError> {
        if self.levels < 1 || self.levels > MAX_LEVELS {
            return Err(TreeError::InvalidLevels(self.levels));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(TreeError::InvalidLearningRate(self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.velocity_decay) {
            return Err(TreeError::InvalidVelocityDecay(self.velocity_decay));
        }
        if !self.initial_q.is_finite() {
            return Err(TreeError::InvalidInitialValue(self.initial_q));
        }
        Ok(())
    }

    /// `N = 2^L - 1`.
    pub fn node_count(&self) -> usize {
        (1usize << self.levels) - 1
    }

    /// `M = 2^L`.
    pub fn interval_count(&self) -> usize {
        1usize << self.levels
    }
}

/// One boundary of the tree.
///
/// Children are stored as a pair so a node either has both or neither.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiQuantileNode {
    pub q: f64,
    pub v: f64,
    pub level: u32,
    children: Option<Box<[QuasiQuantileNode; 2]>>,
}

impl QuasiQuantileNode {
    fn new(q: f64, level: u32) -> Self {
        Self {
            q,
            v: 0.0,
            level,
            children: None,
        }
    }

    /// Adds one generation below every current leaf.
    fn grow(&mut self, q: f64) {
        match &mut self.children {
            Some(children) => {
                children[0].grow(q);
                children[1].grow(q);
            }
            None => {
                let next = self.level + 1;
                self.children = Some(Box::new([Self::new(q, next), Self::new(q, next)]));
            }
        }
    }

    pub fn left(&self) -> Option<&QuasiQuantileNode> {
        self.children.as_ref().map(|c| &c[0])
    }

    pub fn right(&self) -> Option<&QuasiQuantileNode> {
        self.children.as_ref().map(|c| &c[1])
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    #[inline]
    fn goes_right(&self, x: f64) -> bool {
        // x < q goes left; ties go right.
        x >= self.q
    }

    #[inline]
    fn step(&mut self, x: f64, learning_rate: f64, velocity_decay: f64) {
        let error = self.q - x;
        let velocity = velocity_decay * self.v + error.abs();
        let direction = if error > 0.0 { -1.0 } else { 1.0 };
        self.v = velocity;
        self.q += learning_rate * velocity * direction;
    }
}

/// Identifies a node by its level-order position: the root is 0 and the
/// children of node `i` are `2i + 1` and `2i + 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    fn child(self, right: bool) -> NodeId {
        NodeId(2 * self.0 + 1 + usize::from(right))
    }

    pub fn level(self) -> u32 {
        (usize::BITS - 1) - (self.0 + 1).leading_zeros()
    }
}

/// The adaptive quantizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Xenovert {
    root: QuasiQuantileNode,
    config: XenovertConfig,
    updates_seen: u64,
}

impl Xenovert {
    /// Builds a perfect tree of depth `config.levels` with every node at
    /// `q = initial_q`, `v = 0`.
    pub fn grow(config: XenovertConfig) -> Result<Self, TreeError> {
        config.validate()?;
        let mut root = QuasiQuantileNode::new(config.initial_q, 0);
        for _ in 1..config.levels {
            root.grow(config.initial_q);
        }
        Ok(Self {
            root,
            config,
            updates_seen: 0,
        })
    }

    /// Builds a tree whose node values, read in-order, are `values`.
    /// Velocities start at zero.
    pub fn from_inorder_values(config: XenovertConfig, values: &[f64]) -> Result<Self, TreeError> {
        let mut tree = Self::grow(config)?;
        if values.len() != config.node_count() {
            return Err(TreeError::NodeCountMismatch {
                expected: config.node_count(),
                got: values.len(),
            });
        }
        if let Some((index, &q)) = values.iter().enumerate().find(|(_, q)| !q.is_finite()) {
            return Err(TreeError::InvalidNode { index, q, v: 0.0 });
        }
        let mut it = values.iter();
        fn assign<'a>(node: &mut QuasiQuantileNode, it: &mut impl Iterator<Item = &'a f64>) {
            if let Some(children) = &mut node.children {
                assign(&mut children[0], it);
                node.q = *it.next().expect("length checked");
                assign(&mut children[1], it);
            } else {
                node.q = *it.next().expect("length checked");
            }
        }
        assign(&mut tree.root, &mut it);
        Ok(tree)
    }

    pub fn config(&self) -> &XenovertConfig {
        &self.config
    }

    pub fn root(&self) -> &QuasiQuantileNode {
        &self.root
    }

    pub fn levels(&self) -> u32 {
        self.config.levels
    }

    pub fn node_count(&self) -> usize {
        self.config.node_count()
    }

    pub fn interval_count(&self) -> usize {
        self.config.interval_count()
    }

    /// Number of successful [`update`](Self::update) calls.
    pub fn updates_seen(&self) -> u64 {
        self.updates_seen
    }

    /// Adapts the tree to one input. Mutates exactly the `L` nodes on the
    /// selected path.
    pub fn update(&mut self, x: f64) -> Result<(), TreeError> {
        if !x.is_finite() {
            return Err(TreeError::NonFiniteInput(x));
        }
        let XenovertConfig {
            learning_rate,
            velocity_decay,
            ..
        } = self.config;
        let mut node = &mut self.root;
        loop {
            let right = node.goes_right(x);
            node.step(x, learning_rate, velocity_decay);
            match &mut node.children {
                Some(children) => node = &mut children[usize::from(right)],
                None => break,
            }
        }
        self.updates_seen += 1;
        Ok(())
    }

    /// Updates, then converts with the adapted boundaries.
    pub fn update_convert(&mut self, x: f64) -> Result<usize, TreeError> {
        self.update(x)?;
        self.convert(x)
    }

    /// Quantizes `x` to its interval rank in `0..2^L`. Read-only.
    pub fn convert(&self, x: f64) -> Result<usize, TreeError> {
        if !x.is_finite() {
            return Err(TreeError::NonFiniteInput(x));
        }
        let levels = self.config.levels;
        let mut node = &self.root;
        let mut offset = 0usize;
        loop {
            let right = node.goes_right(x);
            if right {
                offset += 1usize << (levels - 1 - node.level);
            }
            match &node.children {
                Some(children) => node = &children[usize::from(right)],
                None => return Ok(offset),
            }
        }
    }

    /// The root-to-leaf path `x` selects, as level-order ids. Always `L` long.
    pub fn touched_path(&self, x: f64) -> Result<Vec<NodeId>, TreeError> {
        if !x.is_finite() {
            return Err(TreeError::NonFiniteInput(x));
        }
        let mut path = Vec::with_capacity(self.config.levels as usize);
        let mut id = NodeId::ROOT;
        let mut node = &self.root;
        loop {
            path.push(id);
            let right = node.goes_right(x);
            match &node.children {
                Some(children) => {
                    node = &children[usize::from(right)];
                    id = id.child(right);
                }
                None => return Ok(path),
            }
        }
    }

    /// Node values in in-order (left-to-right) order, paired with their
    /// in-order index. Sortedness of the values is not guaranteed.
    pub fn quantile_values(&self) -> Vec<(usize, f64)> {
        fn walk(node: &QuasiQuantileNode, out: &mut Vec<(usize, f64)>) {
            if let Some(children) = &node.children {
                walk(&children[0], out);
                out.push((out.len(), node.q));
                walk(&children[1], out);
            } else {
                out.push((out.len(), node.q));
            }
        }
        let mut out = Vec::with_capacity(self.node_count());
        walk(&self.root, &mut out);
        out
    }

    /// `(q, v)` of every node in level order; index `i` is `NodeId(i)`.
    pub fn level_order_states(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.node_count());
        let mut frontier = vec![&self.root];
        while !frontier.is_empty() {
            let mut next = Vec::with_capacity(frontier.len() * 2);
            for node in frontier {
                out.push((node.q, node.v));
                if let Some(children) = &node.children {
                    next.push(&children[0]);
                    next.push(&children[1]);
                }
            }
            frontier = next;
        }
        out
    }

    /// Serializable state.
    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            version: SNAPSHOT_VERSION,
            config: self.config,
            nodes: self.level_order_states().into_iter().map(|(q, v)| [q, v]).collect(),
            updates_seen: Some(self.updates_seen),
        }
    }

    pub fn restore(snapshot: &Snapshot) -> Result<Self, TreeError> {
        if snapshot.version != SNAPSHOT_VERSION {
            return Err(TreeError::UnsupportedVersion(snapshot.version));
        }
        let mut tree = Self::grow(snapshot.config)?;
        if snapshot.nodes.len() != tree.node_count() {
            return Err(TreeError::NodeCountMismatch {
                expected: tree.node_count(),
                got: snapshot.nodes.len(),
            });
        }
        for (index, &[q, v]) in snapshot.nodes.iter().enumerate() {
            if !(q.is_finite() && v.is_finite() && v >= 0.0) {
                return Err(TreeError::InvalidNode { index, q, v });
            }
        }
        let mut frontier = vec![&mut tree.root];
        let mut states = snapshot.nodes.iter();
        while !frontier.is_empty() {
            let mut next = Vec::with_capacity(frontier.len() * 2);
            for node in frontier {
                let [q, v] = *states.next().expect("length checked");
                node.q = q;
                node.v = v;
                if let Some(children) = &mut node.children {
                    let [left, right] = &mut **children;
                    next.push(left);
                    next.push(right);
                }
            }
            frontier = next;
        }
        tree.updates_seen = snapshot.updates_seen.unwrap_or(0);
        Ok(tree)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.snapshot()).expect("snapshot of finite state serializes")
    }

    pub fn from_json(payload: &str) -> Result<Self, TreeError> {
        let snapshot: Snapshot = serde_json::from_str(payload).map_err(|e| TreeError::Malformed(e.to_string()))?;
        Self::restore(&snapshot)
    }
}

/// Versioned persistence payload: config plus `[q, v]` per node in level order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snapshot {
    pub version: u32,
    pub config: XenovertConfig,
    pub nodes: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub updates_seen: Option<u64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(levels: u32) -> Xenovert {
        Xenovert::grow(XenovertConfig::with_levels(levels)).unwrap()
    }

    fn count_nodes(node: &QuasiQuantileNode) -> (usize, Vec<u32>) {
        match (node.left(), node.right()) {
            (Some(l), Some(r)) => {
                let (nl, mut ll) = count_nodes(l);
                let (nr, lr) = count_nodes(r);
                ll.extend(lr);
                (1 + nl + nr, ll)
            }
            (None, None) => (1, vec![node.level]),
            _ => panic!("node with a single child"),
        }
    }

    #[test]
    fn grow_builds_perfect_tree() {
        for (levels, nodes, leaves) in [(1, 1, 1), (3, 7, 4), (5, 31, 16)] {
            let t = tree(levels);
            let (n, leaf_levels) = count_nodes(t.root());
            assert_eq!(n, nodes);
            assert_eq!(leaf_levels.len(), leaves);
            assert!(leaf_levels.iter().all(|&l| l == levels - 1));
            assert_eq!(t.interval_count(), 1 << levels);
        }
        let t = tree(3);
        assert_eq!(t.root().level, 0);
        assert_eq!(t.root().left().unwrap().level, 1);
        assert_eq!(t.root().left().unwrap().right().unwrap().level, 2);
    }

    #[test]
    fn grow_rejects_bad_config() {
        assert_eq!(
            Xenovert::grow(XenovertConfig::with_levels(0)).unwrap_err(),
            TreeError::InvalidLevels(0)
        );
        assert_eq!(
            Xenovert::grow(XenovertConfig::with_levels(31)).unwrap_err(),
            TreeError::InvalidLevels(31)
        );
        let bad_alpha = XenovertConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            Xenovert::grow(bad_alpha),
            Err(TreeError::InvalidLearningRate(_))
        ));
        let bad_theta = XenovertConfig {
            velocity_decay: 1.0,
            ..Default::default()
        };
        assert!(matches!(
            Xenovert::grow(bad_theta),
            Err(TreeError::InvalidVelocityDecay(_))
        ));
    }

    #[test]
    fn single_node_step_matches_hand_evaluation() {
        let mut t = tree(1);
        t.update(10.0).unwrap();
        // v' = 0.99 * 0 + |0 - 10| = 10, q' = 0 + 1e-5 * 10 * (+1)
        assert_eq!(t.root().v, 10.0);
        assert!((t.root().q - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn zero_error_is_fixed_point() {
        let cfg = XenovertConfig {
            levels: 1,
            initial_q: 5.0,
            ..Default::default()
        };
        let mut t = Xenovert::grow(cfg).unwrap();
        t.update(5.0).unwrap();
        assert_eq!(t.root().q, 5.0);
        assert_eq!(t.root().v, 0.0);
    }

    #[test]
    fn update_touches_only_selected_path() {
        let mut t = tree(2);
        t.update(-3.0).unwrap();
        let states = t.level_order_states();
        assert_ne!(states[0], (0.0, 0.0));
        assert_ne!(states[1], (0.0, 0.0));
        assert_eq!(states[2], (0.0, 0.0));
    }

    #[test]
    fn convert_single_comparison() {
        let t = tree(1);
        assert_eq!(t.convert(-1.0).unwrap(), 0);
        assert_eq!(t.convert(1.0).unwrap(), 1);
        assert_eq!(t.convert(0.0).unwrap(), 1);
    }

    #[test]
    fn convert_two_levels_sorted_boundaries() {
        let t = Xenovert::from_inorder_values(XenovertConfig::with_levels(2), &[-1.0, 0.0, 1.0]).unwrap();
        let got: Vec<usize> = [-2.0, -0.5, 0.5, 5.0].iter().map(|&x| t.convert(x).unwrap()).collect();
        assert_eq!(got, vec![0, 1, 2, 3]);
        assert_eq!(t.convert(-1.0).unwrap(), 1);
        assert_eq!(t.convert(1.0).unwrap(), 3);
    }

    #[test]
    fn non_finite_input_rejected() {
        let mut t = tree(3);
        assert!(matches!(t.update(f64::NAN), Err(TreeError::NonFiniteInput(_))));
        assert!(matches!(t.convert(f64::INFINITY), Err(TreeError::NonFiniteInput(_))));
        assert!(t.touched_path(f64::NEG_INFINITY).is_err());
        assert_eq!(t.updates_seen(), 0);
        assert_eq!(t, tree(3));
    }

    #[test]
    fn quantile_values_in_order() {
        let t = tree(3);
        let values = t.quantile_values();
        assert_eq!(values.len(), 7);
        assert!(values.iter().enumerate().all(|(i, &(idx, q))| i == idx && q == 0.0));
        let single = tree(1).quantile_values();
        assert_eq!(single, vec![(0, 0.0)]);

        let inorder = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let t = Xenovert::from_inorder_values(XenovertConfig::with_levels(3), &inorder).unwrap();
        let back: Vec<f64> = t.quantile_values().into_iter().map(|(_, q)| q).collect();
        assert_eq!(back, inorder);
        assert_eq!(t.root().q, 4.0);
    }

    #[test]
    fn touched_path_all_right() {
        let t = tree(3);
        assert_eq!(t.touched_path(1.0).unwrap(), vec![NodeId(0), NodeId(2), NodeId(6)]);
        assert_eq!(t.touched_path(-1.0).unwrap(), vec![NodeId(0), NodeId(1), NodeId(3)]);
        assert_eq!(NodeId(6).level(), 2);
        assert_eq!(NodeId(0).level(), 0);
        assert_eq!(NodeId(1).level(), 1);
    }

    #[test]
    fn snapshot_json_shape() {
        let mut t = tree(2);
        t.update(3.0).unwrap();
        let json: serde_json::Value = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(json["version"], 1);
        assert_eq!(json["config"]["L"], 2);
        assert_eq!(json["config"]["alpha"], 1e-5);
        assert_eq!(json["config"]["theta"], 0.99);
        assert_eq!(json["config"]["initial_q"], 0.0);
        assert_eq!(json["nodes"].as_array().unwrap().len(), 3);
        assert_eq!(json["nodes"][0][1], 3.0);
    }

    #[test]
    fn snapshot_round_trip_is_byte_identical() {
        let mut t = tree(4);
        for i in 0..500 {
            t.update((i as f64 * 0.731).sin() * 17.0 + 0.1).unwrap();
        }
        let a = t.to_json();
        let restored = Xenovert::from_json(&a).unwrap();
        assert_eq!(restored, t);
        assert_eq!(restored.to_json(), a);
    }

    #[test]
    fn restore_rejects_bad_payloads() {
        let json = tree(3).to_json();
        assert!(matches!(
            Xenovert::from_json(&json[..json.len() / 2]),
            Err(TreeError::Malformed(_))
        ));
        let wrong_version = json.replace("\"version\":1", "\"version\":7");
        assert_eq!(
            Xenovert::from_json(&wrong_version).unwrap_err(),
            TreeError::UnsupportedVersion(7)
        );
        let mut snap = tree(3).snapshot();
        snap.nodes.pop();
        assert!(matches!(
            Xenovert::restore(&snap),
            Err(TreeError::NodeCountMismatch { expected: 7, got: 6 })
        ));
        let mut snap = tree(3).snapshot();
        snap.nodes[2][1] = -1.0;
        assert!(matches!(
            Xenovert::restore(&snap),
            Err(TreeError::InvalidNode { index: 2, .. })
        ));
        let legacy = r#"{"version":1,"config":{"L":1,"alpha":0.001,"theta":0.5,"initial_q":2.0},"nodes":[[2.5,1.0]]}"#;
        let t = Xenovert::from_json(legacy).unwrap();
        assert_eq!(t.root().q, 2.5);
        assert_eq!(t.updates_seen(), 0);
    }
}
