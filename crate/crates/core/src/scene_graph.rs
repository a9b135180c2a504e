//! Per-frame ego-centric scene graphs and their alignment into sequences.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::lane_graph::{wrap_angle, Direction, LaneGraph};
use crate::tensor::{Edge, SparseRelation, Tensor, TensorError};

/// Number of vertex feature channels: x, y, phi, v.
pub const VERTEX_FEATURES: usize = 4;
/// Distance threshold for the W2A, E2W and E2A relations, in meters.
pub const DEFAULT_DISTANCE: f64 = 30.0;
/// Distance floor used by the reciprocal-distance edge weights.
pub const DEFAULT_MIN_DISTANCE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SceneError {
    #[error("track id {0} appears twice in one frame")]
    DuplicateTrack(u64),
    #[error("sequence needs at least one frame")]
    NoFrames,
    #[error("{frames} frames but {labels} labels")]
    LabelCount { frames: usize, labels: usize },
    #[error("frames disagree on the number of waypoints ({0} vs {1})")]
    WaypointMismatch(usize, usize),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Another traffic participant at one instant, in map coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    #[serde(rename = "id")]
    pub track_id: u64,
    pub x: f64,
    pub y: f64,
    pub phi: f64,
    pub v: f64,
}

/// Pose and speed of the ego vehicle, in map coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoPose {
    pub x: f64,
    pub y: f64,
    pub phi: f64,
    pub v: f64,
}

/// Expresses a map-frame state in the frame centered on `pose` with the ego
/// heading along +x. Speed is passed through unchanged.
pub fn ego_transform(pose: &EgoPose, x: f64, y: f64, phi: f64, v: f64) -> [f64; 4] {
    let (dx, dy) = (x - pose.x, y - pose.y);
    let (s, c) = pose.phi.sin_cos();
    [
        c * dx + s * dy,
        -s * dx + c * dy,
        wrap_angle(phi - pose.phi),
        v,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphOptions {
    /// Distance threshold for the proximity relations.
    pub distance: f64,
    /// Weight proximity edges by reciprocal distance instead of 1.
    pub weighted: bool,
    /// Floor applied to distances before taking the reciprocal.
    pub min_distance: f64,
}

impl Default for GraphOptions {
    fn default() -> Self {
        Self {
            distance: DEFAULT_DISTANCE,
            weighted: false,
            min_distance: DEFAULT_MIN_DISTANCE,
        }
    }
}

impl GraphOptions {
    fn weight(&self, dist: f64) -> f64 {
        if self.weighted {
            1.0 / dist.max(self.min_distance)
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RelationKind {
    Suc,
    Pre,
    W2A,
    E2W,
    E2A,
}

impl RelationKind {
    pub const ALL: [RelationKind; 5] = [Self::Suc, Self::Pre, Self::W2A, Self::E2W, Self::E2A];
}

/// The five typed relations of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationSet {
    pub suc: SparseRelation<f64>,
    pub pre: SparseRelation<f64>,
    pub w2a: SparseRelation<f64>,
    pub e2w: SparseRelation<f64>,
    pub e2a: SparseRelation<f64>,
}

impl RelationSet {
    pub fn get(&self, kind: RelationKind) -> &SparseRelation<f64> {
        match kind {
            RelationKind::Suc => &self.suc,
            RelationKind::Pre => &self.pre,
            RelationKind::W2A => &self.w2a,
            RelationKind::E2W => &self.e2w,
            RelationKind::E2A => &self.e2a,
        }
    }

    fn try_map(
        &self,
        f: impl Fn(&SparseRelation<f64>) -> Result<SparseRelation<f64>, TensorError>,
    ) -> Result<Self, TensorError> {
        Ok(Self {
            suc: f(&self.suc)?,
            pre: f(&self.pre)?,
            w2a: f(&self.w2a)?,
            e2w: f(&self.e2w)?,
            e2a: f(&self.e2a)?,
        })
    }

    /// Union of all five relations (unnormalized inputs only).
    pub fn merged(&self) -> Result<SparseRelation<f64>, TensorError> {
        self.suc
            .union(&self.pre)?
            .union(&self.w2a)?
            .union(&self.e2w)?
            .union(&self.e2a)
    }
}

/// Graph of one frame. Vertex order: ego, agents by ascending track id,
/// then waypoints in lane-graph order.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGraph {
    /// `[N, 4]` ego-frame features.
    pub vertices: Tensor<f64>,
    /// Normalized relations.
    pub relations: RelationSet,
    /// The same relations before normalization.
    pub raw: RelationSet,
    pub agent_ids: Vec<u64>,
    pub n_waypoints: usize,
}

impl SceneGraph {
    pub const EGO_INDEX: usize = 0;

    pub fn n_agents(&self) -> usize {
        self.agent_ids.len()
    }

    pub fn n_vertices(&self) -> usize {
        1 + self.agent_ids.len() + self.n_waypoints
    }
}

/// Symmetric normalization with self-loops on incident vertices only.
pub fn normalize_relation(rel: &SparseRelation<f64>) -> Result<SparseRelation<f64>, TensorError> {
    rel.normalize()
}

/// Builds the scene graph of one frame.
pub fn build_scene_graph(
    pose: &EgoPose,
    agents: &[AgentState],
    lanes: &LaneGraph,
    options: &GraphOptions,
) -> Result<SceneGraph, SceneError> {
    let mut sorted: Vec<&AgentState> = agents.iter().collect();
    sorted.sort_by_key(|a| a.track_id);
    for w in sorted.windows(2) {
        if w[0].track_id == w[1].track_id {
            return Err(SceneError::DuplicateTrack(w[0].track_id));
        }
    }
    let n_agents = sorted.len();
    let n_waypoints = lanes.n_waypoints();
    let n = 1 + n_agents + n_waypoints;
    let wp0 = 1 + n_agents;

    let mut data = Vec::with_capacity(n * VERTEX_FEATURES);
    data.extend_from_slice(&[0.0, 0.0, 0.0, pose.v]);
    for a in &sorted {
        data.extend_from_slice(&ego_transform(pose, a.x, a.y, a.phi, a.v));
    }
    for w in lanes.waypoints() {
        data.extend_from_slice(&ego_transform(pose, w.x, w.y, w.phi, 0.0));
    }
    let vertices = Tensor::new(vec![n, VERTEX_FEATURES], data)?;
    let pos = |i: usize| (vertices.row(i)[0], vertices.row(i)[1]);
    let dist = |i: usize, j: usize| {
        let (a, b) = (pos(i), pos(j));
        (a.0 - b.0).hypot(a.1 - b.1)
    };

    let mut w2a = Vec::new();
    for w in wp0..n {
        for a in 1..wp0 {
            let d = dist(w, a);
            if d <= options.distance {
                w2a.push(Edge::new(w, a, options.weight(d)));
            }
        }
    }
    // Ego relations are undirected: the ego vertex gathers from its
    // neighbors and they receive the ego features.
    let proximity = |range: std::ops::Range<usize>| {
        let mut edges = Vec::new();
        for v in range {
            let d = dist(0, v);
            if d <= options.distance {
                let w = options.weight(d);
                edges.push(Edge::new(0, v, w));
                edges.push(Edge::new(v, 0, w));
            }
        }
        edges
    };
    let e2a = proximity(1..wp0);
    let e2w = proximity(wp0..n);

    let lane_map: Vec<usize> = (wp0..n).collect();
    let raw = RelationSet {
        suc: lanes
            .directional_relation(Direction::Suc)
            .reindex(n, &lane_map)?,
        pre: lanes
            .directional_relation(Direction::Pre)
            .reindex(n, &lane_map)?,
        w2a: SparseRelation::new(n, w2a)?,
        e2w: SparseRelation::new(n, e2w)?,
        e2a: SparseRelation::new(n, e2a)?,
    };
    let relations = raw.try_map(normalize_relation)?;
    Ok(SceneGraph {
        vertices,
        relations,
        raw,
        agent_ids: sorted.iter().map(|a| a.track_id).collect(),
        n_waypoints,
    })
}

/// A whole sequence aligned to one vertex index space: ego, every track id
/// seen in the sequence (ascending), then the waypoints.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    /// `[T, N_max, 4]`, time-major; rows of absent vertices are zero.
    pub features: Tensor<f64>,
    /// `T * N_max` validity flags in the same layout as `features`.
    pub mask: Vec<bool>,
    /// Unnormalized relations of every frame in the union index space.
    pub relations: Vec<RelationSet>,
    pub labels: Vec<usize>,
    pub agent_ids: Vec<u64>,
    pub n_waypoints: usize,
}

impl SequenceBatch {
    pub fn n_frames(&self) -> usize {
        self.labels.len()
    }

    pub fn n_vertices(&self) -> usize {
        1 + self.agent_ids.len() + self.n_waypoints
    }

    pub fn n_agents(&self) -> usize {
        self.agent_ids.len()
    }

    pub fn is_valid(&self, t: usize, v: usize) -> bool {
        self.mask[t * self.n_vertices() + v]
    }

    /// Feature row of vertex `v` at frame `t`.
    pub fn feature(&self, t: usize, v: usize) -> &[f64] {
        self.features.row(t * self.n_vertices() + v)
    }

    pub fn is_waypoint(&self, v: usize) -> bool {
        v > self.agent_ids.len()
    }

    pub fn is_agent(&self, v: usize) -> bool {
        v >= 1 && v <= self.agent_ids.len()
    }
}

/// Aligns per-frame graphs into one batch.
pub fn assemble_sequence(
    frames: &[SceneGraph],
    labels: &[usize],
) -> Result<SequenceBatch, SceneError> {
    if frames.is_empty() {
        return Err(SceneError::NoFrames);
    }
    if frames.len() != labels.len() {
        return Err(SceneError::LabelCount {
            frames: frames.len(),
            labels: labels.len(),
        });
    }
    let n_waypoints = frames[0].n_waypoints;
    let mut slots: BTreeMap<u64, usize> = BTreeMap::new();
    for f in frames {
        if f.n_waypoints != n_waypoints {
            return Err(SceneError::WaypointMismatch(n_waypoints, f.n_waypoints));
        }
        for w in f.agent_ids.windows(2) {
            if w[0] >= w[1] {
                return Err(SceneError::DuplicateTrack(w[0]));
            }
        }
        for &id in &f.agent_ids {
            slots.insert(id, 0);
        }
    }
    for (i, slot) in slots.values_mut().enumerate() {
        *slot = 1 + i;
    }
    let n_agents = slots.len();
    let n = 1 + n_agents + n_waypoints;
    let t_len = frames.len();

    let mut features = vec![0.0; t_len * n * VERTEX_FEATURES];
    let mut mask = vec![false; t_len * n];
    let mut relations = Vec::with_capacity(t_len);
    for (t, f) in frames.iter().enumerate() {
        let mut map = Vec::with_capacity(f.n_vertices());
        map.push(0);
        map.extend(f.agent_ids.iter().map(|id| slots[id]));
        map.extend((0..n_waypoints).map(|w| 1 + n_agents + w));
        for (local, &global) in map.iter().enumerate() {
            let row = t * n + global;
            mask[row] = true;
            features[row * VERTEX_FEATURES..(row + 1) * VERTEX_FEATURES]
                .copy_from_slice(f.vertices.row(local));
        }
        relations.push(f.raw.try_map(|r| r.reindex(n, &map))?);
    }
    Ok(SequenceBatch {
        features: Tensor::new(vec![t_len, n, VERTEX_FEATURES], features)?,
        mask,
        relations,
        labels: labels.to_vec(),
        agent_ids: slots.into_keys().collect(),
        n_waypoints,
    })
}

/// Builds and assembles a sequence of `(pose, agents)` frames over one map.
pub fn build_sequence(
    frames: &[(EgoPose, Vec<AgentState>)],
    labels: &[usize],
    lanes: &LaneGraph,
    options: &GraphOptions,
) -> Result<SequenceBatch, SceneError> {
    let graphs = frames
        .iter()
        .map(|(pose, agents)| build_scene_graph(pose, agents, lanes, options))
        .collect::<Result<Vec<_>, _>>()?;
    assemble_sequence(&graphs, labels)
}
