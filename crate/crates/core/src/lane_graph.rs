//! Static map representation: lane centerlines resampled into waypoints and
//! the successor/predecessor relations between them.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::tensor::SparseRelation;

/// Default spacing between consecutive waypoints, in meters.
pub const WAYPOINT_INTERVAL: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LaneGraphError {
    #[error("lane segment {0:?} has fewer than two centerline points")]
    TooFewPoints(String),
    #[error("lane segment {id:?} repeats point {index}")]
    RepeatedPoint { id: String, index: usize },
    #[error("lane segment {0:?} has a non-finite coordinate")]
    NonFinite(String),
    #[error("lane segment id {0:?} is defined twice")]
    DuplicateId(String),
    #[error("lane segment {from:?} references unknown segment {missing:?}")]
    UnknownSegment { from: String, missing: String },
    #[error("waypoint interval must be positive, got {0}")]
    Interval(f64),
}

/// One lane segment as found in the map: an ordered centerline plus
/// topology references by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneSegment {
    pub id: String,
    #[serde(rename = "pts")]
    pub centerline: Vec<[f64; 2]>,
    #[serde(rename = "suc", default)]
    pub successor_ids: Vec<String>,
    #[serde(rename = "pre", default)]
    pub predecessor_ids: Vec<String>,
}

impl LaneSegment {
    pub fn new(id: impl Into<String>, centerline: Vec<[f64; 2]>) -> Self {
        Self {
            id: id.into(),
            centerline,
            successor_ids: Vec::new(),
            predecessor_ids: Vec::new(),
        }
    }

    pub fn with_successors(mut self, ids: &[&str]) -> Self {
        self.successor_ids = ids.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn with_predecessors(mut self, ids: &[&str]) -> Self {
        self.predecessor_ids = ids.iter().map(|s| s.to_string()).collect();
        self
    }

    fn validate(&self) -> Result<(), LaneGraphError> {
        if self.centerline.len() < 2 {
            return Err(LaneGraphError::TooFewPoints(self.id.clone()));
        }
        if self.centerline.iter().flatten().any(|c| !c.is_finite()) {
            return Err(LaneGraphError::NonFinite(self.id.clone()));
        }
        for (i, w) in self.centerline.windows(2).enumerate() {
            if w[0] == w[1] {
                return Err(LaneGraphError::RepeatedPoint {
                    id: self.id.clone(),
                    index: i + 1,
                });
            }
        }
        Ok(())
    }
}

/// Centerline sample. `phi` points toward the next waypoint of the segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub phi: f64,
    pub segment_id: String,
    pub index_in_segment: usize,
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Samples the centerline every `interval` meters of arc length starting at
/// its first point; the final endpoint is always emitted, so the last gap
/// may be shorter than `interval`.
pub fn resample_centerline(
    segment: &LaneSegment,
    interval: f64,
) -> Result<Vec<Waypoint>, LaneGraphError> {
    if !(interval > 0.0 && interval.is_finite()) {
        return Err(LaneGraphError::Interval(interval));
    }
    segment.validate()?;
    let pts = &segment.centerline;
    let mut cum = Vec::with_capacity(pts.len());
    cum.push(0.0);
    for w in pts.windows(2) {
        let d = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
        cum.push(cum.last().unwrap() + d);
    }
    let total = *cum.last().unwrap();

    let mut samples: Vec<[f64; 2]> = Vec::new();
    let mut piece = 0;
    let mut k = 0usize;
    loop {
        let s = k as f64 * interval;
        if s >= total - 1e-9 * total.max(1.0) {
            break;
        }
        while cum[piece + 1] < s {
            piece += 1;
        }
        let t = (s - cum[piece]) / (cum[piece + 1] - cum[piece]);
        let (a, b) = (pts[piece], pts[piece + 1]);
        samples.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        k += 1;
    }
    samples.push(*pts.last().unwrap());

    let n = samples.len();
    let mut out = Vec::with_capacity(n);
    for (i, p) in samples.iter().enumerate() {
        let phi = if i + 1 < n {
            let q = samples[i + 1];
            wrap_angle((q[1] - p[1]).atan2(q[0] - p[0]))
        } else {
            out.last().map_or(0.0, |w: &Waypoint| w.phi)
        };
        out.push(Waypoint {
            x: p[0],
            y: p[1],
            phi,
            segment_id: segment.id.clone(),
            index_in_segment: i,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Suc,
    Pre,
}

/// Resampled lane graph. Segments are kept sorted by id and waypoints are
/// laid out segment by segment in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneGraph {
    segments: Vec<LaneSegment>,
    waypoints: Vec<Waypoint>,
    ranges: Vec<Range<usize>>,
    /// Segment-level links `(from, to)` by segment position, deduplicated.
    links: BTreeSet<(usize, usize)>,
}

impl LaneGraph {
    pub fn new(segments: Vec<LaneSegment>) -> Result<Self, LaneGraphError> {
        Self::with_interval(segments, WAYPOINT_INTERVAL)
    }

    pub fn with_interval(
        mut segments: Vec<LaneSegment>,
        interval: f64,
    ) -> Result<Self, LaneGraphError> {
        segments.sort_by(|a, b| a.id.cmp(&b.id));
        let mut position = BTreeMap::new();
        for (i, s) in segments.iter().enumerate() {
            if position.insert(s.id.clone(), i).is_some() {
                return Err(LaneGraphError::DuplicateId(s.id.clone()));
            }
        }
        let resolve = |from: &str, id: &String| {
            position
                .get(id)
                .copied()
                .ok_or_else(|| LaneGraphError::UnknownSegment {
                    from: from.to_string(),
                    missing: id.clone(),
                })
        };
        let mut links = BTreeSet::new();
        for (i, s) in segments.iter().enumerate() {
            for id in &s.successor_ids {
                links.insert((i, resolve(&s.id, id)?));
            }
            for id in &s.predecessor_ids {
                links.insert((resolve(&s.id, id)?, i));
            }
        }
        let mut waypoints = Vec::new();
        let mut ranges = Vec::with_capacity(segments.len());
        for s in &segments {
            let start = waypoints.len();
            waypoints.extend(resample_centerline(s, interval)?);
            ranges.push(start..waypoints.len());
        }
        Ok(Self {
            segments,
            waypoints,
            ranges,
            links,
        })
    }

    pub fn empty() -> Self {
        Self {
            segments: Vec::new(),
            waypoints: Vec::new(),
            ranges: Vec::new(),
            links: BTreeSet::new(),
        }
    }

    pub fn segments(&self) -> &[LaneSegment] {
        &self.segments
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn n_waypoints(&self) -> usize {
        self.waypoints.len()
    }

    /// Waypoint index range of the segment at position `i`.
    pub fn segment_range(&self, i: usize) -> Range<usize> {
        self.ranges[i].clone()
    }

    /// Unit-weight directional relation over the waypoints. `Suc` links
    /// each waypoint to the next one of its segment and every segment end
    /// to the first waypoint of each successor segment; `Pre` is its
    /// transpose.
    pub fn directional_relation(&self, direction: Direction) -> SparseRelation<f64> {
        let mut pairs = Vec::new();
        for r in &self.ranges {
            pairs.extend((r.start..r.end - 1).map(|i| (i, i + 1)));
        }
        for &(from, to) in &self.links {
            pairs.push((self.ranges[from].end - 1, self.ranges[to].start));
        }
        if direction == Direction::Pre {
            for p in &mut pairs {
                *p = (p.1, p.0);
            }
        }
        SparseRelation::from_pairs(self.waypoints.len(), &pairs)
            .expect("lane topology yields valid distinct edges")
    }
}

/// Builds the successor or predecessor relation of a lane graph.
pub fn build_directional_relation(graph: &LaneGraph, direction: Direction) -> SparseRelation<f64> {
    graph.directional_relation(direction)
}
