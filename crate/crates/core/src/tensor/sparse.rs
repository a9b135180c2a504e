use std::collections::BTreeMap;

use super::{Result, TensorError};
use crate::scalar::Scalar;

/// Directed weighted edge `src -> dst`.
///
/// In the dense form of a relation the edge sits at `A[src][dst]`; during
/// propagation features flow along the edge, from `src` into `dst`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge<S> {
    pub src: usize,
    pub dst: usize,
    pub weight: S,
}

impl<S> Edge<S> {
    pub fn new(src: usize, dst: usize, weight: S) -> Self {
        Self { src, dst, weight }
    }
}

/// Sparse typed adjacency over a fixed vertex set.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRelation<S: Scalar> {
    n_vertices: usize,
    edges: Vec<Edge<S>>,
    normalized: bool,
}

impl<S: Scalar> SparseRelation<S> {
    /// Validated unnormalized relation.
    pub fn new(n_vertices: usize, edges: Vec<Edge<S>>) -> Result<Self> {
        Self::validated(n_vertices, edges, false)
    }

    pub fn empty(n_vertices: usize) -> Self {
        Self {
            n_vertices,
            edges: Vec::new(),
            normalized: false,
        }
    }

    /// Unit-weight relation from `(src, dst)` pairs.
    pub fn from_pairs(n_vertices: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let edges = pairs
            .iter()
            .map(|&(s, d)| Edge::new(s, d, S::one()))
            .collect();
        Self::new(n_vertices, edges)
    }

    fn validated(n_vertices: usize, edges: Vec<Edge<S>>, normalized: bool) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(edges.len());
        for e in &edges {
            if e.src >= n_vertices || e.dst >= n_vertices {
                return Err(TensorError::Relation(format!(
                    "edge ({}, {}) outside {} vertices",
                    e.src, e.dst, n_vertices
                )));
            }
            if e.weight <= S::zero() || !e.weight.is_finite() {
                return Err(TensorError::Relation(format!(
                    "edge ({}, {}) has non-positive weight {}",
                    e.src, e.dst, e.weight
                )));
            }
            if !seen.insert((e.src, e.dst)) {
                return Err(TensorError::Relation(format!(
                    "duplicate edge ({}, {})",
                    e.src, e.dst
                )));
            }
        }
        Ok(Self {
            n_vertices,
            edges,
            normalized,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn edges(&self) -> &[Edge<S>] {
        &self.edges
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// `true` for every vertex touched by at least one edge.
    pub fn incident(&self) -> Vec<bool> {
        let mut inc = vec![false; self.n_vertices];
        for e in &self.edges {
            inc[e.src] = true;
            inc[e.dst] = true;
        }
        inc
    }

    /// Dense `n x n` form with `A[src][dst] = weight`.
    pub fn to_dense(&self) -> Vec<Vec<S>> {
        let mut a = vec![vec![S::zero(); self.n_vertices]; self.n_vertices];
        for e in &self.edges {
            a[e.src][e.dst] = e.weight;
        }
        a
    }

    /// Edge-reversed relation; the dense form is transposed.
    pub fn transpose(&self) -> Self {
        Self {
            n_vertices: self.n_vertices,
            edges: self
                .edges
                .iter()
                .map(|e| Edge::new(e.dst, e.src, e.weight))
                .collect(),
            normalized: self.normalized,
        }
    }

    /// Symmetric normalization `D^-1/2 (A + I) D^-1/2`.
    ///
    /// Self-loops are added only to vertices with at least one incident
    /// edge, so isolated vertices keep all-zero rows. The degree of a
    /// vertex is the row sum of the symmetrized matrix `max(Ã, Ãᵀ)`, which
    /// reduces to the usual GCN degree when the relation is undirected.
    pub fn normalize(&self) -> Result<Self> {
        if self.normalized {
            return Err(TensorError::Relation("relation already normalized".into()));
        }
        let incident = self.incident();
        let mut diag = vec![S::zero(); self.n_vertices];
        for (v, &inc) in incident.iter().enumerate() {
            if inc {
                diag[v] = S::one();
            }
        }
        // unordered pair -> (weight lo->hi, weight hi->lo)
        let mut pairs: BTreeMap<(usize, usize), (S, S)> = BTreeMap::new();
        for e in &self.edges {
            if e.src == e.dst {
                diag[e.src] += e.weight;
                continue;
            }
            let key = (e.src.min(e.dst), e.src.max(e.dst));
            let slot = pairs.entry(key).or_insert((S::zero(), S::zero()));
            if e.src < e.dst {
                slot.0 = e.weight;
            } else {
                slot.1 = e.weight;
            }
        }
        let mut degree = diag.clone();
        for (&(lo, hi), &(fwd, bwd)) in &pairs {
            let w = fwd.max(bwd);
            degree[lo] += w;
            degree[hi] += w;
        }
        let inv_sqrt: Vec<S> = degree
            .iter()
            .map(|&d| {
                if d > S::zero() {
                    d.sqrt().recip()
                } else {
                    S::zero()
                }
            })
            .collect();

        let mut edges = Vec::with_capacity(self.edges.len() + self.n_vertices);
        for e in self.edges.iter().filter(|e| e.src != e.dst) {
            edges.push(Edge::new(
                e.src,
                e.dst,
                e.weight * inv_sqrt[e.src] * inv_sqrt[e.dst],
            ));
        }
        for (v, &inc) in incident.iter().enumerate() {
            if inc {
                edges.push(Edge::new(v, v, diag[v] / degree[v]));
            }
        }
        Ok(Self {
            n_vertices: self.n_vertices,
            edges,
            normalized: true,
        })
    }

    /// Gives every vertex of `partition` that has no incident edge a unit
    /// self-loop, i.e. the normalized weight a lone self-connection would
    /// receive. Only meaningful on normalized relations.
    pub fn close_over(&self, partition: &[bool]) -> Result<Self> {
        if !self.normalized {
            return Err(TensorError::NotNormalized);
        }
        if partition.len() != self.n_vertices {
            return Err(TensorError::Relation(format!(
                "partition mask has {} entries for {} vertices",
                partition.len(),
                self.n_vertices
            )));
        }
        let incident = self.incident();
        let mut out = self.clone();
        for (v, (&inside, &inc)) in partition.iter().zip(&incident).enumerate() {
            if inside && !inc {
                out.edges.push(Edge::new(v, v, S::one()));
            }
        }
        Ok(out)
    }

    /// Union of two unnormalized relations over the same vertex set;
    /// duplicated pairs keep the larger weight.
    pub fn union(&self, other: &Self) -> Result<Self> {
        if self.normalized || other.normalized {
            return Err(TensorError::Relation(
                "union of normalized relations".into(),
            ));
        }
        if self.n_vertices != other.n_vertices {
            return Err(TensorError::Relation(format!(
                "union over {} and {} vertices",
                self.n_vertices, other.n_vertices
            )));
        }
        let mut index: std::collections::HashMap<(usize, usize), usize> = self
            .edges
            .iter()
            .enumerate()
            .map(|(i, e)| ((e.src, e.dst), i))
            .collect();
        let mut edges = self.edges.clone();
        for e in &other.edges {
            match index.get(&(e.src, e.dst)) {
                Some(&i) => edges[i].weight = edges[i].weight.max(e.weight),
                None => {
                    index.insert((e.src, e.dst), edges.len());
                    edges.push(*e);
                }
            }
        }
        Ok(Self {
            n_vertices: self.n_vertices,
            edges,
            normalized: false,
        })
    }

    /// Maps vertex `i` to `map[i]` in a vertex set of size `n_vertices`.
    pub fn reindex(&self, n_vertices: usize, map: &[usize]) -> Result<Self> {
        if map.len() != self.n_vertices {
            return Err(TensorError::Relation(format!(
                "index map has {} entries for {} vertices",
                map.len(),
                self.n_vertices
            )));
        }
        let edges = self
            .edges
            .iter()
            .map(|e| Edge::new(map[e.src], map[e.dst], e.weight))
            .collect();
        Self::validated(n_vertices, edges, self.normalized)
    }

    /// Block-diagonal stack; block `i` occupies the vertex range following
    /// all earlier blocks.
    pub fn stack(blocks: &[Self]) -> Result<Self> {
        let normalized = blocks.first().is_some_and(|b| b.normalized);
        if blocks.iter().any(|b| b.normalized != normalized) {
            return Err(TensorError::Relation(
                "cannot stack normalized with unnormalized relations".into(),
            ));
        }
        let n = blocks.iter().map(|b| b.n_vertices).sum();
        let mut edges = Vec::with_capacity(blocks.iter().map(|b| b.edges.len()).sum());
        let mut offset = 0;
        for b in blocks {
            edges.extend(
                b.edges
                    .iter()
                    .map(|e| Edge::new(e.src + offset, e.dst + offset, e.weight)),
            );
            offset += b.n_vertices;
        }
        Ok(Self {
            n_vertices: n,
            edges,
            normalized,
        })
    }

    pub fn cast<T: Scalar>(&self) -> SparseRelation<T> {
        SparseRelation {
            n_vertices: self.n_vertices,
            edges: self
                .edges
                .iter()
                .map(|e| Edge::new(e.src, e.dst, T::lit(e.weight.as_f64())))
                .collect(),
            normalized: self.normalized,
        }
    }
}
