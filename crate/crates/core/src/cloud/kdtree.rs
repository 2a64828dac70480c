//! Balanced k-d tree over a point-cloud snapshot.
//!
//! Queries return exactly the same answer as exhaustive search, including
//! the lowest-ordinal tie-break; the far branch is visited on equality so
//! equal-distance points with lower ordinals are never pruned away.

use nalgebra::Vector3;

use crate::{Error, Result};

use super::PointCloud;

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: u32, end: u32 },
    Split { axis: u8, value: f64, left: u32, right: u32 },
}

/// Read-only nearest-neighbor index over a snapshot of a cloud's points.
#[derive(Debug, Clone)]
pub struct NnIndex {
    points: Vec<Vector3<f64>>,
    perm: Vec<u32>,
    nodes: Vec<Node>,
    root: u32,
}

impl NnIndex {
    pub fn build(cloud: &PointCloud) -> Result<Self> {
        if cloud.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let points = cloud.points().to_vec();
        let mut perm: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::new();
        let n = points.len();
        let root = build_node(&points, &mut perm, 0, n, &mut nodes);
        Ok(Self {
            points,
            perm,
            nodes,
            root,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nearest point to `q`: `(point, squared distance, ordinal)`.
    pub fn nearest(&self, q: &Vector3<f64>) -> (Vector3<f64>, f64, usize) {
        let mut best = Best {
            d2: f64::INFINITY,
            ordinal: u32::MAX,
        };
        self.search(self.root, q, u32::MAX, &mut best);
        (
            self.points[best.ordinal as usize],
            best.d2,
            best.ordinal as usize,
        )
    }

    /// Nearest point to `q` skipping a single ordinal (self-match exclusion).
    pub fn nearest_excluding(&self, q: &Vector3<f64>, exclude: usize) -> (Vector3<f64>, f64, usize) {
        let mut best = Best {
            d2: f64::INFINITY,
            ordinal: u32::MAX,
        };
        self.search(self.root, q, exclude as u32, &mut best);
        (
            self.points[best.ordinal as usize],
            best.d2,
            best.ordinal as usize,
        )
    }

    fn search(&self, node: u32, q: &Vector3<f64>, exclude: u32, best: &mut Best) {
        match &self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                for &idx in &self.perm[*start as usize..*end as usize] {
                    if idx == exclude {
                        continue;
                    }
                    let d2 = (self.points[idx as usize] - q).norm_squared();
                    if d2 < best.d2 || (d2 == best.d2 && idx < best.ordinal) {
                        best.d2 = d2;
                        best.ordinal = idx;
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[*axis as usize] - value;
                let (near, far) = if diff < 0.0 { (*left, *right) } else { (*right, *left) };
                self.search(near, q, exclude, best);
                if diff * diff <= best.d2 {
                    self.search(far, q, exclude, best);
                }
            }
        }
    }
}

struct Best {
    d2: f64,
    ordinal: u32,
}

fn build_node(
    points: &[Vector3<f64>],
    perm: &mut [u32],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> u32 {
    let count = end - start;
    if count <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: start as u32,
            end: end as u32,
        });
        return (nodes.len() - 1) as u32;
    }

    // Split along the axis with the largest spread.
    let slice = &perm[start..end];
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &idx in slice {
        let p = &points[idx as usize];
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| {
            (hi[a] - lo[a])
                .partial_cmp(&(hi[b] - lo[b]))
                .expect("finite coordinates")
        })
        .unwrap();
    if hi[axis] - lo[axis] == 0.0 {
        // All points coincide; a leaf avoids infinite recursion.
        nodes.push(Node::Leaf {
            start: start as u32,
            end: end as u32,
        });
        return (nodes.len() - 1) as u32;
    }

    let mid = start + count / 2;
    perm[start..end].select_nth_unstable_by(count / 2, |&a, &b| {
        points[a as usize][axis]
            .partial_cmp(&points[b as usize][axis])
            .expect("finite coordinates")
    });
    let value = points[perm[mid] as usize][axis];

    let placeholder = nodes.len() as u32;
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let left = build_node(points, perm, start, mid, nodes);
    let right = build_node(points, perm, mid, end, nodes);
    nodes[placeholder as usize] = Node::Split {
        axis: axis as u8,
        value,
        left,
        right,
    };
    placeholder
}
