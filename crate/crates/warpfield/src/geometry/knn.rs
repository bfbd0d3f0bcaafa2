use super::point::Point3;
use super::GeometryError;

/// Below this size a linear scan beats the tree; the index skips tree
/// construction entirely.
const BRUTE_FORCE_BELOW: usize = 64;
const LEAF_SIZE: usize = 16;

/// One K-nearest-neighbor result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone)]
enum Node {
    Split { axis: u8, value: f64, right: u32 },
    Leaf { start: u32, len: u32 },
}

/// Immutable exact nearest-neighbor index over a fixed point set.
///
/// Queries return exactly what a brute-force scan would: distances are
/// computed identically and ties are broken by ascending point index.
/// Safe to query concurrently from multiple threads.
#[derive(Debug, Clone)]
pub struct KnnIndex {
    points: Vec<Point3>,
    nodes: Vec<Node>,
    leaf_order: Vec<u32>,
}

impl KnnIndex {
    pub fn build(points: Vec<Point3>) -> Result<KnnIndex, GeometryError> {
        if points.is_empty() {
            return Err(GeometryError::EmptyPointSet);
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if points.len() < BRUTE_FORCE_BELOW {
            return Ok(KnnIndex { points, nodes: Vec::new(), leaf_order: Vec::new() });
        }
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::new();
        build_recursive(&points, &mut order, 0, &mut nodes);
        Ok(KnnIndex { points, nodes, leaf_order: order })
    }

    /// The point set the index was built over.
    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `min(k, len)` nearest points to `p`, ascending by distance,
    /// ties broken by smaller point index.
    pub fn knn(&self, p: Point3, k: usize) -> Vec<Neighbor> {
        if k == 0 {
            return Vec::new();
        }
        let mut best = Candidates::new(k.min(self.points.len()));
        if self.nodes.is_empty() {
            for (i, q) in self.points.iter().enumerate() {
                best.offer(p.distance_squared(*q), i as u32);
            }
        } else {
            self.search(0, p, &mut best);
        }
        best.into_neighbors()
    }

    /// Single nearest neighbor.
    pub fn nearest(&self, p: Point3) -> Neighbor {
        self.knn(p, 1)[0]
    }

    /// Distance from `p` to the nearest indexed point.
    pub fn distance_to_nearest(&self, p: Point3) -> f64 {
        self.nearest(p).distance
    }

    fn search(&self, node: usize, p: Point3, best: &mut Candidates) {
        match &self.nodes[node] {
            Node::Leaf { start, len } => {
                for &i in &self.leaf_order[*start as usize..(*start + *len) as usize] {
                    best.offer(p.distance_squared(self.points[i as usize]), i);
                }
            }
            Node::Split { axis, value, right } => {
                let delta = p.component(*axis as usize) - value;
                let (near, far) = if delta < 0.0 {
                    (node + 1, *right as usize)
                } else {
                    (*right as usize, node + 1)
                };
                self.search(near, p, best);
                // An equal plane distance can still hold a smaller-index tie;
                // prune only on strictly worse bounds.
                if !best.full() || delta * delta <= best.worst_dist2() {
                    self.search(far, p, best);
                }
            }
        }
    }
}

fn build_recursive(points: &[Point3], order: &mut [u32], offset: u32, nodes: &mut Vec<Node>) -> usize {
    let pos = nodes.len();
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf { start: offset, len: order.len() as u32 });
        return pos;
    }
    // Split the widest axis at the median.
    let mut lo = points[order[0] as usize];
    let mut hi = lo;
    for &i in order.iter() {
        lo = lo.min_components(points[i as usize]);
        hi = hi.max_components(points[i as usize]);
    }
    let extent = hi - lo;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        let ca = points[a as usize].component(axis);
        let cb = points[b as usize].component(axis);
        ca.total_cmp(&cb).then(a.cmp(&b))
    });
    let split_value = points[order[mid] as usize].component(axis);

    nodes.push(Node::Split { axis: axis as u8, value: split_value, right: 0 });
    let (left, right) = order.split_at_mut(mid);
    build_recursive(points, left, offset, nodes);
    let right_pos = build_recursive(points, right, offset + mid as u32, nodes);
    if let Node::Split { right, .. } = &mut nodes[pos] {
        *right = right_pos as u32;
    }
    pos
}

/// Bounded candidate list ordered by (squared distance, index). Small k makes
/// sorted insertion cheaper than a heap.
struct Candidates {
    k: usize,
    entries: Vec<(f64, u32)>,
}

impl Candidates {
    fn new(k: usize) -> Self {
        Candidates { k, entries: Vec::with_capacity(k + 1) }
    }

    fn full(&self) -> bool {
        self.entries.len() == self.k
    }

    fn worst_dist2(&self) -> f64 {
        self.entries.last().map(|e| e.0).unwrap_or(f64::INFINITY)
    }

    fn offer(&mut self, dist2: f64, index: u32) {
        if self.full() {
            let worst = *self.entries.last().unwrap();
            if (dist2, index) >= worst {
                return;
            }
            self.entries.pop();
        }
        let at = self
            .entries
            .partition_point(|&(d, i)| (d, i) < (dist2, index));
        self.entries.insert(at, (dist2, index));
    }

    fn into_neighbors(self) -> Vec<Neighbor> {
        self.entries
            .into_iter()
            .map(|(d2, i)| Neighbor { index: i as usize, distance: d2.sqrt() })
            .collect()
    }
}
