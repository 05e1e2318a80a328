use super::Vec3;

const LEAF_SIZE: usize = 16;

/// Bounding box of the points below, children for inner nodes and the
/// slot range for leaves.
#[derive(Debug, Clone)]
struct Node {
    lo: [f64; 3],
    hi: [f64; 3],
    children: Option<(u32, u32)>,
    start: u32,
    end: u32,
}

impl Node {
    fn distance2(&self, q: &[f64; 3]) -> f64 {
        (0..3)
            .map(|k| {
                let d = (self.lo[k] - q[k]).max(q[k] - self.hi[k]).max(0.0);
                d * d
            })
            .sum()
    }
}

/// Exact nearest-neighbor index over a fixed point set (k-d tree).
///
/// Ties at equal distance resolve to the smallest original index, so
/// queries agree with a linear scan that keeps the first minimum.
#[derive(Debug, Clone)]
pub struct NearestNeighborIndex {
    nodes: Vec<Node>,
    points: Vec<[f64; 3]>,
    ids: Vec<u32>,
    slots: Vec<u32>,
}

impl NearestNeighborIndex {
    pub fn new(points: &[Vec3]) -> Self {
        let mut ids: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1);
        if !points.is_empty() {
            build(points, &mut ids, 0, &mut nodes);
        }
        let ordered = ids.iter().map(|&i| {
            let p = points[i as usize];
            [p.x, p.y, p.z]
        });
        let mut slots = vec![0; ids.len()];
        for (slot, &id) in ids.iter().enumerate() {
            slots[id as usize] = slot as u32;
        }
        Self {
            nodes,
            points: ordered.collect(),
            ids,
            slots,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Point at original index `i`.
    pub fn point(&self, i: usize) -> Vec3 {
        Vec3::from(self.points[self.slots[i] as usize])
    }

    /// Nearest point to `q` as `(original index, point, distance)`.
    pub fn nearest(&self, q: &Vec3) -> Option<(usize, Vec3, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        self.nearest_from(q, None)
    }

    /// Same result as [`Self::nearest`]; a `hint` close to the answer (such
    /// as the previous answer for a nearby query) only speeds up the search.
    pub fn nearest_hinted(&self, q: &Vec3, hint: usize) -> Option<(usize, Vec3, f64)> {
        self.nearest_from(q, self.slots.get(hint).map(|&s| s as usize))
    }

    fn nearest_from(&self, q: &Vec3, start: Option<usize>) -> Option<(usize, Vec3, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let q = [q.x, q.y, q.z];
        let mut best = (f64::INFINITY, u32::MAX, 0usize);
        if let Some(slot) = start {
            let p = &self.points[slot];
            let (dx, dy, dz) = (p[0] - q[0], p[1] - q[1], p[2] - q[2]);
            let d2 = dx * dx + dy * dy + dz * dz;
            best = (d2, self.ids[slot], slot);
        }
        self.search(0, &q, &mut best);
        let (d2, id, slot) = best;
        Some((id as usize, Vec3::from(self.points[slot]), d2.sqrt()))
    }

    fn search(&self, node: u32, q: &[f64; 3], best: &mut (f64, u32, usize)) {
        let n = &self.nodes[node as usize];
        match n.children {
            None => {
                for slot in n.start as usize..n.end as usize {
                    let p = &self.points[slot];
                    let dx = p[0] - q[0];
                    let dy = p[1] - q[1];
                    let dz = p[2] - q[2];
                    let d2 = dx * dx + dy * dy + dz * dz;
                    let id = self.ids[slot];
                    if d2 < best.0 || (d2 == best.0 && id < best.1) {
                        *best = (d2, id, slot);
                    }
                }
            }
            Some((left, right)) => {
                let dl = self.nodes[left as usize].distance2(q);
                let dr = self.nodes[right as usize].distance2(q);
                let ((near, dn), (far, df)) = if dl <= dr { ((left, dl), (right, dr)) } else { ((right, dr), (left, dl)) };
                if dn <= best.0 {
                    self.search(near, q, best);
                }
                if df <= best.0 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

fn build(points: &[Vec3], ids: &mut [u32], offset: u32, nodes: &mut Vec<Node>) -> u32 {
    let here = nodes.len() as u32;
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in ids.iter() {
        let p = points[i as usize];
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    nodes.push(Node {
        lo,
        hi,
        children: None,
        start: offset,
        end: offset + ids.len() as u32,
    });
    if ids.len() <= LEAF_SIZE {
        return here;
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap();
    let mid = ids.len() / 2;
    ids.select_nth_unstable_by(mid, |&a, &b| {
        points[a as usize][axis]
            .total_cmp(&points[b as usize][axis])
            .then(a.cmp(&b))
    });
    let (left_ids, right_ids) = ids.split_at_mut(mid);
    let left = build(points, left_ids, offset, nodes);
    let right = build(points, right_ids, offset + mid as u32, nodes);
    nodes[here as usize].children = Some((left, right));
    here
}
