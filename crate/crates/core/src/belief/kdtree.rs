use super::dist2;

const LEAF: usize = 8;

enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

/// Static KD-tree over a borrowed point set, for nearest-neighbour queries.
pub struct KdTree<'a> {
    points: &'a [Vec<f64>],
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    pub fn build(points: &'a [Vec<f64>]) -> Self {
        let mut tree = KdTree { points, order: (0..points.len()).collect(), nodes: Vec::new() };
        if !points.is_empty() {
            tree.split(0, points.len(), 0);
        }
        tree
    }

    fn split(&mut self, start: usize, end: usize, depth: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let dims = self.points[0].len();
        // widest spread among the points in this node
        let dim = (0..dims)
            .map(|d| {
                let (lo, hi) = self.order[start..end].iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    (lo.min(self.points[i][d]), hi.max(self.points[i][d]))
                });
                (d, hi - lo)
            })
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .map_or(depth % dims.max(1), |(d, _)| d);
        let mid = start + (end - start) / 2;
        let points = self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| points[a][dim].total_cmp(&points[b][dim]));
        let value = points[self.order[mid]][dim];
        self.nodes.push(Node::Split { dim, value, left: 0, right: 0 });
        let left = self.split(start, mid, depth + 1);
        let right = self.split(mid, end, depth + 1);
        self.nodes[id] = Node::Split { dim, value, left, right };
        id
    }

    /// Nearest point to `q` other than index `skip`: (index, squared distance).
    pub fn nearest_excluding(&self, q: &[f64], skip: usize) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        if !self.nodes.is_empty() {
            self.search(0, q, skip, &mut best);
        }
        best
    }

    fn search(&self, node: usize, q: &[f64], skip: usize, best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if i == skip {
                        continue;
                    }
                    let d = dist2(q, &self.points[i]);
                    if d < best.1 {
                        *best = (i, d);
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = q[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, skip, best);
                if diff * diff <= best.1 {
                    self.search(far, q, skip, best);
                }
            }
        }
    }
}
