//! Static kd-tree for exact nearest-neighbor queries in `K` dimensions.

/// Balanced kd-tree over a fixed point set. Points are stored in tree order;
/// `ids` maps them back to the caller's indices.
#[derive(Clone, Debug)]
pub struct KdTree<const K: usize> {
    points: Vec<[f64; K]>,
    ids: Vec<usize>,
}

impl<const K: usize> KdTree<K> {
    pub fn new(points: &[[f64; K]]) -> Self {
        let mut order: Vec<(usize, [f64; K])> = points.iter().copied().enumerate().collect();
        build(&mut order, 0);
        Self {
            ids: order.iter().map(|(i, _)| *i).collect(),
            points: order.into_iter().map(|(_, p)| p).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index (into the construction slice) and Euclidean distance of the
    /// nearest point. Ties resolve to the smallest index.
    pub fn nearest(&self, q: &[f64; K]) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(0, self.points.len(), 0, q, &mut best);
        Some((best.0, best.1.sqrt()))
    }

    fn search(&self, lo: usize, hi: usize, depth: usize, q: &[f64; K], best: &mut (usize, f64)) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let p = &self.points[mid];
        let d2: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
        let id = self.ids[mid];
        if d2 < best.1 || (d2 == best.1 && id < best.0) {
            *best = (id, d2);
        }
        let axis = depth % K;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(near.0, near.1, depth + 1, q, best);
        if diff * diff <= best.1 {
            self.search(far.0, far.1, depth + 1, q, best);
        }
    }
}

fn build<const K: usize>(pts: &mut [(usize, [f64; K])], depth: usize) {
    if pts.len() <= 1 {
        return;
    }
    let axis = depth % K;
    let mid = pts.len() / 2;
    pts.select_nth_unstable_by(mid, |a, b| a.1[axis].total_cmp(&b.1[axis]).then(a.0.cmp(&b.0)));
    let (left, right) = pts.split_at_mut(mid);
    build(left, depth + 1);
    build(&mut right[1..], depth + 1);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute<const K: usize>(pts: &[[f64; K]], q: &[f64; K]) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, p) in pts.iter().enumerate() {
            let d2: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < best.1 {
                best = (i, d2);
            }
        }
        (best.0, best.1.sqrt())
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            pts in prop::collection::vec(prop::array::uniform3(-5.0f64..5.0), 1..60),
            qs in prop::collection::vec(prop::array::uniform3(-6.0f64..6.0), 1..20),
        ) {
            let tree = KdTree::new(&pts);
            for q in &qs {
                let (i, d) = tree.nearest(q).unwrap();
                let (bi, bd) = brute(&pts, q);
                prop_assert_eq!(d, bd);
                prop_assert_eq!(i, bi);
            }
        }
    }

    #[test]
    fn duplicates_and_empty() {
        let pts = [[1.0, 1.0], [1.0, 1.0], [0.0, 0.0]];
        let tree = KdTree::new(&pts);
        assert_eq!(tree.nearest(&[1.0, 1.0]), Some((0, 0.0)));
        assert_eq!(KdTree::<2>::new(&[]).nearest(&[0.0, 0.0]), None);
    }
}
