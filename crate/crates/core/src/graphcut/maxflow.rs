//! Dinic max-flow on the standard s-t construction of a binary energy.

use std::collections::VecDeque;

use super::{GraphCutError, GraphCutProblem};

#[derive(Clone, Debug, PartialEq)]
pub struct CutResult {
    /// `true` = foreground (source side).
    pub labels: Vec<bool>,
    /// Energy of `labels`, evaluated on the original problem.
    pub energy: f64,
    /// Max-flow value: energy minus the constant taken out of the unaries.
    pub flow: f64,
}

struct Graph {
    head: Vec<usize>,
    next: Vec<usize>,
    to: Vec<usize>,
    cap: Vec<f64>,
}

const NONE: usize = usize::MAX;

impl Graph {
    fn new(n: usize, edges_hint: usize) -> Self {
        Self {
            head: vec![NONE; n],
            next: Vec::with_capacity(2 * edges_hint),
            to: Vec::with_capacity(2 * edges_hint),
            cap: Vec::with_capacity(2 * edges_hint),
        }
    }

    /// Arc `a → b` with capacity `c_ab` and its reverse with `c_ba`.
    /// Arc `e` and its partner are `e` and `e ^ 1`.
    fn add(&mut self, a: usize, b: usize, c_ab: f64, c_ba: f64) {
        for (from, to, c) in [(a, b, c_ab), (b, a, c_ba)] {
            self.next.push(self.head[from]);
            self.head[from] = self.to.len();
            self.to.push(to);
            self.cap.push(c);
        }
    }

    fn bfs(&self, s: usize, t: usize, eps: f64, level: &mut [i64]) -> bool {
        level.fill(-1);
        level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            let mut e = self.head[v];
            while e != NONE {
                let u = self.to[e];
                if level[u] < 0 && self.cap[e] > eps {
                    level[u] = level[v] + 1;
                    queue.push_back(u);
                }
                e = self.next[e];
            }
        }
        level[t] >= 0
    }

    /// Blocking flow on the level graph with an explicit path stack.
    fn blocking_flow(&mut self, s: usize, t: usize, eps: f64, level: &mut [i64], iter: &mut [usize]) -> f64 {
        iter.copy_from_slice(&self.head);
        let mut total = 0.0;
        let mut path: Vec<usize> = Vec::new();
        let mut v = s;
        loop {
            if v == t {
                let mut push = f64::INFINITY;
                for &e in &path {
                    push = push.min(self.cap[e]);
                }
                let mut cut_at = path.len();
                for (k, &e) in path.iter().enumerate() {
                    self.cap[e] -= push;
                    self.cap[e ^ 1] += push;
                    if self.cap[e] <= eps && cut_at == path.len() {
                        cut_at = k;
                    }
                }
                total += push;
                path.truncate(cut_at);
                v = path.last().map_or(s, |&e| self.to[e]);
                continue;
            }
            let mut advanced = false;
            while iter[v] != NONE {
                let e = iter[v];
                let u = self.to[e];
                if self.cap[e] > eps && level[u] == level[v] + 1 {
                    path.push(e);
                    v = u;
                    advanced = true;
                    break;
                }
                iter[v] = self.next[e];
            }
            if advanced {
                continue;
            }
            if v == s {
                return total;
            }
            level[v] = -1;
            let e = path.pop().expect("non-source node is reached by an arc");
            v = self.to[e ^ 1];
            iter[v] = self.next[iter[v]];
        }
    }
}

/// Exact minimizer of `problem` subject to its hard constraints.
pub fn min_cut(problem: &GraphCutProblem) -> Result<CutResult, GraphCutError> {
    problem.validate()?;
    let n = problem.len();
    let (s, t) = (n, n + 1);
    let mut g = Graph::new(n + 2, n + problem.edges.len());
    let mut offset = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..n {
        let (c0, c1) = (problem.cost0[i], problem.cost1[i]);
        scale = scale.max(c0).max(c1);
        match problem.fixed[i] {
            Some(true) => {
                offset += c1;
                g.add(s, i, f64::INFINITY, 0.0);
            }
            Some(false) => {
                offset += c0;
                g.add(i, t, f64::INFINITY, 0.0);
            }
            None => {
                let m = c0.min(c1);
                offset += m;
                // Sink side (label 0) cuts s→i and pays cost0.
                if c0 > m {
                    g.add(s, i, c0 - m, 0.0);
                }
                if c1 > m {
                    g.add(i, t, c1 - m, 0.0);
                }
            }
        }
    }
    for &(p, q, w) in &problem.edges {
        scale = scale.max(w);
        if w > 0.0 {
            g.add(p, q, w, w);
        }
    }
    let eps = scale * 1e-14;

    let mut level = vec![-1i64; n + 2];
    let mut iter = vec![NONE; n + 2];
    let mut flow = 0.0;
    while g.bfs(s, t, eps, &mut level) {
        flow += g.blocking_flow(s, t, eps, &mut level, &mut iter);
    }
    // Source side of the final residual graph is foreground.
    g.bfs(s, t, eps, &mut level);
    let mut labels: Vec<bool> = level[..n].iter().map(|&l| l >= 0).collect();
    problem.apply_constraints(&mut labels);
    let energy = problem.energy(&labels);
    debug_assert!(
        (energy - offset - flow).abs() <= 1e-9 * energy.abs().max(1.0),
        "cut value {flow} disagrees with energy {energy} - offset {offset}"
    );
    Ok(CutResult { labels, energy, flow })
}
