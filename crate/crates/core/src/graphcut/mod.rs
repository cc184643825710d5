//! Binary labeling energies solved exactly by s-t min-cut.
//!
//! `E(y) = Σ_p φ_p(y_p) + Σ_{(p,q)} w_pq [y_p ≠ y_q]` with `w_pq ≥ 0`, plus
//! hard constraints fixing some labels. Label `1` (foreground) is the source
//! side of the cut.

mod baseline;
mod energy;
mod maxflow;

pub use baseline::{graphcut2d_baseline, graphcut3d_baseline, ibr_color_costs, kmeans, KMeansResult};
pub use energy::{
    build_energy, postprocess, refine, select_planes, EnergyGrid, GraphCutParams, Refinement,
    MAX_REFINE_PLANES, REFINE_FACTOR,
};
pub use maxflow::{min_cut, CutResult};

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphCutError {
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("node {0} is constrained to both labels")]
    Infeasible(usize),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("nothing to segment: no foreground predictions or scribbles")]
    NoForeground,
    #[error("{0} set is empty")]
    EmptyClass(&'static str),
    #[error(transparent)]
    Volume(#[from] crate::volume::VolumeError),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GraphCutProblem {
    /// Cost of label 0 per node.
    pub cost0: Vec<f64>,
    /// Cost of label 1 per node.
    pub cost1: Vec<f64>,
    /// Undirected edges `(p, q, w)` paying `w` when labels differ.
    pub edges: Vec<(usize, usize, f64)>,
    /// Hard constraints: `Some(label)` forces the node's label.
    pub fixed: Vec<Option<bool>>,
}

impl GraphCutProblem {
    pub fn new(cost0: Vec<f64>, cost1: Vec<f64>, edges: Vec<(usize, usize, f64)>) -> Self {
        let n = cost0.len();
        Self {
            cost0,
            cost1,
            edges,
            fixed: vec![None; n],
        }
    }

    pub fn len(&self) -> usize {
        self.cost0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cost0.is_empty()
    }

    /// Adds hard constraints; a node in both sets is an error.
    pub fn constrain(&mut self, fg: &[usize], bg: &[usize]) -> Result<(), GraphCutError> {
        for &i in fg {
            self.fixed[i] = Some(true);
        }
        for &i in bg {
            if self.fixed[i] == Some(true) {
                return Err(GraphCutError::Infeasible(i));
            }
            self.fixed[i] = Some(false);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), GraphCutError> {
        let n = self.len();
        if self.cost1.len() != n || self.fixed.len() != n {
            return Err(GraphCutError::Invalid("per-node arrays differ in length".into()));
        }
        if let Some(i) = (0..n).find(|&i| {
            !(self.cost0[i].is_finite() && self.cost1[i].is_finite() && self.cost0[i] >= 0.0 && self.cost1[i] >= 0.0)
        }) {
            return Err(GraphCutError::Invalid(format!("node {i} has a negative or non-finite cost")));
        }
        for &(p, q, w) in &self.edges {
            if p >= n || q >= n || p == q {
                return Err(GraphCutError::Invalid(format!("bad edge ({p}, {q})")));
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(GraphCutError::Invalid(format!("edge ({p}, {q}) has weight {w}")));
            }
        }
        Ok(())
    }

    /// Energy of a labeling; infinite if it breaks a hard constraint.
    pub fn energy(&self, labels: &[bool]) -> f64 {
        assert_eq!(labels.len(), self.len());
        let mut e = 0.0;
        for (i, &l) in labels.iter().enumerate() {
            if self.fixed[i].is_some_and(|f| f != l) {
                return f64::INFINITY;
            }
            e += if l { self.cost1[i] } else { self.cost0[i] };
        }
        for &(p, q, w) in &self.edges {
            if labels[p] != labels[q] {
                e += w;
            }
        }
        e
    }

    /// Overwrites constrained nodes with their forced label.
    pub fn apply_constraints(&self, labels: &mut [bool]) {
        for (l, f) in labels.iter_mut().zip(&self.fixed) {
            if let Some(f) = f {
                *l = *f;
            }
        }
    }

    /// Plain-text dump for external verification:
    ///
    /// ```text
    /// nodes <n>
    /// n <index> <cost0> <cost1> <fixed: - | 0 | 1>
    /// e <p> <q> <weight>
    /// ```
    pub fn to_text(&self) -> String {
        let mut out = format!("nodes {}\n", self.len());
        for i in 0..self.len() {
            let f = match self.fixed[i] {
                None => "-",
                Some(true) => "1",
                Some(false) => "0",
            };
            let _ = writeln!(out, "n {i} {:e} {:e} {f}", self.cost0[i], self.cost1[i]);
        }
        for &(p, q, w) in &self.edges {
            let _ = writeln!(out, "e {p} {q} {w:e}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, GraphCutError> {
        let bad = |line: usize, m: &str| GraphCutError::Invalid(format!("line {line}: {m}"));
        let mut lines = text.lines().enumerate();
        let n: usize = lines
            .next()
            .and_then(|(_, l)| l.strip_prefix("nodes "))
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| bad(1, "expected `nodes <n>`"))?;
        let mut p = GraphCutProblem::new(vec![0.0; n], vec![0.0; n], Vec::new());
        let mut seen = vec![false; n];
        for (k, line) in lines {
            let t: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(k + 1, "bad number"));
            let idx = |s: &str| s.parse::<usize>().ok().filter(|&i| i < n).ok_or_else(|| bad(k + 1, "bad index"));
            match t.as_slice() {
                [] => {}
                ["n", i, c0, c1, f] => {
                    let i = idx(i)?;
                    p.cost0[i] = num(c0)?;
                    p.cost1[i] = num(c1)?;
                    p.fixed[i] = match *f {
                        "-" => None,
                        "0" => Some(false),
                        "1" => Some(true),
                        _ => return Err(bad(k + 1, "bad constraint flag")),
                    };
                    seen[i] = true;
                }
                ["e", a, b, w] => p.edges.push((idx(a)?, idx(b)?, num(w)?)),
                _ => return Err(bad(k + 1, "unknown record")),
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(GraphCutError::Invalid("missing node records".into()));
        }
        p.validate()?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn energy_and_constraints() {
        let mut p = GraphCutProblem::new(vec![1.0, 0.0], vec![0.0, 2.0], vec![(0, 1, 0.5)]);
        assert_eq!(p.energy(&[true, false]), 0.5);
        assert_eq!(p.energy(&[true, true]), 2.0);
        p.constrain(&[1], &[]).unwrap();
        assert_eq!(p.energy(&[true, false]), f64::INFINITY);
        assert!(matches!(p.constrain(&[], &[1]), Err(GraphCutError::Infeasible(1))));
    }

    #[test]
    fn text_round_trip() {
        let mut p = GraphCutProblem::new(vec![0.25, 1e-3, 7.0], vec![1.5, 0.0, 2.0], vec![(0, 1, 0.3), (1, 2, 1.0 / 3.0)]);
        p.constrain(&[2], &[0]).unwrap();
        assert_eq!(GraphCutProblem::from_text(&p.to_text()).unwrap(), p);
        assert!(GraphCutProblem::from_text("nodes 1\nx 0").is_err());
    }

    #[test]
    fn validation() {
        assert!(GraphCutProblem::new(vec![-1.0], vec![0.0], vec![]).validate().is_err());
        assert!(GraphCutProblem::new(vec![0.0; 2], vec![0.0; 2], vec![(0, 1, -0.1)]).validate().is_err());
        assert!(GraphCutProblem::new(vec![0.0; 2], vec![0.0; 2], vec![(0, 2, 0.1)]).validate().is_err());
    }
}
