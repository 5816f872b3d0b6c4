use std::collections::VecDeque;

use crate::error::{Error, Result};

/// View-pair graph. Each edge is ordered: its pairwise point maps are both
/// expressed in the camera frame of `views.0` (the anchor).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectivityGraph {
    pub vertex_count: usize,
    pub edges: Vec<(usize, usize)>,
}

impl ConnectivityGraph {
    pub fn new(vertex_count: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let g = Self { vertex_count, edges };
        g.validate()?;
        Ok(g)
    }

    /// All unordered pairs `(n, m)` with `n < m`.
    pub fn complete(vertex_count: usize) -> Self {
        let edges = (0..vertex_count)
            .flat_map(|n| (n + 1..vertex_count).map(move |m| (n, m)))
            .collect();
        Self { vertex_count, edges }
    }

    pub fn chain(vertex_count: usize) -> Self {
        let edges = (1..vertex_count).map(|m| (m - 1, m)).collect();
        Self { vertex_count, edges }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vertex_count == 0 {
            return Err(Error::InvalidGraph("graph has no vertices".into()));
        }
        for &(a, b) in &self.edges {
            if a >= self.vertex_count || b >= self.vertex_count {
                return Err(Error::InvalidGraph(format!("edge ({a}, {b}) references a missing view")));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-edge on view {a}")));
            }
        }
        if !self.is_connected() {
            return Err(Error::InvalidGraph("graph is not connected".into()));
        }
        Ok(())
    }

    pub fn is_connected(&self) -> bool {
        if self.vertex_count == 0 {
            return false;
        }
        let mut seen = vec![false; self.vertex_count];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for &(a, b) in &self.edges {
                let other = if a == v {
                    b
                } else if b == v {
                    a
                } else {
                    continue;
                };
                if other < self.vertex_count && !seen[other] {
                    seen[other] = true;
                    queue.push_back(other);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}
