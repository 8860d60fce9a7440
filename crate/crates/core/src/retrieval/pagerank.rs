use crate::error::{Error, Result};
use crate::graph::KnowledgeGraph;

/// Undirected multigraph view with unit edge weights; every graph edge,
/// whatever its kind, adds one neighbor entry at each endpoint.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Adjacency {
    pub neighbors: Vec<Vec<usize>>,
}

impl Adjacency {
    pub fn undirected(g: &KnowledgeGraph) -> Self {
        let mut neighbors = vec![Vec::new(); g.node_count()];
        for e in g.edges() {
            let (Some(h), Some(t)) = (g.position(e.head), g.position(e.tail)) else {
                continue;
            };
            neighbors[h].push(t);
            neighbors[t].push(h);
        }
        Adjacency { neighbors }
    }

    /// Induced subgraph on `keep` (positions, ascending), renumbered in order.
    pub fn induced(&self, keep: &[usize]) -> Self {
        let mut local = vec![usize::MAX; self.neighbors.len()];
        for (i, &p) in keep.iter().enumerate() {
            local[p] = i;
        }
        let neighbors = keep
            .iter()
            .map(|&p| {
                self.neighbors[p]
                    .iter()
                    .filter_map(|&q| (local[q] != usize::MAX).then_some(local[q]))
                    .collect()
            })
            .collect();
        Adjacency { neighbors }
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PageRankParams {
    pub damping: f64,
    /// Stop once the L1 change between iterates falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PageRankParams {
    fn default() -> Self {
        PageRankParams {
            damping: 0.9,
            tolerance: 1e-12,
            max_iterations: 1000,
        }
    }
}

impl PageRankParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(Error::Config("damping must lie in (0, 1)".into()));
        }
        if !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::Config(
                "pagerank tolerance and max_iterations must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Personalized PageRank by power iteration.
///
/// `personalization` is indexed like `adj` and is normalized internally.
/// Mass sitting on nodes without neighbors is returned to the
/// personalization vector each step. The result sums to 1.
pub fn personalized_pagerank(
    adj: &Adjacency,
    personalization: &[f64],
    params: &PageRankParams,
) -> Result<Vec<f64>> {
    params.validate()?;
    let n = adj.len();
    if personalization.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: personalization.len(),
        });
    }
    if personalization.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidPersonalization);
    }
    let total: f64 = personalization.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::InvalidPersonalization);
    }
    let p: Vec<f64> = personalization.iter().map(|v| v / total).collect();
    let d = params.damping;
    let mut pr = p.clone();
    let mut next = vec![0.0; n];
    for _ in 0..params.max_iterations {
        let mut dangling = 0.0;
        next.iter_mut().for_each(|v| *v = 0.0);
        for (i, nbrs) in adj.neighbors.iter().enumerate() {
            if nbrs.is_empty() {
                dangling += pr[i];
                continue;
            }
            let share = pr[i] / nbrs.len() as f64;
            for &j in nbrs {
                next[j] += share;
            }
        }
        let restart = d * dangling + (1.0 - d);
        let mut delta = 0.0;
        for j in 0..n {
            let v = d * next[j] + restart * p[j];
            delta += (v - pr[j]).abs();
            pr[j] = v;
        }
        if delta < params.tolerance {
            break;
        }
    }
    let sum: f64 = pr.iter().sum();
    pr.iter_mut().for_each(|v| *v /= sum);
    Ok(pr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Adjacency {
        let mut neighbors = vec![Vec::new(); n];
        for i in 1..n {
            neighbors[i - 1].push(i);
            neighbors[i].push(i - 1);
        }
        Adjacency { neighbors }
    }

    #[test]
    fn single_node() {
        let adj = Adjacency {
            neighbors: vec![Vec::new()],
        };
        let pr = personalized_pagerank(&adj, &[1.0], &PageRankParams::default()).unwrap();
        assert_eq!(pr, [1.0]);
    }

    #[test]
    fn three_line_closed_form() {
        // Stationary equations for A-B-C with all restart mass on A, solved
        // by hand: a = 0.1 + 0.45 b, b = 0.9 a + 0.9 c, c = 0.45 b.
        let pr = personalized_pagerank(&line(3), &[1.0, 0.0, 0.0], &PageRankParams::default())
            .unwrap();
        let b = 0.09 / (1.0 - 0.81);
        let want = [0.1 + 0.45 * b, b, 0.45 * b];
        for (x, y) in pr.iter().zip(want) {
            assert!((x - y).abs() < 1e-10, "{pr:?} vs {want:?}");
        }
    }

    #[test]
    fn rejects_bad_personalization() {
        let p = PageRankParams::default();
        assert!(matches!(
            personalized_pagerank(&line(2), &[0.0, 0.0], &p),
            Err(Error::InvalidPersonalization)
        ));
        assert!(personalized_pagerank(&line(2), &[-1.0, 2.0], &p).is_err());
        assert!(personalized_pagerank(&line(2), &[1.0], &p).is_err());
    }

    #[test]
    fn induced_renumbers() {
        let sub = line(4).induced(&[1, 2]);
        assert_eq!(sub.neighbors, vec![vec![1], vec![0]]);
    }
}
