//! Exact fusion of per-agent information pairs over a communication graph.
//!
//! Each agent contributes a local pair `(Yᵢ, yᵢ) = (HᵢᵀVᵢ⁻¹Hᵢ, HᵢᵀVᵢ⁻¹zᵢ)`;
//! the filter needs their sum. Fusion is simulated as a convergecast up a
//! breadth-first spanning tree (rooted at the lowest agent id) followed by a
//! broadcast back down. The root always sums contributions in ascending
//! agent order, so the result is bit-identical for every connected topology
//! over the same locals.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::sensing::{Measurement, MeasurementMatrix, SensorSpec};

/// Undirected connected communication graph over `agent_count` agents.
#[derive(Debug, Clone)]
pub struct CommGraph {
    agent_count: usize,
    adjacency: Vec<Vec<usize>>,
    tree: SpanningTree,
}

#[derive(Debug, Clone)]
struct SpanningTree {
    /// Children of each node in the BFS tree rooted at agent 0.
    children: Vec<Vec<usize>>,
    /// Nodes in BFS discovery order (root first).
    bfs_order: Vec<usize>,
    depth: usize,
}

impl CommGraph {
    pub fn from_edges(agent_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if agent_count == 0 {
            return Err(Error::config("graph", "agent count must be at least 1"));
        }
        let mut adjacency = vec![Vec::new(); agent_count];
        for &(a, b) in edges {
            if a >= agent_count || b >= agent_count {
                return Err(Error::config(
                    "graph.edges",
                    format!("edge ({a},{b}) references an agent outside 0..{agent_count}"),
                ));
            }
            if a == b {
                return Err(Error::config(
                    "graph.edges",
                    format!("self-loop on agent {a} is not allowed"),
                ));
            }
            if !adjacency[a].contains(&b) {
                adjacency[a].push(b);
                adjacency[b].push(a);
            }
        }
        for nbrs in adjacency.iter_mut() {
            nbrs.sort_unstable();
        }
        let tree = SpanningTree::build(&adjacency)?;
        Ok(CommGraph {
            agent_count,
            adjacency,
            tree,
        })
    }

    pub fn line(agent_count: usize) -> Result<Self> {
        let edges: Vec<_> = (1..agent_count).map(|i| (i - 1, i)).collect();
        Self::from_edges(agent_count, &edges)
    }

    pub fn ring(agent_count: usize) -> Result<Self> {
        let mut edges: Vec<_> = (1..agent_count).map(|i| (i - 1, i)).collect();
        if agent_count > 2 {
            edges.push((agent_count - 1, 0));
        }
        Self::from_edges(agent_count, &edges)
    }

    pub fn complete(agent_count: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for a in 0..agent_count {
            for b in (a + 1)..agent_count {
                edges.push((a, b));
            }
        }
        Self::from_edges(agent_count, &edges)
    }

    pub fn agent_count(&self) -> usize {
        self.agent_count
    }

    pub fn neighbors(&self, agent: usize) -> &[usize] {
        &self.adjacency[agent]
    }
}

impl SpanningTree {
    fn build(adjacency: &[Vec<usize>]) -> Result<Self> {
        let n = adjacency.len();
        let mut parent = vec![usize::MAX; n];
        let mut depth_of = vec![0usize; n];
        let mut visited = vec![false; n];
        let mut bfs_order = Vec::with_capacity(n);
        let mut queue = std::collections::VecDeque::new();
        visited[0] = true;
        queue.push_back(0);
        while let Some(u) = queue.pop_front() {
            bfs_order.push(u);
            for &v in &adjacency[u] {
                if !visited[v] {
                    visited[v] = true;
                    parent[v] = u;
                    depth_of[v] = depth_of[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        if bfs_order.len() != n {
            return Err(Error::config(
                "graph.edges",
                "communication graph must be connected",
            ));
        }
        let mut children = vec![Vec::new(); n];
        for v in 1..n {
            children[parent[v]].push(v);
        }
        let depth = depth_of.iter().copied().max().unwrap_or(0);
        Ok(SpanningTree {
            children,
            bfs_order,
            depth,
        })
    }
}

/// Additive information pair `(Y, y)`. `Y` is diagonal because every
/// measurement row is a unit selector, so only its diagonal is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoPair {
    /// Diagonal of `Y = Σ HᵀV⁻¹H`.
    pub y_diag: DVector<f64>,
    /// `y = Σ HᵀV⁻¹z`.
    pub y_vec: DVector<f64>,
}

impl InfoPair {
    pub fn zeros(dim: usize) -> Self {
        InfoPair {
            y_diag: DVector::zeros(dim),
            y_vec: DVector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.y_diag.len()
    }

    pub fn add_assign(&mut self, other: &InfoPair) {
        self.y_diag += &other.y_diag;
        self.y_vec += &other.y_vec;
    }

    /// Cells with nonzero information, ascending.
    pub fn support(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.y_diag[i] > 0.0).collect()
    }
}

/// Scatter one agent's measurement into its local information pair:
/// `1/v` onto the diagonal and `z_j/v` into the vector at each covered cell.
pub fn local_information(
    h: &MeasurementMatrix,
    spec: &SensorSpec,
    z: &Measurement,
    dim: usize,
) -> Result<InfoPair> {
    if z.values.len() != h.len() {
        return Err(Error::structural(format!(
            "measurement has {} entries but the matrix selects {} cells",
            z.values.len(),
            h.len()
        )));
    }
    if spec.noise_variance.is_nan() || spec.noise_variance <= 0.0 {
        return Err(Error::structural(
            "local information needs a positive noise variance",
        ));
    }
    let w = 1.0 / spec.noise_variance;
    let mut pair = InfoPair::zeros(dim);
    for (j, &cell) in h.cells().iter().enumerate() {
        if cell >= dim {
            return Err(Error::structural(format!(
                "selected cell {cell} outside state dimension {dim}"
            )));
        }
        pair.y_diag[cell] += w;
        pair.y_vec[cell] += w * z.values[j];
    }
    Ok(pair)
}

/// Fuse one local pair per agent into the global `(Y, y)` by convergecast
/// and broadcast over the graph's spanning tree.
///
/// The returned sum is computed in ascending agent order at the root, so it
/// is identical for any connected topology.
pub fn aggregate(graph: &CommGraph, locals: &[InfoPair]) -> Result<InfoPair> {
    if locals.len() != graph.agent_count() {
        return Err(Error::structural(format!(
            "expected one local pair per agent ({}), got {}",
            graph.agent_count(),
            locals.len()
        )));
    }
    let dim = locals[0].dim();
    if locals.iter().any(|l| l.dim() != dim) {
        return Err(Error::structural("local pairs disagree on dimension"));
    }

    // Convergecast: leaves upward, each node forwarding the ids collected in
    // its subtree. Only bookkeeping flows here; the arithmetic happens once
    // at the root in fixed order.
    let n = graph.agent_count();
    let mut collected: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for &u in graph.tree.bfs_order.iter().rev() {
        for &child in &graph.tree.children[u] {
            let mut ids = std::mem::take(&mut collected[child]);
            collected[u].append(&mut ids);
        }
    }
    let mut ids = std::mem::take(&mut collected[0]);
    debug_assert_eq!(ids.len(), n);
    ids.sort_unstable();

    let mut total = InfoPair::zeros(dim);
    for id in ids {
        total.add_assign(&locals[id]);
    }
    // Broadcast of `total` back down the tree is a no-op in simulation: the
    // shared belief uses the root's copy.
    Ok(total)
}

/// Rounds used by the convergecast/broadcast schedule: up and down the tree.
pub fn message_rounds(graph: &CommGraph) -> usize {
    2 * graph.tree.depth
}
