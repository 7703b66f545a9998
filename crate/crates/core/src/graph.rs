//! Area adjacency, row-standardised spatial weights and the spatial lag.

use std::collections::{BTreeMap, VecDeque};

use crate::error::{Error, Result};

/// Undirected neighbourhood structure over `n_areas` areas.
///
/// Neighbour lists are sorted and symmetric, with no self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyGraph {
    neighbors: Vec<Vec<usize>>,
}

impl AdjacencyGraph {
    pub fn n_areas(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, area: usize) -> &[usize] {
        &self.neighbors[area]
    }

    pub fn degree(&self, area: usize) -> usize {
        self.neighbors[area].len()
    }

    /// Each undirected edge once, as `(i, j)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, nbrs)| nbrs.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn is_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors
            .get(i)
            .is_some_and(|nbrs| nbrs.binary_search(&j).is_ok())
    }
}

/// Builds a symmetric graph from unordered pairs. Duplicate pairs (in either
/// orientation) collapse to one edge.
pub fn build_graph(edges: &[(usize, usize)], n_areas: usize) -> Result<AdjacencyGraph> {
    if n_areas < 2 {
        return Err(Error::TooFewAreas(n_areas));
    }
    let mut neighbors = vec![Vec::new(); n_areas];
    for &(i, j) in edges {
        for index in [i, j] {
            if index >= n_areas {
                return Err(Error::AreaOutOfRange { index, n_areas });
            }
        }
        if i == j {
            return Err(Error::SelfLoop(i));
        }
        neighbors[i].push(j);
        neighbors[j].push(i);
    }
    for nbrs in &mut neighbors {
        nbrs.sort_unstable();
        nbrs.dedup();
    }
    Ok(AdjacencyGraph { neighbors })
}

/// Per-edge interaction strengths `h_ij`, keyed by unordered pair.
#[derive(Debug, Clone, Default)]
pub struct Interactions {
    values: BTreeMap<(usize, usize), f64>,
}

impl Interactions {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `h` for the pair `{i, j}`; a later insert for the same pair wins.
    pub fn insert(&mut self, i: usize, j: usize, h: f64) {
        self.values.insert((i.min(j), i.max(j)), h);
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values.get(&(i.min(j), i.max(j))).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl FromIterator<(usize, usize, f64)> for Interactions {
    fn from_iter<I: IntoIterator<Item = (usize, usize, f64)>>(iter: I) -> Self {
        let mut out = Interactions::new();
        for (i, j, h) in iter {
            out.insert(i, j, h);
        }
        out
    }
}

/// Row-standardised weights `w_ij = h_ij / sum_j h_ij` over an adjacency graph.
///
/// Holds its graph so that downstream code (spillover and CAR priors) needs a
/// single handle.
#[derive(Debug, Clone)]
pub struct SpatialWeights {
    graph: AdjacencyGraph,
    rows: Vec<Vec<(usize, f64)>>,
    components: Components,
}

impl SpatialWeights {
    pub fn graph(&self) -> &AdjacencyGraph {
        &self.graph
    }

    pub fn n_areas(&self) -> usize {
        self.graph.n_areas()
    }

    /// Sparse row `i` as `(j, w_ij)` pairs, empty for isolated areas.
    pub fn row(&self, area: usize) -> &[(usize, f64)] {
        &self.rows[area]
    }

    pub fn components(&self) -> &Components {
        &self.components
    }

    /// Dense `n × n` matrix, row-major. Intended for small graphs and tests.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n_areas();
        let mut dense = vec![0.0; n * n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                dense[i * n + j] = w;
            }
        }
        dense
    }
}

pub fn row_standardize(
    graph: &AdjacencyGraph,
    interactions: Option<&Interactions>,
) -> Result<SpatialWeights> {
    if let Some(h) = interactions {
        for (&(i, j), &value) in &h.values {
            if !graph.is_edge(i, j) {
                return Err(Error::InteractionOnNonEdge { i, j });
            }
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::NonPositiveInteraction { i, j, value });
            }
        }
        if let Some((i, j)) = graph.edges().find(|&(i, j)| h.get(i, j).is_none()) {
            return Err(Error::Domain(format!(
                "edge ({i}, {j}) has no interaction weight while others do"
            )));
        }
    }
    let rows = (0..graph.n_areas())
        .map(|i| {
            let raw: Vec<(usize, f64)> = graph
                .neighbors(i)
                .iter()
                .map(|&j| (j, interactions.and_then(|h| h.get(i, j)).unwrap_or(1.0)))
                .collect();
            let total: f64 = raw.iter().map(|&(_, h)| h).sum();
            raw.into_iter().map(|(j, h)| (j, h / total)).collect()
        })
        .collect();
    Ok(SpatialWeights {
        components: connected_components(graph),
        graph: graph.clone(),
        rows,
    })
}

/// `sum_j w_ij * y_j` for every area; zero for isolated areas.
pub fn spatial_lag(weights: &SpatialWeights, y_prev: &[f64]) -> Result<Vec<f64>> {
    if y_prev.len() != weights.n_areas() {
        return Err(Error::LengthMismatch {
            what: "lagged counts",
            expected: weights.n_areas(),
            got: y_prev.len(),
        });
    }
    Ok(weights
        .rows
        .iter()
        .map(|row| row.iter().map(|&(j, w)| w * y_prev[j]).sum())
        .collect())
}

/// Connected-component labelling of a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Components {
    labels: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl Components {
    /// Component label per area; labels are numbered by first appearance.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, area: usize) -> usize {
        self.labels[area]
    }

    pub fn count(&self) -> usize {
        self.members.len()
    }

    pub fn members(&self, label: usize) -> &[usize] {
        &self.members[label]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.members.iter().map(Vec::as_slice)
    }

    /// Subtracts the per-component mean, so the field sums to zero on each
    /// island. Singleton components are pinned at zero.
    pub fn center(&self, field: &mut [f64]) {
        for members in &self.members {
            let mean = members.iter().map(|&i| field[i]).sum::<f64>() / members.len() as f64;
            for &i in members {
                field[i] -= mean;
            }
        }
    }
}

pub fn connected_components(graph: &AdjacencyGraph) -> Components {
    let n = graph.n_areas();
    let mut labels = vec![usize::MAX; n];
    let mut members = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if labels[start] != usize::MAX {
            continue;
        }
        let label = members.len();
        let mut component = Vec::new();
        labels[start] = label;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            component.push(i);
            for &j in graph.neighbors(i) {
                if labels[j] == usize::MAX {
                    labels[j] = label;
                    queue.push_back(j);
                }
            }
        }
        component.sort_unstable();
        members.push(component);
    }
    Components { labels, members }
}

/// Rook-contiguity lattice of `rows × cols` areas, numbered row-major.
/// With `wrap` the lattice is a torus and every area has degree 4 once both
/// sides are at least 3.
pub fn lattice_edges(rows: usize, cols: usize, wrap: bool) -> Vec<(usize, usize)> {
    let id = |r: usize, c: usize| r * cols + c;
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push((id(r, c), id(r, c + 1)));
            } else if wrap && cols > 2 {
                edges.push((id(r, c), id(r, 0)));
            }
            if r + 1 < rows {
                edges.push((id(r, c), id(r + 1, c)));
            } else if wrap && rows > 2 {
                edges.push((id(r, c), id(0, c)));
            }
        }
    }
    edges
}
