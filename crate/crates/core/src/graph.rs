//! Undirected weighted graphs over `0..M`, their Laplacians, and the
//! generators used by the experiments.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Simple undirected graph; edges are stored with `i < j`, sorted.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    num_vertices: usize,
    edges: BTreeMap<(usize, usize), f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    num_vertices: usize,
    edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
}

impl Graph {
    pub fn empty(num_vertices: usize) -> Self {
        Graph { num_vertices, edges: BTreeMap::new() }
    }

    pub fn from_edges(num_vertices: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let weighted: Vec<_> = edges.iter().map(|&(i, j)| (i, j, 1.0)).collect();
        Self::from_weighted_edges(num_vertices, &weighted)
    }

    pub fn from_weighted_edges(num_vertices: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut g = Graph::empty(num_vertices);
        for (idx, &(i, j, w)) in edges.iter().enumerate() {
            g.insert_edge(idx, i, j, w)?;
        }
        Ok(g)
    }

    fn insert_edge(&mut self, idx: usize, i: usize, j: usize, w: f64) -> Result<()> {
        let m = self.num_vertices;
        if i >= m || j >= m {
            return Err(Error::InvalidGraph(format!(
                "edge #{idx} [{i}, {j}] has a vertex index outside 0..{m}"
            )));
        }
        if i == j {
            return Err(Error::InvalidGraph(format!("edge #{idx} [{i}, {j}] is a self-loop")));
        }
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::InvalidGraph(format!("edge #{idx} [{i}, {j}] has non-positive weight {w}")));
        }
        let key = (i.min(j), i.max(j));
        if self.edges.insert(key, w).is_some() {
            return Err(Error::InvalidGraph(format!("edge #{idx} [{i}, {j}] is a duplicate")));
        }
        Ok(())
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.edges.iter().map(|(&(i, j), &w)| (i, j, w))
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains_key(&(i.min(j), i.max(j)))
    }

    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .keys()
            .filter_map(|&(i, j)| if i == v { Some(j) } else if j == v { Some(i) } else { None })
            .collect();
        out.sort_unstable();
        out
    }

    /// Weighted degrees.
    pub fn degrees(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.num_vertices];
        for (i, j, w) in self.edges() {
            d[i] += w;
            d[j] += w;
        }
        d
    }

    /// Unweighted (edge-count) degrees.
    pub fn degree_counts(&self) -> Vec<usize> {
        let mut d = vec![0; self.num_vertices];
        for (i, j, _) in self.edges() {
            d[i] += 1;
            d[j] += 1;
        }
        d
    }

    pub fn is_weighted(&self) -> bool {
        self.edges.values().any(|&w| w != 1.0)
    }

    pub fn is_connected(&self) -> bool {
        let m = self.num_vertices;
        if m == 0 {
            return true;
        }
        let mut adj = vec![Vec::new(); m];
        for (i, j, _) in self.edges() {
            adj[i].push(j);
            adj[j].push(i);
        }
        let mut seen = vec![false; m];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GraphFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidGraph(format!("malformed graph JSON: {e}")))?;
        if let Some(w) = &file.weights {
            if w.len() != file.edges.len() {
                return Err(Error::InvalidGraph(format!(
                    "{} weights given for {} edges",
                    w.len(),
                    file.edges.len()
                )));
            }
        }
        let mut g = Graph::empty(file.num_vertices);
        for (idx, e) in file.edges.iter().enumerate() {
            let w = file.weights.as_ref().map_or(1.0, |w| w[idx]);
            g.insert_edge(idx, e[0], e[1], w)?;
        }
        Ok(g)
    }

    pub fn to_json(&self) -> String {
        let weights = self.is_weighted().then(|| self.edges.values().copied().collect());
        let file = GraphFile {
            num_vertices: self.num_vertices,
            edges: self.edges.keys().map(|&(i, j)| [i, j]).collect(),
            weights,
        };
        serde_json::to_string(&file).expect("graph serializes")
    }
}

/// Ordered set of distinct vertices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VertexSubset {
    vertices: Vec<usize>,
}

impl VertexSubset {
    pub fn new(vertices: Vec<usize>, num_vertices: usize) -> Result<Self> {
        let mut seen = vec![false; num_vertices];
        for &v in &vertices {
            if v >= num_vertices {
                return Err(Error::InvalidGraph(format!("subset vertex {v} outside 0..{num_vertices}")));
            }
            if std::mem::replace(&mut seen[v], true) {
                return Err(Error::InvalidGraph(format!("subset vertex {v} repeated")));
            }
        }
        Ok(VertexSubset { vertices })
    }

    pub fn all(num_vertices: usize) -> Self {
        VertexSubset { vertices: (0..num_vertices).collect() }
    }

    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
}

pub fn adjacency(g: &Graph) -> Matrix {
    let mut a = Matrix::zeros(g.num_vertices(), g.num_vertices());
    for (i, j, w) in g.edges() {
        a[(i, j)] = w;
        a[(j, i)] = w;
    }
    a
}

pub fn degree_matrix(g: &Graph) -> Matrix {
    Matrix::from_diag(&g.degrees())
}

/// `L = D − A`, or `D^{-1/2} L D^{-1/2}` when normalized. Isolated vertices
/// get a zero row and column in the normalized form.
pub fn laplacian(g: &Graph, normalized: bool) -> Matrix {
    let a = adjacency(g);
    let d = g.degrees();
    let m = g.num_vertices();
    let mut l = a.scaled(-1.0);
    for i in 0..m {
        l[(i, i)] = d[i];
    }
    if normalized {
        let inv_sqrt: Vec<f64> = d.iter().map(|&x| if x > 0.0 { 1.0 / x.sqrt() } else { 0.0 }).collect();
        for i in 0..m {
            for j in 0..m {
                l[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
            }
        }
    }
    l
}

/// Subgraph on `s`, re-indexed in subset order.
pub fn induced_subgraph(g: &Graph, s: &VertexSubset) -> Graph {
    let mut position = vec![usize::MAX; g.num_vertices()];
    for (new, &old) in s.vertices().iter().enumerate() {
        position[old] = new;
    }
    let mut out = Graph::empty(s.len());
    for (i, j, w) in g.edges() {
        let (a, b) = (position[i], position[j]);
        if a != usize::MAX && b != usize::MAX {
            out.edges.insert((a.min(b), a.max(b)), w);
        }
    }
    out
}

const REGULAR_RESTARTS: usize = 100;

/// Uniform-ish random simple k-regular graph.
///
/// Stubs are paired one random pair at a time, rejecting pairs that would
/// form a loop or a multi-edge, and the whole pairing restarts on a dead end.
/// Dense requests (`k > (m-1)/2`) build the complement instead.
pub fn random_k_regular(m: usize, k: usize, seed: u64) -> Result<Graph> {
    if k >= m || (m * k) % 2 != 0 {
        return Err(Error::InfeasibleDegree { m, k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let complement = k > (m - 1) / 2;
    let target = if complement { m - 1 - k } else { k };
    for _ in 0..REGULAR_RESTARTS {
        if let Some(edges) = try_pairing(m, target, &mut rng) {
            let edges = if complement {
                let mut comp = Vec::new();
                for i in 0..m {
                    for j in (i + 1)..m {
                        if !edges.contains(&(i, j)) {
                            comp.push((i, j));
                        }
                    }
                }
                comp
            } else {
                edges.into_iter().collect()
            };
            return Graph::from_edges(m, &edges);
        }
    }
    Err(Error::GenerationFailure { restarts: REGULAR_RESTARTS })
}

fn try_pairing(m: usize, k: usize, rng: &mut ChaCha8Rng) -> Option<std::collections::BTreeSet<(usize, usize)>> {
    let mut stubs: Vec<usize> = (0..m).flat_map(|v| std::iter::repeat_n(v, k)).collect();
    stubs.shuffle(rng);
    let mut edges = std::collections::BTreeSet::new();
    while !stubs.is_empty() {
        let n = stubs.len();
        let mut paired = false;
        for _ in 0..(4 * n).max(16) {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a == b {
                continue;
            }
            let (u, v) = (stubs[a], stubs[b]);
            let key = (u.min(v), u.max(v));
            if u != v && !edges.contains(&key) {
                edges.insert(key);
                let (hi, lo) = (a.max(b), a.min(b));
                stubs.swap_remove(hi);
                stubs.swap_remove(lo);
                paired = true;
                break;
            }
        }
        if !paired {
            // random probing failed; look for any admissible pair before giving up
            let mut found = None;
            'search: for a in 0..n {
                for b in (a + 1)..n {
                    let (u, v) = (stubs[a], stubs[b]);
                    if u != v && !edges.contains(&(u.min(v), u.max(v))) {
                        found = Some((a, b));
                        break 'search;
                    }
                }
            }
            let (a, b) = found?;
            let (u, v) = (stubs[a], stubs[b]);
            edges.insert((u.min(v), u.max(v)));
            stubs.swap_remove(b);
            stubs.swap_remove(a);
        }
    }
    Some(edges)
}

/// Symmetrized k-nearest-neighbour graph (edge when either endpoint selects
/// the other). Distance ties go to the lower index.
pub fn knn_graph(points: &[Vec<f64>], k: usize) -> Result<Graph> {
    let m = points.len();
    if k >= m {
        return Err(Error::InvalidGraph(format!("k = {k} needs more than {m} points")));
    }
    let d = points.first().map_or(0, |p| p.len());
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::DimensionMismatch("k-NN points have differing dimensions".into()));
    }
    let mut edges = std::collections::BTreeSet::new();
    for i in 0..m {
        let mut others: Vec<(f64, usize)> = (0..m)
            .filter(|&j| j != i)
            .map(|j| {
                let dist2: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                (dist2, j)
            })
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in others.iter().take(k) {
            edges.insert((i.min(j), i.max(j)));
        }
    }
    Graph::from_edges(m, &edges.into_iter().collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> Graph {
        Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn adjacency_examples() {
        let k2 = Graph::from_edges(2, &[(0, 1)]).unwrap();
        assert_eq!(adjacency(&k2), Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]));
        assert_eq!(adjacency(&Graph::empty(2)), Matrix::zeros(2, 2));
        assert_eq!(
            adjacency(&path3()),
            Matrix::from_rows(&[[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
        );
    }

    #[test]
    fn laplacian_examples() {
        let k2 = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let expected = Matrix::from_rows(&[[1.0, -1.0], [-1.0, 1.0]]);
        assert_eq!(laplacian(&k2, false), expected);
        assert!(laplacian(&k2, true).approx_eq(&expected, 1e-15));
        assert_eq!(
            laplacian(&path3(), false),
            Matrix::from_rows(&[[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]])
        );
    }

    #[test]
    fn normalized_laplacian_isolated_vertex_is_zero() {
        let g = Graph::from_edges(3, &[(0, 1)]).unwrap();
        let l = laplacian(&g, true);
        for i in 0..3 {
            assert_eq!(l[(2, i)], 0.0);
            assert_eq!(l[(i, 2)], 0.0);
        }
    }

    #[test]
    fn induced_subgraph_examples() {
        let g = path3();
        assert_eq!(induced_subgraph(&g, &VertexSubset::all(3)), g);
        let single = induced_subgraph(&g, &VertexSubset::new(vec![1], 3).unwrap());
        assert_eq!((single.num_vertices(), single.num_edges()), (1, 0));
        let ends = induced_subgraph(&g, &VertexSubset::new(vec![0, 2], 3).unwrap());
        assert_eq!((ends.num_vertices(), ends.num_edges()), (2, 0));
        let reordered = induced_subgraph(&g, &VertexSubset::new(vec![2, 1], 3).unwrap());
        assert!(reordered.has_edge(0, 1));
    }

    #[test]
    fn subset_validation() {
        assert!(VertexSubset::new(vec![0, 0], 3).is_err());
        assert!(VertexSubset::new(vec![3], 3).is_err());
    }

    #[test]
    fn regular_examples() {
        let g = random_k_regular(4, 3, 0).unwrap();
        assert_eq!(g.num_edges(), 6);
        let g = random_k_regular(32, 6, 1).unwrap();
        assert!(g.degree_counts().iter().all(|&d| d == 6));
        assert_eq!(random_k_regular(3, 3, 0), Err(Error::InfeasibleDegree { m: 3, k: 3 }));
        assert_eq!(random_k_regular(5, 3, 0), Err(Error::InfeasibleDegree { m: 5, k: 3 }));
    }

    #[test]
    fn regular_dense_degrees() {
        for k in [12, 18, 24] {
            let g = random_k_regular(32, k, 7).unwrap();
            assert!(g.degree_counts().iter().all(|&d| d == k), "k = {k}");
        }
    }

    #[test]
    fn knn_examples() {
        let pts = vec![vec![0.0], vec![1.0], vec![2.5]];
        let g = knn_graph(&pts, 1).unwrap();
        assert_eq!(g.num_edges(), 2);
        assert!(g.has_edge(0, 1) && g.has_edge(1, 2));

        let g = knn_graph(&pts, 2).unwrap();
        assert_eq!(g.num_edges(), 3);

        let pts = vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![5.0, 5.0]];
        let g = knn_graph(&pts, 1).unwrap();
        assert!(g.has_edge(0, 1));
        // vertex 2 ties between 0 and 1 and takes the lower index
        assert!(g.has_edge(0, 2) && !g.has_edge(1, 2));
    }

    #[test]
    fn json_round_trip_and_errors() {
        let g = Graph::from_weighted_edges(3, &[(0, 1, 2.0), (1, 2, 0.5)]).unwrap();
        assert_eq!(Graph::from_json(&g.to_json()).unwrap(), g);

        let err = Graph::from_json(r#"{"num_vertices": 2, "edges": [[0, 1], [1, 5]]}"#).unwrap_err();
        assert!(err.to_string().contains("edge #1 [1, 5]"), "{err}");
        assert!(Graph::from_json(r#"{"num_vertices": 2, "edges": [], "extra": 1}"#).is_err());
        assert!(Graph::from_json(r#"{"num_vertices": 2, "edges": [[0, 1]], "weights": []}"#).is_err());
    }
}
