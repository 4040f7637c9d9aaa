//! Network topologies and the average-consensus linear system they induce.
//!
//! A [`Graph`] is an undirected, connected, simple graph on nodes `0..n`.
//! [`IncidenceSystem`] turns it into the consistent system `A x = 0` where row
//! `e = (i, j)` of `A` is `(e_i - e_j) / sqrt(2)`, together with the graph
//! Laplacian `L = 2 AᵀA`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{mix_seed, rng_from_seed};

/// Resampling cap for disconnected random geometric graphs.
pub const DEFAULT_RGG_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Builds a graph from an edge list. Pairs are oriented `i < j` and sorted
    /// ascending. Self-loops, duplicates, out-of-range indices and
    /// disconnected graphs are rejected.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("graph needs at least one node"));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::invalid(format!(
                    "edge ({a}, {b}) out of range for {n} nodes"
                )));
            }
            if a == b {
                return Err(Error::invalid(format!("self-loop at node {a}")));
            }
            let e = (a.min(b), a.max(b));
            if !set.insert(e) {
                return Err(Error::invalid(format!("duplicate edge ({}, {})", e.0, e.1)));
            }
        }
        let graph = Graph {
            n,
            edges: set.into_iter().collect(),
        };
        if !graph.is_connected() {
            return Err(Error::Disconnected);
        }
        Ok(graph)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge(&self, index: usize) -> (usize, usize) {
        self.edges[index]
    }

    /// Position of `(i, j)` (either orientation) in the edge list.
    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        let key = (i.min(j), i.max(j));
        self.edges.binary_search(&key).ok()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    fn is_connected(&self) -> bool {
        is_connected(self.n, &self.edges)
    }

    /// Serializes to the edge-list text format: `n m` then one `i j` per line.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::with_capacity(8 * (self.edges.len() + 1));
        let _ = writeln!(out, "{} {}", self.n, self.edges.len());
        for &(i, j) in &self.edges {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }

    pub fn parse_edge_list(text: &str, origin: &str) -> Result<Self> {
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: origin.to_string(),
            line,
            msg,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(idx, l)| (idx + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let (hline, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing `n m` header".into()))?;
        let (n, m) = parse_pair(header).map_err(|msg| parse_err(hline, msg))?;

        let mut edges = Vec::with_capacity(m);
        for (lineno, line) in lines {
            edges.push(parse_pair(line).map_err(|msg| parse_err(lineno, msg))?);
        }
        if edges.len() != m {
            return Err(parse_err(
                hline,
                format!("header declares {m} edges, found {}", edges.len()),
            ));
        }
        Graph::new(n, edges)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_edge_list(&text, &path.display().to_string())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_edge_list()).map_err(|e| Error::io(path, e))
    }
}

fn parse_pair(line: &str) -> std::result::Result<(usize, usize), String> {
    let mut it = line.split_whitespace();
    let mut next = || -> std::result::Result<usize, String> {
        let tok = it
            .next()
            .ok_or_else(|| format!("expected two integers in `{line}`"))?;
        tok.parse()
            .map_err(|_| format!("`{tok}` is not a non-negative integer"))
    };
    let pair = (next()?, next()?);
    if it.next().is_some() {
        return Err(format!("trailing tokens in `{line}`"));
    }
    Ok(pair)
}

fn is_connected(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(i, j) in edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &w in &adj[u] {
            if !seen[w] {
                seen[w] = true;
                count += 1;
                stack.push(w);
            }
        }
    }
    count == n
}

/// Ring on `n ≥ 3` nodes.
pub fn make_cycle(n: usize) -> Result<Graph> {
    if n < 3 {
        return Err(Error::invalid(format!("cycle needs n >= 3, got {n}")));
    }
    Graph::new(n, (0..n).map(|i| (i, (i + 1) % n)))
}

/// `side × side` lattice; node `(r, c)` has index `r * side + c`.
pub fn make_grid(side: usize) -> Result<Graph> {
    if side < 2 {
        return Err(Error::invalid(format!("grid needs side >= 2, got {side}")));
    }
    let mut edges = Vec::with_capacity(2 * side * (side - 1));
    for r in 0..side {
        for c in 0..side {
            let u = r * side + c;
            if c + 1 < side {
                edges.push((u, u + 1));
            }
            if r + 1 < side {
                edges.push((u, u + side));
            }
        }
    }
    Graph::new(side * side, edges)
}

/// Connection radius `sqrt(ln n / n)`.
pub fn rgg_radius(n: usize) -> f64 {
    let n = n as f64;
    (n.ln() / n).sqrt()
}

/// Geometric graph on explicit points: `(i, j)` is an edge iff the points are
/// within `radius` of each other. Fails with [`Error::Disconnected`] if the
/// result is not connected.
pub fn geometric_graph(points: &[(f64, f64)], radius: f64) -> Result<Graph> {
    let r2 = radius * radius;
    let mut edges = Vec::new();
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let dx = points[i].0 - points[j].0;
            let dy = points[i].1 - points[j].1;
            if dx * dx + dy * dy <= r2 {
                edges.push((i, j));
            }
        }
    }
    Graph::new(points.len(), edges)
}

/// Random geometric graph in the unit square with the default retry cap.
pub fn make_rgg(n: usize, seed: u64) -> Result<Graph> {
    make_rgg_with_attempts(n, seed, DEFAULT_RGG_ATTEMPTS)
}

/// Samples `n` uniform points in the unit square and connects pairs within
/// [`rgg_radius`]. Attempt `a > 0` reseeds with `mix_seed(seed, a)`.
pub fn make_rgg_with_attempts(n: usize, seed: u64, max_attempts: usize) -> Result<Graph> {
    if n < 2 {
        return Err(Error::invalid(format!("rgg needs n >= 2, got {n}")));
    }
    if max_attempts == 0 {
        return Err(Error::invalid("rgg retry cap must be positive"));
    }
    let radius = rgg_radius(n);
    for attempt in 0..max_attempts {
        let s = if attempt == 0 {
            seed
        } else {
            mix_seed(seed, attempt as u64)
        };
        let mut rng = rng_from_seed(s);
        let points: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
            .collect();
        match geometric_graph(&points, radius) {
            Ok(g) => return Ok(g),
            Err(Error::Disconnected) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::GenerationFailure {
        attempts: max_attempts,
    })
}

/// The normalized incidence system `A x = 0` of a graph.
#[derive(Debug, Clone)]
pub struct IncidenceSystem {
    graph: Graph,
    a: DMatrix<f64>,
    b: DVector<f64>,
    laplacian: DMatrix<f64>,
}

impl IncidenceSystem {
    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    /// `m × n` normalized incidence matrix.
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn cols(&self) -> usize {
        self.a.ncols()
    }

    /// `AᵀA`.
    pub fn gram(&self) -> DMatrix<f64> {
        self.a.tr_mul(&self.a)
    }
}

pub fn build_system(graph: &Graph) -> IncidenceSystem {
    let n = graph.node_count();
    let m = graph.edge_count();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut a = DMatrix::zeros(m, n);
    let mut laplacian = DMatrix::zeros(n, n);
    for (row, &(i, j)) in graph.edges().iter().enumerate() {
        a[(row, i)] = s;
        a[(row, j)] = -s;
        laplacian[(i, i)] += 1.0;
        laplacian[(j, j)] += 1.0;
        laplacian[(i, j)] -= 1.0;
        laplacian[(j, i)] -= 1.0;
    }
    IncidenceSystem {
        graph: graph.clone(),
        a,
        b: DVector::zeros(m),
        laplacian,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cycle_edges() {
        let g = make_cycle(3).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (0, 2), (1, 2)]);
        let g = make_cycle(5).unwrap();
        assert_eq!(g.edge_count(), 5);
        assert!(g.degrees().iter().all(|&d| d == 2));
        assert!(matches!(make_cycle(2), Err(Error::InvalidArgument(_))));
    }

    fn enumerate_grid_edges(side: usize) -> usize {
        // Count unordered lattice-neighbor pairs by brute force over all pairs.
        let mut count = 0;
        for u in 0..side * side {
            for w in (u + 1)..side * side {
                let (ru, cu) = (u / side, u % side);
                let (rw, cw) = (w / side, w % side);
                if ru.abs_diff(rw) + cu.abs_diff(cw) == 1 {
                    count += 1;
                }
            }
        }
        count
    }

    #[test]
    fn grid_edge_counts() {
        let g = make_grid(2).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (4, 4));
        for side in [3, 10] {
            let g = make_grid(side).unwrap();
            assert_eq!(g.edge_count(), enumerate_grid_edges(side));
            assert_eq!(g.edge_count(), 2 * side * (side - 1));
        }
        assert_eq!(make_grid(3).unwrap().edge_count(), 12);
        assert_eq!(make_grid(10).unwrap().edge_count(), 180);
        assert!(make_grid(1).is_err());
    }

    #[test]
    fn two_close_points_make_one_edge() {
        let r = rgg_radius(2);
        assert!((r - 0.5887).abs() < 1e-3);
        let g = geometric_graph(&[(0.2, 0.3), (0.3, 0.3)], r).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
    }

    #[test]
    fn rgg_is_deterministic() {
        let a = make_rgg(100, 7).unwrap();
        let b = make_rgg(100, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, make_rgg(100, 8).unwrap());
    }

    #[test]
    fn rgg_retry_cap_reports_attempts() {
        assert!(matches!(
            make_rgg_with_attempts(10, 1, 0),
            Err(Error::InvalidArgument(_))
        ));
        // Two nodes are disconnected whenever the points land farther apart
        // than the radius; with a single attempt that surfaces as a failure.
        let failures: Vec<_> = (0..200u64)
            .filter_map(|s| make_rgg_with_attempts(2, s, 1).err())
            .collect();
        assert!(!failures.is_empty());
        assert!(failures
            .iter()
            .all(|e| matches!(e, Error::GenerationFailure { attempts: 1 })));
        let points: Vec<_> = (0..3).map(|i| (i as f64, 0.0)).collect();
        assert!(matches!(
            geometric_graph(&points, 0.5),
            Err(Error::Disconnected)
        ));
    }

    #[test]
    fn rgg_mean_degree_near_pi_log_n() {
        let n = 100;
        let target = std::f64::consts::PI * (n as f64).ln();
        let mean: f64 = (0..100u64)
            .map(|s| {
                let g = make_rgg(n, s).unwrap();
                2.0 * g.edge_count() as f64 / n as f64
            })
            .sum::<f64>()
            / 100.0;
        assert!((mean - target).abs() <= 0.2 * target, "mean degree {mean}");
    }

    #[test]
    fn graph_rejects_bad_input() {
        assert!(Graph::new(3, [(0, 0), (1, 2)]).is_err());
        assert!(Graph::new(3, [(0, 1), (1, 0), (1, 2)]).is_err());
        assert!(Graph::new(3, [(0, 3)]).is_err());
        assert!(matches!(
            Graph::new(4, [(0, 1), (2, 3)]),
            Err(Error::Disconnected)
        ));
    }

    #[test]
    fn single_edge_system() {
        let g = Graph::new(2, [(0, 1)]).unwrap();
        let sys = build_system(&g);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(sys.a().as_slice(), &[s, -s]);
        assert_eq!(
            sys.laplacian(),
            &DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0])
        );
        assert_eq!(sys.b().len(), 1);
    }

    #[test]
    fn triangle_gram_is_half_laplacian() {
        let sys = build_system(&make_cycle(3).unwrap());
        // L = 2I - adjacency for the triangle.
        let l = DMatrix::from_fn(3, 3, |i, j| if i == j { 2.0 } else { -1.0 });
        assert_eq!(sys.laplacian(), &l);
        // explicit (AᵀA)_{pq} = Σ_e A_{ep} A_{eq}
        let a = sys.a();
        for p in 0..3 {
            for q in 0..3 {
                let s: f64 = (0..3).map(|e| a[(e, p)] * a[(e, q)]).sum();
                assert!((s - l[(p, q)] / 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn edge_list_format() {
        let g = make_cycle(4).unwrap();
        let text = g.to_edge_list();
        assert_eq!(text, "4 4\n0 1\n0 3\n1 2\n2 3\n");
        assert_eq!(Graph::parse_edge_list(&text, "mem").unwrap(), g);
        let err = Graph::parse_edge_list("3 2\n0 1\n", "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        let err = Graph::parse_edge_list("4 2\n0 1\n2 3\n", "mem").unwrap_err();
        assert!(matches!(err, Error::Disconnected));
    }
}
