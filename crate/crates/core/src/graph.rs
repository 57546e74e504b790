//! Undirected graphs on `0..n` with packed adjacency.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "EdgeList", into = "EdgeList")]
pub struct Graph {
    n: usize,
    adj: Vec<bool>,
    n_edges: usize,
}

#[derive(Serialize, Deserialize)]
struct EdgeList {
    vertices: usize,
    edges: Vec<(usize, usize)>,
}

impl From<EdgeList> for Graph {
    fn from(e: EdgeList) -> Self {
        Graph::from_edges(e.vertices, &e.edges)
    }
}

impl From<Graph> for EdgeList {
    fn from(g: Graph) -> Self {
        EdgeList {
            vertices: g.n,
            edges: g.edges(),
        }
    }
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            adj: vec![false; n * n],
            n_edges: 0,
        }
    }

    pub fn full(n: usize) -> Self {
        let mut g = Self::empty(n);
        for i in 0..n {
            for j in (i + 1)..n {
                g.add_edge(i, j);
            }
        }
        g
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut g = Self::empty(n);
        for &(i, j) in edges {
            g.add_edge(i, j);
        }
        g
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.n_edges
    }

    pub fn max_edges(&self) -> usize {
        self.n * self.n.saturating_sub(1) / 2
    }

    pub fn is_full(&self) -> bool {
        self.n_edges == self.max_edges()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i != j && self.adj[i * self.n + j]
    }

    pub fn add_edge(&mut self, i: usize, j: usize) {
        assert!(i != j && i < self.n && j < self.n, "invalid edge ({i}, {j})");
        if !self.adj[i * self.n + j] {
            self.adj[i * self.n + j] = true;
            self.adj[j * self.n + i] = true;
            self.n_edges += 1;
        }
    }

    pub fn remove_edge(&mut self, i: usize, j: usize) {
        if i != j && self.adj[i * self.n + j] {
            self.adj[i * self.n + j] = false;
            self.adj[j * self.n + i] = false;
            self.n_edges -= 1;
        }
    }

    pub fn toggle(&mut self, i: usize, j: usize) {
        if self.has_edge(i, j) {
            self.remove_edge(i, j);
        } else {
            self.add_edge(i, j);
        }
    }

    /// Edge pairs `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.n_edges);
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.adj[i * self.n + j] {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        (0..self.n).filter(|&u| self.has_edge(v, u)).collect()
    }

    /// Maps a pair index in `0..n(n-1)/2` to the vertex pair, row by row.
    pub fn pair_from_index(n: usize, mut k: usize) -> (usize, usize) {
        for i in 0..n {
            let row = n - i - 1;
            if k < row {
                return (i, i + 1 + k);
            }
            k -= row;
        }
        panic!("pair index out of range");
    }

    pub fn is_complete_on(&self, vs: &[usize]) -> bool {
        vs.iter()
            .enumerate()
            .all(|(a, &u)| vs[a + 1..].iter().all(|&w| self.has_edge(u, w)))
    }

    /// Maximum cardinality search. Returns the visit order and, for each
    /// visited vertex, its previously visited neighbours.
    pub fn mcs(&self) -> (Vec<usize>, Vec<Vec<usize>>) {
        let n = self.n;
        let mut weight = vec![0usize; n];
        let mut visited = vec![false; n];
        let mut order = Vec::with_capacity(n);
        let mut parents = Vec::with_capacity(n);
        for _ in 0..n {
            let v = (0..n)
                .filter(|&u| !visited[u])
                .max_by_key(|&u| (weight[u], std::cmp::Reverse(u)))
                .expect("unvisited vertex");
            let pa: Vec<usize> = order
                .iter()
                .copied()
                .filter(|&u| self.has_edge(u, v))
                .collect();
            visited[v] = true;
            for u in 0..n {
                if !visited[u] && self.has_edge(u, v) {
                    weight[u] += 1;
                }
            }
            order.push(v);
            parents.push(pa);
        }
        (order, parents)
    }

    pub fn is_decomposable(&self) -> bool {
        let (_, parents) = self.mcs();
        parents.iter().all(|pa| self.is_complete_on(pa))
    }

    /// All maximal cliques (Bron-Kerbosch with pivoting), each sorted.
    pub fn maximal_cliques(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let p: Vec<usize> = (0..self.n).collect();
        self.bron_kerbosch(&mut Vec::new(), p, Vec::new(), &mut out);
        for c in out.iter_mut() {
            c.sort_unstable();
        }
        out.sort();
        out
    }

    fn bron_kerbosch(
        &self,
        r: &mut Vec<usize>,
        p: Vec<usize>,
        x: Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if p.is_empty() && x.is_empty() {
            out.push(r.clone());
            return;
        }
        let pivot = p
            .iter()
            .chain(x.iter())
            .copied()
            .max_by_key(|&u| p.iter().filter(|&&w| self.has_edge(u, w)).count())
            .expect("non-empty candidate set");
        let candidates: Vec<usize> = p
            .iter()
            .copied()
            .filter(|&v| !self.has_edge(pivot, v))
            .collect();
        let mut p = p;
        let mut x = x;
        for v in candidates {
            let np = p.iter().copied().filter(|&w| self.has_edge(v, w)).collect();
            let nx = x.iter().copied().filter(|&w| self.has_edge(v, w)).collect();
            r.push(v);
            self.bron_kerbosch(r, np, nx, out);
            r.pop();
            p.retain(|&w| w != v);
            x.push(v);
        }
    }

    /// Log prior under independent edge inclusion with probability `rho`.
    pub fn log_prior(&self, rho: f64) -> f64 {
        let e = self.n_edges as f64;
        e * rho.ln() + (self.max_edges() as f64 - e) * (1.0 - rho).ln()
    }

    /// Compact text form `0-1,1-2`.
    pub fn to_edge_string(&self) -> String {
        self.edges()
            .iter()
            .map(|(i, j)| format!("{i}-{j}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}
