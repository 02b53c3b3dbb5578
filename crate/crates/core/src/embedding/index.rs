//! Cosine nearest-neighbour search over an [`EmbeddingTable`].
//!
//! `Exact` scans every row. `Forest` is a random-projection forest: each tree
//! splits on the hyperplane equidistant from two sampled points, queries walk
//! all trees through one priority queue ordered by the smallest margin seen
//! so far, and the collected candidates are re-ranked exactly.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::EmbeddingTable;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub trees: usize,
    pub leaf_size: usize,
    /// Candidates gathered per returned neighbour before re-ranking.
    pub search_factor: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            trees: 16,
            leaf_size: 32,
            search_factor: 100,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Backend {
    Exact,
    Forest(ForestParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub word: String,
    pub similarity: f64,
}

/// Unit-normalised rows plus lexicographic ranks for tie-breaking.
struct Normalized {
    dim: usize,
    data: Vec<f32>,
    lex_rank: Vec<u32>,
}

impl Normalized {
    fn new(table: &EmbeddingTable) -> Self {
        let dim = table.dim();
        let mut data = Vec::with_capacity(table.len() * dim);
        for (_, v) in table.iter() {
            let norm = v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
            let scale = if norm > 0.0 { 1.0 / norm } else { 0.0 };
            data.extend(v.iter().map(|&x| (x as f64 * scale) as f32));
        }
        let mut order: Vec<usize> = (0..table.len()).collect();
        order.sort_by(|&a, &b| table.words()[a].cmp(&table.words()[b]));
        let mut lex_rank = vec![0u32; table.len()];
        for (r, i) in order.into_iter().enumerate() {
            lex_rank[i] = r as u32;
        }
        Normalized { dim, data, lex_rank }
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn dot(&self, i: usize, q: &[f32]) -> f32 {
        dot(self.row(i), q)
    }
}

fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Ranking entry: larger similarity first, then lexicographically smaller word.
#[derive(Clone, Copy)]
struct Scored {
    sim: f32,
    lex: u32,
    row: u32,
}

impl Scored {
    fn better(&self, other: &Scored) -> bool {
        self.sim > other.sim || (self.sim == other.sim && self.lex < other.lex)
    }
}

impl PartialEq for Scored {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Scored {}
impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scored {
    // "greater" means worse, so a max-heap keeps the worst of the current top-k on top
    fn cmp(&self, other: &Self) -> Ordering {
        if self.better(other) {
            Ordering::Less
        } else if other.better(self) {
            Ordering::Greater
        } else {
            Ordering::Equal
        }
    }
}

fn top_k(norm: &Normalized, q: &[f32], rows: impl Iterator<Item = usize>, exclude: Option<usize>, k: usize) -> Vec<Scored> {
    let mut heap: BinaryHeap<Scored> = BinaryHeap::with_capacity(k + 1);
    for i in rows {
        if Some(i) == exclude {
            continue;
        }
        let s = Scored {
            sim: norm.dot(i, q),
            lex: norm.lex_rank[i],
            row: i as u32,
        };
        if heap.len() < k {
            heap.push(s);
        } else if let Some(worst) = heap.peek() {
            if s.better(worst) {
                heap.pop();
                heap.push(s);
            }
        }
    }
    heap.into_sorted_vec()
}

enum Node {
    Split { normal: Vec<f32>, left: u32, right: u32 },
    Leaf(Vec<u32>),
}

struct Forest {
    params: ForestParams,
    nodes: Vec<Node>,
    roots: Vec<u32>,
}

impl Forest {
    fn build(norm: &Normalized, n: usize, params: ForestParams) -> Self {
        let mut forest = Forest {
            params,
            nodes: Vec::new(),
            roots: Vec::with_capacity(params.trees),
        };
        for t in 0..params.trees {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(t as u64));
            let items: Vec<u32> = (0..n as u32).collect();
            let root = forest.grow(norm, items, &mut rng);
            forest.roots.push(root);
        }
        forest
    }

    fn grow(&mut self, norm: &Normalized, mut items: Vec<u32>, rng: &mut ChaCha8Rng) -> u32 {
        if items.len() <= self.params.leaf_size.max(1) {
            self.nodes.push(Node::Leaf(items));
            return (self.nodes.len() - 1) as u32;
        }
        let a = items[rng.random_range(0..items.len())] as usize;
        let mut b = items[rng.random_range(0..items.len())] as usize;
        for _ in 0..8 {
            if b != a {
                break;
            }
            b = items[rng.random_range(0..items.len())] as usize;
        }
        let mut normal: Vec<f32> = norm.row(a).iter().zip(norm.row(b)).map(|(x, y)| x - y).collect();
        let len = dot(&normal, &normal).sqrt();
        if len > 0.0 {
            normal.iter_mut().for_each(|x| *x /= len);
        }
        let (mut left, mut right): (Vec<u32>, Vec<u32>) =
            items.iter().partition(|&&i| dot(&normal, norm.row(i as usize)) < 0.0);
        if left.is_empty() || right.is_empty() {
            // identical points or a useless normal: fall back to a random halving
            items.shuffle(rng);
            let half = items.len() / 2;
            right = items.split_off(half);
            left = items;
            normal.iter_mut().for_each(|x| *x = 0.0);
        }
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(Vec::new()));
        let l = self.grow(norm, left, rng);
        let r = self.grow(norm, right, rng);
        self.nodes[id] = Node::Split { normal, left: l, right: r };
        id as u32
    }

    fn candidates(&self, q: &[f32], budget: usize, n: usize) -> Vec<usize> {
        #[derive(PartialEq)]
        struct Entry(f32, u32);
        impl Eq for Entry {}
        impl PartialOrd for Entry {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }
        impl Ord for Entry {
            fn cmp(&self, other: &Self) -> Ordering {
                self.0.total_cmp(&other.0).then(other.1.cmp(&self.1))
            }
        }
        let mut seen = vec![false; n];
        let mut out = Vec::with_capacity(budget);
        let mut queue: BinaryHeap<Entry> = self.roots.iter().map(|&r| Entry(f32::INFINITY, r)).collect();
        while let Some(Entry(margin, node)) = queue.pop() {
            if out.len() >= budget {
                break;
            }
            match &self.nodes[node as usize] {
                Node::Leaf(items) => {
                    for &i in items {
                        if !std::mem::replace(&mut seen[i as usize], true) {
                            out.push(i as usize);
                        }
                    }
                }
                Node::Split { normal, left, right } => {
                    let d = dot(normal, q);
                    queue.push(Entry(margin.min(-d), *left));
                    queue.push(Entry(margin.min(d), *right));
                }
            }
        }
        out
    }
}

/// Nearest-neighbour index over a table's vocabulary.
pub struct NeighborIndex<'a> {
    table: &'a EmbeddingTable,
    norm: Normalized,
    forest: Option<Forest>,
}

impl<'a> NeighborIndex<'a> {
    pub fn build(table: &'a EmbeddingTable, backend: Backend) -> Result<Self> {
        let norm = Normalized::new(table);
        let forest = match backend {
            Backend::Exact => None,
            Backend::Forest(p) => {
                if p.trees == 0 || p.search_factor == 0 {
                    return Err(Error::Config("forest needs at least one tree and a positive search factor".into()));
                }
                Some(Forest::build(&norm, table.len(), p))
            }
        };
        Ok(NeighborIndex { table, norm, forest })
    }

    pub fn table(&self) -> &EmbeddingTable {
        self.table
    }

    /// The `k` words most cosine-similar to `word`, excluding itself, best
    /// first with ties broken by the lexicographically smaller word. Empty if
    /// `word` has no vector.
    pub fn knn(&self, word: &str, k: usize) -> Vec<Neighbor> {
        let Some(row) = self.table.position(word) else {
            return Vec::new();
        };
        let q = self.norm.row(row).to_vec();
        self.search(&q, Some(row), k)
    }

    /// Neighbours of an arbitrary query vector.
    pub fn knn_vector(&self, query: &[f32], k: usize) -> Result<Vec<Neighbor>> {
        if query.len() != self.norm.dim {
            return Err(Error::Domain(format!(
                "query has {} components, index has {}",
                query.len(),
                self.norm.dim
            )));
        }
        let len = dot(query, query).sqrt();
        let q: Vec<f32> = query.iter().map(|x| if len > 0.0 { x / len } else { 0.0 }).collect();
        Ok(self.search(&q, None, k))
    }

    fn search(&self, q: &[f32], exclude: Option<usize>, k: usize) -> Vec<Neighbor> {
        if k == 0 {
            return Vec::new();
        }
        let hits = match &self.forest {
            None => top_k(&self.norm, q, 0..self.table.len(), exclude, k),
            Some(f) => {
                let budget = (k + 1).saturating_mul(f.params.search_factor);
                let cands = f.candidates(q, budget, self.table.len());
                top_k(&self.norm, q, cands.into_iter(), exclude, k)
            }
        };
        hits.into_iter()
            .map(|s| Neighbor {
                word: self.table.words()[s.row as usize].clone(),
                similarity: s.sim as f64,
            })
            .collect()
    }
}
