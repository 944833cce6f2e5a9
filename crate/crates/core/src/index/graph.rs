//! Layered proximity graph (hierarchical navigable small world).
//!
//! Nodes are positions into a flat vector store owned by the caller. Each node
//! draws a top layer from a geometric distribution seeded per node, so the
//! same insertion order and seed always produce the same graph.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::embedding::DIM;
use crate::hash::splitmix64;
use crate::scalar::{dot, Scalar};

const MAX_LEVEL: usize = 16;

#[derive(Debug, Clone, Copy)]
struct Scored<S> {
    sim: S,
    node: u32,
}

impl<S: Scalar> PartialEq for Scored<S> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<S: Scalar> Eq for Scored<S> {}

impl<S: Scalar> PartialOrd for Scored<S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<S: Scalar> Ord for Scored<S> {
    /// Greater means closer: higher similarity, then lower node id.
    fn cmp(&self, other: &Self) -> Ordering {
        self.sim
            .partial_cmp(&other.sim)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.node.cmp(&self.node))
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LayeredGraph {
    pub(crate) m: usize,
    pub(crate) ef_construction: usize,
    pub(crate) seed: u64,
    /// `links[node][layer]` lists neighbor nodes.
    pub(crate) links: Vec<Vec<Vec<u32>>>,
    /// Similarities parallel to `links`; an empty list is filled on demand.
    sims: Vec<Vec<Vec<f64>>>,
    pub(crate) entry: Option<u32>,
    pub(crate) max_level: usize,
}

impl PartialEq for LayeredGraph {
    fn eq(&self, other: &Self) -> bool {
        self.m == other.m
            && self.ef_construction == other.ef_construction
            && self.seed == other.seed
            && self.links == other.links
            && self.entry == other.entry
            && self.max_level == other.max_level
    }
}

impl Eq for LayeredGraph {}

fn vector<S>(store: &[S], node: u32) -> &[S] {
    let start = node as usize * DIM;
    &store[start..start + DIM]
}

struct Visited(Vec<u64>);

impl Visited {
    fn new(n: usize) -> Self {
        Self(vec![0; n.div_ceil(64)])
    }

    /// Marks `node`; returns false if it was already marked.
    fn insert(&mut self, node: u32) -> bool {
        let (word, bit) = (node as usize / 64, node as usize % 64);
        let mask = 1u64 << bit;
        let fresh = self.0[word] & mask == 0;
        self.0[word] |= mask;
        fresh
    }
}

impl LayeredGraph {
    pub(crate) fn new(m: usize, ef_construction: usize, seed: u64) -> Self {
        Self {
            m: m.max(2),
            ef_construction: ef_construction.max(1),
            seed,
            links: Vec::new(),
            sims: Vec::new(),
            entry: None,
            max_level: 0,
        }
    }

    /// Appends a node's stored neighbor lists, as read back from disk.
    pub(crate) fn push_links(&mut self, layers: Vec<Vec<u32>>) {
        self.sims.push(vec![Vec::new(); layers.len()]);
        self.links.push(layers);
    }

    fn max_links(&self, layer: usize) -> usize {
        if layer == 0 {
            2 * self.m
        } else {
            self.m
        }
    }

    fn draw_level(&self, node: u32) -> usize {
        let h = splitmix64(self.seed ^ splitmix64(node as u64));
        // Uniform in (0, 1].
        let u = ((h >> 11) as f64 + 1.0) / (1u64 << 53) as f64;
        let mult = 1.0 / (self.m as f64).ln();
        ((-u.ln() * mult).floor() as usize).min(MAX_LEVEL)
    }

    /// Inserts `node`, whose vector must already be at its slot in `store`.
    pub(crate) fn insert<S: Scalar>(&mut self, node: u32, store: &[S]) {
        debug_assert_eq!(node as usize, self.links.len());
        let level = self.draw_level(node);
        self.links.push(vec![Vec::new(); level + 1]);
        self.sims.push(vec![Vec::new(); level + 1]);
        let Some(entry) = self.entry else {
            self.entry = Some(node);
            self.max_level = level;
            return;
        };
        let q = vector(store, node);
        let mut eps = vec![Scored {
            sim: dot(q, vector(store, entry)),
            node: entry,
        }];
        for layer in (level + 1..=self.max_level).rev() {
            eps = self.search_layer(q, &eps, 1, layer, store);
        }
        for layer in (0..=level.min(self.max_level)).rev() {
            let found = self.search_layer(q, &eps, self.ef_construction, layer, store);
            let chosen = select_neighbors(&found, self.m, store);
            self.links[node as usize][layer] = chosen.iter().map(|s| s.node).collect();
            self.sims[node as usize][layer] = chosen.iter().map(|s| s.sim.widen()).collect();
            for nb in &chosen {
                self.link(nb.node, node, nb.sim.widen(), layer, store);
            }
            eps = found;
        }
        if level > self.max_level {
            self.max_level = level;
            self.entry = Some(node);
        }
    }

    /// Adds `to` (at similarity `sim`) to `from`'s neighbor list; an overfull
    /// list drops its farthest entry.
    fn link<S: Scalar>(&mut self, from: u32, to: u32, sim: f64, layer: usize, store: &[S]) {
        let cap = self.max_links(layer);
        let list = &mut self.links[from as usize][layer];
        let sims = &mut self.sims[from as usize][layer];
        if sims.len() != list.len() {
            let base = vector(store, from);
            *sims = list
                .iter()
                .map(|&n| dot(base, vector(store, n)).widen())
                .collect();
        }
        list.push(to);
        sims.push(sim);
        if list.len() <= cap {
            return;
        }
        let worst = (0..list.len())
            .min_by(|&a, &b| {
                let sa = Scored {
                    sim: sims[a],
                    node: list[a],
                };
                let sb = Scored {
                    sim: sims[b],
                    node: list[b],
                };
                sa.cmp(&sb)
            })
            .expect("non-empty list");
        list.remove(worst);
        sims.remove(worst);
    }

    /// Beam search on one layer; returns up to `ef` nodes, closest first.
    fn search_layer<S: Scalar>(
        &self,
        q: &[S],
        entry_points: &[Scored<S>],
        ef: usize,
        layer: usize,
        store: &[S],
    ) -> Vec<Scored<S>> {
        let mut visited = Visited::new(self.links.len());
        let mut candidates: BinaryHeap<Scored<S>> = BinaryHeap::new();
        // Min-heap of results via Reverse: the worst kept result is on top.
        let mut results: BinaryHeap<std::cmp::Reverse<Scored<S>>> = BinaryHeap::new();
        for ep in entry_points {
            if visited.insert(ep.node) {
                candidates.push(*ep);
                results.push(std::cmp::Reverse(*ep));
                if results.len() > ef {
                    results.pop();
                }
            }
        }
        while let Some(current) = candidates.pop() {
            let worst = results.peek().expect("non-empty").0;
            if results.len() >= ef && current < worst {
                break;
            }
            let Some(neighbors) = self.links[current.node as usize].get(layer) else {
                continue;
            };
            for &nb in neighbors {
                if !visited.insert(nb) {
                    continue;
                }
                let cand = Scored {
                    sim: dot(q, vector(store, nb)),
                    node: nb,
                };
                if results.len() < ef || cand > results.peek().expect("non-empty").0 {
                    candidates.push(cand);
                    results.push(std::cmp::Reverse(cand));
                    if results.len() > ef {
                        results.pop();
                    }
                }
            }
        }
        let mut out: Vec<Scored<S>> = results.into_iter().map(|r| r.0).collect();
        out.sort_unstable_by(|a, b| b.cmp(a));
        out
    }

    /// Returns up to `ef` node positions closest to `q`, closest first.
    pub(crate) fn search<S: Scalar>(&self, q: &[S], ef: usize, store: &[S]) -> Vec<u32> {
        let Some(entry) = self.entry else {
            return Vec::new();
        };
        let mut eps = vec![Scored {
            sim: dot(q, vector(store, entry)),
            node: entry,
        }];
        for layer in (1..=self.max_level).rev() {
            eps = self.search_layer(q, &eps, 1, layer, store);
        }
        self.search_layer(q, &eps, ef.max(1), 0, store)
            .into_iter()
            .map(|s| s.node)
            .collect()
    }

    pub(crate) fn reachable_from_entry(&self) -> usize {
        let Some(entry) = self.entry else {
            return 0;
        };
        let mut visited = Visited::new(self.links.len());
        let mut stack = vec![entry];
        visited.insert(entry);
        let mut count = 0;
        while let Some(n) = stack.pop() {
            count += 1;
            for &nb in &self.links[n as usize][0] {
                if visited.insert(nb) {
                    stack.push(nb);
                }
            }
        }
        count
    }
}

/// Diversity-aware neighbor selection.
///
/// A candidate is taken if it is closer to the base node than to every
/// neighbor already taken; remaining slots are filled with the closest
/// rejected candidates. `cands` must be sorted closest first.
fn select_neighbors<S: Scalar>(cands: &[Scored<S>], m: usize, store: &[S]) -> Vec<Scored<S>> {
    let mut chosen: Vec<Scored<S>> = Vec::with_capacity(m);
    let mut skipped = Vec::new();
    for c in cands {
        if chosen.len() >= m {
            break;
        }
        let cv = vector(store, c.node);
        let diverse = chosen
            .iter()
            .all(|s| dot(cv, vector(store, s.node)) < c.sim);
        if diverse {
            chosen.push(*c);
        } else {
            skipped.push(*c);
        }
    }
    for s in skipped {
        if chosen.len() >= m {
            break;
        }
        chosen.push(s);
    }
    chosen
}
