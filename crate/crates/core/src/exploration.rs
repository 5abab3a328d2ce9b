//! Breadth-first exploration of a rooted tree and the conditional urn
//! machinery attached to each probe.
//!
//! Nodes of an explored ball are addressed by Ulam-Harris labels: the root is
//! `[0]`, and the children of `v̄` are `v̄ ++ [1]`, `v̄ ++ [2]`, and so on. A
//! neighbour reached through the explored vertex's own outgoing edge is of
//! type L and always takes index 1; neighbours that sent an edge into the
//! explored vertex are of type R. The same [`RootedNeighborhood`] container
//! holds balls cut from finite trees and samples of the limiting point trees.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{invalid, Result};
use crate::fitness::FitnessSequence;
use crate::generators::PATree;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum VertexType {
    #[serde(rename = "root")]
    Root,
    L,
    R,
}

impl VertexType {
    pub fn as_str(self) -> &'static str {
        match self {
            VertexType::Root => "root",
            VertexType::L => "L",
            VertexType::R => "R",
        }
    }
}

/// One node of a [`RootedNeighborhood`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeRecord {
    pub label: Vec<u32>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Vertex of the finite tree (or PA label k̂ of an intermediate point tree).
    pub pa_label: Option<usize>,
    pub age: Option<f64>,
    pub vertex_type: VertexType,
    pub fitness: f64,
    /// Gamma variable Z driving the node's type-R offspring, when sampled.
    pub gamma: Option<f64>,
    /// Number of type-R children (θ on the graph side, τ on the limit side).
    pub child_count_r: usize,
}

impl NodeRecord {
    pub fn depth(&self) -> usize {
        self.label.len() - 1
    }
}

/// A rooted ball stored as an arena in breadth-first order.
#[derive(Debug, Clone, PartialEq)]
pub struct RootedNeighborhood {
    nodes: Vec<NodeRecord>,
    radius: usize,
    truncated: bool,
    contains_vertex_one: bool,
}

impl RootedNeighborhood {
    pub fn new(
        radius: usize,
        pa_label: Option<usize>,
        age: Option<f64>,
        fitness: f64,
        gamma: Option<f64>,
    ) -> Self {
        let root = NodeRecord {
            label: vec![0],
            parent: None,
            children: Vec::new(),
            pa_label,
            age,
            vertex_type: VertexType::Root,
            fitness,
            gamma,
            child_count_r: 0,
        };
        Self {
            nodes: vec![root],
            radius,
            truncated: false,
            contains_vertex_one: pa_label == Some(1),
        }
    }

    /// Appends a child of `parent` with the next free Ulam-Harris index.
    pub fn push_child(
        &mut self,
        parent: usize,
        vertex_type: VertexType,
        pa_label: Option<usize>,
        age: Option<f64>,
        fitness: f64,
        gamma: Option<f64>,
    ) -> usize {
        let id = self.nodes.len();
        let p = &mut self.nodes[parent];
        let mut label = p.label.clone();
        label.push(p.children.len() as u32 + 1);
        p.children.push(id);
        if vertex_type == VertexType::R {
            p.child_count_r += 1;
        }
        if pa_label == Some(1) {
            self.contains_vertex_one = true;
        }
        self.nodes.push(NodeRecord {
            label,
            parent: Some(parent),
            children: Vec::new(),
            pa_label,
            age,
            vertex_type,
            fitness,
            gamma,
            child_count_r: 0,
        });
        id
    }

    pub fn set_gamma(&mut self, node: usize, gamma: f64) {
        self.nodes[node].gamma = Some(gamma);
    }

    pub fn mark_truncated(&mut self) {
        self.truncated = true;
    }

    pub fn mark_vertex_one(&mut self) {
        self.contains_vertex_one = true;
    }

    pub fn nodes(&self) -> &[NodeRecord] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &NodeRecord {
        &self.nodes[i]
    }

    pub fn root(&self) -> &NodeRecord {
        &self.nodes[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Set when generation stopped early (node cap, or an intermediate tree
    /// reaching PA label 1).
    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn contains_vertex_one(&self) -> bool {
        self.contains_vertex_one
    }

    /// Node count of each shell ∂B_0, ∂B_1, …, ∂B_radius.
    pub fn shell_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.radius + 1];
        for node in &self.nodes {
            let d = node.depth();
            if d < sizes.len() {
                sizes[d] += 1;
            }
        }
        sizes
    }

    /// Degree of the root within the ball, which for r ≥ 1 is its degree in
    /// the whole tree.
    pub fn root_degree(&self) -> usize {
        self.nodes[0].children.len()
    }

    /// Looks a node up by its Ulam-Harris label.
    pub fn find(&self, label: &[u32]) -> Option<usize> {
        if label.first() != Some(&0) {
            return None;
        }
        let mut cur = 0;
        for &i in &label[1..] {
            cur = *self.nodes[cur].children.get((i as usize).checked_sub(1)?)?;
        }
        Some(cur)
    }

    /// Nested JSON: every node with its fields and a `children` array.
    pub fn to_json(&self) -> Value {
        json!({
            "radius": self.radius,
            "truncated": self.truncated,
            "contains_vertex_one": self.contains_vertex_one,
            "root": self.node_json(0),
        })
    }

    fn node_json(&self, i: usize) -> Value {
        let n = &self.nodes[i];
        let children: Vec<Value> = n.children.iter().map(|&c| self.node_json(c)).collect();
        json!({
            "label": n.label,
            "pa_label": n.pa_label,
            "age": n.age,
            "type": n.vertex_type.as_str(),
            "fitness": n.fitness,
            "gamma": n.gamma,
            "child_count_r": n.child_count_r,
            "children": children,
        })
    }
}

/// Radius-`r` ball of `tree` around `root`.
///
/// Siblings are ordered by increasing vertex label, so the type-L child
/// (the parent in the tree, always the smallest neighbour) takes index 1.
/// Exploration continues through vertex 1; such balls are flagged with
/// [`RootedNeighborhood::contains_vertex_one`].
pub fn explore_neighborhood(tree: &PATree, root: usize, r: usize) -> Result<RootedNeighborhood> {
    let csr = tree.children();
    explore_neighborhood_with(tree, &csr, root, r)
}

/// As [`explore_neighborhood`], reusing a precomputed `tree.children()`.
pub fn explore_neighborhood_with(
    tree: &PATree,
    children: &(Vec<usize>, Vec<usize>),
    root: usize,
    r: usize,
) -> Result<RootedNeighborhood> {
    let (offsets, list) = children;
    explore_by(tree, root, r, |v| &list[offsets[v]..offsets[v + 1]])
}

/// As [`explore_neighborhood`], finding children by r linear scans of the
/// parent array instead of building the full child index. Faster for one
/// small ball in a large tree.
pub fn explore_neighborhood_sparse(tree: &PATree, root: usize, r: usize) -> Result<RootedNeighborhood> {
    let n = tree.n();
    if root < 1 || root > n {
        return Err(invalid("root", format!("{root} is not a vertex of a tree on 1..{n}")));
    }
    let mut kids: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut wanted = vec![false; n + 1];
    let mut frontier = vec![root];
    for _ in 0..r {
        frontier.retain(|v| !kids.contains_key(v));
        if frontier.is_empty() {
            break;
        }
        for &v in &frontier {
            wanted[v] = true;
            kids.insert(v, Vec::new());
        }
        for (k, &p) in tree.parents().iter().enumerate().skip(2) {
            if wanted[p] {
                kids.get_mut(&p).expect("wanted vertices have lists").push(k);
            }
        }
        let mut next = Vec::new();
        for &v in &frontier {
            wanted[v] = false;
            if v >= 2 {
                next.push(tree.parent(v));
            }
            next.extend_from_slice(&kids[&v]);
        }
        frontier = next;
    }
    explore_by(tree, root, r, |v| kids.get(&v).map_or(&[][..], Vec::as_slice))
}

fn explore_by<'a>(
    tree: &PATree,
    root: usize,
    r: usize,
    children_of: impl Fn(usize) -> &'a [usize],
) -> Result<RootedNeighborhood> {
    let n = tree.n();
    if root < 1 || root > n {
        return Err(invalid("root", format!("{root} is not a vertex of a tree on 1..{n}")));
    }
    let seq = tree.fitness();
    let chi = seq.chi();
    let age = |k: usize| Some((k as f64 / n as f64).powf(chi));
    let mut ball = RootedNeighborhood::new(r, Some(root), age(root), seq.x(root), None);
    // Vertex that discovered each node; children exclude it.
    let mut from = vec![0usize];
    let mut head = 0;
    while head < ball.len() {
        let node = head;
        head += 1;
        if ball.node(node).depth() >= r {
            continue;
        }
        let v = ball.node(node).pa_label.expect("graph nodes carry vertices");
        let ty = ball.node(node).vertex_type;
        if ty != VertexType::R && v >= 2 {
            let p = tree.parent(v);
            ball.push_child(node, VertexType::L, Some(p), age(p), seq.x(p), None);
            from.push(v);
        }
        for &c in children_of(v) {
            if c == from[node] {
                continue;
            }
            ball.push_child(node, VertexType::R, Some(c), age(c), seq.x(c), None);
            from.push(v);
        }
    }
    Ok(ball)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Neutral,
    Active,
    Probed,
}

/// Breadth-first ordering key of an Ulam-Harris label: shorter first, then
/// lexicographic.
type UhKey = (usize, Vec<u32>);

fn uh_key(label: &[u32]) -> UhKey {
    (label.len(), label.to_vec())
}

/// The partition (𝒜_t, 𝒫_t, 𝒩_t) of {1..n} after t probes, with the
/// discovered edges ℰ_t and the labels and types of discovered vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationState {
    n: usize,
    t: usize,
    status: Vec<Status>,
    active: BTreeMap<UhKey, usize>,
    probed: BTreeSet<usize>,
    edges: BTreeSet<(usize, usize)>,
    labels: BTreeMap<usize, Vec<u32>>,
    types: BTreeMap<usize, VertexType>,
    neutral_count: usize,
}

impl ExplorationState {
    /// 𝒜_0 = {root}, 𝒫_0 = ∅.
    pub fn new(n: usize, root: usize) -> Result<Self> {
        if root < 1 || root > n {
            return Err(invalid("root", format!("{root} is not in 1..{n}")));
        }
        let mut status = vec![Status::Neutral; n + 1];
        status[root] = Status::Active;
        let mut active = BTreeMap::new();
        active.insert(uh_key(&[0]), root);
        Ok(Self {
            n,
            t: 0,
            status,
            active,
            probed: BTreeSet::new(),
            edges: BTreeSet::new(),
            labels: BTreeMap::from([(root, vec![0])]),
            types: BTreeMap::from([(root, VertexType::Root)]),
            neutral_count: n - 1,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn status(&self, v: usize) -> Status {
        self.status[v]
    }

    /// Active vertices in breadth-first (Ulam-Harris) order.
    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        self.active.values().copied()
    }

    pub fn probed(&self) -> &BTreeSet<usize> {
        &self.probed
    }

    pub fn neutral(&self) -> impl Iterator<Item = usize> + '_ {
        (1..=self.n).filter(|&v| self.status[v] == Status::Neutral)
    }

    pub fn active_count(&self) -> usize {
        self.active.len()
    }

    pub fn neutral_count(&self) -> usize {
        self.neutral_count
    }

    /// Discovered edges as (child, parent) pairs.
    pub fn discovered_edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    /// Smallest probed vertex.
    pub fn k_s(&self) -> Option<usize> {
        self.probed.first().copied()
    }

    /// Smallest active vertex.
    pub fn k_star(&self) -> Option<usize> {
        (1..=self.n).find(|&v| self.status[v] == Status::Active)
    }

    /// The vertex probed by the next call to [`advance_exploration`].
    pub fn next_probe(&self) -> Option<usize> {
        self.active.values().next().copied()
    }

    pub fn label(&self, v: usize) -> Option<&[u32]> {
        self.labels.get(&v).map(Vec::as_slice)
    }

    pub fn vertex_type(&self, v: usize) -> Option<VertexType> {
        self.types.get(&v).copied()
    }

    pub fn vertex_one_discovered(&self) -> bool {
        self.n >= 1 && self.status[1] != Status::Neutral
    }
}

/// Probes the first active vertex in breadth-first order and activates its
/// neutral neighbours. With no active vertex the state is returned as is.
pub fn advance_exploration(state: &ExplorationState, tree: &PATree) -> ExplorationState {
    let mut next = state.clone();
    let Some((key, v)) = next.active.pop_first() else {
        return next;
    };
    next.t += 1;
    next.status[v] = Status::Probed;
    next.probed.insert(v);
    let label = key.1;
    let ty = next.types[&v];

    let mut found = Vec::new();
    if v >= 2 && next.status[tree.parent(v)] == Status::Neutral {
        found.push((tree.parent(v), VertexType::L));
    }
    for c in (v + 1)..=tree.n() {
        if tree.parent(c) == v && next.status[c] == Status::Neutral {
            found.push((c, VertexType::R));
        }
    }
    debug_assert!(ty != VertexType::R || found.iter().all(|(_, t)| *t == VertexType::R));
    for (i, (u, t)) in found.into_iter().enumerate() {
        let mut l = label.clone();
        l.push(i as u32 + 1);
        next.status[u] = Status::Active;
        next.neutral_count -= 1;
        next.active.insert(uh_key(&l), u);
        next.labels.insert(u, l);
        next.types.insert(u, t);
        next.edges.insert(if t == VertexType::L { (v, u) } else { (u, v) });
    }

    if !next.vertex_one_discovered() {
        if let (Some(ks), Some(kstar)) = (next.k_s(), next.k_star()) {
            assert_eq!(
                tree.parent(ks),
                kstar,
                "smallest active vertex must receive the edge of the smallest probed vertex"
            );
            assert_eq!(next.types[&kstar], VertexType::L);
        }
    }
    next
}

/// Gamma, beta and partial-product families for the probe at step t,
/// conditional on the exploration so far.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalUrnState {
    t: usize,
    probe: Option<usize>,
    z: Vec<f64>,
    z_tilde: Vec<f64>,
    z_shape: Vec<f64>,
    z_tilde_shape: Vec<f64>,
    beta: Vec<f64>,
    s: Vec<f64>,
    neutral: Vec<bool>,
}

impl ConditionalUrnState {
    /// Probe step t (one more than the number of completed probes).
    pub fn t(&self) -> usize {
        self.t
    }

    /// k[t], the vertex this state is prepared for.
    pub fn probe(&self) -> Option<usize> {
        self.probe
    }

    pub fn n(&self) -> usize {
        self.s.len() - 1
    }

    pub fn z(&self, j: usize) -> f64 {
        self.z[j]
    }

    pub fn z_tilde(&self, j: usize) -> f64 {
        self.z_tilde[j]
    }

    /// Shape of Z_j[t]; zero for probed j.
    pub fn z_shape(&self, j: usize) -> f64 {
        self.z_shape[j]
    }

    /// Shape of Z̃_j[t]; zero for probed j.
    pub fn z_tilde_shape(&self, j: usize) -> f64 {
        self.z_tilde_shape[j]
    }

    pub fn beta(&self, j: usize) -> f64 {
        self.beta[j]
    }

    /// S_{k,n}[t], 0 ≤ k ≤ n.
    pub fn s(&self, k: usize) -> f64 {
        self.s[k]
    }

    pub fn s_values(&self) -> &[f64] {
        &self.s
    }

    pub fn is_neutral(&self, v: usize) -> bool {
        self.neutral[v]
    }
}

/// Samples the conditional urn family for the next probe of `state`.
///
/// With k_s the smallest probed and k* the smallest active vertex, the
/// shapes are x_j + 1[j = k*] for Z_j and, for Z̃_j,
/// * T_{j-1} + j − 1 for j ≤ k*,
/// * T_{j-1} + j for k* < j < k_s,
/// * T_{j-1} + j − Σ_{k ∈ 𝒫, k < j} x_k − #{e ∈ ℰ : both ends ≤ j} for j > k_s.
///
/// Probed vertices get B_j = 0. Before the first probe every shape is the
/// unconditioned (x_j, T_{j-1} + j − 1).
pub fn conditional_urn_state<R: Rng + ?Sized>(
    seq: &FitnessSequence,
    state: &ExplorationState,
    rng: &mut R,
) -> Result<ConditionalUrnState> {
    let n = seq.n();
    if state.n() != n {
        return Err(invalid("state", format!("explores {} vertices, sequence has {n}", state.n())));
    }
    if state.vertex_one_discovered() {
        return Err(invalid("state", "vertex 1 has been discovered"));
    }
    if state.neutral_count() == 0 {
        return Err(invalid("state", "no neutral vertex left"));
    }
    let bounds = state.k_s().zip(state.k_star());
    let edges: Vec<usize> = {
        let mut ends: Vec<usize> = state.discovered_edges().iter().map(|&(c, _)| c).collect();
        ends.sort_unstable();
        ends
    };

    let mut z = vec![0.0; n + 1];
    let mut zt = vec![0.0; n + 1];
    let mut z_shape = vec![0.0; n + 1];
    let mut zt_shape = vec![0.0; n + 1];
    let mut beta = vec![0.0; n + 1];
    let mut probed_weight = 0.0;
    let mut edges_seen = 0;
    for j in 2..=n {
        while edges_seen < edges.len() && edges[edges_seen] <= j {
            edges_seen += 1;
        }
        let base = seq.t(j - 1) + j as f64 - 1.0;
        if state.status(j) == Status::Probed {
            probed_weight += seq.x(j);
            continue;
        }
        let (a, b) = match bounds {
            None => (seq.x(j), base),
            Some((ks, kstar)) => {
                let a = seq.x(j) + if j == kstar { 1.0 } else { 0.0 };
                let b = if j <= kstar {
                    base
                } else if j < ks {
                    base + 1.0
                } else {
                    base + 1.0 - probed_weight - edges_seen as f64
                };
                (a, b)
            }
        };
        z_shape[j] = a;
        zt_shape[j] = b;
        z[j] = rng::gamma(rng, a);
        zt[j] = rng::gamma(rng, b);
        beta[j] = if z[j] + zt[j] > 0.0 { z[j] / (z[j] + zt[j]) } else { 0.0 };
    }
    beta[1] = 1.0;
    let mut s = vec![0.0; n + 1];
    s[n] = 1.0;
    for k in (1..n).rev() {
        s[k] = s[k + 1] * (1.0 - beta[k + 1]);
    }
    let neutral = (0..=n).map(|v| v >= 1 && state.status(v) == Status::Neutral).collect();
    Ok(ConditionalUrnState {
        t: state.t() + 1,
        probe: state.next_probe(),
        z,
        z_tilde: zt,
        z_shape,
        z_tilde_shape: zt_shape,
        beta,
        s,
        neutral,
    })
}

/// One coordinate of the Bernoulli neighbour process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BernoulliEntry {
    pub vertex: usize,
    pub indicator: bool,
    pub mean: f64,
}

/// P_{k→probe} = (S_{probe}/S_{k-1}) · B_{probe} for neutral k > probe, and 0
/// otherwise, together with independent indicators.
pub fn bernoulli_neighbor_process<R: Rng + ?Sized>(
    cond: &ConditionalUrnState,
    probe: usize,
    rng: &mut R,
) -> Result<Vec<BernoulliEntry>> {
    let n = cond.n();
    if probe < 1 || probe > n {
        return Err(invalid("probe", format!("{probe} is not in 1..{n}")));
    }
    let mut out = Vec::with_capacity(n - probe);
    for k in (probe + 1)..=n {
        let mean = if cond.is_neutral(k) {
            (cond.s(probe) / cond.s(k - 1) * cond.beta(probe)).min(1.0)
        } else {
            0.0
        };
        let indicator = rng::unif(rng) < mean;
        out.push(BernoulliEntry {
            vertex: k,
            indicator,
            mean,
        });
    }
    Ok(out)
}

/// Recipient h < probe of the probe's outgoing edge:
/// S_{h-1} ≤ u · S_{probe-1} < S_h.
pub fn type_l_recipient(cond: &ConditionalUrnState, probe: usize, u: f64) -> Result<usize> {
    if probe < 2 || probe > cond.n() {
        return Err(invalid("probe", format!("{probe} has no outgoing edge")));
    }
    if !(0.0..1.0).contains(&u) {
        return Err(invalid("u", format!("{u} is not in [0, 1)")));
    }
    let target = u * cond.s(probe - 1);
    let h = cond.s[..probe].partition_point(|s| *s <= target);
    Ok(h.clamp(1, probe - 1))
}
