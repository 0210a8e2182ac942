//! Rooted networks: lazy neighbor oracles, materialized balls, rooted
//! label-preserving isomorphism, the truncated local metric, actionability,
//! and the right action obtained by following edge labels.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::config::{LazyConfig, Shifted, Symbol, Value};
use crate::error::{Error, Result};
use crate::free_group::{GeneratorSet, Word};
use crate::soe::RunLabel;

/// Vertex label of any network built here.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Symbol(Symbol),
    Pair(Symbol, Symbol),
    Run(RunLabel),
}

impl From<Value> for Label {
    fn from(v: Value) -> Self {
        match v {
            Value::Single(i) => Label::Symbol(i),
            Value::Pair(i, j) => Label::Pair(i, j),
        }
    }
}

/// Edge labels are generator indices of the acting free group.
pub type EdgeLabel = u32;

/// A rooted network exposed as an oracle. Edge sets may be infinite; only
/// balls are ever materialized.
pub trait RootedNetwork {
    type Vertex: Clone + Eq + Hash + fmt::Debug;

    fn root(&self) -> Self::Vertex;
    fn contains(&self, v: &Self::Vertex) -> bool;
    fn label(&self, v: &Self::Vertex) -> Result<Label>;
    /// Edges `(label, target)` with source `v`.
    fn out_edges(&self, v: &Self::Vertex) -> Result<Vec<(EdgeLabel, Self::Vertex)>>;
    /// Edges `(label, source)` with target `v`.
    fn in_edges(&self, v: &Self::Vertex) -> Result<Vec<(EdgeLabel, Self::Vertex)>>;
    fn vertex_name(&self, v: &Self::Vertex) -> String;
    fn edge_label_name(&self, l: EdgeLabel) -> String;
}

/// Labels of a configuration read at group elements.
pub trait SiteLabels {
    fn label_at(&self, g: &Word) -> Result<Label>;
    fn contains(&self, _g: &Word) -> bool {
        true
    }
}

impl SiteLabels for LazyConfig {
    fn label_at(&self, g: &Word) -> Result<Label> {
        Ok(self.value_at(g).into())
    }
}

impl SiteLabels for Shifted<LazyConfig> {
    fn label_at(&self, g: &Word) -> Result<Label> {
        Ok(self.value_at(g).into())
    }
}

impl<L: SiteLabels + ?Sized> SiteLabels for &L {
    fn label_at(&self, g: &Word) -> Result<Label> {
        (**self).label_at(g)
    }
    fn contains(&self, g: &Word) -> bool {
        (**self).contains(g)
    }
}

/// An explicit labeling of finitely many group elements.
#[derive(Clone, Debug, Default)]
pub struct FiniteLabeling(pub HashMap<Word, Label>);

impl SiteLabels for FiniteLabeling {
    fn label_at(&self, g: &Word) -> Result<Label> {
        self.0
            .get(g)
            .cloned()
            .ok_or_else(|| Error::Domain(format!("no label given at {g:?}")))
    }
    fn contains(&self, g: &Word) -> bool {
        self.0.contains_key(g)
    }
}

/// The network induced by a labeling and a generating set: vertices are
/// group elements, edges `(g, gs)` labeled `s`, rooted at the identity.
#[derive(Clone, Debug)]
pub struct CayleyNetwork<L> {
    labels: L,
    gens: GeneratorSet,
}

pub fn network_from_config<L: SiteLabels>(labels: L, gens: GeneratorSet) -> CayleyNetwork<L> {
    CayleyNetwork { labels, gens }
}

impl<L: SiteLabels> RootedNetwork for CayleyNetwork<L> {
    type Vertex = Word;

    fn root(&self) -> Word {
        Word::identity()
    }
    fn contains(&self, v: &Word) -> bool {
        self.gens.check(v).is_ok() && self.labels.contains(v)
    }
    fn label(&self, v: &Word) -> Result<Label> {
        self.labels.label_at(v)
    }
    fn out_edges(&self, v: &Word) -> Result<Vec<(EdgeLabel, Word)>> {
        Ok((0..self.gens.rank() as u32)
            .map(|s| (s, v.times_power(s, 1)))
            .collect())
    }
    fn in_edges(&self, v: &Word) -> Result<Vec<(EdgeLabel, Word)>> {
        Ok((0..self.gens.rank() as u32)
            .map(|s| (s, v.times_power(s, -1)))
            .collect())
    }
    fn vertex_name(&self, v: &Word) -> String {
        self.gens.format(v)
    }
    fn edge_label_name(&self, l: EdgeLabel) -> String {
        self.gens.name(l).to_string()
    }
}

/// The same network with a different root.
pub struct Rerooted<'a, N: RootedNetwork> {
    inner: &'a N,
    root: N::Vertex,
}

pub fn rerooted<N: RootedNetwork>(net: &N, v: N::Vertex) -> Result<Rerooted<'_, N>> {
    if !net.contains(&v) {
        return Err(Error::Usage(format!(
            "vertex {} is not in the network",
            net.vertex_name(&v)
        )));
    }
    Ok(Rerooted { inner: net, root: v })
}

impl<N: RootedNetwork> RootedNetwork for Rerooted<'_, N> {
    type Vertex = N::Vertex;

    fn root(&self) -> N::Vertex {
        self.root.clone()
    }
    fn contains(&self, v: &N::Vertex) -> bool {
        self.inner.contains(v)
    }
    fn label(&self, v: &N::Vertex) -> Result<Label> {
        self.inner.label(v)
    }
    fn out_edges(&self, v: &N::Vertex) -> Result<Vec<(EdgeLabel, N::Vertex)>> {
        self.inner.out_edges(v)
    }
    fn in_edges(&self, v: &N::Vertex) -> Result<Vec<(EdgeLabel, N::Vertex)>> {
        self.inner.in_edges(v)
    }
    fn vertex_name(&self, v: &N::Vertex) -> String {
        self.inner.vertex_name(v)
    }
    fn edge_label_name(&self, l: EdgeLabel) -> String {
        self.inner.edge_label_name(l)
    }
}

/// A materialized ball: all vertices within undirected distance `radius` of
/// the root and the edges between them. Vertex 0 is the root; vertices are in
/// breadth-first order.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteBall {
    pub radius: usize,
    pub vertices: Vec<String>,
    pub labels: Vec<Label>,
    pub dist: Vec<usize>,
    /// `(source, target, label)`, sorted.
    pub edges: Vec<(usize, usize, EdgeLabel)>,
    pub edge_label_names: BTreeMap<EdgeLabel, String>,
}

#[derive(Serialize)]
struct BallJson<'a> {
    radius: usize,
    root: &'a str,
    vertices: &'a [String],
    labels: &'a [Label],
    edges: Vec<(&'a str, &'a str, &'a str)>,
}

impl FiniteBall {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// The sub-ball of a smaller radius.
    pub fn restrict(&self, radius: usize) -> FiniteBall {
        let keep: Vec<Option<usize>> = {
            let mut next = 0;
            self.dist
                .iter()
                .map(|d| {
                    (*d <= radius).then(|| {
                        next += 1;
                        next - 1
                    })
                })
                .collect()
        };
        fn pick<T: Clone>(xs: &[T], keep: &[Option<usize>]) -> Vec<T> {
            xs.iter()
                .zip(keep)
                .filter(|(_, k)| k.is_some())
                .map(|(x, _)| x.clone())
                .collect()
        }
        let mut edges: Vec<_> = self
            .edges
            .iter()
            .filter_map(|&(s, t, l)| Some((keep[s]?, keep[t]?, l)))
            .collect();
        edges.sort_unstable();
        FiniteBall {
            radius: radius.min(self.radius),
            vertices: pick(&self.vertices, &keep),
            labels: pick(&self.labels, &keep),
            dist: pick(&self.dist, &keep),
            edge_label_names: self
                .edge_label_names
                .iter()
                .filter(|(l, _)| edges.iter().any(|e| e.2 == **l))
                .map(|(l, n)| (*l, n.clone()))
                .collect(),
            edges,
        }
    }

    /// True iff the underlying undirected multigraph contains a cycle.
    pub fn has_cycle(&self) -> bool {
        let mut parent: Vec<usize> = (0..self.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &(s, t, _) in &self.edges {
            let (rs, rt) = (find(&mut parent, s), find(&mut parent, t));
            if rs == rt {
                return true;
            }
            parent[rs] = rt;
        }
        false
    }

    pub fn to_json(&self) -> serde_json::Value {
        let name = |l: &EdgeLabel| self.edge_label_names.get(l).map(String::as_str).unwrap_or("?");
        let json = BallJson {
            radius: self.radius,
            root: &self.vertices[0],
            vertices: &self.vertices,
            labels: &self.labels,
            edges: self
                .edges
                .iter()
                .map(|(s, t, l)| (self.vertices[*s].as_str(), self.vertices[*t].as_str(), name(l)))
                .collect(),
        };
        serde_json::to_value(json).expect("ball serializes")
    }

    fn adjacency(&self) -> (Vec<Vec<(EdgeLabel, usize)>>, Vec<Vec<(EdgeLabel, usize)>>) {
        let mut out = vec![Vec::new(); self.len()];
        let mut inn = vec![Vec::new(); self.len()];
        for &(s, t, l) in &self.edges {
            out[s].push((l, t));
            inn[t].push((l, s));
        }
        (out, inn)
    }
}

/// Materializes `B_radius(net)`. Fails if some vertex has more than
/// `degree_cap` incident edges.
pub fn ball<N: RootedNetwork>(net: &N, radius: usize, degree_cap: usize) -> Result<FiniteBall> {
    let root = net.root();
    let mut index: HashMap<N::Vertex, usize> = HashMap::new();
    let mut verts: Vec<N::Vertex> = Vec::new();
    let mut dist: Vec<usize> = Vec::new();
    let mut outs: Vec<Vec<(EdgeLabel, N::Vertex)>> = Vec::new();
    index.insert(root.clone(), 0);
    verts.push(root);
    dist.push(0);
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let v = verts[i].clone();
        let out = net.out_edges(&v)?;
        if dist[i] < radius {
            let inn = net.in_edges(&v)?;
            if out.len() + inn.len() > degree_cap {
                return Err(Error::Resource(format!(
                    "vertex {} has degree {} above cap {degree_cap}",
                    net.vertex_name(&v),
                    out.len() + inn.len()
                )));
            }
            for (_, w) in out.iter().chain(inn.iter()) {
                if !index.contains_key(w) {
                    index.insert(w.clone(), verts.len());
                    verts.push(w.clone());
                    dist.push(dist[i] + 1);
                    queue.push_back(verts.len() - 1);
                }
            }
        }
        outs.push(out);
    }
    let mut edges = HashSet::new();
    let mut names = BTreeMap::new();
    for (i, out) in outs.iter().enumerate() {
        for (l, w) in out {
            if let Some(&j) = index.get(w) {
                edges.insert((i, j, *l));
                names.entry(*l).or_insert_with(|| net.edge_label_name(*l));
            }
        }
    }
    let mut edges: Vec<_> = edges.into_iter().collect();
    edges.sort_unstable();
    let labels = verts.iter().map(|v| net.label(v)).collect::<Result<Vec<_>>>()?;
    Ok(FiniteBall {
        radius,
        vertices: verts.iter().map(|v| net.vertex_name(v)).collect(),
        labels,
        dist,
        edges,
        edge_label_names: names,
    })
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Side {
    Out,
    In,
}

/// Rooted, label-preserving directed-graph isomorphism test by backtracking.
/// Candidates for each vertex come from its breadth-first parent's image
/// along an edge with the same label and direction.
pub fn ball_isomorphic(b1: &FiniteBall, b2: &FiniteBall) -> bool {
    if b1.radius != b2.radius || b1.len() != b2.len() || b1.edges.len() != b2.edges.len() {
        return false;
    }
    if b1.is_empty() {
        return true;
    }
    let mut l1 = b1.labels.clone();
    let mut l2 = b2.labels.clone();
    l1.sort();
    l2.sort();
    if l1 != l2 {
        return false;
    }
    let (out1, in1) = b1.adjacency();
    let (out2, in2) = b2.adjacency();
    let signature = |out: &Vec<(EdgeLabel, usize)>, inn: &Vec<(EdgeLabel, usize)>| {
        let mut o: Vec<EdgeLabel> = out.iter().map(|e| e.0).collect();
        let mut i: Vec<EdgeLabel> = inn.iter().map(|e| e.0).collect();
        o.sort_unstable();
        i.sort_unstable();
        (o, i)
    };
    let sig1: Vec<_> = (0..b1.len()).map(|v| signature(&out1[v], &in1[v])).collect();
    let sig2: Vec<_> = (0..b2.len()).map(|v| signature(&out2[v], &in2[v])).collect();

    // breadth-first order of b1 with the edge that discovered each vertex
    let mut order = vec![0usize];
    let mut parent: Vec<Option<(usize, EdgeLabel, Side)>> = vec![None; b1.len()];
    let mut seen = vec![false; b1.len()];
    seen[0] = true;
    let mut k = 0;
    while k < order.len() {
        let v = order[k];
        k += 1;
        let neighbors = out1[v]
            .iter()
            .map(|&(l, w)| (l, w, Side::Out))
            .chain(in1[v].iter().map(|&(l, w)| (l, w, Side::In)));
        for (l, w, side) in neighbors {
            if !seen[w] {
                seen[w] = true;
                parent[w] = Some((v, l, side));
                order.push(w);
            }
        }
    }
    if order.len() != b1.len() {
        // b1 is not connected from its root; compare as unrooted leftovers is meaningless
        return false;
    }
    let edges2: HashSet<(usize, usize, EdgeLabel)> = b2.edges.iter().copied().collect();

    struct Search<'a> {
        b1: &'a FiniteBall,
        b2: &'a FiniteBall,
        order: Vec<usize>,
        parent: Vec<Option<(usize, EdgeLabel, Side)>>,
        out1: Vec<Vec<(EdgeLabel, usize)>>,
        in1: Vec<Vec<(EdgeLabel, usize)>>,
        out2: Vec<Vec<(EdgeLabel, usize)>>,
        in2: Vec<Vec<(EdgeLabel, usize)>>,
        sig1: Vec<(Vec<EdgeLabel>, Vec<EdgeLabel>)>,
        sig2: Vec<(Vec<EdgeLabel>, Vec<EdgeLabel>)>,
        edges2: HashSet<(usize, usize, EdgeLabel)>,
        map: Vec<Option<usize>>,
        used: Vec<bool>,
    }

    impl Search<'_> {
        fn compatible(&self, v: usize, c: usize) -> bool {
            if self.used[c]
                || self.b1.labels[v] != self.b2.labels[c]
                || self.b1.dist[v] != self.b2.dist[c]
                || self.sig1[v] != self.sig2[c]
            {
                return false;
            }
            let mut mapped_edges = 0;
            for &(l, w) in &self.out1[v] {
                if let Some(mw) = self.map[w] {
                    if !self.edges2.contains(&(c, mw, l)) {
                        return false;
                    }
                    mapped_edges += 1;
                }
            }
            for &(l, w) in &self.in1[v] {
                if let Some(mw) = self.map[w] {
                    if !self.edges2.contains(&(mw, c, l)) {
                        return false;
                    }
                    mapped_edges += 1;
                }
            }
            let image_edges = self.out2[c]
                .iter()
                .chain(self.in2[c].iter())
                .filter(|(_, w)| self.used[*w])
                .count();
            image_edges == mapped_edges
        }

        fn extend(&mut self, k: usize) -> bool {
            if k == self.order.len() {
                return true;
            }
            let v = self.order[k];
            let (p, l, side) = self.parent[v].expect("non-root vertex has a parent");
            let mp = self.map[p].expect("parent mapped first");
            let pool = match side {
                Side::Out => &self.out2[mp],
                Side::In => &self.in2[mp],
            };
            let candidates: Vec<usize> = pool
                .iter()
                .filter(|(el, _)| *el == l)
                .map(|(_, c)| *c)
                .collect();
            for c in candidates {
                if self.compatible(v, c) {
                    self.map[v] = Some(c);
                    self.used[c] = true;
                    if self.extend(k + 1) {
                        return true;
                    }
                    self.map[v] = None;
                    self.used[c] = false;
                }
            }
            false
        }
    }

    if b1.labels[0] != b2.labels[0] || sig1[0] != sig2[0] {
        return false;
    }
    let mut search = Search {
        b1,
        b2,
        order,
        parent,
        out1,
        in1,
        out2,
        in2,
        sig1,
        sig2,
        edges2,
        map: vec![None; b1.len()],
        used: vec![false; b2.len()],
    };
    search.map[0] = Some(0);
    search.used[0] = true;
    // self-loops at the root
    let root_loops1 = search.out1[0].iter().filter(|(_, w)| *w == 0).count();
    let root_loops2 = search.out2[0].iter().filter(|(_, w)| *w == 0).count();
    if root_loops1 != root_loops2 {
        return false;
    }
    search.extend(1)
}

/// Truncated local distance between rooted networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Distance {
    /// Roots already differ.
    Two,
    /// `1/(n+1)` where `n` is the largest agreeing radius.
    Exact(u64),
    /// All tested radii up to `n` agree: distance `≤ 1/(n+1)`.
    AtMost(u64),
}

impl Distance {
    /// Numeric value (an upper bound for [`Distance::AtMost`]).
    pub fn value(self) -> f64 {
        match self {
            Distance::Two => 2.0,
            Distance::Exact(n) | Distance::AtMost(n) => 1.0 / (n as f64 + 1.0),
        }
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distance::Two => write!(f, "2"),
            Distance::Exact(n) => write!(f, "1/{}", n + 1),
            Distance::AtMost(n) => write!(f, "<= 1/{}", n + 1),
        }
    }
}

pub fn network_distance<N1: RootedNetwork, N2: RootedNetwork>(
    n1: &N1,
    n2: &N2,
    max_radius: usize,
    degree_cap: usize,
) -> Result<Distance> {
    let full1 = ball(n1, max_radius, degree_cap)?;
    let full2 = ball(n2, max_radius, degree_cap)?;
    for r in 0..=max_radius {
        if !ball_isomorphic(&full1.restrict(r), &full2.restrict(r)) {
            return Ok(if r == 0 {
                Distance::Two
            } else {
                Distance::Exact(r as u64 - 1)
            });
        }
    }
    Ok(Distance::AtMost(max_radius as u64))
}

/// Checks, on the ball of the given radius, that every interior vertex (one
/// closer than the radius) has exactly one outgoing and one incoming edge
/// for each label in `labels` and no other edges. Boundary vertices are
/// skipped since their edges may leave the ball.
pub fn is_actionable<N: RootedNetwork>(
    net: &N,
    labels: &[EdgeLabel],
    radius: usize,
    degree_cap: usize,
) -> Result<bool> {
    let b = ball(net, radius, degree_cap)?;
    let (out, inn) = b.adjacency();
    let wanted: Vec<EdgeLabel> = {
        let mut l = labels.to_vec();
        l.sort_unstable();
        l
    };
    for v in 0..b.len() {
        if b.dist[v] >= radius {
            continue;
        }
        for side in [&out[v], &inn[v]] {
            let mut got: Vec<EdgeLabel> = side.iter().map(|e| e.0).collect();
            got.sort_unstable();
            if got != wanted {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// `v · g`: follow `g` letter by letter, forwards along out-edges for
/// positive letters and backwards along in-edges for inverse letters.
pub fn act<N: RootedNetwork>(net: &N, v: &N::Vertex, g: &Word) -> Result<N::Vertex> {
    let mut cur = v.clone();
    for (gen, sign) in g.letters() {
        let edges = if sign > 0 {
            net.out_edges(&cur)?
        } else {
            net.in_edges(&cur)?
        };
        let mut hits = edges.into_iter().filter(|(l, _)| *l == gen);
        match (hits.next(), hits.next()) {
            (Some((_, w)), None) => cur = w,
            _ => {
                let mut letter = net.edge_label_name(gen);
                if sign < 0 {
                    letter.push('\'');
                }
                return Err(Error::ActionabilityViolation {
                    vertex: net.vertex_name(&cur),
                    letter,
                });
            }
        }
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{MeasureKind, MeasureSpec};
    use crate::free_group::tests::word_strategy;
    use crate::free_group::{A, B};
    use proptest::prelude::*;

    const CAP: usize = 64;

    fn cfg(seed: u64, kind: MeasureKind, k: u32) -> LazyConfig {
        LazyConfig::new(seed, MeasureSpec::uniform(kind, k).unwrap()).unwrap()
    }

    /// A finite toy network given by explicit edge lists.
    struct Toy {
        labels: Vec<Label>,
        edges: Vec<(usize, usize, EdgeLabel)>,
    }

    impl RootedNetwork for Toy {
        type Vertex = usize;
        fn root(&self) -> usize {
            0
        }
        fn contains(&self, v: &usize) -> bool {
            *v < self.labels.len()
        }
        fn label(&self, v: &usize) -> Result<Label> {
            Ok(self.labels[*v].clone())
        }
        fn out_edges(&self, v: &usize) -> Result<Vec<(EdgeLabel, usize)>> {
            Ok(self.edges.iter().filter(|e| e.0 == *v).map(|e| (e.2, e.1)).collect())
        }
        fn in_edges(&self, v: &usize) -> Result<Vec<(EdgeLabel, usize)>> {
            Ok(self.edges.iter().filter(|e| e.1 == *v).map(|e| (e.2, e.0)).collect())
        }
        fn vertex_name(&self, v: &usize) -> String {
            format!("v{v}")
        }
        fn edge_label_name(&self, l: EdgeLabel) -> String {
            format!("s{l}")
        }
    }

    #[test]
    fn cayley_network_basics() {
        let x = cfg(3, MeasureKind::Pair, 3);
        let net = network_from_config(&x, GeneratorSet::free2());
        assert_eq!(net.label(&net.root()).unwrap(), Label::from(x.value_at(&Word::identity())));
        let g = Word::from_letters([(A, 1), (B, -1)]);
        assert_eq!(net.out_edges(&g).unwrap().len(), 2);
        assert_eq!(net.in_edges(&g).unwrap().len(), 2);
        assert_eq!(ball(&net, 0, CAP).unwrap().len(), 1);
        assert_eq!(ball(&net, 1, CAP).unwrap().len(), 5);
        assert_eq!(ball(&net, 2, CAP).unwrap().len(), 17);
        assert!(!ball(&net, 3, CAP).unwrap().has_cycle());
        assert!(is_actionable(&net, &[A, B], 3, CAP).unwrap());
        assert!(matches!(ball(&net, 2, 3), Err(Error::Resource(_))));
    }

    #[test]
    fn balls_nest() {
        let x = cfg(4, MeasureKind::Plain, 2);
        let net = network_from_config(&x, GeneratorSet::free2());
        let big = ball(&net, 3, CAP).unwrap();
        for m in 0..3 {
            let small = ball(&net, m, CAP).unwrap();
            assert!(small.vertices.iter().all(|v| big.vertices.contains(v)));
            assert_eq!(small, big.restrict(m));
        }
    }

    #[test]
    fn cayley_traversal_is_identity_map() {
        let x = cfg(5, MeasureKind::Pair, 2);
        let net = network_from_config(&x, GeneratorSet::free2());
        for g in GeneratorSet::free2().ball(4) {
            assert_eq!(act(&net, &Word::identity(), &g).unwrap(), g);
        }
    }

    #[test]
    fn rerooting() {
        let x = cfg(6, MeasureKind::Pair, 2);
        let net = network_from_config(&x, GeneratorSet::free2());
        let same = rerooted(&net, Word::identity()).unwrap();
        assert!(ball_isomorphic(&ball(&same, 3, CAP).unwrap(), &ball(&net, 3, CAP).unwrap()));
        let g = Word::from_letters([(B, 1), (A, 1)]);
        let moved = rerooted(&net, g.clone()).unwrap();
        let back = rerooted(&moved, Word::identity()).unwrap();
        assert_eq!(ball(&back, 2, CAP).unwrap(), ball(&net, 2, CAP).unwrap());
        let finite = network_from_config(FiniteLabeling::default(), GeneratorSet::free2());
        assert!(matches!(rerooted(&finite, g), Err(Error::Usage(_))));
    }

    #[test]
    fn isomorphism_detects_label_change() {
        let x = cfg(8, MeasureKind::Plain, 3);
        let net = network_from_config(&x, GeneratorSet::free2());
        let b = ball(&net, 2, CAP).unwrap();
        assert!(ball_isomorphic(&b, &b));
        let mut changed = b.clone();
        let last = changed.labels.len() - 1;
        changed.labels[last] = match &changed.labels[last] {
            Label::Symbol(1) => Label::Symbol(2),
            _ => Label::Symbol(1),
        };
        assert!(!ball_isomorphic(&b, &changed));
    }

    #[test]
    fn isomorphism_needs_search_on_symmetric_graphs() {
        // root with two out-edges of the same label to leaves with swapped labels
        let t1 = Toy {
            labels: vec![Label::Symbol(1), Label::Symbol(2), Label::Symbol(3)],
            edges: vec![(0, 1, 0), (0, 2, 0)],
        };
        let t2 = Toy {
            labels: vec![Label::Symbol(1), Label::Symbol(3), Label::Symbol(2)],
            edges: vec![(0, 1, 0), (0, 2, 0)],
        };
        let t3 = Toy {
            labels: vec![Label::Symbol(1), Label::Symbol(3), Label::Symbol(2)],
            edges: vec![(0, 1, 0), (2, 0, 0)],
        };
        let b = |t: &Toy| ball(t, 1, CAP).unwrap();
        assert!(ball_isomorphic(&b(&t1), &b(&t2)));
        assert!(!ball_isomorphic(&b(&t1), &b(&t3)));
        assert!(!is_actionable(&t1, &[0], 1, CAP).unwrap());
    }

    #[test]
    fn duplicated_out_label_is_not_actionable() {
        // a directed 2-cycle with an extra parallel-label edge
        let t = Toy {
            labels: vec![Label::Symbol(1); 3],
            edges: vec![(0, 1, 0), (1, 0, 0), (0, 2, 0), (2, 0, 0)],
        };
        assert!(!is_actionable(&t, &[0], 1, CAP).unwrap());
        assert!(matches!(
            act(&t, &0, &Word::generator(0)),
            Err(Error::ActionabilityViolation { .. })
        ));
        let cycle = Toy {
            labels: vec![Label::Symbol(1); 2],
            edges: vec![(0, 1, 0), (1, 0, 0)],
        };
        assert!(is_actionable(&cycle, &[0], 3, CAP).unwrap());
        assert_eq!(act(&cycle, &0, &Word::power(0, 3)).unwrap(), 1);
        assert!(ball(&cycle, 1, CAP).unwrap().has_cycle());
    }

    #[test]
    fn distance_cases() {
        let x = cfg(10, MeasureKind::Plain, 2);
        let net = network_from_config(&x, GeneratorSet::free2());
        assert_eq!(network_distance(&net, &net, 3, CAP).unwrap(), Distance::AtMost(3));
        // find a seed whose root label differs
        let other = (11..100)
            .map(|s| cfg(s, MeasureKind::Plain, 2))
            .find(|y| y.value_at(&Word::identity()) != x.value_at(&Word::identity()))
            .unwrap();
        let net2 = network_from_config(&other, GeneratorSet::free2());
        assert_eq!(network_distance(&net, &net2, 3, CAP).unwrap(), Distance::Two);
        assert_eq!(Distance::Exact(1).value(), 0.5);
        assert_eq!(Distance::AtMost(3).to_string(), "<= 1/4");
    }

    #[test]
    fn distance_ultrametric_spot_check() {
        let nets: Vec<_> = (0..40u64)
            .map(|s| network_from_config(cfg(s, MeasureKind::Plain, 2), GeneratorSet::free2()))
            .collect();
        let d = |i: usize, j: usize| network_distance(&nets[i], &nets[j], 2, CAP).unwrap().value();
        for i in 0..8 {
            for j in 0..8 {
                for k in 0..8 {
                    assert!(d(i, k) <= d(i, j).max(d(j, k)) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn radius_one_isomorphism_matches_label_patterns() {
        // on a Cayley graph the only rooted automorphism is the identity,
        // so radius-1 balls are isomorphic iff the five labels agree
        let nets: Vec<_> = (0..60u64)
            .map(|s| network_from_config(cfg(s, MeasureKind::Plain, 2), GeneratorSet::free2()))
            .collect();
        let ball1: Vec<_> = GeneratorSet::free2().ball(1);
        for i in 0..nets.len() {
            for j in 0..nets.len() {
                let same = ball1
                    .iter()
                    .all(|g| nets[i].label(g).unwrap() == nets[j].label(g).unwrap());
                let iso = ball_isomorphic(&ball(&nets[i], 1, CAP).unwrap(), &ball(&nets[j], 1, CAP).unwrap());
                assert_eq!(same, iso);
            }
        }
    }

    #[test]
    fn ball_json_shape() {
        let x = cfg(2, MeasureKind::Pair, 2);
        let net = network_from_config(&x, GeneratorSet::free2());
        let j = ball(&net, 1, CAP).unwrap().to_json();
        assert_eq!(j["root"], "e");
        assert_eq!(j["vertices"].as_array().unwrap().len(), 5);
        assert_eq!(j["edges"].as_array().unwrap().len(), 4);
        assert!(j["labels"][0].is_array());
    }

    proptest! {
        #[test]
        fn shift_equals_reroot(seed in any::<u64>(), g in word_strategy(2, 4)) {
            // N_{g·x} ≅ (N_x rerooted at g⁻¹)
            let x = cfg(seed, MeasureKind::Pair, 2);
            let shifted = network_from_config(Shifted::new(x.clone(), &g), GeneratorSet::free2());
            let base = network_from_config(&x, GeneratorSet::free2());
            let moved = rerooted(&base, g.inverse()).unwrap();
            let d = network_distance(&shifted, &moved, 3, CAP).unwrap();
            prop_assert_eq!(d, Distance::AtMost(3));
        }

        #[test]
        fn right_action_law(seed in any::<u64>(), g in word_strategy(2, 4), h in word_strategy(2, 4)) {
            let x = cfg(seed, MeasureKind::Plain, 2);
            let net = network_from_config(&x, GeneratorSet::free2());
            let e = Word::identity();
            let lhs = act(&net, &e, &g.mul(&h)).unwrap();
            let rhs = act(&net, &act(&net, &e, &g).unwrap(), &h).unwrap();
            prop_assert_eq!(lhs, rhs);
            let back = act(&net, &act(&net, &e, &g).unwrap(), &g.inverse()).unwrap();
            prop_assert_eq!(back, e);
        }
    }
}
