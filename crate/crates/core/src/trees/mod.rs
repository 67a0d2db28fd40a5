//! Tree classes 𝒯^s_l and 𝒯^{s,(12)}_l, canonical forms, reduction and weight factors.
//!
//! Vertex numbering convention: vertices `0..s` carry the slot labels — the
//! root(s) first (`x1`, and `x2` for twice-rooted trees), then the external
//! vertices, where vertex `i` is `y_{i+1}`. Internal vertices are numbered from
//! `s` upwards and are unlabeled: two trees are the same topology iff they agree
//! up to a relabeling of internal vertices, decided by the rooted canonical
//! string.

mod enumerate;
mod flat;
mod weights;

pub use enumerate::{count_trees, enumerate_trees, for_each_tree, EnumOptions};
pub use flat::FlatWeights;
pub use weights::{
    chain_closed_form, chain_long_time_closed_form, f2r_closed_form, log_grid, ScaleAssignment, WeightEngine,
    WeightFactorValue, WeightParams,
};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Tree class: `s` slots (roots + externals), loop order `l`, one or two roots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TreeClassSpec {
    pub s: usize,
    pub l: usize,
    pub twice_rooted: bool,
}

impl TreeClassSpec {
    /// Validated class specification (s ≥ 1 single-rooted, s ≥ 2 twice-rooted).
    pub fn new(s: usize, l: usize, twice_rooted: bool) -> Result<Self> {
        let min = if twice_rooted { 2 } else { 1 };
        if s < min {
            return Err(Error::Parameter(format!("tree class needs s ≥ {min}, got {s}")));
        }
        Ok(TreeClassSpec { s, l, twice_rooted })
    }

    /// Single-rooted class 𝒯^s_l.
    pub fn single(s: usize, l: usize) -> Result<Self> {
        Self::new(s, l, false)
    }

    /// Number of root vertices.
    pub fn roots(&self) -> usize {
        if self.twice_rooted {
            2
        } else {
            1
        }
    }

    /// Membership rule on (v₂, δ_{c₁,1}): v₂ = 0 at l = 0, otherwise
    /// v₂ + δ_{c₁,1} ≤ 3l − 2 + s/2.
    pub fn admits(&self, v2: usize, delta_c1: usize) -> bool {
        if self.l == 0 {
            v2 == 0
        } else {
            2 * (v2 + delta_c1) <= 6 * self.l + self.s - 4
        }
    }

    /// Largest admissible v₂ + δ_{c₁,1} (None at l = 0, where v₂ must vanish).
    pub fn v2_cap(&self) -> Option<usize> {
        (self.l > 0).then(|| (6 * self.l + self.s - 4) / 2)
    }

    /// Upper bound on the number of internal vertices of any member: incidence-2
    /// vertices are capped by the membership rule, and higher-incidence internal
    /// vertices by the incidence identity (at most s − 2 of them).
    pub fn internal_bound(&self) -> usize {
        self.v2_cap().unwrap_or(0) + self.s.saturating_sub(2)
    }
}

impl fmt::Display for TreeClassSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.twice_rooted {
            write!(f, "T^{{{},(12)}}_{}", self.s, self.l)
        } else {
            write!(f, "T^{}_{}", self.s, self.l)
        }
    }
}

/// Role of a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    /// Root `x_k` (k = 1, 2).
    Root(usize),
    /// External vertex `y_k`.
    External(usize),
    /// Internal (integrated) vertex.
    Internal,
}

/// A tree on `n` vertices with the slot convention of the module docs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tree {
    s: usize,
    roots: usize,
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl Tree {
    /// Build and structurally check a tree (connected, |E| = |V| − 1, no loops).
    pub fn new(s: usize, roots: usize, n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if !(roots == 1 || roots == 2) || s < roots || n < s {
            return Err(Error::Parameter(format!("invalid tree shape s={s}, roots={roots}, n={n}")));
        }
        let t = Self::raw(s, roots, n, edges);
        t.check_structure()?;
        Ok(t)
    }

    /// Construct without checks (enumeration hot path; inputs are valid by construction).
    pub(crate) fn raw(s: usize, roots: usize, n: usize, mut edges: Vec<(usize, usize)>) -> Self {
        for e in edges.iter_mut() {
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
        }
        edges.sort_unstable();
        Tree { s, roots, n, edges }
    }

    /// The degenerate single-vertex tree (the class s = 1).
    pub fn single_root() -> Self {
        Tree { s: 1, roots: 1, n: 1, edges: Vec::new() }
    }

    fn check_structure(&self) -> Result<()> {
        if self.edges.len() + 1 != self.n {
            return Err(Error::Parameter(format!("{} edges on {} vertices is not a tree", self.edges.len(), self.n)));
        }
        for &(a, b) in &self.edges {
            if a == b || b >= self.n {
                return Err(Error::Parameter(format!("invalid edge ({a}, {b})")));
            }
        }
        let mut seen = vec![false; self.n];
        let adj = self.adjacency();
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        if seen.iter().any(|&b| !b) {
            return Err(Error::Parameter("graph is not connected".into()));
        }
        Ok(())
    }

    /// Number of slots s (roots + external vertices).
    pub fn s(&self) -> usize {
        self.s
    }

    /// Number of roots (1 or 2).
    pub fn roots(&self) -> usize {
        self.roots
    }

    /// Whether the tree has two roots.
    pub fn twice_rooted(&self) -> bool {
        self.roots == 2
    }

    /// Total vertex count.
    pub fn vertex_count(&self) -> usize {
        self.n
    }

    /// Number of internal vertices r.
    pub fn internal_count(&self) -> usize {
        self.n - self.s
    }

    /// Sorted edge list (a < b).
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Role of vertex `v`.
    pub fn role(&self, v: usize) -> Role {
        if v < self.roots {
            Role::Root(v + 1)
        } else if v < self.s {
            Role::External(v + 1)
        } else {
            Role::Internal
        }
    }

    /// Whether `v` is an external vertex.
    pub fn is_external(&self, v: usize) -> bool {
        v >= self.roots && v < self.s
    }

    /// Printable vertex label (`x1`, `y3`, `z2`, …).
    pub fn label(&self, v: usize) -> String {
        match self.role(v) {
            Role::Root(k) => format!("x{k}"),
            Role::External(k) => format!("y{k}"),
            Role::Internal => format!("z{}", v - self.s + 1),
        }
    }

    /// Adjacency lists.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    /// Incidence numbers c_i.
    pub fn incidence(&self) -> Vec<usize> {
        let mut c = vec![0; self.n];
        for &(a, b) in &self.edges {
            c[a] += 1;
            c[b] += 1;
        }
        c
    }

    /// v_c: number of vertices (roots included) with incidence c.
    pub fn v_counts(&self) -> BTreeMap<usize, usize> {
        let mut m = BTreeMap::new();
        for c in self.incidence() {
            *m.entry(c).or_insert(0) += 1;
        }
        m
    }

    /// v₂.
    pub fn v2(&self) -> usize {
        self.incidence().iter().filter(|&&c| c == 2).count()
    }

    /// δ_{c₁,1} for the root x1.
    pub fn delta_c1(&self) -> usize {
        usize::from(self.incidence()[0] == 1)
    }

    /// The incidence identity Σ_{c≥2}(c − 2)v_c = (#external) − 2 + Σ_roots δ_{c,1},
    /// returned as (lhs, rhs). For single-rooted trees the right side is s − 3 + δ_{c₁,1}.
    pub fn incidence_identity(&self) -> (i64, i64) {
        let c = self.incidence();
        let lhs: i64 = c.iter().filter(|&&c| c >= 2).map(|&c| c as i64 - 2).sum();
        let ext = (self.s - self.roots) as i64;
        let rhs = ext - 2 + (0..self.roots).filter(|&r| c[r] == 1).count() as i64;
        (lhs, rhs)
    }

    /// Whether edge `e` (index into [`edges`](Self::edges)) is an external line.
    pub fn is_external_line(&self, e: usize) -> bool {
        let (a, b) = self.edges[e];
        self.is_external(a) || self.is_external(b)
    }

    /// Indices of internal lines ℐ, in edge order.
    pub fn internal_lines(&self) -> Vec<usize> {
        (0..self.edges.len()).filter(|&e| !self.is_external_line(e)).collect()
    }

    /// Indices of external lines 𝒥, in edge order.
    pub fn external_lines(&self) -> Vec<usize> {
        (0..self.edges.len()).filter(|&e| self.is_external_line(e)).collect()
    }

    /// Whether this is the s = 2 chain x1 — z₁ — … — z_n — y2.
    pub fn is_chain(&self) -> bool {
        self.roots == 1 && self.s == 2 && self.incidence().iter().all(|&c| c <= 2)
    }

    /// Check Definition-3 membership in `spec`: structure, roles (externals have
    /// incidence 1, internal vertices ≥ 2, root incidence ≤ s − 1), the incidence
    /// identity and the v₂ rule.
    pub fn validate(&self, spec: &TreeClassSpec) -> Result<()> {
        let bad = |m: String| Err(Error::Precondition(format!("{}: {m}", self.canonical_string())));
        if self.s != spec.s || self.roots != spec.roots() {
            return bad(format!("tree has s={}, roots={}, class is {spec}", self.s, self.roots));
        }
        self.check_structure()?;
        if self.s == 1 {
            return if self.n == 1 { Ok(()) } else { bad("s = 1 class holds only the bare root".into()) };
        }
        let c = self.incidence();
        for v in 0..self.n {
            match self.role(v) {
                Role::External(_) if c[v] != 1 => return bad(format!("external {} has incidence {}", self.label(v), c[v])),
                Role::Internal if c[v] < 2 => return bad(format!("internal {} has incidence {}", self.label(v), c[v])),
                Role::Root(_) if c[v] < 1 || c[v] + 1 > self.s.max(2) => {
                    return bad(format!("root {} has incidence {}", self.label(v), c[v]))
                }
                _ => {}
            }
        }
        let (lhs, rhs) = self.incidence_identity();
        if lhs != rhs {
            return bad(format!("incidence identity {lhs} ≠ {rhs}"));
        }
        if !spec.admits(self.v2(), self.delta_c1()) {
            return bad(format!("v2 = {}, δ = {} violates the membership rule of {spec}", self.v2(), self.delta_c1()));
        }
        Ok(())
    }

    /// Rooted canonical string, e.g. `x1(z(y2,y3))`; a complete invariant under
    /// relabeling of internal vertices.
    pub fn canonical_string(&self) -> String {
        let adj = self.adjacency();
        let mut memo = vec![None; self.n];
        subtree_strings(self, 0, usize::MAX, &adj, &mut memo)
    }

    /// Copy with internal vertices renumbered in canonical depth-first order.
    pub fn canonical(&self) -> Tree {
        let adj = self.adjacency();
        let mut memo = vec![None; self.n];
        subtree_strings(self, 0, usize::MAX, &adj, &mut memo);
        let mut new_id = vec![usize::MAX; self.n];
        let mut next = self.s;
        let mut stack = vec![(0usize, usize::MAX)];
        while let Some((v, p)) = stack.pop() {
            new_id[v] = if v < self.s {
                v
            } else {
                next += 1;
                next - 1
            };
            let mut kids: Vec<usize> = adj[v].iter().copied().filter(|&w| w != p).collect();
            kids.sort_by(|a, b| memo[*a].cmp(&memo[*b]));
            for &w in kids.iter().rev() {
                stack.push((w, v));
            }
        }
        let edges = self.edges.iter().map(|&(a, b)| (new_id[a], new_id[b])).collect();
        Tree::raw(self.s, self.roots, self.n, edges)
    }

    /// Canonical edge-list text: one line per edge `a b kind`, with `kind` either
    /// `internal` or `external`, edges in canonical order.
    pub fn to_edge_list(&self) -> String {
        let c = self.canonical();
        let mut out = String::new();
        for (e, &(a, b)) in c.edges.iter().enumerate() {
            let kind = if c.is_external_line(e) { "external" } else { "internal" };
            out.push_str(&format!("{} {} {kind}\n", c.label(a), c.label(b)));
        }
        out
    }

    /// Parse the edge-list format of [`to_edge_list`](Self::to_edge_list).
    pub fn from_edge_list(text: &str, s: usize, twice_rooted: bool) -> Result<Self> {
        let roots = if twice_rooted { 2 } else { 1 };
        let mut n = s;
        let parse = |tok: &str, n: &mut usize| -> Result<usize> {
            let (head, num) = tok.split_at(1);
            let k: usize = num.parse().map_err(|_| Error::Parameter(format!("bad vertex label {tok:?}")))?;
            let v = match head {
                "x" if k >= 1 && k <= roots => k - 1,
                "y" if k > roots && k <= s => k - 1,
                "z" if k >= 1 => s + k - 1,
                _ => return Err(Error::Parameter(format!("bad vertex label {tok:?}"))),
            };
            *n = (*n).max(v + 1);
            Ok(v)
        };
        let mut edges = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 3 || !(toks[2] == "internal" || toks[2] == "external") {
                return Err(Error::Parameter(format!("bad edge line {line:?}")));
            }
            let a = parse(toks[0], &mut n)?;
            let b = parse(toks[1], &mut n)?;
            edges.push((a, b));
        }
        if s == 1 && edges.is_empty() {
            return Ok(Tree::single_root());
        }
        Tree::new(s, roots, n, edges)
    }
}

/// Canonical strings of all subtrees below `v` (stored in `memo`), children sorted.
fn subtree_strings(t: &Tree, v: usize, parent: usize, adj: &[Vec<usize>], memo: &mut Vec<Option<String>>) -> String {
    let mut kids: Vec<String> =
        adj[v].iter().filter(|&&w| w != parent).map(|&w| subtree_strings(t, w, v, adj, memo)).collect();
    kids.sort();
    let head = if t.role(v) == Role::Internal { "z".to_string() } else { t.label(v) };
    let s = if kids.is_empty() { head } else { format!("{head}({})", kids.join(",")) };
    memo[v] = Some(s.clone());
    s
}

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical_string())
    }
}

/// Reduced tree: delete external vertices `y_i`, `y_j` (by subscript) with their
/// lines, then repeatedly prune internal vertices left with incidence ≤ 1. The
/// remaining externals are relabeled in order.
pub fn reduce_tree(tree: &Tree, i: usize, j: usize) -> Result<Tree> {
    if i == j {
        return Err(Error::Parameter(format!("reduction needs two distinct externals, got y{i} twice")));
    }
    for k in [i, j] {
        if k == 0 || !tree.is_external(k - 1) {
            return Err(Error::Parameter(format!("y{k} is not an external vertex of {tree}")));
        }
    }
    let mut alive = vec![true; tree.n];
    alive[i - 1] = false;
    alive[j - 1] = false;
    let mut edges: Vec<(usize, usize)> = tree.edges.iter().copied().filter(|&(a, b)| alive[a] && alive[b]).collect();
    loop {
        let mut deg = vec![0usize; tree.n];
        for &(a, b) in &edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        let prune: Vec<usize> = (tree.s..tree.n).filter(|&v| alive[v] && deg[v] <= 1).collect();
        if prune.is_empty() {
            break;
        }
        for v in prune {
            alive[v] = false;
        }
        edges.retain(|&(a, b)| alive[a] && alive[b]);
    }
    let mut map = vec![usize::MAX; tree.n];
    let mut next = 0;
    for v in 0..tree.n {
        if alive[v] {
            map[v] = next;
            next += 1;
        }
    }
    let s_new = tree.s - 2;
    if s_new == 1 && tree.roots == 1 && next == 1 {
        return Ok(Tree::single_root());
    }
    let edges = edges.into_iter().map(|(a, b)| (map[a], map[b])).collect();
    Ok(Tree::new(s_new, tree.roots, next, edges)?.canonical())
}

/// One reduction whose result falls outside the target class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReductionViolation {
    pub tree: String,
    pub removed: (usize, usize),
    pub reduced: String,
    pub v2: usize,
    pub delta_c1: usize,
}

/// Outcome of reducing every tree of 𝒯^{s+2}_{l−1} along every external pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub s: usize,
    pub l: usize,
    pub checked: usize,
    pub violations: Vec<ReductionViolation>,
}

/// Reduce every tree of 𝒯^{s+2}_{l−1} along every pair of externals and check
/// membership of the result in 𝒯^s_l (l ≥ 1).
pub fn check_reduction_closure(s: usize, l: usize, opts: &EnumOptions) -> Result<ReductionReport> {
    if l == 0 {
        return Err(Error::Parameter("reduction closure needs l ≥ 1".into()));
    }
    let from = TreeClassSpec::single(s + 2, l - 1)?;
    let to = TreeClassSpec::single(s, l)?;
    let mut report = ReductionReport { s, l, checked: 0, violations: Vec::new() };
    for t in enumerate_trees(&from, opts)? {
        for i in 2..=s + 2 {
            for j in i + 1..=s + 2 {
                let r = reduce_tree(&t, i, j)?;
                report.checked += 1;
                if r.validate(&to).is_err() {
                    report.violations.push(ReductionViolation {
                        tree: t.canonical_string(),
                        removed: (i, j),
                        reduced: r.canonical_string(),
                        v2: r.v2(),
                        delta_c1: r.delta_c1(),
                    });
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(n: usize) -> Tree {
        // x1 — z1 — … — zn — y2
        let mut edges = Vec::new();
        let mut prev = 0;
        for k in 0..n {
            edges.push((prev, 2 + k));
            prev = 2 + k;
        }
        edges.push((prev, 1));
        Tree::new(2, 1, 2 + n, edges).unwrap()
    }

    #[test]
    fn chain_roles_and_lines() {
        let t = chain(2);
        assert_eq!(t.canonical_string(), "x1(z(z(y2)))");
        assert!(t.is_chain());
        assert_eq!(t.internal_lines().len(), 2);
        assert_eq!(t.external_lines().len(), 1);
        assert_eq!(t.v2(), 2);
        assert_eq!(t.delta_c1(), 1);
        assert_eq!(t.incidence_identity(), (0, 0));
        assert!(t.validate(&TreeClassSpec::single(2, 2).unwrap()).is_ok());
        assert!(t.validate(&TreeClassSpec::single(2, 1).unwrap()).is_err());
    }

    #[test]
    fn canonical_form_ignores_internal_labels() {
        let a = Tree::new(3, 1, 5, vec![(0, 3), (3, 4), (4, 1), (4, 2)]).unwrap();
        let b = Tree::new(3, 1, 5, vec![(0, 4), (4, 3), (3, 1), (3, 2)]).unwrap();
        assert_ne!(a, b);
        assert_eq!(a.canonical(), b.canonical());
        assert_eq!(a.canonical_string(), "x1(z(z(y2,y3)))");
    }

    #[test]
    fn edge_list_round_trip() {
        let t = Tree::new(4, 1, 6, vec![(0, 4), (4, 1), (4, 5), (5, 2), (5, 3)]).unwrap();
        let text = t.to_edge_list();
        assert!(text.contains("x1 z1 internal"));
        let back = Tree::from_edge_list(&text, 4, false).unwrap();
        assert_eq!(back.canonical(), t.canonical());
    }

    #[test]
    fn reduction_examples() {
        // Chain x1 — z — {y2, y3}: removing both externals leaves the bare root.
        let t = Tree::new(3, 1, 4, vec![(0, 3), (3, 1), (3, 2)]).unwrap();
        assert_eq!(reduce_tree(&t, 2, 3).unwrap(), Tree::single_root());
        // Star root with three externals, remove two: single external line.
        let star = Tree::new(4, 1, 4, vec![(0, 1), (0, 2), (0, 3)]).unwrap();
        let r = reduce_tree(&star, 2, 4).unwrap();
        assert_eq!(r.canonical_string(), "x1(y2)");
        assert!(reduce_tree(&star, 2, 2).is_err());
        assert!(reduce_tree(&star, 1, 2).is_err());
    }

    #[test]
    fn membership_rule() {
        let spec = TreeClassSpec::single(2, 1).unwrap();
        assert!(spec.admits(1, 1));
        assert!(!spec.admits(2, 1));
        assert_eq!(spec.v2_cap(), Some(2));
        assert!(TreeClassSpec::single(4, 0).unwrap().admits(0, 1));
        assert!(!TreeClassSpec::single(4, 0).unwrap().admits(1, 0));
        assert!(TreeClassSpec::new(1, 0, true).is_err());
    }
}
