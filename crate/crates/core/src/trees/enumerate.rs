//! Exhaustive, duplicate-free generation of the tree classes.
//!
//! Every member of 𝒯^s_l arises exactly once from three steps:
//! 1. a *skeleton* in which all slot vertices are leaves and internal vertices
//!    have incidence ≥ 3, built by inserting slots one at a time (either onto a
//!    new vertex subdividing an edge, or onto an existing internal vertex);
//! 2. optionally merging each root into its (internal, pairwise distinct)
//!    neighbour, which produces the trees where a root is not a leaf;
//! 3. subdividing skeleton edges by incidence-2 internal vertices, distributed
//!    over the edges by stars and bars.
//! Since all leaves are labeled, skeletons have no nontrivial automorphisms, so
//! distinct edge subdivisions give distinct topologies.

use super::{Tree, TreeClassSpec};
use crate::error::{Error, Result};
use std::collections::BTreeSet;

/// Size guards for enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumOptions {
    /// Refuse classes whose internal-vertex bound exceeds this.
    pub max_internal: usize,
    /// Refuse materializing more trees than this.
    pub max_trees: usize,
}

impl Default for EnumOptions {
    fn default() -> Self {
        EnumOptions { max_internal: 16, max_trees: 500_000 }
    }
}

#[derive(Debug, Clone)]
struct Skeleton {
    n: usize,
    edges: Vec<(usize, usize)>,
}

/// Leaf-labeled skeletons on slots `0..s` (s ≥ 2).
fn leaf_skeletons(s: usize) -> Vec<Skeleton> {
    let mut out = vec![Skeleton { n: s, edges: vec![(0, 1)] }];
    for k in 2..s {
        let mut next = Vec::new();
        for sk in &out {
            for (e, &(a, b)) in sk.edges.iter().enumerate() {
                let w = sk.n;
                let mut edges = sk.edges.clone();
                edges[e] = (a, w);
                edges.push((w, b));
                edges.push((w, k));
                next.push(Skeleton { n: sk.n + 1, edges });
            }
            for w in s..sk.n {
                let mut edges = sk.edges.clone();
                edges.push((w, k));
                next.push(Skeleton { n: sk.n, edges });
            }
        }
        out = next;
    }
    out
}

fn neighbours(edges: &[(usize, usize)], v: usize) -> Vec<usize> {
    edges.iter().filter_map(|&(a, b)| if a == v { Some(b) } else if b == v { Some(a) } else { None }).collect()
}

/// Merge leaf root `r` into its internal neighbour; None if the neighbour is a slot.
fn merge_root(sk: &Skeleton, s: usize, r: usize) -> Option<Skeleton> {
    let nb = neighbours(&sk.edges, r);
    if nb.len() != 1 || nb[0] < s {
        return None;
    }
    let w = nb[0];
    let relabel = |v: usize| if v == w { r } else if v > w { v - 1 } else { v };
    let edges = sk
        .edges
        .iter()
        .filter(|&&(a, b)| !((a == r && b == w) || (a == w && b == r)))
        .map(|&(a, b)| (relabel(a), relabel(b)))
        .collect();
    Some(Skeleton { n: sk.n - 1, edges })
}

/// All skeletons of the class, roots possibly interior.
fn skeletons(s: usize, roots: usize) -> Vec<Skeleton> {
    let mut out = Vec::new();
    for sk in leaf_skeletons(s) {
        for mask in 0..(1usize << roots) {
            let mut cur = Some(sk.clone());
            for r in 0..roots {
                if mask & (1 << r) != 0 {
                    cur = cur.and_then(|c| merge_root(&c, s, r));
                }
            }
            if let Some(c) = cur {
                out.push(c);
            }
        }
    }
    out
}

/// Visit every composition of `k` into `parts` nonnegative parts.
fn compositions<F: FnMut(&[usize]) -> Result<()>>(k: usize, parts: usize, f: &mut F) -> Result<()> {
    fn rec<F: FnMut(&[usize]) -> Result<()>>(left: usize, i: usize, buf: &mut Vec<usize>, f: &mut F) -> Result<()> {
        if i + 1 == buf.len() {
            buf[i] = left;
            return f(buf);
        }
        for c in 0..=left {
            buf[i] = c;
            rec(left - c, i + 1, buf, f)?;
        }
        Ok(())
    }
    let mut buf = vec![0; parts];
    rec(k, 0, &mut buf, f)
}

/// Stream every tree of `spec` (not canonicalized) to `visit`; returns the count.
pub fn for_each_tree<F: FnMut(&Tree) -> Result<()>>(spec: &TreeClassSpec, opts: &EnumOptions, mut visit: F) -> Result<usize> {
    let bound = spec.internal_bound();
    if bound > opts.max_internal {
        return Err(Error::SizeGuard(format!(
            "{spec} admits up to {bound} internal vertices, cap is {}",
            opts.max_internal
        )));
    }
    if spec.s == 1 {
        visit(&Tree::single_root())?;
        return Ok(1);
    }
    let (s, roots) = (spec.s, spec.roots());
    let mut count = 0usize;
    for sk in skeletons(s, roots) {
        let mut deg = vec![0usize; sk.n];
        for &(a, b) in &sk.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        let base_v2 = deg.iter().filter(|&&d| d == 2).count();
        let delta = usize::from(deg[0] == 1);
        let k_max = match spec.v2_cap() {
            None if base_v2 == 0 => 0,
            None => continue,
            Some(cap) if cap >= base_v2 + delta => cap - base_v2 - delta,
            Some(_) => continue,
        };
        let e_count = sk.edges.len();
        for k in 0..=k_max {
            compositions(k, e_count, &mut |parts: &[usize]| {
                let mut edges = Vec::with_capacity(e_count + k);
                let mut next = sk.n;
                for (&(a, b), &c) in sk.edges.iter().zip(parts) {
                    let mut prev = a;
                    for _ in 0..c {
                        edges.push((prev, next));
                        prev = next;
                        next += 1;
                    }
                    edges.push((prev, b));
                }
                count += 1;
                visit(&Tree::raw(s, roots, next, edges))
            })?;
        }
    }
    Ok(count)
}

/// Number of trees in the class.
pub fn count_trees(spec: &TreeClassSpec, opts: &EnumOptions) -> Result<usize> {
    for_each_tree(spec, opts, |_| Ok(()))
}

/// All trees of the class in canonical form, sorted by canonical string.
pub fn enumerate_trees(spec: &TreeClassSpec, opts: &EnumOptions) -> Result<Vec<Tree>> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for_each_tree(spec, opts, |t| {
        if out.len() >= opts.max_trees {
            return Err(Error::SizeGuard(format!("{spec} has more than {} trees", opts.max_trees)));
        }
        let c = t.canonical();
        let key = c.canonical_string();
        if !seen.insert(key.clone()) {
            return Err(Error::Convergence { message: format!("duplicate topology {key} generated"), achieved: 0.0 });
        }
        out.push((key, c));
        Ok(())
    })?;
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out.into_iter().map(|(_, t)| t).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(s: usize, l: usize) -> Vec<String> {
        let spec = TreeClassSpec::single(s, l).unwrap();
        enumerate_trees(&spec, &EnumOptions::default()).unwrap().iter().map(|t| t.canonical_string()).collect()
    }

    #[test]
    fn two_point_classes_are_chains() {
        assert_eq!(names(2, 0), vec!["x1(y2)"]);
        assert_eq!(names(2, 1), vec!["x1(y2)", "x1(z(y2))"]);
        assert_eq!(names(2, 2).len(), 5);
    }

    #[test]
    fn three_and_four_point_tree_level() {
        assert_eq!(names(3, 0), vec!["x1(z(y2,y3))"]);
        // Root leaf on a 4-valent vertex, three ways of pairing, root of incidence 3.
        assert_eq!(names(4, 0).len(), 5);
        assert!(names(4, 0).contains(&"x1(y2,y3,y4)".to_string()));
    }

    #[test]
    fn every_tree_validates() {
        for s in 1..=5 {
            for l in 0..=2 {
                let spec = TreeClassSpec::single(s, l).unwrap();
                for t in enumerate_trees(&spec, &EnumOptions::default()).unwrap() {
                    t.validate(&spec).unwrap();
                }
            }
        }
    }

    #[test]
    fn twice_rooted_classes() {
        let spec = TreeClassSpec::new(2, 1, true).unwrap();
        let ts = enumerate_trees(&spec, &EnumOptions::default()).unwrap();
        assert!(ts.iter().any(|t| t.canonical_string() == "x1(x2)"));
        for t in &ts {
            t.validate(&spec).unwrap();
        }
    }

    #[test]
    fn size_guard_refuses_large_classes() {
        let spec = TreeClassSpec::single(6, 4).unwrap();
        let opts = EnumOptions { max_internal: 8, ..Default::default() };
        assert!(matches!(count_trees(&spec, &opts), Err(Error::SizeGuard(_))));
        let small = EnumOptions { max_trees: 3, ..Default::default() };
        assert!(matches!(enumerate_trees(&TreeClassSpec::single(4, 1).unwrap(), &small), Err(Error::SizeGuard(_))));
    }
}
