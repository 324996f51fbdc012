//! Document marking and the link table.
//!
//! Every node/document pair `(u, d)` with `u` marked by `d` contributes one
//! link: origin `u`, target the lowest proper ancestor of `u` marked with
//! `d` (the dummy node 0 when none exists), and a score derived from the
//! occurrence positions of `prefix(u)` inside `d`. For any query node `u` and
//! any document `d` occurring below it, exactly one link with doc `d` is
//! stabbed by `u`, and its score is the score of `d` for `prefix(u)` — the
//! whole index is built on that.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DocId, DocumentCollection};
use crate::gst::{GSTree, NodeId, Topology, DUMMY};

#[derive(Debug, Error)]
pub enum LinksError {
    #[error("no occurrences")]
    NoOccurrences,
    #[error("static scorer requires per-document weights")]
    MissingWeights,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    /// Number of (overlapping) occurrences of the pattern in the document.
    Frequency,
    /// Negated smallest gap between two consecutive occurrence offsets;
    /// documents with a single occurrence score the sentinel -(n+1).
    MinDist,
    /// Fixed per-document weight, independent of the occurrence positions.
    Static,
}

#[derive(Debug, Clone)]
pub struct Scorer {
    pub kind: ScoreKind,
    static_weights: Vec<i64>,
    /// Collection length n; mindist sentinel is -(n+1).
    n: i64,
}

impl Scorer {
    pub fn new(kind: ScoreKind, collection: &DocumentCollection) -> Result<Self, LinksError> {
        if kind == ScoreKind::Static {
            return Err(LinksError::MissingWeights);
        }
        Ok(Scorer { kind, static_weights: Vec::new(), n: collection.total_len() as i64 })
    }

    pub fn with_static_weights(
        collection: &DocumentCollection,
        weights: Vec<i64>,
    ) -> Result<Self, LinksError> {
        if weights.len() != collection.doc_count() {
            return Err(LinksError::MissingWeights);
        }
        Ok(Scorer {
            kind: ScoreKind::Static,
            static_weights: weights,
            n: collection.total_len() as i64,
        })
    }

    pub fn static_weights(&self) -> &[i64] {
        &self.static_weights
    }

    /// Raw score for a non-empty, strictly increasing occurrence-offset set.
    pub fn score(&self, doc: DocId, offsets: &[u32]) -> Result<i64, LinksError> {
        if offsets.is_empty() {
            return Err(LinksError::NoOccurrences);
        }
        Ok(match self.kind {
            ScoreKind::Frequency => offsets.len() as i64,
            ScoreKind::MinDist => {
                if offsets.len() < 2 {
                    -(self.n + 1)
                } else {
                    let gap =
                        offsets.windows(2).map(|w| (w[1] - w[0]) as i64).min().expect("len >= 2");
                    -gap
                }
            }
            ScoreKind::Static => self.static_weights[(doc - 1) as usize],
        })
    }

    fn from_parts(kind: ScoreKind, static_weights: Vec<i64>, n: i64) -> Self {
        Scorer { kind, static_weights, n }
    }

    pub(crate) fn rebuild(kind: ScoreKind, weights: Vec<i64>, n: usize) -> Self {
        Self::from_parts(kind, weights, n as i64)
    }
}

/// One link quadruple. `w` is the rank-space score (a permutation of
/// 1..=L over the whole table); `raw` is kept for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Link {
    pub origin: NodeId,
    pub target: NodeId,
    pub doc: DocId,
    pub w: u32,
    pub raw: i64,
}

/// Per-node document marks. The dummy node 0 is marked with every document.
#[derive(Debug, Clone)]
pub struct Marking {
    per_node: Vec<Vec<DocId>>,
    doc_count: DocId,
}

impl Marking {
    /// Documents marking node `u` (ascending). Node 0 reports all documents.
    pub fn docs_at(&self, u: NodeId) -> Vec<DocId> {
        if u == DUMMY {
            (1..=self.doc_count).collect()
        } else {
            self.per_node[u as usize].clone()
        }
    }

    pub fn is_marked(&self, u: NodeId, d: DocId) -> bool {
        if u == DUMMY {
            return d >= 1 && d <= self.doc_count;
        }
        self.per_node[u as usize].binary_search(&d).is_ok()
    }

    pub fn total_marks(&self) -> usize {
        self.per_node.iter().map(|v| v.len()).sum()
    }
}

/// Marks each leaf with its owning document and each internal node with every
/// document for which it is the LCA of two marked leaves.
pub fn mark_documents(tree: &GSTree, collection: &DocumentCollection) -> Marking {
    let n_nodes = tree.node_count();
    let mut per_node: Vec<Vec<DocId>> = vec![Vec::new(); n_nodes + 1];
    for leaves in per_doc_leaves(tree, collection) {
        // LCAs of preorder-adjacent leaves cover all pairwise LCAs.
        let d = tree.leaf_doc[leaves[0] as usize];
        let mut marks: Vec<NodeId> = leaves.clone();
        for w in leaves.windows(2) {
            marks.push(tree.lca_fast(w[0], w[1]));
        }
        marks.sort_unstable();
        marks.dedup();
        for m in marks {
            per_node[m as usize].push(d);
        }
    }
    for v in per_node.iter_mut() {
        v.sort_unstable();
        v.dedup();
    }
    Marking { per_node, doc_count: collection.doc_count() as DocId }
}

/// Leaves of each document in preorder; index 0 holds doc 1.
fn per_doc_leaves(tree: &GSTree, collection: &DocumentCollection) -> Vec<Vec<NodeId>> {
    let mut per_doc: Vec<Vec<NodeId>> = vec![Vec::new(); collection.doc_count()];
    for &leaf in &tree.topo.leaves {
        let d = tree.leaf_doc[leaf as usize];
        per_doc[(d - 1) as usize].push(leaf);
    }
    per_doc
}

/// Generates the full link table for a marking: one link per marked
/// (node, document) pair, scored from the occurrence offsets under the node.
/// Links come out sorted by (origin, doc) with rank-space scores assigned.
pub fn generate_links(
    tree: &GSTree,
    collection: &DocumentCollection,
    marking: &Marking,
    scorer: &Scorer,
) -> Vec<Link> {
    let mut links: Vec<Link> = Vec::new();
    let mut marks_of_doc: Vec<Vec<NodeId>> = vec![Vec::new(); collection.doc_count()];
    for u in 1..=tree.node_count() as NodeId {
        for &d in &marking.per_node[u as usize] {
            marks_of_doc[(d - 1) as usize].push(u);
        }
    }

    for (di, marks) in marks_of_doc.iter().enumerate() {
        let d = (di + 1) as DocId;
        // The marked set is LCA-closed, so a stack sweep in preorder builds
        // the nesting tree: parent = nearest marked proper ancestor.
        let mut parent_of = vec![DUMMY; marks.len()];
        let mut stack: Vec<usize> = Vec::new();
        for (i, &m) in marks.iter().enumerate() {
            while let Some(&top) = stack.last() {
                if tree.topo.is_ancestor(marks[top], m) {
                    break;
                }
                stack.pop();
            }
            parent_of[i] = stack.last().map_or(DUMMY, |&t| marks[t]);
            stack.push(i);
        }

        // Occurrence sets bottom-up with smaller-into-larger merging; the
        // minimum adjacent gap is maintained incrementally for mindist.
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); marks.len()];
        for (i, &p) in parent_of.iter().enumerate() {
            if p != DUMMY {
                let pi = marks.partition_point(|&m| m < p) ;
                debug_assert_eq!(marks[pi], p);
                children[pi].push(i);
            }
        }
        let mut occ: Vec<Option<(BTreeSet<u32>, u32)>> = (0..marks.len()).map(|_| None).collect();
        for i in (0..marks.len()).rev() {
            let m = marks[i];
            let (mut set, mut gap) = if tree.topo.is_leaf(m) {
                debug_assert!(children[i].is_empty());
                (BTreeSet::from([tree.leaf_off[m as usize]]), u32::MAX)
            } else {
                (BTreeSet::new(), u32::MAX)
            };
            for &c in &children[i] {
                let (cset, cgap) = occ[c].take().expect("child computed");
                let (mut big, small, bgap, sgap) = if cset.len() > set.len() {
                    (cset, std::mem::take(&mut set), cgap, gap)
                } else {
                    (set, cset, gap, cgap)
                };
                gap = bgap.min(sgap);
                for x in small {
                    if let Some(&p) = big.range(..x).next_back() {
                        gap = gap.min(x - p);
                    }
                    if let Some(&s) = big.range(x + 1..).next() {
                        gap = gap.min(s - x);
                    }
                    big.insert(x);
                }
                set = big;
            }
            let raw = match scorer.kind {
                ScoreKind::Frequency => set.len() as i64,
                ScoreKind::MinDist => {
                    if set.len() < 2 {
                        -(collection.total_len() as i64 + 1)
                    } else {
                        -(gap as i64)
                    }
                }
                ScoreKind::Static => scorer.static_weights[di],
            };
            links.push(Link { origin: m, target: parent_of[i], doc: d, w: 0, raw });
            occ[i] = Some((set, gap));
        }
    }

    links.sort_unstable_by_key(|l| (l.origin, l.doc));
    reduce_scores_rank_space(&mut links);
    links
}

/// Replaces raw scores by a permutation of 1..=L, order-preserving on raw
/// scores with ties broken so that smaller (doc, origin) wins the higher rank.
pub fn reduce_scores_rank_space(links: &mut [Link]) {
    let mut order: Vec<u32> = (0..links.len() as u32).collect();
    order.sort_unstable_by(|&a, &b| {
        let (la, lb) = (&links[a as usize], &links[b as usize]);
        la.raw
            .cmp(&lb.raw)
            .then_with(|| (lb.doc, lb.origin).cmp(&(la.doc, la.origin)))
    });
    for (rank0, &i) in order.iter().enumerate() {
        links[i as usize].w = rank0 as u32 + 1;
    }
}

/// Link stabbing test: the origin lies in `u`'s subtree and the target is a
/// proper ancestor of `u` (the dummy counts as an ancestor of every node).
pub fn stabs(link: &Link, u: NodeId, topo: &Topology) -> bool {
    let (lo, hi) = topo.subtree_range(u);
    lo <= link.origin && link.origin <= hi && topo.is_proper_ancestor(link.target, u)
}

/// Convenience: marking plus link generation in one call.
pub fn build_links(
    tree: &GSTree,
    collection: &DocumentCollection,
    scorer: &Scorer,
) -> Vec<Link> {
    let marking = mark_documents(tree, collection);
    generate_links(tree, collection, &marking, scorer)
}
