//! Top-k to threshold conversion and the bounded-k candidate structures.
//!
//! Marked nodes come from grouping g consecutive leaves and closing the group
//! LCAs under pairwise LCA; primes are children of marked nodes. Every marked
//! node carries a logarithmic sketch: the score of its q-th highest stabbed
//! link for q = 1, 2, 4, ... A top-k query at `u` reads the sketch of the
//! highest marked descendant to pick a threshold whose output size z lands in
//! [k, 2k + O(g)], then runs the threshold engine and keeps the exact top-k
//! by linear selection.
//!
//! For k below the base grouping factor, each prime node stores a candidate
//! tree: fringe-links, near-links and the g best far-links of its subtree,
//! compacted into a rank-space Steiner tree that provably contains the top-g
//! stabbed links of every node routed to that prime. Bootstrapping repeats
//! this at grouping factors B*log^(b)(n/B) for b = 1..h.

use std::collections::HashMap;

use thiserror::Error;

use crate::em_threshold::{build_threshold_index, stabs_rec, EmError, LinkRec, ThresholdIndex};
use crate::gst::{NodeId, Topology, DUMMY, ROOT};
use crate::io_model::{IoPhase, IoTape};

#[derive(Debug, Error)]
pub enum TopkError {
    #[error("grouping factor {g} out of range 1..={n}")]
    GroupingOutOfRange { g: u32, n: usize },
    #[error("node {0} is not a prime node")]
    NotPrime(NodeId),
    #[error("k must be >= 1")]
    InvalidK,
    #[error(transparent)]
    Em(#[from] EmError),
}

/// Marked and prime node sets for one grouping factor.
#[derive(Debug, Clone)]
pub struct MarkedSet {
    pub g: u32,
    pub is_marked: Vec<bool>,
    pub marked_list: Vec<NodeId>,
    pub is_prime: Vec<bool>,
    pub prime_list: Vec<NodeId>,
    /// Highest marked descendant-or-self per node; 0 when none exists.
    pub highest_marked_desc: Vec<NodeId>,
    /// Lowest prime ancestor-or-self per node; 0 only for the root.
    pub lowest_prime_anc: Vec<NodeId>,
}

/// Groups every `g` consecutive leaves, marks each group's first/last-leaf
/// LCA, closes the set under pairwise LCA, and always marks the root.
/// Primes are the children of marked nodes.
pub fn select_marked(
    topo: &Topology,
    g: u32,
    lca: &dyn Fn(NodeId, NodeId) -> NodeId,
) -> Result<MarkedSet, TopkError> {
    let n_leaves = topo.leaves.len();
    if g < 1 || g as usize > n_leaves {
        return Err(TopkError::GroupingOutOfRange { g, n: n_leaves });
    }
    let n = topo.node_count();
    let mut marks: Vec<NodeId> = topo
        .leaves
        .chunks(g as usize)
        .map(|grp| lca(grp[0], grp[grp.len() - 1]))
        .collect();
    marks.push(ROOT);
    marks.sort_unstable();
    marks.dedup();
    // One round of consecutive LCAs closes the set under pairwise LCA.
    let extra: Vec<NodeId> = marks.windows(2).map(|w| lca(w[0], w[1])).collect();
    marks.extend(extra);
    marks.sort_unstable();
    marks.dedup();

    let mut is_marked = vec![false; n + 1];
    for &m in &marks {
        is_marked[m as usize] = true;
    }
    let mut is_prime = vec![false; n + 1];
    let mut prime_list = Vec::new();
    for &m in &marks {
        for &c in topo.children(m) {
            is_prime[c as usize] = true;
        }
    }
    for u in 1..=n {
        if is_prime[u] {
            prime_list.push(u as NodeId);
        }
    }

    let mut highest_marked_desc = vec![DUMMY; n + 1];
    for u in (1..=n).rev() {
        if is_marked[u] {
            highest_marked_desc[u] = u as NodeId;
        } else {
            // At most one child subtree holds marked nodes, else their LCA
            // (this node) would be marked.
            for &c in topo.children(u as NodeId) {
                let h = highest_marked_desc[c as usize];
                if h != DUMMY {
                    highest_marked_desc[u] = h;
                    break;
                }
            }
        }
    }
    let mut lowest_prime_anc = vec![DUMMY; n + 1];
    for u in 1..=n {
        lowest_prime_anc[u] = if is_prime[u] {
            u as NodeId
        } else {
            let p = topo.parent[u];
            if p == DUMMY {
                DUMMY
            } else {
                lowest_prime_anc[p as usize]
            }
        };
    }

    Ok(MarkedSet {
        g,
        is_marked,
        marked_list: marks,
        is_prime,
        prime_list,
        highest_marked_desc,
        lowest_prime_anc,
    })
}

/// Per marked node: scores of the q-th highest stabbed link, q = 1, 2, 4, ...
/// capped at the stabbed-link count.
#[derive(Debug, Clone)]
pub struct Sketch {
    /// Node id -> slot in `entries`; u32::MAX when not marked.
    pub slot: Vec<u32>,
    /// `entries[slot][j]` is the (2^j)-th highest stabbed score.
    pub entries: Vec<Vec<u32>>,
}

impl Sketch {
    /// Score of the 2^i-th highest stabbed link at marked node `m`; None when
    /// fewer than 2^i links are stabbed.
    pub fn at(&self, m: NodeId, i: usize) -> Option<u32> {
        let s = self.slot[m as usize];
        if s == u32::MAX {
            return None;
        }
        self.entries[s as usize].get(i).copied()
    }

    pub fn stored_entries(&self) -> usize {
        self.entries.iter().map(|e| e.len()).sum()
    }
}

/// Builds the sketch by running a full threshold query (tau = 1) at each
/// marked node and freezing the power-of-two order statistics.
pub fn build_sketch(
    topo: &Topology,
    links: &[LinkRec],
    marked: &MarkedSet,
    thr: &ThresholdIndex,
) -> Result<Sketch, TopkError> {
    let mut slot = vec![u32::MAX; topo.node_count() + 1];
    let mut entries = Vec::with_capacity(marked.marked_list.len());
    let mut scratch = IoTape::new(thr.block);
    for &m in &marked.marked_list {
        let stabbed = thr.threshold_query(topo, links, m, 1, &mut scratch)?;
        let mut ws: Vec<u32> = stabbed.iter().map(|&i| links[i as usize].w).collect();
        ws.sort_unstable_by(|a, b| b.cmp(a));
        let mut e = Vec::new();
        let mut q = 1usize;
        while q <= ws.len() {
            e.push(ws[q - 1]);
            q <<= 1;
        }
        slot[m as usize] = entries.len() as u32;
        entries.push(e);
    }
    Ok(Sketch { slot, entries })
}

/// Threshold engine plus its conversion sketch at one grouping factor; used
/// for the base structure and nested inside candidate trees.
#[derive(Debug, Clone)]
pub struct Lemma6Index {
    pub thr: ThresholdIndex,
    pub marked: MarkedSet,
    pub sketch: Sketch,
    pub g: u32,
}

impl Lemma6Index {
    pub fn build(
        topo: &Topology,
        links: &[LinkRec],
        block: u32,
        g: u32,
        lca: &dyn Fn(NodeId, NodeId) -> NodeId,
    ) -> Result<Self, TopkError> {
        let thr = build_threshold_index(topo, links, block)?;
        let marked = select_marked(topo, g, lca)?;
        let sketch = build_sketch(topo, links, &marked, &thr)?;
        Ok(Lemma6Index { thr, marked, sketch, g })
    }

    /// Top-k to threshold conversion. Returns the rank-space threshold and a
    /// fallback flag set when `u` has no marked descendant (its subtree then
    /// has O(g) leaves and tau = 1 turns the query into a scan).
    pub fn threshold_for(&self, u: NodeId, k: usize) -> (u32, bool) {
        let u_star = self.marked.highest_marked_desc[u as usize];
        if u_star == DUMMY {
            return (1, true);
        }
        // 2^(i-1) < k + 2g <= 2^i
        let need = k as u64 + 2 * self.g as u64;
        let i = 64 - (need - 1).leading_zeros() as usize;
        match self.sketch.at(u_star, i) {
            Some(tau) => (tau, false),
            None => (1, false), // 2^i exceeds the stabbed count
        }
    }

    /// Exact top-k link ids stabbed by `u` (unsorted): threshold conversion,
    /// threshold query, then linear selection over the z outputs.
    pub fn topk_set(
        &self,
        topo: &Topology,
        links: &[LinkRec],
        u: NodeId,
        k: usize,
        tape: &mut IoTape,
    ) -> Result<Vec<u32>, TopkError> {
        tape.charge_blocks(IoPhase::Conversion, 1); // sketch lookup
        let (tau, _fallback) = self.threshold_for(u, k);
        let mut out = self.thr.threshold_query(topo, links, u, tau, tape)?;
        let z = out.len();
        tape.selection_touched += z as u64;
        tape.charge_words(IoPhase::Selection, 2 * z as u64);
        if z > k {
            out.select_nth_unstable_by_key(k - 1, |&i| std::cmp::Reverse(links[i as usize].w));
            out.truncate(k);
        }
        Ok(out)
    }

    pub fn stored_entries(&self) -> usize {
        self.thr.stored_entries() + self.sketch.stored_entries() + self.marked.marked_list.len()
    }
}

/// Link categories relative to a prime node `u'` and its highest marked
/// descendant `u*`, partitioning the links originating in subtree(u').
#[derive(Debug, Clone, Default)]
pub struct LinkClasses {
    pub fringe: Vec<u32>,
    pub near: Vec<u32>,
    pub far: Vec<u32>,
    pub small: Vec<u32>,
}

/// Classifies every link originating in subtree(u'). Without a marked
/// descendant all of them are fringe links.
pub fn classify_links(
    topo: &Topology,
    links: &[LinkRec],
    marked: &MarkedSet,
    u_prime: NodeId,
) -> Result<LinkClasses, TopkError> {
    if !marked.is_prime[u_prime as usize] {
        return Err(TopkError::NotPrime(u_prime));
    }
    let (lo, hi) = topo.subtree_range(u_prime);
    let ids: Vec<u32> = (0..links.len() as u32)
        .filter(|&i| (lo..=hi).contains(&links[i as usize].origin))
        .collect();
    Ok(classify_ids(topo, links, u_prime, marked.highest_marked_desc[u_prime as usize], &ids))
}

fn classify_ids(
    topo: &Topology,
    links: &[LinkRec],
    u_prime: NodeId,
    u_star: NodeId,
    ids: &[u32],
) -> LinkClasses {
    let mut c = LinkClasses::default();
    let star_range = if u_star == DUMMY { (1, 0) } else { topo.subtree_range(u_star) };
    let in_star = |v: NodeId| u_star != DUMMY && star_range.0 <= v && v <= star_range.1;
    for &i in ids {
        let l = &links[i as usize];
        if !in_star(l.origin) {
            c.fringe.push(i);
        } else if l.target != DUMMY && in_star(l.target) {
            c.small.push(i);
        } else if l.target == DUMMY || topo.is_proper_ancestor(l.target, u_prime) {
            c.far.push(i);
        } else {
            // Inside subtree(u') but outside subtree(u*).
            c.near.push(i);
        }
    }
    c
}

/// Candidate tree of a prime node: fringe and near links plus the g best far
/// links, over the Steiner closure of their endpoints and the whole
/// subtree(u') \ subtree(u*) region, with preorder-preserving local ids.
/// Far links are retargeted to the local dummy parent of u'.
#[derive(Debug, Clone)]
pub struct CandidateTree {
    pub prime: NodeId,
    pub u_star: NodeId,
    pub topo: Topology,
    /// Local node id (1-based) -> GST node id.
    pub gst_node: Vec<NodeId>,
    /// Candidate links in local coordinates (local rank-space scores).
    pub links: Vec<LinkRec>,
    /// Local link index -> global link id.
    pub global_link: Vec<u32>,
    /// Local link ids sorted by score descending (flat scan order).
    pub by_score_desc: Vec<u32>,
    /// Nested conversion structure; None when the record is block-resident
    /// and answered by scanning.
    pub nested: Option<Box<Lemma6Index>>,
}

/// Candidate link ids of a prime node: fringe + near + top-g far by score.
pub fn candidate_links(
    topo: &Topology,
    links: &[LinkRec],
    marked: &MarkedSet,
    u_prime: NodeId,
    g: u32,
) -> Result<Vec<u32>, TopkError> {
    let classes = classify_links(topo, links, marked, u_prime)?;
    Ok(merge_candidates(links, classes, g))
}

fn merge_candidates(links: &[LinkRec], classes: LinkClasses, g: u32) -> Vec<u32> {
    let LinkClasses { fringe, near, mut far, .. } = classes;
    if far.len() > g as usize {
        far.select_nth_unstable_by_key(g as usize - 1, |&i| {
            std::cmp::Reverse(links[i as usize].w)
        });
        far.truncate(g as usize);
    }
    let mut cand = fringe;
    cand.extend(near);
    cand.extend(far);
    cand.sort_unstable();
    cand
}

pub fn build_candidate_tree(
    topo: &Topology,
    links: &[LinkRec],
    marked: &MarkedSet,
    u_prime: NodeId,
    g: u32,
    block: u32,
) -> Result<CandidateTree, TopkError> {
    let classes = classify_links(topo, links, marked, u_prime)?;
    build_candidate_tree_from(topo, links, marked, u_prime, classes, g, block)
}

fn build_candidate_tree_from(
    topo: &Topology,
    links: &[LinkRec],
    marked: &MarkedSet,
    u_prime: NodeId,
    classes: LinkClasses,
    g: u32,
    block: u32,
) -> Result<CandidateTree, TopkError> {
    let u_star = marked.highest_marked_desc[u_prime as usize];
    let cand = merge_candidates(links, classes, g);

    // Kept nodes: the whole region subtree(u') \ subtree(u*), candidate
    // endpoints, and the LCA closure of all of it.
    let mut kept: Vec<NodeId> = Vec::new();
    let (plo, phi) = topo.subtree_range(u_prime);
    if u_star == DUMMY {
        kept.extend(plo..=phi);
    } else {
        let (slo, shi) = topo.subtree_range(u_star);
        kept.extend(plo..slo);
        kept.extend(shi + 1..=phi);
    }
    kept.push(u_prime);
    for &i in &cand {
        let l = &links[i as usize];
        kept.push(l.origin);
        if l.target != DUMMY && !topo.is_proper_ancestor(l.target, u_prime) {
            kept.push(l.target);
        }
    }
    kept.sort_unstable();
    kept.dedup();
    let closure: Vec<NodeId> = kept.windows(2).map(|w| topo.lca_walk(w[0], w[1])).collect();
    kept.extend(closure);
    kept.sort_unstable();
    kept.dedup();
    debug_assert_eq!(kept[0], u_prime);

    // Local preorder ids follow the GST preorder of the kept set; parents are
    // the nearest kept proper ancestors (stack sweep).
    let mut local_of: HashMap<NodeId, u32> = HashMap::with_capacity(kept.len());
    for (i, &v) in kept.iter().enumerate() {
        local_of.insert(v, i as u32 + 1);
    }
    let mut parent = vec![DUMMY; kept.len() + 1];
    let mut stack: Vec<NodeId> = Vec::new();
    for (i, &v) in kept.iter().enumerate() {
        while let Some(&t) = stack.last() {
            if topo.is_ancestor(t, v) {
                break;
            }
            stack.pop();
        }
        parent[i + 1] = stack.last().map_or(DUMMY, |&t| local_of[&t]);
        stack.push(v);
    }
    let ct_topo = Topology::from_parents(parent);

    // Candidate links in local coordinates with local rank-space scores.
    let mut by_w = cand.clone();
    by_w.sort_unstable_by_key(|&i| links[i as usize].w);
    let mut local_w: HashMap<u32, u32> = HashMap::with_capacity(by_w.len());
    for (r, &i) in by_w.iter().enumerate() {
        local_w.insert(i, r as u32 + 1);
    }
    let ct_links: Vec<LinkRec> = cand
        .iter()
        .map(|&i| {
            let l = &links[i as usize];
            let target = if l.target == DUMMY || topo.is_proper_ancestor(l.target, u_prime) {
                DUMMY // local dummy parent of u'
            } else {
                local_of[&l.target]
            };
            LinkRec { origin: local_of[&l.origin], target, w: local_w[&i] }
        })
        .collect();
    let mut by_score_desc: Vec<u32> = (0..ct_links.len() as u32).collect();
    by_score_desc.sort_unstable_by_key(|&i| std::cmp::Reverse(ct_links[i as usize].w));

    // Small records are answered by scanning; otherwise nest the threshold
    // engine plus sketch over the candidate tree.
    let flat = g <= block || ct_links.len() as u32 <= 2 * block || ct_links.is_empty();
    let nested = if flat {
        None
    } else {
        let ct_leaves = ct_topo.leaves.len() as u32;
        let m = ct_leaves as f64;
        let gb = (block as f64 * (m / block as f64).max(2.0).log2()).ceil() as u32;
        let g_nested = gb.clamp(1, ct_leaves);
        Some(Box::new(Lemma6Index::build(
            &ct_topo,
            &ct_links,
            block,
            g_nested,
            &|a, b| ct_topo.lca_walk(a, b),
        )?))
    };

    Ok(CandidateTree {
        prime: u_prime,
        u_star,
        topo: ct_topo,
        gst_node: {
            let mut v = vec![DUMMY; kept.len() + 1];
            for (i, &n) in kept.iter().enumerate() {
                v[i + 1] = n;
            }
            v
        },
        links: ct_links,
        global_link: cand,
        by_score_desc,
        nested,
    })
}

impl CandidateTree {
    /// Exact top-k (unsorted) among the candidate links stabbed by local
    /// node `x`; returns global link ids.
    pub fn topk(&self, x: NodeId, k: usize, tape: &mut IoTape) -> Result<Vec<u32>, TopkError> {
        match &self.nested {
            Some(idx) => {
                let local = idx.topk_set(&self.topo, &self.links, x, k, tape)?;
                Ok(local.iter().map(|&i| self.global_link[i as usize]).collect())
            }
            None => {
                // Block-resident record: scan in score order, filter by
                // stabbing, stop at k.
                tape.charge_words(IoPhase::Equi, 4 * self.links.len() as u64);
                let mut out = Vec::new();
                for &i in &self.by_score_desc {
                    tape.touch_link(self.global_link[i as usize]);
                    if stabs_rec(&self.links[i as usize], x, &self.topo) {
                        out.push(self.global_link[i as usize]);
                        if out.len() == k {
                            break;
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    pub fn stored_entries(&self) -> usize {
        let own = self.links.len() * 2 + self.topo.node_count();
        own + self.nested.as_ref().map_or(0, |n| n.stored_entries())
    }
}

/// One bootstrap level: marked/prime sets at grouping g plus a candidate tree
/// per prime, with per-node routing into the owning tree.
#[derive(Debug, Clone)]
pub struct BootLevel {
    pub g: u32,
    pub marked: MarkedSet,
    pub cts: Vec<CandidateTree>,
    /// Prime node -> index into cts (u32::MAX elsewhere).
    pub ct_of_prime: Vec<u32>,
    /// Per node: its image in the candidate tree of its lowest prime
    /// ancestor (u32::MAX for the root).
    pub ct_node: Vec<u32>,
}

impl BootLevel {
    fn build(
        topo: &Topology,
        links: &[LinkRec],
        g: u32,
        block: u32,
        lca: &dyn Fn(NodeId, NodeId) -> NodeId,
    ) -> Result<Self, TopkError> {
        let marked = select_marked(topo, g, lca)?;
        let n = topo.node_count();
        debug_assert!(links.windows(2).all(|w| w[0].origin <= w[1].origin));
        let origins: Vec<NodeId> = links.iter().map(|l| l.origin).collect();

        let mut cts = Vec::with_capacity(marked.prime_list.len());
        let mut ct_of_prime = vec![u32::MAX; n + 1];
        for &u_prime in &marked.prime_list {
            let (lo, hi) = topo.subtree_range(u_prime);
            let a = origins.partition_point(|&o| o < lo);
            let b = origins.partition_point(|&o| o <= hi);
            let ids: Vec<u32> = (a as u32..b as u32).collect();
            let classes = classify_ids(
                topo,
                links,
                u_prime,
                marked.highest_marked_desc[u_prime as usize],
                &ids,
            );
            let ct = build_candidate_tree_from(topo, links, &marked, u_prime, classes, g, block)?;
            ct_of_prime[u_prime as usize] = cts.len() as u32;
            cts.push(ct);
        }

        // Image of every node inside its routing tree: kept nodes map to
        // themselves; an unkept node is the highest marked descendant of its
        // prime, whose image is the local LCA of the kept nodes below it.
        let mut ct_node = vec![u32::MAX; n + 1];
        let mut local_maps: Vec<HashMap<NodeId, u32>> = Vec::with_capacity(cts.len());
        for ct in &cts {
            let mut m = HashMap::with_capacity(ct.gst_node.len());
            for (i, &v) in ct.gst_node.iter().enumerate().skip(1) {
                m.insert(v, i as u32);
            }
            local_maps.push(m);
        }
        for u in 1..=n {
            let up = marked.lowest_prime_anc[u];
            if up == DUMMY {
                continue; // the root routes to the base structure
            }
            let ci = ct_of_prime[up as usize] as usize;
            if let Some(&x) = local_maps[ci].get(&(u as NodeId)) {
                ct_node[u] = x;
            } else {
                // Only the highest marked descendant can be routed here
                // without being kept; its candidates all originate below it.
                debug_assert_eq!(u as NodeId, cts[ci].u_star);
                let (lo, hi) = topo.subtree_range(u as NodeId);
                let kept = &cts[ci].gst_node[1..];
                let a = kept.partition_point(|&v| v < lo);
                let b = kept.partition_point(|&v| v <= hi);
                if a < b {
                    let anchor = topo.lca_walk(kept[a], kept[b - 1]);
                    ct_node[u] = local_maps[ci][&anchor];
                }
            }
        }
        Ok(BootLevel { g, marked, cts, ct_of_prime, ct_node })
    }

    pub fn stored_entries(&self) -> usize {
        self.cts.iter().map(|c| c.stored_entries()).sum()
    }
}

/// The full external-memory top-k index: base threshold-plus-sketch structure
/// and h bootstrap levels of candidate trees.
#[derive(Debug, Clone)]
pub struct TopKIndex {
    pub block: u32,
    pub h: u32,
    pub base: Lemma6Index,
    pub levels: Vec<BootLevel>,
}

/// Grouping factor of bootstrap level b (1-based): B * log^(b)(n / B),
/// clamped to [1, n] and floored at B once the iterated log bottoms out.
pub fn grouping_factor(n: usize, block: u32, level: u32) -> u32 {
    let mut x = (n as f64) / (block as f64);
    for _ in 0..level {
        if x <= 2.0 {
            return block.clamp(1, n as u32); // log* exhausted
        }
        x = x.log2();
    }
    let g = (block as f64 * x).ceil() as u32;
    g.clamp(1, n as u32)
}

/// Largest h for which the iterated log is still meaningful.
pub fn max_levels(n: usize, block: u32) -> u32 {
    let mut x = (n as f64) / (block as f64);
    let mut h = 0;
    while x > 2.0 && h < 8 {
        x = x.log2();
        h += 1;
    }
    h.max(1)
}

impl TopKIndex {
    pub fn build(
        topo: &Topology,
        links: &[LinkRec],
        block: u32,
        h: u32,
        lca: &dyn Fn(NodeId, NodeId) -> NodeId,
    ) -> Result<Self, TopkError> {
        let n = topo.leaves.len();
        let g1 = grouping_factor(n, block, 1);
        let base = Lemma6Index::build(topo, links, block, g1, lca)?;
        let mut levels = Vec::new();
        let mut prev_g = u32::MAX;
        for b in 1..=h {
            let g = grouping_factor(n, block, b);
            if g >= prev_g {
                break; // iterated log stopped shrinking
            }
            prev_g = g;
            levels.push(BootLevel::build(topo, links, g, block, lca)?);
        }
        Ok(TopKIndex { block, h, base, levels })
    }

    /// Routing: base path for the root or k >= g_1, else the deepest level
    /// whose grouping factor still covers k.
    fn route(&self, u: NodeId, k: usize) -> Option<usize> {
        if u == ROOT || self.levels.is_empty() || k as u64 >= self.levels[0].g as u64 {
            return None;
        }
        let mut pick = None;
        for (i, lvl) in self.levels.iter().enumerate() {
            if k as u64 <= lvl.g as u64 {
                pick = Some(i);
            }
        }
        pick
    }

    /// The k highest-scored links stabbed by `u` (unsorted, exact).
    pub fn topk_query(
        &self,
        topo: &Topology,
        links: &[LinkRec],
        u: NodeId,
        k: usize,
        tape: &mut IoTape,
    ) -> Result<Vec<u32>, TopkError> {
        if k < 1 {
            return Err(TopkError::InvalidK);
        }
        match self.route(u, k) {
            None => self.base.topk_set(topo, links, u, k, tape),
            Some(li) => {
                tape.charge_blocks(IoPhase::Conversion, 1); // routing pointers
                let lvl = &self.levels[li];
                let up = lvl.marked.lowest_prime_anc[u as usize];
                let ct = &lvl.cts[lvl.ct_of_prime[up as usize] as usize];
                let x = lvl.ct_node[u as usize];
                if x == u32::MAX {
                    return Ok(Vec::new()); // no candidate origins below u
                }
                ct.topk(x, k, tape)
            }
        }
    }

    pub fn stored_entries(&self) -> usize {
        self.base.stored_entries()
            + self.levels.iter().map(|l| l.stored_entries()).sum::<usize>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DocumentCollection;
    use crate::gst::GSTree;
    use crate::harness::gen::{random_collection, GenConfig};
    use crate::links::{build_links, stabs, Link, ScoreKind, Scorer};

    fn coll(docs: &[&[u8]]) -> DocumentCollection {
        DocumentCollection::from_docs(
            docs.iter().map(|d| d.to_vec()).collect(),
            (0..docs.len()).map(|i| format!("d{i}")).collect(),
        )
        .unwrap()
    }

    fn recs(links: &[Link]) -> Vec<LinkRec> {
        links.iter().map(LinkRec::from).collect()
    }

    fn gst_lca(t: &GSTree) -> impl Fn(NodeId, NodeId) -> NodeId + '_ {
        |a, b| t.lca_fast(a, b)
    }

    /// Brute-force top-k stabbed link ids at u (by rank-space score).
    fn oracle_topk_ids(topo: &Topology, links: &[Link], u: NodeId, k: usize) -> Vec<u32> {
        let mut ids: Vec<u32> =
            (0..links.len() as u32).filter(|&i| stabs(&links[i as usize], u, topo)).collect();
        ids.sort_unstable_by_key(|&i| std::cmp::Reverse(links[i as usize].w));
        ids.truncate(k);
        ids
    }

    #[test]
    fn marked_set_extremes() {
        let c = coll(&[b"banana", b"ana"]);
        let t = GSTree::build(&c);
        let n = t.leaf_count();
        let m = select_marked(&t.topo, n as u32, &gst_lca(&t)).unwrap();
        assert_eq!(m.marked_list, vec![ROOT]);

        let m1 = select_marked(&t.topo, 1, &gst_lca(&t)).unwrap();
        for u in 1..=t.node_count() as NodeId {
            if t.topo.children(u).len() >= 2 {
                assert!(m1.is_marked[u as usize], "branching node {u} unmarked at g=1");
            }
        }
        assert!(m1.marked_list.len() <= 2 * n);

        assert!(select_marked(&t.topo, 0, &gst_lca(&t)).is_err());
        assert!(select_marked(&t.topo, n as u32 + 1, &gst_lca(&t)).is_err());
    }

    #[test]
    fn marked_set_closure_and_bounds() {
        for seed in 0..5u64 {
            let c = random_collection(GenConfig::new(400, 14, 2 + (seed % 3) as u8, 7 + seed));
            let t = GSTree::build(&c);
            let n = t.leaf_count();
            for g in [2u32, 5, 16, 64] {
                if g as usize > n {
                    continue;
                }
                let m = select_marked(&t.topo, g, &gst_lca(&t)).unwrap();
                assert!(
                    m.marked_list.len() as f64 <= 4.0 * n as f64 / g as f64 + 1.0,
                    "|marked| = {} g = {}",
                    m.marked_list.len()
                    , g
                );
                // Closure under pairwise LCA.
                for &a in &m.marked_list {
                    for &b in &m.marked_list {
                        assert!(m.is_marked[t.lca_fast(a, b) as usize]);
                    }
                }
                // Fringe-leaf bound: <= 2g extra leaves above u*.
                for u in 1..=t.node_count() as NodeId {
                    let us = m.highest_marked_desc[u as usize];
                    if us != DUMMY {
                        let extra = t.topo.size[u as usize] - t.topo.size[us as usize];
                        assert!(extra <= 2 * g, "fringe {extra} at node {u}, g {g}");
                    } else {
                        assert!(t.topo.size[u as usize] < 2 * g);
                    }
                }
                // Primes: unique prime ancestor-or-self for every non-root.
                for u in 2..=t.node_count() as NodeId {
                    assert_ne!(m.lowest_prime_anc[u as usize], DUMMY);
                }
            }
        }
    }

    #[test]
    fn sketch_entries_are_order_statistics() {
        let c = random_collection(GenConfig::new(300, 10, 4, 11));
        let t = GSTree::build(&c);
        let s = Scorer::new(ScoreKind::Frequency, &c).unwrap();
        let links = build_links(&t, &c, &s);
        let lr = recs(&links);
        let thr = build_threshold_index(&t.topo, &lr, 4).unwrap();
        let marked = select_marked(&t.topo, 8, &gst_lca(&t)).unwrap();
        let sk = build_sketch(&t.topo, &lr, &marked, &thr).unwrap();
        for &m in &marked.marked_list {
            let mut ws: Vec<u32> = links
                .iter()
                .filter(|l| stabs(l, m, &t.topo))
                .map(|l| l.w)
                .collect();
            ws.sort_unstable_by(|a, b| b.cmp(a));
            let mut q = 1usize;
            let mut j = 0usize;
            while q <= ws.len() {
                assert_eq!(sk.at(m, j), Some(ws[q - 1]), "node {m} q {q}");
                q <<= 1;
                j += 1;
            }
            assert_eq!(sk.at(m, j), None);
        }
    }

    #[test]
    fn threshold_for_formula() {
        // k=3, g=4: k+2g = 11, i = 4 (use q = 16).
        let need = 3u64 + 2 * 4;
        let i = 64 - (need - 1).leading_zeros() as usize;
        assert_eq!(i, 4);
    }

    #[test]
    fn conversion_z_bounds_hold() {
        for seed in 0..4u64 {
            let c = random_collection(GenConfig::new(600, 20, 2 + (seed % 3) as u8, 40 + seed));
            let t = GSTree::build(&c);
            let s = Scorer::new(ScoreKind::Frequency, &c).unwrap();
            let links = build_links(&t, &c, &s);
            let lr = recs(&links);
            let block = 4u32;
            let g = grouping_factor(t.leaf_count(), block, 1);
            let idx = Lemma6Index::build(&t.topo, &lr, block, g, &gst_lca(&t)).unwrap();
            let mut tape = IoTape::new(block);
            for u in (1..=t.node_count() as NodeId).step_by(3) {
                let ndoc = links.iter().filter(|l| stabs(l, u, &t.topo)).count();
                for k in [1usize, 2, ndoc / 2, ndoc, 2 * ndoc] {
                    if k < 1 {
                        continue;
                    }
                    let (tau, _) = idx.threshold_for(u, k);
                    let z = idx.thr.threshold_query(&t.topo, &lr, u, tau, &mut tape).unwrap().len();
                    assert!(z >= k.min(ndoc), "z {z} < min(k,ndoc) {k} {ndoc}");
                    assert!(z <= 2 * (k + 2 * g as usize), "z {z} k {k} g {g}");
                }
            }
        }
    }

    #[test]
    fn classify_respects_lemma8_bounds_and_partitions() {
        for seed in 0..4u64 {
            let c = random_collection(GenConfig::new(500, 15, 2, 90 + seed));
            let t = GSTree::build(&c);
            let s = Scorer::new(ScoreKind::Frequency, &c).unwrap();
            let links = build_links(&t, &c, &s);
            let lr = recs(&links);
            for g in [4u32, 16] {
                let marked = select_marked(&t.topo, g, &gst_lca(&t)).unwrap();
                for &up in &marked.prime_list {
                    let cls = classify_links(&t.topo, &lr, &marked, up).unwrap();
                    let u_star = marked.highest_marked_desc[up as usize];
                    if u_star == DUMMY {
                        assert!(cls.near.is_empty() && cls.far.is_empty() && cls.small.is_empty());
                        assert!(cls.fringe.len() as u32 <= 2 * t.topo.size[up as usize]);
                    } else {
                        assert!(cls.fringe.len() as u32 <= 4 * g, "fringe {} g {g}", cls.fringe.len());
                        assert!(cls.near.len() as u32 <= 4 * g, "near {} g {g}", cls.near.len());
                    }
                    // Exhaustive partition of subtree-originating links.
                    let (lo, hi) = t.topo.subtree_range(up);
                    let total = lr.iter().filter(|l| lo <= l.origin && l.origin <= hi).count();
                    assert_eq!(
                        cls.fringe.len() + cls.near.len() + cls.far.len() + cls.small.len(),
                        total
                    );
                }
                // Not-prime error.
                if let Some(np) =
                    (1..=t.node_count() as NodeId).find(|&u| !marked.is_prime[u as usize])
                {
                    assert!(classify_links(&t.topo, &lr, &marked, np).is_err());
                }
            }
        }
    }

    #[test]
    fn candidate_tree_preserves_preorder_and_lemma9() {
        for seed in 0..3u64 {
            let c = random_collection(GenConfig::new(400, 12, 2 + seed as u8, 123 + seed));
            let t = GSTree::build(&c);
            let s = Scorer::new(ScoreKind::Frequency, &c).unwrap();
            let links = build_links(&t, &c, &s);
            let lr = recs(&links);
            let g = 8u32;
            let block = 2u32;
            let marked = select_marked(&t.topo, g, &gst_lca(&t)).unwrap();
            for &up in &marked.prime_list {
                let ct = build_candidate_tree(&t.topo, &lr, &marked, up, g, block).unwrap();
                // Preorder preservation over kept nodes.
                for w in ct.gst_node[1..].windows(2) {
                    assert!(w[0] < w[1]);
                }
                // Candidate set covers the true top-g of every routed node.
                for u in 1..=t.node_count() as NodeId {
                    if marked.lowest_prime_anc[u as usize] != up {
                        continue;
                    }
                    let want = oracle_topk_ids(&t.topo, &links, u, g as usize);
                    for id in want {
                        assert!(
                            ct.global_link.contains(&id),
                            "prime {up}: top-{g} link {id} of node {u} missing"
                        );
                    }
                }
                // Compaction: a kept node with a single child must be a
                // Steiner terminal (region node or a candidate endpoint);
                // pure closure nodes always branch.
                let mut terminals: std::collections::HashSet<NodeId> =
                    std::collections::HashSet::new();
                terminals.insert(up);
                let (plo, phi) = t.topo.subtree_range(up);
                let u_star = marked.highest_marked_desc[up as usize];
                for v in plo..=phi {
                    if u_star == DUMMY || !t.topo.is_ancestor(u_star, v) {
                        terminals.insert(v);
                    }
                }
                for &gi in &ct.global_link {
                    terminals.insert(lr[gi as usize].origin);
                    terminals.insert(lr[gi as usize].target);
                }
                for v in 2..=ct.topo.node_count() as NodeId {
                    if ct.topo.children(v).len() == 1 {
                        assert!(
                            terminals.contains(&ct.gst_node[v as usize]),
                            "unary non-terminal kept node {v}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn small_grouping_records_stay_flat() {
        let c = random_collection(GenConfig::new(300, 10, 4, 5));
        let t = GSTree::build(&c);
        let s = Scorer::new(ScoreKind::Frequency, &c).unwrap();
        let links = build_links(&t, &c, &s);
        let lr = recs(&links);
        let block = 16u32;
        let marked = select_marked(&t.topo, block, &gst_lca(&t)).unwrap();
        for &up in marked.prime_list.iter().take(10) {
            let ct = build_candidate_tree(&t.topo, &lr, &marked, up, block, block).unwrap();
            assert!(ct.nested.is_none(), "g <= B must store a flat record");
        }
    }

    #[test]
    fn topk_query_matches_oracle_on_all_routes() {
        for seed in 0..4u64 {
            let alpha = [2u8, 4, 26][seed as usize % 3];
            let c = random_collection(GenConfig::new(500, 18, alpha, 321 + seed));
            let t = GSTree::build(&c);
            for kind in [ScoreKind::Frequency, ScoreKind::MinDist] {
                let s = Scorer::new(kind, &c).unwrap();
                let links = build_links(&t, &c, &s);
                let lr = recs(&links);
                let idx = TopKIndex::build(&t.topo, &lr, 4, 2, &gst_lca(&t)).unwrap();
                let mut tape = IoTape::new(4);
                for u in 1..=t.node_count() as NodeId {
                    let ndoc = links.iter().filter(|l| stabs(l, u, &t.topo)).count();
                    for k in [1usize, 2, ndoc.max(1), 2 * ndoc.max(1), 200] {
                        let mut got = idx.topk_query(&t.topo, &lr, u, k, &mut tape).unwrap();
                        let mut want = oracle_topk_ids(&t.topo, &links, u, k);
                        got.sort_unstable();
                        want.sort_unstable();
                        assert_eq!(got, want, "u={u} k={k} kind={kind:?} seed={seed}");
                    }
                }
                assert!(idx.topk_query(&t.topo, &lr, ROOT, 0, &mut tape).is_err());
            }
        }
    }

    #[test]
    fn spec_toy_examples() {
        let c = coll(&[b"banana", b"ana"]);
        let t = GSTree::build(&c);
        let s = Scorer::new(ScoreKind::Frequency, &c).unwrap();
        let links = build_links(&t, &c, &s);
        let lr = recs(&links);
        let idx = TopKIndex::build(&t.topo, &lr, 2, 2, &gst_lca(&t)).unwrap();
        let u = t.locus(b"ana").unwrap().unwrap();
        let mut tape = IoTape::new(2);

        let got = idx.topk_query(&t.topo, &lr, u, 1, &mut tape).unwrap();
        assert_eq!(got.len(), 1);
        let l = &links[got[0] as usize];
        assert_eq!((l.doc, l.raw), (1, 2)); // doc 1, frequency 2

        let got = idx.topk_query(&t.topo, &lr, u, 5, &mut tape).unwrap();
        let docs: std::collections::HashSet<u32> =
            got.iter().map(|&i| links[i as usize].doc).collect();
        assert_eq!(docs, [1u32, 2].into_iter().collect());

        // k=1 at the root under static weights: the max-weight document.
        let s = Scorer::with_static_weights(&c, vec![3, 12]).unwrap();
        let links = build_links(&t, &c, &s);
        let lr = recs(&links);
        let idx = TopKIndex::build(&t.topo, &lr, 2, 2, &gst_lca(&t)).unwrap();
        let got = idx.topk_query(&t.topo, &lr, ROOT, 1, &mut tape).unwrap();
        assert_eq!(links[got[0] as usize].doc, 2);
    }

    #[test]
    fn routing_is_total_and_unique() {
        let c = random_collection(GenConfig::new(800, 20, 4, 9));
        let t = GSTree::build(&c);
        let s = Scorer::new(ScoreKind::Frequency, &c).unwrap();
        let links = build_links(&t, &c, &s);
        let lr = recs(&links);
        let idx = TopKIndex::build(&t.topo, &lr, 4, 3, &gst_lca(&t)).unwrap();
        let u = t.node_count() as NodeId / 2;
        for k in 1..=(2 * idx.base.g as usize) {
            // route() picks base or exactly one level.
            let r = idx.route(u, k);
            match r {
                None => assert!(k as u64 >= idx.levels[0].g as u64 || u == ROOT),
                Some(i) => {
                    assert!(k as u64 <= idx.levels[i].g as u64);
                    if i + 1 < idx.levels.len() {
                        assert!(k as u64 > idx.levels[i + 1].g as u64);
                    }
                }
            }
        }
    }
}
