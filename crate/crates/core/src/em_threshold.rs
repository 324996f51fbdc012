//! Threshold engine: given a query node and a score threshold, report every
//! link stabbed by the node with score at or above the threshold, in blocked
//! I/O proportional to log(n/B) plus output/B.
//!
//! Nodes get a rank from their subtree leaf count; links inherit the rank of
//! their target. Relative to a query node, lower-ranked links can never be
//! stabbed and are never inspected; equal-ranked links are answered by
//! interval stabbing inside the query node's component; higher-ranked links
//! are answered by one 3-sided range query per rank, because a higher-ranked
//! link originating below the query node is always stabbed by it.
//!
//! Components: rank-0 components are maximal bottom subtrees (at most B
//! leaves) holding a scannable list of their originating links. Components of
//! rank >= 1 are downward paths. The rank formula allows a node to share its
//! rank with two children in corner cases, so an equal-rank region is not
//! always a path; regions are split into heavy paths and a link's stabbing
//! span is stored as one interval per path it crosses, which keeps the
//! path-local stabbing reduction exact.

use thiserror::Error;

use crate::geom::{PersistentStabbing, RankDict, StabStream, ThreeSided};
use crate::gst::{NodeId, Topology, DUMMY, ROOT};
use crate::io_model::{IoPhase, IoTape};
use crate::links::Link;

#[derive(Debug, Error)]
pub enum EmError {
    #[error("invalid block size {0}")]
    InvalidBlock(u32),
    #[error("invalid threshold {tau}; rank space is 1..={max}")]
    InvalidThreshold { tau: u32, max: u32 },
    #[error("invalid node id {0}")]
    InvalidNode(NodeId),
    #[error("link target {target} not in component {comp}")]
    TargetNotInComponent { target: NodeId, comp: u32 },
}

/// Minimal link view the engine indexes: origin, target, rank-space score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkRec {
    pub origin: NodeId,
    pub target: NodeId,
    pub w: u32,
}

impl From<&Link> for LinkRec {
    fn from(l: &Link) -> Self {
        LinkRec { origin: l.origin, target: l.target, w: l.w }
    }
}

pub fn stabs_rec(l: &LinkRec, u: NodeId, topo: &Topology) -> bool {
    let (lo, hi) = topo.subtree_range(u);
    lo <= l.origin && l.origin <= hi && topo.is_proper_ancestor(l.target, u)
}

/// rank(u) = floor(log2(ceil(size(u) / B))).
pub fn rank_for_size(size: u32, block: u32) -> u8 {
    let q = size.div_ceil(block).max(1);
    q.ilog2() as u8
}

#[derive(Debug, Clone)]
pub struct RankAssignment {
    pub block: u32,
    /// Per node; slot 0 is unused (the dummy ranks as rank_max).
    pub node_rank: Vec<u8>,
    pub rank_max: u8,
}

pub fn assign_ranks(topo: &Topology, block: u32) -> Result<RankAssignment, EmError> {
    if block < 1 {
        return Err(EmError::InvalidBlock(block));
    }
    let mut node_rank = vec![0u8; topo.node_count() + 1];
    for u in 1..=topo.node_count() {
        node_rank[u] = rank_for_size(topo.size[u], block);
    }
    let rank_max = node_rank[ROOT as usize];
    Ok(RankAssignment { block, node_rank, rank_max })
}

impl RankAssignment {
    /// Links targeting the dummy live at the maximum rank.
    pub fn link_rank(&self, target: NodeId) -> u8 {
        if target == DUMMY {
            self.rank_max
        } else {
            self.node_rank[target as usize]
        }
    }
}

#[derive(Debug, Clone)]
pub struct Component {
    pub rank: u8,
    pub top: NodeId,
    /// Path order for rank >= 1 (top first); preorder for rank 0.
    pub members: Vec<NodeId>,
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub comps: Vec<Component>,
    pub comp_of: Vec<u32>,
    /// Position of each node along its component path (rank >= 1).
    pub pos_in_comp: Vec<u32>,
}

/// Splits the tree into components: maximal connected rank-0 subtrees, and
/// heavy paths through the equal-rank regions at rank >= 1.
pub fn decompose(topo: &Topology, ranks: &RankAssignment) -> Decomposition {
    let n = topo.node_count();
    // Designated continuation child: the largest-subtree child of equal rank.
    let mut heavy = vec![DUMMY; n + 1];
    for u in 1..=n {
        let r = ranks.node_rank[u];
        if r == 0 {
            continue;
        }
        let mut best = DUMMY;
        for &c in topo.children(u as NodeId) {
            if ranks.node_rank[c as usize] == r
                && (best == DUMMY || topo.size[c as usize] > topo.size[best as usize])
            {
                best = c;
            }
        }
        heavy[u] = best;
    }

    let mut comps: Vec<Component> = Vec::new();
    let mut comp_of = vec![u32::MAX; n + 1];
    let mut pos_in_comp = vec![0u32; n + 1];
    for u in 1..=n {
        let p = topo.parent[u];
        let r = ranks.node_rank[u];
        let join = p != DUMMY
            && ranks.node_rank[p as usize] == r
            && (r == 0 || heavy[p as usize] == u as NodeId);
        if join {
            let c = comp_of[p as usize];
            comp_of[u] = c;
            pos_in_comp[u] = comps[c as usize].members.len() as u32;
            comps[c as usize].members.push(u as NodeId);
        } else {
            comp_of[u] = comps.len() as u32;
            pos_in_comp[u] = 0;
            comps.push(Component { rank: r, top: u as NodeId, members: vec![u as NodeId] });
        }
    }
    Decomposition { comps, comp_of, pos_in_comp }
}

/// Lowest ancestor-or-self of the link's origin inside `comp`. Requires the
/// link's target to lie in the component (rank >= 1), or the dummy target
/// with the root's component.
pub fn pseudo_origin(
    topo: &Topology,
    decomp: &Decomposition,
    link: &LinkRec,
    comp: u32,
) -> Result<NodeId, EmError> {
    let in_comp = if link.target == DUMMY {
        decomp.comp_of[ROOT as usize] == comp
    } else {
        decomp.comp_of[link.target as usize] == comp
    };
    if !in_comp {
        return Err(EmError::TargetNotInComponent { target: link.target, comp });
    }
    let mut v = link.origin;
    while v != DUMMY {
        if decomp.comp_of[v as usize] == comp {
            return Ok(v);
        }
        v = topo.parent[v as usize];
    }
    Err(EmError::TargetNotInComponent { target: link.target, comp })
}

/// Per-rank link group: links ordered by origin (OR) and by score (TH), the
/// two conversion dictionaries, and the 3-sided structure over (origin
/// position, score position).
#[derive(Debug, Clone)]
pub struct RankGroup {
    /// Link ids sorted by (origin, w); parallel to `or_origins`.
    pub or_links: Vec<u32>,
    pub or_origins: Vec<u32>,
    /// Link ids sorted by score ascending; parallel to `th_scores`.
    pub th_links: Vec<u32>,
    pub th_scores: Vec<u32>,
    pub dict_origin: RankDict,
    pub dict_score: RankDict,
    pub tree3: ThreeSided,
}

impl RankGroup {
    pub fn len(&self) -> usize {
        self.or_links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.or_links.is_empty()
    }

    /// Maximal 0-based subrange [a, b) of OR with origins inside [lo, hi].
    pub fn origin_range(&self, lo: NodeId, hi: NodeId) -> (usize, usize) {
        (self.dict_origin.rank_of(lo as u64), self.dict_origin.rank_of(hi as u64 + 1))
    }

    /// Minimal 0-based TH position whose score is >= tau.
    pub fn score_floor(&self, tau: u32) -> usize {
        self.dict_score.rank_of(tau as u64)
    }
}

#[derive(Debug, Clone)]
pub struct ThresholdIndex {
    pub block: u32,
    pub ranks: RankAssignment,
    pub decomp: Decomposition,
    /// Originating links per rank-0 component (parallel to decomp.comps).
    pub comp_lists: Vec<Vec<u32>>,
    /// Stabbing structure per rank >= 1 component with incident spans.
    pub comp_stab: Vec<Option<PersistentStabbing>>,
    /// Groups for ranks 1..=rank_max; index r-1.
    pub groups: Vec<RankGroup>,
    pub link_count: usize,
}

pub fn build_threshold_index(
    topo: &Topology,
    links: &[LinkRec],
    block: u32,
) -> Result<ThresholdIndex, EmError> {
    let ranks = assign_ranks(topo, block)?;
    let decomp = decompose(topo, &ranks);
    let n = topo.node_count();

    let mut comp_lists: Vec<Vec<u32>> = vec![Vec::new(); decomp.comps.len()];
    for (i, l) in links.iter().enumerate() {
        if ranks.node_rank[l.origin as usize] == 0 {
            comp_lists[decomp.comp_of[l.origin as usize] as usize].push(i as u32);
        }
    }

    // Pseudo-origins: deepest ancestor-or-self of each origin at the link's
    // rank, batched over one DFS that tracks the current chain per rank.
    let mut origin_start = vec![0u32; n + 2];
    for l in links {
        origin_start[l.origin as usize + 1] += 1;
    }
    for i in 1..origin_start.len() {
        origin_start[i] += origin_start[i - 1];
    }
    let mut by_origin = vec![0u32; links.len()];
    {
        let mut fill = origin_start.clone();
        for (i, l) in links.iter().enumerate() {
            by_origin[fill[l.origin as usize] as usize] = i as u32;
            fill[l.origin as usize] += 1;
        }
    }
    let mut pseudo = vec![DUMMY; links.len()];
    let mut last_at_rank = vec![DUMMY; ranks.rank_max as usize + 1];
    let mut stack: Vec<(NodeId, usize, NodeId)> = Vec::new(); // (node, child idx, saved)
    let push_node = |u: NodeId,
                     last_at_rank: &mut Vec<NodeId>,
                     stack: &mut Vec<(NodeId, usize, NodeId)>,
                     pseudo: &mut Vec<NodeId>| {
        let r = ranks.node_rank[u as usize] as usize;
        stack.push((u, 0, last_at_rank[r]));
        last_at_rank[r] = u;
        for k in origin_start[u as usize]..origin_start[u as usize + 1] {
            let li = by_origin[k as usize] as usize;
            let lr = ranks.link_rank(links[li].target) as usize;
            pseudo[li] = last_at_rank[lr];
        }
    };
    if n > 0 {
        push_node(ROOT, &mut last_at_rank, &mut stack, &mut pseudo);
        while let Some(&mut (u, ref mut ci, saved)) = stack.last_mut() {
            let kids = topo.children(u);
            if *ci < kids.len() {
                let c = kids[*ci];
                *ci += 1;
                push_node(c, &mut last_at_rank, &mut stack, &mut pseudo);
            } else {
                last_at_rank[ranks.node_rank[u as usize] as usize] = saved;
                stack.pop();
            }
        }
    }

    // Stab spans: every link whose rank is >= 1 is alive on the chain from
    // just below its target down to its pseudo-origin; record one interval
    // per component path the chain crosses.
    let mut comp_intervals: Vec<Vec<(i64, i64, u64, u32)>> = vec![Vec::new(); decomp.comps.len()];
    for (i, l) in links.iter().enumerate() {
        let r = ranks.link_rank(l.target);
        if r == 0 {
            continue;
        }
        let s = pseudo[i];
        debug_assert_ne!(s, DUMMY, "a rank-r ancestor exists for every rank-r link");
        if s == l.target {
            continue; // empty span: nothing in the region stabs this link
        }
        let mut cur = s;
        loop {
            let c = decomp.comp_of[cur as usize] as usize;
            let top = decomp.comps[c].top;
            let hi = decomp.pos_in_comp[cur as usize] as i64;
            if l.target != DUMMY && decomp.comp_of[l.target as usize] as usize == c {
                let lo = decomp.pos_in_comp[l.target as usize] as i64 + 1;
                debug_assert!(lo <= hi);
                comp_intervals[c].push((lo, hi, l.w as u64, i as u32));
                break;
            }
            comp_intervals[c].push((0, hi, l.w as u64, i as u32));
            let up = topo.parent[top as usize];
            if up == DUMMY || (l.target != DUMMY && up == l.target) {
                break;
            }
            debug_assert_eq!(ranks.node_rank[up as usize], r, "chain stays inside the rank");
            cur = up;
        }
    }
    let comp_stab: Vec<Option<PersistentStabbing>> = comp_intervals
        .into_iter()
        .map(|iv| if iv.is_empty() { None } else { Some(PersistentStabbing::new(&iv)) })
        .collect();

    // Per-rank groups over (origin, score).
    let mut groups = Vec::with_capacity(ranks.rank_max as usize);
    for r in 1..=ranks.rank_max {
        let ids: Vec<u32> = (0..links.len() as u32)
            .filter(|&i| ranks.link_rank(links[i as usize].target) == r)
            .collect();
        let mut or_links = ids.clone();
        or_links.sort_unstable_by_key(|&i| (links[i as usize].origin, links[i as usize].w));
        let or_origins: Vec<u32> = or_links.iter().map(|&i| links[i as usize].origin).collect();
        let mut th_links = ids;
        th_links.sort_unstable_by_key(|&i| links[i as usize].w);
        let th_scores: Vec<u32> = th_links.iter().map(|&i| links[i as usize].w).collect();
        let mut th_pos = std::collections::HashMap::with_capacity(th_links.len());
        for (pos, &i) in th_links.iter().enumerate() {
            th_pos.insert(i, pos);
        }
        let points: Vec<(i64, i64, u32)> = or_links
            .iter()
            .enumerate()
            .map(|(x, &i)| (x as i64, th_pos[&i] as i64, i))
            .collect();
        let tree3 = ThreeSided::new(points, block);
        groups.push(RankGroup {
            or_links,
            dict_origin: RankDict::from_sorted(or_origins.iter().map(|&o| o as u64).collect()),
            or_origins,
            dict_score: RankDict::from_sorted(th_scores.iter().map(|&s| s as u64).collect()),
            th_links,
            th_scores,
            tree3,
        });
    }

    Ok(ThresholdIndex {
        block,
        ranks,
        decomp,
        comp_lists,
        comp_stab,
        groups,
        link_count: links.len(),
    })
}

impl ThresholdIndex {
    pub fn rank_of_node(&self, u: NodeId) -> u8 {
        self.ranks.node_rank[u as usize]
    }

    pub fn rank_max(&self) -> u8 {
        self.ranks.rank_max
    }

    /// Scannable record of the rank-0 component containing `u`.
    pub fn rank0_list(&self, u: NodeId) -> &[u32] {
        &self.comp_lists[self.decomp.comp_of[u as usize] as usize]
    }

    /// Weight-descending stream of equal-ranked links stabbed by `u` with
    /// score >= tau (`u` must have rank >= 1).
    pub fn equi_stream(&self, u: NodeId, tau: u32) -> Option<StabStream<'_>> {
        let c = self.decomp.comp_of[u as usize] as usize;
        let x = self.decomp.pos_in_comp[u as usize] as i64;
        self.comp_stab[c].as_ref().map(|s| s.query(x, tau as u64))
    }

    pub fn stab_of_node(&self, u: NodeId) -> Option<&PersistentStabbing> {
        self.comp_stab[self.decomp.comp_of[u as usize] as usize].as_ref()
    }

    /// All links stabbed by `u_p` with rank-space score >= tau, with block
    /// charges on `tape`. Output order is unspecified.
    pub fn threshold_query(
        &self,
        topo: &Topology,
        links: &[LinkRec],
        u_p: NodeId,
        tau: u32,
        tape: &mut IoTape,
    ) -> Result<Vec<u32>, EmError> {
        if !topo.is_valid(u_p) {
            return Err(EmError::InvalidNode(u_p));
        }
        if tau < 1 || tau as usize > self.link_count + 1 {
            return Err(EmError::InvalidThreshold { tau, max: self.link_count as u32 + 1 });
        }
        let mut out = Vec::new();
        let r_up = self.ranks.node_rank[u_p as usize];
        if r_up == 0 {
            // Everything stabbed by u_p originates inside its bottom
            // component; one scan decides it all.
            let list = self.rank0_list(u_p);
            tape.charge_words(IoPhase::Equi, 4 * list.len() as u64);
            for &i in list {
                tape.touch_link(i);
                let l = &links[i as usize];
                if l.w >= tau && stabs_rec(l, u_p, topo) {
                    out.push(i);
                }
            }
            return Ok(out);
        }

        // Equal-ranked links via the component's stabbing structure.
        if let Some(stream) = self.equi_stream(u_p, tau) {
            let before = out.len();
            for (_, payload) in stream {
                tape.touch_link(payload);
                out.push(payload);
            }
            let emitted = out.len() - before;
            let c = self.decomp.comp_of[u_p as usize] as usize;
            self.comp_stab[c].as_ref().unwrap().charge(emitted, tape, IoPhase::Equi);
        }

        // Higher-ranked links: one conversion plus one 3-sided query per rank.
        let (lo, hi) = topo.subtree_range(u_p);
        let mut pts = Vec::new();
        for r in (r_up + 1)..=self.ranks.rank_max {
            let g = &self.groups[r as usize - 1];
            if g.is_empty() {
                continue;
            }
            // Dictionary conversions are charged at their model cost.
            tape.charge_blocks(IoPhase::Conversion, 1);
            let (a, b) = g.origin_range(lo, hi);
            if a >= b {
                continue;
            }
            let c = g.score_floor(tau);
            if c >= g.len() {
                continue;
            }
            pts.clear();
            g.tree3.query(
                a as i64,
                b as i64 - 1,
                c as i64,
                Some((tape, IoPhase::High)),
                &mut pts,
            );
            out.extend(pts.iter().map(|&(_, _, payload)| payload));
        }
        Ok(out)
    }

    /// Stored entries across all substructures (space audit).
    pub fn stored_entries(&self) -> usize {
        let lists: usize = self.comp_lists.iter().map(|l| l.len()).sum();
        let stabs: usize =
            self.comp_stab.iter().filter_map(|s| s.as_ref().map(|s| s.stored_entries())).sum();
        let groups: usize = self
            .groups
            .iter()
            .map(|g| g.or_links.len() * 2 + g.th_links.len() * 2 + g.tree3.stored_entries())
            .sum();
        lists + stabs + groups
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DocumentCollection;
    use crate::gst::GSTree;
    use crate::links::{build_links, stabs, Link, ScoreKind, Scorer};
    use crate::harness::gen::{random_collection, GenConfig};

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

    #[test]
    fn rank_formula_examples() {
        assert_eq!(rank_for_size(4, 4), 0);
        assert_eq!(rank_for_size(17, 4), 2); // ceil(17/4) = 5
        assert_eq!(rank_for_size(1, 1), 0);
        assert_eq!(rank_for_size(11, 2), 2); // ceil(11/2) = 6
    }

    #[test]
    fn max_rank_on_banana_ana() {
        let c = coll(&[b"banana", b"ana"]); // n = 11
        let t = GSTree::build(&c);
        let ranks = assign_ranks(&t.topo, 2).unwrap();
        assert_eq!(ranks.rank_max, 2);
        assert!(assign_ranks(&t.topo, 0).is_err());
    }

    #[test]
    fn big_block_gives_single_rank0_component() {
        let c = coll(&[b"banana", b"ana"]);
        let t = GSTree::build(&c);
        let ranks = assign_ranks(&t.topo, 64).unwrap();
        let d = decompose(&t.topo, &ranks);
        assert_eq!(d.comps.len(), 1);
        assert_eq!(d.comps[0].rank, 0);
        assert_eq!(d.comps[0].members.len(), t.node_count());
    }

    #[test]
    fn decomposition_partitions_nodes_and_paths_are_paths() {
        for seed in 0..6u64 {
            let c = random_collection(GenConfig::new(400, 12, 2 + (seed as u8 % 3), seed));
            let t = GSTree::build(&c);
            for block in [1u32, 2, 4, 16, 64] {
                let ranks = assign_ranks(&t.topo, block).unwrap();
                let d = decompose(&t.topo, &ranks);
                let mut seen = vec![false; t.node_count() + 1];
                for (ci, comp) in d.comps.iter().enumerate() {
                    for (k, &m) in comp.members.iter().enumerate() {
                        assert!(!seen[m as usize]);
                        seen[m as usize] = true;
                        assert_eq!(ranks.node_rank[m as usize], comp.rank);
                        assert_eq!(d.comp_of[m as usize] as usize, ci);
                        if comp.rank >= 1 && k > 0 {
                            // Path property: member k is the child of member k-1.
                            assert_eq!(t.topo.parent[m as usize], comp.members[k - 1]);
                        }
                    }
                    // Connected: every non-top member's parent is in the comp.
                    for &m in &comp.members {
                        if m != comp.top {
                            assert_eq!(
                                d.comp_of[t.topo.parent[m as usize] as usize] as usize,
                                ci
                            );
                        }
                    }
                }
                assert!(seen[1..].iter().all(|&s| s));
                // Rank-0 components are bottom subtrees with <= B leaves.
                for comp in d.comps.iter().filter(|c| c.rank == 0) {
                    assert!(t.topo.size[comp.top as usize] <= block);
                    let (lo, hi) = t.topo.subtree_range(comp.top);
                    assert_eq!(comp.members, (lo..=hi).collect::<Vec<_>>());
                }
                // Rank monotonicity parent >= child.
                for u in 2..=t.node_count() {
                    let p = t.topo.parent[u] as usize;
                    assert!(ranks.node_rank[p] >= ranks.node_rank[u]);
                }
            }
        }
    }

    #[test]
    fn pseudo_origin_walks_and_path_property() {
        for seed in 0..4u64 {
            let c = random_collection(GenConfig::new(300, 10, 2, 99 + seed));
            let t = GSTree::build(&c);
            let s = Scorer::new(ScoreKind::Frequency, &c).unwrap();
            let links = build_links(&t, &c, &s);
            let lr = recs(&links);
            for block in [1u32, 4, 16] {
                let ranks = assign_ranks(&t.topo, block).unwrap();
                let d = decompose(&t.topo, &ranks);
                for l in &lr {
                    let comp = if l.target == DUMMY {
                        d.comp_of[ROOT as usize]
                    } else {
                        d.comp_of[l.target as usize]
                    };
                    if d.comps[comp as usize].rank == 0 {
                        continue;
                    }
                    let s_i = pseudo_origin(&t.topo, &d, l, comp).unwrap();
                    // s_i >= u (preorder)  <=>  origin under u, for u in the path.
                    for &u in &d.comps[comp as usize].members {
                        let (lo, hi) = t.topo.subtree_range(u);
                        let origin_under = lo <= l.origin && l.origin <= hi;
                        assert_eq!(s_i >= u, origin_under, "comp {comp} u {u} link {l:?}");
                    }
                    // Error on a wrong component.
                    let other = (comp + 1) % d.comps.len() as u32;
                    if other != comp {
                        assert!(pseudo_origin(&t.topo, &d, l, other).is_err());
                    }
                }
            }
        }
    }

    #[test]
    fn tiny_corpus_single_component_holds_all_links() {
        let c = coll(&[b"x"]);
        let t = GSTree::build(&c);
        let s = Scorer::new(ScoreKind::Frequency, &c).unwrap();
        let links = build_links(&t, &c, &s);
        let idx = build_threshold_index(&t.topo, &recs(&links), 64).unwrap();
        assert_eq!(idx.decomp.comps.len(), 1);
        assert_eq!(idx.comp_lists[0].len(), 3);
        assert!(idx.groups.is_empty());
    }

    #[test]
    fn each_link_stored_at_most_twice_across_lists_and_groups() {
        let c = coll(&[b"banana", b"ana", b"nabana"]);
        let t = GSTree::build(&c);
        let s = Scorer::new(ScoreKind::Frequency, &c).unwrap();
        let links = build_links(&t, &c, &s);
        let lr = recs(&links);
        for block in [1u32, 2, 4] {
            let idx = build_threshold_index(&t.topo, &lr, block).unwrap();
            let in_lists: usize = idx.comp_lists.iter().map(|l| l.len()).sum();
            let in_groups: usize = idx.groups.iter().map(|g| g.len()).sum();
            assert!(in_lists + in_groups <= 2 * links.len());
            // Every link with rank >= 1 is in exactly one group.
            let high: usize =
                lr.iter().filter(|l| idx.ranks.link_rank(l.target) >= 1).count();
            assert_eq!(in_groups, high);
        }
    }

    #[test]
    fn threshold_query_trivia() {
        let c = coll(&[b"banana", b"ana", b"ban"]);
        let t = GSTree::build(&c);
        let s = Scorer::new(ScoreKind::Frequency, &c).unwrap();
        let links = build_links(&t, &c, &s);
        let lr = recs(&links);
        let idx = build_threshold_index(&t.topo, &lr, 2).unwrap();

        let mut tape = IoTape::new(2);
        let max_tau = links.len() as u32 + 1;
        let got = idx.threshold_query(&t.topo, &lr, ROOT, max_tau, &mut tape).unwrap();
        assert!(got.is_empty());
        assert!(idx.threshold_query(&t.topo, &lr, ROOT, max_tau + 1, &mut tape).is_err());
        assert!(idx.threshold_query(&t.topo, &lr, ROOT, 0, &mut tape).is_err());

        // tau = 1 at the root: exactly the dummy-targeted links, one per doc.
        let got = idx.threshold_query(&t.topo, &lr, ROOT, 1, &mut tape).unwrap();
        assert_eq!(got.len(), c.doc_count());
        for i in &got {
            assert_eq!(lr[*i as usize].target, DUMMY);
        }
    }

    #[test]
    fn threshold_query_matches_enumeration_oracle() {
        for seed in 0..5u64 {
            let alpha = [2u8, 4, 26][seed as usize % 3];
            let c = random_collection(GenConfig::new(350, 15, alpha, 1000 + seed));
            let t = GSTree::build(&c);
            let s = Scorer::new(ScoreKind::Frequency, &c).unwrap();
            let links = build_links(&t, &c, &s);
            let lr = recs(&links);
            for block in [1u32, 4, 16] {
                let idx = build_threshold_index(&t.topo, &lr, block).unwrap();
                let mut tape = IoTape::new(block);
                for u in 1..=t.node_count() as NodeId {
                    for tau in [1u32, 2, links.len() as u32 / 2, links.len() as u32] {
                        if tau < 1 {
                            continue;
                        }
                        let mut got =
                            idx.threshold_query(&t.topo, &lr, u, tau, &mut tape).unwrap();
                        got.sort_unstable();
                        let mut want: Vec<u32> = (0..links.len() as u32)
                            .filter(|&i| {
                                links[i as usize].w >= tau && stabs(&links[i as usize], u, &t.topo)
                            })
                            .collect();
                        want.sort_unstable();
                        assert_eq!(got, want, "u={u} tau={tau} block={block} seed={seed}");
                    }
                }
            }
        }
    }

    #[test]
    fn low_ranked_links_never_touched() {
        let c = random_collection(GenConfig::new(500, 12, 4, 77));
        let t = GSTree::build(&c);
        let s = Scorer::new(ScoreKind::Frequency, &c).unwrap();
        let links = build_links(&t, &c, &s);
        let lr = recs(&links);
        let idx = build_threshold_index(&t.topo, &lr, 4).unwrap();
        for u in 1..=t.node_count() as NodeId {
            let mut tape = IoTape::tracing(4);
            idx.threshold_query(&t.topo, &lr, u, 1, &mut tape).unwrap();
            let r_up = idx.rank_of_node(u);
            for &i in tape.touched_links.as_ref().unwrap() {
                assert!(
                    idx.ranks.link_rank(lr[i as usize].target) >= r_up,
                    "low-ranked link {i} touched at node {u}"
                );
            }
        }
    }
}
