//! Internal-memory engine: sorted top-k in O(k)-style work once the locus is
//! known.
//!
//! The threshold machinery is instantiated at B = 1. Each per-rank group
//! carries an online sorted-range structure over its scores in origin order,
//! and each component path keeps its persistent stabbing list, so every
//! sub-answer arrives as a weight-descending stream; a k-bounded heap merges
//! the O(log n) streams and stops after k emissions. For k below log2(n),
//! every node owns a bit vector over its prime's score-sorted candidate list
//! (bit i set iff the i-th candidate is stabbed), and k select calls read the
//! answer off in sorted order directly.

use thiserror::Error;

use crate::em_threshold::{stabs_rec, LinkRec};
use crate::geom::{BitVec, GeomError, OnlineSortedRange};
use crate::gst::{NodeId, Topology, DUMMY, ROOT};
use crate::io_model::{IoPhase, IoTape};
use crate::topk_engine::{candidate_links, Lemma6Index, TopkError};

#[derive(Debug, Error)]
pub enum RamError {
    #[error("k must be >= 1")]
    InvalidK,
    #[error("unsorted stream")]
    UnsortedStream,
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Topk(#[from] TopkError),
}

/// Routing override used by verification to compare both paths on one k.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RamRoute {
    Auto,
    ForceSmall,
    ForceLarge,
}

#[derive(Debug, Clone)]
pub struct RamIndex {
    /// Threshold engine + sketch at B = 1, grouping factor ceil(log2 n).
    pub base: Lemma6Index,
    /// Per rank group: scores in origin order, streamable in sorted order.
    pub osrr: Vec<OnlineSortedRange>,
    /// Per prime (dense ids): candidate link ids sorted by score descending.
    pub cand_lists: Vec<Vec<u32>>,
    /// Node -> dense prime id of its lowest prime ancestor (u32::MAX at root).
    pub cand_of_node: Vec<u32>,
    /// Per node: stabbing bits over its prime's candidate list.
    pub bitvecs: Vec<BitVec>,
    pub g_small: u32,
}

pub fn build_ram_index(
    topo: &Topology,
    links: &[LinkRec],
    lca: &dyn Fn(NodeId, NodeId) -> NodeId,
) -> Result<RamIndex, RamError> {
    let n = topo.leaves.len();
    let g_small = (usize::BITS - (n.max(2) - 1).leading_zeros()).clamp(1, n as u32);
    let base = Lemma6Index::build(topo, links, 1, g_small, lca)?;
    let osrr = base
        .thr
        .groups
        .iter()
        .map(|g| {
            OnlineSortedRange::new(g.or_links.iter().map(|&i| links[i as usize].w as u64).collect())
        })
        .collect();

    let mut cand_lists = Vec::with_capacity(base.marked.prime_list.len());
    let mut prime_slot = vec![u32::MAX; topo.node_count() + 1];
    for &up in &base.marked.prime_list {
        let mut cand = candidate_links(topo, links, &base.marked, up, g_small)?;
        cand.sort_unstable_by_key(|&i| std::cmp::Reverse(links[i as usize].w));
        prime_slot[up as usize] = cand_lists.len() as u32;
        cand_lists.push(cand);
    }

    let mut cand_of_node = vec![u32::MAX; topo.node_count() + 1];
    let mut bitvecs = Vec::with_capacity(topo.node_count() + 1);
    bitvecs.push(BitVec::from_bools(&[])); // slot 0
    for u in 1..=topo.node_count() as NodeId {
        let up = base.marked.lowest_prime_anc[u as usize];
        if up == DUMMY {
            bitvecs.push(BitVec::from_bools(&[]));
            continue;
        }
        let slot = prime_slot[up as usize];
        cand_of_node[u as usize] = slot;
        let list = &cand_lists[slot as usize];
        let bits: Vec<bool> =
            list.iter().map(|&i| stabs_rec(&links[i as usize], u, topo)).collect();
        bitvecs.push(BitVec::from_bools(&bits));
    }
    Ok(RamIndex { base, osrr, cand_lists, cand_of_node, bitvecs, g_small })
}

impl RamIndex {
    /// Sorted top-k stabbed links at locus `u`: link ids in strictly
    /// descending rank-space score order, length min(k, ndoc).
    pub fn ram_topk(
        &self,
        topo: &Topology,
        links: &[LinkRec],
        u: NodeId,
        k: usize,
        tape: &mut IoTape,
    ) -> Result<Vec<u32>, RamError> {
        self.ram_topk_routed(topo, links, u, k, RamRoute::Auto, tape)
    }

    pub fn ram_topk_routed(
        &self,
        topo: &Topology,
        links: &[LinkRec],
        u: NodeId,
        k: usize,
        route: RamRoute,
        tape: &mut IoTape,
    ) -> Result<Vec<u32>, RamError> {
        if k < 1 {
            return Err(RamError::InvalidK);
        }
        // Nodes without a prime ancestor (only the root) take the merge path
        // whatever k is.
        let small = match route {
            RamRoute::Auto => k < self.g_small as usize && u != ROOT,
            RamRoute::ForceSmall => true,
            RamRoute::ForceLarge => false,
        };
        if small {
            self.topk_small(u, k, tape)
        } else {
            self.topk_merge(topo, links, u, k, tape)
        }
    }

    /// k select calls against the node's bit vector over the prime's sorted
    /// candidate list; positions come back in score order by construction.
    fn topk_small(&self, u: NodeId, k: usize, tape: &mut IoTape) -> Result<Vec<u32>, RamError> {
        let slot = self.cand_of_node[u as usize];
        debug_assert_ne!(slot, u32::MAX, "non-root nodes always route to a prime");
        let bv = &self.bitvecs[u as usize];
        let list = &self.cand_lists[slot as usize];
        let take = k.min(bv.count_ones() as usize);
        let mut out = Vec::with_capacity(take);
        for i in 1..=take as u32 {
            tape.select_calls += 1;
            let pos = bv.select1(i)?;
            out.push(list[pos - 1]);
        }
        Ok(out)
    }

    /// Threshold conversion, one weight-descending stream per sub-structure,
    /// and a k-bounded multiway merge.
    fn topk_merge(
        &self,
        topo: &Topology,
        links: &[LinkRec],
        u: NodeId,
        k: usize,
        tape: &mut IoTape,
    ) -> Result<Vec<u32>, RamError> {
        tape.charge_blocks(IoPhase::Conversion, 1);
        let (tau, _fallback) = self.base.threshold_for(u, k);
        let thr = &self.base.thr;
        let r_up = thr.rank_of_node(u);

        enum Stream<'a> {
            Ready(std::vec::IntoIter<(u32, u32)>),
            Stab(crate::geom::StabStream<'a>),
            Osrr { inner: crate::geom::OsrrStream<'a>, links_of: &'a [u32], tau: u32 },
        }
        impl<'a> Stream<'a> {
            fn next(&mut self) -> Option<(u32, u32)> {
                match self {
                    Stream::Ready(it) => it.next(),
                    Stream::Stab(s) => s.next().map(|(w, p)| (w as u32, p)),
                    Stream::Osrr { inner, links_of, tau } => match inner.next() {
                        Some((w, pos)) if w as u32 >= *tau => {
                            Some((w as u32, links_of[pos]))
                        }
                        _ => None,
                    },
                }
            }
        }

        let mut streams: Vec<Stream> = Vec::new();
        let mut equi_emitted = 0usize;
        if r_up == 0 {
            // Bottom component: the scannable record already holds every
            // stabbed link regardless of rank; no other stream is needed.
            let list = thr.rank0_list(u);
            tape.charge_words(IoPhase::Equi, 4 * list.len() as u64);
            let mut items: Vec<(u32, u32)> = list
                .iter()
                .filter(|&&i| {
                    tape.touch_link(i);
                    let l = &links[i as usize];
                    l.w >= tau && stabs_rec(l, u, topo)
                })
                .map(|&i| (links[i as usize].w, i))
                .collect();
            items.sort_unstable_by_key(|&(w, _)| std::cmp::Reverse(w));
            streams.push(Stream::Ready(items.into_iter()));
        } else if let Some(s) = thr.equi_stream(u, tau) {
            streams.push(Stream::Stab(s));
        }
        let (lo, hi) = topo.subtree_range(u);
        let high_from = if r_up == 0 { thr.rank_max() + 1 } else { r_up + 1 };
        for r in high_from..=thr.rank_max() {
            let g = &thr.groups[r as usize - 1];
            if g.is_empty() {
                continue;
            }
            tape.charge_blocks(IoPhase::Conversion, 1);
            let (a, b) = g.origin_range(lo, hi);
            if a >= b {
                continue;
            }
            streams.push(Stream::Osrr {
                inner: self.osrr[r as usize - 1].query0(a, b - 1),
                links_of: &g.or_links,
                tau,
            });
        }
        tape.streams_opened += streams.len() as u64;

        // K-bounded heap merge over the stream heads.
        let mut heap: std::collections::BinaryHeap<(u32, usize)> = std::collections::BinaryHeap::new();
        let mut heads: Vec<Option<(u32, u32)>> = Vec::with_capacity(streams.len());
        for (si, s) in streams.iter_mut().enumerate() {
            let head = s.next();
            if let Some((w, _)) = head {
                heap.push((w, si));
            }
            heads.push(head);
        }
        let mut out = Vec::with_capacity(k);
        let mut last_w = u32::MAX;
        while out.len() < k {
            let Some((w, si)) = heap.pop() else { break };
            tape.heap_pops += 1;
            if w > last_w {
                return Err(RamError::UnsortedStream);
            }
            last_w = w;
            let (_, link) = heads[si].take().expect("head present while queued");
            tape.touch_link(link);
            out.push(link);
            if matches!(streams[si], Stream::Stab(_)) {
                equi_emitted += 1;
            }
            let next = streams[si].next();
            if let Some((nw, _)) = next {
                if nw >= w {
                    return Err(RamError::UnsortedStream);
                }
                heap.push((nw, si));
            }
            heads[si] = next;
        }
        if r_up >= 1 {
            if let Some(stab) = thr.stab_of_node(u) {
                stab.charge(equi_emitted, tape, IoPhase::Equi);
            }
        }
        tape.charge_words(IoPhase::High, 2 * out.len() as u64);
        Ok(out)
    }

    pub fn stored_entries(&self) -> usize {
        let cand: usize = self.cand_lists.iter().map(|c| c.len()).sum();
        let bits: usize = self.bitvecs.iter().map(|b| b.len().div_ceil(64)).sum();
        self.base.stored_entries() + self.osrr.iter().map(|o| o.len()).sum::<usize>() + cand + bits
    }

    /// Total bit-vector payload in bits (space audit).
    pub fn bitvec_bits(&self) -> usize {
        self.bitvecs.iter().map(|b| b.len()).sum()
    }
}

/// Merges weight-descending streams into the k largest items, globally
/// non-increasing. Streams violating monotonicity are reported.
pub fn merge_streams<T, I>(streams: Vec<I>, k: usize) -> Result<Vec<(u32, T)>, RamError>
where
    I: Iterator<Item = (u32, T)>,
{
    let mut streams: Vec<I> = streams;
    let mut heap: std::collections::BinaryHeap<(u32, usize)> = std::collections::BinaryHeap::new();
    let mut heads: Vec<Option<(u32, T)>> = Vec::with_capacity(streams.len());
    for (si, s) in streams.iter_mut().enumerate() {
        let head = s.next();
        if let Some((w, _)) = head {
            heap.push((w, si));
        }
        heads.push(head);
    }
    let mut out = Vec::new();
    while out.len() < k {
        let Some((w, si)) = heap.pop() else { break };
        let item = heads[si].take().expect("queued head");
        out.push(item);
        let next = streams[si].next();
        if let Some((nw, _)) = &next {
            if *nw > w {
                return Err(RamError::UnsortedStream);
            }
            heap.push((*nw, si));
        }
        heads[si] = next;
    }
    Ok(out)
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

    fn oracle_sorted(topo: &Topology, links: &[Link], u: NodeId, k: usize) -> Vec<u32> {
        let mut ids: Vec<u32> =
            (0..links.len() as u32).filter(|&i| stabs(&links[i as usize], u, topo)).collect();
        ids.sort_unstable_by_key(|&i| std::cmp::Reverse(links[i as usize].w));
        ids.truncate(k);
        ids
    }

    #[test]
    fn merge_streams_examples() {
        let got = merge_streams(vec![vec![(9, 'a'), (4, 'b')].into_iter(), vec![(7, 'c'), (6, 'd')].into_iter()], 3)
            .unwrap();
        assert_eq!(got, vec![(9, 'a'), (7, 'c'), (6, 'd')]);

        let got = merge_streams(vec![vec![(5, 0), (3, 1)].into_iter()], 10).unwrap();
        assert_eq!(got.len(), 2);

        let bad = merge_streams(vec![vec![(1u32, 0), (5, 1)].into_iter()], 5);
        assert!(matches!(bad, Err(RamError::UnsortedStream)));
    }

    #[test]
    fn merge_streams_matches_concat_sort_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x3e26e);
        for _ in 0..50 {
            let n_streams = rng.gen_range(1..8);
            let mut all: Vec<u32> = Vec::new();
            let streams: Vec<std::vec::IntoIter<(u32, u32)>> = (0..n_streams)
                .map(|_| {
                    let mut v: Vec<u32> =
                        (0..rng.gen_range(0..40)).map(|_| rng.gen_range(0..1000)).collect();
                    v.sort_unstable_by(|a, b| b.cmp(a));
                    all.extend(&v);
                    v.into_iter().map(|w| (w, w)).collect::<Vec<_>>().into_iter()
                })
                .collect();
            let k = rng.gen_range(0..60);
            let got: Vec<u32> = merge_streams(streams, k).unwrap().into_iter().map(|(w, _)| w).collect();
            all.sort_unstable_by(|a, b| b.cmp(a));
            all.truncate(k);
            assert_eq!(got, all);
        }
    }

    #[test]
    fn banana_sorted_results() {
        let c = coll(&[b"banana", b"ana"]);
        let t = GSTree::build(&c);
        let s = Scorer::new(ScoreKind::Frequency, &c).unwrap();
        let links = build_links(&t, &c, &s);
        let lr = recs(&links);
        let idx = build_ram_index(&t.topo, &lr, &|a, b| t.lca(a, b).unwrap()).unwrap();
        let u = t.locus(b"ana").unwrap().unwrap();
        let mut tape = IoTape::new(1);
        let got = idx.ram_topk(&t.topo, &lr, u, 2, &mut tape).unwrap();
        let pairs: Vec<(u32, i64)> =
            got.iter().map(|&i| (links[i as usize].doc, links[i as usize].raw)).collect();
        assert_eq!(pairs, vec![(1, 2), (2, 1)]);
        assert!(idx.ram_topk(&t.topo, &lr, u, 0, &mut tape).is_err());
    }

    #[test]
    fn bitvec_audit_against_stabs_oracle() {
        let c = random_collection(GenConfig::new(400, 12, 4, 0xb17));
        let t = GSTree::build(&c);
        let s = Scorer::new(ScoreKind::Frequency, &c).unwrap();
        let links = build_links(&t, &c, &s);
        let lr = recs(&links);
        let idx = build_ram_index(&t.topo, &lr, &|a, b| t.lca(a, b).unwrap()).unwrap();
        for u in 1..=t.node_count() as NodeId {
            let slot = idx.cand_of_node[u as usize];
            if slot == u32::MAX {
                assert_eq!(u, ROOT);
                continue;
            }
            let list = &idx.cand_lists[slot as usize];
            let bv = &idx.bitvecs[u as usize];
            assert_eq!(bv.len(), list.len());
            for (i, &li) in list.iter().enumerate() {
                assert_eq!(bv.get(i + 1), stabs(&links[li as usize], u, &t.topo));
            }
            // Candidate lists are score-descending.
            assert!(list.windows(2).all(|w| links[w[0] as usize].w > links[w[1] as usize].w));
        }
        assert!(idx.bitvec_bits() as f64 <= 16.0 * t.leaf_count() as f64 * idx.g_small as f64);
    }

    #[test]
    fn sorted_output_matches_oracle_everywhere() {
        for seed in 0..4u64 {
            let alpha = [2u8, 4, 26][seed as usize % 3];
            let c = random_collection(GenConfig::new(450, 16, alpha, 0xcafe + seed));
            let t = GSTree::build(&c);
            for kind in [ScoreKind::Frequency, ScoreKind::MinDist] {
                let s = Scorer::new(kind, &c).unwrap();
                let links = build_links(&t, &c, &s);
                let lr = recs(&links);
                let idx = build_ram_index(&t.topo, &lr, &|a, b| t.lca(a, b).unwrap()).unwrap();
                let mut tape = IoTape::new(1);
                for u in 1..=t.node_count() as NodeId {
                    let ndoc = links.iter().filter(|l| stabs(l, u, &t.topo)).count();
                    for k in [1usize, 2, ndoc.max(1), 2 * ndoc.max(1), 64] {
                        let got = idx.ram_topk(&t.topo, &lr, u, k, &mut tape).unwrap();
                        assert_eq!(got, oracle_sorted(&t.topo, &links, u, k), "u={u} k={k}");
                        // Strictly descending scores.
                        assert!(got
                            .windows(2)
                            .all(|w| links[w[0] as usize].w > links[w[1] as usize].w));
                    }
                }
            }
        }
    }

    #[test]
    fn small_and_large_paths_agree_at_the_boundary() {
        let c = random_collection(GenConfig::new(700, 20, 4, 0xb0bb));
        let t = GSTree::build(&c);
        let s = Scorer::new(ScoreKind::Frequency, &c).unwrap();
        let links = build_links(&t, &c, &s);
        let lr = recs(&links);
        let idx = build_ram_index(&t.topo, &lr, &|a, b| t.lca(a, b).unwrap()).unwrap();
        let g = idx.g_small as usize;
        let mut tape = IoTape::new(1);
        for u in (2..=t.node_count() as NodeId).step_by(7) {
            for k in [g - 1, g] {
                let a = idx
                    .ram_topk_routed(&t.topo, &lr, u, k, RamRoute::ForceSmall, &mut tape)
                    .unwrap();
                let b = idx
                    .ram_topk_routed(&t.topo, &lr, u, k, RamRoute::ForceLarge, &mut tape)
                    .unwrap();
                assert_eq!(a, b, "u={u} k={k}");
            }
        }
    }

    #[test]
    fn work_proxies_stay_bounded()
    {
        let c = random_collection(GenConfig::new(600, 18, 4, 0x11c0));
        let t = GSTree::build(&c);
        let s = Scorer::new(ScoreKind::MinDist, &c).unwrap();
        let links = build_links(&t, &c, &s);
        let lr = recs(&links);
        let idx = build_ram_index(&t.topo, &lr, &|a, b| t.lca(a, b).unwrap()).unwrap();
        for u in (1..=t.node_count() as NodeId).step_by(3) {
            let ndoc = links.iter().filter(|l| stabs(l, u, &t.topo)).count();
            for k in [1usize, 3, idx.g_small as usize, 2 * idx.g_small as usize] {
                let mut tape = IoTape::new(1);
                let got = idx.ram_topk(&t.topo, &lr, u, k, &mut tape).unwrap();
                assert_eq!(got.len(), k.min(ndoc));
                if k < idx.g_small as usize && u != ROOT {
                    assert_eq!(tape.select_calls, k.min(ndoc) as u64);
                    assert_eq!(tape.heap_pops, 0);
                } else {
                    assert!(tape.heap_pops <= (k + tape.streams_opened as usize) as u64);
                    assert_eq!(tape.select_calls, 0);
                }
            }
        }
    }
}
