//! Randomized verification sweeps: every structural claim the index relies
//! on, checked against brute force on seeded corpora, plus measured-scaling
//! fits for the simulated I/O and space accounting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::{DocId, DocumentCollection};
use crate::em_threshold::{rank_for_size, LinkRec};
use crate::gst::{GSTree, NodeId, DUMMY, ROOT};
use crate::harness::gen::{random_collection, random_static_weights, GenConfig};
use crate::harness::oracle;
use crate::index::{Engine, Index, IndexConfig};
use crate::io_model::IoTape;
use crate::links::{stabs, Link, ScoreKind, Scorer};
use crate::topk_engine::classify_links;

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub checked: u64,
    pub violations: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reproducer: Option<String>,
}

impl SuiteResult {
    pub fn new(name: &str) -> Self {
        SuiteResult { name: name.to_string(), checked: 0, violations: 0, reproducer: None }
    }

    pub fn ok(&self) -> bool {
        self.violations == 0
    }

    pub fn count(&mut self, ok: bool, repro: impl Fn() -> String) {
        self.checked += 1;
        if !ok {
            self.violations += 1;
            if self.reproducer.is_none() {
                self.reproducer = Some(repro());
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub seeds: Vec<u64>,
    pub max_n: usize,
    pub scores: Vec<ScoreKind>,
    pub suites: Vec<SuiteResult>,
    /// Measured constants and distribution notes (informational).
    pub info: Vec<(String, f64)>,
    pub ok: bool,
}

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub max_n: usize,
    pub seeds: Vec<u64>,
    pub scores: Vec<ScoreKind>,
    /// Also run the measured I/O-scaling fit (slower).
    pub io_fit: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            max_n: 600,
            seeds: vec![1, 2, 3],
            scores: vec![ScoreKind::Frequency, ScoreKind::MinDist, ScoreKind::Static],
            io_fit: false,
        }
    }
}

pub fn scorer_for(
    kind: ScoreKind,
    collection: &DocumentCollection,
    seed: u64,
) -> Scorer {
    match kind {
        ScoreKind::Static => {
            Scorer::with_static_weights(collection, random_static_weights(collection, seed))
                .expect("weights sized to collection")
        }
        k => Scorer::new(k, collection).expect("non-static scorer"),
    }
}

/// Longest terminator-free pattern per locus class; every distinct locus in
/// the tree appears exactly once.
pub fn locus_pattern_classes(tree: &GSTree) -> Vec<(NodeId, Vec<u8>)> {
    let mut out = Vec::new();
    for u in 2..=tree.node_count() as NodeId {
        let parent_sd = tree.strdepth[tree.topo.parent[u as usize] as usize];
        let plen = if tree.topo.is_leaf(u) {
            tree.strdepth[u as usize].saturating_sub(1)
        } else {
            tree.strdepth[u as usize]
        };
        if plen <= parent_sd || plen == 0 {
            continue; // only reachable through its terminator byte
        }
        let pos = tree.node_pos[u as usize] as usize;
        out.push((u, tree.text()[pos..pos + plen as usize].to_vec()));
    }
    out
}

/// For every node and every document below it: exactly one stabbed link,
/// scored exactly like a from-scratch recomputation over the document body.
pub fn check_link_uniqueness(
    tree: &GSTree,
    collection: &DocumentCollection,
    links: &[Link],
    scorer: &Scorer,
    suite: &mut SuiteResult,
) {
    let n_nodes = tree.node_count() as NodeId;
    for u in 1..=n_nodes {
        let (lo, hi) = tree.topo.subtree_range(u);
        let mut docs_under: Vec<DocId> = (lo..=hi)
            .filter(|&v| tree.topo.is_leaf(v))
            .map(|v| tree.leaf_doc[v as usize])
            .collect();
        docs_under.sort_unstable();
        docs_under.dedup();
        let mut stabbed_by_doc: std::collections::HashMap<DocId, Vec<&Link>> = Default::default();
        for l in links.iter().filter(|l| stabs(l, u, &tree.topo)) {
            stabbed_by_doc.entry(l.doc).or_default().push(l);
        }
        suite.count(stabbed_by_doc.len() == docs_under.len(), || {
            format!("node {u}: {} docs but {} stabbed", docs_under.len(), stabbed_by_doc.len())
        });
        let prefix = tree.prefix(u);
        for d in docs_under {
            let ls = stabbed_by_doc.get(&d).map_or(&[][..], |v| v);
            // Leaf prefixes end with the terminator; scan the terminated body.
            // The root's empty prefix occurs at every suffix offset.
            let mut body = collection.doc(d).to_vec();
            body.push(crate::corpus::TERMINATOR);
            let occ = if prefix.is_empty() {
                (0..body.len() as u32).collect()
            } else {
                oracle::occurrences(&body, prefix)
            };
            let fresh = scorer.score(d, &occ).expect("doc occurs below u");
            suite.count(ls.len() == 1 && ls[0].raw == fresh, || {
                format!("node {u} doc {d}: {} links, raw {:?} vs fresh {fresh}", ls.len(),
                        ls.first().map(|l| l.raw))
            });
        }
    }
}

#[derive(Debug, Default, Clone, Serialize)]
pub struct RankComponentCheck {
    pub formula: SuiteOutcome,
    pub monotone: SuiteOutcome,
    pub shared_rank_child: SuiteOutcome,
    pub paths: SuiteOutcome,
    pub rank0_bounds: SuiteOutcome,
}

#[derive(Debug, Default, Clone, Serialize)]
pub struct SuiteOutcome {
    pub checked: u64,
    pub violations: u64,
}

impl SuiteOutcome {
    fn count(&mut self, ok: bool) {
        self.checked += 1;
        self.violations += (!ok) as u64;
    }
}

/// Structural checks over one block size: the rank formula, monotonicity,
/// path-shaped components at rank >= 1, and the bottom-component bounds.
/// `shared_rank_child` counts nodes of rank >= 1 with two or more equal-rank
/// children; the published formula admits such nodes in corner cases, which
/// is why decomposition splits regions into paths.
pub fn check_rank_components(
    tree: &GSTree,
    links: &[LinkRec],
    block: u32,
) -> RankComponentCheck {
    let mut out = RankComponentCheck::default();
    let topo = &tree.topo;
    let idx = crate::em_threshold::build_threshold_index(topo, links, block)
        .expect("valid block");
    for u in 1..=topo.node_count() {
        out.formula.count(
            idx.ranks.node_rank[u] == rank_for_size(topo.size[u], block),
        );
        let p = topo.parent[u];
        if p != DUMMY {
            out.monotone
                .count(idx.ranks.node_rank[p as usize] >= idx.ranks.node_rank[u]);
        }
        let r = idx.ranks.node_rank[u];
        if r >= 1 {
            let same = topo
                .children(u as NodeId)
                .iter()
                .filter(|&&c| idx.ranks.node_rank[c as usize] == r)
                .count();
            out.shared_rank_child.count(same <= 1);
        }
    }
    for (ci, comp) in idx.decomp.comps.iter().enumerate() {
        if comp.rank >= 1 {
            let is_path = comp
                .members
                .windows(2)
                .all(|w| topo.parent[w[1] as usize] == w[0]);
            out.paths.count(is_path);
        } else {
            let leaves_ok = topo.size[comp.top as usize] <= block;
            let list_ok = idx.comp_lists[ci].len() <= 2 * block as usize;
            out.rank0_bounds.count(leaves_ok && list_ok);
        }
    }
    out
}

/// threshold_query equals oracle_stabbed; no duplicates (the equal- and
/// higher-ranked parts are disjoint); no lower-ranked link is ever touched.
pub fn check_threshold_oracle(
    tree: &GSTree,
    links: &[Link],
    recs: &[LinkRec],
    block: u32,
    samples: usize,
    seed: u64,
    suite: &mut SuiteResult,
) {
    let idx = crate::em_threshold::build_threshold_index(&tree.topo, recs, block)
        .expect("valid block");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_nodes = tree.node_count() as NodeId;
    let l = links.len() as u32;
    for _ in 0..samples {
        let u = rng.gen_range(1..=n_nodes);
        let tau = rng.gen_range(1..=l + 1);
        let mut tape = IoTape::tracing(block);
        let got = idx
            .threshold_query(&tree.topo, recs, u, tau, &mut tape)
            .expect("valid query");
        let mut sorted = got.clone();
        sorted.sort_unstable();
        let dedup_len = {
            let mut d = sorted.clone();
            d.dedup();
            d.len()
        };
        let mut want = oracle::oracle_stabbed(&tree.topo, links, u, tau);
        want.sort_unstable();
        let r_up = idx.rank_of_node(u);
        let low_touched = tape
            .touched_links
            .as_ref()
            .unwrap()
            .iter()
            .any(|&i| idx.ranks.link_rank(recs[i as usize].target) < r_up);
        suite.count(
            sorted == want && dedup_len == sorted.len() && !low_touched,
            || format!("u={u} tau={tau} block={block} seed={seed}"),
        );
    }
}

/// Output-size bounds of the top-k -> threshold conversion.
pub fn check_z_bounds(
    index: &Index,
    suite: &mut SuiteResult,
    sampled_k: &[usize],
) {
    let base = &index.topk.base;
    let g = base.g as usize;
    let mut tape = IoTape::new(index.block);
    for u in 1..=index.gst.node_count() as NodeId {
        let ndoc = oracle::oracle_stabbed(&index.gst.topo, &index.links, u, 1).len();
        for &k in sampled_k {
            let k = k.max(1);
            let (tau, _) = base.threshold_for(u, k);
            let z = base
                .thr
                .threshold_query(&index.gst.topo, &index.recs, u, tau, &mut tape)
                .expect("valid")
                .len();
            suite.count(z >= k.min(ndoc) && z <= 2 * (k + 2 * g), || {
                format!("u={u} k={k} z={z} ndoc={ndoc} g={g}")
            });
        }
    }
}

/// Fringe/near count bounds and top-g candidate coverage per prime node.
pub fn check_candidate_trees(
    tree: &GSTree,
    links: &[Link],
    recs: &[LinkRec],
    g: u32,
    block: u32,
    suite: &mut SuiteResult,
) {
    let lca = |a, b| tree.lca_fast(a, b);
    let marked = crate::topk_engine::select_marked(&tree.topo, g, &lca).expect("valid g");
    for &up in &marked.prime_list {
        let cls = classify_links(&tree.topo, recs, &marked, up).expect("prime");
        let u_star = marked.highest_marked_desc[up as usize];
        if u_star == DUMMY {
            suite.count(cls.fringe.len() as u32 <= 2 * tree.topo.size[up as usize], || {
                format!("prime {up} fringe {}", cls.fringe.len())
            });
        } else {
            suite.count(cls.fringe.len() as u32 <= 4 * g, || {
                format!("prime {up} fringe {} g {g}", cls.fringe.len())
            });
            suite.count(cls.near.len() as u32 <= 4 * g, || {
                format!("prime {up} near {} g {g}", cls.near.len())
            });
        }
        let ct = crate::topk_engine::build_candidate_tree(&tree.topo, recs, &marked, up, g, block)
            .expect("prime");
        suite.count(ct.links.len() as u32 <= 9 * g, || {
            format!("prime {up}: {} candidates, g {g}", ct.links.len())
        });
        // Coverage: candidates contain the true top-g of every routed node.
        for u in 1..=tree.node_count() as NodeId {
            if marked.lowest_prime_anc[u as usize] != up {
                continue;
            }
            let want = oracle::oracle_topk_ids(&tree.topo, links, u, g as usize);
            let covered = want.iter().all(|id| ct.global_link.contains(id));
            suite.count(covered, || format!("prime {up} node {u} misses a top-{g} link"));
        }
    }
}

/// Engine answers versus the document-scanning oracle over every locus class.
pub fn check_engines_vs_oracle(
    index: &Index,
    scorer: &Scorer,
    suite_em: &mut SuiteResult,
    suite_ram: &mut SuiteResult,
    suite_work: &mut SuiteResult,
) {
    let classes = locus_pattern_classes(&index.gst);
    for (locus, pattern) in classes {
        let ndoc = oracle::oracle_ndoc(&index.collection, &pattern);
        debug_assert!(ndoc > 0);
        for k in [1usize, 2, ndoc / 2, ndoc, 2 * ndoc] {
            let k = k.max(1);
            let want = oracle::oracle_topk(&index.collection, &pattern, k, scorer);

            let mut tape = index.tape_for(Engine::Em);
            let em = index
                .query_at_locus(locus, k, Engine::Em, &mut tape)
                .expect("em query");
            let mut em_pairs: Vec<(DocId, i64)> =
                em.hits.iter().map(|h| (h.doc, h.raw_score)).collect();
            em_pairs.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            suite_em.count(em_pairs == want, || {
                format!("pattern {:?} k {k}", String::from_utf8_lossy(&pattern))
            });

            if index.ram.is_some() {
                let mut tape = index.tape_for(Engine::Ram);
                let ram = index
                    .query_at_locus(locus, k, Engine::Ram, &mut tape)
                    .expect("ram query");
                let ram_pairs: Vec<(DocId, i64)> =
                    ram.hits.iter().map(|h| (h.doc, h.raw_score)).collect();
                suite_ram.count(ram_pairs == want, || {
                    format!("pattern {:?} k {k}", String::from_utf8_lossy(&pattern))
                });
                let ram_idx = index.ram.as_ref().unwrap();
                let small = k < ram_idx.g_small as usize && locus != ROOT;
                let ok = if small {
                    tape.select_calls == k.min(ndoc) as u64 && tape.heap_pops == 0
                } else {
                    tape.heap_pops <= (k as u64) + tape.streams_opened
                        && tape.select_calls == 0
                };
                suite_work.count(ok, || {
                    format!(
                        "pattern {:?} k {k}: pops {} selects {} streams {}",
                        String::from_utf8_lossy(&pattern),
                        tape.heap_pops,
                        tape.select_calls,
                        tape.streams_opened
                    )
                });
            }
        }
    }
}

/// Least-squares fit of I/O = c1*log2(n/B) + c2*z/B + c3 over measured
/// threshold queries, scaled so the bound holds on every fitted sample.
pub fn fit_threshold_io(index: &Index, samples: usize, seed: u64) -> (f64, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = index.collection.total_len() as f64;
    let b = index.block as f64;
    let f1 = (n / b).max(2.0).log2();
    let mut rows: Vec<(f64, f64, f64)> = Vec::new(); // (f2, io, _)
    let l = index.links.len() as u32;
    for _ in 0..samples {
        let u = rng.gen_range(1..=index.gst.node_count() as NodeId);
        let tau = rng.gen_range(1..=l + 1);
        let mut tape = IoTape::new(index.block);
        let z = index
            .topk
            .base
            .thr
            .threshold_query(&index.gst.topo, &index.recs, u, tau, &mut tape)
            .expect("valid")
            .len();
        rows.push((z as f64 / b, tape.total() as f64, 0.0));
    }
    // 3-parameter normal equations on [f1, f2, 1].
    let mut a = [[0.0f64; 3]; 3];
    let mut y = [0.0f64; 3];
    for &(f2, io, _) in &rows {
        let x = [f1, f2, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] += x[i] * x[j];
            }
            y[i] += x[i] * io;
        }
    }
    let c = solve3(a, y).unwrap_or([1.0, 1.0, 1.0]);
    let mut c = [c[0].max(0.0), c[1].max(0.0), c[2].max(1.0)];
    // Envelope calibration: scale up so every fitted sample satisfies it.
    let mut scale = 1.0f64;
    for &(f2, io, _) in &rows {
        let pred = c[0] * f1 + c[1] * f2 + c[2];
        if pred > 0.0 {
            scale = scale.max(io / pred);
        }
    }
    c.iter_mut().for_each(|v| *v *= scale);
    (c[0], c[1], c[2])
}

/// Asserts measured threshold-query I/O against fitted constants at a larger
/// size, within a slack factor. Returns (checked, violations).
pub fn check_threshold_io(
    index: &Index,
    consts: (f64, f64, f64),
    slack: f64,
    samples: usize,
    seed: u64,
) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = index.collection.total_len() as f64;
    let b = index.block as f64;
    let f1 = (n / b).max(2.0).log2();
    let l = index.links.len() as u32;
    let (mut checked, mut viol) = (0, 0);
    for _ in 0..samples {
        let u = rng.gen_range(1..=index.gst.node_count() as NodeId);
        let tau = rng.gen_range(1..=l + 1);
        let mut tape = IoTape::new(index.block);
        let z = index
            .topk
            .base
            .thr
            .threshold_query(&index.gst.topo, &index.recs, u, tau, &mut tape)
            .expect("valid")
            .len();
        let bound = slack * (consts.0 * f1 + consts.1 * (z as f64 / b) + consts.2);
        checked += 1;
        if (tape.total() as f64) > bound {
            viol += 1;
        }
    }
    (checked, viol)
}

fn solve3(mut a: [[f64; 3]; 3], mut y: [f64; 3]) -> Option<[f64; 3]> {
    for i in 0..3 {
        let mut p = i;
        for r in i + 1..3 {
            if a[r][i].abs() > a[p][i].abs() {
                p = r;
            }
        }
        if a[p][i].abs() < 1e-12 {
            return None;
        }
        a.swap(i, p);
        y.swap(i, p);
        for r in 0..3 {
            if r != i {
                let f = a[r][i] / a[i][i];
                for c in 0..3 {
                    a[r][c] -= f * a[i][c];
                }
                y[r] -= f * y[i];
            }
        }
    }
    Some([y[0] / a[0][0], y[1] / a[1][1], y[2] / a[2][2]])
}

/// The default sweep: every suite above on seeded corpora, plus an optional
/// I/O fit. Failures carry a reproducer string.
pub fn verify_sweep(cfg: &VerifyConfig) -> VerifyReport {
    let mut suites = Vec::new();
    let mut info: Vec<(String, f64)> = Vec::new();

    let mut s_lemma1 = SuiteResult::new("link-uniqueness");
    let mut s_lemma2 = SuiteResult::new("link-count-bound");
    let mut s_rank = SuiteResult::new("rank-components");
    let mut s_thr = SuiteResult::new("threshold-vs-oracle");
    let mut s_z = SuiteResult::new("conversion-z-bounds");
    let mut s_cand = SuiteResult::new("candidate-trees");
    let mut s_em = SuiteResult::new("em-topk-vs-oracle");
    let mut s_ram = SuiteResult::new("ram-topk-vs-oracle");
    let mut s_work = SuiteResult::new("ram-work-proxies");
    let mut shared_rank = 0u64;

    for (ci, &seed) in cfg.seeds.iter().enumerate() {
        let alphabet = [2u8, 4, 26][ci % 3];
        let n_target = (cfg.max_n / (1 + ci % 3)).max(40);
        let collection =
            random_collection(GenConfig::new(n_target, 1 + n_target / 12, alphabet, seed));
        let tree = GSTree::build(&collection);
        for &kind in &cfg.scores {
            let scorer = scorer_for(kind, &collection, seed);
            let links = crate::links::build_links(&tree, &collection, &scorer);
            let recs: Vec<LinkRec> = links.iter().map(LinkRec::from).collect();

            s_lemma2.count(links.len() <= 2 * collection.total_len(), || {
                format!("seed {seed} kind {kind:?}: {} links", links.len())
            });
            if collection.total_len() <= 500 {
                check_link_uniqueness(&tree, &collection, &links, &scorer, &mut s_lemma1);
            }
            for block in [1u32, 2, 4, 16, 64] {
                let rc = check_rank_components(&tree, &recs, block);
                shared_rank += rc.shared_rank_child.violations;
                let ok = rc.formula.violations == 0
                    && rc.monotone.violations == 0
                    && rc.paths.violations == 0
                    && rc.rank0_bounds.violations == 0;
                s_rank.count(ok, || format!("seed {seed} block {block}: {rc:?}"));
                check_threshold_oracle(
                    &tree, &links, &recs, block, 400, seed ^ block as u64, &mut s_thr,
                );
            }

            let index = Index::build(
                collection.clone(),
                IndexConfig {
                    block: 4,
                    levels: 2,
                    score: kind,
                    static_weights: (kind == ScoreKind::Static)
                        .then(|| scorer.static_weights().to_vec()),
                    with_ram: true,
                },
            )
            .expect("index builds");
            check_z_bounds(&index, &mut s_z, &[1, 2, 8, 64]);
            if collection.total_len() <= 1000 {
                check_candidate_trees(&tree, &links, &recs, 8, 2, &mut s_cand);
            }
            check_engines_vs_oracle(&index, &scorer, &mut s_em, &mut s_ram, &mut s_work);
        }
    }
    info.push(("shared-rank-children-observed".into(), shared_rank as f64));

    if cfg.io_fit {
        let small =
            random_collection(GenConfig::new(1000, 40, 4, cfg.seeds.first().copied().unwrap_or(1)));
        let idx_small = Index::build(
            small,
            IndexConfig { block: 16, levels: 2, ..Default::default() },
        )
        .expect("fit index");
        let consts = fit_threshold_io(&idx_small, 400, 99);
        info.push(("io-c1".into(), consts.0));
        info.push(("io-c2".into(), consts.1));
        info.push(("io-c3".into(), consts.2));
        let big = random_collection(GenConfig::new(10_000, 100, 4, 0xf17));
        let idx_big = Index::build(
            big,
            IndexConfig { block: 16, levels: 2, ..Default::default() },
        )
        .expect("big index");
        let (checked, viol) = check_threshold_io(&idx_big, consts, 2.0, 400, 100);
        let mut s_io = SuiteResult::new("io-bound-shape");
        s_io.checked = checked;
        s_io.violations = viol;
        suites.push(s_io);
    }

    suites.extend([
        s_lemma1, s_lemma2, s_rank, s_thr, s_z, s_cand, s_em, s_ram, s_work,
    ]);
    let ok = suites.iter().all(|s| s.ok());
    VerifyReport {
        seeds: cfg.seeds.clone(),
        max_n: cfg.max_n,
        scores: cfg.scores.clone(),
        suites,
        info,
        ok,
    }
}
