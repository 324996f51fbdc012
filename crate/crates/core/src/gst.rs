//! Generalized suffix tree: construction from a suffix array, preorder
//! numbering, locus search, subtree ranges, and constant-time LCA.
//!
//! Nodes are numbered 1..=N in preorder; id 0 is the virtual dummy parent of
//! the root. The subtree of `u` occupies exactly the preorder interval
//! `[u, subtree_end(u)]`. Every suffix of every terminated document is a leaf,
//! so the leaf count equals the collection length `n`.

use thiserror::Error;

use crate::corpus::{DocId, DocumentCollection, TERMINATOR};
use crate::io_model::{IoPhase, IoTape};

pub type NodeId = u32;

/// Virtual parent of the root; ancestor of every node, never a real node.
pub const DUMMY: NodeId = 0;
pub const ROOT: NodeId = 1;

#[derive(Debug, Error)]
pub enum GstError {
    #[error("empty pattern")]
    EmptyPattern,
    #[error("invalid node id {0}")]
    InvalidNode(NodeId),
}

/// Bare tree shape shared by the full GST and the small candidate trees:
/// parent links, preorder subtree intervals, leaf counts and node depths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    /// Indexed by node id; `parent[ROOT] == DUMMY`. Slot 0 is unused.
    pub parent: Vec<NodeId>,
    pub subtree_end: Vec<NodeId>,
    /// Number of leaves under each node.
    pub size: Vec<u32>,
    /// Nodes on the root path; `depth[ROOT] == 1`.
    pub depth: Vec<u32>,
    /// Leaves in preorder.
    pub leaves: Vec<NodeId>,
    child_start: Vec<u32>,
    child_list: Vec<NodeId>,
}

impl Topology {
    /// Builds the derived arrays from parent links. `parent` must describe a
    /// preorder-numbered tree (children have larger ids than their parent).
    pub fn from_parents(parent: Vec<NodeId>) -> Self {
        let n = parent.len() - 1; // ids 1..=n
        let mut counts = vec![0u32; n + 2];
        for u in 2..=n {
            counts[parent[u] as usize + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let child_start = counts.clone();
        let mut fill = counts;
        let mut child_list = vec![0 as NodeId; n.saturating_sub(1)];
        for u in 2..=n {
            let p = parent[u] as usize;
            child_list[fill[p] as usize] = u as NodeId;
            fill[p] += 1;
        }

        let mut subtree_end = vec![0 as NodeId; n + 1];
        let mut size = vec![0u32; n + 1];
        let mut depth = vec![0u32; n + 1];
        let mut leaves = Vec::new();
        for u in (1..=n).rev() {
            let cs = child_start[u] as usize..child_start[u + 1] as usize;
            if cs.is_empty() {
                subtree_end[u] = u as NodeId;
                size[u] = 1;
                leaves.push(u as NodeId);
            } else {
                let mut end = u as NodeId;
                let mut sz = 0;
                for &c in &child_list[cs] {
                    end = end.max(subtree_end[c as usize]);
                    sz += size[c as usize];
                }
                subtree_end[u] = end;
                size[u] = sz;
            }
        }
        leaves.reverse();
        depth[1] = 1;
        for u in 2..=n {
            depth[u] = depth[parent[u] as usize] + 1;
        }
        Topology { parent, subtree_end, size, depth, leaves, child_start, child_list }
    }

    pub fn node_count(&self) -> usize {
        self.parent.len() - 1
    }

    pub fn is_valid(&self, u: NodeId) -> bool {
        u >= 1 && (u as usize) < self.parent.len()
    }

    pub fn children(&self, u: NodeId) -> &[NodeId] {
        let u = u as usize;
        &self.child_list[self.child_start[u] as usize..self.child_start[u + 1] as usize]
    }

    pub fn is_leaf(&self, u: NodeId) -> bool {
        self.subtree_end[u as usize] == u
    }

    /// Ancestor-or-equal test via preorder intervals; the dummy is an
    /// ancestor of everything.
    pub fn is_ancestor(&self, a: NodeId, b: NodeId) -> bool {
        a == DUMMY || (a <= b && b <= self.subtree_end[a as usize])
    }

    pub fn is_proper_ancestor(&self, a: NodeId, b: NodeId) -> bool {
        a != b && self.is_ancestor(a, b)
    }

    pub fn subtree_range(&self, u: NodeId) -> (NodeId, NodeId) {
        (u, self.subtree_end[u as usize])
    }

    /// LCA by walking parent links; linear in depth, used on small trees.
    pub fn lca_walk(&self, mut a: NodeId, mut b: NodeId) -> NodeId {
        while a != b {
            if a == DUMMY || b == DUMMY {
                return DUMMY;
            }
            if self.depth[a as usize] >= self.depth[b as usize] {
                a = self.parent[a as usize];
            } else {
                b = self.parent[b as usize];
            }
        }
        a
    }
}

/// The generalized suffix tree over a document collection.
#[derive(Debug, Clone)]
pub struct GSTree {
    pub topo: Topology,
    text: Vec<u8>,
    n: usize,
    /// Half-open edge label span into the global text; empty for the root.
    pub edge_start: Vec<u32>,
    pub edge_end: Vec<u32>,
    /// Length of `prefix(u)` in bytes.
    pub strdepth: Vec<u32>,
    /// Owning document per leaf, 0 for internal nodes.
    pub leaf_doc: Vec<DocId>,
    /// Suffix offset within the owning document, per leaf.
    pub leaf_off: Vec<u32>,
    /// Global text position of the suffix at each leaf (internal nodes carry
    /// the position of their first leaf, which anchors the edge span).
    pub node_pos: Vec<u32>,
    /// Global position -> leaf node id.
    pub pos_to_leaf: Vec<NodeId>,
    euler: Vec<NodeId>,
    euler_first: Vec<u32>,
    rmq: EulerRmq,
}

pub fn build_gst(collection: &DocumentCollection) -> GSTree {
    GSTree::build(collection)
}

impl GSTree {
    pub fn build(collection: &DocumentCollection) -> Self {
        let text = collection.global_text().to_vec();
        let n = text.len();
        let sa = suffix_array(&text);
        let lcp_full = lcp_kasai(&text, &sa);

        // Body length of the suffix at each position: bytes before its own
        // document terminator. Branching happens no deeper than the body, so
        // every leaf keeps its terminator byte on the final edge.
        let mut body = vec![0u32; n];
        for d in 1..=collection.doc_count() as DocId {
            let end = collection.doc_end(d);
            for p in collection.doc_start(d)..=end {
                body[p] = (end - p) as u32;
            }
        }
        let mut lcp = vec![0u32; n];
        for i in 1..n {
            lcp[i] = lcp_full[i].min(body[sa[i - 1] as usize]).min(body[sa[i] as usize]);
        }

        let tree = SuffixTreeBuilder::run(&sa, &lcp, &body);
        let nn = tree.parent.len() - 1;

        let topo = Topology::from_parents(tree.parent);
        let mut leaf_doc = vec![0 as DocId; nn + 1];
        let mut leaf_off = vec![0u32; nn + 1];
        let mut pos_to_leaf = vec![0 as NodeId; n];
        for u in 1..=nn {
            if topo.is_leaf(u as NodeId) {
                let p = tree.node_pos[u] as usize;
                leaf_doc[u] = collection.doc_at(p).expect("leaf position in range");
                leaf_off[u] = collection.local_offset(p) as u32;
                pos_to_leaf[p] = u as NodeId;
            }
        }

        let (euler, euler_first, rmq) = build_euler_rmq(&topo);
        GSTree {
            topo,
            text,
            n,
            edge_start: tree.edge_start,
            edge_end: tree.edge_end,
            strdepth: tree.strdepth,
            leaf_doc,
            leaf_off,
            node_pos: tree.node_pos,
            pos_to_leaf,
            euler,
            euler_first,
            rmq,
        }
    }

    /// Reassembles a tree from its serialized arrays; derived structures
    /// (preorder intervals, Euler tour, position maps) are rebuilt.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        text: Vec<u8>,
        parent: Vec<NodeId>,
        edge_start: Vec<u32>,
        edge_end: Vec<u32>,
        strdepth: Vec<u32>,
        node_pos: Vec<u32>,
        leaf_doc: Vec<DocId>,
        leaf_off: Vec<u32>,
    ) -> Self {
        let n = text.len();
        let topo = Topology::from_parents(parent);
        let mut pos_to_leaf = vec![0 as NodeId; n];
        for u in 1..=topo.node_count() {
            if topo.is_leaf(u as NodeId) {
                pos_to_leaf[node_pos[u] as usize] = u as NodeId;
            }
        }
        let (euler, euler_first, rmq) = build_euler_rmq(&topo);
        GSTree {
            topo,
            text,
            n,
            edge_start,
            edge_end,
            strdepth,
            leaf_doc,
            leaf_off,
            node_pos,
            pos_to_leaf,
            euler,
            euler_first,
            rmq,
        }
    }

    pub fn text(&self) -> &[u8] {
        &self.text
    }

    /// Leaf count == collection length n.
    pub fn leaf_count(&self) -> usize {
        self.n
    }

    pub fn node_count(&self) -> usize {
        self.topo.node_count()
    }

    /// Path label of `u` (for the root this is empty).
    pub fn prefix(&self, u: NodeId) -> &[u8] {
        let p = self.node_pos[u as usize] as usize;
        &self.text[p..p + self.strdepth[u as usize] as usize]
    }

    /// Highest node whose path label has `pattern` as a prefix, or `None`
    /// when the pattern occurs nowhere. A pattern ending mid-edge resolves to
    /// the edge's lower node. Patterns containing the terminator byte cannot
    /// occur inside any document and yield `None`.
    pub fn locus(&self, pattern: &[u8]) -> Result<Option<NodeId>, GstError> {
        if pattern.is_empty() {
            return Err(GstError::EmptyPattern);
        }
        if pattern.contains(&TERMINATOR) {
            return Ok(None);
        }
        let mut u = ROOT;
        let mut matched = 0usize;
        while matched < pattern.len() {
            let next = self
                .topo
                .children(u)
                .iter()
                .copied()
                .find(|&c| self.text[self.edge_start[c as usize] as usize] == pattern[matched]);
            let Some(c) = next else { return Ok(None) };
            let es = self.edge_start[c as usize] as usize;
            let ee = self.edge_end[c as usize] as usize;
            let take = (ee - es).min(pattern.len() - matched);
            if self.text[es..es + take] != pattern[matched..matched + take] {
                return Ok(None);
            }
            matched += take;
            u = c;
        }
        Ok(Some(u))
    }

    /// `locus` with the blocked-search I/O charge of a disk-resident pattern
    /// descent: ceil(p/B) + ceil(log_B n) blocks on the tape's locus phase.
    pub fn locus_io(
        &self,
        pattern: &[u8],
        tape: &mut IoTape,
    ) -> Result<Option<NodeId>, GstError> {
        let r = self.locus(pattern)?;
        let b = tape.block() as f64;
        let logb = if self.n <= 1 { 1.0 } else { (self.n as f64).log(b.max(2.0)).ceil() };
        let p_blocks = (pattern.len() as u64).div_ceil(tape.block() as u64);
        tape.charge_blocks(IoPhase::Locus, p_blocks + logb as u64);
        Ok(r)
    }

    /// Inclusive preorder interval of `u`'s subtree. The right endpoint is
    /// the preorder id of the right-most leaf under `u`.
    pub fn subtree_range(&self, u: NodeId) -> Result<(NodeId, NodeId), GstError> {
        if !self.topo.is_valid(u) {
            return Err(GstError::InvalidNode(u));
        }
        Ok(self.topo.subtree_range(u))
    }

    /// Constant-time LCA via Euler tour + sparse-table range minimum.
    pub fn lca(&self, a: NodeId, b: NodeId) -> Result<NodeId, GstError> {
        if !self.topo.is_valid(a) {
            return Err(GstError::InvalidNode(a));
        }
        if !self.topo.is_valid(b) {
            return Err(GstError::InvalidNode(b));
        }
        Ok(self.lca_fast(a, b))
    }

    pub(crate) fn lca_fast(&self, a: NodeId, b: NodeId) -> NodeId {
        let (mut i, mut j) = (self.euler_first[a as usize], self.euler_first[b as usize]);
        if i > j {
            std::mem::swap(&mut i, &mut j);
        }
        let idx = self.rmq.argmin(i as usize, j as usize);
        self.euler[idx]
    }

    /// Leaf node for the suffix starting at global position `pos`.
    pub fn leaf_at(&self, pos: usize) -> NodeId {
        self.pos_to_leaf[pos]
    }
}

struct BuiltTree {
    parent: Vec<NodeId>,
    edge_start: Vec<u32>,
    edge_end: Vec<u32>,
    strdepth: Vec<u32>,
    node_pos: Vec<u32>,
}

/// Stack-based suffix-tree construction over (SA, LCP): leaves are appended
/// left to right and internal nodes are materialized where the LCP drops.
struct SuffixTreeBuilder {
    strdepth: Vec<u32>,
    parent: Vec<u32>,
    children: Vec<Vec<u32>>,
    pos: Vec<u32>,
}

impl SuffixTreeBuilder {
    fn new_node(&mut self, strdepth: u32, pos: u32) -> u32 {
        self.strdepth.push(strdepth);
        self.parent.push(u32::MAX);
        self.children.push(Vec::new());
        self.pos.push(pos);
        (self.strdepth.len() - 1) as u32
    }

    fn attach(&mut self, parent: u32, child: u32) {
        self.parent[child as usize] = parent;
        self.children[parent as usize].push(child);
    }

    fn run(sa: &[u32], lcp: &[u32], body: &[u32]) -> BuiltTree {
        let n = sa.len();
        let mut b = SuffixTreeBuilder {
            strdepth: Vec::with_capacity(2 * n),
            parent: Vec::with_capacity(2 * n),
            children: Vec::with_capacity(2 * n),
            pos: Vec::with_capacity(2 * n),
        };
        let root = b.new_node(0, sa[0]);
        let mut stack: Vec<u32> = vec![root];
        for i in 0..n {
            let pos = sa[i];
            let leaf_depth = body[pos as usize] + 1; // body plus terminator
            if i > 0 {
                let split = lcp[i];
                let mut last = u32::MAX;
                while b.strdepth[*stack.last().unwrap() as usize] > split {
                    last = stack.pop().unwrap();
                }
                let top = *stack.last().unwrap();
                if b.strdepth[top as usize] < split {
                    // Introduce a branching node between `top` and `last`.
                    let mid = b.new_node(split, b.pos[last as usize]);
                    let slot = b.children[top as usize]
                        .iter()
                        .rposition(|&c| c == last)
                        .expect("popped node is a child of the new top");
                    b.children[top as usize][slot] = mid;
                    b.parent[mid as usize] = top;
                    b.attach(mid, last);
                    // attach() pushed `last` again; keep it as first child.
                    stack.push(mid);
                }
            }
            let leaf = b.new_node(leaf_depth, pos);
            let top = *stack.last().unwrap();
            b.attach(top, leaf);
            stack.push(leaf);
        }

        // Preorder renumber (iterative; trees can be path-shaped).
        let m = b.strdepth.len();
        let mut order = vec![0u32; m]; // tmp id -> preorder id
        let mut preorder = Vec::with_capacity(m);
        let mut dfs: Vec<u32> = vec![root];
        while let Some(t) = dfs.pop() {
            order[t as usize] = (preorder.len() + 1) as u32;
            preorder.push(t);
            for &c in b.children[t as usize].iter().rev() {
                dfs.push(c);
            }
        }

        let mut parent = vec![0 as NodeId; m + 1];
        let mut edge_start = vec![0u32; m + 1];
        let mut edge_end = vec![0u32; m + 1];
        let mut strdepth = vec![0u32; m + 1];
        let mut node_pos = vec![0u32; m + 1];
        for (k, &t) in preorder.iter().enumerate() {
            let id = k + 1;
            let t = t as usize;
            strdepth[id] = b.strdepth[t];
            node_pos[id] = b.pos[t];
            if t == root as usize {
                parent[id] = DUMMY;
            } else {
                let p = b.parent[t] as usize;
                parent[id] = order[p];
                let ps = b.strdepth[p];
                edge_start[id] = b.pos[t] + ps;
                edge_end[id] = b.pos[t] + b.strdepth[t];
            }
        }
        BuiltTree { parent, edge_start, edge_end, strdepth, node_pos }
    }
}

/// Suffix array by prefix doubling; O(n log^2 n), deterministic.
pub fn suffix_array(text: &[u8]) -> Vec<u32> {
    let n = text.len();
    if n == 0 {
        return Vec::new();
    }
    let mut sa: Vec<u32> = (0..n as u32).collect();
    let mut rank: Vec<u32> = text.iter().map(|&b| b as u32).collect();
    let mut tmp = vec![0u32; n];
    let mut k = 1usize;
    loop {
        let key = |i: u32| -> u64 {
            let i = i as usize;
            let r1 = rank[i] as u64 + 1;
            let r2 = if i + k < n { rank[i + k] as u64 + 1 } else { 0 };
            (r1 << 32) | r2
        };
        sa.sort_unstable_by_key(|&i| key(i));
        tmp[sa[0] as usize] = 0;
        for j in 1..n {
            let bump = (key(sa[j]) != key(sa[j - 1])) as u32;
            tmp[sa[j] as usize] = tmp[sa[j - 1] as usize] + bump;
        }
        rank.copy_from_slice(&tmp);
        if rank[sa[n - 1] as usize] as usize == n - 1 || k >= n {
            break;
        }
        k *= 2;
    }
    sa
}

/// LCP of lexicographically adjacent suffixes (Kasai); `lcp[0] == 0`.
pub fn lcp_kasai(text: &[u8], sa: &[u32]) -> Vec<u32> {
    let n = text.len();
    let mut inv = vec![0u32; n];
    for (i, &s) in sa.iter().enumerate() {
        inv[s as usize] = i as u32;
    }
    let mut lcp = vec![0u32; n];
    let mut h = 0usize;
    for i in 0..n {
        let r = inv[i] as usize;
        if r > 0 {
            let j = sa[r - 1] as usize;
            while i + h < n && j + h < n && text[i + h] == text[j + h] {
                h += 1;
            }
            lcp[r] = h as u32;
            h = h.saturating_sub(1);
        } else {
            h = 0;
        }
    }
    lcp
}

#[derive(Debug, Clone)]
struct EulerRmq {
    depth: Vec<u32>,
    table: Vec<u32>, // argmin sparse table, level-major
    len: usize,
}

impl EulerRmq {
    fn new(depth: Vec<u32>) -> Self {
        let len = depth.len();
        let levels = if len <= 1 { 1 } else { len.ilog2() as usize + 1 };
        let mut table = vec![0u32; levels * len];
        for i in 0..len {
            table[i] = i as u32;
        }
        for l in 1..levels {
            let half = 1usize << (l - 1);
            for i in 0..=(len - (1 << l)) {
                let a = table[(l - 1) * len + i];
                let b = table[(l - 1) * len + i + half];
                table[l * len + i] = if depth[a as usize] <= depth[b as usize] { a } else { b };
            }
        }
        EulerRmq { depth, table, len }
    }

    /// Index of the minimum depth in `[i, j]`.
    fn argmin(&self, i: usize, j: usize) -> usize {
        let l = if i == j { 0 } else { (j - i + 1).ilog2() as usize };
        let a = self.table[l * self.len + i];
        let b = self.table[l * self.len + j + 1 - (1 << l)];
        if self.depth[a as usize] <= self.depth[b as usize] {
            a as usize
        } else {
            b as usize
        }
    }
}

fn build_euler_rmq(topo: &Topology) -> (Vec<NodeId>, Vec<u32>, EulerRmq) {
    let n = topo.node_count();
    let mut euler = Vec::with_capacity(2 * n);
    let mut first = vec![u32::MAX; n + 1];
    // Iterative Euler tour: (node, next child index).
    let mut stack: Vec<(NodeId, usize)> = vec![(ROOT, 0)];
    euler.push(ROOT);
    first[ROOT as usize] = 0;
    while let Some(&mut (u, ref mut ci)) = stack.last_mut() {
        let kids = topo.children(u);
        if *ci < kids.len() {
            let c = kids[*ci];
            *ci += 1;
            if first[c as usize] == u32::MAX {
                first[c as usize] = euler.len() as u32;
            }
            euler.push(c);
            stack.push((c, 0));
        } else {
            stack.pop();
            if let Some(&(p, _)) = stack.last() {
                euler.push(p);
            }
        }
    }
    let depths: Vec<u32> = euler.iter().map(|&u| topo.depth[u as usize]).collect();
    let rmq = EulerRmq::new(depths);
    (euler, first, rmq)
}
