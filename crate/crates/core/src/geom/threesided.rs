//! 3-sided range reporting: all points in `[x1, x2] x [tau, inf)`.
//!
//! Layout is a priority search tree with node capacity and fan-out tuned to
//! the block size B: each node keeps the highest-y points of its x-range that
//! no ancestor claimed, and its children partition the remainder by x. A
//! query therefore touches O(log_B m) routing nodes plus O(output/B) full
//! nodes, which is what the simulated I/O accounting charges.

use crate::io_model::{IoPhase, IoTape};

#[derive(Debug, Clone)]
struct PstNode {
    x_min: i64,
    x_max: i64,
    /// Stored points, sorted by y descending (ties by x, payload).
    pts: Vec<(i64, i64, u32)>,
    children: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct ThreeSided {
    nodes: Vec<PstNode>,
    capacity: usize,
    len: usize,
}

impl ThreeSided {
    /// Builds over `(x, y, payload)` points. `block` controls node capacity
    /// and fan-out; `block = 1` degenerates to a binary priority search tree.
    pub fn new(points: Vec<(i64, i64, u32)>, block: u32) -> Self {
        let capacity = (block as usize).max(1);
        let fanout = (block as usize).max(2);
        let len = points.len();
        let mut t = ThreeSided { nodes: Vec::new(), capacity, len };
        if len == 0 {
            return t;
        }
        let mut pts = points;
        pts.sort_unstable();
        t.build_range(pts, fanout);
        t
    }

    fn build_range(&mut self, mut pts: Vec<(i64, i64, u32)>, fanout: usize) -> u32 {
        let id = self.nodes.len() as u32;
        let x_min = pts[0].0;
        let x_max = pts[pts.len() - 1].0;
        self.nodes.push(PstNode { x_min, x_max, pts: Vec::new(), children: Vec::new() });
        if pts.len() <= self.capacity {
            pts.sort_unstable_by(|a, b| cmp_y_desc(a, b));
            self.nodes[id as usize].pts = pts;
            return id;
        }
        // Claim the capacity highest-y points; the remainder splits by x.
        let mut order: Vec<u32> = (0..pts.len() as u32).collect();
        order.sort_unstable_by(|&a, &b| cmp_y_desc(&pts[a as usize], &pts[b as usize]));
        let mut keep = vec![false; pts.len()];
        for &i in order.iter().take(self.capacity) {
            keep[i as usize] = true;
        }
        let mut own = Vec::with_capacity(self.capacity);
        let mut rest = Vec::with_capacity(pts.len() - self.capacity);
        for (i, p) in pts.drain(..).enumerate() {
            if keep[i] {
                own.push(p);
            } else {
                rest.push(p);
            }
        }
        own.sort_unstable_by(cmp_y_desc);
        self.nodes[id as usize].pts = own;

        let chunk = rest.len().div_ceil(fanout).max(1);
        let mut children = Vec::new();
        let mut rest = rest.into_iter();
        loop {
            let part: Vec<_> = rest.by_ref().take(chunk).collect();
            if part.is_empty() {
                break;
            }
            children.push(self.build_range(part, fanout));
        }
        self.nodes[id as usize].children = children;
        id
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Words a serialized node occupies; drives the per-visit block charge.
    fn node_words(&self, n: &PstNode) -> u64 {
        2 + 3 * n.pts.len() as u64 + 2 * n.children.len() as u64
    }

    /// Reports every stored point in `[x1, x2] x [tau, inf)` in unspecified
    /// (block-batched) order. Block touches go to `tape` when provided.
    pub fn query(
        &self,
        x1: i64,
        x2: i64,
        tau: i64,
        mut tape: Option<(&mut IoTape, IoPhase)>,
        out: &mut Vec<(i64, i64, u32)>,
    ) {
        if self.nodes.is_empty() || x1 > x2 {
            return;
        }
        let mut stack = vec![0u32];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id as usize];
            if node.x_max < x1 || node.x_min > x2 {
                continue;
            }
            if let Some((tape, phase)) = tape.as_mut() {
                let words = self.node_words(node);
                tape.charge_words(*phase, words);
            }
            let mut exhausted = true;
            for &(x, y, p) in &node.pts {
                if let Some((tape, _)) = tape.as_mut() {
                    tape.touch_link(p);
                }
                if y < tau {
                    exhausted = false;
                    break;
                }
                if x1 <= x && x <= x2 {
                    out.push((x, y, p));
                }
            }
            // Children only hold y-values at or below this node's minimum, so
            // descend only while every stored point cleared the threshold.
            if exhausted {
                stack.extend_from_slice(&node.children);
            }
        }
    }

    /// Query with results sorted by y descending.
    pub fn query_desc(&self, x1: i64, x2: i64, tau: i64) -> Vec<(i64, i64, u32)> {
        let mut out = Vec::new();
        self.query(x1, x2, tau, None, &mut out);
        out.sort_unstable_by(cmp_y_desc);
        out
    }

    /// Total stored point entries (for space audits).
    pub fn stored_entries(&self) -> usize {
        self.len
    }
}

fn cmp_y_desc(a: &(i64, i64, u32), b: &(i64, i64, u32)) -> std::cmp::Ordering {
    (b.1, b.0, b.2).cmp(&(a.1, a.0, a.2))
}
