//! Weighted interval stabbing with priority, answered from a partially
//! persistent sorted list.
//!
//! A sweep over the interval endpoints maintains the set of currently-alive
//! intervals as a linked list in descending weight order. Each distinct
//! endpoint coordinate freezes one version. Persistence uses fat nodes: a
//! node's `next` pointer is a version-stamped history, so old versions stay
//! readable forever and a query never mutates anything. Locating the version
//! and each pointer hop costs a binary search over the stamps (the O(log log)
//! predecessor structure is not replicated here).

use std::collections::BTreeMap;

use crate::io_model::{IoPhase, IoTape};

const NIL: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct FatNode {
    weight: u64,
    payload: u32,
    /// (version, successor) history, versions strictly increasing.
    next: Vec<(u32, u32)>,
}

#[derive(Debug, Clone)]
pub struct PersistentStabbing {
    /// Sorted distinct event coordinates; version v covers query points in
    /// `[coords[v], coords[v+1])`.
    coords: Vec<i64>,
    head: Vec<(u32, u32)>,
    nodes: Vec<FatNode>,
    intervals: usize,
}

fn push_stamped(hist: &mut Vec<(u32, u32)>, version: u32, value: u32) {
    match hist.last_mut() {
        Some(last) if last.0 == version => last.1 = value,
        _ => hist.push((version, value)),
    }
}

fn at_version(hist: &[(u32, u32)], version: u32) -> u32 {
    let i = hist.partition_point(|&(v, _)| v <= version);
    if i == 0 {
        NIL
    } else {
        hist[i - 1].1
    }
}

impl PersistentStabbing {
    /// Builds over `(lo, hi, weight, payload)` intervals, ends inclusive.
    pub fn new(intervals: &[(i64, i64, u64, u32)]) -> Self {
        debug_assert!(intervals.iter().all(|&(lo, hi, _, _)| lo <= hi));
        let mut coords: Vec<i64> = Vec::with_capacity(2 * intervals.len());
        for &(lo, hi, _, _) in intervals {
            coords.push(lo);
            coords.push(hi + 1);
        }
        coords.sort_unstable();
        coords.dedup();

        let mut starts: Vec<(i64, u32)> =
            intervals.iter().enumerate().map(|(i, &(lo, ..))| (lo, i as u32)).collect();
        let mut ends: Vec<(i64, u32)> =
            intervals.iter().enumerate().map(|(i, &(_, hi, ..))| (hi + 1, i as u32)).collect();
        starts.sort_unstable();
        ends.sort_unstable();

        let mut ps = PersistentStabbing {
            coords,
            head: Vec::new(),
            nodes: intervals
                .iter()
                .map(|&(_, _, w, p)| FatNode { weight: w, payload: p, next: Vec::new() })
                .collect(),
            intervals: intervals.len(),
        };

        // Sweep: alive set ordered by (weight desc, payload asc, id asc).
        type Key = (std::cmp::Reverse<u64>, u32, u32);
        let key = |ps: &PersistentStabbing, id: u32| -> Key {
            let n = &ps.nodes[id as usize];
            (std::cmp::Reverse(n.weight), n.payload, id)
        };
        let mut alive: BTreeMap<Key, u32> = BTreeMap::new();
        let (mut si, mut ei) = (0usize, 0usize);
        for (v, &c) in ps.coords.clone().iter().enumerate() {
            let v = v as u32;
            while ei < ends.len() && ends[ei].0 == c {
                let id = ends[ei].1;
                ei += 1;
                let k = key(&ps, id);
                let succ = alive.range((std::ops::Bound::Excluded(&k), std::ops::Bound::Unbounded))
                    .next()
                    .map(|(_, &n)| n)
                    .unwrap_or(NIL);
                let pred = alive.range(..&k).next_back().map(|(_, &n)| n);
                match pred {
                    Some(p) => push_stamped(&mut ps.nodes[p as usize].next, v, succ),
                    None => push_stamped(&mut ps.head, v, succ),
                }
                alive.remove(&k);
            }
            while si < starts.len() && starts[si].0 == c {
                let id = starts[si].1;
                si += 1;
                let k = key(&ps, id);
                let succ = alive.range((std::ops::Bound::Excluded(&k), std::ops::Bound::Unbounded))
                    .next()
                    .map(|(_, &n)| n)
                    .unwrap_or(NIL);
                let pred = alive.range(..&k).next_back().map(|(_, &n)| n);
                push_stamped(&mut ps.nodes[id as usize].next, v, succ);
                match pred {
                    Some(p) => push_stamped(&mut ps.nodes[p as usize].next, v, id),
                    None => push_stamped(&mut ps.head, v, id),
                }
                alive.insert(k, id);
            }
        }
        ps
    }

    pub fn interval_count(&self) -> usize {
        self.intervals
    }

    pub fn version_count(&self) -> usize {
        self.coords.len()
    }

    /// Fat-node pointer entries plus interval records (for space audits).
    pub fn stored_entries(&self) -> usize {
        self.intervals
            + self.head.len()
            + self.nodes.iter().map(|n| n.next.len()).sum::<usize>()
    }

    /// All intervals containing `x` with weight >= `tau`, streamed in weight-
    /// descending order. The stream is read-only; replaying it yields the
    /// identical sequence.
    pub fn query(&self, x: i64, tau: u64) -> StabStream<'_> {
        let v = self.coords.partition_point(|&c| c <= x);
        let cur = if v == 0 {
            NIL // left of every interval start
        } else {
            at_version(&self.head, (v - 1) as u32)
        };
        StabStream { ps: self, version: v.wrapping_sub(1) as u32, cur, tau }
    }

    /// Blocked cost of a finished stab query: version predecessor search plus
    /// a sequential walk over the emitted items.
    pub fn charge(&self, emitted: usize, tape: &mut IoTape, phase: IoPhase) {
        let b = tape.block().max(2) as f64;
        let locate = ((self.coords.len() + 1) as f64).log(b).ceil().max(1.0) as u64;
        tape.charge_blocks(phase, locate);
        tape.charge_words(phase, 2 * (emitted as u64 + 1));
    }
}

/// Cursor over one version's weight-descending list, cut off below `tau`.
pub struct StabStream<'a> {
    ps: &'a PersistentStabbing,
    version: u32,
    cur: u32,
    tau: u64,
}

impl<'a> Iterator for StabStream<'a> {
    /// (weight, payload)
    type Item = (u64, u32);

    fn next(&mut self) -> Option<Self::Item> {
        if self.cur == NIL {
            return None;
        }
        let node = &self.ps.nodes[self.cur as usize];
        if node.weight < self.tau {
            self.cur = NIL;
            return None;
        }
        let item = (node.weight, node.payload);
        self.cur = at_version(&node.next, self.version);
        Some(item)
    }
}
