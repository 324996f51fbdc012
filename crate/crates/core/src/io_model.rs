//! Simulated block-I/O accounting.
//!
//! Costs are measured in transfers of B-word blocks rather than word
//! operations: a structure traversal charges one touch per distinct B-word
//! region it reads, and sequential scans are charged length/B. Every query
//! owns its own tape; tapes are never shared between queries.

use serde::Serialize;

/// Query phases tracked separately on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IoPhase {
    Locus,
    Equi,
    High,
    Conversion,
    Selection,
}

const PHASES: usize = 5;

/// Per-query block-transfer counters plus the work-proxy counters used by the
/// internal-memory engine.
#[derive(Debug, Clone)]
pub struct IoTape {
    block: u32,
    phase_blocks: [u64; PHASES],
    pub heap_pops: u64,
    pub select_calls: u64,
    pub streams_opened: u64,
    pub selection_touched: u64,
    /// When set, every link id inspected by a query is recorded here.
    pub touched_links: Option<Vec<u32>>,
}

impl IoTape {
    pub fn new(block: u32) -> Self {
        IoTape {
            block: block.max(1),
            phase_blocks: [0; PHASES],
            heap_pops: 0,
            select_calls: 0,
            streams_opened: 0,
            selection_touched: 0,
            touched_links: None,
        }
    }

    /// Tape that additionally traces every inspected link id.
    pub fn tracing(block: u32) -> Self {
        let mut t = Self::new(block);
        t.touched_links = Some(Vec::new());
        t
    }

    pub fn block(&self) -> u32 {
        self.block
    }

    pub fn charge_blocks(&mut self, phase: IoPhase, blocks: u64) {
        self.phase_blocks[phase as usize] += blocks;
    }

    /// Charges ceil(words / B) blocks for a sequential scan of `words` words.
    pub fn charge_words(&mut self, phase: IoPhase, words: u64) {
        if words > 0 {
            self.charge_blocks(phase, words.div_ceil(self.block as u64));
        }
    }

    pub fn touch_link(&mut self, link: u32) {
        if let Some(t) = self.touched_links.as_mut() {
            t.push(link);
        }
    }

    pub fn phase(&self, phase: IoPhase) -> u64 {
        self.phase_blocks[phase as usize]
    }

    pub fn total(&self) -> u64 {
        self.phase_blocks.iter().sum()
    }

    pub fn reset(&mut self) {
        self.phase_blocks = [0; PHASES];
        self.heap_pops = 0;
        self.select_calls = 0;
        self.streams_opened = 0;
        self.selection_touched = 0;
        if let Some(t) = self.touched_links.as_mut() {
            t.clear();
        }
    }

    pub fn stats(&self) -> IoStats {
        IoStats {
            block: self.block,
            locus: self.phase(IoPhase::Locus),
            equi: self.phase(IoPhase::Equi),
            high: self.phase(IoPhase::High),
            conversion: self.phase(IoPhase::Conversion),
            selection: self.phase(IoPhase::Selection),
            total: self.total(),
            heap_pops: self.heap_pops,
            select_calls: self.select_calls,
            streams_opened: self.streams_opened,
        }
    }
}

/// Snapshot of a tape, serializable for query `--stats` output and reports.
#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct IoStats {
    pub block: u32,
    pub locus: u64,
    pub equi: u64,
    pub high: u64,
    pub conversion: u64,
    pub selection: u64,
    pub total: u64,
    pub heap_pops: u64,
    pub select_calls: u64,
    pub streams_opened: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn totals_are_phase_sums() {
        let mut t = IoTape::new(4);
        t.charge_blocks(IoPhase::Locus, 3);
        t.charge_words(IoPhase::Equi, 9); // ceil(9/4) = 3
        t.charge_words(IoPhase::High, 0);
        assert_eq!(t.phase(IoPhase::Equi), 3);
        assert_eq!(t.total(), 6);
        t.reset();
        assert_eq!(t.total(), 0);
    }
}
