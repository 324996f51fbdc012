//! The assembled retrieval index: corpus, tree, link table, and the two
//! query engines behind one query surface.

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{CorpusError, DocId, DocumentCollection};
use crate::em_threshold::LinkRec;
use crate::gst::{GSTree, GstError, NodeId};
use crate::io_model::{IoPhase, IoTape};
use crate::links::{build_links, Link, LinksError, ScoreKind, Scorer};
use crate::ram_engine::{build_ram_index, RamError, RamIndex};
use crate::topk_engine::{max_levels, TopKIndex, TopkError};

#[derive(Debug, Error)]
pub enum IndexError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Gst(#[from] GstError),
    #[error(transparent)]
    Links(#[from] LinksError),
    #[error(transparent)]
    Topk(#[from] TopkError),
    #[error(transparent)]
    Ram(#[from] RamError),
    #[error("levels {h} out of range 1..={max}")]
    LevelsOutOfRange { h: u32, max: u32 },
    #[error("index was built without the internal-memory engine")]
    RamNotBuilt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Em,
    Ram,
}

#[derive(Debug, Clone)]
pub struct IndexConfig {
    pub block: u32,
    pub levels: u32,
    pub score: ScoreKind,
    pub static_weights: Option<Vec<i64>>,
    pub with_ram: bool,
}

impl Default for IndexConfig {
    fn default() -> Self {
        IndexConfig {
            block: 64,
            levels: 2,
            score: ScoreKind::Frequency,
            static_weights: None,
            with_ram: false,
        }
    }
}

/// One query result row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Hit {
    pub doc: DocId,
    pub raw_score: i64,
    pub rank_score: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QueryOutcome {
    pub status: &'static str,
    /// EM results are an unordered set; RAM results are score-descending.
    pub hits: Vec<Hit>,
}

pub struct Index {
    pub collection: DocumentCollection,
    pub gst: GSTree,
    pub links: Vec<Link>,
    pub recs: Vec<LinkRec>,
    pub scorer: Scorer,
    pub block: u32,
    pub levels: u32,
    pub topk: TopKIndex,
    pub ram: Option<RamIndex>,
}

impl Index {
    pub fn build(collection: DocumentCollection, config: IndexConfig) -> Result<Self, IndexError> {
        let gst = GSTree::build(&collection);
        let max_h = max_levels(gst.leaf_count(), config.block);
        if config.levels < 1 || config.levels > max_h {
            return Err(IndexError::LevelsOutOfRange { h: config.levels, max: max_h });
        }
        let scorer = match config.score {
            ScoreKind::Static => Scorer::with_static_weights(
                &collection,
                config.static_weights.clone().ok_or(LinksError::MissingWeights)?,
            )?,
            kind => Scorer::new(kind, &collection)?,
        };
        let links = build_links(&gst, &collection, &scorer);
        Self::build_from_parts(
            collection,
            gst,
            links,
            scorer,
            config.block,
            config.levels,
            config.with_ram,
        )
    }

    /// Assembles the engines over pre-built corpus, tree and link table; used
    /// by the container reader.
    pub(crate) fn build_from_parts(
        collection: DocumentCollection,
        gst: GSTree,
        links: Vec<Link>,
        scorer: Scorer,
        block: u32,
        levels: u32,
        with_ram: bool,
    ) -> Result<Self, IndexError> {
        let recs: Vec<LinkRec> = links.iter().map(LinkRec::from).collect();
        let lca = |a, b| gst.lca_fast(a, b);
        let topk = TopKIndex::build(&gst.topo, &recs, block, levels, &lca)?;
        let ram =
            if with_ram { Some(build_ram_index(&gst.topo, &recs, &lca)?) } else { None };
        Ok(Index { collection, gst, links, recs, scorer, block, levels, topk, ram })
    }

    fn hit(&self, link_id: u32) -> Hit {
        let l = &self.links[link_id as usize];
        Hit { doc: l.doc, raw_score: l.raw, rank_score: l.w }
    }

    /// Full query: locus search (with its blocked I/O charge), then the
    /// chosen engine. An absent pattern reports "no match" with no hits.
    pub fn query(
        &self,
        pattern: &[u8],
        k: usize,
        engine: Engine,
        tape: &mut IoTape,
    ) -> Result<QueryOutcome, IndexError> {
        let Some(locus) = self.gst.locus_io(pattern, tape)? else {
            return Ok(QueryOutcome { status: "no match", hits: Vec::new() });
        };
        self.query_at_locus(locus, k, engine, tape)
    }

    /// Retrieval phase only, for callers that already know the locus.
    pub fn query_at_locus(
        &self,
        locus: NodeId,
        k: usize,
        engine: Engine,
        tape: &mut IoTape,
    ) -> Result<QueryOutcome, IndexError> {
        let ids = match engine {
            Engine::Em => self.topk.topk_query(&self.gst.topo, &self.recs, locus, k, tape)?,
            Engine::Ram => {
                let ram = self.ram.as_ref().ok_or(IndexError::RamNotBuilt)?;
                ram.ram_topk(&self.gst.topo, &self.recs, locus, k, tape)?
            }
        };
        Ok(QueryOutcome { status: "ok", hits: ids.iter().map(|&i| self.hit(i)).collect() })
    }

    /// The tape the engines expect: block-size B for the external engine,
    /// word-granular (B = 1) for the internal one.
    pub fn tape_for(&self, engine: Engine) -> IoTape {
        match engine {
            Engine::Em => IoTape::new(self.block),
            Engine::Ram => IoTape::new(1),
        }
    }

    pub fn build_stats(&self) -> BuildStats {
        BuildStats {
            n: self.collection.total_len(),
            docs: self.collection.doc_count(),
            links: self.links.len(),
            block: self.block,
            levels: self.levels,
            score: self.scorer.kind,
            base_grouping: self.topk.base.g,
            base_entries: self.topk.base.stored_entries(),
            level_groupings: self.topk.levels.iter().map(|l| l.g).collect(),
            level_entries: self.topk.levels.iter().map(|l| l.stored_entries()).collect(),
            ram_entries: self.ram.as_ref().map(|r| r.stored_entries()),
            total_entries: self.topk.stored_entries()
                + self.ram.as_ref().map_or(0, |r| r.stored_entries()),
        }
    }

    /// Charge for reporting the final hits (they cross the block boundary).
    pub fn charge_output(&self, hits: usize, tape: &mut IoTape) {
        tape.charge_words(IoPhase::Selection, 2 * hits as u64);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BuildStats {
    pub n: usize,
    pub docs: usize,
    pub links: usize,
    pub block: u32,
    pub levels: u32,
    pub score: ScoreKind,
    pub base_grouping: u32,
    pub base_entries: usize,
    pub level_groupings: Vec<u32>,
    pub level_entries: Vec<usize>,
    pub ram_entries: Option<usize>,
    pub total_entries: usize,
}
