//! Index container: magic "TKDR", version, header, checksummed sections.
//!
//! All integers are little-endian and fixed-width. The corpus, suffix-tree
//! arrays and the link table are stored bit-exactly; the engine sections
//! record their build parameters and entry-count audits, and the engine
//! structures themselves are rebuilt deterministically on open (the build is
//! pure, so a reopened index answers queries identically — covered by tests).

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::corpus::DocumentCollection;
use crate::gst::GSTree;
use crate::index::{Index, IndexError};
use crate::links::{Link, ScoreKind, Scorer};

pub const MAGIC: [u8; 4] = *b"TKDR";
pub const VERSION: u32 = 1;

mod tag {
    pub const MANIFEST: u32 = 1;
    pub const CORPUS: u32 = 2;
    pub const GST: u32 = 3;
    pub const LINKS: u32 = 4;
    pub const THRESHOLD: u32 = 5;
    pub const TOPK: u32 = 6;
    pub const RAM: u32 = 7;
}

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("container io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic; not an index container")]
    BadMagic,
    #[error("unsupported container version {0}")]
    BadVersion(u32),
    #[error("checksum mismatch in section {0}")]
    ChecksumMismatch(u32),
    #[error("missing section {0}")]
    MissingSection(u32),
    #[error("malformed section {0}")]
    Malformed(u32),
    #[error(transparent)]
    Index(#[from] IndexError),
}

fn fnv1a64(data: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in data {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Default)]
struct Enc {
    buf: Vec<u8>,
}

impl Enc {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, v: &[u8]) {
        self.u64(v.len() as u64);
        self.buf.extend_from_slice(v);
    }
    fn vec_u32(&mut self, v: &[u32]) {
        self.u64(v.len() as u64);
        for &x in v {
            self.u32(x);
        }
    }
    fn vec_i64(&mut self, v: &[i64]) {
        self.u64(v.len() as u64);
        for &x in v {
            self.i64(x);
        }
    }
}

struct Dec<'a> {
    buf: &'a [u8],
    pos: usize,
    tag: u32,
}

impl<'a> Dec<'a> {
    fn new(buf: &'a [u8], tag: u32) -> Self {
        Dec { buf, pos: 0, tag }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8], ContainerError> {
        if self.pos + n > self.buf.len() {
            return Err(ContainerError::Malformed(self.tag));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, ContainerError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, ContainerError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, ContainerError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn i64(&mut self) -> Result<i64, ContainerError> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn len(&mut self) -> Result<usize, ContainerError> {
        let n = self.u64()?;
        if n > self.buf.len() as u64 * 8 + 64 {
            return Err(ContainerError::Malformed(self.tag));
        }
        Ok(n as usize)
    }
    fn bytes(&mut self) -> Result<Vec<u8>, ContainerError> {
        let n = self.len()?;
        Ok(self.take(n)?.to_vec())
    }
    fn vec_u32(&mut self) -> Result<Vec<u32>, ContainerError> {
        let n = self.len()?;
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(self.u32()?);
        }
        Ok(v)
    }
    fn vec_i64(&mut self) -> Result<Vec<i64>, ContainerError> {
        let n = self.len()?;
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(self.i64()?);
        }
        Ok(v)
    }
}

fn score_kind_code(k: ScoreKind) -> u8 {
    match k {
        ScoreKind::Frequency => 0,
        ScoreKind::MinDist => 1,
        ScoreKind::Static => 2,
    }
}

fn score_kind_from(code: u8) -> Result<ScoreKind, ContainerError> {
    Ok(match code {
        0 => ScoreKind::Frequency,
        1 => ScoreKind::MinDist,
        2 => ScoreKind::Static,
        _ => return Err(ContainerError::Malformed(0)),
    })
}

/// Writes the index container to `path`.
pub fn save(index: &Index, path: &Path) -> Result<(), ContainerError> {
    let mut sections: Vec<(u32, Vec<u8>)> = Vec::new();

    let manifest: Vec<String> = index.collection.names().to_vec();
    sections.push((
        tag::MANIFEST,
        serde_json::to_vec(&manifest).expect("manifest serializes"),
    ));

    let mut e = Enc::default();
    e.u32(index.collection.doc_count() as u32);
    for d in 1..=index.collection.doc_count() as u32 {
        e.bytes(index.collection.doc(d));
    }
    sections.push((tag::CORPUS, e.buf));

    let mut e = Enc::default();
    let t = &index.gst;
    let nn = t.node_count();
    e.u64(nn as u64);
    e.vec_u32(&t.topo.parent);
    e.vec_u32(&t.edge_start);
    e.vec_u32(&t.edge_end);
    e.vec_u32(&t.strdepth);
    e.vec_u32(&t.node_pos);
    e.vec_u32(&t.topo.size);
    e.vec_u32(&t.leaf_doc);
    e.vec_u32(&t.leaf_off);
    sections.push((tag::GST, e.buf));

    let mut e = Enc::default();
    e.u64(index.links.len() as u64);
    for l in &index.links {
        e.u32(l.origin);
    }
    for l in &index.links {
        e.u32(l.target);
    }
    for l in &index.links {
        e.u32(l.doc);
    }
    for l in &index.links {
        e.u32(l.w);
    }
    for l in &index.links {
        e.i64(l.raw);
    }
    e.vec_i64(index.scorer.static_weights());
    sections.push((tag::LINKS, e.buf));

    let stats = index.build_stats();
    let mut e = Enc::default();
    e.u32(index.block);
    e.u64(index.topk.base.thr.stored_entries() as u64);
    sections.push((tag::THRESHOLD, e.buf));

    let mut e = Enc::default();
    e.u32(index.topk.base.g);
    e.u64(stats.base_entries as u64);
    e.u32(stats.level_groupings.len() as u32);
    for (g, n) in stats.level_groupings.iter().zip(&stats.level_entries) {
        e.u32(*g);
        e.u64(*n as u64);
    }
    sections.push((tag::TOPK, e.buf));

    if let Some(ram) = &index.ram {
        let mut e = Enc::default();
        e.u32(ram.g_small);
        e.u64(ram.stored_entries() as u64);
        e.u64(ram.bitvec_bits() as u64);
        sections.push((tag::RAM, e.buf));
    }

    let mut header = Enc::default();
    header.buf.extend_from_slice(&MAGIC);
    header.u32(VERSION);
    header.u64(index.collection.total_len() as u64);
    header.u32(index.collection.doc_count() as u32);
    header.u32(index.block);
    header.u32(index.levels);
    header.u8(score_kind_code(index.scorer.kind));
    header.u8(index.ram.is_some() as u8);
    header.u32(sections.len() as u32);

    // Section table: tag, offset, length, checksum.
    let table_len = sections.len() * (4 + 8 + 8 + 8);
    let mut offset = (header.buf.len() + table_len) as u64;
    let mut table = Enc::default();
    for (tag, payload) in &sections {
        table.u32(*tag);
        table.u64(offset);
        table.u64(payload.len() as u64);
        table.u64(fnv1a64(payload));
        offset += payload.len() as u64;
    }

    let mut f = std::fs::File::create(path)?;
    f.write_all(&header.buf)?;
    f.write_all(&table.buf)?;
    for (_, payload) in &sections {
        f.write_all(payload)?;
    }
    Ok(())
}

/// Opens a container, validates checksums, and rebuilds the engines.
pub fn open(path: &Path) -> Result<Index, ContainerError> {
    let mut raw = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut raw)?;
    if raw.len() < 4 || raw[0..4] != MAGIC {
        return Err(ContainerError::BadMagic);
    }
    let mut h = Dec::new(&raw[4..], 0);
    let version = h.u32()?;
    if version != VERSION {
        return Err(ContainerError::BadVersion(version));
    }
    let _n = h.u64()?;
    let _d = h.u32()?;
    let block = h.u32()?;
    let levels = h.u32()?;
    let score = score_kind_from(h.u8()?)?;
    let has_ram = h.u8()? != 0;
    let n_sections = h.u32()? as usize;

    let mut table = Vec::with_capacity(n_sections);
    for _ in 0..n_sections {
        let tag = h.u32()?;
        let off = h.u64()? as usize;
        let len = h.u64()? as usize;
        let sum = h.u64()?;
        table.push((tag, off, len, sum));
    }
    let section = |tag: u32| -> Result<&[u8], ContainerError> {
        let &(_, off, len, sum) = table
            .iter()
            .find(|&&(t, ..)| t == tag)
            .ok_or(ContainerError::MissingSection(tag))?;
        let payload =
            raw.get(off..off + len).ok_or(ContainerError::Malformed(tag))?;
        if fnv1a64(payload) != sum {
            return Err(ContainerError::ChecksumMismatch(tag));
        }
        Ok(payload)
    };

    let names: Vec<String> = serde_json::from_slice(section(tag::MANIFEST)?)
        .map_err(|_| ContainerError::Malformed(tag::MANIFEST))?;

    let mut d = Dec::new(section(tag::CORPUS)?, tag::CORPUS);
    let doc_count = d.u32()? as usize;
    let mut docs = Vec::with_capacity(doc_count);
    for _ in 0..doc_count {
        docs.push(d.bytes()?);
    }
    if names.len() != doc_count {
        return Err(ContainerError::Malformed(tag::MANIFEST));
    }
    let collection = DocumentCollection::from_docs(docs, names)
        .map_err(|_| ContainerError::Malformed(tag::CORPUS))?;

    let mut d = Dec::new(section(tag::GST)?, tag::GST);
    let _nn = d.u64()?;
    let parent = d.vec_u32()?;
    let edge_start = d.vec_u32()?;
    let edge_end = d.vec_u32()?;
    let strdepth = d.vec_u32()?;
    let node_pos = d.vec_u32()?;
    let size = d.vec_u32()?;
    let leaf_doc = d.vec_u32()?;
    let leaf_off = d.vec_u32()?;
    let gst = GSTree::from_parts(
        collection.global_text().to_vec(),
        parent,
        edge_start,
        edge_end,
        strdepth,
        node_pos,
        leaf_doc,
        leaf_off,
    );
    if gst.topo.size != size {
        return Err(ContainerError::Malformed(tag::GST));
    }

    let mut d = Dec::new(section(tag::LINKS)?, tag::LINKS);
    let ln = d.u64()? as usize;
    let origins = (0..ln).map(|_| d.u32()).collect::<Result<Vec<_>, _>>()?;
    let targets = (0..ln).map(|_| d.u32()).collect::<Result<Vec<_>, _>>()?;
    let docs_ = (0..ln).map(|_| d.u32()).collect::<Result<Vec<_>, _>>()?;
    let ws = (0..ln).map(|_| d.u32()).collect::<Result<Vec<_>, _>>()?;
    let raws = (0..ln).map(|_| d.i64()).collect::<Result<Vec<_>, _>>()?;
    let weights = d.vec_i64()?;
    let links: Vec<Link> = (0..ln)
        .map(|i| Link {
            origin: origins[i],
            target: targets[i],
            doc: docs_[i],
            w: ws[i],
            raw: raws[i],
        })
        .collect();
    let scorer = Scorer::rebuild(score, weights, collection.total_len());

    let mut d = Dec::new(section(tag::THRESHOLD)?, tag::THRESHOLD);
    let thr_block = d.u32()?;
    let thr_entries = d.u64()?;
    if thr_block != block {
        return Err(ContainerError::Malformed(tag::THRESHOLD));
    }

    // Engines are a pure function of (corpus, links, parameters); rebuild and
    // cross-check the stored audits.
    let rebuilt = Index::build_from_parts(collection, gst, links, scorer, block, levels, has_ram)?;
    if rebuilt.topk.base.thr.stored_entries() as u64 != thr_entries {
        return Err(ContainerError::Malformed(tag::THRESHOLD));
    }
    let mut d = Dec::new(section(tag::TOPK)?, tag::TOPK);
    let base_g = d.u32()?;
    let base_entries = d.u64()?;
    if base_g != rebuilt.topk.base.g || base_entries != rebuilt.topk.base.stored_entries() as u64 {
        return Err(ContainerError::Malformed(tag::TOPK));
    }
    if has_ram {
        let mut d = Dec::new(section(tag::RAM)?, tag::RAM);
        let g_small = d.u32()?;
        let entries = d.u64()?;
        let ram = rebuilt.ram.as_ref().expect("ram rebuilt");
        if g_small != ram.g_small || entries != ram.stored_entries() as u64 {
            return Err(ContainerError::Malformed(tag::RAM));
        }
    }
    Ok(rebuilt)
}

/// Writes the doc-id -> source-name manifest beside the container.
pub fn write_manifest_sidecar(index: &Index, container: &Path) -> Result<(), ContainerError> {
    let mut map = serde_json::Map::new();
    for d in 1..=index.collection.doc_count() as u32 {
        map.insert(d.to_string(), index.collection.doc_name(d).into());
    }
    let path = container.with_extension("manifest.json");
    std::fs::write(path, serde_json::to_vec_pretty(&map).expect("manifest"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::{Engine, IndexConfig};

    fn sample_index(with_ram: bool) -> Index {
        let c = DocumentCollection::from_docs(
            vec![b"banana".to_vec(), b"ana".to_vec(), b"bandana".to_vec()],
            vec!["a".into(), "b".into(), "c".into()],
        )
        .unwrap();
        Index::build(c, IndexConfig { block: 4, with_ram, ..Default::default() }).unwrap()
    }

    #[test]
    fn round_trip_preserves_answers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.tkdr");
        let idx = sample_index(true);
        save(&idx, &path).unwrap();
        let reopened = open(&path).unwrap();
        for pat in [b"an".as_slice(), b"ban", b"a", b"dana"] {
            for k in 1..4 {
                for eng in [Engine::Em, Engine::Ram] {
                    let mut t1 = idx.tape_for(eng);
                    let mut t2 = reopened.tape_for(eng);
                    let a = idx.query(pat, k, eng, &mut t1).unwrap();
                    let b = reopened.query(pat, k, eng, &mut t2).unwrap();
                    let (mut ah, mut bh) = (a.hits.clone(), b.hits.clone());
                    ah.sort_unstable_by_key(|h| h.doc);
                    bh.sort_unstable_by_key(|h| h.doc);
                    assert_eq!(ah, bh);
                    assert_eq!(t1.stats(), t2.stats());
                }
            }
        }
    }

    #[test]
    fn rebuild_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.tkdr");
        let p2 = dir.path().join("b.tkdr");
        save(&sample_index(false), &p1).unwrap();
        save(&sample_index(false), &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn corruption_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.tkdr");
        save(&sample_index(false), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            open(&path),
            Err(ContainerError::ChecksumMismatch(_)) | Err(ContainerError::Malformed(_))
        ));

        std::fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(open(&path), Err(ContainerError::BadMagic)));
    }
}
