//! Document collections: loading, terminator handling, and the concatenated
//! global text with boundary lookups.
//!
//! Documents are byte strings. A single reserved terminator byte (`0x00`) is
//! appended to every document in the global text, so the total length `n`
//! counts one terminator per document and equals the number of suffix-tree
//! leaves built over the collection.

use std::path::Path;

use thiserror::Error;

/// Reserved document terminator. Never allowed inside a document body.
pub const TERMINATOR: u8 = 0x00;

/// Document identifiers are 1-based: `d` in `1..=D`.
pub type DocId = u32;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("empty collection")]
    EmptyCollection,
    #[error("reserved byte in document {0}")]
    ReservedByte(String),
    #[error("empty document {0}")]
    EmptyDocument(String),
    #[error("offset out of range: {pos} >= {n}")]
    OffsetOutOfRange { pos: usize, n: usize },
    #[error("corpus io: {0}")]
    Io(#[from] std::io::Error),
}

/// An immutable document collection plus its concatenated global text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentCollection {
    docs: Vec<Vec<u8>>,
    names: Vec<String>,
    /// `doc_d` starts at `boundaries[d-1]` in the global text.
    boundaries: Vec<usize>,
    global_text: Vec<u8>,
}

impl DocumentCollection {
    /// Builds a collection from in-memory documents. Bodies must be non-empty
    /// and free of the terminator byte.
    pub fn from_docs(docs: Vec<Vec<u8>>, names: Vec<String>) -> Result<Self, CorpusError> {
        if docs.is_empty() {
            return Err(CorpusError::EmptyCollection);
        }
        assert_eq!(docs.len(), names.len());
        let mut boundaries = Vec::with_capacity(docs.len());
        let mut global_text = Vec::new();
        for (body, name) in docs.iter().zip(&names) {
            if body.is_empty() {
                return Err(CorpusError::EmptyDocument(name.clone()));
            }
            if body.contains(&TERMINATOR) {
                return Err(CorpusError::ReservedByte(name.clone()));
            }
            boundaries.push(global_text.len());
            global_text.extend_from_slice(body);
            global_text.push(TERMINATOR);
        }
        Ok(Self { docs, names, boundaries, global_text })
    }

    /// Number of documents `D`.
    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    /// Total length `n`, counting one terminator per document.
    pub fn total_len(&self) -> usize {
        self.global_text.len()
    }

    pub fn global_text(&self) -> &[u8] {
        &self.global_text
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    /// Body of document `d` (1-based), without the terminator.
    pub fn doc(&self, d: DocId) -> &[u8] {
        &self.docs[(d - 1) as usize]
    }

    pub fn doc_name(&self, d: DocId) -> &str {
        &self.names[(d - 1) as usize]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Global start offset of document `d`.
    pub fn doc_start(&self, d: DocId) -> usize {
        self.boundaries[(d - 1) as usize]
    }

    /// Global offset of the terminator that ends document `d`.
    pub fn doc_end(&self, d: DocId) -> usize {
        let i = (d - 1) as usize;
        match self.boundaries.get(i + 1) {
            Some(&next) => next - 1,
            None => self.global_text.len() - 1,
        }
    }

    /// Document owning the global offset `pos`; the terminator belongs to its
    /// document.
    pub fn doc_at(&self, pos: usize) -> Result<DocId, CorpusError> {
        if pos >= self.global_text.len() {
            return Err(CorpusError::OffsetOutOfRange { pos, n: self.global_text.len() });
        }
        // boundaries is strictly increasing with boundaries[0] == 0.
        let idx = self.boundaries.partition_point(|&b| b <= pos);
        Ok(idx as DocId)
    }

    /// Offset of `pos` inside its owning document.
    pub fn local_offset(&self, pos: usize) -> usize {
        let d = self.boundaries.partition_point(|&b| b <= pos);
        pos - self.boundaries[d - 1]
    }
}

/// Loads a collection from a directory (one file per document, sorted by file
/// name) or from a single flat file of terminator-separated documents.
pub fn load_collection(source: &Path) -> Result<DocumentCollection, CorpusError> {
    if source.is_dir() {
        let mut entries: Vec<_> = std::fs::read_dir(source)?
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .filter(|e| e.path().is_file())
            .collect();
        entries.sort_by_key(|e| e.file_name());
        let mut docs = Vec::new();
        let mut names = Vec::new();
        for e in entries {
            docs.push(std::fs::read(e.path())?);
            names.push(e.file_name().to_string_lossy().into_owned());
        }
        if docs.is_empty() {
            return Err(CorpusError::EmptyCollection);
        }
        DocumentCollection::from_docs(docs, names)
    } else {
        let raw = std::fs::read(source)?;
        let stem = source
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "corpus".to_string());
        let mut parts: Vec<&[u8]> = raw.split(|&b| b == TERMINATOR).collect();
        // A trailing terminator is the canonical flat-file form; drop the
        // empty tail it produces.
        if parts.last().is_some_and(|p| p.is_empty()) {
            parts.pop();
        }
        if parts.is_empty() {
            return Err(CorpusError::EmptyCollection);
        }
        let docs: Vec<Vec<u8>> = parts.iter().map(|p| p.to_vec()).collect();
        let names = (0..docs.len()).map(|i| format!("{stem}#{i}")).collect();
        DocumentCollection::from_docs(docs, names)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn banana_ana() -> DocumentCollection {
        DocumentCollection::from_docs(
            vec![b"banana".to_vec(), b"ana".to_vec()],
            vec!["a".into(), "b".into()],
        )
        .unwrap()
    }

    #[test]
    fn counts_and_boundaries() {
        let c = banana_ana();
        assert_eq!(c.doc_count(), 2);
        assert_eq!(c.total_len(), 11); // 6+1+3+1
        assert_eq!(c.boundaries(), &[0, 7]);
        assert_eq!(c.doc_end(1), 6);
        assert_eq!(c.doc_end(2), 10);
    }

    #[test]
    fn single_doc() {
        let c = DocumentCollection::from_docs(vec![b"x".to_vec()], vec!["x".into()]).unwrap();
        assert_eq!(c.doc_count(), 1);
        assert_eq!(c.total_len(), 2);
    }

    #[test]
    fn doc_at_spans() {
        let c = banana_ana();
        assert_eq!(c.doc_at(0).unwrap(), 1);
        assert_eq!(c.doc_at(6).unwrap(), 1); // terminator belongs to doc 1
        assert_eq!(c.doc_at(7).unwrap(), 2);
        assert!(matches!(c.doc_at(11), Err(CorpusError::OffsetOutOfRange { .. })));
    }

    #[test]
    fn round_trip_all_offsets() {
        let c = banana_ana();
        for d in 1..=c.doc_count() as DocId {
            let start = c.doc_start(d);
            for i in 0..=c.doc(d).len() {
                assert_eq!(c.doc_at(start + i).unwrap(), d);
                assert_eq!(c.local_offset(start + i), i);
            }
        }
    }

    #[test]
    fn reconstruction() {
        let c = banana_ana();
        for d in 1..=c.doc_count() as DocId {
            let s = c.doc_start(d);
            let e = c.doc_end(d);
            assert_eq!(&c.global_text()[s..e], c.doc(d));
            assert_eq!(c.global_text()[e], TERMINATOR);
        }
    }

    #[test]
    fn rejects_reserved_byte() {
        let err = DocumentCollection::from_docs(vec![vec![b'a', 0x00]], vec!["bad".into()]);
        assert!(matches!(err, Err(CorpusError::ReservedByte(_))));
    }

    #[test]
    fn rejects_empty() {
        assert!(matches!(
            DocumentCollection::from_docs(vec![], vec![]),
            Err(CorpusError::EmptyCollection)
        ));
    }

    #[test]
    fn load_from_dir_and_flat_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.txt"), b"banana").unwrap();
        std::fs::write(dir.path().join("b.txt"), b"ana").unwrap();
        let c = load_collection(dir.path()).unwrap();
        assert_eq!(c.doc_count(), 2);
        assert_eq!(c.total_len(), 11);
        assert_eq!(c.doc(1), b"banana"); // a.txt sorts first

        let flat = dir.path().join("flat.bin");
        std::fs::write(&flat, b"banana\x00ana\x00").unwrap();
        let c2 = load_collection(&flat).unwrap();
        assert_eq!(c2.doc_count(), 2);
        assert_eq!(c2.global_text(), c.global_text());
    }

    #[test]
    fn load_empty_dir_fails() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_collection(dir.path()), Err(CorpusError::EmptyCollection)));
    }
}
