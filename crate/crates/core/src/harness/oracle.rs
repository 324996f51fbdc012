//! Brute-force reference answers. These scan raw documents and enumerate raw
//! link tables; they never route through the engines they are used to check.

use crate::corpus::{DocId, DocumentCollection};
use crate::gst::{NodeId, Topology};
use crate::links::{stabs, Link, Scorer};

/// (doc, raw score) pairs sorted the way rank-space ordering sorts them:
/// score descending, then doc ascending. Truncated to k.
pub fn oracle_topk(
    collection: &DocumentCollection,
    pattern: &[u8],
    k: usize,
    scorer: &Scorer,
) -> Vec<(DocId, i64)> {
    assert!(!pattern.is_empty(), "oracle pattern must be non-empty");
    let mut hits = Vec::new();
    for d in 1..=collection.doc_count() as DocId {
        let offsets = occurrences(collection.doc(d), pattern);
        if offsets.is_empty() {
            continue;
        }
        let raw = scorer.score(d, &offsets).expect("non-empty occurrence set");
        hits.push((d, raw));
    }
    hits.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    hits.truncate(k);
    hits
}

/// Overlapping occurrence offsets of `pattern` in `doc`, ascending.
pub fn occurrences(doc: &[u8], pattern: &[u8]) -> Vec<u32> {
    if pattern.is_empty() || pattern.len() > doc.len() {
        return Vec::new();
    }
    (0..=doc.len() - pattern.len())
        .filter(|&i| &doc[i..i + pattern.len()] == pattern)
        .map(|i| i as u32)
        .collect()
}

/// Number of documents containing `pattern`.
pub fn oracle_ndoc(collection: &DocumentCollection, pattern: &[u8]) -> usize {
    (1..=collection.doc_count() as DocId)
        .filter(|&d| !occurrences(collection.doc(d), pattern).is_empty())
        .count()
}

/// All link ids stabbed by `u` with rank-space score >= tau, by enumeration.
pub fn oracle_stabbed(topo: &Topology, links: &[Link], u: NodeId, tau: u32) -> Vec<u32> {
    (0..links.len() as u32)
        .filter(|&i| links[i as usize].w >= tau && stabs(&links[i as usize], u, topo))
        .collect()
}

/// Link ids of the k best stabbed links at `u`, score descending.
pub fn oracle_topk_ids(topo: &Topology, links: &[Link], u: NodeId, k: usize) -> Vec<u32> {
    let mut ids = oracle_stabbed(topo, links, u, 1);
    ids.sort_unstable_by_key(|&i| std::cmp::Reverse(links[i as usize].w));
    ids.truncate(k);
    ids
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DocumentCollection;
    use crate::links::ScoreKind;

    fn banana() -> DocumentCollection {
        DocumentCollection::from_docs(
            vec![b"banana".to_vec(), b"ana".to_vec()],
            vec!["a".into(), "b".into()],
        )
        .unwrap()
    }

    #[test]
    fn hand_counted_example() {
        let c = banana();
        let s = Scorer::new(ScoreKind::Frequency, &c).unwrap();
        // "ana" at offsets 1, 3 in doc 1 and 0 in doc 2.
        assert_eq!(occurrences(c.doc(1), b"ana"), vec![1, 3]);
        assert_eq!(oracle_topk(&c, b"ana", 2, &s), vec![(1, 2), (2, 1)]);
        assert_eq!(oracle_topk(&c, b"zzz", 5, &s), vec![]);
        assert_eq!(oracle_topk(&c, b"ana", 0, &s), vec![]);
        assert_eq!(oracle_ndoc(&c, b"ana"), 2);
    }

    #[test]
    fn prefix_property() {
        let c = banana();
        let s = Scorer::new(ScoreKind::MinDist, &c).unwrap();
        for pat in [b"a".as_slice(), b"an", b"na", b"banana"] {
            for k in 0..4usize {
                let shorter = oracle_topk(&c, pat, k, &s);
                let longer = oracle_topk(&c, pat, k + 1, &s);
                assert_eq!(shorter[..], longer[..shorter.len()]);
            }
        }
    }
}
