//! Top-k string/document retrieval over a generalized-suffix-tree link index.
//!
//! A collection of documents is indexed once; a query `(P, k)` returns the k
//! documents most relevant to pattern `P` under a pluggable score (occurrence
//! frequency, closest-pair proximity, or static per-document weights). Two
//! query engines share one link index:
//!
//! * an external-memory-style threshold engine that answers in blocked I/O
//!   (simulated and accounted per query), returning the top-k set unsorted;
//! * an internal-memory engine that returns the top-k in score order with
//!   O(k)-style work after the pattern locus is known.
//!
//! Both are verified against brute-force oracles in [`harness`].

pub mod container;
pub mod corpus;
pub mod em_threshold;
pub mod geom;
pub mod gst;
pub mod index;
pub mod harness;
pub mod links;
pub mod ram_engine;
pub mod topk_engine;
pub mod io_model;

pub use corpus::{load_collection, DocumentCollection};
pub use gst::{build_gst, GSTree};
pub use io_model::{IoPhase, IoStats, IoTape};
