//! Re-ranking and evaluation engine for video-based visible-infrared person
//! re-identification.
//!
//! The building blocks are:
//!
//! * [`embedding`]: tracklet records, temporal average pooling and temporal grouping;
//! * [`format`]: the manifest + blob exchange format;
//! * [`distance`]: squared-Euclidean query-gallery distances;
//! * [`kreciprocal`]: instance-level k-reciprocal re-ranking;
//! * [`temporal`]: temporal k-reciprocal re-ranking with the cross-temporal term;
//! * [`metrics`]: CMC and mAP;
//! * [`curriculum`]: auxiliary-loss weighting schedules;
//! * [`synth`]: a seeded synthetic benchmark generator;
//! * [`pipeline`]: the end-to-end run used by the `reid-rerank` binary.

pub mod curriculum;
pub mod distance;
pub mod embedding;
pub mod error;
pub mod format;
pub mod kreciprocal;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod synth;
pub mod temporal;

pub use distance::{feature_distances, DistanceMatrix};
pub use embedding::{
    split_temporal, temporal_pool, Direction, EvalSplit, Modality, PooledEmbedding, SubTrackletEmbeddings,
    TrackletRecord,
};
pub use error::{Error, ErrorKind, Result};
pub use format::{load_split, save_split};
pub use kreciprocal::{
    fuse, jaccard_distances, kreciprocal_rerank, reciprocal_sets, NeighborSets, Population, RerankConfig,
};
pub use metrics::{evaluate, EvalReport, RerankMode};
pub use synth::{generate, SynthConfig};
pub use temporal::{cross_temporal, temporal_rerank, CrossTemporalMatrix};
