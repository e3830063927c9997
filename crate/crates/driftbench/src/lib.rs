//! Benchmark toolkit for unsupervised anomaly detection under temporal
//! distribution shift in network-traffic logs.
//!
//! The pipeline runs in stages, each usable on its own:
//!
//! 1. [`ingest`] — read delimited connection logs (or generate synthetic
//!    drifting traffic) into [`schema::RawRecord`]s.
//! 2. [`tokenize`] — discretize every record into a fixed-length token
//!    sequence over a closed vocabulary (exponential bins for unbounded
//!    numerics, 100-level discretization for percentages).
//! 3. [`protocol`] — materialize chronological TRAIN / IID / NEAR / FAR
//!    splits with per-month sampling quotas.
//! 4. [`drift`] — quantify shift between years: per-feature Jeffreys
//!    divergence, class-conditional Sinkhorn dataset distances, PCA
//!    projections.
//! 5. [`detectors`] / [`mlm`] — fit anomaly scorers: ECOD, COPOD,
//!    Isolation Forest, LOF, and a small masked-token transformer trained
//!    with iid / finetune / distillation strategies.
//! 6. [`evaluate`] — ROC-AUC and PR-AUC per split, per year, per month.
//!
//! Everything is deterministic given a seed. With the default `parallel`
//! feature, record encoding, scoring, and matrix cells fan out over a rayon
//! pool; the results are identical to the sequential fallback.

pub mod cli;
pub mod detectors;
pub mod drift;
pub mod error;
pub mod evaluate;
pub mod ingest;
pub mod mlm;
pub mod parallel;
pub mod protocol;
pub mod schema;
pub mod tokenize;

pub use error::{Error, Result};
