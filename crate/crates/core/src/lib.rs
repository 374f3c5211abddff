//! Fuses city open-data layers into monthly multi-layer community networks,
//! derives random-walk similarity between communities, and forecasts monthly
//! crime counts per type and community.

pub mod config;
pub mod evaluate;
pub mod features;
pub mod fmt;
pub mod ingest;
pub mod linalg;
pub mod models;
pub mod month;
pub mod netfuse;
pub mod pipeline;
pub mod report;
pub mod similarity;

pub use config::PipelineConfig;
pub use evaluate::{PredictionSet, RmseConvention, RmseReport};
pub use ingest::{CommunityId, CrimeTypeRegistry, MonthlyCube, SynthPlan};
pub use models::{ModelKind, TrainedModel};
pub use netfuse::{MultiLayerNetwork, Variant};
pub use pipeline::PipelineError;
pub use similarity::{CommunitySimilarity, SimilarityKind, TopKNeighbors};
pub use month::{MonthRange, YearMonth};
