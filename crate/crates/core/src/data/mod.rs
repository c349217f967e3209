//! Interaction logs, feature schema, datasets and id encoding.

mod csv_io;
mod dataset;
mod encoder;
mod log;
mod recs;
mod schema;

pub use csv_io::{
    parse_timestamp, read_interactions, read_interactions_from, read_item_categories, read_recommendations,
    write_interactions, write_interactions_to, write_recommendations, write_recommendations_to, ColumnMapping,
    CsvOptions,
};
pub use dataset::{build_dataset, Dataset, FeatureColumn, FeatureTable};
pub use encoder::{fit_encoder, ColumnEncoder, EncoderMapping, UnseenPolicy};
pub use log::{Interaction, InteractionLog, Token};
pub use recs::{RankedList, Recommendation, RecommendationList, ScoredItem};
pub use schema::{ColumnSpec, FeatureHint, FeatureSchema, FeatureSource, FeatureType};
