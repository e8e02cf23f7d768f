//! Ingestion, labeling, chronological splitting, and synthetic corpora.

mod label;
mod load;
mod record;
mod split;
mod synth;

pub use label::{binarize, frequency_rating, label_records, rate_by_frequency, LabelRule};
pub use load::{
    load_csv, load_movielens, read_blocks, write_blocks, LoadedData, MalformedLine, CSV_HEADER,
    MAX_MALFORMED_FRACTION,
};
pub use record::{id_extent, IdMap, InteractionRecord};
pub use split::{split_blocks, BlockSet};
pub use synth::{synth_drift, synth_two_class, DriftConfig};
