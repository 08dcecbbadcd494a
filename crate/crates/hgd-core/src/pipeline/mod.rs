//! Knowledge-graph construction pipeline: streaming dump extraction,
//! feature-description templating and embedding, instance-of label
//! harvesting with k-means high-level annotation, snowball subsampling
//! and split generation.

mod annotate;
mod dump;
mod sample;
mod text;

pub use annotate::{
    annotate, cluster_labels, harvest_labels, kmeans, kmeans_objective, AnnotationMap,
};
pub use dump::{scan_labels, Claim, ClaimTarget, DumpParser, EntityRecord, ParseStats};
pub use sample::{
    read_remap_tsv, snowball_sample, split, SnowballSample, Split, WalkParams,
};
pub use text::{embed_text, embed_texts, reorganize_text};

