pub mod contour;
pub mod extsort;
pub mod geometry;
pub mod harness;
pub mod ingest;
pub mod loctok;
pub mod metrics;
pub mod prompts;
pub mod schema;
pub mod taskgen;
