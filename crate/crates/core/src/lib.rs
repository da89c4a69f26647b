//! Acquisition and analysis pipeline for agent-created sub-community
//! descriptions: crawl, refine, embed, cluster, project, profile, render and
//! report.

pub mod binfmt;
pub mod clustering;
pub mod corpus;
pub mod digest;
pub mod embedding;
pub mod error;
pub mod fixture;
pub mod io;
pub mod metrics;
pub mod ngram;
pub mod preprocess;
pub mod projection;
pub mod registry;
pub mod thematic;
pub mod wordcloud;

pub use error::{Error, ErrorKind, Result};
