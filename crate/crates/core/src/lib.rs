//! Patent drafting pipeline: claims and drawings in, enriched generation inputs
//! and cleaned specification text out.

pub mod claims;
pub mod dataset;
pub mod drawings;
pub mod enrichment;
pub mod generation;
pub mod mapper;
pub mod similarity;
pub mod text;
pub mod service;
