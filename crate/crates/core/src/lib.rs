//! Mining toolkit for developer-admitted security concerns in source code
//! comments, commit messages and issue trackers.

pub mod comments;
pub mod fixture;
pub mod lexicon;
pub mod repo;
pub mod tracker;
pub mod issues;
pub mod sampler;
pub mod bot;
pub mod report;
pub mod triage;
