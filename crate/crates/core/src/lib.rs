//! Context-aware information of tokenized clinical event timelines.
//!
//! Pipeline: [`ingest`] parses long-format tables into hospitalizations,
//! [`tokenizer`] turns them into integer timelines, a [`seqmodel`] supplies
//! next-token distributions, [`infomeasure`] scores tokens and events in bits,
//! [`reprspace`] tracks representation deltas and [`experiments`] runs the
//! redaction grid and count-feature regressions on top of [`stats`], and
//! [`report`] renders highlighted timelines. [`synthgen`] generates seeded
//! cohorts with an exact oracle model.

pub mod experiments;
pub mod infomeasure;
pub mod ingest;
pub mod reprspace;
pub mod report;
pub mod seqmodel;
pub mod stats;
pub mod synthgen;
pub mod tokenizer;
