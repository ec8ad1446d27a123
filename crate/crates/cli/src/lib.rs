//! Pipeline harness for grounded transcript summarization: artifact
//! formats, run configuration, stage orchestration, and the HTML report.

pub mod config;
pub mod formats;
pub mod html;
pub mod pipeline;
