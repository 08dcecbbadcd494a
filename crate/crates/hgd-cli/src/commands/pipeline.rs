//! `pipeline`: run every stage end to end with file-based handoff.
//!
//! Layout under the output directory:
//!
//! ```text
//! out/
//!   graph/    build + embed + annotate artifacts
//!   sample/   optional snowball subsample (when sample_target_n is set)
//!   stack/    hop files + engine manifest
//!   model/    checkpoint, loss log, report.json
//!   pipeline_stats.json
//! ```

use std::path::Path;

use anyhow::Result;
use serde::{Deserialize, Serialize};

use super::annotate::{cmd_annotate, AnnotateStats};
use super::build::{cmd_build, BuildStats};
use super::embed::{cmd_embed, EmbedStats};
use super::propagate::{cmd_propagate, PropagateStats};
use super::sample::{cmd_sample, SampleStats};
use super::train::{cmd_train, TrainReport};
use crate::config::RunConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineStats {
    pub build: BuildStats,
    pub embed: EmbedStats,
    pub annotate: AnnotateStats,
    pub sample: Option<SampleStats>,
    pub propagate: PropagateStats,
    pub report: TrainReport,
}

pub fn cmd_pipeline(
    dump: &Path,
    screen: Option<&Path>,
    out: &Path,
    cfg: &RunConfig,
    force: bool,
) -> Result<PipelineStats> {
    std::fs::create_dir_all(out)?;
    let graph_dir = out.join("graph");
    let stack_dir = out.join("stack");
    let model_dir = out.join("model");

    let build = cmd_build(dump, screen, &graph_dir, force)?;
    let embed = cmd_embed(&graph_dir, &graph_dir, cfg, force)?;
    let annotate = cmd_annotate(&graph_dir, &graph_dir, cfg, force)?;

    // Subsampling happens on the built graph; training consumes either
    // the sample or the full graph.
    let (train_src, sample) = match cfg.sample_target_n {
        Some(target_n) => {
            let sample_dir = out.join("sample");
            let stats = cmd_sample(&graph_dir, &sample_dir, cfg, target_n, force)?;
            (sample_dir, Some(stats))
        }
        None => (graph_dir.clone(), None),
    };

    let propagate = cmd_propagate(&train_src, &stack_dir, cfg, force)?;
    let report = cmd_train(
        &stack_dir,
        &train_src.join("labels.tsv"),
        &model_dir,
        cfg,
        None,
    )?;

    let stats = PipelineStats {
        build,
        embed,
        annotate,
        sample,
        propagate,
        report,
    };
    super::write_stats_json(&out.join("pipeline_stats.json"), &stats)?;
    Ok(stats)
}
