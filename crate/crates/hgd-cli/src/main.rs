use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use hgd_cli::commands;
use hgd_cli::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "hgd",
    about = "Decoupled learning on large heterogeneous graphs: KG extraction, \
             edge-aware multi-hop propagation, multi-label classifiers",
    version
)]
struct Cli {
    /// key = value config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (0 = available parallelism). Results do not depend
    /// on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Print machine-readable stats as JSON on stdout.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOverrides {
    /// Master seed; per-stage seeds derive from it.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Extract entities and edges from a JSON dump.
    Build {
        #[arg(long)]
        dump: Option<PathBuf>,
        /// Property-id blacklist, one per line.
        #[arg(long)]
        screen: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Embed feature descriptions and relation labels.
    Embed {
        /// Directory produced by `build`.
        #[arg(long)]
        entities: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        force: bool,
        #[command(flatten)]
        common: CommonOverrides,
    },
    /// Harvest instance-of labels and cluster them into Q classes.
    Annotate {
        #[arg(long)]
        entities: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        classes: Option<u32>,
        #[arg(long)]
        instance_of: Option<String>,
        #[arg(long)]
        force: bool,
        #[command(flatten)]
        common: CommonOverrides,
    },
    /// Snowball-subsample a built graph directory.
    Sample {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        target_n: u64,
        #[arg(long)]
        high_degree_fraction: Option<f64>,
        #[arg(long)]
        force: bool,
        #[command(flatten)]
        common: CommonOverrides,
    },
    /// Precompute the multi-hop propagation stack.
    Propagate {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        /// zero | carry
        #[arg(long)]
        policy: Option<String>,
        /// mean | sum
        #[arg(long)]
        combine: Option<String>,
        #[arg(long)]
        add_reverse: bool,
        /// Process destinations in blocks of this size, spilling hops to
        /// disk as they complete.
        #[arg(long)]
        block_size: Option<usize>,
        #[arg(long)]
        force: bool,
    },
    /// Train a post-classifier on a propagation stack.
    Train {
        #[arg(long)]
        stack: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// r_mlp | r_sgc | r_sign | r_sagn | r_gamlp
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        classes: Option<u32>,
        #[arg(long)]
        hidden: Option<usize>,
        #[command(flatten)]
        common: CommonOverrides,
    },
    /// Score a saved checkpoint on the test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        stack: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        split: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOverrides,
    },
    /// Run build, embed, annotate, optional sample, propagate, train and
    /// eval in one pass.
    Pipeline {
        #[arg(long)]
        dump: Option<PathBuf>,
        #[arg(long)]
        screen: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
        #[command(flatten)]
        common: CommonOverrides,
    },
}

fn emit<T: serde::Serialize>(json: bool, value: &T) -> Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(value)?);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .ok();
    }
    let json = cli.json;

    match cli.command {
        Command::Build {
            dump,
            screen,
            out,
            force,
        } => {
            let dump = dump
                .or_else(|| cfg.dump.clone())
                .ok_or_else(|| anyhow::anyhow!("--dump (or config `dump`) is required"))?;
            let screen = screen.or_else(|| cfg.screen.clone());
            let stats = commands::build::cmd_build(&dump, screen.as_deref(), &out, force)?;
            if !json {
                if stats.up_to_date {
                    println!("up to date");
                }
                println!(
                    "nodes {}  edges {}  edge types {}  (dropped: {} incomplete, {} malformed lines)",
                    stats.nodes, stats.edges, stats.edge_types,
                    stats.incomplete_entities, stats.malformed_lines
                );
            }
            emit(json, &stats)
        }
        Command::Embed {
            entities,
            out,
            dim,
            force,
            common,
        } => {
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            if let Some(dim) = dim {
                cfg.dim = dim;
            }
            let stats = commands::embed::cmd_embed(&entities, &out, &cfg, force)?;
            if !json {
                if stats.up_to_date {
                    println!("up to date");
                }
                println!(
                    "embedded {} nodes and {} relation labels at dim {}",
                    stats.nodes, stats.edge_types, stats.dim
                );
            }
            emit(json, &stats)
        }
        Command::Annotate {
            entities,
            out,
            classes,
            instance_of,
            force,
            common,
        } => {
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            if let Some(classes) = classes {
                cfg.classes = classes;
            }
            if let Some(instance_of) = instance_of {
                cfg.instance_of = instance_of;
            }
            let stats = commands::annotate::cmd_annotate(&entities, &out, &cfg, force)?;
            if !json {
                if stats.up_to_date {
                    println!("up to date");
                }
                println!(
                    "{} parents clustered into {} classes; {} labeled nodes ({} multi-label)",
                    stats.parents, stats.classes, stats.labeled_nodes, stats.multi_label_nodes
                );
            }
            emit(json, &stats)
        }
        Command::Sample {
            graph,
            out,
            target_n,
            high_degree_fraction,
            force,
            common,
        } => {
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            if let Some(fraction) = high_degree_fraction {
                cfg.high_degree_fraction = fraction;
            }
            let stats = commands::sample::cmd_sample(&graph, &out, &cfg, target_n, force)?;
            if !json {
                if stats.up_to_date {
                    println!("up to date");
                }
                println!(
                    "sampled {} nodes / {} edges (uniform fill: {})",
                    stats.nodes, stats.edges, stats.uniform_filled
                );
            }
            emit(json, &stats)
        }
        Command::Propagate {
            graph,
            out,
            k,
            policy,
            combine,
            add_reverse,
            block_size,
            force,
        } => {
            if let Some(k) = k {
                cfg.k = k;
            }
            if let Some(policy) = policy {
                cfg.isolated_policy = policy.parse()?;
            }
            if let Some(combine) = combine {
                cfg.type_combine = combine.parse()?;
            }
            if add_reverse {
                cfg.add_reverse = true;
            }
            if let Some(block_size) = block_size {
                cfg.block_size = block_size;
            }
            let stats = commands::propagate::cmd_propagate(&graph, &out, &cfg, force)?;
            if !json {
                if stats.up_to_date {
                    println!("up to date");
                } else {
                    println!(
                        "propagated {} hops over {} nodes in {:.2}s",
                        stats.hops, stats.nodes, stats.seconds
                    );
                }
            }
            emit(json, &stats)
        }
        Command::Train {
            stack,
            labels,
            out,
            model,
            split,
            epochs,
            classes,
            hidden,
            common,
        } => {
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            if let Some(model) = model {
                cfg.model = model.parse()?;
            }
            if let Some(epochs) = epochs {
                cfg.epochs = epochs;
            }
            if let Some(classes) = classes {
                cfg.classes = classes;
            }
            if let Some(hidden) = hidden {
                cfg.hidden = hidden;
            }
            let report =
                commands::train::cmd_train(&stack, &labels, &out, &cfg, split.as_deref())?;
            if !json {
                println!("{} (best epoch {})", report.model, report.best_epoch);
                println!("{}", report.test.render_table());
            }
            emit(json, &report)
        }
        Command::Eval {
            checkpoint,
            stack,
            labels,
            split,
            common,
        } => {
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            let report = commands::train::cmd_eval(
                &checkpoint,
                &stack,
                &labels,
                &cfg,
                split.as_deref(),
            )?;
            if !json {
                println!("{} (epoch {})", report.model, report.best_epoch);
                println!("{}", report.test.render_table());
            }
            emit(json, &report)
        }
        Command::Pipeline {
            dump,
            screen,
            out,
            force,
            common,
        } => {
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            let dump = dump
                .or_else(|| cfg.dump.clone())
                .ok_or_else(|| anyhow::anyhow!("--dump (or config `dump`) is required"))?;
            let screen = screen.or_else(|| cfg.screen.clone());
            let stats =
                commands::pipeline::cmd_pipeline(&dump, screen.as_deref(), &out, &cfg, force)?;
            if !json {
                println!("{} (best epoch {})", stats.report.model, stats.report.best_epoch);
                println!("{}", stats.report.test.render_table());
            }
            emit(json, &stats)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
