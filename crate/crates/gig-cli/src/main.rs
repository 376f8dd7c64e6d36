//! `gig`: ingest, match, mine, train, impute, eval, and a single-config
//! pipeline runner. Exit codes: 0 on success, 2 on configuration
//! errors, 3 on stage failures.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use gig_core::dsl;
use gig_core::graph::{GroundTruth, PropertyGraph};
use gig_core::impute::{impute_graph, read_decisions, write_decisions};
use gig_core::ingest::{ingest_csv, ingest_csv_into, IngestOptions};
use gig_core::metrics::score;
use gig_core::miner::{mine, MinerConfig};
use gig_core::model::{
    build_vocab, load_checkpoint, make_training_pairs, save_checkpoint, train, ModelParams,
};
use gig_core::pattern::GraphPattern;
use gig_core::pipeline::{emit_report, run_pipeline, RunConfig};
use gig_core::rule::to_mask;
use gig_core::table::PseudoTable;
use gig_core::GigError;

#[derive(Parser)]
#[command(name = "gig", version, about = "Rule-guided imputation for property graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a CSV table into a property graph.
    Ingest {
        #[arg(long)]
        csv: PathBuf,
        /// Table name; becomes the node label.
        #[arg(long)]
        table: String,
        /// Reference column, as `column=label`; repeatable.
        #[arg(long = "ref", value_name = "COL=LABEL")]
        references: Vec<String>,
        /// Column holding the entity id; row ordinals when omitted.
        #[arg(long)]
        id: Option<String>,
        /// Existing graph to merge into, so references can resolve.
        #[arg(long)]
        into: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Match a pattern against a graph and emit the pseudo table.
    Match {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        pattern: PathBuf,
        /// Output table CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Mine dependency rules from a pseudo table.
    Mine {
        #[arg(long)]
        table: PathBuf,
        #[arg(long, default_value_t = 2)]
        min_support: u64,
        #[arg(long, default_value_t = 1.0)]
        min_confidence: f64,
        #[arg(long, default_value_t = 2)]
        max_lhs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the sequence model on rule-satisfying instances.
    Train {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 64)]
        embed_dim: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Impute missing cells and log one decision per site.
    Impute {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Imputed graph JSON.
        #[arg(long)]
        out: PathBuf,
        /// Decision log, JSON lines.
        #[arg(long)]
        log: PathBuf,
    },
    /// Score a decision log against injected ground truth.
    Eval {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full pipeline from a JSON config.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { csv, table, references, id, into, out } => {
            let mut opts = IngestOptions::new();
            opts.id_column = id;
            for spec in &references {
                let (column, label) = spec
                    .split_once('=')
                    .with_context(|| format!("--ref `{spec}` is not of the form column=label"))?;
                opts.references.push((column.to_string(), label.to_string()));
            }
            let reader = fs::File::open(&csv)
                .with_context(|| format!("cannot open {}", csv.display()))?;
            let graph = match into {
                Some(base) => {
                    let base = PropertyGraph::load(&base)?;
                    ingest_csv_into(Some(&base), reader, &table, &opts)?
                }
                None => ingest_csv(reader, &table, &opts)?,
            };
            graph.save(&out)?;
        }
        Command::Match { graph, pattern, out } => {
            let graph = PropertyGraph::load(&graph)?;
            let pattern = GraphPattern::load(&pattern)?;
            let table = PseudoTable::build(&graph, &pattern)?;
            let file = fs::File::create(&out)?;
            table.to_csv(file)?;
        }
        Command::Mine { table, min_support, min_confidence, max_lhs, out } => {
            let table = PseudoTable::from_csv(fs::File::open(&table)?)?;
            let config = MinerConfig {
                min_support,
                min_confidence,
                max_lhs_size: max_lhs,
                ..MinerConfig::default()
            };
            let rules = mine(&table, "scope", &config)?;
            fs::write(&out, dsl::render_rules(&rules))?;
        }
        Command::Train { table, rules, graph, seed, epochs, embed_dim, out } => {
            let table = PseudoTable::from_csv(fs::File::open(&table)?)?;
            let rules = dsl::parse_rules(&fs::read_to_string(&rules)?)?;
            let graph = PropertyGraph::load(&graph)?;
            let params = ModelParams { seed, epochs, embed_dim, ..ModelParams::default() };
            params.validate()?;
            let vocab = build_vocab(&table, &rules);
            let pairs = make_training_pairs(&table, &rules, &graph, &vocab, params.max_seq_len)?;
            let ckpt = train(&pairs, &vocab, &params)?;
            save_checkpoint(&ckpt, &out)?;
        }
        Command::Impute { graph, table, rules, model, out, log } => {
            let graph = PropertyGraph::load(&graph)?;
            let table = PseudoTable::from_csv(fs::File::open(&table)?)?;
            let rules = dsl::parse_rules(&fs::read_to_string(&rules)?)?;
            let ckpt = load_checkpoint(&model)?;
            let masks = rules
                .iter()
                .map(|r| Ok((r.clone(), to_mask(r, &table)?)))
                .collect::<gig_core::Result<Vec<_>>>()?;
            let (imputed, decisions) = impute_graph(&graph, &table, &masks, &ckpt)?;
            imputed.save(&out)?;
            let file = fs::File::create(&log)?;
            write_decisions(&decisions, file)?;
        }
        Command::Eval { truth, log, format, out } => {
            let truth = GroundTruth::load(&truth)?;
            let decisions = read_decisions(&fs::read_to_string(&log)?)?;
            let report = score(&truth, &decisions)?;
            emit_report(std::slice::from_ref(&report), &format, &out)?;
        }
        Command::Pipeline { config } => {
            let config = RunConfig::load(&config)?;
            let reports = run_pipeline(&config)?;
            for r in &reports {
                println!(
                    "{} pct={} missing={} imputed={} true={} precision={:.4} recall={:.4} f1={:.4}",
                    r.dataset, r.pct, r.missing, r.imputed, r.true_count, r.precision, r.recall,
                    r.f1
                );
                if r.zero_imputed_warning {
                    eprintln!("warning: no cells were imputed at pct={}", r.pct);
                }
            }
        }
    }
    Ok(())
}

/// Configuration problems exit 2; anything else that fails exits 3.
fn exit_code_for(err: &anyhow::Error) -> ExitCode {
    for cause in err.chain() {
        if let Some(gig) = cause.downcast_ref::<GigError>() {
            let root = innermost(gig);
            return match root {
                GigError::Config(_) | GigError::Syntax { .. } => ExitCode::from(2),
                _ => ExitCode::from(3),
            };
        }
    }
    ExitCode::from(3)
}

fn innermost(err: &GigError) -> &GigError {
    match err {
        GigError::Stage { source, .. } => innermost(source),
        other => other,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            exit_code_for(&err)
        }
    }
}
