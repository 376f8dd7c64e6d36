//! End-to-end orchestration: ingest, match, mine or load rules,
//! consolidate, train, inject missingness, impute, score. Every
//! artifact is deterministic for a fixed config; wall-clock timings go
//! to a separate sidecar so report files are reproducible byte for
//! byte.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dsl;
use crate::error::{GigError, Result};
use crate::graph::PropertyGraph;
use crate::impute::{impute_graph, write_decisions};
use crate::metrics::{score, EvalReport};
use crate::miner::{mine, select_rules, MinerConfig};
use crate::model::checkpoint::{save_checkpoint, Checkpoint};
use crate::model::pairs::make_training_pairs;
use crate::model::train::train;
use crate::model::transformer::ModelParams;
use crate::model::vocab::build_vocab;
use crate::pattern::GraphPattern;
use crate::rule::{consolidate, to_mask, Gdd, Provenance};
use crate::table::PseudoTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleSource {
    Mine,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub pattern: PathBuf,
    pub rule_source: RuleSource,
    pub miner: MinerConfig,
    pub model: ModelParams,
    /// Rules kept per distinct RHS column target before consolidation.
    pub top_k_per_rhs: usize,
    pub missing_pcts: Vec<f64>,
    /// Explicit cells to blank instead of a random pct sweep.
    pub missing_cells: Option<Vec<(String, String)>>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub dataset_name: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: PathBuf::new(),
            pattern: PathBuf::new(),
            rule_source: RuleSource::Mine,
            miner: MinerConfig::default(),
            model: ModelParams::default(),
            top_k_per_rhs: 1,
            missing_pcts: vec![0.01, 0.02, 0.03, 0.04, 0.05],
            missing_cells: None,
            seed: 7,
            out_dir: PathBuf::from("out"),
            dataset_name: "dataset".into(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        let config: RunConfig =
            serde_json::from_str(&text).map_err(|e| GigError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.as_os_str().is_empty() || self.pattern.as_os_str().is_empty() {
            return Err(GigError::Config("dataset and pattern paths are required".into()));
        }
        if self.top_k_per_rhs < 1 {
            return Err(GigError::Config("top_k_per_rhs must be at least 1".into()));
        }
        if self
            .missing_pcts
            .iter()
            .any(|p| !(p.is_finite() && *p > 0.0 && *p <= 1.0))
        {
            return Err(GigError::Config("missing pcts must lie in (0, 1]".into()));
        }
        self.miner.validate()?;
        self.model.validate()?;
        Ok(())
    }
}

/// Named wall-clock durations; written next to the reports, never into
/// them.
#[derive(Debug, Default, Serialize)]
pub struct Timings(pub BTreeMap<String, f64>);

struct Timer<'a> {
    timings: &'a mut Timings,
}

impl Timer<'_> {
    fn run<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().map_err(|e| e.in_stage(stage))?;
        *self.timings.0.entry(stage.to_string()).or_insert(0.0) +=
            start.elapsed().as_secs_f64();
        Ok(out)
    }
}

#[derive(Serialize)]
struct RuleMeta {
    name: String,
    support: Option<u64>,
    confidence: Option<f64>,
    body: String,
}

fn write_rules(rules: &[Gdd], dir: &Path) -> Result<()> {
    std::fs::write(dir.join("rules.gdd"), dsl::render_rules(rules))?;
    let meta: Vec<RuleMeta> = rules
        .iter()
        .map(|r| {
            let (support, confidence) = match r.provenance {
                Provenance::Mined { support, confidence } => (Some(support), Some(confidence)),
                Provenance::Loaded => (None, None),
            };
            RuleMeta {
                name: r.name.clone(),
                support,
                confidence,
                body: r.render_body(),
            }
        })
        .collect();
    std::fs::write(
        dir.join("rules.meta.json"),
        serde_json::to_string_pretty(&meta)? + "\n",
    )?;
    Ok(())
}

fn write_training_log(ckpt: &Checkpoint, dir: &Path) -> Result<()> {
    let mut out = String::from("epoch,loss,learning_rate\n");
    for (epoch, (loss, lr)) in ckpt
        .loss_history
        .iter()
        .zip(ckpt.lr_history.iter())
        .enumerate()
    {
        out.push_str(&format!("{},{:.12},{:.12}\n", epoch + 1, loss, lr));
    }
    std::fs::write(dir.join("training_log.csv"), out)?;
    Ok(())
}

/// Stable CSV column order shared by the JSON and CSV emissions. The
/// runtime column is a placeholder (reports must be byte-reproducible);
/// measured timings live in timings.json.
pub fn emit_report(reports: &[EvalReport], format: &str, path: &Path) -> Result<()> {
    let mut sorted: Vec<&EvalReport> = reports.iter().collect();
    sorted.sort_by(|a, b| a.pct.total_cmp(&b.pct).then_with(|| a.dataset.cmp(&b.dataset)));
    match format {
        "csv" => {
            let mut out =
                String::from("dataset,pct,missing,imputed,true,precision,recall,f1,runtime_s\n");
            for r in sorted {
                out.push_str(&format!(
                    "{},{},{},{},{},{:.6},{:.6},{:.6},0.000\n",
                    r.dataset, r.pct, r.missing, r.imputed, r.true_count, r.precision, r.recall,
                    r.f1
                ));
            }
            std::fs::write(path, out)?;
        }
        "json" => {
            let owned: Vec<EvalReport> = sorted.into_iter().cloned().collect();
            std::fs::write(path, serde_json::to_string_pretty(&owned)? + "\n")?;
        }
        other => return Err(GigError::Config(format!("unknown report format `{other}`"))),
    }
    Ok(())
}

/// One perturbation run: a pct-driven random injection or an explicit
/// cell list.
enum Perturbation {
    Pct(f64),
    Cells(Vec<(String, String)>),
}

impl Perturbation {
    fn label(&self) -> String {
        match self {
            Perturbation::Pct(pct) => format!("pct-{pct}"),
            Perturbation::Cells(_) => "cells".to_string(),
        }
    }

    fn pct(&self) -> f64 {
        match self {
            Perturbation::Pct(pct) => *pct,
            Perturbation::Cells(_) => 0.0,
        }
    }
}

/// The full three-step pipeline. Training always runs on the
/// un-perturbed graph; missingness is injected afterwards, once per
/// configured run.
pub fn run_pipeline(config: &RunConfig) -> Result<Vec<EvalReport>> {
    config.validate()?;
    std::fs::create_dir_all(&config.out_dir)?;
    let mut timings = Timings::default();
    let mut timer = Timer { timings: &mut timings };

    let graph = timer.run("ingest", || PropertyGraph::load(&config.dataset))?;
    let pattern = timer.run("ingest", || GraphPattern::load(&config.pattern))?;
    let table = timer.run("match", || PseudoTable::build(&graph, &pattern))?;

    let pattern_name = config
        .pattern
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scope".into());
    let rules = timer.run("rules", || {
        let raw = match &config.rule_source {
            RuleSource::Mine => {
                let mined = mine(&table, &pattern_name, &config.miner)?;
                select_rules(&mined, config.top_k_per_rhs)
            }
            RuleSource::File(path) => dsl::parse_rules(&std::fs::read_to_string(path)?)?,
        };
        let merged = consolidate(&raw)?;
        if merged.is_empty() {
            return Err(GigError::Rule("no rules available".into()));
        }
        write_rules(&merged, &config.out_dir)?;
        Ok(merged)
    })?;

    let vocab = build_vocab(&table, &rules);
    let ckpt = timer.run("train", || {
        let pairs = make_training_pairs(&table, &rules, &graph, &vocab, config.model.max_seq_len)?;
        let mut params = config.model.clone();
        params.seed = config.seed;
        let ckpt = train(&pairs, &vocab, &params)?;
        save_checkpoint(&ckpt, &config.out_dir.join("model.ckpt"))?;
        write_training_log(&ckpt, &config.out_dir)?;
        Ok(ckpt)
    })?;

    let runs: Vec<Perturbation> = match &config.missing_cells {
        Some(cells) => vec![Perturbation::Cells(cells.clone())],
        None => config.missing_pcts.iter().map(|&p| Perturbation::Pct(p)).collect(),
    };

    let mut reports = Vec::new();
    for run in runs {
        let dir = config.out_dir.join(run.label());
        std::fs::create_dir_all(&dir)?;
        let (perturbed, truth) = timer.run("inject", || match &run {
            Perturbation::Pct(pct) => graph.inject_missing(*pct, config.seed),
            Perturbation::Cells(cells) => graph.blank_cells(cells),
        })?;
        truth.save(dir.join("truth.json"))?;
        perturbed.save(dir.join("perturbed.json"))?;

        let report = timer.run("impute", || {
            let run_table = PseudoTable::build(&perturbed, &pattern)?;
            let masks = rules
                .iter()
                .map(|r| Ok((r.clone(), to_mask(r, &run_table)?)))
                .collect::<Result<Vec<_>>>()?;
            let (imputed, decisions) = impute_graph(&perturbed, &run_table, &masks, &ckpt)?;
            imputed.save(dir.join("imputed.json"))?;
            let mut log = std::fs::File::create(dir.join("decisions.jsonl"))?;
            write_decisions(&decisions, &mut log)?;
            log.flush()?;
            score(&truth, &decisions)
        })?;
        let mut report = report;
        report.dataset = config.dataset_name.clone();
        report.pct = run.pct();
        emit_report(std::slice::from_ref(&report), "json", &dir.join("report.json"))?;
        reports.push(report);
    }

    timer.run("eval", || {
        emit_report(&reports, "csv", &config.out_dir.join("report.csv"))?;
        emit_report(&reports, "json", &config.out_dir.join("report.json"))?;
        Ok(())
    })?;
    std::fs::write(
        config.out_dir.join("timings.json"),
        serde_json::to_string_pretty(&timings)? + "\n",
    )?;
    Ok(reports)
}
