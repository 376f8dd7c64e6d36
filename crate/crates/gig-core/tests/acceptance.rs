//! Acceptance suite: ten end-to-end checks over the public API, one
//! pass/fail line each.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, resume_unwind, UnwindSafe};
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use gig_core::constraint::{DistanceConstraint, Operand};
use gig_core::fixtures;
use gig_core::graph::{Edge, Node, PropertyGraph};
use gig_core::impute::{impute_graph, ForcedPredictor, Status};
use gig_core::metrics::score as eval_score;
use gig_core::miner::{candidate_constraints, mine, score, MinerConfig};
use gig_core::model::{
    grad_check, kl_loss, make_training_pairs, train, ModelParams, Transformer, Vocabulary, BOS,
    EOS,
};
use gig_core::pattern::{GraphPattern, Match, PatternEdge, PatternVariable};
use gig_core::pipeline::{run_pipeline, RunConfig};
use gig_core::rule::{to_mask, Gdd, Provenance};
use gig_core::table::PseudoTable;
use gig_core::value::AttributeValue;

fn criterion(n: usize, what: &str, f: impl FnOnce() + UnwindSafe) {
    let outcome = catch_unwind(f);
    let verdict = if outcome.is_ok() { "pass" } else { "fail" };
    println!("criterion {n:02} ({what}): {verdict}");
    if let Err(payload) = outcome {
        resume_unwind(payload);
    }
}

fn cell(variable: &str, attribute: &str) -> Operand {
    Operand::Cell {
        variable: variable.into(),
        attribute: attribute.into(),
    }
}

fn constant(s: &str) -> Operand {
    Operand::Constant(AttributeValue::text(s))
}

fn rule(phi_x: Vec<DistanceConstraint>, phi_y: Vec<DistanceConstraint>) -> Gdd {
    Gdd::new("r", "scope", phi_x, phi_y, Provenance::Loaded).unwrap()
}

#[test]
fn c01_reference_masks() {
    criterion(1, "reference positional masks", || {
        let table =
            PseudoTable::build(&fixtures::table1_graph_missing(), &fixtures::table1_pattern())
                .unwrap();
        let name_to_genre = rule(
            vec![DistanceConstraint::eq(cell("x", "Name"), constant("EA"))],
            vec![DistanceConstraint::eq(cell("y", "Genre"), constant("Soccer"))],
        );
        let mask = to_mask(&name_to_genre, &table).unwrap();
        assert_eq!(mask.as_ints(), vec![0, 1, 0, 0, 1, 0, 0, 0, 0, 0, 0]);
        let name_to_name = rule(
            vec![DistanceConstraint::eq(cell("x", "Name"), constant("EA"))],
            vec![DistanceConstraint::eq(cell("y", "Name"), constant("F20"))],
        );
        let mask = to_mask(&name_to_name, &table).unwrap();
        assert_eq!(mask.as_ints(), vec![0, 1, 0, 1, 0, 0, 0, 0, 0, 0, 0]);
    });
}

fn walkthrough_config(dir: &std::path::Path) -> RunConfig {
    let dataset = dir.join("graph.json");
    fixtures::table1_graph_complete().save(&dataset).unwrap();
    let pattern = dir.join("games.json");
    fixtures::table1_pattern().save(&pattern).unwrap();
    RunConfig {
        dataset,
        pattern,
        missing_cells: Some(vec![("7".into(), "Name".into())]),
        model: ModelParams {
            embed_dim: 32,
            num_heads: 2,
            num_layers: 1,
            feedforward_dim: 64,
            epochs: 120,
            learning_rate: 3e-3,
            dropout_rate: 0.0,
            label_smoothing: 0.0,
            batch_size: 8,
            ..ModelParams::default()
        },
        out_dir: dir.join("out"),
        dataset_name: "games".into(),
        ..RunConfig::default()
    }
}

#[test]
fn c02_walkthrough_end_to_end() {
    criterion(2, "toy walkthrough recovers the blanked name", || {
        let dir = tempfile::tempdir().unwrap();
        let config = walkthrough_config(dir.path());
        let started = Instant::now();
        let reports = run_pipeline(&config).unwrap();
        assert!(started.elapsed() < Duration::from_secs(120), "{:?}", started.elapsed());
        assert_eq!(reports.len(), 1);
        let r = &reports[0];
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0), "{r:?}");
        let imputed =
            PropertyGraph::load(config.out_dir.join("cells/imputed.json")).unwrap();
        assert_eq!(imputed.value("7", "Name").unwrap().to_string(), "F20");
    });
}

#[test]
fn c03_out_of_domain_predictions_rejected() {
    criterion(3, "out-of-domain predictions are rejected", || {
        let graph = fixtures::table1_graph_missing();
        let table = PseudoTable::build(&graph, &fixtures::table1_pattern()).unwrap();
        let covering = rule(
            vec![DistanceConstraint::eq(cell("x", "Name"), constant("EA"))],
            vec![DistanceConstraint::eq(cell("y", "Name"), Operand::Wildcard)],
        );
        let masks = vec![(covering.clone(), to_mask(&covering, &table).unwrap())];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            // Random value guaranteed to miss the observed Name domain.
            let bogus = format!("zz{}", rng.random_range(0..1_000_000u32));
            let predictor = ForcedPredictor(bogus);
            let (imputed, decisions) = impute_graph(&graph, &table, &masks, &predictor).unwrap();
            assert!(!decisions.is_empty());
            for d in &decisions {
                assert_eq!(d.status, Status::RejectedInconsistent, "{d:?}");
            }
            assert!(imputed.value("7", "Name").unwrap().is_missing());
        }
    });
}

fn uniform_graph(nodes: usize, attrs: usize) -> PropertyGraph {
    let names: Vec<String> = (0..attrs).map(|j| format!("A{j}")).collect();
    let schema = BTreeMap::from([("t".to_string(), names.clone())]);
    let nodes = (0..nodes)
        .map(|i| Node {
            eid: format!("{i:04}"),
            label: "t".into(),
            attrs: names
                .iter()
                .enumerate()
                .map(|(j, a)| (a.clone(), AttributeValue::text(format!("v{i}_{j}"))))
                .collect(),
        })
        .collect();
    PropertyGraph::new(schema, nodes, Vec::new()).unwrap()
}

#[test]
fn c04_injection_counts() {
    criterion(4, "missingness injection counts", || {
        let cases = [
            (500, 11, 0.01, 55),
            (500, 11, 0.05, 275),
            (500, 7, 0.01, 35),
            (864, 6, 0.01, 52),
            (676, 13, 0.01, 88),
            (519, 7, 0.01, 36),
        ];
        for (nodes, attrs, pct, expected) in cases {
            let graph = uniform_graph(nodes, attrs);
            let (_, truth) = graph.inject_missing(pct, 1).unwrap();
            assert_eq!(truth.len(), expected, "{nodes}x{attrs} at {pct}");
        }
    });
}

fn tiny_model_and_pair() -> (Transformer, gig_core::model::TrainingPair) {
    let vocab = Vocabulary::new(
        BTreeSet::from(["v.A".into(), "v.B".into(), "=0".into()]),
        BTreeSet::from(["red".into(), "blue".into(), "green".into()]),
    );
    let params = ModelParams {
        embed_dim: 8,
        num_heads: 2,
        num_layers: 1,
        feedforward_dim: 16,
        max_seq_len: 8,
        dropout_rate: 0.0,
        label_smoothing: 0.1,
        ..ModelParams::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = Transformer::init(params, vocab.len(), &mut rng).unwrap();
    let enc = vec![vocab.id("v.A"), vocab.id("=0"), vocab.id("red")];
    let dec = vec![BOS, vocab.id("v.B"), vocab.id("=0"), vocab.id("blue"), EOS];
    let pair = gig_core::model::TrainingPair { enc, dec, rule: "r".into(), match_id: 0 };
    (model, pair)
}

#[test]
fn c05_gradient_check() {
    criterion(5, "analytic gradients match finite differences", || {
        let (model, pair) = tiny_model_and_pair();
        let worst = grad_check(&model, &pair, 1e-4, 200).unwrap();
        assert!(worst < 1e-3, "max relative error {worst}");
    });
}

#[test]
fn c06_loss_and_distribution_properties() {
    criterion(6, "loss oracle values and probability rows", || {
        // One-hot target against a uniform distribution over 4 symbols.
        let pred = Array2::from_elem((1, 4), 0.25);
        let loss = kl_loss(&pred, &[3], 0.0);
        assert!((loss - 4.0f64.ln()).abs() < 1e-9, "{loss}");
        // A prediction equal to the smoothed target scores zero.
        let eps = 0.1;
        let mut smoothed = Array2::from_elem((1, 4), eps / 3.0);
        smoothed[(0, 3)] = 1.0 - eps;
        let loss = kl_loss(&smoothed, &[3], eps);
        assert!(loss.abs() < 1e-9, "{loss}");

        let (model, _) = tiny_model_and_pair();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let vocab_size = 10usize;
        let mut rows_checked = 0usize;
        while rows_checked < 1000 {
            let enc: Vec<usize> =
                (0..rng.random_range(1..=4)).map(|_| rng.random_range(0..vocab_size)).collect();
            let dec: Vec<usize> =
                (0..rng.random_range(1..=4)).map(|_| rng.random_range(0..vocab_size)).collect();
            let probs = model.forward_probs(&enc, &dec).unwrap();
            for row in probs.rows() {
                let total: f64 = row.sum();
                assert!((total - 1.0).abs() < 1e-6, "row sums to {total}");
                rows_checked += 1;
            }
        }
    });
}

/// Exhaustive (Phi_X, Phi_Y) enumeration over the candidate set, with no
/// levelwise pruning; the reference the miner must reproduce.
fn exhaustive_rules(table: &PseudoTable, pattern_name: &str, config: &MinerConfig) -> Vec<Gdd> {
    let candidates = candidate_constraints(table, config).unwrap();
    let n = candidates.len();
    let mut subsets: Vec<BTreeSet<usize>> = vec![BTreeSet::new()];
    for i in 0..n {
        let mut next = subsets.clone();
        for s in &subsets {
            if s.len() < config.max_lhs_size {
                let mut t = s.clone();
                t.insert(i);
                next.push(t);
            }
        }
        subsets = next;
    }
    let mut accepted: Vec<(BTreeSet<usize>, usize, u64, f64)> = Vec::new();
    for set in subsets.iter().filter(|s| !s.is_empty()) {
        let phi_x: Vec<DistanceConstraint> = set.iter().map(|&i| candidates[i].clone()).collect();
        let lhs_cols: BTreeSet<(String, String)> =
            phi_x.iter().flat_map(|c| c.referenced_columns()).collect();
        for (j, rhs) in candidates.iter().enumerate() {
            if set.contains(&j)
                || rhs.referenced_columns().iter().any(|c| lhs_cols.contains(c))
            {
                continue;
            }
            let (support, confidence) =
                score(table, &phi_x, std::slice::from_ref(rhs)).unwrap();
            if support >= config.min_support
                && confidence.is_some_and(|c| c >= config.min_confidence)
            {
                accepted.push((set.clone(), j, support, confidence.unwrap()));
            }
        }
    }
    let minimal: Vec<_> = accepted
        .iter()
        .filter(|(set, rhs, _, _)| {
            !accepted.iter().any(|(other, other_rhs, _, _)| {
                other_rhs == rhs && other.len() < set.len() && other.is_subset(set)
            })
        })
        .cloned()
        .collect();
    let mut rules: Vec<Gdd> = minimal
        .into_iter()
        .map(|(set, rhs, support, confidence)| {
            Gdd::new(
                "pending",
                pattern_name,
                set.iter().map(|&i| candidates[i].clone()).collect(),
                vec![candidates[rhs].clone()],
                Provenance::Mined { support, confidence },
            )
            .unwrap()
        })
        .collect();
    rules.sort_by_key(Gdd::rank_key);
    for (i, r) in rules.iter_mut().enumerate() {
        r.name = format!("r{}", i + 1);
    }
    rules
}

fn random_table(rng: &mut ChaCha8Rng, cols: usize, rows: usize) -> PseudoTable {
    use gig_core::table::{Column, Row};
    let columns = (0..cols)
        .map(|i| Column { variable: "v".into(), attribute: format!("A{i}"), label: None })
        .collect();
    let rows = (0..rows)
        .map(|m| Row {
            match_id: m,
            values: (0..cols)
                .map(|_| {
                    if rng.random_bool(0.08) {
                        AttributeValue::Missing
                    } else {
                        AttributeValue::text(format!("w{}", rng.random_range(0..3u8)))
                    }
                })
                .collect(),
        })
        .collect();
    PseudoTable { columns, rows }
}

#[test]
fn c07_miner_matches_exhaustive_enumeration() {
    criterion(7, "miner equals exhaustive enumeration", || {
        let config = MinerConfig {
            max_lhs_size: 2,
            edit_thresholds: vec![0],
            ..MinerConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let started = Instant::now();
        for _ in 0..50 {
            let cols = rng.random_range(3..=5);
            let rows = rng.random_range(10..=30);
            let table = random_table(&mut rng, cols, rows);
            let mined = mine(&table, "p", &config).unwrap();
            assert_eq!(mined, exhaustive_rules(&table, "p", &config));
        }
        assert!(started.elapsed() < Duration::from_secs(60), "{:?}", started.elapsed());
    });
}

/// 300 records obeying the functional dependency A -> B with ten classes.
fn fd_graph() -> PropertyGraph {
    let schema = BTreeMap::from([("rec".to_string(), vec!["A".to_string(), "B".to_string()])]);
    let nodes = (0..300)
        .map(|i| Node {
            eid: format!("{i:03}"),
            label: "rec".into(),
            attrs: BTreeMap::from([
                ("A".to_string(), AttributeValue::text(format!("a{}", i % 10))),
                ("B".to_string(), AttributeValue::text(format!("b{}", i % 10))),
            ]),
        })
        .collect();
    PropertyGraph::new(schema, nodes, Vec::new()).unwrap()
}

#[test]
fn c08_functional_dependency_recovery() {
    criterion(8, "functional dependency recovery at 5% missing", || {
        let started = Instant::now();
        let graph = fd_graph();
        let pattern = GraphPattern::new(
            vec![PatternVariable { name: "v".into(), label: "rec".into(), attrs: None }],
            Vec::new(),
            true,
        )
        .unwrap();
        let table = PseudoTable::build(&graph, &pattern).unwrap();
        let miner = MinerConfig {
            max_lhs_size: 1,
            edit_thresholds: vec![0],
            ..MinerConfig::default()
        };
        let rules = mine(&table, "fd", &miner).unwrap();
        assert!(!rules.is_empty());
        let params = ModelParams {
            embed_dim: 32,
            num_heads: 2,
            num_layers: 1,
            feedforward_dim: 64,
            max_seq_len: 16,
            dropout_rate: 0.0,
            label_smoothing: 0.0,
            learning_rate: 3e-3,
            batch_size: 32,
            epochs: 40,
            seed: 7,
        };
        let vocab = gig_core::model::build_vocab(&table, &rules);
        let pairs = make_training_pairs(&table, &rules, &graph, &vocab, params.max_seq_len).unwrap();
        let ckpt = train(&pairs, &vocab, &params).unwrap();

        for seed in 0..10u64 {
            let (perturbed, truth) = graph.inject_missing_in(0.05, seed, Some(&["B"])).unwrap();
            assert_eq!(truth.len(), 15);
            let run_table = PseudoTable::build(&perturbed, &pattern).unwrap();
            let masks: Vec<_> = rules
                .iter()
                .map(|r| (r.clone(), to_mask(r, &run_table).unwrap()))
                .collect();
            let (_, decisions) = impute_graph(&perturbed, &run_table, &masks, &ckpt).unwrap();
            let report = eval_score(&truth, &decisions).unwrap();
            assert_eq!(report.precision, 1.0, "seed {seed}: {report:?}");
            assert!(report.recall >= 0.90, "seed {seed}: {report:?}");
        }
        assert!(started.elapsed() < Duration::from_secs(300), "{:?}", started.elapsed());
    });
}

#[test]
fn c09_reruns_are_byte_identical() {
    criterion(9, "identical runs emit identical artifacts", || {
        let dir = tempfile::tempdir().unwrap();
        let mut config = walkthrough_config(dir.path());
        config.model.epochs = 25;
        run_pipeline(&config).unwrap();
        let first = config.out_dir.clone();
        config.out_dir = dir.path().join("out2");
        run_pipeline(&config).unwrap();
        for name in [
            "rules.gdd",
            "rules.meta.json",
            "model.ckpt",
            "training_log.csv",
            "report.csv",
            "report.json",
            "cells/decisions.jsonl",
            "cells/imputed.json",
            "cells/report.json",
        ] {
            let a = std::fs::read(first.join(name)).unwrap();
            let b = std::fs::read(config.out_dir.join(name)).unwrap();
            assert_eq!(a, b, "artifact {name} differs");
        }
    });
}

fn random_graph(rng: &mut ChaCha8Rng) -> PropertyGraph {
    let schema = BTreeMap::from([
        ("a".to_string(), vec!["P".to_string()]),
        ("b".to_string(), vec!["P".to_string()]),
    ]);
    let n = rng.random_range(5..=30);
    let nodes: Vec<Node> = (0..n)
        .map(|i| Node {
            eid: format!("{i:02}"),
            label: if rng.random_bool(0.5) { "a" } else { "b" }.into(),
            attrs: BTreeMap::from([(
                "P".to_string(),
                AttributeValue::text(format!("p{}", rng.random_range(0..4u8))),
            )]),
        })
        .collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random_bool(0.15) {
                edges.push(Edge {
                    src: format!("{i:02}"),
                    rela: "r".into(),
                    dst: format!("{j:02}"),
                });
            }
        }
    }
    PropertyGraph::new(schema, nodes, edges).unwrap()
}

fn random_pattern(rng: &mut ChaCha8Rng) -> GraphPattern {
    let vars = rng.random_range(2..=3);
    let variables: Vec<PatternVariable> = (0..vars)
        .map(|i| PatternVariable {
            name: format!("v{i}"),
            label: if rng.random_bool(0.5) { "a" } else { "b" }.into(),
            attrs: None,
        })
        .collect();
    // A chain keeps the pattern connected.
    let edges = (1..vars)
        .map(|i| PatternEdge {
            src: format!("v{}", i - 1),
            rela: "r".into(),
            dst: format!("v{i}"),
        })
        .collect();
    GraphPattern::new(variables, edges, rng.random_bool(0.5)).unwrap()
}

/// All label-respecting tuples, filtered by edges and the distinct rule.
fn brute_force_matches(graph: &PropertyGraph, pattern: &GraphPattern) -> Vec<Match> {
    let mut tuples: Vec<Vec<String>> = vec![Vec::new()];
    for var in &pattern.variables {
        let mut next = Vec::new();
        for t in &tuples {
            for node in graph.nodes().filter(|n| n.label == var.label) {
                let mut t = t.clone();
                t.push(node.eid.clone());
                next.push(t);
            }
        }
        tuples = next;
    }
    let mut out: Vec<Match> = tuples
        .into_iter()
        .filter(|t| {
            if pattern.distinct {
                for (i, vi) in pattern.variables.iter().enumerate() {
                    for (j, vj) in pattern.variables.iter().enumerate().skip(i + 1) {
                        if vi.label == vj.label && t[i] >= t[j] {
                            return false;
                        }
                    }
                }
            }
            pattern.edges.iter().all(|e| {
                let src = pattern.variables.iter().position(|v| v.name == e.src).unwrap();
                let dst = pattern.variables.iter().position(|v| v.name == e.dst).unwrap();
                graph.relation_targets(&t[src], &e.rela).contains(&t[dst])
            })
        })
        .map(|bindings| Match { bindings })
        .collect();
    out.sort();
    out
}

#[test]
fn c10_matching_equals_brute_force() {
    criterion(10, "pattern matching equals brute-force enumeration", || {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..30 {
            let graph = random_graph(&mut rng);
            let pattern = random_pattern(&mut rng);
            let found = pattern.find_matches(&graph).unwrap();
            assert_eq!(found, brute_force_matches(&graph, &pattern));
        }
    });
}
