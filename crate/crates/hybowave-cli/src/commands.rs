//! Subcommand implementations. Every command writes machine-readable output
//! files and prints exactly one summary line to stdout.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use hybowave::checkpoint::Checkpoint;
use hybowave::encoder::top_k_features;
use hybowave::graph::{load_edge_list, split_edges, EdgeSplit, Graph, LoadSummary, SPLIT_FRACTIONS};
use hybowave::metrics::Metrics;
use hybowave::objective::link_probability;
use hybowave::trainer::{ablate, train, TrainConfig};
use hybowave::wavelet::default_scale_sweep;

use crate::config::RunConfig;

fn load_graph(edges: &Path) -> Result<LoadSummary> {
    load_edge_list(edges).with_context(|| format!("loading edge list {}", edges.display()))
}

pub fn cmd_split(edges: &Path, seed: u64, out: &Path) -> Result<()> {
    let loaded = load_graph(edges)?;
    let split = split_edges(&loaded.graph, SPLIT_FRACTIONS, seed)?;
    split.save(out)?;
    println!(
        "split: nodes={} edges={} train={} val={} test={} val_neg={} test_neg={} self_loops_skipped={} duplicates_collapsed={} -> {}",
        loaded.graph.num_nodes(),
        loaded.graph.edges().len(),
        split.train_pos.len(),
        split.val_pos.len(),
        split.test_pos.len(),
        split.val_neg.len(),
        split.test_neg.len(),
        loaded.self_loops_skipped,
        loaded.duplicates_collapsed,
        out.display()
    );
    Ok(())
}

fn resolve_split(
    g: &Graph,
    split_path: Option<&Path>,
    seed: u64,
) -> Result<(EdgeSplit, String)> {
    match split_path {
        Some(p) => {
            let split = EdgeSplit::load(p).with_context(|| format!("loading split {}", p.display()))?;
            split.validate_against(g)?;
            Ok((split, p.display().to_string()))
        }
        None => Ok((
            split_edges(g, SPLIT_FRACTIONS, seed)?,
            format!("derived from seed {seed}"),
        )),
    }
}

#[derive(Serialize)]
struct RunMetrics {
    seed: u64,
    auc: f64,
    aupr: f64,
    best_epoch: usize,
}

#[derive(Serialize)]
struct Provenance {
    config: RunConfig,
    split: String,
    repeats: usize,
}

#[derive(Serialize)]
struct MetricsReport {
    auc: f64,
    aupr: f64,
    best_epoch: usize,
    losses: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    auc_std: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    aupr_std: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    runs: Option<Vec<RunMetrics>>,
    provenance: Provenance,
}

fn sample_std(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (values.len() - 1) as f64;
    var.sqrt()
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_train(
    edges: &Path,
    split_path: Option<&Path>,
    config: Option<&Path>,
    overrides: &[String],
    out_dir: &Path,
    repeats: usize,
) -> Result<()> {
    if repeats == 0 {
        bail!("--repeats must be at least 1");
    }
    let mut run_cfg = RunConfig::load(config, overrides)?;
    run_cfg.edges = Some(edges.display().to_string());
    run_cfg.out_dir = Some(out_dir.display().to_string());
    let base = run_cfg.train_config();
    base.validate()?;

    let loaded = load_graph(edges)?;
    let g = loaded.graph;
    let (split, split_source) = resolve_split(&g, split_path, base.seed)?;
    fs::create_dir_all(out_dir)?;

    let mut all: Vec<(u64, Metrics)> = Vec::with_capacity(repeats);
    let mut first_checkpoint: Option<Checkpoint> = None;
    for r in 0..repeats {
        let cfg = TrainConfig {
            seed: base.seed + r as u64,
            ..base.clone()
        };
        let (ckpt, metrics) = train(&g, &split, &cfg)?;
        if first_checkpoint.is_none() {
            first_checkpoint = Some(ckpt);
        }
        all.push((cfg.seed, metrics));
    }

    let aucs: Vec<f64> = all.iter().map(|(_, m)| m.auc).collect();
    let auprs: Vec<f64> = all.iter().map(|(_, m)| m.aupr).collect();
    let auc = aucs.iter().sum::<f64>() / aucs.len() as f64;
    let aupr = auprs.iter().sum::<f64>() / auprs.len() as f64;
    let first = &all[0].1;
    let report = MetricsReport {
        auc,
        aupr,
        best_epoch: first.best_epoch,
        losses: first.losses.clone(),
        auc_std: (repeats > 1).then(|| sample_std(&aucs, auc)),
        aupr_std: (repeats > 1).then(|| sample_std(&auprs, aupr)),
        runs: (repeats > 1).then(|| {
            all.iter()
                .map(|(seed, m)| RunMetrics {
                    seed: *seed,
                    auc: m.auc,
                    aupr: m.aupr,
                    best_epoch: m.best_epoch,
                })
                .collect()
        }),
        provenance: Provenance {
            config: run_cfg,
            split: split_source,
            repeats,
        },
    };

    let ckpt = first_checkpoint.expect("at least one run");
    ckpt.save(out_dir.join("checkpoint.json"))?;
    write_json(&out_dir.join("metrics.json"), &report)?;

    if repeats > 1 {
        println!(
            "train: test auc={auc:.4}+-{:.4} aupr={aupr:.4}+-{:.4} over {repeats} repeats -> {}",
            report.auc_std.unwrap(),
            report.aupr_std.unwrap(),
            out_dir.display()
        );
    } else {
        println!(
            "train: test auc={auc:.4} aupr={aupr:.4} best_epoch={} -> {}",
            first.best_epoch,
            out_dir.display()
        );
    }
    Ok(())
}

fn parse_pairs_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split('\t');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => {
                out.push((a.to_string(), b.to_string()));
            }
            _ => {
                return Err(hybowave::Error::Parse {
                    line: lineno + 1,
                    message: format!("expected exactly 2 tab-separated labels, got {line:?}"),
                }
                .into())
            }
        }
    }
    Ok(out)
}

pub fn cmd_predict(
    checkpoint: &Path,
    pairs: Option<&Path>,
    topk: Option<usize>,
    out: &Path,
) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)
        .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    let (g, model) = ckpt.rebuild()?;
    let embeddings = model.embeddings();

    let index_pairs: Vec<(u32, u32)> = match (pairs, topk) {
        (Some(path), None) => {
            let labeled = parse_pairs_file(path)?;
            let mut out = Vec::with_capacity(labeled.len());
            for (a, b) in &labeled {
                let ia = g
                    .index_of(a)
                    .ok_or_else(|| hybowave::Error::UnknownLabel(a.clone()))?;
                let ib = g
                    .index_of(b)
                    .ok_or_else(|| hybowave::Error::UnknownLabel(b.clone()))?;
                out.push((ia, ib));
            }
            out
        }
        (None, Some(k)) => {
            let train_set: HashSet<(u32, u32)> = ckpt.graph.train_edges.iter().copied().collect();
            let n = g.num_nodes() as u32;
            let mut all = Vec::new();
            for a in 0..n {
                for b in (a + 1)..n {
                    if !train_set.contains(&(a, b)) {
                        all.push((a, b));
                    }
                }
            }
            let scores = model.score_pairs(&embeddings, &all);
            let mut order: Vec<usize> = (0..all.len()).collect();
            order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
            order.truncate(k);
            order.into_iter().map(|i| all[i]).collect()
        }
        _ => bail!("predict needs exactly one of --pairs or --topk"),
    };

    let scores = model.score_pairs(&embeddings, &index_pairs);
    let mut rows: Vec<(String, String, f64, f64)> = index_pairs
        .iter()
        .zip(&scores)
        .map(|(&(a, b), &score)| {
            let probability = link_probability(-score, &model.params.decoder);
            (
                g.label(a).to_string(),
                g.label(b).to_string(),
                score,
                probability,
            )
        })
        .collect();
    rows.sort_by(|x, y| y.2.total_cmp(&x.2));

    let mut text = String::new();
    for (a, b, score, prob) in &rows {
        text.push_str(&format!("{a}\t{b}\t{score}\t{prob}\n"));
    }
    fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
    println!("predict: scored {} pairs -> {}", rows.len(), out.display());
    Ok(())
}

pub fn cmd_ablate(
    edges: &Path,
    config: Option<&Path>,
    overrides: &[String],
    out_dir: &Path,
) -> Result<()> {
    let run_cfg = RunConfig::load(config, overrides)?;
    let base = run_cfg.train_config();
    base.validate()?;
    let loaded = load_graph(edges)?;
    let (split, _) = resolve_split(&loaded.graph, None, base.seed)?;
    fs::create_dir_all(out_dir)?;

    let rows = ablate(&loaded.graph, &split, &base)?;
    let mut csv = String::from("encoder,wavelet_contrastive,auc,aupr\n");
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            row.encoder.as_str(),
            if row.wavelet_and_contrastive { "on" } else { "off" },
            row.auc,
            row.aupr
        ));
    }
    let path = out_dir.join("ablation.csv");
    fs::write(&path, csv)?;
    let full = &rows[0];
    println!(
        "ablate: {} cells, full model auc={:.4} aupr={:.4} -> {}",
        rows.len(),
        full.auc,
        full.aupr,
        path.display()
    );
    Ok(())
}

fn parse_scale_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .with_context(|| format!("invalid scale {s:?} in {text:?}"))
        })
        .collect()
}

pub fn cmd_scale_sweep(
    edges: &Path,
    config: Option<&Path>,
    overrides: &[String],
    scale_lists: &[String],
    out_dir: &Path,
) -> Result<()> {
    let run_cfg = RunConfig::load(config, overrides)?;
    let base = run_cfg.train_config();
    base.validate()?;
    let loaded = load_graph(edges)?;
    let (split, _) = resolve_split(&loaded.graph, None, base.seed)?;
    fs::create_dir_all(out_dir)?;

    let lists: Vec<Vec<usize>> = if scale_lists.is_empty() {
        default_scale_sweep()
    } else {
        scale_lists
            .iter()
            .map(|s| parse_scale_list(s))
            .collect::<Result<_>>()?
    };

    let mut csv = String::from("scales,auc,aupr,best_epoch\n");
    for list in &lists {
        let cfg = TrainConfig {
            scales: list.clone(),
            ..base.clone()
        };
        let (_, metrics) = train(&loaded.graph, &split, &cfg)?;
        let tag: Vec<String> = list.iter().map(|v| v.to_string()).collect();
        csv.push_str(&format!(
            "{},{},{},{}\n",
            tag.join("-"),
            metrics.auc,
            metrics.aupr,
            metrics.best_epoch
        ));
    }
    let path = out_dir.join("scale_sweep.csv");
    fs::write(&path, csv)?;
    println!(
        "scale-sweep: {} scale lists evaluated -> {}",
        lists.len(),
        path.display()
    );
    Ok(())
}

pub fn cmd_importance(checkpoint: &Path, out: &Path) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)
        .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    let (_, model) = ckpt.rebuild()?;
    let top = top_k_features(&model.params.encoder.feature_gate, 10);
    let mut csv = String::from("rank,feature_index,weight\n");
    for (rank, (index, weight)) in top.iter().enumerate() {
        csv.push_str(&format!("{},{},{}\n", rank + 1, index, weight));
    }
    fs::write(out, csv).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "importance: top {} features (best weight {:.4} at index {}) -> {}",
        top.len(),
        top[0].1,
        top[0].0,
        out.display()
    );
    Ok(())
}
