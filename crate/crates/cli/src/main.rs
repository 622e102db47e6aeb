//! `afford`: drives the pipeline end to end. Every subcommand reads one TOML
//! config (defaults when absent) with flags layered on top, prints a
//! provenance header, and reports failures as a single JSON line on stderr.

use afford_core::config::{AblationChoice, Config, FamilyChoice};
use afford_core::dataset::{collect, stream_seed, CollectSpec, DataSet, Split, TestSetSpec};
use afford_core::io::{read_cloud_ply, read_scene_json, write_cloud_ply, write_scene_json};
use afford_core::learn::{
    load_checkpoint, save_checkpoint, train, write_loss_curve, RecordInputs, TrainConfig,
};
use afford_core::metrics::{MetricsReport, ProposalPolicy};
use afford_core::oracle::{Action, OracleConfig};
use afford_core::protocol::{
    build_split_inputs, evaluate_cell, export_heatmap, BaseRate, SplitCensus,
};
use afford_core::scene::{generate_scene, sample_cloud, SceneSpec, NOVEL_FAMILIES, TRAIN_FAMILIES};
use afford_core::R;
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ActionArg {
    Push,
    Pull,
}

impl From<ActionArg> for Action {
    fn from(a: ActionArg) -> Action {
        match a {
            ActionArg::Push => Action::Push,
            ActionArg::Pull => Action::Pull,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AblationArg {
    None,
    NoOf,
    NoCl,
}

impl From<AblationArg> for AblationChoice {
    fn from(a: AblationArg) -> AblationChoice {
        match a {
            AblationArg::None => AblationChoice::None,
            AblationArg::NoOf => AblationChoice::NoField,
            AblationArg::NoCl => AblationChoice::NoContrastive,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Seen,
    Novel,
}

#[derive(Parser, Debug)]
#[command(name = "afford", version, about = "Environment-aware affordance pipeline")]
struct Cli {
    /// Config file. Defaults to ./afford.toml when present, else built-ins.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every stage seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Manipulation to train or evaluate.
    #[arg(long, global = true)]
    action: Option<ActionArg>,
    /// Restrict eval to one test split.
    #[arg(long, global = true)]
    split: Option<SplitArg>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Points kept in the scene encoder's significant set.
    #[arg(long, global = true)]
    k_significant: Option<usize>,
    /// Model variant to train or load.
    #[arg(long, global = true)]
    ablation: Option<AblationArg>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate scenes plus their sampled clouds.
    GenScenes,
    /// Collect the training dataset.
    BuildDataset,
    /// Train one model on a collected dataset.
    Train {
        /// Directory written by build-dataset.
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Evaluate a checkpoint on freshly built test splits.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Score one scene's target points into a CSV.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Scene JSON written by gen-scenes.
        #[arg(long)]
        scene: PathBuf,
        /// Cloud PLY written by gen-scenes.
        #[arg(long)]
        cloud: PathBuf,
    },
    /// Write the colored affordance heatmap of one scene.
    ExportHeatmap {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        cloud: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("{}", json!({ "error": e.to_string() }));
        std::process::exit(1);
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<Config> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => {
            let default_path = Path::new("afford.toml");
            if default_path.exists() {
                Config::load(default_path)?
            } else {
                Config::default()
            }
        }
    };
    if let Some(seed) = cli.seed {
        cfg.scene.seed = seed;
        cfg.dataset.seed = seed;
        cfg.train.seed = seed;
        cfg.eval.seed = seed;
    }
    if let Some(action) = cli.action {
        cfg.train.action = action.into();
    }
    if let Some(k) = cli.k_significant {
        cfg.train.k_significant = k;
    }
    if let Some(ablation) = cli.ablation {
        cfg.train.ablation = ablation.into();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = load_config(&cli)?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("afford-out"));
    println!(
        "provenance: afford {} core {} config fnv1a:{:016x} seeds scene={} dataset={} train={} eval={}",
        env!("CARGO_PKG_VERSION"),
        afford_core::VERSION,
        cfg.content_hash(),
        cfg.scene.seed,
        cfg.dataset.seed,
        cfg.train.seed,
        cfg.eval.seed,
    );
    match &cli.cmd {
        Cmd::GenScenes => gen_scenes(&cfg, &out),
        Cmd::BuildDataset => build_dataset(&cfg, &out),
        Cmd::Train { dataset } => train_cmd(&cfg, dataset, &out),
        Cmd::Eval { checkpoint } => eval_cmd(&cfg, cli.split, checkpoint, &out),
        Cmd::Predict {
            checkpoint,
            scene,
            cloud,
        } => predict_cmd(checkpoint, scene, cloud, &out, false),
        Cmd::ExportHeatmap {
            checkpoint,
            scene,
            cloud,
        } => predict_cmd(checkpoint, scene, cloud, &out, true),
    }
}

fn gen_scenes(cfg: &Config, out: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out)?;
    let families = match cfg.scene.families {
        FamilyChoice::Train => TRAIN_FAMILIES.to_vec(),
        FamilyChoice::Novel => NOVEL_FAMILIES.to_vec(),
    };
    for i in 0..cfg.scene.count {
        let spec = SceneSpec::new(
            i as u64,
            stream_seed(cfg.scene.seed, 1, i as u64),
            cfg.scene.occluders,
            families.clone(),
        );
        let scene = generate_scene::<R>(&spec)?;
        let cloud = sample_cloud(
            &scene,
            cfg.cloud.n_raw,
            cfg.cloud.n_out,
            stream_seed(cfg.scene.seed, 2, i as u64),
        )?;
        write_scene_json(&out.join(format!("scene_{i:06}.json")), &scene)?;
        write_cloud_ply(&out.join(format!("cloud_{i:06}.ply")), &cloud)?;
    }
    println!(
        "{}",
        json!({ "scenes": cfg.scene.count, "dir": out.display().to_string() })
    );
    Ok(())
}

fn build_dataset(cfg: &Config, out: &Path) -> anyhow::Result<()> {
    let spec = CollectSpec::<R> {
        n_raw: cfg.cloud.n_raw,
        n_out: cfg.cloud.n_out,
        ..CollectSpec::new(cfg.dataset.seed, cfg.dataset.scenes, cfg.dataset.quotas())
    };
    let ds = collect(&spec)?;
    ds.save(out)?;
    println!("{}", serde_json::to_string(&ds.manifest())?);
    Ok(())
}

fn model_tag(cfg: &Config) -> String {
    let action = match cfg.train.action {
        Action::Push => "push",
        Action::Pull => "pull",
    };
    let ablation = match cfg.train.ablation {
        AblationChoice::None => "none",
        AblationChoice::NoField => "no-of",
        AblationChoice::NoContrastive => "no-cl",
    };
    format!("{action}-{ablation}")
}

fn train_cmd(cfg: &Config, dataset: &Path, out: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out)?;
    let ds = DataSet::<R>::load(dataset)?;
    let train_cfg = TrainConfig::<R> {
        batch_triplets: cfg.train.batch_triplets,
        learning_rate: cfg.train.learning_rate,
        alpha: cfg.train.alpha,
        lambda_cl: cfg.train.lambda_cl,
        ..TrainConfig::new(
            cfg.train.seed,
            cfg.train.epochs,
            cfg.train.k_significant,
            cfg.train.ablation.to_ablation(),
        )
    };
    let result = train(&ds, cfg.train.action, &train_cfg)?;
    let tag = model_tag(cfg);
    let ck = out.join(format!("model-{tag}.ck"));
    save_checkpoint(&ck, &result.model, Some(&result.adam))?;
    let curve = out.join(format!("loss-{tag}.csv"));
    write_loss_curve(&curve, &result.curve)?;
    let last = result.curve.last();
    println!(
        "{}",
        json!({
            "checkpoint": ck.display().to_string(),
            "loss_curve": curve.display().to_string(),
            "steps": result.curve.len(),
            "final_loss": last.map(|c| c.loss_total),
        })
    );
    Ok(())
}

fn eval_cmd(
    cfg: &Config,
    split: Option<SplitArg>,
    checkpoint: &Path,
    out: &Path,
) -> anyhow::Result<()> {
    std::fs::create_dir_all(out)?;
    let (model, _) = load_checkpoint::<R>(checkpoint)?;
    let action = cfg.train.action;
    let oracle = OracleConfig::<R>::default();
    let policy = ProposalPolicy::<R> {
        tau: cfg.eval.tau,
        max_proposals: cfg.eval.max_proposals,
        seed: cfg.eval.policy_seed,
    };
    let spec = TestSetSpec {
        n_raw: cfg.cloud.n_raw,
        n_out: cfg.cloud.n_out,
        ..TestSetSpec::new(cfg.eval.seed, cfg.eval.test_scenes)
    };
    let (seen, novel) = afford_core::dataset::build_test_sets::<R>(&spec)?;
    let keep = |s: Split| match split {
        None => true,
        Some(SplitArg::Seen) => s == Split::TestSeen,
        Some(SplitArg::Novel) => s == Split::TestNovel,
    };
    let mut reports: Vec<MetricsReport> = Vec::new();
    let mut base_rates: Vec<(Split, BaseRate)> = Vec::new();
    for set in [&seen, &novel] {
        if !keep(set.split) {
            continue;
        }
        let census = SplitCensus::build(&set.scenes, &set.clouds, &oracle)?;
        let inputs = build_split_inputs(&set.scenes, &set.clouds, &census, model.k_significant)?;
        reports.push(evaluate_cell(
            &model,
            action,
            set.split,
            cfg.eval.seed,
            &set.scenes,
            &set.clouds,
            &census,
            &inputs,
            &policy,
            &oracle,
        )?);
        base_rates.push((set.split, census.base_rate(action)));
    }
    let tag = model_tag(cfg);
    let path = out.join(format!("report-{tag}.json"));
    let doc = json!({
        "action": action,
        "reports": reports,
        "base_rates": base_rates,
    });
    std::fs::write(&path, serde_json::to_string_pretty(&doc)?)?;
    println!(
        "{}",
        json!({ "report": path.display().to_string(), "cells": reports.len() })
    );
    Ok(())
}

fn predict_cmd(
    checkpoint: &Path,
    scene_path: &Path,
    cloud_path: &Path,
    out: &Path,
    heatmap: bool,
) -> anyhow::Result<()> {
    std::fs::create_dir_all(out)?;
    let (model, _) = load_checkpoint::<R>(checkpoint)?;
    let scene = read_scene_json::<R>(scene_path)?;
    let cloud = read_cloud_ply::<R>(cloud_path)?;
    if heatmap {
        let ply = out.join("heatmap.ply");
        let csv = out.join("heatmap.csv");
        export_heatmap(&model, &scene, &cloud, &ply, &csv)?;
        println!(
            "{}",
            json!({ "heatmap": ply.display().to_string(), "scores": csv.display().to_string() })
        );
    } else {
        let mut scores = Vec::new();
        for p in cloud.part_point_indices() {
            let inp = RecordInputs::build(&cloud, scene.robot, p, model.k_significant)?;
            scores.push((p, model.predict(&inp)?));
        }
        let csv = out.join("scores.csv");
        afford_core::io::write_scores_csv(&csv, &scores)?;
        println!(
            "{}",
            json!({ "scores": csv.display().to_string(), "points": scores.len() })
        );
    }
    Ok(())
}
