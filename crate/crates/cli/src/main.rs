use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use kmf_core::corpus::{
    compute_overlaps, load_embedding_table, read_overlaps_jsonl, write_overlaps_jsonl,
};
use kmf_core::facets::{build_facets, compose, write_facets};
use kmf_core::kg_topics::{
    build_topic_neighborhood, load_kg, load_labels, read_neighborhoods_jsonl,
    write_neighborhoods_jsonl, TopicNeighborhood,
};
use kmf_core::numerics::GradCheckOptions;
use kmf_core::pipeline::eval::{accuracy, predict, random_guess, represent};
use kmf_core::pipeline::export::export_embeddings;
use kmf_core::pipeline::files::load_graph;
use kmf_core::pipeline::recsys::{recsys_evaluate, NegativePool, RecsysConfig};
use kmf_core::pipeline::synth::{synth_generate, SynthConfig};
use kmf_core::pipeline::train::{gradient_check, train, write_metrics_jsonl};
use kmf_core::pipeline::{
    align_neighborhoods, load_inputs, make_split, partition_nodes, prepare, Ablation, Checkpoint,
    Inputs as Loaded, PreparedGraph, SplitConfig, TrainConfig,
};

#[derive(Parser)]
#[command(
    name = "kmf",
    version,
    about = "Knowledge-aware multi-faceted zero-shot node classification"
)]
struct Cli {
    /// Key = value configuration file covering every training setting.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; overrides the configuration file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for verbs that write several files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Topic neighborhoods.
    Topics {
        #[command(subcommand)]
        action: TopicsAction,
    },
    /// Intersect node text with every topic neighborhood.
    Prep {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        topics: PathBuf,
        #[arg(short = 'o')]
        output: Option<PathBuf>,
    },
    /// Build facet tensors and composed node states from cached overlaps.
    Facets {
        #[arg(long)]
        overlaps: PathBuf,
        #[arg(long)]
        emb: PathBuf,
        #[arg(short = 'o')]
        output: Option<PathBuf>,
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Train and write a checkpoint plus the per-epoch loss log.
    Train {
        #[command(flatten)]
        inputs: Inputs,
        /// Ablation variant such as KMF-T or KMF-G.
        #[arg(long)]
        variant: Option<String>,
    },
    /// Zero-shot accuracy of a checkpoint on its unseen classes.
    Eval {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Predicted class per node.
    Predict {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// `unseen`, `all`, or a comma-separated list of class ids.
        #[arg(long, default_value = "unseen")]
        targets: String,
        #[arg(short = 'o')]
        output: Option<PathBuf>,
    },
    /// Zero-shot cross-domain link ranking for one held-out class.
    Recsys {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        class: String,
        #[arg(long, default_value_t = 5)]
        train_negatives: usize,
        #[arg(long, default_value_t = 100)]
        test_negatives: usize,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// `all` or `domain`.
        #[arg(long, default_value = "all")]
        neg_pool: NegativePool,
    },
    /// Write a planted-topic dataset.
    Synth {
        #[arg(long, default_value_t = 6)]
        classes: usize,
        #[arg(long, default_value_t = 100)]
        nodes_per_class: usize,
        #[arg(long, default_value_t = 40)]
        vocab_per_class: usize,
        #[arg(long, default_value_t = 0.2)]
        noise: f64,
        #[arg(long, default_value_t = 0.05)]
        intra: f64,
        #[arg(long, default_value_t = 0.002)]
        inter: f64,
        #[arg(long, default_value_t = 32)]
        dim: usize,
        #[arg(short = 'o')]
        output: Option<PathBuf>,
    },
    /// Final node representations as TSV.
    ExportEmb {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(short = 'o')]
        output: Option<PathBuf>,
    },
    /// Compare analytic and finite-difference gradients on a tiny graph.
    Gradcheck,
}

#[derive(Subcommand)]
enum TopicsAction {
    Build {
        #[arg(long)]
        kg: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        emb: PathBuf,
        #[arg(short = 'R')]
        radius: Option<usize>,
        #[arg(short = 'P')]
        percent: Option<f64>,
        #[arg(short = 'o')]
        output: Option<PathBuf>,
    },
}

/// Dataset directory (`nodes.tsv`, `edges.tsv`), topic neighborhoods and the
/// embedding table.
#[derive(Args)]
struct Inputs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    topics: PathBuf,
    #[arg(long)]
    emb: PathBuf,
}

impl Inputs {
    fn load(&self, config: &TrainConfig) -> Result<Loaded> {
        let loaded = load_inputs(&self.dataset, &self.topics, &self.emb, config)?;
        let ds = &loaded.dataset;
        info!(
            "{} nodes, {} edges, {} classes",
            ds.len(),
            ds.edges.len(),
            ds.classes.len()
        );
        Ok(loaded)
    }

    /// Inputs prepared under the configuration stored in `checkpoint`.
    fn prepare(&self, checkpoint: &Checkpoint) -> Result<(Loaded, PreparedGraph)> {
        let loaded = self.load(&checkpoint.config)?;
        if loaded.dataset.classes != checkpoint.classes {
            bail!(
                "dataset classes {:?} differ from checkpoint classes {:?}",
                loaded.dataset.classes,
                checkpoint.classes
            );
        }
        let prepared = prepare(
            &loaded.dataset,
            &loaded.nbhds,
            &loaded.table,
            &checkpoint.config,
        )?;
        Ok((loaded, prepared))
    }
}

fn load_config(cli: &Cli) -> Result<TrainConfig> {
    let mut config = match &cli.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn output(local: &Option<PathBuf>, global: &Option<PathBuf>, default: &str) -> PathBuf {
    local
        .clone()
        .or_else(|| global.clone())
        .unwrap_or_else(|| PathBuf::from(default))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

fn resolve_targets(spec: &str, checkpoint: &Checkpoint) -> Result<Vec<usize>> {
    match spec {
        "unseen" => Ok(checkpoint.split.unseen.clone()),
        "all" => Ok((0..checkpoint.classes.len()).collect()),
        list => list
            .split(',')
            .map(|c| {
                checkpoint
                    .classes
                    .iter()
                    .position(|k| k == c.trim())
                    .with_context(|| format!("unknown class '{c}'"))
            })
            .collect(),
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli)?;
    match &cli.command {
        Command::Topics {
            action:
                TopicsAction::Build {
                    kg,
                    labels,
                    emb,
                    radius,
                    percent,
                    output: o,
                },
        } => {
            let kg = load_kg(kg)?;
            let table = load_embedding_table(emb)?;
            let radius = radius.unwrap_or(config.radius);
            let percent = percent.unwrap_or(config.percent);
            let nbhds = load_labels(labels)?
                .iter()
                .map(|(id, phrase)| {
                    build_topic_neighborhood(&kg, id, phrase, radius, percent, &table)
                })
                .collect::<kmf_core::Result<Vec<_>>>()?;
            let path = output(o, &None, "topics.jsonl");
            write_neighborhoods_jsonl(&path, &nbhds)?;
            info!(
                "{} neighborhoods written to {}",
                nbhds.len(),
                path.display()
            );
        }
        Command::Prep {
            dataset,
            topics,
            output: o,
        } => {
            let ds = load_graph(dataset, &config)?;
            let nbhds = read_neighborhoods_jsonl(topics)?;
            let aligned: Vec<TopicNeighborhood> = align_neighborhoods(&ds.classes, &nbhds)?
                .into_iter()
                .cloned()
                .collect();
            let alpha = config.effective_alpha();
            let overlaps: Vec<_> = ds
                .nodes
                .iter()
                .map(|n| compute_overlaps(n, &aligned, alpha))
                .collect();
            let dir = output(o, &cli.out, "prep");
            ensure_dir(&dir)?;
            write_overlaps_jsonl(&dir.join("overlaps.jsonl"), &overlaps, &ds.classes)?;
            fs::write(dir.join("classes.txt"), ds.classes.join("\n") + "\n")?;
            info!(
                "overlaps for {} nodes written to {}",
                overlaps.len(),
                dir.display()
            );
        }
        Command::Facets {
            overlaps,
            emb,
            output: o,
            tau,
        } => {
            let classes: Vec<String> = fs::read_to_string(overlaps.join("classes.txt"))
                .with_context(|| format!("reading {}", overlaps.join("classes.txt").display()))?
                .lines()
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect();
            let sets = read_overlaps_jsonl(&overlaps.join("overlaps.jsonl"), &classes)?;
            let table = load_embedding_table(emb)?;
            let alpha = config.effective_alpha();
            let tau = tau.unwrap_or(config.temperature);
            let facets = sets
                .iter()
                .map(|s| build_facets(s, alpha, &table))
                .collect::<kmf_core::Result<Vec<_>>>()?;
            let dir = output(o, &cli.out, "facets");
            ensure_dir(&dir)?;
            write_facets(&dir.join("facets.bin"), &facets)?;
            let mut w = std::io::BufWriter::new(fs::File::create(dir.join("composed.tsv"))?);
            for f in &facets {
                let h = compose(f, tau, None);
                let values: Vec<String> = h.vector.iter().map(f64::to_string).collect();
                writeln!(w, "{}\t{}", h.node, values.join("\t"))?;
            }
            w.flush()?;
        }
        Command::Train { inputs, variant } => {
            let mut config = config;
            if let Some(v) = variant {
                config.ablation = Ablation::variant(v)?;
            }
            let loaded = inputs.load(&config)?;
            let prepared = prepare(&loaded.dataset, &loaded.nbhds, &loaded.table, &config)?;
            let split = make_split(loaded.dataset.classes.len(), &config.split, config.seed)?;
            let partition = partition_nodes(
                &loaded.dataset,
                &split,
                config.split.unseen_val_fraction,
                config.seed,
            );
            let outcome = train(&prepared, &split, &partition, &config)?;
            let dir = output(&None, &cli.out, "run");
            ensure_dir(&dir)?;
            outcome.checkpoint.save(&dir.join("checkpoint.kmf"))?;
            write_metrics_jsonl(&dir.join("metrics.jsonl"), &outcome.metrics)?;
            print_json(&serde_json::json!({
                "checkpoint": dir.join("checkpoint.kmf"),
                "hash": outcome.checkpoint.hash(),
                "best_epoch": outcome.best_epoch,
                "val_accuracy": outcome.val_accuracy,
                "train_classes": names(&split.train, &loaded.dataset.classes),
                "unseen_classes": names(&split.unseen, &loaded.dataset.classes),
            }))?;
        }
        Command::Eval { inputs, checkpoint } => {
            let ckpt = Checkpoint::load(checkpoint)?;
            let (loaded, prepared) = inputs.prepare(&ckpt)?;
            let cfg = &ckpt.config;
            let partition = partition_nodes(
                &loaded.dataset,
                &ckpt.split,
                cfg.split.unseen_val_fraction,
                cfg.seed,
            );
            let hg = represent(&ckpt.params, &prepared)?;
            let predicted = predict(&hg, &prepared.csds, &partition.test, &ckpt.split.unseen)?;
            let guess = random_guess(&partition.test, &ckpt.split.unseen, cfg.seed)?;
            print_json(&serde_json::json!({
                "test_nodes": partition.test.len(),
                "unseen_classes": names(&ckpt.split.unseen, &ckpt.classes),
                "accuracy": accuracy(&predicted, &prepared.labels, &partition.test),
                "random_guess": accuracy(&guess, &prepared.labels, &partition.test),
            }))?;
        }
        Command::Predict {
            inputs,
            checkpoint,
            targets,
            output: o,
        } => {
            let ckpt = Checkpoint::load(checkpoint)?;
            let (loaded, prepared) = inputs.prepare(&ckpt)?;
            let targets = resolve_targets(targets, &ckpt)?;
            let cfg = &ckpt.config;
            let nodes = if targets == ckpt.split.unseen {
                partition_nodes(
                    &loaded.dataset,
                    &ckpt.split,
                    cfg.split.unseen_val_fraction,
                    cfg.seed,
                )
                .test
            } else {
                (0..loaded.dataset.len()).collect()
            };
            let hg = represent(&ckpt.params, &prepared)?;
            let predicted = predict(&hg, &prepared.csds, &nodes, &targets)?;
            let mut text = String::new();
            for (&v, &c) in nodes.iter().zip(&predicted) {
                text.push_str(&format!(
                    "{}\t{}\n",
                    loaded.dataset.nodes[v].id, ckpt.classes[c]
                ));
            }
            match o {
                Some(p) => {
                    fs::write(p, text).with_context(|| format!("writing {}", p.display()))?
                }
                None => print!("{text}"),
            }
        }
        Command::Recsys {
            inputs,
            checkpoint,
            class,
            train_negatives,
            test_negatives,
            k,
            neg_pool,
        } => {
            let ckpt = Checkpoint::load(checkpoint)?;
            let (loaded, prepared) = inputs.prepare(&ckpt)?;
            let c = loaded
                .dataset
                .class_index(class)
                .with_context(|| format!("unknown class '{class}'"))?;
            let hg = represent(&ckpt.params, &prepared)?;
            let cfg = RecsysConfig {
                train_negatives: *train_negatives,
                test_negatives: *test_negatives,
                k: *k,
                seed: ckpt.config.seed,
                pool: *neg_pool,
            };
            print_json(&recsys_evaluate(&hg, &loaded.dataset, c, &cfg)?)?;
        }
        Command::Synth {
            classes,
            nodes_per_class,
            vocab_per_class,
            noise,
            intra,
            inter,
            dim,
            output: o,
        } => {
            let data = synth_generate(&SynthConfig {
                classes: *classes,
                nodes_per_class: *nodes_per_class,
                vocab_per_class: *vocab_per_class,
                noise: *noise,
                intra_edge_prob: *intra,
                inter_edge_prob: *inter,
                dim: *dim,
                seed: config.seed,
                ..SynthConfig::default()
            })?;
            let dir = output(o, &cli.out, "synth");
            data.write(&dir)?;
            info!(
                "{} nodes, {} edges written to {}",
                data.nodes.len(),
                data.edges.len(),
                dir.display()
            );
        }
        Command::ExportEmb {
            inputs,
            checkpoint,
            output: o,
        } => {
            let ckpt = Checkpoint::load(checkpoint)?;
            let (loaded, prepared) = inputs.prepare(&ckpt)?;
            let hg = represent(&ckpt.params, &prepared)?;
            let path = output(o, &None, "embeddings.tsv");
            export_embeddings(&path, &loaded.dataset, &hg)?;
        }
        Command::Gradcheck => {
            let err = tiny_gradient_check(config.seed)?;
            print_json(&serde_json::json!({ "max_relative_error": err, "pass": err < 1e-4 }))?;
            if err >= 1e-4 {
                bail!("gradient check failed: relative error {err:e}");
            }
        }
    }
    Ok(())
}

fn names(idx: &[usize], classes: &[String]) -> Vec<String> {
    idx.iter().map(|&c| classes[c].clone()).collect()
}

/// Six nodes in three classes, two message-passing layers, two negatives.
fn tiny_gradient_check(seed: u64) -> Result<f64> {
    let data = synth_generate(&SynthConfig {
        classes: 3,
        nodes_per_class: 2,
        vocab_per_class: 4,
        tokens_per_node: 6,
        intra_edge_prob: 1.0,
        inter_edge_prob: 0.3,
        dim: 4,
        attributes: 3,
        background_vocab: 4,
        styles: 2,
        seed,
        ..SynthConfig::default()
    })?;
    let config = TrainConfig {
        layers: 2,
        lambda1: 0.5,
        lambda2: 0.5,
        negatives: 2,
        seed,
        split: SplitConfig {
            train: 2,
            unseen: 1,
            ..SplitConfig::default()
        },
        ..TrainConfig::default()
    };
    let kg = kmf_core::kg_topics::KnowledgeGraph::from_edges(data.kg.clone());
    let nbhds = data
        .labels
        .iter()
        .map(|(c, p)| {
            build_topic_neighborhood(&kg, c, p, config.radius, config.percent, &data.table)
        })
        .collect::<kmf_core::Result<Vec<_>>>()?;
    let dataset = data.dataset()?;
    let prepared = prepare(&dataset, &nbhds, &data.table, &config)?;
    let split = make_split(dataset.classes.len(), &config.split, seed)?;
    let partition = partition_nodes(&dataset, &split, 0.0, seed);
    let opts = GradCheckOptions {
        max_coords_per_param: usize::MAX,
        seed,
        ..GradCheckOptions::default()
    };
    Ok(gradient_check(
        &prepared, &split, &partition, &config, &opts,
    )?)
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
