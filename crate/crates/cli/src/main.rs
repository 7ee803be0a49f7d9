use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mcnet::analysis::{collect_embeddings, misclassification_report, projection_tsv, tsne_project, TsneConfig};
use mcnet::dataset::{LabeledImage, PatchSet, SamplingConfig, Target};
use mcnet::imaging::{generate_phantom, read_pgm, write_mask_pgm, write_pgm, write_ppm, write_sidecar, PhantomConfig};
use mcnet::netarch::{load_weights, save_weights, NetworkSpec, DEFAULT_PATCH_SIZE};
use mcnet::neuralcore::ConvMode;
use mcnet::pipeline::{render_overlay, report_text, run_pipeline, KeyValueConfig, PipelineConfig};
use mcnet::trainer::{evaluate_per_class, train, TrainConfig};

const INDEX_FILE: &str = "index.csv";
const MANIFEST_FILE: &str = "manifest.csv";
const MASK_SUFFIX: &str = "_mask.pgm";

#[derive(Parser)]
#[command(
    name = "mcnet",
    version,
    about = "Microcalcification detection with patch-based CNNs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic phantoms with ground-truth masks and sidecars.
    Phantom {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        count: u64,
        /// Seed of the first phantom; the rest follow consecutively.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 256)]
        size: usize,
    },
    /// Build a patch index over every `<name>.pgm` / `<name>_mask.pgm` pair in a directory.
    Index {
        #[arg(long)]
        data: PathBuf,
        /// Output directory for index.csv and manifest.csv.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_PATCH_SIZE)]
        patch_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a Detector or Segmentator network.
    Train {
        #[arg(long)]
        target: Target,
        /// Directory holding the training index.
        #[arg(long)]
        train: PathBuf,
        /// Directory holding the validation index.
        #[arg(long)]
        val: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        settings: Settings,
        /// Optional per-epoch log (TSV).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Per-class error table of a trained network on an indexed set.
    Eval {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        set: PathBuf,
        #[arg(long)]
        target: Target,
        /// Patches evaluated per class at most.
        #[arg(long, default_value_t = 2000)]
        per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the two-stage pipeline on one image.
    Infer {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        detector: PathBuf,
        #[arg(long)]
        segmentator: PathBuf,
        /// Directory for mask.pgm, report.txt and overlay.ppm.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Project penultimate-layer features to 2-D and list the worst misclassifications.
    Tsne {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        set: PathBuf,
        #[arg(long)]
        target: Target,
        #[arg(long, default_value_t = 500)]
        points: usize,
        #[arg(long, default_value_t = 30.0)]
        perplexity: f64,
        #[arg(long, default_value_t = 5)]
        top_k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for projection.tsv and misclassified.txt.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate one network per patch size.
    Sweep {
        #[arg(long)]
        target: Target,
        /// Directory of labeled images used for training.
        #[arg(long)]
        train_data: PathBuf,
        #[arg(long)]
        val_data: PathBuf,
        #[arg(long)]
        test_data: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "33,41,49")]
        sizes: Vec<usize>,
        #[arg(long, default_value = "same")]
        conv_mode: ConvMode,
        #[arg(long, default_value_t = 2000)]
        per_class: usize,
        #[command(flatten)]
        settings: Settings,
    },
}

#[derive(Args)]
struct NetArgs {
    #[arg(long, default_value_t = DEFAULT_PATCH_SIZE)]
    patch_size: usize,
    #[arg(long, default_value = "same")]
    conv_mode: ConvMode,
}

/// `key = value` settings from a file, overridden by repeated `--set key=value`.
#[derive(Args)]
struct Settings {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Settings {
    fn resolve(&self) -> Result<KeyValueConfig> {
        let mut text = match &self.config {
            Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
            None => String::new(),
        };
        for o in &self.overrides {
            text.push('\n');
            text.push_str(o);
        }
        let source = self.config.clone().unwrap_or_else(|| PathBuf::from("--set"));
        Ok(KeyValueConfig::parse(&text, source)?)
    }
}

const TRAIN_KEYS: &[&str] = &[
    "batch_size",
    "learning_rate",
    "plateau_window",
    "plateau_epsilon",
    "patience",
    "max_epochs",
    "batches_per_epoch",
    "validation_size",
    "seed",
];
const PIPELINE_KEYS: &[&str] = &["patch_size", "skip_fraction", "cluster_window_mm", "cluster_more_than"];

fn reject_unknown(kv: &KeyValueConfig, allowed: &[&str]) -> Result<()> {
    if let Some(k) = kv.keys().find(|k| !allowed.contains(k)) {
        bail!("unknown setting {k:?}; expected one of {}", allowed.join(", "));
    }
    Ok(())
}

fn train_config(target: Target, kv: &KeyValueConfig) -> Result<TrainConfig> {
    reject_unknown(kv, TRAIN_KEYS)?;
    let mut c = TrainConfig::new(target);
    macro_rules! apply {
        ($($field:ident),*) => {$(
            if let Some(v) = kv.get(stringify!($field))? {
                c.$field = v;
            }
        )*};
    }
    apply!(
        batch_size,
        learning_rate,
        plateau_window,
        plateau_epsilon,
        patience,
        max_epochs,
        batches_per_epoch,
        validation_size,
        seed
    );
    c.validate()?;
    Ok(c)
}

fn pipeline_config(kv: &KeyValueConfig) -> Result<PipelineConfig> {
    reject_unknown(kv, PIPELINE_KEYS)?;
    let mut c = PipelineConfig::default();
    if let Some(v) = kv.get("patch_size")? {
        c.patch_size = v;
    }
    if let Some(v) = kv.get("skip_fraction")? {
        c.skip_fraction = v;
    }
    if let Some(v) = kv.get("cluster_window_mm")? {
        c.cluster_rule.window_mm = v;
    }
    if let Some(v) = kv.get("cluster_more_than")? {
        c.cluster_rule.more_than = v;
    }
    Ok(c)
}

/// Every `<name>.pgm` with a sibling `<name>_mask.pgm`, in name order.
fn labeled_images(dir: &Path) -> Result<Vec<LabeledImage>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if !name.ends_with(".pgm") || name.ends_with(MASK_SUFFIX) {
            continue;
        }
        let mask = p.with_file_name(format!("{}{MASK_SUFFIX}", name.trim_end_matches(".pgm")));
        if mask.exists() {
            out.push(LabeledImage::read(&p, &mask).with_context(|| format!("reading {}", p.display()))?);
        }
    }
    if out.is_empty() {
        bail!("no image/mask pairs found in {}", dir.display());
    }
    Ok(out)
}

fn load_set(dir: &Path) -> Result<PatchSet> {
    PatchSet::load(dir.join(INDEX_FILE), dir.join(MANIFEST_FILE))
        .with_context(|| format!("loading patch index from {}", dir.display()))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Phantom { out, count, seed, size } => {
            fs::create_dir_all(&out)?;
            let cfg = PhantomConfig {
                width: size,
                height: size,
                ..PhantomConfig::default()
            };
            for s in seed..seed + count {
                let p = generate_phantom(&cfg, s)?;
                let stem = out.join(format!("phantom_{s:04}"));
                write_pgm(&p.image, stem.with_extension("pgm"))?;
                write_mask_pgm(&p.mask, out.join(format!("phantom_{s:04}{MASK_SUFFIX}")))?;
                write_sidecar(&p, stem.with_extension("txt"))?;
                println!("phantom {s}: {} mcs, {} clusters", p.mcs.len(), p.clusters.len());
            }
        }
        Command::Index {
            data,
            out,
            patch_size,
            seed,
        } => {
            let images = labeled_images(&data)?;
            let set = PatchSet::build(&images, patch_size, SamplingConfig::default(), seed)?;
            fs::create_dir_all(&out)?;
            set.index.save(out.join(INDEX_FILE), out.join(MANIFEST_FILE))?;
            let c = set.index.counts();
            println!(
                "{} images, C1 {} C2 {} C3 {} C4 {}",
                images.len(),
                c[0],
                c[1],
                c[2],
                c[3]
            );
        }
        Command::Train {
            target,
            train: train_dir,
            val,
            out,
            net,
            settings,
            log,
        } => {
            let config = train_config(target, &settings.resolve()?)?;
            let train_set = load_set(&train_dir)?;
            let val_set = load_set(&val)?;
            if train_set.patch_size() != net.patch_size {
                bail!(
                    "index was built for N = {}, network expects {}",
                    train_set.patch_size(),
                    net.patch_size
                );
            }
            let spec = NetworkSpec::new(net.patch_size, net.conv_mode);
            let (weights, history) = train(&spec, &train_set, &val_set, &config)?;
            save_weights(&weights, &out)?;
            if let Some(p) = log {
                fs::write(p, history.to_tsv())?;
            }
            let best = &history.epochs[history.best_epoch - 1];
            println!(
                "{target}: {} epochs in {:.1}s, best epoch {} val loss {:.4} accuracy {:.4}",
                history.epochs.len(),
                history.wall_seconds.last().copied().unwrap_or(0.0),
                best.epoch,
                best.val_loss,
                best.val_accuracy
            );
        }
        Command::Eval {
            weights,
            set,
            target,
            per_class,
            seed,
        } => {
            let w = load_weights(&weights)?;
            let ev = evaluate_per_class(&w, &load_set(&set)?, target, per_class, seed)?;
            println!("{}", ev.table);
        }
        Command::Infer {
            image,
            detector,
            segmentator,
            out,
            settings,
        } => {
            let config = pipeline_config(&settings.resolve()?)?;
            let img = read_pgm(&image).with_context(|| format!("reading {}", image.display()))?;
            let det = load_weights(&detector).context("loading detector")?;
            let seg = load_weights(&segmentator).context("loading segmentator")?;
            let output = run_pipeline(&img, &det, &seg, &config)?;
            fs::create_dir_all(&out)?;
            write_mask_pgm(&output.segmentation.mask, out.join("mask.pgm"))?;
            let report = report_text(&output);
            fs::write(out.join("report.txt"), &report)?;
            write_ppm(
                &render_overlay(&img, &output.segmentation.mask, &output.report)?,
                out.join("overlay.ppm"),
            )?;
            print!("{report}");
        }
        Command::Tsne {
            weights,
            set,
            target,
            points,
            perplexity,
            top_k,
            seed,
            out,
        } => {
            let w = load_weights(&weights)?;
            let emb = collect_embeddings(&w, &load_set(&set)?, target, points, seed)?;
            let cfg = TsneConfig {
                perplexity,
                ..TsneConfig::default()
            };
            let projected = tsne_project(&emb.features, &cfg, seed)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("projection.tsv"), projection_tsv(&emb, &projected))?;
            let report = misclassification_report(&emb, top_k);
            fs::write(out.join("misclassified.txt"), report.to_text(&emb))?;
            println!(
                "{} points, KL {:.4} -> {:.4}",
                emb.len(),
                projected.initial_kl,
                projected.final_kl
            );
        }
        Command::Sweep {
            target,
            train_data,
            val_data,
            test_data,
            sizes,
            conv_mode,
            per_class,
            settings,
        } => {
            let config = train_config(target, &settings.resolve()?)?;
            let (tr, va, te) = (
                labeled_images(&train_data)?,
                labeled_images(&val_data)?,
                labeled_images(&test_data)?,
            );
            println!("N\tseconds\t{}", mcnet::trainer::ClassErrorTable::header());
            for n in sizes {
                let t = Instant::now();
                let spec = NetworkSpec::new(n, conv_mode);
                spec.validate().with_context(|| format!("patch size {n}"))?;
                let build = |imgs: &[LabeledImage], seed| PatchSet::build(imgs, n, SamplingConfig::default(), seed);
                let (train_set, val_set, test_set) = (build(&tr, 0)?, build(&va, 1)?, build(&te, 2)?);
                let (w, _) = train(&spec, &train_set, &val_set, &config)?;
                let ev = evaluate_per_class(&w, &test_set, target, per_class, config.seed)?;
                println!("{n}\t{:.1}\t{}", t.elapsed().as_secs_f64(), ev.table.row());
            }
        }
    }
    Ok(())
}
