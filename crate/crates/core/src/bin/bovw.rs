use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use bovw::classifier::{train_ovr, LinearModel, TrainConfig};
use bovw::codebook::Codebook;
use bovw::corpus::{load_manifest, select_classes, DatasetManifest, ManifestEntry};
use bovw::encoding::{Assignment, BowBatch, EncodingParams, Pooling};
use bovw::features::GridParams;
use bovw::harness::{
    append_csv, build_dictionary, cross_base_experiment, diversity_sweep, encode_manifest,
    run_seeds, split_balanced, synth, DescriptorStore, PipelineParams, SummaryRow,
};

#[derive(Parser)]
#[command(
    name = "bovw",
    version,
    about = "Dense SIFT bag-of-visual-words pipeline and experiment harness"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract dense SIFT for every image of a manifest into a cache directory.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        cache_dir: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Build a random codebook from a manifest's descriptors.
    Codebook {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Restrict the source to this many classes of a seeded permutation.
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        class_seed: Option<u64>,
        #[arg(long, default_value_t = 1000)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Encode every image of a manifest with a codebook.
    Encode {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        codebook: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the vectors as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        enc: EncodingArgs,
    },
    /// Train a one-vs-rest linear SVM on a bow file.
    Train {
        #[arg(long)]
        bow: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        svm: SvmArgs,
    },
    /// Report a model's accuracy on a bow file.
    Eval {
        #[arg(long)]
        bow: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Accuracy on a target corpus with dictionaries from a source corpus.
    Crossbase {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Training images per class, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "30")]
        n_train: Vec<usize>,
        /// Also evaluate dictionaries built from the target itself.
        #[arg(long)]
        native: bool,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Accuracy with dictionaries from nested class subsets of a source.
    Sweep {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Class counts, comma separated and ascending.
        #[arg(long, value_delimiter = ',', required = true)]
        class_counts: Vec<usize>,
        #[arg(long, default_value_t = 30)]
        n_train: usize,
        /// Seed of the class permutation (default: --seed).
        #[arg(long)]
        class_seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Generate a synthetic texture corpus and its manifest.
    Synth {
        #[arg(long, value_enum)]
        preset: Preset,
        #[arg(long)]
        out: PathBuf,
        /// Manifest name; the manifest is written to <out>/<name>.tsv.
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        images_per_class: Option<usize>,
        /// Standard deviation of the additive pixel noise.
        #[arg(long)]
        noise_sd: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a balanced train/test split of a manifest.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        n_train: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        train_out: PathBuf,
        #[arg(long)]
        test_out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct GridArgs {
    #[arg(long, default_value_t = 6)]
    stride: usize,
    #[arg(long, default_value_t = 16)]
    patch: usize,
}

impl GridArgs {
    fn params(&self) -> Result<GridParams> {
        Ok(GridParams::new(self.stride, self.patch)?)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AssignmentArg {
    Soft,
    Hard,
}

#[derive(Clone, Copy, ValueEnum)]
enum PoolingArg {
    Max,
    Average,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Diverse,
    Narrow,
}

#[derive(Args, Clone)]
struct EncodingArgs {
    #[arg(long, default_value_t = 60.0)]
    sigma: f64,
    #[arg(long, value_enum, default_value = "soft")]
    assignment: AssignmentArg,
    #[arg(long, value_enum, default_value = "max")]
    pooling: PoolingArg,
    /// Scale pooled vectors to unit L2 norm.
    #[arg(long)]
    l2_normalize: bool,
}

impl EncodingArgs {
    fn params(&self) -> EncodingParams {
        EncodingParams {
            sigma: self.sigma,
            assignment: match self.assignment {
                AssignmentArg::Soft => Assignment::Soft,
                AssignmentArg::Hard => Assignment::Hard,
            },
            pooling: match self.pooling {
                PoolingArg::Max => Pooling::Max,
                PoolingArg::Average => Pooling::Average,
            },
            l2_normalize: self.l2_normalize,
        }
    }
}

#[derive(Args, Clone)]
struct SvmArgs {
    /// SVM regularization constant.
    #[arg(long = "c", default_value_t = 1.0)]
    c_reg: f64,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
}

#[derive(Args, Clone)]
struct ExperimentArgs {
    #[arg(long, default_value_t = 1000)]
    k: usize,
    #[arg(long, default_value_t = 5)]
    runs: usize,
    /// First run seed; runs use seed, seed+1, ...
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    enc: EncodingArgs,
    #[command(flatten)]
    svm: SvmArgs,
}

impl ExperimentArgs {
    fn params(&self) -> Result<PipelineParams> {
        if self.runs == 0 {
            bail!("--runs must be at least 1");
        }
        Ok(PipelineParams {
            grid: self.grid.params()?,
            k: self.k,
            encoding: self.enc.params(),
            train: TrainConfig {
                c_reg: self.svm.c_reg,
                epochs: self.svm.epochs,
                seed: 0,
            },
            alpha: self.alpha,
        })
    }
}

fn store(grid: GridParams, cache_dir: Option<&Path>) -> Result<DescriptorStore> {
    let s = DescriptorStore::new(grid);
    Ok(match cache_dir {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            s.with_cache_dir(dir)
        }
        None => s,
    })
}

fn manifest(path: &Path) -> Result<DatasetManifest> {
    load_manifest(path).with_context(|| format!("loading manifest {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn open(path: &Path) -> Result<BufReader<fs::File>> {
    Ok(BufReader::new(
        fs::File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn read_bow(path: &Path) -> Result<BowBatch> {
    BowBatch::read_from(&mut open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn report(rows: &[SummaryRow], out: &Path) -> Result<()> {
    for r in rows {
        eprintln!(
            "{} dict={} ({} classes: {}) target={} n_train={} acc={:.4} [{:.4}, {:.4}]",
            r.experiment,
            r.dict_source,
            r.dict_classes,
            r.dict_class_labels.join(" "),
            r.target,
            r.n_train,
            r.mean_acc,
            r.ci_low,
            r.ci_high
        );
    }
    append_csv(out, rows).with_context(|| format!("writing {}", out.display()))
}

/// Entries with absolute paths so the manifest can be written anywhere.
fn absolute(m: &DatasetManifest) -> Result<DatasetManifest> {
    let entries = m
        .entries
        .iter()
        .map(|e| {
            let p = m.resolve(e);
            let p = fs::canonicalize(&p).with_context(|| format!("resolving {}", p.display()))?;
            Ok(ManifestEntry {
                path: p.to_string_lossy().into_owned(),
                label: e.label.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DatasetManifest::new(m.name.clone(), &m.root, entries)?)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Extract {
            manifest: path,
            cache_dir,
            grid,
        } => {
            let m = manifest(&path)?;
            let s = store(grid.params()?, Some(&cache_dir))?;
            s.load_all(&m)?;
            println!("{} images, {} descriptors", m.len(), s.memo_descriptors());
        }
        Command::Codebook {
            manifest: path,
            out,
            classes,
            class_seed,
            k,
            seed,
            cache_dir,
            grid,
        } => {
            let mut m = manifest(&path)?;
            if let Some(count) = classes {
                m = select_classes(&m, count, class_seed.unwrap_or(seed))?;
                eprintln!("classes: {}", m.classes().join(" "));
            }
            let s = store(grid.params()?, cache_dir.as_deref())?;
            let cb = build_dictionary(&s, &m, k, seed)?;
            let mut w = create(&out)?;
            cb.write_to(&mut w)?;
            w.flush()?;
            println!("{}", cb.id());
        }
        Command::Encode {
            manifest: path,
            codebook,
            out,
            csv,
            cache_dir,
            grid,
            enc,
        } => {
            let m = manifest(&path)?;
            let cb = Codebook::read_from(&mut open(&codebook)?)
                .with_context(|| format!("reading {}", codebook.display()))?;
            let s = store(grid.params()?, cache_dir.as_deref())?;
            let vectors = encode_manifest(&s, &m, &cb, &enc.params())?;
            let batch = BowBatch {
                codebook_id: cb.id(),
                k: cb.k(),
                vectors,
                labels: m.entries.iter().map(|e| e.label.clone()).collect(),
            };
            let mut w = create(&out)?;
            batch.write_to(&mut w)?;
            w.flush()?;
            if let Some(csv) = csv {
                let mut w = create(&csv)?;
                batch.write_csv(&mut w)?;
                w.flush()?;
            }
            println!("{} vectors of length {}", batch.vectors.len(), batch.k);
        }
        Command::Train {
            bow,
            out,
            seed,
            svm,
        } => {
            let batch = read_bow(&bow)?;
            let cfg = TrainConfig {
                c_reg: svm.c_reg,
                epochs: svm.epochs,
                seed,
            };
            let model = train_ovr(&batch.vectors, &batch.labels, &cfg)?;
            let mut w = create(&out)?;
            model.write_to(&mut w)?;
            w.flush()?;
            println!(
                "trained {} classes on {} vectors",
                model.labels().len(),
                batch.vectors.len()
            );
        }
        Command::Eval { bow, model } => {
            let batch = read_bow(&bow)?;
            let model = LinearModel::read_from(&mut open(&model)?)
                .with_context(|| format!("reading {}", model.display()))?;
            println!("{:.6}", model.accuracy(&batch.vectors, &batch.labels)?);
        }
        Command::Crossbase {
            source,
            target,
            n_train,
            native,
            out,
            exp,
        } => {
            let params = exp.params()?;
            let (src, tgt) = (manifest(&source)?, manifest(&target)?);
            let s = store(params.grid, exp.cache_dir.as_deref())?;
            let seeds = run_seeds(exp.seed, exp.runs);
            let rows = cross_base_experiment(&s, &src, &tgt, &n_train, &seeds, &params, native)?;
            report(&rows, &out)?;
        }
        Command::Sweep {
            source,
            target,
            class_counts,
            n_train,
            class_seed,
            out,
            exp,
        } => {
            let params = exp.params()?;
            let (src, tgt) = (manifest(&source)?, manifest(&target)?);
            let s = store(params.grid, exp.cache_dir.as_deref())?;
            let seeds = run_seeds(exp.seed, exp.runs);
            let class_seed = class_seed.unwrap_or(exp.seed);
            let rows = diversity_sweep(
                &s,
                &src,
                &class_counts,
                &tgt,
                n_train,
                &seeds,
                class_seed,
                &params,
            )?;
            report(&rows, &out)?;
        }
        Command::Synth {
            preset,
            out,
            name,
            images_per_class,
            noise_sd,
            seed,
        } => {
            let (mut cfg, default_name) = match preset {
                Preset::Diverse => (synth::diverse_config(seed), "diverse"),
                Preset::Narrow => (synth::narrow_config(seed), "narrow"),
            };
            if let Some(n) = images_per_class {
                cfg.images_per_class = n;
            }
            if let Some(sd) = noise_sd {
                cfg.noise_sd = sd;
            }
            let name = name.unwrap_or_else(|| default_name.to_owned());
            let m = synth::generate_corpus(&cfg, &out, &name)?;
            println!("{}", out.join(format!("{name}.tsv")).display());
            eprintln!("{} images in {} classes", m.len(), m.classes().len());
        }
        Command::Split {
            manifest: path,
            n_train,
            seed,
            train_out,
            test_out,
        } => {
            let m = absolute(&manifest(&path)?)?;
            let (train, test) = split_balanced(&m, n_train, seed)?;
            train.write(&train_out)?;
            test.write(&test_out)?;
            println!("{} train, {} test", train.len(), test.len());
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        if n == 0 {
            bail!("--workers must be at least 1");
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("starting worker pool")?;
    pool.install(|| run(cli.command))
}
