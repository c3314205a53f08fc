//! Command line and HTTP front end.
//!
//! `pli` exits with 0 on success, 1 on usage errors and 2 on data errors.

pub mod dataset;
pub mod error;
pub mod ops;
pub mod service;
pub mod settings;

use std::ffi::OsString;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use pli_core::analysis::{ClassifierProbeConfig, RegressorProbeConfig};
use pli_core::augment::AugmentationSpec;
use pli_core::context::PairMode;
use pli_core::io::{
    encode_png_rgb, load_features, load_labels, load_labels_csv, load_pca, load_points, load_train_state, render_heat,
    save_features, save_pca, save_train_state, RasterContainer, StackManifest,
};
use pli_core::phantom::PhantomSpec;
use pli_core::pipeline::{fit_pca_subsampled, stack_samples};

use crate::dataset::Dataset;
use crate::error::{CliError, CliResult, EXIT_USAGE};
use crate::ops::{FeatureMethod, MANIFEST_FILE};
use crate::settings::TrainSettings;

#[derive(Debug, Parser)]
#[command(
    name = "pli",
    version,
    about = "Fiber-architecture texture analysis for 3D-PLI parameter maps"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a phantom spec into intensity stacks with ground truth.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit transmittance, direction and retardation to every intensity stack.
    Recover {
        /// Stack manifest; updated in place.
        #[arg(long)]
        stack: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        floor: f64,
    },
    /// Apply one seeded augmentation draw to a parameter-map raster.
    Augment {
        #[arg(long = "in")]
        input: PathBuf,
        /// Augmentation spec (TOML); defaults when omitted.
        #[arg(long)]
        aug: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5.2)]
        pixel_size: f64,
        #[arg(long, default_value_t = 1.0)]
        incident: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classical texture features on a sliding window.
    Features {
        #[arg(long, value_enum)]
        method: FeatureMethod,
        #[command(flatten)]
        window: Window,
        /// Encoder checkpoint for `--method encoder`.
        #[arg(long)]
        ckpt: Option<PathBuf>,
    },
    /// Contrastive training of the encoder.
    Train {
        #[arg(long)]
        stack: PathBuf,
        #[arg(long, default_value = "cl3d")]
        mode: PairMode,
        /// Context radius in micrometres.
        #[arg(long, default_value_t = 118.0)]
        radius: f64,
        /// Training settings (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the configured step count.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encoder embeddings on a sliding window.
    Embed {
        #[arg(long)]
        ckpt: PathBuf,
        #[command(flatten)]
        window: Window,
    },
    /// Fit a PCA model to a feature directory.
    Pca {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = 20)]
        k: usize,
        #[arg(long, default_value_t = 200_000)]
        max_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// k-means followed by Ward linkage of the centroids, cut at several levels.
    Cluster {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = 128)]
        kmeans: usize,
        #[arg(long, value_delimiter = ',', default_value = "3,7,14")]
        cuts: Vec<usize>,
        /// Project onto a PCA model before clustering.
        #[arg(long)]
        pca: Option<PathBuf>,
        /// Standardize channels before clustering.
        #[arg(long)]
        zscore: bool,
        /// Gaussian smoothing of the (reduced) maps, in feature pixels.
        #[arg(long, default_value_t = 0.0)]
        smooth: f64,
        #[arg(long, default_value_t = 200_000)]
        max_fit: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Macro IoU of cluster labels between adjacent sections.
    Iou {
        #[arg(long)]
        labels: PathBuf,
    },
    /// Linear probes on labelled feature positions.
    #[command(subcommand)]
    Probe(ProbeCommand),
    /// Affinity of every feature voxel to a set of query voxels.
    Retrieve {
        #[arg(long)]
        features: PathBuf,
        /// CSV with columns section,x,y in feature-map coordinates.
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        pca: Option<PathBuf>,
        #[arg(long)]
        components: Option<usize>,
        #[arg(long, default_value_t = 0.0)]
        smooth: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// HTTP API over a data directory.
    Serve {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
}

#[derive(Debug, Args)]
pub struct Window {
    #[arg(long)]
    pub stack: PathBuf,
    #[arg(long, default_value_t = 32)]
    pub tile: usize,
    #[arg(long, default_value_t = 16)]
    pub stride: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProbeInput {
    #[arg(long)]
    pub features: PathBuf,
    /// CSV with columns section,x,y,label.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum ProbeCommand {
    /// Logistic regression, macro F1 over repeated training subsets.
    Classify {
        #[command(flatten)]
        input: ProbeInput,
        #[arg(long, default_value_t = 30)]
        n_per_class: usize,
        #[arg(long, default_value_t = 50)]
        repeats: usize,
        #[arg(long, default_value_t = 1.0)]
        l2: f64,
    },
    /// Ridge regression, held-out R².
    Regress {
        #[command(flatten)]
        input: ProbeInput,
        #[arg(long, default_value_t = 10_000)]
        n_train: usize,
        #[arg(long, default_value_t = 10_000)]
        n_test: usize,
        #[arg(long, default_value_t = 1e4)]
        lambda: f64,
    },
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))
}

fn write_features(
    window: &Window,
    manifest: &StackManifest,
    ids: &[String],
    maps: &[pli_core::pipeline::FeatureMap],
) -> CliResult<()> {
    let index = save_features(&window.out, ids, maps, window.tile, manifest.pixel_size_um)?;
    println!(
        "{} sections, {} channels, {}x{} feature pixels",
        index.sections.len(),
        index.channels,
        maps[0].width,
        maps[0].height
    );
    Ok(())
}

pub fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth { spec, out } => {
            let spec = PhantomSpec::from_toml(&read_text(&spec)?)?;
            let m = ops::synthesize(&spec, &out)?;
            println!(
                "{} sections written to {}",
                m.sections.len(),
                out.join(MANIFEST_FILE).display()
            );
        }
        Command::Recover { stack, floor } => {
            let degenerate = ops::recover(&stack, floor)?;
            println!("recovered; {degenerate} degenerate pixels");
        }
        Command::Augment {
            input,
            aug,
            seed,
            pixel_size,
            incident,
            out,
        } => {
            let spec = match aug {
                Some(p) => AugmentationSpec::from_toml(&read_text(&p)?)?,
                None => AugmentationSpec::default(),
            };
            let maps = ops::maps_from_raster(&RasterContainer::load(&input)?, incident, pixel_size)?;
            let (chain, raster) = ops::augment(&maps, &spec, seed)?;
            raster.save(&out)?;
            println!(
                "{}",
                serde_json::to_string(&chain).map_err(|e| CliError::invalid(e.to_string()))?
            );
        }
        Command::Features { method, window, ckpt } => {
            let manifest = StackManifest::load(&window.stack)?;
            let state = ckpt.map(load_train_state).transpose()?;
            let (ids, maps) = ops::extract_features(&manifest, method, state.as_ref(), window.tile, window.stride)?;
            write_features(&window, &manifest, &ids, &maps)?;
        }
        Command::Train {
            stack,
            mode,
            radius,
            config,
            steps,
            out,
        } => {
            let mut settings = TrainSettings::load(config.as_deref())?;
            if let Some(s) = steps {
                settings.train.steps = s;
            }
            let manifest = StackManifest::load(&stack)?;
            let every = (settings.train.steps / 20).max(1) as u64;
            let outcome = ops::train(&manifest, mode, radius, &settings, |step, loss| {
                if step % every == 0 {
                    eprintln!("step {step} loss {loss:.4}");
                }
            })?;
            save_train_state(&outcome.state, &out)?;
            let last = outcome.losses.last().copied().unwrap_or(f64::NAN);
            println!(
                "{} steps, final loss {last:.4}{}",
                outcome.losses.len(),
                if outcome.stopped_early { ", stopped early" } else { "" }
            );
        }
        Command::Embed { ckpt, window } => {
            let manifest = StackManifest::load(&window.stack)?;
            let state = load_train_state(&ckpt)?;
            let (ids, maps) = ops::extract_features(
                &manifest,
                FeatureMethod::Encoder,
                Some(&state),
                window.tile,
                window.stride,
            )?;
            write_features(&window, &manifest, &ids, &maps)?;
        }
        Command::Pca {
            features,
            k,
            max_samples,
            seed,
            out,
        } => {
            let set = load_features(&features)?;
            let model = fit_pca_subsampled(&stack_samples(&set.maps)?, k, max_samples, seed)?;
            save_pca(&model, &out)?;
            let total: f64 = model.explained_variance_ratio.iter().sum();
            println!("{} components explain {:.1}% of the variance", model.k(), 100.0 * total);
        }
        Command::Cluster {
            features,
            kmeans,
            cuts,
            pca,
            zscore,
            smooth,
            max_fit,
            seed,
            out,
        } => {
            let set = load_features(&features)?;
            let mut maps = set.maps.clone();
            if zscore {
                maps = ops::zscore_maps(&maps)?;
            }
            let pca = pca.map(load_pca).transpose()?;
            let maps = ops::reduce(&maps, pca.as_ref(), None, smooth)?;
            let settings = ops::ClusterSettings {
                k: kmeans,
                cuts,
                max_fit_samples: max_fit,
                seed,
            };
            let result = ops::cluster(&maps, &settings)?;
            ops::save_clusters(&out, &set.ids(), &maps, &result)?;
            for (m, s) in &result.silhouettes {
                println!("m={m} silhouette {s:.4}");
            }
        }
        Command::Iou { labels } => {
            let set = load_labels(&labels)?;
            println!("iou {:.2}", ops::label_iou(&set)?);
        }
        Command::Probe(ProbeCommand::Classify {
            input,
            n_per_class,
            repeats,
            l2,
        }) => {
            let set = load_features(&input.features)?;
            let points = load_labels_csv(&input.labels)?;
            let config = ClassifierProbeConfig {
                n_per_class,
                repeats,
                l2,
                seed: input.seed,
            };
            let (names, score) = ops::probe_classify(&set.maps, &points, &config)?;
            println!("classes {}", names.join(","));
            println!("macro_f1 {:.4} +- {:.4}", score.mean, score.stderr);
        }
        Command::Probe(ProbeCommand::Regress {
            input,
            n_train,
            n_test,
            lambda,
        }) => {
            let set = load_features(&input.features)?;
            let points = load_labels_csv(&input.labels)?;
            let config = RegressorProbeConfig {
                n_train,
                n_test,
                lambda,
                seed: input.seed,
            };
            println!("r2 {:.4}", ops::probe_regress(&set.maps, &points, &config)?);
        }
        Command::Retrieve {
            features,
            points,
            sigma,
            pca,
            components,
            smooth,
            out,
        } => {
            let set = load_features(&features)?;
            let pca = pca.map(load_pca).transpose()?;
            let maps = ops::reduce(&set.maps, pca.as_ref(), components, smooth)?;
            let affinities = ops::retrieve(&maps, &load_points(&points)?, sigma)?;
            std::fs::create_dir_all(&out)?;
            for ((id, a), m) in set.ids().iter().zip(&affinities).zip(&maps) {
                RasterContainer::from_grid("affinity", a).save(out.join(format!("{id}.affinity.plir")))?;
                std::fs::write(
                    out.join(format!("{id}.affinity.png")),
                    encode_png_rgb(&render_heat(a, Some(&m.mask)))?,
                )?;
            }
            println!("{} affinity maps written to {}", affinities.len(), out.display());
        }
        Command::Serve { data, port, host } => {
            let dataset = Dataset::open(&data)?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(service::serve(dataset, SocketAddr::new(host, port)))?;
        }
    }
    Ok(())
}

/// Parse arguments and run; returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
