use clap::{Parser, Subcommand};
use std::path::PathBuf;
use vimu::commands::{self, RunOverrides};
use vimu::demo::DemoSpec;
use vimu_core::augment::AugmentParams;
use vimu_core::classifier::{FeatureSubset, TrainParams};
use vimu_core::features::EcdfSpec;
use vimu_core::pipeline::WindowSpec;

/// Virtual IMU synthesis, sensor-level augmentation, and activity
/// recognition evaluation.
#[derive(Parser)]
#[command(name = "vimu", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check an experiment config: schema, invariants, path existence.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Synthesize virtual IMU traces for every (motion, placement) pair.
    Synth {
        #[arg(long)]
        config: PathBuf,
        /// Trace output directory (default: <output_dir>/traces).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ingest one real-sensor file through a column-map adapter.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        adapter: PathBuf,
        /// Resample to this rate (Hz) after ingest.
        #[arg(long)]
        resample: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Segment an ingested recording into labeled windows.
    Window {
        #[arg(long)]
        recording: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        window_seconds: f64,
        #[arg(long, default_value_t = 1.0)]
        overlap_seconds: f64,
        #[arg(long, default_value_t = 20.0)]
        rate: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Expand a dataset 4x with the three sensor-level transforms.
    Augment {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Rotation angle in radians (default pi/6).
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        noise_std: Option<f64>,
        #[arg(long)]
        bias_halfwidth: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Extract inverse-ECDF features from a dataset.
    Featurize {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 15)]
        components: usize,
        /// Drop the per-channel mean column.
        #[arg(long)]
        no_mean: bool,
    },
    /// Train a random forest on a features CSV.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        trees: usize,
        #[arg(long, default_value_t = 20)]
        max_depth: usize,
        #[arg(long, default_value_t = 2)]
        min_samples_leaf: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the evaluation matrix and save the report JSON.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Report path (default: <output_dir>/eval_report.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render results.csv / summary.md / per_class.csv from a report JSON.
    Report {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full pipeline: synth, ingest, window, evaluate, emit, manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's output_dir.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Override the config's fractions, comma separated.
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
        /// Override the forest size.
        #[arg(long)]
        trees: Option<usize>,
        /// Override the forest seed.
        #[arg(long)]
        forest_seed: Option<u64>,
    },
    /// Generate the bundled desk-scale demo task.
    Demo {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        subjects: usize,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        /// Virtual takes per class per provenance.
        #[arg(long, default_value_t = 12)]
        takes: usize,
    },
}

fn dispatch(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Validate { config } => commands::cmd_validate(&config),
        Command::Synth { config, out } => commands::cmd_synth(&config, out),
        Command::Ingest { input, adapter, resample, out } => {
            commands::cmd_ingest(&input, &adapter, resample, &out)
        }
        Command::Window { recording, window_seconds, overlap_seconds, rate, out } => {
            let spec = WindowSpec { window_seconds, overlap_seconds, rate };
            commands::cmd_window(&recording, spec, &out)
        }
        Command::Augment { dataset, out, theta, noise_std, bias_halfwidth, seed } => {
            let defaults = AugmentParams::default();
            let params = AugmentParams {
                theta: theta.unwrap_or(defaults.theta),
                noise_std: noise_std.unwrap_or(defaults.noise_std),
                bias_halfwidth: bias_halfwidth.unwrap_or(defaults.bias_halfwidth),
                seed,
            };
            commands::cmd_augment(&dataset, &out, params)
        }
        Command::Featurize { dataset, out, components, no_mean } => {
            let spec = EcdfSpec { n_components: components, include_mean: !no_mean };
            commands::cmd_featurize(&dataset, &out, spec)
        }
        Command::Train { features, out, trees, max_depth, min_samples_leaf, seed } => {
            let params = TrainParams {
                n_trees: trees,
                max_depth,
                min_samples_leaf,
                features_per_split: FeatureSubset::Sqrt,
                bootstrap: true,
                seed,
            };
            commands::cmd_train(&features, &out, params)
        }
        Command::Eval { config, out } => commands::cmd_eval(&config, out),
        Command::Report { report, out } => commands::cmd_report(&report, &out),
        Command::Run { config, output_dir, fractions, trees, forest_seed } => {
            let overrides = RunOverrides { output_dir, fractions, trees, forest_seed };
            commands::cmd_run(&config, overrides)
        }
        Command::Demo { out, seed, subjects, classes, takes } => {
            let spec = DemoSpec {
                seed,
                subjects,
                classes,
                takes_per_class: takes,
                ..DemoSpec::default()
            };
            commands::cmd_demo(&out, spec)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    };
    std::process::exit(code);
}
