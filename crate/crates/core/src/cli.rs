//! Command-line interface.
//!
//! Single-matrix operations (`generate`, `pca`, `transform-pca`,
//! `lss-test`) read/write CSV matrices and print JSON results on stdout;
//! experiment runners (`sweep`, `clt-check`, `reconstruct`, `kde-run`)
//! read a JSON [`ExperimentConfig`] and write CSV tables plus a manifest
//! into its `output_dir`.
//!
//! Exit codes: 0 success, 2 validation/usage errors, 3 numerical errors.

use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::{self, ExperimentConfig, ExperimentKind};
use crate::io;
use crate::lss::{self, TestParams};
use crate::models::{self, ModelKind, ModelSpec};
use crate::noise::{self, NoiseModel};
use crate::spectral::Ratio;
use crate::stream::Stream;
use crate::transform::{self, SnrHint, TransformSpec};

#[derive(Parser)]
#[command(
    name = "spiked-detect",
    version,
    about = "Detect rank-one signals in spiked rectangular matrices"
)]
struct Cli {
    /// Worker threads (overrides the SPIKED_DETECT_THREADS variable).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a data matrix from a model-spec JSON file.
    Generate {
        /// Model spec (JSON).
        #[arg(long)]
        spec: PathBuf,
        /// Override the model spec's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output matrix CSV.
        #[arg(long)]
        out: PathBuf,
        /// Also write the planted left spike, one number per line.
        #[arg(long)]
        spike_out: Option<PathBuf>,
    },
    /// PCA detection on a CSV matrix.
    Pca {
        #[arg(long)]
        matrix: PathBuf,
        /// Aspect ratio d = M/N; defaults to the file's shape.
        #[arg(long)]
        ratio: Option<f64>,
        /// Detection margin above the bulk edge; default 3·M^(-2/3).
        #[arg(long)]
        margin: Option<f64>,
    },
    /// Entrywise-transformed PCA detection on a CSV matrix.
    TransformPca {
        #[arg(long)]
        matrix: PathBuf,
        /// Noise model: "gaussian", "bimodal", or a path to a noise JSON.
        #[arg(long)]
        noise: Option<String>,
        /// Fit the noise by KDE from a samples file instead.
        #[arg(long, conflicts_with = "noise")]
        noise_samples: Option<PathBuf>,
        /// Fit the noise by KDE from the matrix entries themselves.
        #[arg(long, conflicts_with_all = ["noise", "noise_samples"])]
        kde_from_matrix: bool,
        /// KDE bandwidth override (default n^(-1/5)).
        #[arg(long)]
        bandwidth: Option<f64>,
        /// Transform shift α; defaults to 0 (additive) or √F_g / α_g
        /// (multiplicative, without / with --snr-hint).
        #[arg(long)]
        alpha: Option<f64>,
        /// Assumed true SNR, used for α_g and the predicted outlier.
        #[arg(long)]
        snr_hint: Option<f64>,
        /// Model the hint refers to: "additive" or "multiplicative".
        #[arg(long, default_value = "additive")]
        model_kind: String,
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long)]
        margin: Option<f64>,
        /// Save the (possibly fitted) noise model as JSON for reuse.
        #[arg(long)]
        save_noise: Option<PathBuf>,
        /// Export the transformed matrix as CSV.
        #[arg(long)]
        export_transformed: Option<PathBuf>,
    },
    /// Linear-spectral-statistics hypothesis test on a CSV matrix.
    LssTest {
        #[arg(long)]
        matrix: PathBuf,
        /// Hypothesized SNR ω ∈ (0, √d).
        #[arg(long)]
        omega: f64,
        /// Aspect ratio d = M/N; defaults to the file's shape.
        #[arg(long)]
        ratio: Option<f64>,
        /// Normalized fourth moment of the noise.
        #[arg(long)]
        w4: Option<f64>,
        /// Estimate w4 from the matrix entries instead.
        #[arg(long, conflicts_with = "w4")]
        estimate_w4: bool,
    },
    /// Run an ErrorSweep or TransitionSweep experiment from a config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a CltCheck experiment from a config.
    CltCheck {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a Reconstruction experiment from a config.
    Reconstruct {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a KdePipeline experiment from a config.
    KdeRun {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Entry point; returns the process exit code.
pub fn cli_main(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            // clap prints usage/help itself; 0 for --help/--version,
            // 2 for usage errors.
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    harness::parallel::configure_threads(cli.threads);
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Generate {
            spec,
            seed,
            out,
            spike_out,
        } => generate_cmd(&spec, seed, &out, spike_out.as_deref()),
        Command::Pca {
            matrix,
            ratio,
            margin,
        } => {
            let y = io::read_matrix_csv(&matrix)?;
            let d = resolve_ratio(ratio, &y)?;
            let m = margin.unwrap_or_else(|| transform::default_margin(y.nrows()));
            let verdict = transform::pca_detect(&y, d, m)?;
            println!("{}", serde_json::to_string_pretty(&verdict)?);
            Ok(())
        }
        Command::TransformPca {
            matrix,
            noise,
            noise_samples,
            kde_from_matrix,
            bandwidth,
            alpha,
            snr_hint,
            model_kind,
            ratio,
            margin,
            save_noise,
            export_transformed,
        } => {
            let y = io::read_matrix_csv(&matrix)?;
            let d = resolve_ratio(ratio, &y)?;
            let kind = parse_model_kind(&model_kind)?;
            let model = if let Some(path) = noise_samples {
                noise::kde_fit(&io::read_samples(path)?, bandwidth)?
            } else if kde_from_matrix {
                let scale = (y.ncols() as f64).sqrt();
                let samples: Vec<f64> = y.iter().map(|v| v * scale).collect();
                noise::kde_fit(&samples, bandwidth)?
            } else {
                parse_noise(noise.as_deref().unwrap_or("gaussian"))?
            };
            if let Some(path) = save_noise {
                std::fs::write(path, serde_json::to_string(&model)?)?;
            }
            let alpha = match (alpha, kind) {
                (Some(a), _) => a,
                (None, ModelKind::Multiplicative) => match snr_hint {
                    Some(l) => {
                        transform::alpha_star(models::gamma_of_lambda(l)?, model.fisher())
                    }
                    None => model.fisher().sqrt(),
                },
                (None, _) => 0.0,
            };
            let tspec = TransformSpec {
                alpha,
                noise: model,
            };
            let m = margin.unwrap_or_else(|| transform::default_margin(y.nrows()));
            let hint = snr_hint.map(|snr| SnrHint { kind, snr });
            if let Some(path) = export_transformed {
                let transformed = transform::entrywise_transform(&y, &tspec)?;
                io::write_matrix_csv(path, &transformed.values)?;
            }
            let verdict = transform::transformed_pca_detect(&y, &tspec, d, m, hint)?;
            println!("{}", serde_json::to_string_pretty(&verdict)?);
            Ok(())
        }
        Command::LssTest {
            matrix,
            omega,
            ratio,
            w4,
            estimate_w4,
        } => {
            let y = io::read_matrix_csv(&matrix)?;
            let d = resolve_ratio(ratio, &y)?;
            let w4 = match (w4, estimate_w4) {
                (Some(v), _) => v,
                (None, true) => {
                    let estimate = noise::estimate_w4(&y);
                    // split-half sanity check on the estimate
                    let half = y.ncols() / 2;
                    let left = noise::estimate_w4(&y.slice(ndarray::s![.., ..half]).to_owned());
                    let right = noise::estimate_w4(&y.slice(ndarray::s![.., half..]).to_owned());
                    if (left - right).abs() > 0.2 {
                        eprintln!(
                            "warning: w4 split-half estimates differ: {left:.4} vs {right:.4}"
                        );
                    }
                    estimate
                }
                (None, false) => {
                    return Err(Error::Validation(
                        "provide --w4 or --estimate-w4".into(),
                    ));
                }
            };
            let params = TestParams::new(omega, d, w4)?;
            let result = lss::run_test(&y, &params)?;
            println!("{}", serde_json::to_string_pretty(&result)?);
            Ok(())
        }
        Command::Sweep { config } => {
            let cfg = load_config(&config)?;
            let table = match cfg.experiment {
                ExperimentKind::ErrorSweep => harness::run_error_sweep(&cfg)?,
                ExperimentKind::TransitionSweep => harness::run_transition_sweep(&cfg)?,
                other => {
                    return Err(Error::Validation(format!(
                        "sweep runs ErrorSweep or TransitionSweep configs, got {other:?}"
                    )));
                }
            };
            finish_experiment(&cfg, table)
        }
        Command::CltCheck { config } => {
            let cfg = expect_kind(load_config(&config)?, ExperimentKind::CltCheck)?;
            let table = harness::run_clt_check(&cfg)?;
            finish_experiment(&cfg, table)
        }
        Command::Reconstruct { config } => {
            let cfg = expect_kind(load_config(&config)?, ExperimentKind::Reconstruction)?;
            let table = harness::run_reconstruction(&cfg)?;
            finish_experiment(&cfg, table)
        }
        Command::KdeRun { config } => {
            let cfg = expect_kind(load_config(&config)?, ExperimentKind::KdePipeline)?;
            let table = harness::run_kde_pipeline(&cfg)?;
            finish_experiment(&cfg, table)
        }
    }
}

fn generate_cmd(
    spec_path: &Path,
    seed: Option<u64>,
    out: &Path,
    spike_out: Option<&Path>,
) -> Result<()> {
    let mut spec: ModelSpec = serde_json::from_str(&std::fs::read_to_string(spec_path)?)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let data = models::generate(&spec, Stream::root(spec.seed))?;
    io::write_matrix_csv(out, &data.values)?;
    if let Some(path) = spike_out {
        let lines: Vec<String> = data.planted_u.iter().map(|v| io::format_value(*v)).collect();
        std::fs::write(path, lines.join("\n") + "\n")?;
    }
    eprintln!(
        "wrote {}x{} matrix to {}",
        spec.m,
        spec.n,
        out.display()
    );
    Ok(())
}

fn resolve_ratio(flag: Option<f64>, y: &ndarray::Array2<f64>) -> Result<Ratio> {
    match flag {
        Some(d) => Ratio::new(d),
        None => Ratio::from_dims(y.nrows(), y.ncols()),
    }
}

fn parse_model_kind(s: &str) -> Result<ModelKind> {
    match s.to_ascii_lowercase().as_str() {
        "additive" => Ok(ModelKind::Additive),
        "multiplicative" => Ok(ModelKind::Multiplicative),
        other => Err(Error::Validation(format!(
            "model kind {other:?} must be additive or multiplicative"
        ))),
    }
}

fn parse_noise(s: &str) -> Result<NoiseModel> {
    match s.to_ascii_lowercase().as_str() {
        "gaussian" => Ok(noise::gaussian_noise()),
        "bimodal" => Ok(noise::bimodal_noise()),
        path => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::Validation(format!("noise {path:?} is not built-in and not readable: {e}"))
            })?;
            Ok(serde_json::from_str(&text)?)
        }
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn expect_kind(cfg: ExperimentConfig, kind: ExperimentKind) -> Result<ExperimentConfig> {
    if cfg.experiment != kind {
        return Err(Error::Validation(format!(
            "config is {:?}, this subcommand runs {kind:?}",
            cfg.experiment
        )));
    }
    Ok(cfg)
}

fn finish_experiment(cfg: &ExperimentConfig, table: harness::ResultTable) -> Result<()> {
    let paths = table.write_to(&cfg.output_dir)?;
    for p in &paths {
        println!("{}", p.display());
    }
    eprintln!(
        "{:?} finished in {:.2}s ({} rows)",
        cfg.experiment,
        table.manifest.wall_seconds,
        table.primary.rows.len()
    );
    Ok(())
}
