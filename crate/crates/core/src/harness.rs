//! Monte Carlo experiment orchestration and persistence.
//!
//! Each experiment reads an [`ExperimentConfig`], runs its trials on
//! independent counter-derived RNG streams, and produces a [`ResultTable`]:
//! a primary CSV table where every empirical column sits next to the
//! theoretical prediction it checks, auxiliary tables (histograms), and a
//! JSON manifest that pins the configuration digest and master seed, so a
//! run is reproducible byte-for-byte from its outputs.
//!
//! Trials are data-parallel: with the `parallel` feature (default) they
//! run on the rayon pool, otherwise sequentially. Aggregation folds the
//! per-trial results in trial order either way, so the numbers do not
//! depend on scheduling. Each grid point derives its RNG streams from
//! the grid *value*, so a row's numbers do not change when the grid is
//! reordered or extended.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::lss::{self, TestParams};
use crate::models::{
    self, gamma_of_lambda, generate, generate_additive_with_spike, ModelKind, ModelSpec, PriorKind,
};
use crate::noise::kde_fit;
use crate::spectral::{bbp_outlier, gram, mp_edges, sym_eigenvalues, Ratio};
use crate::stream::Stream;
use crate::transform::{
    alpha_star, default_margin, effective_snr, entrywise_transform, overlap, top_singular_pair,
    SnrHint, TransformSpec,
};

pub mod parallel;

use parallel::map_trials;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentKind {
    /// Type-I + Type-II error of the LSS test across an ω grid.
    ErrorSweep,
    /// Largest eigenvalue before/after the entrywise transform across a
    /// λ grid, with histograms.
    TransitionSweep,
    /// Empirical mean/variance/normality of `L_ω` against the CLT.
    CltCheck,
    /// Spike recovery overlap, raw vs transformed PCA, across an N grid.
    Reconstruction,
    /// KDE-estimated transform against the oracle transform.
    KdePipeline,
}

/// One experiment, JSON-serializable field for field.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Template ensemble; its `seed` field is ignored in favor of
    /// `master_seed`.
    pub model: ModelSpec,
    /// Grid parameter: ω values (ErrorSweep, CltCheck), λ values
    /// (TransitionSweep, KdePipeline), N values (Reconstruction).
    pub grid: Vec<f64>,
    /// Trials per grid point (split evenly across hypotheses where two
    /// hypotheses are simulated).
    pub trials: usize,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    /// Transform shift α; default 0 for additive ensembles and α_g for
    /// multiplicative ones.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Fourth-moment override for the LSS tests; default from the model's
    /// noise.
    #[serde(default)]
    pub w4: Option<f64>,
    /// Spike vector for the reconstruction experiment; synthetic when
    /// absent.
    #[serde(default)]
    pub spike_file: Option<PathBuf>,
    #[serde(default)]
    pub histogram_bins: Option<usize>,
    /// Detection margin; default `3·M^{−2/3}`.
    #[serde(default)]
    pub margin: Option<f64>,
}

impl ExperimentConfig {
    fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.trials == 0 {
            return Err(Error::Validation("trials must be >= 1".into()));
        }
        if self.grid.is_empty() {
            return Err(Error::Validation("grid must be nonempty".into()));
        }
        Ok(())
    }

    fn margin(&self) -> f64 {
        self.margin.unwrap_or_else(|| default_margin(self.model.m))
    }

    fn transform_spec(&self, lambda: f64) -> Result<TransformSpec> {
        let noise = self.model.noise.clone();
        let alpha = match self.alpha {
            Some(a) => a,
            None => match self.model.kind {
                ModelKind::Multiplicative => {
                    alpha_star(gamma_of_lambda(lambda)?, noise.fisher())
                }
                _ => 0.0,
            },
        };
        Ok(TransformSpec { alpha, noise })
    }
}

/// Digest of the canonical JSON encoding of a config.
pub fn config_digest(cfg: &ExperimentConfig) -> String {
    let bytes = serde_json::to_vec(cfg).expect("config serializes");
    let hash = Sha256::digest(&bytes);
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

/// Reproducibility metadata attached to every result.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub config_digest: String,
    pub master_seed: u64,
    pub tool_version: String,
    pub started_at: String,
    pub wall_seconds: f64,
    /// Trials whose statistic hit a precondition (an eigenvalue beyond
    /// the log-det shift, a failed fit); surfaced, never silently
    /// dropped.
    #[serde(default)]
    pub flagged: Vec<FlaggedTrial>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlaggedTrial {
    pub grid_value: f64,
    pub hypothesis: String,
    pub trial: u64,
    pub detail: String,
}

/// One named CSV table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Primary table, auxiliary tables, and the manifest of one experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResultTable {
    pub primary: Table,
    pub auxiliary: Vec<Table>,
    pub manifest: Manifest,
}

impl ResultTable {
    /// Write `results.csv`, any auxiliary `<name>.csv`, and
    /// `manifest.json` under a directory. Returns the paths written.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let primary = dir.join("results.csv");
        std::fs::write(&primary, self.primary.to_csv())?;
        written.push(primary);
        for t in &self.auxiliary {
            let path = dir.join(format!("{}.csv", t.name));
            std::fs::write(&path, t.to_csv())?;
            written.push(path);
        }
        let manifest = dir.join("manifest.json");
        std::fs::write(&manifest, serde_json::to_string_pretty(&self.manifest)?)?;
        written.push(manifest);
        Ok(written)
    }
}

fn manifest_for(cfg: &ExperimentConfig, start: Instant, started_at: String) -> Manifest {
    Manifest {
        config_digest: config_digest(cfg),
        master_seed: cfg.master_seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        started_at,
        wall_seconds: start.elapsed().as_secs_f64(),
        flagged: Vec::new(),
    }
}

fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339()
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}

/// Kolmogorov–Smirnov distance between a sample and the normal fitted to
/// its own mean and variance.
fn ks_to_fitted_normal(xs: &[f64]) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite statistics"));
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let sd = sample_variance(&sorted).sqrt();
    let mut ks = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let z = (x - mean) / sd;
        let cdf = 0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2);
        ks = ks.max((cdf - i as f64 / n).abs());
        ks = ks.max((cdf - (i as f64 + 1.0) / n).abs());
    }
    ks
}

fn histogram(name: &str, xs: &[f64], bins: usize) -> Table {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = ((hi - lo) / bins as f64).max(f64::MIN_POSITIVE);
    let mut counts = vec![0usize; bins];
    for &x in xs {
        let b = (((x - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Table {
        name: name.to_string(),
        columns: vec!["bin_left".into(), "bin_right".into(), "count".into()],
        rows: (0..bins)
            .map(|b| {
                vec![
                    lo + width * b as f64,
                    lo + width * (b + 1) as f64,
                    counts[b] as f64,
                ]
            })
            .collect(),
    }
}

fn largest_eigenvalue(y: &ndarray::Array2<f64>) -> Result<f64> {
    Ok(sym_eigenvalues(&gram(y))?[0])
}

fn spec_with_snr(template: &ModelSpec, snr: f64) -> ModelSpec {
    let mut s = template.clone();
    s.snr = snr;
    s
}

// ---------------------------------------------------------------------------
// Error sweep
// ---------------------------------------------------------------------------

enum TrialStat {
    Value(f64),
    Flagged(String),
}

/// Empirical Type-I/Type-II error of the LSS test across an ω grid,
/// against `erfc(√V₀/(4√2))`.
///
/// A trial whose spectrum reaches the log-det shift counts as a rejection
/// of `H₀` (an outlier eigenvalue is overwhelming evidence of signal);
/// under `H₀` such trials are also surfaced in the manifest.
pub fn run_error_sweep(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    if cfg.model.kind == ModelKind::Null {
        return Err(Error::Validation(
            "error sweep needs an Additive or Multiplicative template".into(),
        ));
    }
    let d = cfg.model.ratio()?;
    let w4 = cfg.w4.unwrap_or_else(|| cfg.model.noise.w4());
    let start = Instant::now();
    let started_at = now_rfc3339();
    let root = Stream::root(cfg.master_seed);
    let n_null = cfg.trials / 2;
    let n_spiked = cfg.trials - n_null;

    let mut rows = Vec::new();
    let mut flagged = Vec::new();
    for &omega in &cfg.grid {
        let params = TestParams::new(omega, d, w4)?;
        let threshold = lss::threshold(&params);
        let grid_stream = root.child(omega.to_bits());
        let run = |hyp: u64, snr: f64, trials: usize| -> Vec<TrialStat> {
            let spec = spec_with_snr(&cfg.model, snr);
            let hyp_stream = grid_stream.child(hyp);
            map_trials(trials as u64, |t| {
                let data = match generate(&spec, hyp_stream.child(t)) {
                    Ok(d) => d,
                    Err(e) => return TrialStat::Flagged(e.to_string()),
                };
                match lss::lss_statistic(&data.values, &params) {
                    Ok(l) => TrialStat::Value(l),
                    Err(e) => TrialStat::Flagged(e.to_string()),
                }
            })
        };

        let null_stats = run(0, 0.0, n_null);
        let spiked_stats = run(1, omega, n_spiked);

        let mut type1_count = 0usize;
        for (t, s) in null_stats.iter().enumerate() {
            match s {
                TrialStat::Value(l) => {
                    if *l > threshold {
                        type1_count += 1;
                    }
                }
                TrialStat::Flagged(detail) => {
                    type1_count += 1;
                    flagged.push(FlaggedTrial {
                        grid_value: omega,
                        hypothesis: "H0".into(),
                        trial: t as u64,
                        detail: detail.clone(),
                    });
                }
            }
        }
        let mut type2_count = 0usize;
        for s in &spiked_stats {
            match s {
                TrialStat::Value(l) => {
                    if *l <= threshold {
                        type2_count += 1;
                    }
                }
                // an outlier eigenvalue under H₁ is a (correct) rejection
                TrialStat::Flagged(_) => {}
            }
        }
        let t1 = type1_count as f64 / n_null as f64;
        let t2 = type2_count as f64 / n_spiked as f64;
        let se = (t1 * (1.0 - t1) / n_null as f64 + t2 * (1.0 - t2) / n_spiked as f64).sqrt();
        rows.push(vec![
            omega,
            t1,
            t2,
            t1 + t2,
            lss::predicted_error(&params),
            se,
            cfg.trials as f64,
        ]);
    }

    let mut manifest = manifest_for(cfg, start, started_at);
    manifest.flagged = flagged;
    Ok(ResultTable {
        primary: Table {
            name: "results".into(),
            columns: vec![
                "omega".into(),
                "type1".into(),
                "type2".into(),
                "err_empirical".into(),
                "err_theory".into(),
                "stderr".into(),
                "trials".into(),
            ],
            rows,
        },
        auxiliary: Vec::new(),
        manifest,
    })
}

// ---------------------------------------------------------------------------
// Transition sweep
// ---------------------------------------------------------------------------

/// Largest eigenvalue of `YYᵀ` and of the transformed `ỸỸᵀ` across a λ
/// grid, against the bulk edge and the BBP outlier locations.
pub fn run_transition_sweep(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let d = cfg.model.ratio()?;
    let start = Instant::now();
    let started_at = now_rfc3339();
    let root = Stream::root(cfg.master_seed);
    let bins = cfg.histogram_bins.unwrap_or(40);

    let mut rows = Vec::new();
    let mut aux = Vec::new();
    for (gi, &lambda) in cfg.grid.iter().enumerate() {
        let tspec = cfg.transform_spec(lambda)?;
        let spec = spec_with_snr(&cfg.model, lambda);
        let grid_stream = root.child(lambda.to_bits());
        let per_trial: Vec<Result<(f64, f64)>> = map_trials(cfg.trials as u64, |t| {
            let data = generate(&spec, grid_stream.child(t))?;
            let raw = largest_eigenvalue(&data.values)?;
            let transformed = entrywise_transform(&data.values, &tspec)?;
            let tr = largest_eigenvalue(&transformed.values)?;
            Ok((raw, tr))
        });
        let mut raw = Vec::with_capacity(cfg.trials);
        let mut tra = Vec::with_capacity(cfg.trials);
        for r in per_trial {
            let (a, b) = r?;
            raw.push(a);
            tra.push(b);
        }
        let (raw_mean, raw_se) = mean_and_se(&raw);
        let (t_mean, t_se) = mean_and_se(&tra);
        let hint = SnrHint {
            kind: spec.kind,
            snr: lambda,
        };
        let snr_eff = match spec.kind {
            ModelKind::Null => 0.0,
            _ => effective_snr(hint, &tspec)?,
        };
        rows.push(vec![
            lambda,
            raw_mean,
            raw_se,
            bbp_outlier(lambda, d),
            t_mean,
            t_se,
            bbp_outlier(snr_eff, d),
            tspec.alpha,
            snr_eff,
            cfg.trials as f64,
        ]);
        aux.push(histogram(&format!("hist_raw_{gi}"), &raw, bins));
        aux.push(histogram(&format!("hist_transformed_{gi}"), &tra, bins));
    }

    Ok(ResultTable {
        primary: Table {
            name: "results".into(),
            columns: vec![
                "lambda".into(),
                "mu1_raw_mean".into(),
                "mu1_raw_se".into(),
                "mu1_raw_theory".into(),
                "mu1_t_mean".into(),
                "mu1_t_se".into(),
                "mu1_t_theory".into(),
                "alpha".into(),
                "snr_eff".into(),
                "trials".into(),
            ],
            rows,
        },
        auxiliary: aux,
        manifest: manifest_for(cfg, start, started_at),
    })
}

// ---------------------------------------------------------------------------
// CLT check
// ---------------------------------------------------------------------------

/// Mean, variance, and normality of `L_ω` under both hypotheses against
/// `m(0)`, `m(ω)`, and `V₀`; plus the empirical error against the
/// limiting error. The `ks_band` column is the 5% large-sample
/// Kolmogorov critical value `1.36/√trials`.
pub fn run_clt_check(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    if cfg.model.kind == ModelKind::Null {
        return Err(Error::Validation(
            "CLT check needs an Additive or Multiplicative template".into(),
        ));
    }
    let d = cfg.model.ratio()?;
    let w4 = cfg.w4.unwrap_or_else(|| cfg.model.noise.w4());
    let start = Instant::now();
    let started_at = now_rfc3339();
    let root = Stream::root(cfg.master_seed);

    let mut rows = Vec::new();
    let mut flagged = Vec::new();
    for &omega in &cfg.grid {
        let params = TestParams::new(omega, d, w4)?;
        let threshold = lss::threshold(&params);
        let grid_stream = root.child(omega.to_bits());
        let collect = |hyp: u64, snr: f64| -> Vec<TrialStat> {
            let spec = spec_with_snr(&cfg.model, snr);
            let hyp_stream = grid_stream.child(hyp);
            map_trials(cfg.trials as u64, |t| {
                let data = match generate(&spec, hyp_stream.child(t)) {
                    Ok(d) => d,
                    Err(e) => return TrialStat::Flagged(e.to_string()),
                };
                match lss::lss_statistic(&data.values, &params) {
                    Ok(l) => TrialStat::Value(l),
                    Err(e) => TrialStat::Flagged(e.to_string()),
                }
            })
        };
        let mut split = |stats: Vec<TrialStat>, hyp: &str| -> (Vec<f64>, usize) {
            let mut vals = Vec::new();
            let mut flags = 0usize;
            for (t, s) in stats.into_iter().enumerate() {
                match s {
                    TrialStat::Value(l) => vals.push(l),
                    TrialStat::Flagged(detail) => {
                        flags += 1;
                        flagged.push(FlaggedTrial {
                            grid_value: omega,
                            hypothesis: hyp.into(),
                            trial: t as u64,
                            detail,
                        });
                    }
                }
            }
            (vals, flags)
        };
        let (l0, f0) = split(collect(0, 0.0), "H0");
        let (l1, f1) = split(collect(1, omega), "H1");
        if l0.len() < 2 || l1.len() < 2 {
            return Err(Error::Numerical(format!(
                "too few valid trials at omega = {omega}"
            )));
        }
        let (mean0, se0) = mean_and_se(&l0);
        let (mean1, _) = mean_and_se(&l1);
        // flagged trials decide as rejections
        let type1 =
            (l0.iter().filter(|&&l| l > threshold).count() + f0) as f64 / cfg.trials as f64;
        let type2 = l1.iter().filter(|&&l| l <= threshold).count() as f64
            / (l1.len() + f1) as f64;
        rows.push(vec![
            omega,
            mean0,
            lss::limiting_mean(0.0, &params)?,
            mean1,
            lss::limiting_mean(omega, &params)?,
            sample_variance(&l0),
            sample_variance(&l1),
            lss::limiting_variance(&params),
            ks_to_fitted_normal(&l0),
            ks_to_fitted_normal(&l1),
            1.36 / (cfg.trials as f64).sqrt(),
            type1,
            type2,
            type1 + type2,
            lss::predicted_error(&params),
            se0,
            cfg.trials as f64,
        ]);
    }

    let mut manifest = manifest_for(cfg, start, started_at);
    manifest.flagged = flagged;
    Ok(ResultTable {
        primary: Table {
            name: "results".into(),
            columns: vec![
                "omega".into(),
                "mean_h0".into(),
                "m0_theory".into(),
                "mean_h1".into(),
                "m1_theory".into(),
                "var_h0".into(),
                "var_h1".into(),
                "v0_theory".into(),
                "ks_h0".into(),
                "ks_h1".into(),
                "ks_band".into(),
                "type1".into(),
                "type2".into(),
                "err_empirical".into(),
                "err_theory".into(),
                "stderr_mean_h0".into(),
                "trials".into(),
            ],
            rows,
        },
        auxiliary: Vec::new(),
        manifest,
    })
}

// ---------------------------------------------------------------------------
// Reconstruction
// ---------------------------------------------------------------------------

/// Spike-recovery overlap `|⟨û, u⟩|` of raw vs transformed PCA across an
/// N grid, with a fixed spike (from file or synthetic).
pub fn run_reconstruction(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    if cfg.model.kind != ModelKind::Additive {
        return Err(Error::Validation(
            "reconstruction uses the additive (noisy measurement) model".into(),
        ));
    }
    let m = cfg.model.m;
    let start = Instant::now();
    let started_at = now_rfc3339();
    let root = Stream::root(cfg.master_seed);
    let spike: Vec<f64> = match &cfg.spike_file {
        Some(path) => {
            let s = models::load_spike(path)?;
            if s.len() != m {
                return Err(Error::Validation(format!(
                    "spike has {} entries, model expects M = {m}",
                    s.len()
                )));
            }
            s
        }
        None => models::sample_prior(
            &PriorKind::Spherical,
            m,
            &mut root.child(u64::MAX).rng(),
        ),
    };
    let lambda = cfg.model.snr;
    let tspec = cfg.transform_spec(lambda)?;
    let sqrt_fisher_snr = |d: Ratio| -> Result<f64> {
        effective_snr(
            SnrHint {
                kind: ModelKind::Additive,
                snr: lambda,
            },
            &tspec,
        )
        .map(|s| s.min(1.0 / d.value().max(1e-12)))
    };

    let mut rows = Vec::new();
    for &n_val in &cfg.grid {
        let n = n_val as usize;
        if n as f64 != n_val || n < m {
            return Err(Error::Validation(format!(
                "reconstruction grid entry {n_val} must be an integer >= M = {m}"
            )));
        }
        let d = Ratio::from_dims(m, n)?;
        let mut spec = spec_with_snr(&cfg.model, lambda);
        spec.n = n;
        let grid_stream = root.child(n_val.to_bits());
        let spike_ref = &spike;
        let spec_ref = &spec;
        let tspec_ref = &tspec;
        let per_trial: Vec<Result<(f64, f64)>> = map_trials(cfg.trials as u64, move |t| {
            let data = generate_additive_with_spike(spec_ref, spike_ref, grid_stream.child(t))?;
            let (_, u_raw, _) = top_singular_pair(&data.values)?;
            let transformed = entrywise_transform(&data.values, tspec_ref)?;
            let (_, u_t, _) = top_singular_pair(&transformed.values)?;
            Ok((overlap(&u_raw, spike_ref), overlap(&u_t, spike_ref)))
        });
        let mut raw = Vec::with_capacity(cfg.trials);
        let mut tra = Vec::with_capacity(cfg.trials);
        let mut wins = 0usize;
        for r in per_trial {
            let (a, b) = r?;
            if b >= a {
                wins += 1;
            }
            raw.push(a);
            tra.push(b);
        }
        let (raw_mean, raw_se) = mean_and_se(&raw);
        let (t_mean, t_se) = mean_and_se(&tra);
        let snr_eff = sqrt_fisher_snr(d)?;
        rows.push(vec![
            n as f64,
            d.value(),
            raw_mean,
            raw_se,
            t_mean,
            t_se,
            wins as f64 / cfg.trials as f64,
            lambda,
            snr_eff,
            d.value().sqrt(),
            cfg.trials as f64,
        ]);
    }

    Ok(ResultTable {
        primary: Table {
            name: "results".into(),
            columns: vec![
                "n".into(),
                "d".into(),
                "overlap_raw_mean".into(),
                "overlap_raw_se".into(),
                "overlap_t_mean".into(),
                "overlap_t_se".into(),
                "t_wins_frac".into(),
                "snr_raw".into(),
                "snr_eff".into(),
                "sqrt_d".into(),
                "trials".into(),
            ],
            rows,
        },
        auxiliary: Vec::new(),
        manifest: manifest_for(cfg, start, started_at),
    })
}

// ---------------------------------------------------------------------------
// KDE pipeline
// ---------------------------------------------------------------------------

/// Fit a KDE to the matrix entries, transform with the estimated score,
/// and compare detection against the raw matrix and the oracle (true
/// noise) transform.
pub fn run_kde_pipeline(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let d = cfg.model.ratio()?;
    let d_plus = mp_edges(d).1;
    let margin = cfg.margin();
    let threshold = d_plus + margin;
    let start = Instant::now();
    let started_at = now_rfc3339();
    let root = Stream::root(cfg.master_seed);

    struct KdeTrial {
        raw: f64,
        kde: f64,
        oracle: f64,
        fisher_hat: f64,
    }

    let mut rows = Vec::new();
    let mut flagged = Vec::new();
    for &lambda in &cfg.grid {
        let spec = spec_with_snr(&cfg.model, lambda);
        let oracle_spec = TransformSpec {
            alpha: cfg.alpha.unwrap_or(0.0),
            noise: cfg.model.noise.clone(),
        };
        let grid_stream = root.child(lambda.to_bits());
        let per_trial: Vec<std::result::Result<KdeTrial, String>> =
            map_trials(cfg.trials as u64, |t| {
                let work = || -> Result<KdeTrial> {
                    let data = generate(&spec, grid_stream.child(t))?;
                    let raw = largest_eigenvalue(&data.values)?;
                    let scale = (spec.n as f64).sqrt();
                    let samples: Vec<f64> = data.values.iter().map(|v| v * scale).collect();
                    let fitted = kde_fit(&samples, None)?;
                    let fisher_hat = fitted.fisher();
                    let kde_spec = TransformSpec {
                        alpha: cfg.alpha.unwrap_or(0.0),
                        noise: fitted,
                    };
                    let kde =
                        largest_eigenvalue(&entrywise_transform(&data.values, &kde_spec)?.values)?;
                    let oracle = largest_eigenvalue(
                        &entrywise_transform(&data.values, &oracle_spec)?.values,
                    )?;
                    Ok(KdeTrial {
                        raw,
                        kde,
                        oracle,
                        fisher_hat,
                    })
                };
                work().map_err(|e| e.to_string())
            });
        let mut raw = Vec::new();
        let mut kde = Vec::new();
        let mut oracle = Vec::new();
        let mut fishers = Vec::new();
        for (t, r) in per_trial.into_iter().enumerate() {
            match r {
                Ok(kt) => {
                    raw.push(kt.raw);
                    kde.push(kt.kde);
                    oracle.push(kt.oracle);
                    fishers.push(kt.fisher_hat);
                }
                Err(detail) => flagged.push(FlaggedTrial {
                    grid_value: lambda,
                    hypothesis: "H1".into(),
                    trial: t as u64,
                    detail,
                }),
            }
        }
        if raw.is_empty() {
            return Err(Error::Numerical(format!(
                "every KDE trial failed at lambda = {lambda}"
            )));
        }
        let rate = |xs: &[f64]| xs.iter().filter(|&&x| x > threshold).count() as f64
            / xs.len() as f64;
        let hint = SnrHint {
            kind: spec.kind,
            snr: lambda,
        };
        let snr_eff = match spec.kind {
            ModelKind::Null => 0.0,
            _ => effective_snr(hint, &oracle_spec)?,
        };
        let (fisher_mean, _) = mean_and_se(&fishers);
        rows.push(vec![
            lambda,
            rate(&raw),
            rate(&kde),
            rate(&oracle),
            mean_and_se(&raw).0,
            mean_and_se(&kde).0,
            mean_and_se(&oracle).0,
            bbp_outlier(lambda, d),
            bbp_outlier(snr_eff, d),
            threshold,
            fisher_mean,
            cfg.model.noise.fisher(),
            raw.len() as f64,
        ]);
    }

    let mut manifest = manifest_for(cfg, start, started_at);
    manifest.flagged = flagged;
    Ok(ResultTable {
        primary: Table {
            name: "results".into(),
            columns: vec![
                "lambda".into(),
                "det_rate_raw".into(),
                "det_rate_kde".into(),
                "det_rate_oracle".into(),
                "mu1_raw_mean".into(),
                "mu1_kde_mean".into(),
                "mu1_oracle_mean".into(),
                "mu1_raw_theory".into(),
                "mu1_t_theory".into(),
                "threshold".into(),
                "fisher_kde_mean".into(),
                "fisher_true".into(),
                "trials".into(),
            ],
            rows,
        },
        auxiliary: Vec::new(),
        manifest,
    })
}

/// Dispatch an experiment by its configured kind.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    match cfg.experiment {
        ExperimentKind::ErrorSweep => run_error_sweep(cfg),
        ExperimentKind::TransitionSweep => run_transition_sweep(cfg),
        ExperimentKind::CltCheck => run_clt_check(cfg),
        ExperimentKind::Reconstruction => run_reconstruction(cfg),
        ExperimentKind::KdePipeline => run_kde_pipeline(cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{bimodal_noise, gaussian_noise};

    fn base_config(kind: ExperimentKind) -> ExperimentConfig {
        ExperimentConfig {
            experiment: kind,
            model: ModelSpec {
                kind: ModelKind::Additive,
                m: 48,
                n: 96,
                snr: 0.0,
                prior_u: PriorKind::IidRademacher,
                prior_v: PriorKind::IidRademacher,
                noise: gaussian_noise(),
                seed: 0,
            },
            grid: vec![0.35],
            trials: 40,
            master_seed: 7,
            output_dir: std::env::temp_dir().join("spiked_detect_harness_test"),
            alpha: None,
            w4: None,
            spike_file: None,
            histogram_bins: Some(10),
            margin: None,
        }
    }

    #[test]
    fn error_sweep_shape_and_determinism() {
        let cfg = base_config(ExperimentKind::ErrorSweep);
        let a = run_error_sweep(&cfg).unwrap();
        let b = run_error_sweep(&cfg).unwrap();
        assert_eq!(a.primary.columns.join(","),
            "omega,type1,type2,err_empirical,err_theory,stderr,trials");
        assert_eq!(a.primary.to_csv(), b.primary.to_csv());
        assert_eq!(a.manifest.config_digest, b.manifest.config_digest);
        let row = &a.primary.rows[0];
        // err_empirical = type1 + type2 and both rates are in [0, 1]
        assert!((row[3] - (row[1] + row[2])).abs() < 1e-12);
        assert!(row[1] >= 0.0 && row[1] <= 1.0 && row[2] >= 0.0 && row[2] <= 1.0);
        assert!(row[4] > 0.0 && row[4] < 1.0);
    }

    #[test]
    fn transition_sweep_emits_histograms() {
        let mut cfg = base_config(ExperimentKind::TransitionSweep);
        cfg.model.noise = bimodal_noise();
        cfg.grid = vec![0.0, 1.2];
        cfg.trials = 12;
        let out = run_transition_sweep(&cfg).unwrap();
        assert_eq!(out.auxiliary.len(), 4);
        assert_eq!(out.primary.rows.len(), 2);
        // null row: both means near the bulk edge
        let null_row = &out.primary.rows[0];
        let d_plus = mp_edges(Ratio::from_dims(48, 96).unwrap()).1;
        assert!((null_row[1] - d_plus).abs() < 0.4);
        assert!((null_row[3] - d_plus).abs() < 1e-12);
        // histogram counts sum to the trial count
        let total: f64 = out.auxiliary[0].rows.iter().map(|r| r[2]).sum();
        assert_eq!(total, 12.0);
    }

    #[test]
    fn clt_check_columns_pair_up() {
        let mut cfg = base_config(ExperimentKind::CltCheck);
        cfg.trials = 60;
        let out = run_clt_check(&cfg).unwrap();
        let row = &out.primary.rows[0];
        let cols = &out.primary.columns;
        let get = |name: &str| row[cols.iter().position(|c| c == name).unwrap()];
        assert!((get("mean_h0") - get("m0_theory")).abs() < 0.5);
        assert!(get("var_h0") > 0.0);
        assert!(get("ks_h0") < 0.25);
        assert!(get("err_theory") > 0.0);
    }

    #[test]
    fn reconstruction_ordering_holds_between_thresholds() {
        let mut cfg = base_config(ExperimentKind::Reconstruction);
        cfg.model.noise = bimodal_noise();
        cfg.model.m = 64;
        cfg.model.snr = 0.55; // between √d/F_g and √d at d = 1/2
        cfg.grid = vec![128.0];
        cfg.trials = 24;
        let out = run_reconstruction(&cfg).unwrap();
        let row = &out.primary.rows[0];
        // transformed overlap beats raw on average and in most trials
        assert!(row[4] > row[2], "transformed {} vs raw {}", row[4], row[2]);
        assert!(row[6] >= 0.7, "win fraction {}", row[6]);
    }

    #[test]
    fn kde_pipeline_smoke() {
        let mut cfg = base_config(ExperimentKind::KdePipeline);
        cfg.model.noise = bimodal_noise();
        cfg.model.m = 96;
        cfg.model.n = 192;
        cfg.grid = vec![0.55];
        cfg.trials = 6;
        let out = run_kde_pipeline(&cfg).unwrap();
        let row = &out.primary.rows[0];
        let cols = &out.primary.columns;
        let get = |name: &str| row[cols.iter().position(|c| c == name).unwrap()];
        // fitted Fisher lands near the true one even at this small size
        assert!((get("fisher_kde_mean") - get("fisher_true")).abs() < 0.6);
        assert_eq!(get("trials"), 6.0);
    }

    #[test]
    fn result_table_writes_files() {
        let cfg = base_config(ExperimentKind::ErrorSweep);
        let out = run_error_sweep(&cfg).unwrap();
        let dir = cfg.output_dir.join("write_test");
        let paths = out.write_to(&dir).unwrap();
        assert!(paths.iter().any(|p| p.ends_with("results.csv")));
        assert!(paths.iter().any(|p| p.ends_with("manifest.json")));
        let manifest: Manifest =
            serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap())
                .unwrap();
        assert_eq!(manifest.master_seed, 7);
        assert_eq!(manifest.config_digest.len(), 64);
    }

    #[test]
    fn trial_order_independence() {
        // Aggregates are folds over trial-indexed values, so running the
        // trials in any order gives the same rows; simulate by comparing
        // against a manual sequential rerun of the same streams.
        let cfg = base_config(ExperimentKind::TransitionSweep);
        let out = run_transition_sweep(&cfg).unwrap();
        let root = Stream::root(cfg.master_seed);
        let spec = spec_with_snr(&cfg.model, cfg.grid[0]);
        let grid_stream = root.child(cfg.grid[0].to_bits());
        let mut raws: Vec<f64> = (0..cfg.trials as u64)
            .map(|t| {
                let data = generate(&spec, grid_stream.child(t)).unwrap();
                largest_eigenvalue(&data.values).unwrap()
            })
            .collect();
        // shuffle-and-restore: sum in reversed order must match after sort;
        // the table itself is compared against the in-order mean
        let (mean, _) = mean_and_se(&raws);
        assert_eq!(mean, out.primary.rows[0][1]);
        raws.reverse();
        let mean_rev = raws.iter().sum::<f64>() / raws.len() as f64;
        assert!((mean_rev - mean).abs() < 1e-12);
    }
}
