//! Generation of spiked rectangular data matrices.
//!
//! Either model plants a rank-one signal in an `M × N` noise matrix whose
//! entries are i.i.d. draws `ξ/√N` from a unit-variance density:
//!
//! * additive: `Y = √λ·u·vᵀ + X`;
//! * multiplicative: `Y = (I + λ·u·uᵀ)^{1/2}·X`, realized as
//!   `(I + γ·u·uᵀ)·X` with `γ = √(1+λ) − 1`, which is the exact square
//!   root of the rank-one perturbation on unit `u`.
//!
//! Everything is a pure function of an explicit [`Stream`]; the spike and
//! the noise draw from separate child lanes, so the `λ = 0` matrix is
//! bit-identical to the bare noise matrix of the same stream.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::spectral::Ratio;
use crate::stream::Stream;

/// Child lanes of a trial stream.
const LANE_U: u64 = 0;
const LANE_V: u64 = 1;
const LANE_NOISE: u64 = 2;

/// Custom i.i.d. prior: draws `dim` entries, expected to give `E‖u‖² = 1`.
pub type IidSampler = Arc<dyn Fn(&mut ChaCha8Rng, usize) -> Vec<f64> + Send + Sync>;

/// Distribution of a spike vector.
#[derive(Clone, Serialize, Deserialize)]
pub enum PriorKind {
    /// Uniform on the unit sphere (normalized Gaussian vector).
    Spherical,
    /// Entries `±1/√dim`.
    IidRademacher,
    /// User-supplied i.i.d. sampler; not serializable.
    #[serde(skip)]
    IidCustom(IidSampler),
}

impl fmt::Debug for PriorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriorKind::Spherical => f.write_str("Spherical"),
            PriorKind::IidRademacher => f.write_str("IidRademacher"),
            PriorKind::IidCustom(_) => f.write_str("IidCustom(..)"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    Additive,
    Multiplicative,
    /// Pure noise, `λ` ignored.
    Null,
}

/// Full description of a spiked rectangular ensemble.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub m: usize,
    pub n: usize,
    /// SNR `λ ≥ 0`.
    pub snr: f64,
    pub prior_u: PriorKind,
    /// Ignored by the multiplicative model.
    pub prior_v: PriorKind,
    pub noise: NoiseModel,
    pub seed: u64,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 || self.m > self.n {
            return Err(Error::Validation(format!(
                "need 1 <= M <= N, got M = {}, N = {}",
                self.m, self.n
            )));
        }
        if !self.snr.is_finite() || self.snr < 0.0 {
            return Err(Error::Validation(format!("snr {} must be >= 0", self.snr)));
        }
        Ok(())
    }

    pub fn ratio(&self) -> Result<Ratio> {
        Ratio::from_dims(self.m, self.n)
    }
}

/// A generated data matrix with its provenance.
#[derive(Clone, Debug)]
pub struct DataMatrix {
    pub values: Array2<f64>,
    pub spec: ModelSpec,
    /// The planted left spike (zeros for the null model).
    pub planted_u: Vec<f64>,
    /// The planted right spike; absent for the multiplicative and null models.
    pub planted_v: Option<Vec<f64>>,
}

impl DataMatrix {
    pub fn ratio(&self) -> Result<Ratio> {
        Ratio::from_dims(self.values.nrows(), self.values.ncols())
    }
}

/// Draw a unit-scale spike vector.
pub fn sample_prior(kind: &PriorKind, dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match kind {
        PriorKind::Spherical => {
            let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in &mut v {
                *x /= norm;
            }
            v
        }
        PriorKind::IidRademacher => {
            let scale = 1.0 / (dim as f64).sqrt();
            (0..dim)
                .map(|_| if rng.random::<bool>() { scale } else { -scale })
                .collect()
        }
        PriorKind::IidCustom(sampler) => sampler(rng, dim),
    }
}

/// An `M × N` matrix of i.i.d. entries `ξ/√N`, row-major draw order.
pub fn sample_noise(noise: &NoiseModel, m: usize, n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let scale = 1.0 / (n as f64).sqrt();
    let data: Vec<f64> = (0..m * n).map(|_| noise.sample(rng) * scale).collect();
    Array2::from_shape_vec((m, n), data).expect("shape matches data length")
}

/// `γ = √(1+λ) − 1`, so that `(1+γ)² = 1 + λ`.
pub fn gamma_of_lambda(lambda: f64) -> Result<f64> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::Domain(format!("snr {lambda} must be >= 0")));
    }
    // λ/(√(1+λ)+1) avoids cancellation for small λ.
    Ok(lambda / ((1.0 + lambda).sqrt() + 1.0))
}

/// Generate a matrix from a spec, dispatching on its kind.
pub fn generate(spec: &ModelSpec, stream: Stream) -> Result<DataMatrix> {
    match spec.kind {
        ModelKind::Additive => generate_additive(spec, stream),
        ModelKind::Multiplicative => generate_multiplicative(spec, stream),
        ModelKind::Null => {
            spec.validate()?;
            let x = sample_noise(&spec.noise, spec.m, spec.n, &mut noise_rng(stream));
            Ok(DataMatrix {
                values: x,
                spec: spec.clone(),
                planted_u: vec![0.0; spec.m],
                planted_v: None,
            })
        }
    }
}

/// RNG lane used for the noise entries; exposed so tests can reproduce the
/// bare noise matrix of a generated trial.
pub fn noise_rng(stream: Stream) -> ChaCha8Rng {
    stream.child(LANE_NOISE).rng()
}

/// `Y = √λ·u·vᵀ + X` with freshly sampled spikes.
pub fn generate_additive(spec: &ModelSpec, stream: Stream) -> Result<DataMatrix> {
    spec.validate()?;
    if spec.kind != ModelKind::Additive {
        return Err(Error::Validation(format!(
            "generate_additive on {:?} spec",
            spec.kind
        )));
    }
    let u = sample_prior(&spec.prior_u, spec.m, &mut stream.child(LANE_U).rng());
    build_additive(spec, u, stream)
}

/// Additive model with a fixed, caller-supplied left spike (normalized
/// here); the right spike and noise still come from the stream.
pub fn generate_additive_with_spike(
    spec: &ModelSpec,
    spike: &[f64],
    stream: Stream,
) -> Result<DataMatrix> {
    spec.validate()?;
    if spike.len() != spec.m {
        return Err(Error::Validation(format!(
            "spike length {} != M = {}",
            spike.len(),
            spec.m
        )));
    }
    let norm = spike.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::Validation("spike must be nonzero and finite".into()));
    }
    let u: Vec<f64> = spike.iter().map(|x| x / norm).collect();
    build_additive(spec, u, stream)
}

fn build_additive(spec: &ModelSpec, u: Vec<f64>, stream: Stream) -> Result<DataMatrix> {
    let v = sample_prior(&spec.prior_v, spec.n, &mut stream.child(LANE_V).rng());
    let mut y = sample_noise(&spec.noise, spec.m, spec.n, &mut noise_rng(stream));
    if spec.snr > 0.0 {
        let amp = spec.snr.sqrt();
        for i in 0..spec.m {
            let ui = amp * u[i];
            let mut row = y.row_mut(i);
            for j in 0..spec.n {
                row[j] += ui * v[j];
            }
        }
    }
    Ok(DataMatrix {
        values: y,
        spec: spec.clone(),
        planted_u: u,
        planted_v: Some(v),
    })
}

/// `Y = (I + γ·u·uᵀ)·X` with `γ = √(1+λ) − 1`.
pub fn generate_multiplicative(spec: &ModelSpec, stream: Stream) -> Result<DataMatrix> {
    spec.validate()?;
    if spec.kind != ModelKind::Multiplicative {
        return Err(Error::Validation(format!(
            "generate_multiplicative on {:?} spec",
            spec.kind
        )));
    }
    let gamma = gamma_of_lambda(spec.snr)?;
    let u = sample_prior(&spec.prior_u, spec.m, &mut stream.child(LANE_U).rng());
    let mut y = sample_noise(&spec.noise, spec.m, spec.n, &mut noise_rng(stream));
    if gamma > 0.0 {
        // w = uᵀX, then Y = X + γ·u·wᵀ, all in O(MN).
        let mut w = vec![0.0f64; spec.n];
        for i in 0..spec.m {
            let ui = u[i];
            let row = y.row(i);
            for j in 0..spec.n {
                w[j] += ui * row[j];
            }
        }
        for i in 0..spec.m {
            let gu = gamma * u[i];
            let mut row = y.row_mut(i);
            for j in 0..spec.n {
                row[j] += gu * w[j];
            }
        }
    }
    Ok(DataMatrix {
        values: y,
        spec: spec.clone(),
        planted_u: u,
        planted_v: None,
    })
}

/// Load a spike vector from a one-number-per-line text file, normalized.
pub fn load_spike<P: AsRef<Path>>(path: P) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let mut v = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let x: f64 = t.parse().map_err(|_| {
            Error::Validation(format!("spike file line {}: bad number {t:?}", idx + 1))
        })?;
        v.push(x);
    }
    if v.is_empty() {
        return Err(Error::Validation("spike file has no entries".into()));
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::Validation("spike must be nonzero and finite".into()));
    }
    for x in &mut v {
        *x /= norm;
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{bimodal_noise, gaussian_noise};
    use crate::spectral;

    fn spec(kind: ModelKind, m: usize, n: usize, snr: f64, noise: NoiseModel) -> ModelSpec {
        ModelSpec {
            kind,
            m,
            n,
            snr,
            prior_u: PriorKind::Spherical,
            prior_v: PriorKind::Spherical,
            noise,
            seed: 1,
        }
    }

    #[test]
    fn spherical_prior_unit_norm() {
        let mut rng = Stream::root(1).rng();
        let u = sample_prior(&PriorKind::Spherical, 100, &mut rng);
        let norm: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rademacher_prior_entries() {
        let mut rng = Stream::root(2).rng();
        let u = sample_prior(&PriorKind::IidRademacher, 4, &mut rng);
        assert!(u.iter().all(|&x| x == 0.5 || x == -0.5));
        assert_eq!(u.iter().map(|x| x * x).sum::<f64>(), 1.0);
    }

    #[test]
    fn custom_prior_is_used() {
        let sampler: IidSampler = Arc::new(|_, dim| vec![1.0 / (dim as f64).sqrt(); dim]);
        let mut rng = Stream::root(3).rng();
        let u = sample_prior(&PriorKind::IidCustom(sampler), 16, &mut rng);
        assert_eq!(u[0], 0.25);
    }

    #[test]
    fn spherical_prior_isotropy() {
        // E[u_i u_j] = δ_ij/dim within 5 standard errors over 1000 draws.
        let dim = 10_000usize;
        let draws = 1000usize;
        let root = Stream::root(42);
        let pairs = [(0usize, 0usize), (3, 3), (1, 7), (55, 999)];
        let mut acc = [0.0f64; 4];
        for t in 0..draws {
            let u = sample_prior(&PriorKind::Spherical, dim, &mut root.child(t as u64).rng());
            for (k, &(i, j)) in pairs.iter().enumerate() {
                acc[k] += u[i] * u[j];
            }
        }
        for (k, &(i, j)) in pairs.iter().enumerate() {
            let mean = acc[k] / draws as f64;
            if i == j {
                let se = (2.0f64).sqrt() / dim as f64 / (draws as f64).sqrt();
                assert!(
                    (mean - 1.0 / dim as f64).abs() < 5.0 * se,
                    "diag ({i},{j}): {mean}"
                );
            } else {
                let se = 1.0 / dim as f64 / (draws as f64).sqrt();
                assert!(mean.abs() < 5.0 * se, "offdiag ({i},{j}): {mean}");
            }
        }
    }

    #[test]
    fn noise_variance_normalization() {
        let mut rng = Stream::root(5).rng();
        let x = sample_noise(&gaussian_noise(), 256, 512, &mut rng);
        let mean_sq = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        assert!((512.0 * mean_sq - 1.0).abs() < 0.02);
    }

    #[test]
    fn noise_is_deterministic() {
        let s = Stream::root(9).child(4);
        let a = sample_noise(&bimodal_noise(), 20, 30, &mut s.rng());
        let b = sample_noise(&bimodal_noise(), 20, 30, &mut s.rng());
        assert_eq!(a, b);
    }

    #[test]
    fn null_snr_reduces_to_noise_bit_exact() {
        let stream = Stream::root(11).child(0);
        for kind in [ModelKind::Additive, ModelKind::Multiplicative] {
            let sp = spec(kind, 12, 24, 0.0, bimodal_noise());
            let y = generate(&sp, stream).unwrap();
            let x = sample_noise(&sp.noise, 12, 24, &mut noise_rng(stream));
            assert_eq!(y.values, x, "{kind:?}");
        }
    }

    #[test]
    fn additive_mean_is_rank_one() {
        let sp = spec(ModelKind::Additive, 10, 15, 2.0, gaussian_noise());
        let y = generate_additive(&sp, Stream::root(13).child(0)).unwrap();
        let u = &y.planted_u;
        let v = y.planted_v.as_ref().unwrap();
        let x = sample_noise(&sp.noise, 10, 15, &mut noise_rng(Stream::root(13).child(0)));
        let amp = 2.0f64.sqrt();
        for i in 0..10 {
            for j in 0..15 {
                let expect = x[(i, j)] + amp * u[i] * v[j];
                assert!((y.values[(i, j)] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma_of_lambda(0.0).unwrap(), 0.0);
        assert!((gamma_of_lambda(3.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((gamma_of_lambda(0.4945).unwrap() - 0.22249745).abs() < 1e-7);
        assert!(gamma_of_lambda(-0.1).is_err());
        for k in 0..50 {
            let lam = 0.1 * k as f64;
            let g = gamma_of_lambda(lam).unwrap();
            assert!((2.0 * g + g * g - lam).abs() < 1e-12, "lambda {lam}");
        }
    }

    #[test]
    fn multiplicative_square_root_identity() {
        // (I + γuuᵀ)(I + γuuᵀ) = I + λuuᵀ for unit u
        let mut rng = Stream::root(17).rng();
        let m = 40usize;
        let u = sample_prior(&PriorKind::Spherical, m, &mut rng);
        let lam = 0.9f64;
        let g = gamma_of_lambda(lam).unwrap();
        for i in 0..m {
            for j in 0..m {
                let e = if i == j { 1.0 } else { 0.0 };
                let sqr = e + 2.0 * g * u[i] * u[j]
                    + g * g * u[i] * u[j] * u.iter().map(|x| x * x).sum::<f64>();
                let target = e + lam * u[i] * u[j];
                assert!((sqr - target).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn multiplicative_column_covariance() {
        // Sample covariance of 10⁴ columns approximates I + λuuᵀ.
        let m = 24usize;
        let n = 10_000usize;
        let sp = spec(ModelKind::Multiplicative, m, n, 1.5, gaussian_noise());
        let y = generate_multiplicative(&sp, Stream::root(19).child(0)).unwrap();
        let mut diff = spectral::gram(&y.values);
        let u = &y.planted_u;
        for i in 0..m {
            for j in 0..m {
                let target = if i == j { 1.0 } else { 0.0 } + 1.5 * u[i] * u[j];
                diff[(i, j)] -= target;
            }
        }
        let ev = spectral::sym_eigenvalues(&diff).unwrap();
        let opnorm = ev
            .iter()
            .map(|v| v.abs())
            .fold(0.0f64, f64::max);
        assert!(opnorm < 0.2, "operator norm {opnorm}");
    }

    #[test]
    fn additive_bbp_smoke() {
        // Light-weight version of the BBP check: λ = 0.9, d = 0.5,
        // M = 96, 40 seeds. The full M = 512 version is in the
        // acceptance suite.
        let sp = spec(ModelKind::Additive, 96, 192, 0.9, gaussian_noise());
        let root = Stream::root(23);
        let mut mean = 0.0;
        for t in 0..40u64 {
            let y = generate_additive(&sp, root.child(t)).unwrap();
            let ev = spectral::sym_eigenvalues(&spectral::gram(&y.values)).unwrap();
            mean += ev[0];
        }
        mean /= 40.0;
        assert!((mean - 2.9555555555555557).abs() < 0.15, "mean {mean}");
    }

    #[test]
    fn spec_json_roundtrip() {
        let sp = spec(ModelKind::Additive, 8, 16, 0.3, bimodal_noise());
        let json = serde_json::to_string(&sp).unwrap();
        let back: ModelSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back.m, 8);
        assert_eq!(back.kind, ModelKind::Additive);
        assert_eq!(back.snr, 0.3);
    }

    #[test]
    fn load_spike_normalizes() {
        let dir = std::env::temp_dir().join("spiked_detect_models_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("spike.txt");
        std::fs::write(&path, "3.0\n0.0\n4.0\n").unwrap();
        let u = load_spike(&path).unwrap();
        assert!((u[0] - 0.6).abs() < 1e-15);
        assert!((u[2] - 0.8).abs() < 1e-15);
        std::fs::write(&path, "0.0\n0.0\n").unwrap();
        assert!(load_spike(&path).is_err());
    }

    #[test]
    fn rejects_wide_matrices() {
        let sp = spec(ModelKind::Additive, 30, 20, 0.5, gaussian_noise());
        assert!(generate(&sp, Stream::root(1)).is_err());
    }
}
