//! Noise distributions and their score machinery.
//!
//! A [`NoiseModel`] is a unit-variance symmetric density `g` together with
//! its score `h = −g′/g`, Fisher information `F_g = ∫ (g′)²/g`, and the
//! normalized moments `w₃`, `w₄` of the scaled entries. Models are either
//! analytic (standard Gaussian, the bimodal Gaussian ⊕ Rademacher mixture)
//! or estimated from data by a Gaussian-kernel KDE evaluated on a dense
//! grid. All moment functionals are quadratures over `[−R, R]` where `R`
//! is the smallest radius with `g(R) < 1e−12`, capped at 40.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::quad::adaptive_simpson;

const SQRT_2PI: f64 = 2.5066282746310002;
/// Half-separation of the bimodal mixture, √3/2.
const BIMODAL_MEAN: f64 = 0.8660254037844386;
/// Densities below this are treated as numerically zero; KDE scores are
/// extended linearly beyond the last point above it.
const DENSITY_FLOOR: f64 = 1e-12;
const RADIUS_CAP: f64 = 40.0;

/// An entrywise transform `f` with its derivative, as used by the
/// effective-SNR moment functionals.
pub trait Transform {
    fn eval(&self, x: f64) -> f64;
    fn deriv(&self, x: f64) -> f64;
}

/// The moments of a transform `f` under a noise density:
/// `m_f = E[f′(ξ)]`, `v_f = E[f(ξ)²]`, `e_f = E[ξ·f(ξ)]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformMoments {
    pub m: f64,
    pub v: f64,
    pub e: f64,
}

/// A unit-variance symmetric noise density with score and moments.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params")]
pub enum NoiseModel {
    /// Standard normal: `h(x) = x`, `F_g = 1`, `w₄ = 3`.
    Gaussian,
    /// `½·N(0,1) + (√3/2)·Rademacher`, the convolution used throughout the
    /// simulations: `g(x) = (e^{−2(x−√3/2)²} + e^{−2(x+√3/2)²})/√(2π)`.
    Bimodal,
    /// Gaussian-kernel estimate on a dense symmetric grid.
    Kde(KdeNoise),
}

/// Standard normal noise.
pub fn gaussian_noise() -> NoiseModel {
    NoiseModel::Gaussian
}

/// The bimodal Gaussian ⊕ Rademacher mixture (unit variance: ¼ + ¾ = 1).
pub fn bimodal_noise() -> NoiseModel {
    NoiseModel::Bimodal
}

impl NoiseModel {
    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            NoiseModel::Gaussian => (-0.5 * x * x).exp() / SQRT_2PI,
            NoiseModel::Bimodal => {
                let m = BIMODAL_MEAN;
                ((-2.0 * (x - m) * (x - m)).exp() + (-2.0 * (x + m) * (x + m)).exp()) / SQRT_2PI
            }
            NoiseModel::Kde(k) => k.pdf(x),
        }
    }

    pub fn pdf_deriv(&self, x: f64) -> f64 {
        match self {
            NoiseModel::Gaussian => -x * (-0.5 * x * x).exp() / SQRT_2PI,
            NoiseModel::Bimodal => {
                let m = BIMODAL_MEAN;
                (-4.0 * (x - m) * (-2.0 * (x - m) * (x - m)).exp()
                    - 4.0 * (x + m) * (-2.0 * (x + m) * (x + m)).exp())
                    / SQRT_2PI
            }
            NoiseModel::Kde(k) => k.pdf_deriv(x),
        }
    }

    /// Score `h(x) = −g′(x)/g(x)`, in closed form for the analytic models
    /// so the far tails stay finite.
    pub fn score(&self, x: f64) -> f64 {
        match self {
            NoiseModel::Gaussian => x,
            // h(x) = 4x − 2√3·tanh(2√3·x), algebraically −g′/g.
            NoiseModel::Bimodal => 4.0 * x - 2.0 * f64::sqrt(3.0) * (2.0 * f64::sqrt(3.0) * x).tanh(),
            NoiseModel::Kde(k) => k.score(x),
        }
    }

    /// Derivative `h′(x)` of the score.
    pub fn score_deriv(&self, x: f64) -> f64 {
        match self {
            NoiseModel::Gaussian => 1.0,
            NoiseModel::Bimodal => {
                let c = (2.0 * f64::sqrt(3.0) * x).cosh();
                4.0 - 12.0 / (c * c)
            }
            NoiseModel::Kde(k) => k.score_deriv(x),
        }
    }

    /// Fisher information `F_g`, exact for the Gaussian, cached quadrature
    /// for the bimodal model, stored at fit time for KDE models.
    pub fn fisher(&self) -> f64 {
        match self {
            NoiseModel::Gaussian => 1.0,
            NoiseModel::Bimodal => {
                static FISHER: OnceLock<f64> = OnceLock::new();
                *FISHER.get_or_init(|| {
                    fisher_information(&NoiseModel::Bimodal).expect("bimodal Fisher quadrature")
                })
            }
            NoiseModel::Kde(k) => k.fisher,
        }
    }

    /// Normalized third moment; zero for every symmetric density here.
    pub fn w3(&self) -> f64 {
        0.0
    }

    /// Normalized fourth moment `E[ξ⁴]`.
    pub fn w4(&self) -> f64 {
        match self {
            NoiseModel::Gaussian => 3.0,
            // E[(a+b)⁴] = 3/16 + 18/16 + 9/16 for a ~ N(0,¼), b = ±√3/2.
            NoiseModel::Bimodal => 1.875,
            NoiseModel::Kde(k) => k.w4,
        }
    }

    /// Quadrature truncation radius: smallest `R` with `g(R) < 1e−12`,
    /// capped at 40.
    pub fn support_radius(&self) -> f64 {
        match self {
            NoiseModel::Kde(k) => k.radius(),
            _ => support_radius(|x| self.pdf(x)),
        }
    }

    /// Whether the score at `x` comes from the clamped tail extension
    /// rather than the density itself. Always false for analytic models.
    pub fn score_clamped_at(&self, x: f64) -> bool {
        match self {
            NoiseModel::Kde(k) => x.abs() > k.reliable,
            _ => false,
        }
    }

    /// One draw from the density.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            NoiseModel::Gaussian => StandardNormal.sample(rng),
            NoiseModel::Bimodal => {
                let gauss: f64 = StandardNormal.sample(rng);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                0.5 * gauss + BIMODAL_MEAN * sign
            }
            NoiseModel::Kde(k) => k.sample(rng),
        }
    }
}

fn support_radius<F: Fn(f64) -> f64>(pdf: F) -> f64 {
    let mut x = 0.25f64;
    while x < RADIUS_CAP {
        if pdf(x) < DENSITY_FLOOR && pdf(x + 0.5) < DENSITY_FLOOR && pdf(x + 1.0) < DENSITY_FLOOR {
            return x;
        }
        x += 0.25;
    }
    RADIUS_CAP
}

/// `F_g = ∫ (g′)²/g` by adaptive quadrature (grid sum for KDE models,
/// whose density is itself a grid function).
pub fn fisher_information(model: &NoiseModel) -> Result<f64> {
    match model {
        NoiseModel::Kde(k) => Ok(k.fisher_on_grid()),
        _ => fisher_by_quadrature(
            |x| model.pdf(x),
            |x| model.pdf_deriv(x),
            model.support_radius(),
        ),
    }
}

pub(crate) fn fisher_by_quadrature<G, DG>(pdf: G, dpdf: DG, radius: f64) -> Result<f64>
where
    G: Fn(f64) -> f64,
    DG: Fn(f64) -> f64,
{
    adaptive_simpson(
        |x| {
            let g = pdf(x);
            if g <= 0.0 {
                return f64::NAN; // surfaces as a numerical error
            }
            let dg = dpdf(x);
            dg * dg / g
        },
        -radius,
        radius,
        1e-10,
    )
}

/// Quadrature values of `(m_f, v_f, e_f)` for a transform under a model.
pub fn transform_moments<F: Transform>(model: &NoiseModel, f: &F) -> Result<TransformMoments> {
    if let NoiseModel::Kde(k) = model {
        return Ok(k.moments_on_grid(f));
    }
    let r = model.support_radius();
    let m = adaptive_simpson(|x| f.deriv(x) * model.pdf(x), -r, r, 1e-10)?;
    let v = adaptive_simpson(
        |x| {
            let fx = f.eval(x);
            fx * fx * model.pdf(x)
        },
        -r,
        r,
        1e-10,
    )?;
    let e = adaptive_simpson(|x| x * f.eval(x) * model.pdf(x), -r, r, 1e-10)?;
    Ok(TransformMoments { m, v, e })
}

/// Normalized fourth-moment estimate `(1/MN) Σ (√N·Y_ij)⁴` from a data
/// matrix.
pub fn estimate_w4(y: &Array2<f64>) -> f64 {
    let n = y.ncols() as f64;
    let scale = n * n; // (√N)⁴
    let mean: f64 = y.iter().map(|v| v * v * v * v).sum::<f64>() / (y.len() as f64);
    scale * mean
}

// ---------------------------------------------------------------------------
// KDE
// ---------------------------------------------------------------------------

/// Gaussian-kernel density estimate, stored as `g`, `g′`, `g″`, and the
/// score on a dense symmetric grid. Queries interpolate linearly; beyond
/// the last grid point with `g ≥ 1e−12` the score continues linearly with
/// its boundary slope.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KdeNoise {
    x0: f64,
    step: f64,
    g: Vec<f64>,
    dg: Vec<f64>,
    h: Vec<f64>,
    hp: Vec<f64>,
    pub bandwidth: f64,
    pub fisher: f64,
    pub w4: f64,
    /// Largest |x| where the density is still above the floor.
    reliable: f64,
}

const KDE_GRID: usize = 8192;
const KDE_MIN_SAMPLES: usize = 1000;

/// Fit a Gaussian-kernel KDE to scaled noise samples.
///
/// Default bandwidth `n^{−1/5}`; with all `M·N` matrix entries as samples
/// this is the `(MN)^{−1/5}` choice. The estimate is symmetrized by
/// averaging `ĝ(x)` and `ĝ(−x)` so the score is odd.
pub fn kde_fit(samples: &[f64], bandwidth: Option<f64>) -> Result<NoiseModel> {
    if samples.len() < KDE_MIN_SAMPLES {
        return Err(Error::Validation(format!(
            "KDE needs at least {KDE_MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("KDE samples must be finite".into()));
    }
    let n = samples.len();
    let delta = match bandwidth {
        Some(b) if b > 0.0 => b,
        Some(b) => {
            return Err(Error::Validation(format!("bandwidth {b} must be positive")));
        }
        None => (n as f64).powf(-0.2),
    };

    let max_abs = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let radius = max_abs + 8.0 * delta;
    let step = 2.0 * radius / KDE_GRID as f64;
    let x0 = -radius + 0.5 * step;
    let grid_x = |j: usize| x0 + step * j as f64;

    // Bin the samples onto the grid; the bin width is far below the
    // bandwidth, so the binning error is negligible against the kernel
    // smoothing.
    let mut counts = vec![0.0f64; KDE_GRID];
    for &s in samples {
        let j = (((s - x0) / step).round() as isize).clamp(0, KDE_GRID as isize - 1) as usize;
        counts[j] += 1.0;
    }

    // Kernel sums for g, g', g'' at each grid point, over a ±8δ window.
    let window = (8.0 * delta / step).ceil() as isize;
    let norm = 1.0 / (n as f64 * delta * SQRT_2PI);
    let mut g = vec![0.0f64; KDE_GRID];
    let mut dg = vec![0.0f64; KDE_GRID];
    let mut ddg = vec![0.0f64; KDE_GRID];
    for (b, &c) in counts.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let center = grid_x(b);
        let lo = (b as isize - window).max(0) as usize;
        let hi = ((b as isize + window) as usize).min(KDE_GRID - 1);
        for j in lo..=hi {
            let u = (grid_x(j) - center) / delta;
            let k = (-0.5 * u * u).exp();
            g[j] += c * k;
            dg[j] += c * k * (-u) / delta;
            ddg[j] += c * k * (u * u - 1.0) / (delta * delta);
        }
    }
    for j in 0..KDE_GRID {
        g[j] *= norm;
        dg[j] *= norm;
        ddg[j] *= norm;
    }

    // Symmetrize: grid is mirror-symmetric (x_{B−1−j} = −x_j), so average
    // even parts and antisymmetrize g'.
    for j in 0..KDE_GRID / 2 {
        let k = KDE_GRID - 1 - j;
        let ge = 0.5 * (g[j] + g[k]);
        g[j] = ge;
        g[k] = ge;
        let go = 0.5 * (dg[j] - dg[k]);
        dg[j] = go;
        dg[k] = -go;
        let dde = 0.5 * (ddg[j] + ddg[k]);
        ddg[j] = dde;
        ddg[k] = dde;
    }

    // Reliable region: largest |x| with g above the floor.
    let mut last = KDE_GRID / 2;
    for j in KDE_GRID / 2..KDE_GRID {
        if g[j] >= DENSITY_FLOOR {
            last = j;
        }
    }
    let reliable = grid_x(last).abs();

    // Score and its derivative on the grid, clamped past the reliable
    // region by linear extension.
    let mut h = vec![0.0f64; KDE_GRID];
    let mut hp = vec![0.0f64; KDE_GRID];
    for j in 0..KDE_GRID {
        if g[j] >= DENSITY_FLOOR {
            h[j] = -dg[j] / g[j];
            hp[j] = -ddg[j] / g[j] + (dg[j] / g[j]) * (dg[j] / g[j]);
        }
    }
    let anchor_hi = last;
    let anchor_lo = KDE_GRID - 1 - last;
    let slope_hi = if anchor_hi > 0 && g[anchor_hi - 1] >= DENSITY_FLOOR {
        (h[anchor_hi] - h[anchor_hi - 1]) / step
    } else {
        0.0
    };
    for j in 0..KDE_GRID {
        if g[j] < DENSITY_FLOOR {
            if j > anchor_hi {
                h[j] = h[anchor_hi] + slope_hi * (grid_x(j) - grid_x(anchor_hi));
                hp[j] = slope_hi;
            } else if j < anchor_lo {
                h[j] = h[anchor_lo] - slope_hi * (grid_x(anchor_lo) - grid_x(j));
                hp[j] = slope_hi;
            }
        }
    }

    let mut kde = KdeNoise {
        x0,
        step,
        g,
        dg,
        h,
        hp,
        bandwidth: delta,
        fisher: 0.0,
        w4: 0.0,
        reliable,
    };
    kde.fisher = kde.fisher_on_grid();
    kde.w4 = kde.moment_on_grid(4);
    Ok(NoiseModel::Kde(kde))
}

impl KdeNoise {
    fn radius(&self) -> f64 {
        self.reliable.min(RADIUS_CAP)
    }

    fn interp(&self, arr: &[f64], x: f64) -> f64 {
        let t = (x - self.x0) / self.step;
        if t <= 0.0 {
            return arr[0];
        }
        let last = arr.len() - 1;
        if t >= last as f64 {
            return arr[last];
        }
        let j = t.floor() as usize;
        let frac = t - j as f64;
        arr[j] * (1.0 - frac) + arr[j + 1] * frac
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let edge = self.x0.abs() + 0.5 * self.step;
        if x.abs() >= edge {
            0.0
        } else {
            self.interp(&self.g, x).max(0.0)
        }
    }

    pub fn pdf_deriv(&self, x: f64) -> f64 {
        let edge = self.x0.abs() + 0.5 * self.step;
        if x.abs() >= edge {
            0.0
        } else {
            self.interp(&self.dg, x)
        }
    }

    pub fn score(&self, x: f64) -> f64 {
        if x.abs() <= self.reliable {
            self.interp(&self.h, x)
        } else {
            // Continue past the grid with the boundary value and slope.
            let hb = self.interp(&self.h, self.reliable.copysign(x));
            let slope = self.interp(&self.hp, self.reliable.copysign(x));
            hb + slope * (x - self.reliable.copysign(x))
        }
    }

    pub fn score_deriv(&self, x: f64) -> f64 {
        self.interp(&self.hp, x.clamp(-self.reliable, self.reliable))
    }

    fn fisher_on_grid(&self) -> f64 {
        let mut acc = 0.0;
        for j in 0..self.g.len() {
            if self.g[j] >= DENSITY_FLOOR {
                acc += self.dg[j] * self.dg[j] / self.g[j];
            }
        }
        acc * self.step
    }

    fn moment_on_grid(&self, p: i32) -> f64 {
        let mut acc = 0.0;
        for j in 0..self.g.len() {
            let x = self.x0 + self.step * j as f64;
            acc += x.powi(p) * self.g[j];
        }
        acc * self.step
    }

    fn moments_on_grid<F: Transform>(&self, f: &F) -> TransformMoments {
        let (mut m, mut v, mut e) = (0.0, 0.0, 0.0);
        for j in 0..self.g.len() {
            let x = self.x0 + self.step * j as f64;
            let w = self.g[j] * self.step;
            let fx = f.eval(x);
            m += f.deriv(x) * w;
            v += fx * fx * w;
            e += x * fx * w;
        }
        TransformMoments { m, v, e }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // Inverse-CDF on the grid.
        let total: f64 = self.g.iter().sum();
        let mut target = rng.random::<f64>() * total;
        for j in 0..self.g.len() {
            if target <= self.g[j] {
                let frac = if self.g[j] > 0.0 { target / self.g[j] } else { 0.5 };
                return self.x0 + self.step * (j as f64 + frac - 0.5);
            }
            target -= self.g[j];
        }
        self.x0 + self.step * (self.g.len() - 1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::Stream;

    /// Unit-variance Student-t(5): scale a standard t(5) by √(3/5).
    /// Analytic Fisher information 1.25 (= (ν+1)/(ν+3) / scale²).
    struct ScaledT5;
    impl ScaledT5 {
        const SCALE: f64 = 0.7745966692414834; // √(3/5)
        fn pdf(&self, x: f64) -> f64 {
            let u = x / Self::SCALE;
            // Γ(3)/(Γ(5/2)·√(5π)) = 0.3796066898224944
            0.3796066898224944 / Self::SCALE * (1.0 + u * u / 5.0).powi(-3)
        }
        fn dpdf(&self, x: f64) -> f64 {
            let u = x / Self::SCALE;
            0.3796066898224944 / (Self::SCALE * Self::SCALE)
                * (-6.0 / 5.0)
                * u
                * (1.0 + u * u / 5.0).powi(-4)
        }
    }

    fn quadrature_checks(model: &NoiseModel, tol: f64) {
        let r = model.support_radius();
        let mass = adaptive_simpson(|x| model.pdf(x), -r, r, 1e-10).unwrap();
        let mean = adaptive_simpson(|x| x * model.pdf(x), -r, r, 1e-10).unwrap();
        let var = adaptive_simpson(|x| x * x * model.pdf(x), -r, r, 1e-10).unwrap();
        assert!((mass - 1.0).abs() < tol, "mass {mass}");
        assert!(mean.abs() < tol, "mean {mean}");
        assert!((var - 1.0).abs() < tol, "variance {var}");
        for x in [0.3, 0.9, 1.7, 2.6] {
            assert!((model.pdf(x) - model.pdf(-x)).abs() < 1e-12, "symmetry at {x}");
        }
    }

    #[test]
    fn gaussian_basics() {
        let g = gaussian_noise();
        quadrature_checks(&g, 1e-6);
        assert_eq!(g.score(1.7), 1.7);
        assert_eq!(g.w4(), 3.0);
        assert!((fisher_information(&g).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn bimodal_basics() {
        let b = bimodal_noise();
        quadrature_checks(&b, 1e-6);
        let f = fisher_information(&b).unwrap();
        assert!((f - 2.50810).abs() < 1e-4, "F_g = {f}");
        // high-accuracy pin of the same quadrature guards regressions
        assert!((f - 2.5081851714).abs() < 1e-8, "F_g = {f}");
        assert_eq!(b.w4(), 1.875);
        let w4_quad = adaptive_simpson(|x| x.powi(4) * b.pdf(x), -12.0, 12.0, 1e-10).unwrap();
        assert!((w4_quad - 1.875).abs() < 1e-8);
    }

    #[test]
    fn bimodal_score_matches_density_ratio() {
        let b = bimodal_noise();
        for x in [-3.0, -1.2, -0.1, 0.0, 0.4, 1.0, 2.5, 4.0] {
            let direct = -b.pdf_deriv(x) / b.pdf(x);
            assert!((b.score(x) - direct).abs() < 1e-10, "x={x}");
            // finite-difference check of the closed-form derivative
            let eps = 1e-6;
            let fd = (b.score(x + eps) - b.score(x - eps)) / (2.0 * eps);
            assert!((b.score_deriv(x) - fd).abs() < 1e-5, "x={x}");
        }
    }

    #[test]
    fn fisher_student_t_two_routes() {
        let t = ScaledT5;
        let adaptive =
            fisher_by_quadrature(|x| t.pdf(x), |x| t.dpdf(x), RADIUS_CAP).unwrap();
        // independent high-resolution trapezoid oracle
        let n = 400_000usize;
        let (a, b) = (-RADIUS_CAP, RADIUS_CAP);
        let step = (b - a) / n as f64;
        let f = |x: f64| t.dpdf(x) * t.dpdf(x) / t.pdf(x);
        let mut trap = 0.5 * (f(a) + f(b));
        for k in 1..n {
            trap += f(a + step * k as f64);
        }
        trap *= step;
        assert!((adaptive - trap).abs() < 1e-6, "{adaptive} vs {trap}");
        assert!((adaptive - 1.25).abs() < 1e-6, "analytic value 1.25");
    }

    struct Affine(f64, f64); // a·x + b·h(x) against a fixed model
    struct ScoreOf<'a>(&'a NoiseModel, f64);
    impl Transform for ScoreOf<'_> {
        fn eval(&self, x: f64) -> f64 {
            self.0.score(x) + self.1 * x
        }
        fn deriv(&self, x: f64) -> f64 {
            self.0.score_deriv(x) + self.1
        }
    }
    impl Transform for Affine {
        fn eval(&self, x: f64) -> f64 {
            self.0 * x + self.1
        }
        fn deriv(&self, _: f64) -> f64 {
            self.0
        }
    }

    #[test]
    fn identity_transform_moments() {
        for model in [gaussian_noise(), bimodal_noise()] {
            let tm = transform_moments(&model, &Affine(1.0, 0.0)).unwrap();
            assert!((tm.m - 1.0).abs() < 1e-8);
            assert!((tm.v - 1.0).abs() < 1e-6);
            assert!((tm.e - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn score_transform_moments_are_fisher() {
        // m_h = F_g by parts (∫h′g = −∫h g′ = F_g), v_h = F_g, e_h = 1.
        for model in [gaussian_noise(), bimodal_noise()] {
            let fg = model.fisher();
            let tm = transform_moments(&model, &ScoreOf(&model, 0.0)).unwrap();
            assert!((tm.m - fg).abs() < 1e-6, "m {} vs F {}", tm.m, fg);
            assert!((tm.v - fg).abs() < 1e-6, "v {} vs F {}", tm.v, fg);
            assert!((tm.e - 1.0).abs() < 1e-6, "e {}", tm.e);
            // integration-by-parts oracle: m via −∫ h·g′ instead of ∫ h′·g
            let r = model.support_radius();
            let parts = adaptive_simpson(
                |x| -model.score(x) * model.pdf_deriv(x),
                -r,
                r,
                1e-10,
            )
            .unwrap();
            assert!((tm.m - parts).abs() < 1e-7, "{} vs parts {}", tm.m, parts);
        }
    }

    #[test]
    fn shifted_score_moment_identities() {
        // m = F_g + α, v = α² + 2α + F_g, e = 1 + α.
        let model = bimodal_noise();
        let fg = model.fisher();
        for alpha in [0.0, 0.5, 1.0, fg.sqrt()] {
            let tm = transform_moments(&model, &ScoreOf(&model, alpha)).unwrap();
            assert!((tm.m - (fg + alpha)).abs() < 1e-6);
            assert!((tm.v - (alpha * alpha + 2.0 * alpha + fg)).abs() < 1e-6);
            assert!((tm.e - (1.0 + alpha)).abs() < 1e-6);
        }
        // α = 1 example: (F+1, F+3, 2)
        let tm = transform_moments(&model, &ScoreOf(&model, 1.0)).unwrap();
        assert!((tm.m - (fg + 1.0)).abs() < 1e-6);
        assert!((tm.v - (fg + 3.0)).abs() < 1e-6);
        assert!((tm.e - 2.0).abs() < 1e-6);
    }

    #[test]
    fn estimate_w4_rademacher_exact() {
        // entries ±1/√N have (√N·Y)⁴ = 1 exactly (N a power of 4 keeps
        // 1/√N representable)
        let n = 16usize;
        let mut rng = Stream::root(3).rng();
        let y = Array2::from_shape_fn((8, n), |_| {
            let s: f64 = if rng.random::<bool>() { 1.0 } else { -1.0 };
            s / (n as f64).sqrt()
        });
        assert_eq!(estimate_w4(&y), 1.0);
    }

    #[test]
    fn estimate_w4_from_noise_draws() {
        let mut rng = Stream::root(11).rng();
        let n = 512usize;
        let scale = 1.0 / (n as f64).sqrt();
        let gauss = gaussian_noise();
        let y = Array2::from_shape_fn((256, n), |_| gauss.sample(&mut rng) * scale);
        assert!((estimate_w4(&y) - 3.0).abs() < 0.1);
        let bim = bimodal_noise();
        let yb = Array2::from_shape_fn((256, n), |_| bim.sample(&mut rng) * scale);
        assert!((estimate_w4(&yb) - 1.875).abs() < 0.05);
    }

    #[test]
    fn kde_too_few_samples() {
        assert!(matches!(
            kde_fit(&[0.0; 100], None),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn kde_symmetrized_score_is_odd() {
        let mut rng = Stream::root(21).rng();
        let model = bimodal_noise();
        let half: Vec<f64> = (0..5000).map(|_| model.sample(&mut rng)).collect();
        let mut all = half.clone();
        all.extend(half.iter().map(|v| -v));
        let fit = kde_fit(&all, None).unwrap();
        assert_eq!(fit.score(0.0), 0.0);
        for x in [0.3, 0.8, 1.5] {
            assert!((fit.score(x) + fit.score(-x)).abs() < 1e-9);
        }
    }

    #[test]
    fn kde_recovers_gaussian_score() {
        // At the default bandwidth n^{-1/5} the pointwise score noise near
        // |x| = 2 is ~0.1 (the estimate divides a noisy ĝ′ by a small ĝ),
        // so the sup bound is set above that floor. A sign or scaling bug
        // would miss by an order of magnitude.
        let mut rng = Stream::root(22).rng();
        let gauss = gaussian_noise();
        let samples: Vec<f64> = (0..1_000_000).map(|_| gauss.sample(&mut rng)).collect();
        let fit = kde_fit(&samples, None).unwrap();
        let sup = (0..=80)
            .map(|k| {
                let x = -2.0 + 0.05 * k as f64;
                (fit.score(x) - x).abs()
            })
            .fold(0.0f64, f64::max);
        assert!(sup < 0.2, "sup score error {sup}");
        let f = fisher_information(&fit).unwrap();
        assert!((f - 1.0).abs() < 0.1, "KDE Fisher {f}");
    }

    #[test]
    fn kde_recovers_bimodal_fisher() {
        let mut rng = Stream::root(23).rng();
        let model = bimodal_noise();
        let samples: Vec<f64> = (0..1_000_000).map(|_| model.sample(&mut rng)).collect();
        let fit = kde_fit(&samples, None).unwrap();
        let f = fisher_information(&fit).unwrap();
        assert!((2.3..=2.7).contains(&f), "KDE Fisher {f}");
        assert!((f - model.fisher()).abs() < 0.1 * model.fisher());
        assert!((fit.w4() - 1.875).abs() < 0.05, "KDE w4 {}", fit.w4());
    }

    #[test]
    fn kde_roundtrips_through_json() {
        let mut rng = Stream::root(24).rng();
        let model = bimodal_noise();
        let samples: Vec<f64> = (0..20_000).map(|_| model.sample(&mut rng)).collect();
        let fit = kde_fit(&samples, None).unwrap();
        let json = serde_json::to_string(&fit).unwrap();
        let back: NoiseModel = serde_json::from_str(&json).unwrap();
        for x in [-1.0, 0.2, 2.0] {
            assert_eq!(fit.score(x), back.score(x));
        }
        let g: NoiseModel = serde_json::from_str(r#"{"kind":"Gaussian"}"#).unwrap();
        assert_eq!(g.score(0.5), 0.5);
    }

    #[test]
    fn builtin_fisher_at_least_one() {
        for model in [gaussian_noise(), bimodal_noise()] {
            assert!(model.fisher() >= 1.0 - 1e-6);
        }
    }
}
