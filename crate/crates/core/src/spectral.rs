//! Dense symmetric linear algebra and the deterministic random-matrix
//! reference functions: Marchenko–Pastur law, its Stieltjes transform, and
//! the BBP outlier locations.
//!
//! The eigensolver is a Householder tridiagonalization followed by
//! implicit-shift QL, ported from the classic EISPACK/Numerical-Recipes
//! lineage. It is deterministic given the input bits, which keeps every
//! Monte Carlo statistic reproducible across runs and thread counts.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::adaptive_simpson;

const PI: f64 = std::f64::consts::PI;

/// Aspect ratio `d = M/N` of the data matrix, restricted to `(0, 1]`.
///
/// `M > N` is rejected at construction: the Marchenko–Pastur density used
/// throughout holds for `M ≤ N`, and the point mass at zero that appears
/// for `d > 1` is never treated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Ratio(f64);

impl Ratio {
    pub fn new(d: f64) -> Result<Ratio> {
        if d.is_finite() && d > 0.0 && d <= 1.0 {
            Ok(Ratio(d))
        } else {
            Err(Error::Domain(format!("ratio d = {d} outside (0, 1]")))
        }
    }

    /// Ratio of an `M × N` matrix, requiring `1 ≤ M ≤ N`.
    pub fn from_dims(m: usize, n: usize) -> Result<Ratio> {
        if m == 0 || n == 0 || m > n {
            return Err(Error::Validation(format!(
                "need 1 <= M <= N, got M = {m}, N = {n}"
            )));
        }
        Ratio::new(m as f64 / n as f64)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Ratio {
    type Error = Error;
    fn try_from(d: f64) -> Result<Ratio> {
        Ratio::new(d)
    }
}

impl From<Ratio> for f64 {
    fn from(r: Ratio) -> f64 {
        r.0
    }
}

/// Edges `(d₋, d₊) = ((1−√d)², (1+√d)²)` of the Marchenko–Pastur support.
pub fn mp_edges(d: Ratio) -> (f64, f64) {
    let s = d.value().sqrt();
    ((1.0 - s) * (1.0 - s), (1.0 + s) * (1.0 + s))
}

/// Marchenko–Pastur density `√((x−d₋)(d₊−x)) / (2π d x)` on `(d₋, d₊)`,
/// zero elsewhere.
pub fn mp_density(x: f64, d: Ratio) -> f64 {
    let (dm, dp) = mp_edges(d);
    if x <= dm || x >= dp {
        return 0.0;
    }
    ((x - dm) * (dp - x)).sqrt() / (2.0 * PI * d.value() * x)
}

/// Stieltjes transform `s(z) = ∫ dμ_MP(x)/(x−z)` for real `z` outside the
/// open bulk `(d₋, d₊)`.
///
/// Closed form `s(z) = ((1−d−z) ± √((1−d−z)² − 4dz)) / (2dz)`; the branch
/// is fixed by the decay `s(z) → −1/z` as `z → ∞` (plus sign to the right
/// of the bulk) and by continuity towards `s(0) = 1/(1−d)` on the left
/// (minus sign), which also keeps the self-consistency
/// `s = 1/(1−d−dzs−z)` satisfied.
pub fn stieltjes(z: f64, d: Ratio) -> Result<f64> {
    let dv = d.value();
    let (dm, dp) = mp_edges(d);
    if z > dm && z < dp {
        return Err(Error::Domain(format!(
            "z = {z} inside the spectral bulk [{dm}, {dp}]"
        )));
    }
    if z == 0.0 {
        // Only reachable for d < 1 (d = 1 makes 0 the lower edge).
        return Ok(1.0 / (1.0 - dv));
    }
    let b = 1.0 - dv - z;
    let disc = (z - dm) * (z - dp); // = b² − 4dz, but immune to cancellation
    let root = disc.max(0.0).sqrt();
    let signed = if z >= dp { root } else { -root };
    Ok((b + signed) / (2.0 * dv * z))
}

/// Almost-sure limit of the largest sample-covariance eigenvalue for a
/// spike of strength `lambda ≥ 0`: `(1+λ)(1+d/λ)` above the BBP threshold
/// `√d`, the bulk edge `d₊` below it. Continuous at the threshold.
pub fn bbp_outlier(lambda: f64, d: Ratio) -> f64 {
    let dv = d.value();
    if lambda > dv.sqrt() {
        (1.0 + lambda) * (1.0 + dv / lambda)
    } else {
        mp_edges(d).1
    }
}

/// `∫ f dμ_MP` by adaptive quadrature, to absolute tolerance below 1e−10.
///
/// The substitution `x = d₋ + (d₊−d₋)·sin²θ` removes the square-root edge
/// singularities, so the transformed integrand is smooth whenever `f` is.
pub fn mp_integral<F: Fn(f64) -> f64>(f: F, d: Ratio) -> Result<f64> {
    let dv = d.value();
    let (dm, dp) = mp_edges(d);
    let span = dp - dm;
    let integrand = |theta: f64| {
        let (sin, cos) = theta.sin_cos();
        let sin2 = sin * sin;
        let cos2 = cos * cos;
        let x = dm + span * sin2;
        if dm == 0.0 {
            // d = 1: sin²θ cancels against x = span·sin²θ exactly.
            f(x) * span * cos2 / (PI * dv)
        } else {
            f(x) * span * span * sin2 * cos2 / (PI * dv * x)
        }
    };
    adaptive_simpson(integrand, 0.0, PI / 2.0, 1e-12)
}

/// Sorted spectrum of an `M × M` sample covariance matrix together with its
/// Marchenko–Pastur context.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralSummary {
    /// Eigenvalues in descending order, all nonnegative up to roundoff.
    pub eigenvalues: Vec<f64>,
    pub d: Ratio,
    /// `(d₋, d₊)`.
    pub edges: (f64, f64),
}

impl SpectralSummary {
    /// Eigenvalues of `Y·Yᵀ` for an `M × N` data matrix `Y` with `M ≤ N`.
    pub fn from_data(y: &Array2<f64>) -> Result<SpectralSummary> {
        let d = Ratio::from_dims(y.nrows(), y.ncols())?;
        let s = gram(y);
        Ok(SpectralSummary {
            eigenvalues: sym_eigenvalues(&s)?,
            d,
            edges: mp_edges(d),
        })
    }

    pub fn largest(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }
}

/// `Y·Yᵀ`.
pub fn gram(y: &Array2<f64>) -> Array2<f64> {
    y.dot(&y.t())
}

/// Full real spectrum of a symmetric matrix, descending.
///
/// Rejects non-symmetric input (tolerance `1e-10·max|S_ij|`); reports the
/// iteration count if the QL sweep stalls.
pub fn sym_eigenvalues(s: &Array2<f64>) -> Result<Vec<f64>> {
    let mut a = check_symmetric(s)?;
    let n = s.nrows();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(&mut a, n, &mut d, &mut e, false);
    ql_implicit(&mut d, &mut e, n, None)?;
    d.sort_by(|x, y| y.partial_cmp(x).expect("eigenvalues are finite"));
    Ok(d)
}

/// Spectrum plus orthonormal eigenvectors (columns), both sorted by
/// descending eigenvalue.
pub fn sym_eigen(s: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let mut a = check_symmetric(s)?;
    let n = s.nrows();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(&mut a, n, &mut d, &mut e, true);
    ql_implicit(&mut d, &mut e, n, Some(&mut a))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].partial_cmp(&d[i]).expect("eigenvalues are finite"));
    let values: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let mut vectors = Array2::zeros((n, n));
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[(row, col)] = a[row * n + src];
        }
    }
    Ok((values, vectors))
}

fn check_symmetric(s: &Array2<f64>) -> Result<Vec<f64>> {
    let n = s.nrows();
    if n != s.ncols() {
        return Err(Error::Validation(format!(
            "matrix is {}x{}, not square",
            n,
            s.ncols()
        )));
    }
    let mut max_abs = 0.0f64;
    for &v in s.iter() {
        if !v.is_finite() {
            return Err(Error::Validation("matrix has non-finite entries".into()));
        }
        max_abs = max_abs.max(v.abs());
    }
    let tol = 1e-10 * max_abs;
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let dij = (s[(i, j)] - s[(j, i)]).abs();
            if dij > tol {
                return Err(Error::Validation(format!(
                    "matrix not symmetric: |S[{i},{j}] - S[{j},{i}]| = {dij} > {tol}"
                )));
            }
            // Symmetrize so both triangles agree to the last bit.
            a[i * n + j] = 0.5 * (s[(i, j)] + s[(j, i)]);
        }
    }
    Ok(a)
}

/// Householder reduction to tridiagonal form (EISPACK `tred2`).
///
/// On exit `d` holds the diagonal and `e[1..]` the subdiagonal. With
/// `vectors` the orthogonal transform accumulates in `a`; without it the
/// accumulation phase is skipped and `a` is scratch.
fn tridiagonalize(a: &mut [f64], n: usize, d: &mut [f64], e: &mut [f64], vectors: bool) {
    if n == 0 {
        return;
    }
    if n == 1 {
        d[0] = a[0];
        e[0] = 0.0;
        if vectors {
            a[0] = 1.0;
        }
        return;
    }
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if i > 1 {
            let mut scale = 0.0;
            for k in 0..=l {
                scale += a[i * n + k].abs();
            }
            if scale == 0.0 {
                e[i] = a[i * n + l];
            } else {
                for k in 0..=l {
                    a[i * n + k] /= scale;
                    h += a[i * n + k] * a[i * n + k];
                }
                let f = a[i * n + l];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                a[i * n + l] = f - g;
                let mut fsum = 0.0;
                for j in 0..=l {
                    if vectors {
                        a[j * n + i] = a[i * n + j] / h;
                    }
                    let mut g = 0.0;
                    for k in 0..=j {
                        g += a[j * n + k] * a[i * n + k];
                    }
                    for k in (j + 1)..=l {
                        g += a[k * n + j] * a[i * n + k];
                    }
                    e[j] = g / h;
                    fsum += e[j] * a[i * n + j];
                }
                let hh = fsum / (h + h);
                for j in 0..=l {
                    let fj = a[i * n + j];
                    let gj = e[j] - hh * fj;
                    e[j] = gj;
                    for k in 0..=j {
                        a[j * n + k] -= fj * e[k] + gj * a[i * n + k];
                    }
                }
            }
        } else {
            e[i] = a[i * n + l];
        }
        d[i] = h;
    }
    if vectors {
        d[0] = 0.0;
    }
    e[0] = 0.0;
    for i in 0..n {
        if vectors {
            if i > 0 && d[i] != 0.0 {
                for j in 0..i {
                    let mut g = 0.0;
                    for k in 0..i {
                        g += a[i * n + k] * a[k * n + j];
                    }
                    for k in 0..i {
                        a[k * n + j] -= g * a[k * n + i];
                    }
                }
            }
            d[i] = a[i * n + i];
            a[i * n + i] = 1.0;
            for j in 0..i {
                a[j * n + i] = 0.0;
                a[i * n + j] = 0.0;
            }
        } else {
            d[i] = a[i * n + i];
        }
    }
}

const QL_MAX_SWEEPS: usize = 50;

/// Implicit-shift QL on a tridiagonal matrix (EISPACK `tql2`/`tql1`).
///
/// Rotations are applied to the columns of `z` when present.
fn ql_implicit(d: &mut [f64], e: &mut [f64], n: usize, mut z: Option<&mut [f64]>) -> Result<()> {
    if n <= 1 {
        return Ok(());
    }
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut total_iters = 0usize;
    for l in 0..n {
        let mut iter = 0usize;
        loop {
            let mut m = l;
            while m < n - 1 {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            total_iters += 1;
            if iter > QL_MAX_SWEEPS {
                return Err(Error::NoConvergence {
                    iterations: total_iters,
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(zm) = z.as_deref_mut() {
                    for k in 0..n {
                        f = zm[k * n + i + 1];
                        zm[k * n + i + 1] = s * zm[k * n + i] + c * f;
                        zm[k * n + i] = c * zm[k * n + i] - s * f;
                    }
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}
