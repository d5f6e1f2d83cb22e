//! Optimal and stationary quantizers of centered Gaussian vectors with
//! independent coordinates N(0, λ_j): deterministic 1-D Lloyd fixed point,
//! randomized multi-dimensional Lloyd over a fixed Monte Carlo cloud, CLVQ,
//! exhaustive product quantizers, and Zador rate checks.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{linear_fit, std_normal_cdf, std_normal_pdf, std_normal_quantile, QuadratureRule};

/// Training method recorded in the codebook.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuantMethod {
    #[serde(rename = "lloyd1d")]
    Lloyd1d,
    #[serde(rename = "lloyd_md")]
    LloydMd,
    #[serde(rename = "clvq")]
    Clvq,
    #[serde(rename = "product")]
    Product,
}

/// A finite quantizer of ⊗_j N(0, λ_j): points, cell probabilities and a
/// distortion certificate.
///
/// Serializes to `{"d", "lambdas", "points", "weights", "distortion",
/// "method", "seed"}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Codebook {
    #[serde(rename = "d")]
    pub dimension: usize,
    pub lambdas: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// squared quadratic distortion E[min_k |Z - γ_k|²]
    pub distortion: f64,
    pub method: QuantMethod,
    pub seed: Option<u64>,
    /// independent certificate: quadrature re-evaluation in 1-D, held-out
    /// Monte Carlo in multi-D
    #[serde(skip)]
    pub distortion_check: Option<f64>,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Check the structural invariants: weights sum to 1, distinct points.
    pub fn validate(&self) -> Result<()> {
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Numerical(format!(
                "codebook weights sum to {total}, not 1"
            )));
        }
        for (i, p) in self.points.iter().enumerate() {
            if p.len() != self.dimension {
                return Err(Error::Domain(format!(
                    "point {i} has dimension {} != {}",
                    p.len(),
                    self.dimension
                )));
            }
            for q in &self.points[..i] {
                if p.iter().zip(q).all(|(a, b)| a == b) {
                    return Err(Error::Numerical(format!("duplicate codebook point {p:?}")));
                }
            }
        }
        Ok(())
    }
}

/// Nearest-neighbor projection index; ties broken by lowest index.
pub fn nearest_neighbor(codebook: &Codebook, y: &[f64]) -> Result<usize> {
    if y.len() != codebook.dimension {
        return Err(Error::Domain(format!(
            "query dimension {} != codebook dimension {}",
            y.len(),
            codebook.dimension
        )));
    }
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (k, p) in codebook.points.iter().enumerate() {
        let d: f64 = p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    Ok(best)
}

// Gaussian cell moments on [a, b] (closed form):
//   I0 = P(a < Z < b), I1 = ∫ z φ, I2 = ∫ z² φ
fn cell_moments(a: f64, b: f64) -> (f64, f64, f64) {
    let (cdf_a, pdf_a, apa) = if a.is_finite() {
        (std_normal_cdf(a), std_normal_pdf(a), a * std_normal_pdf(a))
    } else {
        (0.0, 0.0, 0.0)
    };
    let (cdf_b, pdf_b, bpb) = if b.is_finite() {
        (std_normal_cdf(b), std_normal_pdf(b), b * std_normal_pdf(b))
    } else {
        (1.0, 0.0, 0.0)
    };
    let i0 = cdf_b - cdf_a;
    let i1 = pdf_a - pdf_b;
    let i2 = apa - bpb + i0;
    (i0, i1, i2)
}

/// Deterministic 1-D optimal quantizer of N(0, λ) by Lloyd fixed-point
/// iteration with exact Gaussian cell moments; `quad_nodes` controls the
/// independent quadrature certificate stored in `distortion_check`.
///
/// Runs in standardized coordinates and rescales by √λ, so scale equivariance
/// is exact.
pub fn lloyd_1d(lambda: f64, n: usize, quad_nodes: usize) -> Result<Codebook> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
    }
    if n == 0 {
        return Err(Error::Domain("codebook size must be >= 1".into()));
    }
    // standardized points
    let mut gamma: Vec<f64> = (0..n)
        .map(|k| std_normal_quantile((k as f64 + 0.5) / n as f64))
        .collect::<Result<_>>()?;
    if n > 1 {
        let mut converged = false;
        for _ in 0..100_000 {
            let mut max_move = 0.0f64;
            let bounds = cell_bounds(&gamma);
            for k in 0..n {
                let (i0, i1, _) = cell_moments(bounds[k], bounds[k + 1]);
                if i0 <= 0.0 {
                    continue;
                }
                let new = i1 / i0;
                max_move = max_move.max((new - gamma[k]).abs());
                gamma[k] = new;
            }
            if max_move < 1e-13 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Convergence(format!(
                "lloyd_1d did not converge for N = {n}"
            )));
        }
    } else {
        gamma[0] = 0.0;
    }

    let bounds = cell_bounds(&gamma);
    let mut weights = vec![0.0; n];
    let mut distortion_std = 0.0;
    for k in 0..n {
        let (i0, i1, i2) = cell_moments(bounds[k], bounds[k + 1]);
        weights[k] = i0;
        distortion_std += i2 - 2.0 * gamma[k] * i1 + gamma[k] * gamma[k] * i0;
    }
    // quadrature certificate on truncated cells
    let quad_nodes = quad_nodes.max(8);
    let mut check = 0.0;
    for k in 0..n {
        let lo = bounds[k].max(-13.0);
        let hi = bounds[k + 1].min(13.0);
        if hi <= lo {
            continue;
        }
        let rule = QuadratureRule::gauss_legendre(quad_nodes, lo, hi)?;
        check += rule.integrate(|z| (z - gamma[k]) * (z - gamma[k]) * std_normal_pdf(z));
    }

    let sqrt_l = lambda.sqrt();
    Ok(Codebook {
        dimension: 1,
        lambdas: vec![lambda],
        points: gamma.iter().map(|g| vec![g * sqrt_l]).collect(),
        weights,
        distortion: lambda * distortion_std,
        method: QuantMethod::Lloyd1d,
        seed: None,
        distortion_check: Some(lambda * check),
    })
}

fn cell_bounds(gamma: &[f64]) -> Vec<f64> {
    let n = gamma.len();
    let mut b = Vec::with_capacity(n + 1);
    b.push(f64::NEG_INFINITY);
    for k in 0..n - 1 {
        b.push(0.5 * (gamma[k] + gamma[k + 1]));
    }
    b.push(f64::INFINITY);
    b
}

fn draw_cloud<R: Rng + ?Sized>(lambdas: &[f64], samples: usize, rng: &mut R) -> Vec<f64> {
    let d = lambdas.len();
    let scale: Vec<f64> = lambdas.iter().map(|l| l.sqrt()).collect();
    let mut cloud = Vec::with_capacity(samples * d);
    for _ in 0..samples {
        for s in &scale {
            let z: f64 = StandardNormal.sample(rng);
            cloud.push(s * z);
        }
    }
    cloud
}

fn assign_all(cloud: &[f64], d: usize, points: &[Vec<f64>], assign: &mut [usize]) -> f64 {
    let samples = cloud.len() / d;
    let mut total = 0.0;
    for s in 0..samples {
        let x = &cloud[s * d..(s + 1) * d];
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (k, p) in points.iter().enumerate() {
            let mut dist = 0.0;
            for j in 0..d {
                let diff = x[j] - p[j];
                dist += diff * diff;
            }
            if dist < best_d {
                best_d = dist;
                best = k;
            }
        }
        assign[s] = best;
        total += best_d;
    }
    total / samples as f64
}

fn kmeans_pp_init<R: Rng + ?Sized>(
    cloud: &[f64],
    d: usize,
    n: usize,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let samples = cloud.len() / d;
    let mut points: Vec<Vec<f64>> = Vec::with_capacity(n);
    let first = rng.random_range(0..samples);
    points.push(cloud[first * d..(first + 1) * d].to_vec());
    let mut dist2 = vec![f64::INFINITY; samples];
    while points.len() < n {
        let last = points.last().unwrap();
        let mut total = 0.0;
        for s in 0..samples {
            let x = &cloud[s * d..(s + 1) * d];
            let mut dd = 0.0;
            for j in 0..d {
                let diff = x[j] - last[j];
                dd += diff * diff;
            }
            if dd < dist2[s] {
                dist2[s] = dd;
            }
            total += dist2[s];
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = samples - 1;
        for s in 0..samples {
            target -= dist2[s];
            if target <= 0.0 {
                pick = s;
                break;
            }
        }
        points.push(cloud[pick * d..(pick + 1) * d].to_vec());
    }
    points
}

fn lloyd_on_cloud(
    cloud: &[f64],
    d: usize,
    mut points: Vec<Vec<f64>>,
    max_iters: usize,
) -> Result<(Vec<Vec<f64>>, Vec<f64>, f64)> {
    let samples = cloud.len() / d;
    let n = points.len();
    let mut assign = vec![0usize; samples];
    let mut prev = f64::INFINITY;
    for _ in 0..max_iters {
        let distortion = assign_all(cloud, d, &points, &mut assign);
        // centroid update with empty-cell repair
        let mut repairs = 0;
        loop {
            let mut counts = vec![0usize; n];
            let mut sums = vec![0.0f64; n * d];
            for s in 0..samples {
                let k = assign[s];
                counts[k] += 1;
                for j in 0..d {
                    sums[k * d + j] += cloud[s * d + j];
                }
            }
            if let Some(empty) = counts.iter().position(|&c| c == 0) {
                repairs += 1;
                if repairs > 100 {
                    return Err(Error::Convergence(
                        "empty-cell repair exceeded 100 attempts".into(),
                    ));
                }
                // reseed at the sample farthest from its assigned centroid
                let mut worst_s = 0;
                let mut worst_d = -1.0;
                for s in 0..samples {
                    let p = &points[assign[s]];
                    let x = &cloud[s * d..(s + 1) * d];
                    let mut dd = 0.0;
                    for j in 0..d {
                        let diff = x[j] - p[j];
                        dd += diff * diff;
                    }
                    if dd > worst_d {
                        worst_d = dd;
                        worst_s = s;
                    }
                }
                points[empty] = cloud[worst_s * d..(worst_s + 1) * d].to_vec();
                assign[worst_s] = empty;
                continue;
            }
            for k in 0..n {
                for j in 0..d {
                    points[k][j] = sums[k * d + j] / counts[k] as f64;
                }
            }
            break;
        }
        if prev.is_finite() && prev - distortion < 1e-9 * prev.max(1e-300) {
            break;
        }
        prev = distortion;
    }
    let distortion = assign_all(cloud, d, &points, &mut assign);
    let mut weights = vec![0.0; n];
    for &k in &assign {
        weights[k] += 1.0;
    }
    let inv = 1.0 / samples as f64;
    weights.iter_mut().for_each(|w| *w *= inv);
    Ok((points, weights, distortion))
}

/// Randomized Lloyd quantizer of ⊗_j N(0, λ_j) over a fixed Monte Carlo
/// cloud; k-means++ seeding, empty cells reseeded at the farthest sample.
pub fn lloyd_md<R: Rng + ?Sized>(
    lambdas: &[f64],
    n: usize,
    samples: usize,
    rng: &mut R,
) -> Result<Codebook> {
    check_lambdas(lambdas)?;
    if n == 0 {
        return Err(Error::Domain("codebook size must be >= 1".into()));
    }
    if samples < 10_000 * n {
        return Err(Error::Precondition(format!(
            "lloyd_md needs samples >= 1e4*N ({samples} < {})",
            10_000 * n
        )));
    }
    let d = lambdas.len();
    let cloud = draw_cloud(lambdas, samples, rng);
    let init = kmeans_pp_init(&cloud, d, n, rng);
    let (points, weights, distortion) = lloyd_on_cloud(&cloud, d, init, 50_000)?;
    // held-out certificate
    let held = draw_cloud(lambdas, (samples / 4).max(10_000), rng);
    let mut assign = vec![0usize; held.len() / d];
    let check = assign_all(&held, d, &points, &mut assign);
    Ok(Codebook {
        dimension: d,
        lambdas: lambdas.to_vec(),
        points,
        weights,
        distortion,
        method: QuantMethod::LloydMd,
        seed: None,
        distortion_check: Some(check),
    })
}

/// Best-of-`restarts` wrapper around [`lloyd_md`] (fresh cloud and seeding per
/// restart; lowest held-out-certified distortion wins).
pub fn lloyd_md_restarts<R: Rng + ?Sized>(
    lambdas: &[f64],
    n: usize,
    samples: usize,
    restarts: usize,
    rng: &mut R,
) -> Result<Codebook> {
    let mut best: Option<Codebook> = None;
    for _ in 0..restarts.max(1) {
        let cb = lloyd_md(lambdas, n, samples, rng)?;
        if best.as_ref().is_none_or(|b| cb.distortion < b.distortion) {
            best = Some(cb);
        }
    }
    Ok(best.unwrap())
}

/// Competitive-learning vector quantization: one-sample stochastic updates
/// with step `c/(c + k)`, polished by 5 Lloyd sweeps over a fresh cloud.
pub fn clvq<R: Rng + ?Sized>(
    lambdas: &[f64],
    n: usize,
    steps: usize,
    rng: &mut R,
) -> Result<Codebook> {
    check_lambdas(lambdas)?;
    if n == 0 {
        return Err(Error::Domain("codebook size must be >= 1".into()));
    }
    if steps < 100_000 {
        return Err(Error::Precondition(format!(
            "clvq needs steps >= 1e5, got {steps}"
        )));
    }
    let d = lambdas.len();
    let scale: Vec<f64> = lambdas.iter().map(|l| l.sqrt()).collect();
    let mut points: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            scale
                .iter()
                .map(|s| {
                    let z: f64 = StandardNormal.sample(rng);
                    s * z
                })
                .collect()
        })
        .collect();
    let c = 100.0;
    let mut x = vec![0.0; d];
    for k in 0..steps {
        for j in 0..d {
            let z: f64 = StandardNormal.sample(rng);
            x[j] = scale[j] * z;
        }
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, p) in points.iter().enumerate() {
            let mut dist = 0.0;
            for j in 0..d {
                let diff = x[j] - p[j];
                dist += diff * diff;
            }
            if dist < best_d {
                best_d = dist;
                best = i;
            }
        }
        let step = c / (c + k as f64);
        for j in 0..d {
            points[best][j] += step * (x[j] - points[best][j]);
        }
    }
    // 5 Lloyd polish sweeps on a fresh cloud, then weights/distortion from it
    let samples = (10_000 * n).max(100_000);
    let cloud = draw_cloud(lambdas, samples, rng);
    let (points, weights, distortion) = lloyd_on_cloud(&cloud, d, points, 5)?;
    let held = draw_cloud(lambdas, samples / 4, rng);
    let mut assign = vec![0usize; held.len() / d];
    let check = assign_all(&held, d, &points, &mut assign);
    Ok(Codebook {
        dimension: d,
        lambdas: lambdas.to_vec(),
        points,
        weights,
        distortion,
        method: QuantMethod::Clvq,
        seed: None,
        distortion_check: Some(check),
    })
}

fn check_lambdas(lambdas: &[f64]) -> Result<()> {
    if lambdas.is_empty() {
        return Err(Error::Domain("need at least one coordinate variance".into()));
    }
    if let Some(l) = lambdas.iter().find(|l| !(**l > 0.0)) {
        return Err(Error::Domain(format!("coordinate variance {l} must be positive")));
    }
    Ok(())
}

/// Optimal product quantizer: exhaustive search over factorizations
/// `Π N_j <= n_budget` scored with 1-D optimal distortions `λ_j E²_{N_j}`.
pub fn product_quantizer(lambdas: &[f64], n_budget: usize) -> Result<Codebook> {
    check_lambdas(lambdas)?;
    if n_budget == 0 {
        return Err(Error::Domain("product quantizer budget must be >= 1".into()));
    }
    let d = lambdas.len();
    // standardized 1-D distortions E^2_n(N(0,1)), 1-based
    let mut std_dist = vec![f64::NAN; n_budget + 1];
    let mut books: Vec<Option<Codebook>> = vec![None; n_budget + 1];
    for n in 1..=n_budget {
        let cb = lloyd_1d(1.0, n, 64)?;
        std_dist[n] = cb.distortion;
        books[n] = Some(cb);
    }

    let mut best_alloc: Option<Vec<usize>> = None;
    let mut best_score = f64::INFINITY;
    let mut alloc = vec![1usize; d];
    search_alloc(
        lambdas,
        &std_dist,
        n_budget,
        0,
        1,
        0.0,
        &mut alloc,
        &mut best_alloc,
        &mut best_score,
    );
    let alloc = best_alloc.expect("at least the all-ones allocation exists");

    // tensor the 1-D codebooks
    let mut points: Vec<Vec<f64>> = vec![vec![]];
    let mut weights = vec![1.0];
    for (j, &nj) in alloc.iter().enumerate() {
        let base = books[nj].as_ref().unwrap();
        let scale = lambdas[j].sqrt();
        let mut new_points = Vec::with_capacity(points.len() * nj);
        let mut new_weights = Vec::with_capacity(points.len() * nj);
        for (p, w) in points.iter().zip(&weights) {
            for (q, qw) in base.points.iter().zip(&base.weights) {
                let mut ext = p.clone();
                ext.push(scale * q[0]);
                new_points.push(ext);
                new_weights.push(w * qw);
            }
        }
        points = new_points;
        weights = new_weights;
    }
    Ok(Codebook {
        dimension: d,
        lambdas: lambdas.to_vec(),
        points,
        weights,
        distortion: best_score,
        method: QuantMethod::Product,
        seed: None,
        distortion_check: None,
    })
}

#[allow(clippy::too_many_arguments)]
fn search_alloc(
    lambdas: &[f64],
    std_dist: &[f64],
    budget: usize,
    j: usize,
    used: usize,
    acc: f64,
    alloc: &mut Vec<usize>,
    best_alloc: &mut Option<Vec<usize>>,
    best_score: &mut f64,
) {
    if j == lambdas.len() {
        if acc < *best_score {
            *best_score = acc;
            *best_alloc = Some(alloc.clone());
        }
        return;
    }
    let max_nj = budget / used;
    for nj in 1..=max_nj {
        alloc[j] = nj;
        let add = lambdas[j] * std_dist[nj];
        search_alloc(
            lambdas,
            std_dist,
            budget,
            j + 1,
            used * nj,
            acc + add,
            alloc,
            best_alloc,
            best_score,
        );
    }
    alloc[j] = 1;
}

/// Report of [`stationarity_residual`].
#[derive(Debug, Clone, Serialize)]
pub struct StationarityReport {
    /// `max_k |γ_k − mean(samples in cell k)|` over non-empty cells
    pub residual: f64,
    /// indices of cells that received no samples
    pub missing_cells: Vec<usize>,
    pub samples: usize,
}

/// Monte Carlo stationarity residual of a codebook under ⊗N(0, λ).
pub fn stationarity_residual<R: Rng + ?Sized>(
    codebook: &Codebook,
    samples: usize,
    rng: &mut R,
) -> Result<StationarityReport> {
    if samples < 100_000 {
        return Err(Error::Precondition(format!(
            "stationarity_residual needs samples >= 1e5, got {samples}"
        )));
    }
    let d = codebook.dimension;
    let n = codebook.len();
    let cloud = draw_cloud(&codebook.lambdas, samples, rng);
    let mut assign = vec![0usize; samples];
    assign_all(&cloud, d, &codebook.points, &mut assign);
    let mut counts = vec![0usize; n];
    let mut sums = vec![0.0f64; n * d];
    for s in 0..samples {
        let k = assign[s];
        counts[k] += 1;
        for j in 0..d {
            sums[k * d + j] += cloud[s * d + j];
        }
    }
    let mut residual = 0.0f64;
    let mut missing = Vec::new();
    for k in 0..n {
        if counts[k] == 0 {
            missing.push(k);
            continue;
        }
        let mut dist = 0.0;
        for j in 0..d {
            let mean = sums[k * d + j] / counts[k] as f64;
            let diff = codebook.points[k][j] - mean;
            dist += diff * diff;
        }
        residual = residual.max(dist.sqrt());
    }
    Ok(StationarityReport {
        residual,
        missing_cells: missing,
        samples,
    })
}

/// Zador 1-D constant `J̃_{r,1} = ½(r+1)^{-1/r}`.
pub fn zador_constant_1d(r: f64) -> f64 {
    0.5 * (r + 1.0).powf(-1.0 / r)
}

/// Zador 2-D quadratic constant as displayed in the source material,
/// `√(5/(18√2))`.
pub const ZADOR_J22: f64 = 0.4431913247454157;

/// Result of a Zador rate fit: `E_{N,r} ≈ constant · N^slope`.
#[derive(Debug, Clone, Serialize)]
pub struct RateCheck {
    pub slope: f64,
    pub slope_se: f64,
    pub constant: f64,
    /// the fitted (N, E_{N,r}) pairs
    pub errors: Vec<(usize, f64)>,
}

fn fit_rate(errors: &[(usize, f64)]) -> Result<RateCheck> {
    let ns: Vec<f64> = errors.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let es: Vec<f64> = errors.iter().map(|(_, e)| e.ln()).collect();
    let fit = linear_fit(&ns, &es)?;
    Ok(RateCheck {
        slope: fit.slope,
        slope_se: fit.slope_se,
        constant: fit.intercept.exp(),
        errors: errors.to_vec(),
    })
}

fn check_n_list(n_list: &[usize]) -> Result<()> {
    if n_list.len() < 2 {
        return Err(Error::Domain("rate check needs >= 2 codebook sizes".into()));
    }
    let min = *n_list.iter().min().unwrap();
    let max = *n_list.iter().max().unwrap();
    if min == 0 {
        return Err(Error::Domain("codebook sizes must be >= 1".into()));
    }
    if max < 10 * min {
        return Err(Error::Precondition(format!(
            "N list must span at least a decade ({min}..{max})"
        )));
    }
    Ok(())
}

/// Zador rate check against `lloyd_1d` quantizers of N(0, λ): fits
/// `log E_{N,r}` vs `log N`. For `r = 2` the distortion is the certified
/// quadratic one; other exponents are evaluated by per-cell quadrature.
pub fn zador_rate_check_gaussian(lambda: f64, r: f64, n_list: &[usize]) -> Result<RateCheck> {
    check_n_list(n_list)?;
    if r <= 0.0 {
        return Err(Error::Domain(format!("exponent must be positive, got {r}")));
    }
    let mut errors = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let cb = lloyd_1d(1.0, n, 64)?;
        let e = if (r - 2.0).abs() < 1e-12 {
            cb.distortion.sqrt()
        } else {
            let gamma: Vec<f64> = cb.points.iter().map(|p| p[0]).collect();
            let bounds = cell_bounds(&gamma);
            let mut err_r = 0.0;
            for k in 0..n {
                let lo = bounds[k].max(-13.0);
                let hi = bounds[k + 1].min(13.0);
                if hi <= lo {
                    continue;
                }
                let rule = QuadratureRule::composite_gauss_legendre(16, 8, lo, hi)?;
                err_r += rule.integrate(|z| (z - gamma[k]).abs().powf(r) * std_normal_pdf(z));
            }
            err_r.powf(1.0 / r)
        };
        errors.push((n, lambda.sqrt() * e));
    }
    fit_rate(&errors)
}

/// Closed-form Zador oracle for Uniform[0, 1]: `E_{N,r} = ½(r+1)^{-1/r}/N`.
pub fn zador_rate_check_uniform(r: f64, n_list: &[usize]) -> Result<RateCheck> {
    check_n_list(n_list)?;
    if r <= 0.0 {
        return Err(Error::Domain(format!("exponent must be positive, got {r}")));
    }
    let errors: Vec<(usize, f64)> = n_list
        .iter()
        .map(|&n| (n, zador_constant_1d(r) / n as f64))
        .collect();
    fit_rate(&errors)
}
