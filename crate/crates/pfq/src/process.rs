//! Gaussian process families: covariance kernels, quadratic variation, exact
//! path simulation, and the Ornstein-Uhlenbeck closed-form identities.
//!
//! Four families are supported. Brownian motion, the Brownian bridge and
//! Ornstein-Uhlenbeck processes are continuous semimartingales and admissible
//! as SDE drivers; fractional Brownian motion is quantization-only.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::QuadratureRule;

/// A Gaussian process family tag with its parameters.
///
/// Serializes to `{"family": str, "T": num, "theta"?, "sigma"?, "sigma0"?, "hurst"?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ProcessSpec {
    #[serde(rename = "bm")]
    BrownianMotion {
        #[serde(rename = "T")]
        t_max: f64,
    },
    #[serde(rename = "bb")]
    BrownianBridge {
        #[serde(rename = "T")]
        t_max: f64,
    },
    #[serde(rename = "ou")]
    OrnsteinUhlenbeck {
        #[serde(rename = "T")]
        t_max: f64,
        theta: f64,
        sigma: f64,
        sigma0: f64,
    },
    #[serde(rename = "fbm")]
    FractionalBrownianMotion {
        #[serde(rename = "T")]
        t_max: f64,
        hurst: f64,
    },
}

impl ProcessSpec {
    pub fn brownian_motion(t_max: f64) -> Result<Self> {
        let spec = ProcessSpec::BrownianMotion { t_max };
        spec.validate()?;
        Ok(spec)
    }

    pub fn brownian_bridge(t_max: f64) -> Result<Self> {
        let spec = ProcessSpec::BrownianBridge { t_max };
        spec.validate()?;
        Ok(spec)
    }

    pub fn ornstein_uhlenbeck(t_max: f64, theta: f64, sigma: f64, sigma0: f64) -> Result<Self> {
        let spec = ProcessSpec::OrnsteinUhlenbeck {
            t_max,
            theta,
            sigma,
            sigma0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn fractional_brownian_motion(t_max: f64, hurst: f64) -> Result<Self> {
        let spec = ProcessSpec::FractionalBrownianMotion { t_max, hurst };
        spec.validate()?;
        Ok(spec)
    }

    /// Check the parameter invariants (needed after deserializing).
    pub fn validate(&self) -> Result<()> {
        let t = self.t_max();
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("horizon T must be positive, got {t}")));
        }
        match *self {
            ProcessSpec::OrnsteinUhlenbeck {
                theta,
                sigma,
                sigma0,
                ..
            } => {
                if !(theta > 0.0 && sigma > 0.0 && sigma0 >= 0.0) {
                    return Err(Error::Domain(format!(
                        "OU needs theta > 0, sigma > 0, sigma0 >= 0; got ({theta}, {sigma}, {sigma0})"
                    )));
                }
            }
            ProcessSpec::FractionalBrownianMotion { hurst, .. } => {
                if !(hurst > 0.0 && hurst < 1.0) {
                    return Err(Error::Domain(format!(
                        "fBm needs hurst in (0,1), got {hurst}"
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn t_max(&self) -> f64 {
        match *self {
            ProcessSpec::BrownianMotion { t_max }
            | ProcessSpec::BrownianBridge { t_max }
            | ProcessSpec::OrnsteinUhlenbeck { t_max, .. }
            | ProcessSpec::FractionalBrownianMotion { t_max, .. } => t_max,
        }
    }

    /// Whether the family is a continuous semimartingale usable as an SDE driver.
    pub fn is_semimartingale(&self) -> bool {
        !matches!(self, ProcessSpec::FractionalBrownianMotion { .. })
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            ProcessSpec::BrownianMotion { .. } => "bm",
            ProcessSpec::BrownianBridge { .. } => "bb",
            ProcessSpec::OrnsteinUhlenbeck { .. } => "ou",
            ProcessSpec::FractionalBrownianMotion { .. } => "fbm",
        }
    }
}

/// Strictly increasing times in `[0, T]`, starting at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Domain("time grid needs at least 2 points".into()));
        }
        if points[0] != 0.0 {
            return Err(Error::Domain(format!(
                "time grid must start at 0, got {}",
                points[0]
            )));
        }
        for w in points.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Domain(format!(
                    "time grid not strictly increasing at {} -> {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(TimeGrid { points })
    }

    /// Uniform grid of `n` points from 0 to `t_end` inclusive.
    pub fn uniform(t_end: f64, n: usize) -> Result<Self> {
        if n < 2 || !(t_end > 0.0) {
            return Err(Error::Domain(format!(
                "uniform grid needs n >= 2 and t_end > 0, got ({n}, {t_end})"
            )));
        }
        let pts = (0..n)
            .map(|i| t_end * i as f64 / (n - 1) as f64)
            .collect();
        TimeGrid::new(pts)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn last(&self) -> f64 {
        *self.points.last().unwrap()
    }

    /// Check the grid stays inside the spec's horizon.
    pub fn check_within(&self, spec: &ProcessSpec) -> Result<()> {
        if self.last() > spec.t_max() + 1e-12 {
            return Err(Error::Domain(format!(
                "grid end {} exceeds horizon {}",
                self.last(),
                spec.t_max()
            )));
        }
        Ok(())
    }
}

/// A sampled trajectory on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessPath {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
}

impl ProcessPath {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Domain(format!(
                "path has {} values for {} grid points",
                values.len(),
                grid.len()
            )));
        }
        Ok(ProcessPath { grid, values })
    }
}

/// Covariance function Γ^X(s, t).
pub fn covariance(spec: &ProcessSpec, s: f64, t: f64) -> Result<f64> {
    let t_max = spec.t_max();
    if !(0.0..=t_max + 1e-12).contains(&s) || !(0.0..=t_max + 1e-12).contains(&t) {
        return Err(Error::Domain(format!(
            "covariance times ({s}, {t}) outside [0, {t_max}]"
        )));
    }
    Ok(covariance_unchecked(spec, s, t))
}

pub(crate) fn covariance_unchecked(spec: &ProcessSpec, s: f64, t: f64) -> f64 {
    match *spec {
        ProcessSpec::BrownianMotion { .. } => s.min(t),
        ProcessSpec::BrownianBridge { t_max } => s.min(t) - s * t / t_max,
        ProcessSpec::OrnsteinUhlenbeck {
            theta,
            sigma,
            sigma0,
            ..
        } => {
            let m = s.min(t);
            sigma * sigma / (2.0 * theta)
                * (-theta * (s + t)).exp()
                * ((2.0 * theta * m).exp() - 1.0)
                + sigma0 * sigma0 * (-theta * (s + t)).exp()
        }
        ProcessSpec::FractionalBrownianMotion { hurst, .. } => {
            let h2 = 2.0 * hurst;
            0.5 * (s.powf(h2) + t.powf(h2) - (s - t).abs().powf(h2))
        }
    }
}

/// Deterministic quadratic variation ⟨X⟩_t: `t` for BM/BB, `σ²t` for OU.
pub fn quadratic_variation(spec: &ProcessSpec, t: f64) -> Result<f64> {
    if !(0.0..=spec.t_max() + 1e-12).contains(&t) {
        return Err(Error::Domain(format!(
            "quadratic variation time {t} outside [0, {}]",
            spec.t_max()
        )));
    }
    match *spec {
        ProcessSpec::BrownianMotion { .. } | ProcessSpec::BrownianBridge { .. } => Ok(t),
        ProcessSpec::OrnsteinUhlenbeck { sigma, .. } => Ok(sigma * sigma * t),
        ProcessSpec::FractionalBrownianMotion { .. } => Err(Error::UnsupportedFamily(
            "fractional Brownian motion is not a semimartingale".into(),
        )),
    }
}

/// Exact path simulation on a grid.
///
/// BM, BB and OU use their exact Gaussian transition laws; fBm draws from the
/// full covariance matrix via a symmetric eigendecomposition with eigenvalue
/// clipping at −1e−12 relative.
pub fn sample_path<R: Rng + ?Sized>(
    spec: &ProcessSpec,
    grid: &TimeGrid,
    rng: &mut R,
) -> Result<ProcessPath> {
    grid.check_within(spec)?;
    let pts = grid.points();
    let n = pts.len();
    let mut values = vec![0.0; n];
    match *spec {
        ProcessSpec::BrownianMotion { .. } => {
            for i in 1..n {
                let dt = pts[i] - pts[i - 1];
                let z: f64 = StandardNormal.sample(rng);
                values[i] = values[i - 1] + dt.sqrt() * z;
            }
        }
        ProcessSpec::BrownianBridge { t_max } => {
            // exact bridge transitions pinned at (T, 0)
            for i in 1..n {
                let (t0, t1) = (pts[i - 1], pts[i]);
                let rem0 = t_max - t0;
                let rem1 = t_max - t1;
                let mean = if rem0 > 0.0 {
                    values[i - 1] * rem1 / rem0
                } else {
                    0.0
                };
                let var = if rem0 > 0.0 {
                    (t1 - t0) * rem1 / rem0
                } else {
                    0.0
                };
                let z: f64 = StandardNormal.sample(rng);
                values[i] = mean + var.max(0.0).sqrt() * z;
            }
        }
        ProcessSpec::OrnsteinUhlenbeck {
            theta,
            sigma,
            sigma0,
            ..
        } => {
            let z0: f64 = StandardNormal.sample(rng);
            values[0] = sigma0 * z0;
            for i in 1..n {
                let dt = pts[i] - pts[i - 1];
                let decay = (-theta * dt).exp();
                let var = sigma * sigma * (1.0 - (-2.0 * theta * dt).exp()) / (2.0 * theta);
                let z: f64 = StandardNormal.sample(rng);
                values[i] = decay * values[i - 1] + var.sqrt() * z;
            }
        }
        ProcessSpec::FractionalBrownianMotion { .. } => {
            let factor = fbm_factor(spec, grid)?;
            let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
            for (i, v) in values.iter_mut().enumerate() {
                *v = (0..n).map(|j| factor[(i, j)] * z[j]).sum();
            }
        }
    }
    ProcessPath::new(grid.clone(), values)
}

/// Square root of the fBm covariance matrix on the grid (V·√Λ with clipped
/// eigenvalues). Cached by callers that draw many paths on one grid.
pub fn fbm_factor(spec: &ProcessSpec, grid: &TimeGrid) -> Result<DMatrix<f64>> {
    let pts = grid.points();
    let n = pts.len();
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let c = covariance_unchecked(spec, pts[i], pts[j]);
            cov[(i, j)] = c;
            cov[(j, i)] = c;
        }
    }
    let eig = cov.symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
    let tol = 1e-12 * max_ev.max(1e-300);
    let mut factor = eig.eigenvectors;
    for (j, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev < -tol {
            return Err(Error::Numerical(format!(
                "covariance factorization residual: eigenvalue {ev:.3e} below -{tol:.3e}"
            )));
        }
        let s = ev.max(0.0).sqrt();
        for i in 0..n {
            factor[(i, j)] *= s;
        }
    }
    Ok(factor)
}

/// Draw an fBm path reusing a precomputed factor from [`fbm_factor`].
pub fn sample_fbm_with_factor<R: Rng + ?Sized>(
    factor: &DMatrix<f64>,
    grid: &TimeGrid,
    rng: &mut R,
) -> Result<ProcessPath> {
    let n = grid.len();
    let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let values: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| factor[(i, j)] * z[j]).sum())
        .collect();
    ProcessPath::new(grid.clone(), values)
}

/// Closed form of the OU double integral `∫₀ᵀ∫₀ᵀ (Γ^{OU}(s,t))² ds dt` for the
/// process started at 0:
/// `(σ⁴/(16θ⁴)) (−5 + 4θT + 8θT e^{−2θT} + 4 e^{−2θT} + e^{−4θT})`.
pub fn ou_sq_covariance_integral(theta: f64, sigma: f64, t_max: f64) -> Result<f64> {
    if !(theta > 0.0 && sigma > 0.0 && t_max > 0.0) {
        return Err(Error::Domain(format!(
            "ou_sq_covariance_integral needs positive (theta, sigma, T), got ({theta}, {sigma}, {t_max})"
        )));
    }
    let a = theta * t_max;
    let e2 = (-2.0 * a).exp();
    let e4 = (-4.0 * a).exp();
    Ok(sigma.powi(4) / (16.0 * theta.powi(4)) * (-5.0 + 4.0 * a + 8.0 * a * e2 + 4.0 * e2 + e4))
}

/// `φ(θ) = ∫∫ (Γ^{OU})² − σ⁴/θ⁴`; negative whenever `θT < 4/3`.
pub fn phi_theta(theta: f64, sigma: f64, t_max: f64) -> Result<f64> {
    Ok(ou_sq_covariance_integral(theta, sigma, t_max)? - sigma.powi(4) / theta.powi(4))
}

/// Norm-equivalence constants `(c, C)` with `c‖f‖₂ ≤ ‖f‖_J ≤ C‖f‖₂` for the
/// OU Wiener integral: `C² = 2θ²Tσ₀² + 4σ²`, `c² = (1−√K)²σ²` with
/// `K = (θ²/σ²)·sqrt(∫∫(Γ^{X⁰})²)`.
pub fn ou_norm_equivalence_constants(
    theta: f64,
    sigma: f64,
    sigma0: f64,
    t_max: f64,
) -> Result<(f64, f64)> {
    if !(theta > 0.0 && sigma > 0.0 && sigma0 >= 0.0 && t_max > 0.0) {
        return Err(Error::Domain(
            "ou_norm_equivalence_constants needs theta > 0, sigma > 0, sigma0 >= 0, T > 0".into(),
        ));
    }
    if theta * t_max > 4.0 / 3.0 {
        return Err(Error::Precondition(format!(
            "theta*T = {} > 4/3: K < 1 not guaranteed",
            theta * t_max
        )));
    }
    let big_c = (2.0 * theta * theta * t_max * sigma0 * sigma0 + 4.0 * sigma * sigma).sqrt();
    let k = theta * theta / (sigma * sigma) * ou_sq_covariance_integral(theta, sigma, t_max)?.sqrt();
    if k >= 1.0 {
        return Err(Error::Numerical(format!("K = {k} >= 1 despite theta*T <= 4/3")));
    }
    let c = (1.0 - k.sqrt()) * sigma;
    Ok((c, big_c))
}

/// 2-D tensor Gauss-Legendre quadrature of `(Γ^X)²` over `[0,T]²` — the
/// independent oracle for [`ou_sq_covariance_integral`].
pub fn sq_covariance_quadrature(spec: &ProcessSpec, nodes: usize) -> Result<f64> {
    let rule = QuadratureRule::gauss_legendre(nodes, 0.0, spec.t_max())?;
    let mut total = 0.0;
    for (&s, &ws) in rule.nodes.iter().zip(&rule.weights) {
        for (&t, &wt) in rule.nodes.iter().zip(&rule.weights) {
            let g = covariance_unchecked(spec, s, t);
            total += ws * wt * g * g;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    #[test]
    fn bm_covariance_is_min() {
        let spec = ProcessSpec::brownian_motion(1.0).unwrap();
        assert_abs_diff_eq!(covariance(&spec, 0.3, 0.7).unwrap(), 0.3, epsilon = 1e-15);
    }

    #[test]
    fn ou_covariance_frozen_value() {
        let spec = ProcessSpec::ornstein_uhlenbeck(1.0, 1.0, 1.0, 0.0).unwrap();
        // (1 - e^{-2})/2
        assert_abs_diff_eq!(
            covariance(&spec, 1.0, 1.0).unwrap(),
            0.43233235838169365,
            epsilon = 1e-12
        );
    }

    #[test]
    fn bb_covariance_matches_conditional_oracle() {
        // oracle: min(s,t) - s t / T, conditional covariance of BM given W_T = 0
        let spec = ProcessSpec::brownian_bridge(1.0).unwrap();
        assert_abs_diff_eq!(covariance(&spec, 0.5, 0.5).unwrap(), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn covariance_rejects_out_of_range_times() {
        let spec = ProcessSpec::brownian_motion(1.0).unwrap();
        assert!(covariance(&spec, -0.1, 0.5).is_err());
        assert!(covariance(&spec, 0.5, 1.5).is_err());
    }

    #[test]
    fn covariance_symmetry_all_families() {
        let specs = [
            ProcessSpec::brownian_motion(2.0).unwrap(),
            ProcessSpec::brownian_bridge(2.0).unwrap(),
            ProcessSpec::ornstein_uhlenbeck(2.0, 0.5, 1.3, 0.4).unwrap(),
            ProcessSpec::fractional_brownian_motion(2.0, 0.25).unwrap(),
        ];
        let mut r = rng(1);
        for spec in &specs {
            for _ in 0..1000 {
                let s = 2.0 * r.random::<f64>();
                let t = 2.0 * r.random::<f64>();
                let a = covariance(spec, s, t).unwrap();
                let b = covariance(spec, t, s).unwrap();
                assert_eq!(a, b, "asymmetry for {spec:?} at ({s}, {t})");
            }
        }
    }

    #[test]
    fn covariance_positive_semidefinite_on_grids() {
        let specs = [
            ProcessSpec::brownian_motion(1.0).unwrap(),
            ProcessSpec::brownian_bridge(1.0).unwrap(),
            ProcessSpec::ornstein_uhlenbeck(1.0, 1.0, 1.0, 0.5).unwrap(),
            ProcessSpec::fractional_brownian_motion(1.0, 0.25).unwrap(),
            ProcessSpec::fractional_brownian_motion(1.0, 0.75).unwrap(),
        ];
        for spec in &specs {
            let grid = TimeGrid::uniform(1.0, 50).unwrap();
            let pts = grid.points();
            let n = pts.len();
            let mut cov = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    cov[(i, j)] = covariance_unchecked(spec, pts[i], pts[j]);
                }
            }
            let eig = cov.symmetric_eigen();
            let max = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
            let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b));
            assert!(
                min >= -1e-10 * max,
                "PSD violated for {spec:?}: min {min:.3e}, max {max:.3e}"
            );
        }
    }

    #[test]
    fn quadratic_variation_values() {
        let bm = ProcessSpec::brownian_motion(1.0).unwrap();
        assert_abs_diff_eq!(quadratic_variation(&bm, 0.5).unwrap(), 0.5);
        let ou = ProcessSpec::ornstein_uhlenbeck(1.0, 1.0, 2.0, 0.0).unwrap();
        assert_abs_diff_eq!(quadratic_variation(&ou, 1.0).unwrap(), 4.0);
        let fbm = ProcessSpec::fractional_brownian_motion(1.0, 0.25).unwrap();
        assert!(matches!(
            quadratic_variation(&fbm, 0.5),
            Err(Error::UnsupportedFamily(_))
        ));
    }

    #[test]
    fn bm_starts_at_zero() {
        let spec = ProcessSpec::brownian_motion(1.0).unwrap();
        let grid = TimeGrid::new(vec![0.0, 1.0]).unwrap();
        let path = sample_path(&spec, &grid, &mut rng(7)).unwrap();
        assert_eq!(path.values[0], 0.0);
    }

    #[test]
    fn bridge_pinned_at_horizon() {
        let spec = ProcessSpec::brownian_bridge(1.0).unwrap();
        let grid = TimeGrid::uniform(1.0, 11).unwrap();
        let mut r = rng(2);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let p = sample_path(&spec, &grid, &mut r).unwrap();
            let v = *p.values.last().unwrap();
            sum += v;
            sumsq += v * v;
        }
        let var = sumsq / n as f64 - (sum / n as f64).powi(2);
        // pinned: variance 0 up to floating error
        assert!(var.abs() < 1e-20, "bridge terminal variance {var:.3e}");
    }

    #[test]
    fn ou_empirical_variance_matches_covariance() {
        let spec = ProcessSpec::ornstein_uhlenbeck(1.0, 1.0, 1.0, 0.0).unwrap();
        let grid = TimeGrid::uniform(1.0, 9).unwrap();
        let mut r = rng(3);
        let n = 100_000usize;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let p = sample_path(&spec, &grid, &mut r).unwrap();
            let v = *p.values.last().unwrap();
            sumsq += v * v;
        }
        let var = sumsq / n as f64;
        let target = 0.43233235838169365;
        // Var of the variance estimator: 2 sigma^4 / n
        let se = (2.0 * target * target / n as f64).sqrt();
        assert!(
            (var - target).abs() <= 4.0 * se,
            "empirical {var} vs {target} (4se = {:.3e})",
            4.0 * se
        );
    }

    #[test]
    fn empirical_covariance_matches_kernel_all_families() {
        // 10-point grid, 2e5 paths, entrywise within 5 SE
        let specs = [
            ProcessSpec::brownian_motion(1.0).unwrap(),
            ProcessSpec::brownian_bridge(1.0).unwrap(),
            ProcessSpec::ornstein_uhlenbeck(1.0, 1.0, 1.0, 0.3).unwrap(),
            ProcessSpec::fractional_brownian_motion(1.0, 0.25).unwrap(),
        ];
        let grid = TimeGrid::uniform(1.0, 10).unwrap();
        let pts = grid.points().to_vec();
        let n_paths = 200_000usize;
        for (si, spec) in specs.iter().enumerate() {
            let mut r = rng(100 + si as u64);
            let k = pts.len();
            let mut acc = vec![0.0f64; k * k];
            let mut acc2 = vec![0.0f64; k * k];
            if let ProcessSpec::FractionalBrownianMotion { .. } = spec {
                let factor = fbm_factor(spec, &grid).unwrap();
                for _ in 0..n_paths {
                    let p = sample_fbm_with_factor(&factor, &grid, &mut r).unwrap();
                    accumulate(&p.values, &mut acc, &mut acc2);
                }
            } else {
                for _ in 0..n_paths {
                    let p = sample_path(spec, &grid, &mut r).unwrap();
                    accumulate(&p.values, &mut acc, &mut acc2);
                }
            }
            for i in 0..k {
                for j in 0..k {
                    let mean = acc[i * k + j] / n_paths as f64;
                    let var =
                        acc2[i * k + j] / n_paths as f64 - mean * mean;
                    let se = (var / n_paths as f64).sqrt().max(1e-12);
                    let target = covariance(spec, pts[i], pts[j]).unwrap();
                    assert!(
                        (mean - target).abs() <= 5.0 * se,
                        "{} cov({},{}) = {mean} vs {target}, se {se:.2e}",
                        spec.family_name(),
                        pts[i],
                        pts[j]
                    );
                }
            }
        }
    }

    fn accumulate(values: &[f64], acc: &mut [f64], acc2: &mut [f64]) {
        let k = values.len();
        for i in 0..k {
            for j in 0..k {
                let prod = values[i] * values[j];
                acc[i * k + j] += prod;
                acc2[i * k + j] += prod * prod;
            }
        }
    }

    #[test]
    fn ou_sq_integral_matches_quadrature_oracle() {
        for &(theta, sigma) in &[(1.0, 1.0), (0.5, 2.0), (1.2, 0.7)] {
            let spec = ProcessSpec::ornstein_uhlenbeck(1.0, theta, sigma, 0.0).unwrap();
            let closed = ou_sq_covariance_integral(theta, sigma, 1.0).unwrap();
            let quad = sq_covariance_quadrature(&spec, 200).unwrap();
            assert_abs_diff_eq!(closed, quad, epsilon = 1e-8);
        }
    }

    #[test]
    fn ou_sq_integral_vanishes_as_theta_t_shrinks() {
        let mut prev = f64::INFINITY;
        for &t in &[1e-1, 1e-2, 1e-3, 1e-4] {
            let v = ou_sq_covariance_integral(1.0, 1.0, t).unwrap();
            assert!(v < prev && v > 0.0);
            prev = v;
        }
        assert!(prev < 1e-8);
    }

    #[test]
    fn phi_theta_negative_below_four_thirds() {
        assert!(phi_theta(1.0, 1.0, 1.0).unwrap() < 0.0);
        assert!(phi_theta(1.0, 1.0, 1.3).unwrap() < 0.0);
        // definition identity
        let phi = phi_theta(1.0, 1.0, 1.0).unwrap();
        let int = ou_sq_covariance_integral(1.0, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(phi, int - 1.0, epsilon = 1e-12);
    }

    #[test]
    fn phi_negative_on_log_spaced_grid() {
        // 50 (theta, T) pairs with theta*T in (0, 4/3)
        for i in 0..50 {
            let u = (i as f64 + 0.5) / 50.0;
            let theta = 10f64.powf(-1.0 + 2.0 * u); // 0.1 .. 10
            let a = 4.0 / 3.0 * 10f64.powf(-3.0 * (1.0 - u)); // theta*T spread over decades
            let t = a / theta;
            assert!(
                phi_theta(theta, 1.0, t).unwrap() < 0.0,
                "phi >= 0 at theta={theta}, T={t}"
            );
        }
    }

    #[test]
    fn ou_norm_constants_basic() {
        let (c, big_c) = ou_norm_equivalence_constants(1.0, 1.0, 0.0, 1.0).unwrap();
        assert!(c > 0.0 && c <= big_c);
        // sigma0 = 0 gives C^2 = 4 sigma^2
        assert_abs_diff_eq!(big_c, 2.0, epsilon = 1e-12);
        assert!(ou_norm_equivalence_constants(2.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn ou_norm_lower_bound_for_indicator() {
        // f = 1_{[0,T]}: ||f||_J^2 = Var(X_T - X_0) from the covariance formula
        let (theta, sigma, sigma0, t_max) = (1.0, 1.0, 0.5, 1.0);
        let (c, big_c) = ou_norm_equivalence_constants(theta, sigma, sigma0, t_max).unwrap();
        let spec = ProcessSpec::ornstein_uhlenbeck(t_max, theta, sigma, sigma0).unwrap();
        let var = covariance(&spec, t_max, t_max).unwrap()
            - 2.0 * covariance(&spec, 0.0, t_max).unwrap()
            + covariance(&spec, 0.0, 0.0).unwrap();
        let l2 = t_max; // ||1||_2^2
        assert!(c * c * l2 <= var + 1e-12, "c^2 T = {} > {var}", c * c * l2);
        assert!(var <= big_c * big_c * l2 + 1e-12);
    }

    #[test]
    fn process_spec_json_round_trip() {
        let spec = ProcessSpec::ornstein_uhlenbeck(2.0, 1.5, 0.8, 0.1).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"family\":\"ou\"") && json.contains("\"T\":2.0"));
        let back: ProcessSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);
        let bm: ProcessSpec = serde_json::from_str(r#"{"family":"bm","T":1.0}"#).unwrap();
        assert_eq!(bm, ProcessSpec::brownian_motion(1.0).unwrap());
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(ProcessSpec::brownian_motion(-1.0).is_err());
        assert!(ProcessSpec::ornstein_uhlenbeck(1.0, 0.0, 1.0, 0.0).is_err());
        assert!(ProcessSpec::fractional_brownian_motion(1.0, 1.5).is_err());
    }

    #[test]
    fn time_grid_invariants() {
        assert!(TimeGrid::new(vec![0.0]).is_err());
        assert!(TimeGrid::new(vec![0.1, 0.5]).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.5, 0.5]).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.5, 1.0]).is_ok());
    }
}
