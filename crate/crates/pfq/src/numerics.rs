//! Shared numerical kernels: Gauss-Legendre quadrature, the secondary branch
//! of the Lambert W function, Gaussian density/CDF helpers, Gaussian tail
//! moments and the η_M / M_η inversion pair used by the SDE error bounds.

use crate::error::{Error, Result};

/// Reciprocal of Euler's number, the left edge of the W₋₁ domain.
pub const NEG_INV_E: f64 = -0.36787944117144233;

/// A quadrature rule on an interval `[a, b]`: paired nodes and positive weights.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// Gauss-Legendre rule with `n` nodes on `[a, b]`.
    ///
    /// Nodes are computed by Newton iteration on the Legendre polynomial
    /// recurrence; accurate to machine precision for n up to several thousand.
    pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("quadrature rule needs at least 1 node".into()));
        }
        if !(b > a) {
            return Err(Error::Domain(format!("invalid interval [{a}, {b}]")));
        }
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess for the i-th root of P_n
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_and_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        // map [-1, 1] -> [a, b]
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for i in 0..n {
            nodes[i] = mid + half * nodes[i];
            weights[i] *= half;
        }
        Ok(QuadratureRule { nodes, weights })
    }

    /// Composite Gauss-Legendre rule: `panels` equal panels of `per_panel`
    /// nodes each on `[a, b]`.
    pub fn composite_gauss_legendre(per_panel: usize, panels: usize, a: f64, b: f64) -> Result<Self> {
        if panels == 0 {
            return Err(Error::Domain("composite rule needs at least 1 panel".into()));
        }
        let base = Self::gauss_legendre(per_panel, 0.0, 1.0)?;
        let h = (b - a) / panels as f64;
        let mut nodes = Vec::with_capacity(per_panel * panels);
        let mut weights = Vec::with_capacity(per_panel * panels);
        for p in 0..panels {
            let lo = a + p as f64 * h;
            for (x, w) in base.nodes.iter().zip(&base.weights) {
                nodes.push(lo + x * h);
                weights.push(w * h);
            }
        }
        Ok(QuadratureRule { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Apply the rule to `f`.
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integrate `f` over `[a, b]` splitting the panel at `c` (for integrands with
/// a kink or cusp at `c`), with composite GL panels on each side.
pub fn integrate_split(
    f: &mut dyn FnMut(f64) -> f64,
    a: f64,
    c: f64,
    b: f64,
    per_panel: usize,
    panels: usize,
) -> f64 {
    let mut total = 0.0;
    for (lo, hi) in [(a, c.clamp(a, b)), (c.clamp(a, b), b)] {
        if hi - lo < 1e-14 {
            continue;
        }
        let rule = QuadratureRule::composite_gauss_legendre(per_panel, panels, lo, hi)
            .expect("valid split interval");
        total += rule.integrate(&mut *f);
    }
    total
}

/// Secondary real branch W₋₁ of the Lambert W function on `[-1/e, 0)`.
///
/// Halley iteration from an asymptotic seed; the defining residual
/// `w·exp(w) - x` is driven below 1e-13.
pub fn lambert_w_minus1(x: f64) -> Result<f64> {
    if !(x < 0.0) || x < NEG_INV_E - 1e-12 {
        return Err(Error::Domain(format!(
            "lambert_w_minus1 needs x in [-1/e, 0), got {x}"
        )));
    }
    let t = 1.0 + std::f64::consts::E * x; // distance from the branch point
    if t <= 1e-14 {
        return Ok(-1.0);
    }
    let mut w = if t < 1e-3 {
        // branch-point series W_{-1} = -1 - s - s^2/3 - 11 s^3/72, s = sqrt(2t)
        let s = (2.0 * t).sqrt();
        -1.0 - s - s * s / 3.0 - 11.0 * s * s * s / 72.0
    } else {
        let l1 = (-x).ln();
        let l2 = (-l1).ln();
        if l1 < -1.5 {
            l1 - l2 + l2 / l1
        } else {
            // moderate x: crude seed below the branch value
            -2.0
        }
    };
    for _ in 0..100 {
        let ew = w.exp();
        let f = w * ew - x;
        if f.abs() <= 1e-15 {
            break;
        }
        // Halley step for f(w) = w e^w - x
        let wp1 = w + 1.0;
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let dw = f / denom;
        w -= dw;
        if dw.abs() < 1e-16 * w.abs() {
            break;
        }
    }
    let resid = (w * w.exp() - x).abs();
    if resid > 1e-12 {
        return Err(Error::Convergence(format!(
            "lambert_w_minus1 residual {resid:.3e} at x = {x}"
        )));
    }
    Ok(w)
}

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal CDF via the complementary error function.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile by bisection (deterministic, ~1e-14 accurate).
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(0.0 < p && p < 1.0) {
        return Err(Error::Domain(format!("quantile needs p in (0,1), got {p}")));
    }
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if std_normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Gaussian tail moment `E[|G|^p 1_{|G| > M}]` for standard normal `G`,
/// by adaptive panel-doubling Gauss-Legendre quadrature.
pub fn gaussian_tail_moment(p: f64, m_thresh: f64) -> Result<f64> {
    if p <= 0.0 {
        return Err(Error::Domain(format!("tail moment needs p > 0, got {p}")));
    }
    if m_thresh < 0.0 {
        return Err(Error::Domain(format!(
            "tail moment needs M >= 0, got {m_thresh}"
        )));
    }
    // width after which the remaining mass is below ~1e-20 of the integrand scale
    let delta = (-m_thresh + (m_thresh * m_thresh + 96.0).sqrt()).max(1.0);
    let integrand = |x: f64| 2.0 * x.abs().powf(p) * std_normal_pdf(x);
    let mut panels = 8;
    let mut prev = f64::NAN;
    for _ in 0..8 {
        let rule =
            QuadratureRule::composite_gauss_legendre(16, panels, m_thresh, m_thresh + delta)?;
        let val = rule.integrate(integrand);
        if prev.is_finite() && (val - prev).abs() <= 1e-13 * val.abs().max(1e-300) {
            return Ok(val);
        }
        prev = val;
        panels *= 2;
    }
    Err(Error::Numerical(
        "gaussian_tail_moment quadrature did not stabilize".into(),
    ))
}

/// Fitted constant `C_p`: the supremum over `M in [1, 40]` of
/// `E[|G|^p 1_{|G|>M}] / (M^{p-1} exp(-M^2/2))`.
pub fn fit_cp(p: f64) -> Result<f64> {
    if p <= 0.0 {
        return Err(Error::Domain(format!("fit_cp needs p > 0, got {p}")));
    }
    let mut sup: f64 = 0.0;
    let steps = 780;
    for i in 0..=steps {
        let m = 1.0 + 39.0 * i as f64 / steps as f64;
        let moment = gaussian_tail_moment(p, m)?;
        let ratio = moment / (m.powf(p - 1.0) * (-0.5 * m * m).exp());
        if !ratio.is_finite() {
            return Err(Error::Numerical(format!("C_p ratio blew up at M = {m}")));
        }
        sup = sup.max(ratio);
    }
    Ok(sup)
}

/// Tail bound `η_M = σ^{1/p} C_p^{1/p} M^{1/q} exp(-M²/(2pσ²))` with `q`
/// conjugate to `p`; `C_p` is fitted via [`fit_cp`].
pub fn eta_m(sigma: f64, p: f64, m_thresh: f64) -> Result<f64> {
    let cp = fit_cp(p)?;
    eta_m_with_cp(sigma, p, m_thresh, cp)
}

/// [`eta_m`] with a precomputed `C_p`.
pub fn eta_m_with_cp(sigma: f64, p: f64, m_thresh: f64, cp: f64) -> Result<f64> {
    if sigma <= 0.0 || p <= 1.0 || m_thresh <= 1.0 || cp <= 0.0 {
        return Err(Error::Domain(
            "eta_m needs sigma > 0, p > 1, M > 1, C_p > 0".into(),
        ));
    }
    let q = p / (p - 1.0);
    Ok(sigma.powf(1.0 / p)
        * cp.powf(1.0 / p)
        * m_thresh.powf(1.0 / q)
        * (-m_thresh * m_thresh / (2.0 * p * sigma * sigma)).exp())
}

/// Inverse threshold `M_η`: the smallest M ≥ this value guarantees `η_M ≤ η`.
///
/// `M_η = sqrt(-σ²(p-1) W₋₁(-q η^{2q} / (p σ² C_p^{2q/p} σ^{2q/p})))`.
pub fn m_eta(sigma: f64, p: f64, eta: f64, cp: f64) -> Result<f64> {
    if sigma <= 0.0 || p <= 1.0 || eta <= 0.0 || cp <= 0.0 {
        return Err(Error::Domain(
            "m_eta needs sigma > 0, p > 1, eta > 0, C_p > 0".into(),
        ));
    }
    let q = p / (p - 1.0);
    let arg = -q * eta.powf(2.0 * q)
        / (p * sigma * sigma * cp.powf(2.0 * q / p) * sigma.powf(2.0 * q / p));
    if arg <= NEG_INV_E || arg >= 0.0 {
        return Err(Error::Domain(format!(
            "m_eta: W-1 argument {arg:.3e} outside (-1/e, 0); bound vacuous at eta = {eta}"
        )));
    }
    let w = lambert_w_minus1(arg)?;
    Ok((-sigma * sigma * (p - 1.0) * w).sqrt())
}

/// Least-squares line fit, used by the rate checks.
#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// standard error of the slope estimate
    pub slope_se: f64,
}

/// Fit `y = slope * x + intercept` by least squares.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    let n = xs.len();
    if n != ys.len() || n < 2 {
        return Err(Error::Domain("linear_fit needs >= 2 paired points".into()));
    }
    let nf = n as f64;
    let xbar = xs.iter().sum::<f64>() / nf;
    let ybar = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    if sxx < 1e-12 {
        return Err(Error::Numerical("degenerate fit: no spread in x".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    let slope_se = if n > 2 {
        (ss_res / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LineFit {
        slope,
        intercept,
        slope_se,
    })
}
