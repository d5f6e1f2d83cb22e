//! Karhunen-Loève eigensystems: closed forms for Brownian motion and the
//! Brownian bridge, a Nyström solver for the other kernels, antiderivative
//! functions `f_i(t) = ∫_t^T e_i(s) ds`, and K-L coordinates of sampled paths.
//!
//! The Nyström discretization uses a kink-aligned uniform trapezoid rule with
//! a diagonal correction for the derivative jump that every covariance kernel
//! here carries along `s = t` (an `|s-t|` kink for BM/BB/OU, an `|s-t|^{2H}`
//! cusp for fBm). The correction constants are calibrated on model integrals
//! with analytic values, which keeps the scheme exact-integral-free.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{integrate_split, QuadratureRule};
use crate::process::{covariance_unchecked, ProcessPath, ProcessSpec, TimeGrid};

const CUSP_FRACS: usize = 17;

/// A finite subset of K-L indices (1-based).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexSet {
    indices: Vec<usize>,
}

impl IndexSet {
    pub fn new(mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if indices.is_empty() {
            return Err(Error::Precondition("index set must be non-empty".into()));
        }
        if indices[0] == 0 {
            return Err(Error::Domain("K-L indices are 1-based".into()));
        }
        Ok(IndexSet { indices })
    }

    /// The set {1, …, m}.
    pub fn first(m: usize) -> Result<Self> {
        IndexSet::new((1..=m).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn max_index(&self) -> usize {
        *self.indices.last().unwrap()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    pub fn check_within(&self, m: usize) -> Result<()> {
        if self.max_index() > m {
            return Err(Error::Domain(format!(
                "index {} outside basis range 1..={m}",
                self.max_index()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct CuspCorrection {
    /// local cusp coefficient `a` in Γ(t+u, t) = smooth + a·|u|^γ
    coeff: f64,
    /// trapezoid-error table c(frac) for the model |x - p|^γ, p at node + frac·h
    frac_table: [f64; CUSP_FRACS],
    /// boundary cusp coefficient at s = 0 (fBm only)
    bcoeff: f64,
    /// trapezoid error for the one-sided model x^γ
    one_sided: f64,
}

#[derive(Debug)]
struct NystromData {
    spec: ProcessSpec,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    lambdas: Vec<f64>,
    /// values[i][a] = e_{i+1}(nodes[a])
    values: Vec<Vec<f64>>,
    cusp: CuspCorrection,
}

impl NystromData {
    fn h(&self) -> f64 {
        self.nodes[1] - self.nodes[0]
    }

    fn cusp_at(&self, t: f64) -> f64 {
        let h = self.h();
        let idx = ((t / h) as usize).min(self.nodes.len() - 2);
        let frac = ((t - self.nodes[idx]) / h).clamp(0.0, 1.0);
        let pos = frac * (CUSP_FRACS - 1) as f64;
        let k = (pos as usize).min(CUSP_FRACS - 2);
        let w = pos - k as f64;
        self.cusp.frac_table[k] * (1.0 - w) + self.cusp.frac_table[k + 1] * w
    }

    /// Corrected Nyström extension of eigenfunction `i` (0-based) at `t`.
    fn eval(&self, i: usize, t: f64) -> f64 {
        let v = &self.values[i];
        let mut row = 0.0;
        for ((&s, &w), &vv) in self.nodes.iter().zip(&self.weights).zip(v) {
            row += w * covariance_unchecked(&self.spec, t, s) * vv;
        }
        // nodal value of e_i linearly interpolated for the cusp correction
        let h = self.h();
        let idx = ((t / h) as usize).min(self.nodes.len() - 2);
        let frac = ((t - self.nodes[idx]) / h).clamp(0.0, 1.0);
        let v_lin = v[idx] * (1.0 - frac) + v[idx + 1] * frac;
        row -= self.cusp.coeff * self.cusp_at(t) * v_lin;
        row -= self.cusp.bcoeff * self.cusp.one_sided * v[0];
        row / self.lambdas[i]
    }
}

#[derive(Debug, Clone)]
enum BasisRepr {
    ClosedForm,
    Nystrom(Arc<NystromData>),
}

/// An ordered Karhunen-Loève eigensystem (λ_i, e_i) for a process.
#[derive(Debug, Clone)]
pub struct KLBasis {
    spec: ProcessSpec,
    m: usize,
    eigenvalues: Vec<f64>,
    repr: BasisRepr,
}

/// An evaluable real function on `[0, T]` (eigenfunctions, antiderivatives,
/// bridge conditioning functions).
#[derive(Debug, Clone)]
pub struct EvalFn {
    repr: FnRepr,
}

#[derive(Debug, Clone)]
enum FnRepr {
    Constant(f64),
    /// √(2/T)·sin(ω t), ω = π(i-1/2)/T
    BmEigen { index: usize, t_max: f64 },
    /// √(2/T)·sin(ω t), ω = πi/T
    BbEigen { index: usize, t_max: f64 },
    /// √(2/T)·cos(ω t)/ω
    BmAnti { index: usize, t_max: f64 },
    /// √(2/T)·(cos(ω t) − (−1)^i)/ω
    BbAnti { index: usize, t_max: f64 },
    NystromEigen { data: Arc<NystromData>, index: usize },
    /// linear interpolant on a fine uniform grid (Nyström antiderivatives)
    Interp { xs: Arc<Vec<f64>>, ys: Arc<Vec<f64>> },
}

impl EvalFn {
    pub fn constant(c: f64) -> Self {
        EvalFn {
            repr: FnRepr::Constant(c),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match &self.repr {
            FnRepr::Constant(c) => *c,
            FnRepr::BmEigen { index, t_max } => {
                let omega = std::f64::consts::PI * (*index as f64 - 0.5) / t_max;
                (2.0 / t_max).sqrt() * (omega * t).sin()
            }
            FnRepr::BbEigen { index, t_max } => {
                let omega = std::f64::consts::PI * *index as f64 / t_max;
                (2.0 / t_max).sqrt() * (omega * t).sin()
            }
            FnRepr::BmAnti { index, t_max } => {
                let omega = std::f64::consts::PI * (*index as f64 - 0.5) / t_max;
                (2.0 / t_max).sqrt() * (omega * t).cos() / omega
            }
            FnRepr::BbAnti { index, t_max } => {
                let omega = std::f64::consts::PI * *index as f64 / t_max;
                let sign = if index % 2 == 0 { 1.0 } else { -1.0 };
                (2.0 / t_max).sqrt() * ((omega * t).cos() - sign) / omega
            }
            FnRepr::NystromEigen { data, index } => data.eval(*index, t),
            FnRepr::Interp { xs, ys } => {
                let n = xs.len();
                let h = xs[1] - xs[0];
                let idx = (((t - xs[0]) / h) as usize).min(n - 2);
                let frac = ((t - xs[idx]) / h).clamp(0.0, 1.0);
                ys[idx] * (1.0 - frac) + ys[idx + 1] * frac
            }
        }
    }

    pub fn eval_on(&self, grid: &TimeGrid) -> Vec<f64> {
        grid.points().iter().map(|&t| self.eval(t)).collect()
    }
}

impl KLBasis {
    pub fn spec(&self) -> &ProcessSpec {
        &self.spec
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// λ_i, 1-based.
    pub fn lambda(&self, i: usize) -> f64 {
        self.eigenvalues[i - 1]
    }

    pub fn is_closed_form(&self) -> bool {
        matches!(self.repr, BasisRepr::ClosedForm)
    }

    /// Eigenfunction e_i, 1-based.
    pub fn eigenfunction(&self, i: usize) -> Result<EvalFn> {
        if i == 0 || i > self.m {
            return Err(Error::Domain(format!("index {i} outside 1..={}", self.m)));
        }
        let repr = match (&self.repr, &self.spec) {
            (BasisRepr::ClosedForm, ProcessSpec::BrownianMotion { t_max }) => FnRepr::BmEigen {
                index: i,
                t_max: *t_max,
            },
            (BasisRepr::ClosedForm, ProcessSpec::BrownianBridge { t_max }) => FnRepr::BbEigen {
                index: i,
                t_max: *t_max,
            },
            (BasisRepr::Nystrom(data), _) => FnRepr::NystromEigen {
                data: Arc::clone(data),
                index: i - 1,
            },
            _ => unreachable!("closed form only exists for BM/BB"),
        };
        Ok(EvalFn { repr })
    }

    /// Number of quadrature nodes backing a Nyström basis (0 for closed form).
    pub fn quad_nodes(&self) -> usize {
        match &self.repr {
            BasisRepr::ClosedForm => 0,
            BasisRepr::Nystrom(d) => d.nodes.len(),
        }
    }
}

/// Closed-form K-L basis for Brownian motion or the Brownian bridge.
///
/// BM: λ_n = (T/(π(n−1/2)))², e_n(t) = √(2/T) sin(π(n−1/2)t/T).
/// BB: λ_n = (T/(πn))², e_n(t) = √(2/T) sin(πnt/T).
pub fn kl_closed_form(spec: &ProcessSpec, m: usize) -> Result<KLBasis> {
    spec.validate()?;
    if m == 0 {
        return Err(Error::Domain("need m >= 1 eigenpairs".into()));
    }
    let t_max = spec.t_max();
    let eigenvalues: Vec<f64> = match spec {
        ProcessSpec::BrownianMotion { .. } => (1..=m)
            .map(|n| (t_max / (std::f64::consts::PI * (n as f64 - 0.5))).powi(2))
            .collect(),
        ProcessSpec::BrownianBridge { .. } => (1..=m)
            .map(|n| (t_max / (std::f64::consts::PI * n as f64)).powi(2))
            .collect(),
        _ => {
            return Err(Error::UnsupportedFamily(format!(
                "no closed-form K-L basis for {}; use kl_nystrom",
                spec.family_name()
            )))
        }
    };
    Ok(KLBasis {
        spec: spec.clone(),
        m,
        eigenvalues,
        repr: BasisRepr::ClosedForm,
    })
}

fn trap_rule(n: usize, t_max: f64) -> (Vec<f64>, Vec<f64>, f64) {
    let h = t_max / (n - 1) as f64;
    let nodes: Vec<f64> = (0..n).map(|a| a as f64 * h).collect();
    let mut weights = vec![h; n];
    weights[0] = 0.5 * h;
    weights[n - 1] = 0.5 * h;
    (nodes, weights, h)
}

fn calibrate_cusp(spec: &ProcessSpec, nodes: &[f64], weights: &[f64]) -> CuspCorrection {
    let t_max = spec.t_max();
    let n = nodes.len();
    let h = nodes[1] - nodes[0];
    let (gamma, coeff, bcoeff) = match *spec {
        ProcessSpec::BrownianMotion { .. } | ProcessSpec::BrownianBridge { .. } => {
            (1.0, -0.5, 0.0)
        }
        ProcessSpec::OrnsteinUhlenbeck { sigma, .. } => (1.0, -0.5 * sigma * sigma, 0.0),
        ProcessSpec::FractionalBrownianMotion { hurst, .. } => (2.0 * hurst, -0.5, 0.5),
    };
    // trapezoid error of |x - p|^gamma for p between two mid-grid nodes
    let mid = n / 2;
    let mut frac_table = [0.0; CUSP_FRACS];
    for (k, slot) in frac_table.iter_mut().enumerate() {
        let p = nodes[mid] + h * k as f64 / (CUSP_FRACS - 1) as f64;
        let trap: f64 = nodes
            .iter()
            .zip(weights)
            .map(|(&x, &w)| w * (x - p).abs().powf(gamma))
            .sum();
        let exact = (p.powf(gamma + 1.0) + (t_max - p).powf(gamma + 1.0)) / (gamma + 1.0);
        *slot = trap - exact;
    }
    // trapezoid error of the one-sided x^gamma (boundary cusp)
    let one_sided = if bcoeff != 0.0 {
        let trap: f64 = nodes
            .iter()
            .zip(weights)
            .map(|(&x, &w)| w * x.powf(gamma))
            .sum();
        trap - t_max.powf(gamma + 1.0) / (gamma + 1.0)
    } else {
        0.0
    };
    CuspCorrection {
        coeff,
        frac_table,
        bcoeff,
        one_sided,
    }
}

/// Nyström K-L basis: kink-corrected trapezoid discretization of the
/// covariance operator, symmetric weighted eigenproblem, L²-normalized
/// eigenfunctions extended by the (corrected) Nyström interpolation formula.
pub fn kl_nystrom(spec: &ProcessSpec, m: usize, quad_nodes: usize) -> Result<KLBasis> {
    spec.validate()?;
    if m == 0 {
        return Err(Error::Domain("need m >= 1 eigenpairs".into()));
    }
    if quad_nodes < 4 * m {
        return Err(Error::Precondition(format!(
            "kl_nystrom needs quad_nodes >= 4m ({} < {})",
            quad_nodes,
            4 * m
        )));
    }
    let (nodes, weights, _h) = trap_rule(quad_nodes, spec.t_max());
    let cusp = calibrate_cusp(spec, &nodes, &weights);
    let n = quad_nodes;

    let mut kern = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..=a {
            let v = covariance_unchecked(spec, nodes[a], nodes[b]);
            kern[(a, b)] = v;
            kern[(b, a)] = v;
        }
    }
    // diagonal cusp correction: row quadrature error = coeff * c(0) * v_a
    for a in 0..n {
        kern[(a, a)] -= cusp.coeff * cusp.frac_table[0] / weights[a];
    }
    // boundary cusp correction (fBm): error = bcoeff * one_sided * v_0
    if cusp.bcoeff != 0.0 {
        for a in 0..n {
            kern[(a, 0)] -= cusp.bcoeff * cusp.one_sided / weights[0];
        }
    }
    // weighted symmetric eigenproblem B = sqrt(W) K sqrt(W)
    let sw: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let mut b = kern;
    for a in 0..n {
        for c in 0..n {
            b[(a, c)] *= sw[a] * sw[c];
        }
    }
    // the corrections are asymmetric at the boundary column; symmetrize
    let bt = b.transpose();
    let b = (b + bt) * 0.5;
    let eig = b.symmetric_eigen();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap()
            .then_with(|| {
                // ties ordered by first-node value
                eig.eigenvectors[(0, i)]
                    .partial_cmp(&eig.eigenvectors[(0, j)])
                    .unwrap()
            })
    });

    let lambda_1 = eig.eigenvalues[order[0]];
    let mut lambdas = Vec::with_capacity(m);
    let mut values = Vec::with_capacity(m);
    for &col in order.iter().take(m) {
        let lam = eig.eigenvalues[col];
        if lam < 1e-12 * lambda_1 {
            return Err(Error::Resolution(format!(
                "eigenvalue {} below resolvable floor 1e-12*lambda_1 at m = {}",
                lam,
                lambdas.len() + 1
            )));
        }
        // nodal values e(s_a) = v_a / sqrt(w_a); orthonormal in the discrete L2
        let mut vals: Vec<f64> = (0..n).map(|a| eig.eigenvectors[(a, col)] / sw[a]).collect();
        // sign convention: positive at the first node where |e| > 1e-3
        if let Some(v) = vals.iter().find(|v| v.abs() > 1e-3) {
            if *v < 0.0 {
                vals.iter_mut().for_each(|x| *x = -*x);
            }
        }
        lambdas.push(lam);
        values.push(vals);
    }

    let data = NystromData {
        spec: spec.clone(),
        nodes,
        weights,
        lambdas: lambdas.clone(),
        values,
        cusp,
    };
    Ok(KLBasis {
        spec: spec.clone(),
        m,
        eigenvalues: lambdas,
        repr: BasisRepr::Nystrom(Arc::new(data)),
    })
}

/// Antiderivative `f_i(t) = ∫_t^T e_i(s) ds` (so `f_i(T) = 0`, `f_i' = -e_i`).
/// Closed form for BM/BB, a fine-grid quadrature interpolant otherwise.
pub fn antiderivative_f(basis: &KLBasis, i: usize) -> Result<EvalFn> {
    if i == 0 || i > basis.m {
        return Err(Error::Domain(format!("index {i} outside 1..={}", basis.m)));
    }
    let t_max = basis.spec.t_max();
    match (&basis.repr, &basis.spec) {
        (BasisRepr::ClosedForm, ProcessSpec::BrownianMotion { .. }) => Ok(EvalFn {
            repr: FnRepr::BmAnti { index: i, t_max },
        }),
        (BasisRepr::ClosedForm, ProcessSpec::BrownianBridge { .. }) => Ok(EvalFn {
            repr: FnRepr::BbAnti { index: i, t_max },
        }),
        (BasisRepr::Nystrom(data), _) => {
            // integrate the extension on a fine grid, accumulate from T down
            let fine = 2049usize;
            let xs: Vec<f64> = (0..fine)
                .map(|k| t_max * k as f64 / (fine - 1) as f64)
                .collect();
            let gl = QuadratureRule::gauss_legendre(4, 0.0, 1.0)?;
            let mut ys = vec![0.0; fine];
            for k in (0..fine - 1).rev() {
                let (lo, hi) = (xs[k], xs[k + 1]);
                let seg: f64 = gl
                    .nodes
                    .iter()
                    .zip(&gl.weights)
                    .map(|(&u, &w)| w * (hi - lo) * data.eval(i - 1, lo + u * (hi - lo)))
                    .sum();
                ys[k] = ys[k + 1] + seg;
            }
            Ok(EvalFn {
                repr: FnRepr::Interp {
                    xs: Arc::new(xs),
                    ys: Arc::new(ys),
                },
            })
        }
        _ => unreachable!(),
    }
}

/// Trapezoid weights for an arbitrary strictly increasing grid.
pub fn path_trap_weights(grid: &TimeGrid) -> Vec<f64> {
    let pts = grid.points();
    let n = pts.len();
    let mut w = vec![0.0; n];
    w[0] = 0.5 * (pts[1] - pts[0]);
    w[n - 1] = 0.5 * (pts[n - 1] - pts[n - 2]);
    for k in 1..n - 1 {
        w[k] = 0.5 * (pts[k + 1] - pts[k - 1]);
    }
    w
}

/// Eigenfunction values tabulated on a path grid, for repeated coordinate
/// computations over many paths.
#[derive(Debug, Clone)]
pub struct GridTable {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
    /// e_values[k][j] = e_{indices[k]}(grid[j])
    pub e_values: Vec<Vec<f64>>,
}

/// Tabulate the eigenfunctions of `set` on `grid`.
pub fn grid_table(basis: &KLBasis, set: &IndexSet, grid: &TimeGrid) -> Result<GridTable> {
    set.check_within(basis.m)?;
    let weights = path_trap_weights(grid);
    let mut e_values = Vec::with_capacity(set.len());
    for &i in set.indices() {
        e_values.push(basis.eigenfunction(i)?.eval_on(grid));
    }
    Ok(GridTable {
        indices: set.indices().to_vec(),
        weights,
        e_values,
    })
}

/// K-L coordinates from a precomputed table: `Y_i = ∫ X_s e_i(s) ds` by the
/// trapezoid rule on the path grid.
pub fn kl_coordinates_table(path: &ProcessPath, table: &GridTable) -> Vec<f64> {
    table
        .e_values
        .iter()
        .map(|ev| {
            path.values
                .iter()
                .zip(ev)
                .zip(&table.weights)
                .map(|((&x, &e), &w)| w * x * e)
                .sum()
        })
        .collect()
}

/// K-L coordinates `Y_i = ∫_0^T X_s e_i(s) ds` for `i` in `set`.
pub fn kl_coordinates(path: &ProcessPath, basis: &KLBasis, set: &IndexSet) -> Result<Vec<f64>> {
    let table = grid_table(basis, set, &path.grid)?;
    Ok(kl_coordinates_table(path, &table))
}

/// [`kl_coordinates`] plus a grid-resolution check: the path grid must carry
/// at least 32·max(I) points (≈ 64 per period of the fastest eigenfunction).
pub fn kl_coordinates_checked(
    path: &ProcessPath,
    basis: &KLBasis,
    set: &IndexSet,
) -> Result<Vec<f64>> {
    let required = 32 * set.max_index();
    if path.grid.len() < required {
        return Err(Error::Resolution(format!(
            "path grid has {} points; need >= {required} for index {}",
            path.grid.len(),
            set.max_index()
        )));
    }
    kl_coordinates(path, basis, set)
}

/// Trace `∫_0^T Γ(t,t) dt` by composite Gauss-Legendre quadrature.
pub fn covariance_trace(spec: &ProcessSpec) -> Result<f64> {
    let rule = QuadratureRule::composite_gauss_legendre(8, 256, 0.0, spec.t_max())?;
    Ok(rule.integrate(|t| covariance_unchecked(spec, t, t)))
}

/// Tail `Σ_{j>m} λ_j`. Closed-form bases sum analytically to j = 10⁶ with an
/// integral remainder; Nyström bases use trace minus the partial sum.
pub fn eigenvalue_tail(basis: &KLBasis, m: usize) -> Result<f64> {
    if m > basis.m {
        return Err(Error::Domain(format!("tail cutoff {m} > basis m {}", basis.m)));
    }
    let t_max = basis.spec.t_max();
    match &basis.spec {
        ProcessSpec::BrownianMotion { .. } => {
            let c = (t_max / std::f64::consts::PI).powi(2);
            let mut sum = 0.0;
            for j in (m + 1)..=1_000_000 {
                sum += c / (j as f64 - 0.5).powi(2);
            }
            // integral remainder of sum_{j > 1e6} (j - 1/2)^{-2}
            sum += c / 1_000_000.0f64;
            Ok(sum)
        }
        ProcessSpec::BrownianBridge { .. } => {
            let c = (t_max / std::f64::consts::PI).powi(2);
            let mut sum = 0.0;
            for j in (m + 1)..=1_000_000 {
                sum += c / (j as f64).powi(2);
            }
            sum += c / (1_000_000.0f64 + 0.5);
            Ok(sum)
        }
        _ => {
            let trace = covariance_trace(&basis.spec)?;
            let partial: f64 = basis.eigenvalues[..m].iter().sum();
            Ok((trace - partial).max(0.0))
        }
    }
}

/// Independent eigen-residual check: `sup_t |∫ Γ(t,s) e_i(s) ds − λ_i e_i(t)|`
/// with the integral evaluated by composite GL split at the diagonal kink.
pub fn eigen_residual(basis: &KLBasis, i: usize, t_grid: &[f64]) -> Result<f64> {
    let e = basis.eigenfunction(i)?;
    let lam = basis.lambda(i);
    let t_max = basis.spec.t_max();
    let mut worst = 0.0f64;
    for &t in t_grid {
        let mut f = |s: f64| covariance_unchecked(&basis.spec, t, s) * e.eval(s);
        let integral = integrate_split(&mut f, 0.0, t, t_max, 12, 16);
        worst = worst.max((integral - lam * e.eval(t)).abs());
    }
    Ok(worst)
}

/// Orthonormality residual `max_{i,j} |∫ e_i e_j − δ_ij|`. Closed-form bases
/// are measured with an independent 512-node rule; Nyström bases with their
/// construction rule (their eigenfunctions are orthonormal in that metric).
pub fn orthonormality_residual(basis: &KLBasis) -> Result<f64> {
    let m = basis.m;
    let mut worst = 0.0f64;
    match &basis.repr {
        BasisRepr::ClosedForm => {
            let rule = QuadratureRule::composite_gauss_legendre(8, 64, 0.0, basis.spec.t_max())?;
            let funcs: Vec<EvalFn> = (1..=m)
                .map(|i| basis.eigenfunction(i))
                .collect::<Result<_>>()?;
            for i in 0..m {
                for j in i..m {
                    let val = rule.integrate(|t| funcs[i].eval(t) * funcs[j].eval(t));
                    let target = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((val - target).abs());
                }
            }
        }
        BasisRepr::Nystrom(data) => {
            for i in 0..m {
                for j in i..m {
                    let val: f64 = data
                        .weights
                        .iter()
                        .zip(&data.values[i])
                        .zip(&data.values[j])
                        .map(|((&w, &a), &b)| w * a * b)
                        .sum();
                    let target = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((val - target).abs());
                }
            }
        }
    }
    Ok(worst)
}

// --- serialization -----------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct KLBasisJson {
    spec: ProcessSpec,
    m: usize,
    eigenvalues: Vec<f64>,
    representation: String,
    nodes: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl Serialize for KLBasis {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let (representation, nodes, values) = match &self.repr {
            BasisRepr::ClosedForm => ("closed_form".to_string(), vec![], vec![]),
            BasisRepr::Nystrom(d) => (
                "nystrom".to_string(),
                d.nodes.clone(),
                d.values.clone(),
            ),
        };
        KLBasisJson {
            spec: self.spec.clone(),
            m: self.m,
            eigenvalues: self.eigenvalues.clone(),
            representation,
            nodes,
            values,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for KLBasis {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = KLBasisJson::deserialize(deserializer)?;
        match raw.representation.as_str() {
            "closed_form" => kl_closed_form(&raw.spec, raw.m).map_err(serde::de::Error::custom),
            "nystrom" => {
                let n = raw.nodes.len();
                if n < 2 || raw.values.len() != raw.m || raw.eigenvalues.len() != raw.m {
                    return Err(serde::de::Error::custom("inconsistent nystrom basis JSON"));
                }
                let (nodes, weights, _h) = trap_rule(n, raw.spec.t_max());
                for (a, b) in nodes.iter().zip(&raw.nodes) {
                    if (a - b).abs() > 1e-9 {
                        return Err(serde::de::Error::custom("nystrom nodes are not uniform"));
                    }
                }
                let cusp = calibrate_cusp(&raw.spec, &nodes, &weights);
                let data = NystromData {
                    spec: raw.spec.clone(),
                    nodes,
                    weights,
                    lambdas: raw.eigenvalues.clone(),
                    values: raw.values,
                    cusp,
                };
                Ok(KLBasis {
                    spec: raw.spec,
                    m: raw.m,
                    eigenvalues: raw.eigenvalues,
                    repr: BasisRepr::Nystrom(Arc::new(data)),
                })
            }
            other => Err(serde::de::Error::custom(format!(
                "unknown representation {other:?}"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::sample_path;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn bm_closed_form_lambda1() {
        let basis = kl_closed_form(&ProcessSpec::brownian_motion(1.0).unwrap(), 5).unwrap();
        assert_abs_diff_eq!(basis.lambda(1), 0.4052847345693511, epsilon = 1e-14);
    }

    #[test]
    fn bb_closed_form_lambda1() {
        let basis = kl_closed_form(&ProcessSpec::brownian_bridge(1.0).unwrap(), 5).unwrap();
        assert_abs_diff_eq!(basis.lambda(1), 0.10132118364233778, epsilon = 1e-14);
    }

    #[test]
    fn closed_form_rejects_ou() {
        let spec = ProcessSpec::ornstein_uhlenbeck(1.0, 1.0, 1.0, 0.0).unwrap();
        assert!(matches!(
            kl_closed_form(&spec, 3),
            Err(Error::UnsupportedFamily(_))
        ));
    }

    #[test]
    fn closed_form_orthonormal() {
        for spec in [
            ProcessSpec::brownian_motion(1.0).unwrap(),
            ProcessSpec::brownian_bridge(2.0).unwrap(),
        ] {
            let basis = kl_closed_form(&spec, 5).unwrap();
            assert!(orthonormality_residual(&basis).unwrap() <= 1e-6);
        }
    }

    #[test]
    fn nystrom_matches_closed_form_bm_bb() {
        for (spec, closed) in [
            (
                ProcessSpec::brownian_motion(1.0).unwrap(),
                kl_closed_form(&ProcessSpec::brownian_motion(1.0).unwrap(), 5).unwrap(),
            ),
            (
                ProcessSpec::brownian_bridge(1.0).unwrap(),
                kl_closed_form(&ProcessSpec::brownian_bridge(1.0).unwrap(), 5).unwrap(),
            ),
        ] {
            let nys = kl_nystrom(&spec, 5, 400).unwrap();
            for i in 1..=5 {
                let rel = (nys.lambda(i) - closed.lambda(i)).abs() / closed.lambda(i);
                assert!(
                    rel <= 1e-4,
                    "{} lambda_{i} rel err {rel:.3e}",
                    spec.family_name()
                );
            }
            assert!(orthonormality_residual(&nys).unwrap() <= 1e-6);
        }
    }

    #[test]
    fn nystrom_requires_enough_nodes() {
        let spec = ProcessSpec::brownian_motion(1.0).unwrap();
        assert!(matches!(
            kl_nystrom(&spec, 10, 30),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn nystrom_eigenfunctions_match_closed_form_pointwise() {
        let spec = ProcessSpec::brownian_motion(1.0).unwrap();
        let nys = kl_nystrom(&spec, 3, 400).unwrap();
        let closed = kl_closed_form(&spec, 3).unwrap();
        for i in 1..=3 {
            let en = nys.eigenfunction(i).unwrap();
            let ec = closed.eigenfunction(i).unwrap();
            for k in 0..=20 {
                let t = k as f64 / 20.0;
                assert_abs_diff_eq!(en.eval(t), ec.eval(t), epsilon = 2e-4);
            }
        }
    }

    #[test]
    fn mercer_trace_dominates_partial_sums() {
        let specs = [
            ProcessSpec::brownian_motion(1.0).unwrap(),
            ProcessSpec::fractional_brownian_motion(1.0, 0.25).unwrap(),
            ProcessSpec::ornstein_uhlenbeck(1.0, 1.0, 1.0, 0.2).unwrap(),
        ];
        for spec in &specs {
            let basis = kl_nystrom(spec, 6, 400).unwrap();
            let trace = covariance_trace(spec).unwrap();
            let mut partial = 0.0;
            let mut prev_gap = f64::INFINITY;
            for i in 1..=6 {
                partial += basis.lambda(i);
                let gap = trace - partial;
                assert!(partial <= trace + 1e-8, "{}: partial sum exceeds trace", spec.family_name());
                assert!(gap < prev_gap);
                prev_gap = gap;
            }
        }
    }

    #[test]
    fn eigen_residual_within_invariant_all_families() {
        let t_grid: Vec<f64> = (0..=40).map(|k| k as f64 / 40.0).collect();
        let cases: Vec<(KLBasis, usize)> = vec![
            (
                kl_nystrom(&ProcessSpec::brownian_motion(1.0).unwrap(), 5, 400).unwrap(),
                5,
            ),
            (
                kl_nystrom(
                    &ProcessSpec::fractional_brownian_motion(1.0, 0.25).unwrap(),
                    3,
                    400,
                )
                .unwrap(),
                3,
            ),
            (
                kl_nystrom(
                    &ProcessSpec::ornstein_uhlenbeck(1.0, 1.0, 1.0, 0.0).unwrap(),
                    3,
                    400,
                )
                .unwrap(),
                3,
            ),
            (
                kl_closed_form(&ProcessSpec::brownian_motion(1.0).unwrap(), 5).unwrap(),
                5,
            ),
        ];
        for (basis, m) in &cases {
            let tol = 1e-4 * basis.lambda(1);
            for i in 1..=*m {
                let res = eigen_residual(basis, i, &t_grid).unwrap();
                assert!(
                    res <= tol,
                    "{} (nystrom={}): residual {res:.3e} > {tol:.3e} at i={i}",
                    basis.spec().family_name(),
                    !basis.is_closed_form(),
                );
            }
        }
    }

    #[test]
    fn antiderivative_bm_frozen_value() {
        let basis = kl_closed_form(&ProcessSpec::brownian_motion(1.0).unwrap(), 3).unwrap();
        let f1 = antiderivative_f(&basis, 1).unwrap();
        // quadrature of sqrt(2) sin(pi s/2) over [0,1] = 2 sqrt(2)/pi
        assert_abs_diff_eq!(f1.eval(0.0), 0.9003163161571061, epsilon = 1e-12);
        assert_abs_diff_eq!(f1.eval(1.0), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn antiderivative_vanishes_at_horizon_and_orthogonal() {
        let basis = kl_closed_form(&ProcessSpec::brownian_motion(1.0).unwrap(), 3).unwrap();
        let f1 = antiderivative_f(&basis, 1).unwrap();
        let f2 = antiderivative_f(&basis, 2).unwrap();
        assert_abs_diff_eq!(f2.eval(1.0), 0.0, epsilon = 1e-12);
        let rule = QuadratureRule::gauss_legendre(200, 0.0, 1.0).unwrap();
        let inner = rule.integrate(|t| f1.eval(t) * f2.eval(t));
        assert_abs_diff_eq!(inner, 0.0, epsilon = 1e-8);
    }

    #[test]
    fn antiderivative_nystrom_matches_quadrature_of_e() {
        let spec = ProcessSpec::fractional_brownian_motion(1.0, 0.25).unwrap();
        let basis = kl_nystrom(&spec, 3, 400).unwrap();
        let e1 = basis.eigenfunction(1).unwrap();
        let f1 = antiderivative_f(&basis, 1).unwrap();
        assert_abs_diff_eq!(f1.eval(1.0), 0.0, epsilon = 1e-12);
        for &t in &[0.0, 0.3, 0.7] {
            let rule = QuadratureRule::composite_gauss_legendre(8, 32, t, 1.0).unwrap();
            let direct = rule.integrate(|s| e1.eval(s));
            assert_abs_diff_eq!(f1.eval(t), direct, epsilon = 1e-5);
        }
    }

    #[test]
    fn coordinates_of_eigenfunction_path() {
        let basis = kl_closed_form(&ProcessSpec::brownian_motion(1.0).unwrap(), 2).unwrap();
        let grid = TimeGrid::uniform(1.0, 512).unwrap();
        let e1 = basis.eigenfunction(1).unwrap();
        let path = ProcessPath::new(grid.clone(), e1.eval_on(&grid)).unwrap();
        let set = IndexSet::new(vec![1, 2]).unwrap();
        let y = kl_coordinates(&path, &basis, &set).unwrap();
        assert_abs_diff_eq!(y[0], 1.0, epsilon = 1e-4);
        assert_abs_diff_eq!(y[1], 0.0, epsilon = 1e-4);
    }

    #[test]
    fn coordinates_of_zero_path() {
        let basis = kl_closed_form(&ProcessSpec::brownian_motion(1.0).unwrap(), 2).unwrap();
        let grid = TimeGrid::uniform(1.0, 128).unwrap();
        let path = ProcessPath::new(grid, vec![0.0; 128]).unwrap();
        let set = IndexSet::first(2).unwrap();
        let y = kl_coordinates(&path, &basis, &set).unwrap();
        assert!(y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn coordinate_variance_matches_lambda() {
        // Var(Y_1) = lambda_1 over Monte Carlo BM paths
        let spec = ProcessSpec::brownian_motion(1.0).unwrap();
        let basis = kl_closed_form(&spec, 2).unwrap();
        let grid = TimeGrid::uniform(1.0, 256).unwrap();
        let set = IndexSet::first(1).unwrap();
        let table = grid_table(&basis, &set, &grid).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let p = sample_path(&spec, &grid, &mut rng).unwrap();
            let y = kl_coordinates_table(&p, &table)[0];
            sum += y;
            sumsq += y * y;
        }
        let var = sumsq / n as f64 - (sum / n as f64).powi(2);
        let lam = basis.lambda(1);
        let se = (2.0 / n as f64).sqrt() * lam;
        assert!(
            (var - lam).abs() <= 4.0 * se,
            "Var(Y1) = {var} vs lambda_1 = {lam}"
        );
    }

    #[test]
    fn coordinate_law_jointly_diagonal() {
        // (Y_1, Y_2, Y_3) centered with covariance diag(lambda) within 5 SE
        let spec = ProcessSpec::brownian_motion(1.0).unwrap();
        let basis = kl_closed_form(&spec, 3).unwrap();
        let grid = TimeGrid::uniform(1.0, 256).unwrap();
        let set = IndexSet::first(3).unwrap();
        let table = grid_table(&basis, &set, &grid).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let n = 100_000usize;
        let mut mean = [0.0f64; 3];
        let mut cov = [[0.0f64; 3]; 3];
        for _ in 0..n {
            let p = sample_path(&spec, &grid, &mut rng).unwrap();
            let y = kl_coordinates_table(&p, &table);
            for a in 0..3 {
                mean[a] += y[a];
                for b in 0..3 {
                    cov[a][b] += y[a] * y[b];
                }
            }
        }
        for a in 0..3 {
            mean[a] /= n as f64;
            let se = (basis.lambda(a + 1) / n as f64).sqrt();
            assert!(mean[a].abs() <= 5.0 * se, "mean Y_{a} = {}", mean[a]);
        }
        for a in 0..3 {
            for b in 0..3 {
                let c = cov[a][b] / n as f64 - mean[a] * mean[b];
                let target = if a == b { basis.lambda(a + 1) } else { 0.0 };
                let se = ((basis.lambda(a + 1) * basis.lambda(b + 1)
                    + if a == b { target * target } else { 0.0 })
                    / n as f64)
                    .sqrt();
                assert!(
                    (c - target).abs() <= 5.0 * se,
                    "cov(Y_{a}, Y_{b}) = {c} vs {target}"
                );
            }
        }
    }

    #[test]
    fn f_identity_variance_eq7() {
        // Var(sum f_i(t_k) dX_k) = lambda_i for BM (integration by parts)
        let spec = ProcessSpec::brownian_motion(1.0).unwrap();
        let basis = kl_closed_form(&spec, 2).unwrap();
        let grid = TimeGrid::uniform(1.0, 512).unwrap();
        let f1 = antiderivative_f(&basis, 1).unwrap();
        let fvals = f1.eval_on(&grid);
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let n = 100_000;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let p = sample_path(&spec, &grid, &mut rng).unwrap();
            let mut z = 0.0;
            for k in 0..grid.len() - 1 {
                z += fvals[k] * (p.values[k + 1] - p.values[k]);
            }
            sumsq += z * z;
        }
        let var = sumsq / n as f64;
        let lam = basis.lambda(1);
        let se = (2.0 / n as f64).sqrt() * lam;
        assert!((var - lam).abs() <= 5.0 * se, "Var = {var} vs {lam}");
    }

    #[test]
    fn checked_coordinates_reject_coarse_grids() {
        let basis = kl_closed_form(&ProcessSpec::brownian_motion(1.0).unwrap(), 4).unwrap();
        let grid = TimeGrid::uniform(1.0, 64).unwrap();
        let path = ProcessPath::new(grid, vec![0.0; 64]).unwrap();
        let set = IndexSet::new(vec![4]).unwrap();
        assert!(matches!(
            kl_coordinates_checked(&path, &basis, &set),
            Err(Error::Resolution(_))
        ));
    }

    #[test]
    fn basis_json_round_trip() {
        let spec = ProcessSpec::fractional_brownian_motion(1.0, 0.25).unwrap();
        let basis = kl_nystrom(&spec, 3, 80).unwrap();
        let json = serde_json::to_string(&basis).unwrap();
        assert!(json.contains("\"representation\":\"nystrom\""));
        let back: KLBasis = serde_json::from_str(&json).unwrap();
        assert_eq!(back.m(), 3);
        let e_orig = basis.eigenfunction(2).unwrap();
        let e_back = back.eigenfunction(2).unwrap();
        for k in 0..=10 {
            let t = k as f64 / 10.0;
            assert_abs_diff_eq!(e_orig.eval(t), e_back.eval(t), epsilon = 1e-10);
        }

        let cf = kl_closed_form(&ProcessSpec::brownian_motion(2.0).unwrap(), 4).unwrap();
        let json = serde_json::to_string(&cf).unwrap();
        assert!(json.contains("\"representation\":\"closed_form\""));
        let back: KLBasis = serde_json::from_str(&json).unwrap();
        assert_abs_diff_eq!(back.lambda(1), cf.lambda(1), epsilon = 1e-15);
    }

    #[test]
    fn index_set_invariants() {
        assert!(IndexSet::new(vec![]).is_err());
        assert!(IndexSet::new(vec![0]).is_err());
        let s = IndexSet::new(vec![3, 1, 3]).unwrap();
        assert_eq!(s.indices(), &[1, 3]);
        assert!(s.check_within(2).is_err());
    }
}
