//! Fisher information, Cramér-Rao bounds and bias predictions.
//!
//! All bounds are evaluated at the true parameter vector. For Gaussian noise
//! the FIM of the broadcast model is `F = G' W G`; velocity aiding adds
//! `L' Sigma_v^-1 L` with `L = [0, I, 0]` selecting the velocity columns,
//! drift aiding adds `e e' / sigma_k^2` on the drift column. The TOA-only
//! baseline keeps just the pseudorange rows of `G`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimator::{gauss_newton, Problem, SolveResult, SolverConfig};
use crate::linalg::{min_eigenvalue, spectral_norm_sym, weighted_gram, SpdSystem};
use crate::model::{jacobian, AidingDrift, AidingVelocity, AnchorLayout, NoiseSpec, ParameterVector};

/// Tolerance on normalized minimum eigenvalues in the ordering checks.
pub const PSD_TOLERANCE: f64 = -1e-10;

/// Root-sum-square errors grouped by parameter block.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BlockRmse {
    /// Meters.
    pub position: f64,
    /// Meters.
    pub clock_offset: f64,
    /// Meters/second.
    pub velocity: f64,
    /// Meters/second.
    pub drift: f64,
}

impl BlockRmse {
    /// Square roots of block sums of per-parameter mean squares (for
    /// example a CRLB diagonal), in flattened `[p; b; v; k]` order.
    pub fn from_mean_squares(n: usize, ms: &DVector<f64>) -> Self {
        Self::from_block_sums(BlockSums::from_flat(n, ms))
    }

    pub(crate) fn from_block_sums(s: BlockSums) -> Self {
        Self {
            position: s.0[0].sqrt(),
            clock_offset: s.0[1].sqrt(),
            velocity: s.0[2].sqrt(),
            drift: s.0[3].sqrt(),
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.position, self.clock_offset, self.velocity, self.drift]
    }
}

/// Per-block sums of squares: position, clock offset, velocity, drift.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct BlockSums(pub [f64; 4]);

impl BlockSums {
    pub fn from_flat(n: usize, sq: &DVector<f64>) -> Self {
        let mut s = [0.0; 4];
        for (i, x) in sq.iter().enumerate() {
            s[block_of(n, i)] += x;
        }
        Self(s)
    }

    pub fn add(&mut self, other: &BlockSums) {
        for (a, b) in self.0.iter_mut().zip(other.0) {
            *a += b;
        }
    }

    pub fn scaled(&self, f: f64) -> Self {
        Self(self.0.map(|x| x * f))
    }
}

fn block_of(n: usize, i: usize) -> usize {
    match i {
        i if i < n => 0,
        i if i == n => 1,
        i if i <= 2 * n => 2,
        _ => 3,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FimReport {
    pub fim: DMatrix<f64>,
    /// Diagonal of `fim^-1`, one entry per parameter.
    pub crlb: DVector<f64>,
    pub grouped_rmse: BlockRmse,
}

impl FimReport {
    fn from_fim(n: usize, fim: DMatrix<f64>) -> Result<Self> {
        let inv = invert_fim(&fim)?;
        let crlb = inv.diagonal();
        Ok(Self {
            grouped_rmse: BlockRmse::from_mean_squares(n, &crlb),
            fim,
            crlb,
        })
    }
}

fn invert_fim(fim: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(SpdSystem::factor(fim, |condition| Error::SingularFim { condition })?.inverse())
}

fn check_inputs(theta: &ParameterVector, layout: &AnchorLayout, noise: &NoiseSpec) -> Result<()> {
    if noise.len() != layout.len() {
        return Err(Error::InvalidInput(format!(
            "noise spec has {} entries for {} anchors",
            noise.len(),
            layout.len()
        )));
    }
    if theta.dim() != layout.dim() {
        return Err(Error::InvalidInput("parameter/layout dimension mismatch".into()));
    }
    Ok(())
}

/// `G' W G` of the full Doppler + pseudorange model.
fn broadcast_fim(theta: &ParameterVector, layout: &AnchorLayout, noise: &NoiseSpec) -> Result<DMatrix<f64>> {
    check_inputs(theta, layout, noise)?;
    Ok(weighted_gram(&jacobian(theta, layout)?, &noise.weights()))
}

fn velocity_information(n: usize, aiding: &AidingVelocity) -> Result<DMatrix<f64>> {
    if aiding.dim() != n {
        return Err(Error::InvalidInput("aiding velocity dimension mismatch".into()));
    }
    let info = aiding
        .sigma_v
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("velocity covariance must be positive definite".into()))?
        .inverse();
    let mut out = DMatrix::zeros(2 * n + 2, 2 * n + 2);
    out.view_mut((n + 1, n + 1), (n, n)).copy_from(&info);
    Ok(out)
}

fn drift_information(n: usize, aiding: &AidingDrift) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(2 * n + 2, 2 * n + 2);
    out[(2 * n + 1, 2 * n + 1)] = 1.0 / (aiding.sigma_k * aiding.sigma_k);
    out
}

/// FIM and CRLB of the joint Doppler + pseudorange model.
pub fn fim_sdt(theta: &ParameterVector, layout: &AnchorLayout, noise: &NoiseSpec) -> Result<FimReport> {
    FimReport::from_fim(theta.dim(), broadcast_fim(theta, layout, noise)?)
}

/// FIM and CRLB with velocity aiding.
pub fn fim_sdt_v(
    theta: &ParameterVector,
    layout: &AnchorLayout,
    noise: &NoiseSpec,
    aiding: &AidingVelocity,
) -> Result<FimReport> {
    let n = theta.dim();
    let fim = broadcast_fim(theta, layout, noise)? + velocity_information(n, aiding)?;
    FimReport::from_fim(n, fim)
}

/// FIM and CRLB with clock-drift aiding.
pub fn fim_sdt_k(
    theta: &ParameterVector,
    layout: &AnchorLayout,
    noise: &NoiseSpec,
    aiding: &AidingDrift,
) -> Result<FimReport> {
    let n = theta.dim();
    let fim = broadcast_fim(theta, layout, noise)? + drift_information(n, aiding);
    FimReport::from_fim(n, fim)
}

/// FIM and CRLB of the pseudorange-only baseline.
pub fn fim_lspm_uvd(theta: &ParameterVector, layout: &AnchorLayout, noise: &NoiseSpec) -> Result<FimReport> {
    check_inputs(theta, layout, noise)?;
    let m = layout.len();
    let g = jacobian(theta, layout)?;
    let g_rho = g.rows(m, m).into_owned();
    let w_rho = noise.sigma_rho.map(|s| 1.0 / (s * s));
    FimReport::from_fim(theta.dim(), weighted_gram(&g_rho, &w_rho))
}

/// Gauss-Newton solve of the pseudorange-only baseline: the same iteration
/// as [`crate::estimator::solve_las_sdt`] restricted to the `M` TOA rows.
pub fn solve_lspm_uvd(
    rho: &DVector<f64>,
    sigma_rho: &DVector<f64>,
    layout: &AnchorLayout,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    if cfg.theta0.dim() != layout.dim() {
        return Err(Error::InvalidInput("initial estimate/layout dimension mismatch".into()));
    }
    gauss_newton(&Problem::toa_only(rho, sigma_rho, layout)?, cfg)
}

/// Predicted error statistics under a deterministic aiding offset.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasPrediction {
    pub bias: DVector<f64>,
    pub variance: DMatrix<f64>,
    /// Per block, `sqrt(|bias_block|^2 + tr(variance_block))`.
    pub rmse: BlockRmse,
}

impl BiasPrediction {
    fn new(n: usize, bias: DVector<f64>, variance: DMatrix<f64>) -> Self {
        let ms = bias.map(|b| b * b) + variance.diagonal();
        Self {
            rmse: BlockRmse::from_mean_squares(n, &ms),
            bias,
            variance,
        }
    }
}

/// Bias, variance and RMSE of the velocity-aided estimator when the aiding
/// is off by `delta_v = v_true - v_aiding`.
///
/// The bias is the WLS response to the error vector `[0_2M; delta_v]`,
/// i.e. `F_v^-1 Sigma_v^-1 delta_v` placed on the velocity columns.
pub fn bias_deviated_velocity(
    theta: &ParameterVector,
    layout: &AnchorLayout,
    noise: &NoiseSpec,
    aiding: &AidingVelocity,
    delta_v: &[f64],
) -> Result<BiasPrediction> {
    let n = theta.dim();
    if delta_v.len() != n {
        return Err(Error::InvalidInput("velocity deviation dimension mismatch".into()));
    }
    let fim = broadcast_fim(theta, layout, noise)? + velocity_information(n, aiding)?;
    let normal = SpdSystem::factor(&fim, |condition| Error::SingularNormalMatrix { condition })?;
    let info = aiding
        .sigma_v
        .clone()
        .cholesky()
        .expect("validated positive definite")
        .inverse();
    let mut rhs = DVector::zeros(2 * n + 2);
    rhs.rows_mut(n + 1, n)
        .copy_from(&(info * DVector::from_column_slice(delta_v)));
    Ok(BiasPrediction::new(n, normal.solve(&rhs), normal.inverse()))
}

/// Bias, variance and RMSE of the drift-aided estimator when the aiding is
/// off by `delta_k = k_true - k_aiding`.
pub fn bias_deviated_drift(
    theta: &ParameterVector,
    layout: &AnchorLayout,
    noise: &NoiseSpec,
    aiding: &AidingDrift,
    delta_k: f64,
) -> Result<BiasPrediction> {
    let n = theta.dim();
    let fim = broadcast_fim(theta, layout, noise)? + drift_information(n, aiding);
    let normal = SpdSystem::factor(&fim, |condition| Error::SingularNormalMatrix { condition })?;
    let mut rhs = DVector::zeros(2 * n + 2);
    rhs[2 * n + 1] = delta_k / (aiding.sigma_k * aiding.sigma_k);
    Ok(BiasPrediction::new(n, normal.solve(&rhs), normal.inverse()))
}

/// The `N x N` matrix `S` with `|bias|^2 = delta_v' S delta_v`, assembled
/// from the explicit gain `S1 = (G_v' W_v G_v)^-1 G_v' W_v` and the selector
/// `S2 = [0_{2M x N}; I_N]`.
pub fn velocity_bias_gain(
    theta: &ParameterVector,
    layout: &AnchorLayout,
    noise: &NoiseSpec,
    aiding: &AidingVelocity,
) -> Result<DMatrix<f64>> {
    check_inputs(theta, layout, noise)?;
    let n = theta.dim();
    let m = layout.len();
    let g = jacobian(theta, layout)?;
    let rows = 2 * m + n;
    let mut g_v = DMatrix::zeros(rows, 2 * n + 2);
    g_v.rows_mut(0, 2 * m).copy_from(&g);
    g_v.view_mut((2 * m, n + 1), (n, n)).fill_with_identity();

    let info = aiding
        .sigma_v
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("velocity covariance must be positive definite".into()))?
        .inverse();
    let mut w_v = DMatrix::zeros(rows, rows);
    w_v.view_mut((0, 0), (2 * m, 2 * m)).set_diagonal(&noise.weights());
    w_v.view_mut((2 * m, 2 * m), (n, n)).copy_from(&info);

    let gtw = g_v.transpose() * &w_v;
    let fim_inv = invert_fim(&(&gtw * &g_v))?;
    let s1 = fim_inv * gtw;
    let mut s2 = DMatrix::zeros(rows, n);
    s2.view_mut((2 * m, 0), (n, n)).fill_with_identity();
    let s1s2 = s1 * s2;
    Ok(s1s2.transpose() * s1s2)
}

/// Outcome of the three ordering/bound checks on one geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct RemarkReport {
    /// Doppler rows never hurt: `F - F_toa` is PSD and every CRLB entry is
    /// strictly below the TOA-only one.
    pub doppler_gain: bool,
    /// `lambda_min(F - F_toa) / |F|`.
    pub doppler_eig_margin: f64,
    /// `min_i (CRLB_toa[i] - CRLB[i]) / CRLB_toa[i]`.
    pub doppler_crlb_margin: f64,

    /// Aiding never hurts, for both velocity and drift aiding.
    pub aiding_gain: bool,
    /// `lambda_min(F_v - F) / |F_v|`.
    pub velocity_eig_margin: f64,
    /// `lambda_min(F^-1 - F_v^-1) / |F^-1|`.
    pub velocity_inverse_margin: f64,
    pub drift_eig_margin: f64,
    pub drift_inverse_margin: f64,

    /// Squared bias grows at least like `beta |delta_v|^2`.
    pub bias_growth: bool,
    /// Smallest eigenvalue of the bias gain matrix.
    pub beta: f64,
    /// `min (|bias|^2 - beta |delta_v|^2)` over unit deviations.
    pub bias_margin: f64,
}

impl RemarkReport {
    pub fn all_pass(&self) -> bool {
        self.doppler_gain && self.aiding_gain && self.bias_growth
    }
}

/// Unit deviation directions: evenly spaced on the circle, or a Fibonacci
/// lattice on the sphere.
fn unit_directions(n: usize, count: usize) -> Vec<DVector<f64>> {
    (0..count)
        .map(|i| {
            if n == 2 {
                let a = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
                DVector::from_vec(vec![a.cos(), a.sin()])
            } else {
                let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
                let r = (1.0 - z * z).sqrt();
                let a = i as f64 * std::f64::consts::PI * (3.0 - 5f64.sqrt());
                DVector::from_vec(vec![r * a.cos(), r * a.sin(), z])
            }
        })
        .collect()
}

fn normalized_min_eig(diff: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    min_eigenvalue(diff) / spectral_norm_sym(reference)
}

/// Numerical check of the three orderings: Doppler rows add information,
/// aiding adds information, and the deviated-velocity bias is bounded below
/// by a positive quadratic.
pub fn remark_checks(
    theta: &ParameterVector,
    layout: &AnchorLayout,
    noise: &NoiseSpec,
    aiding_v: &AidingVelocity,
    aiding_k: &AidingDrift,
) -> Result<RemarkReport> {
    let n = theta.dim();
    let full = fim_sdt(theta, layout, noise)?;
    let toa = fim_lspm_uvd(theta, layout, noise)?;
    let with_v = fim_sdt_v(theta, layout, noise, aiding_v)?;
    let with_k = fim_sdt_k(theta, layout, noise, aiding_k)?;

    let doppler_eig_margin = normalized_min_eig(&(&full.fim - &toa.fim), &full.fim);
    let doppler_crlb_margin = full
        .crlb
        .iter()
        .zip(toa.crlb.iter())
        .map(|(c, t)| (t - c) / t)
        .fold(f64::INFINITY, f64::min);

    let inv_full = invert_fim(&full.fim)?;
    let velocity_eig_margin = normalized_min_eig(&(&with_v.fim - &full.fim), &with_v.fim);
    let velocity_inverse_margin = normalized_min_eig(&(&inv_full - invert_fim(&with_v.fim)?), &inv_full);
    let drift_eig_margin = normalized_min_eig(&(&with_k.fim - &full.fim), &with_k.fim);
    let drift_inverse_margin = normalized_min_eig(&(&inv_full - invert_fim(&with_k.fim)?), &inv_full);
    let crlb_not_worse =
        |aided: &DVector<f64>| aided.iter().zip(full.crlb.iter()).all(|(a, c)| *a <= c * (1.0 + 1e-10));

    let s = velocity_bias_gain(theta, layout, noise, aiding_v)?;
    let beta = min_eigenvalue(&s);
    let bias_margin = unit_directions(n, 64)
        .iter()
        .map(|dv| -> Result<f64> {
            let pred = bias_deviated_velocity(theta, layout, noise, aiding_v, dv.as_slice())?;
            Ok(pred.bias.norm_squared() - beta * dv.norm_squared())
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);

    Ok(RemarkReport {
        doppler_gain: doppler_eig_margin >= PSD_TOLERANCE && doppler_crlb_margin > 0.0,
        doppler_eig_margin,
        doppler_crlb_margin,
        aiding_gain: velocity_eig_margin >= PSD_TOLERANCE
            && velocity_inverse_margin >= PSD_TOLERANCE
            && drift_eig_margin >= PSD_TOLERANCE
            && drift_inverse_margin >= PSD_TOLERANCE
            && crlb_not_worse(&with_v.crlb)
            && crlb_not_worse(&with_k.crlb),
        velocity_eig_margin,
        velocity_inverse_margin,
        drift_eig_margin,
        drift_inverse_margin,
        bias_growth: beta > 0.0 && bias_margin >= -1e-9,
        beta,
        bias_margin,
    })
}
