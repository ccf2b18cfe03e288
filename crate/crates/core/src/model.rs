//! Measurement model for a moving receiver listening to a time-division
//! broadcast of synchronized anchors.
//!
//! During one broadcast round the receiver collects, from anchor `i`
//! (0-based here), a Doppler value and a pseudorange taken at
//! `dt_i = delta_t * i` after the start of the round:
//!
//! ```text
//! u_i   = q_i - p - v * dt_i
//! d_i   = -v . u_i / |u_i| + k
//! rho_i = |u_i| + b + k * dt_i
//! ```
//!
//! Clock quantities are stored pre-multiplied by the propagation speed, so
//! `b` is in meters and `k` in meters/second.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Propagation speed used to convert clock quantities to distances.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Receiver-anchor distances below this are treated as degenerate.
pub const DEGENERACY_DISTANCE: f64 = 1e-9;

/// Converts a clock offset in seconds to meters.
pub fn seconds_to_meters(seconds: f64) -> f64 {
    seconds * SPEED_OF_LIGHT
}

/// Converts a clock drift in parts per million to meters/second.
pub fn ppm_to_mps(ppm: f64) -> f64 {
    ppm * 1e-6 * SPEED_OF_LIGHT
}

fn check_dim(n: usize) -> Result<()> {
    if n == 2 || n == 3 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "spatial dimension must be 2 or 3, got {n}"
        )))
    }
}

fn all_finite(values: &[f64]) -> bool {
    values.iter().all(|x| x.is_finite())
}

/// Receiver state: position and clock offset at the start of the round,
/// velocity and clock drift (constant over the round).
///
/// The flattened layout is `[p; b; v; k]`, length `2N + 2`; Jacobian
/// columns follow the same order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    pub p: DVector<f64>,
    pub b: f64,
    pub v: DVector<f64>,
    pub k: f64,
}

impl ParameterVector {
    pub fn new(p: &[f64], b: f64, v: &[f64], k: f64) -> Result<Self> {
        check_dim(p.len())?;
        if v.len() != p.len() {
            return Err(Error::InvalidInput(format!(
                "position has {} components but velocity has {}",
                p.len(),
                v.len()
            )));
        }
        if !all_finite(p) || !all_finite(v) || !b.is_finite() || !k.is_finite() {
            return Err(Error::InvalidInput("parameter vector must be finite".into()));
        }
        Ok(Self {
            p: DVector::from_column_slice(p),
            b,
            v: DVector::from_column_slice(v),
            k,
        })
    }

    /// Spatial dimension `N`.
    pub fn dim(&self) -> usize {
        self.p.len()
    }

    /// Number of unknowns, `2N + 2`.
    pub fn len(&self) -> usize {
        2 * self.dim() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_flat(&self) -> DVector<f64> {
        let n = self.dim();
        let mut out = DVector::zeros(2 * n + 2);
        out.rows_mut(0, n).copy_from(&self.p);
        out[n] = self.b;
        out.rows_mut(n + 1, n).copy_from(&self.v);
        out[2 * n + 1] = self.k;
        out
    }

    pub fn from_flat(n: usize, flat: &DVector<f64>) -> Result<Self> {
        check_dim(n)?;
        if flat.len() != 2 * n + 2 {
            return Err(Error::InvalidInput(format!(
                "flat parameter vector must have length {}, got {}",
                2 * n + 2,
                flat.len()
            )));
        }
        Self::new(
            flat.rows(0, n).as_slice(),
            flat[n],
            flat.rows(n + 1, n).as_slice(),
            flat[2 * n + 1],
        )
    }

    /// Applies a Gauss-Newton update in flattened coordinates.
    pub(crate) fn add_flat(&mut self, step: &DVector<f64>) {
        let n = self.dim();
        self.p += step.rows(0, n);
        self.b += step[n];
        self.v += step.rows(n + 1, n);
        self.k += step[2 * n + 1];
    }
}

/// Anchor positions in broadcast order plus the slot interval.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorLayout {
    anchors: Vec<DVector<f64>>,
    delta_t: f64,
}

impl AnchorLayout {
    pub fn new(anchors: Vec<Vec<f64>>, delta_t: f64) -> Result<Self> {
        let n = anchors
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidInput("layout needs at least one anchor".into()))?;
        check_dim(n)?;
        if anchors.iter().any(|a| a.len() != n) {
            return Err(Error::InvalidInput("anchors must share one dimension".into()));
        }
        if anchors.len() < n + 1 {
            return Err(Error::InvalidInput(format!(
                "need at least {} anchors in {n}D, got {}",
                n + 1,
                anchors.len()
            )));
        }
        if anchors.iter().any(|a| !all_finite(a)) {
            return Err(Error::InvalidInput("anchor coordinates must be finite".into()));
        }
        if !(delta_t > 0.0 && delta_t.is_finite()) {
            return Err(Error::InvalidInput(format!("delta_t must be positive, got {delta_t}")));
        }
        let anchors: Vec<DVector<f64>> = anchors.into_iter().map(DVector::from_vec).collect();
        for i in 0..anchors.len() {
            for j in (i + 1)..anchors.len() {
                if anchors[i] == anchors[j] {
                    return Err(Error::InvalidInput(format!("anchors {i} and {j} coincide")));
                }
            }
        }
        Ok(Self { anchors, delta_t })
    }

    pub fn anchors(&self) -> &[DVector<f64>] {
        &self.anchors
    }

    /// Number of anchors `M`.
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.anchors[0].len()
    }

    pub fn delta_t(&self) -> f64 {
        self.delta_t
    }

    /// Reception offset of anchor `i` (0-based) from the round start.
    pub fn dt(&self, i: usize) -> f64 {
        self.delta_t * i as f64
    }

    fn check_theta(&self, theta: &ParameterVector) -> Result<()> {
        if theta.dim() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "parameter dimension {} does not match layout dimension {}",
                theta.dim(),
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Per-measurement noise standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    /// Doppler STDs, m/s.
    pub sigma_d: DVector<f64>,
    /// Pseudorange STDs, m.
    pub sigma_rho: DVector<f64>,
}

impl NoiseSpec {
    pub fn new(sigma_d: Vec<f64>, sigma_rho: Vec<f64>) -> Result<Self> {
        if sigma_d.len() != sigma_rho.len() {
            return Err(Error::InvalidInput(
                "Doppler and TOA noise vectors differ in length".into(),
            ));
        }
        if sigma_d.iter().chain(&sigma_rho).any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidInput("noise STDs must be positive and finite".into()));
        }
        Ok(Self {
            sigma_d: DVector::from_vec(sigma_d),
            sigma_rho: DVector::from_vec(sigma_rho),
        })
    }

    pub fn uniform(m: usize, sigma_d: f64, sigma_rho: f64) -> Result<Self> {
        Self::new(vec![sigma_d; m], vec![sigma_rho; m])
    }

    pub fn len(&self) -> usize {
        self.sigma_d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma_d.is_empty()
    }

    /// Diagonal of the weight matrix `W`: inverse variances, Doppler first.
    pub fn weights(&self) -> DVector<f64> {
        let m = self.len();
        DVector::from_fn(2 * m, |i, _| {
            let s = if i < m { self.sigma_d[i] } else { self.sigma_rho[i - m] };
            1.0 / (s * s)
        })
    }

    /// Same noise with every STD multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            (&self.sigma_d * factor).as_slice().to_vec(),
            (&self.sigma_rho * factor).as_slice().to_vec(),
        )
    }
}

/// One round of Doppler and pseudorange observations.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub d: DVector<f64>,
    pub rho: DVector<f64>,
    pub noise: NoiseSpec,
}

impl MeasurementSet {
    pub fn new(d: Vec<f64>, rho: Vec<f64>, noise: NoiseSpec) -> Result<Self> {
        if d.len() != rho.len() || d.len() != noise.len() {
            return Err(Error::InvalidInput(format!(
                "measurement lengths disagree: {} Doppler, {} TOA, {} noise",
                d.len(),
                rho.len(),
                noise.len()
            )));
        }
        Ok(Self {
            d: DVector::from_vec(d),
            rho: DVector::from_vec(rho),
            noise,
        })
    }

    /// Noiseless measurements generated at `theta`, tagged with `noise`.
    pub fn noiseless(theta: &ParameterVector, layout: &AnchorLayout, noise: NoiseSpec) -> Result<Self> {
        let h = h_eval(theta, layout)?;
        let m = layout.len();
        Self::new(
            h.rows(0, m).as_slice().to_vec(),
            h.rows(m, m).as_slice().to_vec(),
            noise,
        )
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// Stacked observation vector `[d; rho]`.
    pub fn tau(&self) -> DVector<f64> {
        let m = self.len();
        let mut out = DVector::zeros(2 * m);
        out.rows_mut(0, m).copy_from(&self.d);
        out.rows_mut(m, m).copy_from(&self.rho);
        out
    }

    fn check_layout(&self, layout: &AnchorLayout) -> Result<()> {
        if self.len() != layout.len() {
            return Err(Error::InvalidInput(format!(
                "{} measurements for {} anchors",
                self.len(),
                layout.len()
            )));
        }
        Ok(())
    }
}

/// External velocity estimate with its error covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct AidingVelocity {
    pub v_tilde: DVector<f64>,
    pub sigma_v: DMatrix<f64>,
}

impl AidingVelocity {
    pub fn new(v_tilde: &[f64], sigma_v: DMatrix<f64>) -> Result<Self> {
        let n = v_tilde.len();
        check_dim(n)?;
        if sigma_v.nrows() != n || sigma_v.ncols() != n {
            return Err(Error::InvalidInput(format!("velocity covariance must be {n}x{n}")));
        }
        if !all_finite(v_tilde) || sigma_v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("velocity aiding must be finite".into()));
        }
        let scale = sigma_v.amax();
        let asym = (&sigma_v - sigma_v.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(Error::InvalidInput("velocity covariance is not symmetric".into()));
        }
        let min_eig = sigma_v.clone().symmetric_eigenvalues().min();
        if min_eig.is_nan() || min_eig <= 0.0 {
            return Err(Error::InvalidInput(
                "velocity covariance must be positive definite".into(),
            ));
        }
        Ok(Self {
            v_tilde: DVector::from_column_slice(v_tilde),
            sigma_v,
        })
    }

    /// Isotropic aiding, `sigma_v = std^2 * I`.
    pub fn isotropic(v_tilde: &[f64], std: f64) -> Result<Self> {
        let n = v_tilde.len();
        Self::new(v_tilde, DMatrix::identity(n, n) * (std * std))
    }

    pub fn dim(&self) -> usize {
        self.v_tilde.len()
    }
}

/// External clock-drift estimate with its standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AidingDrift {
    pub k_tilde: f64,
    pub sigma_k: f64,
}

impl AidingDrift {
    pub fn new(k_tilde: f64, sigma_k: f64) -> Result<Self> {
        if !k_tilde.is_finite() || !(sigma_k > 0.0 && sigma_k.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "drift aiding needs finite k and positive sigma_k, got {k_tilde}, {sigma_k}"
            )));
        }
        Ok(Self { k_tilde, sigma_k })
    }
}

/// Line-of-sight offset `q - p - v*dt` and its length.
fn offset(theta: &ParameterVector, q: &DVector<f64>, dt: f64) -> Result<(DVector<f64>, f64)> {
    if q.len() != theta.dim() {
        return Err(Error::InvalidInput(format!(
            "anchor dimension {} does not match parameter dimension {}",
            q.len(),
            theta.dim()
        )));
    }
    let u = q - &theta.p - &theta.v * dt;
    let dist = u.norm();
    if dist.is_nan() || dist < DEGENERACY_DISTANCE {
        return Err(Error::DegenerateGeometry {
            anchor: 0,
            distance: dist,
        });
    }
    Ok((u, dist))
}

fn tag_anchor(err: Error, anchor: usize) -> Error {
    match err {
        Error::DegenerateGeometry { distance, .. } => Error::DegenerateGeometry { anchor, distance },
        other => other,
    }
}

/// Noiseless pseudorange, meters.
pub fn toa_model(theta: &ParameterVector, q: &DVector<f64>, dt: f64) -> Result<f64> {
    let (_, dist) = offset(theta, q, dt)?;
    Ok(dist + theta.b + theta.k * dt)
}

/// Noiseless Doppler in velocity units, m/s.
pub fn doppler_model(theta: &ParameterVector, q: &DVector<f64>, dt: f64) -> Result<f64> {
    let (u, dist) = offset(theta, q, dt)?;
    Ok(-theta.v.dot(&u) / dist + theta.k)
}

/// Unit vector from the receiver (at reception time) to the anchor.
pub fn los_vector(theta: &ParameterVector, q: &DVector<f64>, dt: f64) -> Result<DVector<f64>> {
    let (u, dist) = offset(theta, q, dt)?;
    Ok(u / dist)
}

/// Stacked model `h(theta)`: `M` Doppler values followed by `M` pseudoranges.
pub fn h_eval(theta: &ParameterVector, layout: &AnchorLayout) -> Result<DVector<f64>> {
    layout.check_theta(theta)?;
    let m = layout.len();
    let mut out = DVector::zeros(2 * m);
    for (i, q) in layout.anchors().iter().enumerate() {
        let dt = layout.dt(i);
        let (u, dist) = offset(theta, q, dt).map_err(|e| tag_anchor(e, i))?;
        out[i] = -theta.v.dot(&u) / dist + theta.k;
        out[m + i] = dist + theta.b + theta.k * dt;
    }
    Ok(out)
}

/// Analytic Jacobian of [`h_eval`], `2M x (2N+2)`.
///
/// Doppler row: `[(v - (v.e)e)/|u|, 0, -e + dt*(v - (v.e)e)/|u|, 1]`.
/// Pseudorange row: `[-e, 1, -e*dt, dt]`.
pub fn jacobian(theta: &ParameterVector, layout: &AnchorLayout) -> Result<DMatrix<f64>> {
    layout.check_theta(theta)?;
    let n = theta.dim();
    let m = layout.len();
    let mut g = DMatrix::zeros(2 * m, 2 * n + 2);
    for (i, q) in layout.anchors().iter().enumerate() {
        let dt = layout.dt(i);
        let (u, dist) = offset(theta, q, dt).map_err(|e| tag_anchor(e, i))?;
        let e = u / dist;
        // d(-v.e)/dp: the component of v orthogonal to the LOS, over range.
        let dp = (&theta.v - &e * theta.v.dot(&e)) / dist;
        for c in 0..n {
            g[(i, c)] = dp[c];
            g[(i, n + 1 + c)] = -e[c] + dt * dp[c];
            g[(m + i, c)] = -e[c];
            g[(m + i, n + 1 + c)] = -e[c] * dt;
        }
        g[(i, 2 * n + 1)] = 1.0;
        g[(m + i, n)] = 1.0;
        g[(m + i, 2 * n + 1)] = dt;
    }
    Ok(g)
}

/// Weighted squared norm `x' diag(w) x`.
pub fn weighted_norm_sq(x: &DVector<f64>, w: &DVector<f64>) -> f64 {
    x.iter().zip(w.iter()).map(|(xi, wi)| wi * xi * xi).sum()
}

/// Gaussian log-likelihood `ln f(tau | theta)` of one round.
pub fn log_likelihood(tau: &MeasurementSet, theta: &ParameterVector, layout: &AnchorLayout) -> Result<f64> {
    tau.check_layout(layout)?;
    let residual = tau.tau() - h_eval(theta, layout)?;
    let w = tau.noise.weights();
    let m = tau.len() as f64;
    // ln|W^-1| is the sum of log variances.
    let log_det_cov: f64 = w.iter().map(|wi| -wi.ln()).sum();
    Ok(-0.5 * weighted_norm_sq(&residual, &w) - m * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det_cov)
}
