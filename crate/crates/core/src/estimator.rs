//! Iterative weighted-least-squares solvers for one broadcast round.
//!
//! All solvers share a single Gauss-Newton engine. They differ only in which
//! rows enter the linearized system:
//!
//! * [`solve_las_sdt`]: every Doppler and pseudorange row.
//! * [`solve_las_sdt_v`]: those rows plus an external velocity
//!   pseudo-measurement, weighted by its inverse covariance.
//! * [`solve_las_sdt_k`]: those rows plus an external clock-drift
//!   pseudo-measurement.
//! * [`crate::analysis::solve_lspm_uvd`]: pseudorange rows only (baseline).
//!
//! Each iteration solves `(G' W G) step = G' W r` at the current iterate and
//! stops once the position/clock-offset part of the step drops below the
//! threshold. There is no damping or line search. A run that exhausts
//! `max_iter` returns its lowest-objective iterate with `converged = false`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{weighted_gram, weighted_rhs, SpdSystem};
use crate::model::{
    h_eval, jacobian, weighted_norm_sq, AidingDrift, AidingVelocity, AnchorLayout, MeasurementSet, ParameterVector,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iter: usize,
    /// Threshold on the norm of the position and clock-offset step, meters.
    pub thr: f64,
    pub theta0: ParameterVector,
}

impl SolverConfig {
    pub fn new(max_iter: usize, thr: f64, theta0: ParameterVector) -> Result<Self> {
        if max_iter == 0 {
            return Err(Error::InvalidInput("max_iter must be at least 1".into()));
        }
        if !(thr > 0.0 && thr.is_finite()) {
            return Err(Error::InvalidInput(format!("thr must be positive, got {thr}")));
        }
        Ok(Self { max_iter, thr, theta0 })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub theta_hat: ParameterVector,
    /// Inverse normal matrix evaluated at `theta_hat`.
    pub covariance: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Norm of the last position/clock-offset step, meters.
    pub final_step_norm: f64,
    /// Weighted residual norm at every linearization point, in order; the
    /// last entry is the objective at the final iterate.
    pub objective_history: Vec<f64>,
}

impl SolveResult {
    pub fn objective(&self) -> f64 {
        self.objective_history.last().copied().unwrap_or(f64::NAN)
    }
}

/// One Gauss-Newton step `(G' W G)^-1 G' W r` with `W = diag(w)`.
///
/// The normal matrix is equilibrated and Cholesky-factored; an equilibrated
/// condition number above 1e12 is reported as
/// [`Error::SingularNormalMatrix`].
pub fn wls_step(residual: &DVector<f64>, g: &DMatrix<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
    check_system(residual, g, w)?;
    let normal = SpdSystem::factor(&weighted_gram(g, w), |condition| Error::SingularNormalMatrix {
        condition,
    })?;
    Ok(normal.solve(&weighted_rhs(g, w, residual)))
}

fn check_system(residual: &DVector<f64>, g: &DMatrix<f64>, w: &DVector<f64>) -> Result<()> {
    if g.nrows() != residual.len() || g.nrows() != w.len() {
        return Err(Error::InvalidInput(format!(
            "system shape mismatch: G is {}x{}, residual {}, weights {}",
            g.nrows(),
            g.ncols(),
            residual.len(),
            w.len()
        )));
    }
    if w.iter().any(|wi| !(*wi > 0.0 && wi.is_finite())) {
        return Err(Error::InvalidInput("weights must be positive and finite".into()));
    }
    Ok(())
}

/// Extra pseudo-measurement rows appended below the broadcast rows.
#[derive(Debug, Clone)]
pub(crate) enum Aiding {
    None,
    /// Whitened velocity rows: `L^-1 (v_tilde - v)` with `Sigma_v = L L'`.
    Velocity {
        v_tilde: DVector<f64>,
        whitener: DMatrix<f64>,
    },
    Drift(AidingDrift),
}

impl Aiding {
    pub(crate) fn velocity(aiding: &AidingVelocity) -> Result<Self> {
        let chol = aiding
            .sigma_v
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidInput("velocity covariance must be positive definite".into()))?;
        let n = aiding.dim();
        let whitener = chol
            .l()
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .ok_or_else(|| Error::InvalidInput("velocity covariance is singular".into()))?;
        Ok(Aiding::Velocity {
            v_tilde: aiding.v_tilde.clone(),
            whitener,
        })
    }

    fn rows(&self) -> usize {
        match self {
            Aiding::None => 0,
            Aiding::Velocity { v_tilde, .. } => v_tilde.len(),
            Aiding::Drift(_) => 1,
        }
    }
}

pub(crate) struct Linearization {
    pub residual: DVector<f64>,
    pub design: DMatrix<f64>,
}

/// A stacked least-squares problem: broadcast rows (optionally TOA only)
/// followed by aiding rows.
pub(crate) struct Problem<'a> {
    layout: &'a AnchorLayout,
    observed: DVector<f64>,
    weights: DVector<f64>,
    toa_only: bool,
    aiding: Aiding,
}

impl<'a> Problem<'a> {
    pub(crate) fn broadcast(tau: &MeasurementSet, layout: &'a AnchorLayout, aiding: Aiding) -> Result<Self> {
        if tau.len() != layout.len() {
            return Err(Error::InvalidInput(format!(
                "{} measurements for {} anchors",
                tau.len(),
                layout.len()
            )));
        }
        Self::assemble(layout, tau.tau(), tau.noise.weights(), false, aiding)
    }

    pub(crate) fn toa_only(rho: &DVector<f64>, sigma_rho: &DVector<f64>, layout: &'a AnchorLayout) -> Result<Self> {
        if rho.len() != layout.len() || sigma_rho.len() != layout.len() {
            return Err(Error::InvalidInput(format!(
                "{} pseudoranges and {} STDs for {} anchors",
                rho.len(),
                sigma_rho.len(),
                layout.len()
            )));
        }
        if sigma_rho.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidInput("noise STDs must be positive and finite".into()));
        }
        let weights = sigma_rho.map(|s| 1.0 / (s * s));
        Self::assemble(layout, rho.clone(), weights, true, Aiding::None)
    }

    fn assemble(
        layout: &'a AnchorLayout,
        broadcast: DVector<f64>,
        broadcast_weights: DVector<f64>,
        toa_only: bool,
        aiding: Aiding,
    ) -> Result<Self> {
        let base = broadcast.len();
        let extra = aiding.rows();
        let mut observed = DVector::zeros(base + extra);
        let mut weights = DVector::from_element(base + extra, 1.0);
        observed.rows_mut(0, base).copy_from(&broadcast);
        weights.rows_mut(0, base).copy_from(&broadcast_weights);
        match &aiding {
            Aiding::None => {}
            Aiding::Velocity { v_tilde, whitener } => {
                if v_tilde.len() != layout.dim() {
                    return Err(Error::InvalidInput("aiding velocity dimension mismatch".into()));
                }
                observed.rows_mut(base, extra).copy_from(&(whitener * v_tilde));
            }
            Aiding::Drift(d) => {
                observed[base] = d.k_tilde;
                weights[base] = 1.0 / (d.sigma_k * d.sigma_k);
            }
        }
        Ok(Self {
            layout,
            observed,
            weights,
            toa_only,
            aiding,
        })
    }

    pub(crate) fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    /// Model prediction and design matrix stacked in the same row order as
    /// the observations.
    pub(crate) fn model(&self, theta: &ParameterVector) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let n = self.layout.dim();
        if theta.dim() != n {
            return Err(Error::InvalidInput(format!(
                "parameter dimension {} does not match layout dimension {n}",
                theta.dim()
            )));
        }
        let m = self.layout.len();
        let h = h_eval(theta, self.layout)?;
        let g = jacobian(theta, self.layout)?;
        let (h, g) = if self.toa_only {
            (h.rows(m, m).into_owned(), g.rows(m, m).into_owned())
        } else {
            (h, g)
        };
        let base = h.len();
        let rows = self.observed.len();
        let mut pred = DVector::zeros(rows);
        let mut design = DMatrix::zeros(rows, 2 * n + 2);
        pred.rows_mut(0, base).copy_from(&h);
        design.rows_mut(0, base).copy_from(&g);
        match &self.aiding {
            Aiding::None => {}
            Aiding::Velocity { whitener, .. } => {
                pred.rows_mut(base, n).copy_from(&(whitener * &theta.v));
                design.view_mut((base, n + 1), (n, n)).copy_from(whitener);
            }
            Aiding::Drift(_) => {
                pred[base] = theta.k;
                design[(base, 2 * n + 1)] = 1.0;
            }
        }
        Ok((pred, design))
    }

    pub(crate) fn linearize(&self, theta: &ParameterVector) -> Result<Linearization> {
        let (pred, design) = self.model(theta)?;
        Ok(Linearization {
            residual: &self.observed - pred,
            design,
        })
    }
}

struct Iterate {
    theta: ParameterVector,
    objective: f64,
    design: DMatrix<f64>,
}

pub(crate) fn gauss_newton(problem: &Problem<'_>, cfg: &SolverConfig) -> Result<SolveResult> {
    let n = cfg.theta0.dim();
    let w = problem.weights();
    let mut theta = cfg.theta0.clone();
    let mut history = Vec::with_capacity(cfg.max_iter + 1);
    let mut best: Option<Iterate> = None;
    let mut converged = false;
    let mut iterations = 0;
    let mut step_norm = f64::INFINITY;

    for s in 1..=cfg.max_iter {
        let lin = problem.linearize(&theta).map_err(|e| e.at_iteration(s))?;
        let objective = weighted_norm_sq(&lin.residual, w);
        history.push(objective);
        let step = wls_step(&lin.residual, &lin.design, w).map_err(|e| e.at_iteration(s))?;
        if best.as_ref().is_none_or(|b| objective < b.objective) {
            best = Some(Iterate {
                theta: theta.clone(),
                objective,
                design: lin.design,
            });
        }
        theta.add_flat(&step);
        iterations = s;
        step_norm = step.rows(0, n + 1).norm();
        if step_norm < cfg.thr {
            converged = true;
            break;
        }
    }

    let finish = match problem.linearize(&theta) {
        Ok(lin) => {
            let objective = weighted_norm_sq(&lin.residual, w);
            history.push(objective);
            let last = Iterate {
                theta,
                objective,
                design: lin.design,
            };
            match best {
                Some(b) if !converged && b.objective < last.objective => b,
                _ => last,
            }
        }
        Err(e) if converged => return Err(e.at_iteration(iterations)),
        Err(_) => best.expect("at least one iteration ran"),
    };

    let normal = SpdSystem::factor(&weighted_gram(&finish.design, w), |condition| {
        Error::SingularNormalMatrix { condition }
    })
    .map_err(|e| e.at_iteration(iterations))?;

    Ok(SolveResult {
        theta_hat: finish.theta,
        covariance: normal.inverse(),
        iterations,
        converged,
        final_step_norm: step_norm,
        objective_history: history,
    })
}

fn check_cfg(layout: &AnchorLayout, cfg: &SolverConfig) -> Result<()> {
    if cfg.theta0.dim() != layout.dim() {
        return Err(Error::InvalidInput(format!(
            "initial estimate is {}D but the layout is {}D",
            cfg.theta0.dim(),
            layout.dim()
        )));
    }
    Ok(())
}

/// Joint position, clock offset, velocity and drift from one round of
/// Doppler and pseudorange measurements.
pub fn solve_las_sdt(tau: &MeasurementSet, layout: &AnchorLayout, cfg: &SolverConfig) -> Result<SolveResult> {
    check_cfg(layout, cfg)?;
    gauss_newton(&Problem::broadcast(tau, layout, Aiding::None)?, cfg)
}

/// [`solve_las_sdt`] fused with an external velocity measurement.
pub fn solve_las_sdt_v(
    tau: &MeasurementSet,
    aiding: &AidingVelocity,
    layout: &AnchorLayout,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    check_cfg(layout, cfg)?;
    gauss_newton(&Problem::broadcast(tau, layout, Aiding::velocity(aiding)?)?, cfg)
}

/// [`solve_las_sdt`] fused with an external clock-drift measurement.
pub fn solve_las_sdt_k(
    tau: &MeasurementSet,
    aiding: &AidingDrift,
    layout: &AnchorLayout,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    check_cfg(layout, cfg)?;
    gauss_newton(&Problem::broadcast(tau, layout, Aiding::Drift(*aiding))?, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NoiseSpec;

    fn square_layout() -> AnchorLayout {
        AnchorLayout::new(
            vec![
                vec![0.0, 0.0],
                vec![300.0, 0.0],
                vec![600.0, 0.0],
                vec![600.0, 300.0],
                vec![600.0, 600.0],
                vec![300.0, 600.0],
                vec![0.0, 600.0],
                vec![0.0, 300.0],
            ],
            0.05,
        )
        .unwrap()
    }

    fn truth() -> ParameterVector {
        ParameterVector::new(&[220.0, 340.0], 1.5e5, &[12.0, -30.0], 2500.0).unwrap()
    }

    #[test]
    fn wls_step_consistent_and_zero() {
        let g = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, -1.0]);
        let w = DVector::from_vec(vec![1.0, 4.0, 0.5, 2.0]);
        let x = DVector::from_vec(vec![3.0, -2.0]);
        let step = wls_step(&(&g * &x), &g, &w).unwrap();
        assert!((step - &x).amax() < 1e-9);
        let zero = wls_step(&DVector::zeros(4), &g, &w).unwrap();
        assert_eq!(zero.amax(), 0.0);
    }

    #[test]
    fn wls_step_rejects_rank_deficiency() {
        let g = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, -1.0, -2.0]);
        let w = DVector::from_element(3, 1.0);
        assert!(matches!(
            wls_step(&DVector::zeros(3), &g, &w),
            Err(Error::SingularNormalMatrix { .. })
        ));
    }

    #[test]
    fn starting_at_the_truth_is_a_fixed_point() {
        let layout = square_layout();
        let theta = truth();
        let tau = MeasurementSet::noiseless(&theta, &layout, NoiseSpec::uniform(8, 5.0, 1.0).unwrap()).unwrap();
        let cfg = SolverConfig::new(10, 1e-2, theta.clone()).unwrap();
        let res = solve_las_sdt(&tau, &layout, &cfg).unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 1);
        assert!(res.final_step_norm < 1e-6);
    }

    #[test]
    fn non_convergence_is_reported_not_raised() {
        let layout = square_layout();
        let theta = truth();
        let tau = MeasurementSet::noiseless(&theta, &layout, NoiseSpec::uniform(8, 5.0, 1.0).unwrap()).unwrap();
        let mut start = theta.clone();
        start.p[0] += 60.0;
        start.b = tau.rho[0];
        start.k = 0.0;
        start.v.fill(0.0);
        let cfg = SolverConfig::new(1, 1e-2, start).unwrap();
        let res = solve_las_sdt(&tau, &layout, &cfg).unwrap();
        assert!(!res.converged);
        assert_eq!(res.iterations, 1);
        assert_eq!(res.objective_history.len(), 2);
        assert!(res.objective() <= res.objective_history[0]);
    }

    #[test]
    fn degenerate_iterate_carries_iteration_index() {
        let layout = square_layout();
        let theta = truth();
        let tau = MeasurementSet::noiseless(&theta, &layout, NoiseSpec::uniform(8, 5.0, 1.0).unwrap()).unwrap();
        let start = ParameterVector::new(&[0.0, 0.0], 0.0, &[0.0, 0.0], 0.0).unwrap();
        let cfg = SolverConfig::new(10, 1e-2, start).unwrap();
        match solve_las_sdt(&tau, &layout, &cfg) {
            Err(Error::Iteration { iteration, source }) => {
                assert_eq!(iteration, 1);
                assert!(matches!(*source, Error::DegenerateGeometry { anchor: 0, .. }));
            }
            other => panic!("expected iteration error, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let theta = truth();
        assert!(SolverConfig::new(0, 1e-2, theta.clone()).is_err());
        assert!(SolverConfig::new(10, 0.0, theta).is_err());
    }
}
