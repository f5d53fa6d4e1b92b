use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::problem::{time_warp_indices, CostBreakdown, NormalEquations, TrackingProblem};
use super::CostWeights;
use crate::depthflow::ObjectFlow3D;
use crate::kinematics::{IkParams, JointTrajectory, RobotModel};
use crate::se3::{fit_rigid_visible, RigidTransform};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LmOptions {
    pub initial_damping: f64,
    /// Damping multiplier on rejection; its inverse is applied on acceptance.
    pub damping_factor: f64,
    pub max_iterations: usize,
    /// Infinity-norm threshold on the cost gradient.
    pub gradient_tolerance: f64,
    /// Relative decrease below which an iteration counts as stalled.
    pub stall_tolerance: f64,
    pub stall_iterations: usize,
    /// Seconds per step recorded on the returned trajectory.
    pub dt: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            initial_damping: 1e-3,
            damping_factor: 10.0,
            max_iterations: 300,
            gradient_tolerance: 1e-8,
            stall_tolerance: 1e-10,
            stall_iterations: 10,
            dt: 0.1,
        }
    }
}

/// Starting point for the optimizer.
#[derive(Clone, Debug)]
pub enum TrajectorySeed {
    /// The same configuration at every step.
    Constant(DVector<f64>),
    /// One configuration per step.
    Full(Vec<DVector<f64>>),
}

#[derive(Clone, Debug)]
pub struct TrajOptResult {
    pub trajectory: JointTrajectory,
    pub ee_poses: Vec<RigidTransform>,
    pub costs: CostBreakdown,
    pub converged: bool,
    pub iterations: usize,
    /// Total cost after each accepted step, starting with the seed.
    pub cost_history: Vec<f64>,
}

/// Levenberg–Marquardt over the stacked joint trajectory.
///
/// Only steps that strictly lower the total cost are accepted, so the
/// returned iterate is always the best one seen.
#[allow(clippy::too_many_arguments)]
pub fn optimize_trajectory(
    model: &RobotModel,
    flow: &ObjectFlow3D,
    grasp: &RigidTransform,
    grasped: &[usize],
    weights: CostWeights,
    seed: &TrajectorySeed,
    horizon: usize,
    options: &LmOptions,
) -> Result<TrajOptResult> {
    let problem = TrackingProblem::new(model, flow, grasp, grasped, weights, horizon)?;
    let mut traj: Vec<DVector<f64>> = match seed {
        TrajectorySeed::Constant(q) => alloc::vec![q.clone(); horizon],
        TrajectorySeed::Full(qs) => {
            if qs.len() != horizon {
                return Err(Error::InvalidInput(alloc::format!(
                    "seed has {} steps, horizon is {horizon}",
                    qs.len()
                )));
            }
            qs.clone()
        }
    };
    if traj.iter().any(|q| q.len() != model.dof() || q.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidInput("seed configuration has wrong size or non-finite entries".into()));
    }
    Ok(run_lm(&problem, &mut traj, options))
}

fn run_lm(problem: &TrackingProblem<'_>, traj: &mut Vec<DVector<f64>>, options: &LmOptions) -> TrajOptResult {
    let mut cost = problem.evaluate(traj).total;
    let mut history = alloc::vec![cost];
    let mut mu = options.initial_damping;
    let mut converged = false;
    let mut stalled = 0usize;
    let mut iterations = 0usize;
    let mut ne = problem.normal_equations(traj);

    while iterations < options.max_iterations {
        let grad_inf = ne.rhs.iter().map(|r| r.amax()).fold(0.0, f64::max) * 2.0;
        if grad_inf <= options.gradient_tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let mut decrease = 0.0;
        if let Some(step) = solve_block_tridiagonal(&ne, mu) {
            let candidate: Vec<DVector<f64>> = traj.iter().zip(&step).map(|(q, d)| q + d).collect();
            let new_cost = problem.evaluate(&candidate).total;
            if new_cost < cost {
                decrease = (cost - new_cost) / cost.abs().max(f64::MIN_POSITIVE);
                let step_norm: f64 = step.iter().map(|d| d.norm_squared()).sum::<f64>().sqrt();
                let q_norm: f64 = candidate.iter().map(|q| q.norm_squared()).sum::<f64>().sqrt();
                *traj = candidate;
                cost = new_cost;
                history.push(cost);
                mu = (mu / options.damping_factor).max(1e-12);
                ne = problem.normal_equations(traj);
                if step_norm <= 1e-14 * (q_norm + 1e-14) {
                    converged = true;
                    break;
                }
            } else {
                mu *= options.damping_factor;
            }
        } else {
            mu *= options.damping_factor;
        }
        if decrease < options.stall_tolerance {
            stalled += 1;
            if stalled >= options.stall_iterations {
                break;
            }
        } else {
            stalled = 0;
        }
        if mu > 1e16 {
            break;
        }
    }

    let costs = problem.evaluate(traj);
    let ee_poses = traj.iter().map(|q| problem.model().fk(q.as_slice())).collect();
    TrajOptResult {
        trajectory: JointTrajectory {
            configurations: traj.clone(),
            dt: options.dt,
        },
        ee_poses,
        costs,
        converged,
        iterations,
        cost_history: history,
    }
}

/// Solves `(A + μI)·δ = −rhs` where `A` is symmetric block tridiagonal.
fn solve_block_tridiagonal(ne: &NormalEquations, mu: f64) -> Option<Vec<DVector<f64>>> {
    let h = ne.diag.len();
    let d = ne.diag[0].nrows();
    let eye = DMatrix::<f64>::identity(d, d);
    let mut factors = Vec::with_capacity(h);
    let mut reduced: Vec<DVector<f64>> = Vec::with_capacity(h);
    for t in 0..h {
        let mut dt = &ne.diag[t] + &eye * mu;
        let mut rt = -&ne.rhs[t];
        if t > 0 {
            let prev: &nalgebra::linalg::Cholesky<f64, nalgebra::Dyn> = &factors[t - 1];
            // C = L_t·D'_{t−1}⁻¹, so D'_t = D_t − C·L_tᵀ and r'_t = r_t − C·r'_{t−1}.
            let c = prev.solve(&ne.lower[t].transpose()).transpose();
            dt -= &c * ne.lower[t].transpose();
            rt -= &c * &reduced[t - 1];
        }
        factors.push(dt.cholesky()?);
        reduced.push(rt);
    }
    let mut x: Vec<DVector<f64>> = alloc::vec![DVector::zeros(d); h];
    for t in (0..h).rev() {
        let mut r = reduced[t].clone();
        if t + 1 < h {
            r -= ne.lower[t + 1].transpose() * &x[t + 1];
        }
        x[t] = factors[t].solve(&r);
    }
    if x.iter().any(|v| v.iter().any(|e| !e.is_finite())) {
        return None;
    }
    Some(x)
}

/// Seed trajectory from per-step rigid fits of the grasped points followed
/// by warm-started IK on the implied end-effector poses.
pub fn initial_guess_from_flow(
    model: &RobotModel,
    flow: &ObjectFlow3D,
    grasp: &RigidTransform,
    grasped: &[usize],
    q0: &DVector<f64>,
    horizon: usize,
) -> Result<Vec<DVector<f64>>> {
    if grasped.iter().any(|&i| i >= flow.points()) {
        return Err(Error::InvalidInput("grasped index out of range".into()));
    }
    let src: Vec<_> = grasped.iter().map(|&i| flow.frame_positions(0)[i]).collect();
    let params = IkParams::default();
    let mut q = q0.clone();
    let mut last_fit = RigidTransform::identity();
    let mut out = Vec::with_capacity(horizon);
    for src_t in time_warp_indices(flow.timesteps(), horizon) {
        let dst: Vec<_> = grasped.iter().map(|&i| flow.frame_positions(src_t)[i]).collect();
        let vis: Vec<bool> = grasped.iter().map(|&i| flow.visible(0, i) && flow.visible(src_t, i)).collect();
        // Occluded steps reuse the most recent fit.
        if let Ok(fit) = fit_rigid_visible(&src, &dst, &vis) {
            last_fit = fit;
        }
        let target = last_fit.compose(grasp);
        let sol = model.ik_dls(&target, q.as_slice(), &params);
        q = sol.q;
        out.push(q.clone());
    }
    Ok(out)
}
