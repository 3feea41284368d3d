use alloc::vec::Vec;

use nalgebra::{Matrix2x3, Matrix3, Matrix6, SymmetricEigen, Vector6};

use super::pnp::{penalty_of, reprojection_error};
use super::{CdrapsError, Correspondence3D, OptimConfig, PoseEstimate};
use crate::geo::se3::hat;
use crate::geo::{lateral_tilt, pitch, CameraModel, GeoError, PoseSE3};

const FD_STEP: f64 = 1e-6;
const MU_CEILING: f64 = 1e16;

/// Gimbal priors added to the reprojection objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Penalty {
    pub lambda_roll: f64,
    pub lambda_pitch: f64,
    pub pitch_prior: f64,
}

impl Penalty {
    fn residuals(&self, pose: &PoseSE3) -> [f64; 2] {
        [
            self.lambda_roll.sqrt() * lateral_tilt(pose),
            self.lambda_pitch.sqrt() * (pitch(pose) - self.pitch_prior),
        ]
    }
}

/// Normal equations `J^T J`, `J^T r` and the cost `|r|^2` at `pose`, with
/// the residual `r = observed - projected` stacked over points and followed by
/// the two prior residuals. `None` when a point falls behind the camera.
fn linearize(
    pose: &PoseSE3,
    pts: &[Correspondence3D],
    cam: &CameraModel,
    pen: Option<&Penalty>,
) -> Option<(Matrix6<f64>, Vector6<f64>, f64)> {
    let mut h = Matrix6::zeros();
    let mut g = Vector6::zeros();
    let mut cost = 0.0;
    for c in pts {
        let pc = pose.world_to_camera(&c.p.to_vector());
        let px = cam.project_camera(&pc).ok()?;
        let r = c.pq - px;
        let (iz, x, y) = (1.0 / pc.z, pc.x, pc.y);
        let dpi = Matrix2x3::new(
            cam.fx * iz,
            0.0,
            -cam.fx * x * iz * iz,
            0.0,
            cam.fy * iz,
            -cam.fy * y * iz * iz,
        );
        // d(pc)/d(omega) = [pc]x, d(pc)/d(v) = -I; the residual negates the projection
        let jw = -(dpi * hat(&pc));
        let jv = dpi;
        let mut j = nalgebra::Matrix2x6::zeros();
        j.fixed_view_mut::<2, 3>(0, 0).copy_from(&jw);
        j.fixed_view_mut::<2, 3>(0, 3).copy_from(&jv);
        h += j.transpose() * j;
        g += j.transpose() * r;
        cost += r.norm_squared();
    }
    if let Some(p) = pen {
        let r0 = p.residuals(pose);
        let mut rows = [Vector6::zeros(), Vector6::zeros()];
        for k in 0..6 {
            let mut d = Vector6::zeros();
            d[k] = FD_STEP;
            let moved = pose.retract(&d).ok()?;
            let r1 = p.residuals(&moved);
            rows[0][k] = (r1[0] - r0[0]) / FD_STEP;
            rows[1][k] = (r1[1] - r0[1]) / FD_STEP;
        }
        for (row, r) in rows.iter().zip(r0) {
            h += row * row.transpose();
            g += row * r;
            cost += r * r;
        }
    }
    Some((h, g, cost))
}

fn cost_at(
    pose: &PoseSE3,
    pts: &[Correspondence3D],
    cam: &CameraModel,
    pen: Option<&Penalty>,
) -> Option<f64> {
    let mut cost = 0.0;
    for c in pts {
        let pc = pose.world_to_camera(&c.p.to_vector());
        cost += (c.pq - cam.project_camera(&pc).ok()?).norm_squared();
    }
    if let Some(p) = pen {
        cost += p.residuals(pose).iter().map(|r| r * r).sum::<f64>();
    }
    Some(cost)
}

/// Penalized objective at `pose` over `pts`; infinite when a point is behind
/// the camera.
pub fn objective(
    pose: &PoseSE3,
    pts: &[Correspondence3D],
    cam: &CameraModel,
    cfg: &OptimConfig,
) -> f64 {
    cost_at(pose, pts, cam, Some(&penalty_of(cam, cfg))).unwrap_or(f64::INFINITY)
}

pub(crate) struct LmOutcome {
    pub pose: PoseSE3,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Levenberg-Marquardt on right perturbations of the pose. Convergence is
/// judged on the undamped Gauss-Newton step, so heavy damping in a flat
/// valley cannot end the search early.
pub(crate) fn optimize(
    init: &PoseSE3,
    pts: &[Correspondence3D],
    cam: &CameraModel,
    pen: Option<&Penalty>,
    max_iters: usize,
    tol: f64,
) -> Result<LmOutcome, CdrapsError> {
    let mut pose = *init;
    let (mut h, mut g, mut cost) = linearize(&pose, pts, cam, pen).ok_or(GeoError::BehindCamera)?;
    let mut mu = 1e-6;
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..max_iters {
        if cost <= 1e-30 {
            converged = true;
            break;
        }
        let gn_step = h.cholesky().map(|c| c.solve(&(-g)));
        if gn_step.is_some_and(|d| d.norm() < tol) {
            converged = true;
            break;
        }
        let mut a = h;
        for k in 0..6 {
            a[(k, k)] += mu * h[(k, k)].max(1e-12);
        }
        let Some(delta) = a.cholesky().map(|c| c.solve(&(-g))) else {
            mu *= 10.0;
            continue;
        };
        let candidate = pose.retract(&delta)?;
        match cost_at(&candidate, pts, cam, pen) {
            Some(new_cost) if new_cost <= cost => {
                pose = candidate;
                iterations += 1;
                (h, g, cost) = linearize(&pose, pts, cam, pen).ok_or(GeoError::BehindCamera)?;
                mu = (mu * 0.1).max(1e-12);
            }
            _ => {
                mu *= 10.0;
                // no descent direction left at machine precision
                if mu > MU_CEILING {
                    converged = true;
                    break;
                }
            }
        }
    }
    Ok(LmOutcome {
        pose,
        cost,
        iterations,
        converged,
    })
}

fn rms_error(pose: &PoseSE3, pts: &[Correspondence3D], cam: &CameraModel) -> f64 {
    if pts.is_empty() {
        return 0.0;
    }
    let sse: f64 = pts
        .iter()
        .map(|c| {
            reprojection_error(pose, cam, c)
                .unwrap_or(f64::INFINITY)
                .powi(2)
        })
        .sum();
    (sse / pts.len() as f64).sqrt()
}

/// Minimizes reprojection error over the initial inliers plus the roll and
/// pitch priors.
pub fn refine_pose(
    init: &PoseEstimate,
    corrs: &[Correspondence3D],
    cam: &CameraModel,
    cfg: &OptimConfig,
) -> Result<PoseEstimate, CdrapsError> {
    let pts: Vec<_> = init.inliers.iter().map(|&k| corrs[k]).collect();
    let pen = penalty_of(cam, cfg);
    let out = optimize(
        &init.pose,
        &pts,
        cam,
        Some(&pen),
        cfg.lm_max_iters,
        cfg.lm_tol,
    )?;
    Ok(PoseEstimate {
        pose: out.pose,
        inliers: init.inliers.clone(),
        reproj_error: rms_error(&out.pose, &pts, cam),
        objective: out.cost,
        uncertainty: f64::INFINITY,
        cov_pos: Matrix3::zeros(),
        converged: out.converged,
        iterations: out.iterations,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Uncertainty {
    /// Square root of the positional covariance trace, meters.
    pub u_unc: f64,
    /// Positional covariance in world axes.
    pub cov_pos: Matrix3<f64>,
    /// Full tangent-space covariance (rotation first).
    pub cov_xi: Matrix6<f64>,
    pub sigma2: f64,
    pub condition: f64,
}

/// Gauss-Newton covariance at the refined pose. The Hessian includes the
/// prior rows, matching the objective that was minimized.
pub fn pose_uncertainty(
    est: &PoseEstimate,
    corrs: &[Correspondence3D],
    cam: &CameraModel,
    cfg: &OptimConfig,
) -> Result<Uncertainty, CdrapsError> {
    let pts: Vec<_> = est.inliers.iter().map(|&k| corrs[k]).collect();
    let pen = penalty_of(cam, cfg);
    let (h, _, sse) = linearize(&est.pose, &pts, cam, Some(&pen)).ok_or(GeoError::BehindCamera)?;
    let eig = SymmetricEigen::new(h);
    let lo = eig.eigenvalues.min();
    let hi = eig.eigenvalues.max();
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= cfg.max_condition) {
        return Err(CdrapsError::SingularHessian { condition });
    }
    let m = 2 * pts.len() + 2;
    let sigma2 = sse / (m.saturating_sub(6).max(1)) as f64;
    let inv = eig.eigenvectors
        * Matrix6::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l))
        * eig.eigenvectors.transpose();
    let cov_xi = inv * sigma2;
    // translation perturbations live in the camera frame: t' = t + R v
    let r = est.pose.rotation();
    let cov_vv: Matrix3<f64> = cov_xi.fixed_view::<3, 3>(3, 3).into_owned();
    let cov_pos = r * cov_vv * r.transpose();
    Ok(Uncertainty {
        u_unc: cov_pos.trace().max(0.0).sqrt(),
        cov_pos,
        cov_xi,
        sigma2,
        condition,
    })
}
