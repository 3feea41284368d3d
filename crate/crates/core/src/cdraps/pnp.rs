use alloc::vec::Vec;

use nalgebra::{Matrix3, SMatrix, SymmetricEigen, Vector2, Vector3};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use super::refine::{optimize, Penalty};
use super::{CdrapsError, Correspondence3D, OptimConfig, PoseEstimate};
use crate::geo::se3::orthonormalize;
use crate::geo::{CameraModel, PoseSE3};

const SAMPLE: usize = 4;
const POLISH_ITERS: usize = 8;
const REFIT_ROUNDS: usize = 4;

/// Reprojection error in pixels, or `None` when the point is behind the camera.
pub fn reprojection_error(pose: &PoseSE3, cam: &CameraModel, c: &Correspondence3D) -> Option<f64> {
    let pc = pose.world_to_camera(&c.p.to_vector());
    cam.project_camera(&pc).ok().map(|px| (px - c.pq).norm())
}

fn normalized(cam: &CameraModel, px: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new((px.x - cam.cx) / cam.fx, (px.y - cam.cy) / cam.fy)
}

/// Similarity normalizing 2D points to zero mean and mean norm sqrt(2).
fn conditioner(pts: &[Vector2<f64>]) -> Matrix3<f64> {
    let n = pts.len() as f64;
    let c = pts.iter().fold(Vector2::zeros(), |s, p| s + p) / n;
    let d = pts.iter().map(|p| (p - c).norm()).sum::<f64>() / n;
    let s = if d > 1e-15 {
        core::f64::consts::SQRT_2 / d
    } else {
        1.0
    };
    Matrix3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0)
}

/// Direct linear homography `dst ~ H src` from four or more pairs.
fn fit_homography(src: &[Vector2<f64>], dst: &[Vector2<f64>]) -> Option<Matrix3<f64>> {
    let (ts, td) = (conditioner(src), conditioner(dst));
    let mut ata = SMatrix::<f64, 9, 9>::zeros();
    for (s, d) in src.iter().zip(dst) {
        let a = ts * Vector3::new(s.x, s.y, 1.0);
        let b = td * Vector3::new(d.x, d.y, 1.0);
        let r1 = [0.0, 0.0, 0.0, -a.x, -a.y, -1.0, b.y * a.x, b.y * a.y, b.y];
        let r2 = [a.x, a.y, 1.0, 0.0, 0.0, 0.0, -b.x * a.x, -b.x * a.y, -b.x];
        for r in [r1, r2] {
            for i in 0..9 {
                for j in 0..9 {
                    ata[(i, j)] += r[i] * r[j];
                }
            }
        }
    }
    let eig = SymmetricEigen::new(ata);
    let (kmin, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let h = eig.eigenvectors.column(kmin);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let h = td.try_inverse()? * hn * ts;
    h.iter().all(|v| v.is_finite()).then_some(h)
}

/// Plane-based pose hypothesis: fit a plane to the world points, estimate
/// the plane-to-image homography and decompose it. Exact for coplanar
/// points; an approximation otherwise.
pub fn homography_pose(corrs: &[Correspondence3D], cam: &CameraModel) -> Option<PoseSE3> {
    if corrs.len() < SAMPLE {
        return None;
    }
    let n = corrs.len() as f64;
    let o = corrs
        .iter()
        .fold(Vector3::zeros(), |s, c| s + c.p.to_vector())
        / n;
    let mut cov = Matrix3::zeros();
    for c in corrs {
        let d = c.p.to_vector() - o;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    // a line of points pins no plane
    if eig.eigenvalues[order[1]] <= 1e-9 * eig.eigenvalues[order[0]].max(1e-300) {
        return None;
    }
    let u: Vector3<f64> = eig.eigenvectors.column(order[0]).into();
    let v: Vector3<f64> = eig.eigenvectors.column(order[1]).into();
    let nrm = u.cross(&v);
    let basis_t = Matrix3::from_rows(&[u.transpose(), v.transpose(), nrm.transpose()]);

    let src: Vec<Vector2<f64>> = corrs
        .iter()
        .map(|c| {
            let q = basis_t * (c.p.to_vector() - o);
            Vector2::new(q.x, q.y)
        })
        .collect();
    let dst: Vec<Vector2<f64>> = corrs.iter().map(|c| normalized(cam, &c.pq)).collect();
    let h = fit_homography(&src, &dst)?;

    let (h1, h2, h3) = (
        h.column(0).into_owned(),
        h.column(1).into_owned(),
        h.column(2).into_owned(),
    );
    let mut k = 2.0 / (h1.norm() + h2.norm());
    if !k.is_finite() {
        return None;
    }
    // the plane origin must lie in front of the camera
    if h3.z * k < 0.0 {
        k = -k;
    }
    let (r1, r2) = (h1 * k, h2 * k);
    let r = orthonormalize(&Matrix3::from_columns(&[r1, r2, r1.cross(&r2)]));
    let t = h3 * k;
    // camera <- plane <- world
    let r_cw = r * basis_t;
    let t_cw = t - r_cw * o;
    let r_wc = r_cw.transpose();
    PoseSE3::from_parts(r_wc, -(r_wc * t_cw)).ok()
}

fn inliers_of(
    pose: &PoseSE3,
    corrs: &[Correspondence3D],
    cam: &CameraModel,
    thresh: f64,
) -> Vec<usize> {
    (0..corrs.len())
        .filter(|&k| reprojection_error(pose, cam, &corrs[k]).is_some_and(|e| e < thresh))
        .collect()
}

fn inlier_sse(
    pose: &PoseSE3,
    corrs: &[Correspondence3D],
    cam: &CameraModel,
    inliers: &[usize],
) -> f64 {
    inliers
        .iter()
        .map(|&k| reprojection_error(pose, cam, &corrs[k]).map_or(f64::INFINITY, |e| e * e))
        .sum()
}

fn draw_sample(rng: &mut ChaCha8Rng, n: usize) -> [usize; SAMPLE] {
    let mut s = [0usize; SAMPLE];
    let mut k = 0;
    while k < SAMPLE {
        let c = (rng.next_u64() % n as u64) as usize;
        if !s[..k].contains(&c) {
            s[k] = c;
            k += 1;
        }
    }
    s
}

/// No three of the sampled image points may be (nearly) collinear.
fn sample_is_degenerate(corrs: &[Correspondence3D], s: &[usize; SAMPLE]) -> bool {
    const TRIPLES: [[usize; 3]; 4] = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
    TRIPLES.iter().any(|t| {
        let (a, b, c) = (corrs[s[t[0]]].pq, corrs[s[t[1]]].pq, corrs[s[t[2]]].pq);
        let area = ((b - a).perp(&(c - a))).abs() * 0.5;
        area < 1.0
    })
}

fn needed_iterations(inlier_ratio: f64, confidence: f64) -> usize {
    let p = inlier_ratio.powi(SAMPLE as i32);
    if p >= 1.0 - 1e-12 {
        return 1;
    }
    if p <= 1e-12 {
        return usize::MAX;
    }
    let n = (1.0 - confidence).ln() / (1.0 - p).ln();
    if n.is_finite() && n < 1e9 {
        n.ceil() as usize
    } else {
        usize::MAX
    }
}

/// Seeded RANSAC over four-point plane-homography hypotheses, each polished
/// by a few Gauss-Newton steps on its own sample. The best consensus set is
/// then refit on all of its inliers, without priors, until the set
/// stabilizes.
pub fn initial_pnp(
    corrs: &[Correspondence3D],
    cam: &CameraModel,
    cfg: &OptimConfig,
) -> Result<PoseEstimate, CdrapsError> {
    if corrs.len() < SAMPLE {
        return Err(CdrapsError::InsufficientCorrespondences {
            needed: SAMPLE,
            found: corrs.len(),
        });
    }
    let thresh = cfg.ransac_thresh_px;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(PoseSE3, Vec<usize>)> = None;
    let mut budget = cfg.ransac_iters;
    let mut it = 0;
    let mut sample_buf = Vec::with_capacity(SAMPLE);
    while it < budget.min(cfg.ransac_iters) {
        it += 1;
        let s = draw_sample(&mut rng, corrs.len());
        if sample_is_degenerate(corrs, &s) {
            continue;
        }
        sample_buf.clear();
        sample_buf.extend(s.iter().map(|&k| corrs[k]));
        let Some(hyp) = homography_pose(&sample_buf, cam) else {
            continue;
        };
        let hyp = optimize(&hyp, &sample_buf, cam, None, POLISH_ITERS, cfg.lm_tol)
            .map_or(hyp, |r| r.pose);
        let inl = inliers_of(&hyp, corrs, cam, thresh);
        if best.as_ref().is_none_or(|(_, b)| inl.len() > b.len()) {
            budget =
                needed_iterations(inl.len() as f64 / corrs.len() as f64, cfg.ransac_confidence);
            best = Some((hyp, inl));
        }
    }
    let (mut pose, mut inliers) = best.ok_or(CdrapsError::NoConsensus { inliers: 0 })?;
    if inliers.len() < SAMPLE {
        return Err(CdrapsError::NoConsensus {
            inliers: inliers.len(),
        });
    }
    let mut sse = inlier_sse(&pose, corrs, cam, &inliers);
    for _ in 0..REFIT_ROUNDS {
        let pts: Vec<_> = inliers.iter().map(|&k| corrs[k]).collect();
        let Ok(fit) = optimize(&pose, &pts, cam, None, cfg.lm_max_iters, cfg.lm_tol) else {
            break;
        };
        let next = inliers_of(&fit.pose, corrs, cam, thresh);
        let next_sse = inlier_sse(&fit.pose, corrs, cam, &next);
        if next.len() < inliers.len() || (next.len() == inliers.len() && next_sse >= sse) {
            break;
        }
        let stable = next == inliers;
        (pose, inliers, sse) = (fit.pose, next, next_sse);
        if stable {
            break;
        }
    }
    if inliers.len() < cfg.min_inliers {
        return Err(CdrapsError::NoConsensus {
            inliers: inliers.len(),
        });
    }
    Ok(PoseEstimate {
        pose,
        reproj_error: (sse / inliers.len() as f64).sqrt(),
        objective: sse,
        inliers,
        uncertainty: f64::INFINITY,
        cov_pos: Matrix3::zeros(),
        converged: true,
        iterations: it,
    })
}

pub(crate) fn penalty_of(cam: &CameraModel, cfg: &OptimConfig) -> Penalty {
    Penalty {
        lambda_roll: cfg.lambda_roll,
        lambda_pitch: cfg.lambda_pitch,
        pitch_prior: cam.pitch_prior,
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geo::{pose_from_attitude, project, Attitude, GeoPoint};
    use rand::Rng;

    pub(crate) fn camera() -> CameraModel {
        CameraModel::new(400.0, 400.0, 160.0, 128.0, 320, 256).unwrap()
    }

    pub(crate) fn true_pose(yaw: f64, pitch: f64, roll: f64) -> PoseSE3 {
        pose_from_attitude(
            &Attitude { yaw, pitch, roll },
            &Vector3::new(1000.0, 2000.0, 150.0),
        )
    }

    /// World points seen by `pose` at random pixels, on terrain `z(x, y)`.
    pub(crate) fn render(
        pose: &PoseSE3,
        cam: &CameraModel,
        n: usize,
        rng: &mut rand_chacha::ChaCha8Rng,
        z: impl Fn(f64, f64) -> f64,
    ) -> Vec<Correspondence3D> {
        let mut out = Vec::new();
        while out.len() < n {
            let px = Vector2::new(rng.random_range(5.0..315.0), rng.random_range(5.0..251.0));
            // intersect the ray with the terrain by fixed-point iteration on depth
            let ray = pose.rotation() * cam.ray(&px);
            let c = pose.translation();
            let mut zg = z(c.x, c.y);
            let mut p = *c;
            for _ in 0..100 {
                let s = (zg - c.z) / ray.z;
                p = c + ray * s;
                zg = z(p.x, p.y);
            }
            let p = GeoPoint::new(p.x, p.y, z(p.x, p.y));
            let pq = project(pose, cam, &p).unwrap();
            out.push(Correspondence3D {
                pq,
                p,
                source: out.len(),
            });
        }
        out
    }

    #[test]
    fn homography_pose_exact_on_plane() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let cam = camera();
        let pose = true_pose(0.4, 0.2, 0.05);
        let c = render(&pose, &cam, 8, &mut rng, |x, _| 0.05 * x);
        let est = homography_pose(&c, &cam).unwrap();
        assert!((est.translation() - pose.translation()).norm() < 1e-6);
        assert!((est.rotation() - pose.rotation()).norm() < 1e-9);
    }

    #[test]
    fn noiseless_recovery() {
        let cam = camera();
        let cfg = OptimConfig::default();
        let terrains: [fn(f64, f64) -> f64; 3] = [
            |_, _| 0.0,
            |x, y| 0.1 * x - 0.03 * y,
            |x, y| 8.0 * (x / 17.0).sin() * (y / 23.0).cos(),
        ];
        for (seed, terrain) in terrains.iter().enumerate() {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed as u64);
            let pose = true_pose(1.1, 0.15, -0.02);
            let c = render(&pose, &cam, 20, &mut rng, terrain);
            let est = initial_pnp(&c, &cam, &cfg).unwrap();
            assert_eq!(est.inliers.len(), 20);
            assert!(
                (est.pose.translation() - pose.translation()).norm() < 1e-6,
                "terrain {seed}"
            );
        }
    }

    #[test]
    fn outliers_identified_exactly() {
        let cam = camera();
        let cfg = OptimConfig::default();
        for seed in 0..5 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10 + seed);
            let pose = true_pose(-0.7, 0.1, 0.0);
            let mut c = render(&pose, &cam, 20, &mut rng, |x, y| 0.02 * x + 0.01 * y);
            for k in 0..10 {
                let mut bad = c[k];
                bad.pq = Vector2::new(rng.random_range(0.0..320.0), rng.random_range(0.0..256.0));
                // keep the gross error gross
                if (bad.pq - c[k].pq).norm() < 20.0 {
                    bad.pq.x = (bad.pq.x + 160.0) % 320.0;
                }
                bad.source = 20 + k;
                c.push(bad);
            }
            let est = initial_pnp(&c, &cam, &cfg).unwrap();
            assert_eq!(est.inliers, (0..20).collect::<Vec<_>>(), "seed {seed}");
        }
    }

    #[test]
    fn three_points_rejected() {
        let cam = camera();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let c = render(&true_pose(0.0, 0.0, 0.0), &cam, 3, &mut rng, |_, _| 0.0);
        assert_eq!(
            initial_pnp(&c, &cam, &OptimConfig::default()),
            Err(CdrapsError::InsufficientCorrespondences {
                needed: 4,
                found: 3
            })
        );
    }

    #[test]
    fn deterministic_under_seed() {
        let cam = camera();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let pose = true_pose(0.3, 0.05, 0.0);
        let mut c = render(&pose, &cam, 30, &mut rng, |_, _| 0.0);
        for (k, x) in c.iter_mut().enumerate() {
            x.pq += Vector2::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
            if k % 3 == 0 {
                x.pq = Vector2::new(rng.random_range(0.0..320.0), rng.random_range(0.0..256.0));
            }
        }
        let cfg = OptimConfig {
            seed: 99,
            ..Default::default()
        };
        assert_eq!(initial_pnp(&c, &cam, &cfg), initial_pnp(&c, &cam, &cfg));
    }

    #[test]
    fn iteration_bound() {
        assert_eq!(needed_iterations(1.0, 0.999), 1);
        assert_eq!(needed_iterations(0.0, 0.999), usize::MAX);
        // w = 0.5: ln(0.001) / ln(1 - 1/16) = 107.0...
        assert_eq!(needed_iterations(0.5, 0.999), 108);
    }
}
