use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use nalgebra::Vector2;

use super::{median, FilterConfig, FilterError, MatchSet, Stage};

/// Heading vectors shorter than this carry no scale evidence.
const MIN_SCALE_NORM: f64 = 1.0;
const MIN_HEADING_NORM: f64 = 1e-9;

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a - TAU * ((a + PI) / TAU).floor();
    if r <= -PI {
        r + TAU
    } else {
        r
    }
}

/// Angle minimizing the summed absolute circular deviation to all data
/// angles. With an even count the cost is flat between the two middle
/// angles; ties (up to rounding) resolve to the midpoint of the tied arc,
/// like the mean of the two middle values of a linear median.
pub fn circular_median(angles: &[f64]) -> Option<f64> {
    let cost = |a: f64| angles.iter().map(|&b| wrap_angle(b - a).abs()).sum::<f64>();
    let costs: Vec<f64> = angles.iter().map(|&a| cost(a)).collect();
    let best = costs.iter().copied().fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return None;
    }
    let tol = 1e-9 * (1.0 + best);
    let mut tied = angles
        .iter()
        .zip(&costs)
        .filter(|(_, &c)| c <= best + tol)
        .map(|(&a, _)| a);
    let first = tied.next()?;
    let (lo, hi) = tied.fold((0.0f64, 0.0f64), |(lo, hi), a| {
        let d = wrap_angle(a - first);
        (lo.min(d), hi.max(d))
    });
    Some(wrap_angle(first + 0.5 * (lo + hi)))
}

/// Keeps matches whose relative rotation about the centroids agrees with the
/// circular median within `eps_ang` and whose length ratio agrees with the
/// median scale within `eps_scale`.
pub fn global_consistency(topo: &MatchSet, cfg: &FilterConfig) -> Result<MatchSet, FilterError> {
    topo.expect(Stage::Topo)?;
    let items = topo.items();
    if items.is_empty() {
        return Err(FilterError::InsufficientMatches);
    }
    let n = items.len() as f64;
    let cq = items.iter().fold(Vector2::zeros(), |s, m| s + m.pq) / n;
    let cdb = items.iter().fold(Vector2::zeros(), |s, m| s + m.pdb) / n;
    let vq: Vec<_> = items.iter().map(|m| m.pq - cq).collect();
    let vdb: Vec<_> = items.iter().map(|m| m.pdb - cdb).collect();

    let phi: Vec<Option<f64>> = vq
        .iter()
        .zip(&vdb)
        .map(|(a, b)| {
            (a.norm() > MIN_HEADING_NORM && b.norm() > MIN_HEADING_NORM)
                .then(|| wrap_angle(b.y.atan2(b.x) - a.y.atan2(a.x)))
        })
        .collect();
    let usable: Vec<f64> = phi.iter().flatten().copied().collect();
    if usable.len() < 2 {
        return Err(FilterError::InsufficientMatches);
    }
    let med_phi = circular_median(&usable).unwrap_or(0.0);

    let mut ratios: Vec<f64> = vq
        .iter()
        .zip(&vdb)
        .filter(|(a, _)| a.norm() >= MIN_SCALE_NORM)
        .map(|(a, b)| b.norm() / a.norm())
        .collect();
    let s_bar = if ratios.is_empty() {
        None
    } else {
        Some(median(&mut ratios))
    };

    let keep: Vec<usize> = (0..items.len())
        .filter(|&i| {
            let ang_ok = phi[i].is_none_or(|p| wrap_angle(p - med_phi).abs() < cfg.eps_ang);
            let scale_ok = match s_bar {
                Some(s) if vq[i].norm() >= MIN_SCALE_NORM && s > 0.0 => {
                    (vdb[i].norm() / (s * vq[i].norm()) - 1.0).abs() <= cfg.eps_scale
                }
                _ => true,
            };
            ang_ok && scale_ok
        })
        .collect();
    Ok(topo.retain_positions(&keep, Stage::Final))
}
