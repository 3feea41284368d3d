use alloc::vec::Vec;

use super::{CandidateScore, CdrapsError, OptimConfig};

const FLAT_RANGE: f64 = 1e-12;

/// Min-max normalization over the valid entries; a flat range maps to 0.5.
fn normalize(values: &[Option<f64>]) -> Vec<f64> {
    let valid = values.iter().flatten();
    let lo = valid.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = valid.copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|v| match v {
            None => 0.0,
            Some(_) if !(hi - lo > FLAT_RANGE) => 0.5,
            Some(x) => (x - lo) / (hi - lo),
        })
        .collect()
}

/// Weighted fusion of min-max normalized retrieval similarity, inlier count,
/// inverted error and inverted uncertainty. Invalid candidates get zero.
pub fn base_reliability(candidates: &mut [CandidateScore], cfg: &OptimConfig) {
    let pick = |f: fn(&CandidateScore) -> f64| -> Vec<Option<f64>> {
        candidates.iter().map(|c| c.valid.then(|| f(c))).collect()
    };
    let a = normalize(&pick(|c| c.a_ret));
    let n = normalize(&pick(|c| c.n_in as f64));
    let e = normalize(&pick(|c| c.e_err));
    let u = normalize(&pick(|c| c.u_unc));
    let [w1, w2, w3, w4] = cfg.weights;
    for (k, c) in candidates.iter_mut().enumerate() {
        c.r_base = if c.valid {
            // a flat range stays at 0.5 after inversion
            let inv = |x: f64| 1.0 - x;
            w1 * a[k] + w2 * n[k] + w3 * inv(e[k]) + w4 * inv(u[k])
        } else {
            0.0
        };
    }
}

/// Distance-decaying votes from valid neighbors within `d_max` whose base
/// reliability reaches `tau`, and the capped total reliability.
pub fn geo_consensus(candidates: &mut [CandidateScore], cfg: &OptimConfig) {
    let snapshot: Vec<CandidateScore> = candidates.to_vec();
    for (k, c) in candidates.iter_mut().enumerate() {
        if !c.valid {
            c.c_geo = 0.0;
            c.r_total = 0.0;
            continue;
        }
        let mut vote = 0.0;
        for (j, o) in snapshot.iter().enumerate() {
            if j == k || !o.valid || o.r_base < cfg.tau {
                continue;
            }
            let d = c.location.horizontal_distance(&o.location);
            if d < cfg.d_max {
                vote += o.r_base * (1.0 - d / cfg.d_max);
            }
        }
        c.c_geo = vote;
        c.r_total = c.r_base + (cfg.omega_geo * vote).min(cfg.omega_base * c.r_base);
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub x: f64,
    pub y: f64,
}

/// Highest total reliability; ties go to lower uncertainty, then lower index.
pub fn select_position(candidates: &[CandidateScore]) -> Result<Selection, CdrapsError> {
    let mut best: Option<usize> = None;
    for (k, c) in candidates.iter().enumerate() {
        if !c.valid {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => {
                let o = &candidates[b];
                c.r_total > o.r_total || (c.r_total == o.r_total && c.u_unc < o.u_unc)
            }
        };
        if better {
            best = Some(k);
        }
    }
    let index = best.ok_or(CdrapsError::AllCandidatesGated)?;
    Ok(Selection {
        index,
        x: candidates[index].location.x,
        y: candidates[index].location.y,
    })
}
