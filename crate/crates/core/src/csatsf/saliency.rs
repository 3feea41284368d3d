use alloc::vec;
use alloc::vec::Vec;

use super::{FilterConfig, FilterError, MatchSet, Stage};
use crate::image::GrayImage;

/// Min-max normalized local standard deviation of one image.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// True when every window had the same spread; `values` is then all zero.
    pub degenerate: bool,
}

impl SaliencyMap {
    pub fn get(&self, col: usize, row: usize) -> f32 {
        self.values[row * self.width + col]
    }

    /// Saliency of the pixel containing `(x, y)`, clamped to the image.
    pub fn at(&self, x: f64, y: f64) -> f64 {
        let c = crate::image::clamp_index(x, self.width);
        let r = crate::image::clamp_index(y, self.height);
        self.get(c, r) as f64
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().map(|&v| v as f64).sum::<f64>() / self.values.len() as f64
    }
}

/// Local standard deviation over a `window x window` neighborhood (clipped at
/// the borders), via summed-area tables of `I` and `I^2`.
pub fn local_sigma(img: &GrayImage, window: usize) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let stride = w + 1;
    let mut s1 = vec![0.0f64; stride * (h + 1)];
    let mut s2 = vec![0.0f64; stride * (h + 1)];
    for r in 0..h {
        let (mut row1, mut row2) = (0.0, 0.0);
        for c in 0..w {
            let v = img.get(c, r) as f64;
            row1 += v;
            row2 += v * v;
            s1[(r + 1) * stride + c + 1] = s1[r * stride + c + 1] + row1;
            s2[(r + 1) * stride + c + 1] = s2[r * stride + c + 1] + row2;
        }
    }
    let lo = window.saturating_sub(1) / 2;
    let hi = window.saturating_sub(1) - lo;
    let rect = |s: &[f64], r0: usize, r1: usize, c0: usize, c1: usize| {
        s[r1 * stride + c1] - s[r0 * stride + c1] - s[r1 * stride + c0] + s[r0 * stride + c0]
    };
    let mut out = Vec::with_capacity(w * h);
    for r in 0..h {
        let (r0, r1) = (r.saturating_sub(lo), (r + hi + 1).min(h));
        for c in 0..w {
            let (c0, c1) = (c.saturating_sub(lo), (c + hi + 1).min(w));
            let n = ((r1 - r0) * (c1 - c0)) as f64;
            let m1 = rect(&s1, r0, r1, c0, c1) / n;
            let m2 = rect(&s2, r0, r1, c0, c1) / n;
            out.push((m2 - m1 * m1).max(0.0).sqrt());
        }
    }
    out
}

pub fn saliency_map(img: &GrayImage, window: usize) -> SaliencyMap {
    let sigma = local_sigma(img, window);
    let lo = sigma.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sigma.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    // summed-area round-off leaves ~1e-8 noise on flat images
    let degenerate = sigma.is_empty() || !(range > 1e-6);
    let values = if degenerate {
        vec![0.0; sigma.len()]
    } else {
        sigma.iter().map(|s| ((s - lo) / range) as f32).collect()
    };
    SaliencyMap {
        width: img.width(),
        height: img.height(),
        values,
        sigma_min: if sigma.is_empty() { 0.0 } else { lo },
        sigma_max: if sigma.is_empty() { 0.0 } else { hi },
        degenerate,
    }
}

/// Keeps matches whose saliency exceeds `gamma` times the image-wide mean in
/// both modalities.
pub fn texture_gate(
    eq: &MatchSet,
    vq: &SaliencyMap,
    vdb: &SaliencyMap,
    cfg: &FilterConfig,
) -> Result<MatchSet, FilterError> {
    eq.expect(Stage::Equalized)?;
    let eps_q = cfg.gamma * vq.mean();
    let eps_db = cfg.gamma * vdb.mean();
    let keep: Vec<usize> = eq
        .items()
        .iter()
        .enumerate()
        .filter(|(_, m)| vq.at(m.pq.x, m.pq.y) > eps_q && vdb.at(m.pdb.x, m.pdb.y) > eps_db)
        .map(|(k, _)| k)
        .collect();
    Ok(eq.retain_positions(&keep, Stage::Textured))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csatsf::Correspondence;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn from_values(w: usize, h: usize, v: Vec<f32>) -> SaliencyMap {
        SaliencyMap {
            width: w,
            height: h,
            values: v,
            sigma_min: 0.0,
            sigma_max: 1.0,
            degenerate: false,
        }
    }

    #[test]
    fn constant_image_is_degenerate() {
        let s = saliency_map(&GrayImage::from_fn(20, 10, |_, _| 0.37), 7);
        assert!(s.degenerate);
        assert!(s.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn endpoints_normalize_to_zero_and_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img = GrayImage::from_fn(40, 30, |c, _| {
            if c < 20 {
                0.5
            } else {
                rng.random_range(0.0..1.0)
            }
        });
        let s = saliency_map(&img, 5);
        let sig = local_sigma(&img, 5);
        let (imax, _) = sig
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let (imin, _) = sig
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        assert_eq!(s.values[imax], 1.0);
        assert_eq!(s.values[imin], 0.0);
        assert!(s.values.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn checkerboard_bernoulli_variance() {
        let img = GrayImage::from_fn(32, 32, |c, r| ((c + r) % 2) as f32);
        let sig = local_sigma(&img, 7);
        for &(c, r) in &[(10usize, 10usize), (11, 10), (15, 20)] {
            // direct summation over the window
            let (mut s1, mut s2, mut n) = (0.0f64, 0.0f64, 0.0f64);
            let mut ones = 0.0;
            for rr in r - 3..=r + 3 {
                for cc in c - 3..=c + 3 {
                    let v = img.get(cc, rr) as f64;
                    s1 += v;
                    s2 += v * v;
                    n += 1.0;
                    ones += v;
                }
            }
            let direct = s2 / n - (s1 / n).powi(2);
            let p = ones / 49.0;
            assert!((direct - p * (1.0 - p)).abs() < 1e-12);
            assert!((sig[r * 32 + c].powi(2) - p * (1.0 - p)).abs() < 1e-9);
        }
    }

    #[test]
    fn border_windows_are_clipped() {
        let img = GrayImage::from_fn(8, 8, |c, r| (c * 8 + r) as f32 / 64.0);
        let sig = local_sigma(&img, 7);
        // corner window covers rows/cols 0..=3
        let vals: Vec<f64> = (0..4)
            .flat_map(|r| (0..4).map(move |c| (c * 8 + r) as f64 / 64.0))
            .collect();
        let m = vals.iter().sum::<f64>() / 16.0;
        let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 16.0;
        assert!((sig[0] - var.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn gate_examples() {
        // mean V = 0.4 in both images, gamma 0.5 -> eps 0.2
        let vq = from_values(2, 1, vec![0.8, 0.0]);
        let vdb = from_values(2, 1, vec![0.7, 0.1]);
        let items = vec![
            Correspondence::new(0.5, 0.5, 0.5, 0.5, 1.0),
            Correspondence::new(0.5, 0.5, 1.5, 0.5, 1.0),
        ];
        let eq = MatchSet::raw(items).pass_to(Stage::Equalized);
        let out = texture_gate(&eq, &vq, &vdb, &FilterConfig::default()).unwrap();
        assert_eq!(out.source_indices(), &[0]);
        assert_eq!(out.stage(), Stage::Textured);
    }

    #[test]
    fn gate_matches_predicate_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (w, h) = (50, 40);
        let vq = from_values(
            w,
            h,
            (0..w * h).map(|_| rng.random_range(0.0f32..1.0)).collect(),
        );
        let vdb = from_values(
            w,
            h,
            (0..w * h)
                .map(|_| rng.random_range(0.0f32..1.0).powi(3))
                .collect(),
        );
        let items: Vec<_> = (0..300)
            .map(|_| {
                Correspondence::new(
                    rng.random_range(0.0..50.0),
                    rng.random_range(0.0..40.0),
                    rng.random_range(0.0..50.0),
                    rng.random_range(0.0..40.0),
                    1.0,
                )
            })
            .collect();
        let cfg = FilterConfig::default();
        let out = texture_gate(
            &MatchSet::raw(items.clone()).pass_to(Stage::Equalized),
            &vq,
            &vdb,
            &cfg,
        )
        .unwrap();
        let mq: f64 = vq.values.iter().map(|&v| v as f64).sum::<f64>() / (w * h) as f64;
        let mdb: f64 = vdb.values.iter().map(|&v| v as f64).sum::<f64>() / (w * h) as f64;
        let expected: Vec<usize> = items
            .iter()
            .enumerate()
            .filter(|(_, m)| {
                let a = vq.values[(m.pq.y as usize) * w + m.pq.x as usize] as f64;
                let b = vdb.values[(m.pdb.y as usize) * w + m.pdb.x as usize] as f64;
                a > 0.5 * mq && b > 0.5 * mdb
            })
            .map(|(k, _)| k)
            .collect();
        assert_eq!(out.source_indices(), expected.as_slice());
        assert!(!expected.is_empty() && expected.len() < 300);
    }
}
