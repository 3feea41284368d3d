use alloc::vec;
use alloc::vec::Vec;

use super::{FeatureMap, GlobalDescriptor, RetrievalConfig, RetrievalError};

/// Generalized-mean pooling before L2 normalization.
pub fn gem_pool_unnormalized(map: &FeatureMap, psi: f64, eps_min: f64) -> Vec<f64> {
    let mut acc = vec![0.0f64; map.d()];
    let mut count = 0usize;
    for token in map.iter_tokens() {
        for (a, &x) in acc.iter_mut().zip(token) {
            *a += (x as f64).max(eps_min).powf(psi);
        }
        count += 1;
    }
    let inv_psi = 1.0 / psi;
    acc.iter_mut()
        .for_each(|a| *a = (*a / count as f64).powf(inv_psi));
    acc
}

/// GeM global descriptor: clamp, raise to `psi`, average over tokens, take
/// the `1/psi` root, then L2-normalize.
pub fn gem_pool(
    map: &FeatureMap,
    cfg: &RetrievalConfig,
) -> Result<GlobalDescriptor, RetrievalError> {
    GlobalDescriptor::from_unnormalized(gem_pool_unnormalized(map, cfg.psi, cfg.eps_min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_map(rng: &mut ChaCha8Rng, h: usize, w: usize, d: usize) -> FeatureMap {
        let tokens = (0..h * w * d)
            .map(|_| rng.random_range(-1.0f32..2.0))
            .collect();
        FeatureMap::new(h, w, d, tokens, None).unwrap()
    }

    #[test]
    fn constant_tokens_are_a_fixed_point() {
        let v = [0.25f32, 1.5, 3.0, 0.125];
        let tokens = v.iter().copied().cycle().take(5 * 3 * 4).collect();
        let map = FeatureMap::new(5, 3, 4, tokens, None).unwrap();
        let pooled = gem_pool_unnormalized(&map, 4.0, 1e-6);
        for (p, &x) in pooled.iter().zip(&v) {
            assert!((p - x as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn psi_one_is_clamped_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let map = random_map(&mut rng, 3, 4, 6);
        let pooled = gem_pool_unnormalized(&map, 1.0, 1e-6);
        for k in 0..6 {
            let mean = map
                .iter_tokens()
                .map(|t| (t[k] as f64).max(1e-6))
                .sum::<f64>()
                / 12.0;
            assert!((pooled[k] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_naive_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (h, w, d) = (4, 4, 8);
        let map = random_map(&mut rng, h, w, d);
        let desc = gem_pool(&map, &RetrievalConfig::default()).unwrap();
        // naive oracle
        let mut naive = [0.0f64; 8];
        for (k, slot) in naive.iter_mut().enumerate() {
            let mut s = 0.0;
            for i in 0..h {
                for j in 0..w {
                    let x = map.tokens()[(i * w + j) * d + k] as f64;
                    let c = if x < 1e-6 { 1e-6 } else { x };
                    s += c * c * c * c;
                }
            }
            *slot = (s / (h * w) as f64).powf(0.25);
        }
        let norm = naive.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (a, b) in desc.as_slice().iter().zip(naive.iter()) {
            assert!((a - b / norm).abs() < 1e-6);
        }
    }

    #[test]
    fn degenerate_norm() {
        // psi huge with tokens at the floor still yields eps > 1e-12; force zero with a tiny floor
        let map = FeatureMap::new(1, 1, 2, vec![-1.0, -1.0], None).unwrap();
        let cfg = RetrievalConfig {
            eps_min: 1e-14,
            ..Default::default()
        };
        assert_eq!(gem_pool(&map, &cfg), Err(RetrievalError::DegenerateNorm));
    }

    proptest! {
        #[test]
        fn positive_scaling_leaves_descriptor_unchanged(seed in 0u64..1000, c in 1.01f32..50.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let tokens: Vec<f32> = (0..3 * 3 * 5).map(|_| rng.random_range(0.01f32..2.0)).collect();
            let scaled: Vec<f32> = tokens.iter().map(|t| t * c).collect();
            let a = gem_pool(&FeatureMap::new(3, 3, 5, tokens, None).unwrap(), &RetrievalConfig::default()).unwrap();
            let b = gem_pool(&FeatureMap::new(3, 3, 5, scaled, None).unwrap(), &RetrievalConfig::default()).unwrap();
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() < 1e-6);
            }
        }
    }
}
