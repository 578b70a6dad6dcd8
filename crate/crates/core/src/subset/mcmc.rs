//! Component-wise modified Metropolis in independent standard-normal space.

use rand::Rng;

/// One proposal from `current`. Each component draws a uniform step of
/// half-width `scale[j]` and is kept with probability `min(1, φ(ξ)/φ(u))`;
/// rejected components keep their value. Exactly two uniforms are drawn per
/// component.
pub fn propose<R: Rng + ?Sized>(current: &[f64], scale: &[f64], rng: &mut R) -> Vec<f64> {
    current
        .iter()
        .zip(scale)
        .map(|(&u, &w)| {
            let step: f64 = rng.random();
            let accept: f64 = rng.random();
            let xi = u + w * (2.0 * step - 1.0);
            if accept < acceptance_ratio(u, xi) {
                xi
            } else {
                u
            }
        })
        .collect()
}

/// `min(1, φ(ξ)/φ(u))` for the standard normal density.
pub fn acceptance_ratio(u: f64, xi: f64) -> f64 {
    (-0.5 * (xi * xi - u * u)).exp().min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_scale_stays_put() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(propose(&[0.3, -1.2], &[0.0, 0.0], &mut rng), vec![0.3, -1.2]);
    }

    #[test]
    fn equal_density_always_accepts() {
        assert_eq!(acceptance_ratio(1.5, -1.5), 1.0);
        assert_eq!(acceptance_ratio(2.0, 0.5), 1.0);
        assert!(acceptance_ratio(0.0, 1.0) < 1.0);
    }

    #[test]
    fn long_chain_samples_standard_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut x = vec![2.5];
        let n = 100_000;
        let mut chain = Vec::with_capacity(n);
        for _ in 0..n {
            x = propose(&x, &[1.0], &mut rng);
            chain.push(x[0]);
        }
        let burn = 1_000;
        let s = &chain[burn..];
        let m = s.iter().sum::<f64>() / s.len() as f64;
        // batch means give a standard error that accounts for autocorrelation
        let batches = 50;
        let size = s.len() / batches;
        let bm: Vec<f64> = (0..batches)
            .map(|b| s[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
            .collect();
        let bmean = bm.iter().sum::<f64>() / batches as f64;
        let se = (bm.iter().map(|y| (y - bmean).powi(2)).sum::<f64>() / (batches - 1) as f64 / batches as f64).sqrt();
        assert!(m.abs() < 3.0 * se, "mean {m}, se {se}");
        let bv: Vec<f64> = (0..batches)
            .map(|b| {
                let c = &s[b * size..(b + 1) * size];
                c.iter().map(|y| y * y).sum::<f64>() / size as f64
            })
            .collect();
        let bvm = bv.iter().sum::<f64>() / batches as f64;
        let se_v = (bv.iter().map(|y| (y - bvm).powi(2)).sum::<f64>() / (batches - 1) as f64 / batches as f64).sqrt();
        assert!((bvm - 1.0).abs() < 3.0 * se_v, "second moment {bvm}, se {se_v}");
    }
}
