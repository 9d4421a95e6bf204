use rand::Rng;

use super::kernels::dims;
use super::{Canonical, Mps, SpinConfig};
use crate::error::{Error, Result};
use crate::tensor::C64;

impl Mps {
    /// Draws `s` with probability `|amplitude(s)|² / <m|m>`, one site at a
    /// time. Requires the right-canonical gauge so that every conditional is
    /// the squared norm of a partially contracted row vector.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SpinConfig> {
        if self.canonical != Canonical::Right {
            return Err(Error::Contract(format!(
                "sampling needs a right-canonical state, got {:?}",
                self.canonical
            )));
        }
        let mut v = vec![C64::new(1.0, 0.0)];
        let mut config = Vec::with_capacity(self.len());
        let mut weights = Vec::new();
        let mut candidates: Vec<Vec<C64>> = Vec::new();
        for (k, site) in self.sites.iter().enumerate() {
            let (l, d, r) = dims(site);
            candidates.clear();
            weights.clear();
            for s in 0..d {
                let mut w = vec![C64::new(0.0, 0.0); r];
                for (i, vi) in v.iter().enumerate().take(l) {
                    let row = &site.data()[(i * d + s) * r..(i * d + s + 1) * r];
                    for (acc, a) in w.iter_mut().zip(row) {
                        *acc += vi * a;
                    }
                }
                weights.push(w.iter().map(C64::norm_sqr).sum::<f64>());
                candidates.push(w);
            }
            let total: f64 = weights.iter().sum();
            if total.is_nan() || total <= 0.0 || !total.is_finite() {
                return Err(Error::Contract(format!("zero or non-finite conditional at site {k}")));
            }
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (s, &p) in weights.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                acc += p;
                pick = Some(s);
                if u < acc {
                    break;
                }
            }
            let s = pick.expect("positive total implies a positive weight");
            let norm = weights[s].sqrt();
            v = candidates.swap_remove(s);
            v.iter_mut().for_each(|z| *z /= norm);
            config.push(s);
        }
        Ok(SpinConfig(config))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featuremap::FeatureMap;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tv_distance(m: &Mps, draws: usize, seed: u64) -> f64 {
        let dense = m.to_dense().unwrap();
        let total: f64 = dense.iter().map(C64::norm_sqr).sum();
        let dims = m.phys_dims();
        let c = m.canonicalize(Canonical::Right);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts = vec![0usize; dense.len()];
        for _ in 0..draws {
            let cfg = c.sample(&mut rng).unwrap();
            let flat = cfg.values().iter().zip(&dims).fold(0, |acc, (&s, &d)| acc * d + s);
            counts[flat] += 1;
        }
        0.5 * dense
            .iter()
            .zip(&counts)
            .map(|(z, &c)| (z.norm_sqr() / total - c as f64 / draws as f64).abs())
            .sum::<f64>()
    }

    #[test]
    fn deterministic_corner() {
        let m = Mps::product_state(FeatureMap::CosSin, &[0.0; 5])
            .unwrap()
            .canonicalize(Canonical::Right);
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..100 {
            assert_eq!(m.sample(&mut rng).unwrap(), SpinConfig(vec![0; 5]));
        }
    }

    #[test]
    fn bell_state_frequencies() {
        let a = Mps::product_state(FeatureMap::Indicator, &[0.0, 0.0]).unwrap();
        let b = Mps::product_state(FeatureMap::Indicator, &[1.0, 1.0]).unwrap();
        let bell = a.add(&b).unwrap().canonicalize(Canonical::Right);
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let draws = 100_000;
        let mut zeros = 0;
        for _ in 0..draws {
            match bell.sample(&mut rng).unwrap().values() {
                [0, 0] => zeros += 1,
                [1, 1] => {}
                other => panic!("drew {other:?}"),
            }
        }
        let f = zeros as f64 / draws as f64;
        assert!((f - 0.5).abs() < 0.01, "{f}");
    }

    #[test]
    fn histogram_matches_born_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        let m = Mps::random(4, 2, 3, &mut rng);
        let tv = tv_distance(&m, 100_000, 64);
        assert!(tv < 0.02, "{tv}");
    }

    #[test]
    fn rejects_other_gauges() {
        let mut rng = ChaCha8Rng::seed_from_u64(65);
        let m = Mps::random(3, 2, 2, &mut rng);
        assert!(matches!(m.sample(&mut rng), Err(Error::Contract(_))));
        let l = m.canonicalize(Canonical::Left);
        assert!(matches!(l.sample(&mut rng), Err(Error::Contract(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn sampler_tv_bound(seed in any::<u64>(), n in 1usize..=6, chi in 1usize..=4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = Mps::random(n, 2, chi, &mut rng);
            prop_assert!(tv_distance(&m, 100_000, seed ^ 0x5eed) < 0.02);
        }
    }
}
