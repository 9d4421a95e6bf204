//! Classification, generation and the kernel-density view of trained models.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::featuremap::{ConditionalSampler, FeatureMap};
use crate::io::PixelOrder;
use crate::mps::{Canonical, LogComplex, Mps, SpinConfig};
use crate::reduction::{self, OverlapOptions};

/// Log-likelihood reported for images orthogonal to a model.
pub const LOG_LIKELIHOOD_FLOOR: f64 = -1e9;

/// Largest tolerated deviation of a model state from unit norm.
pub const NORM_TOLERANCE: f64 = 1e-10;

/// The compressed wavefunction of one class.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassModel {
    pub label: u8,
    state: Mps,
    map: FeatureMap,
    /// `ln C_Norm` of the uncompressed sum this state approximates.
    pub log_cnorm: f64,
    pub chi: usize,
    pub pixel_order: PixelOrder,
}

impl ClassModel {
    /// Takes the state with its magnitude stripped (`log_scale = 0`); the
    /// remaining tensors must have unit norm.
    pub fn new(
        label: u8,
        state: Mps,
        map: FeatureMap,
        log_cnorm: f64,
        chi: usize,
        pixel_order: PixelOrder,
    ) -> Result<Self> {
        if state.phys_dims().iter().any(|&d| d != map.dim()) {
            return Err(Error::Dimension(format!(
                "model for label {label}: physical dimension does not match {map} (d = {})",
                map.dim()
            )));
        }
        let state = state.with_log_scale(0.0).with_map(Some(map));
        let norm_log = state.norm_log();
        if norm_log.is_nan() || norm_log.abs() >= NORM_TOLERANCE {
            return Err(Error::Contract(format!(
                "model for label {label} has log norm {norm_log:e}, expected a unit-norm state"
            )));
        }
        Ok(Self {
            label,
            state,
            map,
            log_cnorm,
            chi,
            pixel_order,
        })
    }

    pub fn state(&self) -> &Mps {
        &self.state
    }

    pub fn map(&self) -> FeatureMap {
        self.map
    }

    pub fn sites(&self) -> usize {
        self.state.len()
    }
}

/// One model per label with shared encoding and geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSet {
    models: Vec<ClassModel>,
    pub height: usize,
    pub width: usize,
    /// Free-form run description (strategy, sources, transforms), in order.
    pub metadata: Vec<(String, String)>,
}

impl ModelSet {
    /// Sorts by label and checks that the models agree on map, bond
    /// dimension, pixel order and site count.
    pub fn new(mut models: Vec<ClassModel>, height: usize, width: usize) -> Result<Self> {
        let Some(first) = models.first() else {
            return Err(Error::Consistency("a model set needs at least one model".into()));
        };
        let (map, chi, order, n) = (first.map, first.chi, first.pixel_order, first.sites());
        if n != height * width {
            return Err(Error::Consistency(format!("{n} sites for a {height}x{width} image")));
        }
        for m in &models {
            if m.map != map || m.chi != chi || m.pixel_order != order || m.sites() != n {
                return Err(Error::Consistency(format!(
                    "model {} ({}, chi {}, {}, {} sites) disagrees with model {} ({map}, chi {chi}, {order}, {n} sites)",
                    m.label,
                    m.map,
                    m.chi,
                    m.pixel_order,
                    m.sites(),
                    first.label
                )));
            }
        }
        models.sort_by_key(|m| m.label);
        if models.windows(2).any(|w| w[0].label == w[1].label) {
            return Err(Error::Consistency("duplicate labels in model set".into()));
        }
        Ok(Self {
            models,
            height,
            width,
            metadata: Vec::new(),
        })
    }

    pub fn with_metadata(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.push((key.into(), value.into()));
        self
    }

    /// First value recorded under `key`.
    pub fn metadata_value(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn models(&self) -> &[ClassModel] {
        &self.models
    }

    pub fn get(&self, label: u8) -> Option<&ClassModel> {
        self.models.iter().find(|m| m.label == label)
    }

    pub fn map(&self) -> FeatureMap {
        self.models[0].map
    }

    pub fn chi(&self) -> usize {
        self.models[0].chi
    }

    pub fn pixel_order(&self) -> PixelOrder {
        self.models[0].pixel_order
    }

    pub fn sites(&self) -> usize {
        self.models[0].sites()
    }
}

/// `2 ln |<Φ(x)|state>|`, floored at [`LOG_LIKELIHOOD_FLOOR`].
pub fn log_likelihood(model: &ClassModel, x: &[f64]) -> Result<f64> {
    let overlap = model.state.amplitude_continuous(model.map, x)?;
    Ok(floor(2.0 * overlap.log_magnitude))
}

fn floor(ll: f64) -> f64 {
    if ll > LOG_LIKELIHOOD_FLOOR {
        ll
    } else {
        LOG_LIKELIHOOD_FLOOR
    }
}

/// Label with the largest likelihood; ties go to the smallest label.
pub fn classify(set: &ModelSet, x: &[f64]) -> Result<u8> {
    let mut best = (set.models[0].label, f64::NEG_INFINITY);
    for m in &set.models {
        let ll = log_likelihood(m, x)?;
        if ll > best.1 {
            best = (m.label, ll);
        }
    }
    Ok(best.0)
}

/// [`classify`] for several images, sharing one pass over each model.
fn classify_batch(set: &ModelSet, xs: &[Vec<f64>]) -> Result<Vec<u8>> {
    let mut best = vec![(set.models[0].label, f64::NEG_INFINITY); xs.len()];
    for m in &set.models {
        let overlaps = m.state.amplitudes_continuous(m.map, xs)?;
        for (b, z) in best.iter_mut().zip(overlaps) {
            let ll = floor(2.0 * z.log_magnitude);
            if ll > b.1 {
                *b = (m.label, ll);
            }
        }
    }
    Ok(best.into_iter().map(|b| b.0).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `confusion[true][predicted]`, indexed by label value.
    pub confusion: Vec<Vec<usize>>,
    pub predictions: Vec<u8>,
}

pub fn evaluate_accuracy(set: &ModelSet, images: &[Vec<f64>], labels: &[u8]) -> Result<Evaluation> {
    if images.len() != labels.len() {
        return Err(Error::Consistency(format!(
            "{} test images but {} labels",
            images.len(),
            labels.len()
        )));
    }
    let predictions = images
        .par_chunks(64)
        .map(|chunk| classify_batch(set, chunk))
        .collect::<Result<Vec<_>>>()?
        .concat();
    let classes = predictions
        .iter()
        .chain(labels)
        .chain(set.models.iter().map(|m| &m.label))
        .map(|&l| l as usize + 1)
        .max()
        .unwrap_or(0);
    let mut confusion = vec![vec![0usize; classes]; classes];
    let mut correct = 0usize;
    for (&p, &t) in predictions.iter().zip(labels) {
        confusion[t as usize][p as usize] += 1;
        correct += usize::from(p == t);
    }
    let accuracy = if labels.is_empty() {
        0.0
    } else {
        correct as f64 / labels.len() as f64
    };
    Ok(Evaluation {
        accuracy,
        confusion,
        predictions,
    })
}

/// Draws binary images `s ~ |<s|state>|²`.
pub struct BinarySampler {
    state: Mps,
}

impl BinarySampler {
    pub fn new(model: &ClassModel) -> Self {
        Self {
            state: model.state.canonicalize(Canonical::Right),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SpinConfig> {
        self.state.sample(rng)
    }
}

pub fn sample_binary<R: Rng + ?Sized>(model: &ClassModel, rng: &mut R) -> Result<SpinConfig> {
    BinarySampler::new(model).sample(rng)
}

/// Two-stage generation: `s` from the model, then each pixel from
/// `|phi^{s_k}(x)|² w(x)` of an orthonormal map.
pub struct GreySampler {
    binary: BinarySampler,
    conditional: ConditionalSampler,
}

impl GreySampler {
    pub fn new(model: &ClassModel, ortho_map: FeatureMap) -> Result<Self> {
        if ortho_map.dim() != model.map.dim() {
            return Err(Error::Dimension(format!(
                "{ortho_map} has d = {} but the model has d = {}",
                ortho_map.dim(),
                model.map.dim()
            )));
        }
        Ok(Self {
            binary: BinarySampler::new(model),
            conditional: ConditionalSampler::new(ortho_map)?,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(SpinConfig, Vec<f64>)> {
        let s = self.binary.sample(rng)?;
        let x = s
            .values()
            .iter()
            .map(|&sk| self.conditional.sample(sk, rng))
            .collect::<Result<Vec<f64>>>()?;
        Ok((s, x))
    }
}

pub fn sample_grey<R: Rng + ?Sized>(model: &ClassModel, ortho_map: FeatureMap, rng: &mut R) -> Result<Vec<f64>> {
    Ok(GreySampler::new(model, ortho_map)?.sample(rng)?.1)
}

/// `Σ_i <Φ(x)|Φ(x_i)> / C_Norm`, one product-state overlap per training
/// image; no MPS is built.
pub fn kde_amplitude(map: FeatureMap, images: &[Vec<f64>], x: &[f64], opts: &OverlapOptions) -> Result<LogComplex> {
    let log_c = reduction::log_cnorm(map, images, opts)?;
    Ok(kernel_sum(map, images, x)?.scale_log(-log_c))
}

fn kernel_sum(map: FeatureMap, images: &[Vec<f64>], x: &[f64]) -> Result<LogComplex> {
    let query = reduction::encode(map, x)?;
    let d = map.dim();
    let terms = images
        .iter()
        .map(|xi| {
            if xi.len() != x.len() {
                return Err(Error::Dimension(format!(
                    "query has {} pixels, training image {}",
                    x.len(),
                    xi.len()
                )));
            }
            Ok(reduction::product_overlap(&query, &reduction::encode(map, xi)?, d))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LogComplex::sum(terms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduction::exact_batch;
    use crate::tensor::C64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn images(n: usize, pixels: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..pixels).map(|_| rng.random::<f64>()).collect())
            .collect()
    }

    fn product_model(label: u8, map: FeatureMap, x: &[f64]) -> ClassModel {
        let state = Mps::product_state(map, x).unwrap().canonicalize(Canonical::Left);
        ClassModel::new(label, state, map, 0.0, 1, PixelOrder::Raster).unwrap()
    }

    fn random_model(label: u8, n: usize, chi: usize, seed: u64) -> ClassModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = Mps::random(n, 2, chi, &mut rng).canonicalize(Canonical::Left);
        ClassModel::new(label, state, FeatureMap::Phased, 0.0, chi, PixelOrder::Raster).unwrap()
    }

    fn dense_ll(model: &ClassModel, x: &[f64]) -> f64 {
        let psi = model.state().to_dense().unwrap();
        let phi = Mps::product_state(model.map(), x).unwrap().to_dense().unwrap();
        let dot: C64 = phi.iter().zip(&psi).map(|(p, a)| p.conj() * a).sum();
        2.0 * dot.norm().ln()
    }

    #[test]
    fn likelihood_examples() {
        let x0 = [0.3, 0.9, 0.1, 0.5];
        let m = product_model(0, FeatureMap::Phased, &x0);
        assert!(log_likelihood(&m, &x0).unwrap().abs() < 1e-12);

        let zeros = [0.0; 4];
        let ind = product_model(0, FeatureMap::Indicator, &zeros);
        assert_eq!(
            log_likelihood(&ind, &[0.0, 0.0, 0.7, 0.0]).unwrap(),
            LOG_LIKELIHOOD_FLOOR
        );

        let r = random_model(3, 6, 4, 1);
        for x in images(5, 6, 2) {
            assert!((log_likelihood(&r, &x).unwrap() - dense_ll(&r, &x)).abs() < 1e-10);
        }
        assert!(log_likelihood(&r, &[0.5; 5]).is_err());
    }

    #[test]
    fn model_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let raw = Mps::random(4, 2, 2, &mut rng);
        assert!(matches!(
            ClassModel::new(0, raw, FeatureMap::CosSin, 0.0, 2, PixelOrder::Raster),
            Err(Error::Contract(_))
        ));
        let a = random_model(1, 4, 2, 4);
        let b = random_model(1, 4, 2, 5);
        assert!(ModelSet::new(vec![a.clone(), b], 2, 2).is_err());
        assert!(ModelSet::new(vec![a.clone(), random_model(2, 4, 3, 6)], 2, 2).is_err());
        assert!(ModelSet::new(vec![a], 3, 2).is_err());
    }

    #[test]
    fn classify_examples() {
        let map = FeatureMap::Indicator;
        let zeros = vec![0.0; 4];
        let ones = vec![1.0; 4];
        let set = ModelSet::new(vec![product_model(5, map, &ones), product_model(2, map, &zeros)], 2, 2).unwrap();
        assert_eq!(classify(&set, &zeros).unwrap(), 2);
        assert_eq!(classify(&set, &ones).unwrap(), 5);

        let same = random_model(0, 4, 2, 7);
        let models = [4, 1, 9]
            .map(|l| ClassModel {
                label: l,
                ..same.clone()
            })
            .to_vec();
        let tied = ModelSet::new(models, 2, 2).unwrap();
        assert_eq!(classify(&tied, &[0.3; 4]).unwrap(), 1);

        let set = ModelSet::new((0..3).map(|l| random_model(l, 6, 3, 10 + l as u64)).collect(), 2, 3).unwrap();
        for x in images(20, 6, 8) {
            let expected = set
                .models()
                .iter()
                .map(|m| (m.label, dense_ll(m, &x)))
                .fold((0, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best });
            assert_eq!(classify(&set, &x).unwrap(), expected.0);
        }
    }

    #[test]
    fn phase_does_not_change_predictions() {
        let set = ModelSet::new((0..3).map(|l| random_model(l, 6, 3, 20 + l as u64)).collect(), 2, 3).unwrap();
        let rotated: Vec<ClassModel> = set
            .models()
            .iter()
            .map(|m| {
                let mut sites = m.state().clone().into_sites();
                sites[2].scale(C64::from_polar(1.0, 0.7 + m.label as f64));
                let state = Mps::new(sites, 0.0).unwrap();
                ClassModel::new(m.label, state, m.map(), 0.0, m.chi, m.pixel_order).unwrap()
            })
            .collect();
        let rotated = ModelSet::new(rotated, 2, 3).unwrap();
        for x in images(30, 6, 9) {
            assert_eq!(classify(&set, &x).unwrap(), classify(&rotated, &x).unwrap());
        }
    }

    #[test]
    fn accuracy_examples() {
        let map = FeatureMap::Phased;
        let defining = images(4, 6, 11);
        let models = defining
            .iter()
            .enumerate()
            .map(|(l, x)| product_model(l as u8, map, x))
            .collect();
        let set = ModelSet::new(models, 2, 3).unwrap();
        let eval = evaluate_accuracy(&set, &defining, &[0, 1, 2, 3]).unwrap();
        assert_eq!(eval.accuracy, 1.0);
        assert_eq!(eval.confusion[2][2], 1);

        // permuting the test set keeps the score
        let test = images(40, 6, 12);
        let labels: Vec<u8> = (0..40).map(|i| (i % 4) as u8).collect();
        let a = evaluate_accuracy(&set, &test, &labels).unwrap().accuracy;
        let (mut t2, mut l2) = (test.clone(), labels.clone());
        t2.reverse();
        l2.reverse();
        assert_eq!(evaluate_accuracy(&set, &t2, &l2).unwrap().accuracy, a);
        assert!(evaluate_accuracy(&set, &test, &labels[..3]).is_err());
    }

    #[test]
    fn grey_samples_from_a_corner_state() {
        let m = product_model(0, FeatureMap::CosSin, &[0.0; 4]);
        let sampler = GreySampler::new(&m, FeatureMap::Indicator).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut sum = 0.0;
        let mut count = 0;
        for _ in 0..25_000 {
            let (s, x) = sampler.sample(&mut rng).unwrap();
            assert!(s.values().iter().all(|&v| v == 0));
            for v in x {
                assert!((0.0..0.5).contains(&v));
                sum += v;
                count += 1;
            }
        }
        let mean = sum / count as f64;
        assert!((mean - 0.25).abs() < 0.005, "{mean}");
        assert!(GreySampler::new(&m, FeatureMap::CosSin).is_err());
        assert!(GreySampler::new(&m, FeatureMap::SinBasis(3)).is_err());
    }

    #[test]
    fn grey_pixels_are_conditionally_independent() {
        let m = product_model(0, FeatureMap::CosSin, &[0.0; 2]);
        let sampler = GreySampler::new(&m, FeatureMap::Phased).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let draws: Vec<Vec<f64>> = (0..50_000).map(|_| sampler.sample(&mut rng).unwrap().1).collect();
        let n = draws.len() as f64;
        let mean = |k: usize| draws.iter().map(|x| x[k]).sum::<f64>() / n;
        let (m0, m1) = (mean(0), mean(1));
        let cov = draws.iter().map(|x| (x[0] - m0) * (x[1] - m1)).sum::<f64>() / n;
        let var = |k: usize, m: f64| draws.iter().map(|x| (x[k] - m).powi(2)).sum::<f64>() / n;
        let corr = cov / (var(0, m0) * var(1, m1)).sqrt();
        assert!(corr.abs() < 0.01, "{corr}");
        assert!((m0 - 0.2974).abs() < 0.005, "{m0}");
    }

    #[test]
    fn grey_marginal_matches_mixture() {
        // KS distance of pixel 1 against Σ_s P(s_1 = s) F_s(x)
        let model = random_model(0, 4, 2, 15);
        let map = FeatureMap::Phased;
        let dense = model.state().to_dense().unwrap();
        let mut p = [0.0; 2];
        for (flat, z) in dense.iter().enumerate() {
            p[(flat >> 2) & 1] += z.norm_sqr();
        }
        let cond = ConditionalSampler::new(map).unwrap();
        let sampler = GreySampler::new(&model, map).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let mut xs: Vec<f64> = (0..100_000).map(|_| sampler.sample(&mut rng).unwrap().1[1]).collect();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = p[0] * cond.cdf(0, x) + p[1] * cond.cdf(1, x);
                (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.02, "{ks}");
    }

    #[test]
    fn kde_examples() {
        let opts = OverlapOptions::default();
        let map = FeatureMap::Phased;
        let x = vec![0.3, 0.8, 0.55];
        let single = kde_amplitude(map, std::slice::from_ref(&x), &x, &opts).unwrap();
        assert!(single.log_magnitude.abs() < 1e-12);

        let xi = vec![0.4];
        let q = vec![0.25];
        let kde = kde_amplitude(map, std::slice::from_ref(&xi), &q, &opts)
            .unwrap()
            .to_complex();
        // overlaps conjugate the query encoding: <Φ(q)|Φ(xi)>
        let delta = map.smooth_delta(q[0], &xi).unwrap()[0];
        assert!((kde - delta).norm() < 1e-14);

        let train = images(16, 6, 17);
        let exact = exact_batch(map, &train).unwrap();
        let log_c = reduction::log_cnorm(map, &train, &opts).unwrap();
        for q in images(10, 6, 18) {
            let got = kde_amplitude(map, &train, &q, &opts).unwrap().to_complex();
            let want = exact
                .amplitude_continuous(map, &q)
                .unwrap()
                .scale_log(-log_c)
                .to_complex();
            assert!((got - want).norm() <= 1e-10 * want.norm());
        }
    }
}
