//! Multi-domain classification benchmark with a planted, correctable
//! context shift.
//!
//! Class prototypes sit on the first C coordinate axes. Each non-source
//! domain adds a fixed shift vector: an oblique mix of a random direction in
//! the class subspace (so a source-trained classifier actually degrades) and
//! a private nuisance axis (so shifts stay linearly independent of every
//! prototype). Labels depend only on the class prototype, never on the
//! domain transform. Because the shift is a pure mean offset, additive
//! steering can remove it exactly in feature space.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Example;
use crate::tensor::SeededRng;
use crate::Vector;

/// Generator parameters; one sample count applies to every (class, domain)
/// cell of each split.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DomainShiftConfig {
    pub classes: usize,
    pub domains: usize,
    pub feature_dim: usize,
    pub samples_per_cell: usize,
    pub shift_magnitude: f64,
    pub noise_scale: f64,
    /// Spread of the optional per-domain diagonal scaling; 0 disables it.
    pub domain_scaling: f64,
    pub seed: u64,
}

impl Default for DomainShiftConfig {
    fn default() -> Self {
        Self {
            classes: 7,
            domains: 4,
            feature_dim: 16,
            samples_per_cell: 30,
            shift_magnitude: 2.5,
            noise_scale: 0.2,
            domain_scaling: 0.0,
            seed: 0,
        }
    }
}

impl DomainShiftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.domains < 2 {
            return Err(Error::Config("need at least 2 classes and 2 domains".into()));
        }
        if self.feature_dim < self.classes + self.domains {
            return Err(Error::Config(format!(
                "feature_dim {} must be at least classes + domains = {}",
                self.feature_dim,
                self.classes + self.domains
            )));
        }
        if self.samples_per_cell == 0 {
            return Err(Error::Config("samples_per_cell must be positive".into()));
        }
        if !(self.shift_magnitude >= 0.0 && self.noise_scale >= 0.0) {
            return Err(Error::Config("magnitudes must be nonnegative".into()));
        }
        if !(0.0..1.0).contains(&self.domain_scaling) {
            return Err(Error::Config("domain_scaling must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// One generated observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vector,
    pub class: usize,
    pub domain: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Generated dataset: train on the source domain (domain 0), disjoint
/// validation and test splits over every domain.
#[derive(Debug, Clone)]
pub struct DomainShiftDataset {
    pub config: DomainShiftConfig,
    pub prototypes: Vec<Vector>,
    pub domain_shifts: Vec<Vector>,
    pub domain_scales: Vec<Vector>,
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub test: Vec<Sample>,
}

pub fn gen_domain_shift(config: &DomainShiftConfig) -> Result<DomainShiftDataset> {
    config.validate()?;
    let (c, d, n) = (config.classes, config.domains, config.feature_dim);
    let root = SeededRng::new(config.seed);

    let prototypes: Vec<Vector> = (0..c)
        .map(|k| Vector::from_fn(n, |j| if j == k { 1.0 } else { 0.0 }))
        .collect();

    let mut dir_rng = root.substream("shift-directions");
    let mut domain_shifts = vec![Vector::zeros(n)];
    for m in 1..d {
        let mut dir: Vec<f64> = vec![0.0; n];
        for slot in dir.iter_mut().take(c) {
            *slot = dir_rng.normal();
        }
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        for slot in dir.iter_mut() {
            *slot /= norm;
        }
        // Private nuisance axis keeps the shift independent of every
        // prototype even though it leans into the class subspace.
        dir[c + m - 1] = 1.0;
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        let shift = Vector::new(
            dir.into_iter()
                .map(|x| x / norm * config.shift_magnitude)
                .collect(),
        );
        domain_shifts.push(shift);
    }

    let mut scale_rng = root.substream("domain-scales");
    let domain_scales: Vec<Vector> = (0..d)
        .map(|m| {
            if m == 0 || config.domain_scaling == 0.0 {
                Vector::new(vec![1.0; n])
            } else {
                Vector::from_fn(n, |_| {
                    scale_rng.uniform_in(1.0 - config.domain_scaling, 1.0 + config.domain_scaling)
                })
            }
        })
        .collect();

    let sample_cell = |rng: &mut SeededRng, class: usize, domain: usize| -> Sample {
        let proto = &prototypes[class];
        let scale = &domain_scales[domain];
        let shift = &domain_shifts[domain];
        let features = Vector::from_fn(n, |j| {
            scale.values()[j] * (proto.values()[j] + config.noise_scale * rng.normal())
                + shift.values()[j]
        });
        Sample {
            features,
            class,
            domain,
        }
    };

    let mut train_rng = root.substream("train");
    let mut train = Vec::with_capacity(c * config.samples_per_cell);
    for class in 0..c {
        for _ in 0..config.samples_per_cell {
            train.push(sample_cell(&mut train_rng, class, 0));
        }
    }

    let fill = |label: &str| -> Vec<Sample> {
        let mut rng = root.substream(label);
        let mut out = Vec::with_capacity(c * d * config.samples_per_cell);
        for domain in 0..d {
            for class in 0..c {
                for _ in 0..config.samples_per_cell {
                    out.push(sample_cell(&mut rng, class, domain));
                }
            }
        }
        out
    };
    let validation = fill("validation");
    let test = fill("test");

    Ok(DomainShiftDataset {
        config: config.clone(),
        prototypes,
        domain_shifts,
        domain_scales,
        train,
        validation,
        test,
    })
}

impl DomainShiftDataset {
    pub fn split(&self, which: Split) -> &[Sample] {
        match which {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    /// Training examples (features, class label) for the classifier.
    pub fn train_examples(&self) -> Vec<Example> {
        self.train
            .iter()
            .map(|s| (s.features.clone(), s.class))
            .collect()
    }

    /// Feature vectors of one domain within a split.
    pub fn domain_features(&self, which: Split, domain: usize) -> Vec<Vector> {
        self.split(which)
            .iter()
            .filter(|s| s.domain == domain)
            .map(|s| s.features.clone())
            .collect()
    }

    /// The planted mean difference between two domains' distributions.
    pub fn planted_shift_between(&self, a: usize, b: usize) -> Result<Vector> {
        self.domain_shifts[a].sub(&self.domain_shifts[b])
    }
}

const DATASET_SCHEMA: &str = "contxt.dataset.v1";

/// Writes one split as a flat table: feature columns, class, domain, with a
/// schema-version header line. Floats use the shortest round-trip form, so
/// identical samples always produce identical bytes.
pub fn write_split_csv(path: &Path, samples: &[Sample], config_digest: &str) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# schema: {DATASET_SCHEMA}\n"));
    out.push_str(&format!("# config_digest: {config_digest}\n"));
    let dim = samples.first().map_or(0, |s| s.features.len());
    for j in 0..dim {
        out.push_str(&format!("f{j},"));
    }
    out.push_str("class,domain\n");
    for s in samples {
        for x in s.features.values() {
            out.push_str(&format!("{x},"));
        }
        out.push_str(&format!("{},{}\n", s.class, s.domain));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a split written by [`write_split_csv`].
pub fn read_split_csv(path: &Path) -> Result<Vec<Sample>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let schema = lines
        .next()
        .ok_or_else(|| Error::Format("empty dataset file".into()))?;
    if schema != format!("# schema: {DATASET_SCHEMA}") {
        return Err(Error::Format(format!("unexpected dataset schema line {schema:?}")));
    }
    let mut samples = Vec::new();
    for line in lines {
        if line.is_empty() || line.starts_with('#') || line.starts_with('f') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 3 {
            return Err(Error::Format(format!("malformed dataset row {line:?}")));
        }
        let (feat, tail) = fields.split_at(fields.len() - 2);
        let features: Vec<f64> = feat
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad float {f:?}")))
            })
            .collect::<Result<_>>()?;
        let class: usize = tail[0]
            .parse()
            .map_err(|_| Error::Format(format!("bad class {:?}", tail[0])))?;
        let domain: usize = tail[1]
            .parse()
            .map_err(|_| Error::Format(format!("bad domain {:?}", tail[1])))?;
        samples.push(Sample {
            features: Vector::new(features),
            class,
            domain,
        });
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::mean_of;

    #[test]
    fn config_violations_are_rejected() {
        let mut cfg = DomainShiftConfig::default();
        cfg.classes = 1;
        assert!(matches!(gen_domain_shift(&cfg), Err(Error::Config(_))));
        let mut cfg = DomainShiftConfig::default();
        cfg.feature_dim = 5;
        assert!(matches!(gen_domain_shift(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn same_seed_gives_bitwise_identical_datasets() {
        let cfg = DomainShiftConfig {
            samples_per_cell: 5,
            ..DomainShiftConfig::default()
        };
        let a = gen_domain_shift(&cfg).unwrap();
        let b = gen_domain_shift(&cfg).unwrap();
        assert_eq!(a.train.len(), b.train.len());
        for (x, y) in a.test.iter().zip(&b.test) {
            assert_eq!(x.class, y.class);
            assert_eq!(x.domain, y.domain);
            for (p, q) in x.features.values().iter().zip(y.features.values()) {
                assert_eq!(p.to_bits(), q.to_bits());
            }
        }
    }

    #[test]
    fn labels_depend_only_on_class_prototypes() {
        let ds = gen_domain_shift(&DomainShiftConfig {
            samples_per_cell: 3,
            ..DomainShiftConfig::default()
        })
        .unwrap();
        // Every (class, domain) cell is populated in validation and test.
        for split in [Split::Validation, Split::Test] {
            for domain in 0..4 {
                for class in 0..7 {
                    assert_eq!(
                        ds.split(split)
                            .iter()
                            .filter(|s| s.class == class && s.domain == domain)
                            .count(),
                        3
                    );
                }
            }
        }
        // Train covers the source domain only.
        assert!(ds.train.iter().all(|s| s.domain == 0));
    }

    #[test]
    fn validation_and_test_share_no_samples() {
        let ds = gen_domain_shift(&DomainShiftConfig {
            samples_per_cell: 10,
            ..DomainShiftConfig::default()
        })
        .unwrap();
        for v in &ds.validation {
            for t in &ds.test {
                assert_ne!(v.features.values(), t.features.values());
            }
        }
    }

    #[test]
    fn zero_shift_makes_domains_identically_distributed() {
        let cfg = DomainShiftConfig {
            shift_magnitude: 0.0,
            samples_per_cell: 50,
            ..DomainShiftConfig::default()
        };
        let ds = gen_domain_shift(&cfg).unwrap();
        for shift in &ds.domain_shifts {
            assert!(shift.values().iter().all(|&x| x == 0.0));
        }
        // Per-domain means agree within sampling noise.
        let m0 = mean_of(&ds.domain_features(Split::Test, 0)).unwrap();
        let m1 = mean_of(&ds.domain_features(Split::Test, 1)).unwrap();
        let diff: f64 = m0
            .values()
            .iter()
            .zip(m1.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let se = cfg.noise_scale * (2.0 / (50.0 * 7.0_f64)).sqrt();
        assert!(diff <= 4.0 * se, "max coord diff {diff}, se {se}");
    }

    #[test]
    fn mean_feature_difference_recovers_planted_shift() {
        let cfg = DomainShiftConfig::default();
        let ds = gen_domain_shift(&cfg).unwrap();
        let n_per_domain = (cfg.classes * cfg.samples_per_cell) as f64;
        let m1 = mean_of(&ds.domain_features(Split::Validation, 1)).unwrap();
        let m2 = mean_of(&ds.domain_features(Split::Validation, 2)).unwrap();
        let diff = m1.sub(&m2).unwrap();
        let planted = ds.planted_shift_between(1, 2).unwrap();
        // Each coordinate of the mean difference has standard error
        // noise * sqrt(2/N); allow three of them.
        let se = cfg.noise_scale * (2.0 / n_per_domain).sqrt();
        for (got, want) in diff.values().iter().zip(planted.values()) {
            assert!(
                (got - want).abs() <= 3.0 * se,
                "coordinate off by {} (se {se})",
                (got - want).abs()
            );
        }
    }

    #[test]
    fn shifts_are_linearly_independent_of_prototypes() {
        let ds = gen_domain_shift(&DomainShiftConfig::default()).unwrap();
        // Each non-source shift has weight on its private nuisance axis,
        // which every prototype misses.
        for (m, shift) in ds.domain_shifts.iter().enumerate().skip(1) {
            let axis = ds.config.classes + m - 1;
            assert!(shift.values()[axis].abs() > 0.0);
            for proto in &ds.prototypes {
                assert_eq!(proto.values()[axis], 0.0);
            }
        }
    }

    #[test]
    fn split_csv_round_trips() {
        let ds = gen_domain_shift(&DomainShiftConfig {
            samples_per_cell: 2,
            ..DomainShiftConfig::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.csv");
        write_split_csv(&path, &ds.train, "cfg123").unwrap();
        let loaded = read_split_csv(&path).unwrap();
        assert_eq!(loaded.len(), ds.train.len());
        for (a, b) in loaded.iter().zip(&ds.train) {
            assert_eq!(a.class, b.class);
            assert_eq!(a.domain, b.domain);
            for (p, q) in a.features.values().iter().zip(b.features.values()) {
                assert_eq!(p.to_bits(), q.to_bits());
            }
        }
        // Identical inputs emit identical bytes.
        let path2 = dir.path().join("again.csv");
        write_split_csv(&path2, &ds.train, "cfg123").unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn domain_scaling_option_produces_non_unit_scales() {
        let cfg = DomainShiftConfig {
            domain_scaling: 0.3,
            samples_per_cell: 2,
            ..DomainShiftConfig::default()
        };
        let ds = gen_domain_shift(&cfg).unwrap();
        assert!(ds.domain_scales[0].values().iter().all(|&x| x == 1.0));
        assert!(ds.domain_scales[1].values().iter().any(|&x| x != 1.0));
        assert!(ds.domain_scales[1]
            .values()
            .iter()
            .all(|&x| (0.7..=1.3).contains(&x)));
    }
}
