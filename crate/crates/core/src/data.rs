//! Samples, synthetic biased datasets, CSV ingestion and minibatching.
//!
//! Dataset CSV schema: header `id,a,y,f0,...,f{d-1}`, one sample per line,
//! `a` in {0, 1}, `y` in `[0, U)`, features as decimal text.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Fraction of each (class, group) cell held out for testing.
pub const TEST_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: u64,
    /// Binary sensitive attribute; also the domain id.
    pub attr: u8,
    pub label: usize,
    pub features: Vec<f64>,
}

/// Synthetic dataset parameters.
///
/// Group 0 has `group0_per_class` samples per class; group 1 is sized so that
/// group 0 makes up a fraction `rho` of the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub group0_per_class: usize,
    pub rho: f64,
    /// Pairwise distance between class means.
    pub separation: f64,
    /// Magnitude of the group-1 feature shift.
    pub group_shift: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            num_classes: 3,
            feature_dim: 16,
            group0_per_class: 400,
            rho: 0.8,
            separation: 3.0,
            group_shift: 1.5,
            noise: 1.0,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn group1_per_class(&self) -> usize {
        (self.group0_per_class as f64 * (1.0 - self.rho) / self.rho).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(m));
        if self.num_classes < 2 {
            return fail(format!(
                "num_classes must be >= 2, got {}",
                self.num_classes
            ));
        }
        if self.feature_dim < self.num_classes {
            return fail(format!(
                "feature_dim {} must be >= num_classes {} for the simplex arrangement",
                self.feature_dim, self.num_classes
            ));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return fail(format!("rho must lie in (0, 1), got {}", self.rho));
        }
        if !(self.noise > 0.0) {
            return fail(format!("noise must be positive, got {}", self.noise));
        }
        if !(self.separation >= 0.0 && self.group_shift >= 0.0) {
            return fail("separation and group_shift must be nonnegative".into());
        }
        // each cell must put at least one sample in each split
        let (n0, n1) = (self.group0_per_class, self.group1_per_class());
        if n0 < 2 || n1 < 2 {
            return fail(format!(
                "infeasible cell counts: group 0 has {n0}, group 1 has {n1} per class (need >= 2)"
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    num_classes: usize,
    feature_dim: usize,
    samples: Vec<Sample>,
    is_test: Vec<bool>,
}

/// The samples of one sensitive-attribute group.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub attr: u8,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Dataset {
    pub fn generate(spec: &DatasetSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let d = spec.feature_dim;
        let scale = spec.separation / std::f64::consts::SQRT_2;
        let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
        let noise = Normal::new(0.0, spec.noise).expect("validated noise");

        let mut direction: Vec<f64> = (0..d).map(|_| std_normal.sample(&mut rng)).collect();
        let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        direction
            .iter_mut()
            .for_each(|v| *v *= spec.group_shift / norm);

        let mut samples = Vec::new();
        for class in 0..spec.num_classes {
            for (attr, count) in [(0u8, spec.group0_per_class), (1u8, spec.group1_per_class())] {
                for _ in 0..count {
                    let features = (0..d)
                        .map(|k| {
                            let mean = if k == class { scale } else { 0.0 };
                            let shift = if attr == 1 { direction[k] } else { 0.0 };
                            mean + shift + noise.sample(&mut rng)
                        })
                        .collect();
                    samples.push(Sample {
                        id: samples.len() as u64,
                        attr,
                        label: class,
                        features,
                    });
                }
            }
        }
        Self::from_samples(samples, spec.num_classes, spec.seed)
    }

    /// Validates samples and assigns a stratified train/test split.
    pub fn from_samples(samples: Vec<Sample>, num_classes: usize, split_seed: u64) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidInput("dataset has no samples".into()))?;
        let feature_dim = first.features.len();
        for s in &samples {
            if s.features.len() != feature_dim {
                return Err(Error::InvalidInput(format!(
                    "sample {} has {} features, expected {feature_dim}",
                    s.id,
                    s.features.len()
                )));
            }
            if s.attr > 1 || s.label >= num_classes {
                return Err(Error::InvalidInput(format!(
                    "sample {} has attr {} / label {} outside {{0,1}} / [0,{num_classes})",
                    s.id, s.attr, s.label
                )));
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "sample {} has non-finite features",
                    s.id
                )));
            }
        }
        let is_test = stratified_split(&samples, split_seed);
        Ok(Self {
            num_classes,
            feature_dim,
            samples,
            is_test,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_test(&self, index: usize) -> bool {
        self.is_test[index]
    }

    pub fn train(&self) -> Vec<Sample> {
        self.split(false)
    }

    pub fn test(&self) -> Vec<Sample> {
        self.split(true)
    }

    fn split(&self, test: bool) -> Vec<Sample> {
        self.samples
            .iter()
            .zip(&self.is_test)
            .filter(|(_, &t)| t == test)
            .map(|(s, _)| s.clone())
            .collect()
    }

    /// Attribute groups present in the data, in ascending attribute order.
    pub fn partition_by_attribute(&self) -> Vec<Domain> {
        let mut domains: BTreeMap<u8, Domain> = BTreeMap::new();
        for (s, &test) in self.samples.iter().zip(&self.is_test) {
            let d = domains.entry(s.attr).or_insert_with(|| Domain {
                attr: s.attr,
                train: Vec::new(),
                test: Vec::new(),
            });
            if test {
                d.test.push(s.clone());
            } else {
                d.train.push(s.clone());
            }
        }
        domains.into_values().collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_samples_csv(path, &self.samples)
    }

    /// Reads the dataset CSV schema. `num_classes` defaults to `max(y) + 1`.
    pub fn from_csv(path: &Path, num_classes: Option<usize>, split_seed: u64) -> Result<Self> {
        let samples = read_samples_csv(path)?;
        let inferred = samples
            .iter()
            .map(|s| s.label + 1)
            .max()
            .unwrap_or(0)
            .max(2);
        let num_classes = num_classes.unwrap_or(inferred);
        Self::from_samples(samples, num_classes, split_seed)
    }
}

/// Per (class, group) cell: shuffle, then hold out `round(0.2 n)` samples
/// (at least one, and at most `n - 1`, when `n >= 2`).
fn stratified_split(samples: &[Sample], seed: u64) -> Vec<bool> {
    let mut cells: BTreeMap<(usize, u8), Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        cells.entry((s.label, s.attr)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5917);
    let mut is_test = vec![false; samples.len()];
    for ((label, attr), mut idx) in cells {
        let n = idx.len();
        if n < 2 {
            log::warn!("cell (class {label}, group {attr}) has {n} sample(s); it cannot appear in both splits");
        }
        idx.shuffle(&mut rng);
        let n_test = if n >= 2 {
            ((n as f64 * TEST_FRACTION).round() as usize).clamp(1, n - 1)
        } else {
            0
        };
        for &i in &idx[..n_test] {
            is_test[i] = true;
        }
    }
    is_test
}

pub fn write_samples_csv(path: &Path, samples: &[Sample]) -> Result<()> {
    let d = samples.first().map_or(0, |s| s.features.len());
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["id".to_string(), "a".to_string(), "y".to_string()];
    header.extend((0..d).map(|k| format!("f{k}")));
    w.write_record(&header)?;
    for s in samples {
        let mut rec = vec![s.id.to_string(), s.attr.to_string(), s.label.to_string()];
        rec.extend(s.features.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples_csv(path: &Path) -> Result<Vec<Sample>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let header = reader.headers()?.clone();
    let bad = |line: usize, message: String| Error::Parse {
        path: display.clone(),
        line,
        message,
    };
    if header.len() < 4 || &header[0] != "id" || &header[1] != "a" || &header[2] != "y" {
        return Err(bad(1, "header must be id,a,y,f0,...".into()));
    }
    for (k, name) in header.iter().skip(3).enumerate() {
        if name != format!("f{k}") {
            return Err(bad(1, format!("expected column f{k}, found {name}")));
        }
    }
    let width = header.len();
    let mut samples = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != width {
            return Err(bad(
                line,
                format!("expected {width} fields, found {}", rec.len()),
            ));
        }
        let id = rec[0]
            .trim()
            .parse::<u64>()
            .map_err(|e| bad(line, format!("id: {e}")))?;
        let attr = match rec[1].trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(bad(line, format!("a must be 0 or 1, found {other:?}"))),
        };
        let label = rec[2]
            .trim()
            .parse::<usize>()
            .map_err(|e| bad(line, format!("y: {e}")))?;
        let features = rec
            .iter()
            .skip(3)
            .enumerate()
            .map(|(k, v)| {
                v.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| bad(line, format!("f{k}: invalid number {v:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        samples.push(Sample {
            id,
            attr,
            label,
            features,
        });
    }
    Ok(samples)
}

/// Shuffled minibatches covering every sample once.
pub fn batches(domain: &[Sample], batch_size: usize, rng: &mut impl Rng) -> Vec<Vec<Sample>> {
    let mut idx: Vec<usize> = (0..domain.len()).collect();
    idx.shuffle(rng);
    idx.chunks(batch_size.max(1))
        .map(|c| c.iter().map(|&i| domain[i].clone()).collect())
        .collect()
}

/// Stacks sample features into an `[N, d]` tensor.
pub fn features_tensor<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> Result<Tensor> {
    let rows: Vec<&[f64]> = samples.into_iter().map(|s| s.features.as_slice()).collect();
    Tensor::from_rows(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> DatasetSpec {
        DatasetSpec {
            group0_per_class: 40,
            ..Default::default()
        }
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let a = Dataset::generate(&tiny_spec()).unwrap();
        let b = Dataset::generate(&tiny_spec()).unwrap();
        assert_eq!(a, b);
        let c = Dataset::generate(&DatasetSpec {
            seed: 1,
            ..tiny_spec()
        })
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn default_spec_sizes() {
        let spec = DatasetSpec::default();
        assert_eq!(spec.group1_per_class(), 100);
        let ds = Dataset::generate(&spec).unwrap();
        assert_eq!(ds.len(), 3 * 500);
        assert_eq!(ds.feature_dim(), 16);
    }

    #[test]
    fn split_is_stratified_and_cells_nonempty() {
        let ds = Dataset::generate(&tiny_spec()).unwrap();
        let mut cells: BTreeMap<(usize, u8), (usize, usize)> = BTreeMap::new();
        for (i, s) in ds.samples().iter().enumerate() {
            let e = cells.entry((s.label, s.attr)).or_default();
            if ds.is_test(i) {
                e.1 += 1;
            } else {
                e.0 += 1;
            }
        }
        for ((_, _), (train, test)) in cells {
            let n = (train + test) as f64;
            assert!(train >= 1 && test >= 1);
            assert!((test as f64 - TEST_FRACTION * n).abs() <= 1.0);
        }
        assert_eq!(ds.train().len() + ds.test().len(), ds.len());
    }

    #[test]
    fn infeasible_cells_rejected() {
        let spec = DatasetSpec {
            group0_per_class: 4,
            rho: 0.9,
            ..Default::default()
        };
        assert!(matches!(
            Dataset::generate(&spec),
            Err(Error::InvalidConfig(_))
        ));
        assert!(Dataset::generate(&DatasetSpec {
            rho: 1.0,
            ..tiny_spec()
        })
        .is_err());
        assert!(Dataset::generate(&DatasetSpec {
            noise: 0.0,
            ..tiny_spec()
        })
        .is_err());
    }

    #[test]
    fn noiseless_data_is_separable_by_nearest_mean() {
        let spec = DatasetSpec {
            noise: 1e-9,
            separation: 10.0,
            group_shift: 0.0,
            ..tiny_spec()
        };
        let ds = Dataset::generate(&spec).unwrap();
        let scale = 10.0 / std::f64::consts::SQRT_2;
        for s in ds.samples() {
            let nearest = (0..3)
                .min_by(|&a, &b| {
                    let dist = |c: usize| -> f64 {
                        s.features
                            .iter()
                            .enumerate()
                            .map(|(k, v)| (v - if k == c { scale } else { 0.0 }).powi(2))
                            .sum()
                    };
                    dist(a).total_cmp(&dist(b))
                })
                .unwrap();
            assert_eq!(nearest, s.label);
        }
    }

    #[test]
    fn partition_covers_dataset() {
        let ds = Dataset::generate(&tiny_spec()).unwrap();
        let domains = ds.partition_by_attribute();
        assert_eq!(domains.len(), 2);
        let total: usize = domains.iter().map(|d| d.train.len() + d.test.len()).sum();
        assert_eq!(total, ds.len());
        assert!(domains
            .iter()
            .all(|d| d.train.iter().chain(&d.test).all(|s| s.attr == d.attr)));
    }

    #[test]
    fn csv_round_trip_and_hand_written_file() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset::generate(&tiny_spec()).unwrap();
        let path = dir.path().join("ds.csv");
        ds.write_csv(&path).unwrap();
        let back = Dataset::from_csv(&path, Some(3), tiny_spec().seed).unwrap();
        assert_eq!(back, ds);

        let hand = dir.path().join("hand.csv");
        std::fs::write(
            &hand,
            "id,a,y,f0,f1\n0,0,0,0.5,1\n1,1,0,-0.25,2\n2,0,1,3,4e-1\n3,1,1,0,0\n",
        )
        .unwrap();
        let ds = Dataset::from_csv(&hand, None, 0).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.num_classes(), 2);
        assert_eq!(ds.samples()[2].features, vec![3.0, 0.4]);
        assert_eq!(ds.samples()[1].attr, 1);
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "id,a,y,f0\n0,0,0,1.0\n1,2,0,1.0\n").unwrap();
        match read_samples_csv(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::write(&path, "id,a,y,f0\n0,0,0,abc\n").unwrap();
        assert!(matches!(
            read_samples_csv(&path),
            Err(Error::Parse { line: 2, .. })
        ));
        std::fs::write(&path, "id,a,y,f0\n0,0,0\n").unwrap();
        assert!(matches!(
            read_samples_csv(&path),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            read_samples_csv(&dir.path().join("nope.csv")),
            Err(Error::MissingFile(_))
        ));
    }

    #[test]
    fn batches_cover_domain() {
        let ds = Dataset::generate(&tiny_spec()).unwrap();
        let domain = &ds.partition_by_attribute()[1].train;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let all = batches(domain, domain.len() + 5, &mut rng);
        assert_eq!(all.len(), 1);
        let mut ids: Vec<u64> = all[0].iter().map(|s| s.id).collect();
        ids.sort();
        let mut expected: Vec<u64> = domain.iter().map(|s| s.id).collect();
        expected.sort();
        assert_eq!(ids, expected);

        let mut r1 = ChaCha8Rng::seed_from_u64(8);
        let mut r2 = ChaCha8Rng::seed_from_u64(8);
        assert_eq!(batches(domain, 7, &mut r1), batches(domain, 7, &mut r2));
    }
}
