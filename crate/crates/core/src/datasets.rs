//! Seeded synthetic classification datasets with fixed train/validation/test splits.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::gumbel::RngState;
use crate::tensor::Tensor;

/// Train, validation and test fractions sum to one; test takes the remainder.
pub const TRAIN_FRACTION: f64 = 0.5;
pub const VALID_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

/// Features, labels and a disjoint split of sample indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<f64>,
    pub dims: usize,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Features `[batch, dims]` and class indices `[batch]` as tensors.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x: Tensor,
    pub y: Tensor,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.x.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> impl Iterator<Item = usize> + '_ {
        self.y.data().iter().map(|&v| v as usize)
    }
}

impl Dataset {
    fn from_samples(features: Vec<f64>, dims: usize, labels: Vec<usize>, classes: usize, seed: u64) -> Self {
        let n = labels.len();
        let mut order: Vec<usize> = (0..n).collect();
        // independent stream so the split does not depend on how many draws generation used
        let mut rng = RngState::with_stream(seed, 1);
        order.shuffle(rng.inner());
        let n_train = (n as f64 * TRAIN_FRACTION).round() as usize;
        let n_valid = (n as f64 * VALID_FRACTION).round() as usize;
        let test = order.split_off(n_train + n_valid);
        let valid = order.split_off(n_train);
        Self {
            features,
            dims,
            labels,
            classes,
            train: order,
            valid,
            test,
            seed,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dims..(i + 1) * self.dims]
    }

    pub fn indices(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        assert!(!indices.is_empty(), "empty batch");
        let mut x = Vec::with_capacity(indices.len() * self.dims);
        for &i in indices {
            x.extend_from_slice(self.row(i));
        }
        let y = indices.iter().map(|&i| self.labels[i] as f64).collect();
        Batch {
            x: Tensor::new(vec![indices.len(), self.dims], x).expect("rows have `dims` features"),
            y: Tensor::vector(y),
        }
    }

    pub fn split_batch(&self, split: Split) -> Batch {
        self.batch(self.indices(split))
    }

    /// Class counts over the given indices.
    pub fn class_counts(&self, indices: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &i in indices {
            counts[self.labels[i]] += 1;
        }
        counts
    }

    /// Writes a `dims,classes,seed` header line followed by one row per
    /// sample: the features, the label and the split name.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut split_of = vec![Split::Train; self.len()];
        for &i in &self.valid {
            split_of[i] = Split::Valid;
        }
        for &i in &self.test {
            split_of[i] = Split::Test;
        }
        let mut writer = csv::WriterBuilder::new().flexible(true).from_writer(out);
        writer.write_record([self.dims.to_string(), self.classes.to_string(), self.seed.to_string()])?;
        for i in 0..self.len() {
            let mut record: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            record.push(self.labels[i].to_string());
            record.push(split_of[i].name().to_string());
            writer.write_record(&record)?;
        }
        writer.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(input);
        let mut records = reader.records();
        let header = records
            .next()
            .ok_or_else(|| Error::Parse("missing header line".into()))??;
        let field = |i: usize| -> Result<u64> {
            header
                .get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad header field {i}")))
        };
        let (dims, classes, seed) = (field(0)? as usize, field(1)? as usize, field(2)?);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let (mut train, mut valid, mut test) = (Vec::new(), Vec::new(), Vec::new());
        for (row, record) in records.enumerate() {
            let record = record?;
            if record.len() != dims + 2 {
                return Err(Error::Parse(format!("row {row}: expected {} fields", dims + 2)));
            }
            for v in record.iter().take(dims) {
                features.push(
                    v.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("row {row}: {e}")))?,
                );
            }
            let label: usize = record[dims]
                .parse()
                .map_err(|e| Error::Parse(format!("row {row}: {e}")))?;
            if label >= classes {
                return Err(Error::Parse(format!("row {row}: label {label} >= {classes}")));
            }
            labels.push(label);
            match &record[dims + 1] {
                "train" => train.push(row),
                "valid" => valid.push(row),
                "test" => test.push(row),
                other => return Err(Error::Parse(format!("row {row}: unknown split `{other}`"))),
            }
        }
        Ok(Self {
            features,
            dims,
            labels,
            classes,
            train,
            valid,
            test,
            seed,
        })
    }
}

fn check_samples(n: usize) -> Result<()> {
    if n < 10 {
        return Err(Error::config("samples", format!("need at least 10 samples, got {n}")));
    }
    Ok(())
}

fn normal(std: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, std).map_err(|e| Error::config("noise", e.to_string()))
}

/// Two interleaved half circles in the plane, perturbed by Gaussian noise.
pub fn make_two_moons(n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    check_samples(n)?;
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::config("noise", "must be a finite non-negative value"));
    }
    let gauss = normal(noise)?;
    let mut rng = RngState::new(seed);
    let n_outer = n / 2;
    let n_inner = n - n_outer;
    let mut features = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n_outer {
        let t = PI * i as f64 / (n_outer - 1) as f64;
        features.extend([t.cos(), t.sin()]);
        labels.push(0);
    }
    for i in 0..n_inner {
        let t = PI * i as f64 / (n_inner - 1) as f64;
        features.extend([1.0 - t.cos(), 0.5 - t.sin()]);
        labels.push(1);
    }
    for v in &mut features {
        *v += gauss.sample(rng.inner());
    }
    Ok(Dataset::from_samples(features, 2, labels, 2, seed))
}

/// Two Archimedean spirals, one arm per class, rotated by half a turn.
pub fn make_spirals(n: usize, turns: f64, noise: f64, seed: u64) -> Result<Dataset> {
    check_samples(n)?;
    if !(turns > 0.0 && turns.is_finite()) {
        return Err(Error::config("turns", "must be positive"));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::config("noise", "must be a finite non-negative value"));
    }
    let gauss = normal(noise)?;
    let mut rng = RngState::new(seed);
    let mut features = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for class in 0..2 {
        let count = if class == 0 { n / 2 } else { n - n / 2 };
        for i in 0..count {
            let t = (i as f64 + 0.5) / count as f64;
            let angle = 2.0 * PI * turns * t + PI * class as f64;
            features.extend([t * angle.cos(), t * angle.sin()]);
            labels.push(class);
        }
    }
    for v in &mut features {
        *v += gauss.sample(rng.inner());
    }
    Ok(Dataset::from_samples(features, 2, labels, 2, seed))
}

/// Parity bits supported by [`make_parity`].
pub const PARITY_BITS: std::ops::RangeInclusive<usize> = 2..=12;

/// Every binary string of length `bits`, labelled by the XOR of its bits.
pub fn make_parity(bits: usize, seed: u64) -> Result<Dataset> {
    if !PARITY_BITS.contains(&bits) {
        return Err(Error::config(
            "parity_bits",
            format!("must be in {PARITY_BITS:?}, got {bits}"),
        ));
    }
    let n = 1usize << bits;
    let mut features = Vec::with_capacity(n * bits);
    let mut labels = Vec::with_capacity(n);
    for s in 0..n {
        for b in 0..bits {
            features.push(((s >> b) & 1) as f64);
        }
        labels.push((s.count_ones() % 2) as usize);
    }
    Ok(Dataset::from_samples(features, bits, labels, 2, seed))
}
