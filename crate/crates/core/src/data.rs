//! Synthetic datasets, non-IID client partitioning and OOD noise.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal, Uniform};

use crate::matrix::Matrix;
use crate::nn::Batch;
use crate::seed::{self, Rng};
use crate::{Error, Result};

/// Distance of blob centers from the origin.
pub const CENTER_RADIUS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(inputs: Matrix, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if labels.len() != inputs.rows() {
            return Err(Error::DimensionMismatch {
                context: "dataset labels",
                expected: inputs.rows(),
                actual: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::InvalidInput(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        if !inputs.is_finite() {
            return Err(Error::InvalidInput("non-finite dataset inputs".into()));
        }
        Ok(Self {
            inputs,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.classes];
        for &y in &self.labels {
            c[y] += 1;
        }
        c
    }

    /// Smallest and largest coordinate over all inputs.
    pub fn coordinate_range(&self) -> (f64, f64) {
        self.inputs
            .as_slice()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Seeded shuffle split into `(train, test)`.
    pub fn split(&self, test_fraction: f64, rng: &mut Rng) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::InvalidInput(format!(
                "test fraction {test_fraction} outside [0, 1)"
            )));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(rng);
        let n_test = (test_fraction * self.len() as f64).round() as usize;
        let (test, train) = idx.split_at(n_test);
        Ok((self.subset(train), self.subset(test)))
    }
}

/// Isotropic Gaussian blobs with centers on a sphere of radius [`CENTER_RADIUS`].
///
/// Labels cycle through the classes before shuffling, so class counts differ by
/// at most one.
pub fn make_blobs(classes: usize, dim: usize, n: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::InvalidInput("need at least two classes".into()));
    }
    if dim == 0 {
        return Err(Error::InvalidInput("dimension must be positive".into()));
    }
    if n < classes {
        return Err(Error::InvalidInput(format!(
            "{n} samples cannot cover {classes} classes"
        )));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::InvalidInput(format!("invalid spread {spread}")));
    }
    let mut rng = seed::rng_from(seed);
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt()
                .max(f64::MIN_POSITIVE);
            v.into_iter().map(|x| CENTER_RADIUS * x / norm).collect()
        })
        .collect();
    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    labels.shuffle(&mut rng);
    let mut data = Vec::with_capacity(n * dim);
    for &y in &labels {
        for &c in &centers[y] {
            let noise: f64 = StandardNormal.sample(&mut rng);
            data.push(c + spread * noise);
        }
    }
    Dataset::new(Matrix::from_vec(n, dim, data)?, labels, classes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSpec {
    pub clients: usize,
    /// Coefficient of variation of client dataset sizes.
    pub size_cv: f64,
    /// Dirichlet concentration of per-client label proportions.
    pub label_alpha: f64,
    /// Fraction of each client's samples held out as unlabeled data.
    pub unlabeled_fraction: f64,
    pub seed: u64,
}

/// One simulated client's data.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    pub labeled: Batch,
    /// Inputs of the unlabeled set; labels are dropped for training.
    pub unlabeled: Matrix,
    /// Hidden labels of the unlabeled set, used only for reporting.
    pub validation_labels: Vec<usize>,
    pub labeled_indices: Vec<usize>,
    pub unlabeled_indices: Vec<usize>,
}

impl ClientState {
    /// Aggregation weight: the number of labeled samples.
    pub fn sample_count(&self) -> usize {
        self.labeled_indices.len()
    }
}

/// Target client sizes summing to `n`, each at least 2.
fn client_sizes(n: usize, spec: &PartitionSpec, rng: &mut Rng) -> Result<Vec<usize>> {
    let m = spec.clients;
    let weights: Vec<f64> = if spec.size_cv > 0.0 {
        let normal =
            Normal::new(1.0, spec.size_cv).map_err(|e| Error::InvalidInput(e.to_string()))?;
        (0..m).map(|_| normal.sample(rng).max(0.05)).collect()
    } else {
        vec![1.0; m]
    };
    let spare = n - 2 * m;
    let total: f64 = weights.iter().sum();
    let shares: Vec<f64> = weights.iter().map(|w| spare as f64 * w / total).collect();
    let mut sizes: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let mut left = spare - sizes.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        let ra = shares[a] - shares[a].floor();
        let rb = shares[b] - shares[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[k] += 1;
        left -= 1;
    }
    Ok(sizes.into_iter().map(|s| s + 2).collect())
}

fn dirichlet(alpha: f64, k: usize, rng: &mut Rng) -> Result<Vec<f64>> {
    if alpha.is_infinite() {
        return Ok(vec![1.0 / k as f64; k]);
    }
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 {
        Ok(draws.into_iter().map(|d| d / total).collect())
    } else {
        Ok(vec![1.0 / k as f64; k])
    }
}

/// Disjoint, exhaustive non-IID split of `ds` across clients.
pub fn partition(ds: &Dataset, spec: &PartitionSpec) -> Result<Vec<ClientState>> {
    let m = spec.clients;
    if m == 0 {
        return Err(Error::InvalidInput(
            "partition needs at least one client".into(),
        ));
    }
    if ds.len() < 2 * m {
        return Err(Error::InvalidInput(format!(
            "{} samples cannot give {m} clients one labeled and one unlabeled sample each",
            ds.len()
        )));
    }
    if !(spec.size_cv >= 0.0 && spec.size_cv.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "invalid size cv {}",
            spec.size_cv
        )));
    }
    if spec.label_alpha.is_nan() || spec.label_alpha <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "label alpha must be positive, got {}",
            spec.label_alpha
        )));
    }
    if !(spec.unlabeled_fraction > 0.0 && spec.unlabeled_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "unlabeled fraction {} outside (0, 1)",
            spec.unlabeled_fraction
        )));
    }

    let mut rng = seed::rng_from(spec.seed);
    let sizes = client_sizes(ds.len(), spec, &mut rng)?;

    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); ds.classes];
    for (i, &y) in ds.labels.iter().enumerate() {
        pools[y].push(i);
    }
    for p in &mut pools {
        p.shuffle(&mut rng);
    }

    let mut clients = Vec::with_capacity(m);
    for (id, &size) in sizes.iter().enumerate() {
        let props = dirichlet(spec.label_alpha, ds.classes, &mut rng)?;
        let mut mine = Vec::with_capacity(size);
        for _ in 0..size {
            let mut weights: Vec<f64> = pools
                .iter()
                .zip(&props)
                .map(|(p, &w)| if p.is_empty() { 0.0 } else { w })
                .collect();
            if weights.iter().sum::<f64>() <= 0.0 {
                weights = pools.iter().map(|p| p.len() as f64).collect();
            }
            let total: f64 = weights.iter().sum();
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut class = None;
            for (c, &w) in weights.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                class = Some(c);
                if acc > target {
                    break;
                }
            }
            let class = class.ok_or_else(|| Error::InvalidInput("ran out of samples".into()))?;
            mine.push(pools[class].pop().expect("non-empty pool"));
        }
        mine.shuffle(&mut rng);
        let n_unlabeled =
            ((spec.unlabeled_fraction * size as f64).round() as usize).clamp(1, size - 1);
        let (unl, lab) = mine.split_at(n_unlabeled);
        let labeled_sub = ds.subset(lab);
        let unlabeled_sub = ds.subset(unl);
        clients.push(ClientState {
            id,
            labeled: Batch::labeled(labeled_sub.inputs, labeled_sub.labels)?,
            unlabeled: unlabeled_sub.inputs,
            validation_labels: unlabeled_sub.labels,
            labeled_indices: lab.to_vec(),
            unlabeled_indices: unl.to_vec(),
        });
    }
    Ok(clients)
}

/// Uniform noise over the hypercube `[lo, hi]^dim`, without labels.
pub fn make_ood(dim: usize, n: usize, range: (f64, f64), seed: u64) -> Result<Batch> {
    if n == 0 || dim == 0 {
        return Err(Error::InvalidInput(
            "OOD set needs samples and dimensions".into(),
        ));
    }
    let (lo, hi) = range;
    let dist = Uniform::new_inclusive(lo, hi).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut rng = seed::rng_from(seed);
    let data = (0..n * dim).map(|_| dist.sample(&mut rng)).collect();
    Batch::unlabeled(Matrix::from_vec(n, dim, data)?)
}

/// Reads a CSV dataset: a header line `n,dim,classes`, then `n` rows of `dim`
/// features followed by an integer label.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidInput("empty dataset file".into()))?;
    let nums: Vec<usize> = header
        .split(',')
        .map(|v| v.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidInput(format!("bad header `{header}`: {e}")))?;
    let [n, dim, classes] = nums[..] else {
        return Err(Error::InvalidInput(format!(
            "header must be `n,dim,classes`, got `{header}`"
        )));
    };
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for (row, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != dim + 1 {
            return Err(Error::InvalidInput(format!(
                "row {row}: expected {} fields, got {}",
                dim + 1,
                fields.len()
            )));
        }
        for f in &fields[..dim] {
            data.push(
                f.parse::<f64>()
                    .map_err(|e| Error::InvalidInput(format!("row {row}: {e}")))?,
            );
        }
        labels.push(
            fields[dim]
                .parse::<usize>()
                .map_err(|e| Error::InvalidInput(format!("row {row}: {e}")))?,
        );
    }
    if labels.len() != n {
        return Err(Error::InvalidInput(format!(
            "header declares {n} rows, found {}",
            labels.len()
        )));
    }
    Dataset::new(Matrix::from_vec(n, dim, data)?, labels, classes)
}
