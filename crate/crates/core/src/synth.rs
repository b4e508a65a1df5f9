// Synthetic panel data generation with a known, optionally drifting sequence
// of true partitions, used for benchmarks and end-to-end tests.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::regression::{ObsGroup, RegressionDataset};
use crate::util::sample_categorical;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_units: usize,
    pub n_times: usize,
    /// Observation rows per (unit, time) cell.
    pub rows_per_cell: usize,
    /// Clustered-covariate columns including the intercept.
    pub p_x: usize,
    pub p_z: usize,
    /// Number of clusters in the initial true partition.
    pub initial_clusters: usize,
    /// Expected fraction of units reassigned between consecutive times;
    /// zero keeps the partition constant.
    pub drift: f64,
    /// Standard deviation of cluster coefficient draws.
    pub beta_sd: f64,
    /// Standard deviation of global coefficient draws.
    pub gamma_sd: f64,
    /// Noise precision of the response.
    pub tau: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_units: 20,
            n_times: 10,
            rows_per_cell: 2,
            p_x: 2,
            p_z: 1,
            initial_clusters: 3,
            drift: 0.1,
            beta_sd: 1.0,
            gamma_sd: 1.0,
            tau: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_units == 0 || self.n_times == 0 || self.rows_per_cell == 0 {
            return Err(Error::Config("synthetic dimensions must be positive".into()));
        }
        if self.p_x == 0 {
            return Err(Error::Config("need at least the intercept column".into()));
        }
        if self.initial_clusters == 0 || self.initial_clusters > self.n_units {
            return Err(Error::Config("initial cluster count out of range".into()));
        }
        if !(0.0..=1.0).contains(&self.drift) {
            return Err(Error::Config("drift must lie in [0, 1]".into()));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::Config("tau must be positive".into()));
        }
        Ok(())
    }
}

/// Ground truth emitted next to the generated dataset.
#[derive(Clone, Debug)]
pub struct SynthTruth {
    pub partitions: Vec<Partition>,
    pub betas: Vec<Vec<DVector<f64>>>,
    pub gammas: Vec<DVector<f64>>,
    pub tau: f64,
}

fn drift_partition<R: Rng>(previous: &Partition, moves: usize, rng: &mut R) -> Result<Partition> {
    let n = previous.n_items();
    let mut labels = previous.labels().to_vec();
    let chosen = rand::seq::index::sample(rng, n, moves.min(n)).into_vec();
    for item in chosen {
        // Reallocate uniformly over the other clusters plus a new one.
        let mut options: Vec<usize> = Vec::new();
        let mut max_other = 0;
        for (j, &l) in labels.iter().enumerate() {
            if j != item {
                if !options.contains(&l) {
                    options.push(l);
                }
                max_other = max_other.max(l);
            }
        }
        options.push(max_other + 1);
        let probs = vec![1.0 / options.len() as f64; options.len()];
        labels[item] = options[sample_categorical(&probs, rng)];
        labels = crate::partition::canonicalize_labels(&labels);
    }
    Partition::from_labels(&labels)
}

/// Generates a dataset from the clustered regression model with drifting true
/// partitions. Deterministic for a given seed.
pub fn generate(config: &SynthConfig) -> Result<(RegressionDataset, SynthTruth)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n_units;

    // Balanced initial partition, shuffled so cluster identity is arbitrary.
    let mut initial: Vec<usize> = (0..n).map(|i| 1 + i % config.initial_clusters).collect();
    rand::seq::SliceRandom::shuffle(&mut initial[..], &mut rng);
    let mut partitions = vec![Partition::from_labels(&initial)?];
    let moves = (config.drift * n as f64).round() as usize;
    for _ in 1..config.n_times {
        let next = drift_partition(partitions.last().unwrap(), moves, &mut rng)?;
        partitions.push(next);
    }

    let normal = |rng: &mut ChaCha8Rng, sd: f64| -> f64 {
        rng.sample::<f64, _>(rand_distr::StandardNormal) * sd
    };

    let mut betas = Vec::with_capacity(config.n_times);
    let mut gammas = Vec::with_capacity(config.n_times);
    let mut groups: Vec<Vec<ObsGroup>> = Vec::with_capacity(config.n_times);
    let noise_sd = 1.0 / config.tau.sqrt();
    for t in 0..config.n_times {
        let q = partitions[t].n_clusters();
        let beta_t: Vec<DVector<f64>> = (0..q)
            .map(|_| {
                DVector::from_iterator(config.p_x, (0..config.p_x).map(|_| normal(&mut rng, config.beta_sd)))
            })
            .collect();
        let gamma_t = DVector::from_iterator(
            config.p_z,
            (0..config.p_z).map(|_| normal(&mut rng, config.gamma_sd)),
        );
        let mut row_groups = Vec::with_capacity(n);
        for unit in 0..n {
            let m = config.rows_per_cell;
            let mut x = DMatrix::zeros(m, config.p_x);
            let mut z = DMatrix::zeros(m, config.p_z);
            let mut y = DVector::zeros(m);
            let beta = &beta_t[partitions[t].label(unit) - 1];
            for r in 0..m {
                x[(r, 0)] = 1.0;
                for c in 1..config.p_x {
                    x[(r, c)] = normal(&mut rng, 1.0);
                }
                for c in 0..config.p_z {
                    z[(r, c)] = normal(&mut rng, 1.0);
                }
                let mean = x.row(r).transpose().dot(beta) + z.row(r).transpose().dot(&gamma_t);
                y[r] = mean + normal(&mut rng, noise_sd);
            }
            row_groups.push(ObsGroup { y, x, z });
        }
        groups.push(row_groups);
        betas.push(beta_t);
        gammas.push(gamma_t);
    }

    let unit_ids = (0..n).map(|i| format!("unit{i:03}")).collect();
    let time_ids = (0..config.n_times).map(|t| format!("time{t:03}")).collect();
    let data = RegressionDataset::new(groups, unit_ids, time_ids, config.p_x, config.p_z)?;
    Ok((
        data,
        SynthTruth {
            partitions,
            betas,
            gammas,
            tau: config.tau,
        },
    ))
}

/// Writes the dataset in the long CSV format accepted by the loader.
pub fn write_dataset_csv<P: AsRef<Path>>(data: &RegressionDataset, path: P) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    let p_x = data.p_x();
    let p_z = data.p_z();
    let mut header = vec!["unit_id".to_string(), "time_id".into(), "y".into()];
    for j in 1..p_x {
        header.push(format!("x_{j}"));
    }
    for j in 1..=p_z {
        header.push(format!("z_{j}"));
    }
    writer.write_record(&header)?;
    for t in 0..data.n_times() {
        for unit in 0..data.n_units() {
            let g = data.group(t, unit);
            for r in 0..g.n_rows() {
                let mut record = vec![
                    data.unit_ids()[unit].clone(),
                    data.time_ids()[t].clone(),
                    g.y[r].to_string(),
                ];
                for c in 1..p_x {
                    record.push(g.x[(r, c)].to_string());
                }
                for c in 0..p_z {
                    record.push(g.z[(r, c)].to_string());
                }
                writer.write_record(&record)?;
            }
        }
    }
    writer.flush()?;
    Ok(())
}

/// Writes the true partitions (one canonical label string per time point).
pub fn write_truth_csv<P: AsRef<Path>>(truth: &SynthTruth, path: P) -> Result<()> {
    let mut file = std::fs::File::create(path.as_ref())?;
    writeln!(file, "t,partition")?;
    for (t, p) in truth.partitions.iter().enumerate() {
        writeln!(file, "{t},{p}")?;
    }
    Ok(())
}
