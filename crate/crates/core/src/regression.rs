// Clustered Gaussian panel regression: per time point, units are clustered
// and share cluster-specific coefficients on one covariate block while a
// second block carries global coefficients, with a common noise precision.
// All full conditionals are conjugate.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma as GammaDraw, StandardNormal};

use crate::error::{Error, Result};
use crate::partition::Partition;

/// Observations for one (unit, time) cell: a response vector with matching
/// clustered-covariate and global-covariate rows.
#[derive(Clone, Debug)]
pub struct ObsGroup {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub z: DMatrix<f64>,
}

impl ObsGroup {
    pub fn empty(p_x: usize, p_z: usize) -> Self {
        Self {
            y: DVector::zeros(0),
            x: DMatrix::zeros(0, p_x),
            z: DMatrix::zeros(0, p_z),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }
}

/// Panel dataset indexed by time (outer) and unit (inner). Unit and time
/// identifiers are dense-reindexed in first-appearance order; the original
/// identifiers are kept so the mapping can be emitted alongside results.
#[derive(Clone, Debug)]
pub struct RegressionDataset {
    n_units: usize,
    n_times: usize,
    p_x: usize,
    p_z: usize,
    groups: Vec<Vec<ObsGroup>>,
    unit_ids: Vec<String>,
    time_ids: Vec<String>,
}

impl RegressionDataset {
    pub fn new(
        groups: Vec<Vec<ObsGroup>>,
        unit_ids: Vec<String>,
        time_ids: Vec<String>,
        p_x: usize,
        p_z: usize,
    ) -> Result<Self> {
        let n_times = groups.len();
        let n_units = unit_ids.len();
        if n_times != time_ids.len() {
            return Err(Error::Data("time id count mismatch".into()));
        }
        for row in &groups {
            if row.len() != n_units {
                return Err(Error::Data("ragged unit dimension".into()));
            }
            for g in row {
                if g.x.nrows() != g.n_rows() || g.z.nrows() != g.n_rows() {
                    return Err(Error::Data("row count mismatch within a cell".into()));
                }
                if g.x.ncols() != p_x || g.z.ncols() != p_z {
                    return Err(Error::Data("covariate width mismatch".into()));
                }
            }
        }
        Ok(Self {
            n_units,
            n_times,
            p_x,
            p_z,
            groups,
            unit_ids,
            time_ids,
        })
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn p_x(&self) -> usize {
        self.p_x
    }

    pub fn p_z(&self) -> usize {
        self.p_z
    }

    pub fn group(&self, t: usize, unit: usize) -> &ObsGroup {
        &self.groups[t][unit]
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn time_ids(&self) -> &[String] {
        &self.time_ids
    }

    pub fn n_obs_at(&self, t: usize) -> usize {
        self.groups[t].iter().map(ObsGroup::n_rows).sum()
    }

    /// Long-format CSV with header
    /// `unit_id,time_id,y,x_1..x_{p_x-1},z_1..z_{p_z}`; an intercept column
    /// is prepended to the clustered covariates internally.
    pub fn from_csv_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut csv = csv::Reader::from_reader(reader);
        let headers = csv.headers()?.clone();
        let names: Vec<&str> = headers.iter().collect();
        if names.len() < 3 || names[0] != "unit_id" || names[1] != "time_id" || names[2] != "y" {
            return Err(Error::Data(
                "header must start with unit_id,time_id,y".into(),
            ));
        }
        let n_x_cols = names[3..].iter().take_while(|n| n.starts_with("x_")).count();
        let n_z_cols = names[3 + n_x_cols..]
            .iter()
            .take_while(|n| n.starts_with("z_"))
            .count();
        if 3 + n_x_cols + n_z_cols != names.len() {
            return Err(Error::Data(
                "columns after y must be x_1..x_k then z_1..z_m".into(),
            ));
        }
        let p_x = n_x_cols + 1; // intercept added internally
        let p_z = n_z_cols;

        let mut unit_index: HashMap<String, usize> = HashMap::new();
        let mut time_index: HashMap<String, usize> = HashMap::new();
        let mut unit_ids = Vec::new();
        let mut time_ids = Vec::new();
        struct RawRow {
            unit: usize,
            time: usize,
            y: f64,
            x: Vec<f64>,
            z: Vec<f64>,
        }
        let mut rows: Vec<RawRow> = Vec::new();
        for record in csv.records() {
            let record = record?;
            let unit_id = record.get(0).unwrap_or_default().to_string();
            let time_id = record.get(1).unwrap_or_default().to_string();
            let unit = *unit_index.entry(unit_id.clone()).or_insert_with(|| {
                unit_ids.push(unit_id.clone());
                unit_ids.len() - 1
            });
            let time = *time_index.entry(time_id.clone()).or_insert_with(|| {
                time_ids.push(time_id.clone());
                time_ids.len() - 1
            });
            let parse = |s: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Data(format!("bad numeric field {s:?}")))
            };
            let y = parse(record.get(2).unwrap_or_default())?;
            let mut x = Vec::with_capacity(p_x);
            x.push(1.0);
            for j in 0..n_x_cols {
                x.push(parse(record.get(3 + j).unwrap_or_default())?);
            }
            let mut z = Vec::with_capacity(p_z);
            for j in 0..n_z_cols {
                z.push(parse(record.get(3 + n_x_cols + j).unwrap_or_default())?);
            }
            rows.push(RawRow { unit, time, y, x, z });
        }
        if rows.is_empty() {
            return Err(Error::Data("no observation rows".into()));
        }
        let n_units = unit_ids.len();
        let n_times = time_ids.len();
        let mut buckets: Vec<Vec<Vec<&RawRow>>> = vec![vec![Vec::new(); n_units]; n_times];
        for row in &rows {
            buckets[row.time][row.unit].push(row);
        }
        let groups: Vec<Vec<ObsGroup>> = buckets
            .into_iter()
            .map(|per_unit| {
                per_unit
                    .into_iter()
                    .map(|cell| {
                        let m = cell.len();
                        let mut y = DVector::zeros(m);
                        let mut x = DMatrix::zeros(m, p_x);
                        let mut z = DMatrix::zeros(m, p_z);
                        for (r, row) in cell.iter().enumerate() {
                            y[r] = row.y;
                            for (c, v) in row.x.iter().enumerate() {
                                x[(r, c)] = *v;
                            }
                            for (c, v) in row.z.iter().enumerate() {
                                z[(r, c)] = *v;
                            }
                        }
                        ObsGroup { y, x, z }
                    })
                    .collect()
            })
            .collect();
        Self::new(groups, unit_ids, time_ids, p_x, p_z)
    }

    /// Emits the dense-reindex mapping (`units.csv`, `times.csv`).
    pub fn write_mapping<P: AsRef<Path>>(&self, dir: P) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut units = std::fs::File::create(dir.join("units.csv"))?;
        writeln!(units, "index,unit_id")?;
        for (i, id) in self.unit_ids.iter().enumerate() {
            writeln!(units, "{i},{id}")?;
        }
        let mut times = std::fs::File::create(dir.join("times.csv"))?;
        writeln!(times, "index,time_id")?;
        for (t, id) in self.time_ids.iter().enumerate() {
            writeln!(times, "{t},{id}")?;
        }
        Ok(())
    }
}

/// Conjugate priors: normal on the clustered and global coefficient blocks
/// (mean and precision each) and gamma (shape, rate) on the noise precision.
#[derive(Clone, Debug)]
pub struct RegressionPriors {
    pub mu_beta: DVector<f64>,
    pub lambda_beta: DMatrix<f64>,
    pub mu_gamma: DVector<f64>,
    pub lambda_gamma: DMatrix<f64>,
    pub a_tau: f64,
    pub b_tau: f64,
}

impl RegressionPriors {
    /// Defaults used throughout: when the clustered block has four columns
    /// the coefficient prior mean is (1.46, 0.15, 0.24, 0.41), otherwise
    /// zero; precisions are 100 I and I; the precision prior is
    /// gamma(1/0.361^2, 1).
    pub fn default_for(p_x: usize, p_z: usize) -> Self {
        let mu_beta = if p_x == 4 {
            DVector::from_row_slice(&[1.46, 0.15, 0.24, 0.41])
        } else {
            DVector::zeros(p_x)
        };
        Self {
            mu_beta,
            lambda_beta: DMatrix::identity(p_x, p_x) * 100.0,
            mu_gamma: DVector::zeros(p_z),
            lambda_gamma: DMatrix::identity(p_z, p_z),
            a_tau: 1.0 / (0.361 * 0.361),
            b_tau: 1.0,
        }
    }

    pub fn validate(&self, p_x: usize, p_z: usize) -> Result<()> {
        if self.mu_beta.len() != p_x || self.lambda_beta.shape() != (p_x, p_x) {
            return Err(Error::invalid("clustered-coefficient prior dimensions"));
        }
        if self.mu_gamma.len() != p_z || self.lambda_gamma.shape() != (p_z, p_z) {
            return Err(Error::invalid("global-coefficient prior dimensions"));
        }
        if Cholesky::new(self.lambda_beta.clone()).is_none()
            || (p_z > 0 && Cholesky::new(self.lambda_gamma.clone()).is_none())
        {
            return Err(Error::invalid("precision matrices must be SPD"));
        }
        if !(self.a_tau.is_finite() && self.a_tau > 0.0 && self.b_tau.is_finite() && self.b_tau > 0.0) {
            return Err(Error::invalid("gamma prior parameters must be positive"));
        }
        Ok(())
    }
}

/// Per-time-point model state: the partition of units, one coefficient vector
/// per cluster, the global coefficients, and the noise precision.
#[derive(Clone, Debug)]
pub struct ClusterParams {
    pub partition: Partition,
    pub beta_star: Vec<DVector<f64>>,
    pub gamma: DVector<f64>,
    pub tau: f64,
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        if self.beta_star.len() != self.partition.n_clusters() {
            return Err(Error::SizeMismatch {
                context: "beta_star vs clusters",
                expected: self.partition.n_clusters(),
                got: self.beta_star.len(),
            });
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::invalid("tau must be positive"));
        }
        Ok(())
    }
}

/// Log density of all observations at time `t` under the clustered model.
pub fn log_likelihood(data: &RegressionDataset, params: &ClusterParams, t: usize) -> Result<f64> {
    params.validate()?;
    let tau = params.tau;
    let mut total_rows = 0usize;
    let mut ssr = 0.0;
    for unit in 0..data.n_units() {
        let g = data.group(t, unit);
        if g.n_rows() == 0 {
            continue;
        }
        let beta = &params.beta_star[params.partition.label(unit) - 1];
        let resid = &g.y - &g.x * beta - &g.z * &params.gamma;
        ssr += resid.norm_squared();
        total_rows += g.n_rows();
    }
    Ok(0.5 * total_rows as f64 * (tau.ln() - (2.0 * std::f64::consts::PI).ln()) - 0.5 * tau * ssr)
}

fn cluster_suffstats(
    data: &RegressionDataset,
    t: usize,
    members: &[usize],
    gamma: &DVector<f64>,
) -> (DMatrix<f64>, DVector<f64>, f64, usize) {
    let p_x = data.p_x();
    let mut xtx = DMatrix::zeros(p_x, p_x);
    let mut xtr = DVector::zeros(p_x);
    let mut rtr = 0.0;
    let mut rows = 0usize;
    for &unit in members {
        let g = data.group(t, unit);
        if g.n_rows() == 0 {
            continue;
        }
        let r = &g.y - &g.z * gamma;
        xtx += g.x.transpose() * &g.x;
        xtr += g.x.transpose() * &r;
        rtr += r.norm_squared();
        rows += g.n_rows();
    }
    (xtx, xtr, rtr, rows)
}

/// Mean and precision of the normal full conditional for one cluster's
/// coefficient vector.
pub fn beta_star_full_conditional(
    data: &RegressionDataset,
    priors: &RegressionPriors,
    t: usize,
    members: &[usize],
    gamma: &DVector<f64>,
    tau: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::invalid("tau must be positive"));
    }
    let (xtx, xtr, _, _) = cluster_suffstats(data, t, members, gamma);
    let precision = &priors.lambda_beta + xtx * tau;
    let b = &priors.lambda_beta * &priors.mu_beta + xtr * tau;
    let chol = Cholesky::new(precision.clone())
        .ok_or_else(|| Error::Numerical("posterior precision not SPD".into()))?;
    Ok((chol.solve(&b), precision))
}

/// Mean and precision of the normal full conditional for the global
/// coefficients at time `t`.
pub fn gamma_full_conditional(
    data: &RegressionDataset,
    priors: &RegressionPriors,
    t: usize,
    partition: &Partition,
    beta_star: &[DVector<f64>],
    tau: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::invalid("tau must be positive"));
    }
    let p_z = data.p_z();
    let mut ztz = DMatrix::zeros(p_z, p_z);
    let mut ztr = DVector::zeros(p_z);
    for unit in 0..data.n_units() {
        let g = data.group(t, unit);
        if g.n_rows() == 0 {
            continue;
        }
        let r = &g.y - &g.x * &beta_star[partition.label(unit) - 1];
        ztz += g.z.transpose() * &g.z;
        ztr += g.z.transpose() * &r;
    }
    let precision = &priors.lambda_gamma + ztz * tau;
    let b = &priors.lambda_gamma * &priors.mu_gamma + ztr * tau;
    let chol = Cholesky::new(precision.clone())
        .ok_or_else(|| Error::Numerical("posterior precision not SPD".into()))?;
    Ok((chol.solve(&b), precision))
}

/// Shape and rate of the gamma full conditional for the noise precision.
pub fn tau_full_conditional(
    data: &RegressionDataset,
    priors: &RegressionPriors,
    t: usize,
    partition: &Partition,
    beta_star: &[DVector<f64>],
    gamma: &DVector<f64>,
) -> (f64, f64) {
    let mut ssr = 0.0;
    let mut rows = 0usize;
    for unit in 0..data.n_units() {
        let g = data.group(t, unit);
        if g.n_rows() == 0 {
            continue;
        }
        let resid = &g.y - &g.x * &beta_star[partition.label(unit) - 1] - &g.z * gamma;
        ssr += resid.norm_squared();
        rows += g.n_rows();
    }
    (priors.a_tau + rows as f64 / 2.0, priors.b_tau + ssr / 2.0)
}

/// Draws from a multivariate normal given its mean and precision matrix.
pub fn draw_mvn_from_precision<R: Rng>(
    mean: &DVector<f64>,
    precision: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let chol = Cholesky::new(precision.clone())
        .ok_or_else(|| Error::Numerical("precision not SPD".into()))?;
    let z = DVector::from_iterator(
        mean.len(),
        (0..mean.len()).map(|_| rng.sample::<f64, _>(StandardNormal)),
    );
    let l = chol.l();
    let shift = l
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    Ok(mean + shift)
}

pub fn update_beta_star<R: Rng>(
    data: &RegressionDataset,
    priors: &RegressionPriors,
    t: usize,
    members: &[usize],
    gamma: &DVector<f64>,
    tau: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let (mean, precision) = beta_star_full_conditional(data, priors, t, members, gamma, tau)?;
    draw_mvn_from_precision(&mean, &precision, rng)
}

pub fn update_gamma<R: Rng>(
    data: &RegressionDataset,
    priors: &RegressionPriors,
    t: usize,
    partition: &Partition,
    beta_star: &[DVector<f64>],
    tau: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let (mean, precision) =
        gamma_full_conditional(data, priors, t, partition, beta_star, tau)?;
    draw_mvn_from_precision(&mean, &precision, rng)
}

pub fn update_tau<R: Rng>(
    data: &RegressionDataset,
    priors: &RegressionPriors,
    t: usize,
    partition: &Partition,
    beta_star: &[DVector<f64>],
    gamma: &DVector<f64>,
    rng: &mut R,
) -> Result<f64> {
    let (shape, rate) = tau_full_conditional(data, priors, t, partition, beta_star, gamma);
    let draw = GammaDraw::new(shape, 1.0 / rate)
        .map_err(|e| Error::Numerical(format!("gamma draw: {e}")))?;
    Ok(draw.sample(rng))
}

/// Log of the cluster's likelihood with the coefficient vector integrated out
/// against its normal prior. Zero for an empty member set.
pub fn marginal_log_likelihood_cluster(
    data: &RegressionDataset,
    priors: &RegressionPriors,
    t: usize,
    members: &[usize],
    gamma: &DVector<f64>,
    tau: f64,
) -> Result<f64> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::invalid("tau must be positive"));
    }
    let (xtx, xtr, rtr, rows) = cluster_suffstats(data, t, members, gamma);
    if rows == 0 {
        return Ok(0.0);
    }
    let precision = &priors.lambda_beta + xtx * tau;
    let b = &priors.lambda_beta * &priors.mu_beta + xtr * tau;
    let chol_post = Cholesky::new(precision)
        .ok_or_else(|| Error::Numerical("posterior precision not SPD".into()))?;
    let chol_prior = Cholesky::new(priors.lambda_beta.clone())
        .ok_or_else(|| Error::Numerical("prior precision not SPD".into()))?;
    let log_det = |c: &Cholesky<f64, nalgebra::Dyn>| {
        2.0 * c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    };
    let quad_post = b.dot(&chol_post.solve(&b));
    let quad_prior = priors.mu_beta.dot(&(&priors.lambda_beta * &priors.mu_beta));
    Ok(
        0.5 * rows as f64 * (tau.ln() - (2.0 * std::f64::consts::PI).ln())
            + 0.5 * log_det(&chol_prior)
            - 0.5 * log_det(&chol_post)
            - 0.5 * tau * rtr
            - 0.5 * quad_prior
            + 0.5 * quad_post,
    )
}
