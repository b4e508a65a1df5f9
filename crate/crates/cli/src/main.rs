// Command-line front end: theorem verification, exact pmf tables, sampling,
// synthetic data generation, model fitting with cross-validation, and archive
// summaries.
//
// Exit codes: 0 success, 1 validation failure, 2 runtime failure,
// 3 verification failure.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use config::{DistConfig, RunConfig};
use shrinkpart::baseline::baseline_log_pmf;
use shrinkpart::cpp::{cpp_log_pmf, CppParams};
use shrinkpart::error::Error;
use shrinkpart::fit::{
    crossval, fit, point_estimate, posterior_ari_matrix, summarize_archive, CrossvalReport,
};
use shrinkpart::lsp::{lsp_log_pmf, lsp_marginal_log_pmf, lsp_sample, LspParams};
use shrinkpart::mcmc::{baseline_sample, write_manifest, SampleArchive};
use shrinkpart::oracle::default_suite;
use shrinkpart::partition::{enumerate_partitions, Partition};
use shrinkpart::perm::Permutation;
use shrinkpart::regression::RegressionDataset;
use shrinkpart::sp::{sp_log_pmf, sp_marginal_log_pmf, sp_sample, MarginalMode, SpParams};
use shrinkpart::synth::{generate, write_dataset_csv, write_truth_csv};

#[derive(Parser)]
#[command(name = "shrinkpart", version, about = "Anchored random-partition models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the theorem verification suite and report pass/fail per theorem.
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Only run the report whose identifier matches (1-6).
        #[arg(long)]
        theorem: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the exact pmf table of a configured distribution.
    Pmf {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw seeded samples from a configured distribution.
    Sample {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 100)]
        draws: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic panel dataset with known true partitions.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit a partition model; with --folds, also cross-validate.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        chains: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Cross-validated fit (alias of `fit` with folds defaulting to 10).
    Crossval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long)]
        chains: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Rebuild posterior summaries from an archive directory.
    Summarize {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            classify(&e)
        }
    };
    std::process::exit(code);
}

fn classify(error: &Error) -> i32 {
    match error {
        Error::Io(_) | Error::Csv(_) | Error::Numerical(_) => 2,
        _ => 1,
    }
}

fn run(command: Command) -> Result<i32, Error> {
    match command {
        Command::Verify {
            config,
            theorem,
            seed,
            out,
        } => cmd_verify(config, theorem, seed, out),
        Command::Pmf { config, out } => cmd_pmf(&config, out),
        Command::Sample {
            config,
            draws,
            seed,
            out,
        } => cmd_sample(&config, draws, seed, out),
        Command::Synth { config, out, seed } => cmd_synth(&config, &out, seed),
        Command::Fit {
            config,
            data,
            out,
            folds,
            chains,
            seed,
        } => cmd_fit(&config, &data, &out, folds, chains, seed),
        Command::Crossval {
            config,
            data,
            out,
            folds,
            chains,
            seed,
        } => cmd_fit(&config, &data, &out, Some(folds), chains, seed),
        Command::Summarize { archive, out } => cmd_summarize(&archive, out),
    }
}

fn cmd_verify(
    config: Option<PathBuf>,
    theorem: Option<String>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<i32, Error> {
    let config = match config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let seed = seed.unwrap_or(config.seed);
    let reports = default_suite(seed)?;
    let selected: Vec<_> = reports
        .into_iter()
        .filter(|r| theorem.as_deref().is_none_or(|want| r.theorem == want))
        .collect();
    if selected.is_empty() {
        return Err(Error::Config(format!(
            "no theorem report matches {theorem:?}"
        )));
    }
    let mut text = String::new();
    for report in &selected {
        text.push_str(&report.to_string());
    }
    print!("{text}");
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("verify.txt"), &text)?;
    }
    Ok(if selected.iter().all(|r| r.pass) { 0 } else { 3 })
}

fn dist_perm(n: usize, perm: &Option<Vec<usize>>) -> Result<Permutation, Error> {
    match perm {
        Some(order) => Permutation::from_one_based(order),
        None => Ok(Permutation::natural(n)),
    }
}

fn sp_params_from(config: &DistConfig, omega_override: Option<f64>) -> Result<SpParams, Error> {
    let DistConfig::Sp {
        anchor,
        omega,
        shrinkage,
        psi,
        baseline,
        ..
    } = config
    else {
        return Err(Error::Config("not a shrinkage-partition spec".into()));
    };
    let n = anchor.n_items();
    let shrinkage_vec = match (omega_override, shrinkage, omega) {
        (Some(w), _, _) => vec![w; n],
        (None, Some(values), _) => values.clone(),
        (None, None, Some(w)) => vec![*w; n],
        (None, None, None) => return Err(Error::Config("sp spec needs omega or shrinkage".into())),
    };
    SpParams::new(anchor.clone(), shrinkage_vec, *psi, baseline.clone())
}

fn pmf_rows(
    dist: &DistConfig,
    omega_override: Option<f64>,
) -> Result<Vec<(Partition, f64)>, Error> {
    let n = dist.n_items();
    match dist {
        DistConfig::Sp { marginal, perm, .. } => {
            let params = sp_params_from(dist, omega_override)?;
            enumerate_partitions(n)?
                .map(|p| {
                    let lp = if *marginal {
                        sp_marginal_log_pmf(&params, &p, MarginalMode::Exact)?
                    } else {
                        sp_log_pmf(&params, &p, &dist_perm(n, perm)?)?
                    };
                    Ok((p, lp.exp()))
                })
                .collect()
        }
        DistConfig::Cpp {
            anchor,
            omega,
            distance,
            baseline,
        } => {
            let params = CppParams::new(anchor.clone(), *omega, *distance, baseline.clone())?;
            enumerate_partitions(n)?
                .map(|p| Ok((p.clone(), cpp_log_pmf(&params, &p)?.exp())))
                .collect()
        }
        DistConfig::Lsp {
            anchor,
            omega,
            marginal,
            perm,
        } => {
            let params = LspParams::new(anchor.clone(), *omega)?;
            enumerate_partitions(n)?
                .map(|p| {
                    let lp = if *marginal {
                        lsp_marginal_log_pmf(&params, &p, MarginalMode::Exact)?
                    } else {
                        lsp_log_pmf(&params, &p, &dist_perm(n, perm)?)?
                    };
                    Ok((p, lp.exp()))
                })
                .collect()
        }
        DistConfig::Baseline {
            n_items,
            baseline,
            perm,
        } => {
            let perm = dist_perm(*n_items, perm)?;
            enumerate_partitions(*n_items)?
                .map(|p| Ok((p.clone(), baseline_log_pmf(baseline, &p, &perm)?.exp())))
                .collect()
        }
    }
}

fn cmd_pmf(config_path: &Path, out: Option<PathBuf>) -> Result<i32, Error> {
    let config = RunConfig::load(config_path)?;
    let dist = config
        .dist
        .ok_or_else(|| Error::Config("pmf needs a [dist] section".into()))?;
    let mut lines = String::new();
    match &dist {
        DistConfig::Sp {
            omega_grid: Some(grid),
            ..
        } => {
            lines.push_str("omega,partition,probability\n");
            for &omega in grid {
                for (p, prob) in pmf_rows(&dist, Some(omega))? {
                    lines.push_str(&format!("{omega},\"{p}\",{prob}\n"));
                }
            }
        }
        _ => {
            lines.push_str("partition,probability\n");
            for (p, prob) in pmf_rows(&dist, None)? {
                lines.push_str(&format!("\"{p}\",{prob}\n"));
            }
        }
    }
    print!("{lines}");
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("pmf.csv"), lines)?;
    }
    Ok(0)
}

fn cmd_sample(
    config_path: &Path,
    draws: usize,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<i32, Error> {
    let config = RunConfig::load(config_path)?;
    let dist = config
        .dist
        .ok_or_else(|| Error::Config("sample needs a [dist] section".into()))?;
    let seed = seed.unwrap_or(config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dist.n_items();
    let mut lines = String::new();
    if draws > 0 {
        lines.push_str("draw,partition\n");
    }
    for d in 0..draws {
        let sample = match &dist {
            DistConfig::Sp { marginal, perm, .. } => {
                let params = sp_params_from(&dist, None)?;
                let perm = if *marginal {
                    Permutation::random(n, &mut rng)
                } else {
                    dist_perm(n, perm)?
                };
                sp_sample(&params, &perm, &mut rng)?
            }
            DistConfig::Lsp {
                anchor,
                omega,
                marginal,
                perm,
            } => {
                let params = LspParams::new(anchor.clone(), *omega)?;
                let perm = if *marginal {
                    Permutation::random(n, &mut rng)
                } else {
                    dist_perm(n, perm)?
                };
                lsp_sample(&params, &perm, &mut rng)?
            }
            DistConfig::Baseline { baseline, .. } => baseline_sample(baseline, n, &mut rng)?,
            DistConfig::Cpp { .. } => {
                return Err(Error::Config(
                    "direct sampling is not available for the centered process".into(),
                ))
            }
        };
        lines.push_str(&format!("{d},\"{sample}\"\n"));
    }
    print!("{lines}");
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("samples.csv"), lines)?;
    }
    Ok(0)
}

fn cmd_synth(config_path: &Path, out: &Path, seed: Option<u64>) -> Result<i32, Error> {
    let config = RunConfig::load(config_path)?;
    let mut synth = config
        .synth
        .ok_or_else(|| Error::Config("synth needs a [synth] section".into()))?;
    if let Some(seed) = seed {
        synth.seed = seed;
    }
    let (data, truth) = generate(&synth)?;
    std::fs::create_dir_all(out)?;
    write_dataset_csv(&data, out.join("data.csv"))?;
    write_truth_csv(&truth, out.join("truth.csv"))?;
    data.write_mapping(out)?;
    println!(
        "wrote {} observations over {} units x {} times to {}",
        (0..data.n_times()).map(|t| data.n_obs_at(t)).sum::<usize>(),
        data.n_units(),
        data.n_times(),
        out.display()
    );
    Ok(0)
}

fn write_crossval_csv(dir: &Path, report: &CrossvalReport) -> Result<(), Error> {
    let mut file = std::fs::File::create(dir.join("crossval.csv"))?;
    writeln!(file, "fold,estimate,se")?;
    for (i, fold) in report.folds.iter().enumerate() {
        writeln!(file, "{i},{},{}", fold.estimate, fold.se)?;
    }
    writeln!(file, "total,{},{}", report.total, report.moe95 / 1.96)?;
    Ok(())
}

fn write_summary_outputs(
    dir: &Path,
    archive: &SampleArchive,
    out_of_sample: Option<(f64, f64)>,
    wall_seconds: f64,
    cpu_seconds: f64,
) -> Result<(), Error> {
    let summary = summarize_archive(archive, out_of_sample, wall_seconds, cpu_seconds)?;
    let mut points = std::fs::File::create(dir.join("point_estimates.csv"))?;
    writeln!(points, "t,partition")?;
    for (t, p) in summary.point_estimates.iter().enumerate() {
        writeln!(points, "{t},\"{p}\"")?;
    }
    let mut co = std::fs::File::create(dir.join("coclustering.csv"))?;
    writeln!(co, "t,i,j,probability")?;
    for (t, matrix) in summary.coclustering.iter().enumerate() {
        for i in 0..matrix.nrows() {
            for j in 0..matrix.ncols() {
                writeln!(co, "{t},{i},{j},{}", matrix[(i, j)])?;
            }
        }
    }
    let mut ari = std::fs::File::create(dir.join("ari.csv"))?;
    writeln!(ari, "s,t,mean_ari")?;
    for s in 0..summary.ari_matrix.nrows() {
        for t in 0..summary.ari_matrix.ncols() {
            writeln!(ari, "{s},{t},{}", summary.ari_matrix[(s, t)])?;
        }
    }
    let mut file = std::fs::File::create(dir.join("summary.toml"))?;
    if let Some((estimate, moe)) = out_of_sample {
        writeln!(file, "out_of_sample_loglik = {estimate}")?;
        writeln!(file, "out_of_sample_moe95 = {moe}")?;
    }
    writeln!(file, "wall_seconds = {wall_seconds}")?;
    writeln!(file, "cpu_seconds = {cpu_seconds}")?;
    writeln!(file, "draws = {}", archive.n_draws())?;
    Ok(())
}

fn cmd_fit(
    config_path: &Path,
    data_path: &Path,
    out: &Path,
    folds: Option<usize>,
    chains: Option<usize>,
    seed: Option<u64>,
) -> Result<i32, Error> {
    let config = RunConfig::load(config_path)?;
    let model = config
        .model
        .clone()
        .ok_or_else(|| Error::Config("fit needs a [model] section".into()))?;
    let seed = seed.unwrap_or(config.seed);
    let mut mcmc = config
        .mcmc
        .clone()
        .unwrap_or_default()
        .resolve(model.is_dependent(), seed);
    if let Some(c) = chains {
        mcmc.chains = c;
    }
    let folds = folds.or(config.crossval.as_ref().map(|c| c.folds));
    let kind = model.to_kind()?;

    let data = RegressionDataset::from_csv_path(data_path)?;
    let priors = config
        .regression
        .clone()
        .unwrap_or_default()
        .resolve(data.p_x(), data.p_z())?;

    std::fs::create_dir_all(out)?;
    data.write_mapping(out)?;

    let started = std::time::Instant::now();
    let crossval_report = match folds {
        Some(k) => {
            let report = crossval(&data, &priors, &kind, &mcmc, k, seed)?;
            write_crossval_csv(out, &report)?;
            println!(
                "out-of-sample log-likelihood: {:.4} +/- {:.4} ({} folds)",
                report.total, report.moe95, k
            );
            Some(report)
        }
        None => None,
    };

    let (summary, archive) = fit(&data, &priors, &kind, &mcmc, seed)?;
    archive.write_csv(out)?;
    let wall = started.elapsed().as_secs_f64();
    let cpu = summary.cpu_seconds
        + crossval_report
            .as_ref()
            .map(|r| r.cpu_seconds)
            .unwrap_or(0.0);
    write_summary_outputs(
        out,
        &archive,
        crossval_report.as_ref().map(|r| (r.total, r.moe95)),
        wall,
        cpu,
    )?;
    write_manifest(
        out,
        &config.echo(),
        seed,
        env!("CARGO_PKG_VERSION"),
        wall,
        &archive.acceptance,
    )?;
    println!(
        "fit complete: {} draws over {} time points in {:.1}s (cpu {:.1}s)",
        archive.n_draws(),
        archive.n_times,
        wall,
        cpu
    );
    Ok(0)
}

fn cmd_summarize(archive_dir: &Path, out: Option<PathBuf>) -> Result<i32, Error> {
    let partitions = SampleArchive::read_partitions(archive_dir)?;
    if partitions.is_empty() {
        return Err(Error::Data("archive holds no draws".into()));
    }
    let archive = SampleArchive {
        n_items: partitions[0][0].n_items(),
        n_times: partitions[0].len(),
        partitions,
        ..Default::default()
    };
    let dir = out.unwrap_or_else(|| archive_dir.to_path_buf());
    std::fs::create_dir_all(&dir)?;
    write_summary_outputs(&dir, &archive, None, 0.0, 0.0)?;
    for t in 0..archive.n_times {
        let draws: Vec<&Partition> = archive.partitions.iter().map(|d| &d[t]).collect();
        println!("t={t}: point estimate {}", point_estimate(&draws)?);
    }
    let ari = posterior_ari_matrix(&archive)?;
    let mean_adjacent = if archive.n_times > 1 {
        (0..archive.n_times - 1)
            .map(|t| ari[(t, t + 1)])
            .sum::<f64>()
            / (archive.n_times - 1) as f64
    } else {
        1.0
    };
    println!("mean adjacent ARI: {mean_adjacent:.4}");
    Ok(0)
}
