use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use hcnk::harness::{
    fit_report_exponent, ingest_dataset, preset, presets, replica_curve, run_experiment, run_spectrum, write_dataset,
    DataFormat, ExperimentConfig, LearningCurveReport, Scale,
};
use hcnk::kernels::write_gram_binary;
use hcnk::{Architecture, Kernel, Stride};

#[derive(Parser)]
#[command(name = "hcnk", version, about = "Hierarchical convolutional kernels: spectra and learning curves")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Global {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Exit nonzero unless every checked tolerance holds.
    #[arg(long, global = true)]
    assert: bool,
    /// Accept reports whose config hash does not match.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalue table with per-sector decay fits.
    Spectrum {
        /// Architecture, e.g. `ntk:2,2` or `rfk:2x2`.
        #[arg(long)]
        arch: Architecture,
        #[arg(long, default_value_t = 128)]
        k_max: usize,
        /// Grid points per axis (Fourier) or quadrature order.
        #[arg(long)]
        resolution: Option<usize>,
        /// Allowed deviation of fitted sector slopes for --assert.
        #[arg(long, default_value_t = 0.1)]
        tolerance: f64,
    },
    /// Teacher-student learning curve from --config.
    Learn {
        /// Reduced-accuracy scale: 4 trials, n up to 2048, 2048 test points.
        #[arg(long)]
        reduced: bool,
    },
    /// Replica and spectral-bias predictions for the --config teacher and student.
    Replica,
    /// Fit the exponent of a curve CSV.
    Fit { report: PathBuf },
    /// Read a dataset (label in the last column), optionally normalising patches.
    Ingest {
        path: PathBuf,
        #[arg(long, default_value = "csv")]
        format: DataFormat,
        /// Normalise every patch of this size onto the unit sphere.
        #[arg(long)]
        patch: Option<usize>,
        /// Also write the Gram matrix of this architecture in binary form.
        #[arg(long)]
        gram: Option<Architecture>,
    },
    /// Built-in experiments.
    Preset {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    /// Run one preset, or `all`.
    Run {
        name: String,
        #[arg(long)]
        reduced: bool,
    },
}

fn load_config(g: &Global) -> Result<ExperimentConfig> {
    let path = g.config.as_ref().context("--config is required")?;
    let mut c = ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(s) = g.seed {
        c.seed = s;
    }
    Ok(c)
}

fn finish_experiment(report: &LearningCurveReport, dir: &Path) -> Result<bool> {
    report.write(dir)?;
    let fit = report.fit.map(|f| format!("{:.4} +- {:.4}", f.beta, f.stderr)).unwrap_or_else(|| "n/a".into());
    let expected = report.expected_beta().map(|b| format!("{b:.4}")).unwrap_or_else(|| "n/a".into());
    let pass = report.passes();
    println!(
        "{}: beta_hat = {fit}, expected = {expected}, tolerance = {}, {} [{}]",
        report.name,
        report.config.tolerance,
        if pass { "PASS" } else { "FAIL" },
        dir.display()
    );
    if let (Some(f), Some(p)) = (report.lambda_fit, report.predicted_lambda_slope) {
        println!("{}: lambda* slope = {:.4}, predicted = {p:.4}", report.name, -f.beta);
    }
    Ok(pass)
}

fn run(cli: Cli) -> Result<bool> {
    let g = cli.global;
    match cli.command {
        Command::Spectrum { arch, k_max, resolution, tolerance } => {
            let report = run_spectrum(&arch, k_max, resolution)?;
            let dir =
                g.out.clone().unwrap_or_else(|| PathBuf::from("out").join(arch.to_string().replace([':', ','], "_")));
            report.write(&dir)?;
            let mut ok = true;
            for s in &report.sectors {
                match &s.fit {
                    Some(f) => {
                        let pass = (f.exponent - s.predicted).abs() <= tolerance;
                        ok &= pass;
                        println!(
                            "sector {}: slope {:.4} +- {:.4}, predicted {:.4} {}",
                            s.layer,
                            f.exponent,
                            f.stderr,
                            s.predicted,
                            if pass { "PASS" } else { "FAIL" }
                        );
                    }
                    None => {
                        ok = false;
                        println!("sector {}: no fit ({})", s.layer, s.error.as_deref().unwrap_or("unknown"));
                    }
                }
            }
            if let Some(r) = &report.rank_fit {
                println!("rank decay: slope {:.4} +- {:.4}", r.exponent, r.stderr);
            }
            println!("mercer residual {:.3e}, nonzero modes {}", report.mercer_residual, report.nonzero_modes);
            Ok(ok)
        }
        Command::Learn { reduced } => {
            let mut c = load_config(&g)?;
            if reduced {
                c = Scale::REDUCED.apply(c);
            }
            let dir = g.out.clone().or_else(|| c.out.clone()).unwrap_or_else(|| PathBuf::from("out").join(&c.name));
            finish_experiment(&run_experiment(&c)?, &dir)
        }
        Command::Replica => {
            let c = load_config(&g)?;
            let n: Vec<f64> = c.n_list.iter().map(|&n| n as f64).collect();
            let ridge = match c.ridge {
                hcnk::regression::RidgePolicy::Fixed { lambda } => lambda,
                _ => 0.0,
            };
            let curve = replica_curve(&c.teacher, &c.student, &n, ridge)?;
            let dir = g.out.clone().or_else(|| c.out.clone()).unwrap_or_else(|| PathBuf::from("out").join(&c.name));
            fs::create_dir_all(&dir)?;
            let mut csv = format!("# config_hash={}\nn,eps_replica,eps_spectral_bias\n", c.hash());
            for p in &curve {
                csv.push_str(&format!("{},{},{}\n", p.n, p.replica, p.spectral_bias));
                println!("n = {:>8}: replica {:.6e}, spectral bias {:.6e}", p.n, p.replica, p.spectral_bias);
            }
            fs::write(dir.join("replica.csv"), csv)?;
            let meta = serde_json::json!({ "config_hash": c.hash(), "config": c, "ridge": ridge, "curve": curve });
            fs::write(dir.join("replica.json"), serde_json::to_string_pretty(&meta)?)?;
            Ok(true)
        }
        Command::Fit { report } => {
            let expected = match &g.config {
                Some(_) => Some(load_config(&g)?.hash()),
                None => None,
            };
            let fit = fit_report_exponent(&report, expected.as_deref(), g.force)?;
            println!("beta_hat = {:.4} +- {:.4} over n in [{}, {}]", fit.beta, fit.stderr, fit.window.0, fit.window.1);
            let meta = report.with_file_name("meta.json");
            if meta.exists() {
                let r: LearningCurveReport = serde_json::from_str(&fs::read_to_string(&meta)?)?;
                if let Some(b) = r.expected_beta() {
                    let pass = (fit.beta - b).abs() <= r.config.tolerance;
                    println!(
                        "expected beta = {b:.4}, tolerance {}: {}",
                        r.config.tolerance,
                        if pass { "PASS" } else { "FAIL" }
                    );
                    return Ok(pass);
                }
            }
            Ok(!g.assert)
        }
        Command::Ingest { path, format, patch, gram } => {
            let ds = ingest_dataset(&path, format, patch)?;
            println!("{} rows, d = {}, space {}", ds.inputs.len(), ds.inputs.dim(), ds.inputs.space.name());
            if let Some(dir) = &g.out {
                fs::create_dir_all(dir)?;
                write_dataset(fs::File::create(dir.join("data.csv"))?, &ds, DataFormat::Csv)?;
                if let Some(arch) = gram {
                    let k = Kernel::new(arch, Stride::Filter);
                    let gm = k.gram(&ds.inputs, None)?;
                    write_gram_binary(&gm, std::io::BufWriter::new(fs::File::create(dir.join("gram.bin"))?))?;
                }
            } else if gram.is_some() {
                bail!("--gram needs --out");
            }
            Ok(true)
        }
        Command::Preset { action: PresetAction::List } => {
            for c in presets() {
                println!("{:<28} {}", c.name, c.description);
            }
            Ok(true)
        }
        Command::Preset { action: PresetAction::Run { name, reduced } } => {
            let configs = if name == "all" { presets() } else { vec![preset(&name)?] };
            let root = g.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let mut ok = true;
            for mut c in configs {
                if reduced {
                    c = Scale::REDUCED.apply(c);
                }
                if let Some(s) = g.seed {
                    c.seed = s;
                }
                let dir = root.join(&c.name);
                ok &= finish_experiment(&run_experiment(&c)?, &dir)?;
            }
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let assert = cli.global.assert;
    if let Some(t) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(pass) if pass || !assert => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
