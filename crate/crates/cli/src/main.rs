//! Command-line driver for the convergence, efficiency and snapshot studies.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use cqbem::experiments::{
    emit_snapshots, run_efficiency_study, run_spatial_study, run_time_study, write_output, ConvergenceTable,
    ExperimentConfig, GeometryName, Strategy,
};

#[derive(Parser)]
#[command(name = "cqbem", version, about = "Time-domain BEM scattering studies on screens")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Spatial convergence for one refinement strategy.
    Spatial(Common),
    /// Temporal convergence on the adaptive mesh against a fine-step benchmark.
    Time(Common),
    /// Efficiency ratios e / (η + C τ^p) over adaptive meshes and steps.
    Efficiency {
        #[command(flatten)]
        common: Common,
        #[arg(long = "c", default_value_t = 5.0)]
        c: f64,
        #[arg(long = "p", default_value_t = 2.0)]
        p: f64,
    },
    /// Density and scattered-field snapshots.
    Snapshots {
        #[command(flatten)]
        common: Common,
        /// Snapshot times; defaults to the configured list.
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
    },
    /// Prints the effective configuration as TOML.
    Config(Common),
}

#[derive(Args)]
struct Common {
    /// TOML file with experiment parameters.
    #[arg(long)]
    config: Option<PathBuf>,
    /// flat-screen, wedge or trapping.
    #[arg(long)]
    geometry: Option<GeometryName>,
    /// uniform, adaptive or gradedβ.
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    tau: Option<f64>,
    /// Time-shift parameter η.
    #[arg(long)]
    eta: Option<f64>,
    /// Marking parameter θ.
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)
                .with_context(|| format!("reading configuration {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(g) = self.geometry {
            cfg.geometry = g;
        }
        if let Some(s) = self.strategy {
            cfg.strategy = s;
        }
        if let Some(t) = self.tau {
            cfg.tau = t;
        }
        if let Some(e) = self.eta {
            cfg.shift_eta = e;
        }
        if let Some(t) = self.theta {
            cfg.theta = t;
        }
        if let Some(l) = self.levels {
            cfg.levels = l;
        }
        if let Some(i) = self.iterations {
            cfg.iterations = i;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn fmt_slope(s: Option<f64>) -> String {
    s.map_or_else(|| "-".into(), |v| format!("{v:.3}"))
}

fn report(cfg: &ExperimentConfig, name: &str, table: &ConvergenceTable) -> Result<()> {
    let csv = table.to_csv();
    let path = write_output(cfg, name, &csv)?;
    print!("{csv}");
    println!(
        "slope error {} point {} estimate {}",
        fmt_slope(table.error_slope()),
        fmt_slope(table.point_slope()),
        fmt_slope(table.estimate_slope())
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("CQBEM_THREADS") {
        let n: usize = v.parse().with_context(|| format!("CQBEM_THREADS must be a positive integer, got `{v}`"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Spatial(common) => {
            let cfg = common.load()?;
            let table = run_spatial_study(&cfg)?;
            let name = format!("spatial_{}_{}.csv", cfg.geometry.as_str(), cfg.strategy.label());
            report(&cfg, &name, &table)
        }
        Command::Time(common) => {
            let cfg = common.load()?;
            let table = run_time_study(&cfg)?;
            let name = format!("time_{}_eta{}.csv", cfg.geometry.as_str(), cfg.shift_eta);
            report(&cfg, &name, &table)
        }
        Command::Efficiency { common, c, p } => {
            let cfg = common.load()?;
            let rep = run_efficiency_study(&cfg, c, p)?;
            let csv = rep.to_csv();
            let path = write_output(&cfg, &format!("efficiency_{}_C{c}_p{p}.csv", cfg.geometry.as_str()), &csv)?;
            print!("{csv}");
            println!("ratio range [{:.3}, {:.3}]", rep.min_ratio(), rep.max_ratio());
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Snapshots { common, times } => {
            let cfg = common.load()?;
            let times = times.unwrap_or_else(|| cfg.snapshot_times.clone());
            for path in emit_snapshots(&cfg, &times)? {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Config(common) => {
            print!("{}", common.load()?.to_toml_string());
            Ok(())
        }
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    configure_threads()?;
    run(Cli::parse())
}
