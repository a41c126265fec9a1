use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use pritz::experiment::{
    assemble, canned, emit_plot_data, ritz_values_csv, ExperimentConfig, PlotPoint, ProblemConfig,
    Session, Solved,
};
use pritz::mmio::write_array;

#[derive(Parser)]
#[command(
    name = "pritz",
    version,
    about = "Parameter-independent Ritz subspaces for affine eigenproblems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Key-value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for random σ samples.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Extra `key=value` settings applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble the configured finite-element pencil and write it as Matrix Market files.
    Assemble(Common),
    /// Build the Ritz basis and write it with its collocation grid.
    BuildBasis(Common),
    /// Ritz values at the σ samples.
    Solve(Common),
    /// Full run with reference eigenvalues and the relative error table.
    Report(Common),
    /// Run one of the canned sweeps.
    Reproduce {
        experiment: Canned,
        /// Mesh refinement level.
        #[arg(long, default_value_t = 4)]
        level: u32,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Canned {
    Table1,
    Table2,
    Fig1,
    Fig3,
}

impl Canned {
    fn name(self) -> &'static str {
        match self {
            Canned::Table1 => "table1",
            Canned::Table2 => "table2",
            Canned::Fig1 => "fig1",
            Canned::Fig3 => "fig3",
        }
    }
}

fn setup(common: &Common) -> Result<(), Box<dyn std::error::Error>> {
    if let Some(k) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()?;
    }
    Ok(())
}

fn overrides(
    common: &Common,
    config: &mut ExperimentConfig,
) -> Result<(), Box<dyn std::error::Error>> {
    let text = common.set.join("\n");
    config.apply_text(&text)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(())
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Box<dyn std::error::Error>> {
    let mut config = match &common.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    overrides(common, &mut config)?;
    config.output_dir = None;
    Ok(config)
}

fn write(dir: &Path, name: &str, body: &str) -> Result<PathBuf, Box<dyn std::error::Error>> {
    std::fs::create_dir_all(dir)?;
    let p = dir.join(name);
    std::fs::write(&p, body)?;
    println!("wrote {}", p.display());
    Ok(p)
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Assemble(common) => {
            setup(&common)?;
            let config = load_config(&common)?;
            if matches!(config.problem, ProblemConfig::External { .. }) {
                return Err("assemble needs a sine or inclusion problem".into());
            }
            let problem = assemble(&config)?;
            info!("assembled n = {}, d = {}", problem.n(), problem.op.d());
            for p in problem.write_matrix_market(&common.out)? {
                println!("wrote {}", p.display());
            }
        }
        Command::BuildBasis(common) => {
            setup(&common)?;
            let config = load_config(&common)?;
            let mut session = Session::new();
            let stage = session.build(&config)?;
            info!(
                "basis dim {} from {} columns",
                stage.summary.dim, stage.summary.pre_orth_columns
            );
            let label = &config.label;
            write(
                &common.out,
                &format!("{label}_basis.mtx"),
                &write_array(&stage.basis.q, false),
            )?;
            write(
                &common.out,
                &format!("{label}_grid.csv"),
                &stage.grid.to_csv(),
            )?;
            write(
                &common.out,
                &format!("{label}.json"),
                &(serde_json::to_string_pretty(&stage.summary)? + "\n"),
            )?;
        }
        Command::Solve(common) => {
            setup(&common)?;
            let config = load_config(&common)?;
            let mut session = Session::new();
            let Solved { stage, samples, mu } = session.solve(&config)?;
            let label = &config.label;
            write(
                &common.out,
                &format!("{label}_ritz.csv"),
                &ritz_values_csv(&samples, &mu),
            )?;
            write(
                &common.out,
                &format!("{label}.json"),
                &(serde_json::to_string_pretty(&stage.summary)? + "\n"),
            )?;
        }
        Command::Report(common) => {
            setup(&common)?;
            let config = load_config(&common)?;
            let out = Session::new().run(&config)?;
            for p in out.write(&common.out)? {
                println!("wrote {}", p.display());
            }
            println!(
                "{}: dim {} (pre {}), global max relative error {:.3e}",
                config.label, out.summary.dim, out.summary.pre_orth_columns, out.report.global_max
            );
        }
        Command::Reproduce {
            experiment,
            level,
            common,
        } => {
            setup(&common)?;
            let sweep = canned(experiment.name(), level)?;
            let mut session = Session::new();
            let mut points = Vec::new();
            for (mut config, series, x) in sweep.runs {
                overrides(&common, &mut config)?;
                config.output_dir = None;
                info!("running {}", config.label);
                let out = session.run(&config)?;
                out.write(&common.out)?;
                let s = &out.summary;
                println!(
                    "{:<28} sigma points {:>3}  pre {:>4}  dim {:>4}  max error {:.3e}",
                    config.label, s.sigma_points, s.pre_orth_columns, s.dim, out.report.global_max
                );
                if out.report.min_error() < -1e-12 {
                    warn!("{}: a Ritz value fell below its reference", config.label);
                }
                points.push(PlotPoint::from_summary(series, x, s));
            }
            write(
                &common.out,
                &format!("{}_plot.csv", sweep.name),
                &emit_plot_data(&points),
            )?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
