use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use bbpd::adaptive::{compute_metrics, Method};
use bbpd::export::{export_fields, trace_csv, FieldFormat, ReportDocument};
use bbpd::scenario::{load_scenario, run_scenario, sweep_loading_steps, BUILTIN_NAMES};
use bbpd::ScenarioError;

#[derive(Parser)]
#[command(name = "bbpd", version, about = "Bond-based peridynamics: implicit, relaxation and adaptive solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Adr,
    Implicit,
    Adaptive,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Adr => Method::Adr,
            MethodArg::Implicit => Method::Implicit,
            MethodArg::Adaptive => Method::Adaptive,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// List the built-in scenarios.
    List,
    /// Print a scenario as TOML.
    Show { scenario: String },
    /// Run a built-in scenario or scenario file.
    Run {
        scenario: String,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        /// Implicit load steps, relaxation ramp steps, or N_i, depending on the method.
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Report of an explicit run on the same scenario, for the speedup ratio.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Comma-separated implicit step counts compared against a relaxation reference.
        #[arg(long, value_delimiter = ',')]
        sweep: Option<Vec<u64>>,
        /// Also write a legacy VTK file.
        #[arg(long)]
        vtk: bool,
    },
}

enum Failure {
    Config(ScenarioError),
    Solver(ScenarioError),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Solver { .. } => Failure::Solver(e),
            other => Failure::Config(other),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(Failure::Solver(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn execute(command: Command) -> Result<bool, Failure> {
    match command {
        Command::List => {
            for name in BUILTIN_NAMES {
                let sc = load_scenario(name)?;
                println!("{name:28} {}", sc.description);
            }
            Ok(true)
        }
        Command::Show { scenario } => {
            print!("{}", load_scenario(&scenario)?.to_toml());
            Ok(true)
        }
        Command::Run {
            scenario,
            method,
            steps,
            out,
            reference,
            sweep,
            vtk,
        } => {
            let mut sc = load_scenario(&scenario)?;
            if let Some(m) = method {
                sc.solver.method = m.into();
            }
            if let Some(n) = steps {
                if n == 0 {
                    return Err(Failure::Config(ScenarioError::Invalid("--steps must be at least 1".into())));
                }
                match sc.solver.method {
                    Method::Implicit => sc.loading.implicit_steps = n,
                    Method::Adr => sc.loading.explicit_ramp_steps = n,
                    Method::Adaptive => sc.solver.adaptive.implicit_steps = n,
                }
            }
            let reference_seconds = match &reference {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Read {
                        path: path.display().to_string(),
                        source: e,
                    })?;
                    Some(ReportDocument::from_json(&text)?.total_seconds)
                }
                None => None,
            };
            std::fs::create_dir_all(&out).map_err(|e| ScenarioError::Write {
                path: out.display().to_string(),
                source: e,
            })?;
            let write = |name: &str, text: &str| {
                let path = out.join(name);
                std::fs::write(&path, text).map_err(|e| ScenarioError::Write {
                    path: path.display().to_string(),
                    source: e,
                })
            };

            if let Some(list) = sweep {
                let (_, rows) = sweep_loading_steps(&sc, &list)?;
                let mut table = String::from("steps,distance,seconds,error\n");
                for r in &rows {
                    table.push_str(&format!(
                        "{},{},{:e},{}\n",
                        r.steps,
                        r.distance.map(|d| format!("{d:e}")).unwrap_or_default(),
                        r.seconds,
                        r.error.as_deref().unwrap_or("").replace(',', ";")
                    ));
                }
                write("sweep.csv", &table)?;
                print!("{table}");
                return Ok(rows.iter().all(|r| r.distance.is_some()));
            }

            let mut output = run_scenario(&sc)?;
            if reference_seconds.is_some() || output.report.method == Method::Adaptive {
                compute_metrics(&mut output.report, reference_seconds);
            }
            export_fields(&output.snapshot, FieldFormat::Csv, &out.join("fields.csv"))?;
            if vtk {
                export_fields(&output.snapshot, FieldFormat::Vtk, &out.join("fields.vtk"))?;
            }
            let doc = ReportDocument::new(&sc.name, &output.report);
            write("report.json", &doc.to_json())?;
            write("trace.csv", &trace_csv(&output.report.trace))?;
            let r = &output.report;
            println!(
                "{} [{:?}] converged={} steps={} (implicit {}, explicit {}) seconds={:.3} e={:.3e} damaged_bonds={}",
                sc.name,
                r.method,
                r.converged,
                doc.steps,
                r.implicit_steps,
                r.explicit_steps,
                doc.total_seconds,
                r.final_error,
                r.damaged_bonds
            );
            if let Some(ra) = r.r_a {
                println!("r_a={ra:.3}");
            }
            if let (Some(t), Some(s)) = (r.r_n_time, r.r_n_steps) {
                println!("r_n={t:.4} (steps {s:.4})");
            }
            Ok(r.converged)
        }
    }
}
