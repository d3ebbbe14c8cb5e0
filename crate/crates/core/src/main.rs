use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use bitesim::bite::BiteTransferParams;
use bitesim::geometry::{load_tet_mesh, make_head_proxy};
use bitesim::harness::output::{plot_data, summary, sweep_csv, trace_csv};
use bitesim::harness::{
    run_bite_transfer, run_sweep, select_optimal, MetricWindow, RunOutput, RunRecord, RunStatus, Scene, SceneConfig,
    SweepSpec,
};
use bitesim::numfmt::sig9;

const EXIT_INVALID: u8 = 1;
const EXIT_SOLVER: u8 = 2;

#[derive(Parser)]
#[command(name = "bitesim", version, about = "Soft head bite-transfer simulator and sweep harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PhaseArg {
    Entry,
    Exit,
    /// Entry sweep, then an exit sweep at the selected entry.
    Both,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WindowArg {
    EntryAndClose,
    ExitOnly,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trajectory and write its force trace.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Insertion depth (m).
        #[arg(long)]
        depth: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        /// Exit depth (m).
        #[arg(long)]
        exit_depth: Option<f64>,
        #[arg(long, value_enum, default_value = "full")]
        window: WindowArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        plot: bool,
        #[arg(long)]
        gravity: bool,
    },
    /// Run the entry or exit parameter grid.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        phase: PhaseArg,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; defaults to the number of cores.
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        plot: bool,
        #[arg(long)]
        gravity: bool,
    },
    /// Write the procedural head proxy as a tet mesh.
    MakeHead {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Load and check a tet mesh.
    Validate {
        #[arg(long)]
        mesh: PathBuf,
    },
    /// Print the tendon rig built for a scene.
    RigInfo {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

fn invalid(message: impl ToString) -> Failure {
    Failure {
        code: EXIT_INVALID,
        message: message.to_string(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_INVALID) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(path: Option<&Path>, gravity: bool) -> Result<SceneConfig, Failure> {
    let mut cfg = match path {
        Some(p) => SceneConfig::load(p).map_err(invalid)?,
        None => SceneConfig::default(),
    };
    cfg.gravity |= gravity;
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), Failure> {
    fs::create_dir_all(path).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn plot_name(r: &RunRecord) -> String {
    let p = &r.params;
    format!(
        "a{}_d{}_b{}_e{}.dat",
        sig9(p.alpha_deg),
        sig9(p.depth_m),
        sig9(p.beta_deg),
        sig9(p.exit_depth_m)
    )
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate {
            config,
            alpha,
            depth,
            beta,
            exit_depth,
            window,
            out,
            plot,
            gravity,
        } => {
            let cfg = load_config(config.as_deref(), gravity)?;
            let t = cfg.trajectory;
            let params = BiteTransferParams {
                entry_angle_deg: alpha.unwrap_or(t.entry_angle_deg),
                insertion_depth_m: depth.unwrap_or(t.insertion_depth_m),
                exit_angle_deg: beta.unwrap_or(t.exit_angle_deg),
                exit_depth_m: exit_depth.unwrap_or(t.exit_depth_m),
                ..t
            };
            params.validate().map_err(invalid)?;
            let scene = Scene::build(cfg).map_err(invalid)?;
            let window = match window {
                WindowArg::EntryAndClose => MetricWindow::EntryAndClose,
                WindowArg::ExitOnly => MetricWindow::ExitOnly,
                WindowArg::Full => MetricWindow::Full,
            };
            let run = run_bite_transfer(&scene, &params, window);
            create_dir(&out)?;
            write(&out.join("trace.csv"), &trace_csv(&run.rows))?;
            write(&out.join("run.csv"), &sweep_csv(std::slice::from_ref(&run.record)))?;
            if let Some(s) = &run.schedule {
                write(&out.join("schedule.txt"), &s.dump())?;
            }
            if plot {
                write(&out.join("plot.dat"), &plot_data(&run.rows))?;
            }
            let r = &run.record;
            println!(
                "status={} peak_N={} total_N={} impulse_Ns={} steps={} cg_iterations={}",
                r.status.label(),
                sig9(r.peak),
                sig9(r.total),
                sig9(r.impulse),
                r.solver.steps,
                r.solver.total_cg_iterations
            );
            match r.status {
                RunStatus::Ok => Ok(()),
                RunStatus::InvalidParams => Err(invalid(r.message.clone().unwrap_or_default())),
                RunStatus::SolverFailure => Err(Failure {
                    code: EXIT_SOLVER,
                    message: r.message.clone().unwrap_or_default(),
                }),
            }
        }
        Command::Sweep {
            config,
            phase,
            out,
            threads,
            plot,
            gravity,
        } => {
            if threads == Some(0) {
                return Err(invalid("--threads must be at least 1"));
            }
            let cfg = load_config(config.as_deref(), gravity)?;
            let base = cfg.trajectory;
            let scene = Scene::build(cfg).map_err(invalid)?;
            create_dir(&out)?;
            let mut failed = false;
            let mut entry_base = base;
            if matches!(phase, PhaseArg::Entry | PhaseArg::Both) {
                let runs = sweep_phase(&scene, &SweepSpec::entry(&base), threads, &out, plot, &mut failed)?;
                let records: Vec<RunRecord> = runs.into_iter().map(|r| r.record).collect();
                if let Ok(sel) = select_optimal(&records) {
                    let p = records[sel.chosen].params;
                    entry_base.entry_angle_deg = p.alpha_deg;
                    entry_base.insertion_depth_m = p.depth_m;
                }
            }
            if matches!(phase, PhaseArg::Exit | PhaseArg::Both) {
                sweep_phase(&scene, &SweepSpec::exit(&entry_base), threads, &out, plot, &mut failed)?;
            }
            if failed {
                Err(Failure {
                    code: EXIT_SOLVER,
                    message: "one or more runs hit a solver failure".into(),
                })
            } else {
                Ok(())
            }
        }
        Command::MakeHead { config, out } => {
            let cfg = load_config(config.as_deref(), false)?;
            let mesh = make_head_proxy(&cfg.head.proxy).map_err(invalid)?;
            write(&out, &mesh.to_text())?;
            let m = cfg.head.proxy.mouth_annotation();
            println!(
                "vertices={} tets={} mouth_center={},{},{}",
                mesh.vertex_count(),
                mesh.tet_count(),
                sig9(m.center[0]),
                sig9(m.center[1]),
                sig9(m.center[2])
            );
            Ok(())
        }
        Command::Validate { mesh } => {
            let file = fs::File::open(&mesh).map_err(|e| invalid(format!("{}: {e}", mesh.display())))?;
            let m = load_tet_mesh(BufReader::new(file)).map_err(invalid)?;
            println!(
                "ok vertices={} tets={} surface_triangles={} volume_m3={}",
                m.vertex_count(),
                m.tet_count(),
                m.surface_tris().len(),
                sig9(m.volume())
            );
            Ok(())
        }
        Command::RigInfo { config } => {
            let cfg = load_config(config.as_deref(), false)?;
            let scene = Scene::build(cfg).map_err(invalid)?;
            print!("{}", scene.rig.dump());
            Ok(())
        }
    }
}

fn sweep_phase(
    scene: &Scene,
    spec: &SweepSpec,
    threads: Option<usize>,
    out: &Path,
    plot: bool,
    failed: &mut bool,
) -> Result<Vec<RunOutput>, Failure> {
    let label = spec.phase.label();
    let runs = run_sweep(scene, spec, threads).map_err(invalid)?;
    let records: Vec<RunRecord> = runs.iter().map(|r| r.record.clone()).collect();
    write(&out.join(format!("sweep_{label}.csv")), &sweep_csv(&records))?;
    let selection = select_optimal(&records).ok();
    write(&out.join(format!("summary_{label}.txt")), &summary(label, &records, selection.as_ref()))?;
    if plot {
        let dir = out.join(format!("plots_{label}"));
        create_dir(&dir)?;
        for r in &runs {
            write(&dir.join(plot_name(&r.record)), &plot_data(&r.rows))?;
        }
    }
    *failed |= records.iter().any(|r| r.status == RunStatus::SolverFailure);
    println!("{label}: {} runs written", records.len());
    Ok(runs)
}
