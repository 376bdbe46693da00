use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::Vector2;
use sha2::{Digest, Sha256};

use quadsim::harness::{
    export_metrics, export_trace, load_config, load_matrix_config, opt_field, run_fdi_matrix, run_scenario,
    step_response_table, write_csv, ScenarioConfig,
};
use quadsim::planning::{dijkstra, inflate, read_grid, write_path_csv, Connectivity};
use quadsim::vision;

#[derive(Parser)]
#[command(name = "quadsim", version, about = "Quadrotor autonomy simulator and benchmark harness")]
struct Cli {
    /// Override the seed of every run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output files.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its trace and metrics.
    Simulate { config: PathBuf },
    /// Compare the three attitude laws on a roll step.
    StepResponse { config: PathBuf },
    /// Shortest path on an occupancy grid file; points are `x,y` in metres.
    Plan {
        gridfile: PathBuf,
        start: String,
        goal: String,
        /// Grow obstacles by this radius before searching.
        #[arg(long, default_value_t = 0.0)]
        inflate: f64,
        #[arg(long, value_enum, default_value_t = Conn::Eight)]
        connectivity: Conn,
    },
    /// Fault-detection matrix over scenarios and seeds.
    FdiMatrix { config: PathBuf },
    /// Train an eigenface model from a directory of labelled PGM images.
    FaceTrain {
        dir: PathBuf,
        model: PathBuf,
        /// Number of principal components.
        #[arg(long, default_value_t = vision::DEFAULT_COMPONENTS)]
        components: usize,
    },
    /// Classify one PGM image with a trained model.
    FaceClassify { model: PathBuf, image: PathBuf },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Conn {
    Four,
    Eight,
}

type CliResult = Result<(), Box<dyn std::error::Error>>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { config } => simulate(&cli, config),
        Command::StepResponse { config } => step_response(&cli, config),
        Command::Plan {
            gridfile,
            start,
            goal,
            inflate,
            connectivity,
        } => plan(&cli, gridfile, start, goal, *inflate, *connectivity),
        Command::FdiMatrix { config } => fdi_matrix(&cli, config),
        Command::FaceTrain { dir, model, components } => face_train(dir, model, *components),
        Command::FaceClassify { model, image } => face_classify(model, image),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load(cli: &Cli, path: &Path) -> Result<ScenarioConfig, Box<dyn std::error::Error>> {
    let mut cfg = load_config(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_file(cli: &Cli, name: &str) -> Result<PathBuf, std::io::Error> {
    std::fs::create_dir_all(&cli.out_dir)?;
    Ok(cli.out_dir.join(name))
}

fn write_table(cli: &Cli, stem: &str, hash: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult {
    match cli.format {
        Format::Csv => {
            let path = out_file(cli, &format!("{stem}.csv"))?;
            write_csv(&path, &format!("config_hash {hash}"), header, rows)?;
            println!("wrote {}", path.display());
        }
        Format::Json => {
            let path = out_file(cli, &format!("{stem}.json"))?;
            let records: Vec<serde_json::Map<String, serde_json::Value>> = rows
                .iter()
                .map(|row| {
                    header
                        .iter()
                        .zip(row)
                        .map(|(k, v)| {
                            let value = v.parse::<f64>().map_or_else(
                                |_| serde_json::Value::String(v.clone()),
                                |x| serde_json::json!(x),
                            );
                            ((*k).to_owned(), if v.is_empty() { serde_json::Value::Null } else { value })
                        })
                        .collect()
                })
                .collect();
            let doc = serde_json::json!({ "config_hash": hash, "rows": records });
            std::fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn simulate(cli: &Cli, path: &Path) -> CliResult {
    let cfg = load(cli, path)?;
    let hash = cfg.hash();
    let (metrics, trace) = run_scenario(&cfg)?;
    match cli.format {
        Format::Csv => {
            let p = out_file(cli, "trace.csv")?;
            export_trace(&trace, &p, &hash)?;
            println!("wrote {}", p.display());
        }
        Format::Json => {
            let header = quadsim::harness::TRACE_COLUMNS;
            let csv = quadsim::harness::trace_csv(&trace, "");
            let rows: Vec<Vec<String>> = csv
                .lines()
                .skip(1)
                .map(|l| l.split(',').map(str::to_owned).collect())
                .collect();
            write_table(cli, "trace", &hash, &header, &rows)?;
        }
    }
    let p = out_file(cli, "metrics.json")?;
    export_metrics(&metrics, &p)?;
    println!("wrote {}", p.display());
    println!("{}", serde_json::to_string_pretty(&metrics)?);
    Ok(())
}

fn step_response(cli: &Cli, path: &Path) -> CliResult {
    let cfg = load(cli, path)?;
    let runs = step_response_table(&cfg)?;
    println!("{:<8} {:>12} {:>14} {:>14}", "law", "rise (s)", "overshoot (%)", "settling (s)");
    let mut rows = Vec::new();
    for r in &runs {
        let m = &r.metrics;
        let settle = m.settling_time_s.map_or("did not settle".to_owned(), |s| format!("{s:.4}"));
        println!(
            "{:<8} {:>12.4} {:>14.3} {:>14}",
            r.controller.label(),
            m.rise_time_s,
            m.overshoot_pct,
            settle
        );
        rows.push(vec![
            r.controller.label().to_owned(),
            m.rise_time_s.to_string(),
            m.overshoot_pct.to_string(),
            opt_field(m.settling_time_s),
        ]);
    }
    write_table(
        cli,
        "step_response",
        &cfg.hash(),
        &["controller", "rise_time_s", "overshoot_pct", "settling_time_s"],
        &rows,
    )
}

fn parse_point(s: &str) -> Result<Vector2<f64>, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [x, y] => Ok(Vector2::new(
            x.parse().map_err(|e| format!("bad x in {s:?}: {e}"))?,
            y.parse().map_err(|e| format!("bad y in {s:?}: {e}"))?,
        )),
        _ => Err(format!("expected `x,y`, got {s:?}")),
    }
}

fn plan(cli: &Cli, gridfile: &Path, start: &str, goal: &str, radius: f64, conn: Conn) -> CliResult {
    let raw = read_grid(gridfile)?;
    let grid = if radius > 0.0 { inflate(&raw, radius) } else { raw };
    let (s, g) = (parse_point(start)?, parse_point(goal)?);
    let sc = grid.world_to_cell(&s).ok_or("start outside the grid")?;
    let gc = grid.world_to_cell(&g).ok_or("goal outside the grid")?;
    let connectivity = match conn {
        Conn::Four => Connectivity::Four,
        Conn::Eight => Connectivity::Eight,
    };
    let path = dijkstra(&grid, sc, gc, connectivity)?.ok_or("no path between start and goal")?;
    let mut hasher = Sha256::new();
    hasher.update(std::fs::read(gridfile)?);
    hasher.update(format!("{start}|{goal}|{radius}").as_bytes());
    let hash = hex::encode(hasher.finalize());
    let waypoints = path.to_path(&grid).waypoints;
    println!("cells {}  length {:.3} m", path.cells.len(), path.cost_m(&grid));
    match cli.format {
        Format::Csv => {
            let p = out_file(cli, "path.csv")?;
            write_path_csv(&waypoints, &p, Some(&format!("config_hash {hash}")))?;
            println!("wrote {}", p.display());
        }
        Format::Json => {
            let rows: Vec<Vec<String>> = waypoints.iter().map(|w| vec![w.x.to_string(), w.y.to_string()]).collect();
            write_table(cli, "path", &hash, &["x", "y"], &rows)?;
        }
    }
    Ok(())
}

fn fdi_matrix(cli: &Cli, path: &Path) -> CliResult {
    let mut cfg = load_matrix_config(path)?;
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    let (runs, summary) = run_fdi_matrix(&cfg)?;
    let header = [
        "scenario",
        "seed",
        "faulted",
        "detection_time_s",
        "detection_latency_s",
        "suspected_rotor",
        "path_deviation_avg_m",
        "touchdown_offset_m",
        "descent_rms_m",
        "recovery_success",
    ];
    let rows: Vec<Vec<String>> = runs
        .iter()
        .map(|r| {
            let m = &r.metrics;
            vec![
                r.scenario.clone(),
                m.seed.to_string(),
                r.faulted.to_string(),
                opt_field(m.detection_time_s),
                opt_field(m.detection_latency_s),
                opt_field(m.suspected_rotor),
                opt_field(m.path_deviation_avg_m),
                opt_field(m.touchdown_offset_m),
                opt_field(m.descent_rms_m),
                opt_field(m.recovery_success),
            ]
        })
        .collect();
    for r in runs.iter().filter(|r| r.faulted) {
        let m = &r.metrics;
        println!(
            "{:<18} seed {:>3}  detect {:>6}  rotor {:>2}  deviation {:>6}  touchdown {:>6}  recovered {}",
            r.scenario,
            m.seed,
            m.detection_latency_s.map_or("-".into(), |v| format!("{v:.2}")),
            opt_field(m.suspected_rotor),
            m.path_deviation_avg_m.map_or("-".into(), |v| format!("{v:.2}")),
            m.touchdown_offset_m.map_or("-".into(), |v| format!("{v:.2}")),
            m.recovery_success.unwrap_or(false)
        );
    }
    println!("{}", serde_json::to_string_pretty(&summary)?);
    write_table(cli, "fdi_matrix", &cfg.hash(), &header, &rows)
}

fn face_train(dir: &Path, model_path: &Path, components: usize) -> CliResult {
    let dataset = vision::load_labelled_dir(dir)?;
    let model = vision::train_classifier(&dataset, components)?;
    model.save(model_path)?;
    println!(
        "trained on {} images of {} identities, {} components; wrote {}",
        dataset.len(),
        model.class_count(),
        model.components(),
        model_path.display()
    );
    Ok(())
}

fn face_classify(model_path: &Path, image: &Path) -> CliResult {
    let model = vision::FaceModel::load(model_path)?;
    let face = vision::FaceImage::load_pgm(image)?;
    let result = model.classify(&face)?;
    let doc = serde_json::json!({
        "label": result.label,
        "distance": result.distance,
        "nearest": model.labels()[result.nearest],
        "score_pct": result.score_pct,
    });
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(())
}
