//! Command-line entry point: data generation, training, evaluation,
//! scaling benchmarks, the 1D demonstration, and field-grid dumps.
//!
//! Exit codes: 0 success, 2 usage/config, 3 I/O, 4 numeric failure.

use clap::{Parser, Subcommand};
use rand::Rng as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use fieldamort::bench::{crossover, report_csv, run_sweep, SweepOptions};
use fieldamort::checkpoint::{load as load_checkpoint, save_model, save_model_1d, Checkpoint};
use fieldamort::data::{self, DataGenConfig, Dataset};
use fieldamort::error::FieldError;
use fieldamort::models::{infer_collection, ModelKind, SurrogateModel};
use fieldamort::numerics::rng_from_seed;
use fieldamort::oracle::{
    collection_field, collection_potential, collection_potential_1d, Source1D, SourceCollection,
};
use fieldamort::training::{
    evaluate, train, train_fourier1d, Train1DConfig, TrainConfig,
};

#[derive(Parser)]
#[command(name = "fieldamort", version, about = "Amortized dipole-field inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled dataset directory
    GenData {
        /// JSON data-generation config; defaults to the standard corpus
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config file seed
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the number of collections
        #[arg(long)]
        collections: Option<usize>,
        /// Draw 2..=6 sources per collection instead of 1
        #[arg(long)]
        multi_source: bool,
    },
    /// Train a surrogate model on a dataset
    Train {
        /// fourier | fcilr | fcinr | linear | fourier1d
        #[arg(long)]
        kind: String,
        /// Dataset directory (not used by fourier1d)
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// JSON training config overriding the desk-scale defaults
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use the reduced desk-scale sizes and epoch budget (default)
        #[arg(long, default_value_t = true)]
        desk_scale: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs_per_stage: Option<usize>,
    },
    /// Evaluate a checkpoint on a dataset
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Assert the dataset is multi-source (rejected for FC-INR)
        #[arg(long)]
        multi_source: bool,
        /// Write metrics JSON here in addition to stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the O(M+N) vs O(MxN) scaling sweep
    Bench {
        /// Optional model checkpoint; defaults to a fresh desk-scale Fourier
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// Comma-separated sizes used for both M and N
        #[arg(long, default_value = "256,512,1024,2048")]
        sizes: String,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// 1D Fourier superposition demo: CSV of truth vs model potential
    #[command(name = "demo-1d")]
    Demo1d {
        #[arg(long)]
        ckpt: PathBuf,
        /// Number of random sources to superpose
        #[arg(long)]
        sources: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 512)]
        points: usize,
    },
    /// Dump truth and model potential/field grids as CSV + PGM heatmaps
    DumpField {
        #[arg(long)]
        ckpt: PathBuf,
        /// JSON file holding a SourceCollection
        #[arg(long)]
        collection: PathBuf,
        #[arg(long, default_value_t = 128)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code_for(err: &FieldError) -> u8 {
    match err {
        FieldError::Io(_) | FieldError::Truncated(_) | FieldError::Checksum(_) => 3,
        FieldError::Diverged { .. } | FieldError::NonFinite(_) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn read_json_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, FieldError> {
    let text = fs::read_to_string(path)?;
    let mut de = serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(&mut de)
        .map_err(|e| FieldError::Config(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), FieldError> {
    match cli.command {
        Command::GenData {
            config,
            out,
            seed,
            collections,
            multi_source,
        } => {
            let mut cfg: DataGenConfig = match config {
                Some(path) => read_json_config(&path)?,
                None => DataGenConfig::default(),
            };
            if multi_source {
                cfg.sources_per_collection = data::SourcesPer::Uniform { lo: 2, hi: 6 };
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(n) = collections {
                cfg.n_collections = n;
            }
            let ds = data::generate(&cfg)?;
            data::save(&ds, &out)?;
            println!(
                "wrote {} collections x {} points to {} (seed {}, checksum {})",
                ds.collections.len(),
                cfg.points_per_collection,
                out.display(),
                cfg.seed,
                ds.checksum()
            );
            Ok(())
        }
        Command::Train {
            kind,
            data: data_dir,
            out,
            config,
            desk_scale: _,
            seed,
            epochs_per_stage,
        } => {
            if kind.eq_ignore_ascii_case("fourier1d") {
                let mut cfg: Train1DConfig = match config {
                    Some(path) => read_json_config(&path)?,
                    None => Train1DConfig::default(),
                };
                if let Some(s) = seed {
                    cfg.seed = s;
                }
                if let Some(e) = epochs_per_stage {
                    cfg.epochs_per_stage = e;
                }
                let (model, report) = train_fourier1d(&cfg)?;
                save_model_1d(&model, Some(cfg.seed), &out)?;
                fs::write(out.join("report.json"), serde_json::to_vec_pretty(&report)?)?;
                print_stage_summary(&report.loss_curve, &report.stage_boundaries);
                println!("checkpoint written to {}", out.display());
                return Ok(());
            }
            let model_kind = ModelKind::parse(&kind)?;
            let data_dir = data_dir.ok_or_else(|| {
                FieldError::Config("--data is required for 2D model kinds".into())
            })?;
            let dataset = data::load(&data_dir)?;
            let mut cfg = match config {
                Some(path) => read_json_config::<TrainConfig>(&path)?,
                None => TrainConfig::desk_scale(model_kind),
            };
            if cfg.model.kind != model_kind {
                return Err(FieldError::Config(format!(
                    "--kind {} does not match config kind {}",
                    model_kind.name(),
                    cfg.model.kind.name()
                )));
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(e) = epochs_per_stage {
                cfg.epochs_per_stage = e;
            }
            let (model, mut report) = train(&cfg, &dataset)?;
            let val = subset(&dataset, 200, 128);
            report.final_single = Some(evaluate(&model, &val)?);
            save_model(&model, Some(cfg.seed), &out)?;
            fs::write(out.join("report.json"), serde_json::to_vec_pretty(&report)?)?;
            print_stage_summary(&report.loss_curve, &report.stage_boundaries);
            if let Some(m) = &report.final_single {
                println!(
                    "validation (subset): delta_phi {:.3}%  delta_h {:.3}%",
                    100.0 * m.delta_phi,
                    100.0 * m.delta_h
                );
            }
            println!("checkpoint written to {}", out.display());
            Ok(())
        }
        Command::Eval {
            ckpt,
            data: data_dir,
            multi_source,
            out,
        } => {
            let model = match load_checkpoint(&ckpt)? {
                Checkpoint::TwoD(m) => m,
                Checkpoint::OneD(_) => {
                    return Err(FieldError::Unsupported(
                        "eval expects a 2D checkpoint; use demo-1d for 1D models".into(),
                    ))
                }
            };
            let dataset = data::load(&data_dir)?;
            let has_multi = dataset.collections.iter().any(|c| c.sources.len() > 1);
            if (multi_source || has_multi) && model.kind() == ModelKind::FcInr {
                return Err(FieldError::Unsupported(
                    "FC INR does not superpose; multi-source evaluation is undefined for it".into(),
                ));
            }
            let metrics = evaluate(&model, &dataset)?;
            let payload = serde_json::json!({
                "delta_phi": metrics.delta_phi,
                "delta_h": metrics.delta_h,
                "collections": dataset.collections.len(),
                "samples": dataset.total_samples(),
                "kind": model.kind().name(),
            });
            println!("{}", serde_json::to_string_pretty(&payload)?);
            if let Some(path) = out {
                fs::write(path, serde_json::to_vec_pretty(&payload)?)?;
            }
            Ok(())
        }
        Command::Bench {
            ckpt,
            sizes,
            repeats,
            out,
            seed,
        } => {
            let model = match ckpt {
                Some(path) => match load_checkpoint(&path)? {
                    Checkpoint::TwoD(m) => m,
                    Checkpoint::OneD(_) => {
                        return Err(FieldError::Unsupported("bench expects a 2D checkpoint".into()))
                    }
                },
                None => {
                    let cfg = fieldamort::models::ModelConfig::desk_scale(ModelKind::Fourier);
                    let mut rng = rng_from_seed(seed);
                    SurrogateModel::init(&cfg, &mut rng)?
                }
            };
            let axis: Result<Vec<usize>, _> = sizes.split(',').map(|s| s.trim().parse()).collect();
            let axis =
                axis.map_err(|e| FieldError::Config(format!("bad --sizes '{sizes}': {e}")))?;
            let mut grid = Vec::new();
            for &m in &axis {
                for &n in &axis {
                    grid.push((m, n));
                }
            }
            let report = run_sweep(
                &model,
                &grid,
                &SweepOptions {
                    repeats,
                    threads: 1,
                    seed,
                },
            )?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("report.json"), serde_json::to_vec_pretty(&report)?)?;
            fs::write(out.join("report.csv"), report_csv(&report))?;
            println!(
                "exact fit:     t = {:.3e} * M*N + {:.3e}   (R^2 = {:.4})",
                report.exact_fit.alpha, report.exact_fit.gamma, report.exact_fit.r_squared
            );
            println!(
                "amortized fit: t = {:.3e} * M + {:.3e} * N + {:.3e}   (R^2 = {:.4})",
                report.amortized_fit.a, report.amortized_fit.b, report.amortized_fit.c,
                report.amortized_fit.r_squared
            );
            let cross = crossover(&report)?;
            fs::write(out.join("crossover.json"), serde_json::to_vec_pretty(&cross)?)?;
            match cross {
                fieldamort::bench::Crossover::NoneInSweepRange { .. } => {
                    println!("crossover: none in sweep range")
                }
                fieldamort::bench::Crossover::Contour { points, .. } => println!(
                    "crossover contour through {} sampled (M, N) pairs, e.g. ({:.0}, {:.0})",
                    points.len(),
                    points[0].0,
                    points[0].1
                ),
            }
            Ok(())
        }
        Command::Demo1d {
            ckpt,
            sources,
            out,
            seed,
            points,
        } => {
            if sources == 0 {
                return Err(FieldError::Config("--sources must be at least 1".into()));
            }
            let model = match load_checkpoint(&ckpt)? {
                Checkpoint::OneD(m) => m,
                Checkpoint::TwoD(_) => {
                    return Err(FieldError::Unsupported(
                        "demo-1d requires a 1D Fourier checkpoint".into(),
                    ))
                }
            };
            let mut rng = rng_from_seed(seed);
            let srcs: Vec<Source1D> = (0..sources)
                .map(|_| Source1D {
                    position: rng.random_range(-3.0..3.0),
                    moment: (if rng.random::<bool>() { 1.0 } else { -1.0 })
                        * (1.0 - rng.random::<f64>()),
                    radius: 1.0,
                })
                .collect();
            let xs: Vec<f64> = (0..points)
                .map(|i| -3.0 + 6.0 * i as f64 / (points - 1) as f64)
                .collect();
            let truth = collection_potential_1d(&srcs, &xs);
            let pred = model.infer(&srcs, &xs)?;
            let mut csv = String::from("x,phi_true,phi_model\n");
            for i in 0..xs.len() {
                csv.push_str(&format!("{},{},{}\n", xs[i], truth[i], pred[i]));
            }
            fs::write(&out, csv)?;
            println!(
                "wrote {} rows for {} sources to {}",
                xs.len(),
                sources,
                out.display()
            );
            Ok(())
        }
        Command::DumpField {
            ckpt,
            collection,
            grid,
            out,
        } => {
            let model = match load_checkpoint(&ckpt)? {
                Checkpoint::TwoD(m) => m,
                Checkpoint::OneD(_) => {
                    return Err(FieldError::Unsupported("dump-field expects a 2D checkpoint".into()))
                }
            };
            let col: SourceCollection = read_json_config(&collection)?;
            let points = data::sample_grid(&col.domain, grid);
            let truth_phi = collection_potential(&col, &points);
            let truth_h = collection_field(&col, &points);
            let pred = infer_collection(&model, &col, &points)?;
            fs::create_dir_all(&out)?;

            write_scalar_csv(&out.join("truth_potential.csv"), &points, &truth_phi)?;
            write_scalar_csv(
                &out.join("model_potential.csv"),
                &points,
                &pred.iter().map(|s| s.potential).collect::<Vec<_>>(),
            )?;
            write_vector_csv(&out.join("truth_field.csv"), &points, &truth_h)?;
            write_vector_csv(
                &out.join("model_field.csv"),
                &points,
                &pred.iter().map(|s| s.field).collect::<Vec<_>>(),
            )?;

            let norm = |h: &[f64; 2]| (h[0] * h[0] + h[1] * h[1]).sqrt();
            write_pgm(&out.join("truth_potential.pgm"), grid, &truth_phi)?;
            write_pgm(
                &out.join("model_potential.pgm"),
                grid,
                &pred.iter().map(|s| s.potential).collect::<Vec<_>>(),
            )?;
            write_pgm(
                &out.join("truth_field.pgm"),
                grid,
                &truth_h.iter().map(norm).collect::<Vec<_>>(),
            )?;
            write_pgm(
                &out.join("model_field.pgm"),
                grid,
                &pred.iter().map(|s| norm(&s.field)).collect::<Vec<_>>(),
            )?;
            println!("wrote {}x{} grids to {}", grid, grid, out.display());
            Ok(())
        }
    }
}

fn subset(ds: &Dataset, max_collections: usize, max_points: usize) -> Dataset {
    let n = ds.collections.len().min(max_collections);
    Dataset {
        config: ds.config.clone(),
        collections: ds.collections[..n].to_vec(),
        samples: ds.samples[..n]
            .iter()
            .map(|s| s[..s.len().min(max_points)].to_vec())
            .collect(),
    }
}

fn print_stage_summary(curve: &[f64], boundaries: &[usize]) {
    for (stage, &start) in boundaries.iter().enumerate() {
        let end = boundaries.get(stage + 1).copied().unwrap_or(curve.len());
        if start == end {
            continue;
        }
        println!(
            "stage {stage}: epochs {start}..{end}, loss {:.3e} -> {:.3e}",
            curve[start],
            curve[end - 1]
        );
    }
}

fn write_scalar_csv(path: &Path, points: &[[f64; 2]], values: &[f64]) -> Result<(), FieldError> {
    let mut csv = String::from("x,y,value\n");
    for (p, v) in points.iter().zip(values) {
        csv.push_str(&format!("{},{},{}\n", p[0], p[1], v));
    }
    fs::write(path, csv)?;
    Ok(())
}

fn write_vector_csv(path: &Path, points: &[[f64; 2]], values: &[[f64; 2]]) -> Result<(), FieldError> {
    let mut csv = String::from("x,y,hx,hy\n");
    for (p, v) in points.iter().zip(values) {
        csv.push_str(&format!("{},{},{},{}\n", p[0], p[1], v[0], v[1]));
    }
    fs::write(path, csv)?;
    Ok(())
}

/// Grayscale P5 heatmap, min-max normalized.
fn write_pgm(path: &Path, grid: usize, values: &[f64]) -> Result<(), FieldError> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let mut bytes = format!("P5\n{grid} {grid}\n255\n").into_bytes();
    bytes.extend(
        values
            .iter()
            .map(|v| (255.0 * (v - lo) / span).round().clamp(0.0, 255.0) as u8),
    );
    fs::write(path, bytes)?;
    Ok(())
}
