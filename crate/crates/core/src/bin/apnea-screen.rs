use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use apnea_screen::config::RunConfig;
use apnea_screen::detector::{predicted_events_csv_bytes, Severity};
use apnea_screen::evaluation::match_events;
use apnea_screen::features::{extract_features, features_csv_bytes, FeatureConfig};
use apnea_screen::loocv::{run_loocv, screen_subject, EvalReport};
use apnea_screen::recording::{load_database, read_spans_csv, Subject};
use apnea_screen::report::{render_markdown, timeline_svg, write_text};
use apnea_screen::synth::{generate, CohortSpec};
use apnea_screen::{Error, Result};

#[derive(Parser)]
#[command(name = "apnea-screen", version, about = "Phenotype-adaptive sleep apnea screening")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic annotated database.
    Synth(SynthArgs),
    /// Screen one subject against the rest of a database.
    Screen(ScreenArgs),
    /// Leave-one-out evaluation over a whole database.
    Loocv(LoocvArgs),
    /// Score predicted events against reference events.
    Score(ScoreArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    subjects: u64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 30.0)]
    duration_min: f64,
}

#[derive(Args, Default)]
struct KnnFlags {
    /// Neighbours kept [default: 15]
    #[arg(long)]
    k: Option<usize>,
    /// Candidates pruned [default: 5]
    #[arg(long)]
    k_prime: Option<usize>,
    #[arg(long)]
    gender_weight: Option<f64>,
    #[arg(long)]
    age_weight: Option<f64>,
    #[arg(long)]
    bmi_weight: Option<f64>,
}

#[derive(Args)]
struct ScreenArgs {
    #[arg(long)]
    db: Option<PathBuf>,
    #[arg(long)]
    subject: String,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Where to write predicted_events.csv
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also save the trained model as JSON
    #[arg(long)]
    save_model: Option<PathBuf>,
    #[command(flatten)]
    knn: KnnFlags,
}

#[derive(Args)]
struct LoocvArgs {
    #[arg(long)]
    db: Option<PathBuf>,
    /// report.json path; report.md is written next to it
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for per-subject timeline SVGs
    #[arg(long)]
    plots: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Concurrent folds [default: available cores]
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: Option<u64>,
    /// Write <id>.features.csv for every subject next to the report
    #[arg(long)]
    dump_features: bool,
    #[command(flatten)]
    knn: KnnFlags,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
}

/// Config file first, then explicit flags on top.
fn resolve_config(path: Option<&Path>, knn: &KnnFlags) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(k) = knn.k {
        cfg.knn.k = k;
    }
    if let Some(k) = knn.k_prime {
        cfg.knn.k_prime = k;
    }
    if let Some(w) = knn.gender_weight {
        cfg.knn.gender_weight = w;
    }
    if let Some(w) = knn.age_weight {
        cfg.knn.age_weight = w;
    }
    if let Some(w) = knn.bmi_weight {
        cfg.knn.bmi_weight = w;
    }
    cfg.pipeline().validate()?;
    Ok(cfg)
}

fn db_path(flag: Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    flag.or_else(|| cfg.io.db_path.clone())
        .ok_or_else(|| Error::InvalidConfig("no database given (--db or io.db_path)".into()))
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let spec = CohortSpec {
        n_subjects: args.subjects as usize,
        seed: args.seed,
        duration_min: args.duration_min,
        ..CohortSpec::default()
    };
    let cohort = generate(&spec, &args.out)?;
    let mut counts = [0usize; 4];
    for p in &cohort.plans {
        counts[p.severity.index()] += 1;
    }
    let events: usize = cohort.plans.iter().map(|p| p.planted_events).sum();
    println!(
        "wrote {} subjects to {} ({} events; {})",
        cohort.subjects.len(),
        args.out.display(),
        events,
        Severity::ALL
            .iter()
            .map(|s| format!("{} {}", s.as_str(), counts[s.index()]))
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok(())
}

fn cmd_screen(args: ScreenArgs) -> Result<()> {
    let cfg = resolve_config(args.config.as_deref(), &args.knn)?;
    let db = load_database(db_path(args.db, &cfg)?)?;
    let screening = screen_subject(&db, &args.subject, &cfg.pipeline())?;
    let out = args
        .out
        .or_else(|| cfg.io.out_path.clone())
        .unwrap_or_else(|| PathBuf::from("predicted_events.csv"));
    let csv = predicted_events_csv_bytes(&screening.report.events);
    write_text(&out, std::str::from_utf8(&csv).expect("utf-8 csv"))?;
    if let Some(path) = &args.save_model {
        screening.fold.model.save(path)?;
    }
    let r = &screening.report;
    println!(
        "{}: REI {:.1}/h, severity {}, {} events",
        args.subject,
        r.rei,
        r.severity.as_str(),
        r.events.len()
    );
    Ok(())
}

fn write_plots(dir: &Path, db: &[Subject], report: &EvalReport) -> Result<()> {
    for (s, r) in db.iter().zip(&report.subjects) {
        let svg = timeline_svg(
            &s.id,
            s.duration_s(),
            s.annotations.as_deref().unwrap_or_default(),
            &r.events,
        );
        write_text(&dir.join(format!("{}.svg", s.id)), &svg)?;
    }
    Ok(())
}

fn cmd_loocv(args: LoocvArgs) -> Result<()> {
    let cfg = resolve_config(args.config.as_deref(), &args.knn)?;
    let db = load_database(db_path(args.db, &cfg)?)?;
    let out = args
        .out
        .or_else(|| cfg.io.out_path.clone())
        .unwrap_or_else(|| PathBuf::from("report.json"));
    info!("{} subjects loaded", db.len());
    let report = run_loocv(&db, &cfg.pipeline(), args.jobs.map(|j| j as usize))?;

    write_text(&out, &report.to_json())?;
    write_text(&out.with_extension("md"), &render_markdown(&report))?;
    if let Some(dir) = &args.plots {
        write_plots(dir, &db, &report)?;
    }
    if args.dump_features {
        let dir = out.parent().unwrap_or(Path::new("."));
        dump_features(dir, &db, &cfg.feature)?;
    }
    let b = &report.binary;
    println!(
        "{} subjects: 4-class accuracy {:.1}%, REI>=15 accuracy {:.1}%; report in {}",
        report.subjects.len(),
        100.0 * report.severity.accuracy,
        100.0 * b.accuracy,
        out.display()
    );
    Ok(())
}

fn dump_features(dir: &Path, db: &[Subject], cfg: &FeatureConfig) -> Result<()> {
    for s in db {
        let rows = extract_features(s, cfg)?;
        let csv = features_csv_bytes(&rows);
        write_text(
            &dir.join(format!("{}.features.csv", s.id)),
            std::str::from_utf8(&csv).expect("utf-8 csv"),
        )?;
    }
    Ok(())
}

fn cmd_score(args: ScoreArgs) -> Result<()> {
    let pred = read_spans_csv(&args.pred)?;
    let reference = read_spans_csv(&args.reference)?;
    let score = match_events(&pred, &reference)?;
    println!("{}", serde_json::to_string(&score).expect("score serialises"));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("APNEA_SCREEN_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Screen(a) => cmd_screen(a),
        Command::Loocv(a) => cmd_loocv(a),
        Command::Score(a) => cmd_score(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
