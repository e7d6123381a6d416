//! Command-line surface of the load-signature toolkit.
//!
//! Subcommands:
//! * `extract`      — run the full pipeline over a recording
//! * `simulate`     — generate a labeled synthetic recording
//! * `evaluate`     — score a signature database against ground truth
//! * `heater-bench` — self-contained association benchmark
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data error, 3 benchmark
//! mismatch.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use loadsig_core::association::AssociationType;
use loadsig_core::error::PipelineError;
use loadsig_core::eval;
use loadsig_core::filtration::{self, ConditionRow, DayFilter};
use loadsig_core::meterdata::{self, MeterRecording};
use loadsig_core::pipeline::{self, ExtractionParams, HeaterBenchReport, SignatureDatabase};
use loadsig_core::synthhome::{self, GroundTruthLog, Scenario};

#[derive(Parser)]
#[command(
    name = "loadsig",
    version,
    about = "Non-intrusive appliance load-signature extraction from whole-house meter data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract per-appliance signatures from a recording.
    Extract(ExtractArgs),
    /// Generate a synthetic labeled recording.
    Simulate(SimulateArgs),
    /// Compare a signature database against a ground-truth log.
    Evaluate(EvaluateArgs),
    /// Run the built-in heater association benchmark.
    HeaterBench(HeaterBenchArgs),
}

#[derive(Args)]
struct ExtractArgs {
    /// Samples CSV or waveform container (sniffed by magic bytes).
    #[arg(long)]
    input: PathBuf,
    /// Condition table JSON; defaults to the built-in ten-appliance table.
    #[arg(long)]
    conditions: Option<PathBuf>,
    /// Extraction parameters JSON (all fields optional).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Output signature database path.
    #[arg(long)]
    out: PathBuf,
    /// Also dump all detected events to this CSV.
    #[arg(long)]
    events_out: Option<PathBuf>,
    /// Emit per-appliance reconstructed-cycle step series into this directory.
    #[arg(long)]
    cycles_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario JSON path, `builtin:default`, `builtin:demo` or
    /// `builtin:heater-lab`.
    #[arg(long, default_value = "builtin:default")]
    scenario: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Days to generate (ignored by the heater-lab scenario, which is one day).
    #[arg(long, default_value_t = 7)]
    days: u64,
    /// Output prefix: writes <prefix>_samples.csv and <prefix>_truth.csv.
    #[arg(long)]
    out_prefix: PathBuf,
    /// Also export raw waveform frames for this many seconds.
    #[arg(long)]
    waveform_seconds: Option<u64>,
    /// First second of the waveform export window.
    #[arg(long, default_value_t = 0)]
    waveform_from: u64,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Signature database written by `extract`.
    #[arg(long)]
    db: PathBuf,
    /// Ground-truth CSV written by `simulate`.
    #[arg(long)]
    truth: PathBuf,
    /// Optional machine-readable report output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HeaterBenchArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

/// Usage/config errors exit 1, data errors 2.
fn exit_code_for(err: &PipelineError) -> u8 {
    match err {
        PipelineError::Scenario(_) | PipelineError::Filtration(_) | PipelineError::Clustering(_) => 1,
        PipelineError::MeterData(_)
        | PipelineError::EventDetect(_)
        | PipelineError::Io(_)
        | PipelineError::Database(_) => 2,
    }
}

fn run(cli: Cli) -> Result<ExitCode, PipelineError> {
    match cli.command {
        Command::Extract(args) => cmd_extract(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::HeaterBench(args) => cmd_heater_bench(args),
    }
}

// ---------------------------------------------------------------------------
// extract
// ---------------------------------------------------------------------------

fn load_recording(path: &Path) -> Result<MeterRecording, PipelineError> {
    let rec = if meterdata::is_waveform_file(path)? {
        meterdata::load_waveform_frames(path)?
    } else {
        meterdata::load_samples_csv(path)?
    };
    Ok(rec)
}

fn cmd_extract(args: ExtractArgs) -> Result<ExitCode, PipelineError> {
    let rec = load_recording(&args.input)?;
    let conditions: Vec<ConditionRow> = match &args.conditions {
        Some(path) => filtration::load_condition_table(path)?,
        None => filtration::default_condition_table(),
    };
    let params: ExtractionParams = match &args.params {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text)
                .map_err(|e| PipelineError::Database(format!("bad params file: {e}")))?
        }
        None => ExtractionParams::default(),
    };

    if let Some(events_path) = &args.events_out {
        let events = loadsig_core::eventdetect::detect_and_pair(&rec, &params.edge)?;
        meterdata::write_events_csv(&events, std::fs::File::create(events_path)?)?;
    }

    let db = pipeline::extract(&rec, &conditions, &params)?;
    db.save(&args.out)?;
    print_extract_summary(&db);

    if let Some(dir) = &args.cycles_dir {
        std::fs::create_dir_all(dir)?;
        for a in db.appliances.iter().filter(|a| a.found) {
            let sig = a.signature.as_ref().unwrap();
            let name = sanitize(&a.appliance);
            let path = dir.join(format!("{name}_cycle.csv"));
            write_cycle_steps(sig, &path)?;
        }
        println!("cycle step series written to {}", dir.display());
    }
    println!("database written to {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn sanitize(name: &str) -> String {
    let mut out = String::new();
    for c in name.chars() {
        if c.is_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

/// Step series of the reconstructed cycle: cumulative power level over the
/// firmly associated (single/repetitive) events at their median offsets.
fn write_cycle_steps(
    sig: &loadsig_core::association::CycleSignature,
    path: &Path,
) -> Result<(), PipelineError> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "t_offset_s,level_W")?;
    let mut level = 0.0;
    writeln!(out, "0,0")?;
    for slot in &sig.ordered_pattern {
        if slot.association == AssociationType::Occasional {
            continue;
        }
        level += slot.mean_p_w;
        writeln!(out, "{},{level}", slot.median_offset_s)?;
    }
    out.flush()?;
    Ok(())
}

fn window_text(row: &ConditionRow) -> String {
    row.search_windows
        .iter()
        .map(|w| {
            let fmt = |s: u32| format!("{:02}:{:02}", s / 3600, (s % 3600) / 60);
            let days = match &w.days {
                DayFilter::All => "",
                DayFilter::Weekend => " (week-end)",
                DayFilter::Weekdays => " (week-day)",
                DayFilter::Days(_) => " (custom)",
            };
            format!("{}-{}{}", fmt(w.start), fmt(w.end), days)
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn print_extract_summary(db: &SignatureDatabase) {
    println!(
        "{} events detected over {} s",
        db.recording.events_detected,
        db.recording.end_t - db.recording.start_t
    );
    println!(
        "{:<22} {:<28} {:>9} {:>9} {:>18}",
        "Appliance", "Search window", "Suspects", "Clusters", "Largest cluster"
    );
    for (a, row) in db.appliances.iter().zip(&db.conditions) {
        let largest = if a.found {
            format!("{} ({:.1}%)", a.dominant_size, a.dominant_share_pct)
        } else {
            format!("not found: {}", a.not_found_reason.as_deref().unwrap_or("?"))
        };
        println!(
            "{:<22} {:<28} {:>9} {:>9} {}",
            a.appliance,
            window_text(row),
            a.suspects,
            a.clusters,
            largest
        );
        if let Some(sig) = &a.signature {
            println!(
                "{:<22}   cycle: {}{}",
                "",
                loadsig_core::association::render_pattern(sig),
                if sig.open_cycle { "  [open cycle]" } else { "" }
            );
        }
    }
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn resolve_scenario(spec: &str) -> Result<Scenario, PipelineError> {
    match spec {
        "builtin:default" => Ok(synthhome::default_house_scenario()),
        "builtin:demo" => Ok(synthhome::demo_scenario()),
        s if s.starts_with("builtin:") => Err(PipelineError::Scenario(
            loadsig_core::error::ScenarioError::Parse(format!("unknown builtin scenario {s:?}")),
        )),
        path => Ok(synthhome::load_scenario(path)?),
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode, PipelineError> {
    let (rec, truth) = if args.scenario == "builtin:heater-lab" {
        synthhome::heater_lab_scenarios(args.seed)
    } else {
        let scenario = resolve_scenario(&args.scenario)?;
        synthhome::generate(&scenario, args.seed, args.days)?
    };

    let samples_path = with_suffix(&args.out_prefix, "_samples.csv");
    let truth_path = with_suffix(&args.out_prefix, "_truth.csv");
    if let Some(parent) = samples_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    meterdata::save_samples_csv(&rec, &samples_path)?;
    synthhome::save_truth_csv(&truth, &truth_path)?;
    println!("samples written to {}", samples_path.display());
    println!(
        "truth written to {} ({} labeled events)",
        truth_path.display(),
        truth.events.len()
    );

    if let Some(seconds) = args.waveform_seconds {
        let frames =
            synthhome::export_waveform_frames(&rec, args.waveform_from, seconds, 64, 6, 60.0);
        let frames_path = with_suffix(&args.out_prefix, "_frames.bin");
        meterdata::save_waveform_frames(&frames, &frames_path)?;
        println!(
            "waveforms written to {} ({} frames)",
            frames_path.display(),
            frames.len()
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut os = prefix.as_os_str().to_owned();
    os.push(suffix);
    PathBuf::from(os)
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

fn cmd_evaluate(args: EvaluateArgs) -> Result<ExitCode, PipelineError> {
    let db = SignatureDatabase::load(&args.db)?;
    let truth: GroundTruthLog = synthhome::load_truth_csv(&args.truth)?;
    let report = eval::evaluate(&db, &truth);
    print_eval_report(&report);
    if let Some(out) = &args.out {
        std::fs::write(out, report.to_json())?;
        println!("report written to {}", out.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn print_eval_report(report: &eval::EvalReport) {
    println!(
        "{:<22} {:<24} {:>5} {:>12} {:>10} {:>10} {:>10}",
        "Appliance", "Event class", "Dir", "Association", "P err %", "Q err %", "THD err %"
    );
    let fmt_err = |e: Option<f64>| e.map(|v| format!("{v:+.2}")).unwrap_or_else(|| "-".into());
    for row in &report.rows {
        println!(
            "{:<22} {:<24} {:>5} {:>12} {:>10} {:>10} {:>10}",
            row.appliance,
            row.class_label,
            row.direction.to_string(),
            row.association.to_string(),
            fmt_err(row.p_error_pct),
            fmt_err(row.q_error_pct),
            fmt_err(row.thd_error_pct),
        );
    }
    println!();
    println!(
        "{:<22} {:>7} {:>9} {:>8} {:>16}",
        "Appliance", "Found", "Precision", "Recall", "Authentic/Truth"
    );
    for s in &report.scores {
        println!(
            "{:<22} {:>7} {:>9} {:>8} {:>16}",
            s.appliance,
            if s.found { "yes" } else { "no" },
            if s.found { format!("{:.3}", s.precision) } else { "-".into() },
            if s.found { format!("{:.3}", s.recall) } else { "-".into() },
            format!("{}/{}", s.authentic_events, s.truth_events_in_domain)
        );
    }
}

// ---------------------------------------------------------------------------
// heater-bench
// ---------------------------------------------------------------------------

fn cmd_heater_bench(args: HeaterBenchArgs) -> Result<ExitCode, PipelineError> {
    let report = pipeline::heater_bench(args.seed)?;
    print_bench_report(&report);
    if report.all_pass {
        println!("heater bench: 11/11 association types match");
        Ok(ExitCode::SUCCESS)
    } else {
        let failed = report.rows.iter().filter(|r| !r.pass).count();
        eprintln!("heater bench: {failed} of 11 event identities mismatched");
        Ok(ExitCode::from(3))
    }
}

fn print_bench_report(report: &HeaterBenchReport) {
    println!("Event association judgment (b = {}, c = {})", report.b, report.c);
    println!(
        "{:<14} {:<12} {:<22} {:<18} {:>6}",
        "Item", "Appearances", "Criteria", "Association type", "Match"
    );
    println!(
        "{:<14} {:<12} {:<22} {:<18} {:>6}",
        "Data segment",
        format!("M={}", report.m),
        "---",
        "---",
        ""
    );
    for row in &report.rows {
        println!(
            "{:<14} {:<12} {:<22} {:<18} {:>6}",
            format!("Event {}", row.id),
            format!("N={}", row.n),
            row.criteria,
            row.got_type.to_string(),
            if row.pass { "ok" } else { "FAIL" }
        );
    }
}
