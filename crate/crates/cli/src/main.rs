//! `evortho`: offline event-camera aerial mapping pipeline.
//!
//! Subcommands run individual pipeline stages over a shared `key = value`
//! config; `run` chains them all. Any config key can be overridden on the
//! command line one-to-one (`--gate.omega_max 0.5`).
//!
//! Exit codes: 0 success, 1 data/processing failure, 2 usage/config error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use evortho_core::config::KeyValueFile;
use evortho_core::eval;
use evortho_core::pipeline::{self, PipelineConfig, PipelineError, StageLogger, CONFIG_KEYS};
use evortho_core::sim;

#[derive(Parser)]
#[command(name = "evortho", version, about = "Event-camera aerial mapping pipeline")]
struct Cli {
    /// Shared `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct StageArgs {
    /// Recording directory (overrides the `input` config key).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output directory (overrides the `output` config key).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic recording from a named mission preset.
    Simulate {
        /// Preset name, e.g. F1.D.1 or F1.D.1-small.
        #[arg(long)]
        preset: String,
        /// Recording directory to create.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Ground texture resolution, meters per texel.
        #[arg(long, default_value_t = 0.25)]
        texel: f64,
    },
    /// Synchronize all sensor streams onto the global clock.
    Sync(StageArgs),
    /// Apply rotation and altitude gating; writes the validity timeline.
    Gate(StageArgs),
    /// Select spaced keyframes inside the valid timeline.
    Keyframes(StageArgs),
    /// Reconstruct grayscale frames from events at the keyframes.
    Reconstruct(StageArgs),
    /// Remap RGB into event geometry and pansharpen at the keyframes.
    Fuse(StageArgs),
    /// Export geotagged keyframes with `geo.csv`.
    Export(StageArgs),
    /// Compose fused keyframes into a flat-ground orthomosaic.
    Orthoproject(StageArgs),
    /// Run every stage in order.
    Run(StageArgs),
    /// Align a test orthomosaic to a reference and print metric rows.
    Evaluate {
        #[arg(long)]
        test: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Correspondence CSV (`x_test,y_test,x_ref,y_ref`).
        #[arg(long)]
        points: PathBuf,
        #[arg(long, default_value = "unknown")]
        sequence: String,
        /// Report row type label, e.g. fused or rgb_cropped.
        #[arg(long, default_value = "fused")]
        kind: String,
        /// Restrict PSNR to pixels nonzero in both images.
        #[arg(long)]
        masked: bool,
    },
}

/// Splits `--dotted.key value` overrides out of the raw argument list so the
/// remaining arguments parse as a normal clap command line.
fn extract_overrides(raw: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>), String> {
    let mut args = Vec::with_capacity(raw.len());
    let mut overrides = Vec::new();
    let mut it = raw.into_iter();
    while let Some(arg) = it.next() {
        let key = match arg.strip_prefix("--") {
            Some(k) if k.contains('.') && !k.starts_with('.') => k.to_string(),
            _ => {
                args.push(arg);
                continue;
            }
        };
        let (key, value) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let value = it
                    .next()
                    .ok_or_else(|| format!("missing value for --{key}"))?;
                (key, value)
            }
        };
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(format!("unknown key {key:?}"));
        }
        overrides.push((key, value));
    }
    Ok((args, overrides))
}

fn build_config(
    cli_config: &Option<PathBuf>,
    stage: &StageArgs,
    overrides: &[(String, String)],
) -> Result<PipelineConfig, PipelineError> {
    let mut kv = match cli_config {
        Some(path) => KeyValueFile::load(path)?,
        None => KeyValueFile::new(),
    };
    for (k, v) in overrides {
        kv.set(k, v);
    }
    if let Some(input) = &stage.input {
        kv.set("input", input.display());
    }
    if let Some(output) = &stage.output {
        kv.set("output", output.display());
    }
    PipelineConfig::from_kv(&kv)
}

fn exit_code_for(err: &PipelineError) -> ExitCode {
    match err {
        PipelineError::Config(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn run_stage(
    cli_config: &Option<PathBuf>,
    stage: &StageArgs,
    overrides: &[(String, String)],
    f: impl FnOnce(&PipelineConfig, &mut StageLogger) -> Result<(), PipelineError>,
) -> ExitCode {
    let cfg = match build_config(cli_config, stage, overrides) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code_for(&e);
        }
    };
    let mut log = match StageLogger::for_output(&cfg.output, true) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match f(&cfg, &mut log) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn main() -> ExitCode {
    let raw: Vec<String> = std::env::args().collect();
    let (args, overrides) = match extract_overrides(raw) {
        Ok(v) => v,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);

    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: failed to set thread count: {e}");
            return ExitCode::from(2);
        }
    }

    let stage_fn: Box<
        dyn FnOnce(&PipelineConfig, &mut StageLogger) -> Result<(), PipelineError>,
    >;
    let stage_args: &StageArgs;
    match &cli.command {
        Command::Simulate {
            preset,
            out,
            seed,
            texel,
        } => {
            return run_simulate(preset, out, *seed, *texel);
        }
        Command::Evaluate {
            test,
            reference,
            points,
            sequence,
            kind,
            masked,
        } => {
            return run_evaluate(test, reference, points, sequence, kind, *masked);
        }
        Command::Sync(a) => {
            stage_args = a;
            stage_fn = Box::new(|cfg, log| pipeline::stage_sync(cfg, log).map(|_| ()));
        }
        Command::Gate(a) => {
            stage_args = a;
            stage_fn = Box::new(|cfg, log| pipeline::stage_gate(cfg, log).map(|_| ()));
        }
        Command::Keyframes(a) => {
            stage_args = a;
            stage_fn = Box::new(|cfg, log| pipeline::stage_keyframes(cfg, log).map(|_| ()));
        }
        Command::Reconstruct(a) => {
            stage_args = a;
            stage_fn = Box::new(|cfg, log| pipeline::stage_reconstruct(cfg, log).map(|_| ()));
        }
        Command::Fuse(a) => {
            stage_args = a;
            stage_fn = Box::new(|cfg, log| pipeline::stage_fuse(cfg, log).map(|_| ()));
        }
        Command::Export(a) => {
            stage_args = a;
            stage_fn = Box::new(pipeline::stage_export);
        }
        Command::Orthoproject(a) => {
            stage_args = a;
            stage_fn = Box::new(pipeline::stage_orthoproject);
        }
        Command::Run(a) => {
            stage_args = a;
            stage_fn = Box::new(pipeline::run_pipeline);
        }
    }
    run_stage(&cli.config, stage_args, &overrides, stage_fn)
}

fn run_simulate(preset_name: &str, out: &std::path::Path, seed: u64, texel: f64) -> ExitCode {
    let (plan, mut cfg) = match sim::preset(preset_name) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    cfg.seed = seed;
    let result = sim::scene_for_plan(&plan, texel)
        .and_then(|scene| sim::simulate_recording(&scene, &plan, &cfg, out));
    match result {
        Ok((rec, truth)) => {
            eprintln!(
                "stage=simulate preset={} seed={} events={} duration_s={:.1} dropped={}",
                preset_name,
                seed,
                rec.event_count().unwrap_or(0),
                truth.trajectory.duration_s(),
                truth.events_dropped,
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run_evaluate(
    test: &std::path::Path,
    reference: &std::path::Path,
    points: &std::path::Path,
    sequence: &str,
    kind: &str,
    masked: bool,
) -> ExitCode {
    match eval::evaluate_orthomap(test, reference, points, sequence, kind, masked) {
        Ok(report) => {
            println!("{}", eval::REPORT_HEADER);
            println!("{}", report.csv_row());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_are_extracted_and_validated() {
        let raw = vec![
            "evortho".to_string(),
            "run".to_string(),
            "--gate.omega_max".to_string(),
            "0.5".to_string(),
            "--input".to_string(),
            "rec".to_string(),
        ];
        let (args, overrides) = extract_overrides(raw).unwrap();
        assert_eq!(args, vec!["evortho", "run", "--input", "rec"]);
        assert_eq!(overrides, vec![("gate.omega_max".to_string(), "0.5".to_string())]);
    }

    #[test]
    fn equals_form_override() {
        let raw = vec!["evortho".into(), "run".into(), "--ortho.resolution=0.1".into()];
        let (_, overrides) = extract_overrides(raw).unwrap();
        assert_eq!(overrides, vec![("ortho.resolution".to_string(), "0.1".to_string())]);
    }

    #[test]
    fn unknown_override_key_rejected() {
        let raw = vec!["evortho".into(), "run".into(), "--gate.omga".into(), "1".into()];
        let err = extract_overrides(raw).unwrap_err();
        assert!(err.contains("gate.omga"), "{err}");
    }
}
