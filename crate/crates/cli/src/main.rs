use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use rsvlts::augment::augment_corpus;
use rsvlts::condparse::{
    parse_or_passthrough, resolve, resolve_opaque, Grounder, OracleGrounder, ParsedInstruction,
    RemoteConfig, RemoteGrounder, SceneError, SceneGraph, GROUNDER_URL_ENV,
};
use rsvlts::convert::{
    convert_change, convert_geoloc, convert_scenes, emit_segmenter_prompts, read_change_samples,
    read_geoloc_samples, read_records, read_scenes, validate_file, write_lines, write_records,
    ConvertError, ConvertOptions,
};
use rsvlts::eval::{evaluate, EvalError, DEFAULT_IOU_THRESHOLD};
use rsvlts::selfcheck::{self, geometry, records, resolution, CheckOutcome};
use rsvlts::textcodec::{CoordMode, CoordSpace, TaskTag, DEFAULT_BINS};

#[derive(Parser)]
#[command(
    name = "rsvlts",
    version,
    about = "Remote-sensing vision-language records: convert, augment, decompose, evaluate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConvertTask {
    Detection,
    Seg,
    Change,
    Geoloc,
}

#[derive(Clone, Copy, ValueEnum)]
enum Space {
    Normalized,
    Pixel,
}

impl From<Space> for CoordMode {
    fn from(s: Space) -> Self {
        match s {
            Space::Normalized => CoordMode::Normalized,
            Space::Pixel => CoordMode::Pixel,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Turn annotations into instruction records (JSONL).
    Convert {
        #[arg(long, value_enum)]
        task: ConvertTask,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Only this category (detection and seg); default is every category per scene.
        #[arg(long)]
        category: Option<String>,
        #[arg(long, value_enum, default_value = "normalized")]
        space: Space,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: u32,
        /// Keypoints per seg target.
        #[arg(long, default_value_t = 3)]
        keypoints: usize,
        /// Polygon simplification tolerance in pixels (change).
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
        /// Seed for prompt template choice.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Append cyclic caption/localization counterparts to a record file.
    Augment {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        cyclic_ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Split a referring instruction into its condition chain.
    Decompose {
        text: String,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Resolve an instruction step by step against a scene graph or a grounding service.
    Resolve {
        text: String,
        /// Scene graph JSON with exact entities; takes precedence over a service URL.
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long, env = GROUNDER_URL_ENV)]
        grounder_url: Option<String>,
        /// Image path sent to the grounding service.
        #[arg(long)]
        image: Option<String>,
        #[arg(long, default_value_t = 1000)]
        image_width: u32,
        #[arg(long, default_value_t = 1000)]
        image_height: u32,
        #[arg(long, value_enum, default_value = "normalized")]
        space: Space,
    },
    /// Write segmenter box/point prompts for seg records.
    EmitPrompts {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Score predictions against ground-truth records.
    Evaluate {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
        iou: f64,
        /// Print the JSON report instead of the table.
        #[arg(long)]
        json: bool,
        /// Also write the JSON report here.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the randomized consistency checks.
    Selfcheck {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Smaller sample counts.
        #[arg(long)]
        quick: bool,
    },
    /// Check a record file line by line.
    Validate { input: PathBuf },
}

/// Failure that maps to exit status 1 without being an I/O problem.
#[derive(Debug)]
struct Invalid;

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("invalid input")
    }
}

impl std::error::Error for Invalid {}

fn is_io(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<std::io::Error>()
            || c.downcast_ref::<ConvertError>()
                .is_some_and(ConvertError::is_io)
            || c.downcast_ref::<EvalError>().is_some_and(EvalError::is_io)
            || matches!(c.downcast_ref::<SceneError>(), Some(SceneError::Io(_)))
    })
}

/// The error chain, skipping causes already spelled out by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for c in e.chain() {
        let msg = c.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

macro_rules! say {
    ($($arg:tt)*) => {
        writeln!(std::io::stdout().lock(), $($arg)*)?
    };
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<Invalid>() => ExitCode::from(1),
        Err(e)
            if e.chain().any(|c| {
                c.downcast_ref::<std::io::Error>()
                    .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
            }) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(if is_io(&e) { 2 } else { 1 })
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Convert {
            task,
            input,
            output,
            category,
            space,
            bins,
            keypoints,
            eps,
            seed,
        } => {
            let opts = ConvertOptions {
                mode: space.into(),
                bins,
                n_keypoints: keypoints,
                eps,
                seed,
            };
            let records = match task {
                ConvertTask::Detection | ConvertTask::Seg => {
                    let tag = if matches!(task, ConvertTask::Seg) {
                        TaskTag::Seg
                    } else {
                        TaskTag::Detection
                    };
                    convert_scenes(&read_scenes(&input)?, tag, category.as_deref(), &opts)?
                }
                ConvertTask::Change => read_change_samples(&input)?
                    .iter()
                    .map(|s| convert_change(s, &opts))
                    .collect::<Result<Vec<_>, _>>()?,
                ConvertTask::Geoloc => read_geoloc_samples(&input)?
                    .iter()
                    .map(|s| convert_geoloc(s, &opts))
                    .collect::<Result<Vec<_>, _>>()?,
            };
            write_records(&output, &records)?;
            log::info!("wrote {} records to {}", records.len(), output.display());
        }
        Command::Augment {
            input,
            output,
            cyclic_ratio,
            seed,
        } => {
            if !(0.0..=1.0).contains(&cyclic_ratio) {
                bail!("--cyclic-ratio must lie in [0, 1], got {cyclic_ratio}");
            }
            let records = read_records(&input)?;
            let out = augment_corpus(&records, cyclic_ratio, seed);
            write_records(&output, &out)?;
            log::info!("{} records in, {} out", records.len(), out.len());
        }
        Command::Decompose { text, format } => {
            let parsed = parse_or_passthrough(&text);
            match format {
                Format::Json => say!("{}", serde_json::to_string_pretty(&parsed)?),
                Format::Text => match &parsed {
                    ParsedInstruction::Chain { chain } => say!("{chain}"),
                    ParsedInstruction::Opaque { reason, .. } => say!("opaque: {reason}"),
                },
            }
        }
        Command::Resolve {
            text,
            scene,
            grounder_url,
            image,
            image_width,
            image_height,
            space,
        } => {
            let graph = scene.map(|p| SceneGraph::from_json_file(&p)).transpose()?;
            let remote = match (&graph, grounder_url) {
                (Some(_), _) => None,
                (None, Some(url)) => {
                    let image = image.context("--image is required with a grounding service")?;
                    let space = CoordSpace {
                        mode: space.into(),
                        bins: DEFAULT_BINS,
                        image_w: image_width,
                        image_h: image_height,
                    };
                    Some(RemoteGrounder::new(RemoteConfig::new(url, image, space))?)
                }
                (None, None) => bail!("give --scene or --grounder-url (or set {GROUNDER_URL_ENV})"),
            };
            let oracle = graph.as_ref().map(OracleGrounder::new);
            let grounder: &dyn Grounder = match (&oracle, &remote) {
                (Some(o), _) => o,
                (None, Some(r)) => r,
                (None, None) => unreachable!("one grounder is always built"),
            };
            let res = match parse_or_passthrough(&text) {
                ParsedInstruction::Chain { chain } => resolve(&chain, grounder)?,
                ParsedInstruction::Opaque { text, reason } => {
                    log::info!("no condition chain ({reason}); passing the text through");
                    resolve_opaque(&text, grounder)?
                }
            };
            say!("{}", serde_json::to_string_pretty(&res)?);
        }
        Command::EmitPrompts { input, output } => {
            let lines = emit_segmenter_prompts(&read_records(&input)?)?;
            write_lines(&output, &lines)?;
        }
        Command::Evaluate {
            gt,
            pred,
            iou,
            json,
            output,
        } => {
            if !(iou > 0.0 && iou <= 1.0) {
                bail!("--iou must lie in (0, 1], got {iou}");
            }
            let report = evaluate(&gt, &pred, iou)?;
            if let Some(path) = &output {
                write_text(path, &report.to_json())?;
            }
            if json {
                say!("{}", report.to_json());
            } else {
                write!(std::io::stdout().lock(), "{}", report.to_table())?;
            }
        }
        Command::Selfcheck { seed, quick } => {
            let outcomes = run_selfcheck(seed, quick)?;
            if outcomes.iter().any(|o| !o.passed) {
                return Err(Invalid.into());
            }
        }
        Command::Validate { input } => {
            let v = validate_file(&input)?;
            for e in &v.errors {
                say!("{}: {e}", input.display());
            }
            say!("{} records, {} errors", v.records, v.errors.len());
            if !v.errors.is_empty() {
                return Err(Invalid.into());
            }
        }
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f =
        std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    writeln!(f, "{text}").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn run_selfcheck(seed: u64, quick: bool) -> Result<Vec<CheckOutcome>> {
    let k = |full: usize, small: usize| if quick { small } else { full };
    let checks: Vec<Box<dyn Fn() -> CheckOutcome>> = vec![
        Box::new(move || {
            records::check_codec_roundtrip(&mut selfcheck::rng(seed), k(10_000, 1000))
        }),
        Box::new(move || {
            geometry::check_param_roundtrip(&mut selfcheck::rng(seed + 1), k(1000, 200), 1e-6)
        }),
        Box::new(move || {
            geometry::check_iou_vs_grid(&mut selfcheck::rng(seed + 2), k(200, 30), 1000, 1e-2)
        }),
        Box::new(move || {
            geometry::check_raster_vs_membership(&mut selfcheck::rng(seed + 3), k(100, 20))
        }),
        Box::new(move || {
            geometry::check_trace_fidelity(&mut selfcheck::rng(seed + 4), k(100, 20), 1.0, 0.95)
        }),
        Box::new(move || resolution::check_resolution(&mut selfcheck::rng(seed + 5), k(1000, 100))),
        Box::new(move || records::check_matching(&mut selfcheck::rng(seed + 6), k(1000, 100))),
        Box::new(move || records::check_self_evaluation(&mut selfcheck::rng(seed + 7), k(200, 70))),
        Box::new(move || records::check_involution(&mut selfcheck::rng(seed + 8), k(1000, 100))),
    ];
    let mut outcomes = Vec::with_capacity(checks.len());
    for c in &checks {
        let t = Instant::now();
        let o = c();
        say!(
            "{} {:<26} {:>8.2}s  {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            t.elapsed().as_secs_f64(),
            o.detail
        );
        outcomes.push(o);
    }
    Ok(outcomes)
}
