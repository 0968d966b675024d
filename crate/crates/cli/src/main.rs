use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bidoa::eval::{parse_db, run_sweep, RunSpec};
use bidoa::pipeline::{localize, FeatureConfig, LocalizeConfig};
use bidoa::scene::{synthesize, GroundTruth, SceneConfig};
use bidoa::steering::{default_directions, direction_grid, MicDescriptor, Side};
use bidoa::wav::{read_wav, write_wav};
use bidoa::{Fusion, HeadModelConfig, ItdGrid, Method, SteeringDatabase, StftConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bidoa", version, about = "Binaural multi-speaker DOA estimation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Steering database tools.
    Steering {
        #[command(subcommand)]
        cmd: SteeringCmd,
    },
    /// Render a scene config (TOML or JSON) to a WAV plus ground-truth JSON.
    Simulate(SimulateArgs),
    /// Estimate per-frame DOAs; writes one JSON object per line.
    Localize(LocalizeArgs),
    /// Run a sweep described by a TOML run spec.
    Sweep(SweepArgs),
}

#[derive(Subcommand)]
enum SteeringCmd {
    /// Sample the spherical-head model into a database file.
    Build(BuildArgs),
}

#[derive(Args)]
struct BuildArgs {
    /// Output path.
    output: PathBuf,
    /// Head radius in metres.
    #[arg(long, default_value_t = 0.0875)]
    radius: f64,
    #[arg(long, default_value_t = 343.0)]
    speed_of_sound: f64,
    #[arg(long, default_value_t = -180.0, allow_negative_numbers = true)]
    grid_start: f64,
    #[arg(long, default_value_t = 5.0)]
    grid_step: f64,
    #[arg(long, default_value_t = 72)]
    grid_count: usize,
    /// Microphones as side+offset in degrees towards the front, reference
    /// first, e.g. `L5,R5,L-5,R-5`.
    #[arg(long, default_value = "L5,R5,L-5,R-5")]
    mics: String,
    /// ITD microphone pair; defaults to the reference and the first
    /// microphone on the other side.
    #[arg(long, value_parser = parse_pair)]
    itd_pair: Option<(usize, usize)>,
}

#[derive(Args)]
struct DbArg {
    /// Steering database; the default spherical head is built when absent.
    #[arg(long)]
    db: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    config: PathBuf,
    /// Output WAV.
    #[arg(short, long)]
    output: PathBuf,
    /// Ground-truth sidecar; defaults to the output with a .json extension.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[command(flatten)]
    db: DbArg,
}

#[derive(Args)]
struct LocalizeArgs {
    /// Multichannel WAV, or a scene config with --scene.
    input: PathBuf,
    /// Treat the input as a scene config and synthesise it first.
    #[arg(long)]
    scene: bool,
    #[arg(long, default_value = "rtf")]
    method: Method,
    #[arg(long, default_value = "grouped")]
    fusion: Fusion,
    #[arg(short = 'J', long, default_value_t = 2)]
    num_speakers: usize,
    #[arg(long, default_value_t = bidoa::fusion::DEFAULT_BETA)]
    beta: f64,
    /// `us:start,step,stop`
    #[arg(long)]
    itd_grid: Option<String>,
    /// CDR threshold in dB; `-inf` keeps every bin.
    #[arg(long, default_value = "-inf", allow_hyphen_values = true)]
    cdr_thresh_db: String,
    /// Ground-truth sidecar whose activity flags replace the energy detector.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    db: DbArg,
}

#[derive(Args)]
struct SweepArgs {
    spec: PathBuf,
    /// TSV path; the JSON report goes next to it. Overrides `output` in the spec.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    db: DbArg,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn config(msg: impl std::fmt::Display) -> Self {
        Self { code: 2, msg: msg.to_string() }
    }

    fn data(msg: impl std::fmt::Display) -> Self {
        Self { code: 3, msg: msg.to_string() }
    }
}

impl From<bidoa::Error> for Failure {
    fn from(e: bidoa::Error) -> Self {
        if e.is_config() {
            Self::config(e)
        } else {
            Self::data(e)
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self::data(e)
    }
}

type Res<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Steering { cmd: SteeringCmd::Build(a) } => steering_build(a),
        Cmd::Simulate(a) => simulate(a),
        Cmd::Localize(a) => localize_cmd(a),
        Cmd::Sweep(a) => sweep(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("bidoa: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected a,b")?;
    Ok((a.trim().parse().map_err(|e| format!("{e}"))?, b.trim().parse().map_err(|e| format!("{e}"))?))
}

fn parse_mics(s: &str) -> Res<Vec<MicDescriptor>> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            let side = match t.chars().next() {
                Some('L' | 'l') => Side::Left,
                Some('R' | 'r') => Side::Right,
                _ => return Err(Failure::config(format!("microphone {t:?} must start with L or R"))),
            };
            let offset_deg = t[1..].parse().map_err(|_| Failure::config(format!("bad microphone offset in {t:?}")))?;
            Ok(MicDescriptor { side, offset_deg })
        })
        .collect()
}

fn load_db(arg: &DbArg) -> Res<SteeringDatabase> {
    match &arg.db {
        Some(p) => Ok(SteeringDatabase::load(p)?),
        None => Ok(SteeringDatabase::build_spherical_head(
            &HeadModelConfig::default(),
            &StftConfig::default(),
            &default_directions(),
        )?),
    }
}

fn read_config(path: &Path) -> Res<String> {
    fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

fn scene_config(path: &Path) -> Res<SceneConfig> {
    let text = read_config(path)?;
    let cfg: SceneConfig = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?
    } else {
        toml::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?
    };
    cfg.validate()?;
    Ok(cfg)
}

fn steering_build(a: BuildArgs) -> Res<()> {
    let mics = parse_mics(&a.mics)?;
    let itd_pair = match a.itd_pair {
        Some(p) => p,
        None => {
            let contra = mics
                .iter()
                .position(|m| m.side != mics[0].side)
                .ok_or_else(|| Failure::config("need at least one microphone on each side"))?;
            (0, contra)
        }
    };
    let head = HeadModelConfig { head_radius: a.radius, speed_of_sound: a.speed_of_sound, mics, itd_pair };
    let dirs = direction_grid(a.grid_start, a.grid_step, a.grid_count);
    let db = SteeringDatabase::build_spherical_head(&head, &StftConfig::default(), &dirs)?;
    db.save(&a.output)?;
    eprintln!("wrote {} ({} directions, {} mics, {} bins)", a.output.display(), db.num_directions(), db.mics(), db.bins());
    Ok(())
}

fn simulate(a: SimulateArgs) -> Res<()> {
    let cfg = scene_config(&a.config)?;
    let db = load_db(&a.db)?;
    let scene = synthesize(&cfg, &db, &StftConfig::default())?;
    write_wav(&a.output, scene.truth.sample_rate, &scene.mixture)?;
    let truth = a.truth.unwrap_or_else(|| a.output.with_extension("json"));
    fs::write(&truth, serde_json::to_vec(&scene.truth).map_err(Failure::data)?)?;
    Ok(())
}

fn localize_cmd(a: LocalizeArgs) -> Res<()> {
    let db = load_db(&a.db)?;
    let mut cfg = LocalizeConfig::new(a.method, a.fusion, a.num_speakers);
    cfg.features = FeatureConfig { beta: a.beta, ..FeatureConfig::new(vec![a.method]) };
    if let Some(g) = &a.itd_grid {
        cfg.features.itd_grid = ItdGrid::parse(g)?;
    }
    cfg.cdr_thresh_db = parse_db(&a.cdr_thresh_db)?;
    cfg.validate()?;

    let (audio, mut truth) = if a.scene {
        let scene = synthesize(&scene_config(&a.input)?, &db, &cfg.features.stft)?;
        (scene.mixture, Some(scene.truth))
    } else {
        let audio = read_wav(&a.input)?;
        if (audio.sample_rate - cfg.features.stft.sample_rate).abs() > 0.5 {
            return Err(Failure::data(format!(
                "sample rate {} Hz, expected {} Hz",
                audio.sample_rate, cfg.features.stft.sample_rate
            )));
        }
        if audio.channels.len() != db.mics() {
            return Err(Failure::data(format!(
                "{} has {} channels, steering database has {} microphones",
                a.input.display(),
                audio.channels.len(),
                db.mics()
            )));
        }
        (audio.channels, None)
    };
    if let Some(p) = &a.truth {
        let bytes = fs::read(p)?;
        truth = Some(serde_json::from_slice::<GroundTruth>(&bytes).map_err(|e| Failure::data(format!("{}: {e}", p.display())))?);
    }
    let vad = truth.as_ref().map(|t| t.vad.as_slice());
    let frames = localize(&audio, &db, &cfg, vad)?;

    let sink: Box<dyn Write> = match &a.output {
        Some(p) => Box::new(fs::File::create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut out = BufWriter::new(sink);
    for f in &frames {
        serde_json::to_writer(&mut out, f).map_err(Failure::data)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn sweep(a: SweepArgs) -> Res<()> {
    let spec = RunSpec::from_toml(&read_config(&a.spec)?)?;
    let db = load_db(&a.db)?;
    let report = run_sweep(&spec, &db)?;
    if let Some(tsv) = a.output.or(spec.output) {
        fs::write(&tsv, report.to_tsv())?;
        fs::write(tsv.with_extension("json"), serde_json::to_vec_pretty(&report).map_err(Failure::data)?)?;
    }
    print!("{}", report.summary_table());
    Ok(())
}
