use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mlsreg::artifacts::Workspace;
use mlsreg::core::config::{FragmentStrategy, PipelineConfig};
use mlsreg::core::drift::DriftComponent;
use mlsreg::core::synth::{self, ClutterShape, DriftProfile, SceneSpec};
use mlsreg::core::{apply_transform, RigidTransform};
use mlsreg::io::config::load_config;
use mlsreg::io::tables::read_patches;
use mlsreg::io::trajectory::{read_trajectory, write_trajectory};
use mlsreg::io::transform::write_transform;
use mlsreg::io::{read_point_cloud, write_point_cloud};
use mlsreg::run::{self, PipelineInputs};
use mlsreg::{Error, Result, StdClock};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Targetless fragment-wise registration of MLS point clouds.
#[derive(Parser, Debug)]
#[command(name = "mlsreg", version)]
struct Cli {
    /// Flat `section.key = value` file; `MLSREG_<SECTION>__<KEY>` variables override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every randomized stage (overrides `run.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Fragments processed in parallel (overrides `run.jobs`).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Resample, remove outliers and keep static classes.
    Preprocess {
        /// Point cloud (.ply or .xyz).
        #[arg(long)]
        input: PathBuf,
        /// Output cloud (.ply or .xyz).
        #[arg(long)]
        out: PathBuf,
    },
    /// Cut a time-ordered cloud into fragments under <out>/fragments/<id>/.
    Fragment {
        /// Time-stamped cloud, usually the preprocessed source.
        #[arg(long)]
        input: PathBuf,
        /// `time x y z` samples of the platform.
        #[arg(long)]
        trajectory: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Fragmentation strategy (default from `frag.strategy`).
        #[arg(long, value_enum)]
        strategy: Option<Strategy>,
    },
    /// Coarse registration of every fragment in <out>.
    Coarse(RefArgs),
    /// PV-GICP refinement of every coarse-registered fragment in <out>.
    Fine(RefArgs),
    /// Patch-based M3C2 evaluation; writes report.json and report.csv.
    Evaluate {
        #[command(flatten)]
        common: RefArgs,
        /// Patch CSV (cx,cy,cz,nx,ny,nz,axis,radius,depth); generated when omitted.
        #[arg(long)]
        patches: Option<PathBuf>,
    },
    /// Drift series and colored trajectory from the fragment transforms.
    Drift {
        /// `time x y z` samples of the platform.
        #[arg(long)]
        trajectory: PathBuf,
        /// Directory holding the registered fragments.
        #[arg(long)]
        out: PathBuf,
        /// Drift component used to color the trajectory.
        #[arg(long, value_enum, default_value_t = Component::Norm)]
        component: Component,
    },
    /// Generate a synthetic street scene with a known perturbation or drift.
    Synth(SynthArgs),
    /// Run every stage end to end.
    Pipeline {
        /// MLS cloud to register; needs GPS times.
        #[arg(long)]
        source: PathBuf,
        /// Reference cloud.
        #[arg(long)]
        reference: PathBuf,
        /// `time x y z` samples of the platform.
        #[arg(long)]
        trajectory: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Fragmentation strategy (default from `frag.strategy`).
        #[arg(long, value_enum)]
        strategy: Option<Strategy>,
        /// Patch CSV; generated per fragment when omitted.
        #[arg(long)]
        patches: Option<PathBuf>,
        /// Drift component used to color the trajectory.
        #[arg(long, value_enum, default_value_t = Component::Norm)]
        component: Component,
    },
}

#[derive(Args, Debug)]
struct RefArgs {
    /// Preprocessed reference cloud.
    #[arg(long)]
    reference: PathBuf,
    /// Directory written by `fragment`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output directory for source, reference, trajectory and truth.
    #[arg(long)]
    out: PathBuf,
    /// Street length.
    #[arg(long, default_value_t = 100.0)]
    length_m: f64,
    /// Point spacing on surfaces.
    #[arg(long, default_value_t = 0.1)]
    spacing_m: f64,
    /// Gaussian noise σ.
    #[arg(long, default_value_t = 0.005)]
    noise_m: f64,
    /// Share of points on clutter (vegetation, poles).
    #[arg(long, default_value_t = 0.2)]
    clutter: f64,
    /// Façade-free stretch `start:end` along the street (repeatable).
    #[arg(long, value_parser = parse_range)]
    gap: Vec<(f64, f64)>,
    /// Largest random rotation applied to the source, about its centroid.
    #[arg(long, default_value_t = 0.0)]
    max_rotation_deg: f64,
    /// Largest random translation applied to the source.
    #[arg(long, default_value_t = 0.0)]
    max_translation_m: f64,
    /// Rise-fall-rise drift in x with this peak, in meters.
    #[arg(long, default_value_t = 0.0)]
    drift_peak_m: f64,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Strategy {
    Ssc,
    FixedTime,
    FixedLength,
}

impl From<Strategy> for FragmentStrategy {
    fn from(s: Strategy) -> Self {
        match s {
            Strategy::Ssc => FragmentStrategy::Ssc,
            Strategy::FixedTime => FragmentStrategy::FixedTime,
            Strategy::FixedLength => FragmentStrategy::FixedLength,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Component {
    Rx,
    Ry,
    Rz,
    Tx,
    Ty,
    Tz,
    Norm,
}

impl From<Component> for DriftComponent {
    fn from(c: Component) -> Self {
        match c {
            Component::Rx => DriftComponent::Rx,
            Component::Ry => DriftComponent::Ry,
            Component::Rz => DriftComponent::Rz,
            Component::Tx => DriftComponent::Tx,
            Component::Ty => DriftComponent::Ty,
            Component::Tz => DriftComponent::Tz,
            Component::Norm => DriftComponent::Norm,
        }
    }
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or("expected start:end")?;
    let a: f64 = a.trim().parse().map_err(|_| format!("bad start `{a}`"))?;
    let b: f64 = b.trim().parse().map_err(|_| format!("bad end `{b}`"))?;
    if !(b > a) {
        return Err("end must exceed start".into());
    }
    Ok((a, b))
}

fn config(cli: &Cli, strategy: Option<Strategy>) -> Result<PipelineConfig> {
    let mut cfg = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        cfg.run.jobs = jobs;
    }
    if let Some(s) = strategy {
        cfg.frag.strategy = s.into();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// 0 when every fragment registered, 2 otherwise.
fn fragment_status(failed: usize) -> ExitCode {
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        log::warn!("{failed} fragment(s) failed; partial results written");
        ExitCode::from(2)
    }
}

fn synth(args: &SynthArgs, seed: u64) -> Result<()> {
    let spec = SceneSpec {
        street_length_m: args.length_m,
        spacing_m: args.spacing_m,
        noise_sigma_m: args.noise_m,
        clutter_fraction: args.clutter,
        clutter_shape: ClutterShape::Mixed,
        facade_gaps: args.gap.clone(),
        seed,
        ..SceneSpec::default()
    };
    let layout = synth::generate_layout(&spec)?;
    // Two independent scans of the same layout.
    let reference = synth::sample_layout(&layout, 2 * seed + 1)?;
    let scan = synth::sample_layout(&layout, 2 * seed + 2)?;
    let mut source = scan.cloud;
    if args.drift_peak_m != 0.0 {
        let profile = DriftProfile::rise_fall_rise(layout.trajectory.total_length(), args.drift_peak_m)?;
        source = synth::apply_drift(&source, &layout.trajectory, &profile)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let local = synth::random_perturbation(&mut rng, args.max_rotation_deg, args.max_translation_m);
    let c = source.centroid().unwrap_or_else(Vector3::zeros);
    let perturbation = RigidTransform::from_translation(c)
        .compose(&local)
        .compose(&RigidTransform::from_translation(-c));
    source = apply_transform(&source, &perturbation);

    let out = &args.out;
    std::fs::create_dir_all(out).map_err(|source| Error::Io {
        path: out.clone(),
        source,
    })?;
    write_point_cloud(&source, &out.join("source.ply"), None)?;
    write_point_cloud(&reference.cloud, &out.join("reference.ply"), None)?;
    write_trajectory(&layout.trajectory, &out.join("trajectory.txt"))?;
    // Maps the source back into the reference frame.
    write_transform(&perturbation.inverse(), &out.join("truth.txt"))?;
    log::info!("synthetic scene: {} source / {} reference points", source.len(), reference.cloud.len());
    Ok(())
}

fn read_cloud(path: &Path) -> Result<mlsreg::core::PointCloud> {
    read_point_cloud(path, None)
}

fn execute(cli: &Cli) -> Result<ExitCode> {
    let clock = StdClock::new();
    match &cli.command {
        Command::Preprocess { input, out } => {
            let cfg = config(cli, None)?;
            let cloud = mlsreg::core::preprocess::preprocess(&read_cloud(input)?, &cfg.pre)?;
            write_point_cloud(&cloud, out, None)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Fragment {
            input,
            trajectory,
            out,
            strategy,
        } => {
            let cfg = config(cli, *strategy)?;
            let ws = Workspace::create(out)?;
            run::fragment_stage(&read_cloud(input)?, &read_trajectory(trajectory)?, &cfg, &ws)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Coarse(a) => {
            let cfg = config(cli, None)?;
            let recs = run::coarse_in_workspace(&Workspace::new(&a.out), &read_cloud(&a.reference)?, &cfg, &clock)?;
            Ok(fragment_status(recs.iter().filter(|r| r.coarse.is_none()).count()))
        }
        Command::Fine(a) => {
            let cfg = config(cli, None)?;
            let recs = run::fine_in_workspace(&Workspace::new(&a.out), &read_cloud(&a.reference)?, &cfg, &clock)?;
            Ok(fragment_status(recs.iter().filter(|r| !r.valid).count()))
        }
        Command::Evaluate { common, patches } => {
            let cfg = config(cli, None)?;
            let manual = patches.as_deref().map(read_patches).transpose()?;
            let report =
                run::evaluate_in_workspace(&Workspace::new(&common.out), &read_cloud(&common.reference)?, &cfg, manual.as_deref())?;
            match report.overall_mean_m {
                Some(m) => println!("overall mean error: {m:.4} m"),
                None => println!("overall mean error: undefined"),
            }
            Ok(fragment_status(report.failed.len()))
        }
        Command::Drift {
            trajectory,
            out,
            component,
        } => {
            let cfg = config(cli, None)?;
            run::drift_in_workspace(&Workspace::new(out), &read_trajectory(trajectory)?, &cfg, (*component).into())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth(args) => {
            let cfg = config(cli, None)?;
            synth(args, cfg.run.seed)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Pipeline {
            source,
            reference,
            trajectory,
            out,
            strategy,
            patches,
            component,
        } => {
            let cfg = config(cli, *strategy)?;
            let inputs = PipelineInputs {
                source: read_cloud(source)?,
                reference: read_cloud(reference)?,
                trajectory: read_trajectory(trajectory)?,
            };
            let manual = patches.as_deref().map(read_patches).transpose()?;
            let ws = Workspace::create(out)?;
            let run = run::run_pipeline(&inputs, &cfg, &ws, manual.as_deref(), (*component).into(), &clock)?;
            match run.report.overall_mean_m {
                Some(m) => println!("{} fragments, overall mean error: {m:.4} m", run.report.fragments.len()),
                None => println!("{} fragments, overall mean error: undefined", run.report.fragments.len()),
            }
            Ok(fragment_status(run.report.failed.len()))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
