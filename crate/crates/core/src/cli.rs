//! Command-line front end shared by the `lagan` binary and its tests.

use std::ffi::OsString;
use std::fmt::Debug;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::binio;
use crate::data::{self, DatasetManifest, SyntheticConfig};
use crate::error::{Error, Result};
use crate::eval::{self, Window};
use crate::jet::{JetImage, Label, Origin, IMAGE_SIZE};
use crate::model::{self, Lagan, LaganConfig, TrainConfig};
use crate::observables::{self, ObservableSet};
use crate::preprocess::{self, PreprocessConfig, RotationMode};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "LAGAN_OUT";

#[derive(Parser, Debug)]
#[command(name = "lagan", version, about = "Location-aware GAN for jet images")]
pub struct Cli {
    /// Seed for every random draw of the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory that relative output paths are resolved against.
    #[arg(long, global = true, env = OUT_ENV, default_value = ".")]
    pub out_dir: PathBuf,
    /// Repeat for more progress output on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample synthetic jet events.
    Synth(SynthArgs),
    /// Turn events into standardized jet images.
    Preprocess(PreprocessArgs),
    Train(TrainArgs),
    /// Sample images from a trained checkpoint.
    Generate(GenerateArgs),
    /// Per-image pt, mass and n-subjettiness as CSV.
    Observables(ObservablesArgs),
    /// Compare real and generated images.
    Evaluate(EvaluateArgs),
    /// Generation throughput.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ClassChoice {
    Signal,
    Background,
    Mixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RotationChoice {
    Constituent,
    Cubic,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelChoice {
    Full,
    Narrow,
    /// Full sizes with shared-weight convolutions.
    Dcgan,
    /// 8 maps in the wide layers; trains in minutes on one core.
    Toy,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = ClassChoice::Mixed)]
    pub class: ClassChoice,
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value = "events.jev")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = RotationChoice::Constituent)]
    pub rotation: RotationChoice,
    /// Rescale cubic-rotated images to their original pixel sum.
    #[arg(long, num_args = 0..=1, default_value_t = true, default_missing_value = "true")]
    pub renorm: bool,
    #[arg(long, default_value_t = 1e-3)]
    pub truncate: f64,
    #[arg(long, default_value = "images.jim")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 40)]
    pub epochs: usize,
    #[arg(long, default_value_t = 100)]
    pub batch: usize,
    #[arg(long, value_enum, default_value_t = ModelChoice::Full)]
    pub model: ModelChoice,
    /// Generated images per class scored after each epoch (0 = no scoring).
    #[arg(long, default_value_t = 0)]
    pub eval_per_class: usize,
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Total images; `mixed` splits them evenly, signal first.
    #[arg(long)]
    pub count: usize,
    #[arg(long, value_enum, default_value_t = ClassChoice::Mixed)]
    pub class: ClassChoice,
    #[arg(long, default_value_t = 250)]
    pub batch: usize,
    #[arg(long, default_value = "generated.jim")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ObservablesArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "observables.csv")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub real: PathBuf,
    #[arg(long)]
    pub generated: PathBuf,
    /// Fixed scoring window `m_min,m_max,t_min,t_max`; pooled range otherwise.
    #[arg(long, value_parser = parse_window)]
    pub window: Option<Window>,
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
    #[arg(long, default_value = "evaluation")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub batch: usize,
    /// Duration of each trial.
    #[arg(long, default_value_t = 2.0)]
    pub seconds: f64,
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    /// Untimed generation before the first trial, in seconds.
    #[arg(long, default_value_t = 2.0)]
    pub warmup: f64,
    #[arg(long, default_value = "bench.txt")]
    pub out: PathBuf,
}

fn parse_window(s: &str) -> std::result::Result<Window, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [m_min, m_max, t_min, t_max] if m_max > m_min && t_max > t_min => Ok(Window { m_min, m_max, t_min, t_max }),
        _ => Err("expected four numbers m_min,m_max,t_min,t_max with min < max".into()),
    }
}

/// Exit status for an error category.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NotFound(_) => 3,
        Error::BadMagic { .. } | Error::Version { .. } | Error::Truncated(_) => 4,
        Error::Config(_) | Error::Input(_) => 5,
        _ => 1,
    }
}

/// Parses `args` (program name first) and runs; returns the exit status.
/// Failures print a single `error[category]: message` line on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let line = msg.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            eprintln!("error[usage]: {}", line.trim_start_matches("error: "));
            return 2;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {}", e.category(), e.to_string().replace('\n', " "));
            exit_code(&e)
        }
    }
}

struct Ctx<'a> {
    cli: &'a Cli,
}

impl Ctx<'_> {
    fn out(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.cli.out_dir.join(p)
        }
    }

    fn log(&self, msg: impl AsRef<str>) {
        if self.cli.verbose > 0 {
            eprintln!("{}", msg.as_ref());
        }
    }

    /// Writes every effective parameter next to the primary output.
    fn echo(&self, path: &Path, name: &str, args: &impl Debug) -> Result<()> {
        let text = format!(
            "subcommand = {name}\nseed = {}\nout_dir = {}\nversion = {}\n{args:#?}\n",
            self.cli.seed,
            self.cli.out_dir.display(),
            env!("CARGO_PKG_VERSION")
        );
        binio::atomic_write_str(path, &text)
    }
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn ensure_parent(p: &Path) -> Result<()> {
    if let Some(d) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(d)?;
    }
    Ok(())
}

fn require_file(p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::NotFound(p.to_path_buf()))
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let ctx = Ctx { cli };
    match &cli.command {
        Command::Synth(a) => synth(&ctx, a),
        Command::Preprocess(a) => preprocess_cmd(&ctx, a),
        Command::Train(a) => train_cmd(&ctx, a),
        Command::Generate(a) => generate_cmd(&ctx, a),
        Command::Observables(a) => observables_cmd(&ctx, a),
        Command::Evaluate(a) => evaluate_cmd(&ctx, a),
        Command::Bench(a) => bench_cmd(&ctx, a),
    }
}

fn synth(ctx: &Ctx, a: &SynthArgs) -> Result<()> {
    let seed = ctx.cli.seed;
    let (sig, bkg) = (SyntheticConfig::signal(), SyntheticConfig::background());
    let (events, digest) = match a.class {
        ClassChoice::Signal => (data::synth_events(&sig, a.count, seed)?, sig.digest()),
        ClassChoice::Background => (data::synth_events(&bkg, a.count, seed)?, bkg.digest()),
        ClassChoice::Mixed => (data::synth_mixed(&sig, &bkg, a.count, seed)?, data::hex_digest(format!("{sig:?}{bkg:?}").as_bytes())),
    };
    let out = ctx.out(&a.out);
    ensure_parent(&out)?;
    data::write_events(&out, &events)?;
    DatasetManifest::for_events(&out, &events, Some(digest)).write()?;
    ctx.echo(&with_suffix(&out, ".config"), "synth", a)?;
    ctx.log(format!("wrote {} events to {}", events.len(), out.display()));
    Ok(())
}

fn preprocess_cmd(ctx: &Ctx, a: &PreprocessArgs) -> Result<()> {
    require_file(&a.input)?;
    let config = PreprocessConfig {
        rotation: match a.rotation {
            RotationChoice::Constituent => RotationMode::Constituent,
            RotationChoice::Cubic => RotationMode::ImageCubic,
            RotationChoice::None => RotationMode::None,
        },
        renormalize: a.renorm,
        truncation_threshold: a.truncate,
    };
    config.validate()?;
    let events = data::read_events(&a.input)?;
    let images = events.iter().map(|e| preprocess::preprocess(e, &config)).collect::<Result<Vec<_>>>()?;
    let out = ctx.out(&a.out);
    ensure_parent(&out)?;
    data::write_images(&out, &images)?;
    DatasetManifest::for_images(&out, &images, Some(data::hex_digest(format!("{config:?}").as_bytes()))).write()?;
    ctx.echo(&with_suffix(&out, ".config"), "preprocess", a)?;
    ctx.log(format!("wrote {} images to {}", images.len(), out.display()));
    Ok(())
}

pub fn model_config(choice: ModelChoice) -> LaganConfig {
    match choice {
        ModelChoice::Full => LaganConfig::full(),
        ModelChoice::Narrow => LaganConfig::narrow(),
        ModelChoice::Dcgan => LaganConfig::full().dcgan(),
        ModelChoice::Toy => LaganConfig::toy(),
    }
}

fn train_cmd(ctx: &Ctx, a: &TrainArgs) -> Result<()> {
    require_file(&a.data)?;
    let images = data::read_images(&a.data)?;
    let config = TrainConfig {
        batch_size: a.batch,
        epochs: a.epochs,
        seed: ctx.cli.seed,
        eval_per_class: a.eval_per_class,
        ..Default::default()
    };
    let model = Lagan::new(model_config(a.model), ctx.cli.seed)?;
    let dir = ctx.out(&a.out);
    std::fs::create_dir_all(&dir)?;
    ctx.echo(&dir.join("config.txt"), "train", &(a, &config, &model.config))?;
    let report = model::train(model, config, &images, Some(&dir), |e| {
        let score = e.score.as_ref().map(|s| format!(" sigma={:.4}", s.sigma)).unwrap_or_default();
        ctx.log(format!("epoch {} done in {:.1}s{score}", e.epoch, e.seconds));
    })?;
    let mut scores = String::from("epoch,seconds,sigma,emd_signal,emd_background\n");
    for e in &report.epochs {
        let (s, es, eb) = match &e.score {
            Some(r) => (
                r.sigma.to_string(),
                r.emd_for(Label::Signal).map(|v| v.to_string()).unwrap_or_default(),
                r.emd_for(Label::Background).map(|v| v.to_string()).unwrap_or_default(),
            ),
            None => Default::default(),
        };
        scores.push_str(&format!("{},{},{s},{es},{eb}\n", e.epoch, e.seconds));
    }
    binio::atomic_write_str(&dir.join("epochs.csv"), &scores)?;
    report.model.save(&dir.join("final.lgn"))?;
    if let Some(best) = report.best_epoch() {
        binio::atomic_write_str(&dir.join("best_epoch.txt"), &format!("{}\n", best.epoch))?;
    }
    Ok(())
}

fn generate_cmd(ctx: &Ctx, a: &GenerateArgs) -> Result<()> {
    require_file(&a.checkpoint)?;
    let model = Lagan::load(&a.checkpoint)?;
    if model.config.image_size != IMAGE_SIZE {
        return Err(Error::Config(format!("checkpoint produces {0}x{0} images", model.config.image_size)));
    }
    let images = match a.class {
        ClassChoice::Mixed => {
            let half = a.count.div_ceil(2);
            let mut all = model::generate_class(&model, Label::Signal, half, ctx.cli.seed, a.batch)?;
            all.extend(model::generate_class(&model, Label::Background, a.count - half, ctx.cli.seed ^ 1, a.batch)?);
            all
        }
        ClassChoice::Signal => model::generate_class(&model, Label::Signal, a.count, ctx.cli.seed, a.batch)?,
        ClassChoice::Background => model::generate_class(&model, Label::Background, a.count, ctx.cli.seed ^ 1, a.batch)?,
    };
    let out = ctx.out(&a.out);
    ensure_parent(&out)?;
    data::write_images(&out, &images)?;
    DatasetManifest::for_images(&out, &images, None).write()?;
    ctx.echo(&with_suffix(&out, ".config"), "generate", a)?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "nan".into())
}

pub fn observables_csv(images: &[JetImage], obs: &[ObservableSet]) -> String {
    let mut s = String::from("id,label,origin,pt,mass,tau1,tau2,tau21\n");
    for (k, (img, o)) in images.iter().zip(obs).enumerate() {
        s.push_str(&format!(
            "{k},{},{},{},{},{},{},{}\n",
            img.label.name(),
            img.origin.name(),
            o.pt,
            o.mass,
            opt(o.tau1),
            opt(o.tau2),
            opt(o.tau21)
        ));
    }
    s
}

fn observables_cmd(ctx: &Ctx, a: &ObservablesArgs) -> Result<()> {
    require_file(&a.input)?;
    let images = data::read_images(&a.input)?;
    let (obs, diag) = observables::observables_batch(&images);
    let out = ctx.out(&a.out);
    ensure_parent(&out)?;
    binio::atomic_write_str(&out, &observables_csv(&images, &obs))?;
    ctx.echo(&with_suffix(&out, ".config"), "observables", a)?;
    ctx.log(format!("{} clamped masses, {} undefined tau21", diag.clamped_mass, diag.undefined_tau21));
    Ok(())
}

/// Linear-bin counts of `values` over `edges`, closed last bin.
fn counts(values: &[f64], edges: &[f64]) -> Vec<u64> {
    let bins = edges.len() - 1;
    let mut c = vec![0; bins];
    for &v in values {
        if v >= edges[0] && v <= edges[bins] {
            c[edges.partition_point(|&e| e <= v).saturating_sub(1).min(bins - 1)] += 1;
        }
    }
    c
}

type Group<'a> = (String, Vec<&'a JetImage>, Vec<ObservableSet>);

/// One CSV with a column per (class, origin) group.
fn histogram_csv(groups: &[Group], edges: &[f64], value: impl Fn(&ObservableSet) -> Option<f64>) -> String {
    let cols: Vec<Vec<u64>> =
        groups.iter().map(|(_, _, obs)| counts(&obs.iter().filter_map(&value).collect::<Vec<_>>(), edges)).collect();
    let mut s = String::from("lo,hi");
    for (name, _, _) in groups {
        s.push_str(&format!(",{name}"));
    }
    s.push('\n');
    for b in 0..edges.len() - 1 {
        s.push_str(&format!("{},{}", edges[b], edges[b + 1]));
        for c in &cols {
            s.push_str(&format!(",{}", c[b]));
        }
        s.push('\n');
    }
    s
}

fn linear_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let hi = if hi > lo { hi } else { lo + 1.0 };
    (0..=bins).map(|k| lo + (hi - lo) * k as f64 / bins as f64).collect()
}

fn evaluate_cmd(ctx: &Ctx, a: &EvaluateArgs) -> Result<()> {
    require_file(&a.real)?;
    require_file(&a.generated)?;
    if a.bins == 0 {
        return Err(Error::Config("--bins must be positive".into()));
    }
    let real = data::read_images(&a.real)?;
    let mut generated = data::read_images(&a.generated)?;
    for g in &mut generated {
        g.origin = Origin::Generated;
    }
    let dir = ctx.out(&a.out);
    std::fs::create_dir_all(&dir)?;
    ctx.echo(&dir.join("config.txt"), "evaluate", a)?;

    let report = eval::minimax_score(&real, &generated, a.window)?;
    binio::atomic_write_str(&dir.join("score.txt"), &report.to_text())?;

    let (obs_r, _) = observables::observables_batch(&real);
    let (obs_g, _) = observables::observables_batch(&generated);
    binio::atomic_write_str(&dir.join("observables_real.csv"), &observables_csv(&real, &obs_r))?;
    binio::atomic_write_str(&dir.join("observables_generated.csv"), &observables_csv(&generated, &obs_g))?;

    let mut groups: Vec<Group> = Vec::new();
    for label in Label::ALL {
        for (origin, imgs, obs) in [(Origin::Real, &real, &obs_r), (Origin::Generated, &generated, &obs_g)] {
            let (sel, o): (Vec<&JetImage>, Vec<ObservableSet>) =
                imgs.iter().zip(obs.iter()).filter(|(i, _)| i.label == label).map(|(i, o)| (i, *o)).unzip();
            groups.push((format!("{}_{}", label.name(), origin.name()), sel, o));
        }
    }
    let all_obs = || obs_r.iter().chain(&obs_g);
    let max_of = |f: fn(&ObservableSet) -> f64| all_obs().map(f).fold(0.0, f64::max);
    let mass_edges = linear_edges(0.0, max_of(|o| o.mass), a.bins);
    let pt_edges = linear_edges(0.0, max_of(|o| o.pt), a.bins);
    let tau_edges = linear_edges(0.0, 1.0, a.bins);
    binio::atomic_write_str(&dir.join("hist_mass.csv"), &histogram_csv(&groups, &mass_edges, |o| Some(o.mass)))?;
    binio::atomic_write_str(&dir.join("hist_pt.csv"), &histogram_csv(&groups, &pt_edges, |o| Some(o.pt)))?;
    binio::atomic_write_str(&dir.join("hist_tau21.csv"), &histogram_csv(&groups, &tau_edges, |o| o.tau21))?;

    let mut pooled = real.clone();
    pooled.extend(generated.iter().cloned());
    let edges = observables::intensity_edges(&pooled, observables::INTENSITY_FLOOR, a.bins)?;
    let mut s = String::from("lo,hi");
    let mut cols = Vec::new();
    for (name, imgs, _) in &groups {
        s.push_str(&format!(",{name}"));
        let owned: Vec<JetImage> = imgs.iter().map(|&i| i.clone()).collect();
        cols.push(observables::pixel_intensity_histogram(&owned, &edges));
    }
    s.push('\n');
    for b in 0..edges.len() - 1 {
        s.push_str(&format!("{},{}", edges[b], edges[b + 1]));
        for c in &cols {
            s.push_str(&format!(",{}", c[b]));
        }
        s.push('\n');
    }
    binio::atomic_write_str(&dir.join("hist_intensity.csv"), &s)?;

    for label in Label::ALL {
        let r = eval::select(&real, Some(label), None);
        let g = eval::select(&generated, Some(label), None);
        if r.is_empty() || g.is_empty() {
            continue;
        }
        let (ar, ag) = (eval::average_image(&r)?, eval::average_image(&g)?);
        let diff: Vec<f64> = ag.iter().zip(&ar).map(|(g, r)| g - r).collect();
        for (tag, grid) in [("real", &ar), ("generated", &ag), ("difference", &diff)] {
            let stem = format!("average_{}_{tag}", label.name());
            eval::write_pgm(&dir.join(format!("{stem}.pgm")), grid, IMAGE_SIZE)?;
            binio::atomic_write_str(&dir.join(format!("{stem}.csv")), &grid_csv(grid))?;
        }
    }
    ctx.log(format!("sigma = {}", report.sigma));
    Ok(())
}

fn grid_csv(grid: &[f64]) -> String {
    grid.chunks(IMAGE_SIZE)
        .map(|row| row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join("\n")
        + "\n"
}

fn bench_cmd(ctx: &Ctx, a: &BenchArgs) -> Result<()> {
    require_file(&a.checkpoint)?;
    let model = Lagan::load(&a.checkpoint)?;
    let report = model::throughput_bench(&model, a.batch, a.seconds, a.trials, a.warmup, ctx.cli.seed)?;
    let out = ctx.out(&a.out);
    ensure_parent(&out)?;
    binio::atomic_write_str(&out, &report.to_text())?;
    ctx.echo(&with_suffix(&out, ".config"), "bench", a)?;
    println!("{:.3} images/s median (mean {:.3}, std {:.3}, {} trials)", report.median, report.mean, report.std, report.trials.len());
    Ok(())
}
