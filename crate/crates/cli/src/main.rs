use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use nuisance::datakit::{
    build_composed_testset, colorize_background, dim_digits, load_dataset, load_idx, save_dataset, seven_segment_digits,
    shape_domain, threshold_split, Band, Bands, BackgroundFill, Dataset, DeltaPolicy, Metric, ShapeDomain,
};
use nuisance::diffcore::{load_classifier, save_classifier, Shape};
use nuisance::genmodel::{save_snapshots, save_translation, train_translation, Direction, MunitConfig, MunitHyper};
use nuisance::harness::{
    ablate_k, emit_results, evaluate, invariance_rate, load_snapshots, model_quality_study, train_config_from, Ablation,
    Cell, ConfigFile, QualityStudy, Table,
};
use nuisance::rng::{purpose, stream};
use nuisance::robusttrain::{train, write_metrics_log, Algorithm, TrainConfig};
use nuisance::variation::{Learned, NuisanceSpace, VariationModel, DEFAULT_STYLE_SCALE};
use nuisance::{Error, Result};

type S = f32;

#[derive(Parser)]
#[command(name = "nuisance", version, about = "Model-based robust training against models of natural variation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a dataset (IDX, manifest or synthetic), optionally recolor it, and split it into brightness/contrast bands.
    Curate(CurateArgs),
    /// Learn an unpaired translation model between two domains and save snapshots.
    LearnModel(LearnArgs),
    /// Train a classifier.
    Train(TrainArgs),
    /// Evaluate a classifier checkpoint on test sets.
    Eval(EvalArgs),
    /// Train every model-based algorithm over a list of k values.
    AblateK(AblateArgs),
    /// Train against each snapshot of a translation model.
    ModelQuality(QualityArgs),
    /// Build a test set by applying two variation models in sequence.
    Compose(ComposeArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct TrainFlags {
    /// key=value config file; its [train] section is applied before flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_algo)]
    algo: Option<Algorithm>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
}

fn parse_algo(s: &str) -> std::result::Result<Algorithm, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl TrainFlags {
    fn config(&self, default: Algorithm) -> Result<TrainConfig> {
        let mut c = TrainConfig::new(default);
        if let Some(p) = &self.config {
            c = train_config_from(&ConfigFile::load(p).map_err(config_io(p))?, c)?;
        }
        if let Some(a) = self.algo {
            c.algorithm = a;
            c.k = a.default_k();
        }
        if let Some(v) = self.k {
            c.k = v;
        }
        if let Some(v) = self.lambda {
            c.lambda = v;
        }
        if let Some(v) = self.epochs {
            c.epochs = v;
        }
        if let Some(v) = self.batch {
            c.batch_size = v;
        }
        if let Some(v) = self.classes {
            c.classes = v;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct CurateArgs {
    #[command(flatten)]
    common: Common,
    /// IDX image file.
    #[arg(long, conflicts_with_all = ["manifest", "synth"])]
    images: Option<PathBuf>,
    /// IDX label file accompanying --images.
    #[arg(long, requires = "images")]
    labels: Option<PathBuf>,
    #[arg(long, conflicts_with = "synth")]
    manifest: Option<PathBuf>,
    /// digits | dim-digits | shapes-a | shapes-b
    #[arg(long)]
    synth: Option<String>,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Recolor the background to r,g,b (0-255).
    #[arg(long)]
    background: Option<String>,
    /// brightness | contrast
    #[arg(long)]
    metric: Option<String>,
    /// Threshold table: svhn | gtsrb
    #[arg(long, conflicts_with = "bands")]
    preset: Option<String>,
    /// Custom thresholds `low,medium_lo,medium_hi,high`.
    #[arg(long)]
    bands: Option<String>,
    #[arg(long, default_value = "data")]
    name: String,
}

#[derive(Args)]
struct LearnArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    domain_a: PathBuf,
    #[arg(long)]
    domain_b: PathBuf,
    #[arg(long, default_value_t = 2000)]
    iterations: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value = "10,500,2000")]
    snapshots: String,
    #[arg(long, default_value_t = 4)]
    content: usize,
    #[arg(long, default_value_t = 2)]
    style: usize,
    #[arg(long, default_value_t = 8)]
    hidden: usize,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    flags: TrainFlags,
    #[arg(long)]
    train: PathBuf,
    /// Variation model descriptor file.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Test manifests evaluated after training.
    #[arg(long)]
    test: Vec<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, required = true)]
    test: Vec<PathBuf>,
    /// Also measure the invariance rate under this model.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    samples: usize,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    flags: TrainFlags,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "1,5,10,20,50")]
    ks: String,
    #[arg(long, default_value = "mrt,mat,mda")]
    algos: String,
    /// Seeds; defaults to --seed, --seed+1, --seed+2.
    #[arg(long)]
    seeds: Option<String>,
}

#[derive(Args)]
struct QualityArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    flags: TrainFlags,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Snapshot manifest written by learn-model.
    #[arg(long)]
    snapshots: PathBuf,
    #[arg(long)]
    seeds: Option<String>,
}

#[derive(Args)]
struct ComposeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: PathBuf,
    /// Descriptor of the model applied first.
    #[arg(long)]
    first: PathBuf,
    /// Descriptor of the model applied second.
    #[arg(long)]
    second: PathBuf,
    /// Fixed δ for the first model (comma list); random per item if omitted.
    #[arg(long, requires = "delta2")]
    delta1: Option<String>,
    #[arg(long, requires = "delta1")]
    delta2: Option<String>,
    #[arg(long, default_value = "composed")]
    name: String,
}

fn config_io(p: &Path) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Io(io) => Error::Config(format!("{}: {io}", p.display())),
        e => e,
    }
}

fn list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    let v = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| Error::Config(format!("{what}: cannot parse `{t}`"))))
        .collect::<Result<Vec<T>>>()?;
    if v.is_empty() {
        return Err(Error::Config(format!("{what}: empty list")));
    }
    Ok(v)
}

fn seeds(arg: &Option<String>, base: u64) -> Result<Vec<u64>> {
    match arg {
        Some(s) => list(s, "--seeds"),
        None => Ok(vec![base, base + 1, base + 2]),
    }
}

fn dataset(p: &Path) -> Result<Dataset<S>> {
    if !p.exists() {
        return Err(Error::Config(format!("{} does not exist", p.display())));
    }
    load_dataset(p)
}

fn model(p: &Path) -> Result<VariationModel<S>> {
    if !p.exists() {
        return Err(Error::Config(format!("{} does not exist", p.display())));
    }
    VariationModel::load_descriptor(p)
}

fn shifted_report(table: &mut Table, domain: &str, e: &nuisance::harness::EvalSummary) -> Result<()> {
    table.push(vec![
        domain.into(),
        e.samples.into(),
        e.top1.into(),
        e.top5.into(),
        e.invariance.map_or(Cell::Text(String::new()), Cell::Num),
    ])
}

const EVAL_COLUMNS: &[&str] = &["domain", "samples", "top1", "top5", "invariance"];

fn curate(a: &CurateArgs) -> Result<()> {
    let mut data: Dataset<S> = match (&a.images, &a.manifest, &a.synth) {
        (Some(img), _, _) => {
            if !img.exists() {
                return Err(Error::Config(format!("{} does not exist", img.display())));
            }
            load_idx(img, a.labels.as_deref())?
        }
        (_, Some(m), _) => dataset(m)?,
        (_, _, Some(kind)) => {
            let seed = a.common.seed;
            match kind.as_str() {
                "digits" => seven_segment_digits(a.n, seed)?,
                "dim-digits" => dim_digits(a.n, seed)?,
                "shapes-a" => shape_domain(ShapeDomain::A, a.n, seed)?,
                "shapes-b" => shape_domain(ShapeDomain::B, a.n, seed)?,
                _ => return Err(Error::Config(format!("unknown synthetic set `{kind}` (digits|dim-digits|shapes-a|shapes-b)"))),
            }
        }
        _ => return Err(Error::Config("one of --images, --manifest or --synth is required".into())),
    };
    if let Some(bg) = &a.background {
        let c: Vec<u8> = list(bg, "--background")?;
        let rgb: [u8; 3] = c
            .try_into()
            .map_err(|_| Error::Config("--background needs three components".into()))?;
        data = colorize_background(&data, &BackgroundFill::Uniform(rgb))?;
    }
    let data = data.with_domain(a.name.as_str());
    let out = &a.common.out;
    let mut t = Table::new(&["name", "domain", "items"]);
    let Some(metric) = &a.metric else {
        save_dataset(&data, out, &a.name)?;
        t.push(vec![a.name.as_str().into(), data.domain.as_str().into(), data.len().into()])?;
        return emit_results(out, "curate", &t, None);
    };
    let metric: Metric = metric.parse()?;
    let bands = match (&a.preset, &a.bands) {
        (Some(p), _) => Bands::preset(p, metric)?,
        (_, Some(b)) => {
            let v: Vec<f64> = list(b, "--bands")?;
            let [lo, m0, m1, hi] = v[..] else {
                return Err(Error::Config("--bands needs four thresholds".into()));
            };
            Bands {
                low: Band { lower: None, upper: Some(lo) },
                medium: Band { lower: Some(m0), upper: Some(m1) },
                high: Band { lower: Some(hi), upper: None },
            }
        }
        _ => return Err(Error::Config("--metric needs --preset or --bands".into())),
    };
    let split = threshold_split(&data, metric, bands)?;
    for (band, d) in [("low", &split.low), ("medium", &split.medium), ("high", &split.high)] {
        let name = format!("{}-{band}", a.name);
        save_dataset(d, out, &name)?;
        t.push(vec![name.into(), d.domain.as_str().into(), d.len().into()])?;
    }
    emit_results(out, "curate", &t, None)
}

fn learn_model(a: &LearnArgs) -> Result<()> {
    let da = dataset(&a.domain_a)?;
    let db = dataset(&a.domain_b)?;
    let shape: Shape = da.shape().ok_or_else(|| Error::Config("domain A is empty".into()))?;
    let config = MunitConfig::new(shape, a.content, a.style, a.hidden);
    let mut snapshots: Vec<usize> = list(&a.snapshots, "--snapshots")?;
    snapshots.retain(|&s| s <= a.iterations);
    let hyper = MunitHyper {
        iterations: a.iterations,
        lr: a.lr,
        snapshots,
        ..MunitHyper::default()
    };
    let out = &a.common.out;
    std::fs::create_dir_all(out)?;
    let trained = train_translation(da.images(), db.images(), config, &hyper, a.common.seed)?;
    save_snapshots(out, config, &trained.snapshots)?;
    save_translation(&trained.model, out.join("model.mbrt"))?;
    let g = VariationModel::learned(
        Learned {
            model: Arc::new(trained.model.clone()),
            direction: Direction::AtoB,
            style_scale: DEFAULT_STYLE_SCALE,
            source: Some("model.mbrt".into()),
        },
        NuisanceSpace::symmetric(a.style),
    )?;
    g.save_descriptor(out.join("model.desc"))?;
    let mut t = Table::new(&["iteration", "total", "gan", "recon", "recon_c", "recon_s"]);
    for (i, l) in trained.history.iter().enumerate() {
        t.push(vec![(i + 1).into(), l.total.into(), l.gan.into(), l.recon.into(), l.recon_c.into(), l.recon_s.into()])?;
    }
    emit_results(out, "losses", &t, None)
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let cfg = a.flags.config(Algorithm::Erm)?;
    let cfg = TrainConfig { seed: a.common.seed, ..cfg };
    let data = dataset(&a.train)?;
    let tests = a.test.iter().map(|p| dataset(p)).collect::<Result<Vec<_>>>()?;
    let g = a.model.as_deref().map(model).transpose()?;
    if cfg.algorithm.is_model_based() && g.is_none() {
        return Err(Error::Config(format!("--algo {} needs --model", cfg.algorithm)));
    }
    let report = train(&data, g.as_ref().filter(|_| cfg.algorithm.is_model_based()), &cfg)?;
    let out = &a.common.out;
    std::fs::create_dir_all(out)?;
    save_classifier(&report.classifier, out.join("classifier.mbrt"))?;
    write_metrics_log(&out.join("metrics.log"), &report.epochs)?;
    let mut t = Table::new(EVAL_COLUMNS);
    for d in &tests {
        shifted_report(&mut t, &d.domain, &evaluate(&report.classifier, d)?)?;
    }
    emit_results(out, "eval", &t, None)
}

fn eval_cmd(a: &EvalArgs) -> Result<()> {
    if !a.checkpoint.exists() {
        return Err(Error::Config(format!("{} does not exist", a.checkpoint.display())));
    }
    let c = load_classifier::<S>(&a.checkpoint)?;
    let g = a.model.as_deref().map(model).transpose()?;
    let mut t = Table::new(EVAL_COLUMNS);
    for (i, p) in a.test.iter().enumerate() {
        let d = dataset(p)?;
        let mut e = evaluate(&c, &d)?;
        if let Some(g) = &g {
            let mut rng = stream(a.common.seed, &[purpose::EVAL, i as u64]);
            e.invariance = Some(invariance_rate(&c, g, &d, a.samples, &mut rng)?);
        }
        shifted_report(&mut t, &d.domain, &e)?;
    }
    emit_results(&a.common.out, "eval", &t, None)
}

fn ablate(a: &AblateArgs) -> Result<()> {
    let base = a.flags.config(Algorithm::Mrt)?;
    let train_data = dataset(&a.train)?;
    let test = dataset(&a.test)?;
    let g = model(&a.model)?;
    let algorithms: Vec<Algorithm> = list(&a.algos, "--algos")?;
    if let Some(bad) = algorithms.iter().find(|a| !a.is_model_based()) {
        return Err(Error::Config(format!("--algos: {bad} is not model-based")));
    }
    let r = ablate_k(&Ablation {
        train: &train_data,
        test: &test,
        model: &g,
        base,
        algorithms,
        ks: list(&a.ks, "--ks")?,
        seeds: seeds(&a.seeds, a.common.seed)?,
    })?;
    emit_results(&a.common.out, "ablate_k", &r.table, None)?;
    emit_results(&a.common.out, "ablate_k_runs", &nuisance::harness::runs_table(&r.runs)?, None)
}

fn quality(a: &QualityArgs) -> Result<()> {
    let config = a.flags.config(Algorithm::Mrt)?;
    if !a.snapshots.exists() {
        return Err(Error::Config(format!("{} does not exist", a.snapshots.display())));
    }
    let snapshots = load_snapshots::<S>(&a.snapshots)?;
    let style = snapshots.first().map_or(0, |(_, m)| m.style_dim());
    let train_data = dataset(&a.train)?;
    let shifted = dataset(&a.test)?;
    let curve = model_quality_study(&QualityStudy {
        snapshots,
        direction: Direction::AtoB,
        space: NuisanceSpace::symmetric(style),
        train: &train_data,
        shifted: &shifted,
        config,
        seeds: seeds(&a.seeds, a.common.seed)?,
    })?;
    emit_results(&a.common.out, "model_quality", &curve.table, Some(&curve.plot))
}

fn compose_cmd(a: &ComposeArgs) -> Result<()> {
    let data = dataset(&a.input)?;
    let first = model(&a.first)?;
    let second = model(&a.second)?;
    let policy = match (&a.delta1, &a.delta2) {
        (Some(d1), Some(d2)) => DeltaPolicy::Fixed(
            first.space().param(list(d1, "--delta1")?)?,
            second.space().param(list(d2, "--delta2")?)?,
        ),
        _ => DeltaPolicy::Uniform { seed: a.common.seed },
    };
    let out = build_composed_testset(&data, &first, &second, &policy)?;
    save_dataset(&out, &a.common.out, &a.name)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Curate(a) => curate(a),
        Command::LearnModel(a) => learn_model(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::AblateK(a) => ablate(a),
        Command::ModelQuality(a) => quality(a),
        Command::Compose(a) => compose_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nuisance: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 2,
                _ => 3,
            })
        }
    }
}
