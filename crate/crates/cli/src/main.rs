//! `sticker`: generate synthetic data, train, compose and evaluate.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

mod config;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sticker_core::classifier::{train_classifier_from, type_accuracy, TypeClassifier, TypeDecision};
use sticker_core::compositor::{composite_filter, composite_sticker};
use sticker_core::dataio::{split_by_sticker, synth_generate, Dataset, PlacementRecord, Split, SplitManifest, SPLITS_FILE};
use sticker_core::evalbench::{eval_cases, evaluate, fingerprint, Method};
use sticker_core::geometry::BBox;
use sticker_core::placement::{train_placement_from, PlacementNet};
use sticker_core::raster::{load_gray, load_sticker, luminance_contrast_mask, Sticker};

use config::{RunConfig, CONFIG_FILE};

const CLASSIFIER_WEIGHTS: &str = "classifier.snw";
const PLACEMENT_WEIGHTS: &str = "placement.snw";
const METRICS_FILE: &str = "metrics.jsonl";

#[derive(Debug, Parser)]
#[command(name = "sticker", version, about = "Sticker type classification, placement and compositing")]
struct Cli {
    /// TOML file with run settings; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override any config key, e.g. `--set lambda=1.5`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset with its split manifest.
    Generate {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the classifier, the placement predictor, or both.
    Train {
        #[arg(long, value_enum, default_value_t = Stage::All)]
        stage: Stage,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Output directory for weights, metrics and the config echo.
        #[arg(long)]
        out: PathBuf,
        /// Weights directory to continue training from.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Classify a sticker and composite it onto a host image.
    Compose {
        #[arg(long)]
        host: PathBuf,
        #[arg(long)]
        sticker: PathBuf,
        /// Host foreground mask; estimated from luminance contrast when absent.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Output image; the decision record is written next to it as `<out>.json`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        force_style: Option<Style>,
    },
    /// Score placement methods on the test split.
    Eval {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Comma-separated subset of model, center, random.
        #[arg(long, value_delimiter = ',', default_value = "model,center,random")]
        methods: Vec<String>,
        /// Line-delimited report path.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Stage {
    Classifier,
    Placement,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Style {
    Filter,
    Sticker,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Core(sticker_core::Error),
}

impl From<sticker_core::Error> for CliError {
    fn from(e: sticker_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use sticker_core::Error as E;
        match self {
            CliError::Usage(_) | CliError::Core(E::Input(_)) => 1,
            CliError::Core(E::Numeric { .. }) => 3,
            CliError::Core(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn required(path: Option<PathBuf>, fallback: &Option<String>, flag: &str) -> CliResult<PathBuf> {
    path.or_else(|| fallback.as_ref().map(PathBuf::from))
        .ok_or_else(|| CliError::Usage(format!("--{flag} is required")))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn load_manifest(dir: &Path) -> CliResult<SplitManifest> {
    let path = dir.join(SPLITS_FILE);
    let file = File::open(&path)
        .map_err(|e| sticker_core::Error::Data(format!("cannot open {}: {e}", path.display())))?;
    Ok(SplitManifest::read(BufReader::new(file))?)
}

fn sticker_style<'a>(v: &[&'a PlacementRecord]) -> Vec<&'a PlacementRecord> {
    v.iter().copied().filter(|r| r.usable_for_placement()).collect()
}

fn cmd_generate(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let ds = synth_generate(cfg.n, cfg.seed)?;
    let manifest = split_by_sticker(&ds.records, cfg.seed)?;
    fs::create_dir_all(out)?;
    ds.write_to(out)?;
    let mut w = BufWriter::new(File::create(out.join(SPLITS_FILE))?);
    manifest.write(&mut w)?;
    w.flush()?;
    cfg.echo(out)?;
    let filters = ds.records.iter().filter(|r| r.is_filter()).count();
    println!(
        "wrote {} scenes ({} filter-style) and {} stickers to {}",
        ds.records.len(),
        filters,
        manifest.len(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct MetricRow {
    stage: &'static str,
    epoch: usize,
    train_loss: f64,
    train_metric: f64,
    val_metric: Option<f64>,
}

fn cmd_train(cfg: &RunConfig, stage: Stage, data: &Path, out: &Path, resume: Option<&Path>) -> CliResult<()> {
    let ds = Dataset::load(data)?;
    let manifest = load_manifest(data)?;
    let train = manifest.filter(&ds.records, Split::Train);
    let val = manifest.filter(&ds.records, Split::Val);
    if train.is_empty() {
        return Err(sticker_core::Error::Data(format!("{} has no training records", data.display())).into());
    }
    fs::create_dir_all(out)?;
    cfg.echo(out)?;
    let mut rows = Vec::new();

    if matches!(stage, Stage::Classifier | Stage::All) {
        let model = match resume {
            Some(dir) => TypeClassifier::load(&dir.join(CLASSIFIER_WEIGHTS), cfg.classifier())?,
            None => TypeClassifier::new(cfg.classifier())?,
        };
        let (model, history) = train_classifier_from(model, &ds, &train, &val)?;
        model.save(&out.join(CLASSIFIER_WEIGHTS))?;
        for e in &history {
            println!("classifier epoch {}: loss {:.4} acc {:.4} val {:?}", e.epoch, e.train_loss, e.train_accuracy, e.val_accuracy);
            rows.push(MetricRow {
                stage: "classifier",
                epoch: e.epoch,
                train_loss: e.train_loss,
                train_metric: e.train_accuracy,
                val_metric: e.val_accuracy,
            });
        }
    }
    if matches!(stage, Stage::Placement | Stage::All) {
        let (ptrain, pval) = (sticker_style(&train), sticker_style(&val));
        let net = match resume {
            Some(dir) => PlacementNet::load(&dir.join(PLACEMENT_WEIGHTS), cfg.placement())?,
            None => PlacementNet::new(cfg.placement())?,
        };
        let (net, history) = train_placement_from(net, &ds, &ptrain, &pval)?;
        net.save(&out.join(PLACEMENT_WEIGHTS))?;
        for e in &history {
            println!(
                "placement epoch {}: loss {:.4} diou {:.4} val {:?}",
                e.epoch, e.train_loss, e.train_mean_diou, e.val_mean_diou
            );
            rows.push(MetricRow {
                stage: "placement",
                epoch: e.epoch,
                train_loss: e.train_loss,
                train_metric: e.train_mean_diou,
                val_metric: e.val_mean_diou,
            });
        }
    }
    write_jsonl(&out.join(METRICS_FILE), &rows)
}

#[derive(Serialize)]
struct Decision {
    style: Style,
    forced: bool,
    probabilities: Option<[f64; 3]>,
    use_mask: bool,
    transparency: bool,
    opacity: f64,
    bbox: Option<BBox>,
    chosen_anchor: Option<usize>,
    confidence: Option<f64>,
    outside_canvas: bool,
    width: u32,
    height: u32,
}

fn classify(weights: &Path, cfg: &RunConfig, sticker: &Sticker) -> CliResult<TypeDecision> {
    let model = TypeClassifier::load(&weights.join(CLASSIFIER_WEIGHTS), cfg.classifier())?;
    Ok(model.classify(&model.prepare(sticker)?, cfg.thresholds)?)
}

#[allow(clippy::too_many_arguments)]
fn cmd_compose(
    cfg: &RunConfig,
    host_path: &Path,
    sticker_path: &Path,
    mask_path: Option<&Path>,
    weights: Option<&Path>,
    out: &Path,
    force: Option<Style>,
) -> CliResult<()> {
    let (host, _) = sticker_core::raster::load_rgba(host_path)?;
    let sticker = load_sticker(sticker_path)?;
    let mask = match mask_path {
        Some(p) => load_gray(p)?,
        None => luminance_contrast_mask(&host),
    };
    let need_weights = || weights.ok_or_else(|| CliError::Usage("--weights is required unless the style is forced and needs no model".into()));

    let type_decision = match force {
        Some(Style::Sticker) => None,
        Some(Style::Filter) => match weights {
            Some(w) if w.join(CLASSIFIER_WEIGHTS).exists() => Some(classify(w, cfg, &sticker)?),
            _ => None,
        },
        None => Some(classify(need_weights()?, cfg, &sticker)?),
    };
    let style = force.unwrap_or(match &type_decision {
        Some(d) if d.is_filter => Style::Filter,
        _ => Style::Sticker,
    });

    let (image, decision) = match style {
        Style::Filter => {
            let use_mask = type_decision.as_ref().is_some_and(|d| d.use_mask);
            let transparency = type_decision.as_ref().is_some_and(|d| d.transparency);
            let image = composite_filter(&host, &sticker.image, use_mask, transparency, Some(&mask), cfg.filter_opacity)?;
            let decision = Decision {
                style,
                forced: force.is_some(),
                probabilities: type_decision.as_ref().map(|d| [d.p_filter, d.p_mask, d.p_transparency]),
                use_mask,
                transparency,
                opacity: if transparency { cfg.filter_opacity } else { 1.0 },
                bbox: Some(BBox { x: 0.0, y: 0.0, w: 1.0, h: 1.0 }),
                chosen_anchor: None,
                confidence: None,
                outside_canvas: false,
                width: image.width(),
                height: image.height(),
            };
            (image, decision)
        }
        Style::Sticker => {
            let net = PlacementNet::load(&need_weights()?.join(PLACEMENT_WEIGHTS), cfg.placement())?;
            let placed = net.predict(&net.prepare_host(&host, &mask)?, &net.prepare_sticker(&sticker)?)?;
            let comp = composite_sticker(&host, &sticker.image, &placed.bbox, 1.0)?;
            let decision = Decision {
                style,
                forced: force.is_some(),
                probabilities: type_decision.as_ref().map(|d| [d.p_filter, d.p_mask, d.p_transparency]),
                use_mask: false,
                transparency: false,
                opacity: 1.0,
                bbox: Some(placed.bbox),
                chosen_anchor: Some(placed.chosen),
                confidence: Some(placed.confidences[placed.chosen]),
                outside_canvas: comp.outside_canvas,
                width: comp.image.width(),
                height: comp.image.height(),
            };
            (comp.image, decision)
        }
    };
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
        cfg.echo(parent)?;
    }
    image.save(out).map_err(sticker_core::Error::from)?;
    let record_path = PathBuf::from(format!("{}.json", out.display()));
    fs::write(&record_path, serde_json::to_string_pretty(&decision)?)?;
    println!("{}", serde_json::to_string(&decision)?);
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, data: &Path, weights: Option<&Path>, methods: &[String], out: &Path) -> CliResult<()> {
    let ds = Dataset::load(data)?;
    let manifest = load_manifest(data)?;
    let test: Vec<&PlacementRecord> = manifest
        .filter(&ds.records, Split::Test)
        .into_iter()
        .filter(|r| r.usable_for_placement())
        .collect();
    let cases = eval_cases(&ds, &test)?;
    if cases.is_empty() {
        return Err(sticker_core::Error::Data("test split has no sticker-style records".into()).into());
    }

    let net = if methods.iter().any(|m| m == "model") {
        let w = weights.ok_or_else(|| CliError::Usage("method `model` needs --weights".into()))?;
        Some(PlacementNet::load(&w.join(PLACEMENT_WEIGHTS), cfg.placement())?)
    } else {
        None
    };
    let by_id: std::collections::BTreeMap<&str, &PlacementRecord> =
        test.iter().map(|r| (r.record_id.as_str(), *r)).collect();
    let mut list = Vec::new();
    for name in methods {
        list.push(match name.as_str() {
            "center" => Method::center(),
            "random" => Method::random(cfg.seed),
            "model" => {
                let net = net.as_ref().expect("loaded above");
                let ds = &ds;
                let by_id = &by_id;
                Method::new("model", move |c| {
                    let r = by_id[c.record_id.as_str()];
                    let host = net.prepare_host(ds.host(r)?, ds.fg_mask(r)?)?;
                    Ok(net.predict(&host, &net.prepare_sticker(ds.sticker(r)?)?)?.bbox)
                })
            }
            other => return Err(CliError::Usage(format!("unknown method `{other}`; expected model, center or random"))),
        });
    }
    if list.is_empty() {
        return Err(CliError::Usage("--methods is empty".into()));
    }

    let report = evaluate(&list, &cases, &fingerprint(&cfg.to_toml()))?;
    print!("{}", report.table());
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
        cfg.echo(parent)?;
    }
    let mut w = BufWriter::new(File::create(out)?);
    report.write_jsonl(&mut w)?;
    w.flush()?;

    if let (Some(w), true) = (weights, methods.iter().any(|m| m == "model")) {
        if w.join(CLASSIFIER_WEIGHTS).exists() {
            let model = TypeClassifier::load(&w.join(CLASSIFIER_WEIGHTS), cfg.classifier())?;
            let all_test = manifest.filter(&ds.records, Split::Test);
            println!("type accuracy {:.4}", type_accuracy(&model, &ds, &all_test)?);
        }
    }
    Ok(())
}

/// Effective config: `--config` if given, else the weights directory's echo
/// (so the architecture matches saved weights), else defaults; then `--set`
/// overrides, then the dedicated flags.
fn resolve_config(cli: &Cli) -> CliResult<RunConfig> {
    let weights_echo = match &cli.command {
        Command::Compose { weights: Some(w), .. } | Command::Eval { weights: Some(w), .. } => Some(w.join(CONFIG_FILE)),
        Command::Train { resume: Some(w), .. } => Some(w.join(CONFIG_FILE)),
        _ => None,
    };
    let mut cfg = match (&cli.config, weights_echo) {
        (Some(p), _) => RunConfig::load(p).map_err(CliError::Usage)?,
        (None, Some(p)) if p.exists() => RunConfig::load(&p).map_err(CliError::Usage)?,
        _ => RunConfig::default(),
    };
    cfg = cfg.with_overrides(&cli.overrides).map_err(CliError::Usage)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Command::Generate { n: Some(n), .. } = &cli.command {
        cfg.n = *n;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = resolve_config(&cli)?;
    match cli.command {
        Command::Generate { out, .. } => cmd_generate(&cfg, &out),
        Command::Train { stage, data, out, resume } => {
            let data = required(data, &cfg.data_dir, "data")?;
            cmd_train(&cfg, stage, &data, &out, resume.as_deref())
        }
        Command::Compose { host, sticker, mask, weights, out, force_style } => {
            let weights = weights.or_else(|| cfg.weights_dir.as_ref().map(PathBuf::from));
            cmd_compose(&cfg, &host, &sticker, mask.as_deref(), weights.as_deref(), &out, force_style)
        }
        Command::Eval { data, weights, methods, out } => {
            let data = required(data, &cfg.data_dir, "data")?;
            let weights = weights.or_else(|| cfg.weights_dir.as_ref().map(PathBuf::from));
            cmd_eval(&cfg, &data, weights.as_deref(), &methods, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
