//! The `ucl` subcommands as library functions.
//!
//! A run directory holds:
//!
//! ```text
//! <out>/config.json
//! <out>/data/<domain>/{manifest.jsonl, images/}
//! <out>/pretrain/{encoder.ckpt, report.json, loss.csv}
//! <out>/probe/{probe.ckpt, report.json, loss.csv}
//! <out>/eval/{<domain>.json, <domain>_roc.csv, roc.svg}
//! <out>/ablate/<grid>.{csv,txt}
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::augmentation::AugmentationPolicy;
use crate::checkpoint::{
    encoder_checkpoint, file_hash, load_encoder, load_probe, probe_checkpoint,
};
use crate::config::RunConfig;
use crate::contrastive::Denominator;
use crate::dataset::{
    dataset_checksum, generate_synthetic_domain, labels, load_dataset, prepare_inputs,
    save_dataset, split, unlabeled, ImageSample, Label, MANIFEST_FILE,
};
use crate::error::{Error, Result};
use crate::metrics::{accuracy, auc, roc_curve, EvalReport, RocCurve};
use crate::model::{Encoder, ProjectionHead};
use crate::plot::roc_svg;
use crate::training::{
    extract_features, pretrain, train_probe, FeatureSource, ProbeModel, Standardizer, TrainReport,
};

/// Standard file locations under a run directory.
#[derive(Clone, Debug)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn data(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn encoder(&self) -> PathBuf {
        self.root.join("pretrain").join("encoder.ckpt")
    }

    pub fn probe(&self) -> PathBuf {
        self.root.join("probe").join("probe.ckpt")
    }

    pub fn eval(&self) -> PathBuf {
        self.root.join("eval")
    }

    pub fn ablate(&self) -> PathBuf {
        self.root.join("ablate")
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn refuse_overwrite(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::invalid(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        )));
    }
    Ok(())
}

/// Writes the resolved configuration next to the run outputs.
pub fn persist_config(run: &RunDir, config: &RunConfig) -> Result<()> {
    write(&run.config(), config.to_json() + "\n")
}

#[derive(Clone, Debug, Serialize)]
pub struct GeneratedDomain {
    pub name: String,
    pub dir: PathBuf,
    pub samples: usize,
    pub checksum: String,
}

/// Renders every synthetic domain into `<data_root>/<name>`.
pub fn gen_data(config: &RunConfig, data_root: &Path, force: bool) -> Result<Vec<GeneratedDomain>> {
    if config.data.domains.is_empty() {
        return Err(Error::config(
            "data.domains",
            "no synthetic domains to generate",
        ));
    }
    let mut out = Vec::new();
    for spec in &config.data.domains {
        let dir = data_root.join(&spec.name);
        if dir.exists() {
            if !force {
                return Err(Error::invalid(format!(
                    "{} already exists; pass --force to regenerate",
                    dir.display()
                )));
            }
            std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        let samples = generate_synthetic_domain(spec);
        save_dataset(&dir, &samples)?;
        write(
            &dir.join("domain.json"),
            serde_json::to_string_pretty(spec).expect("spec serializes") + "\n",
        )?;
        out.push(GeneratedDomain {
            name: spec.name.clone(),
            dir,
            samples: samples.len(),
            checksum: dataset_checksum(&samples),
        });
    }
    Ok(out)
}

/// All samples of one domain, face-cropped or resized to the encoder size.
pub fn load_domain(config: &RunConfig, data_root: &Path, name: &str) -> Result<Vec<ImageSample>> {
    let dir = if config.data.domains.iter().any(|d| d.name == name) {
        data_root.join(name)
    } else if let Some(d) = config.data.datasets.iter().find(|d| d.name == name) {
        d.path.clone()
    } else {
        return Err(Error::config(
            "data",
            format!("`{name}` is not a configured domain"),
        ));
    };
    if !dir.join(MANIFEST_FILE).exists() {
        return Err(Error::io(
            dir.join(MANIFEST_FILE),
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "dataset not found (run gen-data first?)",
            ),
        ));
    }
    let samples = load_dataset(&dir)?;
    if samples.is_empty() {
        return Err(Error::invalid(format!(
            "domain `{name}` at {} is empty",
            dir.display()
        )));
    }
    prepare_inputs(&samples, config.encoder.input_size)
}

/// Train and test partitions of one domain.
pub fn domain_split(
    config: &RunConfig,
    data_root: &Path,
    name: &str,
) -> Result<(Vec<ImageSample>, Vec<ImageSample>)> {
    Ok(split(
        &load_domain(config, data_root, name)?,
        &config.data.split,
    ))
}

fn log_every(kind: &'static str, total: usize) -> impl FnMut(&crate::training::EpochRecord) {
    let every = (total / 10).max(1);
    move |r| {
        if r.epoch % every == 0 || r.epoch + 1 == total {
            eprintln!(
                "{kind} epoch {:>4}/{total}  loss {:.5}  lr {:.3e}",
                r.epoch + 1,
                r.loss,
                r.lr
            );
        }
    }
}

fn write_report(dir: &Path, report: &TrainReport) -> Result<()> {
    write(&dir.join("report.json"), report.to_json() + "\n")?;
    write(&dir.join("loss.csv"), report.to_csv())
}

/// Contrastive pretraining on the unlabeled training split of the train
/// domain.
pub fn run_pretrain(
    config: &RunConfig,
    train: &[ImageSample],
) -> Result<(Encoder, ProjectionHead, TrainReport)> {
    let spec = config.pretrain_spec();
    let p = pretrain(
        &unlabeled(train),
        &spec,
        log_every("pretrain", spec.sgd.epochs),
    )?;
    let mut report = p.report;
    report.config_hash = config.hash();
    Ok((p.encoder, p.head, report))
}

pub fn cmd_pretrain(
    config: &RunConfig,
    data_root: &Path,
    out: &Path,
    force: bool,
) -> Result<TrainReport> {
    refuse_overwrite(out, force)?;
    let (train, _) = domain_split(config, data_root, &config.data.train_domain)?;
    let (encoder, head, report) = run_pretrain(config, &train)?;
    if let Some(dir) = out.parent() {
        create_dir(dir)?;
    }
    encoder_checkpoint(&encoder, &head, &config.hash(), config.seed).save(out)?;
    write_report(out.parent().unwrap_or(Path::new(".")), &report)?;
    Ok(report)
}

/// Probe training on frozen features of the labelled training split.
pub fn run_probe(
    config: &RunConfig,
    encoder: &Encoder,
    head: &ProjectionHead,
    encoder_hash: &str,
    source: FeatureSource,
    train: &[ImageSample],
) -> Result<(ProbeModel, TrainReport)> {
    let mut features = extract_features(encoder, head, source, &unlabeled(train))?;
    let standardizer = if config.probe.standardize {
        let s = Standardizer::fit(&features)?;
        features = s.apply(&features)?;
        Some(s)
    } else {
        None
    };
    let sgd = &config.probe.sgd;
    let probe = train_probe(
        &features,
        &labels(train),
        &config.probe.classifier,
        sgd,
        config.seed,
        log_every("probe", sgd.epochs),
    )?;
    let mut report = probe.report;
    report.config_hash = config.hash();
    Ok((
        ProbeModel {
            classifier: probe.classifier,
            standardizer,
            feature_source: source,
            encoder_hash: encoder_hash.to_string(),
        },
        report,
    ))
}

pub fn cmd_probe(
    config: &RunConfig,
    encoder_path: &Path,
    data_root: &Path,
    out: &Path,
    force: bool,
) -> Result<TrainReport> {
    refuse_overwrite(out, force)?;
    let (encoder, head, _) = load_encoder(encoder_path)?;
    check_encoder_matches(config, &encoder, encoder_path)?;
    let hash = file_hash(encoder_path)?;
    let (train, _) = domain_split(config, data_root, &config.data.train_domain)?;
    let (model, report) = run_probe(
        config,
        &encoder,
        &head,
        &hash,
        config.probe.feature_source,
        &train,
    )?;
    if let Some(dir) = out.parent() {
        create_dir(dir)?;
    }
    probe_checkpoint(&model, &config.hash(), config.seed).save(out)?;
    write_report(out.parent().unwrap_or(Path::new(".")), &report)?;
    Ok(report)
}

fn check_encoder_matches(config: &RunConfig, encoder: &Encoder, path: &Path) -> Result<()> {
    if encoder.config.input_size != config.encoder.input_size {
        return Err(Error::Checkpoint {
            path: path.to_path_buf(),
            message: format!(
                "encoder expects {} px inputs but the config prepares {} px",
                encoder.config.input_size, config.encoder.input_size
            ),
        });
    }
    Ok(())
}

/// Scores one test set.
pub fn evaluate(
    model: &ProbeModel,
    encoder: &Encoder,
    head: &ProjectionHead,
    test: &[ImageSample],
) -> Result<(Vec<f64>, Vec<Label>)> {
    let features = extract_features(encoder, head, model.feature_source, &unlabeled(test))?;
    Ok((model.scores(&features)?, labels(test)))
}

fn eval_report(
    config: &RunConfig,
    test_domain: &str,
    scores: &[f64],
    truth: &[Label],
    source: FeatureSource,
    checkpoint_hash: &str,
) -> Result<(EvalReport, RocCurve)> {
    let roc = roc_curve(scores, truth)?;
    let report = EvalReport {
        train_domain: config.data.train_domain.clone(),
        test_domain: test_domain.to_string(),
        auc: auc(scores, truth)?,
        accuracy: accuracy(scores, truth, 0.5)?,
        n_real: truth.iter().filter(|&&l| l == Label::Real).count(),
        n_fake: truth.iter().filter(|&&l| l == Label::Fake).count(),
        feature_source: source.as_str().to_string(),
        checkpoint_hash: checkpoint_hash.to_string(),
        config_hash: config.hash(),
    };
    Ok((report, roc))
}

/// Combined hash of the encoder and probe checkpoint files.
fn pair_hash(encoder_hash: &str, probe_hash: &str) -> String {
    hex::encode(Sha256::digest(
        format!("{encoder_hash}:{probe_hash}").as_bytes(),
    ))
}

/// Evaluates on the test split of every configured test domain, writing one
/// report and ROC CSV per domain plus an SVG overlay.
pub fn cmd_eval(
    config: &RunConfig,
    encoder_path: &Path,
    probe_path: &Path,
    data_root: &Path,
    out_dir: &Path,
) -> Result<Vec<EvalReport>> {
    let (encoder, head, _) = load_encoder(encoder_path)?;
    check_encoder_matches(config, &encoder, encoder_path)?;
    let (model, _) = load_probe(probe_path)?;
    let encoder_hash = file_hash(encoder_path)?;
    if model.encoder_hash != encoder_hash {
        return Err(Error::Checkpoint {
            path: probe_path.to_path_buf(),
            message: format!(
                "probe was trained on a different encoder than {}",
                encoder_path.display()
            ),
        });
    }
    let checkpoint_hash = pair_hash(&encoder_hash, &file_hash(probe_path)?);
    create_dir(out_dir)?;
    let mut reports = Vec::new();
    let mut curves = Vec::new();
    for domain in config.test_domains() {
        let (_, test) = domain_split(config, data_root, &domain)?;
        let (scores, truth) = evaluate(&model, &encoder, &head, &test)?;
        let (report, roc) = eval_report(
            config,
            &domain,
            &scores,
            &truth,
            model.feature_source,
            &checkpoint_hash,
        )?;
        write(
            &out_dir.join(format!("{domain}.json")),
            report.to_json() + "\n",
        )?;
        write(&out_dir.join(format!("{domain}_roc.csv")), roc.to_csv())?;
        curves.push((format!("{domain} (AUC {:.3})", report.auc), roc));
        reports.push(report);
    }
    let title = format!(
        "trained on {} · config {}",
        config.data.train_domain,
        config.hash()
    );
    write(&out_dir.join("roc.svg"), roc_svg(&title, &curves))?;
    Ok(reports)
}

/// Renders ROC CSV files into one SVG.
pub fn cmd_roc(inputs: &[PathBuf], out: &Path, title: &str) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::invalid("no ROC CSV files given"));
    }
    let mut curves = Vec::new();
    for path in inputs {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let curve = RocCurve::from_csv(&text)?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().trim_end_matches("_roc").to_string());
        let label = label.unwrap_or_default();
        curves.push((format!("{label} (AUC {:.3})", curve.area()), curve));
    }
    write(out, roc_svg(title, &curves))
}

/// Which knob an ablation sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Grid {
    AugmentationRows,
    FeatureSource,
    Denominator,
}

impl Grid {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "augmentation-rows" => Ok(Grid::AugmentationRows),
            "feature-source" => Ok(Grid::FeatureSource),
            "denominator" => Ok(Grid::Denominator),
            other => Err(Error::invalid(format!(
                "unknown grid `{other}` (expected augmentation-rows, feature-source or denominator)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Grid::AugmentationRows => "augmentation-rows",
            Grid::FeatureSource => "feature-source",
            Grid::Denominator => "denominator",
        }
    }
}

/// One grid cell: pretraining settings and the probe's feature source.
#[derive(Clone, Debug)]
pub struct Cell {
    pub label: String,
    pub policy: AugmentationPolicy,
    pub denominator: Denominator,
    pub source: FeatureSource,
}

pub fn grid_cells(config: &RunConfig, grid: Grid) -> Result<Vec<Cell>> {
    let base = Cell {
        label: String::new(),
        policy: config.augmentation.clone(),
        denominator: config.pretrain.denominator,
        source: config.probe.feature_source,
    };
    Ok(match grid {
        Grid::AugmentationRows => (1..=3)
            .map(|row| {
                let policy = AugmentationPolicy::ablation_row(row)?
                    .with_output_size(config.encoder.input_size);
                Ok(Cell {
                    label: policy.enabled().join("+"),
                    policy,
                    ..base.clone()
                })
            })
            .collect::<Result<_>>()?,
        Grid::FeatureSource => [FeatureSource::Encoder, FeatureSource::ProjectionHead]
            .into_iter()
            .map(|source| Cell {
                label: source.as_str().to_string(),
                source,
                ..base.clone()
            })
            .collect(),
        Grid::Denominator => [Denominator::ExcludeSelf, Denominator::Literal]
            .into_iter()
            .map(|d| Cell {
                label: match d {
                    Denominator::ExcludeSelf => "exclude_self".to_string(),
                    Denominator::Literal => "literal".to_string(),
                },
                denominator: d,
                ..base.clone()
            })
            .collect(),
    })
}

/// AUC per test domain for every (cell, seed).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationTable {
    pub grid: String,
    pub domains: Vec<String>,
    pub rows: Vec<AblationRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub label: String,
    pub seed: u64,
    pub auc: Vec<f64>,
}

impl AblationTable {
    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.label) {
                out.push(r.label.clone());
            }
        }
        out
    }

    /// Mean AUC per domain over the seeds of `label`.
    pub fn mean(&self, label: &str) -> Vec<f64> {
        let rows: Vec<&AblationRow> = self.rows.iter().filter(|r| r.label == label).collect();
        (0..self.domains.len())
            .map(|j| rows.iter().map(|r| r.auc[j]).sum::<f64>() / rows.len().max(1) as f64)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("label,seed,{}\n", self.domains.join(","));
        for r in &self.rows {
            let cells: Vec<String> = r.auc.iter().map(|a| format!("{a:.6}")).collect();
            writeln!(s, "{},{},{}", r.label, r.seed, cells.join(",")).unwrap();
        }
        s
    }

    /// Seed-averaged AUCs as an aligned table.
    pub fn to_text(&self) -> String {
        let labels = self.labels();
        let width = labels
            .iter()
            .map(String::len)
            .chain([self.grid.len()])
            .max()
            .unwrap_or(0);
        let col = self
            .domains
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max(6);
        let mut s = format!("{:<width$}", self.grid);
        for d in &self.domains {
            write!(s, "  {d:>col$}").unwrap();
        }
        s.push('\n');
        for l in labels {
            write!(s, "{l:<width$}").unwrap();
            for a in self.mean(&l) {
                write!(s, "  {a:>col$.4}").unwrap();
            }
            s.push('\n');
        }
        s
    }
}

/// Pretraining result reused across cells with identical pretraining
/// settings, stored as `<cache>/<hash>.ckpt`.
fn cached_pretrain(
    config: &RunConfig,
    train: &[ImageSample],
    cache: &Path,
) -> Result<(Encoder, ProjectionHead, String)> {
    let key = {
        let v = serde_json::json!({
            "data": config.data,
            "augmentation": config.augmentation,
            "encoder": config.encoder,
            "pretrain": config.pretrain,
            "seed": config.seed,
        });
        hex::encode(Sha256::digest(v.to_string().as_bytes()))[..16].to_string()
    };
    let path = cache.join(format!("{key}.ckpt"));
    if !path.exists() {
        let (encoder, head, report) = run_pretrain(config, train)?;
        create_dir(cache)?;
        encoder_checkpoint(&encoder, &head, &config.hash(), config.seed).save(&path)?;
        write(&cache.join(format!("{key}.json")), report.to_json() + "\n")?;
    }
    let (encoder, head, _) = load_encoder(&path)?;
    Ok((encoder, head, file_hash(&path)?))
}

/// Runs every cell of `grid` for each configured ablation seed and writes
/// `<out_dir>/<grid>.csv` and `.txt`. Each cell also gets eval reports under
/// `<out_dir>/<grid>/<label>/seed<k>/`.
/// Runs every cell of `grid` (or only those labelled in `only`) for each
/// ablation seed.
pub fn cmd_ablate(
    config: &RunConfig,
    grid: Grid,
    only: &[String],
    data_root: &Path,
    out_dir: &Path,
) -> Result<AblationTable> {
    let mut cells = grid_cells(config, grid)?;
    if !only.is_empty() {
        if let Some(bad) = only.iter().find(|l| !cells.iter().any(|c| &c.label == *l)) {
            let known: Vec<&str> = cells.iter().map(|c| c.label.as_str()).collect();
            return Err(Error::invalid(format!(
                "grid {} has no cell `{bad}` (cells: {})",
                grid.as_str(),
                known.join(", ")
            )));
        }
        cells.retain(|c| only.contains(&c.label));
    }
    let domains = config.test_domains();
    let (train, _) = domain_split(config, data_root, &config.data.train_domain)?;
    let mut tests = Vec::new();
    for d in &domains {
        tests.push(domain_split(config, data_root, d)?.1);
    }
    let cache = out_dir.join("cache");
    let mut rows = Vec::new();
    for cell in cells {
        for seed in config.ablation_seeds() {
            eprintln!("ablate {}: {} seed {seed}", grid.as_str(), cell.label);
            let mut c = config.clone();
            c.seed = seed;
            c.augmentation = cell.policy.clone();
            c.pretrain.denominator = cell.denominator;
            c.probe.feature_source = cell.source;
            let (encoder, head, enc_hash) = cached_pretrain(&c, &train, &cache)?;
            let (model, _) = run_probe(&c, &encoder, &head, &enc_hash, cell.source, &train)?;
            let cell_dir = out_dir
                .join(grid.as_str())
                .join(&cell.label)
                .join(format!("seed{seed}"));
            let mut aucs = Vec::new();
            for (d, test) in domains.iter().zip(&tests) {
                let (scores, truth) = evaluate(&model, &encoder, &head, test)?;
                let (report, roc) = eval_report(&c, d, &scores, &truth, cell.source, &enc_hash)?;
                write(&cell_dir.join(format!("{d}.json")), report.to_json() + "\n")?;
                write(&cell_dir.join(format!("{d}_roc.csv")), roc.to_csv())?;
                aucs.push(report.auc);
            }
            rows.push(AblationRow {
                label: cell.label.clone(),
                seed,
                auc: aucs,
            });
        }
    }
    let table = AblationTable {
        grid: grid.as_str().to_string(),
        domains,
        rows,
    };
    write(
        &out_dir.join(format!("{}.csv", grid.as_str())),
        table.to_csv(),
    )?;
    write(
        &out_dir.join(format!("{}.txt", grid.as_str())),
        table.to_text(),
    )?;
    Ok(table)
}
