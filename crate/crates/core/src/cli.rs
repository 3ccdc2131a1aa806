//! Pipeline orchestration behind the `kinvec` binary.
//!
//! One TOML file describes the whole sweep (corpora, hyperparameters,
//! lexicon, ranks, projection settings); each subcommand reads it and
//! accepts a few overriding flags. Exit statuses: 0 success, 2 usage or
//! configuration error, 3 data error, 4 partial analysis.

use std::collections::HashSet;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Deserialize;

use crate::corpus::{self, NormalizationConfig, ProbeFilter, TokenizeMode, Vocabulary};
use crate::embedding::{
    self, concatenate_models, CorpusFile, EmbeddingModel, EnsembleMember, Hyperparams, VectorTable,
};
use crate::kinship::{self, ComponentialAnnotation, Lexicon};
use crate::project::{self, MarkerTrait, Projection2D, TsneConfig};
use crate::regress::{self, RegressionReport};
use crate::semspace::{self, CohesionReport, CountSet};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_PARTIAL: i32 = 4;

/// Environment variable holding the default config path.
pub const CONFIG_ENV: &str = "KINVEC_CONFIG";

pub const REPORT_FILE: &str = "report.txt";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Config(_) => EXIT_CONFIG,
            Self::Data(_) => EXIT_DATA,
        }
    }
}

macro_rules! data_error_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self::Data(e.to_string())
            }
        }
    )*};
}

data_error_from!(
    corpus::CorpusError,
    embedding::EmbeddingError,
    kinship::KinshipError,
    project::ProjectError,
    regress::RegressError,
    semspace::SemspaceError
);

pub type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub id: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizationSettings {
    pub mask_token: String,
    /// One proper name per line.
    pub names: Option<PathBuf>,
    pub heuristic: bool,
}

impl Default for NormalizationSettings {
    fn default() -> Self {
        Self {
            mask_token: "NAM".into(),
            names: None,
            heuristic: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(rename = "corpus")]
    pub corpora: Vec<CorpusSpec>,
    /// `raw` or `pretokenized`.
    pub tokenize: String,
    pub normalization: NormalizationSettings,
    pub hyperparams: Hyperparams,
    pub ensemble_size: usize,
    /// L2-normalize each member before concatenation.
    pub normalize_members: bool,
    /// Lexicon TSV; the bundled one when absent.
    pub lexicon: Option<PathBuf>,
    /// Extended family token list; the bundled one when absent.
    pub extended_set: Option<PathBuf>,
    /// Probe frequency threshold; defaults to `hyperparams.min_count`.
    pub probe_threshold: Option<u64>,
    pub cohesion_ranks: Vec<usize>,
    pub tsne: TsneConfig,
    pub output_dir: PathBuf,
    /// Also build and analyze one model over all corpora.
    pub global: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            corpora: Vec::new(),
            tokenize: "raw".into(),
            normalization: NormalizationSettings::default(),
            hyperparams: Hyperparams::default(),
            ensemble_size: 5,
            normalize_members: true,
            lexicon: None,
            extended_set: None,
            probe_threshold: None,
            cohesion_ranks: vec![10, 25],
            tsne: TsneConfig::default(),
            output_dir: PathBuf::from("out"),
            global: true,
        }
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id != "global"
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        && !id.starts_with('.')
}

impl PipelineConfig {
    /// Parses TOML; relative paths are resolved against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        for c in &mut cfg.corpora {
            rebase(&mut c.path);
        }
        for p in [&mut cfg.lexicon, &mut cfg.extended_set, &mut cfg.normalization.names]
            .into_iter()
            .flatten()
        {
            rebase(p);
        }
        rebase(&mut cfg.output_dir);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    /// Settings checks that do not touch the file system.
    pub fn check_settings(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.ensemble_size == 0 {
            return bad("ensemble_size must be at least 1".into());
        }
        if self.cohesion_ranks.is_empty() || self.cohesion_ranks.contains(&0) {
            return bad("cohesion_ranks must be nonempty positive integers".into());
        }
        if self.probe_threshold == Some(0) {
            return bad("probe_threshold must be positive".into());
        }
        self.tokenize_mode()?;
        self.hyperparams
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let mut seen = HashSet::new();
        for c in &self.corpora {
            if !valid_id(&c.id) {
                return bad(format!("corpus id `{}` must be [A-Za-z0-9_.-]+ and not `global`", c.id));
            }
            if !seen.insert(&c.id) {
                return bad(format!("duplicate corpus id `{}`", c.id));
            }
        }
        Ok(())
    }

    /// Full validation before training: settings plus every input path.
    pub fn validate_for_training(&self) -> Result<()> {
        self.check_settings()?;
        if self.corpora.is_empty() {
            return Err(CliError::Config("no [[corpus]] entries".into()));
        }
        let mut inputs: Vec<&Path> = self.corpora.iter().map(|c| c.path.as_path()).collect();
        inputs.extend(self.lexicon.as_deref());
        inputs.extend(self.extended_set.as_deref());
        inputs.extend(self.normalization.names.as_deref());
        let missing: Vec<String> = inputs
            .iter()
            .filter(|p| !p.is_file())
            .map(|p| p.display().to_string())
            .collect();
        if !missing.is_empty() {
            return Err(CliError::Config(format!("missing input files: {}", missing.join(", "))));
        }
        Ok(())
    }

    pub fn tokenize_mode(&self) -> Result<TokenizeMode> {
        self.tokenize
            .parse()
            .map_err(|e: corpus::CorpusError| CliError::Config(e.to_string()))
    }

    pub fn normalization_config(&self) -> Result<NormalizationConfig> {
        let lexicon = match &self.normalization.names {
            Some(p) => Some(corpus::load_name_lexicon(p).map_err(|e| CliError::Config(e.to_string()))?),
            None => None,
        };
        let cfg = NormalizationConfig {
            mask_token: self.normalization.mask_token.clone(),
            proper_name_lexicon: lexicon,
            heuristic: self.normalization.heuristic,
        };
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn lexicon(&self) -> Result<Lexicon> {
        match &self.lexicon {
            None => Ok(Lexicon::bundled()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
                Ok(Lexicon::parse(&text)?)
            }
        }
    }

    pub fn extended_tokens(&self) -> Result<Vec<String>> {
        match &self.extended_set {
            None => Ok(kinship::bundled_extended_set()),
            Some(p) => Ok(kinship::parse_token_list(
                &fs::read_to_string(p).map_err(|e| io_err(p, e))?,
            )),
        }
    }

    pub fn probe_threshold(&self) -> u64 {
        self.probe_threshold.unwrap_or(self.hyperparams.min_count)
    }

    pub fn member_seeds(&self) -> Vec<u64> {
        (0..self.ensemble_size as u64)
            .map(|i| self.hyperparams.seed.wrapping_add(i))
            .collect()
    }

    pub fn corpus_dir(&self, id: &str) -> PathBuf {
        self.output_dir.join("models").join(id)
    }

    pub fn member_path(&self, id: &str, seed: u64) -> PathBuf {
        self.corpus_dir(id).join(format!("seed-{seed}.vec"))
    }

    pub fn ensemble_path(&self, id: &str) -> PathBuf {
        self.corpus_dir(id).join("ensemble.vec")
    }

    pub fn vocab_path(&self, id: &str) -> PathBuf {
        self.corpus_dir(id).join("vocab.tsv")
    }

    pub fn global_path(&self) -> PathBuf {
        self.output_dir.join("models").join("global.vec")
    }

    /// Whether a global model is built: toggle on and more than one corpus.
    pub fn has_global(&self) -> bool {
        self.global && self.corpora.len() > 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub written: Vec<PathBuf>,
    pub probe_filter: ProbeFilter,
    /// `(corpus, seed, per-epoch mean loss)`.
    pub losses: Vec<(String, u64, Vec<f64>)>,
}

/// Trains `ensemble_size` models per corpus, writes each member, the
/// per-corpus ensemble, the vocabulary, the optional global model, the
/// probe filter report and a per-epoch loss log.
pub fn cmd_train(cfg: &PipelineConfig) -> Result<TrainOutcome> {
    cfg.validate_for_training()?;
    let mode = cfg.tokenize_mode()?;
    let norm = cfg.normalization_config()?;
    let lexicon = cfg.lexicon()?;

    let vocabs: Vec<Arc<Vocabulary>> = cfg
        .corpora
        .par_iter()
        .map(|c| {
            let counts = corpus::count_files(&[c.path.as_path()], mode, &norm)?;
            let vocab = Vocabulary::from_counts(&counts, cfg.hyperparams.min_count)?;
            log::info!("{}: {} tokens, {} types retained", c.id, counts.total(), vocab.len());
            Ok(Arc::new(vocab))
        })
        .collect::<Result<_>>()?;
    for (c, v) in cfg.corpora.iter().zip(&vocabs) {
        if v.is_empty() {
            return Err(CliError::Data(format!(
                "{}: no token reaches min_count {}",
                c.id, cfg.hyperparams.min_count
            )));
        }
    }

    let jobs: Vec<(usize, u64)> = (0..cfg.corpora.len())
        .flat_map(|ci| cfg.member_seeds().into_iter().map(move |s| (ci, s)))
        .collect();
    let models: Vec<EmbeddingModel> = jobs
        .par_iter()
        .map(|&(ci, seed)| {
            let c = &cfg.corpora[ci];
            let source = CorpusFile {
                path: c.path.clone(),
                mode,
                normalization: norm.clone(),
            };
            let hp = Hyperparams { seed, ..cfg.hyperparams.clone() };
            Ok(embedding::train_source(&source, &vocabs[ci], &hp, &c.id)?)
        })
        .collect::<Result<_>>()?;

    let mut written = Vec::new();
    let mut losses = Vec::new();
    let mut log_tsv = String::from("corpus\tseed\tepoch\tmean_loss\n");
    for ((ci, seed), model) in jobs.iter().zip(&models) {
        let id = &cfg.corpora[*ci].id;
        let path = cfg.member_path(id, *seed);
        save_table(&model.input, &path)?;
        written.push(path);
        for (e, l) in model.meta.epoch_losses.iter().enumerate() {
            let _ = writeln!(log_tsv, "{id}\t{seed}\t{}\t{l:.9}", e + 1);
        }
        losses.push((id.clone(), *seed, model.meta.epoch_losses.clone()));
    }

    let k = cfg.ensemble_size;
    for (ci, c) in cfg.corpora.iter().enumerate() {
        let members = &models[ci * k..(ci + 1) * k];
        let table = if k == 1 {
            members[0].input.clone()
        } else {
            let refs: Vec<&dyn EnsembleMember> = members.iter().map(|m| m as &dyn EnsembleMember).collect();
            concatenate_models(&refs, cfg.normalize_members)?.table
        };
        let path = cfg.ensemble_path(&c.id);
        save_table(&table, &path)?;
        written.push(path);

        let vpath = cfg.vocab_path(&c.id);
        let mut buf = Vec::new();
        vocabs[ci].write_tsv(&mut buf).map_err(|e| io_err(&vpath, e))?;
        write_file(&vpath, buf)?;
        written.push(vpath);
    }
    if cfg.has_global() {
        let refs: Vec<&dyn EnsembleMember> = models.iter().map(|m| m as &dyn EnsembleMember).collect();
        let global = concatenate_models(&refs, cfg.normalize_members)?;
        let path = cfg.global_path();
        save_table(&global.table, &path)?;
        written.push(path);
    }

    let named: Vec<(&str, &Vocabulary)> = cfg
        .corpora
        .iter()
        .zip(&vocabs)
        .map(|(c, v)| (c.id.as_str(), v.as_ref()))
        .collect();
    let probe_filter = corpus::filter_probes(&lexicon.terms(), &named, cfg.probe_threshold())?;
    let mut pf = String::from("probe\tcorpus\tcount\tstatus\n");
    for r in &probe_filter.rejections {
        let _ = writeln!(pf, "{}\t{}\t{}\trejected", r.probe, r.corpus, r.count);
    }
    for p in &probe_filter.retained {
        let _ = writeln!(pf, "{p}\t*\t-\tretained");
    }
    for r in &probe_filter.rejections {
        log::warn!("probe `{}` below threshold in {} ({})", r.probe, r.corpus, r.count);
    }
    let pf_path = cfg.output_dir.join("probe_filter.tsv");
    write_file(&pf_path, pf)?;
    written.push(pf_path);
    let log_path = cfg.output_dir.join("train_log.tsv");
    write_file(&log_path, log_tsv)?;
    written.push(log_path);

    Ok(TrainOutcome {
        written,
        probe_filter,
        losses,
    })
}

fn save_table(table: &VectorTable, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    table.save_text(path)?;
    Ok(())
}

pub fn load_table(path: &Path) -> Result<VectorTable> {
    if !path.is_file() {
        return Err(CliError::Data(format!("model file {} not found", path.display())));
    }
    Ok(VectorTable::load(path)?)
}

/// Everything `analyze` computes for one model.
#[derive(Debug, Clone)]
pub struct ModelAnalysis {
    pub model_id: String,
    pub dim: usize,
    pub vocab: usize,
    /// One report per rank: probe set first, then extended set.
    pub cohesion: Vec<(CohesionReport, CohesionReport)>,
    pub regression: RegressionReport,
    pub projection: Projection2D,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub lexicon: Lexicon,
    pub probes: Vec<String>,
    /// Probes absent from at least one model: `(probe, models)`.
    pub excluded: Vec<(String, Vec<String>)>,
    pub extended: Vec<String>,
    pub models: Vec<ModelAnalysis>,
}

impl Analysis {
    pub fn is_partial(&self) -> bool {
        !self.excluded.is_empty()
    }

    pub fn annotations(&self) -> Vec<ComponentialAnnotation> {
        self.lexicon.annotations()
    }
}

/// Model ids and files analyzed for `cfg`: one per corpus, plus global.
pub fn analysis_models(cfg: &PipelineConfig) -> Vec<(String, PathBuf)> {
    let mut out: Vec<(String, PathBuf)> = cfg
        .corpora
        .iter()
        .map(|c| (c.id.clone(), cfg.ensemble_path(&c.id)))
        .collect();
    if cfg.has_global() {
        out.push(("global".into(), cfg.global_path()));
    }
    out
}

/// Runs cohesion, regression and projection on already loaded tables.
pub fn analyze_tables(
    lexicon: &Lexicon,
    extended: &[String],
    tables: &[(String, VectorTable)],
    ranks: &[usize],
    tsne: &TsneConfig,
) -> Result<Analysis> {
    if tables.is_empty() {
        return Err(CliError::Config("nothing to analyze".into()));
    }
    let terms = lexicon.terms();
    let mut excluded = Vec::new();
    for t in &terms {
        let missing: Vec<String> = tables
            .iter()
            .filter(|(_, tab)| !tab.contains(t))
            .map(|(id, _)| id.clone())
            .collect();
        if !missing.is_empty() {
            log::warn!("probe `{t}` missing from {}; excluded", missing.join(", "));
            excluded.push((t.clone(), missing));
        }
    }
    let drop: HashSet<&str> = excluded.iter().map(|(t, _)| t.as_str()).collect();
    let keep: HashSet<&str> = terms
        .iter()
        .map(String::as_str)
        .filter(|t| !drop.contains(t))
        .collect();
    let lexicon = lexicon.retain_terms(&keep);
    let probes = lexicon.terms();
    if probes.len() < 2 {
        return Err(CliError::Data(format!("only {} probe(s) present in every model", probes.len())));
    }
    let annotations = lexicon.annotations();

    let models = tables
        .par_iter()
        .map(|(id, table)| {
            let cohesion = ranks
                .iter()
                .map(|&k| {
                    let own = semspace::cohesion_at_k(table, &probes, "probes", k, CountSet::Probes)?;
                    let ext = semspace::cohesion_at_k(
                        table,
                        &probes,
                        "probes",
                        k,
                        CountSet::Extended {
                            name: "extended",
                            extra: extended,
                        },
                    )?;
                    Ok((own, ext))
                })
                .collect::<Result<Vec<_>>>()?;
            let regression = regress::fit_similarity_model(&annotations, table, id)?;
            let dist = project::DistanceMatrix::from_table(table, &probes)?;
            let projection = project::tsne_fit(&dist, tsne)?;
            Ok(ModelAnalysis {
                model_id: id.clone(),
                dim: table.dim(),
                vocab: table.len(),
                cohesion,
                regression,
                projection,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Analysis {
        lexicon,
        probes,
        excluded,
        extended: extended.to_vec(),
        models,
    })
}

/// Loads the trained models named by `cfg` and analyzes them.
pub fn run_analysis(cfg: &PipelineConfig) -> Result<Analysis> {
    cfg.check_settings()?;
    let lexicon = cfg.lexicon()?;
    let extended = cfg.extended_tokens()?;
    let ids = analysis_models(cfg);
    if ids.is_empty() {
        return Err(CliError::Config("no [[corpus]] entries".into()));
    }
    let tables = ids
        .into_iter()
        .map(|(id, path)| Ok((id, load_table(&path)?)))
        .collect::<Result<Vec<_>>>()?;
    analyze_tables(&lexicon, &extended, &tables, &cfg.cohesion_ranks, &cfg.tsne)
}

#[derive(Debug, Clone)]
pub struct AnalyzeOutcome {
    pub analysis: Analysis,
    pub report: String,
    pub written: Vec<PathBuf>,
}

/// Analysis plus every artifact under `output_dir/analysis`.
pub fn cmd_analyze(cfg: &PipelineConfig) -> Result<AnalyzeOutcome> {
    let analysis = run_analysis(cfg)?;
    let report = render_report(&analysis);
    let dir = cfg.output_dir.join("analysis");
    let mut files: Vec<(PathBuf, String)> = vec![
        (dir.join(REPORT_FILE), report.clone()),
        (dir.join("lexicon.tsv"), kinship::annotation_table(&analysis.annotations())),
        (dir.join("pairs.tsv"), kinship::pair_table(&kinship::all_pairs(&analysis.annotations())?)),
        (dir.join("cohesion.tsv"), cohesion_tsv(&analysis)),
        (dir.join("linear_models.tsv"), regress::summary_table(&regressions(&analysis))),
        (dir.join("coefficients.tsv"), regress::coefficient_table(&regressions(&analysis))),
    ];
    let lex = analysis.annotations();
    for m in &analysis.models {
        for t in [MarkerTrait::Genre, MarkerTrait::Generation] {
            let markers = project::style_markers(&lex, t);
            let stem = format!("projection_{}_{t}", m.model_id);
            files.push((dir.join(format!("{stem}.tsv")), project::coordinates_tsv(&m.projection, &markers)));
            files.push((
                dir.join(format!("{stem}.svg")),
                project::render_svg(&m.projection, &markers, &format!("{} — {t}", m.model_id)),
            ));
        }
    }
    let mut written = Vec::new();
    for (path, contents) in files {
        write_file(&path, contents)?;
        written.push(path);
    }
    Ok(AnalyzeOutcome {
        analysis,
        report,
        written,
    })
}

fn regressions(a: &Analysis) -> Vec<RegressionReport> {
    a.models.iter().map(|m| m.regression.clone()).collect()
}

pub fn cohesion_tsv(a: &Analysis) -> String {
    let mut out = String::from("model\tk\tcount_set\tprobe\thits\tfraction\n");
    for m in &a.models {
        for (own, ext) in &m.cohesion {
            for (set, r) in [("probes", own), ("extended", ext)] {
                for p in &r.per_probe {
                    let _ = writeln!(out, "{}\t{}\t{set}\t{}\t{}\t{:.6}", m.model_id, r.k, p.probe, p.hits, p.fraction);
                }
                let _ = writeln!(out, "{}\t{}\t{set}\t*mean*\t-\t{:.6}", m.model_id, r.k, r.mean);
            }
        }
    }
    out
}

/// Plain-text table with left-aligned first column and right-aligned rest.
fn text_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let width = |s: &str| s.chars().count();
    let mut widths: Vec<usize> = header.iter().map(|h| width(h)).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(width(c));
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, c) in cells.iter().enumerate() {
            let pad = " ".repeat(widths[i] - width(c));
            if i == 0 {
                s.push_str(c);
                s.push_str(&pad);
            } else {
                s.push_str("  ");
                s.push_str(&pad);
                s.push_str(c);
            }
        }
        s.trim_end().to_owned() + "\n"
    };
    let mut out = line(header.to_vec());
    out.push_str(&line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect()));
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}

fn section(out: &mut String, title: &str) {
    let _ = write!(out, "\n{title}\n{}\n\n", "=".repeat(title.chars().count()));
}

/// Human-readable report; byte-identical for identical inputs.
pub fn render_report(a: &Analysis) -> String {
    let mut out = String::from("kinvec analysis report\n");
    let _ = writeln!(out, "probes analyzed: {}", a.probes.len());
    let _ = writeln!(out, "models: {}", a.models.iter().map(|m| m.model_id.as_str()).collect::<Vec<_>>().join(", "));
    if !a.excluded.is_empty() {
        out.push_str("excluded probes (absent from a model):\n");
        for (p, ms) in &a.excluded {
            let _ = writeln!(out, "  {p}: {}", ms.join(", "));
        }
    }

    section(&mut out, "Models");
    let rows: Vec<Vec<String>> = a
        .models
        .iter()
        .map(|m| vec![m.model_id.clone(), m.dim.to_string(), m.vocab.to_string()])
        .collect();
    out.push_str(&text_table(&["model", "dim", "vocabulary"], &rows));

    let annotations = a.annotations();
    section(&mut out, "Componential annotation");
    let rows: Vec<Vec<String>> = annotations
        .iter()
        .map(|x| {
            vec![
                x.term.clone(),
                x.genre.to_string(),
                kinship::decimal(x.ascendance),
                kinship::decimal(x.descendance),
                kinship::decimal(x.germanite),
                kinship::decimal(x.alliance),
            ]
        })
        .collect();
    out.push_str(&text_table(
        &["term", "genre", "ascendance", "descendance", "germanite", "alliance"],
        &rows,
    ));

    section(&mut out, "Pairwise trait differences");
    let pairs = kinship::all_pairs(&annotations).unwrap_or_default();
    let _ = writeln!(out, "N = {} pairs\n", pairs.len());
    let rows: Vec<Vec<String>> = pairs
        .iter()
        .map(|p| {
            let mut r = vec![format!("{} / {}", p.term_a, p.term_b)];
            r.extend(p.values().iter().map(|v| kinship::decimal(*v)));
            r
        })
        .collect();
    out.push_str(&text_table(
        &["pair", "genre", "ascendance", "descendance", "germanite", "alliance"],
        &rows,
    ));

    section(&mut out, "Neighbor cohesion");
    let mut header = vec!["model".to_owned()];
    let ranks: Vec<usize> = a.models.first().map(|m| m.cohesion.iter().map(|c| c.0.k).collect()).unwrap_or_default();
    for k in &ranks {
        header.push(format!("probes@{k}"));
        header.push(format!("extended@{k}"));
    }
    let rows: Vec<Vec<String>> = a
        .models
        .iter()
        .map(|m| {
            let mut r = vec![m.model_id.clone()];
            for (own, ext) in &m.cohesion {
                r.push(format!("{:.1}%", 100.0 * own.mean));
                r.push(format!("{:.1}%", 100.0 * ext.mean));
            }
            r
        })
        .collect();
    let hdr: Vec<&str> = header.iter().map(String::as_str).collect();
    out.push_str(&text_table(&hdr, &rows));

    for (ri, k) in ranks.iter().enumerate() {
        let reports: Vec<(&str, &CohesionReport)> = a
            .models
            .iter()
            .filter(|m| m.model_id != "global")
            .map(|m| (m.model_id.as_str(), &m.cohesion[ri].0))
            .collect();
        if let Ok(summary) = semspace::summarize(&reports) {
            let _ = writeln!(out, "\nper-term cohesion@{k} within the probe set (mean over corpora)\n");
            let rows: Vec<Vec<String>> = summary
                .per_term
                .iter()
                .map(|(t, v)| vec![t.clone(), format!("{:.1}%", 100.0 * v)])
                .collect();
            out.push_str(&text_table(&["term", "cohesion"], &rows));
            let _ = writeln!(out, "overall: {:.1}%", 100.0 * summary.overall);
        }
    }

    section(&mut out, "Linear models");
    let mut header = vec!["model", "adj. R2"];
    header.extend(kinship::TRAITS);
    let rows: Vec<Vec<String>> = a
        .models
        .iter()
        .map(|m| {
            let r = &m.regression;
            let mut row = vec![m.model_id.clone(), format!("{:.3}", r.fit.adj_r2)];
            for t in kinship::TRAITS {
                row.push(match r.ablation.as_ref().and_then(|x| x.importance(t)) {
                    Some(v) => format!("{v:.2}"),
                    None => "NA".into(),
                });
            }
            row
        })
        .collect();
    out.push_str(&text_table(&header, &rows));
    out.push_str("\nimportance: relative change in adjusted R2 when the trait is removed\n");

    for m in &a.models {
        let f = &m.regression.fit;
        let _ = writeln!(
            out,
            "\n{}: N = {}, R2 = {:.4}, adj. R2 = {:.4}, F({}, {}) = {:.3}, p = {:.3e}",
            m.model_id,
            f.n,
            f.r2,
            f.adj_r2,
            f.p,
            f.df(),
            f.f_stat,
            f.f_pvalue
        );
        let _ = writeln!(
            out,
            "all slopes negative: {}; all slopes significant at {}: {}\n",
            yes_no(m.regression.all_slopes_negative),
            regress::ALPHA,
            yes_no(m.regression.all_significant)
        );
        let rows: Vec<Vec<String>> = (0..f.names.len())
            .map(|i| {
                vec![
                    f.names[i].clone(),
                    format!("{:.6}", f.coefficients[i]),
                    format!("{:.6}", f.std_errors[i]),
                    format!("{:.3}", f.t_stats[i]),
                    format!("{:.3e}", f.p_values[i]),
                ]
            })
            .collect();
        out.push_str(&text_table(&["term", "estimate", "std. error", "t", "p"], &rows));
    }

    section(&mut out, "Projection");
    let rows: Vec<Vec<String>> = a
        .models
        .iter()
        .map(|m| {
            vec![
                m.model_id.clone(),
                format!("{:.6}", m.projection.kl_initial),
                format!("{:.6}", m.projection.kl_final),
            ]
        })
        .collect();
    out.push_str(&text_table(&["model", "KL initial", "KL final"], &rows));
    out
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

// ---------------------------------------------------------------------------
// command line

#[derive(Debug, Parser)]
#[command(name = "kinvec", version, about = "Distributional analysis of a kinship lexicon")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Overrides the training and projection seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run on a single worker thread.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Neighbor rank.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Vector file to query instead of the configured models.
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train per-corpus ensembles (and the global model).
    Train,
    /// Full analysis; writes the report and every table and plot.
    Analyze,
    /// Nearest neighbors of a word.
    Neighbors { word: String },
    /// Cohesion of the probe set at rank k.
    Cohesion,
    /// Componential annotation of the lexicon.
    Annotate,
    /// Trait differences for every pair of terms.
    Diffs,
    /// Regression of similarity on trait differences.
    Regress,
    /// 2-D t-SNE coordinates of the probes.
    Project {
        /// `genre` or `generation`.
        #[arg(long = "trait", default_value = "genre")]
        marker: String,
    },
    /// Print the analysis report without writing files.
    Report,
}

fn load_config(args: &GlobalArgs, required: bool) -> Result<PipelineConfig> {
    let mut cfg = match &args.config {
        Some(p) => PipelineConfig::load(p)?,
        None if required => {
            return Err(CliError::Usage(format!("--config (or {CONFIG_ENV}) is required")));
        }
        None => PipelineConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.hyperparams.seed = seed;
        cfg.tsne.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output_dir.clone_from(out);
    }
    Ok(cfg)
}

/// The table queried by single-model commands: `--model`, else the global
/// model, else the first corpus ensemble.
fn query_table(args: &GlobalArgs) -> Result<(String, VectorTable)> {
    if let Some(p) = &args.model {
        return Ok((p.display().to_string(), load_table(p)?));
    }
    let cfg = load_config(args, false)?;
    let (id, path) = analysis_models(&cfg)
        .pop()
        .ok_or_else(|| CliError::Usage("--model or a --config with corpora is required".into()))?;
    Ok((id, load_table(&path)?))
}

fn rank(args: &GlobalArgs, default: usize) -> Result<usize> {
    match args.k {
        Some(0) => Err(CliError::Usage("--k must be at least 1".into())),
        Some(k) => Ok(k),
        None => Ok(default),
    }
}

fn execute(cli: &Cli) -> Result<(String, i32)> {
    let args = &cli.global;
    let mut text = String::new();
    let mut status = EXIT_OK;
    match &cli.command {
        Command::Train => {
            let cfg = load_config(args, true)?;
            let o = cmd_train(&cfg)?;
            for p in &o.written {
                let _ = writeln!(text, "wrote {}", p.display());
            }
            let _ = writeln!(text, "probes retained: {}", o.probe_filter.retained.len());
        }
        Command::Analyze => {
            let cfg = load_config(args, true)?;
            let o = cmd_analyze(&cfg)?;
            for p in &o.written {
                let _ = writeln!(text, "wrote {}", p.display());
            }
            if o.analysis.is_partial() {
                let _ = writeln!(text, "partial analysis: {} probe(s) excluded", o.analysis.excluded.len());
                status = EXIT_PARTIAL;
            }
        }
        Command::Report => {
            let cfg = load_config(args, true)?;
            let a = run_analysis(&cfg)?;
            text = render_report(&a);
            if a.is_partial() {
                status = EXIT_PARTIAL;
            }
        }
        Command::Neighbors { word } => {
            let k = rank(args, 10)?;
            let (_, table) = query_table(args)?;
            text = semspace::nearest_neighbors(&table, word, k)?.to_tsv();
        }
        Command::Cohesion => {
            let k = rank(args, 10)?;
            let cfg = load_config(args, false)?;
            let (_, table) = query_table(args)?;
            let probes: Vec<String> = cfg.lexicon()?.terms();
            let missing: Vec<&String> = probes.iter().filter(|p| !table.contains(p)).collect();
            if !missing.is_empty() {
                status = EXIT_PARTIAL;
                for p in &missing {
                    log::warn!("probe `{p}` not in model; excluded");
                }
            }
            let present: Vec<&String> = probes.iter().filter(|p| table.contains(p)).collect();
            let extended = cfg.extended_tokens()?;
            let own = semspace::cohesion_at_k(&table, &present, "probes", k, CountSet::Probes)?;
            let ext = semspace::cohesion_at_k(
                &table,
                &present,
                "probes",
                k,
                CountSet::Extended {
                    name: "extended",
                    extra: &extended,
                },
            )?;
            text.push_str("probe\tprobes\textended\n");
            for (a, b) in own.per_probe.iter().zip(&ext.per_probe) {
                let _ = writeln!(text, "{}\t{:.6}\t{:.6}", a.probe, a.fraction, b.fraction);
            }
            let _ = writeln!(text, "*mean*\t{:.6}\t{:.6}", own.mean, ext.mean);
        }
        Command::Annotate => {
            let cfg = load_config(args, false)?;
            text = cfg.lexicon()?.to_tsv();
        }
        Command::Diffs => {
            let cfg = load_config(args, false)?;
            text = kinship::pair_table(&kinship::all_pairs(&cfg.lexicon()?.annotations())?);
        }
        Command::Regress => {
            let cfg = load_config(args, false)?;
            let (id, table) = query_table(args)?;
            let r = regress::fit_similarity_model(&cfg.lexicon()?.annotations(), &table, &id)?;
            let reports = [r];
            text = regress::summary_table(&reports);
            text.push('\n');
            text.push_str(&regress::coefficient_table(&reports));
        }
        Command::Project { marker } => {
            let marker: MarkerTrait = marker
                .parse()
                .map_err(|e: project::ProjectError| CliError::Usage(e.to_string()))?;
            let cfg = load_config(args, false)?;
            let (id, table) = query_table(args)?;
            let lexicon = cfg.lexicon()?;
            let all_terms = lexicon.terms();
            let present: HashSet<&str> = all_terms
                .iter()
                .map(String::as_str)
                .filter(|t| table.contains(t))
                .collect();
            let lexicon = lexicon.retain_terms(&present);
            let terms = lexicon.terms();
            let proj = project::tsne_fit(&project::DistanceMatrix::from_table(&table, &terms)?, &cfg.tsne)?;
            let markers = project::style_markers(&lexicon.annotations(), marker);
            text = project::coordinates_tsv(&proj, &markers);
            if let Some(dir) = &args.out {
                let path = dir.join(format!("projection_{marker}.svg"));
                write_file(&path, project::render_svg(&proj, &markers, &format!("{id} — {marker}")))?;
            }
        }
    }
    Ok((text, status))
}

/// Parses `argv` and runs the command, returning the exit status.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    return EXIT_OK;
                }
                _ => EXIT_CONFIG,
            };
            let _ = write!(err, "{e}");
            return code;
        }
    };
    let result = if cli.global.deterministic {
        match rayon::ThreadPoolBuilder::new().num_threads(1).build() {
            Ok(pool) => pool.install(|| execute(&cli)),
            Err(e) => Err(CliError::Config(e.to_string())),
        }
    } else {
        execute(&cli)
    };
    match result {
        Ok((text, code)) => match out.write_all(text.as_bytes()) {
            Ok(()) => code,
            Err(e) => {
                let _ = writeln!(err, "kinvec: stdout: {e}");
                EXIT_DATA
            }
        },
        Err(e) => {
            let _ = writeln!(err, "kinvec: {e}");
            e.exit_code()
        }
    }
}
