//! Command-line front end: configuration layering, the end-to-end analysis
//! pipeline, and report rendering.
//!
//! Configuration is a JSON object with flat dotted keys such as
//! `"engine.step_rate": 0.4`. Layers apply in the order defaults, config
//! file, `NETRA_SEED`, command-line flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::dynamics::{AffinityCache, EngineConfig};
use crate::error::{Error, Result};
use crate::evolve::{evolve_loop, EvolveConfig};
use crate::harness::{self, improvement_gain, EvalReport, ModelKind, SynthConfig};
use crate::ingest::{load_dataset, Dataset, PreprocessConfig, Provenance};
use crate::persona::{
    prune_redundant, rank_candidate_variables, relabel, search_personas_detailed, validate_personas, Constraints, Persona,
    SearchSummary, DEFAULT_BOOTSTRAP, DEFAULT_MAX_OVERLAP,
};
use crate::scoring::PurityBce;
use crate::seed::{self, Stream};
use crate::strategist::{encode_tokens, format_p, AuditEvent, AuditLog, HeuristicStrategist, TokenContext};

pub const SEED_ENV: &str = "NETRA_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PersonaOptions {
    /// `None` means `max(8, ceil(n/20))`.
    pub min_size: Option<usize>,
    pub min_effect: f64,
    pub alpha: f64,
    pub max_vars: usize,
    pub top_n: usize,
    /// Clustering thresholds, relative to the initial diameter, used to
    /// rank candidate variables.
    pub resolutions: Vec<f64>,
    pub bootstrap: usize,
    /// Largest share of a persona's members that may already belong to a
    /// stronger persona; 1 keeps everything.
    pub max_overlap: f64,
}

impl Default for PersonaOptions {
    fn default() -> Self {
        PersonaOptions {
            min_size: None,
            min_effect: 0.2,
            alpha: 0.05,
            max_vars: 4,
            top_n: 20,
            resolutions: vec![0.0025, 0.005, 0.01],
            bootstrap: DEFAULT_BOOTSTRAP,
            max_overlap: DEFAULT_MAX_OVERLAP,
        }
    }
}

impl PersonaOptions {
    pub fn constraints(&self, n: usize) -> Constraints {
        let mut c = Constraints::for_n(n);
        if let Some(m) = self.min_size {
            c.min_size = m;
        }
        c.min_effect = self.min_effect;
        c.alpha = self.alpha;
        c.max_vars = self.max_vars;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessOptions {
    pub folds: usize,
    pub models: Vec<ModelKind>,
}

impl Default for HarnessOptions {
    fn default() -> Self {
        HarnessOptions {
            folds: 5,
            models: vec![ModelKind::Logistic, ModelKind::Knn],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataOptions {
    pub path: Option<PathBuf>,
    pub outcome: Option<String>,
    pub id_column: Option<String>,
    pub arm_column: Option<String>,
    pub response_column: Option<String>,
    pub exclude: Vec<String>,
    pub disease: String,
}

impl Default for DataOptions {
    fn default() -> Self {
        DataOptions {
            path: None,
            outcome: None,
            id_column: None,
            arm_column: None,
            response_column: None,
            exclude: Vec::new(),
            disease: "Cohort".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputOptions {
    pub dir: Option<PathBuf>,
    /// Defaults to `audit.log` in the output directory.
    pub audit: Option<PathBuf>,
}

/// Everything a run depends on. Embedded in every report, minus the
/// output locations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub engine: EngineConfig,
    pub evolve: EvolveConfig,
    pub persona: PersonaOptions,
    pub harness: HarnessOptions,
    pub data: DataOptions,
    pub output: OutputOptions,
}

fn flatten(prefix: &str, v: &Value, out: &mut BTreeMap<String, Value>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, x, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other.clone());
        }
    }
}

impl RunConfig {
    /// The config as flat dotted keys.
    pub fn to_flat(&self) -> BTreeMap<String, Value> {
        let mut out = BTreeMap::new();
        flatten("", &serde_json::to_value(self).expect("config serialises"), &mut out);
        out
    }

    /// Applies dotted-key overrides. Unknown keys and ill-typed values are
    /// errors naming the key.
    pub fn apply_flat(&mut self, flat: &Map<String, Value>) -> Result<()> {
        let mut tree = serde_json::to_value(&*self)?;
        for (key, value) in flat {
            let pointer = format!("/{}", key.replace('.', "/"));
            let slot = tree
                .pointer_mut(&pointer)
                .ok_or_else(|| Error::config(key.as_str(), "unknown configuration key"))?;
            if slot.is_object() {
                return Err(Error::config(key.as_str(), "names a section, not a value"));
            }
            *slot = value.clone();
            let probe: std::result::Result<RunConfig, _> = serde_json::from_value(tree.clone());
            if let Err(e) = probe {
                return Err(Error::config(key.as_str(), e.to_string()));
            }
        }
        *self = serde_json::from_value(tree)?;
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Map<String, Value>> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        match v {
            Value::Object(m) => Ok(m),
            _ => Err(Error::config(path.display().to_string(), "expected a JSON object")),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.engine.validate()?;
        self.evolve.validate()?;
        if self.persona.resolutions.is_empty() || self.persona.resolutions.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::config("persona.resolutions", "need positive thresholds"));
        }
        if self.persona.top_n < 2 {
            return Err(Error::config("persona.top_n", "must be at least 2"));
        }
        if self.harness.folds < 2 {
            return Err(Error::config("harness.folds", "must be at least 2"));
        }
        Ok(())
    }

    pub fn preprocess_config(&self) -> Result<PreprocessConfig> {
        let outcome = self
            .data
            .outcome
            .clone()
            .ok_or_else(|| Error::config("data.outcome", "outcome column is required"))?;
        let mut c = PreprocessConfig::new(outcome);
        c.id_column = self.data.id_column.clone();
        c.arm_column = self.data.arm_column.clone();
        c.response_column = self.data.response_column.clone();
        c.exclude = self.data.exclude.clone();
        Ok(c)
    }
}

/// One persona in a report, with its rendered forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaEntry {
    pub id: usize,
    #[serde(flatten)]
    pub persona: Persona,
    pub variables: Vec<String>,
    pub narrative: String,
    pub token: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub conditions: String,
    pub stability: Option<f64>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaReport {
    pub personas: Vec<PersonaEntry>,
    pub rejected: Vec<Rejection>,
    pub n: usize,
    pub coverage: f64,
    pub no_call_count: usize,
    pub no_call_fraction: f64,
    pub response_rate_overall: f64,
    pub candidates: Vec<String>,
    pub search: SearchSummary,
    pub evaluation: Option<EvalReport>,
    pub evaluation_note: Option<String>,
    pub config: BTreeMap<String, Value>,
    pub provenance: Provenance,
}

fn pct(x: f64) -> String {
    format!("{:.0}%", 100.0 * x)
}

/// The narrative paragraph of one persona.
pub fn narrative(k: usize, p: &Persona) -> String {
    let conds: Vec<String> = p.conditions.iter().map(|c| c.to_string()).collect();
    format!(
        "Persona {k}: ~{} of patients \u{2014} characterized by {}. This subgroup had a {} response rate versus {} overall (p = {}).",
        pct(p.coverage()),
        conds.join(" and "),
        pct(p.response_rate_in),
        pct(p.response_rate_overall),
        format_p(p.p_value)
    )
}

pub fn render_report(report: &PersonaReport) -> String {
    let mut s = String::new();
    if report.personas.is_empty() {
        let _ = writeln!(s, "No personas found.\n");
    }
    for e in &report.personas {
        let _ = writeln!(s, "{}\n", e.narrative);
    }
    if report.personas.is_empty() {
        let _ = writeln!(
            s,
            "Uncategorized: all {} patients ({}) match no validated persona and receive no call.",
            report.n,
            pct(report.no_call_fraction)
        );
    } else {
        let _ = writeln!(
            s,
            "Uncategorized: ~{} of patients ({} of {}) match no persona and receive no call.",
            pct(report.no_call_fraction),
            report.no_call_count,
            report.n
        );
    }
    if let Some(ev) = &report.evaluation {
        let _ = writeln!(s, "\n{}", ev.to_table());
    }
    if let Some(note) = &report.evaluation_note {
        let _ = writeln!(s, "\n{note}");
    }
    s
}

/// Everything `analyze` produces, before anything touches the disk.
pub struct Analysis {
    pub report: PersonaReport,
    pub tokens: Vec<String>,
}

/// ingest -> evolve (with strategist) -> candidate ranking -> search ->
/// bootstrap validation -> relabel -> before/after evaluation.
pub fn analyze_dataset(dataset: &Dataset, config: &RunConfig, audit: Option<AuditLog>) -> Result<Analysis> {
    config.validate()?;
    let mut engine = config.engine.clone();
    engine.seed = config.seed;
    let cache = AffinityCache::new(dataset, &engine);
    let scorer = PurityBce::new(engine.cluster_threshold);
    let mut strategist = HeuristicStrategist::new(dataset.n_features());
    if let Some(log) = audit {
        strategist = strategist.with_log(log);
    }
    let evolved = evolve_loop(&cache, &engine, &config.evolve, &scorer, &mut strategist)?;
    let candidates = rank_candidate_variables(
        &evolved.best_runs,
        dataset,
        &config.persona.resolutions,
        config.persona.top_n,
    );
    let constraints = config.persona.constraints(dataset.n());
    let (found, search) = search_personas_detailed(dataset, &candidates, &constraints)?;
    let (stable, rejected) = validate_personas(
        found,
        dataset,
        constraints.min_effect,
        config.persona.bootstrap,
        seed::derive(config.seed, Stream::Bootstrap, 0),
    );
    let (kept, redundant) = prune_redundant(stable, dataset, config.persona.max_overlap);
    let ctx = TokenContext::new(config.data.disease.clone());
    if let Some(log) = strategist.log_mut() {
        for p in &kept {
            log.append(
                AuditEvent::PersonaAccepted,
                serde_json::to_value(p)?,
                &format!("stability {:.3} meets the floor", p.stability.unwrap_or(0.0)),
            )?;
        }
        for p in &rejected {
            log.append(
                AuditEvent::PersonaRejected,
                serde_json::to_value(p)?,
                &format!("stability {:.3} below the floor", p.stability.unwrap_or(0.0)),
            )?;
        }
        for p in &redundant {
            log.append(
                AuditEvent::PersonaRejected,
                serde_json::to_value(p)?,
                "members largely covered by a stronger persona",
            )?;
        }
    }
    let relabeling = relabel(dataset, &kept);
    let (evaluation, evaluation_note) =
        match improvement_gain(dataset, &kept, &relabeling, &config.harness.models, config.harness.folds, config.seed)
        {
            Ok(r) => (Some(r), None),
            Err(e @ Error::SingleClass(_)) => (None, Some(format!("evaluation skipped: {e}"))),
            Err(e) => return Err(e),
        };
    let mut personas = Vec::new();
    let mut tokens = Vec::new();
    for (k, p) in kept.into_iter().enumerate() {
        let token = encode_tokens(&p, &ctx, true)?;
        tokens.push(token.clone());
        personas.push(PersonaEntry {
            id: k + 1,
            variables: p.conditions.iter().map(|c| c.name.clone()).collect(),
            narrative: narrative(k + 1, &p),
            token,
            persona: p,
        });
    }
    let n = dataset.n();
    let no_call = relabeling.no_call_count();
    let report = PersonaReport {
        personas,
        rejected: rejected
            .iter()
            .map(|p| Rejection {
                conditions: p.conditions.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" and "),
                stability: p.stability,
                reason: "unstable".into(),
            })
            .chain(redundant.iter().map(|p| Rejection {
                conditions: p.conditions.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" and "),
                stability: p.stability,
                reason: "redundant".into(),
            }))
            .collect(),
        n,
        coverage: relabeling.coverage,
        no_call_count: no_call,
        no_call_fraction: no_call as f64 / n as f64,
        response_rate_overall: dataset.positives() as f64 / n as f64,
        candidates: candidates.iter().map(|&f| dataset.column(f).name.clone()).collect(),
        search,
        evaluation,
        evaluation_note,
        config: config
            .to_flat()
            .into_iter()
            .filter(|(k, _)| !k.starts_with("output."))
            .collect(),
        provenance: dataset.provenance().clone(),
    };
    Ok(Analysis { report, tokens })
}

#[derive(Parser, Debug)]
#[command(name = "persona", version, about = "Subgroup discovery for outcome-labelled cohorts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Discover, validate and report personas.
    Analyze(AnalyzeArgs),
    /// Write a synthetic cohort with planted ground truth.
    Generate(GenerateArgs),
    /// Matched-pair C-for-benefit on a two-arm cohort.
    Benefit(BenefitArgs),
    /// Re-render report.txt from persona_report.json.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    outcome: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    id_column: Option<String>,
    #[arg(long)]
    arm_column: Option<String>,
    #[arg(long)]
    disease: Option<String>,
    /// Dotted-key override, e.g. `--set evolve.generations=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenefitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "outcome")]
    outcome: String,
    #[arg(long, default_value = "arm")]
    arm_column: String,
    #[arg(long)]
    response_column: Option<String>,
    #[arg(long)]
    id_column: Option<String>,
    /// Comma-separated feature names used for matching and prediction.
    #[arg(long, value_delimiter = ',', required = true)]
    features: Vec<String>,
    #[arg(long, default_value = "logistic")]
    model: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `KEY=VALUE`; the value is read as JSON when it parses, else as a
/// string.
fn parse_set(s: &str) -> Result<(String, Value)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::config(s, "expected KEY=VALUE"))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.to_string(), value))
}

/// Resolves the analyze configuration from all layers.
fn resolve(args: &AnalyzeArgs, env_seed: Option<String>) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        cfg.apply_flat(&RunConfig::from_file(path)?)?;
    }
    if let Some(s) = env_seed {
        cfg.seed = s
            .trim()
            .parse()
            .map_err(|_| Error::config(SEED_ENV, format!("`{s}` is not an unsigned integer")))?;
    }
    let mut flags = Map::new();
    for s in &args.set {
        let (k, v) = parse_set(s)?;
        flags.insert(k, v);
    }
    cfg.apply_flat(&flags)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(p) = &args.data {
        cfg.data.path = Some(p.clone());
    }
    if let Some(o) = &args.outcome {
        cfg.data.outcome = Some(o.clone());
    }
    if let Some(o) = &args.out {
        cfg.output.dir = Some(o.clone());
    }
    if let Some(c) = &args.id_column {
        cfg.data.id_column = Some(c.clone());
    }
    if let Some(c) = &args.arm_column {
        cfg.data.arm_column = Some(c.clone());
    }
    if let Some(d) = &args.disease {
        cfg.data.disease = d.clone();
    }
    cfg.engine.seed = cfg.seed;
    Ok(cfg)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    let cfg = resolve(&args, std::env::var(SEED_ENV).ok())?;
    let data = cfg
        .data
        .path
        .clone()
        .ok_or_else(|| Error::config("data.path", "--data is required"))?;
    let pre = cfg.preprocess_config()?;
    let dataset = load_dataset(&data, &pre)?;
    let out = cfg.output.dir.clone().unwrap_or_else(|| PathBuf::from("."));
    create_dir(&out)?;
    let audit_path = cfg.output.audit.clone().unwrap_or_else(|| out.join("audit.log"));
    let run_id = format!("analyze-{}", cfg.seed);
    let log = AuditLog::open(&audit_path, run_id)?;
    let analysis = analyze_dataset(&dataset, &cfg, Some(log))?;
    let json = serde_json::to_string_pretty(&analysis.report)? + "\n";
    write_file(&out.join("persona_report.json"), &json)?;
    write_file(&out.join("report.txt"), &render_report(&analysis.report))?;
    let mut tokens = analysis.tokens.join("\n");
    if !tokens.is_empty() {
        tokens.push('\n');
    }
    write_file(&out.join("tokens.txt"), &tokens)?;
    if analysis.report.personas.is_empty() {
        println!("no personas found; all {} patients are uncategorized", analysis.report.n);
    } else {
        println!(
            "{} persona(s), coverage {:.1}%",
            analysis.report.personas.len(),
            100.0 * analysis.report.coverage
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.spec).map_err(|e| Error::io(&args.spec, e))?;
    let spec: SynthConfig = serde_json::from_str(&text)
        .map_err(|e| Error::config(args.spec.display().to_string(), e.to_string()))?;
    let synth = harness::generate_synthetic(&spec)?;
    create_dir(&args.out)?;
    synth.write_csv(args.out.join("data.csv"))?;
    let truth = serde_json::to_string_pretty(&synth.truth)? + "\n";
    write_file(&args.out.join("ground_truth.json"), &truth)?;
    println!("wrote {} patients to {}", spec.n, args.out.display());
    Ok(())
}

fn cmd_benefit(args: BenefitArgs) -> Result<()> {
    let model: ModelKind = args.model.parse()?;
    let mut pre = PreprocessConfig::new(args.outcome.clone());
    pre.arm_column = Some(args.arm_column.clone());
    pre.response_column = args.response_column.clone();
    pre.id_column = args.id_column.clone();
    let dataset = load_dataset(&args.data, &pre)?;
    let features = args
        .features
        .iter()
        .map(|name| dataset.feature_index(name).ok_or_else(|| Error::MissingColumn(name.clone())))
        .collect::<Result<Vec<usize>>>()?;
    let report = harness::evaluate_benefit(&dataset, &features, model, args.seed)?;
    let out = args.out.unwrap_or_else(|| PathBuf::from("."));
    create_dir(&out)?;
    let path = out.join("pairs.csv");
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    report.write_pairs_csv(&dataset, std::io::BufWriter::new(file))?;
    println!("matched pairs: {}", report.pairs.len());
    println!("C-for-benefit: {:.4}", report.c_for_benefit);
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.input).map_err(|e| Error::io(&args.input, e))?;
    let report: PersonaReport = serde_json::from_str(&text)
        .map_err(|e| Error::config(args.input.display().to_string(), e.to_string()))?;
    let rendered = render_report(&report);
    match args.out {
        Some(p) => write_file(&p, &rendered)?,
        None => print!("{rendered}"),
    }
    Ok(())
}

/// Runs the command line and returns the process exit code: 0 success,
/// 1 internal failure, 2 usage or input error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Benefit(a) => cmd_benefit(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                2
            } else {
                1
            }
        }
    }
}
