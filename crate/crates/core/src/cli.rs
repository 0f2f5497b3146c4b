//! Command-line front end.
//!
//! Settings come from an optional TOML file and are overridden by flags.
//! Without an embeddings path the synthetic provider described by the
//! `[synthetic]` table stands in for a DNN.
//!
//! Exit codes: 0 success or accept, 1 reject, 2 error.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{
    angle_collision_check, attack_stats, bernoulli_attack_parts, build_pairs, entropy_estimate, evaluate_prints,
    guessing_attack, kfold_train, lsim_verify, render_angle, render_attack, render_eval, render_lsim, render_tau_table,
    AngleReport, AttackStats, EntropyEstimate, EvalMode, FoldSummary, GuessOrdering, Granularity, LsimReport,
    PairPolicy, PrintBook, TauRow, TrainConfig, VaccineMode,
};
use crate::pipeline::{
    auth_image, auth_image_two_factor, enroll_image_with, export_embeddings, load_manifest, select_split,
    write_manifest, CorpusEntry, EmbeddingProvider, FileEmbeddingProvider, ImageId, PipelineModel, SelectionMode,
    Split, SynthConfig, SyntheticProvider,
};
use crate::sketch::{EnrollmentRecord, SecretSource, WEAK_SECRET_BITS};
use crate::types::{Imageprint, ParamSet, Variant};

pub const EXIT_ACCEPT: u8 = 0;
pub const EXIT_REJECT: u8 = 1;
pub const EXIT_ERROR: u8 = 2;

/// File configuration. Every table and key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub variant: Option<Variant>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub params: ParamOverrides,
    pub paths: Paths,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub attack: AttackSection,
    pub synthetic: Option<SynthConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamOverrides {
    pub lambda: Option<usize>,
    pub tau: Option<f64>,
    pub pc_lo: Option<usize>,
    pub pc_hi: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub manifest: Option<PathBuf>,
    /// `{s}` is replaced by the segment count of the variant.
    pub embeddings: Option<String>,
    pub model: Option<PathBuf>,
    pub record: Option<PathBuf>,
    /// Report directory.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub folds: usize,
    pub selection: SelectionMode,
    pub vaccine: Option<VaccineMode>,
    /// Extra lambdas trained only for the threshold table.
    pub sweep_lambdas: Vec<usize>,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            folds: 5,
            selection: SelectionMode::Pca,
            vaccine: None,
            sweep_lambdas: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub mode: EvalMode,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            mode: EvalMode::DistanceThreshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    Bernoulli,
    Guessing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    pub kind: AttackKind,
    /// Bernoulli samples tried against every reference.
    pub samples: usize,
}

impl Default for AttackSection {
    fn default() -> Self {
        AttackSection {
            kind: AttackKind::Bernoulli,
            samples: 10_000,
        }
    }
}

const DEFAULT_LAMBDA: usize = 150;
const DEFAULT_TAU: f64 = 0.75;
const DEFAULT_PC_LO: usize = 16;
const DEFAULT_PC_HI: usize = 256;
const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Parser)]
#[command(name = "ailock", version, about = "Image-derived credentials: training, enrollment, authentication and evaluation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// slss | mlss | slms | mlms
    #[arg(long, global = true)]
    pub variant: Option<Variant>,
    #[arg(long = "param.lambda", global = true)]
    pub lambda: Option<usize>,
    #[arg(long = "param.tau", global = true)]
    pub tau: Option<f64>,
    #[arg(long = "param.pc-lo", global = true)]
    pub pc_lo: Option<usize>,
    #[arg(long = "param.pc-hi", global = true)]
    pub pc_hi: Option<usize>,
    #[arg(long, env = "AILOCK_SEED", global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Embedding file; `{s}` expands to the segment count.
    #[arg(long, global = true)]
    pub embeddings: Option<String>,
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Report directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic manifest and embedding files.
    GenCorpus {
        #[arg(long)]
        dir: PathBuf,
    },
    /// k-fold threshold discovery; writes the model.
    Train {
        #[arg(long)]
        folds: Option<usize>,
        /// tau-only | pca+tau
        #[arg(long)]
        vaccine: Option<VaccineMode>,
        /// Comma-separated extra lambdas for the threshold table.
        #[arg(long, value_delimiter = ',')]
        sweep_lambdas: Option<Vec<usize>>,
    },
    /// Enroll one image; writes a record.
    Enroll {
        #[arg(long)]
        image: ImageId,
        #[arg(long)]
        record: Option<PathBuf>,
        /// File whose bytes bind the secret as a second factor.
        #[arg(long)]
        secondary_file: Option<PathBuf>,
    },
    /// Authenticate one image against a record.
    Auth {
        #[arg(long)]
        image: ImageId,
        #[arg(long)]
        record: Option<PathBuf>,
        #[arg(long)]
        secondary_file: Option<PathBuf>,
    },
    /// FAR, FRR, F1 and EER over all test-split pairs.
    Eval {
        #[arg(long, value_enum)]
        mode: Option<EvalModeArg>,
    },
    /// Bernoulli or guessing attack against test-split references.
    Attack {
        #[arg(long, value_enum)]
        kind: Option<AttackKind>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Collision probabilities of valid and invalid test-split pairs.
    Lsim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EvalModeArg {
    DistanceThreshold,
    FullSketch,
}

impl From<EvalModeArg> for EvalMode {
    fn from(m: EvalModeArg) -> Self {
        match m {
            EvalModeArg::DistanceThreshold => EvalMode::DistanceThreshold,
            EvalModeArg::FullSketch => EvalMode::FullSketch,
        }
    }
}

/// Configuration after merging the file with the flags.
#[derive(Debug, Clone)]
pub struct Settings {
    pub variant: Variant,
    pub lambda: usize,
    pub tau: f64,
    /// Set when a threshold was given explicitly; enrollment then uses it
    /// for every segment instead of the trained ones.
    pub tau_override: Option<f64>,
    pub pc_lo: usize,
    pub pc_hi: usize,
    pub seed: u64,
    pub threads: Option<usize>,
    pub manifest: Option<PathBuf>,
    pub embeddings: Option<String>,
    pub model: PathBuf,
    pub record: PathBuf,
    pub out: Option<PathBuf>,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub attack: AttackSection,
    pub synthetic: SynthConfig,
}

pub fn load_config(path: &Path) -> Result<Config> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("config {}: {e}", path.display())))
}

impl Settings {
    pub fn resolve(args: &GlobalArgs) -> Result<Self> {
        let cfg = match &args.config {
            Some(p) => load_config(p)?,
            None => Config::default(),
        };
        let synthetic = cfg.synthetic.unwrap_or_default();
        synthetic.validate()?;
        Ok(Settings {
            variant: args.variant.or(cfg.variant).unwrap_or(Variant::Slss),
            lambda: args.lambda.or(cfg.params.lambda).unwrap_or(DEFAULT_LAMBDA),
            tau: args.tau.or(cfg.params.tau).unwrap_or(DEFAULT_TAU),
            tau_override: args.tau.or(cfg.params.tau),
            pc_lo: args.pc_lo.or(cfg.params.pc_lo).unwrap_or(DEFAULT_PC_LO),
            pc_hi: args.pc_hi.or(cfg.params.pc_hi).unwrap_or(DEFAULT_PC_HI),
            seed: args.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED),
            threads: args.threads.or(cfg.threads),
            manifest: args.manifest.clone().or(cfg.paths.manifest),
            embeddings: args.embeddings.clone().or(cfg.paths.embeddings),
            model: args.model.clone().or(cfg.paths.model).unwrap_or_else(|| "model.json".into()),
            record: cfg.paths.record.unwrap_or_else(|| "record.json".into()),
            out: args.out.clone().or(cfg.paths.out),
            train: cfg.train,
            eval: cfg.eval,
            attack: cfg.attack,
            synthetic,
        })
    }

    pub fn params(&self, lambda: usize) -> Result<ParamSet> {
        ParamSet::new(self.variant, lambda, self.tau, self.pc_lo, self.pc_hi)
    }

    /// Corpus and provider for an `s`-segment pipeline.
    pub fn data(&self, s: usize) -> Result<(Vec<CorpusEntry>, Box<dyn EmbeddingProvider>)> {
        match &self.embeddings {
            Some(pattern) => {
                let manifest = self.manifest.as_ref().ok_or_else(|| {
                    Error::Config("an embeddings file needs a manifest (--manifest or paths.manifest)".into())
                })?;
                let path = PathBuf::from(pattern.replace("{s}", &s.to_string()));
                let provider = FileEmbeddingProvider::open(&path)?;
                if provider.header().s as usize != s {
                    return Err(Error::Config(format!(
                        "{} holds {}-segment embeddings but the variant needs {s}; point --embeddings at a matching file \
                         (a {{s}} placeholder selects it automatically)",
                        path.display(),
                        provider.header().s
                    )));
                }
                Ok((load_manifest(manifest)?, Box::new(provider)))
            }
            None => {
                let corpus = match &self.manifest {
                    Some(m) => load_manifest(m)?,
                    None => self.synthetic.corpus(),
                };
                Ok((corpus, Box::new(SyntheticProvider::new(self.synthetic.clone())?)))
            }
        }
    }
}

fn read_model(path: &Path) -> Result<PipelineModel> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read model {}: {e} (run `ailock train` first)", path.display())))?;
    PipelineModel::from_json(&text)
}

fn read_record(path: &Path) -> Result<EnrollmentRecord> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read record {}: {e} (run `ailock enroll` first)", path.display())))?;
    EnrollmentRecord::from_json(&text)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

/// Writes `<out>/<name>.json` and `<out>/<name>.txt` when a report
/// directory is set.
fn write_report<T: Serialize>(out: Option<&Path>, name: &str, value: &T, text: &str) -> Result<()> {
    if let Some(dir) = out {
        let mut json = serde_json::to_string_pretty(value)?;
        json.push('\n');
        write_text(&dir.join(format!("{name}.json")), &json)?;
        write_text(&dir.join(format!("{name}.txt")), text)?;
    }
    Ok(())
}

fn require(entries: Vec<CorpusEntry>, split: Split) -> Result<Vec<CorpusEntry>> {
    if entries.is_empty() {
        return Err(Error::Config(format!("the manifest has no {split} images")));
    }
    Ok(entries)
}

/// Attack-split images at even positions serve as vaccine samples; those at
/// odd positions stay held out for the guessing attack.
pub fn attack_halves(corpus: &[CorpusEntry]) -> (Vec<CorpusEntry>, Vec<CorpusEntry>) {
    let attack = select_split(corpus, Split::Attack);
    let (vaccine, held): (Vec<_>, Vec<_>) = attack.into_iter().enumerate().partition(|(i, _)| i % 2 == 0);
    (vaccine.into_iter().map(|x| x.1).collect(), held.into_iter().map(|x| x.1).collect())
}

/// What a command produced. Only authentication can reject.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Done(String),
    Accept(String),
    Reject(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub variant: String,
    pub lambda: usize,
    pub taus: Vec<f64>,
    pub vaccine: Option<VaccineMode>,
    pub folds: Vec<FoldSummary>,
    pub table: Vec<TauRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackEntry {
    pub stats: AttackStats,
    pub entropy: Option<EntropyEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub variant: String,
    pub lambda: usize,
    pub attacks: Vec<AttackEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsimCliReport {
    pub per_bit: LsimReport,
    pub whole_print: LsimReport,
    pub angle: AngleReport,
}

pub fn cmd_gen_corpus(st: &Settings, dir: &Path) -> Result<Outcome> {
    fs::create_dir_all(dir)?;
    let corpus = st.synthetic.corpus();
    let provider = SyntheticProvider::new(st.synthetic.clone())?;
    let ids: Vec<ImageId> = corpus.iter().map(|e| e.id).collect();
    write_manifest(&corpus, fs::File::create(dir.join("manifest.csv"))?)?;
    for s in [1, 5] {
        let f = fs::File::create(dir.join(format!("embeddings-s{s}.bin")))?;
        export_embeddings(BufWriter::new(f), &provider, &ids, s)?;
    }
    let toml = toml::to_string(&st.synthetic).map_err(|e| Error::Config(e.to_string()))?;
    write_text(&dir.join("synthetic.toml"), &toml)?;
    let mut msg = String::new();
    let count = |sp| corpus.iter().filter(|e| e.split == sp).count();
    let _ = writeln!(
        msg,
        "wrote {} images ({} train, {} test, {} attack) to {}",
        corpus.len(),
        count(Split::Train),
        count(Split::Test),
        count(Split::Attack),
        dir.display()
    );
    let _ = writeln!(
        msg,
        "use --manifest {0}/manifest.csv --embeddings '{0}/embeddings-s{{s}}.bin'",
        dir.display()
    );
    Ok(Outcome::Done(msg))
}

pub fn cmd_train(st: &Settings, folds: Option<usize>, vaccine: Option<VaccineMode>, sweep: Option<Vec<usize>>) -> Result<Outcome> {
    let params = st.params(st.lambda)?;
    let (corpus, provider) = st.data(params.s)?;
    let train = select_split(&corpus, Split::Train);
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let vaccine_mode = vaccine.or(st.train.vaccine);
    let (vaccine_pool, _) = attack_halves(&corpus);
    if vaccine_mode.is_some() && vaccine_pool.is_empty() {
        return Err(Error::Config("vaccinated training needs attack-split images in the manifest".into()));
    }
    let run = |lambda: usize| {
        let mut tc = TrainConfig::new(st.params(lambda)?, st.seed);
        tc.folds = folds.unwrap_or(st.train.folds);
        tc.selection = st.train.selection;
        if let Some(m) = vaccine_mode {
            tc.vaccine_mode = m;
        }
        kfold_train(provider.as_ref(), &train, &tc, vaccine_mode.map(|_| vaccine_pool.as_slice()))
    };
    let outcome = run(st.lambda)?;
    let mut lambdas: Vec<usize> = sweep.unwrap_or_else(|| st.train.sweep_lambdas.clone());
    lambdas.retain(|&l| l != st.lambda);
    lambdas.push(st.lambda);
    lambdas.sort_unstable();
    lambdas.dedup();
    let mut table = Vec::with_capacity(lambdas.len());
    for &l in &lambdas {
        let (taus, mean_f1) = if l == st.lambda {
            (outcome.taus.clone(), outcome.mean_f1.clone())
        } else {
            let o = run(l)?;
            (o.taus, o.mean_f1)
        };
        table.push(TauRow {
            variant: st.variant.name().to_string(),
            lambda: l,
            taus,
            mean_f1,
        });
    }
    write_text(&st.model, &outcome.model.to_json()?)?;
    let report = TrainReport {
        variant: st.variant.name().to_string(),
        lambda: st.lambda,
        taus: outcome.taus.clone(),
        vaccine: vaccine_mode,
        folds: outcome.folds,
        table,
    };
    let text = render_tau_table(&report.table);
    write_report(st.out.as_deref(), "train", &report, &text)?;
    Ok(Outcome::Done(format!("{text}model written to {}\n", st.model.display())))
}

fn secondary(path: Option<&PathBuf>) -> Result<Option<Vec<u8>>> {
    path.map(|p| fs::read(p).map_err(|e| Error::Config(format!("cannot read secondary secret {}: {e}", p.display()))))
        .transpose()
}

pub fn cmd_enroll(st: &Settings, image: &ImageId, record: Option<&PathBuf>, secondary_file: Option<&PathBuf>) -> Result<Outcome> {
    let mut model = read_model(&st.model)?;
    if let Some(tau) = st.tau_override {
        model = model.with_taus(vec![tau; model.params.s])?;
    }
    let (_, provider) = st.data(model.params.s)?;
    let second = secondary(secondary_file)?;
    let source = match &second {
        Some(bytes) => SecretSource::Secondary(bytes),
        None => SecretSource::Random,
    };
    let rec = enroll_image_with(&model, provider.as_ref(), image, source, st.seed)?;
    let path = record.unwrap_or(&st.record);
    write_text(path, &rec.to_json()?)?;
    if rec.secret_bits < WEAK_SECRET_BITS {
        eprintln!(
            "warning: the secret has only {} bits; raise tau or lambda for a larger code dimension",
            rec.secret_bits
        );
    }
    let caps: Vec<String> = rec.code_specs.iter().map(|c| format!("n={} k={} c={}", c.n, c.k, c.c)).collect();
    Ok(Outcome::Done(format!(
        "enrolled {image}\nsecret bits {}\ncodes      {}\nrecord     {}\n",
        rec.secret_bits,
        caps.join("; "),
        path.display()
    )))
}

pub fn cmd_auth(st: &Settings, image: &ImageId, record: Option<&PathBuf>, secondary_file: Option<&PathBuf>) -> Result<Outcome> {
    let model = read_model(&st.model)?;
    let rec = read_record(record.unwrap_or(&st.record))?;
    let (_, provider) = st.data(model.params.s)?;
    let decision = match secondary(secondary_file)? {
        Some(bytes) => auth_image_two_factor(&model, provider.as_ref(), image, &rec, &bytes)?,
        None => auth_image(&model, provider.as_ref(), image, &rec)?,
    };
    Ok(if decision.is_accept() {
        Outcome::Accept("accept\n".into())
    } else {
        Outcome::Reject("reject\n".into())
    })
}

pub fn cmd_eval(st: &Settings, mode: Option<EvalMode>) -> Result<Outcome> {
    let model = read_model(&st.model)?;
    let (corpus, provider) = st.data(model.params.s)?;
    let test = require(select_split(&corpus, Split::Test), Split::Test)?;
    let pairs = build_pairs(&test, PairPolicy::AllPairs)?;
    let ids: Vec<ImageId> = test.iter().map(|e| e.id).collect();
    let book = PrintBook::compute(&model, provider.as_ref(), &ids)?;
    let report = evaluate_prints(&model, &book, &pairs, mode.unwrap_or(st.eval.mode), st.seed)?;
    let text = render_eval(&report);
    write_report(st.out.as_deref(), "eval", &report, &text)?;
    Ok(Outcome::Done(text))
}

fn with_entropy(stats: AttackStats) -> Result<AttackEntry> {
    let trials = stats.references * stats.attempts_per_reference;
    let entropy = stats.far.map(|f| entropy_estimate(f, trials)).transpose()?;
    Ok(AttackEntry { stats, entropy })
}

pub fn cmd_attack(st: &Settings, kind: Option<AttackKind>, samples: Option<usize>) -> Result<Outcome> {
    let model = read_model(&st.model)?;
    let (corpus, provider) = st.data(model.params.s)?;
    let test = require(select_split(&corpus, Split::Test), Split::Test)?;
    let mut attacks = Vec::new();
    match kind.unwrap_or(st.attack.kind) {
        AttackKind::Bernoulli => {
            let train = require(select_split(&corpus, Split::Train), Split::Train)?;
            let mut ids: Vec<ImageId> = train.iter().map(|e| e.id).collect();
            ids.extend(test.iter().map(|e| e.id));
            let book = PrintBook::compute(&model, provider.as_ref(), &ids)?;
            let source: Vec<Vec<Imageprint>> = train.iter().map(|e| book.get(&e.id).map(<[_]>::to_vec)).collect::<Result<_>>()?;
            let tries = bernoulli_attack_parts(&source, samples.unwrap_or(st.attack.samples), st.seed)?;
            let refs: Vec<&[Imageprint]> = test.iter().map(|e| book.get(&e.id)).collect::<Result<_>>()?;
            attacks.push(with_entropy(attack_stats(&model, "bernoulli", &refs, &tries))?);
        }
        AttackKind::Guessing => {
            let (_, held) = attack_halves(&corpus);
            let held = require(held, Split::Attack)?;
            let mut ids: Vec<ImageId> = test.iter().map(|e| e.id).collect();
            ids.extend(held.iter().map(|e| e.id));
            let book = PrintBook::compute(&model, provider.as_ref(), &ids)?;
            for ordering in [GuessOrdering::SameTypeFirst, GuessOrdering::Shuffled] {
                attacks.push(with_entropy(guessing_attack(&model, &book, &test, &held, ordering, st.seed)?)?);
            }
        }
    }
    let report = AttackReport {
        variant: model.params.variant().map(|v| v.name().to_string()).unwrap_or_default(),
        lambda: model.params.lambda,
        attacks,
    };
    let mut text = String::new();
    for a in &report.attacks {
        text.push_str(&render_attack(&a.stats));
        let e = a.entropy.map_or_else(
            || "-".to_string(),
            |e| format!("{:.2} bits{}", e.bits, if e.lower_bound { " (lower bound)" } else { "" }),
        );
        let _ = writeln!(text, "entropy            {e}");
    }
    write_report(st.out.as_deref(), "attack", &report, &text)?;
    Ok(Outcome::Done(text))
}

pub fn cmd_lsim(st: &Settings) -> Result<Outcome> {
    let model = read_model(&st.model)?;
    let (corpus, provider) = st.data(model.params.s)?;
    let test = require(select_split(&corpus, Split::Test), Split::Test)?;
    let pairs = build_pairs(&test, PairPolicy::AllPairs)?;
    let ids: Vec<ImageId> = test.iter().map(|e| e.id).collect();
    let book = PrintBook::compute(&model, provider.as_ref(), &ids)?;
    let report = LsimCliReport {
        per_bit: lsim_verify(&model, &book, &pairs, Granularity::PerBit)?,
        whole_print: lsim_verify(&model, &book, &pairs, Granularity::WholePrint)?,
        angle: angle_collision_check(&model, provider.as_ref(), &pairs)?,
    };
    let text = format!(
        "{}\n{}\n{}",
        render_lsim(&report.per_bit),
        render_lsim(&report.whole_print),
        render_angle(&report.angle)
    );
    write_report(st.out.as_deref(), "lsim", &report, &text)?;
    Ok(Outcome::Done(text))
}

/// Runs one parsed command on a pool of the configured size.
pub fn run(cli: &Cli) -> Result<Outcome> {
    let st = Settings::resolve(&cli.global)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = st.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::GenCorpus { dir } => cmd_gen_corpus(&st, dir),
        Command::Train {
            folds,
            vaccine,
            sweep_lambdas,
        } => cmd_train(&st, *folds, *vaccine, sweep_lambdas.clone()),
        Command::Enroll {
            image,
            record,
            secondary_file,
        } => cmd_enroll(&st, image, record.as_ref(), secondary_file.as_ref()),
        Command::Auth {
            image,
            record,
            secondary_file,
        } => cmd_auth(&st, image, record.as_ref(), secondary_file.as_ref()),
        Command::Eval { mode } => cmd_eval(&st, mode.map(Into::into)),
        Command::Attack { kind, samples } => cmd_attack(&st, *kind, *samples),
        Command::Lsim => cmd_lsim(&st),
    })
}

/// Follow-up advice for errors a user can fix by changing parameters.
pub fn hint(err: &Error) -> Option<String> {
    match err {
        Error::CapacityInfeasible { n, max_feasible, .. } => {
            let tau = 1.0 - *max_feasible as f64 / *n as f64;
            Some(format!(
                "raise tau to at least {:.4} so that the error budget fits a length-{n} code, or raise lambda \
                 (longer codes correct a larger fraction of errors)",
                (tau * 1e4).ceil() / 1e4
            ))
        }
        Error::InsufficientData { .. } | Error::RankDeficient { .. } => {
            Some("add training images or lower --param.pc-hi".into())
        }
        _ => None,
    }
}

/// Maps an outcome to its exit code, printing the message.
pub fn finish(result: Result<Outcome>) -> ExitCode {
    match result {
        Ok(Outcome::Done(msg)) | Ok(Outcome::Accept(msg)) => {
            print!("{msg}");
            ExitCode::from(EXIT_ACCEPT)
        }
        Ok(Outcome::Reject(msg)) => {
            print!("{msg}");
            ExitCode::from(EXIT_REJECT)
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(h) = hint(&e) {
                eprintln!("hint: {h}");
            }
            ExitCode::from(EXIT_ERROR)
        }
    }
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { EXIT_ACCEPT });
        }
    };
    finish(run(&cli))
}
