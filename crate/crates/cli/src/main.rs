use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use seqseg::combiner::combine_sequence;
use seqseg::crf::WeightGrid;
use seqseg::harness::{
    category_scenes, curves_csv, evaluate_policies, run_experiment, summarize, train_policy, CategoryEpisodes,
    ExperimentConfig, PolicyModel, RandomPool, RolloutSettings,
};
use seqseg::lspi::LspiConfig;
use seqseg::mdp::RewardMode;
use seqseg::metrics::reward;
use seqseg::pipeline::{BeliefInit, EpisodeOptions, ModelBundle, ModelConfig, PriorMode};
use seqseg::policies::PolicyKind;
use seqseg::scene::{load_catalog, load_dataset, pgm, read_label_map, write_atomic, write_json, ClassId, Dataset};
use seqseg::synthgen::{default_templates, load_templates, write_corpus, CorpusSpec, SynthConfig};

#[derive(Parser)]
#[command(name = "seqseg", version, about = "Sequential binary segmentation with learned ordering policies")]
struct Cli {
    /// Worker threads (default: logical cores).
    #[arg(long, global = true, env = "SEQSEG_JOBS")]
    jobs: Option<usize>,

    /// Force ordered reductions in LSPI training.
    #[arg(long, global = true, env = "SEQSEG_DETERMINISTIC")]
    deterministic: bool,

    /// Print every subcommand and flag as JSON and exit.
    #[arg(long, env = "SEQSEG_DUMP_FLAGS")]
    dump_flags: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic corpus generation.
    #[command(subcommand)]
    Synth(SynthCmd),
    /// Unary and presence classifiers.
    #[command(subcommand)]
    Classifier(ClassifierCmd),
    /// Binary CRF weight fitting and inference.
    #[command(subcommand)]
    Crf(CrfCmd),
    /// Combine per-class masks of one scene into a class-id canvas.
    Combine(CombineArgs),
    /// Reward of a canvas against ground truth.
    #[command(subcommand)]
    Metrics(MetricsCmd),
    /// Ordering policies.
    #[command(subcommand)]
    Policy(PolicyCmd),
    /// Cross-validated policy comparison.
    #[command(subcommand)]
    Experiment(ExperimentCmd),
}

#[derive(Subcommand)]
enum SynthCmd {
    /// Generate a corpus and write its manifest.
    Gen(SynthGenArgs),
}

#[derive(Args)]
struct SynthGenArgs {
    /// Template JSON (default: built-in nine categories).
    #[arg(long, env = "SEQSEG_TEMPLATES")]
    templates: Option<PathBuf>,
    #[arg(long, default_value_t = 120, env = "SEQSEG_PER_CATEGORY")]
    per_category: usize,
    /// Resolution as WxH.
    #[arg(long, default_value = "64x48", value_parser = parse_res, env = "SEQSEG_RES")]
    res: (usize, usize),
    #[arg(long, env = "SEQSEG_SEED")]
    seed: u64,
    /// Feature noise; overrides every template's sigma.
    #[arg(long, env = "SEQSEG_SIGMA")]
    sigma: Option<f64>,
    /// Fraction of each category in the model (`train`) split.
    #[arg(long, default_value_t = 0.25, env = "SEQSEG_MODEL_FRACTION")]
    model_fraction: f64,
    #[arg(long, default_value_t = 16, env = "SEQSEG_CHANNELS")]
    channels: usize,
    /// Superpixel grid cell in pixels.
    #[arg(long, default_value_t = 4, env = "SEQSEG_GRID_CELL")]
    grid_cell: usize,
    #[arg(long, default_value = "synthetic", env = "SEQSEG_NAME")]
    name: String,
    #[arg(long, env = "SEQSEG_OUT")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum ClassifierCmd {
    /// Train unaries, presence scorers and CRF weights on the model split.
    Train(ClassifierTrainArgs),
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("which").required(true).args(["class", "all"]))]
struct ClassifierTrainArgs {
    /// Dataset manifest.
    #[arg(long, env = "SEQSEG_DATA")]
    data: PathBuf,
    #[arg(long, env = "SEQSEG_OUT")]
    out: PathBuf,
    /// Classes to train (comma separated).
    #[arg(long, value_delimiter = ',', env = "SEQSEG_CLASS")]
    class: Vec<String>,
    /// Every class with positives in the model split.
    #[arg(long, env = "SEQSEG_ALL")]
    all: bool,
    /// Boosting rounds of the unaries.
    #[arg(long, default_value_t = 64, env = "SEQSEG_ROUNDS")]
    rounds: usize,
    #[arg(long, default_value_t = 64, env = "SEQSEG_PRESENCE_ROUNDS")]
    presence_rounds: usize,
    /// Minority-to-majority ratio of presence undersampling.
    #[arg(long, default_value_t = 1.0, env = "SEQSEG_UNDERSAMPLE_RATIO")]
    undersample_ratio: f64,
    /// Every n-th model scene of a category is held out for CRF fitting.
    #[arg(long, default_value_t = 3, env = "SEQSEG_HOLDOUT_EVERY")]
    holdout_every: usize,
    #[arg(long, default_value_t = WeightGrid::default(), env = "SEQSEG_GRID")]
    grid: WeightGrid,
    #[arg(long, env = "SEQSEG_SEED")]
    seed: u64,
}

#[derive(Subcommand)]
enum CrfCmd {
    /// Refit CRF weights over a grid and print the grid table as CSV.
    Fit(CrfFitArgs),
    /// Write MAP masks as 16-bit PGM (0/65535), one per scene and class.
    Infer(CrfInferArgs),
}

#[derive(Args)]
struct ClassSelection {
    /// Classes (comma separated).
    #[arg(long, value_delimiter = ',', env = "SEQSEG_CLASS")]
    class: Vec<String>,
    /// Every class with a model.
    #[arg(long, env = "SEQSEG_ALL")]
    all: bool,
}

#[derive(Args)]
struct CrfFitArgs {
    #[arg(long, env = "SEQSEG_DATA")]
    data: PathBuf,
    #[arg(long, env = "SEQSEG_MODELS")]
    models: PathBuf,
    #[command(flatten)]
    select: ClassSelection,
    /// Grid as `w1=1;w2=0,0.5;w3=0,1`.
    #[arg(long, default_value_t = WeightGrid::default(), env = "SEQSEG_GRID")]
    grid: WeightGrid,
    #[arg(long, default_value_t = 3, env = "SEQSEG_HOLDOUT_EVERY")]
    holdout_every: usize,
    /// Updated models file (default: overwrite --models).
    #[arg(long, env = "SEQSEG_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CrfInferArgs {
    #[arg(long, env = "SEQSEG_DATA")]
    data: PathBuf,
    #[arg(long, env = "SEQSEG_MODELS")]
    models: PathBuf,
    #[arg(long, default_value = "test", env = "SEQSEG_SPLIT")]
    split: String,
    #[command(flatten)]
    select: ClassSelection,
    #[arg(long, env = "SEQSEG_OUT")]
    out: PathBuf,
}

#[derive(Args)]
struct CombineArgs {
    #[arg(long, env = "SEQSEG_DATA")]
    data: PathBuf,
    #[arg(long, env = "SEQSEG_MODELS")]
    models: PathBuf,
    #[arg(long, env = "SEQSEG_SCENE")]
    scene: String,
    /// Object classes in placement order (comma separated).
    #[arg(long, value_delimiter = ',', env = "SEQSEG_ORDER")]
    order: Vec<String>,
    #[arg(long, env = "SEQSEG_OUT")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum MetricsCmd {
    /// Frequency-weighted Jaccard breakdown as a CSV header and row.
    Fwji(FwjiArgs),
}

#[derive(Args)]
struct FwjiArgs {
    #[arg(long, env = "SEQSEG_CANVAS")]
    canvas: PathBuf,
    #[arg(long, env = "SEQSEG_GT")]
    gt: PathBuf,
    /// Object classes placed so far (comma separated).
    #[arg(long, value_delimiter = ',', env = "SEQSEG_TAKEN")]
    taken: Vec<String>,
    /// Manifest whose class catalog the label ids refer to.
    #[arg(long, env = "SEQSEG_DATA")]
    data: PathBuf,
}

#[derive(Subcommand)]
enum PolicyCmd {
    /// Train an LSPI ordering policy on one category.
    Train(PolicyTrainArgs),
    /// Roll policies out on a category and write reward curves.
    Eval(PolicyEvalArgs),
    /// Print policy weights as CSV.
    Dump(PolicyDumpArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum RewardArg {
    Cumulative,
    Marginal,
}

impl From<RewardArg> for RewardMode {
    fn from(r: RewardArg) -> Self {
        match r {
            RewardArg::Cumulative => RewardMode::Cumulative,
            RewardArg::Marginal => RewardMode::Marginal,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BeliefArg {
    Frequency,
    Uniform,
}

#[derive(Clone, Copy, ValueEnum)]
enum PriorArg {
    MeanPosterior,
    AreaFraction,
}

#[derive(Clone, Copy, ValueEnum)]
enum PoolArg {
    Catalog,
    Frequent,
}

#[derive(Args)]
struct EpisodeArgs {
    #[arg(long, env = "SEQSEG_DATA")]
    data: PathBuf,
    #[arg(long, env = "SEQSEG_MODELS")]
    models: PathBuf,
    #[arg(long, env = "SEQSEG_CATEGORY")]
    category: String,
    #[arg(long, default_value = "test", env = "SEQSEG_SPLIT")]
    split: String,
    #[arg(long, value_enum, default_value_t = RewardArg::Cumulative, env = "SEQSEG_REWARD_MODE")]
    reward_mode: RewardArg,
    #[arg(long, value_enum, default_value_t = BeliefArg::Frequency, env = "SEQSEG_BELIEF_INIT")]
    belief_init: BeliefArg,
    #[arg(long, value_enum, default_value_t = PriorArg::MeanPosterior, env = "SEQSEG_PRIOR")]
    prior: PriorArg,
}

impl EpisodeArgs {
    fn options(&self) -> EpisodeOptions {
        EpisodeOptions {
            belief_init: match self.belief_init {
                BeliefArg::Frequency => BeliefInit::Frequency,
                BeliefArg::Uniform => BeliefInit::Uniform,
            },
            prior: match self.prior {
                PriorArg::MeanPosterior => PriorMode::MeanPosterior,
                PriorArg::AreaFraction => PriorMode::AreaFraction,
            },
        }
    }
}

#[derive(Args)]
struct PolicyTrainArgs {
    #[command(flatten)]
    episode: EpisodeArgs,
    /// Action catalog size: the most frequent objects of the category.
    #[arg(long, default_value_t = 12, env = "SEQSEG_CATALOG_SIZE")]
    catalog_size: usize,
    #[arg(long, env = "SEQSEG_SEED")]
    seed: u64,
    #[arg(long, default_value_t = 0.9, env = "SEQSEG_GAMMA")]
    gamma: f64,
    #[arg(long, default_value_t = 10, env = "SEQSEG_ITERATIONS")]
    iterations: usize,
    #[arg(long, default_value_t = 1.0, env = "SEQSEG_EPSILON0")]
    epsilon0: f64,
    #[arg(long, default_value_t = 0.7, env = "SEQSEG_EPSILON_DECAY")]
    epsilon_decay: f64,
    #[arg(long, default_value_t = 0.1, env = "SEQSEG_EPSILON_FLOOR")]
    epsilon_floor: f64,
    /// Exploration rate used when the policy is evaluated.
    #[arg(long, default_value_t = 0.005, env = "SEQSEG_TEST_EPSILON")]
    test_epsilon: f64,
    /// Ridge term of the least-squares solve.
    #[arg(long, default_value_t = 1e-6, env = "SEQSEG_LAMBDA")]
    lambda: f64,
    /// Episode length cap (default: until the catalog is exhausted).
    #[arg(long, env = "SEQSEG_HORIZON")]
    horizon: Option<usize>,
    /// Accumulate samples across iterations instead of regenerating them.
    #[arg(long, env = "SEQSEG_REUSE_SAMPLES")]
    reuse_samples: bool,
    #[arg(long, env = "SEQSEG_OUT")]
    out: PathBuf,
    /// Per-iteration diagnostics CSV.
    #[arg(long, env = "SEQSEG_DIAGNOSTICS")]
    diagnostics: Option<PathBuf>,
}

#[derive(Args)]
struct PolicyEvalArgs {
    #[command(flatten)]
    episode: EpisodeArgs,
    /// Trained policy; its catalog becomes the action catalog.
    #[arg(long, env = "SEQSEG_POLICY")]
    policy: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "lspi,fixed,random,oracle,optimal", env = "SEQSEG_POLICIES")]
    policies: Vec<PolicyKind>,
    /// Action catalog size when no policy file is given.
    #[arg(long, default_value_t = 12, env = "SEQSEG_CATALOG_SIZE")]
    catalog_size: usize,
    /// Actions per rollout.
    #[arg(long, default_value_t = 9, env = "SEQSEG_ACTIONS")]
    actions: usize,
    /// Classes searched exhaustively by the optimal policy.
    #[arg(long, default_value_t = 5, env = "SEQSEG_K_OPT")]
    k_opt: usize,
    #[arg(long, value_enum, default_value_t = PoolArg::Catalog, env = "SEQSEG_RANDOM_POOL")]
    random_pool: PoolArg,
    /// Oracle places present classes by descending ground-truth area.
    #[arg(long, env = "SEQSEG_ORACLE_BY_AREA")]
    oracle_by_area: bool,
    /// Overrides the policy file's test epsilon.
    #[arg(long, env = "SEQSEG_TEST_EPSILON")]
    test_epsilon: Option<f64>,
    #[arg(long, env = "SEQSEG_SEED")]
    seed: u64,
    #[arg(long, env = "SEQSEG_OUT")]
    out: PathBuf,
}

#[derive(Args)]
struct PolicyDumpArgs {
    #[arg(long, env = "SEQSEG_POLICY")]
    policy: PathBuf,
    /// One row per action block instead of one row per weight.
    #[arg(long, env = "SEQSEG_RESHAPE")]
    reshape: bool,
    /// Output file (default: stdout).
    #[arg(long, env = "SEQSEG_OUT")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ExperimentCmd {
    /// Run the comparison; writes config.json, curves.csv and summary.json.
    Run(ExperimentRunArgs),
    /// Write the default experiment configuration.
    Init(ExperimentInitArgs),
}

#[derive(Args)]
struct ExperimentRunArgs {
    /// Experiment JSON; missing fields take their defaults.
    #[arg(long, env = "SEQSEG_CONFIG")]
    config: Option<PathBuf>,
    /// Existing manifest (default: generate the configured corpus under DIR/corpus).
    #[arg(long, env = "SEQSEG_DATA")]
    data: Option<PathBuf>,
    /// Existing models (default: train them and save DIR/models.json).
    #[arg(long, env = "SEQSEG_MODELS")]
    models: Option<PathBuf>,
    /// Replaces the configured seeds (comma separated).
    #[arg(long, value_delimiter = ',', env = "SEQSEG_SEEDS")]
    seeds: Vec<u64>,
    #[arg(long, env = "SEQSEG_OUT")]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentInitArgs {
    #[arg(long, env = "SEQSEG_OUT")]
    out: PathBuf,
}

fn parse_res(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("{s:?} is not WxH"))?;
    let w: usize = w.trim().parse().map_err(|_| format!("bad width in {s:?}"))?;
    let h: usize = h.trim().parse().map_err(|_| format!("bad height in {s:?}"))?;
    if w == 0 || h == 0 {
        return Err(format!("{s:?} has a zero dimension"));
    }
    Ok((w, h))
}

fn flag_schema(cmd: &clap::Command) -> Value {
    let args: Vec<Value> = cmd
        .get_arguments()
        .filter(|a| a.get_id() != "help" && a.get_id() != "version")
        .map(|a| {
            json!({
                "id": a.get_id().as_str(),
                "long": a.get_long(),
                "env": a.get_env().map(|e| e.to_string_lossy().into_owned()),
                "default": a.get_default_values().iter().map(|v| v.to_string_lossy().into_owned()).collect::<Vec<_>>(),
                "required": a.is_required_set(),
                "takes_value": a.get_action().takes_values(),
                "global": a.is_global_set(),
                "help": a.get_help().map(|h| h.to_string()),
            })
        })
        .collect();
    let subcommands: Vec<Value> = cmd.get_subcommands().filter(|s| s.get_name() != "help").map(flag_schema).collect();
    json!({
        "name": cmd.get_name(),
        "about": cmd.get_about().map(|h| h.to_string()),
        "args": args,
        "subcommands": subcommands,
    })
}

fn load_models(data: &Path, models: &Path) -> Result<(Dataset, ModelBundle)> {
    let dataset = load_dataset(data)?;
    let bundle = ModelBundle::load(models)?;
    bundle.check_catalog(&dataset.catalog)?;
    Ok((dataset, bundle))
}

fn selected_classes(dataset: &Dataset, bundle: &ModelBundle, select: &ClassSelection) -> Result<Vec<ClassId>> {
    match (select.all, select.class.is_empty()) {
        (true, true) => Ok(bundle.unaries.keys().copied().collect()),
        (false, false) => select
            .class
            .iter()
            .map(|c| {
                let id = dataset.catalog.require(c)?;
                bundle.unary(id)?;
                Ok(id)
            })
            .collect(),
        _ => bail!(Validation("give either --class or --all".into())),
    }
}

/// Argument problems detected after parsing; exit code 1.
#[derive(Debug)]
struct Validation(String);

impl std::fmt::Display for Validation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Validation {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(Validation(msg.into()))
}

fn synth_gen(a: SynthGenArgs) -> Result<()> {
    let templates = match &a.templates {
        Some(p) => load_templates(p)?,
        None => default_templates(),
    };
    let spec = CorpusSpec {
        name: a.name,
        per_category: a.per_category,
        width: a.res.0,
        height: a.res.1,
        seed: a.seed,
        model_fraction: a.model_fraction,
        synth: SynthConfig { appearance_channels: a.channels, grid_cell: a.grid_cell, sigma: a.sigma, ..SynthConfig::default() },
    };
    let manifest = write_corpus(&templates, &spec, &a.out)?;
    println!("{}", manifest.display());
    Ok(())
}

fn classifier_train(a: ClassifierTrainArgs) -> Result<()> {
    let dataset = load_dataset(&a.data)?;
    let mut config = ModelConfig { holdout_every: a.holdout_every, grid: a.grid, ..ModelConfig::default() };
    config.unary.rounds = a.rounds;
    config.unary.seed = a.seed;
    config.presence.rounds = a.presence_rounds;
    config.presence.undersample_ratio = a.undersample_ratio;
    config.presence.seed = a.seed;
    let only = if a.all {
        None
    } else {
        Some(a.class.iter().map(|c| dataset.catalog.require(c)).collect::<seqseg::Result<Vec<_>>>()?)
    };
    let bundle = ModelBundle::train_classes(&dataset, &config, only.as_deref())?;
    bundle.save(&a.out)?;
    println!("class,w1,w2,w3");
    for (c, w) in &bundle.crf {
        println!("{},{},{},{}", dataset.catalog.name(*c).unwrap_or("?"), w.w1, w.w2, w.w3);
    }
    Ok(())
}

fn crf_fit(a: CrfFitArgs) -> Result<()> {
    let (dataset, mut bundle) = load_models(&a.data, &a.models)?;
    let classes = selected_classes(&dataset, &bundle, &a.select)?;
    println!("class,w1,w2,w3,mean_jaccard,selected");
    for c in classes {
        let report = seqseg::pipeline::crf_fit_report(&dataset, &bundle, c, &a.grid, a.holdout_every)?;
        let name = dataset.catalog.name(c).unwrap_or("?");
        for (w, score) in &report.table {
            println!("{name},{},{},{},{score},{}", w.w1, w.w2, w.w3, *w == report.weights);
        }
        bundle.crf.insert(c, report.weights);
    }
    bundle.save(a.out.as_deref().unwrap_or(&a.models))?;
    Ok(())
}

fn crf_infer(a: CrfInferArgs) -> Result<()> {
    let (dataset, bundle) = load_models(&a.data, &a.models)?;
    let classes = selected_classes(&dataset, &bundle, &a.select)?;
    let scenes = dataset.split(&a.split);
    if scenes.is_empty() {
        return Err(invalid(format!("split {} has no scenes", a.split)));
    }
    std::fs::create_dir_all(&a.out).with_context(|| a.out.display().to_string())?;
    use rayon::prelude::*;
    scenes.par_iter().try_for_each(|&s| -> Result<()> {
        let scene = &dataset.scenes[s];
        for &c in &classes {
            let mask = bundle.segment(scene, c)?.mask;
            let samples: Vec<u16> = mask.bits().iter().map(|&b| if b { u16::MAX } else { 0 }).collect();
            let name = dataset.catalog.name(c).unwrap_or("?");
            pgm::write(&a.out.join(format!("{}_{name}.pgm", scene.id)), mask.width(), mask.height(), &samples)?;
        }
        Ok(())
    })?;
    println!("{} masks", scenes.len() * classes.len());
    Ok(())
}

fn combine(a: CombineArgs) -> Result<()> {
    let (dataset, bundle) = load_models(&a.data, &a.models)?;
    let scene = dataset
        .scene_index(&a.scene)
        .map(|i| &dataset.scenes[i])
        .ok_or_else(|| invalid(format!("unknown scene {}", a.scene)))?;
    let catalog = &dataset.catalog;
    let order = a.order.iter().map(|c| catalog.require(c)).collect::<seqseg::Result<Vec<_>>>()?;
    let [w, f, c] = catalog.background_ids().map(|b| bundle.segment(scene, b).map(|s| s.mask));
    let (w, f, c) = (w?, f?, c?);
    let masks = order
        .iter()
        .map(|&o| Ok((o, bundle.segment(scene, o)?.mask)))
        .collect::<seqseg::Result<Vec<_>>>()?;
    let canvas = combine_sequence(
        catalog,
        [&w, &f, &c],
        |class| masks.iter().find(|(o, _)| *o == class).map(|(_, m)| m),
        &order,
    )?;
    let labels = canvas.to_label_map();
    let samples: Vec<u16> = labels.labels().iter().map(|l| l.0).collect();
    pgm::write(&a.out, labels.width(), labels.height(), &samples)?;
    let (header, row) = reward(labels.labels(), &scene.labels, &order, catalog)?.csv(catalog);
    println!("{header}\n{row}");
    Ok(())
}

fn metrics_fwji(a: FwjiArgs) -> Result<()> {
    let catalog = load_catalog(&a.data)?;
    let canvas = read_label_map(&a.canvas, &catalog)?;
    let gt = read_label_map(&a.gt, &catalog)?;
    let taken = a.taken.iter().map(|c| catalog.require(c)).collect::<seqseg::Result<Vec<_>>>()?;
    let (header, row) = reward(canvas.labels(), &gt, &taken, &catalog)?.csv(&catalog);
    println!("{header}\n{row}");
    Ok(())
}

fn policy_train(a: PolicyTrainArgs, deterministic: bool) -> Result<()> {
    let e = &a.episode;
    let (dataset, bundle) = load_models(&e.data, &e.models)?;
    let scenes = category_scenes(&dataset, &e.split, &e.category);
    if scenes.is_empty() {
        return Err(invalid(format!("no {} scenes in split {}", e.category, e.split)));
    }
    let episodes = CategoryEpisodes::build(&dataset, &bundle, &e.category, scenes.clone(), a.catalog_size, &e.options())?;
    let mut config = LspiConfig {
        gamma: a.gamma,
        iterations: a.iterations,
        epsilon0: a.epsilon0,
        epsilon_decay: a.epsilon_decay,
        epsilon_floor: a.epsilon_floor,
        test_epsilon: a.test_epsilon,
        lambda: a.lambda,
        horizon: a.horizon,
        reuse_samples: a.reuse_samples,
        seed: a.seed,
        ..LspiConfig::default()
    };
    if deterministic {
        config.deterministic = true;
    }
    let model = train_policy(&dataset.catalog, &episodes, &scenes, &config, e.reward_mode.into())?;
    model.save(&a.out)?;
    if let Some(path) = &a.diagnostics {
        write_atomic(path, model.diagnostics_csv().as_bytes())?;
    }
    print!("{}", model.diagnostics_csv());
    Ok(())
}

fn policy_eval(a: PolicyEvalArgs) -> Result<()> {
    let e = &a.episode;
    let (dataset, bundle) = load_models(&e.data, &e.models)?;
    let scenes = category_scenes(&dataset, &e.split, &e.category);
    if scenes.is_empty() {
        return Err(invalid(format!("no {} scenes in split {}", e.category, e.split)));
    }
    let model = a.policy.as_deref().map(PolicyModel::load).transpose()?;
    if a.policies.contains(&PolicyKind::Lspi) && model.is_none() {
        return Err(invalid("the lspi policy needs --policy"));
    }
    let episodes = match &model {
        Some(m) => {
            if m.category != e.category {
                return Err(invalid(format!("policy was trained on {}, not {}", m.category, e.category)));
            }
            let classes = m.action_catalog(&dataset.catalog)?.classes().to_vec();
            CategoryEpisodes::with_actions(&dataset, &bundle, &e.category, scenes.clone(), classes, &e.options())?
        }
        None => CategoryEpisodes::build(&dataset, &bundle, &e.category, scenes.clone(), a.catalog_size, &e.options())?,
    };
    if a.actions == 0 || a.actions > episodes.actions.len() {
        return Err(invalid(format!("--actions must be in 1..={}", episodes.actions.len())));
    }
    let settings = RolloutSettings {
        actions: a.actions,
        random_pool: match a.random_pool {
            PoolArg::Catalog => RandomPool::Catalog,
            PoolArg::Frequent => RandomPool::Frequent,
        },
        oracle_by_area: a.oracle_by_area,
        k_opt: a.k_opt,
        test_epsilon: a
            .test_epsilon
            .or(model.as_ref().map(|m| m.lspi.test_epsilon))
            .unwrap_or(LspiConfig::default().test_epsilon),
    };
    let env = episodes.env(&dataset.catalog, &scenes, e.reward_mode.into())?;
    let weights = model.as_ref().map(PolicyModel::policy_weights);
    let rows = evaluate_policies(&env, &e.category, &a.policies, weights.as_ref(), &settings, a.seed)?;
    write_atomic(&a.out, curves_csv(&rows).as_bytes())?;
    println!("policy,k,mean");
    for s in summarize(&rows).iter().filter(|s| s.k == a.actions) {
        println!("{},{},{}", s.policy, s.k, s.mean);
    }
    Ok(())
}

fn policy_dump(a: PolicyDumpArgs) -> Result<()> {
    let model = PolicyModel::load(&a.policy)?;
    let text = if a.reshape {
        model.reshape_csv()
    } else {
        let mut s = String::from("index,weight\n");
        for (i, w) in model.weights.iter().enumerate() {
            s.push_str(&format!("{i},{w}\n"));
        }
        s
    };
    match &a.out {
        Some(path) => write_atomic(path, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}

fn experiment_run(a: ExperimentRunArgs, deterministic: bool) -> Result<()> {
    let mut config = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if !a.seeds.is_empty() {
        config.seeds = a.seeds.clone();
    }
    if deterministic {
        config.lspi.deterministic = true;
    }
    config.validate()?;
    std::fs::create_dir_all(&a.out).with_context(|| a.out.display().to_string())?;
    let manifest = match &a.data {
        Some(p) => p.clone(),
        None => write_corpus(&default_templates(), &config.corpus, &a.out.join("corpus"))?,
    };
    let dataset = load_dataset(&manifest)?;
    let bundle = match &a.models {
        Some(p) => ModelBundle::load(p)?,
        None => {
            let b = ModelBundle::train(&dataset, &config.model)?;
            b.save(&a.out.join("models.json"))?;
            b
        }
    };
    write_json(&a.out.join("config.json"), &config)?;
    let output = run_experiment(&dataset, &bundle, &config)?;
    output.write(&a.out)?;
    println!("category,policy,k,mean");
    for s in output.summary.iter().filter(|s| s.k == config.rollout_actions) {
        println!("{},{},{},{}", s.category, s.policy, s.k, s.mean);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(invalid("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let Some(command) = cli.command else {
        return Err(invalid("no subcommand given; see --help"));
    };
    match command {
        Command::Synth(SynthCmd::Gen(a)) => synth_gen(a),
        Command::Classifier(ClassifierCmd::Train(a)) => classifier_train(a),
        Command::Crf(CrfCmd::Fit(a)) => crf_fit(a),
        Command::Crf(CrfCmd::Infer(a)) => crf_infer(a),
        Command::Combine(a) => combine(a),
        Command::Metrics(MetricsCmd::Fwji(a)) => metrics_fwji(a),
        Command::Policy(PolicyCmd::Train(a)) => policy_train(a, cli.deterministic),
        Command::Policy(PolicyCmd::Eval(a)) => policy_eval(a),
        Command::Policy(PolicyCmd::Dump(a)) => policy_dump(a),
        Command::Experiment(ExperimentCmd::Run(a)) => experiment_run(a, cli.deterministic),
        Command::Experiment(ExperimentCmd::Init(a)) => {
            write_json(&a.out, &ExperimentConfig::default())?;
            Ok(())
        }
    }
}

/// 1 for bad input, 2 for failures of the environment.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<seqseg::Error>() {
            return if e.is_validation() { 1 } else { 2 };
        }
        if cause.is::<Validation>() {
            return 1;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    if cli.dump_flags {
        let schema = flag_schema(&Cli::command());
        println!("{}", serde_json::to_string_pretty(&schema).expect("schema serializes"));
        return ExitCode::SUCCESS;
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(exit_code(&e))
        }
    }
}
