//! `pemr`: dataset generation, training, evaluation and rendering.
//!
//! Every subcommand accepts `--config file.json`. The file holds the same
//! keys as the flags (snake_case), plus any field of the underlying module
//! config; flags given on the command line win over the file.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use pemr::dataset::{
    generate_dataset, plus_variant, rectify_dataset, reverse_variant, Dataset, GenParams, Split,
};
use pemr::eval::{
    answer_question, compare_report, emit_report, evaluate_episodes, summarize, traces_jsonl,
    EvalConfig, EpisodeResult, MetricsReport,
};
use pemr::policy::{
    rollout, Agent, ExpertAgent, NavAgent, Navigator, NavigatorKind, PolicyConfig, RandomAgent,
    RolloutMode, StopAgent,
};
use pemr::render::render_route;
use pemr::training::{pretrain_fpe, train_bc_with, train_rl, Curves, TrainConfig};

use config::{resolve, Failure};

#[derive(Parser)]
#[command(name = "pemr", version, about = "Grid-world navigation with path estimation and memory recall")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate houses and expert samples.
    Gen(GenArgs),
    /// Repair or drop samples whose expert endpoint does not expose the target.
    Rectify(RectifyArgs),
    /// Derive the reversed or the augmented dataset variant.
    Variant(VariantArgs),
    /// Pretrain the path encoder and fragment predictor.
    PretrainFpe(TrainArgs),
    /// Behavioral cloning on expert episodes.
    TrainBc(TrainArgs),
    /// REINFORCE fine-tuning.
    TrainRl(TrainArgs),
    /// Evaluate a navigator or a reference agent at backtrack levels.
    Eval(EvalArgs),
    /// Line up several metric reports.
    Compare(CompareArgs),
    /// Draw one episode as SVG.
    Render(RenderArgs),
}

#[derive(Args, Serialize)]
struct GenArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    houses: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    samples_per_house: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    objects_per_house: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    width: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    height: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    test_fraction: Option<f64>,
}

#[derive(Serialize, Deserialize, Default)]
#[serde(default)]
struct GenRun {
    out: Option<PathBuf>,
    #[serde(flatten)]
    params: GenParams,
}

#[derive(Args, Serialize)]
struct RectifyArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long = "in")]
    #[serde(rename = "in", skip_serializing_if = "Option::is_none")]
    input: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

#[derive(Serialize, Deserialize, Default)]
#[serde(default)]
struct RectifyRun {
    #[serde(rename = "in")]
    input: Option<PathBuf>,
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct VariantArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long = "in")]
    #[serde(rename = "in", skip_serializing_if = "Option::is_none")]
    input: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    /// `reversed` or `plus`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    variant: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    extra_per_house: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
#[serde(default)]
struct VariantRun {
    #[serde(rename = "in")]
    input: Option<PathBuf>,
    out: Option<PathBuf>,
    variant: Option<String>,
    extra_per_house: usize,
    seed: u64,
}

impl Default for VariantRun {
    fn default() -> Self {
        VariantRun {
            input: None,
            out: None,
            variant: None,
            extra_per_house: 10,
            seed: 0,
        }
    }
}

#[derive(Args, Serialize)]
struct TrainArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Dataset file; only its training split is used.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    data: Option<PathBuf>,
    /// Checkpoint to start from.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    /// Navigator for a fresh start: baseline, baseline+fpe, pemr-a, pemr-b.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    kind: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pretrain_epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    batch_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lr: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    momentum: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    rl_episodes: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    rl_lr: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline_window: Option<usize>,
    /// Directory for loss and metric curves (CSV).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    curves: Option<PathBuf>,
    /// Directory for per-epoch checkpoints.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    checkpoint_dir: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
#[serde(default)]
struct TrainRun {
    data: Option<PathBuf>,
    ckpt: Option<PathBuf>,
    out: Option<PathBuf>,
    kind: String,
    curves: Option<PathBuf>,
    checkpoint_dir: Option<PathBuf>,
    policy: PolicyConfig,
    #[serde(flatten)]
    train: TrainConfig,
}

impl Default for TrainRun {
    fn default() -> Self {
        TrainRun {
            data: None,
            ckpt: None,
            out: None,
            kind: NavigatorKind::PemrB.name().to_string(),
            curves: None,
            checkpoint_dir: None,
            policy: PolicyConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Args, Serialize)]
struct EvalArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    data: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    ckpt: Option<PathBuf>,
    /// Reference agent instead of a checkpoint: expert, random, stop.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    agent: Option<String>,
    /// Report path (JSON; a text table is written next to it).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    /// Name of the model in the report.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<String>,
    /// train, test or all.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    split: Option<String>,
    /// Comma-separated backtrack levels.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    levels: Option<Vec<usize>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    window: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    t_max: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_episodes: Option<usize>,
    /// Dump every episode as JSON lines.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    traces: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
#[serde(default)]
struct EvalRun {
    data: Option<PathBuf>,
    ckpt: Option<PathBuf>,
    agent: Option<String>,
    out: Option<PathBuf>,
    model: Option<String>,
    split: String,
    traces: Option<PathBuf>,
    #[serde(flatten)]
    eval: EvalConfig,
}

impl Default for EvalRun {
    fn default() -> Self {
        EvalRun {
            data: None,
            ckpt: None,
            agent: None,
            out: None,
            model: None,
            split: "test".into(),
            traces: None,
            eval: EvalConfig::default(),
        }
    }
}

#[derive(Args, Serialize)]
struct CompareArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Report files, in row order; the first is the reference row.
    #[arg(long = "report")]
    #[serde(skip_serializing_if = "Option::is_none")]
    reports: Option<Vec<PathBuf>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

#[derive(Serialize, Deserialize, Default)]
#[serde(default)]
struct CompareRun {
    reports: Vec<PathBuf>,
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct RenderArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    data: Option<PathBuf>,
    /// Sample id; defaults to the first sample of the split.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    sample: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    agent: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    split: Option<String>,
    /// Backtrack level of the start; the sample's own start if absent.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    level: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    t_max: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
#[serde(default)]
struct RenderRun {
    data: Option<PathBuf>,
    sample: Option<String>,
    ckpt: Option<PathBuf>,
    agent: Option<String>,
    split: String,
    level: Option<usize>,
    t_max: usize,
    seed: u64,
    out: Option<PathBuf>,
}

impl Default for RenderRun {
    fn default() -> Self {
        RenderRun {
            data: None,
            sample: None,
            ckpt: None,
            agent: None,
            split: "test".into(),
            level: None,
            t_max: 100,
            seed: 0,
            out: None,
        }
    }
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, Failure> {
    value
        .as_deref()
        .ok_or_else(|| Failure::Usage(format!("missing required --{flag}")))
}

fn load_dataset(path: &Path) -> anyhow::Result<Dataset> {
    Dataset::load(path).with_context(|| format!("reading dataset {}", path.display()))
}

fn load_navigator(path: &Path) -> anyhow::Result<Navigator> {
    Navigator::load(path).with_context(|| format!("reading checkpoint {}", path.display()))
}

fn select_split(ds: &Dataset, split: &str) -> Result<Dataset, Failure> {
    match split {
        "train" => Ok(ds.split(Split::Train)),
        "test" => Ok(ds.split(Split::Test)),
        "all" => Ok(ds.clone()),
        other => Err(Failure::Usage(format!("unknown split {other:?}"))),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn log_config<T: Serialize>(cmd: &str, run: &T) {
    eprintln!(
        "[pemr {cmd}] resolved config: {}",
        serde_json::to_string(run).expect("config serializes")
    );
}

fn cmd_gen(args: GenArgs) -> Result<(), Failure> {
    let run: GenRun = resolve(args.config.as_deref(), &args)?;
    log_config("gen", &run);
    let out = required(&run.out, "out")?;
    let (ds, summary) = generate_dataset(&run.params)?;
    ds.save(out).with_context(|| format!("writing {}", out.display()))?;
    println!("{}", serde_json::to_string(&summary).map_err(anyhow::Error::from)?);
    Ok(())
}

fn cmd_rectify(args: RectifyArgs) -> Result<(), Failure> {
    let run: RectifyRun = resolve(args.config.as_deref(), &args)?;
    log_config("rectify", &run);
    let input = required(&run.input, "in")?;
    let out = required(&run.out, "out")?;
    let ds = load_dataset(input)?;
    let (fixed, counts) = rectify_dataset(&ds)?;
    fixed.save(out).with_context(|| format!("writing {}", out.display()))?;
    println!("{}", serde_json::to_string(&counts).map_err(anyhow::Error::from)?);
    Ok(())
}

fn cmd_variant(args: VariantArgs) -> Result<(), Failure> {
    let run: VariantRun = resolve(args.config.as_deref(), &args)?;
    log_config("variant", &run);
    let input = required(&run.input, "in")?;
    let out = required(&run.out, "out")?;
    if !matches!(run.variant.as_deref(), Some("reversed" | "plus")) {
        return Err(Failure::Usage(format!(
            "--variant must be reversed or plus, got {:?}",
            run.variant
        )));
    }
    let ds = load_dataset(input)?;
    let (derived, summary) = match run.variant.as_deref() {
        Some("reversed") => {
            let (d, dropped) = reverse_variant(&ds)?;
            (d, serde_json::json!({ "dropped": dropped }))
        }
        Some("plus") => {
            let (d, counts) = plus_variant(&ds, run.extra_per_house, run.seed)?;
            (d, serde_json::to_value(counts).map_err(anyhow::Error::from)?)
        }
        _ => unreachable!("variant checked above"),
    };
    derived.save(out).with_context(|| format!("writing {}", out.display()))?;
    println!("{summary}");
    Ok(())
}

#[derive(Clone, Copy, PartialEq)]
enum Stage {
    Pretrain,
    Bc,
    Rl,
}

fn cmd_train(args: TrainArgs, stage: Stage) -> Result<(), Failure> {
    let name = match stage {
        Stage::Pretrain => "pretrain-fpe",
        Stage::Bc => "train-bc",
        Stage::Rl => "train-rl",
    };
    let mut run: TrainRun = resolve(args.config.as_deref(), &args)?;
    let data = required(&run.data, "data")?.to_path_buf();
    let out = required(&run.out, "out")?.to_path_buf();
    if stage == Stage::Rl && run.ckpt.is_none() {
        return Err(Failure::Usage("train-rl needs --ckpt".into()));
    }
    let ds = load_dataset(&data)?;
    let train = ds.split(Split::Train);
    let mut nav = match &run.ckpt {
        Some(p) => load_navigator(p)?,
        None => {
            let kind = NavigatorKind::parse(&run.kind)
                .ok_or_else(|| Failure::Usage(format!("unknown navigator kind {:?}", run.kind)))?;
            run.policy.kind = kind;
            run.policy.seed = run.train.seed;
            run.policy.depth = ds.env.fov.depth;
            if let Some(h) = ds.houses.first() {
                run.policy.vocab = h.map.vocab;
            }
            Navigator::new(run.policy.clone()).map_err(anyhow::Error::from)?
        }
    };
    run.policy = nav.config.clone();
    run.kind = nav.config.kind.name().to_string();
    log_config(name, &run);
    let curves: Curves = match stage {
        Stage::Pretrain => pretrain_fpe(&train, &mut nav, &run.train)?,
        Stage::Bc => {
            let dir = run.checkpoint_dir.clone();
            if let Some(d) = &dir {
                fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
            }
            train_bc_with(&train, &mut nav, &run.train, &mut |epoch, nav| {
                if let Some(d) = &dir {
                    nav.save(&d.join(format!("epoch_{epoch:03}.json")))?;
                }
                Ok(())
            })?
        }
        Stage::Rl => train_rl(&train, &mut nav, &run.train)?,
    };
    nav.save(&out)
        .with_context(|| format!("writing {}", out.display()))?;
    if let Some(dir) = &run.curves {
        curves.write_csv(dir, "")?;
    }
    let summary: serde_json::Map<String, serde_json::Value> = curves
        .series
        .keys()
        .map(|k| (format!("final_{k}"), serde_json::json!(curves.last(k))))
        .collect();
    println!("{}", serde_json::Value::Object(summary));
    Ok(())
}

enum AgentChoice {
    Nav(Navigator),
    Expert,
    Random,
    Stop,
}

fn choose_agent(ckpt: &Option<PathBuf>, agent: &Option<String>) -> Result<AgentChoice, Failure> {
    match (ckpt, agent.as_deref()) {
        (Some(p), None) => Ok(AgentChoice::Nav(load_navigator(p)?)),
        (None, Some("expert")) => Ok(AgentChoice::Expert),
        (None, Some("random")) => Ok(AgentChoice::Random),
        (None, Some("stop")) => Ok(AgentChoice::Stop),
        (None, Some(other)) => Err(Failure::Usage(format!("unknown agent {other:?}"))),
        (Some(_), Some(_)) => Err(Failure::Usage("give either --ckpt or --agent, not both".into())),
        (None, None) => Err(Failure::Usage("missing --ckpt or --agent".into())),
    }
}

impl AgentChoice {
    fn name(&self) -> String {
        match self {
            AgentChoice::Nav(n) => n.config.kind.name().to_string(),
            AgentChoice::Expert => "expert".into(),
            AgentChoice::Random => "random".into(),
            AgentChoice::Stop => "stop".into(),
        }
    }

    fn episodes(&self, ds: &Dataset, cfg: &EvalConfig) -> anyhow::Result<Vec<EpisodeResult>> {
        Ok(match self {
            AgentChoice::Nav(n) => evaluate_episodes(|| NavAgent::new(n), ds, cfg)?,
            AgentChoice::Expert => evaluate_episodes(ExpertAgent::default, ds, cfg)?,
            AgentChoice::Random => evaluate_episodes(|| RandomAgent, ds, cfg)?,
            AgentChoice::Stop => evaluate_episodes(|| StopAgent, ds, cfg)?,
        })
    }

    fn agent(&self) -> Box<dyn Agent + '_> {
        match self {
            AgentChoice::Nav(n) => Box::new(NavAgent::new(n)),
            AgentChoice::Expert => Box::new(ExpertAgent::default()),
            AgentChoice::Random => Box::new(RandomAgent),
            AgentChoice::Stop => Box::new(StopAgent),
        }
    }
}

fn cmd_eval(args: EvalArgs) -> Result<(), Failure> {
    let run: EvalRun = resolve(args.config.as_deref(), &args)?;
    log_config("eval", &run);
    let data = required(&run.data, "data")?;
    let out = required(&run.out, "out")?;
    let agent = choose_agent(&run.ckpt, &run.agent)?;
    let ds = select_split(&load_dataset(data)?, &run.split)?;
    let results = agent.episodes(&ds, &run.eval)?;
    let model = run.model.clone().unwrap_or_else(|| agent.name());
    let report = summarize(&model, &results, &run.eval)?;
    emit_report(&report, out)?;
    if let Some(path) = &run.traces {
        fs::write(path, traces_jsonl(&results)).with_context(|| format!("writing {}", path.display()))?;
    }
    print!("{}", compare_report(&[(model, report)])?.to_text());
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), Failure> {
    let run: CompareRun = resolve(args.config.as_deref(), &args)?;
    log_config("compare", &run);
    if run.reports.is_empty() {
        return Err(Failure::Usage("give at least one --report".into()));
    }
    let mut reports = Vec::new();
    for p in &run.reports {
        let text = fs::read_to_string(p).with_context(|| format!("reading report {}", p.display()))?;
        let r: MetricsReport =
            serde_json::from_str(&text).with_context(|| format!("parsing report {}", p.display()))?;
        reports.push((r.model.clone(), r));
    }
    let table = compare_report(&reports)?;
    if let Some(out) = &run.out {
        write_json(out, &table)?;
        fs::write(out.with_extension("txt"), table.to_text())
            .with_context(|| format!("writing {}", out.display()))?;
    }
    print!("{}", table.to_text());
    Ok(())
}

fn cmd_render(args: RenderArgs) -> Result<(), Failure> {
    let run: RenderRun = resolve(args.config.as_deref(), &args)?;
    log_config("render", &run);
    let data = required(&run.data, "data")?;
    let out = required(&run.out, "out")?;
    let choice = choose_agent(&run.ckpt, &run.agent)?;
    let ds = select_split(&load_dataset(data)?, &run.split)?;
    let sample = match &run.sample {
        Some(id) => ds
            .samples
            .iter()
            .find(|s| &s.id == id)
            .ok_or_else(|| anyhow!("no sample {id:?} in the {} split", run.split))?,
        None => ds
            .samples
            .first()
            .ok_or_else(|| anyhow!("the {} split is empty", run.split))?,
    };
    let map = ds.map_for(sample).map_err(anyhow::Error::from)?;
    let start = match run.level {
        Some(level) => pemr::dataset::backtrack_start(map, sample, level),
        None => sample.clone(),
    };
    let mut agent = choice.agent();
    let trace = rollout(agent.as_mut(), map, &start, &ds.env, run.t_max, RolloutMode::Greedy, run.seed)
        .map_err(anyhow::Error::from)?;
    let svg = render_route(map, &trace, sample.question.target_cell(map)).map_err(anyhow::Error::from)?;
    fs::write(out, svg).with_context(|| format!("writing {}", out.display()))?;
    let (answer, correct) = answer_question(&trace, &sample.question, map, sample.answer, 5, run.seed);
    println!(
        "{}",
        serde_json::json!({
            "sample": sample.id,
            "steps": trace.len(),
            "d_0": trace.d0(),
            "d_T": trace.final_dist,
            "answer": answer,
            "correct": correct,
        })
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Rectify(a) => cmd_rectify(a),
        Command::Variant(a) => cmd_variant(a),
        Command::PretrainFpe(a) => cmd_train(a, Stage::Pretrain),
        Command::TrainBc(a) => cmd_train(a, Stage::Bc),
        Command::TrainRl(a) => cmd_train(a, Stage::Rl),
        Command::Eval(a) => cmd_eval(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Render(a) => cmd_render(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `pemr --help` for usage");
            ExitCode::from(2)
        }
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
