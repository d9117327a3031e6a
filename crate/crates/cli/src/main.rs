//! Command-line front end: loss evaluation, the DP-vs-enumeration checker,
//! a wall-clock benchmark, toy training, and Viterbi alignment.

use std::path::PathBuf;
use std::process;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lftrain_cli::formats;
use lftrain::{
    beam_nbest, ce_fs_loss, mbr_loss, mmi_loss, nbest_mbr_loss, segmbr_loss, train,
    viterbi_align, LabelSequence, LossResult, MbrConfig, NGramPhonemeLM, Phoneme,
    PosteriorTable, ScoreScales, SegMbrConfig, SweepConfig, ToyModel, TrainCriterion,
    Vocabulary,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(
    name = "lftrain",
    about = "Lattice-free training objectives for phoneme transducers",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one training objective on a table/target pair
    Loss(LossArgs),
    /// Compare every dynamic program against brute-force enumeration
    OracleCheck(OracleArgs),
    /// Wall-clock per-utterance cost of each objective (CSV)
    Bench(BenchArgs),
    /// Gradient-descent training of the tabular toy model
    TrainToy(TrainToyArgs),
    /// Print the Viterbi alignment and its segment layout
    Align(AlignArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    Cefs,
    Lfmmi,
    Lfsegmbr,
    Lfmbr,
    NbestMbr,
}

#[derive(Args)]
struct LossArgs {
    #[arg(long, value_enum)]
    criterion: CriterionArg,
    /// posterior table, binary or JSON
    #[arg(long)]
    table: PathBuf,
    /// JSON array of phoneme ids
    #[arg(long)]
    target: PathBuf,
    /// language model JSON; uniform when omitted
    #[arg(long)]
    lm: Option<PathBuf>,
    /// model score power
    #[arg(long, default_value_t = 1.2)]
    alpha: f64,
    /// language-model score power
    #[arg(long, default_value_t = 0.3)]
    beta: f64,
    /// cost window half-width
    #[arg(long = "L", default_value_t = 3)]
    half_window: usize,
    /// per-surplus-emission penalty slope
    #[arg(long = "c", default_value_t = 0.3)]
    penalty_slope: f64,
    /// per-segment emission budget
    #[arg(long = "I", default_value_t = 3)]
    max_emissions: usize,
    /// probability-prune scale (> 1; "inf" disables)
    #[arg(long, default_value_t = 1.1)]
    gamma: f64,
    /// emission-count window around the Viterbi position
    #[arg(long = "len-window", default_value_t = 4)]
    len_window: usize,
    /// weight of the MMI term added to the risk criteria; 0 disables
    #[arg(long = "mmi-scale", default_value_t = 0.2)]
    mmi_scale: f64,
    /// write the gradient (table entries, or list masses for nbest-mbr)
    /// to this file as a JSON array
    #[arg(long)]
    grad: Option<PathBuf>,
    /// beam width for nbest-mbr
    #[arg(long, default_value_t = 16)]
    beam: usize,
    /// list size for nbest-mbr
    #[arg(long, default_value_t = 4)]
    n: usize,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 2)]
    min_frames: usize,
    #[arg(long, default_value_t = 6)]
    max_frames: usize,
    #[arg(long, default_value_t = 1)]
    min_vocab: usize,
    #[arg(long, default_value_t = 3)]
    max_vocab: usize,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1, 2])]
    contexts: Vec<usize>,
    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
    #[arg(long, default_value_t = 20_240_601)]
    seed: u64,
    /// perturb one DP value to confirm the checker catches it
    #[arg(long)]
    inject_fault: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 100)]
    frames: usize,
    #[arg(long, default_value_t = 40)]
    vocab: usize,
    #[arg(long, default_value_t = 1)]
    context: usize,
    /// repetitions averaged per criterion
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 16)]
    beam: usize,
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrainCriterionArg {
    Cefs,
    Lfmmi,
    #[value(name = "lfsegmbr+mmi")]
    LfsegmbrMmi,
    #[value(name = "lfmbr+mmi")]
    LfmbrMmi,
}

impl From<TrainCriterionArg> for TrainCriterion {
    fn from(a: TrainCriterionArg) -> Self {
        match a {
            TrainCriterionArg::Cefs => TrainCriterion::CeFs,
            TrainCriterionArg::Lfmmi => TrainCriterion::LfMmi,
            TrainCriterionArg::LfsegmbrMmi => TrainCriterion::LfSegMbrMmi,
            TrainCriterionArg::LfmbrMmi => TrainCriterion::LfMbrMmi,
        }
    }
}

#[derive(Args)]
struct TrainToyArgs {
    /// JSON-lines utterances: {"features": [...], "target": [...]}
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum)]
    criterion: TrainCriterionArg,
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// phoneme vocabulary size (required unless --model-in)
    #[arg(long)]
    vocab: Option<usize>,
    #[arg(long, default_value_t = 1)]
    context: usize,
    /// feature alphabet size; defaults to vocab + 1
    #[arg(long)]
    features: Option<usize>,
    /// start from this model instead of a seeded one
    #[arg(long)]
    model_in: Option<PathBuf>,
    #[arg(long)]
    model_out: Option<PathBuf>,
    /// write the per-epoch loss and blank-posterior traces
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(Args)]
struct AlignArgs {
    #[arg(long)]
    table: PathBuf,
    #[arg(long)]
    target: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            process::exit(exit_code_for(&err));
        }
    }
}

/// 2 = malformed input, 3 = infeasible target, 4 = enumeration cap.
fn exit_code_for(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<lftrain::Error>() {
        Some(lftrain::Error::InfeasibleTarget { .. }) => 3,
        Some(lftrain::Error::EnumerationCap { .. }) => 4,
        _ => 2,
    }
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Loss(args) => cmd_loss(args),
        Command::OracleCheck(args) => cmd_oracle_check(args),
        Command::Bench(args) => cmd_bench(args),
        Command::TrainToy(args) => cmd_train_toy(args),
        Command::Align(args) => cmd_align(args),
    }
}

fn load_lm_or_uniform(
    path: &Option<PathBuf>,
    table: &PosteriorTable,
) -> Result<NGramPhonemeLM> {
    match path {
        Some(p) => formats::load_lm(p),
        None => Ok(NGramPhonemeLM::uniform(*table.vocab(), table.k())?),
    }
}

/// risk + mmi_scale * mmi, gradients combined entrywise
fn combine(risk: LossResult, mmi: LossResult, scale: f64) -> LossResult {
    LossResult {
        value: risk.value + scale * mmi.value,
        grad: risk
            .grad
            .iter()
            .zip(&mmi.grad)
            .map(|(r, m)| r + scale * m)
            .collect(),
    }
}

fn cmd_loss(args: LossArgs) -> Result<i32> {
    let table = formats::load_table(&args.table)?;
    let target = formats::load_target(&args.target, table.vocab())?;
    let scales = ScoreScales::new(args.alpha, args.beta)?;
    let lm = load_lm_or_uniform(&args.lm, &table)?;
    let name = match args.criterion {
        CriterionArg::Cefs => "cefs",
        CriterionArg::Lfmmi => "lfmmi",
        CriterionArg::Lfsegmbr => "lfsegmbr",
        CriterionArg::Lfmbr => "lfmbr",
        CriterionArg::NbestMbr => "nbest-mbr",
    };
    let result = match args.criterion {
        CriterionArg::Cefs => ce_fs_loss(&table, &target, scales)?,
        CriterionArg::Lfmmi => mmi_loss(&table, &target, &lm, scales)?,
        CriterionArg::Lfsegmbr => {
            let viterbi = viterbi_align(&table, &target)?;
            let cfg =
                SegMbrConfig::new(args.half_window, args.penalty_slope, args.max_emissions)?;
            let risk = segmbr_loss(&table, &target, &viterbi, &lm, scales, cfg)?;
            if args.mmi_scale == 0.0 {
                risk
            } else {
                combine(risk, mmi_loss(&table, &target, &lm, scales)?, args.mmi_scale)
            }
        }
        CriterionArg::Lfmbr => {
            let (_, info) = viterbi_align(&table, &target)?;
            let cfg = MbrConfig::new(args.half_window, args.gamma, args.len_window)?;
            let risk = mbr_loss(&table, &target, &info, &lm, scales, cfg)?;
            if args.mmi_scale == 0.0 {
                risk
            } else {
                combine(risk, mmi_loss(&table, &target, &lm, scales)?, args.mmi_scale)
            }
        }
        CriterionArg::NbestMbr => {
            let list = beam_nbest(&table, &lm, scales, args.beam, args.n)?;
            nbest_mbr_loss(&list, &target)?
        }
    };
    let mut report = serde_json::json!({ "criterion": name, "loss": result.value });
    if let Some(grad_path) = &args.grad {
        std::fs::write(grad_path, serde_json::to_vec(&result.grad)?)
            .with_context(|| format!("writing {}", grad_path.display()))?;
        report["grad_file"] = serde_json::json!(grad_path.display().to_string());
    }
    println!("{report}");
    Ok(0)
}

fn cmd_oracle_check(args: OracleArgs) -> Result<i32> {
    if args.min_frames > args.max_frames || args.min_vocab > args.max_vocab {
        bail!("empty sweep range");
    }
    let cfg = SweepConfig {
        frames: (args.min_frames..=args.max_frames).collect(),
        vocab_sizes: (args.min_vocab..=args.max_vocab).collect(),
        contexts: args.contexts.clone(),
        seed: args.seed,
        tolerance: args.tolerance,
        inject_fault: if args.inject_fault { 1e-6 } else { 0.0 },
    };
    let outcome = lftrain::run_sweep(&cfg)?;
    for case in &outcome.cases {
        println!(
            "{} {:<40} dp={:+.12e} brute={:+.12e} err={:.3e}",
            if case.pass { "PASS" } else { "FAIL" },
            case.label,
            case.dp,
            case.brute,
            case.abs_err
        );
    }
    println!(
        "{} cases, max abs err {:.3e}, tolerance {:.1e}: {}",
        outcome.cases.len(),
        outcome.max_abs_err,
        args.tolerance,
        if outcome.pass { "PASS" } else { "FAIL" }
    );
    Ok(if outcome.pass { 0 } else { 1 })
}

fn bench_instance(
    args: &BenchArgs,
) -> Result<(PosteriorTable, LabelSequence, NGramPhonemeLM)> {
    let vocab = Vocabulary::new(args.vocab)?;
    let table = PosteriorTable::seeded(vocab, args.context, args.frames, args.seed)?;
    let lm = NGramPhonemeLM::seeded(vocab, args.context, args.seed ^ 0x9E37)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed ^ 0x79B9);
    let len = (args.frames / 10).max(1);
    let labels = (0..len)
        .map(|_| Phoneme(rng.random_range(0..args.vocab as u32)))
        .collect();
    Ok((table, LabelSequence::new(labels, &vocab)?, lm))
}

fn cmd_bench(args: BenchArgs) -> Result<i32> {
    let (table, target, lm) = bench_instance(&args)?;
    let scales = ScoreScales::default();
    let evals: Vec<(&str, Box<dyn Fn() -> Result<f64>>)> = vec![
        (
            "cefs",
            Box::new(|| Ok(ce_fs_loss(&table, &target, scales)?.value)),
        ),
        (
            "lfmmi",
            Box::new(|| Ok(mmi_loss(&table, &target, &lm, scales)?.value)),
        ),
        (
            "lfsegmbr",
            Box::new(|| {
                let viterbi = viterbi_align(&table, &target)?;
                let cfg = SegMbrConfig::default();
                Ok(segmbr_loss(&table, &target, &viterbi, &lm, scales, cfg)?.value)
            }),
        ),
        (
            "lfmbr",
            Box::new(|| {
                let (_, info) = viterbi_align(&table, &target)?;
                let cfg = MbrConfig::default();
                Ok(mbr_loss(&table, &target, &info, &lm, scales, cfg)?.value)
            }),
        ),
        (
            "nbest-mbr",
            Box::new(|| {
                let list = beam_nbest(&table, &lm, scales, args.beam, args.n)?;
                Ok(nbest_mbr_loss(&list, &target)?.value)
            }),
        ),
    ];
    println!(
        "# os: {} {}",
        std::env::consts::OS,
        std::env::consts::ARCH
    );
    println!(
        "# cpus: {}",
        std::thread::available_parallelism().map_or(0, |n| n.get())
    );
    println!("# seed: {}, reps: {}, beam: {}, n: {}", args.seed, args.reps, args.beam, args.n);
    println!("criterion,T,V,k,ms_per_utt");
    for (name, eval) in &evals {
        eval()?; // warm-up, untimed
        let start = Instant::now();
        for _ in 0..args.reps.max(1) {
            eval()?;
        }
        let ms = start.elapsed().as_secs_f64() * 1e3 / args.reps.max(1) as f64;
        println!(
            "{name},{},{},{},{ms:.3}",
            args.frames, args.vocab, args.context
        );
    }
    Ok(0)
}

fn cmd_train_toy(args: TrainToyArgs) -> Result<i32> {
    let model = match &args.model_in {
        Some(path) => formats::load_model(path)?,
        None => {
            let vocab_size = args
                .vocab
                .context("either --model-in or --vocab is required")?;
            let vocab = Vocabulary::new(vocab_size)?;
            let features = args.features.unwrap_or(vocab_size + 1);
            ToyModel::seeded(features, vocab, args.context, args.seed)?
        }
    };
    let dataset = formats::load_dataset(&args.dataset, model.vocab())?;
    let criterion: TrainCriterion = args.criterion.into();
    let outcome = train(
        model,
        &dataset,
        criterion,
        args.lr,
        args.epochs,
        args.seed.wrapping_add(1),
    )?;
    if let Some(path) = &args.model_out {
        formats::save_model(path, &outcome.model)?;
    }
    if let Some(path) = &args.trace_out {
        formats::save_trace(
            path,
            &formats::TraceJson {
                criterion: criterion.name(),
                loss_trace: &outcome.loss_trace,
                blank_trace: &outcome.blank_trace,
            },
        )?;
    }
    let report = serde_json::json!({
        "criterion": criterion.name(),
        "epochs": args.epochs,
        "initial_loss": outcome.loss_trace.first(),
        "final_loss": outcome.loss_trace.last(),
        "initial_blank": outcome.blank_trace.first(),
        "final_blank": outcome.blank_trace.last(),
    });
    println!("{report}");
    Ok(0)
}

fn cmd_align(args: AlignArgs) -> Result<i32> {
    let table = formats::load_table(&args.table)?;
    let target = formats::load_target(&args.target, table.vocab())?;
    let (alignment, info) = viterbi_align(&table, &target)?;
    let symbols: Vec<Option<u32>> = alignment
        .symbols()
        .iter()
        .map(|s| s.label().map(|p| p.0))
        .collect();
    let report = serde_json::json!({
        "alignment": symbols,
        "boundaries": info.boundaries(),
        "positions": info.positions(),
    });
    println!("{report}");
    Ok(0)
}
