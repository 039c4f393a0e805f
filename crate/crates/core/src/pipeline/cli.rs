//! `robocmd` command line. Exit status: 0 success, 1 usage error, 2 runtime error.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::{
    build_embedding, evaluate, evaluate_instructions, other_svm_from_models, run_experiment_grid,
    train_slot_models, write_grid_csv, Approach, EmbeddingRef, EmbeddingSettings, GridSettings, PipelineConfig,
    SlotModels, SvmRef, Task,
};
use crate::action::{train_action, ActionModel};
use crate::corpus::{
    generate_commands, generate_instruction, generate_other_commands, read_dataset, read_instructions,
    rng_from_seed, tokenize, write_instructions, write_records, Dataset, Split, TaskSchema,
};
use crate::embed::{Backend, EmbeddingMatrix};
use crate::error::{bail, Error, Result};
use crate::net::checkpoint::Checkpoint;
use crate::net::train::ModelSpec;
use crate::net::Architecture;
use crate::slots::train_slot_model;

#[derive(Parser, Debug)]
#[command(name = "robocmd", version, about = "Robot command understanding: split, classify, fill slots")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate an annotated corpus as JSON lines
    Gen(GenArgs),
    /// Train word vectors on one or more corpora
    TrainEmbed(TrainEmbedArgs),
    /// Train the action classifier
    TrainAction(TrainModelArgs),
    /// Train a slot tagger (shared, or per action with --action)
    TrainSlots(TrainSlotsArgs),
    /// Fit the Other SVM on max classifier confidence
    TrainOther(TrainOtherArgs),
    /// Train every artifact and write a pipeline config
    TrainAll(TrainAllArgs),
    /// Evaluate a pipeline on a dataset
    Eval(EvalArgs),
    /// Run the architecture comparison grid
    Grid(GridArgs),
    /// Parse one instruction and print its frames as JSON
    Parse(ParseArgs),
    /// Parse instructions read from standard input, one per line
    Repl(ReplArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
enum GenKind {
    Commands,
    Other,
    Instructions,
}

#[derive(Args, Debug)]
struct GenArgs {
    /// `gpsr`, `fbm3` or a schema JSON file
    #[arg(long, default_value = "gpsr")]
    schema: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = GenKind::Commands)]
    kind: GenKind,
    /// Largest number of commands per instruction
    #[arg(long, default_value_t = 3)]
    max_commands: usize,
}

#[derive(Args, Debug)]
struct TrainEmbedArgs {
    #[arg(long)]
    backend: Backend,
    /// `.jsonl` datasets or plain-text files, one sentence per line
    #[arg(long, required = true)]
    corpus: Vec<PathBuf>,
    #[arg(long, default_value_t = 50)]
    dim: usize,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 50_000)]
    max_vocab: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long, default_value = "gpsr")]
    schema: String,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    validation: Option<PathBuf>,
    #[arg(long)]
    embedding: PathBuf,
    #[arg(long, default_value = "onehot")]
    backend: Backend,
    #[arg(long, default_value = "LSTM-1x100")]
    arch: Architecture,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainModelArgs {
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args, Debug)]
struct TrainSlotsArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Train on this action only (approach 2)
    #[arg(long)]
    action: Option<String>,
}

#[derive(Args, Debug)]
struct TrainOtherArgs {
    #[arg(long, default_value = "gpsr")]
    schema: String,
    #[arg(long)]
    embedding: PathBuf,
    #[arg(long, default_value = "onehot")]
    backend: Backend,
    #[arg(long)]
    action_model: PathBuf,
    /// In-set commands (JSON lines)
    #[arg(long)]
    in_set: PathBuf,
    /// Out-of-set commands (JSON lines, action "Other")
    #[arg(long)]
    other: PathBuf,
    /// Output `{"w", "b"}` file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainAllArgs {
    #[arg(long, default_value = "gpsr")]
    schema: String,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value = "onehot")]
    backend: Backend,
    #[arg(long, default_value = "LSTM-1x100")]
    arch: Architecture,
    #[arg(long, default_value = "1", value_parser = parse_approach)]
    approach: Approach,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 50)]
    dim: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// The data file holds instructions instead of commands
    #[arg(long)]
    instructions: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GridArgs {
    #[arg(long, default_value = "gpsr")]
    schema: String,
    #[arg(long = "arch", required = true)]
    archs: Vec<Architecture>,
    #[arg(long = "embedding", default_value = "onehot")]
    embeddings: Vec<Backend>,
    #[arg(long = "approach", default_value = "1", value_parser = parse_approach)]
    approaches: Vec<Approach>,
    #[arg(long = "task", default_value = "action")]
    tasks: Vec<Task>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 50)]
    dim: usize,
    /// CSV output; standard output when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ParseArgs {
    #[arg(long)]
    config: PathBuf,
    text: String,
}

#[derive(Args, Debug)]
struct ReplArgs {
    #[arg(long)]
    config: PathBuf,
}

fn parse_approach(s: &str) -> std::result::Result<Approach, String> {
    let n: u8 = s.parse().map_err(|_| format!("approach must be 1 or 2, got '{s}'"))?;
    Approach::try_from(n)
}

impl std::fmt::Display for Approach {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", u8::from(*self))
    }
}

/// Runs the CLI on `args` (program name first) with the process streams.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let stdin = std::io::stdin();
    run_with(args, &mut stdin.lock(), &mut std::io::stdout(), &mut std::io::stderr())
}

/// Runs the CLI against explicit streams and returns the exit status.
pub fn run_with<I, T>(args: I, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    1
                }
            };
        }
    };
    match dispatch(cli.command, input, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

fn load_schema(name: &str) -> Result<TaskSchema> {
    match name {
        "gpsr" | "fbm3" => TaskSchema::builtin(name),
        path => TaskSchema::load(Path::new(path)),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn read_corpus(path: &Path) -> Result<Vec<Vec<String>>> {
    let reader = BufReader::new(File::open(path)?);
    let jsonl = path.extension().is_some_and(|e| e == "jsonl");
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if jsonl {
            let v: serde_json::Value =
                serde_json::from_str(&line).map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
            let tokens = v
                .get("tokens")
                .and_then(|t| serde_json::from_value::<Vec<String>>(t.clone()).ok())
                .ok_or_else(|| Error::Parse { line: i + 1, msg: "missing \"tokens\" array".into() })?;
            out.push(tokens);
        } else {
            out.push(tokenize(&line));
        }
    }
    Ok(out)
}

fn model_spec(m: &ModelArgs) -> ModelSpec {
    let mut spec = ModelSpec::new(m.arch, m.epochs, m.seed);
    spec.train.lr = m.lr;
    spec
}

fn model_inputs(m: &ModelArgs) -> Result<(TaskSchema, Dataset, Option<Dataset>, EmbeddingMatrix)> {
    let schema = load_schema(&m.schema)?;
    let train = read_dataset(&m.data, &schema, Split::Train)?;
    let val = m.validation.as_deref().map(|p| read_dataset(p, &schema, Split::Validation)).transpose()?;
    let emb = EmbeddingMatrix::load(&m.embedding, m.backend)?;
    Ok((schema, train, val, emb))
}

fn print_losses(out: &mut dyn Write, losses: &[f64]) -> Result<()> {
    if let Some(last) = losses.last() {
        writeln!(out, "epochs: {}, final loss: {last:.6}", losses.len())?;
    }
    Ok(())
}

fn dispatch(cmd: Command, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Gen(a) => {
            let schema = load_schema(&a.schema)?;
            let mut rng = rng_from_seed(a.seed);
            let mut w = create(&a.out)?;
            match a.kind {
                GenKind::Commands => write_records(&generate_commands(&schema, a.n, &mut rng), &mut w)?,
                GenKind::Other => write_records(&generate_other_commands(a.n, &mut rng)?, &mut w)?,
                GenKind::Instructions => {
                    if a.max_commands == 0 {
                        bail!(Argument, "--max-commands must be at least 1");
                    }
                    use rand::Rng;
                    let mut insts = Vec::with_capacity(a.n);
                    for _ in 0..a.n {
                        let k = rng.gen_range(1..=a.max_commands);
                        insts.push(generate_instruction(&schema, k, &mut rng)?);
                    }
                    write_instructions(&insts, &mut w)?;
                }
            }
            w.flush()?;
        }
        Command::TrainEmbed(a) => {
            let mut sentences = Vec::new();
            for p in &a.corpus {
                sentences.extend(read_corpus(p)?);
            }
            let mut settings = EmbeddingSettings { dim: a.dim, max_vocab: a.max_vocab, ..EmbeddingSettings::default() }
                .with_seed(a.seed);
            if let Some(e) = a.epochs {
                settings.skipgram.epochs = e;
                settings.glove.epochs = e;
            }
            let emb = build_embedding(a.backend, &sentences, &settings)?;
            emb.save(&a.out)?;
            writeln!(out, "vocabulary: {} words, dim {}", emb.vocab.words.len(), emb.dim())?;
        }
        Command::TrainAction(a) => {
            let (schema, train, val, emb) = model_inputs(&a.model)?;
            let (model, report) = train_action(&train, val.as_ref(), &schema, &emb, &model_spec(&a.model))?;
            model.to_checkpoint().save(&a.model.out)?;
            print_losses(out, &report.epoch_losses)?;
        }
        Command::TrainSlots(a) => {
            let (schema, train, val, emb) = model_inputs(&a.model)?;
            let (model, report) =
                train_slot_model(&train, val.as_ref(), &schema, &emb, &model_spec(&a.model), a.action.as_deref())?;
            model.to_checkpoint().save(&a.model.out)?;
            print_losses(out, &report.epoch_losses)?;
        }
        Command::TrainOther(a) => {
            let schema = load_schema(&a.schema)?;
            let emb = EmbeddingMatrix::load(&a.embedding, a.backend)?;
            let action = ActionModel::from_checkpoint(&Checkpoint::load(&a.action_model)?)?;
            let in_set = read_dataset(&a.in_set, &schema, Split::Validation)?;
            let other = read_dataset(&a.other, &schema, Split::Validation)?;
            let svm = other_svm_from_models(&action, &emb, &in_set.records, &other.records)?;
            std::fs::write(&a.out, serde_json::to_string(&svm)? + "\n")?;
            writeln!(out, "boundary: {:.6}", svm.boundary())?;
        }
        Command::TrainAll(a) => train_all(&a, out)?,
        Command::Eval(a) => {
            let cfg = PipelineConfig::load(&a.config)?;
            let pipeline = cfg.build()?;
            let report = if a.instructions {
                evaluate_instructions(&pipeline, &read_instructions(&a.data, &pipeline.schema)?)?
            } else {
                evaluate(&pipeline, &read_dataset(&a.data, &pipeline.schema, Split::Test)?)?
            };
            let text = serde_json::to_string_pretty(&report)?;
            match &a.out {
                Some(p) => std::fs::write(p, text + "\n")?,
                None => writeln!(out, "{text}")?,
            }
        }
        Command::Grid(a) => {
            let schema = load_schema(&a.schema)?;
            let mut settings = GridSettings { n_records: a.n, epochs: a.epochs, lr: a.lr, ..GridSettings::default() };
            settings.embedding.dim = a.dim;
            let rows =
                run_experiment_grid(&schema, &a.archs, &a.embeddings, &a.approaches, &a.tasks, a.seed, &settings)?;
            match &a.out {
                Some(p) => {
                    let mut w = create(p)?;
                    write_grid_csv(&rows, &mut w)?;
                    w.flush()?;
                }
                None => write_grid_csv(&rows, out)?,
            }
        }
        Command::Parse(a) => {
            let pipeline = PipelineConfig::load(&a.config)?.build()?;
            let frames: Vec<_> = pipeline.understand(&a.text)?.iter().map(|f| f.to_json()).collect();
            writeln!(out, "{}", serde_json::Value::Array(frames))?;
        }
        Command::Repl(a) => {
            let pipeline = PipelineConfig::load(&a.config)?.build()?;
            let mut line = String::new();
            loop {
                line.clear();
                if input.read_line(&mut line)? == 0 {
                    break;
                }
                let frames: Vec<_> = pipeline.understand(&line)?.iter().map(|f| f.to_json()).collect();
                writeln!(out, "{}", serde_json::Value::Array(frames))?;
                out.flush()?;
            }
        }
    }
    Ok(())
}

/// Generates data, trains every model and writes `config.json` into `out_dir`.
fn train_all(a: &TrainAllArgs, out: &mut dyn Write) -> Result<()> {
    let schema = load_schema(&a.schema)?;
    std::fs::create_dir_all(&a.out_dir)?;
    let mut rng = rng_from_seed(a.seed);
    let records = generate_commands(&schema, a.n, &mut rng);
    let (train, val, test) = Dataset::split_80_10_10(&schema.name, records, a.seed);
    let other = generate_other_commands((a.n / 5).max(10), &mut rng)?;
    for (name, recs) in [("train", &train.records), ("validation", &val.records), ("test", &test.records), ("other", &other)] {
        let mut w = create(&a.out_dir.join(format!("{name}.jsonl")))?;
        write_records(recs, &mut w)?;
        w.flush()?;
    }

    let mut corpus: Vec<Vec<String>> = train.records.iter().chain(&other).map(|r| r.tokens.clone()).collect();
    corpus.extend(generate_commands(&schema, a.n, &mut rng).into_iter().map(|r| r.tokens));
    let settings = EmbeddingSettings { dim: a.dim, ..EmbeddingSettings::default() }.with_seed(a.seed);
    let emb = build_embedding(a.backend, &corpus, &settings)?;
    emb.save(&a.out_dir.join("embedding.txt"))?;

    let mut spec = ModelSpec::new(a.arch, a.epochs, a.seed);
    spec.train.lr = 0.01;
    let (action, _) = train_action(&train, Some(&val), &schema, &emb, &spec)?;
    action.to_checkpoint().save(&a.out_dir.join("action.json"))?;
    let slot_files = match train_slot_models(&train, Some(&val), &schema, &emb, &spec, a.approach)? {
        SlotModels::Shared(m) => {
            m.to_checkpoint().save(&a.out_dir.join("slots.json"))?;
            vec![PathBuf::from("slots.json")]
        }
        SlotModels::PerAction(map) => {
            let mut files = Vec::new();
            for (action, m) in map {
                let f = PathBuf::from(format!("slots_{action}.json"));
                m.to_checkpoint().save(&a.out_dir.join(&f))?;
                files.push(f);
            }
            files
        }
    };
    let held_other = generate_other_commands((a.n / 5).max(10), &mut rng)?;
    let svm = other_svm_from_models(&action, &emb, &val.records, &held_other)?;
    let cfg = PipelineConfig {
        approach: a.approach,
        schema: a.schema.clone(),
        embedding: EmbeddingRef { backend: a.backend, path: PathBuf::from("embedding.txt") },
        action_checkpoint: PathBuf::from("action.json"),
        slot_checkpoints: slot_files,
        other_svm: SvmRef::Inline(svm),
        lexicon: None,
        base_dir: a.out_dir.clone(),
    };
    cfg.save(&a.out_dir.join("config.json"))?;
    let pipeline = cfg.build()?;
    let report = evaluate(&pipeline, &test)?;
    writeln!(
        out,
        "test: action {:.4}, slot tokens {:.4}, frames {:.4}",
        report.action_accuracy, report.slot_token_accuracy, report.frame_accuracy
    )?;
    Ok(())
}
