//! Architecture × embedding × approach comparison on generated data.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::eval::{evaluate, Counts, EvalReport};
use super::harness::{build_embedding, train_slot_models, EmbeddingSettings};
use super::{Approach, Pipeline};
use crate::action::{predict_action, train_action, ActionModel};
use crate::corpus::{generate_commands, generate_other_commands, rng_from_seed, Dataset, TaskSchema};
use crate::embed::{Backend, EmbeddingMatrix};
use crate::error::{bail, Error, Result};
use crate::net::train::ModelSpec;
use crate::net::Architecture;
use crate::splitter::Splitter;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Action,
    Slots,
    Frame,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Action => "action",
            Task::Slots => "slots",
            Task::Frame => "frame",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Task> {
        match s {
            "action" => Ok(Task::Action),
            "slots" | "slot" => Ok(Task::Slots),
            "frame" => Ok(Task::Frame),
            _ => bail!(Argument, "unknown task '{s}'"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSettings {
    /// Generated commands before the 80/10/10 split.
    pub n_records: usize,
    /// Extra unannotated commands added to the embedding corpus.
    pub embed_corpus: usize,
    pub epochs: usize,
    pub lr: f64,
    pub embedding: EmbeddingSettings,
    /// Classifier used to route slot filling; `None` uses the cell's architecture.
    pub action_architecture: Option<Architecture>,
}

impl Default for GridSettings {
    fn default() -> Self {
        GridSettings {
            n_records: 1000,
            embed_corpus: 2000,
            epochs: 10,
            lr: 0.01,
            embedding: EmbeddingSettings::default(),
            action_architecture: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub architecture: String,
    pub embedding: Backend,
    pub approach: Approach,
    pub task: Task,
    /// `None` when the cell failed.
    pub accuracy: Option<f64>,
    pub counts: Counts,
    pub error: Option<String>,
}

struct GridData {
    train: Dataset,
    validation: Dataset,
    test: Dataset,
    corpus: Vec<Vec<String>>,
}

fn prepare(schema: &TaskSchema, settings: &GridSettings, seed: u64) -> Result<GridData> {
    if settings.n_records < 10 {
        bail!(Argument, "need at least 10 records for an 80/10/10 split");
    }
    let mut rng = rng_from_seed(seed);
    let records = generate_commands(schema, settings.n_records, &mut rng);
    let (train, mut validation, mut test) = Dataset::split_80_10_10(&schema.name, records, seed);
    let seen: HashSet<Vec<String>> = train.records.iter().map(|r| r.tokens.clone()).collect();
    validation.records.retain(|r| !seen.contains(&r.tokens));
    test.records.retain(|r| !seen.contains(&r.tokens));
    if test.records.is_empty() {
        bail!(Training, "no test command differs from the training commands");
    }
    let mut corpus: Vec<Vec<String>> = train.records.iter().map(|r| r.tokens.clone()).collect();
    let mut erng = rng_from_seed(seed ^ 0x5eed_c0de);
    corpus.extend(generate_commands(schema, settings.embed_corpus, &mut erng).into_iter().map(|r| r.tokens));
    if settings.embed_corpus > 0 {
        corpus.extend(generate_other_commands(settings.embed_corpus / 4 + 1, &mut erng)?.into_iter().map(|r| r.tokens));
    }
    Ok(GridData { train, validation, test, corpus })
}

fn action_counts(model: &ActionModel, emb: &EmbeddingMatrix, test: &Dataset) -> Result<Counts> {
    let mut c = Counts::default();
    for rec in test.records.iter().filter(|r| !r.tokens.is_empty()) {
        let (pred, _) = predict_action(model, emb, &rec.tokens)?;
        c.record(true, true, pred == rec.action);
    }
    Ok(c)
}

/// Trains and scores every (architecture, embedding, approach, task) cell.
/// A failing cell yields a row with `accuracy: None` and the grid goes on.
pub fn run_experiment_grid(
    schema: &TaskSchema,
    architectures: &[Architecture],
    embeddings: &[Backend],
    approaches: &[Approach],
    tasks: &[Task],
    seed: u64,
    settings: &GridSettings,
) -> Result<Vec<GridRow>> {
    if architectures.is_empty() || embeddings.is_empty() || approaches.is_empty() || tasks.is_empty() {
        bail!(Argument, "architecture, embedding, approach and task lists must be non-empty");
    }
    let data = prepare(schema, settings, seed)?;
    let mut rows = Vec::new();
    for &backend in embeddings {
        let emb = build_embedding(backend, &data.corpus, &settings.embedding.with_seed(seed));
        let mut action_cache: BTreeMap<String, std::result::Result<ActionModel, String>> = BTreeMap::new();
        let mut get_action = |arch: &Architecture, emb: &EmbeddingMatrix| {
            action_cache
                .entry(arch.to_string())
                .or_insert_with(|| {
                    let mut spec = ModelSpec::new(*arch, settings.epochs, seed);
                    spec.train.lr = settings.lr;
                    train_action(&data.train, Some(&data.validation), schema, emb, &spec)
                        .map(|(m, _)| m)
                        .map_err(|e| e.to_string())
                })
                .clone()
        };
        for arch in architectures {
            for &approach in approaches {
                let mut report: Option<std::result::Result<EvalReport, String>> = None;
                for &task in tasks {
                    let outcome: std::result::Result<Counts, String> = match &emb {
                        Err(e) => Err(format!("embedding: {e}")),
                        Ok(emb) => match task {
                            Task::Action => {
                                get_action(arch, emb).and_then(|m| action_counts(&m, emb, &data.test).map_err(|e| e.to_string()))
                            }
                            Task::Slots | Task::Frame => {
                                let r = report.get_or_insert_with(|| {
                                    let router = get_action(&settings.action_architecture.unwrap_or(*arch), emb)?;
                                    let mut spec = ModelSpec::new(*arch, settings.epochs, seed);
                                    spec.train.lr = settings.lr;
                                    let slots = train_slot_models(&data.train, Some(&data.validation), schema, emb, &spec, approach)
                                        .map_err(|e| e.to_string())?;
                                    let pipeline =
                                        Pipeline::new(schema.clone(), Splitter::default(), emb.clone(), router, slots, None)
                                            .map_err(|e| e.to_string())?;
                                    evaluate(&pipeline, &data.test).map_err(|e| e.to_string())
                                });
                                r.clone().map(|r| if task == Task::Slots { r.slot_tokens } else { r.frame })
                            }
                        },
                    };
                    rows.push(match outcome {
                        Ok(counts) => GridRow {
                            architecture: arch.to_string(),
                            embedding: backend,
                            approach,
                            task,
                            accuracy: Some(counts.accuracy()),
                            counts,
                            error: None,
                        },
                        Err(e) => GridRow {
                            architecture: arch.to_string(),
                            embedding: backend,
                            approach,
                            task,
                            accuracy: None,
                            counts: Counts::default(),
                            error: Some(e),
                        },
                    });
                }
            }
        }
    }
    Ok(rows)
}

/// `architecture,embedding,approach,task,accuracy,tp,tn,fp,fn`; failed
/// cells print `failed` in the accuracy column and empty counts.
pub fn write_grid_csv<W: Write + ?Sized>(rows: &[GridRow], out: &mut W) -> Result<()> {
    writeln!(out, "architecture,embedding,approach,task,accuracy,tp,tn,fp,fn")?;
    for r in rows {
        let approach: u8 = r.approach.into();
        match r.accuracy {
            Some(acc) => writeln!(
                out,
                "{},{},{},{},{:.6},{},{},{},{}",
                r.architecture, r.embedding, approach, r.task, acc, r.counts.tp, r.counts.tn, r.counts.fp, r.counts.fn_
            )?,
            None => writeln!(out, "{},{},{},{},failed,,,,", r.architecture, r.embedding, approach, r.task)?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> GridSettings {
        GridSettings { n_records: 60, embed_corpus: 20, epochs: 1, ..GridSettings::default() }
    }

    #[test]
    fn empty_lists_rejected() {
        let schema = TaskSchema::gpsr();
        let r = run_experiment_grid(&schema, &[], &[Backend::OneHot], &[Approach::Shared], &[Task::Action], 1, &tiny());
        assert!(matches!(r, Err(Error::Argument(_))));
    }

    #[test]
    fn rows_per_cell_and_csv() {
        let schema = TaskSchema::fbm3();
        let archs: Vec<Architecture> = ["RNN-1x8", "LSTM-1x8"].iter().map(|a| a.parse().unwrap()).collect();
        let rows =
            run_experiment_grid(&schema, &archs, &[Backend::OneHot], &[Approach::Shared], &[Task::Action], 2, &tiny())
                .unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.accuracy.is_some()));
        let mut buf = Vec::new();
        write_grid_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("architecture,embedding,approach,task,accuracy,tp,tn,fp,fn\n"));
    }

    #[test]
    fn failed_cell_is_recorded() {
        let schema = TaskSchema::fbm3();
        let arch: Architecture = "LSTM-1x4".parse().unwrap();
        let mut s = tiny();
        s.lr = f64::NAN;
        let rows = run_experiment_grid(&schema, &[arch], &[Backend::OneHot], &[Approach::Shared], &[Task::Action, Task::Slots], 1, &s)
            .unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.accuracy.is_none() && r.error.is_some()));
    }
}
