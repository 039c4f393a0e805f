//! Browser bindings: phrase splitting, in-page training of a small model and
//! parsing with it. Every export returns a JSON string.

use std::cell::RefCell;

use robocmd::action::train_action;
use robocmd::corpus::{generate_other_commands, rng_from_seed, tokenize, Dataset, Split, TaskSchema};
use robocmd::embed::Backend;
use robocmd::net::train::ModelSpec;
use robocmd::pipeline::{
    build_embedding, evaluate, generate_disjoint, other_svm_from_models, train_slot_models, Approach,
    EmbeddingSettings, Pipeline,
};
use robocmd::splitter::Splitter;
use serde_json::json;
use wasm_bindgen::prelude::*;

thread_local! {
    static MODEL: RefCell<Option<Pipeline>> = const { RefCell::new(None) };
}

/// Phrases of `text` with their token spans.
pub fn split_json(text: &str) -> String {
    let tokens = tokenize(text);
    let phrases: Vec<_> = Splitter::default()
        .split(&tokens)
        .iter()
        .map(|s| json!({"start": s.start, "end": s.end, "text": s.slice(&tokens).join(" ")}))
        .collect();
    json!({"tokens": tokens, "phrases": phrases}).to_string()
}

/// Trains a one-hot LSTM pipeline and stores it for [`understand_json`].
pub fn train_json(schema: &str, n: usize, epochs: usize, seed: u64) -> Result<String, String> {
    let schema = TaskSchema::builtin(schema).map_err(|e| e.to_string())?;
    if n < 20 || epochs == 0 {
        return Err("need at least 20 commands and one epoch".into());
    }
    let (train, test) = generate_disjoint(&schema, n, n / 4, seed);
    let mut rng = rng_from_seed(seed ^ 0x5eed);
    let other = generate_other_commands(n / 4, &mut rng).map_err(|e| e.to_string())?;
    let (gate, held): (Vec<_>, Vec<_>) = test.into_iter().enumerate().partition(|(i, _)| i % 2 == 0);
    let gate: Vec<_> = gate.into_iter().map(|(_, r)| r).collect();
    let held: Vec<_> = held.into_iter().map(|(_, r)| r).collect();

    let corpus: Vec<Vec<String>> = train.iter().chain(&other).map(|r| r.tokens.clone()).collect();
    let emb = build_embedding(Backend::OneHot, &corpus, &EmbeddingSettings::default()).map_err(|e| e.to_string())?;
    let train = Dataset::new(&schema.name, Split::Train, train);
    let spec = ModelSpec::new("LSTM-1x32".parse().map_err(|e: robocmd::Error| e.to_string())?, epochs, seed);
    let run = || -> robocmd::Result<(Pipeline, f64, f64)> {
        let (action, _) = train_action(&train, None, &schema, &emb, &spec)?;
        let svm = other_svm_from_models(&action, &emb, &gate, &other)?;
        let slots = train_slot_models(&train, None, &schema, &emb, &spec, Approach::Shared)?;
        let p = Pipeline::new(schema.clone(), Splitter::default(), emb.clone(), action, slots, Some(svm))?;
        let report = evaluate(&p, &Dataset::new(&schema.name, Split::Test, held.clone()))?;
        Ok((p, report.action_accuracy, report.slot_token_accuracy))
    };
    let (pipeline, action_acc, slot_acc) = run().map_err(|e| e.to_string())?;
    let summary = json!({
        "schema": schema.name,
        "vocabulary": emb.vocab.size(),
        "train": train.records.len(),
        "test": held.len(),
        "action_accuracy": action_acc,
        "slot_token_accuracy": slot_acc,
        "other_boundary": pipeline.other.map(|s| s.boundary()),
    });
    MODEL.with(|m| *m.borrow_mut() = Some(pipeline));
    Ok(summary.to_string())
}

/// Frames for `text` from the model trained last.
pub fn understand_json(text: &str) -> Result<String, String> {
    MODEL.with(|m| {
        let model = m.borrow();
        let p = model.as_ref().ok_or("train a model first")?;
        let frames = p.understand(text).map_err(|e| e.to_string())?;
        Ok(serde_json::Value::Array(frames.iter().map(|f| f.to_json()).collect()).to_string())
    })
}

#[wasm_bindgen]
pub fn split(text: &str) -> String {
    split_json(text)
}

#[wasm_bindgen]
pub fn train(schema: &str, n: usize, epochs: usize, seed: u32) -> Result<String, JsError> {
    train_json(schema, n, epochs, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn understand(text: &str) -> Result<String, JsError> {
    understand_json(text).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_reports_spans() {
        let v: serde_json::Value = serde_json::from_str(&split_json("Go to the kitchen, and grab the coke!")).unwrap();
        assert_eq!(v["phrases"][0]["text"], "go to the kitchen");
        assert_eq!(v["phrases"][1]["text"], "grab the coke");
        assert_eq!(v["phrases"][1]["end"], v["tokens"].as_array().unwrap().len());
    }

    #[test]
    fn train_then_understand() {
        assert!(understand_json("go to the kitchen").is_err());
        assert!(train_json("nope", 100, 1, 1).is_err());
        let summary: serde_json::Value = serde_json::from_str(&train_json("fbm3", 300, 4, 2).unwrap()).unwrap();
        assert!(summary["action_accuracy"].as_f64().unwrap() > 0.8, "{summary}");
        let frames: serde_json::Value = serde_json::from_str(&understand_json("go to the kitchen").unwrap()).unwrap();
        assert_eq!(frames.as_array().unwrap().len(), 1);
        assert_eq!(understand_json("").unwrap(), "[]");
    }
}
