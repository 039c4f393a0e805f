use std::collections::BTreeMap;
use std::sync::OnceLock;

use robocmd::action::{train_action, OtherSvm};
use robocmd::corpus::{
    generate_commands, generate_instruction, generate_other_commands, rng_from_seed, Dataset, Split, TaskSchema,
};
use robocmd::embed::{Backend, EmbeddingMatrix};
use robocmd::net::train::ModelSpec;
use robocmd::pipeline::{
    build_embedding, evaluate, evaluate_instructions, other_svm_from_models, train_slot_models, Approach,
    EmbeddingSettings, Pipeline, SlotModels,
};
use robocmd::splitter::Splitter;
use robocmd::{Error, OTHER};

struct Fixture {
    schema: TaskSchema,
    emb: EmbeddingMatrix,
    shared: Pipeline,
    per_action: Pipeline,
    test: Dataset,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let schema = TaskSchema::gpsr();
        let mut rng = rng_from_seed(5);
        let train = Dataset::new("gpsr", Split::Train, generate_commands(&schema, 600, &mut rng));
        let test = Dataset::new("gpsr", Split::Test, generate_commands(&schema, 100, &mut rng));
        let other = generate_other_commands(100, &mut rng).unwrap();
        let mut corpus: Vec<Vec<String>> = train.records.iter().chain(&other).map(|r| r.tokens.clone()).collect();
        corpus.extend(generate_commands(&schema, 600, &mut rng).into_iter().map(|r| r.tokens));
        let emb = build_embedding(Backend::OneHot, &corpus, &EmbeddingSettings::default()).unwrap();
        let spec = ModelSpec::new("LSTM-1x32".parse().unwrap(), 6, 5);
        let (action, _) = train_action(&train, None, &schema, &emb, &spec).unwrap();
        let svm = other_svm_from_models(&action, &emb, &test.records, &other).unwrap();
        let build = |approach| {
            let slots = train_slot_models(&train, None, &schema, &emb, &spec, approach).unwrap();
            Pipeline::new(schema.clone(), Splitter::default(), emb.clone(), action.clone(), slots, Some(svm)).unwrap()
        };
        let shared = build(Approach::Shared);
        let per_action = build(Approach::PerAction);
        Fixture { schema, emb, shared, per_action, test }
    })
}

fn values(frame: &robocmd::pipeline::CommandFrame, slot: &str) -> Vec<String> {
    frame.slots.values().get(slot).cloned().unwrap_or_default()
}

#[test]
fn two_command_instruction() {
    for p in [&fixture().shared, &fixture().per_action] {
        let frames = p.understand("go to the kitchen and grab the coke").unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[0].action, "motion");
        assert_eq!(values(&frames[0], "destination"), ["kitchen"]);
        assert_eq!(frames[1].action, "grasp");
        assert_eq!(values(&frames[1], "object"), ["coke"]);
    }
}

#[test]
fn out_of_set_command_is_rejected() {
    let frames = fixture().shared.understand("sing a song").unwrap();
    assert_eq!(frames.len(), 1);
    assert_eq!(frames[0].action, OTHER);
    assert!(frames[0].slots.is_empty());
}

#[test]
fn empty_instruction() {
    assert!(fixture().shared.understand("").unwrap().is_empty());
    assert!(fixture().shared.understand("  ?! 42 ").unwrap().is_empty());
}

#[test]
fn frame_json_shape() {
    let frames = fixture().shared.understand("go to the kitchen").unwrap();
    let v = frames[0].to_json();
    assert_eq!(v["action"], "motion");
    assert_eq!(v["slots"]["destination"][0], "kitchen");
    assert!(v["confidence"].is_f64());
}

#[test]
fn one_frame_per_phrase_and_closure() {
    let f = fixture();
    let mut rng = rng_from_seed(9);
    for _ in 0..50 {
        let inst = generate_instruction(&f.schema, 3, &mut rng).unwrap();
        let tokens = robocmd::corpus::tokenize(&inst.text);
        let frames = f.shared.understand(&inst.text).unwrap();
        assert_eq!(frames.len(), f.shared.splitter.split(&tokens).len());
        for frame in frames {
            if frame.action == OTHER {
                assert!(frame.slots.is_empty());
            } else {
                let allowed = f.schema.allowed_slots(&frame.action).unwrap();
                assert!(frame.slots.slots.keys().all(|s| allowed.contains(s)));
            }
        }
    }
}

#[test]
fn evaluation_counts_are_consistent() {
    let f = fixture();
    for p in [&f.shared, &f.per_action] {
        let r = evaluate(p, &f.test).unwrap();
        for (acc, c) in [(r.action_accuracy, r.action), (r.slot_token_accuracy, r.slot_tokens), (r.frame_accuracy, r.frame)] {
            assert!((acc - (c.tp + c.tn) as f64 / c.total() as f64).abs() < 1e-12);
        }
        assert_eq!(r.action.total(), f.test.records.len() as u64);
        assert_eq!(r.rejected_with_slots, 0);
        assert!(r.action_accuracy > 0.9, "{}", r.action_accuracy);
    }
}

#[test]
fn instruction_evaluation() {
    let f = fixture();
    let mut rng = rng_from_seed(10);
    let insts: Vec<_> = (0..30).map(|i| generate_instruction(&f.schema, 1 + i % 3, &mut rng).unwrap()).collect();
    let r = evaluate_instructions(&f.shared, &insts).unwrap();
    let commands: usize = insts.iter().map(|i| i.gold_commands.len()).sum();
    assert_eq!(r.commands, commands as u64);
    assert_eq!(r.split_mismatches, 0);
}

#[test]
fn schema_mismatch_is_a_validation_error() {
    let f = fixture();
    let fbm3 = Dataset::new("fbm3", Split::Test, generate_commands(&TaskSchema::fbm3(), 5, &mut rng_from_seed(1)));
    assert!(matches!(evaluate(&f.shared, &fbm3), Err(Error::Validation(_))));
}

#[test]
fn mismatched_embedding_is_a_config_error() {
    let f = fixture();
    let other_vocab = build_embedding(
        Backend::OneHot,
        &[vec!["just".to_string(), "words".to_string()]],
        &EmbeddingSettings::default(),
    )
    .unwrap();
    let r = Pipeline::new(
        f.schema.clone(),
        Splitter::default(),
        other_vocab,
        f.shared.action.clone(),
        f.shared.slots.clone(),
        None,
    );
    assert!(matches!(r, Err(Error::Config(_))));
}

#[test]
fn incomplete_per_action_map_is_a_config_error() {
    let f = fixture();
    let SlotModels::PerAction(map) = &f.per_action.slots else { panic!("approach 2 fixture") };
    let partial: BTreeMap<_, _> = map.iter().skip(1).map(|(k, v)| (k.clone(), v.clone())).collect();
    let r = Pipeline::new(
        f.schema.clone(),
        Splitter::default(),
        f.emb.clone(),
        f.shared.action.clone(),
        SlotModels::PerAction(partial),
        None,
    );
    assert!(matches!(r, Err(Error::Config(_))));
}

#[test]
fn gate_boundary_rejects_everything_above_scores() {
    let f = fixture();
    let mut p = f.shared.clone();
    p.other = Some(OtherSvm { w: 1.0, b: -1e6 });
    let frames = p.understand("go to the kitchen and grab the coke").unwrap();
    assert!(frames.iter().all(|fr| fr.action == OTHER && fr.slots.is_empty()));
}
