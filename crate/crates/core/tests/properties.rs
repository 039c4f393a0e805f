use proptest::collection::vec;
use proptest::prelude::*;
use robocmd::corpus::{
    generate_command, generate_instruction, read_dataset, rng_from_seed, tokenize, write_dataset, Dataset, Split,
    TaskSchema,
};
use robocmd::net::checkpoint::Checkpoint;
use robocmd::net::gradcheck::check_gradients;
use robocmd::net::{Architecture, CellKind, ModelParams, OutputMode, SeqInput, SequenceModel};
use robocmd::pipeline::Counts;
use robocmd::slots::{decode_frames, post_filter, IobTag};
use robocmd::splitter::Splitter;

const SLOTS: [&str; 4] = ["object", "person", "destination", "source"];

/// Test-side IOB encoder: non-overlapping `(start, end, slot)` spans.
fn encode(n: usize, spans: &[(usize, usize, &str)]) -> Vec<IobTag> {
    let mut tags = vec![IobTag::Outside; n];
    for &(s, e, slot) in spans {
        tags[s] = IobTag::Begin(slot.into());
        for t in &mut tags[s + 1..e] {
            *t = IobTag::Inside(slot.into());
        }
    }
    tags
}

/// Random token count plus a non-overlapping span layout.
fn span_layout() -> impl Strategy<Value = (usize, Vec<(usize, usize, &'static str)>)> {
    vec((0usize..3, 1usize..4, 0usize..SLOTS.len()), 0..5).prop_map(|parts| {
        let mut spans = Vec::new();
        let mut pos = 0;
        for (gap, len, slot) in parts {
            let start = pos + gap;
            spans.push((start, start + len, SLOTS[slot]));
            pos = start + len;
        }
        (pos + 1, spans)
    })
}

fn any_tags() -> impl Strategy<Value = Vec<IobTag>> {
    vec(
        prop_oneof![
            Just(IobTag::Outside),
            (0..SLOTS.len()).prop_map(|i| IobTag::Begin(SLOTS[i].into())),
            (0..SLOTS.len()).prop_map(|i| IobTag::Inside(SLOTS[i].into())),
        ],
        1..15,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn generated_commands_are_consistent(seed in any::<u64>(), fbm3 in any::<bool>()) {
        let schema = if fbm3 { TaskSchema::fbm3() } else { TaskSchema::gpsr() };
        let rec = generate_command(&schema, None, &mut rng_from_seed(seed)).unwrap();
        prop_assert!(rec.validate().is_ok());
        prop_assert_eq!(rec.tokens.len(), rec.tags.len());
        prop_assert!(!rec.tokens.is_empty());
        let allowed = schema.allowed_slots(&rec.action).unwrap();
        prop_assert!(rec.slot_types().iter().all(|s| allowed.contains(s)));
        prop_assert_eq!(tokenize(&rec.tokens.join(" ")), rec.tokens.clone());
        prop_assert_eq!(generate_command(&schema, None, &mut rng_from_seed(seed)).unwrap(), rec);
    }
}

proptest! {
    #[test]
    fn tokenize_is_idempotent(text in "[a-zA-Z0-9 ,.!?'-]{0,60}") {
        let once = tokenize(&text);
        prop_assert_eq!(tokenize(&once.join(" ")), once.clone());
        prop_assert!(once.iter().all(|t| !t.is_empty() && t.chars().all(|c| c.is_ascii_lowercase())));
    }

    #[test]
    fn iob_round_trip((n, spans) in span_layout()) {
        let tokens: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
        let frame = decode_frames(&tokens, &encode(n, &spans));
        let mut back: Vec<(usize, usize, &str)> = frame
            .slots
            .iter()
            .flat_map(|(s, v)| v.iter().map(move |sp| (sp.start, sp.end, s.as_str())))
            .collect();
        back.sort();
        prop_assert_eq!(back, spans);
    }

    #[test]
    fn decoding_never_panics_and_spans_are_ordered(tags in any_tags()) {
        let tokens: Vec<String> = (0..tags.len()).map(|i| format!("w{i}")).collect();
        let frame = decode_frames(&tokens, &tags);
        for spans in frame.slots.values() {
            prop_assert!(spans.iter().all(|s| s.start < s.end && s.end <= tokens.len()));
        }
    }

    #[test]
    fn post_filter_closure_and_idempotence(tags in any_tags(), action_idx in 0usize..10) {
        let schema = TaskSchema::gpsr();
        let action = schema.actions[action_idx].name.clone();
        let allowed = schema.allowed_slots(&action).unwrap();
        let once = post_filter(&action, &tags, &schema).unwrap();
        prop_assert_eq!(once.len(), tags.len());
        prop_assert!(once.iter().all(|t| t.slot().is_none_or(|s| allowed.contains(s))));
        prop_assert_eq!(post_filter(&action, &once, &schema).unwrap(), once.clone());
        for (before, after) in tags.iter().zip(&once) {
            prop_assert!(after == before || after.is_outside());
        }
    }

    #[test]
    fn counts_accuracy_matches_ratio(tp in 0u64..1000, tn in 0u64..1000, fp in 0u64..1000, fn_ in 0u64..1000) {
        let c = Counts { tp, tn, fp, fn_ };
        let acc = c.accuracy();
        prop_assert!((0.0..=1.0).contains(&acc));
        if c.total() > 0 {
            prop_assert!((acc - (tp + tn) as f64 / (tp + tn + fp + fn_) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn splitter_recovers_generated_phrases(seed in any::<u64>(), k in 1usize..=3) {
        let schema = TaskSchema::gpsr();
        let inst = generate_instruction(&schema, k, &mut rng_from_seed(seed)).unwrap();
        let phrases = Splitter::default().phrases(&tokenize(&inst.text));
        let gold: Vec<Vec<String>> = inst.gold_commands.iter().map(|c| c.tokens.clone()).collect();
        prop_assert_eq!(phrases, gold);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn dataset_round_trip(seed in any::<u64>(), n in 1usize..40) {
        let schema = TaskSchema::fbm3();
        let mut rng = rng_from_seed(seed);
        let records = (0..n).map(|_| generate_command(&schema, None, &mut rng).unwrap()).collect();
        let ds = Dataset::new("fbm3", Split::Test, records);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        write_dataset(&ds, &path).unwrap();
        prop_assert_eq!(read_dataset(&path, &schema, Split::Test).unwrap(), ds);
    }

    #[test]
    fn checkpoint_round_trip(
        lstm in any::<bool>(),
        layers in 1usize..3,
        hidden in 1usize..5,
        bi in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let cell = if lstm { CellKind::Lstm } else { CellKind::Rnn };
        let config = Architecture::new(cell, layers, hidden, bi).config(6, 3, OutputMode::LastStep, seed);
        let model = SequenceModel::new(config).unwrap();
        let labels = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let ck = Checkpoint::from_model("action", &model, &labels, "abc", None);
        let back = Checkpoint::from_json(&ck.to_json()).unwrap();
        prop_assert_eq!(back.to_model().unwrap(), model);
    }

    #[test]
    fn gradients_match_finite_differences(
        lstm in any::<bool>(),
        layers in 1usize..3,
        bi in any::<bool>(),
        per_step in any::<bool>(),
        t in 1usize..7,
        seed in any::<u64>(),
    ) {
        let cell = if lstm { CellKind::Lstm } else { CellKind::Rnn };
        let mode = if per_step { OutputMode::PerStep } else { OutputMode::LastStep };
        let config = Architecture::new(cell, layers, 2, bi).config(3, 3, mode, seed);
        let params = ModelParams::init(&config);
        let ids: Vec<usize> = (0..t).map(|i| (seed as usize + i) % 3).collect();
        let input = SeqInput::OneHot { ids, dim: 3 };
        let targets: Vec<usize> = (0..if per_step { t } else { 1 }).map(|i| (i * 7 + seed as usize) % 3).collect();
        for c in check_gradients(&config, &params, &input, &targets, 1e-5).unwrap() {
            prop_assert!(c.rel_error < 1e-4, "{} rel error {}", c.name, c.rel_error);
        }
    }
}
