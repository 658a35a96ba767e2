mod common;

use chrono::Duration;
use mempal_core::embedding::EmbeddingVector;
use mempal_core::eval::{
    path_length, rounded_percent, simulate_trial, AgentModel, ErrorProfile, Placement, SearchConfig, SearchStrategy,
    SearchTrace,
};
use mempal_core::providers::{Providers, ScriptBook};
use mempal_core::query::{parse_query, Answer, AnswerPath, ChatSession, QueryConfig, QueryEngine, Turn};
use mempal_core::spatial::{localize, LocalizationParams, LocationEstimate, UNKNOWN_ROOM};
use mempal_core::ManualClock;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adjacency_is_symmetric_and_survives_renames(seed: u64, rooms in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let map = axis_map(rooms, &random_edges(&mut rng, rooms));
        prop_assert!(map.validate().is_ok());
        let labels = map.labels();
        for a in &labels {
            for b in &labels {
                prop_assert_eq!(map.are_adjacent(a, b), map.are_adjacent(b, a));
            }
        }
        let mut renamed = map.clone();
        let victim = &labels[rng.random_range(0..rooms)];
        renamed.rename(victim, "renamed room").unwrap();
        prop_assert!(renamed.validate().is_ok());
        prop_assert!(!renamed.contains(victim));
        for b in labels.iter().filter(|b| *b != victim) {
            prop_assert_eq!(map.are_adjacent(victim, b), renamed.are_adjacent("renamed room", b));
        }
        renamed.rename("renamed room", victim).unwrap();
        prop_assert_eq!(renamed, map);
    }

    #[test]
    fn localization_stays_on_the_map(seed: u64, rooms in 2usize..7, delta in 0.0f64..0.5, floor in -0.2f64..0.6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let map = axis_map(rooms, &random_edges(&mut rng, rooms));
        let params = LocalizationParams { hysteresis_margin: delta, unknown_threshold: floor };
        let frames: Vec<EmbeddingVector> =
            (0..30).map(|_| EmbeddingVector::new(random_unit(&mut rng, rooms)).unwrap()).collect();
        let run = || {
            let mut prev: Option<LocationEstimate> = None;
            let mut out = Vec::new();
            for f in &frames {
                let est = localize(f, &map, prev.as_ref(), &params, t0()).unwrap();
                out.push(est.clone());
                prev = Some(est);
            }
            out
        };
        let first = run();
        for est in &first {
            prop_assert!(est.room_label == UNKNOWN_ROOM || map.contains(&est.room_label));
            prop_assert!((0.0..=1.0).contains(&est.confidence));
        }
        prop_assert_eq!(first, run());
    }

    #[test]
    fn filter_and_topk_match_scans(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let db = random_diary(&mut rng, 80, 16);
        for object in VOCAB {
            let hits = db.filter_exact(object);
            prop_assert!(hits.iter().all(|r| r.mentions(object)));
            prop_assert_eq!(hits.len(), db.records().iter().filter(|r| r.mentions(object)).count());
            prop_assert!(hits.windows(2).all(|w| (w[0].timestamp, w[0].record_id) <= (w[1].timestamp, w[1].record_id)));
        }
        let q = EmbeddingVector::new(random_unit(&mut rng, 16)).unwrap();
        let k = rng.random_range(1..=db.len() + 3);
        let got = db.topk(&q, k).unwrap();
        prop_assert_eq!(got.len(), k.min(db.len()));
        let all = db.topk(&q, db.len()).unwrap();
        prop_assert_eq!(&all[..got.len()], &got[..]);
        prop_assert!(all.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn exact_answers_cite_the_newest_sighting(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clock = ManualClock::shared();
        let providers = Providers::mock(64, ScriptBook::new(), clock.clone());
        let config = QueryConfig::default();
        let engine = QueryEngine::new(&providers, clock.as_ref(), &config);
        let db = random_diary(&mut rng, 40, 64);
        let mut session = ChatSession::new("s", 20);
        for object in VOCAB {
            let (_, answer) = engine
                .ask(&format!("Pal, where is my {object}?"), &db, &mut session, t0() + Duration::days(2))
                .unwrap();
            match db.filter_exact(object).last() {
                Some(newest) => {
                    prop_assert_eq!(answer.path, AnswerPath::ExactMatch);
                    prop_assert_eq!(answer.supporting_record, Some(newest.record_id));
                }
                None => prop_assert_ne!(answer.path, AnswerPath::ExactMatch),
            }
            if answer.path != AnswerPath::NotFound {
                let id = answer.supporting_record.unwrap();
                prop_assert!(db.get(id).is_some());
            }
        }
    }

    #[test]
    fn sessions_are_bounded(cap in 1usize..30, turns in 0usize..80) {
        let mut session = ChatSession::new("s", cap);
        for i in 0..turns {
            let text = format!("Pal, where is my item{i}?");
            let intent = parse_query(&text, &session);
            session.push_turn(Turn::new(intent, &Answer::not_found(), None, t0()));
            prop_assert!(session.len() <= cap);
        }
        prop_assert_eq!(session.len(), turns.min(cap));
        if turns > 0 {
            let oldest = turns.saturating_sub(cap);
            let first = session.turns().next().unwrap();
            prop_assert_eq!(&first.query, &format!("Pal, where is my item{oldest}?"));
        }
    }

    #[test]
    fn percentages_match_float_rounding(total in 1usize..10_000, frac in 0.0f64..=1.0) {
        let count = ((total as f64) * frac).floor() as usize;
        let p = rounded_percent(count, total).unwrap();
        prop_assert!(p <= 100);
        prop_assert_eq!(p as f64, (100.0 * count as f64 / total as f64).round());
        prop_assert!(rounded_percent(total + 1, total).is_err());
    }

    #[test]
    fn search_paths(seed: u64, rooms in 2usize..7, strategy_audio: bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<String> = (0..rooms).map(|i| format!("r{i}")).collect();
        let placement = Placement {
            object: "keys".into(),
            room: labels[rng.random_range(0..rooms)].clone(),
            elapsed_s: None,
        };
        let strategy = if strategy_audio { SearchStrategy::AudioAssisted } else { SearchStrategy::Baseline };
        let profile = ErrorProfile::from_percentages(72.0, 22.0, 24.0, 12.0);
        let trace = simulate_trial(&mut rng, &labels, &placement, strategy, &profile, &SearchConfig::default());
        if trace.found {
            prop_assert!(path_length(&trace) >= 1);
            prop_assert_eq!(trace.rooms_visited.last(), Some(&placement.room));
        }
        let oracle = simulate_trial(
            &mut rng, &labels, &placement, SearchStrategy::AudioAssisted, &ErrorProfile::all_correct(),
            &SearchConfig::default(),
        );
        prop_assert!(oracle.found);
        prop_assert_eq!(path_length(&oracle), 1);
        let perfect = SearchConfig { agent: AgentModel::perfect(), ..SearchConfig::default() };
        let unaided = simulate_trial(&mut rng, &labels, &placement, SearchStrategy::Baseline, &profile, &perfect);
        prop_assert!(unaided.found);
    }
}

#[test]
fn path_length_collapses_repeats() {
    let trace = |rooms: &[&str]| SearchTrace {
        rooms_visited: rooms.iter().map(|r| r.to_string()).collect(),
        found: true,
        duration: std::time::Duration::ZERO,
    };
    assert_eq!(path_length(&trace(&["hall"])), 1);
    assert_eq!(path_length(&trace(&["hall", "hall", "study", "hall"])), 3);
    assert_eq!(path_length(&trace(&[])), 0);
}

#[test]
fn mock_embeddings_are_stable_across_instances() {
    let make = || Providers::mock(64, ScriptBook::new(), ManualClock::shared());
    let (a, b) = (make(), make());
    for text in ["keys in drawer", "Pal, where is my cup?"] {
        assert_eq!(a.text.embed_text(text).unwrap(), b.text.embed_text(text).unwrap());
    }
}
