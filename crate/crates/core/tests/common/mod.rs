#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;

use chrono::{DateTime, Duration, TimeZone, Utc};
use mempal_core::embedding::EmbeddingVector;
use mempal_core::engine::{Engine, EngineConfig, Walkthrough};
use mempal_core::eval::{Home, Scenario};
use mempal_core::providers::mock::{MockSettings, ScriptedVlm};
use mempal_core::providers::{Providers, ScriptBook};
use mempal_core::spatial::{Room, RoomMap, ROOM_MAP_VERSION};
use mempal_core::store::{ActivitiesDb, NewRecord};
use mempal_core::{ManualClock, SharedClock};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn scenario_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/household/scenario.json")
}

pub fn household() -> Scenario {
    Scenario::load(&scenario_path()).expect("bundled scenario loads")
}

pub fn walkthrough(scenario: &Scenario) -> &Walkthrough {
    match &scenario.home {
        Home::Walkthrough(w) => w,
        Home::RoomMap(_) => panic!("household scenario ships a walkthrough"),
    }
}

pub fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 5, 2, 9, 0, 0).unwrap()
}

/// Engine on a virtual clock with scripted mocks. The VLM handle is
/// returned for call counting.
pub struct Rig {
    pub engine: Engine,
    pub vlm: Arc<ScriptedVlm>,
    pub script: ScriptBook,
    pub clock: Arc<ManualClock>,
}

pub fn rig(config: EngineConfig, settings: MockSettings) -> Rig {
    let clock = ManualClock::shared();
    let shared: SharedClock = clock.clone();
    let script = ScriptBook::new();
    let vlm = Arc::new(ScriptedVlm::new(script.clone()).with_latency(settings.latency.vlm, shared.clone()));
    let mut providers = Providers::mock_with(settings, script.clone(), shared.clone());
    providers.vlm = vlm.clone();
    let engine = Engine::new(config, providers, shared).expect("engine builds");
    Rig {
        engine,
        vlm,
        script,
        clock,
    }
}

/// Engine calibrated on the household walkthrough with every batch ingested.
pub fn household_rig(config: EngineConfig) -> Rig {
    let scenario = household();
    let mut r = rig(config, MockSettings::default());
    r.engine.calibrate(walkthrough(&scenario)).unwrap();
    for line in &scenario.batches {
        line.register(&r.script);
        r.engine.ingest(&line.batch()).unwrap();
    }
    r
}

pub fn random_unit(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= n;
    }
    v
}

pub const VOCAB: [&str; 12] = [
    "keys", "cup", "phone", "wallet", "glasses", "remote", "book", "watch", "ring", "tape", "mouse", "ruler",
];

/// Random diary: several sessions with increasing timestamps, random object
/// sets and embeddings; some embeddings are exact duplicates to exercise
/// tie-breaking.
pub fn random_diary(rng: &mut impl Rng, max_records: usize, dim: usize) -> ActivitiesDb {
    let mut db = ActivitiesDb::new(dim);
    let n = rng.random_range(1..=max_records);
    let sessions = rng.random_range(1..=3);
    let mut clocks = vec![t0(); sessions];
    let mut pool: Vec<Vec<f64>> = Vec::new();
    for i in 0..n {
        let s = rng.random_range(0..sessions);
        clocks[s] += Duration::seconds(rng.random_range(1..=600));
        let embedding = if !pool.is_empty() && rng.random_bool(0.1) {
            pool[rng.random_range(0..pool.len())].clone()
        } else {
            let v = random_unit(rng, dim);
            pool.push(v.clone());
            v
        };
        let count = rng.random_range(0..=2);
        let objects: Vec<String> = (0..count).map(|_| VOCAB[rng.random_range(0..VOCAB.len())].to_string()).collect();
        db.insert(NewRecord {
            session_id: format!("s{s}"),
            timestamp: clocks[s],
            location: ["kitchen", "hall", "study"][i % 3].to_string(),
            activity: format!("activity {i}"),
            objects_in_hand: objects,
            background: format!("surface {i}"),
            embedding: EmbeddingVector::new(embedding).unwrap(),
            source_batch: format!("b{i}"),
        })
        .unwrap();
    }
    db
}

/// Room map with one centroid per room on its own axis and the given
/// undirected edges.
pub fn axis_map(rooms: usize, edges: &[(usize, usize)]) -> RoomMap {
    let label = |i: usize| format!("r{i}");
    let mut adjacency: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for &(a, b) in edges {
        adjacency.entry(label(a)).or_default().insert(label(b));
        adjacency.entry(label(b)).or_default().insert(label(a));
    }
    RoomMap {
        version: ROOM_MAP_VERSION,
        calibration_id: "cal-axis".into(),
        created_at: t0(),
        rooms: (0..rooms)
            .map(|i| {
                let mut v = vec![0.0; rooms];
                v[i] = 1.0;
                Room {
                    label: label(i),
                    centroids: vec![EmbeddingVector::new(v).unwrap()],
                }
            })
            .collect(),
        adjacency,
    }
}

/// Random connected adjacency: a random spanning chain plus extra edges.
pub fn random_edges(rng: &mut impl Rng, rooms: usize) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..rooms).collect();
    for i in (1..rooms).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut edges: Vec<(usize, usize)> = order.windows(2).map(|w| (w[0], w[1])).collect();
    for a in 0..rooms {
        for b in a + 1..rooms {
            if rng.random_bool(0.15) {
                edges.push((a, b));
            }
        }
    }
    edges
}
