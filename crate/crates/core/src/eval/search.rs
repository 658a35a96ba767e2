//! Synthetic searcher agents.
//!
//! The agents are a model, not a reproduction of human behaviour: they exist
//! to exercise the path-length metric and to show the direction of the
//! assistant's effect under a given answer error profile.

use std::time::Duration;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EvalError, Scenario, TrialAnnotation, TrialClass};
use crate::providers::mock::fnv1a;
use crate::text::normalize_label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub rooms_visited: Vec<String>,
    pub found: bool,
    #[serde(with = "crate::clock::serde_secs")]
    pub duration: Duration,
}

/// Room-entry events in the trace. Staying in a room is one entry;
/// coming back later is another.
pub fn path_length(trace: &SearchTrace) -> usize {
    let mut count = 0;
    let mut previous: Option<&str> = None;
    for room in &trace.rooms_visited {
        if previous != Some(room.as_str()) {
            count += 1;
        }
        previous = Some(room);
    }
    count
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStrategy {
    Baseline,
    AudioAssisted,
}

impl SearchStrategy {
    fn tag(self) -> &'static str {
        match self {
            SearchStrategy::Baseline => "baseline",
            SearchStrategy::AudioAssisted => "audio_assisted",
        }
    }
}

/// Probability of each kind of assistant answer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorProfile {
    pub correct: f64,
    pub incorrect_location: f64,
    pub object_misidentified: f64,
    pub no_object_detected: f64,
}

impl ErrorProfile {
    pub fn all_correct() -> Self {
        Self {
            correct: 1.0,
            incorrect_location: 0.0,
            object_misidentified: 0.0,
            no_object_detected: 0.0,
        }
    }

    /// Profile from per-class percentages that need not sum to 100: the
    /// correct rate is kept and the remainder is split among the error
    /// classes in proportion to their percentages.
    pub fn from_percentages(correct: f64, incorrect_location: f64, object_misidentified: f64, no_object: f64) -> Self {
        let c = correct / 100.0;
        let errors = incorrect_location + object_misidentified + no_object;
        let share = |x: f64| if errors > 0.0 { (1.0 - c) * x / errors } else { 0.0 };
        Self {
            correct: c,
            incorrect_location: share(incorrect_location),
            object_misidentified: share(object_misidentified),
            no_object_detected: share(no_object),
        }
    }

    /// Empirical profile of the audio-condition annotations.
    pub fn from_annotations(annotations: &[TrialAnnotation]) -> Result<Self, EvalError> {
        let audio: Vec<_> = annotations
            .iter()
            .filter(|a| a.condition == super::Condition::MemPal)
            .collect();
        if audio.is_empty() {
            return Err(EvalError::NoData);
        }
        let rate = |class| audio.iter().filter(|a| a.classification == class).count() as f64 / audio.len() as f64;
        Ok(Self {
            correct: rate(TrialClass::Correct),
            incorrect_location: rate(TrialClass::IncorrectLocation),
            object_misidentified: rate(TrialClass::ObjectMisidentified),
            no_object_detected: rate(TrialClass::NoObjectDetected),
        })
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let rates = [
            self.correct,
            self.incorrect_location,
            self.object_misidentified,
            self.no_object_detected,
        ];
        if rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(EvalError::InvalidProfile("rates must be finite and non-negative".into()));
        }
        let sum: f64 = rates.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(EvalError::InvalidProfile(format!("rates sum to {sum}, not 1")));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut impl Rng) -> TrialClass {
        let u: f64 = rng.random();
        let mut acc = self.correct;
        if u < acc {
            return TrialClass::Correct;
        }
        acc += self.incorrect_location;
        if u < acc {
            return TrialClass::IncorrectLocation;
        }
        acc += self.object_misidentified;
        if u < acc {
            return TrialClass::ObjectMisidentified;
        }
        TrialClass::NoObjectDetected
    }
}

/// How well a simulated person remembers where things are.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentModel {
    /// Probability of remembering a placement immediately after making it.
    pub memory_strength: f64,
    /// Time for that probability to halve. Infinite means no decay.
    pub memory_half_life_s: f64,
    /// Chance of spotting the object on entering its room while searching
    /// blind. A remembered placement is always spotted.
    pub detect_prob: f64,
}

impl Default for AgentModel {
    fn default() -> Self {
        Self {
            memory_strength: 0.6,
            memory_half_life_s: 1800.0,
            detect_prob: 0.8,
        }
    }
}

impl AgentModel {
    pub fn perfect() -> Self {
        Self {
            memory_strength: 1.0,
            memory_half_life_s: f64::INFINITY,
            detect_prob: 1.0,
        }
    }

    fn recall_prob(&self, elapsed_s: f64) -> f64 {
        let decay = if self.memory_half_life_s.is_infinite() {
            1.0
        } else {
            0.5f64.powf(elapsed_s / self.memory_half_life_s)
        };
        (self.memory_strength * decay).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub seed: u64,
    pub participants: usize,
    pub per_room_secs: f64,
    pub cap_secs: f64,
    /// Elapsed time between placing and searching when a trial does not
    /// give both timestamps; drawn uniformly from this range.
    pub elapsed_range_s: (f64, f64),
    pub agent: AgentModel,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            participants: 15,
            per_room_secs: 30.0,
            cap_secs: 180.0,
            elapsed_range_s: (300.0, 3600.0),
            agent: AgentModel::default(),
        }
    }
}

impl SearchConfig {
    /// Maximum number of room entries within the time cap.
    pub fn room_cap(&self) -> usize {
        (self.cap_secs / self.per_room_secs).ceil().max(1.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    pub strategy: SearchStrategy,
    pub trials: usize,
    pub found: usize,
    pub accuracy: f64,
    pub mean_path_length: f64,
    pub mean_duration_s: f64,
}

/// One searchable placement.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub object: String,
    pub room: String,
    pub elapsed_s: Option<f64>,
}

struct Walker<'a> {
    rooms: &'a [String],
    truth: &'a str,
    cap: usize,
    visited: Vec<String>,
}

impl Walker<'_> {
    fn enter(&mut self, room: &str) {
        self.visited.push(room.to_string());
    }

    fn full(&self) -> bool {
        self.visited.len() >= self.cap
    }

    /// Blind search: wander to a room other than the current one until the
    /// object is spotted or the budget runs out.
    fn wander(&mut self, rng: &mut impl Rng, detect_prob: f64) -> bool {
        while !self.full() {
            let current = self.visited.last().cloned();
            let options: Vec<&String> = self
                .rooms
                .iter()
                .filter(|r| current.as_deref() != Some(r.as_str()) || self.rooms.len() == 1)
                .collect();
            let next = (*options.choose(rng).expect("at least one room")).clone();
            self.enter(&next);
            if next == self.truth && rng.random_bool(detect_prob) {
                return true;
            }
        }
        false
    }
}

fn baseline(walker: &mut Walker<'_>, rng: &mut impl Rng, agent: &AgentModel, elapsed_s: f64) -> bool {
    if !walker.full() && rng.random_bool(agent.recall_prob(elapsed_s)) {
        let truth = walker.truth.to_string();
        walker.enter(&truth);
        return true;
    }
    walker.wander(rng, agent.detect_prob)
}

/// Simulate one search.
pub fn simulate_trial(
    rng: &mut impl Rng,
    rooms: &[String],
    placement: &Placement,
    strategy: SearchStrategy,
    profile: &ErrorProfile,
    config: &SearchConfig,
) -> SearchTrace {
    let elapsed_s = placement
        .elapsed_s
        .unwrap_or_else(|| rng.random_range(config.elapsed_range_s.0..=config.elapsed_range_s.1));
    let mut walker = Walker {
        rooms,
        truth: &placement.room,
        cap: config.room_cap(),
        visited: Vec::new(),
    };
    let found = match strategy {
        SearchStrategy::Baseline => baseline(&mut walker, rng, &config.agent, elapsed_s),
        SearchStrategy::AudioAssisted => match profile.sample(rng) {
            TrialClass::Correct => {
                walker.enter(&placement.room);
                true
            }
            TrialClass::IncorrectLocation | TrialClass::ObjectMisidentified => {
                let wrong: Vec<&String> = rooms.iter().filter(|r| **r != placement.room).collect();
                if let Some(room) = wrong.choose(rng) {
                    walker.enter(room);
                }
                baseline(&mut walker, rng, &config.agent, elapsed_s)
            }
            TrialClass::NoObjectDetected => baseline(&mut walker, rng, &config.agent, elapsed_s),
        },
    };
    let secs = (walker.visited.len() as f64 * config.per_room_secs).min(config.cap_secs);
    SearchTrace {
        rooms_visited: walker.visited,
        found,
        duration: Duration::from_secs_f64(secs),
    }
}

/// Run every participant through every placement.
pub fn simulate_search(
    rooms: &[String],
    placements: &[Placement],
    strategy: SearchStrategy,
    profile: &ErrorProfile,
    config: &SearchConfig,
) -> Result<SearchSummary, EvalError> {
    if rooms.is_empty() || placements.is_empty() {
        return Err(EvalError::ScenarioInvalid("search needs rooms and placements".into()));
    }
    if let Some(p) = placements.iter().find(|p| !rooms.contains(&p.room)) {
        return Err(EvalError::ScenarioInvalid(format!("{:?} is placed in unknown room {:?}", p.object, p.room)));
    }
    if config.per_room_secs <= 0.0 || config.cap_secs <= 0.0 || config.participants == 0 {
        return Err(EvalError::ScenarioInvalid("search budget and participants must be positive".into()));
    }
    profile.validate()?;

    let traces: Vec<SearchTrace> = (0..config.participants)
        .into_par_iter()
        .flat_map_iter(|participant| {
            let seed = fnv1a(
                config.seed,
                &[b"search", strategy.tag().as_bytes(), &(participant as u64).to_le_bytes()],
            );
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            placements
                .iter()
                .map(|p| simulate_trial(&mut rng, rooms, p, strategy, profile, config))
                .collect::<Vec<_>>()
        })
        .collect();

    let n = traces.len() as f64;
    let found = traces.iter().filter(|t| t.found).count();
    Ok(SearchSummary {
        strategy,
        trials: traces.len(),
        found,
        accuracy: found as f64 / n,
        mean_path_length: traces.iter().map(|t| path_length(t) as f64).sum::<f64>() / n,
        mean_duration_s: traces.iter().map(|t| t.duration.as_secs_f64()).sum::<f64>() / n,
    })
}

/// Rooms of the scenario home and every trial as a placement.
pub fn placements(scenario: &Scenario) -> Vec<Placement> {
    scenario
        .trials
        .iter()
        .map(|t| Placement {
            object: t.object.clone(),
            room: normalize_label(&t.truth_location),
            elapsed_s: match (t.placed_at, t.asked_at) {
                (Some(p), Some(a)) if a > p => Some((a - p).as_seconds_f64()),
                _ => None,
            },
        })
        .collect()
}

pub fn run_search_experiment(
    scenario: &Scenario,
    strategy: SearchStrategy,
    profile: &ErrorProfile,
    config: &SearchConfig,
) -> Result<SearchSummary, EvalError> {
    simulate_search(&scenario.room_labels(), &placements(scenario), strategy, profile, config)
}

/// Both strategies under one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchComparison {
    pub seed: u64,
    pub baseline: SearchSummary,
    pub audio_assisted: SearchSummary,
}

impl SearchComparison {
    pub fn assistant_shortens_paths(&self) -> bool {
        self.audio_assisted.mean_path_length < self.baseline.mean_path_length
    }
}

/// Independent experiments with seeds `base_seed .. base_seed + runs`.
pub fn monte_carlo(
    rooms: &[String],
    placements: &[Placement],
    profile: &ErrorProfile,
    config: &SearchConfig,
    base_seed: u64,
    runs: usize,
) -> Result<Vec<SearchComparison>, EvalError> {
    (0..runs as u64)
        .into_par_iter()
        .map(|i| {
            let config = SearchConfig {
                seed: base_seed + i,
                ..*config
            };
            Ok(SearchComparison {
                seed: config.seed,
                baseline: simulate_search(rooms, placements, SearchStrategy::Baseline, profile, &config)?,
                audio_assisted: simulate_search(rooms, placements, SearchStrategy::AudioAssisted, profile, &config)?,
            })
        })
        .collect()
}
