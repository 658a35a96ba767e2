use std::sync::Arc;

use serde::Serialize;

use super::{
    accuracy_table, classify_trial, latency_report, run_search_experiment, Condition, Denominators, ErrorProfile,
    EvalError, Home, LatencyReport, Scenario, SearchConfig, SearchStrategy, SearchSummary, TrialAnnotation,
    TrialClass,
};
use crate::clock::{ManualClock, SharedClock};
use crate::engine::{Engine, EngineConfig, EngineError};
use crate::ingest::IngestStats;
use crate::providers::mock::{MockSettings, ScriptedVlm};
use crate::providers::{BatchFault, Providers, ScriptBook};
use crate::query::{Answer, AnswerPath};
use crate::text::normalize_object;

use super::AccuracyTable;

#[derive(Debug, Clone, PartialEq)]
pub struct ReplaySettings {
    pub mock: MockSettings,
    pub engine: EngineConfig,
    pub search: SearchConfig,
    /// Assistant answer profile for the simulated searchers. `None` uses the
    /// profile observed in this replay.
    pub profile: Option<ErrorProfile>,
}

impl Default for ReplaySettings {
    fn default() -> Self {
        Self {
            mock: MockSettings::default(),
            engine: EngineConfig {
                image_retention: 64,
                ..EngineConfig::default()
            },
            search: SearchConfig::default(),
            profile: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub object: String,
    pub condition: Condition,
    pub query: String,
    pub answer: Answer,
    pub classification: TrialClass,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayReport {
    pub scenario: String,
    pub calibration_id: String,
    pub rooms: Vec<String>,
    pub ingest: IngestStats,
    pub vlm_calls: usize,
    pub hands_batches: usize,
    pub trials: Vec<TrialResult>,
    /// Present when the scenario has both audio and visual trials.
    pub accuracy: Option<AccuracyTable>,
    pub latency: LatencyReport,
    pub search_profile: Option<ErrorProfile>,
    pub search: Vec<SearchSummary>,
    #[serde(skip)]
    pub diary_jsonl: String,
}

impl ReplayReport {
    pub fn annotations(&self) -> Vec<TrialAnnotation> {
        self.trials
            .iter()
            .map(|t| TrialAnnotation {
                object: t.object.clone(),
                condition: t.condition,
                classification: t.classification,
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Human-readable summary.
    pub fn render(&self) -> String {
        let mut out = format!(
            "scenario {} ({} rooms, {} batches, {} records, {} VLM calls)\n\n",
            self.scenario,
            self.rooms.len(),
            self.ingest.batches,
            self.ingest.records,
            self.vlm_calls
        );
        if let Some(table) = &self.accuracy {
            out.push_str("Object retrieval accuracy\n");
            out.push_str(&table.to_string());
            out.push('\n');
        }
        out.push_str("Processing time\n");
        out.push_str(&self.latency.to_string());
        out.push('\n');
        for s in &self.search {
            out.push_str(&format!(
                "{:<15} accuracy {:.3}  mean path length {:.3}  mean duration {:.1} s  ({} searches)\n",
                format!("{:?}", s.strategy),
                s.accuracy,
                s.mean_path_length,
                s.mean_duration_s,
                s.trials
            ));
        }
        out
    }
}

/// Run a scenario end to end against mock providers on a virtual clock.
pub fn replay(scenario: &Scenario, settings: &ReplaySettings) -> Result<ReplayReport, EvalError> {
    scenario.validate()?;
    let manual = ManualClock::shared();
    let clock: SharedClock = manual;
    let script = ScriptBook::new();
    for line in &scenario.batches {
        line.register(&script);
    }
    let vlm = Arc::new(ScriptedVlm::new(script.clone()).with_latency(settings.mock.latency.vlm, clock.clone()));
    let mut providers = Providers::mock_with(settings.mock, script, clock.clone());
    providers.vlm = vlm.clone();

    let config = EngineConfig {
        data_dir: None,
        trajectory_endpoint: None,
        ..settings.engine.clone()
    };
    let mut engine = Engine::new(config, providers, clock)?;
    let calibration = match &scenario.home {
        Home::Walkthrough(w) => engine.calibrate(w)?,
        Home::RoomMap(map) => engine.install_room_map(map.clone())?,
    };

    let mut batches: Vec<_> = scenario.batches.iter().collect();
    batches.sort_by_key(|b| b.t);
    for line in batches {
        engine.ingest(&line.batch())?;
    }

    let mut trials = Vec::new();
    for (i, trial) in scenario.trials.iter().enumerate() {
        let query = trial.spoken_query();
        let answer = match trial.condition {
            Condition::Baseline => continue,
            Condition::MemPal => {
                let asked_at = scenario.asked_at(i);
                engine
                    .query(&format!("trial-{i}"), &query, asked_at)?
                    .map(|r| r.answer)
                    .unwrap_or_else(Answer::not_found)
            }
            Condition::Visual => match engine.visual_aid(&trial.object) {
                Ok(aid) => Answer {
                    text: format!("{} in the {}", aid.detected_label, aid.location),
                    path: AnswerPath::ExactMatch,
                    supporting_record: Some(aid.record_id),
                    latency: std::time::Duration::ZERO,
                },
                Err(EngineError::NoSighting(_)) => Answer::not_found(),
                Err(err) => return Err(err.into()),
            },
        };
        let classification = classify_trial(&answer, engine.db(), trial);
        trials.push(TrialResult {
            object: normalize_object(&trial.object),
            condition: trial.condition,
            query,
            answer,
            classification,
        });
    }

    let annotations: Vec<TrialAnnotation> = trials
        .iter()
        .map(|t| TrialAnnotation {
            object: t.object.clone(),
            condition: t.condition,
            classification: t.classification,
        })
        .collect();
    let accuracy = accuracy_table(&annotations, &Denominators::from_annotations(&annotations)).ok();
    let latency = latency_report(engine.timings())?;
    let profile = match settings.profile {
        Some(p) => Some(p),
        None => ErrorProfile::from_annotations(&annotations).ok(),
    };
    let search = match profile {
        Some(p) => vec![
            run_search_experiment(scenario, SearchStrategy::Baseline, &p, &settings.search)?,
            run_search_experiment(scenario, SearchStrategy::AudioAssisted, &p, &settings.search)?,
        ],
        None => Vec::new(),
    };

    Ok(ReplayReport {
        scenario: scenario.name.clone(),
        calibration_id: calibration.calibration_id,
        rooms: calibration.rooms,
        ingest: engine.ingest_stats(),
        vlm_calls: vlm.call_count(),
        hands_batches: scenario
            .batches
            .iter()
            .filter(|b| b.hands == Some(true) && b.fault != Some(BatchFault::DetectorError))
            .count(),
        trials,
        accuracy,
        latency,
        search_profile: profile,
        search,
        diary_jsonl: engine.export(),
    })
}
