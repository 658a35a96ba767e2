use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Condition, EvalError, Trial};
use crate::query::Answer;
use crate::store::ActivitiesDb;
use crate::text::normalize_object;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TrialClass {
    Correct,
    IncorrectLocation,
    ObjectMisidentified,
    NoObjectDetected,
}

impl TrialClass {
    pub const ALL: [TrialClass; 4] = [
        TrialClass::Correct,
        TrialClass::IncorrectLocation,
        TrialClass::ObjectMisidentified,
        TrialClass::NoObjectDetected,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialAnnotation {
    pub object: String,
    pub condition: Condition,
    pub classification: TrialClass,
}

/// Label one retrieval trial.
///
/// * no record mentions the object: `NoObjectDetected`
/// * the answer cites no record, cites one that does not hold the object,
///   or the record logged at the placement time names something else:
///   `ObjectMisidentified`
/// * the cited record is in the wrong room: `IncorrectLocation` (not
///   checked for the visual condition, where the user reads the room off
///   the image)
/// * otherwise `Correct`
pub fn classify_trial(answer: &Answer, db: &ActivitiesDb, trial: &Trial) -> TrialClass {
    let object = normalize_object(&trial.object);
    if db.filter_exact(&object).is_empty() {
        return TrialClass::NoObjectDetected;
    }
    let Some(support) = answer.supporting_record.and_then(|id| db.get(id)) else {
        return TrialClass::ObjectMisidentified;
    };
    if !support.mentions(&object) {
        return TrialClass::ObjectMisidentified;
    }
    if let Some(placed_at) = trial.placed_at {
        let decisive = db.records().iter().find(|r| r.timestamp == placed_at);
        if decisive.is_some_and(|r| !r.mentions(&object)) {
            return TrialClass::ObjectMisidentified;
        }
    }
    if trial.condition != Condition::Visual && support.location != normalize_object(&trial.truth_location) {
        return TrialClass::IncorrectLocation;
    }
    TrialClass::Correct
}

/// Column of the accuracy table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AccuracyColumn {
    CorrectMemPal,
    CorrectVisual,
    IncorrectLocation,
    NoObjectDetected,
    ObjectMisidentified,
}

impl AccuracyColumn {
    pub const ALL: [AccuracyColumn; 5] = [
        AccuracyColumn::CorrectMemPal,
        AccuracyColumn::CorrectVisual,
        AccuracyColumn::IncorrectLocation,
        AccuracyColumn::NoObjectDetected,
        AccuracyColumn::ObjectMisidentified,
    ];

    pub fn title(self) -> &'static str {
        match self {
            AccuracyColumn::CorrectMemPal => "Correct (MemPal)",
            AccuracyColumn::CorrectVisual => "Correct (Visual)",
            AccuracyColumn::IncorrectLocation => "Incorrect location",
            AccuracyColumn::NoObjectDetected => "No object detected",
            AccuracyColumn::ObjectMisidentified => "Object misidentified",
        }
    }

    fn counts(self, a: &TrialAnnotation) -> bool {
        match self {
            AccuracyColumn::CorrectMemPal => a.condition == Condition::MemPal && a.classification == TrialClass::Correct,
            AccuracyColumn::CorrectVisual => a.condition == Condition::Visual && a.classification == TrialClass::Correct,
            AccuracyColumn::IncorrectLocation => a.classification == TrialClass::IncorrectLocation,
            AccuracyColumn::NoObjectDetected => a.classification == TrialClass::NoObjectDetected,
            AccuracyColumn::ObjectMisidentified => a.classification == TrialClass::ObjectMisidentified,
        }
    }
}

/// Trial totals each column is divided by. Audio answers are judged over
/// the audio trials; missing objects over every trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Denominators {
    pub correct_mempal: usize,
    pub correct_visual: usize,
    pub incorrect_location: usize,
    pub no_object_detected: usize,
    pub object_misidentified: usize,
}

impl Denominators {
    /// Derive totals from the conditions present in `annotations`.
    pub fn from_annotations(annotations: &[TrialAnnotation]) -> Self {
        let audio = annotations.iter().filter(|a| a.condition == Condition::MemPal).count();
        let visual = annotations.iter().filter(|a| a.condition == Condition::Visual).count();
        Self {
            correct_mempal: audio,
            correct_visual: visual,
            incorrect_location: audio,
            no_object_detected: audio + visual,
            object_misidentified: audio,
        }
    }

    fn get(&self, column: AccuracyColumn) -> usize {
        match column {
            AccuracyColumn::CorrectMemPal => self.correct_mempal,
            AccuracyColumn::CorrectVisual => self.correct_visual,
            AccuracyColumn::IncorrectLocation => self.incorrect_location,
            AccuracyColumn::NoObjectDetected => self.no_object_detected,
            AccuracyColumn::ObjectMisidentified => self.object_misidentified,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccuracyCell {
    pub column: AccuracyColumn,
    pub count: usize,
    pub total: usize,
    pub percent: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub cells: Vec<AccuracyCell>,
}

/// `100 * count / total` rounded to the nearest integer, halves up.
pub fn rounded_percent(count: usize, total: usize) -> Result<u32, EvalError> {
    if total == 0 {
        return Err(EvalError::ZeroDenominator);
    }
    if count > total {
        return Err(EvalError::CountExceedsTotal { count, total });
    }
    let (count, total) = (count as u128, total as u128);
    Ok(((200 * count + total) / (2 * total)) as u32)
}

pub fn accuracy_table(annotations: &[TrialAnnotation], denominators: &Denominators) -> Result<AccuracyTable, EvalError> {
    let cells = AccuracyColumn::ALL
        .iter()
        .map(|&column| {
            let count = annotations.iter().filter(|a| column.counts(a)).count();
            let total = denominators.get(column);
            Ok(AccuracyCell {
                column,
                count,
                total,
                percent: rounded_percent(count, total)?,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(AccuracyTable { cells })
}

impl AccuracyTable {
    pub fn cell(&self, column: AccuracyColumn) -> Option<&AccuracyCell> {
        self.cells.iter().find(|c| c.column == column)
    }
}

impl fmt::Display for AccuracyTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = 22;
        write!(f, "{:<16}", "")?;
        for c in &self.cells {
            write!(f, "{:>width$}", c.column.title())?;
        }
        writeln!(f)?;
        let rows: [(&str, Box<dyn Fn(&AccuracyCell) -> String>); 3] = [
            ("Count", Box::new(|c| c.count.to_string())),
            ("Total Count", Box::new(|c| c.total.to_string())),
            ("Percent (%)", Box::new(|c| format!("{}%", c.percent))),
        ];
        for (label, value) in rows {
            write!(f, "{label:<16}")?;
            for c in &self.cells {
                write!(f, "{:>width$}", value(c))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
