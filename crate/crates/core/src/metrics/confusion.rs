//! Recognition trials tabulated into a confusion matrix.
//!
//! Trial log format is CSV with a header row `actual,predicted`; `predicted`
//! is a class name or `none` for a missed animal.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::ClassLabel;

use super::MetricsError;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Outcome {
    Class(ClassLabel),
    /// The animal was not recognized at all.
    Missed,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Class(c) => c.fmt(f),
            Outcome::Missed => f.write_str("none"),
        }
    }
}

impl std::str::FromStr for Outcome {
    type Err = MetricsError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim().eq_ignore_ascii_case("none") {
            return Ok(Outcome::Missed);
        }
        ClassLabel::new(s)
            .map(Outcome::Class)
            .map_err(|_| MetricsError::UnknownClass(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub actual: ClassLabel,
    pub predicted: Outcome,
}

/// Counts indexed by (actual class, predicted outcome). Columns are the class
/// list followed by a final `none` column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<ClassLabel>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<ClassLabel>) -> Self {
        let n = classes.len();
        Self {
            classes,
            counts: vec![vec![0; n + 1]; n],
        }
    }

    fn index(&self, c: &ClassLabel) -> Option<usize> {
        self.classes.iter().position(|x| x == c)
    }

    pub fn get(&self, actual: &ClassLabel, predicted: &Outcome) -> u64 {
        let Some(r) = self.index(actual) else { return 0 };
        let col = match predicted {
            Outcome::Class(c) => match self.index(c) {
                Some(i) => i,
                None => return 0,
            },
            Outcome::Missed => self.classes.len(),
        };
        self.counts[r][col]
    }

    pub fn row_total(&self, actual: &ClassLabel) -> u64 {
        self.index(actual)
            .map(|r| self.counts[r].iter().sum())
            .unwrap_or(0)
    }

    /// Correct recognitions over trials for `actual`; `None` when the class had
    /// no trials.
    pub fn accuracy(&self, actual: &ClassLabel) -> Option<f64> {
        let r = self.index(actual)?;
        let total: u64 = self.counts[r].iter().sum();
        (total > 0).then(|| self.counts[r][r] as f64 / total as f64)
    }

    pub fn accuracies(&self) -> BTreeMap<ClassLabel, Option<f64>> {
        self.classes
            .iter()
            .map(|c| (c.clone(), self.accuracy(c)))
            .collect()
    }

    pub fn record(&mut self, trial: &Trial) -> Result<(), MetricsError> {
        let r = self
            .index(&trial.actual)
            .ok_or_else(|| MetricsError::UnknownClass(trial.actual.to_string()))?;
        let col = match &trial.predicted {
            Outcome::Class(c) => self
                .index(c)
                .ok_or_else(|| MetricsError::UnknownClass(c.to_string()))?,
            Outcome::Missed => self.classes.len(),
        };
        self.counts[r][col] += 1;
        Ok(())
    }
}

pub fn confusion_from_trials(
    classes: &[ClassLabel],
    trials: &[Trial],
) -> Result<ConfusionMatrix, MetricsError> {
    let mut m = ConfusionMatrix::new(classes.to_vec());
    for t in trials {
        m.record(t)?;
    }
    Ok(m)
}

pub fn read_trial_log(path: &Path) -> Result<Vec<Trial>, MetricsError> {
    #[derive(Deserialize)]
    struct Row {
        actual: String,
        predicted: String,
    }
    let shown = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| MetricsError::TrialLog {
            path: shown.clone(),
            line: 0,
            msg: e.to_string(),
        })?;
    let mut out = Vec::new();
    for row in rdr.deserialize::<Row>() {
        let err = |line: u64, msg: String| MetricsError::TrialLog {
            path: shown.clone(),
            line,
            msg,
        };
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            err(line, e.to_string())
        })?;
        let actual = ClassLabel::new(&row.actual)
            .map_err(|_| MetricsError::UnknownClass(row.actual.clone()))?;
        out.push(Trial {
            actual,
            predicted: row.predicted.parse()?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(s: &str) -> ClassLabel {
        ClassLabel::new(s).unwrap()
    }

    fn trials(actual: &str, correct: usize, wrong: &[(&str, usize)]) -> Vec<Trial> {
        let mut v: Vec<Trial> = (0..correct)
            .map(|_| Trial {
                actual: c(actual),
                predicted: Outcome::Class(c(actual)),
            })
            .collect();
        for (p, n) in wrong {
            for _ in 0..*n {
                v.push(Trial {
                    actual: c(actual),
                    predicted: p.parse().unwrap(),
                });
            }
        }
        v
    }

    #[test]
    fn per_class_accuracy() {
        let classes = vec![c("boar"), c("elephant"), c("monkey")];
        let mut all = trials("boar", 17, &[("monkey", 2), ("none", 1)]);
        all.extend(trials("elephant", 18, &[("none", 2)]));
        let m = confusion_from_trials(&classes, &all).unwrap();
        assert_eq!(m.accuracy(&c("boar")), Some(0.85));
        assert_eq!(m.accuracy(&c("elephant")), Some(0.90));
        assert_eq!(m.accuracy(&c("monkey")), None);
        assert_eq!(m.row_total(&c("boar")), 20);
        assert_eq!(m.get(&c("boar"), &Outcome::Missed), 1);
    }

    #[test]
    fn unknown_class_rejected() {
        let classes = vec![c("boar")];
        let t = trials("tiger", 1, &[]);
        assert!(matches!(
            confusion_from_trials(&classes, &t),
            Err(MetricsError::UnknownClass(_))
        ));
        let t = trials("boar", 0, &[("tiger", 1)]);
        assert!(confusion_from_trials(&classes, &t).is_err());
    }

    #[test]
    fn reads_csv_log() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("trials.csv");
        std::fs::write(&p, "actual,predicted\n# comment\nBoar, boar\nboar,none\nmonkey,boar\n")
            .unwrap();
        let t = read_trial_log(&p).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t[1].predicted, Outcome::Missed);
        std::fs::write(&p, "actual,predicted\nboar\n").unwrap();
        assert!(read_trial_log(&p).is_err());
    }
}
