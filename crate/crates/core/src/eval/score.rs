use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::model::{manifest_hash, DatasetManifest, MatchType};

use super::EvalError;

/// A percentage held as integer hundredths, rounded half-up from a ratio.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Percent(u32);

impl Percent {
    pub const HUNDRED: Percent = Percent(10_000);

    /// `100 * num / den` to two decimals, half-up. `den` must be positive.
    pub fn from_ratio(num: u64, den: u64) -> Self {
        assert!(den > 0 && num <= den, "ratio {num}/{den} out of range");
        Percent(((20_000 * num + den) / (2 * den)) as u32)
    }

    pub fn from_hundredths(h: u32) -> Self {
        Percent(h)
    }

    pub fn hundredths(self) -> u32 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

impl std::str::FromStr for Percent {
    type Err = String;

    /// Accepts `42`, `42.6` or `42.65`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("not a percentage: {s:?}");
        let (int, frac) = s.trim().split_once('.').unwrap_or((s.trim(), ""));
        if int.is_empty() || frac.len() > 2 || !int.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let whole: u32 = int.parse().map_err(|_| bad())?;
        let cents: u32 = if frac.is_empty() { 0 } else { format!("{frac:0<2}").parse().map_err(|_| bad())? };
        let h = whole.checked_mul(100).and_then(|w| w.checked_add(cents)).ok_or_else(bad)?;
        if h > 10_000 {
            return Err(bad());
        }
        Ok(Percent(h))
    }
}

impl Serialize for Percent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Percent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub question_id: String,
    pub raw_text: String,
    pub extracted: Option<String>,
    pub latency_ms: u64,
    #[serde(default)]
    pub attempts: u32,
    /// Set when the model could not be asked; the entry scores as incorrect.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionLog {
    pub model: String,
    pub extractor: String,
    pub manifest_hash: String,
    pub entries: Vec<Prediction>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LogLine {
    Header {
        model: String,
        extractor: String,
        manifest_hash: String,
    },
    Prediction(Prediction),
}

impl PredictionLog {
    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header = LogLine::Header {
            model: self.model.clone(),
            extractor: self.extractor.clone(),
            manifest_hash: self.manifest_hash.clone(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for e in &self.entries {
            serde_json::to_writer(&mut w, &LogLine::Prediction(e.clone()))?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self, EvalError> {
        let mut header = None;
        let mut entries = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| EvalError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: LogLine = serde_json::from_str(&line).map_err(|e| EvalError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            match parsed {
                LogLine::Header { .. } if header.is_some() => {
                    return Err(EvalError::Parse {
                        line: i + 1,
                        message: "second header".into(),
                    })
                }
                LogLine::Header {
                    model,
                    extractor,
                    manifest_hash,
                } => header = Some((model, extractor, manifest_hash)),
                LogLine::Prediction(p) => entries.push(p),
            }
        }
        let (model, extractor, manifest_hash) = header.ok_or(EvalError::Parse {
            line: 0,
            message: "missing header".into(),
        })?;
        Ok(Self {
            model,
            extractor,
            manifest_hash,
            entries,
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, EvalError> {
        let f = std::fs::File::open(path).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
        Self::read(std::io::BufReader::new(f))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeScore {
    pub n: usize,
    pub correct: usize,
    /// `None` when no question carries the tag.
    pub accuracy: Option<Percent>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub manifest_hash: String,
    pub total: usize,
    pub correct: usize,
    /// No label could be extracted.
    pub unanswered: usize,
    /// The model could not be asked.
    pub failed: usize,
    pub overall: Percent,
    /// In leaderboard column order.
    pub per_type: Vec<(MatchType, TypeScore)>,
}

/// Accuracy over all questions and over each match type's subset.
pub fn score(manifest: &DatasetManifest, log: &PredictionLog) -> Result<EvalReport, EvalError> {
    let mut by_id: HashMap<&str, &Prediction> = HashMap::with_capacity(log.entries.len());
    let mut duplicates = BTreeSet::new();
    for e in &log.entries {
        if by_id.insert(&e.question_id, e).is_some() {
            duplicates.insert(e.question_id.clone());
        }
    }
    if !duplicates.is_empty() {
        return Err(EvalError::DuplicatePredictions(duplicates.into_iter().collect()));
    }
    let known: BTreeSet<&str> = manifest.questions.iter().map(|q| q.id.as_str()).collect();
    let missing: Vec<String> = manifest
        .questions
        .iter()
        .filter(|q| !by_id.contains_key(q.id.as_str()))
        .map(|q| q.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingPredictions(missing));
    }
    let mut unknown: Vec<String> =
        log.entries.iter().filter(|e| !known.contains(e.question_id.as_str())).map(|e| e.question_id.clone()).collect();
    if !unknown.is_empty() {
        unknown.sort();
        return Err(EvalError::UnknownPredictions(unknown));
    }
    if manifest.questions.is_empty() {
        return Err(EvalError::EmptyManifest);
    }

    let mut per_type: Vec<(MatchType, TypeScore)> = MatchType::ALL
        .iter()
        .map(|&t| {
            (
                t,
                TypeScore {
                    n: 0,
                    correct: 0,
                    accuracy: None,
                },
            )
        })
        .collect();
    let (mut correct, mut unanswered, mut failed) = (0, 0, 0);
    for q in &manifest.questions {
        let p = by_id[q.id.as_str()];
        let ok = p.error.is_none() && p.extracted.as_deref() == Some(q.answer.as_str());
        if p.error.is_some() {
            failed += 1;
        } else if p.extracted.is_none() {
            unanswered += 1;
        }
        correct += ok as usize;
        for t in q.evaluation_types() {
            let slot = &mut per_type.iter_mut().find(|(m, _)| *m == t).expect("every type listed").1;
            slot.n += 1;
            slot.correct += ok as usize;
        }
    }
    for (_, s) in &mut per_type {
        s.accuracy = (s.n > 0).then(|| Percent::from_ratio(s.correct as u64, s.n as u64));
    }
    Ok(EvalReport {
        model: log.model.clone(),
        manifest_hash: manifest_hash(manifest),
        total: manifest.questions.len(),
        correct,
        unanswered,
        failed,
        overall: Percent::from_ratio(correct as u64, manifest.questions.len() as u64),
        per_type,
    })
}
