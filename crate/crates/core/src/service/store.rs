//! Append-only persistence for studies and review decisions.
//!
//! `studies.log`:   `<study_id> <unix_ts> <theta> <min_area> <rle...>`
//! `decisions.log`: `<unix_ts> <study_id> <verdict> <theta> "<note>"`
//!
//! Every append is flushed with `fsync`. A final line without a trailing
//! newline is treated as torn by a crash and dropped on reload.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const STUDIES_LOG: &str = "studies.log";
pub const DECISIONS_LOG: &str = "decisions.log";
pub const IMAGE_DIR: &str = "images";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{file} line {line}: {reason}")]
    Corrupt {
        file: &'static str,
        line: usize,
        reason: String,
    },
    #[error("unknown study {0}")]
    UnknownStudy(String),
    #[error("study {0} has already been reviewed")]
    AlreadyReviewed(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    OverridePositive,
    OverrideNegative,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Accept => "accept",
            Verdict::OverridePositive => "override_positive",
            Verdict::OverrideNegative => "override_negative",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "accept" => Ok(Verdict::Accept),
            "override_positive" => Ok(Verdict::OverridePositive),
            "override_negative" => Ok(Verdict::OverrideNegative),
            other => Err(format!("unknown verdict {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub verdict: Verdict,
    pub theta_used: f32,
    pub note: String,
    pub decided_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyStatus {
    Pending,
    Reviewed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub study_id: String,
    pub created_at: u64,
    pub theta: f32,
    pub min_area: usize,
    pub rle: String,
    pub status: StudyStatus,
    pub decision: Option<Decision>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReloadReport {
    pub torn_lines: Vec<&'static str>,
}

/// Image artefacts stored alongside a study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Artefact {
    Input,
    Probability,
    Overlay,
}

impl Artefact {
    fn suffix(self) -> &'static str {
        match self {
            Artefact::Input => "input",
            Artefact::Probability => "prob",
            Artefact::Overlay => "overlay",
        }
    }
}

#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    studies: BTreeMap<String, Study>,
    next_id: u64,
}

pub fn study_id(n: u64) -> String {
    format!("study-{n:06}")
}

fn now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// Complete lines of a log; a trailing partial line is reported as torn.
fn read_lines(path: &Path) -> Result<(Vec<String>, bool), StoreError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Vec::new(), false)),
        Err(e) => return Err(io_err(path)(e)),
    };
    let torn = !text.is_empty() && !text.ends_with('\n');
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    if torn {
        lines.pop();
    }
    Ok((lines, torn))
}

fn parse_study(line: &str) -> Result<Study, String> {
    let mut parts = line.splitn(5, ' ');
    let mut field = |what: &str| parts.next().ok_or_else(|| format!("missing {what}"));
    let study_id = field("study id")?.to_string();
    let created_at = field("timestamp")?.parse().map_err(|e| format!("timestamp: {e}"))?;
    let theta = field("theta")?.parse().map_err(|e| format!("theta: {e}"))?;
    let min_area = field("min_area")?.parse().map_err(|e| format!("min_area: {e}"))?;
    let rle = field("rle")?.to_string();
    Ok(Study {
        study_id,
        created_at,
        theta,
        min_area,
        rle,
        status: StudyStatus::Pending,
        decision: None,
    })
}

fn parse_decision(line: &str) -> Result<(String, Decision), String> {
    let mut parts = line.splitn(5, ' ');
    let mut field = |what: &str| parts.next().ok_or_else(|| format!("missing {what}"));
    let decided_at = field("timestamp")?.parse().map_err(|e| format!("timestamp: {e}"))?;
    let id = field("study id")?.to_string();
    let verdict = field("verdict")?.parse()?;
    let theta_used = field("theta")?.parse().map_err(|e| format!("theta: {e}"))?;
    let note: String = serde_json::from_str(field("note")?).map_err(|e| format!("note: {e}"))?;
    Ok((
        id,
        Decision {
            verdict,
            theta_used,
            note,
            decided_at,
        },
    ))
}

fn append_line(path: &Path, line: &str) -> Result<(), StoreError> {
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
    f.write_all(format!("{line}\n").as_bytes()).map_err(io_err(path))?;
    f.sync_all().map_err(io_err(path))
}

/// Drops a torn tail so the next append starts on a fresh line.
fn truncate_to_complete_lines(path: &Path) -> Result<(), StoreError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let f = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
    f.set_len(keep as u64).map_err(io_err(path))?;
    f.sync_all().map_err(io_err(path))
}

impl Store {
    /// Opens (creating if needed) a store and replays both logs.
    pub fn open(dir: &Path) -> Result<(Self, ReloadReport), StoreError> {
        fs::create_dir_all(dir.join(IMAGE_DIR)).map_err(io_err(dir))?;
        let mut report = ReloadReport::default();
        let mut studies = BTreeMap::new();
        let mut next_id = 1;

        let path = dir.join(STUDIES_LOG);
        let (lines, torn) = read_lines(&path)?;
        if torn {
            tracing::warn!(file = STUDIES_LOG, "dropping torn final line");
            truncate_to_complete_lines(&path)?;
            report.torn_lines.push(STUDIES_LOG);
        }
        for (i, line) in lines.iter().enumerate() {
            let study = parse_study(line).map_err(|reason| StoreError::Corrupt {
                file: STUDIES_LOG,
                line: i + 1,
                reason,
            })?;
            if let Some(n) = study.study_id.strip_prefix("study-").and_then(|n| n.parse::<u64>().ok()) {
                next_id = next_id.max(n + 1);
            }
            studies.insert(study.study_id.clone(), study);
        }

        let path = dir.join(DECISIONS_LOG);
        let (lines, torn) = read_lines(&path)?;
        if torn {
            tracing::warn!(file = DECISIONS_LOG, "dropping torn final line");
            truncate_to_complete_lines(&path)?;
            report.torn_lines.push(DECISIONS_LOG);
        }
        for (i, line) in lines.iter().enumerate() {
            let corrupt = |reason| StoreError::Corrupt {
                file: DECISIONS_LOG,
                line: i + 1,
                reason,
            };
            let (id, decision) = parse_decision(line).map_err(corrupt)?;
            let study = studies
                .get_mut(&id)
                .ok_or_else(|| corrupt(format!("decision for unknown study {id}")))?;
            study.status = StudyStatus::Reviewed;
            study.decision = Some(decision);
        }

        Ok((
            Self {
                dir: dir.to_path_buf(),
                studies,
                next_id,
            },
            report,
        ))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn list(&self) -> Vec<&Study> {
        self.studies.values().collect()
    }

    pub fn get(&self, id: &str) -> Option<&Study> {
        self.studies.get(id)
    }

    pub fn artefact_path(&self, id: &str, kind: Artefact) -> PathBuf {
        self.dir.join(IMAGE_DIR).join(format!("{id}.{}.png", kind.suffix()))
    }

    pub fn read_artefact(&self, id: &str, kind: Artefact) -> Result<Vec<u8>, StoreError> {
        let path = self.artefact_path(id, kind);
        fs::read(&path).map_err(io_err(&path))
    }

    /// Writes the images, then records the study. The log line is written
    /// last so a crash never leaves a logged study without its images.
    pub fn add_study(
        &mut self,
        rle: &str,
        theta: f32,
        min_area: usize,
        images: [(Artefact, &[u8]); 3],
    ) -> Result<Study, StoreError> {
        let id = study_id(self.next_id);
        for (kind, bytes) in images {
            let path = self.artefact_path(&id, kind);
            let mut f = File::create(&path).map_err(io_err(&path))?;
            f.write_all(bytes).map_err(io_err(&path))?;
            f.sync_all().map_err(io_err(&path))?;
        }
        let study = Study {
            study_id: id.clone(),
            created_at: now(),
            theta,
            min_area,
            rle: rle.to_string(),
            status: StudyStatus::Pending,
            decision: None,
        };
        append_line(
            &self.dir.join(STUDIES_LOG),
            &format!("{id} {} {theta} {min_area} {rle}", study.created_at),
        )?;
        self.next_id += 1;
        self.studies.insert(id, study.clone());
        Ok(study)
    }

    pub fn decide(&mut self, id: &str, verdict: Verdict, theta_used: f32, note: &str) -> Result<Study, StoreError> {
        let study = self
            .studies
            .get(id)
            .ok_or_else(|| StoreError::UnknownStudy(id.to_string()))?;
        if study.status == StudyStatus::Reviewed {
            return Err(StoreError::AlreadyReviewed(id.to_string()));
        }
        let decision = Decision {
            verdict,
            theta_used,
            note: note.to_string(),
            decided_at: now(),
        };
        let quoted = serde_json::to_string(note).expect("string serializes");
        append_line(
            &self.dir.join(DECISIONS_LOG),
            &format!("{} {id} {verdict} {theta_used} {quoted}", decision.decided_at),
        )?;
        let study = self.studies.get_mut(id).expect("checked above");
        study.status = StudyStatus::Reviewed;
        study.decision = Some(decision);
        Ok(study.clone())
    }
}
