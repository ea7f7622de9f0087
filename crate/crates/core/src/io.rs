//! Line-delimited JSON formats for reads and reports, and batch solving.
//!
//! Every line holds one record. Floats are written in the shortest form that
//! parses back to the same bits, so parse∘emit is the identity. Indices in
//! reports (breakpoints, events) are 1-based; branch assignments are run-length
//! encoded as `[bit, length]` pairs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forward::Read;
use crate::parallel::{self, Execution};
use crate::pdps::{self, PdpsConfig};
use crate::profile::TimingProfile;
use crate::pulse_model::PulseModel;
use crate::solver::{self, Event, EventKind, SolveError, SolveParams, SolveReport};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: unsupported report version {found} (expected {REPORT_VERSION})")]
    Version { line: usize, found: u64 },
    #[error("invalid record {id}: {msg}")]
    Invalid { id: String, msg: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadRecord {
    pub id: String,
    pub dx: f64,
    pub z: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_true: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_true: Option<Vec<u8>>,
}

impl ReadRecord {
    pub fn validate(&self) -> Result<(), IoError> {
        let bad = |msg: String| {
            Err(IoError::Invalid {
                id: self.id.clone(),
                msg,
            })
        };
        let n = self.z.len();
        if self.z.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("z must be finite and nonnegative".into());
        }
        if let Some(t) = &self.tau_true {
            if t.len() != n {
                return bad(format!("tau_true has {} entries, z has {n}", t.len()));
            }
        }
        if let Some(d) = &self.d_true {
            if d.len() != n {
                return bad(format!("d_true has {} entries, z has {n}", d.len()));
            }
            if d.iter().any(|&b| b > 1) {
                return bad("d_true entries must be 0 or 1".into());
            }
        }
        Ok(())
    }

    pub fn from_read(read: &Read) -> Self {
        ReadRecord {
            id: read.id.clone(),
            dx: read.dx,
            z: read.z.clone(),
            tau_true: read.ground_truth.as_ref().map(|t| t.values.clone()),
            d_true: read.ground_truth_d.clone(),
        }
    }

    pub fn to_read(&self) -> Result<Read, IoError> {
        self.validate()?;
        let invalid = |e: &dyn std::fmt::Display| IoError::Invalid {
            id: self.id.clone(),
            msg: e.to_string(),
        };
        let mut read = Read::new(self.id.clone(), self.z.clone(), self.dx).map_err(|e| invalid(&e))?;
        if let Some(t) = &self.tau_true {
            read.ground_truth = Some(TimingProfile::new(t.clone(), self.dx).map_err(|e| invalid(&e))?);
        }
        read.ground_truth_d = self.d_true.clone();
        Ok(read)
    }
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

pub fn parse_reads(text: &str) -> Result<Vec<ReadRecord>, IoError> {
    lines(text)
        .map(|(line, l)| {
            let r: ReadRecord = serde_json::from_str(l).map_err(|e| IoError::Malformed {
                line,
                msg: e.to_string(),
            })?;
            r.validate().map_err(|e| IoError::Malformed {
                line,
                msg: e.to_string(),
            })?;
            Ok(r)
        })
        .collect()
}

fn emit<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn emit_reads(records: &[ReadRecord]) -> String {
    emit(records)
}

pub fn rle_encode(d: &[u8]) -> Vec<(u8, usize)> {
    let mut runs: Vec<(u8, usize)> = Vec::new();
    for &b in d {
        match runs.last_mut() {
            Some((v, len)) if *v == b => *len += 1,
            _ => runs.push((b, 1)),
        }
    }
    runs
}

pub fn rle_decode(runs: &[(u8, usize)]) -> Vec<u8> {
    runs.iter()
        .flat_map(|&(v, len)| std::iter::repeat_n(v, len))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventRecord {
    pub kind: EventKind,
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<usize>,
    pub time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed: Option<f64>,
    pub direction: i8,
}

impl EventRecord {
    fn from_event(e: &Event) -> Self {
        EventRecord {
            kind: e.kind,
            index: e.index + 1,
            end: e.end.map(|x| x + 1),
            time: e.time,
            speed: e.speed,
            direction: e.direction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateRecord {
    pub d: Vec<(u8, usize)>,
    #[serde(rename = "F")]
    pub objective: Option<f64>,
    pub kkt: Option<f64>,
    pub ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Comparison with the ground truth of a simulated read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Recovery {
    pub max_abs_error: f64,
    pub rel_error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_agreement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportRecord {
    pub version: u32,
    pub id: String,
    pub solver: String,
    /// Grid spacing of the read in kb.
    pub dx: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub objective: Option<f64>,
    #[serde(default)]
    pub d_star: Vec<(u8, usize)>,
    #[serde(default)]
    pub tau_star: Vec<f64>,
    #[serde(default)]
    pub breakpoints: Vec<usize>,
    #[serde(default)]
    pub events: Vec<EventRecord>,
    #[serde(default)]
    pub per_candidate: Vec<CandidateRecord>,
    pub wall_ms: f64,
    #[serde(default)]
    pub flags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recovery: Option<Recovery>,
}

impl ReportRecord {
    pub fn from_report(read: &Read, r: &SolveReport) -> Self {
        let recovery = read.ground_truth.as_ref().map(|t| {
            let max_abs_error = r
                .tau_star
                .iter()
                .zip(&t.values)
                .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            let scale = t.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            Recovery {
                max_abs_error,
                rel_error: if scale > 0.0 { max_abs_error / scale } else { max_abs_error },
                d_agreement: read.ground_truth_d.as_ref().map(|d| {
                    let same = d.iter().zip(&r.d_star).filter(|(a, b)| a == b).count();
                    same as f64 / d.len() as f64
                }),
            }
        });
        ReportRecord {
            version: REPORT_VERSION,
            id: read.id.clone(),
            solver: r.solver.clone(),
            dx: read.dx,
            error: None,
            objective: Some(r.objective),
            d_star: rle_encode(&r.d_star),
            tau_star: r.tau_star.clone(),
            breakpoints: r.breakpoints.indices.iter().map(|i| i + 1).collect(),
            events: r.events.iter().map(EventRecord::from_event).collect(),
            per_candidate: r
                .per_candidate
                .iter()
                .map(|c| CandidateRecord {
                    d: rle_encode(&c.d),
                    objective: c.objective,
                    kkt: c.kkt,
                    ms: c.ms,
                    error: c.error.clone(),
                })
                .collect(),
            wall_ms: r.wall_ms,
            flags: r.flags.clone(),
            recovery,
        }
    }

    pub fn failed(read: &Read, method: Method, err: &SolveError) -> Self {
        ReportRecord {
            version: REPORT_VERSION,
            id: read.id.clone(),
            solver: method.name().to_string(),
            dx: read.dx,
            error: Some(err.to_string()),
            objective: None,
            d_star: Vec::new(),
            tau_star: Vec::new(),
            breakpoints: Vec::new(),
            events: Vec::new(),
            per_candidate: Vec::new(),
            wall_ms: 0.0,
            flags: Vec::new(),
            recovery: None,
        }
    }

    /// Copy with every timing field zeroed, for comparing runs.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.wall_ms = 0.0;
        for c in &mut r.per_candidate {
            c.ms = 0.0;
        }
        r
    }
}

pub fn parse_reports(text: &str) -> Result<Vec<ReportRecord>, IoError> {
    lines(text)
        .map(|(line, l)| {
            let malformed = |e: serde_json::Error| IoError::Malformed {
                line,
                msg: e.to_string(),
            };
            let value: serde_json::Value = serde_json::from_str(l).map_err(malformed)?;
            match value.get("version").and_then(|v| v.as_u64()) {
                Some(v) if v == u64::from(REPORT_VERSION) => {}
                Some(found) => return Err(IoError::Version { line, found }),
                None => {
                    return Err(IoError::Malformed {
                        line,
                        msg: "missing integer field `version`".into(),
                    })
                }
            }
            serde_json::from_value(value).map_err(malformed)
        })
        .collect()
}

pub fn emit_reports(records: &[ReportRecord]) -> String {
    emit(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    DnaInverse,
    PdpsAdapted,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::DnaInverse => "dna-inverse",
            Method::PdpsAdapted => "pdps-adapted",
        }
    }
}

/// Solves every read; results keep the input order.
pub fn solve_batch(
    model: &PulseModel,
    reads: &[Read],
    method: Method,
    params: &SolveParams,
    pdps_cfg: &PdpsConfig,
    execution: Execution,
) -> Vec<Result<SolveReport, SolveError>> {
    parallel::map(execution, reads, |read| match method {
        Method::DnaInverse => solver::dna_inverse(model, read, params),
        Method::PdpsAdapted => pdps::adapted_pdps(model, read, params, pdps_cfg),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rle_round_trip() {
        let d = vec![0, 0, 1, 1, 1, 0, 1];
        let runs = rle_encode(&d);
        assert_eq!(runs, vec![(0, 2), (1, 3), (0, 1), (1, 1)]);
        assert_eq!(rle_decode(&runs), d);
        assert!(rle_encode(&[]).is_empty());
    }

    #[test]
    fn reads_reject_bad_lines() {
        let ok = r#"{"id":"a","dx":0.1,"z":[0.1,0.2,0.3]}"#;
        assert_eq!(parse_reads(ok).unwrap().len(), 1);
        let neg = r#"{"id":"a","dx":0.1,"z":[0.1,-0.2,0.3]}"#;
        let text = format!("{ok}\n\n{neg}\n");
        match parse_reads(&text) {
            Err(IoError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let short = r#"{"id":"a","dx":0.1,"z":[0.1,0.2],"d_true":[0]}"#;
        assert!(parse_reads(short).is_err());
    }

    #[test]
    fn report_version_is_checked() {
        let read = Read::new("x", vec![0.0; 8], 0.1).unwrap();
        let rec = ReportRecord::failed(&read, Method::DnaInverse, &SolveError::NoCandidates);
        let text = emit_reports(&[rec.clone()]);
        assert_eq!(parse_reports(&text).unwrap(), vec![rec]);
        let v2 = text.replace("\"version\":1", "\"version\":2");
        assert!(matches!(parse_reports(&v2), Err(IoError::Version { found: 2, .. })));
    }

    #[test]
    fn floats_round_trip_bitwise() {
        let z = vec![0.1, 1.0 / 3.0, 2.0f64.sqrt(), 1e-300, 0.0];
        let rec = ReadRecord {
            id: "f".into(),
            dx: 0.1,
            z: z.clone(),
            tau_true: None,
            d_true: None,
        };
        let back = parse_reads(&emit_reads(&[rec])).unwrap();
        for (a, b) in back[0].z.iter().zip(&z) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
