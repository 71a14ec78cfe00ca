//! Trial records, their CSV form, and summary statistics.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::geometry::{Point2, fixation_error};

pub const RESULTS_HEADER: [&str; 10] = [
    "experiment",
    "subject",
    "point_id",
    "target_x_cm",
    "target_y_cm",
    "realized_x_cm",
    "realized_y_cm",
    "e_d_cm",
    "pick",
    "place",
];

pub const STATS_HEADER: [&str; 6] = ["point_id", "n", "mean_cm", "std_cm", "min_cm", "max_cm"];

/// Point id of the pooled row in the stats table.
pub const OVERALL_ID: &str = "all";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Accuracy,
    #[serde(rename = "robot")]
    RobotAccuracy,
    #[serde(rename = "pickplace")]
    PickPlace,
}

impl Experiment {
    pub fn as_str(&self) -> &'static str {
        match self {
            Experiment::Accuracy => "accuracy",
            Experiment::RobotAccuracy => "robot",
            Experiment::PickPlace => "pickplace",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "accuracy" => Some(Experiment::Accuracy),
            "robot" => Some(Experiment::RobotAccuracy),
            "pickplace" => Some(Experiment::PickPlace),
            _ => None,
        }
    }
}

/// The `place` column: blank outside pick-and-place, `null` when the pick
/// failed and no place was attempted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlaceFlag {
    NotApplicable,
    Null,
    Done(bool),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub experiment: Experiment,
    pub subject: u32,
    pub point_id: String,
    pub target: Point2,
    pub realized: Point2,
    pub e_d: f64,
    pub pick: Option<bool>,
    pub place: PlaceFlag,
    /// Learning-phase repetition, excluded from rates and statistics.
    pub discarded: bool,
}

impl TrialRecord {
    pub fn new(experiment: Experiment, subject: u32, point_id: impl Into<String>, target: Point2, realized: Point2) -> Self {
        TrialRecord {
            experiment,
            subject,
            point_id: point_id.into(),
            target,
            realized,
            e_d: fixation_error(target, realized),
            pick: None,
            place: PlaceFlag::NotApplicable,
            discarded: false,
        }
    }

    /// Null place implies a failed pick.
    pub fn is_consistent(&self) -> bool {
        match self.place {
            PlaceFlag::Null => self.pick == Some(false),
            PlaceFlag::Done(_) => self.pick == Some(true),
            PlaceFlag::NotApplicable => self.experiment != Experiment::PickPlace,
        }
    }
}

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

pub fn write_records(w: impl Write, records: &[TrialRecord]) -> Result<(), EvalError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RESULTS_HEADER)?;
    for r in records {
        let pick = match r.pick {
            None => "",
            Some(true) => "1",
            Some(false) => "0",
        };
        let place = match r.place {
            PlaceFlag::NotApplicable => "",
            PlaceFlag::Null => "null",
            PlaceFlag::Done(true) => "1",
            PlaceFlag::Done(false) => "0",
        };
        out.write_record([
            r.experiment.as_str().to_string(),
            r.subject.to_string(),
            r.point_id.clone(),
            f6(r.target.x),
            f6(r.target.y),
            f6(r.realized.x),
            f6(r.realized.y),
            f6(r.e_d),
            pick.to_string(),
            place.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Inverse of [`write_records`]. Values come back at the file's precision and
/// `discarded` is left false.
pub fn read_records(r: impl Read) -> Result<Vec<TrialRecord>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != RESULTS_HEADER {
        return Err(EvalError::Malformed { line: 1, reason: format!("unexpected header {header:?}") });
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let bad = |reason: String| EvalError::Malformed { line, reason };
        if row.len() != RESULTS_HEADER.len() {
            return Err(bad(format!("expected {} fields, found {}", RESULTS_HEADER.len(), row.len())));
        }
        let num = |k: usize| row[k].parse::<f64>().map_err(|_| bad(format!("bad {} `{}`", RESULTS_HEADER[k], &row[k])));
        let experiment = Experiment::parse(&row[0]).ok_or_else(|| bad(format!("unknown experiment `{}`", &row[0])))?;
        let subject = row[1].parse().map_err(|_| bad(format!("bad subject `{}`", &row[1])))?;
        let pick = match &row[8] {
            "" => None,
            "1" => Some(true),
            "0" => Some(false),
            v => return Err(bad(format!("bad pick `{v}`"))),
        };
        let place = match &row[9] {
            "" => PlaceFlag::NotApplicable,
            "null" => PlaceFlag::Null,
            "1" => PlaceFlag::Done(true),
            "0" => PlaceFlag::Done(false),
            v => return Err(bad(format!("bad place `{v}`"))),
        };
        out.push(TrialRecord {
            experiment,
            subject,
            point_id: row[2].to_string(),
            target: Point2::new(num(3)?, num(4)?),
            realized: Point2::new(num(5)?, num(6)?),
            e_d: num(7)?,
            pick,
            place,
            discarded: false,
        });
    }
    Ok(out)
}

pub fn export_csv(records: &[TrialRecord], path: impl AsRef<std::path::Path>) -> Result<(), EvalError> {
    let f = std::fs::File::create(path)?;
    write_records(std::io::BufWriter::new(f), records)
}

pub fn import_csv(path: impl AsRef<std::path::Path>) -> Result<Vec<TrialRecord>, EvalError> {
    read_records(std::fs::File::open(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointStats {
    pub point_id: String,
    pub n: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl PointStats {
    pub fn of(point_id: impl Into<String>, values: &[f64]) -> Result<Self, EvalError> {
        if values.is_empty() {
            return Err(EvalError::EmptyInput);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Ok(PointStats {
            point_id: point_id.into(),
            n: values.len(),
            mean,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    /// Sorted by point id.
    pub per_point: Vec<PointStats>,
    pub overall: PointStats,
    /// Point holding the largest single error.
    pub argmax_point: String,
}

/// Statistics over the records that are not flagged as discarded.
pub fn summarize(records: &[TrialRecord]) -> Result<Summary, EvalError> {
    let kept: Vec<&TrialRecord> = records.iter().filter(|r| !r.discarded).collect();
    if kept.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut by_point: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in &kept {
        by_point.entry(r.point_id.as_str()).or_default().push(r.e_d);
    }
    let per_point = by_point.iter().map(|(id, v)| PointStats::of(*id, v)).collect::<Result<Vec<_>, _>>()?;
    let all: Vec<f64> = kept.iter().map(|r| r.e_d).collect();
    let argmax = kept.iter().fold(kept[0], |best, r| if r.e_d > best.e_d { r } else { best });
    Ok(Summary { per_point, overall: PointStats::of(OVERALL_ID, &all)?, argmax_point: argmax.point_id.clone() })
}

pub fn write_stats(w: impl Write, summary: &Summary) -> Result<(), EvalError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(STATS_HEADER)?;
    for s in summary.per_point.iter().chain(std::iter::once(&summary.overall)) {
        out.write_record([s.point_id.clone(), s.n.to_string(), f6(s.mean), f6(s.std), f6(s.min), f6(s.max)])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PickPlaceRates {
    pub scored: usize,
    pub picks: usize,
    pub pick_rate: f64,
    /// Scored rows with a non-null place entry.
    pub place_attempts: usize,
    pub places: usize,
    /// `None` when no place was attempted.
    pub place_rate: Option<f64>,
}

pub fn pick_place_rates(records: &[TrialRecord]) -> Result<PickPlaceRates, EvalError> {
    let scored: Vec<&TrialRecord> =
        records.iter().filter(|r| r.experiment == Experiment::PickPlace && !r.discarded).collect();
    if scored.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let picks = scored.iter().filter(|r| r.pick == Some(true)).count();
    let attempts: Vec<bool> =
        scored.iter().filter_map(|r| if let PlaceFlag::Done(ok) = r.place { Some(ok) } else { None }).collect();
    let places = attempts.iter().filter(|&&ok| ok).count();
    Ok(PickPlaceRates {
        scored: scored.len(),
        picks,
        pick_rate: picks as f64 / scored.len() as f64,
        place_attempts: attempts.len(),
        places,
        place_rate: (!attempts.is_empty()).then(|| places as f64 / attempts.len() as f64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, e: f64) -> TrialRecord {
        TrialRecord::new(Experiment::Accuracy, 0, id, Point2::ORIGIN, Point2::new(e, 0.0))
    }

    #[test]
    fn single_record() {
        let s = summarize(&[rec("00", 2.0)]).unwrap();
        assert_eq!((s.overall.mean, s.overall.std, s.overall.n), (2.0, 0.0, 1));
    }

    #[test]
    fn population_std() {
        let rs: Vec<_> = [0.0, 3.0, 4.0, 5.0].iter().map(|&e| rec("11", e)).collect();
        let s = summarize(&rs).unwrap();
        assert!((s.overall.mean - 3.0).abs() < 1e-12);
        assert!((s.overall.std - 3.5f64.sqrt()).abs() < 1e-12);
        assert_eq!((s.overall.min, s.overall.max), (0.0, 5.0));
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(summarize(&[]), Err(EvalError::EmptyInput)));
        let mut r = rec("00", 1.0);
        r.discarded = true;
        assert!(matches!(summarize(&[r]), Err(EvalError::EmptyInput)));
    }

    #[test]
    fn argmax_and_ordering() {
        let rs = vec![rec("21", 1.0), rec("00", 3.65), rec("10", 0.5), rec("00", 0.1)];
        let s = summarize(&rs).unwrap();
        assert_eq!(s.argmax_point, "00");
        let ids: Vec<_> = s.per_point.iter().map(|p| p.point_id.as_str()).collect();
        assert_eq!(ids, ["00", "10", "21"]);
        let mut buf = Vec::new();
        write_stats(&mut buf, &s).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("point_id,n,mean_cm,std_cm,min_cm,max_cm\n00,2,1.875000,1.775000,0.100000,3.650000\n"));
        assert!(text.ends_with("all,4,1.312500,1.386711,0.100000,3.650000\n"), "{text}");
    }

    #[test]
    fn csv_roundtrip() {
        let mut a = TrialRecord::new(Experiment::PickPlace, 2, "10", Point2::new(14.25, 24.25), Point2::new(15.0, 23.5));
        a.pick = Some(false);
        a.place = PlaceFlag::Null;
        let mut b = a.clone();
        b.pick = Some(true);
        b.place = PlaceFlag::Done(true);
        let c = TrialRecord::new(Experiment::RobotAccuracy, 0, "22", Point2::new(1.0, 2.0), Point2::new(1.5, 2.25));
        let recs = vec![a, b, c];
        let mut buf = Vec::new();
        write_records(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("pickplace,2,10,14.250000,24.250000,15.000000,23.500000,1.060660,0,null\n"));
        let back = read_records(buf.as_slice()).unwrap();
        for (x, y) in back.iter().zip(&recs) {
            assert_eq!((x.experiment, x.subject, &x.point_id, x.pick, x.place), (y.experiment, y.subject, &y.point_id, y.pick, y.place));
            assert_eq!((x.target, x.realized), (y.target, y.realized));
            assert!((x.e_d - y.e_d).abs() <= 5e-7);
        }
        let mut again = Vec::new();
        write_records(&mut again, &back).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn malformed_csv() {
        assert!(read_records("a,b\n".as_bytes()).is_err());
        let bad = "experiment,subject,point_id,target_x_cm,target_y_cm,realized_x_cm,realized_y_cm,e_d_cm,pick,place\naccuracy,0,00,x,0,0,0,0,,\n";
        assert!(matches!(read_records(bad.as_bytes()), Err(EvalError::Malformed { line: 2, .. })));
    }

    #[test]
    fn rates_skip_discards_and_nulls() {
        let mk = |pick: bool, place: PlaceFlag, discarded: bool| {
            let mut r = TrialRecord::new(Experiment::PickPlace, 0, "10", Point2::ORIGIN, Point2::ORIGIN);
            r.pick = Some(pick);
            r.place = place;
            r.discarded = discarded;
            r
        };
        let rs = vec![
            mk(false, PlaceFlag::Null, true),
            mk(true, PlaceFlag::Done(true), false),
            mk(true, PlaceFlag::Done(false), false),
            mk(false, PlaceFlag::Null, false),
            mk(true, PlaceFlag::Done(true), false),
        ];
        let r = pick_place_rates(&rs).unwrap();
        assert_eq!((r.scored, r.picks, r.place_attempts, r.places), (4, 3, 3, 2));
        assert_eq!(r.pick_rate, 0.75);
        assert!(rs.iter().all(TrialRecord::is_consistent));
    }
}
