//! Dataset manifests for trees of hand captures: config-driven path parsing,
//! subject metadata, acquisition-protocol checks and summary statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::error::{Error, Result};
use crate::profile::Illumination;

/// From this subject ID on, both hands were recorded.
pub const BOTH_HANDS_FROM_ID: u32 = 72;
pub const MIN_SHOTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hand {
    Left,
    Right,
}

impl Hand {
    pub const ALL: [Hand; 2] = [Hand::Left, Hand::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            Hand::Left => "left",
            Hand::Right => "right",
        }
    }
}

impl fmt::Display for Hand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    M,
    F,
}

impl FromStr for Sex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "m" | "male" => Ok(Sex::M),
            "f" | "female" => Ok(Sex::F),
            other => Err(Error::CorruptData(format!("unknown sex {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject_id: u32,
    pub age: Option<u32>,
    pub sex: Option<Sex>,
    /// kg
    pub weight: Option<f64>,
    /// (systolic, diastolic) mmHg
    pub blood_pressure: Option<(u32, u32)>,
    /// Acquisition event tag, if known.
    pub event: Option<String>,
}

impl SubjectRecord {
    pub fn bare(subject_id: u32) -> Self {
        SubjectRecord {
            subject_id,
            age: None,
            sex: None,
            weight: None,
            blood_pressure: None,
            event: None,
        }
    }

    pub fn has_full_meta(&self) -> bool {
        self.age.is_some()
            && self.sex.is_some()
            && self.weight.is_some()
            && self.blood_pressure.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CaptureRecord {
    pub subject_id: u32,
    pub hand: Hand,
    pub illumination: Illumination,
    pub shot_index: u32,
    pub pumping: bool,
    /// Relative to the dataset root, `/`-separated.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub root: PathBuf,
    /// The subjects file the metadata came from, if one was found.
    pub subjects_source: Option<String>,
    pub subjects: Vec<SubjectRecord>,
    pub captures: Vec<CaptureRecord>,
    pub skipped: Vec<SkippedFile>,
}

/// Alias spellings accepted for each category value, compared case-insensitively.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandAliases {
    pub left: Vec<String>,
    pub right: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IlluminationAliases {
    pub transmitted: Vec<String>,
    pub reflected: Vec<String>,
}

/// How dataset paths encode capture attributes.
///
/// `pattern` is matched against root-relative `/`-separated paths and must
/// define the named groups `subject`, `hand`, `illumination` and `shot`; an
/// optional `pump` group marks the pumping shot when it matches non-empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Convention {
    pub pattern: String,
    #[serde(default)]
    pub ignore: Vec<String>,
    #[serde(default)]
    pub subjects_file: Option<String>,
    pub hand_aliases: HandAliases,
    pub illumination_aliases: IlluminationAliases,
}

const MIMIC_CONVENTION: &str = r#"
pattern = '^subject_(?P<subject>\d+)/(?P<hand>left|right)_(?P<illumination>transmitted|reflected)_(?P<shot>\d+)(?P<pump>_pump)?\.(?:pgm|png)$'
ignore = ['^manifest\.json$', '^truth/', '(^|/)\.']
subjects_file = "subjects.csv"

[hand_aliases]
left = ["left", "l"]
right = ["right", "r"]

[illumination_aliases]
transmitted = ["transmitted", "trans", "t"]
reflected = ["reflected", "refl"]
"#;

impl Default for Convention {
    /// The layout written by the database-mimic generator.
    fn default() -> Self {
        Convention::from_toml_str(MIMIC_CONVENTION).expect("built-in convention parses")
    }
}

impl Convention {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: Convention =
            toml::from_str(s).map_err(|e| Error::Convention(e.message().to_string()))?;
        c.compile()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
            _ => e.into(),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("convention serializes")
    }

    fn compile(&self) -> Result<Compiled> {
        let bad = |m: String| Error::Convention(m);
        let pattern = Regex::new(&self.pattern).map_err(|e| bad(format!("pattern: {e}")))?;
        let names: BTreeSet<&str> = pattern.capture_names().flatten().collect();
        for g in ["subject", "hand", "illumination", "shot"] {
            if !names.contains(g) {
                return Err(bad(format!("pattern lacks the named group {g:?}")));
            }
        }
        let ignore = self
            .ignore
            .iter()
            .map(|p| Regex::new(p).map_err(|e| bad(format!("ignore {p:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let lists = [
            (&self.hand_aliases.left, Value::Hand(Hand::Left)),
            (&self.hand_aliases.right, Value::Hand(Hand::Right)),
            (
                &self.illumination_aliases.transmitted,
                Value::Ill(Illumination::Transmitted),
            ),
            (
                &self.illumination_aliases.reflected,
                Value::Ill(Illumination::Reflected),
            ),
        ];
        let (mut hands, mut ills) = (BTreeMap::new(), BTreeMap::new());
        for (list, v) in lists {
            if list.is_empty() {
                return Err(bad(format!("no aliases for {v:?}")));
            }
            for a in list {
                let key = a.to_ascii_lowercase();
                let table = match v {
                    Value::Hand(h) => hands.insert(key.clone(), h).map(|_| ()),
                    Value::Ill(i) => ills.insert(key.clone(), i).map(|_| ()),
                };
                if table.is_some() {
                    return Err(bad(format!("alias {a:?} is listed twice")));
                }
            }
        }
        Ok(Compiled {
            pattern,
            ignore,
            hands,
            ills,
        })
    }
}

#[derive(Debug, Clone, Copy)]
enum Value {
    Hand(Hand),
    Ill(Illumination),
}

struct Compiled {
    pattern: Regex,
    ignore: Vec<Regex>,
    hands: BTreeMap<String, Hand>,
    ills: BTreeMap<String, Illumination>,
}

impl Compiled {
    fn parse(&self, rel: &str) -> std::result::Result<CaptureRecord, String> {
        let caps = self
            .pattern
            .captures(rel)
            .ok_or_else(|| "does not match the naming convention".to_string())?;
        let subject_id: u32 = caps["subject"]
            .parse()
            .map_err(|_| format!("bad subject id {:?}", &caps["subject"]))?;
        if subject_id == 0 {
            return Err("subject id must be positive".into());
        }
        let hand = *self
            .hands
            .get(&caps["hand"].to_ascii_lowercase())
            .ok_or_else(|| format!("unknown hand {:?}", &caps["hand"]))?;
        let illumination = *self
            .ills
            .get(&caps["illumination"].to_ascii_lowercase())
            .ok_or_else(|| format!("unknown illumination {:?}", &caps["illumination"]))?;
        let shot_index: u32 = caps["shot"]
            .parse()
            .map_err(|_| format!("bad shot index {:?}", &caps["shot"]))?;
        if shot_index == 0 {
            return Err("shot index must be >= 1".into());
        }
        let pumping = caps.name("pump").is_some_and(|m| !m.as_str().is_empty());
        Ok(CaptureRecord {
            subject_id,
            hand,
            illumination,
            shot_index,
            pumping,
            path: rel.to_string(),
        })
    }
}

/// CSV row layout of the subjects file.
#[derive(Debug, Serialize, Deserialize)]
struct SubjectRow {
    subject_id: u32,
    age: Option<u32>,
    sex: Option<String>,
    weight_kg: Option<f64>,
    bp_systolic: Option<u32>,
    bp_diastolic: Option<u32>,
    event: Option<String>,
}

pub fn read_subjects_csv(path: impl AsRef<Path>) -> Result<Vec<SubjectRecord>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| Error::CorruptData(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for row in rdr.deserialize::<SubjectRow>() {
        let r = row.map_err(|e| Error::CorruptData(format!("{}: {e}", path.display())))?;
        if !seen.insert(r.subject_id) {
            return Err(Error::CorruptData(format!(
                "duplicate subject id {}",
                r.subject_id
            )));
        }
        let sex = r
            .sex
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.parse())
            .transpose()?;
        let blood_pressure = match (r.bp_systolic, r.bp_diastolic) {
            (Some(s), Some(d)) => Some((s, d)),
            _ => None,
        };
        let positive = r.age.is_none_or(|a| a > 0)
            && r.weight_kg.is_none_or(|w| w > 0.0)
            && blood_pressure.is_none_or(|(s, d)| s > 0 && d > 0);
        if r.subject_id == 0 || !positive {
            return Err(Error::CorruptData(format!(
                "subject {}: ids and meta values must be positive",
                r.subject_id
            )));
        }
        out.push(SubjectRecord {
            subject_id: r.subject_id,
            age: r.age,
            sex,
            weight: r.weight_kg,
            blood_pressure,
            event: r.event.filter(|e| !e.is_empty()),
        });
    }
    out.sort_by_key(|s| s.subject_id);
    Ok(out)
}

pub fn subjects_csv(subjects: &[SubjectRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in subjects {
        w.serialize(SubjectRow {
            subject_id: s.subject_id,
            age: s.age,
            sex: s.sex.map(|x| match x {
                Sex::M => "m".into(),
                Sex::F => "f".into(),
            }),
            weight_kg: s.weight,
            bp_systolic: s.blood_pressure.map(|b| b.0),
            bp_diastolic: s.blood_pressure.map(|b| b.1),
            event: s.event.clone(),
        })
        .map_err(|e| Error::CorruptData(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Walks `root` and parses every file through `convention`. Output order is
/// independent of directory listing order.
pub fn scan_dataset(root: impl AsRef<Path>, convention: &Convention) -> Result<Manifest> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::NotFound(root.to_path_buf()));
    }
    let compiled = convention.compile()?;
    let mut captures = Vec::new();
    let mut skipped = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::Io(e.into()))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(root)
            .expect("walk stays under root");
        let rel = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        if convention.subjects_file.as_deref() == Some(rel.as_str())
            || compiled.ignore.iter().any(|r| r.is_match(&rel))
        {
            continue;
        }
        match compiled.parse(&rel) {
            Ok(c) => captures.push(c),
            Err(reason) => skipped.push(SkippedFile { path: rel, reason }),
        }
    }
    captures.sort();
    skipped.sort_by(|a, b| a.path.cmp(&b.path));

    let mut subjects_source = None;
    let mut subjects = Vec::new();
    if let Some(name) = &convention.subjects_file {
        let p = root.join(name);
        if p.is_file() {
            subjects = read_subjects_csv(&p)?;
            subjects_source = Some(name.clone());
        }
    }
    if subjects_source.is_none() {
        let ids: BTreeSet<u32> = captures.iter().map(|c| c.subject_id).collect();
        subjects = ids.into_iter().map(SubjectRecord::bare).collect();
    }
    Ok(Manifest {
        root: root.to_path_buf(),
        subjects_source,
        subjects,
        captures,
        skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    TooFewShots,
    MissingPumpFlag,
    PumpNotFinal,
    DuplicateShot,
    UnregisteredSubject,
    /// Warning: a right-hand capture before both hands were recorded.
    LeftHandEra,
    /// Warning: subject metadata incomplete.
    MissingMeta,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub kind: FindingKind,
    pub subject_id: u32,
    pub hand: Option<Hand>,
    pub illumination: Option<Illumination>,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolReport {
    /// Hard violations.
    pub violations: Vec<Finding>,
    pub warnings: Vec<Finding>,
}

impl ProtocolReport {
    pub fn is_conforming(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks each (subject, hand, illumination) shot sequence against the
/// capture protocol: at least three shots, pumping on the final shot only,
/// unique shot indices.
pub fn validate_protocol(m: &Manifest) -> ProtocolReport {
    let mut report = ProtocolReport::default();
    let mut seqs: BTreeMap<(u32, Hand, Illumination), Vec<&CaptureRecord>> = BTreeMap::new();
    for c in &m.captures {
        seqs.entry((c.subject_id, c.hand, c.illumination))
            .or_default()
            .push(c);
    }
    let known: BTreeSet<u32> = m.subjects.iter().map(|s| s.subject_id).collect();
    let mut push = |warn: bool,
                    kind,
                    (id, hand, ill): (u32, Option<Hand>, Option<Illumination>),
                    detail: String| {
        let f = Finding {
            kind,
            subject_id: id,
            hand,
            illumination: ill,
            detail,
        };
        if warn {
            report.warnings.push(f)
        } else {
            report.violations.push(f)
        }
    };
    for (&(id, hand, ill), shots) in &seqs {
        let at = (id, Some(hand), Some(ill));
        let mut seen = BTreeSet::new();
        for s in shots {
            if !seen.insert(s.shot_index) {
                push(
                    false,
                    FindingKind::DuplicateShot,
                    at,
                    format!("shot {} appears more than once", s.shot_index),
                );
            }
        }
        if seen.len() < MIN_SHOTS {
            push(
                false,
                FindingKind::TooFewShots,
                at,
                format!("{} shots, need at least {MIN_SHOTS}", seen.len()),
            );
        }
        let last = *seen.iter().next_back().expect("non-empty sequence");
        if !shots.iter().any(|s| s.shot_index == last && s.pumping) {
            push(
                false,
                FindingKind::MissingPumpFlag,
                at,
                format!("final shot {last} lacks the pumping flag"),
            );
        }
        for s in shots.iter().filter(|s| s.pumping && s.shot_index != last) {
            push(
                false,
                FindingKind::PumpNotFinal,
                at,
                format!("pumping flag on shot {} of {last}", s.shot_index),
            );
        }
        if hand == Hand::Right && id < BOTH_HANDS_FROM_ID {
            push(
                true,
                FindingKind::LeftHandEra,
                at,
                format!("right hand recorded for subject {id} < {BOTH_HANDS_FROM_ID}"),
            );
        }
    }
    let mut unregistered = BTreeSet::new();
    if m.subjects_source.is_some() {
        for c in &m.captures {
            if !known.contains(&c.subject_id) && unregistered.insert(c.subject_id) {
                push(
                    false,
                    FindingKind::UnregisteredSubject,
                    (c.subject_id, None, None),
                    "captures without a subject record".into(),
                );
            }
        }
    }
    for s in &m.subjects {
        if !s.has_full_meta() {
            push(
                true,
                FindingKind::MissingMeta,
                (s.subject_id, None, None),
                "incomplete age/sex/weight/blood pressure".into(),
            );
        }
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Quartiles {
    /// Linear interpolation between order statistics at rank `q * (n - 1)`.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let at = |q: f64| {
            let pos = q * (v.len() - 1) as f64;
            let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Some(Quartiles {
            min: v[0],
            q1: at(0.25),
            median: at(0.5),
            q3: at(0.75),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BloodPressureRange {
    pub systolic: (u32, u32),
    pub diastolic: (u32, u32),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub subjects: usize,
    pub images: usize,
    pub per_illumination: BTreeMap<String, usize>,
    pub per_hand: BTreeMap<String, usize>,
    pub pumping_shots: usize,
    /// Subjects by recorded hands: "left", "right", "both", "none".
    pub subjects_by_hands: BTreeMap<String, usize>,
    /// Subjects per age decade ("20-29"), plus "unknown".
    pub age_decades: BTreeMap<String, usize>,
    pub sex: BTreeMap<String, usize>,
    pub weight_kg: Option<Quartiles>,
    pub blood_pressure: Option<BloodPressureRange>,
    /// Subjects per acquisition event tag, plus "unknown".
    pub per_event: BTreeMap<String, usize>,
}

pub fn summary_stats(m: &Manifest) -> SummaryStats {
    let mut st = SummaryStats {
        subjects: m.subjects.len(),
        images: m.captures.len(),
        ..Default::default()
    };
    let mut hands: BTreeMap<u32, BTreeSet<Hand>> = BTreeMap::new();
    for c in &m.captures {
        *st.per_illumination
            .entry(c.illumination.to_string())
            .or_default() += 1;
        *st.per_hand.entry(c.hand.to_string()).or_default() += 1;
        st.pumping_shots += c.pumping as usize;
        hands.entry(c.subject_id).or_default().insert(c.hand);
    }
    let mut weights = Vec::new();
    let mut bp: Option<BloodPressureRange> = None;
    for s in &m.subjects {
        let key = match hands.get(&s.subject_id).map(|h| h.len()) {
            Some(2) => "both",
            Some(1) if hands[&s.subject_id].contains(&Hand::Left) => "left",
            Some(1) => "right",
            _ => "none",
        };
        *st.subjects_by_hands.entry(key.into()).or_default() += 1;
        let decade = s.age.map_or("unknown".to_string(), |a| {
            format!("{}-{}", a / 10 * 10, a / 10 * 10 + 9)
        });
        *st.age_decades.entry(decade).or_default() += 1;
        let sex = match s.sex {
            Some(Sex::M) => "m",
            Some(Sex::F) => "f",
            None => "unknown",
        };
        *st.sex.entry(sex.into()).or_default() += 1;
        weights.extend(s.weight);
        if let Some((sys, dia)) = s.blood_pressure {
            bp = Some(match bp {
                None => BloodPressureRange {
                    systolic: (sys, sys),
                    diastolic: (dia, dia),
                },
                Some(r) => BloodPressureRange {
                    systolic: (r.systolic.0.min(sys), r.systolic.1.max(sys)),
                    diastolic: (r.diastolic.0.min(dia), r.diastolic.1.max(dia)),
                },
            });
        }
        *st.per_event
            .entry(s.event.clone().unwrap_or_else(|| "unknown".into()))
            .or_default() += 1;
    }
    st.weight_kg = Quartiles::of(&weights);
    st.blood_pressure = bp;
    st
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn touch(root: &Path, rel: &str) {
        let p = root.join(rel);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(p, b"x").unwrap();
    }

    fn sequence(root: &Path, id: u32, hand: &str, ill: &str, n: u32) {
        for s in 1..=n {
            let pump = if s == n { "_pump" } else { "" };
            touch(
                root,
                &format!("subject_{id:03}/{hand}_{ill}_{s:02}{pump}.pgm"),
            );
        }
    }

    #[test]
    fn empty_directory() {
        let d = tempfile::tempdir().unwrap();
        let m = scan_dataset(d.path(), &Convention::default()).unwrap();
        assert!(m.captures.is_empty() && m.skipped.is_empty() && m.subjects.is_empty());
        assert_eq!(validate_protocol(&m), ProtocolReport::default());
        let st = summary_stats(&m);
        assert_eq!((st.subjects, st.images, st.pumping_shots), (0, 0, 0));
        assert!(st.weight_kg.is_none());
    }

    #[test]
    fn stray_file_is_skipped_not_dropped() {
        let d = tempfile::tempdir().unwrap();
        sequence(d.path(), 3, "left", "transmitted", 3);
        touch(d.path(), "notes.txt");
        touch(d.path(), "manifest.json");
        let m = scan_dataset(d.path(), &Convention::default()).unwrap();
        assert_eq!(m.captures.len(), 3);
        assert_eq!(m.skipped.len(), 1);
        assert_eq!(m.skipped[0].path, "notes.txt");
        assert!(m.captures[2].pumping && !m.captures[0].pumping);
    }

    #[test]
    fn two_shots_is_one_violation() {
        let d = tempfile::tempdir().unwrap();
        sequence(d.path(), 5, "left", "transmitted", 2);
        sequence(d.path(), 5, "left", "reflected", 3);
        let r = validate_protocol(&scan_dataset(d.path(), &Convention::default()).unwrap());
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].kind, FindingKind::TooFewShots);
    }

    #[test]
    fn right_hand_before_72_warns() {
        let d = tempfile::tempdir().unwrap();
        sequence(d.path(), 50, "left", "transmitted", 3);
        sequence(d.path(), 50, "right", "transmitted", 3);
        sequence(d.path(), 80, "right", "transmitted", 3);
        let r = validate_protocol(&scan_dataset(d.path(), &Convention::default()).unwrap());
        assert!(r.is_conforming());
        let era: Vec<_> = r
            .warnings
            .iter()
            .filter(|f| f.kind == FindingKind::LeftHandEra)
            .collect();
        assert_eq!(era.len(), 1);
        assert_eq!(era[0].subject_id, 50);
    }

    #[test]
    fn pump_flag_rules() {
        let d = tempfile::tempdir().unwrap();
        for s in ["01_pump", "02", "03"] {
            touch(d.path(), &format!("subject_009/left_reflected_{s}.pgm"));
        }
        touch(d.path(), "subject_009/left_transmitted_01.pgm");
        touch(d.path(), "subject_009/left_transmitted_02.png");
        touch(d.path(), "subject_009/left_transmitted_02_pump.pgm");
        touch(d.path(), "subject_009/left_transmitted_03_pump.pgm");
        let r = validate_protocol(&scan_dataset(d.path(), &Convention::default()).unwrap());
        let kinds: Vec<_> = r.violations.iter().map(|f| f.kind).collect();
        assert_eq!(
            kinds,
            [
                FindingKind::DuplicateShot,
                FindingKind::PumpNotFinal,
                FindingKind::MissingPumpFlag,
                FindingKind::PumpNotFinal
            ]
        );
    }

    #[test]
    fn subjects_file_and_stats() {
        let d = tempfile::tempdir().unwrap();
        sequence(d.path(), 1, "left", "transmitted", 3);
        sequence(d.path(), 72, "left", "reflected", 4);
        sequence(d.path(), 72, "right", "reflected", 3);
        sequence(d.path(), 90, "left", "reflected", 3);
        let subjects = vec![
            SubjectRecord {
                subject_id: 1,
                age: Some(24),
                sex: Some(Sex::F),
                weight: Some(60.0),
                blood_pressure: Some((120, 80)),
                event: Some("event1".into()),
            },
            SubjectRecord {
                subject_id: 72,
                age: Some(31),
                sex: Some(Sex::M),
                weight: Some(80.0),
                blood_pressure: Some((135, 85)),
                event: None,
            },
        ];
        fs::write(
            d.path().join("subjects.csv"),
            subjects_csv(&subjects).unwrap(),
        )
        .unwrap();
        let m = scan_dataset(d.path(), &Convention::default()).unwrap();
        assert_eq!(m.subjects, subjects);
        let r = validate_protocol(&m);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(
            (r.violations[0].kind, r.violations[0].subject_id),
            (FindingKind::UnregisteredSubject, 90)
        );
        let st = summary_stats(&m);
        assert_eq!((st.subjects, st.images), (2, 13));
        assert_eq!(st.per_hand["left"] + st.per_hand["right"], 13);
        assert_eq!(st.per_illumination["reflected"], 10);
        assert_eq!(st.subjects_by_hands["both"], 1);
        assert_eq!(st.age_decades["20-29"], 1);
        assert_eq!(st.weight_kg.unwrap().median, 70.0);
        assert_eq!(st.blood_pressure.unwrap().systolic, (120, 135));
        assert_eq!(st.pumping_shots, 4);
    }

    #[test]
    fn quartiles_interpolate() {
        let q = Quartiles::of(&[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!(
            (q.min, q.q1, q.median, q.q3, q.max),
            (1.0, 2.0, 3.0, 4.0, 5.0)
        );
        let q = Quartiles::of(&[1.0, 2.0]).unwrap();
        assert_eq!(q.q1, 1.25);
    }

    #[test]
    fn shipped_convention_is_the_default() {
        let text = include_str!("../../../configs/convention.toml");
        assert_eq!(
            Convention::from_toml_str(text).unwrap(),
            Convention::default()
        );
    }

    #[test]
    fn convention_errors() {
        let c = Convention::default();
        let mut t = c.to_toml_string();
        assert_eq!(Convention::from_toml_str(&t).unwrap(), c);
        t = t.replace("(?P<shot>", "(?P<shots>");
        assert!(matches!(
            Convention::from_toml_str(&t),
            Err(Error::Convention(_))
        ));
        assert!(matches!(
            Convention::from_toml_str("pattern = 1"),
            Err(Error::Convention(_))
        ));
        let dup = c.to_toml_string().replace(
            r#"reflected = ["reflected", "refl"]"#,
            r#"reflected = ["reflected", "t"]"#,
        );
        assert!(matches!(
            Convention::from_toml_str(&dup),
            Err(Error::Convention(_))
        ));
        let unknown = format!("{}\nbogus = 1\n", c.to_toml_string());
        assert!(Convention::from_toml_str(&unknown).is_err());
    }

    #[test]
    fn missing_root() {
        assert!(matches!(
            scan_dataset("/nonexistent/dataset", &Convention::default()),
            Err(Error::NotFound(_))
        ));
    }
}
