//! Seeded scene corpora written to disk with a JSON ground-truth manifest.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{render_scene, HandPose, PegPolarity, ScenePose, SceneSpec, TruthRecord};
use crate::dataset::{subjects_csv, Hand, Sex, SubjectRecord, BOTH_HANDS_FROM_ID};
use crate::error::{Error, Result};
use crate::image::{save_image, write_atomic};
use crate::profile::Illumination;

pub const MIMIC_SUBJECTS: u32 = 107;
pub const MIMIC_IMAGES: usize = 1213;
/// First subject ID of each acquisition event.
const MIMIC_EVENTS: [(u32, &str); 4] = [
    (1, "event1"),
    (44, "event2"),
    (60, "event3"),
    (72, "event4"),
];

/// Ranges scene parameters are drawn from, uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variations {
    /// Plate-height factor.
    pub scale: (f64, f64),
    /// Whole-scene rotation, +- degrees.
    pub rotation_deg: f64,
    /// Whole-scene translation per axis, +- output pixels.
    pub translation_px: f64,
    pub exposure_gain: (f64, f64),
    /// Upper bound of the noise sigma, intensity units.
    pub noise_max: f64,
    /// Hand displacement relative to the pegs, +- reference pixels per axis.
    pub hand_jitter: f64,
    /// Hand rotation relative to the pegs, +- degrees.
    pub hand_angle_deg: f64,
}

impl Default for Variations {
    fn default() -> Self {
        Variations {
            scale: (0.8, 1.3),
            rotation_deg: 15.0,
            translation_px: 100.0,
            exposure_gain: (0.6, 1.4),
            noise_max: 4.0 / 255.0,
            hand_jitter: 15.0,
            hand_angle_deg: 3.0,
        }
    }
}

impl Variations {
    /// No perturbation at all: every scene is the reference layout.
    pub fn none() -> Self {
        Variations {
            scale: (1.0, 1.0),
            rotation_deg: 0.0,
            translation_px: 0.0,
            exposure_gain: (1.0, 1.0),
            noise_max: 0.0,
            hand_jitter: 0.0,
            hand_angle_deg: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.scale.0 > 0.0
            && self.scale.0 <= self.scale.1
            && self.exposure_gain.0 > 0.0
            && self.exposure_gain.0 <= self.exposure_gain.1
            && [
                self.rotation_deg,
                self.translation_px,
                self.noise_max,
                self.hand_jitter,
                self.hand_angle_deg,
            ]
            .iter()
            .all(|v| *v >= 0.0 && v.is_finite())
            && self.scale.1.is_finite()
            && self.exposure_gain.1.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!(
                "invalid variation ranges {self:?}"
            )))
        }
    }

    fn draw<R: Rng>(
        &self,
        rng: &mut R,
        ill: Illumination,
        dims: (u32, u32),
        mirrored: bool,
    ) -> SceneSpec {
        let sym = |rng: &mut R, a: f64| {
            if a > 0.0 {
                rng.random_range(-a..=a)
            } else {
                0.0
            }
        };
        let span = |rng: &mut R, (lo, hi): (f64, f64)| {
            if hi > lo {
                rng.random_range(lo..=hi)
            } else {
                lo
            }
        };
        let pose = ScenePose {
            scale: span(rng, self.scale),
            rotation: sym(rng, self.rotation_deg).to_radians(),
            translation: (sym(rng, self.translation_px), sym(rng, self.translation_px)),
            hand_offset: (sym(rng, self.hand_jitter), sym(rng, self.hand_jitter)),
            hand_angle: sym(rng, self.hand_angle_deg).to_radians(),
            mirrored,
        };
        let exposure_gain = span(rng, self.exposure_gain);
        let noise_sigma = span(rng, (0.0, self.noise_max));
        let seed = rng.next_u64();
        SceneSpec {
            exposure_gain,
            noise_sigma,
            ..SceneSpec::posed(seed, ill, dims.0, dims.1, &pose)
        }
    }

    /// Draws until the spec validates (extreme corners can push a peg off the raster).
    fn draw_valid<R: Rng>(
        &self,
        rng: &mut R,
        ill: Illumination,
        dims: (u32, u32),
        mirrored: bool,
    ) -> Result<SceneSpec> {
        for _ in 0..100 {
            let s = self.draw(rng, ill, dims, mirrored);
            if s.validate().is_ok() {
                return Ok(s);
            }
        }
        Err(Error::InvalidSpec(format!(
            "variations {self:?} do not fit a {}x{} raster",
            dims.0, dims.1
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IlluminationChoice {
    /// Even scenes transmitted, odd scenes reflected.
    Both,
    Transmitted,
    Reflected,
}

impl IlluminationChoice {
    fn for_scene(self, i: usize) -> Illumination {
        match self {
            IlluminationChoice::Both if i.is_multiple_of(2) => Illumination::Transmitted,
            IlluminationChoice::Both | IlluminationChoice::Reflected => Illumination::Reflected,
            IlluminationChoice::Transmitted => Illumination::Transmitted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusOptions {
    pub n: usize,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub illumination: IlluminationChoice,
    pub variations: Variations,
    pub peg_polarity: PegPolarity,
    /// Also write vein and hand masks under `truth/`.
    pub write_masks: bool,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        CorpusOptions {
            n: 1,
            seed: 0,
            width: 1000,
            height: 667,
            illumination: IlluminationChoice::Both,
            variations: Variations::default(),
            peg_polarity: PegPolarity::Dark,
            write_masks: true,
        }
    }
}

/// The scene parameters worth echoing; the vein tree is regenerated from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecEcho {
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub illumination: Illumination,
    pub peg_centers: [(f64, f64); 2],
    pub peg_radius: f64,
    pub peg_polarity: PegPolarity,
    pub hand_pose: HandPose,
    pub vein_count: usize,
    pub exposure_gain: f64,
    pub noise_sigma: f64,
    pub rotation: f64,
}

impl From<&SceneSpec> for SpecEcho {
    fn from(s: &SceneSpec) -> Self {
        SpecEcho {
            seed: s.seed,
            width: s.width,
            height: s.height,
            illumination: s.illumination,
            peg_centers: s.peg_centers,
            peg_radius: s.peg_radius,
            peg_polarity: s.peg_polarity,
            hand_pose: s.hand_pose,
            vein_count: s.vein_tree.len(),
            exposure_gain: s.exposure_gain,
            noise_sigma: s.noise_sigma,
            rotation: s.rotation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    /// Relative to the corpus directory.
    pub path: String,
    pub vein_mask: Option<String>,
    pub hand_mask: Option<String>,
    pub illumination: Illumination,
    pub truth: TruthRecord,
    pub spec: SpecEcho,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub options: CorpusOptions,
    pub records: Vec<CorpusRecord>,
}

impl CorpusManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_json(path.as_ref())
    }
}

pub(crate) fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => e.into(),
    })?;
    serde_json::from_slice(&bytes)
        .map_err(|e| Error::CorruptData(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("manifest serializes");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Per-scene generator: stream `i` of the corpus seed, so scenes are
/// independent of rendering order.
fn scene_rng(seed: u64, i: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i);
    rng
}

/// The scene specs [`make_corpus`] renders, without touching the disk.
pub fn draw_corpus_specs(opts: &CorpusOptions) -> Result<Vec<SceneSpec>> {
    if opts.n == 0 {
        return Err(Error::InvalidParameter("corpus size must be >= 1".into()));
    }
    opts.variations.validate()?;
    (0..opts.n)
        .map(|i| {
            let mut rng = scene_rng(opts.seed, i as u64);
            let mut s = opts.variations.draw_valid(
                &mut rng,
                opts.illumination.for_scene(i),
                (opts.width, opts.height),
                false,
            )?;
            s.peg_polarity = opts.peg_polarity;
            Ok(s)
        })
        .collect()
}

/// Renders `opts.n` scenes into `dir/images`, masks into `dir/truth`, and
/// writes `dir/manifest.json`. Output bytes depend only on `opts`.
pub fn make_corpus(dir: impl AsRef<Path>, opts: &CorpusOptions) -> Result<CorpusManifest> {
    let dir = dir.as_ref();
    let specs = draw_corpus_specs(opts)?;
    fs::create_dir_all(dir.join("images"))?;
    if opts.write_masks {
        fs::create_dir_all(dir.join("truth"))?;
    }
    let records = specs
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let (img, truth) = render_scene(spec)?;
            let path = format!("images/scene_{i:04}.pgm");
            save_image(&img, dir.join(&path))?;
            let (mut vein_mask, mut hand_mask) = (None, None);
            if opts.write_masks {
                let v = format!("truth/scene_{i:04}_veins.pgm");
                let h = format!("truth/scene_{i:04}_hand.pgm");
                save_image(&truth.vein_mask, dir.join(&v))?;
                save_image(&truth.hand_mask, dir.join(&h))?;
                (vein_mask, hand_mask) = (Some(v), Some(h));
            }
            Ok(CorpusRecord {
                path,
                vein_mask,
                hand_mask,
                illumination: spec.illumination,
                truth: truth.record(),
                spec: spec.into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = CorpusManifest {
        options: opts.clone(),
        records,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MimicOptions {
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub variations: Variations,
}

impl Default for MimicOptions {
    fn default() -> Self {
        MimicOptions {
            seed: 0,
            width: 696,
            height: 464,
            variations: Variations {
                rotation_deg: 8.0,
                translation_px: 20.0,
                scale: (0.9, 1.15),
                ..Variations::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MimicRecord {
    pub path: String,
    pub subject_id: u32,
    pub hand: Hand,
    pub illumination: Illumination,
    pub shot_index: u32,
    pub pumping: bool,
    pub truth: TruthRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MimicManifest {
    pub options: MimicOptions,
    /// How the shots beyond three per sequence were distributed.
    pub shots_per_sequence: Vec<SequenceShots>,
    pub records: Vec<MimicRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceShots {
    pub subject_id: u32,
    pub hand: Hand,
    pub illumination: Illumination,
    pub shots: u32,
}

fn mimic_event(id: u32) -> &'static str {
    MIMIC_EVENTS
        .iter()
        .rev()
        .find(|(first, _)| id >= *first)
        .expect("ids start at 1")
        .1
}

fn mimic_subject<R: Rng>(rng: &mut R, id: u32) -> SubjectRecord {
    let sex = if rng.random_bool(0.55) {
        Sex::M
    } else {
        Sex::F
    };
    let age = rng.random_range(18..=72);
    let weight = match sex {
        Sex::M => rng.random_range(62.0..105.0f64),
        Sex::F => rng.random_range(48.0..88.0f64),
    };
    let systolic = rng.random_range(100..=160);
    let diastolic = rng.random_range(60..=100).min(systolic - 25);
    SubjectRecord {
        subject_id: id,
        age: Some(age),
        sex: Some(sex),
        weight: Some((weight * 10.0).round() / 10.0),
        blood_pressure: Some((systolic, diastolic)),
        event: Some(mimic_event(id).into()),
    }
}

/// Writes a dataset tree shaped like the acquisition protocol: 107 subjects,
/// left hand only below ID 72, both hands from 72, both illuminations per
/// hand, at least three shots per sequence with the pumping shot last, 1213
/// images in total. Files are `subject_XXX/{hand}_{illumination}_{NN}[_pump].pgm`
/// next to `subjects.csv` and `manifest.json`.
pub fn make_database_mimic(dir: impl AsRef<Path>, opts: &MimicOptions) -> Result<MimicManifest> {
    let dir = dir.as_ref();
    opts.variations.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let subjects: Vec<SubjectRecord> = (1..=MIMIC_SUBJECTS)
        .map(|id| mimic_subject(&mut rng, id))
        .collect();

    let mut seqs = Vec::new();
    for id in 1..=MIMIC_SUBJECTS {
        let hands: &[Hand] = if id < BOTH_HANDS_FROM_ID {
            &[Hand::Left]
        } else {
            &Hand::ALL
        };
        for &hand in hands {
            for ill in Illumination::ALL {
                seqs.push(SequenceShots {
                    subject_id: id,
                    hand,
                    illumination: ill,
                    shots: 3,
                });
            }
        }
    }
    let mut extra = MIMIC_IMAGES - 3 * seqs.len();
    // spread the surplus as evenly as possible; the remainder goes to a seeded choice
    let rounds = extra / seqs.len();
    for s in &mut seqs {
        s.shots += rounds as u32;
    }
    extra -= rounds * seqs.len();
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    order.shuffle(&mut rng);
    for &i in &order[..extra] {
        seqs[i].shots += 1;
    }

    let mut jobs = Vec::with_capacity(MIMIC_IMAGES);
    for s in &seqs {
        for shot in 1..=s.shots {
            let pumping = shot == s.shots;
            let path = format!(
                "subject_{:03}/{}_{}_{shot:02}{}.pgm",
                s.subject_id,
                s.hand,
                s.illumination,
                if pumping { "_pump" } else { "" }
            );
            jobs.push((path, s.subject_id, s.hand, s.illumination, shot, pumping));
        }
    }
    debug_assert_eq!(jobs.len(), MIMIC_IMAGES);

    for id in 1..=MIMIC_SUBJECTS {
        fs::create_dir_all(dir.join(format!("subject_{id:03}")))?;
    }
    let records = jobs
        .into_par_iter()
        .enumerate()
        .map(
            |(i, (path, subject_id, hand, illumination, shot_index, pumping))| {
                let mut r = scene_rng(opts.seed ^ 0x6d69_6d69_6300_0000, i as u64);
                let spec = opts.variations.draw_valid(
                    &mut r,
                    illumination,
                    (opts.width, opts.height),
                    hand == Hand::Right,
                )?;
                let (img, truth) = render_scene(&spec)?;
                save_image(&img, dir.join(&path))?;
                Ok(MimicRecord {
                    path,
                    subject_id,
                    hand,
                    illumination,
                    shot_index,
                    pumping,
                    truth: truth.record(),
                })
            },
        )
        .collect::<Result<Vec<_>>>()?;
    write_atomic(dir.join("subjects.csv"), &subjects_csv(&subjects)?)?;
    let manifest = MimicManifest {
        options: opts.clone(),
        shots_per_sequence: seqs,
        records,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
