//! Label vocabulary, dataset model, JSONL loading and the planted-dependency
//! synthetic generator.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{rng_from, sub_seed, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelKind {
    /// Standard plane; at most one per sample.
    SP,
    /// Anatomical structure.
    AS,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelEntry {
    pub name: String,
    pub kind: LabelKind,
}

/// Ordered label classes. The order is the index space of every C-sized
/// vector and matrix in the crate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<LabelEntry>", into = "Vec<LabelEntry>")]
pub struct Vocabulary {
    entries: Vec<LabelEntry>,
    index: HashMap<String, usize>,
}

impl TryFrom<Vec<LabelEntry>> for Vocabulary {
    type Error = Error;

    fn try_from(entries: Vec<LabelEntry>) -> Result<Self> {
        Vocabulary::new(entries)
    }
}

impl From<Vocabulary> for Vec<LabelEntry> {
    fn from(v: Vocabulary) -> Self {
        v.entries
    }
}

impl Vocabulary {
    pub fn new(entries: Vec<LabelEntry>) -> Result<Self> {
        if entries.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "vocabulary needs at least 2 labels, got {}",
                entries.len()
            )));
        }
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if index.insert(e.name.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!(
                    "duplicate label name {:?} in vocabulary",
                    e.name
                )));
            }
        }
        Ok(Vocabulary { entries, index })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[LabelEntry] {
        &self.entries
    }

    pub fn name(&self, i: usize) -> &str {
        &self.entries[i].name
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn sp_indices(&self) -> Vec<usize> {
        self.indices_of(LabelKind::SP)
    }

    pub fn as_indices(&self) -> Vec<usize> {
        self.indices_of(LabelKind::AS)
    }

    fn indices_of(&self, kind: LabelKind) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.kind == kind)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let entries: Vec<LabelEntry> = serde_json::from_str(&text)?;
        Vocabulary::new(entries)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(&self.entries)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Built-in vocabulary: the 10 standard planes and 24 named structures of
    /// the fetal ultrasound label set, with structures padded by placeholder
    /// names (`AS_pad_NN`) up to `as_count`.
    pub fn builtin(sp_count: usize, as_count: usize) -> Result<Self> {
        let sp = (0..sp_count).map(|i| LabelEntry {
            name: BUILTIN_SP
                .get(i)
                .map(|s| s.to_string())
                .unwrap_or_else(|| format!("SP_pad_{:02}", i + 1)),
            kind: LabelKind::SP,
        });
        let structures = (0..as_count).map(|i| LabelEntry {
            name: BUILTIN_AS
                .get(i)
                .map(|s| s.to_string())
                .unwrap_or_else(|| format!("AS_pad_{:02}", i + 1)),
            kind: LabelKind::AS,
        });
        Vocabulary::new(sp.chain(structures).collect())
    }
}

pub const BUILTIN_SP: [&str; 10] = [
    "SLAP", "CMP", "TAP", "LVAP", "NCP", "HFMP", "SPP", "FCP", "UAAP", "FLAP",
];

// Structures without an abbreviation use their full name.
pub const BUILTIN_AS: [&str; 24] = [
    "CF", "PH", "SPC", "CM", "SCR", "thalamus", "IC", "NA", "NB", "palate", "mandible", "SP",
    "pharynx", "HFCV", "aorta", "lung", "ST", "PSUV", "FD", "spine", "UL", "LL", "chin",
    "nostril",
];

// Planted anatomy: which structures each standard plane shows, and how often.
const BUILTIN_PROFILE: [(&str, &[(&str, f64)]); 10] = [
    ("SLAP", &[("spine", 0.95), ("SCR", 0.75), ("CM", 0.45)]),
    ("CMP", &[("CM", 0.95), ("spine", 0.85), ("SCR", 0.4)]),
    ("TAP", &[("thalamus", 0.95), ("CF", 0.9), ("SPC", 0.85), ("IC", 0.8)]),
    ("LVAP", &[("PH", 0.95), ("CF", 0.9), ("SPC", 0.7), ("IC", 0.8)]),
    ("NCP", &[("UL", 0.95), ("LL", 0.9), ("NA", 0.85), ("nostril", 0.8)]),
    (
        "HFMP",
        &[("NB", 0.95), ("NA", 0.8), ("palate", 0.6), ("mandible", 0.7), ("chin", 0.6)],
    ),
    ("SPP", &[("SP", 0.95), ("palate", 0.85), ("pharynx", 0.7)]),
    ("FCP", &[("HFCV", 0.95), ("lung", 0.8), ("aorta", 0.6), ("spine", 0.6)]),
    ("UAAP", &[("ST", 0.95), ("PSUV", 0.9), ("spine", 0.6), ("aorta", 0.5)]),
    ("FLAP", &[("FD", 0.95)]),
];

const PAD_HOME_PROBABILITY: f64 = 0.6;
const BASE_PROBABILITY: f64 = 0.02;
const BACKGROUND_PROBABILITY: f64 = 0.08;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
    Unsplit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub subject_id: String,
    pub features: Vec<f64>,
    /// One flag per vocabulary entry; at least one is set.
    pub labels: Vec<bool>,
}

impl Sample {
    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub vocabulary: Vocabulary,
    pub samples: Vec<Sample>,
    pub split_tag: SplitTag,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    subject_id: String,
    features: Vec<f64>,
    labels: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.vocabulary.len()
    }

    /// Feature dimensionality; `None` for an empty dataset.
    pub fn feature_dim(&self) -> Option<usize> {
        self.samples.first().map(|s| s.features.len())
    }

    pub fn feature_matrix(&self) -> Array2<f64> {
        let d = self.feature_dim().unwrap_or(0);
        Array2::from_shape_fn((self.len(), d), |(i, j)| self.samples[i].features[j])
    }

    pub fn target_matrix(&self) -> Array2<bool> {
        Array2::from_shape_fn((self.len(), self.num_classes()), |(i, c)| {
            self.samples[i].labels[c]
        })
    }

    pub fn subjects(&self) -> BTreeSet<&str> {
        self.samples.iter().map(|s| s.subject_id.as_str()).collect()
    }

    /// Writes the dataset as JSONL, labels by name in canonical order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for s in &self.samples {
            let rec = Record {
                id: s.id.clone(),
                subject_id: s.subject_id.clone(),
                features: s.features.clone(),
                labels: s
                    .active()
                    .map(|i| self.vocabulary.name(i).to_string())
                    .collect(),
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// Reads a JSONL dataset, resolving label names against `vocabulary`.
pub fn load_dataset(path: &Path, vocabulary: &Vocabulary) -> Result<Dataset> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let fname = path.display().to_string();
    let parse_err = |line: usize, message: String| Error::Parse {
        file: fname.clone(),
        line,
        message,
    };

    let mut samples = Vec::new();
    let mut dim: Option<usize> = None;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record =
            serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        match dim {
            None => dim = Some(rec.features.len()),
            Some(d) if d != rec.features.len() => {
                return Err(parse_err(
                    lineno,
                    format!(
                        "feature length {} differs from {} on earlier lines",
                        rec.features.len(),
                        d
                    ),
                ))
            }
            _ => {}
        }
        if rec.labels.is_empty() {
            return Err(parse_err(lineno, "empty label set".into()));
        }
        let mut labels = vec![false; vocabulary.len()];
        for name in &rec.labels {
            let idx = vocabulary
                .index_of(name)
                .ok_or_else(|| parse_err(lineno, format!("unknown label {name:?}")))?;
            labels[idx] = true;
        }
        samples.push(Sample {
            id: rec.id,
            subject_id: rec.subject_id,
            features: rec.features,
            labels,
        });
    }
    Ok(Dataset {
        vocabulary: vocabulary.clone(),
        samples,
        split_tag: SplitTag::Unsplit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub n_samples: usize,
    pub sp_count: usize,
    pub as_count: usize,
    /// `sp_count` rows of per-structure inclusion probabilities. `None` uses
    /// the built-in anatomical profile.
    pub structure_profile: Option<Vec<Vec<f64>>>,
    /// Structure inclusion probabilities for samples without a standard plane.
    pub background_profile: Option<Vec<f64>>,
    pub no_sp_probability: f64,
    pub feature_dim: usize,
    /// Expected norm of a class prototype vector.
    pub prototype_scale: f64,
    pub noise_sigma: f64,
    pub samples_per_subject: usize,
    /// Filled from the run-level root seed; not part of the config document.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_samples: 2000,
            sp_count: 10,
            as_count: 29,
            structure_profile: None,
            background_profile: None,
            no_sp_probability: 0.15,
            feature_dim: 64,
            prototype_scale: 1.0,
            noise_sigma: 0.25,
            samples_per_subject: 10,
            seed: 0,
        }
    }
}

fn check_probability(path: String, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::config(path, format!("probability {p} outside [0, 1]")));
    }
    Ok(())
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::config("synthetic.n_samples", "must be positive"));
        }
        if self.sp_count == 0 {
            return Err(Error::config("synthetic.sp_count", "must be positive"));
        }
        if self.as_count == 0 {
            return Err(Error::config("synthetic.as_count", "must be positive"));
        }
        if self.feature_dim == 0 {
            return Err(Error::config("synthetic.feature_dim", "must be positive"));
        }
        if self.samples_per_subject == 0 {
            return Err(Error::config(
                "synthetic.samples_per_subject",
                "must be positive",
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::config(
                "synthetic.noise_sigma",
                "must be a nonnegative finite number",
            ));
        }
        if !(self.prototype_scale > 0.0 && self.prototype_scale.is_finite()) {
            return Err(Error::config("synthetic.prototype_scale", "must be positive"));
        }
        check_probability("synthetic.no_sp_probability".into(), self.no_sp_probability)?;
        if let Some(rows) = &self.structure_profile {
            if rows.len() != self.sp_count {
                return Err(Error::config(
                    "synthetic.structure_profile",
                    format!("expected {} rows, got {}", self.sp_count, rows.len()),
                ));
            }
            for (s, row) in rows.iter().enumerate() {
                if row.len() != self.as_count {
                    return Err(Error::config(
                        format!("synthetic.structure_profile[{s}]"),
                        format!("expected {} entries, got {}", self.as_count, row.len()),
                    ));
                }
                for (a, &p) in row.iter().enumerate() {
                    check_probability(format!("synthetic.structure_profile[{s}][{a}]"), p)?;
                }
            }
        }
        if let Some(bg) = &self.background_profile {
            if bg.len() != self.as_count {
                return Err(Error::config(
                    "synthetic.background_profile",
                    format!("expected {} entries, got {}", self.as_count, bg.len()),
                ));
            }
            for (a, &p) in bg.iter().enumerate() {
                check_probability(format!("synthetic.background_profile[{a}]"), p)?;
            }
        }
        Ok(())
    }

    /// The effective `sp_count × as_count` inclusion matrix.
    pub fn resolved_profile(&self, vocabulary: &Vocabulary) -> Vec<Vec<f64>> {
        if let Some(p) = &self.structure_profile {
            return p.clone();
        }
        let as_idx = vocabulary.as_indices();
        let mut rows = vec![vec![BASE_PROBABILITY; self.as_count]; self.sp_count];
        for (s, row) in rows.iter_mut().enumerate() {
            let sp_name = vocabulary.name(s);
            let planted = BUILTIN_PROFILE
                .iter()
                .find(|(name, _)| *name == sp_name)
                .map(|(_, list)| *list);
            for (a, p) in row.iter_mut().enumerate() {
                let as_name = vocabulary.name(as_idx[a]);
                if let Some(list) = planted {
                    if let Some(&(_, prob)) = list.iter().find(|(n, _)| *n == as_name) {
                        *p = prob;
                        continue;
                    }
                }
                // Structures outside the planted table get a home plane.
                let named = a < BUILTIN_AS.len() && s < BUILTIN_SP.len();
                if !named && a % self.sp_count == s {
                    *p = PAD_HOME_PROBABILITY;
                }
            }
        }
        rows
    }

    pub fn resolved_background(&self) -> Vec<f64> {
        self.background_profile
            .clone()
            .unwrap_or_else(|| vec![BACKGROUND_PROBABILITY; self.as_count])
    }
}

/// Per-class prototype vectors used by the generator, `C × feature_dim`.
pub fn class_prototypes(config: &SyntheticConfig) -> Array2<f64> {
    let mut rng = rng_from(sub_seed(config.seed, Stage::Synthetic));
    prototypes_from(&mut rng, config)
}

fn prototypes_from(rng: &mut crate::seed::Rng, config: &SyntheticConfig) -> Array2<f64> {
    let c = config.sp_count + config.as_count;
    let scale = config.prototype_scale / (config.feature_dim as f64).sqrt();
    let mut protos = Array2::zeros((c, config.feature_dim));
    for v in protos.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v = z * scale;
    }
    protos
}

/// Generates a dataset with planted label dependencies. Each sample gets at
/// most one standard plane (none with `no_sp_probability`), structures drawn
/// from the plane's inclusion profile, and features equal to the sum of the
/// active classes' prototypes plus isotropic Gaussian noise.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Dataset> {
    config.validate()?;
    let vocabulary = Vocabulary::builtin(config.sp_count, config.as_count)?;
    let profile = config.resolved_profile(&vocabulary);
    let background = config.resolved_background();
    let mut rng = rng_from(sub_seed(config.seed, Stage::Synthetic));
    let protos = prototypes_from(&mut rng, config);
    let c = vocabulary.len();
    let sp_idx = vocabulary.sp_indices();
    let as_idx = vocabulary.as_indices();

    let mut samples = Vec::with_capacity(config.n_samples);
    for i in 0..config.n_samples {
        let mut labels = vec![false; c];
        let plane = if rng.random::<f64>() < config.no_sp_probability {
            None
        } else {
            Some(rng.random_range(0..config.sp_count))
        };
        let probs = match plane {
            Some(s) => {
                labels[sp_idx[s]] = true;
                &profile[s]
            }
            None => &background,
        };
        for (a, &p) in probs.iter().enumerate() {
            if rng.random::<f64>() < p {
                labels[as_idx[a]] = true;
            }
        }
        if !labels.iter().any(|&b| b) {
            labels[as_idx[rng.random_range(0..config.as_count)]] = true;
        }

        let mut x = Array1::<f64>::zeros(config.feature_dim);
        for (k, _) in labels.iter().enumerate().filter(|(_, &b)| b) {
            x += &protos.row(k);
        }
        if config.noise_sigma > 0.0 {
            for v in x.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += config.noise_sigma * z;
            }
        }
        samples.push(Sample {
            id: format!("s{i:05}"),
            subject_id: format!("f{:04}", i / config.samples_per_subject),
            features: x.to_vec(),
            labels,
        });
    }
    Ok(Dataset {
        vocabulary,
        samples,
        split_tag: SplitTag::Unsplit,
    })
}

/// Partitions samples into (train, val, test) at subject granularity.
///
/// Subjects are shuffled from `seed`; the two cut points in the shuffled
/// order are chosen to bring cumulative sample counts as close as possible
/// to the requested ratios.
pub fn split_by_subject(
    dataset: &Dataset,
    ratios: [f64; 3],
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    if ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0))
        || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::config(
            "split.ratios",
            format!("ratios {ratios:?} must be nonnegative and sum to 1"),
        ));
    }
    let mut by_subject: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in dataset.samples.iter().enumerate() {
        by_subject.entry(s.subject_id.as_str()).or_default().push(i);
    }
    if by_subject.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "need at least 3 distinct subjects to split, found {}",
            by_subject.len()
        )));
    }
    let mut subjects: Vec<&str> = by_subject.keys().copied().collect();
    subjects.shuffle(&mut rng_from(seed));

    let n = dataset.len() as f64;
    let mut prefix = vec![0usize];
    for s in &subjects {
        prefix.push(prefix.last().unwrap() + by_subject[s].len());
    }
    let closest = |target: f64, from: usize| -> usize {
        (from..prefix.len())
            .min_by(|&a, &b| {
                let da = (prefix[a] as f64 - target).abs();
                let db = (prefix[b] as f64 - target).abs();
                da.total_cmp(&db)
            })
            .unwrap_or(from)
    };
    let cut1 = closest(ratios[0] * n, 0);
    let cut2 = closest((ratios[0] + ratios[1]) * n, cut1);

    let make = |range: std::ops::Range<usize>, tag: SplitTag| {
        let mut idx: Vec<usize> = subjects[range]
            .iter()
            .flat_map(|s| by_subject[s].iter().copied())
            .collect();
        idx.sort_unstable();
        Dataset {
            vocabulary: dataset.vocabulary.clone(),
            samples: idx.into_iter().map(|i| dataset.samples[i].clone()).collect(),
            split_tag: tag,
        }
    };
    Ok((
        make(0..cut1, SplitTag::Train),
        make(cut1..cut2, SplitTag::Val),
        make(cut2..subjects.len(), SplitTag::Test),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocabulary {
        Vocabulary::builtin(10, 29).unwrap()
    }

    fn write_tmp(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn builtin_vocabulary_shape() {
        let v = vocab();
        assert_eq!(v.len(), 39);
        assert_eq!(v.sp_indices().len(), 10);
        assert_eq!(v.as_indices().len(), 29);
        assert_eq!(v.name(0), "SLAP");
        assert_eq!(v.name(38), "AS_pad_29");
        // "SP" (soft palate) is a structure, not a plane.
        assert_eq!(v.entries()[v.index_of("SP").unwrap()].kind, LabelKind::AS);
    }

    #[test]
    fn vocabulary_rejects_duplicates_and_tiny() {
        let e = |n: &str| LabelEntry {
            name: n.into(),
            kind: LabelKind::AS,
        };
        assert!(Vocabulary::new(vec![e("a")]).is_err());
        assert!(Vocabulary::new(vec![e("a"), e("a")]).is_err());
        assert!(Vocabulary::new(vec![e("a"), e("b")]).is_ok());
    }

    #[test]
    fn load_single_record() {
        let f = write_tmp(&[
            r#"{"id":"a","subject_id":"f1","features":[1,2,3,4],"labels":["FCP","HFCV"]}"#,
        ]);
        let ds = load_dataset(f.path(), &vocab()).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.samples[0].active().count(), 2);
        assert_eq!(ds.feature_dim(), Some(4));
    }

    #[test]
    fn load_rejects_unknown_label() {
        let f = write_tmp(&[
            r#"{"id":"a","subject_id":"f1","features":[1,2,3,4],"labels":["XYZ"]}"#,
        ]);
        let err = load_dataset(f.path(), &vocab()).unwrap_err();
        match &err {
            Error::Parse { line, message, .. } => {
                assert_eq!(*line, 1);
                assert!(message.contains("XYZ"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn load_rejects_inconsistent_features() {
        let f = write_tmp(&[
            r#"{"id":"a","subject_id":"f1","features":[1,2,3,4],"labels":["FCP"]}"#,
            r#"{"id":"b","subject_id":"f1","features":[1,2,3,4,5],"labels":["FCP"]}"#,
        ]);
        match load_dataset(f.path(), &vocab()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn load_rejects_empty_labels() {
        let f = write_tmp(&[r#"{"id":"a","subject_id":"f1","features":[1],"labels":[]}"#]);
        assert!(matches!(
            load_dataset(f.path(), &vocab()).unwrap_err(),
            Error::Parse { line: 1, .. }
        ));
    }

    #[test]
    fn synthetic_is_deterministic_and_roundtrips() {
        let cfg = SyntheticConfig {
            n_samples: 50,
            seed: 7,
            ..Default::default()
        };
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(a, b);

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        a.save(&p).unwrap();
        let back = load_dataset(&p, &a.vocabulary).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn synthetic_zero_noise_single_label_is_prototype() {
        // Background profile of zeros forces exactly one random structure on
        // every plane-free sample.
        let cfg = SyntheticConfig {
            n_samples: 20,
            no_sp_probability: 1.0,
            noise_sigma: 0.0,
            background_profile: Some(vec![0.0; 29]),
            seed: 3,
            ..Default::default()
        };
        let ds = generate_synthetic(&cfg).unwrap();
        let protos = class_prototypes(&cfg);
        for s in &ds.samples {
            let active: Vec<usize> = s.active().collect();
            assert_eq!(active.len(), 1);
            let p = protos.row(active[0]);
            assert_eq!(s.features.as_slice(), p.as_slice().unwrap());
        }
    }

    #[test]
    fn synthetic_has_at_most_one_plane() {
        let cfg = SyntheticConfig {
            seed: 11,
            ..Default::default()
        };
        let ds = generate_synthetic(&cfg).unwrap();
        assert_eq!(ds.len(), 2000);
        let sp = ds.vocabulary.sp_indices();
        for s in &ds.samples {
            assert!(sp.iter().filter(|&&i| s.labels[i]).count() <= 1);
            assert!(s.labels.iter().any(|&b| b));
        }
    }

    #[test]
    fn synthetic_rejects_bad_probability() {
        let cfg = SyntheticConfig {
            no_sp_probability: 1.5,
            ..Default::default()
        };
        match generate_synthetic(&cfg).unwrap_err() {
            Error::Config { path, .. } => assert_eq!(path, "synthetic.no_sp_probability"),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn subjects_dataset(n_subjects: usize, per: usize) -> Dataset {
        let cfg = SyntheticConfig {
            n_samples: n_subjects * per,
            samples_per_subject: per,
            seed: 5,
            ..Default::default()
        };
        generate_synthetic(&cfg).unwrap()
    }

    #[test]
    fn split_is_disjoint_and_covering() {
        let ds = subjects_dataset(10, 4);
        let (a, b, c) = split_by_subject(&ds, [0.45, 0.27, 0.28], 1).unwrap();
        let (sa, sb, sc) = (a.subjects(), b.subjects(), c.subjects());
        assert!(sa.is_disjoint(&sb) && sa.is_disjoint(&sc) && sb.is_disjoint(&sc));
        let union: BTreeSet<&str> = sa.union(&sb).chain(sc.iter()).copied().collect();
        assert_eq!(union, ds.subjects());
        assert_eq!(a.len() + b.len() + c.len(), ds.len());
        assert!(!a.is_empty() && !b.is_empty() && !c.is_empty());
    }

    #[test]
    fn split_degenerate_ratio() {
        let ds = subjects_dataset(5, 3);
        let (a, b, c) = split_by_subject(&ds, [1.0, 0.0, 0.0], 9).unwrap();
        assert_eq!(a.len(), ds.len());
        assert!(b.is_empty() && c.is_empty());
    }

    #[test]
    fn split_is_deterministic() {
        let ds = subjects_dataset(30, 3);
        let x = split_by_subject(&ds, [0.45, 0.27, 0.28], 4).unwrap();
        let y = split_by_subject(&ds, [0.45, 0.27, 0.28], 4).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn split_needs_three_subjects() {
        let ds = subjects_dataset(2, 3);
        assert!(split_by_subject(&ds, [0.5, 0.25, 0.25], 0).is_err());
    }
}
