use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::rng::seeded;
use crate::{Error, Result};

pub const MANIFEST_HEADER: &str = "tumorscope-manifest v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub label: u8,
    pub split: Split,
}

/// Split assignment of a labeled collection.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub source: String,
    /// Records per class, indexed by label.
    pub class_counts: [usize; 2],
    pub target_size: usize,
    pub seed: u64,
    pub fraction: f64,
    /// Entries in record order.
    pub entries: Vec<ManifestEntry>,
}

/// Stratified shuffle-split: within each class the records are shuffled with
/// the seeded generator, the first `floor(n·fraction)` go to train and the
/// remainder to validation.
pub fn split(records: &[(String, u8)], fraction: f64, seed: u64) -> Result<DatasetManifest> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("split fraction {fraction} outside (0, 1)")));
    }
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, (id, label)) in records.iter().enumerate() {
        if *label > 1 {
            return Err(Error::InvalidArgument(format!("record {id} has non-binary label {label}")));
        }
        by_class[*label as usize].push(i);
    }
    for (label, members) in by_class.iter().enumerate() {
        if members.is_empty() {
            return Err(Error::EmptyClass(label as u8));
        }
    }
    let mut rng = seeded(seed);
    let mut splits = vec![Split::Val; records.len()];
    for members in &mut by_class {
        members.shuffle(&mut rng);
        let n_train = (members.len() as f64 * fraction + 1e-9).floor() as usize;
        for &i in &members[..n_train] {
            splits[i] = Split::Train;
        }
    }
    let mut seen = std::collections::HashSet::new();
    let entries = records
        .iter()
        .zip(splits)
        .map(|((id, label), split)| {
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate record id {id}")));
            }
            Ok(ManifestEntry {
                id: id.clone(),
                label: *label,
                split,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DatasetManifest {
        source: String::new(),
        class_counts: [by_class[0].len(), by_class[1].len()],
        target_size: 0,
        seed,
        fraction,
        entries,
    })
}

impl DatasetManifest {
    pub fn count(&self, split: Split, label: u8) -> usize {
        self.entries.iter().filter(|e| e.split == split && e.label == label).count()
    }

    /// Line-oriented text form: header line, then `id<TAB>label<TAB>split`.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(32 * (self.entries.len() + 1));
        out.push_str(MANIFEST_HEADER);
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!("{}\t{}\t{}\n", e.id, e.label, e.split));
        }
        out
    }

    /// Parses the entries of a manifest file.
    pub fn parse_entries(text: &str) -> Result<Vec<ManifestEntry>> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, MANIFEST_HEADER)) => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected header {MANIFEST_HEADER:?}"),
                })
            }
        }
        lines
            .filter(|(_, l)| !l.is_empty())
            .map(|(i, line)| {
                let err = |message: String| Error::Parse { line: i + 1, message };
                let fields: Vec<&str> = line.split('\t').collect();
                let [id, label, split] = fields[..] else {
                    return Err(err(format!("expected 3 tab-separated fields, found {}", fields.len())));
                };
                let label = match label {
                    "0" => 0,
                    "1" => 1,
                    other => return Err(err(format!("bad label {other:?}"))),
                };
                Ok(ManifestEntry {
                    id: id.to_string(),
                    label,
                    split: split.parse().map_err(err)?,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(neg: usize, pos: usize) -> Vec<(String, u8)> {
        (0..neg)
            .map(|i| (format!("no/{i}"), 0))
            .chain((0..pos).map(|i| (format!("yes/{i}"), 1)))
            .collect()
    }

    #[test]
    fn br35h_scale_split() {
        let m = split(&records(1500, 1500), 0.8, 42).unwrap();
        for label in 0..2 {
            assert_eq!(m.count(Split::Train, label), 1200);
            assert_eq!(m.count(Split::Val, label), 300);
        }
    }

    #[test]
    fn floor_rounding_sends_remainder_to_val() {
        let m = split(&records(5, 5), 0.8, 1).unwrap();
        for label in 0..2 {
            assert_eq!(m.count(Split::Train, label), 4);
            assert_eq!(m.count(Split::Val, label), 1);
        }
        let m = split(&records(100, 7), 0.29, 1).unwrap();
        assert_eq!(m.count(Split::Train, 0), 29);
        assert_eq!(m.count(Split::Train, 1), 2);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let a = split(&records(10, 10), 0.8, 9).unwrap();
        let b = split(&records(10, 10), 0.8, 9).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        let c = split(&records(10, 10), 0.8, 10).unwrap();
        assert_ne!(a.to_text(), c.to_text());
    }

    #[test]
    fn rejects_empty_class_and_bad_fraction() {
        assert!(matches!(split(&records(3, 0), 0.8, 0), Err(Error::EmptyClass(1))));
        assert!(split(&records(3, 3), 1.0, 0).is_err());
        assert!(split(&records(3, 3), 0.0, 0).is_err());
    }

    #[test]
    fn text_round_trip_and_errors() {
        let m = split(&records(4, 3), 0.5, 3).unwrap();
        let text = m.to_text();
        assert!(text.starts_with("tumorscope-manifest v1\n"));
        assert_eq!(DatasetManifest::parse_entries(&text).unwrap(), m.entries);
        let err = DatasetManifest::parse_entries("tumorscope-manifest v1\na\t1\ttrain\nb\t2\tval\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        assert!(DatasetManifest::parse_entries("nope\n").is_err());
    }
}
