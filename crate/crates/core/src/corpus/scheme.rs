use serde::{Deserialize, Serialize};

use super::{CorpusError, Result};

/// Which corpus a speaker or manifest belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusKind {
    Anglish,
    Efcamdat,
    Private,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
}

/// A proficiency label such as `NES`, `B1`, or `L4`.
///
/// Labels have no intrinsic order; ordering comes from the
/// [`LevelScheme`] that contains them.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LevelLabel(pub String);

impl LevelLabel {
    pub fn new(label: impl Into<String>) -> Self {
        LevelLabel(label.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for LevelLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for LevelLabel {
    fn from(s: &str) -> Self {
        LevelLabel(s.to_string())
    }
}

/// An ordered set of proficiency labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelScheme {
    pub name: String,
    pub labels: Vec<LevelLabel>,
}

impl LevelScheme {
    pub fn new(name: impl Into<String>, labels: Vec<LevelLabel>) -> Self {
        LevelScheme {
            name: name.into(),
            labels,
        }
    }

    /// Native English speakers plus the two French-speaker groups.
    pub fn anglish() -> Self {
        Self::new("anglish", vec!["NES".into(), "FR1".into(), "FR2".into()])
    }

    /// The five CEFR levels used for essay classification.
    pub fn cefr() -> Self {
        Self::new(
            "cefr",
            vec![
                "A1".into(),
                "A2".into(),
                "B1".into(),
                "B2".into(),
                "C1".into(),
            ],
        )
    }

    /// The 16 ordered raw proficiency levels of the essay corpus.
    pub fn efcamdat_raw() -> Self {
        Self::new(
            "efcamdat_raw",
            (1..=16).map(|i| LevelLabel(i.to_string())).collect(),
        )
    }

    /// The three dialogue-corpus levels used for classification.
    pub fn private() -> Self {
        Self::new("private", vec!["L3".into(), "L4".into(), "L5".into()])
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "anglish" => Some(Self::anglish()),
            "cefr" => Some(Self::cefr()),
            "efcamdat_raw" => Some(Self::efcamdat_raw()),
            "private" => Some(Self::private()),
            _ => None,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn contains(&self, label: &LevelLabel) -> bool {
        self.labels.contains(label)
    }

    /// Position of `label` in scheme order, usable as a class index.
    pub fn index_of(&self, label: &LevelLabel) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| {
                CorpusError::Scheme(format!(
                    "label {:?} is not a member of scheme {:?} {:?}",
                    label.0,
                    self.name,
                    self.labels.iter().map(|l| l.as_str()).collect::<Vec<_>>()
                ))
            })
    }
}

/// Maps a raw 1..=16 proficiency level onto the five CEFR labels.
///
/// The banding is 1-3 -> A1, 4-6 -> A2, 7-9 -> B1, 10-12 -> B2,
/// 13-16 -> C1; it is surjective onto the CEFR scheme and monotone
/// non-decreasing in the raw level. The banding is echoed into output
/// metadata by the experiment runner so downstream consumers can see
/// which mapping produced a manifest.
pub fn map_raw_level_to_cefr(raw: u8) -> Result<LevelLabel> {
    let label = match raw {
        1..=3 => "A1",
        4..=6 => "A2",
        7..=9 => "B1",
        10..=12 => "B2",
        13..=16 => "C1",
        _ => return Err(CorpusError::RawLevelOutOfRange(raw)),
    };
    Ok(label.into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_levels_map_to_a1_and_c1() {
        assert_eq!(map_raw_level_to_cefr(1).unwrap().as_str(), "A1");
        assert_eq!(map_raw_level_to_cefr(16).unwrap().as_str(), "C1");
    }

    #[test]
    fn mid_level_eight_maps_to_b1() {
        assert_eq!(map_raw_level_to_cefr(8).unwrap().as_str(), "B1");
    }

    #[test]
    fn mapping_is_total_monotone_and_surjective_over_1_to_16() {
        let cefr = LevelScheme::cefr();
        let mut seen = vec![false; cefr.num_classes()];
        let mut prev = 0usize;
        for raw in 1..=16u8 {
            let label = map_raw_level_to_cefr(raw).unwrap();
            let idx = cefr.index_of(&label).unwrap();
            assert!(idx >= prev, "mapping not monotone at raw={raw}");
            prev = idx;
            seen[idx] = true;
        }
        assert!(seen.iter().all(|&s| s), "mapping is not surjective");
    }

    #[test]
    fn out_of_range_raw_levels_are_rejected() {
        assert!(map_raw_level_to_cefr(0).is_err());
        assert!(map_raw_level_to_cefr(17).is_err());
    }

    #[test]
    fn scheme_class_counts() {
        assert_eq!(LevelScheme::anglish().num_classes(), 3);
        assert_eq!(LevelScheme::cefr().num_classes(), 5);
        assert_eq!(LevelScheme::efcamdat_raw().num_classes(), 16);
        assert_eq!(LevelScheme::private().num_classes(), 3);
    }
}
