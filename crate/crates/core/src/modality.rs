//! Sensing modalities and subsets of them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Modalities in canonical order. The discriminant is the fusion position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modality {
    Camera = 0,
    Lidar = 1,
    Radar = 2,
    Gps = 3,
    MmWave = 4,
}

impl Modality {
    pub const ALL: [Modality; 5] = [
        Modality::Camera,
        Modality::Lidar,
        Modality::Radar,
        Modality::Gps,
        Modality::MmWave,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn key(self) -> &'static str {
        match self {
            Modality::Camera => "camera",
            Modality::Lidar => "lidar",
            Modality::Radar => "radar",
            Modality::Gps => "gps",
            Modality::MmWave => "mmwave",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Modality::Camera => "Camera",
            Modality::Lidar => "LiDAR",
            Modality::Radar => "Radar",
            Modality::Gps => "GPS",
            Modality::MmWave => "mmWave",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Modality::ALL
            .into_iter()
            .find(|m| m.key() == lower)
            .ok_or_else(|| Error::invalid(format!("unknown modality '{s}'")))
    }
}

impl Serialize for Modality {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.key())
    }
}

impl<'de> Deserialize<'de> for Modality {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A set of modalities, stored as a bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ModalitySet(u8);

impl ModalitySet {
    pub const EMPTY: ModalitySet = ModalitySet(0);
    pub const FULL: ModalitySet = ModalitySet(0b1_1111);

    pub fn single(m: Modality) -> Self {
        ModalitySet(1 << m.index())
    }

    pub fn from_bits(bits: u8) -> Result<Self> {
        if bits & !Self::FULL.0 != 0 {
            return Err(Error::invalid(format!("modality bitmask {bits:#b} out of range")));
        }
        Ok(ModalitySet(bits))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, m: Modality) -> bool {
        self.0 & (1 << m.index()) != 0
    }

    pub fn with(self, m: Modality) -> Self {
        ModalitySet(self.0 | (1 << m.index()))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset_of(self, other: ModalitySet) -> bool {
        self.0 & !other.0 == 0
    }

    /// Members in canonical order.
    pub fn iter(self) -> impl Iterator<Item = Modality> {
        Modality::ALL.into_iter().filter(move |m| self.contains(*m))
    }

    /// All 31 non-empty subsets, ordered by size, then canonically.
    pub fn all_nonempty() -> Vec<ModalitySet> {
        let mut v: Vec<ModalitySet> = (1..=Self::FULL.0).map(ModalitySet).collect();
        v.sort_by_key(|s| (s.len(), s.canonical_rank()));
        v
    }

    /// Lexicographic rank over the canonical member sequence.
    fn canonical_rank(self) -> Vec<usize> {
        self.iter().map(Modality::index).collect()
    }

    /// e.g. `"Camera + mmWave"`.
    pub fn display_name(self) -> String {
        self.iter().map(Modality::display_name).collect::<Vec<_>>().join(" + ")
    }

    /// e.g. `"camera+mmwave"`, usable in file names.
    pub fn slug(self) -> String {
        self.iter().map(Modality::key).collect::<Vec<_>>().join("+")
    }
}

impl fmt::Display for ModalitySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let keys: Vec<_> = self.iter().map(Modality::key).collect();
        f.write_str(&keys.join(","))
    }
}

impl FromStr for ModalitySet {
    type Err = Error;

    /// Accepts comma- or plus-separated names, or `all`.
    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("all") {
            return Ok(Self::FULL);
        }
        let mut set = Self::EMPTY;
        for part in s.split([',', '+']).filter(|p| !p.trim().is_empty()) {
            set = set.with(part.parse()?);
        }
        if set.is_empty() {
            return Err(Error::invalid(format!("empty modality list '{s}'")));
        }
        Ok(set)
    }
}

impl FromIterator<Modality> for ModalitySet {
    fn from_iter<I: IntoIterator<Item = Modality>>(iter: I) -> Self {
        iter.into_iter().fold(Self::EMPTY, ModalitySet::with)
    }
}

impl Serialize for ModalitySet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ModalitySet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
