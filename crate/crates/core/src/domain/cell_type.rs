use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// Nucleus phenotype. Codes are fixed; `Unknown` carries the highest code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum CellType {
    CancerCell = 0,
    Lymphocyte = 1,
    Fibroblast = 2,
    Plasmocyte = 3,
    Eosinophil = 4,
    Neutrophil = 5,
    Macrophage = 6,
    SmoothMuscleCell = 7,
    EndothelialCell = 8,
    RedBloodCell = 9,
    EpithelialCell = 10,
    MitoticFigure = 11,
    ApoptoticBody = 12,
    Unknown = 13,
}

impl CellType {
    pub const COUNT: usize = 14;

    pub const ALL: [CellType; Self::COUNT] = [
        CellType::CancerCell,
        CellType::Lymphocyte,
        CellType::Fibroblast,
        CellType::Plasmocyte,
        CellType::Eosinophil,
        CellType::Neutrophil,
        CellType::Macrophage,
        CellType::SmoothMuscleCell,
        CellType::EndothelialCell,
        CellType::RedBloodCell,
        CellType::EpithelialCell,
        CellType::MitoticFigure,
        CellType::ApoptoticBody,
        CellType::Unknown,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<CellType> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            CellType::CancerCell => "CancerCell",
            CellType::Lymphocyte => "Lymphocyte",
            CellType::Fibroblast => "Fibroblast",
            CellType::Plasmocyte => "Plasmocyte",
            CellType::Eosinophil => "Eosinophil",
            CellType::Neutrophil => "Neutrophil",
            CellType::Macrophage => "Macrophage",
            CellType::SmoothMuscleCell => "SmoothMuscleCell",
            CellType::EndothelialCell => "EndothelialCell",
            CellType::RedBloodCell => "RedBloodCell",
            CellType::EpithelialCell => "EpithelialCell",
            CellType::MitoticFigure => "MitoticFigure",
            CellType::ApoptoticBody => "ApoptoticBody",
            CellType::Unknown => "Unknown",
        }
    }

    /// Class channel of this type in an `nt_map`; channel 0 is background.
    pub fn channel(self) -> usize {
        self.code() as usize + 1
    }

    /// Inverse of [`CellType::channel`]. Background (0) maps to `None`.
    pub fn from_channel(channel: usize) -> Option<CellType> {
        channel
            .checked_sub(1)
            .and_then(|c| u8::try_from(c).ok())
            .and_then(Self::from_code)
    }
}

impl fmt::Display for CellType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CellType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown cell type {s:?}")))
    }
}

impl Serialize for CellType {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for CellType {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
