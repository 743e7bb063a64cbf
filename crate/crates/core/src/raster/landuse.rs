use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Code → label table attached to a categorical raster.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryTable {
    labels: BTreeMap<i64, String>,
}

impl CategoryTable {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (i64, String)>) -> Result<Self> {
        let mut labels = BTreeMap::new();
        for (code, label) in pairs {
            if labels.insert(code, label).is_some() {
                return Err(Error::InvalidInput(format!("duplicate category code {code}")));
            }
        }
        Ok(Self { labels })
    }

    /// Two-column CSV with header `code,label`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut pairs = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let code = rec
                .get(0)
                .and_then(|s| s.parse::<i64>().ok())
                .ok_or_else(|| Error::Parse { line, message: "invalid category code".into() })?;
            let label = rec
                .get(1)
                .ok_or_else(|| Error::Parse { line, message: "missing label".into() })?;
            pairs.push((code, label.to_string()));
        }
        Self::from_pairs(pairs)
    }

    pub fn label(&self, code: i64) -> Option<&str> {
        self.labels.get(&code).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, &str)> {
        self.labels.iter().map(|(c, l)| (*c, l.as_str()))
    }

    /// Distinct labels in code order.
    pub fn distinct_labels(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for l in self.labels.values() {
            if !out.contains(&l.as_str()) {
                out.push(l);
            }
        }
        out
    }
}

/// Level-1 land-use classes after merging wetlands into water bodies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LandUse {
    ArtificialSurfaces,
    AgriculturalAreas,
    ForestAndSemiNatural,
    WetlandsAndWater,
}

impl LandUse {
    pub const ALL: [LandUse; 4] = [
        LandUse::ArtificialSurfaces,
        LandUse::AgriculturalAreas,
        LandUse::ForestAndSemiNatural,
        LandUse::WetlandsAndWater,
    ];

    pub fn label(self) -> &'static str {
        match self {
            LandUse::ArtificialSurfaces => "Artificial surfaces",
            LandUse::AgriculturalAreas => "Agricultural areas",
            LandUse::ForestAndSemiNatural => "Forest and semi-natural areas",
            LandUse::WetlandsAndWater => "Wetlands and water bodies",
        }
    }

    pub fn parse(label: &str) -> Option<Self> {
        let l = label.trim().to_ascii_lowercase();
        match l.as_str() {
            "artificial surfaces" | "artificial" => Some(LandUse::ArtificialSurfaces),
            "agricultural areas" | "agricultural" => Some(LandUse::AgriculturalAreas),
            "forest and semi-natural areas" | "forest and semi natural areas" | "forest" => {
                Some(LandUse::ForestAndSemiNatural)
            }
            "wetlands" | "water bodies" | "wetlands and water bodies" | "water" => Some(LandUse::WetlandsAndWater),
            _ => None,
        }
    }

    /// CORINE codes carry their level-1 class in the leading digit
    /// (1xx artificial … 4xx wetlands, 5xx water).
    pub fn from_corine_code(code: i64) -> Option<Self> {
        let mut lead = code.abs();
        while lead >= 10 {
            lead /= 10;
        }
        match lead {
            1 => Some(LandUse::ArtificialSurfaces),
            2 => Some(LandUse::AgriculturalAreas),
            3 => Some(LandUse::ForestAndSemiNatural),
            4 | 5 => Some(LandUse::WetlandsAndWater),
            _ => None,
        }
    }
}

/// Raster code → level-1 land-use class.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LandUseTable {
    classes: BTreeMap<i64, LandUse>,
}

impl LandUseTable {
    pub fn from_classes(pairs: impl IntoIterator<Item = (i64, LandUse)>) -> Result<Self> {
        let mut classes = BTreeMap::new();
        for (code, class) in pairs {
            if classes.insert(code, class).is_some() {
                return Err(Error::InvalidInput(format!("duplicate land-use code {code}")));
            }
        }
        Ok(Self { classes })
    }

    /// Reads `code,label` rows; labels are level-1 names, with wetlands and
    /// water bodies merged into one class.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let raw = CategoryTable::from_csv(reader)?;
        let pairs = raw
            .iter()
            .map(|(code, label)| {
                LandUse::parse(label)
                    .map(|c| (code, c))
                    .ok_or_else(|| Error::InvalidInput(format!("unknown land-use label '{label}' for code {code}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_classes(pairs)
    }

    /// Classifies CORINE codes by their leading digit.
    pub fn from_corine_codes(codes: impl IntoIterator<Item = i64>) -> Result<Self> {
        let pairs = codes
            .into_iter()
            .map(|code| {
                LandUse::from_corine_code(code)
                    .map(|c| (code, c))
                    .ok_or_else(|| Error::InvalidInput(format!("code {code} is not a CORINE class")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_classes(pairs)
    }

    pub fn class(&self, code: i64) -> Option<LandUse> {
        self.classes.get(&code).copied()
    }

    pub fn category_table(&self) -> CategoryTable {
        CategoryTable {
            labels: self.classes.iter().map(|(c, l)| (*c, l.label().to_string())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_level1_classes_after_merge() {
        let codes = [111, 112, 211, 242, 311, 324, 411, 421, 511, 523];
        let t = LandUseTable::from_corine_codes(codes).unwrap();
        let ct = t.category_table();
        assert_eq!(ct.distinct_labels().len(), 4);
        assert_eq!(t.class(411), t.class(523));
        assert_eq!(t.class(111), Some(LandUse::ArtificialSurfaces));
    }

    #[test]
    fn csv_table() {
        let text = "code,label\n1,Artificial surfaces\n2,Agricultural areas\n3,Forest and semi-natural areas\n4,Wetlands\n5,Water bodies\n";
        let t = LandUseTable::from_csv(text.as_bytes()).unwrap();
        assert_eq!(t.class(4), Some(LandUse::WetlandsAndWater));
        assert_eq!(t.class(5), Some(LandUse::WetlandsAndWater));
        let bad = "code,label\n1,Glacier\n";
        assert!(LandUseTable::from_csv(bad.as_bytes()).is_err());
        let dup = "code,label\n1,a\n1,b\n";
        assert!(CategoryTable::from_csv(dup.as_bytes()).is_err());
    }
}
