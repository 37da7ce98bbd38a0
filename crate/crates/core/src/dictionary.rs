//! Ordered heterogeneous dictionaries of effector configurations.
//!
//! A dictionary is a list of alphabets in precedence order. Each configuration
//! string picks one character from every alphabet; strings are totally ordered
//! lexicographically by character index, most significant alphabet first. That
//! order is the same as the order of the 1-based dictionary index `j`, and as
//! the order of the unit-interval points `Z_j = (j - 1) / N_d`.
//!
//! Character payloads (positions, sizes, side counts) are only consulted when a
//! string is turned into a polygon. Ordering never looks at them.

use std::cmp::Ordering;
use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DictionaryError {
    #[error("dictionary index {index} out of range 1..={size}")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("character index {value} out of range 1..={size} for alphabet `{alphabet}`")]
    CharacterOutOfRange {
        alphabet: String,
        value: usize,
        size: usize,
    },
    #[error("string has {got} characters but the dictionary has {expected} alphabets")]
    LengthMismatch { expected: usize, got: usize },
    #[error("alphabet `{0}` is empty")]
    EmptyAlphabet(String),
    #[error("dictionary has no alphabets")]
    NoAlphabets,
    #[error("dictionary size overflows")]
    TooLarge,
    #[error("arena extents must be positive (width {width}, height {height}, scale {scale})")]
    InvalidArena { width: f64, height: f64, scale: f64 },
    #[error("dictionary has no alphabet with role {0:?}")]
    MissingRole(AlphabetRole),
    #[error(
        "polygon needs at least 3 sides and a positive radius (sides {sides}, radius {radius})"
    )]
    InvalidPolygon { sides: f64, radius: f64 },
    #[error("failed to read dictionary file: {0}")]
    Io(String),
    #[error("failed to parse dictionary file: {0}")]
    Parse(String),
}

/// What a character payload means when the string is rendered as a polygon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AlphabetRole {
    Horizontal,
    Vertical,
    Sides,
    Size,
    #[default]
    Generic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alphabet {
    pub name: String,
    #[serde(default)]
    pub role: AlphabetRole,
    /// Character payloads in precedence order.
    pub values: Vec<f64>,
}

impl Alphabet {
    pub fn new(name: impl Into<String>, role: AlphabetRole, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            role,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Arena extents in abstract units relative to the arena height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArenaSpec {
    pub width: f64,
    pub height: f64,
    /// Multiplier from abstract units to physical units.
    #[serde(default = "default_scale")]
    pub physical_scale: f64,
}

fn default_scale() -> f64 {
    1.0
}

impl Default for ArenaSpec {
    fn default() -> Self {
        Self {
            width: 1.5,
            height: 1.0,
            physical_scale: 1.0,
        }
    }
}

impl ArenaSpec {
    /// Width in physical units.
    pub fn scaled_width(&self) -> f64 {
        self.width * self.physical_scale
    }

    /// Height in physical units.
    pub fn scaled_height(&self) -> f64 {
        self.height * self.physical_scale
    }

    fn validate(&self) -> Result<(), DictionaryError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(self.width) && ok(self.height) && ok(self.physical_scale) {
            Ok(())
        } else {
            Err(DictionaryError::InvalidArena {
                width: self.width,
                height: self.height,
                scale: self.physical_scale,
            })
        }
    }
}

/// A configuration string: one 1-based character index per alphabet,
/// most significant alphabet first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfigString(pub Vec<usize>);

impl ConfigString {
    pub fn chars(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for ConfigString {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

/// Result of comparing two strings: their order plus the first alphabet
/// position (0-based) where they differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Comparison {
    pub ordering: Ordering,
    pub critical: Option<usize>,
}

/// A regular polygon with one vertex at 12 o'clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolygonSpec {
    pub center: [f64; 2],
    pub n_sides: usize,
    pub radius: f64,
}

impl PolygonSpec {
    pub fn vertices(&self) -> Vec<[f64; 2]> {
        let n = self.n_sides as f64;
        (0..self.n_sides)
            .map(|i| {
                let angle = FRAC_PI_2 + std::f64::consts::TAU * i as f64 / n;
                [
                    self.center[0] + self.radius * angle.cos(),
                    self.center[1] + self.radius * angle.sin(),
                ]
            })
            .collect()
    }
}

/// On-disk layout of a dictionary preset.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawDictionary {
    alphabets: Vec<Alphabet>,
    #[serde(default)]
    arena: ArenaSpec,
}

impl TryFrom<RawDictionary> for DictionarySpec {
    type Error = DictionaryError;

    fn try_from(raw: RawDictionary) -> Result<Self, Self::Error> {
        Self::new(raw.alphabets, raw.arena)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDictionary")]
pub struct DictionarySpec {
    pub alphabets: Vec<Alphabet>,
    pub arena: ArenaSpec,
    #[serde(skip)]
    size: usize,
}

impl DictionarySpec {
    pub fn new(alphabets: Vec<Alphabet>, arena: ArenaSpec) -> Result<Self, DictionaryError> {
        if alphabets.is_empty() {
            return Err(DictionaryError::NoAlphabets);
        }
        let mut size = 1usize;
        for a in &alphabets {
            if a.is_empty() {
                return Err(DictionaryError::EmptyAlphabet(a.name.clone()));
            }
            size = size.checked_mul(a.len()).ok_or(DictionaryError::TooLarge)?;
        }
        arena.validate()?;
        Ok(Self {
            alphabets,
            arena,
            size,
        })
    }

    /// The 60-string swarm dictionary: horizontal position, vertical
    /// position, number of sides, size.
    pub fn swarm_preset() -> Self {
        Self::new(
            vec![
                Alphabet::new(
                    "horizontal",
                    AlphabetRole::Horizontal,
                    vec![0.4, 0.575, 0.75, 0.925, 1.10],
                ),
                Alphabet::new("vertical", AlphabetRole::Vertical, vec![0.4, 0.6]),
                Alphabet::new("sides", AlphabetRole::Sides, vec![3.0, 4.0, 5.0]),
                Alphabet::new("size", AlphabetRole::Size, vec![0.3, 0.4]),
            ],
            ArenaSpec::default(),
        )
        .expect("preset is valid")
    }

    /// `r` generic alphabets of `b` characters each, `N_d = b^r`.
    pub fn synthetic(b: usize, r: usize) -> Result<Self, DictionaryError> {
        let alphabets = (0..r)
            .map(|i| {
                Alphabet::new(
                    format!("a{}", i + 1),
                    AlphabetRole::Generic,
                    (1..=b).map(|v| v as f64).collect(),
                )
            })
            .collect();
        Self::new(alphabets, ArenaSpec::default())
    }

    pub fn from_json(text: &str) -> Result<Self, DictionaryError> {
        let raw: RawDictionary =
            serde_json::from_str(text).map_err(|e| DictionaryError::Parse(e.to_string()))?;
        Self::new(raw.alphabets, raw.arena)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DictionaryError> {
        let text = fs::read_to_string(path).map_err(|e| DictionaryError::Io(e.to_string()))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dictionary serializes")
    }

    /// Total number of strings, `N_d`.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn alphabet_sizes(&self) -> Vec<usize> {
        self.alphabets.iter().map(Alphabet::len).collect()
    }

    pub fn with_scale(mut self, physical_scale: f64) -> Result<Self, DictionaryError> {
        self.arena.physical_scale = physical_scale;
        self.arena.validate()?;
        Ok(self)
    }

    fn check_index(&self, j: usize) -> Result<(), DictionaryError> {
        if j == 0 || j > self.size {
            Err(DictionaryError::IndexOutOfRange {
                index: j,
                size: self.size,
            })
        } else {
            Ok(())
        }
    }

    fn check_string(&self, s: &ConfigString) -> Result<(), DictionaryError> {
        if s.0.len() != self.alphabets.len() {
            return Err(DictionaryError::LengthMismatch {
                expected: self.alphabets.len(),
                got: s.0.len(),
            });
        }
        for (&c, a) in s.0.iter().zip(&self.alphabets) {
            if c == 0 || c > a.len() {
                return Err(DictionaryError::CharacterOutOfRange {
                    alphabet: a.name.clone(),
                    value: c,
                    size: a.len(),
                });
            }
        }
        Ok(())
    }

    /// Mixed-radix decode of a 1-based index, most significant alphabet first.
    pub fn decode_index(&self, j: usize) -> Result<ConfigString, DictionaryError> {
        self.check_index(j)?;
        let mut rem = j - 1;
        let mut chars = vec![0; self.alphabets.len()];
        for (slot, a) in chars.iter_mut().zip(&self.alphabets).rev() {
            *slot = rem % a.len() + 1;
            rem /= a.len();
        }
        Ok(ConfigString(chars))
    }

    pub fn encode_string(&self, s: &ConfigString) -> Result<usize, DictionaryError> {
        self.check_string(s)?;
        let j =
            s.0.iter()
                .zip(&self.alphabets)
                .fold(0usize, |acc, (&c, a)| acc * a.len() + (c - 1));
        Ok(j + 1)
    }

    /// Lexicographic comparison by character index.
    pub fn compare(
        &self,
        a: &ConfigString,
        b: &ConfigString,
    ) -> Result<Comparison, DictionaryError> {
        self.check_string(a)?;
        self.check_string(b)?;
        let critical = a.0.iter().zip(&b.0).position(|(x, y)| x != y);
        let ordering = match critical {
            Some(pos) => a.0[pos].cmp(&b.0[pos]),
            None => Ordering::Equal,
        };
        Ok(Comparison { ordering, critical })
    }

    /// `Z_j = (j - 1) / N_d`.
    pub fn to_unit(&self, j: usize) -> Result<f64, DictionaryError> {
        self.check_index(j)?;
        Ok(unit_point(j, self.size))
    }

    /// Half-open interval `[(j-1)/N_d, j/N_d)` owned by string `j`.
    pub fn interval(&self, j: usize) -> Result<(f64, f64), DictionaryError> {
        self.check_index(j)?;
        Ok((unit_point(j, self.size), j as f64 / self.size as f64))
    }

    fn payload(&self, s: &ConfigString, role: AlphabetRole) -> Result<f64, DictionaryError> {
        let pos = self
            .alphabets
            .iter()
            .position(|a| a.role == role)
            .ok_or(DictionaryError::MissingRole(role))?;
        Ok(self.alphabets[pos].values[s.0[pos] - 1])
    }

    /// Polygon denoted by a string, scaled by the arena's physical scale.
    pub fn to_polygon(&self, s: &ConfigString) -> Result<PolygonSpec, DictionaryError> {
        self.check_string(s)?;
        let scale = self.arena.physical_scale;
        let x = self.payload(s, AlphabetRole::Horizontal)?;
        let y = self.payload(s, AlphabetRole::Vertical)?;
        let sides = self.payload(s, AlphabetRole::Sides)?;
        let size = self.payload(s, AlphabetRole::Size)?;
        if sides < 3.0 || sides.fract() != 0.0 || size <= 0.0 {
            return Err(DictionaryError::InvalidPolygon {
                sides,
                radius: size,
            });
        }
        Ok(PolygonSpec {
            center: [x * scale, y * scale],
            n_sides: sides as usize,
            radius: size * scale,
        })
    }

    pub fn index_polygon(&self, j: usize) -> Result<PolygonSpec, DictionaryError> {
        self.to_polygon(&self.decode_index(j)?)
    }
}

/// `Z_j = (j - 1) / N_d` without range checks; simulations only need `N_d`.
pub fn unit_point(j: usize, n_d: usize) -> f64 {
    (j - 1) as f64 / n_d as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Nested-loop enumeration, independent of the mixed-radix arithmetic.
    fn enumerate(spec: &DictionarySpec) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for a in &spec.alphabets {
            let mut next = Vec::new();
            for prefix in &out {
                for c in 1..=a.len() {
                    let mut s = prefix.clone();
                    s.push(c);
                    next.push(s);
                }
            }
            out = next;
        }
        out
    }

    #[test]
    fn preset_has_sixty_strings() {
        let d = DictionarySpec::swarm_preset();
        assert_eq!(d.size(), 60);
        assert_eq!(d.alphabet_sizes(), vec![5, 2, 3, 2]);
    }

    #[test]
    fn decode_examples() {
        let d = DictionarySpec::swarm_preset();
        assert_eq!(d.decode_index(1).unwrap().0, vec![1, 1, 1, 1]);
        assert_eq!(d.decode_index(2).unwrap().0, vec![1, 1, 1, 2]);
        assert_eq!(d.decode_index(60).unwrap().0, vec![5, 2, 3, 2]);
        assert!(matches!(
            d.decode_index(0),
            Err(DictionaryError::IndexOutOfRange { .. })
        ));
        assert!(d.decode_index(61).is_err());
    }

    #[test]
    fn encode_matches_enumeration() {
        let d = DictionarySpec::swarm_preset();
        let all = enumerate(&d);
        assert_eq!(all.len(), 60);
        for (i, s) in all.iter().enumerate() {
            let j = d.encode_string(&ConfigString(s.clone())).unwrap();
            assert_eq!(j, i + 1);
            assert_eq!(d.decode_index(j).unwrap().0, *s);
        }
        // (3,1,2,1) sits at position 27 of the enumeration.
        let pos = all.iter().position(|s| *s == vec![3, 1, 2, 1]).unwrap() + 1;
        assert_eq!(pos, 27);
        assert_eq!(
            d.encode_string(&ConfigString(vec![3, 1, 2, 1])).unwrap(),
            27
        );
    }

    #[test]
    fn encode_rejects_bad_strings() {
        let d = DictionarySpec::swarm_preset();
        assert!(matches!(
            d.encode_string(&ConfigString(vec![6, 1, 1, 1])),
            Err(DictionaryError::CharacterOutOfRange { .. })
        ));
        assert!(matches!(
            d.encode_string(&ConfigString(vec![0, 1, 1, 1])),
            Err(DictionaryError::CharacterOutOfRange { .. })
        ));
        assert!(matches!(
            d.encode_string(&ConfigString(vec![1, 1, 1])),
            Err(DictionaryError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn compare_triangle_left_precedes_pentagon_right() {
        let d = DictionarySpec::swarm_preset();
        let triangle = ConfigString(vec![1, 2, 1, 2]);
        let pentagon = ConfigString(vec![5, 1, 3, 1]);
        let c = d.compare(&triangle, &pentagon).unwrap();
        assert_eq!(c.ordering, Ordering::Less);
        assert_eq!(c.critical, Some(0));
        let same = d.compare(&triangle, &triangle).unwrap();
        assert_eq!(same.ordering, Ordering::Equal);
        assert_eq!(same.critical, None);
    }

    #[test]
    fn compare_agrees_with_index_for_all_pairs() {
        let d = DictionarySpec::swarm_preset();
        for a in 1..=60 {
            for b in 1..=60 {
                let sa = d.decode_index(a).unwrap();
                let sb = d.decode_index(b).unwrap();
                assert_eq!(d.compare(&sa, &sb).unwrap().ordering, a.cmp(&b));
            }
        }
    }

    #[test]
    fn unit_points() {
        let d = DictionarySpec::swarm_preset();
        assert_eq!(d.to_unit(1).unwrap(), 0.0);
        assert_eq!(d.to_unit(31).unwrap(), 0.5);
        assert_eq!(d.to_unit(60).unwrap(), 59.0 / 60.0);
        assert_eq!(d.interval(60).unwrap(), (59.0 / 60.0, 1.0));
        assert!(d.to_unit(61).is_err());
    }

    #[test]
    fn polygon_examples() {
        let d = DictionarySpec::swarm_preset().with_scale(2.5).unwrap();
        let p = d.to_polygon(&ConfigString(vec![1, 1, 1, 1])).unwrap();
        assert!((p.center[0] - 1.0).abs() < 1e-12);
        assert!((p.center[1] - 1.0).abs() < 1e-12);
        assert_eq!(p.n_sides, 3);
        assert!((p.radius - 0.75).abs() < 1e-12);

        let d1 = DictionarySpec::swarm_preset();
        let p = d1.to_polygon(&ConfigString(vec![3, 1, 2, 1])).unwrap();
        assert_eq!(p.center, [0.75, 0.4]);
        assert_eq!(p.n_sides, 4);
        assert_eq!(p.radius, 0.3);
    }

    #[test]
    fn polygon_scales_linearly() {
        let d1 = DictionarySpec::swarm_preset();
        let d2 = DictionarySpec::swarm_preset().with_scale(2.0).unwrap();
        for j in 1..=60 {
            let a = d1.index_polygon(j).unwrap();
            let b = d2.index_polygon(j).unwrap();
            assert_eq!(b.center[0], 2.0 * a.center[0]);
            assert_eq!(b.center[1], 2.0 * a.center[1]);
            assert_eq!(b.radius, 2.0 * a.radius);
            for (va, vb) in a.vertices().iter().zip(b.vertices()) {
                assert!((vb[0] - 2.0 * va[0]).abs() < 1e-12);
                assert!((vb[1] - 2.0 * va[1]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn first_vertex_at_twelve_oclock() {
        let p = PolygonSpec {
            center: [0.5, 0.5],
            n_sides: 5,
            radius: 0.3,
        };
        let v = p.vertices();
        assert_eq!(v.len(), 5);
        assert!((v[0][0] - 0.5).abs() < 1e-12);
        assert!((v[0][1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn synthetic_dictionary_sizes() {
        assert_eq!(DictionarySpec::synthetic(3, 4).unwrap().size(), 81);
        assert_eq!(DictionarySpec::synthetic(5, 8).unwrap().size(), 390_625);
        let d = DictionarySpec::synthetic(3, 2).unwrap();
        assert!(matches!(
            d.to_polygon(&ConfigString(vec![1, 1])),
            Err(DictionaryError::MissingRole(AlphabetRole::Horizontal))
        ));
    }

    #[test]
    fn json_round_trip() {
        let d = DictionarySpec::swarm_preset();
        let back = DictionarySpec::from_json(&d.to_json()).unwrap();
        assert_eq!(back.size(), 60);
        assert_eq!(back.alphabets, d.alphabets);
        assert!(DictionarySpec::from_json(r#"{"alphabets": []}"#).is_err());
    }
}
