//! Fixed-length classical bit strings used for protocol data (raw strings,
//! basis choices, answers). Serialized as "0101…" text.

use rand::Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Bits(Vec<u8>);

impl Bits {
    pub fn new(bits: Vec<u8>) -> Self {
        assert!(bits.iter().all(|&b| b <= 1), "Bits entries must be 0 or 1");
        Self(bits)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0; n])
    }

    pub fn random(n: usize, rng: &mut impl Rng) -> Self {
        Self((0..n).map(|_| rng.gen::<bool>() as u8).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> u8 {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, b: u8) {
        assert!(b <= 1);
        self.0[i] = b;
    }

    pub fn push(&mut self, b: u8) {
        assert!(b <= 1);
        self.0.push(b);
    }

    pub fn iter(&self) -> impl Iterator<Item = u8> + '_ {
        self.0.iter().copied()
    }

    pub fn xor(&self, rhs: &Self) -> Self {
        assert_eq!(self.len(), rhs.len(), "xor: length mismatch");
        Self(self.0.iter().zip(&rhs.0).map(|(a, b)| a ^ b).collect())
    }

    /// Indices where the two strings agree.
    pub fn matching_positions(&self, rhs: &Self) -> Vec<usize> {
        assert_eq!(self.len(), rhs.len(), "matching_positions: length mismatch");
        (0..self.len()).filter(|&i| self.0[i] == rhs.0[i]).collect()
    }

    pub fn select(&self, positions: &[usize]) -> Self {
        Self(positions.iter().map(|&i| self.0[i]).collect())
    }

    pub fn concat(&self, rhs: &Self) -> Self {
        let mut v = self.0.clone();
        v.extend_from_slice(&rhs.0);
        Self(v)
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self(self.0[range].to_vec())
    }

    pub fn parse(s: &str) -> Result<Self, String> {
        let mut v = Vec::with_capacity(s.len());
        for ch in s.chars() {
            match ch {
                '0' => v.push(0),
                '1' => v.push(1),
                other => return Err(format!("invalid bit character {other:?}")),
            }
        }
        Ok(Self(v))
    }
}

impl std::fmt::Display for Bits {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for b in &self.0 {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl std::fmt::Debug for Bits {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Bits({self})")
    }
}

impl Serialize for Bits {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Bits {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Bits::parse(&s).map_err(D::Error::custom)
    }
}
