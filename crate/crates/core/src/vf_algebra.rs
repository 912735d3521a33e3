//! Exact symbolic compositions of the backward Loewner vector fields.
//!
//! With `a = 2/κ`, the dt field acts as `V0 = (-a/z) d/dz` and the dB field
//! as `V1 = d/dz` (`d/dx` and `d/dz` agree on holomorphic functions). Any
//! composition applied to the identity is a single Laurent monomial
//! `c * a^j * z^p`, which [`LaurentTerm`] stores exactly.
//!
//! Words are read like iterated integrals: letter `k` of the word pairs with
//! the `k`-th (earliest to latest) integration variable, and the operator of
//! the *last* letter acts first on `Id`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use num_rational::Rational64;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default largest level handed out by [`enumerate_level`].
pub const DEFAULT_LEVEL_CAP: usize = 12;
/// Past this length the integer coefficients no longer fit in `i64`.
pub const MAX_LEVEL: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Letter {
    /// `dt`, vector field `V0`.
    Time = 0,
    /// `dB`, vector field `V1`.
    Noise = 1,
}

impl Letter {
    pub fn from_digit(d: u8) -> Option<Letter> {
        match d {
            0 => Some(Letter::Time),
            1 => Some(Letter::Noise),
            _ => None,
        }
    }
}

/// A word over `{0, 1}`. Serialised as its digit string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct MultiIndex(Vec<Letter>);

impl From<MultiIndex> for String {
    fn from(word: MultiIndex) -> String {
        word.to_string()
    }
}

impl TryFrom<String> for MultiIndex {
    type Error = Error;

    fn try_from(text: String) -> Result<Self> {
        text.parse()
    }
}

impl MultiIndex {
    pub fn empty() -> Self {
        MultiIndex(Vec::new())
    }

    pub fn new(letters: Vec<Letter>) -> Self {
        MultiIndex(letters)
    }

    /// Builds a word from digits; panics on anything other than 0 or 1.
    pub fn from_digits(digits: &[u8]) -> Self {
        MultiIndex(
            digits
                .iter()
                .map(|&d| Letter::from_digit(d).unwrap_or_else(|| panic!("letter {d} is not 0 or 1")))
                .collect(),
        )
    }

    /// Word of the given length whose letters are the bits of `bits`, the
    /// first letter being the most significant bit.
    pub fn from_bits(len: usize, bits: u64) -> Self {
        MultiIndex(
            (0..len)
                .map(|k| {
                    if (bits >> (len - 1 - k)) & 1 == 1 {
                        Letter::Noise
                    } else {
                        Letter::Time
                    }
                })
                .collect(),
        )
    }

    pub fn bits(&self) -> u64 {
        self.0.iter().fold(0, |acc, &l| (acc << 1) | l as u64)
    }

    /// Position in a flat table holding all words up to some length, ordered
    /// by length and then lexicographically.
    pub fn flat_index(&self) -> usize {
        (1usize << self.len()) - 1 + self.bits() as usize
    }

    pub fn letters(&self) -> &[Letter] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of `dt` letters.
    pub fn time_count(&self) -> usize {
        self.0.iter().filter(|&&l| l == Letter::Time).count()
    }

    /// Number of `dB` letters.
    pub fn noise_count(&self) -> usize {
        self.len() - self.time_count()
    }

    /// `m + n/2` with `m` time letters and `n` noise letters.
    pub fn degree(&self) -> Rational64 {
        Rational64::new(2 * self.time_count() as i64 + self.noise_count() as i64, 2)
    }

    pub fn degree_f64(&self) -> f64 {
        self.time_count() as f64 + 0.5 * self.noise_count() as f64
    }

    /// All words of length exactly `len`, in lexicographic order.
    pub fn all_of_length(len: usize) -> impl Iterator<Item = MultiIndex> {
        (0..1u64 << len).map(move |bits| MultiIndex::from_bits(len, bits))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("-");
        }
        for l in &self.0 {
            write!(f, "{}", *l as u8)?;
        }
        Ok(())
    }
}

impl FromStr for MultiIndex {
    type Err = Error;

    /// Accepts `011`, `0,1,1`, `(0,1,1)`; `-`, `()` or an empty string for
    /// the empty word.
    fn from_str(s: &str) -> Result<Self> {
        let letters = s
            .chars()
            .filter(|c| !matches!(c, '(' | ')' | ',' | ' ' | '-'))
            .map(|c| match c {
                '0' => Ok(Letter::Time),
                '1' => Ok(Letter::Noise),
                other => Err(Error::invalid("word", format!("unexpected letter {other:?} in {s:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MultiIndex(letters))
    }
}

/// `(m + n/2)`: the time-scaling degree of a word.
pub fn deg(word: &MultiIndex) -> Rational64 {
    word.degree()
}

/// Exact value `coeff * a^a_power * z^z_power` of a composition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LaurentTerm {
    pub coeff: Rational64,
    pub a_power: u32,
    pub z_power: i32,
}

impl LaurentTerm {
    pub const fn identity() -> Self {
        LaurentTerm {
            coeff: Rational64::new_raw(1, 1),
            a_power: 0,
            z_power: 1,
        }
    }

    pub const fn zero() -> Self {
        LaurentTerm {
            coeff: Rational64::new_raw(0, 1),
            a_power: 0,
            z_power: 0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeff.is_zero()
    }

    /// `d/dz`.
    fn differentiate(self) -> Self {
        if self.is_zero() || self.z_power == 0 {
            return Self::zero();
        }
        LaurentTerm {
            coeff: self.coeff * Rational64::from_integer(self.z_power as i64),
            a_power: self.a_power,
            z_power: self.z_power - 1,
        }
    }

    /// Applies the operator of one letter.
    pub fn apply(self, letter: Letter) -> Self {
        let d = self.differentiate();
        match letter {
            Letter::Noise => d,
            Letter::Time if d.is_zero() => d,
            Letter::Time => LaurentTerm {
                coeff: -d.coeff,
                a_power: d.a_power + 1,
                z_power: d.z_power - 1,
            },
        }
    }

    /// Numeric value with an explicit `a` and a factor `sigma` per noise
    /// letter; `noise_letters` is the number of `dB` letters of the word.
    pub fn eval_scaled(&self, z: Complex64, a: f64, sigma: f64, noise_letters: usize) -> Result<Complex64> {
        if self.is_zero() {
            return Ok(Complex64::new(0.0, 0.0));
        }
        if self.z_power < 0 && z == Complex64::new(0.0, 0.0) {
            return Err(Error::Pole);
        }
        let c = self.coeff.to_f64().expect("rational coefficient is finite")
            * a.powi(self.a_power as i32)
            * sigma.powi(noise_letters as i32);
        Ok(z.powi(self.z_power) * c)
    }
}

impl fmt::Display for LaurentTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("0");
        }
        write!(f, "{} a^{} z^{}", self.coeff, self.a_power, self.z_power)
    }
}

/// `V_{i1} ... V_{ik} Id`, consuming the word right to left.
pub fn compose(word: &MultiIndex) -> LaurentTerm {
    word.letters()
        .iter()
        .rev()
        .fold(LaurentTerm::identity(), |t, &l| t.apply(l))
}

/// Every word of length `r` with its composition. `r` is limited to
/// [`DEFAULT_LEVEL_CAP`]; see [`enumerate_level_with_cap`].
pub fn enumerate_level(r: usize) -> Result<Vec<(MultiIndex, LaurentTerm)>> {
    enumerate_level_with_cap(r, DEFAULT_LEVEL_CAP)
}

pub fn enumerate_level_with_cap(r: usize, cap: usize) -> Result<Vec<(MultiIndex, LaurentTerm)>> {
    let cap = cap.min(MAX_LEVEL);
    if r > cap {
        return Err(Error::CapExceeded { requested: r, cap });
    }
    Ok(MultiIndex::all_of_length(r)
        .map(|w| {
            let t = compose(&w);
            (w, t)
        })
        .collect())
}

/// `coeff * (2/κ)^a_power * z^z_power`.
pub fn eval_term(term: &LaurentTerm, z: Complex64, kappa: f64) -> Result<Complex64> {
    if !(kappa > 0.0) {
        return Err(Error::invalid("kappa", format!("kappa must be positive, got {kappa}")));
    }
    term.eval_scaled(z, 2.0 / kappa, 1.0, 0)
}
