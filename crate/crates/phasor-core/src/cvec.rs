use std::ops::{Deref, DerefMut};

use crate::{Complex, PhasorError};

/// A vector of complex phasors, one entry per snapshot.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CVec(pub Vec<Complex>);

/// Builds phasors `mag * e^{i ang}` elementwise.
pub fn from_polar(mag: &[f64], ang: &[f64]) -> Result<CVec, PhasorError> {
    if mag.len() != ang.len() {
        return Err(PhasorError::LengthMismatch { expected: mag.len(), got: ang.len() });
    }
    Ok(CVec(mag.iter().zip(ang).map(|(&m, &a)| Complex::from_polar(m, a)).collect()))
}

impl CVec {
    pub fn zeros(n: usize) -> Self {
        CVec(vec![Complex::new(0.0, 0.0); n])
    }

    /// `e^{i x}` for every entry of `x`.
    pub fn exp_i(x: &[f64]) -> Self {
        CVec(x.iter().map(|&a| Complex::from_polar(1.0, a)).collect())
    }

    pub fn from_parts(re: &[f64], im: &[f64]) -> Result<Self, PhasorError> {
        if re.len() != im.len() {
            return Err(PhasorError::LengthMismatch { expected: re.len(), got: im.len() });
        }
        Ok(CVec(re.iter().zip(im).map(|(&r, &i)| Complex::new(r, i)).collect()))
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.0.iter().map(|c| c.norm()).collect()
    }

    /// Principal arguments in `(-pi, pi]`.
    pub fn angle(&self) -> Vec<f64> {
        self.0.iter().map(|c| c.arg()).collect()
    }

    pub fn re(&self) -> Vec<f64> {
        self.0.iter().map(|c| c.re).collect()
    }

    pub fn im(&self) -> Vec<f64> {
        self.0.iter().map(|c| c.im).collect()
    }

    pub fn conj(&self) -> Self {
        CVec(self.0.iter().map(|c| c.conj()).collect())
    }

    pub fn scale(&self, k: Complex) -> Self {
        CVec(self.0.iter().map(|&c| c * k).collect())
    }

    /// Elementwise product.
    pub fn hadamard(&self, other: &Self) -> Result<Self, PhasorError> {
        self.check_len(other)?;
        Ok(CVec(self.0.iter().zip(&other.0).map(|(a, b)| a * b).collect()))
    }

    pub fn add(&self, other: &Self) -> Result<Self, PhasorError> {
        self.check_len(other)?;
        Ok(CVec(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect()))
    }

    pub fn sub(&self, other: &Self) -> Result<Self, PhasorError> {
        self.check_len(other)?;
        Ok(CVec(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect()))
    }

    /// Euclidean norm over all entries.
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn into_inner(self) -> Vec<Complex> {
        self.0
    }

    fn check_len(&self, other: &Self) -> Result<(), PhasorError> {
        if self.0.len() != other.0.len() {
            return Err(PhasorError::LengthMismatch { expected: self.0.len(), got: other.0.len() });
        }
        Ok(())
    }
}

impl Deref for CVec {
    type Target = [Complex];
    fn deref(&self) -> &[Complex] {
        &self.0
    }
}

impl DerefMut for CVec {
    fn deref_mut(&mut self) -> &mut [Complex] {
        &mut self.0
    }
}

impl From<Vec<Complex>> for CVec {
    fn from(v: Vec<Complex>) -> Self {
        CVec(v)
    }
}

impl FromIterator<Complex> for CVec {
    fn from_iter<I: IntoIterator<Item = Complex>>(iter: I) -> Self {
        CVec(iter.into_iter().collect())
    }
}
