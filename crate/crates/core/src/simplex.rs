//! Geometry of the probability simplex: softmax parameterization, its
//! Jacobian-transpose product, and Euclidean projection.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};

/// Tolerance for the `sum(z) == 1` invariant.
pub const SUM_TOL: f64 = 1e-9;

/// A point on the probability simplex: nonnegative components summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    pub fn new(z: Vec<f64>) -> Result<Self> {
        if z.is_empty() {
            return Err(Error::InvalidInput("simplex weights need at least one component".into()));
        }
        check_finite("z", &z)?;
        if let Some(i) = z.iter().position(|&x| x < 0.0) {
            return Err(Error::InvalidInput(format!("z[{i}] = {} is negative", z[i])));
        }
        let s: f64 = z.iter().sum();
        if (s - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidInput(format!("weights sum to {s}, not 1")));
        }
        Ok(Self(z))
    }

    pub fn uniform(k: usize) -> Self {
        assert!(k > 0, "simplex of dimension zero");
        Self(vec![1.0 / k as f64; k])
    }

    pub fn vertex(k: usize, i: usize) -> Self {
        assert!(i < k);
        let mut z = vec![0.0; k];
        z[i] = 1.0;
        Self(z)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Wraps an already-normalized vector without re-validating.
    pub(crate) fn from_normalized(z: Vec<f64>) -> Self {
        debug_assert!((z.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        Self(z)
    }
}

impl TryFrom<Vec<f64>> for SimplexWeights {
    type Error = Error;
    fn try_from(z: Vec<f64>) -> Result<Self> {
        Self::new(z)
    }
}

impl From<SimplexWeights> for Vec<f64> {
    fn from(z: SimplexWeights) -> Self {
        z.0
    }
}

impl std::ops::Deref for SimplexWeights {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Unconstrained softmax logits. Always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Logits(Vec<f64>);

impl Logits {
    pub fn new(xi: Vec<f64>) -> Result<Self> {
        if xi.is_empty() {
            return Err(Error::InvalidInput("logits need at least one component".into()));
        }
        check_finite("xi", &xi)?;
        Ok(Self(xi))
    }

    pub fn zeros(k: usize) -> Self {
        assert!(k > 0);
        Self(vec![0.0; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn softmax(&self) -> SimplexWeights {
        SimplexWeights::from_normalized(softmax_unchecked(&self.0))
    }

    /// Replaces the logits, rejecting non-finite values and leaving `self`
    /// untouched on error.
    pub fn set(&mut self, xi: Vec<f64>) -> Result<()> {
        check_len(self.0.len(), xi.len())?;
        check_finite("xi", &xi)?;
        self.0 = xi;
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for Logits {
    type Error = Error;
    fn try_from(xi: Vec<f64>) -> Result<Self> {
        Self::new(xi)
    }
}

impl From<Logits> for Vec<f64> {
    fn from(xi: Logits) -> Self {
        xi.0
    }
}

fn softmax_unchecked(xi: &[f64]) -> Vec<f64> {
    let max = xi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z: Vec<f64> = xi.iter().map(|&x| (x - max).exp()).collect();
    let s: f64 = z.iter().sum();
    for zi in &mut z {
        *zi /= s;
    }
    z
}

/// `exp(xi_i - max xi) / sum_j exp(xi_j - max xi)`.
pub fn softmax(xi: &[f64]) -> Result<SimplexWeights> {
    if xi.is_empty() {
        return Err(Error::InvalidInput("softmax of an empty vector".into()));
    }
    check_finite("xi", xi)?;
    Ok(SimplexWeights::from_normalized(softmax_unchecked(xi)))
}

/// Product of the transposed softmax Jacobian with `v`:
/// `z ⊙ (v − (zᵀv)·1)` where `z = softmax(xi)`.
///
/// The softmax Jacobian is symmetric, so this is also the plain JVP.
pub fn softmax_jvp_transpose(xi: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    check_len(xi.len(), v.len())?;
    check_finite("v", v)?;
    let z = softmax(xi)?;
    Ok(jvp_with_weights(&z, v))
}

pub(crate) fn jvp_with_weights(z: &[f64], v: &[f64]) -> Vec<f64> {
    let zv: f64 = z.iter().zip(v).map(|(a, b)| a * b).sum();
    z.iter().zip(v).map(|(zi, vi)| zi * (vi - zv)).collect()
}

/// Euclidean projection onto the simplex by sorting and thresholding.
pub fn project_simplex(y: &[f64]) -> Result<SimplexWeights> {
    if y.is_empty() {
        return Err(Error::InvalidInput("projection of an empty vector".into()));
    }
    check_finite("y", y)?;
    let mut u = y.to_vec();
    // Stable sort keeps tied entries in input order.
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            tau = t;
        }
    }
    let mut z: Vec<f64> = y.iter().map(|&yi| (yi - tau).max(0.0)).collect();
    // Absorb rounding so the invariant holds to machine precision.
    let s: f64 = z.iter().sum();
    for zi in &mut z {
        *zi /= s;
    }
    Ok(SimplexWeights::from_normalized(z))
}
