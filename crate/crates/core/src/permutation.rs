//! Label permutations used to build the muddled copies of a response.

use ndarray::{Array1, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MlrError, Result};

/// `T` permutations of `{0..n-1}`, optionally all derangements.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationSet {
    perms: Vec<Vec<usize>>,
    derangements: bool,
}

fn is_permutation(perm: &[usize]) -> bool {
    let mut seen = vec![false; perm.len()];
    for &i in perm {
        if i >= perm.len() || seen[i] {
            return false;
        }
        seen[i] = true;
    }
    true
}

pub fn has_fixed_point(perm: &[usize]) -> bool {
    perm.iter().enumerate().any(|(i, &p)| i == p)
}

impl PermutationSet {
    /// Builds a set from explicit index sequences, validating each one.
    pub fn from_perms(perms: Vec<Vec<usize>>) -> Result<Self> {
        let n = perms.first().map(Vec::len).unwrap_or(0);
        for (t, p) in perms.iter().enumerate() {
            if p.len() != n {
                return Err(MlrError::ShapeMismatch(format!(
                    "permutation {t} has length {} (expected {n})",
                    p.len()
                )));
            }
            if !is_permutation(p) {
                return Err(MlrError::InvalidInput(format!("sequence {t} is not a permutation")));
            }
        }
        let derangements = !perms.is_empty() && perms.iter().all(|p| !has_fixed_point(p));
        Ok(Self { perms, derangements })
    }

    /// An empty set: the criterion reduces to its fit term.
    pub fn empty() -> Self {
        Self { perms: Vec::new(), derangements: false }
    }

    pub fn len(&self) -> usize {
        self.perms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perms.is_empty()
    }

    /// Length of each permutation, `None` for an empty set.
    pub fn n(&self) -> Option<usize> {
        self.perms.first().map(Vec::len)
    }

    pub fn is_derangement_set(&self) -> bool {
        self.derangements
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.perms.iter().map(Vec::as_slice)
    }

    pub fn as_slice(&self) -> &[Vec<usize>] {
        &self.perms
    }
}

/// Draws `t` independent uniform permutations of `n` points, or uniform
/// derangements by rejection when `derangements` is set.
pub fn sample_permutations(n: usize, t: usize, derangements: bool, seed: u64) -> Result<PermutationSet> {
    if n < 2 {
        return Err(MlrError::InvalidInput(format!("need n >= 2 to permute labels, got {n}")));
    }
    if t < 1 {
        return Err(MlrError::InvalidInput("need at least one permutation".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perms = Vec::with_capacity(t);
    for _ in 0..t {
        let mut p: Vec<usize> = (0..n).collect();
        loop {
            p.shuffle(&mut rng);
            if !derangements || !has_fixed_point(&p) {
                break;
            }
        }
        perms.push(p);
    }
    Ok(PermutationSet { perms, derangements })
}

/// `out[i] = y[perm[i]]`.
pub fn apply_permutation(y: ArrayView1<f64>, perm: &[usize]) -> Result<Array1<f64>> {
    if y.len() != perm.len() {
        return Err(MlrError::ShapeMismatch(format!(
            "vector length {} vs permutation length {}",
            y.len(),
            perm.len()
        )));
    }
    Ok(perm.iter().map(|&i| y[i]).collect())
}
