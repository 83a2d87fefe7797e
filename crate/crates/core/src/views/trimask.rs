//! Tripartite patch partition. Every patch index of an image lands in exactly
//! one of three parts: s (visible to the student), l (replaced by mask tokens
//! and reconstructed), t (visible to the teacher). Because the parts are
//! disjoint, the student never sees the pixels behind its mask tokens and the
//! two networks never share a patch.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskRatios {
    pub s_ratio: f64,
    pub l_ratio: f64,
    pub t_ratio: f64,
}

impl Default for MaskRatios {
    fn default() -> Self {
        MaskRatios { s_ratio: 0.3, l_ratio: 0.2, t_ratio: 0.5 }
    }
}

impl MaskRatios {
    pub fn new(s_ratio: f64, l_ratio: f64, t_ratio: f64) -> Result<Self> {
        let ratios = MaskRatios { s_ratio, l_ratio, t_ratio };
        ratios.validate()?;
        Ok(ratios)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in
            [("s_ratio", self.s_ratio), ("l_ratio", self.l_ratio), ("t_ratio", self.t_ratio)]
        {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::config(format!("{name} = {r} must lie in [0, 1]")));
            }
        }
        let sum = self.s_ratio + self.l_ratio + self.t_ratio;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("mask ratios sum to {sum}, expected 1")));
        }
        Ok(())
    }

    /// Part sizes (|s|, |l|, |t|) on a grid of n patches. |t| and |l| round
    /// half up from their ratios; s takes the remainder so the three parts
    /// always cover the grid exactly. s and t must stay non-empty.
    pub fn part_sizes(&self, n: usize) -> Result<(usize, usize, usize)> {
        self.validate()?;
        let t = round_half_up(self.t_ratio * n as f64);
        let l = round_half_up(self.l_ratio * n as f64);
        if t + l >= n {
            return Err(Error::config(format!(
                "mask ratios leave no student patches on a grid of {n} (|t| = {t}, |l| = {l})"
            )));
        }
        let s = n - t - l;
        if t == 0 {
            return Err(Error::config(format!(
                "mask ratios leave the teacher part empty on a grid of {n}"
            )));
        }
        Ok((s, l, t))
    }
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// One sampled partition: three sorted, disjoint index sets covering 0..n.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TriMask {
    pub s_idx: Vec<usize>,
    pub l_idx: Vec<usize>,
    pub t_idx: Vec<usize>,
    pub n: usize,
}

impl TriMask {
    /// Eval-only partition with a fixed masked fraction: the first-choice
    /// `l_fraction` of patches (uniformly sampled) become the masked part and
    /// everything else stays visible to the student; the teacher part is
    /// empty. Used for reconstruction probes at masking levels the training
    /// ratios would not allow.
    pub fn for_reconstruction(n: usize, l_fraction: f64, rng: &mut impl Rng) -> Result<TriMask> {
        if !(0.0..1.0).contains(&l_fraction) {
            return Err(Error::config(format!("mask fraction {l_fraction} must lie in [0, 1)")));
        }
        let l = round_half_up(l_fraction * n as f64).min(n.saturating_sub(1));
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        let mut l_idx: Vec<usize> = perm[..l].to_vec();
        let mut s_idx: Vec<usize> = perm[l..].to_vec();
        l_idx.sort_unstable();
        s_idx.sort_unstable();
        Ok(TriMask { s_idx, l_idx, t_idx: Vec::new(), n })
    }
}

/// Draws a uniformly random tripartite partition of 0..n with part sizes
/// fixed by the ratios.
pub fn sample_trimask(n: usize, ratios: &MaskRatios, rng: &mut impl Rng) -> Result<TriMask> {
    let (s, l, _t) = ratios.part_sizes(n)?;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut s_idx: Vec<usize> = perm[..s].to_vec();
    let mut l_idx: Vec<usize> = perm[s..s + l].to_vec();
    let mut t_idx: Vec<usize> = perm[s + l..].to_vec();
    s_idx.sort_unstable();
    l_idx.sort_unstable();
    t_idx.sort_unstable();
    Ok(TriMask { s_idx, l_idx, t_idx, n })
}

impl TriMask {
    /// Baseline layout when mask disjointness is toggled off: both networks
    /// see every patch, and nothing is reserved for reconstruction. Not a
    /// partition — the student and teacher parts coincide on purpose.
    pub fn dense(n: usize) -> TriMask {
        TriMask {
            s_idx: (0..n).collect(),
            l_idx: Vec::new(),
            t_idx: (0..n).collect(),
            n,
        }
    }
}
