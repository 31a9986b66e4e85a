use crate::error::{Error, Result};

/// Parameters of the pyramidal refinement.
///
/// Per-level lists are indexed by pyramid level (0 = coarsest). An empty list
/// selects the built-in schedule; a shorter list repeats its last entry.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineConfig {
    /// Grid strides in pixels, strictly decreasing, each dividing the previous.
    pub strides: Vec<usize>,
    /// Minimum fraction of anchor-valid pixels for a patch to be fitted.
    pub min_unit_ratio: f64,
    pub epsilon: f64,
    /// MAD gate width in robust standard deviations.
    pub mad_k: f64,
    /// Lower bound on the MAD spread, relative to `max(|median s|, 1)` for
    /// scales and to the median anchor depth for shifts. Keeps the gate from
    /// collapsing when most patches share an identical fit.
    pub mad_floor: f64,
    /// Lower bound on the MAD spread of relative patch-fit residuals.
    pub residual_floor: f64,
    pub eta3: Vec<f64>,
    pub eta4: Vec<f64>,
    /// Empty: twice the grid diagonal in cells.
    pub steps3: Vec<usize>,
    pub steps4: Vec<usize>,
    pub n_flag: Vec<usize>,
    pub n_freeze: Vec<usize>,
    /// Laplacian gate per level as a fraction of the frame's max |Laplacian|.
    /// Empty: linear from 0.5 at the coarsest to 0.1 at the finest level.
    pub tau_l: Vec<f64>,
    /// Absolute floor on the Laplacian gate, relative to the median depth.
    pub tau_l_floor: f64,
    /// Minimum cosine between patch normals for an edge to pass the normal gate.
    pub tau_n: f64,
    /// Minimum invalid-pixel ratio for a cell to be regularized.
    pub tau_inv: f64,
    /// Ungated iterations at the start of propagation and regularization. Empty: half of the
    /// propagation budget at the coarsest level, tapering linearly to 0 at the finest.
    pub warmup_steps: Vec<usize>,
    /// Levels (from the coarsest) whose regularization uses normal-only weights.
    pub normal_only_levels: usize,
    /// Sharpness of the soft assignment in the full-resolution expansion,
    /// applied to the barrier height divided by the finest Laplacian gate.
    pub beta: f64,
    pub d_max: f64,
    /// Weights of the diagnostic objective; never used to drive updates.
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            strides: vec![128, 64, 32, 16, 8],
            min_unit_ratio: 0.3,
            epsilon: 1e-8,
            mad_k: 3.0,
            mad_floor: 0.1,
            residual_floor: 1e-3,
            eta3: vec![0.5],
            eta4: vec![0.5],
            steps3: Vec::new(),
            steps4: Vec::new(),
            n_flag: vec![2],
            n_freeze: vec![2],
            tau_l: Vec::new(),
            tau_l_floor: 1e-4,
            tau_n: 0.5,
            tau_inv: 0.5,
            warmup_steps: Vec::new(),
            normal_only_levels: 2,
            beta: 20.0,
            d_max: 1e4,
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1.0,
        }
    }
}

fn per_level<T: Copy>(v: &[T], level: usize) -> Option<T> {
    (!v.is_empty()).then(|| v[level.min(v.len() - 1)])
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.strides.is_empty() || self.strides.contains(&0) {
            return Err(Error::invalid("strides must be non-empty and positive"));
        }
        for w in self.strides.windows(2) {
            if w[1] >= w[0] || w[0] % w[1] != 0 {
                return Err(Error::invalid(format!(
                    "strides must strictly decrease and divide each other: {:?}",
                    self.strides
                )));
            }
        }
        let in_unit = |v: &[f64]| v.iter().all(|e| *e > 0.0 && *e <= 1.0);
        if !in_unit(&self.eta3) || !in_unit(&self.eta4) {
            return Err(Error::invalid("eta3/eta4 must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.min_unit_ratio) || !(0.0..=1.0).contains(&self.tau_inv) {
            return Err(Error::invalid("min_unit_ratio and tau_inv must lie in [0, 1]"));
        }
        if !(-1.0..=1.0).contains(&self.tau_n) {
            return Err(Error::invalid("tau_n must lie in [-1, 1]"));
        }
        if self.tau_l.iter().any(|t| *t <= 0.0) {
            return Err(Error::invalid("tau_l fractions must be positive"));
        }
        let nonneg = [
            self.epsilon,
            self.mad_k,
            self.mad_floor,
            self.residual_floor,
            self.tau_l_floor,
            self.beta,
            self.lambda1,
            self.lambda2,
            self.lambda3,
        ];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("tolerances and weights must be finite and non-negative"));
        }
        if !(self.d_max > 1e-6) {
            return Err(Error::invalid("d_max must exceed 1e-6"));
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.strides.len()
    }

    pub fn eta3_at(&self, level: usize) -> f64 {
        per_level(&self.eta3, level).unwrap_or(0.5)
    }

    pub fn eta4_at(&self, level: usize) -> f64 {
        per_level(&self.eta4, level).unwrap_or(0.5)
    }

    pub fn n_flag_at(&self, level: usize) -> usize {
        per_level(&self.n_flag, level).unwrap_or(2)
    }

    pub fn n_freeze_at(&self, level: usize) -> usize {
        per_level(&self.n_freeze, level).unwrap_or(2)
    }

    fn auto_steps(gw: usize, gh: usize) -> usize {
        (2.0 * ((gw * gw + gh * gh) as f64).sqrt()).ceil() as usize
    }

    pub fn steps3_at(&self, level: usize, gw: usize, gh: usize) -> usize {
        per_level(&self.steps3, level).unwrap_or_else(|| Self::auto_steps(gw, gh))
    }

    pub fn steps4_at(&self, level: usize, gw: usize, gh: usize) -> usize {
        per_level(&self.steps4, level).unwrap_or_else(|| Self::auto_steps(gw, gh))
    }

    pub fn warmup_at(&self, level: usize, gw: usize, gh: usize) -> usize {
        per_level(&self.warmup_steps, level).unwrap_or_else(|| {
            let n = self.levels();
            if n <= 1 {
                return 0;
            }
            let half = self.steps3_at(level, gw, gh) as f64 / 2.0;
            (half * (n - 1 - level) as f64 / (n - 1) as f64).round() as usize
        })
    }

    /// Laplacian gate fraction for a level.
    pub fn tau_l_frac_at(&self, level: usize) -> f64 {
        per_level(&self.tau_l, level).unwrap_or_else(|| {
            let n = self.levels();
            if n <= 1 {
                return 0.1;
            }
            0.5 + (0.1 - 0.5) * level as f64 / (n - 1) as f64
        })
    }
}
