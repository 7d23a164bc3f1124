//! Two-state visibility HMM per track. Tracks whose filtered visibility drops
//! below the report threshold sleep: they stay in the model, coast on their
//! dynamics, and can be re-acquired.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::types::Track;
use crate::vem::AssignmentPriors;

/// Which state the `exp(-lambda nu)` likelihood term is attached to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LikelihoodOrientation {
    /// `p(nu | visible) = exp(-lambda nu)`, `p(nu | hidden) = 1 - exp(-lambda nu)`.
    AsPrinted,
    /// `p(nu | visible) = 1 - exp(-lambda nu)`, `p(nu | hidden) = exp(-lambda nu)`:
    /// many associated observations are evidence of visibility.
    #[default]
    Swapped,
}

impl fmt::Display for LikelihoodOrientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LikelihoodOrientation::AsPrinted => "as-printed",
            LikelihoodOrientation::Swapped => "swapped",
        })
    }
}

impl FromStr for LikelihoodOrientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "as-printed" => Ok(Self::AsPrinted),
            "swapped" => Ok(Self::Swapped),
            other => Err(Error::Config(format!(
                "unknown visibility likelihood '{other}' (expected as-printed or swapped)"
            ))),
        }
    }
}

/// Filtered probability that a track is visible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibilityState {
    pub posterior_visible: f64,
}

impl VisibilityState {
    pub fn new(posterior_visible: f64) -> Self {
        Self {
            posterior_visible: posterior_visible.clamp(0.0, 1.0),
        }
    }
}

/// `nu_n = e_n sum_i a_n^i` for target `target` (1-based; 0 is clutter).
pub fn visibility_observation(target: usize, priors: &AssignmentPriors, existence: bool) -> f64 {
    if !existence {
        return 0.0;
    }
    (0..priors.detectors()).map(|i| priors.get(i, target)).sum()
}

/// `(p(nu | visible), p(nu | hidden))`.
pub fn likelihoods(nu: f64, lambda_v: f64, orientation: LikelihoodOrientation) -> (f64, f64) {
    let decay = (-lambda_v * nu).exp();
    match orientation {
        LikelihoodOrientation::AsPrinted => (decay, 1.0 - decay),
        LikelihoodOrientation::Swapped => (1.0 - decay, decay),
    }
}

/// One forward step: predict through the symmetric two-state transition that
/// keeps the state with probability `pi_v`, then correct with the visibility
/// likelihood. If both corrected terms vanish the prediction is kept.
pub fn visibility_update(
    prev: VisibilityState,
    nu: f64,
    pi_v: f64,
    lambda_v: f64,
    orientation: LikelihoodOrientation,
) -> VisibilityState {
    let p = prev.posterior_visible;
    let predicted_visible = pi_v * p + (1.0 - pi_v) * (1.0 - p);
    let predicted_hidden = pi_v * (1.0 - p) + (1.0 - pi_v) * p;
    let (l_visible, l_hidden) = likelihoods(nu, lambda_v, orientation);
    let visible = l_visible * predicted_visible;
    let hidden = l_hidden * predicted_hidden;
    let total = visible + hidden;
    if total > 0.0 {
        VisibilityState::new(visible / total)
    } else {
        VisibilityState::new(predicted_visible / (predicted_visible + predicted_hidden))
    }
}

/// A track is reported while its visibility posterior is at or above
/// `threshold`.
pub fn is_reported(track: &Track, threshold: f64) -> bool {
    track.visibility_posterior >= threshold
}
