//! Decomposition of ITT contrasts into type-combination weights.
//!
//! Each ITT contrast mixes several potential-outcome contrasts
//! `Y(d, d') - Y(e, e')`, each weighted by the probability of the pair of
//! compliance types whose treatments move that way.

use std::fmt;

use super::EstimandError;
use crate::model::{ComplianceType, JointTypeDistribution};

use ComplianceType::{AT, C, GC, NT, SC};

/// Potential-outcome contrast `Y(hi) - Y(lo)` over `(d_own, d_peer)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Contrast {
    /// `Y(1,0) - Y(0,0)`
    D10vs00,
    /// `Y(1,1) - Y(0,0)`
    D11vs00,
    /// `Y(1,1) - Y(0,1)`
    D11vs01,
    /// `Y(0,1) - Y(0,0)`
    D01vs00,
    /// `Y(1,1) - Y(1,0)`
    D11vs10,
}

impl Contrast {
    pub const ALL: [Contrast; 5] = [
        Contrast::D10vs00,
        Contrast::D11vs00,
        Contrast::D11vs01,
        Contrast::D01vs00,
        Contrast::D11vs10,
    ];

    /// `((hi_own, hi_peer), (lo_own, lo_peer))`.
    pub fn treatments(self) -> ((bool, bool), (bool, bool)) {
        match self {
            Contrast::D10vs00 => ((true, false), (false, false)),
            Contrast::D11vs00 => ((true, true), (false, false)),
            Contrast::D11vs01 => ((true, true), (false, true)),
            Contrast::D01vs00 => ((false, true), (false, false)),
            Contrast::D11vs10 => ((true, true), (true, false)),
        }
    }

    /// The contrast whose treatments move from `lo` to `hi`, if monotone.
    pub fn from_treatments(hi: (bool, bool), lo: (bool, bool)) -> Option<Contrast> {
        Contrast::ALL.into_iter().find(|c| c.treatments() == (hi, lo))
    }
}

impl fmt::Display for Contrast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ((a, b), (c, d)) = self.treatments();
        write!(f, "Y({},{})-Y({},{})", a as u8, b as u8, c as u8, d as u8)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IttKind {
    /// `E[Y|Z=(1,0)] - E[Y|Z=(0,0)]`
    Direct,
    /// `E[Y|Z=(0,1)] - E[Y|Z=(0,0)]`
    Indirect,
    /// `E[Y|Z=(1,1)] - E[Y|Z=(0,0)]`
    Total,
}

impl IttKind {
    /// `(hi cell, lo cell)` as `(z_own, z_peer)`.
    pub fn cells(self) -> ((bool, bool), (bool, bool)) {
        match self {
            IttKind::Direct => ((true, false), (false, false)),
            IttKind::Indirect => ((false, true), (false, false)),
            IttKind::Total => ((true, true), (false, false)),
        }
    }

    /// Type-combination event `(own types, peer types)` behind each
    /// contrast, in [`Contrast::ALL`] order.
    pub fn events(self) -> [(&'static [ComplianceType], &'static [ComplianceType]); 5] {
        match self {
            IttKind::Direct => [
                (&[C, SC], &[C, GC, NT]),
                (&[C, SC], &[SC]),
                (&[C, SC], &[AT]),
                (&[GC, NT], &[SC]),
                (&[AT], &[SC]),
            ],
            IttKind::Indirect => [
                (&[SC], &[GC, NT]),
                (&[SC], &[SC, C]),
                (&[SC], &[AT]),
                (&[C, GC, NT], &[SC, C]),
                (&[AT], &[SC, C]),
            ],
            IttKind::Total => [
                (&[SC, C, GC], &[NT]),
                (&[SC, C, GC], &[SC, C, GC]),
                (&[SC, C, GC], &[AT]),
                (&[NT], &[SC, C, GC]),
                (&[AT], &[SC, C, GC]),
            ],
        }
    }

    /// Types whose own take-up moves between the kind's two cells; the
    /// rescaling denominator is their total share.
    pub fn first_stage_types(self) -> &'static [ComplianceType] {
        match self {
            IttKind::Direct | IttKind::Indirect => &[SC, C],
            IttKind::Total => &[SC, C, GC],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    pub kind: IttKind,
    /// Event probabilities in [`Contrast::ALL`] order.
    pub weights: [f64; 5],
    pub raw_sum: f64,
    pub first_stage: f64,
    pub rescaled: [f64; 5],
    pub rescaled_sum: f64,
}

/// Weights of each potential-outcome contrast in an ITT contrast.
pub fn itt_weight_decomposition(dist: &JointTypeDistribution, kind: IttKind) -> Result<WeightTable, EstimandError> {
    let mut weights = [0.0; 5];
    for (w, (own, peer)) in weights.iter_mut().zip(kind.events()) {
        *w = dist.event(own, peer);
    }
    let raw_sum = weights.iter().sum();
    let first_stage: f64 = kind.first_stage_types().iter().map(|t| dist.marginal(*t)).sum();
    if first_stage < 1e-12 {
        return Err(EstimandError::ZeroFirstStage);
    }
    let rescaled = weights.map(|w| w / first_stage);
    Ok(WeightTable {
        kind,
        weights,
        raw_sum,
        first_stage,
        rescaled,
        rescaled_sum: raw_sum / first_stage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_direct_weights() {
        let t = itt_weight_decomposition(&JointTypeDistribution::uniform(), IttKind::Direct).unwrap();
        let want = [0.6, 0.2, 0.2, 0.2, 0.1];
        for (a, b) in t.rescaled.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((t.rescaled_sum - 1.3).abs() < 1e-12);
    }

    #[test]
    fn zero_first_stage() {
        let d = JointTypeDistribution::point_mass(NT);
        assert_eq!(
            itt_weight_decomposition(&d, IttKind::Direct),
            Err(EstimandError::ZeroFirstStage)
        );
    }

    #[test]
    fn contrast_lookup() {
        for c in Contrast::ALL {
            let (hi, lo) = c.treatments();
            assert_eq!(Contrast::from_treatments(hi, lo), Some(c));
        }
        assert_eq!(Contrast::from_treatments((false, false), (true, false)), None);
    }
}
