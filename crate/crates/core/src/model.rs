//! Potential-outcomes vocabulary for paired units.
//!
//! Every group has exactly two units. Each unit carries a compliance type
//! (its map from own and peer instrument to treatment take-up), and outcome
//! means are tabulated over the full `(own type, peer type, d, d')` grid.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance used when validating probabilities.
pub const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("probability entry {what} is negative ({value})")]
    NegativeProbability { what: String, value: f64 },
    #[error("probabilities for {what} sum to {sum}, expected 1")]
    NotNormalized { what: String, sum: f64 },
    #[error("joint type table is not symmetric at ({a}, {b}): {ab} vs {ba}")]
    Asymmetric {
        a: ComplianceType,
        b: ComplianceType,
        ab: f64,
        ba: f64,
    },
    #[error("design is not exchangeable: P[Z=(1,0)]={p10} but P[Z=(0,1)]={p01}")]
    NonExchangeableDesign { p10: f64, p01: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("noise parameter out of range: {0}")]
    InvalidNoise(String),
    #[error("unknown compliance type `{0}`")]
    UnknownType(String),
}

/// The five monotone compliance types, ordered by decreasing propensity
/// to take up treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ComplianceType {
    /// Always-taker.
    AT,
    /// Social-interaction complier: treated once anyone in the pair is offered.
    SC,
    /// Complier: treated iff offered.
    C,
    /// Group complier: treated only when both units are offered.
    GC,
    /// Never-taker.
    NT,
}

impl ComplianceType {
    pub const ALL: [ComplianceType; 5] = [Self::AT, Self::SC, Self::C, Self::GC, Self::NT];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    /// Take-up given own instrument `z` and peer instrument `z_peer`.
    pub fn potential_treatment(self, z: bool, z_peer: bool) -> bool {
        match self {
            Self::AT => true,
            Self::SC => z || z_peer,
            Self::C => z,
            Self::GC => z && z_peer,
            Self::NT => false,
        }
    }

    /// `(D(1,1), D(1,0), D(0,1), D(0,0))`.
    pub fn treatment_profile(self) -> [bool; 4] {
        [
            self.potential_treatment(true, true),
            self.potential_treatment(true, false),
            self.potential_treatment(false, true),
            self.potential_treatment(false, false),
        ]
    }

    /// Inverse of [`treatment_profile`](Self::treatment_profile). Returns `None`
    /// for the eleven non-monotone profiles.
    pub fn from_profile(profile: [bool; 4]) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.treatment_profile() == profile)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::AT => "AT",
            Self::SC => "SC",
            Self::C => "C",
            Self::GC => "GC",
            Self::NT => "NT",
        }
    }
}

impl fmt::Display for ComplianceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ComplianceType {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "AT" => Ok(Self::AT),
            "SC" => Ok(Self::SC),
            "C" => Ok(Self::C),
            "GC" => Ok(Self::GC),
            "NT" => Ok(Self::NT),
            other => Err(ModelError::UnknownType(other.to_string())),
        }
    }
}

/// Free function form of [`ComplianceType::potential_treatment`].
pub fn potential_treatment(t: ComplianceType, z: bool, z_peer: bool) -> bool {
    t.potential_treatment(z, z_peer)
}

/// An instrument cell `(Z_own, Z_peer)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub own: bool,
    pub peer: bool,
}

impl Cell {
    pub const C00: Cell = Cell::new(false, false);
    pub const C10: Cell = Cell::new(true, false);
    pub const C01: Cell = Cell::new(false, true);
    pub const C11: Cell = Cell::new(true, true);
    /// Canonical order used by every moment layout.
    pub const ALL: [Cell; 4] = [Self::C00, Self::C10, Self::C01, Self::C11];

    pub const fn new(own: bool, peer: bool) -> Self {
        Cell { own, peer }
    }

    pub fn index(self) -> usize {
        match (self.own, self.peer) {
            (false, false) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (true, true) => 3,
        }
    }

    /// The same group seen from the peer's side.
    pub fn swap(self) -> Cell {
        Cell::new(self.peer, self.own)
    }

    pub fn label(self) -> &'static str {
        ["00", "10", "01", "11"][self.index()]
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.own as u8, self.peer as u8)
    }
}

impl FromStr for Cell {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let cleaned: String = s.chars().filter(|c| *c == '0' || *c == '1').collect();
        match cleaned.as_str() {
            "00" => Ok(Cell::C00),
            "10" => Ok(Cell::C10),
            "01" => Ok(Cell::C01),
            "11" => Ok(Cell::C11),
            _ => Err(format!("invalid assignment cell `{s}`")),
        }
    }
}

/// Unit-level statistics `h(Y, D_own, D_peer)` used both by the sample
/// moments and by the population oracle. Each one is affine in `Y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Statistic {
    One,
    Y,
    Di,
    Dj,
    YDi,
    YDj,
    YNotDi,
    YNotDj,
    DiDj,
    NotDiNotDj,
    YNotDiNotDj,
    DiNotDj,
}

impl Statistic {
    pub const ALL: [Statistic; 12] = [
        Self::One,
        Self::Y,
        Self::Di,
        Self::Dj,
        Self::YDi,
        Self::YDj,
        Self::YNotDi,
        Self::YNotDj,
        Self::DiDj,
        Self::NotDiNotDj,
        Self::YNotDiNotDj,
        Self::DiNotDj,
    ];

    /// `(a, b)` such that the statistic equals `a * y + b`.
    pub fn affine(self, d_own: bool, d_peer: bool) -> (f64, f64) {
        let di = d_own as u8 as f64;
        let dj = d_peer as u8 as f64;
        match self {
            Self::One => (0.0, 1.0),
            Self::Y => (1.0, 0.0),
            Self::Di => (0.0, di),
            Self::Dj => (0.0, dj),
            Self::YDi => (di, 0.0),
            Self::YDj => (dj, 0.0),
            Self::YNotDi => (1.0 - di, 0.0),
            Self::YNotDj => (1.0 - dj, 0.0),
            Self::DiDj => (0.0, di * dj),
            Self::NotDiNotDj => (0.0, (1.0 - di) * (1.0 - dj)),
            Self::YNotDiNotDj => ((1.0 - di) * (1.0 - dj), 0.0),
            Self::DiNotDj => (0.0, di * (1.0 - dj)),
        }
    }

    pub fn eval(self, y: f64, d_own: bool, d_peer: bool) -> f64 {
        let (a, b) = self.affine(d_own, d_peer);
        if a == 0.0 {
            b
        } else {
            a * y + b
        }
    }

    /// Whether the statistic depends on the outcome.
    pub fn uses_outcome(self) -> bool {
        self.affine(true, true).0 != 0.0
            || self.affine(false, false).0 != 0.0
            || self.affine(true, false).0 != 0.0
    }

    /// The statistic obtained by exchanging the roles of own and peer
    /// treatment. Only meaningful for outcome-free statistics.
    pub fn mirrored(self) -> Option<Statistic> {
        match self {
            Self::One => Some(Self::One),
            Self::Di => Some(Self::Dj),
            Self::Dj => Some(Self::Di),
            Self::DiDj => Some(Self::DiDj),
            Self::NotDiNotDj => Some(Self::NotDiNotDj),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::One => "1",
            Self::Y => "Y",
            Self::Di => "D_i",
            Self::Dj => "D_j",
            Self::YDi => "Y*D_i",
            Self::YDj => "Y*D_j",
            Self::YNotDi => "Y*(1-D_i)",
            Self::YNotDj => "Y*(1-D_j)",
            Self::DiDj => "D_i*D_j",
            Self::NotDiNotDj => "(1-D_i)*(1-D_j)",
            Self::YNotDiNotDj => "Y*(1-D_i)*(1-D_j)",
            Self::DiNotDj => "D_i*(1-D_j)",
        }
    }
}

/// Symmetric 5x5 probability table over `(own type, peer type)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointTypeDistribution {
    p: [[f64; 5]; 5],
}

impl JointTypeDistribution {
    pub fn new(p: [[f64; 5]; 5]) -> Result<Self, ModelError> {
        let mut sum = 0.0;
        for (a, row) in p.iter().enumerate() {
            for (b, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(ModelError::NonFinite("joint type table".into()));
                }
                if v < 0.0 {
                    return Err(ModelError::NegativeProbability {
                        what: format!(
                            "p({},{})",
                            ComplianceType::from_index(a),
                            ComplianceType::from_index(b)
                        ),
                        value: v,
                    });
                }
                sum += v;
            }
        }
        if (sum - 1.0).abs() > PROB_TOL {
            return Err(ModelError::NotNormalized {
                what: "joint type table".into(),
                sum,
            });
        }
        for a in 0..5 {
            for b in (a + 1)..5 {
                if (p[a][b] - p[b][a]).abs() > PROB_TOL {
                    return Err(ModelError::Asymmetric {
                        a: ComplianceType::from_index(a),
                        b: ComplianceType::from_index(b),
                        ab: p[a][b],
                        ba: p[b][a],
                    });
                }
            }
        }
        Ok(Self { p })
    }

    /// Types drawn independently within the pair from `marginals`.
    pub fn independent(marginals: [f64; 5]) -> Result<Self, ModelError> {
        validate_simplex("marginal type shares", &marginals)?;
        let mut p = [[0.0; 5]; 5];
        for a in 0..5 {
            for b in 0..5 {
                p[a][b] = marginals[a] * marginals[b];
            }
        }
        Self::new(p)
    }

    pub fn uniform() -> Self {
        Self {
            p: [[1.0 / 25.0; 5]; 5],
        }
    }

    /// All mass on one pair of identical types.
    pub fn point_mass(t: ComplianceType) -> Self {
        let mut p = [[0.0; 5]; 5];
        p[t.index()][t.index()] = 1.0;
        Self { p }
    }

    pub fn get(&self, own: ComplianceType, peer: ComplianceType) -> f64 {
        self.p[own.index()][peer.index()]
    }

    pub fn table(&self) -> &[[f64; 5]; 5] {
        &self.p
    }

    /// Row sums, in [`ComplianceType::ALL`] order.
    pub fn marginals(&self) -> [f64; 5] {
        let mut m = [0.0; 5];
        for (a, row) in self.p.iter().enumerate() {
            m[a] = row.iter().sum();
        }
        m
    }

    pub fn marginal(&self, t: ComplianceType) -> f64 {
        self.p[t.index()].iter().sum()
    }

    /// Probability of `{own in own_set} x {peer in peer_set}`.
    pub fn event(&self, own_set: &[ComplianceType], peer_set: &[ComplianceType]) -> f64 {
        own_set
            .iter()
            .flat_map(|&a| peer_set.iter().map(move |&b| self.get(a, b)))
            .sum()
    }

    /// No always-takers and no social-interaction compliers.
    pub fn satisfies_osn(&self) -> bool {
        self.marginal(ComplianceType::AT) <= PROB_TOL && self.marginal(ComplianceType::SC) <= PROB_TOL
    }

    /// Iterate over `(own, peer, probability)` for all 25 cells.
    pub fn iter(&self) -> impl Iterator<Item = (ComplianceType, ComplianceType, f64)> + '_ {
        ComplianceType::ALL.into_iter().flat_map(move |a| {
            ComplianceType::ALL
                .into_iter()
                .map(move |b| (a, b, self.get(a, b)))
        })
    }
}

/// Free function form of [`JointTypeDistribution::marginals`].
pub fn marginals(dist: &JointTypeDistribution) -> [f64; 5] {
    dist.marginals()
}

/// Distribution of the within-pair outcome noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum NoiseSpec {
    /// Deterministic outcomes equal to the tabulated mean.
    None,
    /// Centered Gaussian noise with within-pair correlation `rho`.
    Gaussian { scale: f64, rho: f64 },
    /// Binary outcome, `Y ~ Bernoulli(clamp(mean, 0, 1))`, paired through a
    /// Gaussian copula with latent correlation `rho`.
    Bernoulli { rho: f64 },
}

impl NoiseSpec {
    pub fn rho(&self) -> f64 {
        match *self {
            NoiseSpec::None => 0.0,
            NoiseSpec::Gaussian { rho, .. } | NoiseSpec::Bernoulli { rho } => rho,
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        let rho = self.rho();
        if !(-1.0..=1.0).contains(&rho) {
            return Err(ModelError::InvalidNoise(format!("rho={rho} outside [-1, 1]")));
        }
        if let NoiseSpec::Gaussian { scale, .. } = *self {
            if !scale.is_finite() || scale < 0.0 {
                return Err(ModelError::InvalidNoise(format!("scale={scale}")));
            }
        }
        Ok(())
    }
}

/// Mean outcome `E[Y(d, d') | own type, peer type]` on the full grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeModel {
    /// Indexed `[own type][peer type][d_own][d_peer]`.
    mean: [[[[f64; 2]; 2]; 5]; 5],
    noise: NoiseSpec,
}

/// Warning raised when a binary-outcome mean grid had to be clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct ClampWarning {
    pub cells_clamped: usize,
}

impl OutcomeModel {
    pub fn new(mean: [[[[f64; 2]; 2]; 5]; 5], noise: NoiseSpec) -> Result<Self, ModelError> {
        if mean.iter().flatten().flatten().flatten().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("outcome mean grid".into()));
        }
        noise.validate()?;
        Ok(Self { mean, noise })
    }

    pub fn zeros(noise: NoiseSpec) -> Self {
        Self {
            mean: [[[[0.0; 2]; 2]; 5]; 5],
            noise,
        }
    }

    /// Build a grid from a closure over `(own, peer, d_own, d_peer)`.
    pub fn from_fn<F>(noise: NoiseSpec, mut f: F) -> Result<Self, ModelError>
    where
        F: FnMut(ComplianceType, ComplianceType, bool, bool) -> f64,
    {
        let mut mean = [[[[0.0; 2]; 2]; 5]; 5];
        for a in ComplianceType::ALL {
            for b in ComplianceType::ALL {
                for d in [false, true] {
                    for dp in [false, true] {
                        mean[a.index()][b.index()][d as usize][dp as usize] = f(a, b, d, dp);
                    }
                }
            }
        }
        Self::new(mean, noise)
    }

    /// Tabulated mean as specified.
    pub fn raw_mean(&self, own: ComplianceType, peer: ComplianceType, d: bool, d_peer: bool) -> f64 {
        self.mean[own.index()][peer.index()][d as usize][d_peer as usize]
    }

    /// Mean of the generated outcome. Equal to the tabulated mean except in
    /// binary mode, where it is clamped to `[0, 1]`.
    pub fn mean(&self, own: ComplianceType, peer: ComplianceType, d: bool, d_peer: bool) -> f64 {
        let m = self.raw_mean(own, peer, d, d_peer);
        match self.noise {
            NoiseSpec::Bernoulli { .. } => m.clamp(0.0, 1.0),
            _ => m,
        }
    }

    pub fn noise(&self) -> NoiseSpec {
        self.noise
    }

    pub fn grid(&self) -> &[[[[f64; 2]; 2]; 5]; 5] {
        &self.mean
    }

    /// `Some` when binary mode clamps at least one grid cell.
    pub fn clamp_warning(&self) -> Option<ClampWarning> {
        if !matches!(self.noise, NoiseSpec::Bernoulli { .. }) {
            return None;
        }
        let n = self
            .mean
            .iter()
            .flatten()
            .flatten()
            .flatten()
            .filter(|v| !(0.0..=1.0).contains(*v))
            .count();
        (n > 0).then_some(ClampWarning { cells_clamped: n })
    }

    /// `a + b * Y` applied to every grid cell.
    pub fn affine(&self, a: f64, b: f64) -> Self {
        let mut out = self.clone();
        for v in out.mean.iter_mut().flatten().flatten().flatten() {
            *v = a + b * *v;
        }
        out
    }
}

/// Assignment probabilities `P[Z_1 = z, Z_2 = z']` for one stratum, in
/// [`Cell::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellProbs(pub [f64; 4]);

impl CellProbs {
    pub fn new(p: [f64; 4]) -> Result<Self, ModelError> {
        validate_simplex("assignment design", &p)?;
        Ok(Self(p))
    }

    pub fn get(&self, cell: Cell) -> f64 {
        self.0[cell.index()]
    }

    pub fn is_exchangeable(&self) -> bool {
        (self.0[1] - self.0[2]).abs() <= PROB_TOL
    }

    /// Unit-perspective cell probability: the share of units whose
    /// `(own, peer)` instruments equal `cell`. Equal to the group-level
    /// probability under exchangeable designs.
    pub fn unit_prob(&self, cell: Cell) -> f64 {
        0.5 * (self.get(cell) + self.get(cell.swap()))
    }
}

/// Instrument assignment mechanism, optionally varying by a discrete
/// covariate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssignmentDesign {
    pub cells: CellProbs,
    pub strata: BTreeMap<String, CellProbs>,
}

impl AssignmentDesign {
    /// Validates and requires exchangeability unless `allow_asymmetric`.
    pub fn new(
        cells: CellProbs,
        strata: BTreeMap<String, CellProbs>,
        allow_asymmetric: bool,
    ) -> Result<Self, ModelError> {
        if !allow_asymmetric {
            for p in std::iter::once(&cells).chain(strata.values()) {
                if !p.is_exchangeable() {
                    return Err(ModelError::NonExchangeableDesign {
                        p10: p.0[1],
                        p01: p.0[2],
                    });
                }
            }
        }
        Ok(Self { cells, strata })
    }

    pub fn simple(p: [f64; 4]) -> Result<Self, ModelError> {
        Self::new(CellProbs::new(p)?, BTreeMap::new(), false)
    }

    pub fn for_stratum(&self, label: Option<&str>) -> CellProbs {
        label
            .and_then(|l| self.strata.get(l))
            .copied()
            .unwrap_or(self.cells)
    }
}

fn validate_simplex(what: &str, p: &[f64]) -> Result<(), ModelError> {
    for (i, &v) in p.iter().enumerate() {
        if !v.is_finite() {
            return Err(ModelError::NonFinite(what.to_string()));
        }
        if v < 0.0 {
            return Err(ModelError::NegativeProbability {
                what: format!("{what}[{i}]"),
                value: v,
            });
        }
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(ModelError::NotNormalized {
            what: what.to_string(),
            sum,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ComplianceType::*;

    #[test]
    fn table_rows() {
        assert!(potential_treatment(AT, false, false));
        assert!(!potential_treatment(GC, true, false));
        assert!(!potential_treatment(NT, true, true));
        assert!(potential_treatment(SC, false, true));
        assert!(!potential_treatment(SC, false, false));
        assert!(potential_treatment(C, true, false));
        assert!(!potential_treatment(C, false, true));
        assert!(potential_treatment(GC, true, true));
    }

    #[test]
    fn every_type_is_monotone() {
        for t in ComplianceType::ALL {
            let [d11, d10, d01, d00] = t.treatment_profile();
            assert!(d11 >= d10 && d10 >= d01 && d01 >= d00, "{t}");
        }
    }

    #[test]
    fn monotone_profiles_biject_with_types() {
        let mut hits = 0;
        for bits in 0u8..16 {
            let profile = [bits & 8 != 0, bits & 4 != 0, bits & 2 != 0, bits & 1 != 0];
            let monotone = profile.windows(2).all(|w| w[0] >= w[1]);
            let t = ComplianceType::from_profile(profile);
            assert_eq!(monotone, t.is_some(), "{profile:?}");
            if let Some(t) = t {
                assert_eq!(t.treatment_profile(), profile);
                hits += 1;
            }
        }
        assert_eq!(hits, 5);
    }

    #[test]
    fn marginals_of_standard_tables() {
        let u = JointTypeDistribution::uniform();
        for m in u.marginals() {
            assert!((m - 0.2).abs() < 1e-15);
        }
        let shares = [0.1, 0.2, 0.4, 0.2, 0.1];
        let ind = JointTypeDistribution::independent(shares).unwrap();
        for (m, s) in ind.marginals().iter().zip(shares) {
            assert!((m - s).abs() < 1e-15);
        }
        let pm = JointTypeDistribution::point_mass(C);
        assert_eq!(marginals(&pm), [0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_invalid_tables() {
        let mut p = [[1.0 / 25.0; 5]; 5];
        p[0][1] += 0.01;
        p[1][0] -= 0.01;
        assert!(matches!(
            JointTypeDistribution::new(p),
            Err(ModelError::Asymmetric { .. })
        ));

        let mut p = [[1.0 / 25.0; 5]; 5];
        p[0][0] = -1.0 / 25.0;
        p[1][1] += 2.0 / 25.0;
        assert!(matches!(
            JointTypeDistribution::new(p),
            Err(ModelError::NegativeProbability { .. })
        ));

        let p = [[1.0 / 24.0; 5]; 5];
        assert!(matches!(
            JointTypeDistribution::new(p),
            Err(ModelError::NotNormalized { .. })
        ));
    }

    #[test]
    fn design_validation() {
        assert!(AssignmentDesign::simple([0.25; 4]).is_ok());
        assert!(matches!(
            AssignmentDesign::simple([0.2, 0.3, 0.2, 0.3]),
            Err(ModelError::NonExchangeableDesign { .. })
        ));
        let asym = CellProbs::new([0.2, 0.3, 0.2, 0.3]).unwrap();
        assert!(AssignmentDesign::new(asym, BTreeMap::new(), true).is_ok());
        assert!(CellProbs::new([0.5, 0.5, 0.5, -0.5]).is_err());
    }

    #[test]
    fn statistics_are_affine_in_y() {
        for s in Statistic::ALL {
            for d in [false, true] {
                for dp in [false, true] {
                    let a = s.eval(0.0, d, dp);
                    let b = s.eval(1.0, d, dp);
                    let c = s.eval(3.0, d, dp);
                    assert!((c - a - 3.0 * (b - a)).abs() < 1e-12);
                }
            }
        }
        assert_eq!(Statistic::YNotDiNotDj.eval(2.0, false, false), 2.0);
        assert_eq!(Statistic::YNotDiNotDj.eval(2.0, true, false), 0.0);
    }

    #[test]
    fn binary_mode_clamps() {
        let m = OutcomeModel::from_fn(NoiseSpec::Bernoulli { rho: 0.0 }, |a, _, _, _| {
            if a == AT {
                1.4
            } else {
                0.3
            }
        })
        .unwrap();
        assert_eq!(m.mean(AT, NT, true, false), 1.0);
        assert_eq!(m.raw_mean(AT, NT, true, false), 1.4);
        assert_eq!(m.clamp_warning().unwrap().cells_clamped, 20);
    }
}
