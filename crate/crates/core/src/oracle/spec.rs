//! Data-generating process specification and its TOML file format.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::model::{
    AssignmentDesign, CellProbs, ComplianceType, JointTypeDistribution, ModelError, NoiseSpec,
    OutcomeModel,
};

#[derive(Debug, Error, PartialEq)]
pub enum SpecError {
    #[error("invalid model: {0}")]
    Model(#[from] ModelError),
    #[error("cannot parse spec: {0}")]
    Parse(String),
    #[error("invalid spec: {0}")]
    Invalid(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// One covariate stratum with its own design and, optionally, its own type
/// distribution and outcome means.
#[derive(Debug, Clone, PartialEq)]
pub struct StratumSpec {
    pub label: String,
    pub weight: f64,
    pub types: JointTypeDistribution,
    pub outcomes: OutcomeModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgpSpec {
    pub types: JointTypeDistribution,
    pub outcomes: OutcomeModel,
    pub design: AssignmentDesign,
    pub seed: u64,
    pub groups: usize,
    /// Empty when there is no covariate.
    pub strata: Vec<StratumSpec>,
}

/// A homogeneous population piece: the whole spec, or one stratum.
#[derive(Debug, Clone, Copy)]
pub struct Component<'a> {
    pub label: Option<&'a str>,
    pub weight: f64,
    pub types: &'a JointTypeDistribution,
    pub outcomes: &'a OutcomeModel,
    pub design: CellProbs,
}

impl DgpSpec {
    pub fn new(
        types: JointTypeDistribution,
        outcomes: OutcomeModel,
        design: AssignmentDesign,
        seed: u64,
        groups: usize,
    ) -> Result<Self, SpecError> {
        let spec = Self {
            types,
            outcomes,
            design,
            seed,
            groups,
            strata: Vec::new(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_strata(mut self, strata: Vec<StratumSpec>) -> Result<Self, SpecError> {
        self.strata = strata;
        self.validate()?;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    fn validate(&self) -> Result<(), SpecError> {
        if self.groups < 1 {
            return Err(SpecError::Invalid("groups must be at least 1".into()));
        }
        if !self.strata.is_empty() {
            let total: f64 = self.strata.iter().map(|s| s.weight).sum();
            if self.strata.iter().any(|s| !(s.weight >= 0.0)) || (total - 1.0).abs() > 1e-12 {
                return Err(SpecError::Invalid(format!(
                    "stratum weights must be nonnegative and sum to 1, got {total}"
                )));
            }
            let mut seen = std::collections::BTreeSet::new();
            for s in &self.strata {
                if !seen.insert(&s.label) {
                    return Err(SpecError::Invalid(format!("duplicate stratum `{}`", s.label)));
                }
            }
        }
        Ok(())
    }

    pub fn components(&self) -> Vec<Component<'_>> {
        if self.strata.is_empty() {
            return vec![Component {
                label: None,
                weight: 1.0,
                types: &self.types,
                outcomes: &self.outcomes,
                design: self.design.cells,
            }];
        }
        self.strata
            .iter()
            .map(|s| Component {
                label: Some(&s.label),
                weight: s.weight,
                types: &s.types,
                outcomes: &s.outcomes,
                design: self.design.for_stratum(Some(&s.label)),
            })
            .collect()
    }

    /// Every component satisfies one-sided noncompliance.
    pub fn satisfies_osn(&self) -> bool {
        self.components().iter().all(|c| c.types.satisfies_osn())
    }

    /// Whether instruments are independent of types and outcomes without
    /// conditioning on the covariate.
    pub fn unconditionally_randomized(&self) -> bool {
        let comps = self.components();
        let first = comps[0].design;
        comps.iter().all(|c| {
            c.design.0.iter().zip(first.0).all(|(a, b)| (a - b).abs() <= 1e-15)
                || c.weight == 0.0
        }) || comps.iter().all(|c| c.types == comps[0].types && c.outcomes == comps[0].outcomes)
    }

    /// Pooled marginal type shares.
    pub fn marginals(&self) -> [f64; 5] {
        let mut m = [0.0; 5];
        for c in self.components() {
            for (a, b) in m.iter_mut().zip(c.types.marginals()) {
                *a += c.weight * b;
            }
        }
        m
    }

    /// Warnings raised while validating (binary-mode clamping).
    pub fn warnings(&self) -> Vec<String> {
        self.components()
            .iter()
            .filter_map(|c| {
                c.outcomes.clamp_warning().map(|w| {
                    format!(
                        "binary outcome means clamped to [0,1] in {} grid cells{}",
                        w.cells_clamped,
                        c.label.map(|l| format!(" (stratum {l})")).unwrap_or_default()
                    )
                })
            })
            .collect()
    }

    pub fn from_toml_str(s: &str) -> Result<Self, SpecError> {
        let raw: RawSpec = toml::from_str(s).map_err(|e| SpecError::Parse(e.to_string()))?;
        raw.build()
    }

    pub fn from_file(path: &Path) -> Result<Self, SpecError> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| SpecError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&s)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    seed: u64,
    groups: usize,
    joint_types: RawTypes,
    #[serde(default = "default_noise")]
    noise: NoiseSpec,
    design: RawDesign,
    #[serde(default)]
    outcome_mean: Vec<RawMean>,
    #[serde(default)]
    strata: Vec<RawStratum>,
    #[serde(default)]
    allow_asymmetric_design: bool,
}

fn default_noise() -> NoiseSpec {
    NoiseSpec::None
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTypes {
    table: Option<[[f64; 5]; 5]>,
    independent: Option<[f64; 5]>,
}

impl RawTypes {
    fn build(&self) -> Result<JointTypeDistribution, SpecError> {
        match (&self.table, &self.independent) {
            (Some(t), None) => Ok(JointTypeDistribution::new(*t)?),
            (None, Some(m)) => Ok(JointTypeDistribution::independent(*m)?),
            _ => Err(SpecError::Invalid(
                "joint_types needs exactly one of `table` or `independent`".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDesign {
    p00: f64,
    p10: f64,
    p01: f64,
    p11: f64,
}

impl RawDesign {
    fn build(&self) -> Result<CellProbs, SpecError> {
        Ok(CellProbs::new([self.p00, self.p10, self.p01, self.p11])?)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Pattern {
    Int(u8),
    Str(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMean {
    own: Option<Pattern>,
    peer: Option<Pattern>,
    d_own: Option<Pattern>,
    d_peer: Option<Pattern>,
    value: Option<f64>,
    add: Option<f64>,
}

fn type_matches(p: &Option<Pattern>, t: ComplianceType) -> Result<bool, SpecError> {
    match p {
        None => Ok(true),
        Some(Pattern::Str(s)) if s == "*" => Ok(true),
        Some(Pattern::Str(s)) => Ok(s.parse::<ComplianceType>()? == t),
        Some(Pattern::Int(_)) => Err(SpecError::Invalid("type pattern must be a type name".into())),
    }
}

fn bit_matches(p: &Option<Pattern>, d: bool) -> Result<bool, SpecError> {
    match p {
        None => Ok(true),
        Some(Pattern::Str(s)) if s == "*" => Ok(true),
        Some(Pattern::Int(v)) if *v <= 1 => Ok((*v == 1) == d),
        Some(other) => Err(SpecError::Invalid(format!(
            "treatment pattern must be 0, 1 or \"*\", got {other:?}"
        ))),
    }
}

fn apply_means(grid: &mut [[[[f64; 2]; 2]; 5]; 5], entries: &[RawMean]) -> Result<(), SpecError> {
    for e in entries {
        let (set, add) = match (e.value, e.add) {
            (Some(v), None) => (Some(v), 0.0),
            (None, Some(a)) => (None, a),
            _ => {
                return Err(SpecError::Invalid(
                    "outcome_mean entry needs exactly one of `value` or `add`".into(),
                ))
            }
        };
        for a in ComplianceType::ALL {
            for b in ComplianceType::ALL {
                for d in [false, true] {
                    for dp in [false, true] {
                        if type_matches(&e.own, a)?
                            && type_matches(&e.peer, b)?
                            && bit_matches(&e.d_own, d)?
                            && bit_matches(&e.d_peer, dp)?
                        {
                            let cell = &mut grid[a.index()][b.index()][d as usize][dp as usize];
                            *cell = set.unwrap_or(*cell) + add;
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStratum {
    label: String,
    weight: f64,
    design: RawDesign,
    joint_types: Option<RawTypes>,
    #[serde(default)]
    outcome_mean: Vec<RawMean>,
}

impl RawSpec {
    fn build(self) -> Result<DgpSpec, SpecError> {
        let types = self.joint_types.build()?;
        let mut grid = [[[[0.0; 2]; 2]; 5]; 5];
        apply_means(&mut grid, &self.outcome_mean)?;
        let outcomes = OutcomeModel::new(grid, self.noise)?;
        let mut strata_design = BTreeMap::new();
        let mut strata = Vec::new();
        for s in &self.strata {
            strata_design.insert(s.label.clone(), s.design.build()?);
            let mut g = grid;
            apply_means(&mut g, &s.outcome_mean)?;
            strata.push(StratumSpec {
                label: s.label.clone(),
                weight: s.weight,
                types: match &s.joint_types {
                    Some(t) => t.build()?,
                    None => types.clone(),
                },
                outcomes: OutcomeModel::new(g, self.noise)?,
            });
        }
        let design = AssignmentDesign::new(
            self.design.build()?,
            strata_design,
            self.allow_asymmetric_design,
        )?;
        DgpSpec::new(types, outcomes, design, self.seed, self.groups)?.with_strata(strata)
    }
}
