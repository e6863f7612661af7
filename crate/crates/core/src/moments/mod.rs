//! Stacked cell moments, their cluster-robust covariance, and the delta
//! method.
//!
//! For each household `g` the vector `W_g` averages the two unit
//! perspectives: the first four entries are the assignment-cell indicators
//! `1(Z_own = z, Z_peer = z')`, followed by `H(Y, D_own, D_peer)` times each
//! cell indicator (Kronecker order: H component major, cell minor). The
//! estimator is `mu_hat = mean_g W_g` and
//! `Sigma_hat = mean_g (W_g - mu_hat)(W_g - mu_hat)'`. Because `W_g` is a
//! per-household average, clustering at the household level is built in.

mod expr;
mod report;

pub use expr::{Expr, Guard, DENOMINATOR_GUARD};
pub use report::{sig15, Diagnostic, EstimateReport, EstimateRow, Omission};

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::estimators::EstimandError;
use crate::ingest::{Dataset, HouseholdRecord};
use crate::model::{Cell, Statistic};

/// Households per reduction chunk. Chunk sums are combined in index order,
/// so results do not depend on the number of worker threads.
const REDUCTION_CHUNK: usize = 256;

/// Choice of the `H(Y, D_own, D_peer)` block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HBlock {
    /// `1(D = dd')` for the four treatment cells, then `Y * 1(D = dd')`.
    Full8,
    /// `H = Y`, enough for every ITT contrast.
    IttOnly,
    /// `(D_own, Y, Y(1-D_own), Y(1-D_peer))` over cells (0,0), (1,0), (0,1).
    Osn4,
}

impl HBlock {
    pub fn len(self) -> usize {
        match self {
            HBlock::Full8 => 8,
            HBlock::IttOnly => 1,
            HBlock::Osn4 => 4,
        }
    }

    pub fn is_empty(self) -> bool {
        false
    }

    pub fn cells(self) -> Vec<Cell> {
        match self {
            HBlock::Osn4 => vec![Cell::C00, Cell::C10, Cell::C01],
            _ => Cell::ALL.to_vec(),
        }
    }

    /// Value of component `k`; affine in `y`.
    pub fn component(self, k: usize, y: f64, d_own: bool, d_peer: bool) -> f64 {
        match self {
            HBlock::Full8 => {
                let on = Cell::new(d_own, d_peer).index() == k % 4;
                match (k < 4, on) {
                    (_, false) => 0.0,
                    (true, true) => 1.0,
                    (false, true) => y,
                }
            }
            HBlock::IttOnly => y,
            HBlock::Osn4 => {
                let stat = [
                    Statistic::Di,
                    Statistic::Y,
                    Statistic::YNotDi,
                    Statistic::YNotDj,
                ][k];
                stat.eval(y, d_own, d_peer)
            }
        }
    }

    pub fn parse(s: &str) -> Option<HBlock> {
        match s {
            "full-8" | "full8" => Some(HBlock::Full8),
            "itt-only" | "itt" => Some(HBlock::IttOnly),
            "osn-4" | "osn4" => Some(HBlock::Osn4),
            _ => None,
        }
    }
}

/// Which strata a linear form aggregates over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Pooled,
    Stratum(usize),
}

/// One coordinate of the moment vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coord {
    /// `P[Z = cell]` within a block.
    Prob { cell: Cell, block: usize },
    /// `E[H_comp * 1(Z = cell)]` within a block.
    H { comp: usize, cell: Cell, block: usize },
}

/// Index of the named components of `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentLayout {
    h: HBlock,
    cells: Vec<Cell>,
    strata: Vec<String>,
}

impl MomentLayout {
    pub fn new(h: HBlock) -> Self {
        Self {
            h,
            cells: h.cells(),
            strata: Vec::new(),
        }
    }

    pub fn stratified(h: HBlock, strata: Vec<String>) -> Self {
        Self {
            h,
            cells: h.cells(),
            strata,
        }
    }

    pub fn h_block(&self) -> HBlock {
        self.h
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn strata(&self) -> &[String] {
        &self.strata
    }

    fn n_blocks(&self) -> usize {
        self.strata.len().max(1)
    }

    pub fn block_len(&self) -> usize {
        4 + self.h.len() * self.cells.len()
    }

    pub fn len(&self) -> usize {
        self.block_len() * self.n_blocks()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn prob_index(&self, cell: Cell, block: usize) -> usize {
        block * self.block_len() + cell.index()
    }

    fn h_index(&self, comp: usize, cell: Cell, block: usize) -> Option<usize> {
        let pos = self.cells.iter().position(|c| *c == cell)?;
        Some(block * self.block_len() + 4 + comp * self.cells.len() + pos)
    }

    /// What each coordinate of `mu` measures, in index order.
    pub fn coords(&self) -> Vec<Coord> {
        let mut out = Vec::with_capacity(self.len());
        for block in 0..self.n_blocks() {
            out.extend(Cell::ALL.iter().map(|&cell| Coord::Prob { cell, block }));
            for comp in 0..self.h.len() {
                out.extend(self.cells.iter().map(|&cell| Coord::H { comp, cell, block }));
            }
        }
        out
    }

    /// Human-readable name of each coordinate.
    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.len());
        for b in 0..self.n_blocks() {
            let suffix = self
                .strata
                .get(b)
                .map(|s| format!(" | x={s}"))
                .unwrap_or_default();
            for c in Cell::ALL {
                out.push(format!("P[Z={c}]{suffix}"));
            }
            for k in 0..self.h.len() {
                for c in &self.cells {
                    out.push(format!("E[{}*1(Z={c})]{suffix}", self.h_label(k)));
                }
            }
        }
        out
    }

    fn h_label(&self, k: usize) -> String {
        match self.h {
            HBlock::Full8 => {
                let c = Cell::ALL[k % 4];
                let ind = format!("1(D=({},{}))", c.own as u8, c.peer as u8);
                if k < 4 {
                    ind
                } else {
                    format!("Y*{ind}")
                }
            }
            HBlock::IttOnly => "Y".into(),
            HBlock::Osn4 => ["D_i", "Y", "Y*(1-D_i)", "Y*(1-D_j)"][k].into(),
        }
    }

    fn blocks(&self, scope: Scope) -> Vec<usize> {
        match scope {
            Scope::Pooled => (0..self.n_blocks()).collect(),
            Scope::Stratum(s) => vec![s],
        }
    }

    /// `P[Z = cell]` (restricted to a stratum when scoped) as a linear form.
    pub fn prob(&self, cell: Cell, scope: Scope) -> Expr {
        Expr::Linear(
            self.blocks(scope)
                .into_iter()
                .map(|b| (self.prob_index(cell, b), 1.0))
                .collect(),
        )
    }

    /// `E[stat * 1(Z = cell)]` as a linear form over `mu`.
    pub fn moment(&self, stat: Statistic, cell: Cell, scope: Scope) -> Result<Expr, EstimandError> {
        if stat == Statistic::One {
            return Ok(self.prob(cell, scope));
        }
        let direct = self.direct_terms(stat, cell, scope);
        let terms = match direct {
            Some(t) => t,
            // Symmetrization makes E[h(D_peer, D_own) 1(z, z')] identical to
            // E[h(D_own, D_peer) 1(z', z)] for outcome-free h.
            None => stat
                .mirrored()
                .and_then(|m| self.direct_terms(m, cell.swap(), scope))
                .ok_or(EstimandError::NotInLayout {
                    statistic: stat.label().to_string(),
                    cell,
                })?,
        };
        Ok(Expr::Linear(terms))
    }

    fn direct_terms(&self, stat: Statistic, cell: Cell, scope: Scope) -> Option<Vec<(usize, f64)>> {
        let mut terms = Vec::new();
        for b in self.blocks(scope) {
            match self.h {
                HBlock::Full8 => {
                    for dc in Cell::ALL {
                        let (a, c) = stat.affine(dc.own, dc.peer);
                        if c != 0.0 {
                            terms.push((self.h_index(dc.index(), cell, b)?, c));
                        }
                        if a != 0.0 {
                            terms.push((self.h_index(4 + dc.index(), cell, b)?, a));
                        }
                    }
                }
                HBlock::IttOnly => {
                    if stat != Statistic::Y {
                        return None;
                    }
                    terms.push((self.h_index(0, cell, b)?, 1.0));
                }
                HBlock::Osn4 => {
                    let combo: &[(usize, f64)] = match stat {
                        Statistic::Di => &[(0, 1.0)],
                        Statistic::Y => &[(1, 1.0)],
                        Statistic::YNotDi => &[(2, 1.0)],
                        Statistic::YNotDj => &[(3, 1.0)],
                        Statistic::YDi => &[(1, 1.0), (2, -1.0)],
                        Statistic::YDj => &[(1, 1.0), (3, -1.0)],
                        _ => return None,
                    };
                    for &(k, c) in combo {
                        terms.push((self.h_index(k, cell, b)?, c));
                    }
                }
            }
        }
        Some(terms)
    }

    /// `E[stat | Z = cell]` as a guarded ratio.
    pub fn cond_mean(&self, stat: Statistic, cell: Cell, scope: Scope) -> Result<Expr, EstimandError> {
        let guard = match scope {
            Scope::Pooled => Guard::Cell(cell),
            Scope::Stratum(s) => Guard::StratumCell(self.strata[s].clone(), cell),
        };
        Ok(self.moment(stat, cell, scope)?.ratio(self.prob(cell, scope), guard))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentVector {
    pub mu_hat: Vec<f64>,
    pub layout: MomentLayout,
    pub n_groups: usize,
}

impl MomentVector {
    /// Probability mass of one assignment cell over all strata.
    pub fn cell_prob(&self, cell: Cell) -> f64 {
        self.layout.prob(cell, Scope::Pooled).eval_raw(&self.mu_hat)
    }
}

/// Normalization of `Sigma_hat`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SigmaNorm {
    /// Divide by `G`.
    #[default]
    Population,
    /// Divide by `G - 1`.
    SmallSample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentCovariance {
    dim: usize,
    data: Vec<f64>,
}

impl MomentCovariance {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentOptions {
    pub h: HBlock,
    pub norm: SigmaNorm,
    /// Build one moment block per covariate stratum.
    pub stratified: bool,
}

impl Default for MomentOptions {
    fn default() -> Self {
        Self {
            h: HBlock::Full8,
            norm: SigmaNorm::Population,
            stratified: false,
        }
    }
}

/// `mu_hat` and `Sigma_hat` with the default 1/G normalization.
pub fn compute_moments(ds: &Dataset, h: HBlock) -> (MomentVector, MomentCovariance) {
    compute_moments_with(
        ds,
        &MomentOptions {
            h,
            ..MomentOptions::default()
        },
    )
}

pub fn compute_moments_with(ds: &Dataset, opts: &MomentOptions) -> (MomentVector, MomentCovariance) {
    let layout = if opts.stratified {
        MomentLayout::stratified(opts.h, ds.strata().iter().cloned().collect())
    } else {
        MomentLayout::new(opts.h)
    };
    let k = layout.len();
    let g = ds.n_groups();
    let records = ds.records();

    let fill = |rec: &HouseholdRecord, w: &mut [f64]| {
        w.fill(0.0);
        let block = if layout.strata.is_empty() {
            0
        } else {
            let x = rec.x.as_deref().unwrap_or_default();
            layout
                .strata
                .iter()
                .position(|s| s == x)
                .expect("stratum listed in dataset")
        };
        for own in 0..2 {
            let me = &rec.units[own];
            let peer = &rec.units[1 - own];
            let cell = Cell::new(me.z, peer.z);
            w[layout.prob_index(cell, block)] += 0.5;
            for comp in 0..layout.h.len() {
                if let Some(idx) = layout.h_index(comp, cell, block) {
                    w[idx] += 0.5 * layout.h.component(comp, me.y, me.d, peer.d);
                }
            }
        }
    };

    let chunk_sums: Vec<Vec<f64>> = records
        .par_chunks(REDUCTION_CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; k];
            let mut w = vec![0.0; k];
            for rec in chunk {
                fill(rec, &mut w);
                for (a, v) in acc.iter_mut().zip(&w) {
                    *a += v;
                }
            }
            acc
        })
        .collect();
    let mut mu = vec![0.0; k];
    for s in &chunk_sums {
        for (m, v) in mu.iter_mut().zip(s) {
            *m += v;
        }
    }
    for m in &mut mu {
        *m /= g as f64;
    }

    let chunk_cov: Vec<Vec<f64>> = records
        .par_chunks(REDUCTION_CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; k * k];
            let mut w = vec![0.0; k];
            for rec in chunk {
                fill(rec, &mut w);
                for (wi, m) in w.iter_mut().zip(&mu) {
                    *wi -= m;
                }
                for i in 0..k {
                    let wi = w[i];
                    if wi == 0.0 {
                        continue;
                    }
                    let row = &mut acc[i * k..(i + 1) * k];
                    for j in i..k {
                        row[j] += wi * w[j];
                    }
                }
            }
            acc
        })
        .collect();
    let mut data = vec![0.0; k * k];
    for s in &chunk_cov {
        for (d, v) in data.iter_mut().zip(s) {
            *d += v;
        }
    }
    let denom = match opts.norm {
        SigmaNorm::Population => g as f64,
        SigmaNorm::SmallSample => (g.max(2) - 1) as f64,
    };
    for i in 0..k {
        for j in i..k {
            let v = data[i * k + j] / denom;
            data[i * k + j] = v;
            data[j * k + i] = v;
        }
    }

    (
        MomentVector {
            mu_hat: mu,
            layout,
            n_groups: g,
        },
        MomentCovariance { dim: k, data },
    )
}

/// Two-sided normal critical value for a confidence level.
pub fn critical_value(ci_level: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    n.inverse_cdf(0.5 + ci_level / 2.0)
}

/// Central-difference step for coordinate value `m`: `1e-6 * max(1, |m|)`
/// rounded down to a power of two so that `m +/- h` is exact.
fn fd_step(m: f64) -> f64 {
    let raw = 1e-6 * m.abs().max(1.0);
    2f64.powi(raw.log2().floor() as i32)
}

/// Gradient of `f` at `mu` by central differences over the coordinates the
/// expression reads.
pub fn numerical_gradient(f: &Expr, mu: &[f64]) -> Vec<(usize, f64)> {
    let mut x = mu.to_vec();
    f.support()
        .into_iter()
        .map(|k| {
            let h = fd_step(mu[k]);
            x[k] = mu[k] + h;
            let up = f.eval_raw(&x);
            x[k] = mu[k] - h;
            let down = f.eval_raw(&x);
            x[k] = mu[k];
            (k, (up - down) / (2.0 * h))
        })
        .collect()
}

/// Value `f(mu_hat)` with variance `grad' (Sigma_hat / G) grad`.
pub fn delta_method(
    mu: &MomentVector,
    sigma: &MomentCovariance,
    f: &Expr,
    name: &str,
    formula: &str,
    ci_level: f64,
) -> Result<EstimateRow, EstimandError> {
    let value = f.eval(&mu.mu_hat)?;
    if !value.is_finite() {
        return Err(EstimandError::DegenerateDenominator(name.to_string()));
    }
    let grad = numerical_gradient(f, &mu.mu_hat);
    let mut var = 0.0;
    for &(i, gi) in &grad {
        for &(j, gj) in &grad {
            var += gi * gj * sigma.get(i, j);
        }
    }
    var /= mu.n_groups as f64;
    let se = var.max(0.0).sqrt();
    let z = critical_value(ci_level);
    Ok(EstimateRow {
        name: name.to_string(),
        value,
        std_error: se,
        ci_low: value - z * se,
        ci_high: value + z * se,
        formula: formula.to_string(),
        n_groups: mu.n_groups,
    })
}
