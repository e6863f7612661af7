//! Just-identified two-stage least squares with own and peer treatment.
//!
//! `Y = b0 + b1 D_i + b2 D_j + b3 D_i D_j + u`, instruments
//! `(1, Z_i, Z_j, Z_i Z_j)`, stacked over both units of every household.
//! The interaction is dropped when the (1,1) cell carries no joint take-up.

use super::EstimandError;
use crate::ingest::Dataset;
use crate::moments::{critical_value, EstimateRow};

/// Joint take-up in the (1,1) cell below this drops the interaction.
const INTERACTION_GUARD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct TslsEstimate {
    pub beta: Vec<f64>,
    /// Cluster-robust covariance of `beta`, row-major.
    pub covariance: Vec<Vec<f64>>,
    pub rows: Vec<EstimateRow>,
    pub beta3_identified: bool,
    pub warnings: Vec<String>,
}

/// Solve `a x = b` by Gaussian elimination with partial pivoting. `None`
/// when a pivot is negligible relative to the largest entry.
pub fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

fn invert(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut cols = Vec::with_capacity(n);
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        cols.push(solve_linear(a.to_vec(), e)?);
    }
    Some((0..n).map(|r| (0..n).map(|c| cols[c][r]).collect()).collect())
}

pub fn tsls_spillover(ds: &Dataset, ci_level: f64) -> Result<TslsEstimate, EstimandError> {
    let mut n11 = 0usize;
    let mut dd11 = 0.0;
    for r in ds.records() {
        if r.units[0].z && r.units[1].z {
            n11 += 2;
            dd11 += 2.0 * (r.units[0].d && r.units[1].d) as u8 as f64;
        }
    }
    let beta3_identified = n11 > 0 && dd11 / n11 as f64 > INTERACTION_GUARD;
    let k = if beta3_identified { 4 } else { 3 };

    let vars = |z: bool, zp: bool, d: bool, dp: bool| {
        let f = |b: bool| b as u8 as f64;
        // Without the interaction, cell (1,1) carries its own free equation;
        // leaving it out keeps the remaining equations exactly identified.
        let keep = if beta3_identified || !(z && zp) { 1.0 } else { 0.0 };
        let zt = [keep, keep * f(z), keep * f(zp), f(z && zp)];
        let x = [1.0, f(d), f(dp), f(d && dp)];
        (zt, x)
    };

    let g = ds.n_groups() as f64;
    let mut a = vec![vec![0.0; k]; k];
    let mut c = vec![0.0; k];
    for r in ds.records() {
        for own in 0..2 {
            let (me, peer) = (&r.units[own], &r.units[1 - own]);
            let (zt, x) = vars(me.z, peer.z, me.d, peer.d);
            for i in 0..k {
                for j in 0..k {
                    a[i][j] += 0.5 * zt[i] * x[j];
                }
                c[i] += 0.5 * zt[i] * me.y;
            }
        }
    }
    for i in 0..k {
        for j in 0..k {
            a[i][j] /= g;
        }
        c[i] /= g;
    }
    let beta = solve_linear(a.clone(), c).ok_or(EstimandError::RankDeficientFirstStage)?;
    let a_inv = invert(&a).ok_or(EstimandError::RankDeficientFirstStage)?;

    let mut b = vec![vec![0.0; k]; k];
    for r in ds.records() {
        let mut s = vec![0.0; k];
        for own in 0..2 {
            let (me, peer) = (&r.units[own], &r.units[1 - own]);
            let (zt, x) = vars(me.z, peer.z, me.d, peer.d);
            let fit: f64 = (0..k).map(|j| x[j] * beta[j]).sum();
            let u = me.y - fit;
            for i in 0..k {
                s[i] += 0.5 * zt[i] * u;
            }
        }
        for i in 0..k {
            for j in 0..k {
                b[i][j] += s[i] * s[j];
            }
        }
    }
    let mut cov = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            let mut v = 0.0;
            for p in 0..k {
                for q in 0..k {
                    v += a_inv[i][p] * (b[p][q] / g) * a_inv[j][q];
                }
            }
            cov[i][j] = v / g;
        }
    }

    let z = critical_value(ci_level);
    let rows = (0..k)
        .map(|i| {
            let se = cov[i][i].max(0.0).sqrt();
            EstimateRow {
                name: format!("tsls_beta{i}"),
                value: beta[i],
                std_error: se,
                ci_low: beta[i] - z * se,
                ci_high: beta[i] + z * se,
                formula: if beta3_identified {
                    "IV: Y on (1,D_i,D_j,D_i*D_j) with instruments (1,Z_i,Z_j,Z_i*Z_j)".into()
                } else {
                    "IV: Y on (1,D_i,D_j) with instruments (1,Z_i,Z_j) off cell (1,1)".into()
                },
                n_groups: ds.n_groups(),
            }
        })
        .collect();

    let mut warnings = Vec::new();
    let hard = ds.osn_hard_count();
    if hard > 0 {
        warnings.push(format!(
            "OSNViolated: {hard} units treated while unassigned; 2SLS coefficients lack their LATE reading"
        ));
    }
    if !beta3_identified {
        warnings.push("interaction dropped: no joint take-up in cell (1,1)".into());
    }
    Ok(TslsEstimate {
        beta,
        covariance: cov,
        rows,
        beta3_identified,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let a = vec![vec![0.0, 2.0], vec![3.0, 1.0]];
        let x = solve_linear(a, vec![4.0, 5.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
        assert!(solve_linear(vec![vec![1.0, 2.0], vec![2.0, 4.0]], vec![1.0, 2.0]).is_none());
    }

    #[test]
    fn inverse_roundtrip() {
        let a = vec![vec![4.0, 1.0, 0.0], vec![1.0, 3.0, 1.0], vec![0.0, 1.0, 2.0]];
        let inv = invert(&a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|p| a[i][p] * inv[p][j]).sum();
                assert!((v - (i == j) as u8 as f64).abs() < 1e-14);
            }
        }
    }
}
