//! Smooth transforms of the moment vector.
//!
//! Estimands are written as small expression trees over linear forms of
//! `mu`. Every division carries a guard naming what a vanishing denominator
//! means, so an empty cell or a non-identified ratio surfaces as a typed
//! error instead of a NaN.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::estimators::EstimandError;
use crate::model::Cell;

/// Denominators smaller than this in absolute value are rejected.
pub const DENOMINATOR_GUARD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum Guard {
    /// The denominator is an assignment-cell probability.
    Cell(Cell),
    /// The denominator is a stratum-specific cell probability.
    StratumCell(String, Cell),
    /// The denominator is an estimated propensity.
    Propensity(String, Cell),
    /// Any other ratio; the label names the denominator.
    Named(String),
}

impl Guard {
    fn error(&self) -> EstimandError {
        match self {
            Guard::Cell(c) => EstimandError::EmptyCell(*c),
            Guard::StratumCell(x, c) => EstimandError::EmptyStratumCell {
                stratum: x.clone(),
                cell: *c,
            },
            Guard::Propensity(x, c) => EstimandError::DegeneratePropensity {
                stratum: x.clone(),
                cell: *c,
            },
            Guard::Named(n) => EstimandError::DegenerateDenominator(n.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// `sum_k coef_k * mu[k]`.
    Linear(Vec<(usize, f64)>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>, Guard),
    Neg(Box<Expr>),
}

impl Expr {
    pub fn constant(v: f64) -> Self {
        Expr::Const(v)
    }

    pub fn coord(k: usize) -> Self {
        Expr::Linear(vec![(k, 1.0)])
    }

    pub fn ratio(self, den: Expr, guard: Guard) -> Self {
        Expr::Div(Box::new(self), Box::new(den), guard)
    }

    /// Evaluate with every denominator checked against [`DENOMINATOR_GUARD`].
    pub fn eval(&self, mu: &[f64]) -> Result<f64, EstimandError> {
        Ok(match self {
            Expr::Const(v) => *v,
            Expr::Linear(terms) => linear(terms, mu),
            Expr::Add(a, b) => a.eval(mu)? + b.eval(mu)?,
            Expr::Sub(a, b) => a.eval(mu)? - b.eval(mu)?,
            Expr::Mul(a, b) => a.eval(mu)? * b.eval(mu)?,
            Expr::Neg(a) => -a.eval(mu)?,
            Expr::Div(a, b, guard) => {
                let den = b.eval(mu)?;
                if !(den.abs() >= DENOMINATOR_GUARD) {
                    return Err(guard.error());
                }
                a.eval(mu)? / den
            }
        })
    }

    /// Evaluate without guards; used at perturbed points.
    pub fn eval_raw(&self, mu: &[f64]) -> f64 {
        match self {
            Expr::Const(v) => *v,
            Expr::Linear(terms) => linear(terms, mu),
            Expr::Add(a, b) => a.eval_raw(mu) + b.eval_raw(mu),
            Expr::Sub(a, b) => a.eval_raw(mu) - b.eval_raw(mu),
            Expr::Mul(a, b) => a.eval_raw(mu) * b.eval_raw(mu),
            Expr::Neg(a) => -a.eval_raw(mu),
            Expr::Div(a, b, _) => a.eval_raw(mu) / b.eval_raw(mu),
        }
    }

    /// Coordinates of `mu` the expression reads.
    pub fn support(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_support(&mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn collect_support(&self, out: &mut Vec<usize>) {
        match self {
            Expr::Const(_) => {}
            Expr::Linear(terms) => out.extend(terms.iter().map(|(k, _)| *k)),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b, _) => {
                a.collect_support(out);
                b.collect_support(out);
            }
            Expr::Neg(a) => a.collect_support(out),
        }
    }
}

fn linear(terms: &[(usize, f64)], mu: &[f64]) -> f64 {
    terms.iter().map(|&(k, c)| c * mu[k]).sum()
}

impl Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::Add(Box::new(self), Box::new(rhs))
    }
}

impl Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::Sub(Box::new(self), Box::new(rhs))
    }
}

impl Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Mul(Box::new(self), Box::new(rhs))
    }
}

impl Mul<Expr> for f64 {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Mul(Box::new(Expr::Const(self)), Box::new(rhs))
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

/// Division with a generic named guard.
impl Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::Div(Box::new(self), Box::new(rhs), Guard::Named("ratio".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guard_maps_to_typed_error() {
        let e = Expr::coord(0).ratio(Expr::coord(1), Guard::Cell(Cell::C11));
        assert_eq!(e.eval(&[1.0, 0.0]), Err(EstimandError::EmptyCell(Cell::C11)));
        assert_eq!(e.eval(&[1.0, 4.0]), Ok(0.25));
        let e = Expr::coord(0).ratio(Expr::coord(1), Guard::Named("P[C]".into()));
        assert_eq!(
            e.eval(&[1.0, 1e-9]),
            Err(EstimandError::DegenerateDenominator("P[C]".into()))
        );
    }

    #[test]
    fn arithmetic_and_support() {
        let e = (Expr::coord(2) - Expr::constant(1.0)) * (2.0 * Expr::coord(0)) + -Expr::coord(2);
        assert_eq!(e.eval(&[3.0, 9.0, 5.0]).unwrap(), 4.0 * 6.0 - 5.0);
        assert_eq!(e.support(), vec![0, 2]);
    }
}
