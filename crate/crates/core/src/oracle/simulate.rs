//! Seeded simulation of household data from a spec.
//!
//! Household `g` draws from its own ChaCha8 stream (`set_stream(g)`) under
//! the spec seed, and results are assembled in index order, so output does
//! not depend on the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use super::spec::{Component, DgpSpec};
use crate::ingest::{Dataset, HouseholdRecord, UnitObs};
use crate::model::{Cell, ComplianceType, NoiseSpec};

/// Run `f` on a dedicated pool with `workers` threads (0 = rayon default).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool");
    pool.install(f)
}

fn pick(rng: &mut ChaCha8Rng, weights: impl Iterator<Item = f64>) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last = i;
            acc += w;
            if u < acc {
                return i;
            }
        }
    }
    // Rounding left u above the running total.
    last
}

struct Sampler<'a> {
    comps: Vec<Component<'a>>,
    std_normal: Normal,
}

impl Sampler<'_> {
    fn household(&self, seed: u64, g: usize, width: usize) -> HouseholdRecord {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(g as u64);
        let ci = if self.comps.len() == 1 {
            0
        } else {
            pick(&mut rng, self.comps.iter().map(|c| c.weight))
        };
        let c = &self.comps[ci];
        let pair = pick(&mut rng, c.types.iter().map(|(_, _, p)| p));
        let (a, b) = (ComplianceType::from_index(pair / 5), ComplianceType::from_index(pair % 5));
        let cell = Cell::ALL[pick(&mut rng, c.design.0.iter().copied())];
        let d1 = a.potential_treatment(cell.own, cell.peer);
        let d2 = b.potential_treatment(cell.peer, cell.own);
        let m1 = c.outcomes.mean(a, b, d1, d2);
        let m2 = c.outcomes.mean(b, a, d2, d1);

        let mut latent = || -> (f64, f64) {
            let rho = c.outcomes.noise().rho();
            let e1: f64 = rng.sample(StandardNormal);
            let e2: f64 = rng.sample(StandardNormal);
            (e1, rho * e1 + (1.0 - rho * rho).max(0.0).sqrt() * e2)
        };
        let (y1, y2) = match c.outcomes.noise() {
            NoiseSpec::None => (m1, m2),
            NoiseSpec::Gaussian { scale, .. } => {
                let (e1, e2) = latent();
                (m1 + scale * e1, m2 + scale * e2)
            }
            NoiseSpec::Bernoulli { .. } => {
                let (e1, e2) = latent();
                let bit = |e: f64, m: f64| (self.std_normal.cdf(e) < m) as u8 as f64;
                (bit(e1, m1), bit(e2, m2))
            }
        };
        HouseholdRecord::new(
            &format!("g{:0width$}", g + 1),
            [
                UnitObs { y: y1, d: d1, z: cell.own },
                UnitObs { y: y2, d: d2, z: cell.peer },
            ],
            c.label.map(str::to_string),
        )
    }
}

/// Draw `spec.groups` households using the current rayon pool.
pub fn simulate(spec: &DgpSpec) -> Dataset {
    let sampler = Sampler {
        comps: spec.components(),
        std_normal: Normal::new(0.0, 1.0).expect("standard normal"),
    };
    let width = spec.groups.to_string().len().max(6);
    let records: Vec<HouseholdRecord> = (0..spec.groups)
        .into_par_iter()
        .map(|g| sampler.household(spec.seed, g, width))
        .collect();
    Dataset::new(records).expect("simulated records are valid")
}

/// [`simulate`] on a dedicated pool of `workers` threads.
pub fn simulate_with_workers(spec: &DgpSpec, workers: usize) -> Dataset {
    with_workers(workers, || simulate(spec))
}
