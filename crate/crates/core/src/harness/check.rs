use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{relax, RelaxationConfig};
use crate::error::Result;
use crate::learners::{aep_update, dyadic_nudged, vf_update, NudgeConfig};
use crate::models::{HopfieldParams, Mask, QuadraticCost};
use crate::oracle::exact_gradient;

/// Relative errors of the learners against the exact gradient on one net.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub seed: u64,
    pub n_dyn: usize,
    pub dense: bool,
    pub aep: f64,
    pub dyadic: f64,
    pub vf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub beta: f64,
    pub rows: Vec<CheckRow>,
    pub max_aep: f64,
    pub max_dyadic: f64,
}

/// Random asymmetric net with a stable fixed point: weights scaled so the
/// recurrent matrix has spectral norm well below one.
pub fn random_asymmetric_net(seed: u64, n_in: usize, n_max: usize) -> Result<(HopfieldParams, DVector<f64>, QuadraticCost, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..=n_max.max(3));
    let dense = rng.random_bool(0.5);
    let (mask, rows) = if dense {
        (Mask::no_self(n), vec![true; n])
    } else {
        let outputs = rng.random_range(1..n);
        let mut rows = vec![true; n];
        rows[n - outputs..].iter_mut().for_each(|r| *r = false);
        (Mask::layered(n - outputs, outputs), rows)
    };
    let output_start = n - 2.min(n - 1);
    let p = HopfieldParams::random(n_in, mask, rows, 0.5 / n as f64, &mut rng)?;
    let input = DVector::from_fn(n_in, |_, _| rng.random_range(-1.0..1.0));
    let target = DVector::from_fn(n - output_start, |_, _| rng.random_range(-1.0..1.0));
    Ok((p, input, QuadraticCost::new(target, output_start), dense))
}

/// Runs AEP, dyadic EP and VF on `count` random nets and compares each with
/// the exact gradient.
pub fn oracle_check(count: usize, seed: u64, beta: f64, n_max: usize) -> Result<CheckReport> {
    let precise = RelaxationConfig::precise(0.2);
    let nudge = NudgeConfig::new(beta, precise)?;
    let mut rows = Vec::with_capacity(count);
    for k in 0..count as u64 {
        let s = seed.wrapping_add(k);
        let (p, input, cost, dense) = random_asymmetric_net(s, 3, n_max)?;
        let sys = p.bind(&input)?;
        let x0 = relax(&sys, &DVector::zeros(p.n_dyn()), &precise, None)?.state;
        let exact = exact_gradient(&sys, &cost, &x0)?.grads;
        rows.push(CheckRow {
            seed: s,
            n_dyn: p.n_dyn(),
            dense,
            aep: aep_update(&sys, &cost, &nudge, &x0)?.grads.relative_error(&exact),
            dyadic: dyadic_nudged(&sys, &cost, &nudge, &x0)?.grads.relative_error(&exact),
            vf: vf_update(&sys, &cost, &nudge, &x0)?.grads.relative_error(&exact),
        });
    }
    let max = |f: fn(&CheckRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    Ok(CheckReport {
        beta,
        max_aep: max(|r| r.aep),
        max_dyadic: max(|r| r.dyadic),
        rows,
    })
}
