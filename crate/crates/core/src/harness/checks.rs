//! Invariant suite behind the `check` verb.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::baselines::{grid_oracle_positions, pga_oracle};
use crate::channel::{dbm_to_watts, sample_scenario, ChannelRealization, ScenarioParams};
use crate::error::Result;
use crate::gml::{project_power, sum_rate_gradient, MetaConfig};
use crate::math::CMatrix;
use crate::rate::{rates, sdma_rates, Access, Layout, Scheme, Variables};

/// Result of one invariant check.
#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn params(n_bs: usize, n_antennas: usize, n_users: usize) -> ScenarioParams {
    ScenarioParams {
        n_bs,
        n_antennas,
        n_users,
        ..ScenarioParams::default()
    }
}

/// Random precoders on the budget, random positions in the region and
/// random non-negative portions.
pub fn random_point(real: &ChannelRealization, budget: f64, rng: &mut ChaCha8Rng) -> Variables {
    let layout = Layout::of(real);
    let mut v = Variables::random_init(layout, &vec![budget; layout.n_bs], Access::Rsma, rng);
    let half = real.half_width();
    for r in v.positions.iter_mut() {
        *r = [rng.gen_range(-half..half), rng.gen_range(-half..half)];
    }
    for c in v.common.iter_mut() {
        *c = rng.gen_range(0.0..0.5);
    }
    v
}

/// Largest relative error between the taped sum-rate gradient and central
/// differences, `‖g − g_fd‖ / ‖g_fd‖`, over `instances` random K=2, N=2,
/// I=2 points.
pub fn gradient_check(instances: usize, seed: u64, step: f64) -> Result<f64> {
    let mut worst = 0.0f64;
    let budget = dbm_to_watts(33.0);
    for t in 0..instances {
        let real = sample_scenario(&params(2, 2, 2), seed + t as u64)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (t as u64 + 1) << 32);
        let v = random_point(&real, budget, &mut rng);
        let (_, g) = sum_rate_gradient(&real, &v, Access::Rsma);
        let flat = v.to_flat();
        let layout = v.layout();
        let f = |x: &[f64]| -> Result<f64> { Ok(rates(&real, &Variables::from_flat(layout, x)?)?.sum_rate) };
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..flat.len() {
            let mut up = flat.clone();
            let mut dn = flat.clone();
            up[i] += step;
            dn[i] -= step;
            let fd = (f(&up)? - f(&dn)?) / (2.0 * step);
            num += (g[i] - fd).powi(2);
            den += fd * fd;
        }
        worst = worst.max((num / den).sqrt());
    }
    Ok(worst)
}

/// Largest relative budget excess `(Tr(P Pᴴ) − P_M)/P_M` after
/// [`project_power`] over `calls` random precoders of random scale.
pub fn projection_fuzz(calls: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..calls {
        let n_bs = rng.gen_range(1..=3);
        let rows = rng.gen_range(1..=6);
        let cols = rng.gen_range(2..=6);
        let scale = 10f64.powf(rng.gen_range(-6.0..6.0));
        let pm: Vec<f64> = (0..n_bs).map(|_| 10f64.powf(rng.gen_range(-3.0..2.0))).collect();
        let ps: Vec<CMatrix> = (0..n_bs)
            .map(|_| {
                let data = (0..rows * cols)
                    .map(|_| {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        Complex64::new(re, im) * scale
                    })
                    .collect();
                CMatrix::from_vec(rows, cols, data).expect("matching length")
            })
            .collect();
        for (p, &b) in project_power(&ps, &pm).iter().zip(&pm) {
            worst = worst.max((p.frobenius_sq() - b) / b);
        }
    }
    worst
}

/// Largest rate difference between the RSMA report with `p_c = 0, c = 0`
/// and the SDMA report, over `instances` random points.
pub fn sdma_reduction(instances: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for t in 0..instances {
        let p = params(rng.gen_range(1..=3), rng.gen_range(1..=4), rng.gen_range(1..=4));
        let real = sample_scenario(&p, seed.wrapping_add(t as u64))?;
        let mut v = random_point(&real, dbm_to_watts(33.0), &mut rng);
        for pn in v.precoders.iter_mut() {
            for i in 0..pn.rows() {
                pn.set(i, 0, Complex64::new(0.0, 0.0));
            }
        }
        v.common.iter_mut().for_each(|c| *c = 0.0);
        let a = rates(&real, &v)?;
        let b = sdma_rates(&real, &v)?;
        worst = worst.max((a.sum_rate - b.sum_rate).abs());
        for (x, y) in a.user_rate.iter().zip(&b.user_rate) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok(worst)
}

/// `pga(RSMA) − pga(SDMA)`, smallest over `instances` small instances.
pub fn oracle_ordering(instances: usize, seed: u64, starts: usize) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for t in 0..instances {
        let real = sample_scenario(&params(1, 2, 2), seed + t as u64)?;
        let cfg = MetaConfig {
            seed: seed + t as u64,
            ..MetaConfig::default()
        };
        let (_, r) = pga_oracle(&real, &cfg, Scheme::RSMA_FPA, starts)?;
        let (_, s) = pga_oracle(&real, &cfg, Scheme::SDMA_FPA, starts)?;
        worst = worst.min(r.sum_rate - s.sum_rate);
    }
    Ok(worst)
}

/// `grid − origin`, smallest over `instances` K=1 instances.
pub fn grid_over_origin(instances: usize, seed: u64, resolution: usize) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for t in 0..instances {
        let real = sample_scenario(&params(2, 4, 1), seed + t as u64)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed + t as u64);
        let mut v = random_point(&real, dbm_to_watts(33.0), &mut rng);
        v.positions.iter_mut().for_each(|r| *r = [0.0, 0.0]);
        let origin = rates(&real, &v)?.sum_rate;
        v.positions = grid_oracle_positions(&real, &v, Access::Rsma, resolution)?;
        worst = worst.min(rates(&real, &v)?.sum_rate - origin);
    }
    Ok(worst)
}

/// The quick suite run by `check`.
pub fn run_checks(seed: u64) -> Result<Vec<CheckOutcome>> {
    let grad = gradient_check(3, seed, 1e-6)?;
    let proj = projection_fuzz(1000, seed);
    let red = sdma_reduction(20, seed)?;
    let ord = oracle_ordering(2, seed, 4)?;
    let grid = grid_over_origin(2, seed, 21)?;
    Ok(vec![
        CheckOutcome {
            name: "gradient",
            passed: grad < 1e-4,
            detail: format!("max relative error {grad:.2e}"),
        },
        CheckOutcome {
            name: "power-projection",
            passed: proj <= 1e-9,
            detail: format!("max relative excess {proj:.2e}"),
        },
        CheckOutcome {
            name: "sdma-reduction",
            passed: red <= 1e-12,
            detail: format!("max difference {red:.2e}"),
        },
        CheckOutcome {
            name: "oracle-rsma-over-sdma",
            passed: ord >= -1e-9,
            detail: format!("min margin {ord:.3e}"),
        },
        CheckOutcome {
            name: "grid-over-origin",
            passed: grid >= 0.0,
            detail: format!("min margin {grid:.3e}"),
        },
    ])
}
