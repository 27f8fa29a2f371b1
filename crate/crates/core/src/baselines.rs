//! Benchmark schemes and reference solvers.
//!
//! The benchmarks reuse the meta-learning optimizer with blocks frozen
//! according to the scheme. The two oracles search independently: a
//! multi-start projected gradient ascent over all variables, and an
//! exhaustive grid over antenna positions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::ChannelRealization;
use crate::error::{CoreError, Result};
use crate::gml::{self, project_power, repair, BestTracker, MetaConfig, RunOutcome};
use crate::math::{sum, Real, Tape};
use crate::rate::{evaluate, rate_terms, Access, Layout, RateReport, Scheme, Variables, VarsView};

/// The four compared schemes.
pub type BenchmarkKind = Scheme;

/// Runs the meta-learning optimizer for `kind`: FPA keeps antennas at the
/// origin and SDMA keeps the common stream off.
pub fn run_benchmark(real: &ChannelRealization, kind: BenchmarkKind, cfg: &MetaConfig) -> Result<RunOutcome> {
    gml::run(real, cfg, kind)
}

/// Search settings for [`pga_oracle_with`].
#[derive(Clone, Debug, PartialEq)]
pub struct PgaOptions {
    pub starts: usize,
    pub steps: usize,
    /// Initial step in normalised units (`P/√P_M`, `r/λ`, `c`).
    pub initial_step: f64,
    /// Step growth after an accepted move.
    pub growth: f64,
    /// Runs stop once the step falls below this.
    pub min_step: f64,
    pub seed: u64,
    /// First start index, so disjoint batches can be drawn.
    pub first_start: usize,
}

impl Default for PgaOptions {
    fn default() -> Self {
        PgaOptions {
            starts: 20,
            steps: 2000,
            initial_step: 0.05,
            growth: 1.2,
            min_step: 1e-10,
            seed: 0,
            first_start: 0,
        }
    }
}

/// Multi-start projected gradient ascent with default settings and the
/// given number of starts.
pub fn pga_oracle(
    real: &ChannelRealization,
    cfg: &MetaConfig,
    scheme: Scheme,
    starts: usize,
) -> Result<(Variables, RateReport)> {
    let opts = PgaOptions {
        starts,
        seed: cfg.seed,
        ..PgaOptions::default()
    };
    pga_oracle_with(real, cfg, scheme, &opts)
}

/// Multi-start projected gradient ascent on the hinge-penalised objective.
///
/// Every candidate is projected onto the power budget, clamped into the
/// antenna region and has its portions clipped at zero. Steps that do not
/// improve the objective are rejected and the step is halved. The best
/// repaired feasible point over all starts is returned (or the least
/// violating one if none is feasible). RSMA searches also consider the
/// SDMA search's answer.
pub fn pga_oracle_with(
    real: &ChannelRealization,
    cfg: &MetaConfig,
    scheme: Scheme,
    opts: &PgaOptions,
) -> Result<(Variables, RateReport)> {
    if opts.starts == 0 {
        return Err(CoreError::config("starts", "must be at least 1"));
    }
    if !(opts.initial_step > 0.0) || !(opts.growth >= 1.0) {
        return Err(CoreError::config("pga", "step must be positive and growth at least 1"));
    }
    cfg.validate()?;
    let results: Vec<(Variables, RateReport)> = (opts.first_start..opts.first_start + opts.starts)
        .into_par_iter()
        .map(|s| pga_single(real, cfg, scheme, opts, s))
        .collect::<Result<_>>()?;
    let mut tracker = BestTracker::new();
    for (v, r) in results {
        tracker.offer(v, r);
    }
    if scheme.uses_common() {
        // SDMA points are RSMA points with the common stream off, so the
        // RSMA answer never falls below the SDMA one.
        let sdma = Scheme {
            access: Access::Sdma,
            ..scheme
        };
        let constraints = cfg.constraints(real.n_bs());
        let (v, _) = pga_oracle_with(real, cfg, sdma, opts)?;
        let r = evaluate(real, &v, Access::Rsma, &constraints)?;
        tracker.offer(v, r);
    }
    Ok(tracker.best.expect("at least one start"))
}

/// Common portions maximising the sum rate for given private rates and
/// common rate: each user's QoS shortfall is covered first and the rest of
/// the common rate is split evenly. If the shortfalls exceed the common
/// rate they are scaled down to fit.
pub fn allocate_common(private_rate: &[f64], common_min: f64, rate_threshold: f64) -> Vec<f64> {
    let rc = common_min.max(0.0);
    let deficit: Vec<f64> = private_rate
        .iter()
        .map(|r| (rate_threshold - r).max(0.0))
        .collect();
    let total: f64 = deficit.iter().sum();
    if total >= rc {
        let s = if total > 0.0 { rc / total } else { 0.0 };
        return deficit.iter().map(|d| d * s).collect();
    }
    let share = (rc - total) / private_rate.len() as f64;
    deficit.iter().map(|d| d + share).collect()
}

struct Problem<'a> {
    real: &'a ChannelRealization,
    layout: Layout,
    scheme: Scheme,
    rate_threshold: f64,
    budgets: Vec<f64>,
    /// Normalised to physical units, per flat coordinate.
    unit: Vec<f64>,
    /// Coordinates the search moves.
    free: Vec<bool>,
}

impl Problem<'_> {
    fn physical(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.unit).map(|(a, b)| a * b).collect()
    }

    /// Sets the portions to [`allocate_common`] of the current point.
    fn fill_common(&self, u: &mut [f64]) {
        if !self.scheme.uses_common() {
            return;
        }
        let x = self.physical(u);
        let t = rate_terms(self.real, self.layout, &VarsView::from_flat(self.layout, &x), Access::Rsma);
        let c = allocate_common(&t.private_rate, t.common_min, self.rate_threshold);
        let c0 = self.layout.common_offset();
        u[c0..c0 + c.len()].copy_from_slice(&c);
    }

    /// Search objective and its gradient in normalised units.
    fn value_grad(&self, u: &[f64], shape: Shape, want_grad: bool) -> (f64, Vec<f64>) {
        let x = self.physical(u);
        if !want_grad {
            let view = VarsView::from_flat(self.layout, &x);
            return (self.objective(&view, shape), Vec::new());
        }
        let tape = Tape::with_capacity(8192);
        let leaves = tape.vars(&x);
        let view = VarsView::from_flat(self.layout, &leaves);
        let j = self.objective(&view, shape);
        let g = tape.backward(j, &leaves);
        let grad = g
            .iter()
            .zip(&self.unit)
            .zip(&self.free)
            .map(|((g, s), &f)| if f { g * s } else { 0.0 })
            .collect();
        (j.value(), grad)
    }

    /// `Σ R_p,k + softmin_τ(R_c,k) − w·Σ max(0, R_th − R_k)`, with the
    /// portions taken as constants.
    fn objective<S: Real>(&self, view: &VarsView<S>, shape: Shape) -> S {
        let t = rate_terms(self.real, self.layout, view, self.scheme.access);
        let mut j = sum(t.private_rate.iter().copied());
        if self.scheme.uses_common() {
            j = j + soft_min(&t.common_rate, shape.temperature);
        }
        let shortfall = sum(t
            .private_rate
            .iter()
            .zip(&view.common)
            .map(|(&r, &c)| (-r - c.value() + self.rate_threshold).relu()));
        j - shortfall * shape.qos
    }

    /// Power projection and region clamp, then the portion allocation.
    fn project(&self, u: &mut [f64]) {
        let mut v = Variables::from_flat(self.layout, &self.physical(u)).expect("layout matches");
        v.precoders = project_power(&v.precoders, &self.budgets);
        let half = self.real.half_width();
        for r in &mut v.positions {
            r[0] = r[0].clamp(-half, half);
            r[1] = r[1].clamp(-half, half);
        }
        for ((x, p), s) in u.iter_mut().zip(v.to_flat()).zip(&self.unit) {
            *x = p / s;
        }
        self.fill_common(u);
    }
}

/// QoS weights tried in turn while a start ends infeasible.
const QOS_ESCALATION: [f64; 2] = [1.0, 100.0];

/// Soft-min temperatures, one run segment each.
const TEMPERATURES: [f64; 5] = [0.3, 0.1, 0.03, 0.01, 0.003];

#[derive(Clone, Copy)]
struct Shape {
    qos: f64,
    temperature: f64,
}

/// `m − τ·ln Σ exp(−(x_k − m)/τ)` with `m = min x`; within `τ·ln K` below
/// the minimum.
fn soft_min<S: Real>(x: &[S], tau: f64) -> S {
    let m = x.iter().map(|v| v.value()).fold(f64::INFINITY, f64::min);
    let e = sum(x.iter().map(|&v| ((-v + m) * (1.0 / tau)).exp()));
    -e.ln() * tau + m
}

fn pga_single(
    real: &ChannelRealization,
    cfg: &MetaConfig,
    scheme: Scheme,
    opts: &PgaOptions,
    start: usize,
) -> Result<(Variables, RateReport)> {
    let layout = Layout::of(real);
    let budgets = cfg.budgets(layout.n_bs);
    let constraints = cfg.constraints(layout.n_bs);
    let lambda = real.wavelength();
    let mut unit = vec![1.0; layout.len()];
    let mut free = vec![true; layout.len()];
    for n in 0..layout.n_bs {
        for i in 0..layout.n_antennas {
            for s in 0..layout.streams() {
                let j = layout.precoder_index(n, i, s);
                unit[2 * j] = budgets[n].sqrt();
                unit[2 * j + 1] = budgets[n].sqrt();
                if s == 0 && !scheme.uses_common() {
                    free[2 * j] = false;
                    free[2 * j + 1] = false;
                }
            }
        }
    }
    let c0 = layout.common_offset();
    let r0 = layout.position_offset();
    for k in 0..layout.n_users {
        free[c0 + k] = false;
        unit[r0 + 2 * k] = lambda;
        unit[r0 + 2 * k + 1] = lambda;
        free[r0 + 2 * k] = scheme.moves_antennas();
        free[r0 + 2 * k + 1] = scheme.moves_antennas();
    }
    let prob = Problem {
        real,
        layout,
        scheme,
        rate_threshold: cfg.rate_threshold,
        budgets: budgets.clone(),
        unit,
        free,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9_7f4a_7c15u64.wrapping_mul(start as u64 + 1));
    let mut init = Variables::random_init(layout, &budgets, scheme.access, &mut rng);
    if start > 0 && scheme.moves_antennas() {
        let half = real.half_width();
        for r in &mut init.positions {
            *r = [rng.gen_range(-half..=half), rng.gen_range(-half..=half)];
        }
    }
    let mut u: Vec<f64> = init
        .to_flat()
        .iter()
        .zip(&prob.unit)
        .map(|(x, s)| x / s)
        .collect();
    prob.fill_common(&mut u);

    let mut tracker = BestTracker::new();
    let offer = |u: &[f64], tracker: &mut BestTracker| -> Result<()> {
        let v = Variables::from_flat(layout, &prob.physical(u))?;
        let v = repair(real, &v, scheme, &budgets, cfg.rate_threshold)?;
        let rep = evaluate(real, &v, scheme.access, &constraints)?;
        tracker.offer(v, rep);
        Ok(())
    };
    offer(&u, &mut tracker)?;
    let weights = std::iter::once(cfg.zeta[0]).chain(QOS_ESCALATION.iter().copied().filter(|&w| w > cfg.zeta[0]));
    let segment = opts.steps.div_ceil(TEMPERATURES.len());
    for w in weights {
        let mut left = opts.steps;
        for &temperature in &TEMPERATURES {
            let shape = Shape { qos: w, temperature };
            let (mut val, mut grad) = prob.value_grad(&u, shape, true);
            let mut eta = opts.initial_step;
            for step in 0..segment.min(left) {
                left -= 1;
                if eta < opts.min_step {
                    break;
                }
                let mut cand: Vec<f64> = u.iter().zip(&grad).map(|(x, g)| x + eta * g).collect();
                prob.project(&mut cand);
                let (cv, _) = prob.value_grad(&cand, shape, false);
                if cv.is_finite() && cv > val {
                    u = cand;
                    let (v2, g2) = prob.value_grad(&u, shape, true);
                    val = v2;
                    grad = g2;
                    eta *= opts.growth;
                    if step % 16 == 0 {
                        offer(&u, &mut tracker)?;
                    }
                } else {
                    eta *= 0.5;
                }
            }
            offer(&u, &mut tracker)?;
        }
        if tracker.feasible {
            break;
        }
    }
    Ok(tracker.best.expect("offered"))
}

/// Sum rate of `vars` without any repair.
fn raw_sum_rate(real: &ChannelRealization, vars: &Variables, access: Access) -> f64 {
    let layout = vars.layout();
    let flat = vars.to_flat();
    rate_terms(real, layout, &VarsView::from_flat(layout, &flat), access).sum_rate
}

/// Grid points per axis of the region, endpoints included.
fn grid_axis(half: f64, resolution: usize) -> Vec<f64> {
    (0..resolution)
        .map(|i| -half + 2.0 * half * i as f64 / (resolution - 1) as f64)
        .collect()
}

/// Exhaustive placement search at fixed precoders and portions.
///
/// Each user's antenna is moved over a `resolution × resolution` grid of
/// the region while the others stay put and moved to the best grid point;
/// two sweeps over the users are made (one when there is a single user).
/// Ties keep the earlier grid point.
pub fn grid_oracle_positions(
    real: &ChannelRealization,
    vars: &Variables,
    access: Access,
    resolution: usize,
) -> Result<Vec<[f64; 2]>> {
    let layout = Layout::of(real);
    vars.check_shape(layout)?;
    if resolution < 2 {
        return Err(CoreError::config("resolution", "must be at least 2"));
    }
    if layout.n_users.saturating_mul(resolution * resolution) > 1_000_000 {
        return Err(CoreError::config(
            "resolution",
            format!("{} users × {resolution}² grid points exceeds 10⁶", layout.n_users),
        ));
    }
    let axis = grid_axis(real.half_width(), resolution);
    let mut v = vars.clone();
    for _sweep in 0..sweeps(layout.n_users) {
        for k in 0..layout.n_users {
            let candidates: Vec<[f64; 2]> = axis
                .iter()
                .flat_map(|&x| axis.iter().map(move |&y| [x, y]))
                .collect();
            let scores: Vec<f64> = candidates
                .par_iter()
                .map(|&r| {
                    let mut w = v.clone();
                    w.positions[k] = r;
                    raw_sum_rate(real, &w, access)
                })
                .collect();
            let mut best = f64::NEG_INFINITY;
            for (r, s) in candidates.iter().zip(scores) {
                if s > best {
                    best = s;
                    v.positions[k] = *r;
                }
            }
        }
    }
    Ok(v.positions)
}

/// Number of sum-rate evaluations [`grid_oracle_positions`] makes.
pub fn grid_evaluations(n_users: usize, resolution: usize) -> usize {
    sweeps(n_users) * n_users * resolution * resolution
}

fn sweeps(n_users: usize) -> usize {
    if n_users == 1 {
        1
    } else {
        2
    }
}
