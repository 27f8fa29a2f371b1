//! Gradient-based meta-learning optimizer.
//!
//! Three sub-networks map objective gradients to variable increments: CN
//! for the common portions, PN for the precoders (applied row-wise, one
//! BS antenna per row) and AN for the antenna positions. Within an outer
//! iteration each block restarts from the initial point and is updated
//! `N_i` times while the other two blocks hold their latest values, in the
//! order C, P, L; the precoders are then projected onto the power budget.
//! The meta-loss of every outer iteration is averaged over the epoch and
//! the network parameters take one Adam step per epoch.
//!
//! Gradients fed into the networks are treated as constants when the
//! meta-loss is differentiated, so parameter gradients flow only through
//! the increments the networks emit.

mod loss;
mod network;

pub use loss::{meta_loss_generic, project_power, project_power_generic, Penalties, PenaltyMode};
pub use network::SubNetwork;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::ChannelRealization;
use crate::error::{CoreError, Result};
use crate::math::{Real, Tape};
use crate::math::Cx;
use crate::rate::{
    evaluate, rate_terms, rate_terms_at, Access, Constraints, Layout, RateReport, Scheme,
    Variables, VarsView,
};

/// Loop counts, learning rates, penalties, and problem constants.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaConfig {
    /// `N_i`: updates per variable block within one outer iteration.
    pub inner_iters: usize,
    /// `N_o`: outer iterations per epoch.
    pub outer_iters: usize,
    /// `N_e`: epochs, one network update each.
    pub epochs: usize,
    pub lr_precoder: f64,
    pub lr_common: f64,
    pub lr_position: f64,
    /// `ζ1..ζ4`: QoS, portion sign, portion budget, antenna region.
    pub zeta: [f64; 4],
    pub penalty_mode: PenaltyMode,
    /// QoS threshold (bps/Hz).
    pub rate_threshold: f64,
    /// Per-BS power budget (W).
    pub power_budget: f64,
    pub hidden_precoder: usize,
    pub hidden_common: usize,
    pub hidden_position: usize,
    /// Increment units of the (common, precoder, position) networks,
    /// relative to 1, `√P_M` and `λ` respectively.
    pub step_scale: [f64; 3],
    /// Factor the step scales reach by the last epoch, decaying
    /// geometrically; 1 keeps them constant.
    pub step_decay: f64,
    /// Rescale each block's network inputs to unit RMS.
    pub normalize_inputs: bool,
    pub seed: u64,
}

impl Default for MetaConfig {
    fn default() -> Self {
        MetaConfig {
            inner_iters: 10,
            outer_iters: 1,
            epochs: 2000,
            lr_precoder: 1.6e-3,
            lr_common: 1e-3,
            lr_position: 1e-5,
            zeta: [10.0, 1e-2, 1.001, 1e-4],
            penalty_mode: PenaltyMode::Hinge,
            rate_threshold: 0.6,
            power_budget: crate::channel::dbm_to_watts(33.0),
            hidden_precoder: 1000,
            hidden_common: 100,
            hidden_position: 1000,
            step_scale: [3.0, 0.003, 0.01],
            step_decay: 0.03,
            normalize_inputs: false,
            seed: 0,
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.outer_iters == 0 {
            return Err(CoreError::config("outer_iters", "must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(CoreError::config("epochs", "must be at least 1"));
        }
        for (field, v) in [
            ("lr_precoder", self.lr_precoder),
            ("lr_common", self.lr_common),
            ("lr_position", self.lr_position),
            ("power_budget", self.power_budget),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CoreError::config(field, "must be positive and finite"));
            }
        }
        if !(self.step_decay > 0.0 && self.step_decay.is_finite()) {
            return Err(CoreError::config("step_decay", "must be positive and finite"));
        }
        for (i, z) in self.step_scale.iter().enumerate() {
            if !(*z > 0.0 && z.is_finite()) {
                return Err(CoreError::config(
                    ["step_scale_common", "step_scale_precoder", "step_scale_position"][i],
                    "must be positive and finite",
                ));
            }
        }
        for (i, z) in self.zeta.iter().enumerate() {
            if !(*z >= 0.0 && z.is_finite()) {
                return Err(CoreError::config(format!("zeta{}", i + 1), "must be non-negative"));
            }
        }
        if !self.rate_threshold.is_finite() {
            return Err(CoreError::config("rate_threshold", "must be finite"));
        }
        for (field, v) in [
            ("hidden_precoder", self.hidden_precoder),
            ("hidden_common", self.hidden_common),
            ("hidden_position", self.hidden_position),
        ] {
            if v == 0 {
                return Err(CoreError::config(field, "must be at least 1"));
            }
        }
        Ok(())
    }

    pub fn penalties(&self) -> Penalties {
        Penalties {
            mode: self.penalty_mode,
            rate_threshold: self.rate_threshold,
            qos: self.zeta[0],
            common_nonneg: self.zeta[1],
            common_budget: self.zeta[2],
            region: self.zeta[3],
        }
    }

    pub fn budgets(&self, n_bs: usize) -> Vec<f64> {
        vec![self.power_budget; n_bs]
    }

    pub fn constraints(&self, n_bs: usize) -> Constraints {
        Constraints {
            rate_threshold: self.rate_threshold,
            power_budget: self.budgets(n_bs),
        }
    }
}

/// The three sub-networks.
#[derive(Clone, Debug)]
pub struct Nets {
    pub precoder: SubNetwork,
    pub common: SubNetwork,
    pub position: SubNetwork,
}

impl Nets {
    pub fn new(n_users: usize, cfg: &MetaConfig, rng: &mut ChaCha8Rng) -> Self {
        let k = n_users;
        Nets {
            precoder: SubNetwork::new(2 * k + 2, cfg.hidden_precoder, 2 * k + 2, rng),
            common: SubNetwork::new(k, cfg.hidden_common, k, rng),
            position: SubNetwork::new(2 * k, cfg.hidden_position, 2 * k, rng),
        }
    }

    pub fn zeros(n_users: usize, cfg: &MetaConfig) -> Self {
        let k = n_users;
        Nets {
            precoder: SubNetwork::zeros(2 * k + 2, cfg.hidden_precoder, 2 * k + 2),
            common: SubNetwork::zeros(k, cfg.hidden_common, k),
            position: SubNetwork::zeros(2 * k, cfg.hidden_position, 2 * k),
        }
    }
}

/// Gradient of the sum rate with respect to the flat variable layout.
pub fn sum_rate_gradient(
    real: &ChannelRealization,
    vars: &Variables,
    access: Access,
) -> (f64, Vec<f64>) {
    let layout = vars.layout();
    let tape = Tape::with_capacity(8192);
    let leaves = tape.vars(&vars.to_flat());
    let view = VarsView::from_flat(layout, &leaves);
    let root = rate_terms(real, layout, &view, access).sum_rate;
    (root.value(), tape.backward(root, &leaves))
}

fn common_rate_gradient(n_users: usize) -> Vec<f64> {
    vec![1.0; n_users]
}

/// `h_{n,k}` at the given antenna positions, indexed `n·K + k`.
fn channels_at(real: &ChannelRealization, positions: &[[f64; 2]]) -> Vec<Vec<Cx<f64>>> {
    (0..real.n_bs())
        .flat_map(|n| (0..real.n_users()).map(move |k| (n, k)))
        .map(|(n, k)| real.channel_generic(n, k, positions[k]))
        .collect()
}

/// Gradient of the sum rate with respect to the precoder part of the flat
/// layout, with the channels held fixed.
fn precoder_rate_gradient(
    channels: &[Vec<Cx<f64>>],
    noise: f64,
    vars: &Variables,
    access: Access,
) -> Vec<f64> {
    let layout = vars.layout();
    let tape = Tape::with_capacity(4096);
    let flat = vars.to_flat();
    let np = 2 * layout.n_precoder();
    let leaves = tape.vars(&flat[..np]);
    let rest = tape.vars(&flat[np..]);
    let all: Vec<_> = leaves.iter().chain(&rest).copied().collect();
    let view = VarsView::from_flat(layout, &all);
    let h: Vec<Vec<Cx<_>>> = channels
        .iter()
        .map(|v| v.iter().map(|z| Cx::new(tape.var(z.re), tape.var(z.im))).collect())
        .collect();
    let root = rate_terms_at(layout, &h, noise, &view, access).sum_rate;
    tape.backward(root, &leaves)
}

/// Meta-loss at `vars`; precoders are used as given (no projection).
pub fn meta_loss(real: &ChannelRealization, vars: &Variables, cfg: &MetaConfig, access: Access) -> f64 {
    let layout = vars.layout();
    let flat = vars.to_flat();
    let view = VarsView::from_flat(layout, &flat);
    meta_loss_generic(real, layout, &view, access, &cfg.penalties())
}

/// Meta-loss after projecting the given (pre-projection) precoders, and its
/// gradient with respect to the pre-projection flat layout.
fn meta_loss_gradient(
    real: &ChannelRealization,
    pre: &Variables,
    cfg: &MetaConfig,
    access: Access,
    budgets: &[f64],
) -> (f64, Vec<f64>) {
    let layout = pre.layout();
    let tape = Tape::with_capacity(8192);
    let leaves = tape.vars(&pre.to_flat());
    let mut view = VarsView::from_flat(layout, &leaves);
    project_power_generic(layout, &mut view.precoders, budgets);
    let root = meta_loss_generic(real, layout, &view, access, &cfg.penalties());
    (root.value(), tape.backward(root, &leaves))
}

/// Which variable blocks the optimizer updates; the others stay at their
/// initial values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Blocks {
    pub common: bool,
    pub precoders: bool,
    pub positions: bool,
}

impl Blocks {
    pub fn for_scheme(scheme: Scheme) -> Self {
        Blocks {
            common: scheme.uses_common(),
            precoders: true,
            positions: scheme.moves_antennas(),
        }
    }

    /// Antenna positions only, for placement studies at fixed `(P, C)`.
    pub fn positions_only(scheme: Scheme) -> Self {
        Blocks {
            common: false,
            precoders: false,
            positions: scheme.moves_antennas(),
        }
    }
}

/// Network inputs seen during one inner cycle, with hidden pre-activations.
#[derive(Default)]
struct CycleRecord {
    common: Vec<(Vec<f64>, Vec<f64>)>,
    /// `(row index n·I + i, input, pre-activations)`.
    precoder: Vec<(usize, Vec<f64>, Vec<f64>)>,
    position: Vec<(Vec<f64>, Vec<f64>)>,
}

/// Result of one inner cycle.
pub struct CycleOutput {
    /// `(C*, P*, L*)`, precoders projected.
    pub vars: Variables,
    /// Same point before the power projection.
    pub pre_projection: Variables,
}

/// Multiplier applied to a block's network inputs.
fn input_gain(cfg: &MetaConfig, block: &[f64]) -> f64 {
    if !cfg.normalize_inputs || block.is_empty() {
        return 1.0;
    }
    let rms = (block.iter().map(|v| v * v).sum::<f64>() / block.len() as f64).sqrt();
    if rms > 0.0 {
        1.0 / rms
    } else {
        1.0
    }
}

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(CoreError::NumericFault(format!("non-finite {what}")))
    }
}

/// One pass of the C, P, L inner updates.
///
/// Each block starts from `initial` and sees the other blocks at their
/// values in `latest` (or the value just produced earlier in this cycle).
/// Network inputs and outputs are expressed in normalised units: precoders
/// relative to `√P_M`, positions relative to the wavelength.
pub fn inner_cycle(
    real: &ChannelRealization,
    initial: &Variables,
    latest: &Variables,
    nets: &Nets,
    cfg: &MetaConfig,
    scheme: Scheme,
) -> Result<CycleOutput> {
    inner_cycle_recorded(real, initial, latest, nets, cfg, scheme, Blocks::for_scheme(scheme), None)
}

fn inner_cycle_recorded(
    real: &ChannelRealization,
    initial: &Variables,
    latest: &Variables,
    nets: &Nets,
    cfg: &MetaConfig,
    scheme: Scheme,
    blocks: Blocks,
    mut record: Option<&mut CycleRecord>,
) -> Result<CycleOutput> {
    let layout = Layout::of(real);
    initial.check_shape(layout)?;
    latest.check_shape(layout)?;
    let access = scheme.access;
    let budgets = cfg.budgets(layout.n_bs);
    let lambda = real.wavelength();
    let k = layout.n_users;

    let mut cur = latest.clone();

    // C block.
    cur.common = initial.common.clone();
    if blocks.common {
        // Σ_k R_k = Σ_k (R_p,k + c_k), so ∂/∂c is all ones.
        let g = common_rate_gradient(k);
        for _ in 0..cfg.inner_iters {
            let gain = input_gain(cfg, &g);
            let x: Vec<f64> = g.iter().map(|v| v * gain).collect();
            check_finite(&x, "common-portion gradient")?;
            let mut pre = Vec::new();
            let out = nets.common.forward_into(&x, &mut pre)?;
            for (c, d) in cur.common.iter_mut().zip(&out) {
                *c += d * cfg.step_scale[0];
            }
            if let Some(r) = record.as_deref_mut() {
                r.common.push((x, pre));
            }
        }
        check_finite(&cur.common, "common portions")?;
    }

    // P block.
    cur.precoders = initial.precoders.clone();
    let streams = layout.streams();
    let precoder_iters = if blocks.precoders { cfg.inner_iters } else { 0 };
    let fixed = blocks.precoders.then(|| channels_at(real, &cur.positions));
    for _ in 0..precoder_iters {
        let g = precoder_rate_gradient(fixed.as_deref().unwrap_or(&[]), real.noise_power(), &cur, access);
        let scaled: Vec<f64> = (0..layout.n_precoder())
            .flat_map(|j| {
                let u = budgets[j / (layout.n_antennas * streams)].sqrt();
                [g[2 * j] * u, g[2 * j + 1] * u]
            })
            .collect();
        let gain = input_gain(cfg, &scaled);
        for n in 0..layout.n_bs {
            let unit = budgets[n].sqrt() * cfg.step_scale[1];
            for i in 0..layout.n_antennas {
                let row = n * layout.n_antennas + i;
                let mut x = Vec::with_capacity(2 * streams);
                for s in 0..streams {
                    let j = layout.precoder_index(n, i, s);
                    x.push(scaled[2 * j] * gain);
                    x.push(scaled[2 * j + 1] * gain);
                }
                check_finite(&x, "precoder gradient")?;
                let mut pre = Vec::new();
                let out = nets.precoder.forward_into(&x, &mut pre)?;
                let p = &mut cur.precoders[n];
                let first = if scheme.uses_common() { 0 } else { 1 };
                for s in first..streams {
                    let z = p.get(i, s)
                        + num_complex::Complex64::new(out[2 * s], out[2 * s + 1]) * unit;
                    p.set(i, s, z);
                }
                if let Some(r) = record.as_deref_mut() {
                    r.precoder.push((row, x, pre));
                }
            }
        }
    }
    if !cur.precoders.iter().all(|p| p.as_slice().iter().all(|z| z.is_finite())) {
        return Err(CoreError::NumericFault("non-finite precoders".into()));
    }
    let pre_precoders = cur.precoders.clone();
    if precoder_iters > 0 {
        cur.precoders = project_power(&cur.precoders, &budgets);
    }

    // L block.
    cur.positions = initial.positions.clone();
    if blocks.positions {
        for _ in 0..cfg.inner_iters {
            let (_, g) = sum_rate_gradient(real, &cur, access);
            let r0 = layout.position_offset();
            let scaled: Vec<f64> = g[r0..r0 + 2 * k].iter().map(|v| v * lambda).collect();
            let gain = input_gain(cfg, &scaled);
            let x: Vec<f64> = scaled.iter().map(|v| v * gain).collect();
            check_finite(&x, "position gradient")?;
            let mut pre = Vec::new();
            let out = nets.position.forward_into(&x, &mut pre)?;
            let step = lambda * cfg.step_scale[2];
            for (kk, r) in cur.positions.iter_mut().enumerate() {
                r[0] += out[2 * kk] * step;
                r[1] += out[2 * kk + 1] * step;
            }
            if let Some(rec) = record.as_deref_mut() {
                rec.position.push((x, pre));
            }
        }
        for r in &cur.positions {
            check_finite(r, "positions")?;
        }
    }

    let mut pre_projection = cur.clone();
    pre_projection.precoders = pre_precoders;
    Ok(CycleOutput {
        vars: cur,
        pre_projection,
    })
}

/// Makes a point feasible for reporting: portions clipped at zero and
/// scaled down to fit the common rate, antennas clamped into the region,
/// precoders projected. SDMA points drop their common parts entirely.
///
/// The portion total is then redistributed so that users whose private
/// rate is below `threshold` are topped up first; the sum rate does not
/// change.
pub fn repair(
    real: &ChannelRealization,
    vars: &Variables,
    scheme: Scheme,
    budgets: &[f64],
    threshold: f64,
) -> Result<Variables> {
    let mut v = vars.clone();
    v.precoders = project_power(&v.precoders, budgets);
    let half = real.half_width();
    for r in &mut v.positions {
        if scheme.moves_antennas() {
            r[0] = r[0].clamp(-half, half);
            r[1] = r[1].clamp(-half, half);
        } else {
            *r = [0.0, 0.0];
        }
    }
    match scheme.access {
        Access::Sdma => {
            for p in &mut v.precoders {
                for i in 0..p.rows() {
                    p.set(i, 0, num_complex::Complex64::new(0.0, 0.0));
                }
            }
            v.common.iter_mut().for_each(|c| *c = 0.0);
        }
        Access::Rsma => {
            for c in &mut v.common {
                *c = c.max(0.0);
            }
            let report = crate::rate::rates(real, &v)?;
            let rc = report.common_min;
            let total: f64 = v.common.iter().sum();
            if total > rc {
                let s = if total > 0.0 { rc / total } else { 0.0 };
                v.common.iter_mut().for_each(|c| *c *= s);
            }
            // Rounding can leave Σc a hair above R_c.
            let total: f64 = v.common.iter().sum();
            if total > rc {
                let excess = total - rc;
                if let Some(c) = v.common.iter_mut().max_by(|a, b| a.total_cmp(b)) {
                    *c = (*c - excess).max(0.0);
                }
            }
            cover_shortfalls(&mut v.common, &report.private_rate, threshold);
        }
    }
    Ok(v)
}

/// The same point with the common stream switched off: common precoders
/// zeroed, private precoders rescaled onto the budget, portions zero.
pub fn private_only(vars: &Variables, budgets: &[f64]) -> Variables {
    let mut v = vars.clone();
    for (p, b) in v.precoders.iter_mut().zip(budgets) {
        for i in 0..p.rows() {
            p.set(i, 0, num_complex::Complex64::new(0.0, 0.0));
        }
        let f = p.frobenius_sq();
        if f > 0.0 {
            p.scale((b / f).sqrt());
        }
    }
    v.precoders = project_power(&v.precoders, budgets);
    v.common.iter_mut().for_each(|c| *c = 0.0);
    v
}

/// Keeps `Σc` and covers each `threshold − R_p,k` shortfall first, the
/// rest going to users in proportion to their current portions. Left
/// alone when the shortfalls exceed the total.
fn cover_shortfalls(common: &mut [f64], private_rate: &[f64], threshold: f64) {
    let total: f64 = common.iter().sum();
    let deficit: Vec<f64> = private_rate.iter().map(|r| (threshold - r).max(0.0)).collect();
    let need: f64 = deficit.iter().sum();
    if need == 0.0 || need > total {
        return;
    }
    let spare = total - need;
    let old = common.to_vec();
    let weight: f64 = old.iter().sum();
    for (k, c) in common.iter_mut().enumerate() {
        *c = deficit[k] + spare * old[k] / weight;
    }
}

/// One row of the optimizer trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub epoch: usize,
    pub outer: usize,
    pub meta_loss: f64,
    /// `Σ R_k` at the raw `(C*, P*, L*)`.
    pub sum_rate: f64,
    /// Best repaired feasible sum rate so far (0 before the first).
    pub best_so_far: f64,
}

#[derive(Clone, Debug, Default)]
pub struct OptimizerTrace {
    pub records: Vec<TraceRecord>,
}

impl OptimizerTrace {
    /// `epoch,outer,meta_loss,sum_rate,best_so_far` with a header row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,outer,meta_loss,sum_rate,best_so_far\n");
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch, r.outer, r.meta_loss, r.sum_rate, r.best_so_far
            ));
        }
        s
    }

    pub fn best_curve(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.best_so_far).collect()
    }
}

/// Final answer of an optimizer run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    /// Best repaired point (feasible if `feasible`).
    pub vars: Variables,
    pub report: RateReport,
    pub feasible: bool,
    pub trace: OptimizerTrace,
}

impl RunOutcome {
    pub fn sum_rate(&self) -> f64 {
        self.report.sum_rate
    }
}

/// Best-point bookkeeping shared by the optimizers.
pub(crate) struct BestTracker {
    pub best: Option<(Variables, RateReport)>,
    pub feasible: bool,
    violation: f64,
}

impl BestTracker {
    pub fn new() -> Self {
        BestTracker {
            best: None,
            feasible: false,
            violation: f64::INFINITY,
        }
    }

    /// Offers a repaired point; keeps the best feasible one, or the least
    /// violating one while nothing feasible has been seen.
    pub fn offer(&mut self, vars: Variables, report: RateReport) -> bool {
        let feasible = report.is_feasible();
        let violation = report
            .feasibility
            .as_ref()
            .map_or(f64::INFINITY, |f| f.total_violation());
        let better = match (&self.best, self.feasible, feasible) {
            (None, _, _) => true,
            (Some(_), false, true) => true,
            (Some(_), true, false) => false,
            (Some((_, r)), true, true) => report.sum_rate > r.sum_rate,
            (Some((_, r)), false, false) => {
                violation < self.violation
                    || (violation == self.violation && report.sum_rate > r.sum_rate)
            }
        };
        if better {
            self.best = Some((vars, report));
            self.feasible = feasible;
            self.violation = violation;
        }
        better
    }

    pub fn best_feasible_rate(&self) -> f64 {
        match (&self.best, self.feasible) {
            (Some((_, r)), true) => r.sum_rate,
            _ => 0.0,
        }
    }
}

/// Meta-learning optimizer state for one scenario and scheme.
pub struct GmlOptimizer<'a> {
    real: &'a ChannelRealization,
    cfg: &'a MetaConfig,
    scheme: Scheme,
    blocks: Blocks,
    pub nets: Nets,
    pub initial: Variables,
}

impl<'a> GmlOptimizer<'a> {
    /// Networks and the initial point drawn from `cfg.seed`.
    pub fn new(real: &'a ChannelRealization, cfg: &'a MetaConfig, scheme: Scheme) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout::of(real);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let nets = Nets::new(layout.n_users, cfg, &mut rng);
        let initial =
            Variables::random_init(layout, &cfg.budgets(layout.n_bs), scheme.access, &mut rng);
        Ok(GmlOptimizer {
            real,
            cfg,
            scheme,
            blocks: Blocks::for_scheme(scheme),
            nets,
            initial,
        })
    }

    pub fn with_nets(mut self, nets: Nets) -> Self {
        self.nets = nets;
        self
    }

    pub fn with_initial(mut self, initial: Variables) -> Result<Self> {
        initial.check_shape(Layout::of(self.real))?;
        self.initial = initial;
        Ok(self)
    }

    /// Restricts updates to `blocks` (intersected with what the scheme allows).
    pub fn with_blocks(mut self, blocks: Blocks) -> Self {
        let allowed = Blocks::for_scheme(self.scheme);
        self.blocks = Blocks {
            common: blocks.common && allowed.common,
            precoders: blocks.precoders,
            positions: blocks.positions && allowed.positions,
        };
        self
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Runs all epochs and returns the best repaired point found.
    pub fn run(mut self) -> Result<RunOutcome> {
        let base = self.cfg;
        let blocks = self.blocks;
        let mut cfg = base.clone();
        let mut latest = self.initial.clone();
        let mut tracker = BestTracker::new();
        let mut trace = OptimizerTrace::default();

        for epoch in 0..base.epochs {
            let progress = if base.epochs > 1 {
                epoch as f64 / (base.epochs - 1) as f64
            } else {
                0.0
            };
            let decay = base.step_decay.powf(progress);
            cfg.step_scale = base.step_scale.map(|s| s * decay);
            let g = self.epoch(&cfg, epoch, &mut latest, &mut tracker, &mut trace)?;
            if blocks.precoders {
                self.nets.precoder.apply_adam(&g.precoder, cfg.lr_precoder)?;
            }
            if blocks.common {
                self.nets.common.apply_adam(&g.common, cfg.lr_common)?;
            }
            if blocks.positions {
                self.nets.position.apply_adam(&g.position, cfg.lr_position)?;
            }
        }

        let (vars, report) = tracker.best.expect("at least one outer iteration ran");
        Ok(RunOutcome {
            vars,
            report,
            feasible: tracker.feasible,
            trace,
        })
    }

    /// Mean meta-loss of a first epoch from the initial point and its
    /// gradient with respect to every network parameter.
    pub fn epoch_gradient(&self) -> Result<EpochGradient> {
        let mut latest = self.initial.clone();
        self.epoch(self.cfg, 0, &mut latest, &mut BestTracker::new(), &mut OptimizerTrace::default())
    }

    /// `N_o` outer iterations with fixed networks.
    fn epoch(
        &self,
        cfg: &MetaConfig,
        epoch: usize,
        latest: &mut Variables,
        tracker: &mut BestTracker,
        trace: &mut OptimizerTrace,
    ) -> Result<EpochGradient> {
        let real = self.real;
        let scheme = self.scheme;
        let layout = Layout::of(real);
        let budgets = cfg.budgets(layout.n_bs);
        let constraints = cfg.constraints(layout.n_bs);
        let lambda = real.wavelength();
        let streams = layout.streams();
        let scale = 1.0 / cfg.outer_iters as f64;
        let mut g = EpochGradient {
            mean_loss: 0.0,
            precoder: vec![0.0; self.nets.precoder.n_params()],
            common: vec![0.0; self.nets.common.n_params()],
            position: vec![0.0; self.nets.position.n_params()],
        };
        for outer in 0..cfg.outer_iters {
            let mut rec = CycleRecord::default();
            let out = inner_cycle_recorded(
                real,
                &self.initial,
                latest,
                &self.nets,
                cfg,
                scheme,
                self.blocks,
                Some(&mut rec),
            )?;
            let (loss, dl) = meta_loss_gradient(real, &out.pre_projection, cfg, scheme.access, &budgets);
            if !loss.is_finite() {
                return Err(CoreError::NumericFault(format!(
                    "meta-loss {loss} at epoch {epoch}, outer iteration {outer}"
                )));
            }
            check_finite(&dl, "meta-loss gradient")?;
            g.mean_loss += loss * scale;

            let c0 = layout.common_offset();
            let go_c: Vec<f64> = dl[c0..c0 + layout.n_users]
                .iter()
                .map(|d| d * scale * cfg.step_scale[0])
                .collect();
            // Every inner increment of a block reaches the meta-loss
            // through the same block output, so they share `grad_out`.
            let samples: Vec<(&[f64], &[f64])> = rec.common.iter().map(|(x, p)| (&x[..], &p[..])).collect();
            self.nets.common.accumulate_shared_grad(&samples, &go_c, &mut g.common)?;
            for row in 0..layout.n_bs * layout.n_antennas {
                let samples: Vec<(&[f64], &[f64])> = rec
                    .precoder
                    .iter()
                    .filter(|(r, _, _)| *r == row)
                    .map(|(_, x, p)| (&x[..], &p[..]))
                    .collect();
                if samples.is_empty() {
                    continue;
                }
                let (n, i) = (row / layout.n_antennas, row % layout.n_antennas);
                let unit = budgets[n].sqrt() * cfg.step_scale[1] * scale;
                let mut go = vec![0.0; 2 * streams];
                let first = if scheme.uses_common() { 0 } else { 1 };
                for s in first..streams {
                    let j = layout.precoder_index(n, i, s);
                    go[2 * s] = dl[2 * j] * unit;
                    go[2 * s + 1] = dl[2 * j + 1] * unit;
                }
                self.nets.precoder.accumulate_shared_grad(&samples, &go, &mut g.precoder)?;
            }
            let r0 = layout.position_offset();
            let go_l: Vec<f64> = dl[r0..r0 + 2 * layout.n_users]
                .iter()
                .map(|d| d * lambda * cfg.step_scale[2] * scale)
                .collect();
            let samples: Vec<(&[f64], &[f64])> = rec.position.iter().map(|(x, p)| (&x[..], &p[..])).collect();
            self.nets.position.accumulate_shared_grad(&samples, &go_l, &mut g.position)?;

            let raw_rate =
                rate_terms(real, layout, &VarsView::from_flat(layout, &out.vars.to_flat()), scheme.access).sum_rate;
            let repaired = repair(real, &out.vars, scheme, &budgets, cfg.rate_threshold)?;
            let report = evaluate(real, &repaired, scheme.access, &constraints)?;
            if scheme.uses_common() && self.blocks.precoders {
                let alt = private_only(&repaired, &budgets);
                let alt_report = evaluate(real, &alt, scheme.access, &constraints)?;
                tracker.offer(alt, alt_report);
            }
            tracker.offer(repaired, report);
            trace.records.push(TraceRecord {
                epoch,
                outer,
                meta_loss: loss,
                sum_rate: raw_rate,
                best_so_far: tracker.best_feasible_rate(),
            });
            *latest = out.vars;
        }
        Ok(g)
    }
}

/// Epoch-averaged meta-loss and its parameter gradients, per network.
#[derive(Clone, Debug)]
pub struct EpochGradient {
    pub mean_loss: f64,
    pub precoder: Vec<f64>,
    pub common: Vec<f64>,
    pub position: Vec<f64>,
}

/// `run` with the networks and initial point drawn from `cfg.seed`.
pub fn run(real: &ChannelRealization, cfg: &MetaConfig, scheme: Scheme) -> Result<RunOutcome> {
    GmlOptimizer::new(real, cfg, scheme)?.run()
}
