//! SINRs, rates, and constraint checks for the rate-splitting and
//! space-division downlinks.
//!
//! Interference terms are summed per BS (non-coherently), while the
//! desired-signal terms add coherently across BSs. Common-stream decoding
//! treats every private stream as interference, including the user's own.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::ChannelRealization;
use crate::error::{CoreError, Result};
use crate::math::{hermitian_quadratic, inner_product, min_all, sum, CMatrix, Cx, Real};

/// Multiple-access scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Access {
    Rsma,
    Sdma,
}

/// Receive antenna type at the users.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Antenna {
    Movable,
    Fixed,
}

/// Access scheme plus antenna type: which variable blocks are optimized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Scheme {
    pub access: Access,
    pub antenna: Antenna,
}

impl Scheme {
    pub const RSMA_MA: Scheme = Scheme {
        access: Access::Rsma,
        antenna: Antenna::Movable,
    };
    pub const RSMA_FPA: Scheme = Scheme {
        access: Access::Rsma,
        antenna: Antenna::Fixed,
    };
    pub const SDMA_MA: Scheme = Scheme {
        access: Access::Sdma,
        antenna: Antenna::Movable,
    };
    pub const SDMA_FPA: Scheme = Scheme {
        access: Access::Sdma,
        antenna: Antenna::Fixed,
    };
    pub const ALL: [Scheme; 4] = [
        Scheme::RSMA_MA,
        Scheme::RSMA_FPA,
        Scheme::SDMA_MA,
        Scheme::SDMA_FPA,
    ];

    pub fn uses_common(&self) -> bool {
        self.access == Access::Rsma
    }

    pub fn moves_antennas(&self) -> bool {
        self.antenna == Antenna::Movable
    }

    pub fn name(&self) -> &'static str {
        match (self.access, self.antenna) {
            (Access::Rsma, Antenna::Movable) => "RSMA-MA",
            (Access::Rsma, Antenna::Fixed) => "RSMA-FPA",
            (Access::Sdma, Antenna::Movable) => "SDMA-MA",
            (Access::Sdma, Antenna::Fixed) => "SDMA-FPA",
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = CoreError;
    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| CoreError::config("kinds", format!("unknown scheme `{s}`")))
    }
}

/// Optimization variables: precoders, common-rate portions, antenna positions.
#[derive(Clone, Debug, PartialEq)]
pub struct Variables {
    /// One `I × (K+1)` matrix per BS; column 0 is the common precoder.
    pub precoders: Vec<CMatrix>,
    /// Common-rate portion per user (bps/Hz).
    pub common: Vec<f64>,
    /// Antenna position per user (m), relative to the region centre.
    pub positions: Vec<[f64; 2]>,
}

/// Offsets of each variable block inside the flat real layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub n_bs: usize,
    pub n_antennas: usize,
    pub n_users: usize,
}

impl Layout {
    pub fn of(real: &ChannelRealization) -> Self {
        Layout {
            n_bs: real.n_bs(),
            n_antennas: real.n_antennas(),
            n_users: real.n_users(),
        }
    }

    pub fn streams(&self) -> usize {
        self.n_users + 1
    }

    /// Complex precoder entries, ordered (BS, antenna, stream).
    pub fn n_precoder(&self) -> usize {
        self.n_bs * self.n_antennas * self.streams()
    }

    pub fn common_offset(&self) -> usize {
        2 * self.n_precoder()
    }

    pub fn position_offset(&self) -> usize {
        self.common_offset() + self.n_users
    }

    pub fn len(&self) -> usize {
        self.position_offset() + 2 * self.n_users
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn precoder_index(&self, n: usize, i: usize, stream: usize) -> usize {
        (n * self.n_antennas + i) * self.streams() + stream
    }
}

impl Variables {
    pub fn zeros(layout: Layout) -> Self {
        Variables {
            precoders: vec![CMatrix::zeros(layout.n_antennas, layout.streams()); layout.n_bs],
            common: vec![0.0; layout.n_users],
            positions: vec![[0.0, 0.0]; layout.n_users],
        }
    }

    /// I.i.d. CN(0,1) precoders scaled so every BS spends exactly its budget;
    /// zero common portions; antennas at the region centre.
    pub fn random_init<R: Rng>(
        layout: Layout,
        budgets: &[f64],
        access: Access,
        rng: &mut R,
    ) -> Self {
        let mut v = Variables::zeros(layout);
        for (n, p) in v.precoders.iter_mut().enumerate() {
            for i in 0..layout.n_antennas {
                for s in 0..layout.streams() {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    p.set(
                        i,
                        s,
                        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2,
                    );
                }
            }
            if access == Access::Sdma {
                for i in 0..layout.n_antennas {
                    p.set(i, 0, Complex64::new(0.0, 0.0));
                }
            }
            let tr = p.frobenius_sq();
            if tr > 0.0 {
                p.scale((budgets[n] / tr).sqrt());
            }
        }
        v
    }

    pub fn layout(&self) -> Layout {
        let n_users = self.common.len();
        Layout {
            n_bs: self.precoders.len(),
            n_antennas: self.precoders.first().map_or(0, CMatrix::rows),
            n_users,
        }
    }

    pub fn check_shape(&self, layout: Layout) -> Result<()> {
        let ok = self.precoders.len() == layout.n_bs
            && self
                .precoders
                .iter()
                .all(|p| p.rows() == layout.n_antennas && p.cols() == layout.streams())
            && self.common.len() == layout.n_users
            && self.positions.len() == layout.n_users;
        if ok {
            Ok(())
        } else {
            Err(CoreError::Shape(format!(
                "variables do not match {} BSs x {} antennas x {} users",
                layout.n_bs, layout.n_antennas, layout.n_users
            )))
        }
    }

    /// Flat real layout: precoders as (re, im) pairs, then portions, then positions.
    pub fn to_flat(&self) -> Vec<f64> {
        let layout = self.layout();
        let mut out = Vec::with_capacity(layout.len());
        for p in &self.precoders {
            for z in p.as_slice() {
                out.push(z.re);
                out.push(z.im);
            }
        }
        out.extend_from_slice(&self.common);
        for r in &self.positions {
            out.extend_from_slice(r);
        }
        out
    }

    pub fn from_flat(layout: Layout, flat: &[f64]) -> Result<Self> {
        if flat.len() != layout.len() {
            return Err(CoreError::Shape(format!(
                "flat vector has {} entries, layout needs {}",
                flat.len(),
                layout.len()
            )));
        }
        let mut v = Variables::zeros(layout);
        let per_bs = layout.n_antennas * layout.streams();
        for (n, p) in v.precoders.iter_mut().enumerate() {
            for (j, z) in p.as_mut_slice().iter_mut().enumerate() {
                let base = 2 * (n * per_bs + j);
                *z = Complex64::new(flat[base], flat[base + 1]);
            }
        }
        let c0 = layout.common_offset();
        v.common.copy_from_slice(&flat[c0..c0 + layout.n_users]);
        let r0 = layout.position_offset();
        for (k, r) in v.positions.iter_mut().enumerate() {
            *r = [flat[r0 + 2 * k], flat[r0 + 2 * k + 1]];
        }
        Ok(v)
    }

    /// `Tr(P_n P_nᴴ)` per BS.
    pub fn power(&self) -> Vec<f64> {
        self.precoders.iter().map(CMatrix::frobenius_sq).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|x| x.is_finite())
    }
}

/// Rate quantities over a generic scalar, for differentiation.
#[derive(Clone, Debug)]
pub struct RateTerms<S> {
    pub sinr_common: Vec<S>,
    pub sinr_private: Vec<S>,
    pub common_rate: Vec<S>,
    pub private_rate: Vec<S>,
    /// `min_k R_{c,k}`.
    pub common_min: S,
    pub user_rate: Vec<S>,
    pub sum_rate: S,
}

/// Variables expressed over a generic scalar, laid out as in [`Layout`].
pub struct VarsView<S> {
    pub precoders: Vec<Cx<S>>,
    pub common: Vec<S>,
    pub positions: Vec<[S; 2]>,
}

impl<S: Real> VarsView<S> {
    pub fn from_flat(layout: Layout, flat: &[S]) -> Self {
        debug_assert_eq!(flat.len(), layout.len());
        let np = layout.n_precoder();
        let precoders = (0..np)
            .map(|j| Cx::new(flat[2 * j], flat[2 * j + 1]))
            .collect();
        let c0 = layout.common_offset();
        let common = flat[c0..c0 + layout.n_users].to_vec();
        let r0 = layout.position_offset();
        let positions = (0..layout.n_users)
            .map(|k| [flat[r0 + 2 * k], flat[r0 + 2 * k + 1]])
            .collect();
        VarsView {
            precoders,
            common,
            positions,
        }
    }
}

/// Evaluates every rate term at `view`.
pub fn rate_terms<S: Real>(
    real: &ChannelRealization,
    layout: Layout,
    view: &VarsView<S>,
    access: Access,
) -> RateTerms<S> {
    let channels: Vec<Vec<Cx<S>>> = (0..layout.n_bs)
        .flat_map(|n| (0..layout.n_users).map(move |k| (n, k)))
        .map(|(n, k)| real.channel_generic(n, k, view.positions[k]))
        .collect();
    rate_terms_at(layout, &channels, real.noise_power(), view, access)
}

/// [`rate_terms`] for given channels `h_{n,k}` (indexed `n·K + k`); the
/// positions in `view` are ignored.
pub fn rate_terms_at<S: Real>(
    layout: Layout,
    channels: &[Vec<Cx<S>>],
    noise: f64,
    view: &VarsView<S>,
    access: Access,
) -> RateTerms<S> {
    let (nb, ni, nk) = (layout.n_bs, layout.n_antennas, layout.n_users);
    let mut sinr_common = Vec::with_capacity(nk);
    let mut sinr_private = Vec::with_capacity(nk);
    for k in 0..nk {
        // y[n][s] = h_{n,k}ᴴ p_{s,n}
        let mut y: Vec<Vec<Cx<S>>> = Vec::with_capacity(nb);
        for n in 0..nb {
            let h = &channels[n * nk + k];
            let row: Vec<Cx<S>> = (0..layout.streams())
                .map(|s| {
                    let col: Vec<Cx<S>> = (0..ni)
                        .map(|i| view.precoders[layout.precoder_index(n, i, s)])
                        .collect();
                    inner_product(h, &col)
                })
                .collect();
            y.push(row);
        }
        let coherent = |s: usize| {
            let mut acc = y[0][s];
            for row in y.iter().skip(1) {
                acc = acc + row[s];
            }
            acc.norm_sqr()
        };
        let interference = |skip: Option<usize>| {
            let terms = y.iter().flat_map(|row| {
                (1..=nk)
                    .filter(move |&s| Some(s) != skip)
                    .map(move |s| row[s].norm_sqr())
            });
            let mut it = terms.peekable();
            match it.peek() {
                Some(_) => sum(it) + noise,
                None => y[0][0].re.lift(noise),
            }
        };
        sinr_private.push(coherent(k + 1) / interference(Some(k + 1)));
        if access == Access::Rsma {
            sinr_common.push(coherent(0) / interference(None));
        }
    }
    let private_rate: Vec<S> = sinr_private.iter().map(|&x| (x + 1.0).log2()).collect();
    let zero = private_rate[0].lift(0.0);
    let (common_rate, common_min, user_rate) = match access {
        Access::Rsma => {
            let common_rate: Vec<S> = sinr_common.iter().map(|&x| (x + 1.0).log2()).collect();
            let common_min = min_all(common_rate.iter().copied());
            let user_rate = private_rate
                .iter()
                .zip(&view.common)
                .map(|(&rp, &c)| rp + c)
                .collect();
            (common_rate, common_min, user_rate)
        }
        Access::Sdma => {
            sinr_common = vec![zero; nk];
            (vec![zero; nk], zero, private_rate.clone())
        }
    };
    let sum_rate = sum(user_rate.iter().copied());
    RateTerms {
        sinr_common,
        sinr_private,
        common_rate,
        private_rate,
        common_min,
        user_rate,
        sum_rate,
    }
}

/// Signed violation of one constraint written as `lhs ≤ rhs`:
/// `magnitude = lhs − rhs`, so positive means violated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Violation {
    pub satisfied: bool,
    pub magnitude: f64,
}

impl Violation {
    fn new(magnitude: f64, tol: f64) -> Self {
        Violation {
            satisfied: magnitude <= tol,
            magnitude,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Feasibility {
    /// Per BS: `Tr(P_n P_nᴴ) − P_M^n`.
    pub power: Vec<Violation>,
    /// Per user: `R_th − R_k`.
    pub qos: Vec<Violation>,
    /// Per user: `−c_k`.
    pub common_nonneg: Vec<Violation>,
    /// `Σ c_k − R_c`.
    pub common_budget: Violation,
    /// Per user: largest coordinate overshoot `max(|x|, |y|) − A/2`.
    pub region: Vec<Violation>,
}

impl Feasibility {
    pub fn all_satisfied(&self) -> bool {
        self.power.iter().all(|v| v.satisfied)
            && self.qos.iter().all(|v| v.satisfied)
            && self.common_nonneg.iter().all(|v| v.satisfied)
            && self.common_budget.satisfied
            && self.region.iter().all(|v| v.satisfied)
    }

    /// Sum of positive violations; 0 when feasible.
    pub fn total_violation(&self) -> f64 {
        let pos = |v: &Violation| v.magnitude.max(0.0);
        self.power.iter().map(pos).sum::<f64>()
            + self.qos.iter().map(pos).sum::<f64>()
            + self.common_nonneg.iter().map(pos).sum::<f64>()
            + pos(&self.common_budget)
            + self.region.iter().map(pos).sum::<f64>()
    }
}

/// Problem constants that define feasibility.
#[derive(Clone, Debug, PartialEq)]
pub struct Constraints {
    /// Per-user QoS threshold (bps/Hz).
    pub rate_threshold: f64,
    /// Power budget per BS (W).
    pub power_budget: Vec<f64>,
}

/// Rates at a concrete point.
#[derive(Clone, Debug, PartialEq)]
pub struct RateReport {
    pub common_rate: Vec<f64>,
    pub private_rate: Vec<f64>,
    pub common: Vec<f64>,
    pub user_rate: Vec<f64>,
    /// `min_k R_{c,k}`; zero for SDMA.
    pub common_min: f64,
    pub sum_rate: f64,
    pub feasibility: Option<Feasibility>,
}

impl RateReport {
    pub fn is_feasible(&self) -> bool {
        self.feasibility.as_ref().is_some_and(Feasibility::all_satisfied)
    }
}

fn view_of(vars: &Variables) -> (Layout, VarsView<f64>) {
    let layout = vars.layout();
    let flat = vars.to_flat();
    (layout, VarsView::from_flat(layout, &flat))
}

fn checked_view(real: &ChannelRealization, vars: &Variables) -> Result<(Layout, VarsView<f64>)> {
    vars.check_shape(Layout::of(real))?;
    Ok(view_of(vars))
}

/// `Λ_{c,k}`.
pub fn common_sinr(real: &ChannelRealization, vars: &Variables, k: usize) -> Result<f64> {
    let (layout, view) = checked_view(real, vars)?;
    user_index(layout, k)?;
    Ok(rate_terms(real, layout, &view, Access::Rsma).sinr_common[k])
}

/// `Λ_{p,k}`.
pub fn private_sinr(real: &ChannelRealization, vars: &Variables, k: usize) -> Result<f64> {
    let (layout, view) = checked_view(real, vars)?;
    user_index(layout, k)?;
    Ok(rate_terms(real, layout, &view, Access::Sdma).sinr_private[k])
}

fn user_index(layout: Layout, k: usize) -> Result<()> {
    if k >= layout.n_users {
        return Err(CoreError::Shape(format!(
            "user {k} out of range for {} users",
            layout.n_users
        )));
    }
    Ok(())
}

fn report_from_terms(terms: RateTerms<f64>, common: Vec<f64>) -> RateReport {
    RateReport {
        common_rate: terms.common_rate,
        private_rate: terms.private_rate,
        common,
        user_rate: terms.user_rate,
        common_min: terms.common_min,
        sum_rate: terms.sum_rate,
        feasibility: None,
    }
}

/// RSMA rates at `vars`.
pub fn rates(real: &ChannelRealization, vars: &Variables) -> Result<RateReport> {
    let (layout, view) = checked_view(real, vars)?;
    let terms = rate_terms(real, layout, &view, Access::Rsma);
    Ok(report_from_terms(terms, vars.common.clone()))
}

/// Rates for either scheme, plus the feasibility report.
pub fn evaluate(
    real: &ChannelRealization,
    vars: &Variables,
    access: Access,
    constraints: &Constraints,
) -> Result<RateReport> {
    let mut report = match access {
        Access::Rsma => rates(real, vars)?,
        Access::Sdma => sdma_rates(real, vars)?,
    };
    report.feasibility = Some(feasibility_of(real, vars, &report, constraints)?);
    Ok(report)
}

/// Constraint check at `vars`, using RSMA rates.
pub fn feasibility(
    real: &ChannelRealization,
    vars: &Variables,
    rate_threshold: f64,
    power_budget: &[f64],
) -> Result<Feasibility> {
    let report = rates(real, vars)?;
    feasibility_of(
        real,
        vars,
        &report,
        &Constraints {
            rate_threshold,
            power_budget: power_budget.to_vec(),
        },
    )
}

/// Relative tolerance on the power constraint.
pub const POWER_TOL: f64 = 1e-9;

fn feasibility_of(
    real: &ChannelRealization,
    vars: &Variables,
    report: &RateReport,
    constraints: &Constraints,
) -> Result<Feasibility> {
    if constraints.power_budget.len() != vars.precoders.len() {
        return Err(CoreError::Shape(format!(
            "{} power budgets for {} BSs",
            constraints.power_budget.len(),
            vars.precoders.len()
        )));
    }
    let half = real.half_width();
    let power = vars
        .power()
        .iter()
        .zip(&constraints.power_budget)
        .map(|(&tr, &pm)| Violation::new(tr - pm, POWER_TOL * pm))
        .collect();
    let qos = report
        .user_rate
        .iter()
        .map(|&r| Violation::new(constraints.rate_threshold - r, 1e-12))
        .collect();
    let common_nonneg = vars.common.iter().map(|&c| Violation::new(-c, 0.0)).collect();
    let common_budget = Violation::new(
        vars.common.iter().sum::<f64>() - report.common_min,
        1e-12 * (1.0 + report.common_min.abs()),
    );
    let region = vars
        .positions
        .iter()
        .map(|r| Violation::new(r[0].abs().max(r[1].abs()) - half, 1e-15))
        .collect();
    Ok(Feasibility {
        power,
        qos,
        common_nonneg,
        common_budget,
        region,
    })
}

/// SDMA rates: private streams only, common column and portions ignored.
///
/// Evaluated directly from channel columns rather than through
/// [`rate_terms`], so the two routes cross-check each other.
pub fn sdma_rates(real: &ChannelRealization, vars: &Variables) -> Result<RateReport> {
    let layout = Layout::of(real);
    vars.check_shape(layout)?;
    let (nb, nk) = (layout.n_bs, layout.n_users);
    let column = |n: usize, s: usize| {
        let p = &vars.precoders[n];
        CMatrix::column((0..layout.n_antennas).map(|i| p.get(i, s)).collect())
    };
    let mut private_rate = Vec::with_capacity(nk);
    for k in 0..nk {
        let hs: Vec<CMatrix> = (0..nb)
            .map(|n| crate::channel::channel_vector(real, n, k, vars.positions[k]))
            .collect::<Result<_>>()?;
        let mut desired = Complex64::new(0.0, 0.0);
        for (n, h) in hs.iter().enumerate() {
            let p = column(n, k + 1);
            for i in 0..layout.n_antennas {
                desired += h.get(i, 0).conj() * p.get(i, 0);
            }
        }
        let mut interference = 0.0;
        for (n, h) in hs.iter().enumerate() {
            for j in (0..nk).filter(|&j| j != k) {
                interference += hermitian_quadratic(h, &column(n, j + 1))?;
            }
        }
        let sinr = desired.norm_sqr() / (interference + real.noise_power());
        private_rate.push((1.0 + sinr).log2());
    }
    Ok(RateReport {
        common_rate: vec![0.0; nk],
        user_rate: private_rate.clone(),
        sum_rate: private_rate.iter().sum(),
        private_rate,
        common: vec![0.0; nk],
        common_min: 0.0,
        feasibility: None,
    })
}
