use crate::channel::ChannelRealization;
use crate::math::{sum, CMatrix, Cx, Real};
use crate::rate::{rate_terms, Access, Layout, VarsView};

/// How constraint violations enter the meta-loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PenaltyMode {
    /// Weighted violation magnitudes, `ζ·max(0, violation)`.
    Hinge,
    /// Weighted violation counts, `ζ·#violated`; zero gradient.
    Binary,
}

impl std::str::FromStr for PenaltyMode {
    type Err = crate::error::CoreError;
    fn from_str(s: &str) -> crate::error::Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hinge" => Ok(PenaltyMode::Hinge),
            "binary" => Ok(PenaltyMode::Binary),
            _ => Err(crate::error::CoreError::config(
                "penalty_mode",
                format!("expected `hinge` or `binary`, got `{s}`"),
            )),
        }
    }
}

/// Penalty weights and the QoS threshold used by the meta-loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Penalties {
    pub mode: PenaltyMode,
    pub rate_threshold: f64,
    /// `ζ1`: QoS.
    pub qos: f64,
    /// `ζ2`: non-negative common portions.
    pub common_nonneg: f64,
    /// `ζ3`: common portions within the common rate.
    pub common_budget: f64,
    /// `ζ4`: antenna inside its region.
    pub region: f64,
}

fn indicator<S: Real>(x: S, violated: bool) -> S {
    x.lift(if violated { 1.0 } else { 0.0 })
}

/// `−Σ R_k` plus the four constraint penalties.
pub fn meta_loss_generic<S: Real>(
    real: &ChannelRealization,
    layout: Layout,
    view: &VarsView<S>,
    access: Access,
    pen: &Penalties,
) -> S {
    let terms = rate_terms(real, layout, view, access);
    let mut loss = -terms.sum_rate;
    let half = real.half_width();
    match pen.mode {
        PenaltyMode::Hinge => {
            let qos = sum(terms.user_rate.iter().map(|&r| (-r + pen.rate_threshold).relu()));
            loss = loss + qos * pen.qos;
            if access == Access::Rsma {
                let neg = sum(view.common.iter().map(|&c| (-c).relu()));
                let over = (sum(view.common.iter().copied()) - terms.common_min).relu();
                loss = loss + neg * pen.common_nonneg + over * pen.common_budget;
            }
            let region = sum(view.positions.iter().flat_map(|r| {
                r.iter()
                    .map(move |&x| (x - half).relu() + (-x - half).relu())
            }));
            loss + region * pen.region
        }
        PenaltyMode::Binary => {
            let qos = sum(terms
                .user_rate
                .iter()
                .map(|&r| indicator(r, pen.rate_threshold - r.value() > 0.0)));
            loss = loss + qos * pen.qos;
            if access == Access::Rsma {
                let neg = sum(view.common.iter().map(|&c| indicator(c, c.value() < 0.0)));
                let total: f64 = view.common.iter().map(|c| c.value()).sum();
                let over = indicator(loss, total > terms.common_min.value());
                loss = loss + neg * pen.common_nonneg + over * pen.common_budget;
            }
            let region = sum(view.positions.iter().map(|r| {
                indicator(r[0], r[0].value().abs() > half || r[1].value().abs() > half)
            }));
            loss + region * pen.region
        }
    }
}

/// Scales each BS's precoder onto its power budget when the budget is exceeded.
pub fn project_power_generic<S: Real>(layout: Layout, precoders: &mut [Cx<S>], budgets: &[f64]) {
    let per_bs = layout.n_antennas * layout.streams();
    for (n, block) in precoders.chunks_mut(per_bs).enumerate() {
        let tr = sum(block.iter().map(|z| z.norm_sqr()));
        if tr.value() > budgets[n] {
            let s = (tr.lift(budgets[n]) / tr).sqrt();
            for z in block.iter_mut() {
                *z = z.scale(s);
            }
        }
    }
}

/// `U(P_n)` for every BS: unchanged within budget, otherwise scaled onto it.
pub fn project_power(precoders: &[CMatrix], budgets: &[f64]) -> Vec<CMatrix> {
    precoders
        .iter()
        .zip(budgets)
        .map(|(p, &pm)| {
            let tr = p.frobenius_sq();
            let mut out = p.clone();
            if tr > pm {
                out.scale((pm / tr).sqrt());
            }
            out
        })
        .collect()
}
