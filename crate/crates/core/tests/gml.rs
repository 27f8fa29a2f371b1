use comprsma::baselines::run_benchmark;
use comprsma::channel::{sample_scenario, ChannelRealization, ScenarioParams};
use comprsma::gml::{inner_cycle, run, Blocks, GmlOptimizer, MetaConfig, Nets};
use comprsma::rate::{evaluate, Scheme};

fn micro(seed: u64) -> ChannelRealization {
    let p = ScenarioParams {
        n_bs: 1,
        n_antennas: 1,
        n_users: 1,
        ..ScenarioParams::default()
    };
    sample_scenario(&p, seed).unwrap()
}

fn small(seed: u64) -> ChannelRealization {
    let p = ScenarioParams {
        n_bs: 2,
        n_antennas: 2,
        n_users: 2,
        ..ScenarioParams::default()
    };
    sample_scenario(&p, seed).unwrap()
}

fn micro_cfg() -> MetaConfig {
    MetaConfig {
        inner_iters: 1,
        outer_iters: 1,
        epochs: 1,
        hidden_precoder: 4,
        hidden_common: 4,
        hidden_position: 4,
        step_scale: [0.3, 0.05, 0.1],
        ..MetaConfig::default()
    }
}

fn quick_cfg(seed: u64) -> MetaConfig {
    MetaConfig {
        inner_iters: 2,
        outer_iters: 3,
        epochs: 15,
        hidden_precoder: 32,
        hidden_common: 16,
        hidden_position: 32,
        seed,
        ..MetaConfig::default()
    }
}

enum Which {
    Precoder,
    Common,
    Position,
}

fn net_mut<'a>(n: &'a mut Nets, w: &Which) -> &'a mut [f64] {
    match w {
        Which::Precoder => n.precoder.params_mut(),
        Which::Common => n.common.params_mut(),
        Which::Position => n.position.params_mut(),
    }
}

/// ‖g − g_fd‖ / ‖g_fd‖ for one network's parameters.
fn epoch_fd_error(real: &ChannelRealization, cfg: &MetaConfig, scheme: Scheme, which: Which) -> f64 {
    // Random initial precoders sit exactly on the budget, where the
    // projection has a kink; start inside it instead.
    let mut init = GmlOptimizer::new(real, cfg, scheme).unwrap().initial;
    init.precoders.iter_mut().for_each(|p| p.scale(0.6));
    let fresh = |nets: Option<Nets>| {
        let o = GmlOptimizer::new(real, cfg, scheme).unwrap().with_initial(init.clone()).unwrap();
        match nets {
            Some(n) => o.with_nets(n),
            None => o,
        }
    };
    let opt = fresh(None);
    let g = opt.epoch_gradient().unwrap();
    let analytic = match which {
        Which::Precoder => g.precoder.clone(),
        Which::Common => g.common.clone(),
        Which::Position => g.position.clone(),
    };
    let loss_at = |nets: Nets| fresh(Some(nets)).epoch_gradient().unwrap().mean_loss;
    let h = 1e-6;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..analytic.len() {
        let mut up = opt.nets.clone();
        net_mut(&mut up, &which)[i] += h;
        let mut dn = opt.nets.clone();
        net_mut(&mut dn, &which)[i] -= h;
        let fd = (loss_at(up) - loss_at(dn)) / (2.0 * h);
        num += (analytic[i] - fd).powi(2);
        den += fd * fd;
    }
    assert!(den > 0.0, "gradient vanished");
    (num / den).sqrt()
}

// With one outer and one inner iteration every network input is independent
// of the parameters being perturbed, so the first-order epoch gradient is
// exact. The precoder network is checked with fixed antennas because the
// position gradient depends on the updated precoders.
#[test]
fn epoch_gradient_matches_finite_differences() {
    for seed in 0..3 {
        let real = micro(seed);
        let cfg = MetaConfig {
            seed,
            ..micro_cfg()
        };
        let e = epoch_fd_error(&real, &cfg, Scheme::RSMA_FPA, Which::Precoder);
        assert!(e < 1e-3, "precoder seed {seed}: {e}");
        let e = epoch_fd_error(&real, &cfg, Scheme::RSMA_MA, Which::Common);
        assert!(e < 1e-3, "common seed {seed}: {e}");
        let e = epoch_fd_error(&real, &cfg, Scheme::RSMA_MA, Which::Position);
        assert!(e < 1e-3, "position seed {seed}: {e}");
    }
}

#[test]
fn zero_inner_iterations_return_the_initial_point() {
    let real = small(1);
    let cfg = MetaConfig {
        inner_iters: 0,
        outer_iters: 1,
        epochs: 1,
        ..quick_cfg(4)
    };
    let opt = GmlOptimizer::new(&real, &cfg, Scheme::SDMA_FPA).unwrap();
    let init = opt.initial.clone();
    let out = opt.run().unwrap();
    let expected = evaluate(&real, &init, comprsma::rate::Access::Sdma, &cfg.constraints(2)).unwrap();
    assert!((out.sum_rate() - expected.sum_rate).abs() < 1e-12);
}

#[test]
fn inner_cycle_with_no_iterations_is_identity() {
    let real = small(2);
    let cfg = MetaConfig {
        inner_iters: 0,
        ..quick_cfg(2)
    };
    let opt = GmlOptimizer::new(&real, &cfg, Scheme::RSMA_MA).unwrap();
    let out = inner_cycle(&real, &opt.initial, &opt.initial, &opt.nets, &cfg, Scheme::RSMA_MA).unwrap();
    assert_eq!(out.vars, opt.initial);
}

#[test]
fn tracked_best_never_decreases() {
    for seed in 0..3 {
        let real = small(seed);
        let out = run(&real, &quick_cfg(seed), Scheme::RSMA_MA).unwrap();
        let curve = out.trace.best_curve();
        assert_eq!(curve.len(), 15 * 3);
        assert!(curve.windows(2).all(|w| w[1] >= w[0]));
        if out.feasible {
            assert_eq!(*curve.last().unwrap(), out.sum_rate());
        }
    }
}

#[test]
fn frozen_blocks_stay_frozen() {
    let real = small(3);
    let cfg = quick_cfg(3);
    let out = run_benchmark(&real, Scheme::SDMA_FPA, &cfg).unwrap();
    assert!(out.vars.common.iter().all(|&c| c == 0.0));
    assert!(out.vars.positions.iter().all(|r| *r == [0.0, 0.0]));
    for p in &out.vars.precoders {
        assert!((0..p.rows()).all(|i| p.get(i, 0).norm() == 0.0));
    }
    let out = run_benchmark(&real, Scheme::RSMA_FPA, &cfg).unwrap();
    assert!(out.vars.positions.iter().all(|r| *r == [0.0, 0.0]));
}

#[test]
fn benchmark_rsma_ma_is_the_optimizer() {
    let real = small(5);
    let cfg = quick_cfg(5);
    let a = run_benchmark(&real, Scheme::RSMA_MA, &cfg).unwrap();
    let b = run(&real, &cfg, Scheme::RSMA_MA).unwrap();
    assert_eq!(a.vars, b.vars);
    assert_eq!(a.trace.to_csv(), b.trace.to_csv());
}

#[test]
fn runs_are_reproducible() {
    let real = small(6);
    let cfg = quick_cfg(6);
    let a = run(&real, &cfg, Scheme::SDMA_MA).unwrap();
    let b = run(&real, &cfg, Scheme::SDMA_MA).unwrap();
    assert_eq!(a.vars, b.vars);
    assert_eq!(a.trace.to_csv(), b.trace.to_csv());
}

#[test]
fn reported_solutions_respect_the_budget() {
    for seed in 0..4 {
        let real = small(seed);
        let cfg = quick_cfg(seed);
        for kind in Scheme::ALL {
            let out = run(&real, &cfg, kind).unwrap();
            for p in &out.vars.precoders {
                assert!(p.frobenius_sq() <= cfg.power_budget * (1.0 + 1e-9));
            }
            let half = real.half_width();
            assert!(out.vars.positions.iter().flatten().all(|x| x.abs() <= half));
            assert!(out.vars.common.iter().all(|&c| c >= 0.0));
        }
    }
}

#[test]
fn positions_only_keeps_precoders() {
    let real = small(7);
    let cfg = quick_cfg(7);
    let opt = GmlOptimizer::new(&real, &cfg, Scheme::RSMA_MA)
        .unwrap()
        .with_blocks(Blocks::positions_only(Scheme::RSMA_MA));
    let init = opt.initial.clone();
    let out = opt.run().unwrap();
    // only the reporting projection touches them, at rounding level
    for (a, b) in out.vars.precoders.iter().zip(&init.precoders) {
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).norm() < 1e-12);
        }
    }
}

#[test]
fn nets_with_zero_weights_do_not_move() {
    let real = small(8);
    let cfg = quick_cfg(8);
    let opt = GmlOptimizer::new(&real, &cfg, Scheme::RSMA_MA).unwrap().with_nets(Nets::zeros(2, &cfg));
    let out = inner_cycle(&real, &opt.initial, &opt.initial, &opt.nets, &cfg, Scheme::RSMA_MA).unwrap();
    assert_eq!(out.vars.positions, opt.initial.positions);
}
