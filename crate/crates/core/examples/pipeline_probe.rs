// End-to-end probe: dataset -> training -> rank correlation -> small eval.
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;
use taco_core::controller::Gains;
use taco_core::datagen::{generate_dataset, DatagenConfig};
use taco_core::eval::{run_method, suite_trajectories, Method, Models, Suite};
use taco_core::metrics::{ground_truth_cost, CostWeights};
use taco_core::predictor::{encode, HORIZON_STEPS};
use taco_core::spline::{sample_trajectory, TrajectoryConfig, TrajectoryFamily};
use taco_core::state::QuadState;
use taco_core::train::{spearman, train, TrainConfig};
use taco_core::tuner::SearchConfig;
use taco_core::QuadParams;

fn main() {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(30000);
    let epochs: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(15);
    let params = QuadParams::crazyflie();
    let w = CostWeights::default_weights();

    let t0 = Instant::now();
    let cfg = DatagenConfig { count: n, seed: 1, ..DatagenConfig::default() };
    let (data, stats) = generate_dataset(&cfg, &params).unwrap();
    println!("datagen: {} pts in {:.1}s, {} crashes ({:.1}%), {} resamples",
        data.len(), stats.wall_seconds, stats.crashes,
        100.0 * stats.crashes as f64 / n as f64, stats.resamples);

    let tcfg = TrainConfig { epochs, seed: 2, ..TrainConfig::default() };
    let (model, report) = train(&data, &tcfg).unwrap();
    println!("train: {:.1}s, best val {:.4} @ epoch {}, val_mae {:?}",
        report.wall_seconds, report.val_losses[report.best_epoch], report.best_epoch,
        report.val_mae.map(|v| (v * 1000.0).round() / 1000.0));

    // rank correlation over random contexts
    let mut rho_sum = 0.0;
    let n_ctx = 12;
    let tj_cfg = TrajectoryConfig::default();
    for ctx in 0..n_ctx {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + ctx);
        let family = TrajectoryFamily::TRAINING[rng.random_range(0..4)];
        let traj = sample_trajectory(family, &tj_cfg, &mut rng).unwrap();
        let dense = traj.sample_dense(0.01, HORIZON_STEPS);
        let start = rng.random_range(0..=dense.steps());
        let window = dense.window(start, HORIZON_STEPS).unwrap();
        let r0 = window.reference(0);
        let mut state = QuadState::hover_at(r0.pos, params.hover_motor_speed());
        state.vel = r0.vel;
        let (lo, hi) = Gains::default_bounds();
        let (lo, hi) = (lo.to_array(), hi.to_array());
        let mut preds = Vec::new();
        let mut truths = Vec::new();
        for _ in 0..96 {
            let g: [f64; 8] = std::array::from_fn(|i| rng.random_range(lo[i]..hi[i]));
            let gains = Gains::from_array(g);
            let x = encode(&gains, &state, &window).unwrap();
            let p = model.predict(&x).unwrap();
            preds.push(p.iter().zip(&w.0).map(|(a, b)| a * b).sum::<f64>());
            truths.push(ground_truth_cost(&state, &gains, &window, &params, &w).0);
        }
        let rho = spearman(&preds, &truths);
        rho_sum += rho;
        if ctx < 4 { println!("  ctx {ctx}: spearman {rho:.3}"); }
    }
    println!("mean spearman over {n_ctx} contexts: {:.3}", rho_sum / n_ctx as f64);

    // small taco vs nominal comparison
    let trajs = suite_trajectories(Suite::MinSnap, 6, 77).unwrap();
    let models = Models { full: Some(&model), no_traj: None };
    let scfg = SearchConfig::default();
    let nominal = run_method(Method::Nominal, &models, &trajs, &params, &w, &scfg, &scfg, 50, 0.01).unwrap();
    let taco = run_method(Method::Taco, &models, &trajs, &params, &w, &scfg, &scfg, 50, 0.01).unwrap();
    println!("nominal: mean {:.3} m ({} crashes)", nominal.mean_error, nominal.crashes);
    println!("taco:    mean {:.3} m ({} crashes), opt {:.1} ms/call", taco.mean_error, taco.crashes, taco.mean_optimize_ms);
    println!("total {:.1}s", t0.elapsed().as_secs_f64());
}
