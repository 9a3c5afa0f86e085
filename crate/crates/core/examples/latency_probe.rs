use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;
use taco_core::controller::FlatReference;
use taco_core::math::Vec3;
use taco_core::metrics::CostWeights;
use taco_core::predictor::{InputVariant, MlpModel};
use taco_core::spline::SampledTrajectory;
use taco_core::state::QuadState;
use taco_core::tuner::{optimize_gains, SearchConfig};
use taco_core::QuadParams;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = MlpModel::<f32>::init(InputVariant::Full, &mut rng).unwrap();
    let p = QuadParams::crazyflie();
    let traj = SampledTrajectory::from_refs(
        0.01,
        vec![FlatReference::stationary(Vec3::new(0.0, 0.0, 1.0)); 301],
    );
    let window = traj.window(0, 100).unwrap();
    let state = QuadState::hover_at(Vec3::new(0.0, 0.0, 1.0), p.hover_motor_speed());
    let w = CostWeights::default_weights();
    let cfg = SearchConfig::default();
    // warmup then median of 21
    let mut times = Vec::new();
    for i in 0..24 {
        let mut c = cfg.clone();
        c.seed = i;
        let t = Instant::now();
        let _ = optimize_gains(&model, &state, &window, &w, &c).unwrap();
        if i >= 3 { times.push(t.elapsed().as_secs_f64() * 1e3); }
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!("optimize_gains latency: median {:.1} ms, min {:.1}, max {:.1}", times[times.len()/2], times[0], times[times.len()-1]);
}
