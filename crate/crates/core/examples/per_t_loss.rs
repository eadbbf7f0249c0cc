// Per-timestep noise-prediction loss of a trained checkpoint.
fn main() {
    let args: Vec<String> = std::env::args().collect();
    let ckpt = &args[1];
    use skipstep::diffusion::{linear_beta_schedule, noise_loss_at};
    use skipstep::pipeline::config::load_config;
    use skipstep::pipeline::train::train_pair;
    let cfg = load_config("", &[]).unwrap();
    let model = skipstep::pipeline::checkpoint::load::<f32>(std::path::Path::new(ckpt)).unwrap();
    let sched = linear_beta_schedule(cfg.t_total).unwrap();
    for t in [0usize, 20, 50, 100, 200, 350, 500, 650, 800, 900, 970, 999] {
        let mut acc = 0.0;
        let k = 16;
        for i in 0..k {
            let (cond, x0) = train_pair::<f32>(&cfg, 100 + i).unwrap();
            let eps: Vec<f32> = skipstep::rng::normal_vec(
                &mut skipstep::rng::stream(7, &format!("pt/{t}/{i}")), x0.len());
            acc += noise_loss_at(&model, &sched, &x0, &cond, t, &eps).unwrap();
        }
        println!("t={t:>4}: loss {:.4}", acc / k as f64);
    }
}
