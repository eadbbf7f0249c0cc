// Trajectory statistics of a DDIM run + PSNR at several step counts.
fn main() {
    let args: Vec<String> = std::env::args().collect();
    let ckpt = &args[1];
    use skipstep::diffusion::*;
    use skipstep::pipeline::config::load_config;
    use skipstep::pipeline::train::train_pair;
    use skipstep::schedule::uniform_schedule;
    use skipstep::tasks::{mse, to_unit_range};
    let cfg = load_config("", &[]).unwrap();
    let model = skipstep::pipeline::checkpoint::load::<f32>(std::path::Path::new(ckpt)).unwrap();
    let sched = linear_beta_schedule(cfg.t_total).unwrap();
    for n in [25usize, 50, 100, 200, 500, 999] {
        let ts = uniform_schedule(n, cfg.t_total - 1).unwrap();
        let mut acc = 0.0; let k = 8;
        for i in 0..k {
            let (cond, x0) = train_pair::<f32>(&cfg, 300 + i).unwrap();
            let spec = SamplerSpec { eta: 0.0, guidance: 1.0, noise_seed: 40 + i as u64 };
            let mut st = SampleStats::default();
            let out = ddim_sample(&model, &sched, &cond, &ts, &spec, None, &mut st).unwrap();
            acc += mse(&to_unit_range(&out), &to_unit_range(&x0)).unwrap();
        }
        let m = acc / k as f64;
        println!("uniform {n:>4} steps: target MSE {m:.5} ({:.2} dB)", -10.0*m.log10());
    }
}
