// Step-by-step trajectory statistics of one DDIM run, hand-rolled.
fn main() {
    let args: Vec<String> = std::env::args().collect();
    let ckpt = &args[1];
    use skipstep::diffusion::*;
    use skipstep::pipeline::config::load_config;
    use skipstep::pipeline::train::train_pair;
    use skipstep::schedule::uniform_schedule;
    let cfg = load_config("", &[]).unwrap();
    let model = skipstep::pipeline::checkpoint::load::<f32>(std::path::Path::new(ckpt)).unwrap();
    let sched = linear_beta_schedule(cfg.t_total).unwrap();
    let (cond, x0) = train_pair::<f32>(&cfg, 301).unwrap();
    let ts = uniform_schedule(50, cfg.t_total - 1).unwrap();
    let steps = ts.steps();
    let rms = |v: &[f32]| (v.iter().map(|x| (x*x) as f64).sum::<f64>() / v.len() as f64).sqrt();
    let mean = |v: &[f32]| v.iter().map(|x| *x as f64).sum::<f64>() / v.len() as f64;
    let mut x: Vec<f32> = skipstep::rng::normal_vec(&mut skipstep::rng::stream(9, "xT"), x0.len());
    println!("x0 rms {:.3} mean {:.3}; cond rms {:.3}", rms(&x0), mean(&x0), rms(&cond));
    for i in (0..steps.len()).rev() {
        let tau = steps[i];
        let eps = model.predict(&x, &cond, tau, 1000, None).unwrap();
        let abar = sched.alpha_bars[tau];
        let x0h: Vec<f32> = x.iter().zip(&eps).map(|(&xv, &e)| (xv - (1.0-abar).sqrt() as f32 * e) / (abar.sqrt() as f32)).collect();
        if i % 7 == 0 || i + 3 > steps.len() {
            println!("t={tau:>3}: x rms {:.3} mean {:+.3} | eps_hat rms {:.3} mean {:+.3} | x0_hat rms {:.3} mean {:+.3}",
                rms(&x), mean(&x), rms(&eps), mean(&eps), rms(&x0h), mean(&x0h));
        }
        if i == 0 { break; }
        let tp = steps[i-1];
        let ap = sched.alpha_bars[tp];
        x = x0h.iter().zip(&eps).map(|(&x0v, &e)| (ap.sqrt() as f32) * x0v + ((1.0-ap).sqrt() as f32) * e).collect();
    }
}
