// Distance-to-reference landscape over gamma for a trained checkpoint.
fn main() {
    let args: Vec<String> = std::env::args().collect();
    let ckpt = &args[1];
    let task = if args.len() > 2 { args[2].clone() } else { "restore".to_string() };
    let n: usize = if args.len() > 3 { args[3].parse().unwrap() } else { 5 };
    use skipstep::pipeline::config::load_config;
    use skipstep::search::{DiffusionGammaSampler, GammaSampler, TsSearchConfig};
    let mut cfg = load_config(&format!("task = {task}\n"), &[]).unwrap();
    cfg.ts_n = n;
    cfg.ts_batch = 32;
    let model = skipstep::pipeline::checkpoint::load::<f32>(std::path::Path::new(ckpt)).unwrap();
    let noise = skipstep::diffusion::linear_beta_schedule(cfg.t_total).unwrap();
    let items = skipstep::pipeline::search_items(&cfg, "tssearch", cfg.ts_batch).unwrap();
    let mut conds = Vec::new();
    let mut seeds = Vec::new();
    for (i, idx) in items.iter().enumerate() {
        let (c, _) = skipstep::pipeline::train::train_pair::<f32>(&cfg, *idx).unwrap();
        conds.push(c);
        seeds.push(skipstep::rng::derive(cfg.seed_noise(), &format!("tssearch/xT/{i}")));
    }
    let ts_cfg = TsSearchConfig { n, batch: cfg.ts_batch, alpha: cfg.ts_alpha(), t_max: cfg.t_total - 1, ..TsSearchConfig::default() };
    let mut targets = Vec::new();
    for idx in items.iter() {
        let (_, t) = skipstep::pipeline::train::train_pair::<f32>(&cfg, *idx).unwrap();
        targets.push(skipstep::tasks::to_unit_range(&t));
    }
    let mut sampler = DiffusionGammaSampler::new(&model, &noise, conds, seeds, ts_cfg).unwrap();
    let reference = sampler.reference().unwrap();
    let tgt_mse = sampler.distance(&targets, &reference);
    println!("reference vs target: {:.6} ({:.2} dB)", tgt_mse, -10.0*tgt_mse.log10());
    println!("task {task} n={n}: gamma -> batch MSE to 50-step reference (PSNR dB)");
    for gamma in [0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.35, 1.5, 1.7, 1.9, 2.2, 2.5] {
        let out = sampler.sample(gamma).unwrap();
        let d = sampler.distance(&reference, &out);
        let dt = sampler.distance(&targets, &out);
        println!("  {gamma:>5}: ref {d:.6} ({:.2} dB)   tgt {dt:.6} ({:.2} dB)", -10.0 * d.log10(), -10.0*dt.log10());
    }
}
