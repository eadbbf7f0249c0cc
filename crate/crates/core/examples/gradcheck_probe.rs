// quick probe: full fast-profile gradcheck at several depths
fn main() {
    use skipstep::denoiser::{DenoiserModel, UNetConfig};
    use skipstep::diffusion::{linear_beta_schedule, UNetLossFragment};
    use skipstep::numerics::grad_check;
    let cfg = UNetConfig {
        image_size: 16, in_channels: 1, cond_channels: 1, out_channels: 1,
        base_channels: 8, channel_mults: vec![1,2,4,8], blocks_per_level: 2, time_embed_dim: 32,
    };
    let sched = linear_beta_schedule(1000).unwrap();
    for depth in [9usize, 7, 4, 1] {
        let mut model = DenoiserModel::<f64>::build(cfg.clone(), 11).unwrap();
        model.set_active_depth(depth).unwrap();
        let mut frag = UNetLossFragment::seeded(model, sched.clone(), 5);
        let t0 = std::time::Instant::now();
        let report = grad_check(&mut frag, 32, 1e-5, 99).unwrap();
        println!("depth {depth}: max rel err {:.3e} over {} probes ({:?}) in {:?}",
            report.max_rel_err, report.probed, report.worst, t0.elapsed());
    }
}
