fn main() {
    use banditlab::agents::{Agent, AgentConfig, AgentKind};
    use banditlab::env::{DatasetBandit, Env, Schema};
    use rand::SeedableRng;
    let kind_name = std::env::args().nth(1).unwrap_or_else(|| "lim2".into());
    let seed: u64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let horizon: u32 = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(5000);
    let kind = AgentKind::from_name(&kind_name).expect("unknown agent kind");
    let capacity: usize = std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(100);
    let lr_decay: f64 = std::env::args().nth(5).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let base_lr: f64 = std::env::args().nth(6).and_then(|s| s.parse().ok()).unwrap_or(0.01);
    let schema = Schema::load(std::path::Path::new("/tmp/acc/data/statlog_like.schema")).unwrap();
    let mut ds =
        DatasetBandit::load_csv(std::path::Path::new("/tmp/acc/data/statlog_like.csv"), &schema)
            .unwrap();
    ds.shuffle(seed);
    let mut env = Env::Dataset(ds);
    let mut arng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let mut erng = rand_chacha::ChaCha12Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut config = AgentConfig::new(kind);
    config.capacity_per_arm = capacity;
    config.lr_decay = lr_decay;
    config.base_lr = base_lr;
    let mut agent = Agent::new(config, env.dim(), env.num_arms(), &mut arng).unwrap();
    let mut total = 0.0;
    let mut window = 0.0;
    print!("{kind_name} seed={seed} rates:");
    for t in 1..=horizon {
        let step = env.next(&mut erng).unwrap();
        let arm = agent.choose(&step.context, &mut arng).unwrap();
        total += step.rewards[arm];
        window += step.rewards[arm];
        if let Err(e) = agent.update(&step.context, arm, step.rewards[arm], &mut arng) {
            println!("t={t} UPDATE FAILED: {e}");
            break;
        }
        if t % 500 == 0 {
            print!(" {:.3}", window / 500.0);
            window = 0.0;
        }
    }
    println!("  total={total}");
}
