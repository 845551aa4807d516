fn main() {
    use banditlab::agents::{Agent, AgentConfig, AgentKind};
    use banditlab::env::{DatasetBandit, Env, Schema};
    use rand::SeedableRng;
    let kind_name = std::env::args().nth(1).unwrap_or_else(|| "lim2".into());
    let kind = AgentKind::from_name(&kind_name).expect("unknown agent kind");
    let seed: u64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let schema = Schema::load(std::path::Path::new("/tmp/acc/data/statlog_like.schema")).unwrap();
    let mut ds =
        DatasetBandit::load_csv(std::path::Path::new("/tmp/acc/data/statlog_like.csv"), &schema)
            .unwrap();
    ds.shuffle(seed);
    let mut env = Env::Dataset(ds);
    let mut arng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let mut erng = rand_chacha::ChaCha12Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut agent =
        Agent::new(AgentConfig::new(kind), env.dim(), env.num_arms(), &mut arng).unwrap();
    for t in 1..=5000u32 {
        let step = env.next(&mut erng).unwrap();
        let arm = agent.choose(&step.context, &mut arng).unwrap();
        agent.update(&step.context, arm, step.rewards[arm], &mut arng).unwrap();
        if t % 1000 == 0 {
            // peek ahead 300 rows without advancing the real stream
            let mut env2 = env.clone();
            let mut erng2 = erng.clone();
            let net = agent.net().unwrap();
            let n = agent.num_arms();
            let (mut acc_net, mut acc_head, mut acc_mu, mut acc_ts) = (0.0, 0.0, 0.0, 0.0);
            let mut ts_rng = rand_chacha::ChaCha12Rng::seed_from_u64(777);
            for _ in 0..300 {
                let s = env2.next(&mut erng2).unwrap();
                let phi = net.features(&s.context).unwrap();
                let (out, _) = net.forward(&s.context).unwrap();
                let best = s.best_arm();
                let pick = |scores: Vec<f64>| {
                    let mut bi = 0;
                    for i in 1..n {
                        if scores[i] > scores[bi] {
                            bi = i;
                        }
                    }
                    bi
                };
                let net_pick = pick((0..n).map(|i| out.as_slice()[i]).collect());
                let head_pick = pick(
                    (0..n).map(|i| net.last_layer_weights(i).unwrap().dot(&phi)).collect(),
                );
                let mu_pick = pick(
                    (0..n)
                        .map(|i| {
                            agent.posterior(i).unwrap().mu_hat().unwrap().dot(&phi)
                        })
                        .collect(),
                );
                let mut agent2 = agent.clone();
                let ts_pick = agent2.choose(&s.context, &mut ts_rng).unwrap();
                if ts_pick == best {
                    acc_ts += 1.0;
                }
                if net_pick == best {
                    acc_net += 1.0;
                }
                if head_pick == best {
                    acc_head += 1.0;
                }
                if mu_pick == best {
                    acc_mu += 1.0;
                }
            }
            let b2: Vec<f64> = (0..n).map(|i| net.output_bias(i).unwrap()).collect();
            let nvar: Vec<f64> = (0..n)
                .map(|i| {
                    let (a, b) = agent.posterior(i).unwrap().noise_params().unwrap();
                    (b / (a - 1.0) * 1000.0).round() / 1000.0
                })
                .collect();
            println!(
                "t={t} acc_ts={:.3} acc_net={:.3} acc_head={:.3} acc_mu={:.3} b2={:?} E[nu2]={:?}",
                acc_ts / 300.0,
                acc_net / 300.0,
                acc_head / 300.0,
                acc_mu / 300.0,
                b2.iter().map(|x| (x * 100.0).round() / 100.0).collect::<Vec<_>>(),
                nvar
            );
        }
    }
}
