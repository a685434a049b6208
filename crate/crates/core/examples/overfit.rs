//! Train the desk preset on a handful of synthetic clips and report metrics.
//!
//! cargo run --release --example overfit -- [steps] [clips]

use gatedap::data::{generate_dataset, SceneSpec};
use gatedap::evaluate::evaluate;
use gatedap::metrics::MetricsConfig;
use gatedap::model::{init_params, ForwardOptions, ModelConfig};
use gatedap::optim::AdamState;
use gatedap::tensor::NormMode;
use gatedap::train::{prepare, train, TrainConfig};

fn main() -> gatedap::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let steps = args.first().copied().unwrap_or(2000);
    let clips = args.get(1).copied().unwrap_or(8);

    let model = ModelConfig::desk();
    let samples = generate_dataset(&SceneSpec::default(), clips)?;
    let data = prepare(&samples, &model)?;
    let mut store = init_params(&model, 0)?;
    println!("{} parameters", store.num_scalars());
    let env = |k: &str, d: f64| std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d);
    let mut cfg = TrainConfig {
        steps,
        log_every: 50,
        ..TrainConfig::default()
    };
    cfg.loss.alpha = env("ALPHA", cfg.loss.alpha);
    cfg.loss.beta = env("BETA", cfg.loss.beta);
    cfg.optimizer.learning_rate = env("LR", cfg.optimizer.learning_rate);
    let mut adam = AdamState::new(cfg.optimizer);
    let start = std::time::Instant::now();
    let mut done = 0;
    while done < steps {
        let chunk = TrainConfig {
            steps: (done + 250).min(steps),
            ..cfg.clone()
        };
        train(&data, &model, &mut store, &mut adam, &chunk, |_, _, _| Ok(()))?;
        done = chunk.steps;
        for (label, norm) in [("train-norm", NormMode::Train), ("eval-norm", NormMode::Eval)] {
            let opts = ForwardOptions {
                norm,
                suppressed: Vec::new(),
            };
            let ev = evaluate(&samples, &model, &store, &MetricsConfig::default(), &opts, 1)?;
            let a = ev.aggregate;
            println!(
                "step {done} {label}: kld {:.4} cc {:.4} sim {:.4} nss {:?} ({:.1}s)",
                a.kld,
                a.cc,
                a.sim,
                a.nss,
                start.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
