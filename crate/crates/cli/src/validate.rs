use std::fs;
use std::path::Path;

use anyhow::{bail, Result};
use clap::ValueEnum;
use drift_replay::data::{synth_two_class, InteractionRecord};
use drift_replay::influence::{
    correlation_study, counterfactual_step, mbgd_step, one_step_loss_change_estimate,
    one_step_loss_change_oracle, param_delta_closed_form, StepQuery, StudyConfig,
};
use drift_replay::model::{ArchDescriptor, Backbone, Recommender, TwoLayerNet};
use drift_replay::nn::{train, LossKind, Model, Optimizer, ParamSelection, ParamSet, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, ValueEnum)]
pub enum Suite {
    /// Simulated counterfactual step against the closed-form parameter delta.
    ClosedForm,
    /// Sign agreement of the first-order loss-change estimate with the oracle.
    Estimator,
    /// Epoch-wise one-step estimates against leave-one-out retraining.
    Correlation,
}

pub fn run(suite: Suite, seed: u64, out: Option<&Path>) -> Result<()> {
    match suite {
        Suite::ClosedForm => closed_form(seed),
        Suite::Estimator => estimator(seed),
        Suite::Correlation => correlation(seed, out),
    }
}

fn closed_form(seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let backbones = [
        Backbone::WideDeep,
        Backbone::CrossNet,
        Backbone::BiInteractionFM,
    ];
    let mut worst = 0.0f64;
    for case in 0..300 {
        let head = if case % 2 == 0 {
            LossKind::SquaredError
        } else {
            LossKind::Logistic
        };
        let arch = ArchDescriptor {
            backbone: backbones[case % 3],
            embedding_dim: rng.random_range(2..=6),
            hidden: vec![rng.random_range(2..=8)],
            num_users: rng.random_range(3..=12),
            num_items: rng.random_range(3..=12),
            head,
            cross_depth: 2,
        };
        let model = Recommender::new(arch.clone())?;
        let params = model.init_params(rng.random());
        let b = rng.random_range(2..=32);
        let batch: Vec<_> = (0..b)
            .map(|t| {
                let rating = rng.random_range(1..=5) as f64;
                InteractionRecord::new(
                    rng.random_range(0..arch.num_users),
                    rng.random_range(0..arch.num_items),
                    rating,
                    t as i64,
                )
                .with_label(Some(u8::from(rating >= 4.0)))
            })
            .collect();
        let lr = 10f64.powf(rng.random_range(-4.0..=0.0));
        let q = StepQuery::new(&batch, rng.random_range(0..b), lr);
        let simulated = counterfactual_step(&model, &params, &q)?
            .diff(&mbgd_step(&model, &params, &batch, lr)?);
        let closed = param_delta_closed_form(&model, &params, &q)?;
        let layout = model.layout();
        worst = worst.max(relative_error(
            &simulated.to_dense(layout)?,
            &closed.to_dense(layout)?,
        ));
    }
    println!("closed-form: 300 cases, max relative error {worst:.3e}");
    if worst > 1e-9 {
        bail!("closed-form delta disagrees with the simulated step");
    }
    Ok(())
}

fn relative_error(a: &ParamSet, b: &ParamSet) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (id, _, _) in a.layout().groups() {
        for (x, y) in a.get(id).as_slice().iter().zip(b.get(id).as_slice()) {
            num += (x - y) * (x - y);
            den += y * y;
        }
    }
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

fn estimator(seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut agree, mut total) = (0, 0);
    for net in 0..20u64 {
        let data = synth_two_class(80, 5, 2.0, seed.wrapping_add(net))?;
        let model = TwoLayerNet::new(5, 8, LossKind::Logistic)?;
        let cfg = TrainConfig {
            lr: 0.1,
            batch_size: 16,
            epochs: 40,
            optimizer: Optimizer::Mbgd,
            seed: net,
        };
        let params = train(&model, model.init_params(net), &data, &cfg)?.params;
        for _ in 0..10 {
            let b = rng.random_range(4..=32);
            let start = rng.random_range(0..=data.len() - b);
            let batch = &data[start..start + b];
            let q = StepQuery::new(batch, rng.random_range(0..b), cfg.lr);
            let next = mbgd_step(&model, &params, batch, cfg.lr)?;
            let oracle = one_step_loss_change_oracle(&model, &data, &params, &q)?;
            let est = one_step_loss_change_estimate(
                &model,
                &data,
                &params,
                &next,
                &q,
                ParamSelection::Full,
            )?;
            total += 1;
            agree += usize::from(oracle.signum() == est.signum());
        }
    }
    println!(
        "estimator: sign agreement {agree}/{total} = {:.1}%",
        100.0 * agree as f64 / total as f64
    );
    Ok(())
}

fn correlation(seed: u64, out: Option<&Path>) -> Result<()> {
    let report = correlation_study(&StudyConfig {
        seed,
        ..StudyConfig::default()
    })?;
    let curve = report.epoch_vs_retrain();
    for (e, r) in curve.iter().enumerate() {
        println!("epoch {:>2}: pearson vs retrain {r:.3}", e + 1);
    }
    println!("unconverged retrains: {}", report.unconverged);
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        report.write_csv(&dir.join("influence.csv"))?;
        report.write_summary(&dir.join("influence_summary.json"))?;
    }
    Ok(())
}
