//! covot train: two-stage alignment training on a generated scene, with
//! an optional β=0 ablation twin sharing the same init.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use covot::io::write_features_text;
use covot::scene::generate_scene;
use covot::sinkhorn::SinkhornConfig;
use covot::trainer::{train, AlignmentModel, HistoryRow, TrainConfig, TrainOutcome};
use serde::Serialize;

use crate::config::{ensure_out_dir, load_base, write_summary, TrainCliConfig};
use crate::TrainArgs;

#[derive(Serialize)]
struct ArmResults {
    final_ce: f64,
    final_ot_distance: f64,
    final_miou: f64,
}

#[derive(Serialize)]
struct TrainResults {
    steps: usize,
    guided: ArmResults,
    #[serde(skip_serializing_if = "Option::is_none")]
    ablation: Option<ArmResults>,
}

pub fn run(args: TrainArgs) -> Result<i32> {
    let mut cfg: TrainCliConfig = load_base(args.common.config.as_deref())?;
    if let Some(v) = args.height {
        cfg.height = v;
    }
    if let Some(v) = args.width {
        cfg.width = v;
    }
    if let Some(v) = args.classes {
        cfg.classes = v;
    }
    if let Some(v) = args.noise_sigma {
        cfg.noise_sigma = v;
    }
    if let Some(v) = args.dim {
        cfg.dim = v;
    }
    if let Some(v) = args.tau {
        cfg.tau = v;
    }
    if let Some(v) = args.beta {
        cfg.beta = v;
    }
    if let Some(v) = args.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.outer_steps {
        cfg.outer_steps = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.init_sigma {
        cfg.init_sigma = v;
    }
    if let Some(v) = args.refresh_every {
        cfg.refresh_every = v;
    }
    if let Some(v) = args.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = args.delta_v {
        cfg.delta_v = v;
    }
    if let Some(v) = args.max_iters {
        cfg.max_iters = v;
    }
    if let Some(v) = args.log_domain {
        cfg.log_domain = v;
    }
    if let Some(v) = args.ablate {
        cfg.ablate = v;
    }

    let train_cfg = TrainConfig {
        learning_rate: cfg.learning_rate,
        outer_steps: cfg.outer_steps,
        sinkhorn: SinkhornConfig {
            lambda: cfg.lambda,
            delta_v_threshold: cfg.delta_v,
            max_iters: cfg.max_iters,
            log_domain: cfg.log_domain,
        },
        beta: cfg.beta,
        seed: cfg.seed,
        refresh_every: cfg.refresh_every,
    };
    train_cfg.validate()?;

    let scene = generate_scene(
        cfg.height,
        cfg.width,
        cfg.classes,
        cfg.noise_sigma,
        cfg.dim,
        cfg.seed,
    )?;
    let init = AlignmentModel::perturbed_init(&scene, cfg.init_sigma, cfg.tau, cfg.beta, cfg.seed)?;

    let guided = train(&scene, init.clone(), &train_cfg)?;
    let out = &args.common.out_dir;
    ensure_out_dir(out)?;
    write_history(&out.join("history.csv"), &guided.history)?;
    write_features_text(out.join("model.txt"), guided.model.text_embeddings())
        .context("writing model.txt")?;

    let ablation = if cfg.ablate {
        let base_cfg = TrainConfig {
            beta: 0.0,
            ..train_cfg.clone()
        };
        let base = train(&scene, init.with_beta(0.0)?, &base_cfg)?;
        write_history(&out.join("history_ablation.csv"), &base.history)?;
        write_features_text(out.join("model_ablation.txt"), base.model.text_embeddings())
            .context("writing model_ablation.txt")?;
        Some(arm_results(&base))
    } else {
        None
    };

    let results = TrainResults {
        steps: cfg.outer_steps,
        guided: arm_results(&guided),
        ablation,
    };
    write_summary(out, &cfg, &results)?;

    let last = guided.history.last().expect("history has a closing row");
    println!(
        "trained {} steps: CE {} OT {} mIoU {}",
        cfg.outer_steps, last.ce, last.ot_distance, last.miou
    );
    Ok(0)
}

fn arm_results(outcome: &TrainOutcome) -> ArmResults {
    let last = outcome.history.last().expect("history has a closing row");
    ArmResults {
        final_ce: last.ce,
        final_ot_distance: last.ot_distance,
        final_miou: last.miou,
    }
}

fn write_history(path: &Path, rows: &[HistoryRow]) -> Result<()> {
    let mut out = String::from("step,ce,ot_distance,miou\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.step, r.ce, r.ot_distance, r.miou));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
