//! covot solve: one entropic transport instance, uniform marginals.

use std::fs;

use anyhow::{Context, Result};
use covot::features::{
    build_cost_volume, cost_matrix_from_volume, CostMatrix, ProbabilityVector, Role,
};
use covot::io::{read_features_text, read_matrix_text, write_matrix_csv};
use covot::sinkhorn::{sinkhorn_solve, sinkhorn_solve_traced, SinkhornConfig, TraceRow};
use covot::CovotError;

use crate::config::{ensure_out_dir, load_base, write_summary, SolveConfig};
use crate::SolveArgs;

pub fn run(args: SolveArgs) -> Result<i32> {
    let mut cfg: SolveConfig = load_base(args.common.config.as_deref())?;
    if let Some(v) = args.cost {
        cfg.cost = Some(v);
    }
    if let Some(v) = args.visual {
        cfg.visual = Some(v);
    }
    if let Some(v) = args.textual {
        cfg.textual = Some(v);
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
    if let Some(v) = args.plan {
        cfg.emit_plan = v;
    }
    if let Some(v) = args.trace {
        cfg.emit_trace = v;
    }

    let c = load_cost(&cfg)?;
    let sinkhorn_cfg = SinkhornConfig {
        lambda: cfg.lambda,
        delta_v_threshold: cfg.delta_v,
        max_iters: cfg.max_iters,
        log_domain: cfg.log_domain,
    };
    sinkhorn_cfg.validate()?;

    let (m, n) = c.shape();
    let u = ProbabilityVector::uniform(m)?;
    let v = ProbabilityVector::uniform(n)?;
    let (result, trace) = if cfg.emit_trace {
        let (r, t) = sinkhorn_solve_traced(&c, &u, &v, &sinkhorn_cfg)?;
        (r, Some(t))
    } else {
        (sinkhorn_solve(&c, &u, &v, &sinkhorn_cfg)?, None)
    };

    let out = &args.common.out_dir;
    ensure_out_dir(out)?;
    if cfg.emit_plan {
        write_matrix_csv(out.join("plan.csv"), &result.plan.plan().to_owned())
            .context("writing plan.csv")?;
    }
    if let Some(rows) = trace {
        fs::write(out.join("trace.csv"), format_trace(&rows)).context("writing trace.csv")?;
    }
    let record = result.record(cfg.lambda);
    write_summary(out, &cfg, &record)?;

    println!(
        "{m}x{n} lambda {}: distance {} after {} iterations (converged: {})",
        cfg.lambda, record.distance, record.iterations, record.converged
    );
    Ok(if result.converged { 0 } else { 2 })
}

fn load_cost(cfg: &SolveConfig) -> Result<CostMatrix> {
    match (&cfg.cost, &cfg.visual, &cfg.textual) {
        (Some(path), None, None) => {
            let mat = read_matrix_text(path)
                .with_context(|| format!("reading cost matrix {}", path.display()))?;
            Ok(CostMatrix::new(mat)?)
        }
        (None, Some(vis), Some(txt)) => {
            let visual = read_features_text(vis, Role::Visual)
                .with_context(|| format!("reading visual features {}", vis.display()))?;
            let textual = read_features_text(txt, Role::Textual)
                .with_context(|| format!("reading textual features {}", txt.display()))?;
            Ok(cost_matrix_from_volume(&build_cost_volume(
                &visual, &textual,
            )?))
        }
        _ => Err(CovotError::invalid(
            "input",
            "provide either --cost or both --visual and --textual",
        )
        .into()),
    }
}

fn format_trace(rows: &[TraceRow]) -> String {
    let mut out = String::from("iteration,delta_v,distance\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.iteration, r.delta_v, r.distance));
    }
    out
}
