//! covot heatmap: one class's pixel-text similarity column rendered as a
//! height-by-width grid, from a stored volume or a freshly generated scene.

use anyhow::{Context, Result};
use covot::error::CovotError;
use covot::features::{build_cost_volume, Role};
use covot::io::{read_features_text, read_matrix_csv, write_matrix_csv, write_pgm};
use covot::scene::generate_scene;
use ndarray::Array2;
use serde::Serialize;

use crate::config::{ensure_out_dir, load_base, write_summary, HeatmapConfig};
use crate::HeatmapArgs;

#[derive(Serialize)]
struct HeatmapResults {
    class: usize,
    height: usize,
    width: usize,
    min: f64,
    max: f64,
    constant: bool,
}

pub fn run(args: HeatmapArgs) -> Result<i32> {
    let mut cfg: HeatmapConfig = load_base(args.common.config.as_deref())?;
    if args.volume.is_some() {
        cfg.volume = args.volume.clone();
    }
    if args.model.is_some() {
        cfg.model = args.model.clone();
    }
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
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.class {
        cfg.class = v;
    }

    let grid = match &cfg.volume {
        Some(path) => {
            let vol = read_matrix_csv(path)?;
            let (rows, cols) = vol.dim();
            if cfg.class >= cols {
                return Err(CovotError::OutOfRange {
                    what: "class",
                    got: cfg.class,
                    bound: cols,
                }
                .into());
            }
            if cfg.height * cfg.width != rows {
                return Err(CovotError::invalid(
                    "volume",
                    format!(
                        "{} rows cannot fill a {}x{} grid",
                        rows, cfg.height, cfg.width
                    ),
                )
                .into());
            }
            let col: Vec<f64> = vol.column(cfg.class).to_vec();
            Array2::from_shape_vec((cfg.height, cfg.width), col).expect("length checked above")
        }
        None => {
            let scene = generate_scene(
                cfg.height,
                cfg.width,
                cfg.classes,
                cfg.noise_sigma,
                cfg.dim,
                cfg.seed,
            )?;
            let embeddings = match &cfg.model {
                Some(path) => read_features_text(path, Role::Textual)?.normalize()?,
                None => scene.prototypes().clone(),
            };
            if cfg.class >= embeddings.len() {
                return Err(CovotError::OutOfRange {
                    what: "class",
                    got: cfg.class,
                    bound: embeddings.len(),
                }
                .into());
            }
            let cv = build_cost_volume(scene.pixel_features(), &embeddings)?;
            let col: Vec<f64> = cv.sim().column(cfg.class).to_vec();
            Array2::from_shape_vec((cfg.height, cfg.width), col)
                .expect("scene pixel count matches the grid")
        }
    };

    let out = &args.common.out_dir;
    ensure_out_dir(out)?;
    write_matrix_csv(out.join("heatmap.csv"), &grid).context("writing heatmap.csv")?;
    write_pgm(out.join("heatmap.pgm"), &grid).context("writing heatmap.pgm")?;

    let min = grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let results = HeatmapResults {
        class: cfg.class,
        height: cfg.height,
        width: cfg.width,
        min,
        max,
        constant: min == max,
    };
    write_summary(out, &cfg, &results)?;
    println!(
        "heatmap for class {}: {}x{}, similarity range [{}, {}]",
        cfg.class, cfg.height, cfg.width, min, max
    );
    Ok(0)
}
