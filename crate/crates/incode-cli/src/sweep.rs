//! Depth/width sweeps of the image-fit task, both models per cell.

use std::collections::BTreeMap;

use incode_core::Result;

use crate::config::{ModelKind, RunConfig, SweepAxis};
use crate::tasks::{fit_image_core, load_image_or_fixture};
use crate::{write_metrics, RunReport};

const DEPTH_GRID: [usize; 5] = [2, 3, 4, 5, 6];
const DEPTH_GRID_WIDTH: usize = 256;
const WIDTH_GRID: [usize; 5] = [64, 128, 192, 256, 320];
const WIDTH_GRID_DEPTH: usize = 5;

pub(crate) fn run_sweep(cfg: &RunConfig) -> Result<RunReport> {
    let img = load_image_or_fixture(cfg, 64, 64)?;
    let cells: Vec<(usize, usize)> = match cfg.sweep_axis {
        SweepAxis::Depth => DEPTH_GRID.iter().map(|&d| (d, DEPTH_GRID_WIDTH)).collect(),
        SweepAxis::Width => WIDTH_GRID.iter().map(|&w| (WIDTH_GRID_DEPTH, w)).collect(),
    };
    let axis_name = match cfg.sweep_axis {
        SweepAxis::Depth => "depth",
        SweepAxis::Width => "width",
    };
    let mut csv = String::from("axis,value,model,psnr\n");
    let mut count = 0usize;
    for &(depth, width) in &cells {
        for model in [ModelKind::Incode, ModelKind::Siren] {
            let mut cell_cfg = cfg.clone();
            cell_cfg.depth = depth;
            cell_cfg.width = width;
            cell_cfg.model = model;
            let outcome = fit_image_core(&cell_cfg, &img)?;
            let psnr = outcome.logs.last().map_or(f64::NAN, |l| l.psnr);
            let value = match cfg.sweep_axis {
                SweepAxis::Depth => depth,
                SweepAxis::Width => width,
            };
            let model_name = match model {
                ModelKind::Incode => "incode",
                ModelKind::Siren => "siren",
            };
            csv.push_str(&format!("{axis_name},{value},{model_name},{psnr}\n"));
            count += 1;
        }
    }
    std::fs::write(cfg.out.join("sweep.csv"), &csv)?;
    let mut metrics = BTreeMap::new();
    metrics.insert("cells".into(), serde_json::json!(count));
    metrics.insert("axis".into(), serde_json::json!(axis_name));
    write_metrics(&cfg.out, &metrics)?;
    Ok(RunReport {
        metrics,
        diverged: false,
    })
}
