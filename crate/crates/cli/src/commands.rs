//! Subcommand implementations.

use std::path::{Path, PathBuf};

use hairgan::dataset::{load_dataset, make_dataset, manifest_hash};
use hairgan::eval::{evaluate_model, volume_metrics};
use hairgan::formats::{
    load_strands, load_text, load_volume, load_volume_dims, mesh_obj, save_map, save_strands,
    save_text, save_volume, strands_obj,
};
use hairgan::gan::{GanState, MetricsLog, Objective};
use hairgan::maps::{Map2D, OrientVolume};
use hairgan::mspace::FULL_VOL_RES;
use hairgan::orient2d::{input_maps, OrientationField2D};
use hairgan::rasterize::bust_depth_map;
use hairgan::strands::BustModel;
use hairgan::synth::{extract_surface, occupancy_field, smooth_mesh, synthesize as run_synthesis, TAUBIN_LAMBDA, TAUBIN_MU};
use hairgan::ModelSpace;
use serde::{Deserialize, Serialize};

use crate::config::{PipelineConfig, SpaceConfig};
use crate::images::{load_channels, save_map_ppm, volume_preview};
use crate::{CliError, EvalArgs, ExportArgs, InferArgs, MakeDataArgs, SynthArgs, TrainArgs};

/// Written next to a dataset so training uses the space it was built in.
pub const DATASET_INFO: &str = "dataset.toml";
pub const CHECKPOINT: &str = "checkpoint.ckpt";
pub const METRICS: &str = "metrics.csv";

#[derive(Debug, Serialize, Deserialize)]
struct DatasetInfo {
    space: SpaceConfig,
    data: hairgan::dataset::DatasetConfig,
    pairs: usize,
    manifest_sha256: String,
}

fn load_bust(path: Option<&Path>) -> Result<BustModel, CliError> {
    match path {
        Some(p) => Ok(BustModel::from_off(&load_text(p)?)?),
        None => Ok(BustModel::procedural()),
    }
}

/// The model space whose grid matches `dims`, with the configured box.
fn space_for_dims(cfg: &PipelineConfig, dims: [usize; 3]) -> Result<ModelSpace, CliError> {
    let k = [1, 2, 4, 8]
        .into_iter()
        .find(|&k| FULL_VOL_RES.map(|n| n / k) == dims)
        .ok_or_else(|| CliError::Data(format!("volume extents {dims:?} match no scale divisor")))?;
    SpaceConfig { k, ..cfg.space.clone() }.model_space()
}

fn space_for_image(cfg: &PipelineConfig, res: usize) -> Result<ModelSpace, CliError> {
    space_for_dims(cfg, FULL_VOL_RES.map(|n| n * res / hairgan::mspace::FULL_IMG_RES))
}

pub fn make_data(cfg: &mut PipelineConfig, a: &MakeDataArgs) -> Result<(), CliError> {
    if let Some(v) = a.styles {
        cfg.data.styles = v;
    }
    if let Some(v) = a.n_rot {
        cfg.data.n_rot = v;
    }
    if let Some(v) = a.n_strands {
        cfg.data.n_strands = v;
    }
    if a.no_flips {
        cfg.data.flips = false;
    }
    cfg.validate()?;
    let ms = cfg.space.model_space()?;
    let bust = load_bust(a.bust.as_deref())?;
    bust.validate(&ms)?;
    let rows = make_dataset(&a.out, &cfg.data, &bust, &ms)?;
    let info = DatasetInfo {
        space: cfg.space.clone(),
        data: cfg.data.clone(),
        pairs: rows.len(),
        manifest_sha256: manifest_hash(&a.out)?,
    };
    let text = toml::to_string(&info).map_err(|e| CliError::Data(e.to_string()))?;
    save_text(&a.out.join(DATASET_INFO), &text)?;
    println!("pairs = {}", rows.len());
    println!("manifest_sha256 = \"{}\"", info.manifest_sha256);
    Ok(())
}

pub fn train(cfg: &mut PipelineConfig, a: &TrainArgs) -> Result<(), CliError> {
    if let Some(v) = a.iters {
        cfg.train.iters = v;
    }
    if let Some(v) = a.checkpoint_every {
        cfg.train.checkpoint_every = v;
    }
    if let Some(o) = &a.objective {
        cfg.train.hyper.objective = match o.as_str() {
            "feature_match" => Objective::FeatureMatch,
            "wasserstein" => Objective::Wasserstein,
            other => return Err(CliError::Config(format!("unknown objective {other:?}"))),
        };
    }
    let info_path = a.data.join(DATASET_INFO);
    let info: DatasetInfo = toml::from_str(&load_text(&info_path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", info_path.display())))?;
    cfg.space.k = info.space.k;
    cfg.space.h = info.space.h;
    cfg.space.dz = info.space.dz;
    cfg.validate()?;
    let ms = cfg.space.model_space()?;
    let ds = load_dataset(&a.data, &ms)?;
    let mut state = match &a.resume {
        Some(p) => {
            let s = GanState::load(p)?;
            if s.scale.k != cfg.space.k {
                return Err(CliError::Data(format!(
                    "checkpoint was trained at k={} but the dataset is at k={}",
                    s.scale.k, cfg.space.k
                )));
            }
            s
        }
        None => GanState::new(cfg.space.scale()?, cfg.train.hyper.clone(), cfg.seed)?,
    };
    std::fs::create_dir_all(&a.out).map_err(|e| CliError::Data(format!("{}: {e}", a.out.display())))?;
    let ckpt = a.out.join(CHECKPOINT);
    let mut log = MetricsLog::open(&a.out.join(METRICS), a.resume.is_some())?;
    let every = cfg.train.checkpoint_every;
    let start = state.iter;
    state.train(&ds.samples, cfg.train.iters, |m, st| {
        log.record(m)?;
        if every > 0 && st.iter % every == 0 {
            st.save(&ckpt)?;
        }
        if m.iter % 50 == 0 || m.iter == start + 1 {
            log::info!("iter {} L_D {:.4} L*_G {:.4} content0 {:.3}", m.iter, m.loss_d, m.loss_g, m.content0);
        }
        Ok(())
    })?;
    state.save(&ckpt)?;
    println!("iter = {}", state.iter);
    println!("checkpoint = \"{}\"", ckpt.display());
    Ok(())
}

fn orientation_field(path: &Path) -> Result<OrientationField2D, CliError> {
    Ok(OrientationField2D::from_input_maps(&hairgan::formats::load_map(path)?)?)
}

pub fn infer(cfg: &mut PipelineConfig, a: &InferArgs) -> Result<(), CliError> {
    cfg.validate()?;
    let state = GanState::load(&a.checkpoint)?;
    let ms = SpaceConfig { k: state.scale.k, ..cfg.space.clone() }.model_space()?;
    let res = ms.img_res;
    let img = load_channels(&a.image, 1, res)?;
    let mask = load_channels(&a.mask, 1, res)?;
    let hint = match &a.hint {
        Some(p) => load_channels(p, 2, res)?,
        None => Map2D::square(res, 2, 0.5),
    };
    let depth = match &a.depth {
        Some(p) => load_channels(p, 1, res)?,
        None => bust_depth_map(&load_bust(a.bust.as_deref())?, &ms)?,
    };
    let (x, _) = input_maps(&img, &mask, &hint, &depth, cfg.orient.iters)?;
    if let Some(p) = &a.maps_out {
        save_map(p, &x)?;
    }
    let y = state.generate(&x.to_tensor())?;
    let v = OrientVolume::from_tensor(ms, &y)?;
    save_volume(&a.out, &v)?;
    println!("occupied_voxels = {}", v.occupied_count());
    Ok(())
}

pub fn synthesize(cfg: &mut PipelineConfig, a: &SynthArgs) -> Result<(), CliError> {
    if let Some(n) = a.seeds {
        cfg.synth.n_seeds = n;
    }
    cfg.validate()?;
    let ms = space_for_dims(cfg, load_volume_dims(&a.volume)?)?;
    let v = load_volume(&a.volume, &ms)?;
    let bust = load_bust(a.bust.as_deref())?;
    let field = a.maps.as_deref().map(orientation_field).transpose()?;
    let out = run_synthesis(&v, &bust, field.as_ref(), &cfg.synth)?;
    save_strands(&a.out, &out.model)?;
    if let Some(p) = &a.shape_obj {
        save_text(p, &mesh_obj(&out.shape.vertices, &out.shape.faces))?;
    }
    if let Some(p) = &a.strands_obj {
        save_text(p, &strands_obj(&out.model))?;
    }
    println!("strands = {}", out.model.strands.len());
    println!("points = {}", out.model.point_count());
    Ok(())
}

pub fn eval(cfg: &mut PipelineConfig, a: &EvalArgs) -> Result<(), CliError> {
    let mut did = false;
    if let Some(model) = &a.model {
        let maps = a
            .maps
            .as_ref()
            .ok_or_else(|| CliError::Config("--model needs reference --maps".into()))?;
        let f = orientation_field(maps)?;
        let ms = space_for_image(cfg, f.width)?;
        let mask = match &a.mask {
            Some(p) => load_channels(p, 1, ms.img_res)?,
            None => Map2D::from_plane(f.width, f.height, f.mask.iter().map(|&b| b as u8 as f64).collect())?,
        };
        let m = load_strands(model)?;
        let r = evaluate_model(&m, &ms, &mask, &f.theta)?;
        println!("mask_iou = {}", r.mask_iou);
        println!("orientation_mean_deg = {}", r.orientation.mean_deg);
        println!("orientation_pixels = {}", r.orientation.pixels);
        if let Some(p) = &a.diff_map {
            save_map_ppm(p, &r.orientation.map)?;
        }
        did = true;
    }
    if let Some(vol) = &a.volume {
        let truth = a
            .truth
            .as_ref()
            .ok_or_else(|| CliError::Config("--volume needs a ground-truth --truth".into()))?;
        let ms = space_for_dims(cfg, load_volume_dims(vol)?)?;
        let (v, t) = (load_volume(vol, &ms)?, load_volume(truth, &ms)?);
        let m = volume_metrics(&v, &t)?;
        println!("occupancy_iou = {}", m.occupancy_iou);
        println!("mean_angle_deg = {}", m.mean_angle_deg);
        println!("co_occupied = {}", m.co_occupied);
        did = true;
    }
    if !did {
        return Err(CliError::Config("eval needs --model with --maps, or --volume with --truth".into()));
    }
    Ok(())
}

pub fn export(cfg: &mut PipelineConfig, a: &ExportArgs) -> Result<(), CliError> {
    let mut wrote: Vec<PathBuf> = Vec::new();
    if let Some(vol) = &a.volume {
        let ms = space_for_dims(cfg, load_volume_dims(vol)?)?;
        let v = load_volume(vol, &ms)?;
        if let Some(p) = &a.ppm {
            save_map_ppm(p, &volume_preview(&v))?;
            wrote.push(p.clone());
        }
        if let Some(p) = &a.obj {
            let shape = extract_surface(&occupancy_field(&v), cfg.synth.iso, &ms)?;
            let shape = smooth_mesh(&shape, cfg.synth.smooth_iters, TAUBIN_LAMBDA, TAUBIN_MU);
            save_text(p, &mesh_obj(&shape.vertices, &shape.faces))?;
            wrote.push(p.clone());
        }
    }
    if let Some(map) = &a.map {
        let p = a.ppm.as_ref().ok_or_else(|| CliError::Config("--map needs --ppm".into()))?;
        save_map_ppm(p, &hairgan::formats::load_map(map)?)?;
        wrote.push(p.clone());
    }
    if let Some(st) = &a.strands {
        let p = a.obj.as_ref().ok_or_else(|| CliError::Config("--strands needs --obj".into()))?;
        save_text(p, &strands_obj(&load_strands(st)?))?;
        wrote.push(p.clone());
    }
    if wrote.is_empty() {
        return Err(CliError::Config("nothing to export; give an input and an output".into()));
    }
    for p in wrote {
        println!("wrote = \"{}\"", p.display());
    }
    Ok(())
}
