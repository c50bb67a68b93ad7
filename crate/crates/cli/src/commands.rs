use std::path::{Path, PathBuf};

use rayon::prelude::*;
use shfront::geometry::{far_field_min_distance, subset_geometry, ArrayGeometry};
use shfront::harmonics::{build_plan, sh_degree_order};
use shfront::io::{load_sht1, read_wav, save_sht1, write_wav, WavSampleFormat};
use shfront::profile::{emit_cost_curve, flop_reduction, BlstmConfig, PipelineConfig};
use shfront::sht_frontend::{frontend, RandSht, RandShtPolicy};
use shfront::simulate::Scene;
use shfront::ssafn::{init_weights, ssafn_forward, SsafnWeights};

use crate::error::{input_error, output_error, CliError};
use crate::manifest::{
    EnhanceJob, Job, ProfileJob, RunManifest, SimulateJob, TransformJob, WavFormat, WeightsInitJob,
};

/// Runs one resolved job, writes its output and then its manifest.
pub fn run_job(job: &Job) -> Result<(), CliError> {
    match job {
        Job::Simulate(j) => simulate(j)?,
        Job::Transform(j) => transform(j)?,
        Job::Enhance(j) => enhance(j)?,
        Job::Profile(j) => {
            let text = profile_text(&j.seconds, &j.models, j.json)?;
            std::fs::write(&j.output, text)
                .map_err(output_error(format!("cannot write {}", j.output.display())))?;
        }
        Job::WeightsInit(j) => {
            let w = init_weights(&j.config, j.seed).map_err(input_error("invalid network configuration"))?;
            w.save(&j.output)
                .map_err(output_error(format!("cannot write {}", j.output.display())))?;
        }
    }
    RunManifest::new(job.clone()).write()
}

/// Runs independent jobs on `jobs` worker threads; reports the first failure
/// in submission order.
pub fn run_all(batch: &[Job], jobs: usize) -> Result<(), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::usage(format!("cannot start {jobs} workers: {e}")))?;
    let results: Vec<Result<(), CliError>> = pool.install(|| batch.par_iter().map(run_job).collect());
    results.into_iter().collect()
}

fn simulate(j: &SimulateJob) -> Result<(), CliError> {
    let mut scene = Scene::load(&j.scene).map_err(input_error(format!("cannot load scene {}", j.scene.display())))?;
    scene.seed = j.seed;
    let base = j.scene.parent().unwrap_or(Path::new("."));
    let (_, audio) = scene
        .render(base)
        .map_err(input_error(format!("cannot render scene {}", j.scene.display())))?;
    let format = match j.format {
        WavFormat::Float32 => WavSampleFormat::Float32,
        WavFormat::Pcm16 => WavSampleFormat::Pcm16,
    };
    write_wav(&j.output, &audio, format).map_err(output_error(format!("cannot write {}", j.output.display())))
}

pub fn parse_indices(text: &str) -> Result<Vec<usize>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| CliError::usage(format!("invalid microphone index {s:?} in {text:?}")))
        })
        .collect()
}

/// Draws the random subset once so the manifest records concrete indices.
pub fn draw_subset(mics: usize, policy: RandShtPolicy) -> Result<Vec<usize>, CliError> {
    RandSht::new(policy)
        .draw_indices(mics)
        .map_err(input_error("cannot draw a random microphone subset"))
}

fn transform(j: &TransformJob) -> Result<(), CliError> {
    let audio = read_wav(&j.input).map_err(input_error(format!("cannot read {}", j.input.display())))?;
    let geometry = ArrayGeometry::load(&j.geometry)
        .map_err(input_error(format!("cannot load geometry {}", j.geometry.display())))?;
    if audio.channels.len() != geometry.num_mics() {
        return Err(CliError::usage(format!(
            "{} has {} channels but geometry {} has {} microphones",
            j.input.display(),
            audio.channels.len(),
            j.geometry.display(),
            geometry.num_mics()
        )));
    }
    if audio.sample_rate != j.stft.sample_rate {
        return Err(CliError::usage(format!(
            "{} is sampled at {} Hz, configuration expects {} Hz",
            j.input.display(),
            audio.sample_rate,
            j.stft.sample_rate
        )));
    }
    let (geometry, wavs) = match &j.subset {
        Some(idx) => {
            let sub = subset_geometry(&geometry, idx).map_err(input_error("invalid --subset"))?;
            (sub, idx.iter().map(|&i| audio.channels[i].clone()).collect())
        }
        None => (geometry, audio.channels),
    };
    let mags = frontend(&wavs, &geometry, j.order, &j.stft)
        .map_err(input_error(format!("cannot transform {}", j.input.display())))?;
    save_sht1(&j.output, &mags.into_tensor()).map_err(output_error(format!("cannot write {}", j.output.display())))
}

fn enhance(j: &EnhanceJob) -> Result<(), CliError> {
    let input = load_sht1(&j.input).map_err(input_error(format!("cannot read {}", j.input.display())))?;
    let weights = SsafnWeights::load(&j.weights)
        .map_err(input_error(format!("cannot load weights {}", j.weights.display())))?;
    let out = ssafn_forward(&input, &weights)
        .map_err(input_error(format!("cannot enhance {}", j.input.display())))?;
    save_sht1(&j.output, &out).map_err(output_error(format!("cannot write {}", j.output.display())))
}

/// Cost curve in the requested format, exactly as written to disk or stdout.
pub fn profile_text(
    seconds: &[f64],
    models: &[shfront::profile::ModelKind],
    json: bool,
) -> Result<String, CliError> {
    let curve = emit_cost_curve(seconds, models).map_err(input_error("invalid profile request"))?;
    if json {
        Ok(curve.to_json().map_err(input_error("cannot encode cost curve"))? + "\n")
    } else {
        Ok(curve.to_csv())
    }
}

pub fn reduction_at_ten_seconds() -> Result<f64, CliError> {
    flop_reduction(10.0, &PipelineConfig::default(), &BlstmConfig::default())
        .map_err(input_error("cannot compute FLOP reduction"))
}

pub fn profile_job(
    seconds: Vec<f64>,
    models: Vec<shfront::profile::ModelKind>,
    json: bool,
    output: PathBuf,
) -> Job {
    Job::Profile(ProfileJob {
        seconds,
        models,
        json,
        output,
        conventions: Default::default(),
    })
}

pub fn weights_job(output: PathBuf, seed: u64, config: shfront::ssafn::SsafnConfig) -> Job {
    Job::WeightsInit(WeightsInitJob { output, seed, config })
}

/// Human-readable summary of a geometry file; fails on invalid geometry.
pub fn validate_geometry(path: &Path, order: usize, f_max: f64, c: f64) -> Result<serde_json::Value, CliError> {
    let g = ArrayGeometry::load(path).map_err(input_error(format!("invalid geometry {}", path.display())))?;
    let plan = build_plan(&g, order).map_err(input_error("cannot build transform"))?;
    let zero_channels: Vec<String> = (0..plan.num_channels())
        .filter(|&ch| plan.weights()[ch * g.num_mics()..(ch + 1) * g.num_mics()].iter().all(|w| w.norm() == 0.0))
        .map(|ch| {
            let (n, m) = sh_degree_order(ch);
            format!("({n},{m})")
        })
        .collect();
    let far_field = far_field_min_distance(&g, f_max, c).map_err(input_error("invalid far-field parameters"))?;
    Ok(serde_json::json!({
        "name": g.name,
        "mics": g.num_mics(),
        "planar": g.is_planar(),
        "max_radius_m": g.max_radius(),
        "order": order,
        "channels": plan.num_channels(),
        "zero_channels": zero_channels,
        "far_field_min_distance_m": far_field,
        "far_field_f_max_hz": f_max,
    }))
}
