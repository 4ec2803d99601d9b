//! Plain `key = value` configuration files mirroring `TrackerConfig`.
//!
//! Blank lines and `#` comments are ignored. `iters_per_level` takes the
//! scheme notation `2-2-1` (coarsest first).

use std::path::Path;

use regiontrack_core::segmentation::PriorMode;
use regiontrack_core::tracker::{DiracForm, IcpScaling};
use regiontrack_core::{TrackerConfig, WeightKernel};

use crate::error::{Error, Result};

pub fn parse_scheme(s: &str) -> Option<Vec<usize>> {
    let v: Option<Vec<usize>> = s.split(['-', ',']).map(|t| t.trim().parse().ok()).collect();
    v.filter(|v| !v.is_empty())
}

pub fn format_scheme(v: &[usize]) -> String {
    v.iter().map(|n| n.to_string()).collect::<Vec<_>>().join("-")
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" | "1" | "yes" | "on" => Some(true),
        "false" | "0" | "no" | "off" => Some(false),
        _ => None,
    }
}

/// Applies one setting. Returns a message on an unknown key or bad value.
pub fn apply(cfg: &mut TrackerConfig, key: &str, value: &str) -> std::result::Result<(), String> {
    fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
        v.parse().map_err(|_| format!("bad number {v:?}"))
    }
    let v = value.trim();
    match key.trim() {
        "lambda" => cfg.lambda = num(v)?,
        "heaviside_b" => cfg.heaviside_b = num(v)?,
        "dirac" => {
            cfg.dirac = match v {
                "printed" => DiracForm::Printed,
                "exact" => DiracForm::Exact,
                _ => return Err(format!("dirac must be printed or exact, got {v:?}")),
            }
        }
        "band_steps" => cfg.band_steps = num(v)?,
        "pyramid_levels" => cfg.pyramid_levels = num(v)?,
        "iters_per_level" => cfg.iters_per_level = parse_scheme(v).ok_or_else(|| format!("bad scheme {v:?}"))?,
        "occlusion_margin" => cfg.occlusion_margin = num(v)?,
        "n_contour" => cfg.n_contour = num(v)?,
        "n_interior" => cfg.n_interior = num(v)?,
        "sigma" => cfg.sigma = num(v)?,
        "kernel" => {
            cfg.kernel = match v {
                "gaussian" => WeightKernel::Gaussian,
                "exponential" => WeightKernel::Exponential,
                _ => return Err(format!("kernel must be gaussian or exponential, got {v:?}")),
            }
        }
        "cloud_weighting" => cfg.cloud_weighting = parse_bool(v).ok_or_else(|| format!("bad bool {v:?}"))?,
        "regularization" => cfg.regularization = num(v)?,
        "damping" => cfg.damping = num(v)?,
        "icp_gate" => cfg.icp_gate = num(v)?,
        "icp_scaling" => {
            cfg.icp_scaling = match v {
                "linear" => IcpScaling::Linear,
                "sqrt" => IcpScaling::Sqrt,
                _ => return Err(format!("icp_scaling must be linear or sqrt, got {v:?}")),
            }
        }
        "reorthonormalize_every" => cfg.reorthonormalize_every = num(v)?,
        "histogram_bins" => cfg.histogram.bins = num(v)?,
        "blend_rate" => cfg.histogram.blend_rate = num(v)?,
        "bg_stride" => cfg.histogram.bg_stride = num(v)?,
        "prior" => {
            cfg.histogram.prior = match v {
                "uniform" => PriorMode::Uniform,
                "area" => PriorMode::Area,
                _ => return Err(format!("prior must be uniform or area, got {v:?}")),
            }
        }
        "record_energy" => cfg.record_energy = parse_bool(v).ok_or_else(|| format!("bad bool {v:?}"))?,
        k => return Err(format!("unknown key {k:?}")),
    }
    Ok(())
}

pub fn parse_config(path: &Path, text: &str, base: TrackerConfig) -> Result<TrackerConfig> {
    let mut cfg = base;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::parse(path, i + 1, "expected key = value"));
        };
        apply(&mut cfg, k, v).map_err(|m| Error::parse(path, i + 1, m))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<TrackerConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(path, &text, TrackerConfig::default())
}

/// Renders a config back to the file format; parsing the output gives the
/// same config.
pub fn to_text(cfg: &TrackerConfig) -> String {
    let dirac = match cfg.dirac {
        DiracForm::Printed => "printed",
        DiracForm::Exact => "exact",
    };
    let kernel = match cfg.kernel {
        WeightKernel::Gaussian => "gaussian",
        WeightKernel::Exponential => "exponential",
    };
    let scaling = match cfg.icp_scaling {
        IcpScaling::Linear => "linear",
        IcpScaling::Sqrt => "sqrt",
    };
    let prior = match cfg.histogram.prior {
        PriorMode::Uniform => "uniform",
        PriorMode::Area => "area",
    };
    format!(
        "lambda = {}\nheaviside_b = {}\ndirac = {dirac}\nband_steps = {}\npyramid_levels = {}\niters_per_level = {}\n\
         occlusion_margin = {}\nn_contour = {}\nn_interior = {}\nsigma = {}\nkernel = {kernel}\ncloud_weighting = {}\n\
         regularization = {}\ndamping = {}\nicp_gate = {}\nicp_scaling = {scaling}\nreorthonormalize_every = {}\n\
         histogram_bins = {}\nblend_rate = {}\nbg_stride = {}\nprior = {prior}\nrecord_energy = {}\n",
        cfg.lambda,
        cfg.heaviside_b,
        cfg.band_steps,
        cfg.pyramid_levels,
        format_scheme(&cfg.iters_per_level),
        cfg.occlusion_margin,
        cfg.n_contour,
        cfg.n_interior,
        cfg.sigma,
        cfg.cloud_weighting,
        cfg.regularization,
        cfg.damping,
        cfg.icp_gate,
        cfg.reorthonormalize_every,
        cfg.histogram.bins,
        cfg.histogram.blend_rate,
        cfg.histogram.bg_stride,
        cfg.record_energy,
    )
}
