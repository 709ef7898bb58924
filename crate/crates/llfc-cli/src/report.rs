//! Report emission: CSV and JSON mirrors, floats at 17 significant digits,
//! atomic writes, and a config-hash header so every artifact is traceable
//! to the exact settings that produced it.

use crate::config::Format;
use crate::error::Result;
use llfc::conditions::ConditionReport;
use llfc::connectivity::LlfcReport;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub fn config_hash(raw: &str) -> String {
    let mut h = Sha256::new();
    h.update(raw.as_bytes());
    format!("{:x}", h.finalize())
}

/// 17 significant digits — enough to round-trip any f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Write via a temp file in the same directory, then rename into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(d) = dir {
        std::fs::create_dir_all(d)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct StitchRow {
    pub layer: usize,
    /// bottom layers of model A composed with the top of model B
    pub err_a_bottom: f64,
    /// bottom layers of model B composed with the top of model A
    pub err_b_bottom: f64,
    pub err_a: f64,
    pub err_b: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SrankRow {
    pub model: String,
    pub layer: usize,
    pub stable_rank: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionRow {
    pub layer: usize,
    pub dist_com: Option<f64>,
    pub dist_w: Option<f64>,
    pub dist_h: Option<f64>,
    pub mean_dist_sigma: Option<f64>,
    pub std_dist_sigma: Option<f64>,
    pub sigma_excluded: Option<usize>,
}

pub fn condition_rows(report: &ConditionReport, layers: usize) -> Vec<ConditionRow> {
    (1..=layers)
        .map(|layer| {
            let com = report.commutativity.iter().find(|c| c.layer == layer);
            // dist_sigma[h] belongs to hidden layer h+1; the last layer has
            // no activation and therefore no sigma entry
            let (mean, std, excl) = match report.dist_sigma.get(layer - 1) {
                Some(per_example) => {
                    let defined: Vec<f64> = per_example.iter().filter_map(|v| *v).collect();
                    let excluded = per_example.len() - defined.len();
                    if defined.is_empty() {
                        (None, None, Some(excluded))
                    } else {
                        let m = defined.iter().sum::<f64>() / defined.len() as f64;
                        let var = defined.iter().map(|v| (v - m).powi(2)).sum::<f64>()
                            / defined.len() as f64;
                        (Some(m), Some(var.sqrt()), Some(excluded))
                    }
                }
                None => (None, None, None),
            };
            ConditionRow {
                layer,
                dist_com: com.and_then(|c| c.dist_com),
                dist_w: com.and_then(|c| c.dist_w),
                dist_h: com.and_then(|c| c.dist_h),
                mean_dist_sigma: mean,
                std_dist_sigma: std,
                sigma_excluded: excl,
            }
        })
        .collect()
}

fn write_formats<F, G>(
    dir: &Path,
    stem: &str,
    formats: &[Format],
    hash: &str,
    csv_body: F,
    json_body: G,
) -> Result<Vec<PathBuf>>
where
    F: Fn() -> String,
    G: Fn() -> serde_json::Value,
{
    let mut written = Vec::new();
    for f in formats {
        match f {
            Format::Csv => {
                let path = dir.join(format!("{stem}.csv"));
                let body = format!("# config_sha256 = {hash}\n{}", csv_body());
                atomic_write(&path, body.as_bytes())?;
                written.push(path);
            }
            Format::Json => {
                let path = dir.join(format!("{stem}.json"));
                let value = serde_json::json!({
                    "config_sha256": hash,
                    "data": json_body(),
                });
                let mut body = serde_json::to_string_pretty(&value).expect("json");
                body.push('\n');
                atomic_write(&path, body.as_bytes())?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

pub fn emit_curve(
    grid: &[f64],
    curve: &[f64],
    barrier: f64,
    dir: &Path,
    formats: &[Format],
    hash: &str,
) -> Result<Vec<PathBuf>> {
    write_formats(
        dir,
        "curve",
        formats,
        hash,
        || {
            let mut s = format!("# barrier = {}\nalpha,err\n", fmt_f64(barrier));
            for (a, e) in grid.iter().zip(curve) {
                s.push_str(&format!("{},{}\n", fmt_f64(*a), fmt_f64(*e)));
            }
            s
        },
        || {
            serde_json::json!({
                "barrier": barrier,
                "alpha": grid,
                "err": curve,
            })
        },
    )
}

pub fn emit_llfc(
    report: &LlfcReport,
    dir: &Path,
    formats: &[Format],
    hash: &str,
) -> Result<Vec<PathBuf>> {
    write_formats(
        dir,
        "llfc",
        formats,
        hash,
        || {
            let mut s = String::from(
                "layer,alpha,mean_one_minus_cosine_alpha,std,mean_one_minus_cosine_ab,std,mean_coef,std,excluded_count\n",
            );
            for st in &report.stats {
                s.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    st.layer,
                    fmt_f64(st.alpha),
                    fmt_f64(st.mean_one_minus_cosine_alpha),
                    fmt_f64(st.std_one_minus_cosine_alpha),
                    fmt_f64(st.mean_one_minus_cosine_ab),
                    fmt_f64(st.std_one_minus_cosine_ab),
                    fmt_f64(st.mean_coef),
                    fmt_f64(st.std_coef),
                    st.excluded,
                ));
            }
            s
        },
        || {
            let rows: Vec<serde_json::Value> = report
                .stats
                .iter()
                .map(|st| {
                    serde_json::json!({
                        "layer": st.layer,
                        "alpha": st.alpha,
                        "mean_one_minus_cosine_alpha": st.mean_one_minus_cosine_alpha,
                        "std_one_minus_cosine_alpha": st.std_one_minus_cosine_alpha,
                        "mean_one_minus_cosine_ab": st.mean_one_minus_cosine_ab,
                        "std_one_minus_cosine_ab": st.std_one_minus_cosine_ab,
                        "mean_coef": st.mean_coef,
                        "std_coef": st.std_coef,
                        "excluded_count": st.excluded,
                    })
                })
                .collect();
            serde_json::json!({ "barrier": report.barrier, "rows": rows })
        },
    )
}

pub fn emit_conditions(
    rows: &[ConditionRow],
    dir: &Path,
    formats: &[Format],
    hash: &str,
) -> Result<Vec<PathBuf>> {
    write_formats(
        dir,
        "conditions",
        formats,
        hash,
        || {
            let mut s = String::from(
                "layer,dist_com,dist_w,dist_h,mean_dist_sigma,std_dist_sigma,sigma_excluded\n",
            );
            for r in rows {
                s.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    r.layer,
                    fmt_opt(r.dist_com),
                    fmt_opt(r.dist_w),
                    fmt_opt(r.dist_h),
                    fmt_opt(r.mean_dist_sigma),
                    fmt_opt(r.std_dist_sigma),
                    r.sigma_excluded.map(|v| v.to_string()).unwrap_or_default(),
                ));
            }
            s
        },
        || serde_json::to_value(rows).expect("json"),
    )
}

pub fn emit_stitch(
    rows: &[StitchRow],
    dir: &Path,
    formats: &[Format],
    hash: &str,
) -> Result<Vec<PathBuf>> {
    write_formats(
        dir,
        "stitch",
        formats,
        hash,
        || {
            let mut s = String::from("layer,err_a_bottom,err_b_bottom,err_a,err_b\n");
            for r in rows {
                s.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.layer,
                    fmt_f64(r.err_a_bottom),
                    fmt_f64(r.err_b_bottom),
                    fmt_f64(r.err_a),
                    fmt_f64(r.err_b),
                ));
            }
            s
        },
        || serde_json::to_value(rows).expect("json"),
    )
}

pub fn emit_srank(
    rows: &[SrankRow],
    dir: &Path,
    formats: &[Format],
    hash: &str,
) -> Result<Vec<PathBuf>> {
    write_formats(
        dir,
        "srank",
        formats,
        hash,
        || {
            let mut s = String::from("model,layer,stable_rank\n");
            for r in rows {
                s.push_str(&format!("{},{},{}\n", r.model, r.layer, fmt_f64(r.stable_rank)));
            }
            s
        },
        || serde_json::to_value(rows).expect("json"),
    )
}
