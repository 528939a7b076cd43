//! Alignment quality metrics and PGM/CSV renderings of alignment matrices.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeOptions {
    /// Half-width of the diagonal band in normalized position units.
    pub band_width: f64,
    /// Rows whose maximum falls below this count as gaps.
    pub gap_threshold: f64,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions { band_width: 0.1, gap_threshold: 0.1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    /// Mean row maximum.
    pub sharpness: f64,
    /// Mean entropy of the row-normalized rows, in nats; empty rows count 0.
    pub entropy: f64,
    /// Share of row-normalized mass inside the diagonal band.
    pub diagonality: f64,
    pub gap_count: usize,
    /// Share of encoder positions holding more than half the uniform share of mass.
    pub coverage: f64,
}

/// Metrics of a `[decoder steps, encoder steps]` alignment.
///
/// Positions are compared at cell centres, `(t + 0.5) / T` against
/// `(j + 0.5) / N`, so the band is symmetric for any aspect ratio.
pub fn analyze<T: Scalar>(a: &Tensor<T>, opts: &AnalyzeOptions) -> Result<AlignmentReport> {
    if a.shape().len() != 2 || a.rows() == 0 || a.cols() == 0 {
        return Err(Error::Contract(format!("alignment must be a non-empty matrix, got {:?}", a.shape())));
    }
    let (t_len, n_len) = (a.rows(), a.cols());
    let rows: Vec<Vec<f64>> = (0..t_len).map(|t| a.row_slice(t).iter().map(|v| v.to_f64_lossy()).collect()).collect();
    for (t, row) in rows.iter().enumerate() {
        if let Some(j) = row.iter().position(|v| !(*v >= 0.0)) {
            return Err(Error::Contract(format!("alignment entry ({t}, {j}) is {} (must be non-negative)", row[j])));
        }
    }

    let mut sharpness = 0.0;
    let mut entropy = 0.0;
    let mut in_band = 0.0;
    let mut live_rows = 0usize;
    let mut gap_count = 0;
    let mut column = vec![0.0; n_len];
    for (t, row) in rows.iter().enumerate() {
        let max = row.iter().copied().fold(0.0, f64::max);
        let sum: f64 = row.iter().sum();
        sharpness += max;
        if max < opts.gap_threshold {
            gap_count += 1;
        }
        if sum <= 0.0 {
            continue;
        }
        live_rows += 1;
        let centre = (t as f64 + 0.5) / t_len as f64;
        for (j, &v) in row.iter().enumerate() {
            let q = v / sum;
            if q > 0.0 {
                entropy -= q * q.ln();
            }
            if ((j as f64 + 0.5) / n_len as f64 - centre).abs() <= opts.band_width + 1e-12 {
                in_band += q;
            }
            column[j] += q;
        }
    }
    let coverage = if live_rows == 0 {
        0.0
    } else {
        let floor = live_rows as f64 / (2 * n_len) as f64;
        column.iter().filter(|&&m| m > floor).count() as f64 / n_len as f64
    };
    Ok(AlignmentReport {
        sharpness: sharpness / t_len as f64,
        entropy: entropy / t_len as f64,
        diagonality: if live_rows == 0 { 0.0 } else { in_band / live_rows as f64 },
        gap_count,
        coverage,
    })
}

/// Binary greyscale image: one row per decoder step, scaled to the global maximum.
pub fn pgm_bytes<T: Scalar>(a: &Tensor<T>) -> Vec<u8> {
    let (h, w) = if a.numel() == 0 { (0, 0) } else { (a.rows(), a.cols()) };
    let max = a.data().iter().map(|v| v.to_f64_lossy()).fold(0.0, f64::max);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(a.data().iter().map(|v| {
        if max > 0.0 {
            (255.0 * v.to_f64_lossy() / max).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    }));
    out
}

pub fn emit_pgm<T: Scalar>(a: &Tensor<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, pgm_bytes(a)).map_err(|e| Error::io(path, e))
}

/// `v` with nine significant digits, trailing zeros kept.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0.00000000".into() } else { v.to_string() };
    }
    let sci = format!("{v:.8e}");
    let exp: i32 = sci.rsplit('e').next().and_then(|e| e.parse().ok()).unwrap_or(0);
    let decimals = (8 - exp).max(0) as usize;
    format!("{v:.decimals$}")
}

pub fn csv_string<T: Scalar>(a: &Tensor<T>) -> String {
    let mut out = String::new();
    if a.numel() == 0 {
        return out;
    }
    for t in 0..a.rows() {
        let cells: Vec<String> = a.row_slice(t).iter().map(|v| format_sig9(v.to_f64_lossy())).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn emit_csv<T: Scalar>(a: &Tensor<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, csv_string(a)).map_err(|e| Error::io(path, e))
}
