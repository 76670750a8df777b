//! Kernel comparison data: Mantel correlations and kernel-value histograms.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::Target;
use crate::error::{Error, Result};
use crate::forest::{Forest, TreeParams, DEFAULT_TREES};
use crate::kernels::{
    kernel_value_histogram, laplace_kernel_with, mantel_statistic, rf_kernel, ClassPairHistograms, KernelMatrix, LaplaceNorm,
    DEFAULT_HISTOGRAM_BINS,
};

use super::LabeledData;

pub const DEFAULT_SIGMAS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FigureOptions {
    pub sigmas: Vec<f64>,
    pub laplace_norm: LaplaceNorm,
    pub n_trees: usize,
    pub seed: u64,
    pub bins: usize,
}

impl Default for FigureOptions {
    fn default() -> Self {
        Self {
            sigmas: DEFAULT_SIGMAS.to_vec(),
            laplace_norm: LaplaceNorm::L1,
            n_trees: DEFAULT_TREES,
            seed: 0,
            bins: DEFAULT_HISTOGRAM_BINS,
        }
    }
}

/// Mantel grid over the RF kernel and the Laplace kernels, plus per-kernel
/// histograms of same-class and cross-class entries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FigureData {
    pub kernel_names: Vec<String>,
    pub mantel: Array2<f64>,
    pub histograms: Vec<ClassPairHistograms>,
}

fn class_labels(target: &Target) -> Result<Vec<i64>> {
    match target {
        Target::Class(y) => Ok(y.iter().map(|&c| i64::from(c)).collect()),
        Target::Binary(y) => Ok(y.iter().map(|&c| i64::from(c)).collect()),
        other => Err(Error::Schema(format!("kernel figures need class labels, got a {} target", other.kind()))),
    }
}

pub fn export_kernel_figure_data(data: &LabeledData, options: &FigureOptions) -> Result<FigureData> {
    let labels = class_labels(&data.target)?;
    if options.sigmas.is_empty() {
        return Err(Error::InvalidParameter("at least one sigma is required".into()));
    }
    let params = TreeParams::default_for(data.target.kind(), data.x.ncols());
    let forest = Forest::fit(&data.x, &data.target, &params, options.n_trees, options.seed)?;
    let mut names = vec!["rf".to_string()];
    let mut kernels: Vec<KernelMatrix> = vec![rf_kernel(&forest, &data.x, &data.x)?];
    for &s in &options.sigmas {
        names.push(format!("laplace_{s}"));
        kernels.push(laplace_kernel_with(&data.x, &data.x, s, options.laplace_norm)?);
    }
    let q = kernels.len();
    let mut mantel = Array2::zeros((q, q));
    for a in 0..q {
        mantel[[a, a]] = mantel_statistic(&kernels[a], &kernels[a])?;
        for b in 0..a {
            let r = mantel_statistic(&kernels[a], &kernels[b])?;
            mantel[[a, b]] = r;
            mantel[[b, a]] = r;
        }
    }
    let histograms = kernels
        .iter()
        .map(|k| kernel_value_histogram(k, &labels, options.bins))
        .collect::<Result<Vec<_>>>()?;
    Ok(FigureData {
        kernel_names: names,
        mantel,
        histograms,
    })
}

impl FigureData {
    pub fn write_mantel_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["kernel".to_string()];
        header.extend(self.kernel_names.iter().cloned());
        out.write_record(&header)?;
        for (a, name) in self.kernel_names.iter().enumerate() {
            let mut row = vec![name.clone()];
            row.extend(self.mantel.row(a).iter().map(|v| format!("{v:.6}")));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_histogram_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["kernel", "pairs", "bin_lo", "bin_hi", "count"])?;
        for (name, h) in self.kernel_names.iter().zip(&self.histograms) {
            for (group, hist) in [("same_class", &h.same_class), ("cross_class", &h.cross_class)] {
                for (k, c) in hist.counts.iter().enumerate() {
                    out.write_record([
                        name.clone(),
                        group.to_string(),
                        format!("{:.4}", hist.edges[k]),
                        format!("{:.4}", hist.edges[k + 1]),
                        c.to_string(),
                    ])?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Writes `mantel.csv` and `histograms.csv` into `dir`, returning their paths.
    pub fn write_to_dir(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mantel = dir.join("mantel.csv");
        let hist = dir.join("histograms.csv");
        self.write_mantel_csv(BufWriter::new(File::create(&mantel)?))?;
        self.write_histogram_csv(BufWriter::new(File::create(&hist)?))?;
        Ok(vec![mantel, hist])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureMatrix;

    fn blobs() -> LabeledData {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for c in 0..3u32 {
            for i in 0..10 {
                let off = f64::from(c) * 10.0;
                rows.push(vec![off + (i as f64) * 0.05, off - (i as f64) * 0.03]);
                labels.push(c);
            }
        }
        LabeledData {
            x: FeatureMatrix::from_rows(&rows).unwrap(),
            target: Target::Class(labels),
            class_names: vec!["a".into(), "b".into(), "c".into()],
        }
    }

    #[test]
    fn single_sigma_gives_two_by_two_grid() {
        let opts = FigureOptions {
            sigmas: vec![1.0],
            n_trees: 30,
            ..FigureOptions::default()
        };
        let fig = export_kernel_figure_data(&blobs(), &opts).unwrap();
        assert_eq!(fig.mantel.dim(), (2, 2));
        assert!((fig.mantel[[0, 0]] - 1.0).abs() < 1e-12);
        assert_eq!(fig.mantel[[0, 1]], fig.mantel[[1, 0]]);
        let mut buf = Vec::new();
        fig.write_mantel_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("kernel,rf,laplace_1\n"));
    }

    #[test]
    fn continuous_target_is_rejected() {
        let mut d = blobs();
        d.target = Target::Continuous(vec![0.0; 30]);
        assert!(matches!(export_kernel_figure_data(&d, &FigureOptions::default()), Err(Error::Schema(_))));
    }
}
