//! Region descriptors and the fixed-layout feature matrix.
//!
//! A scan segmented by `M` atlases yields `M` masks plus their majority-vote
//! mean mask. Each of the `M + 1` regions contributes the block
//! `[count, total_hu, mean_hu, std_hu, skewness, kurtosis, hist_0..hist_{H-1}]`,
//! atlas blocks first and the mean-mask block last.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ResultExt};
use crate::registration::{segment_by_atlases_detailed, Atlas, AtlasSegmentation, RegistrationConfig};
use crate::volume::{Mask, Volume};

/// Number of scalar statistics preceding the histogram in each block.
pub const SCALAR_FEATURES: usize = 6;

const SCALAR_NAMES: [&str; SCALAR_FEATURES] =
    ["count", "total_hu", "mean_hu", "std_hu", "skewness", "kurtosis"];

/// Histogram range and bin width in HU. Bins are half-open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub lo: f64,
    pub hi: f64,
    pub bin_width: f64,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        HistogramSpec {
            lo: 0.0,
            hi: 200.0,
            bin_width: 10.0,
        }
    }
}

impl HistogramSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.hi > self.lo) {
            return Err(Error::InvalidArgument("histogram needs hi > lo".into()));
        }
        if !(self.bin_width > 0.0) {
            return Err(Error::InvalidArgument("histogram bin width must be positive".into()));
        }
        let bins = (self.hi - self.lo) / self.bin_width;
        if (bins - bins.round()).abs() > 1e-9 * bins.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "histogram range {}..{} is not a multiple of bin width {}",
                self.lo, self.hi, self.bin_width
            )));
        }
        Ok(())
    }

    /// Number of bins `H`.
    pub fn bins(&self) -> usize {
        ((self.hi - self.lo) / self.bin_width).round() as usize
    }

    /// Bin of `hu`, or `None` outside `[lo, hi)`.
    pub fn bin_of(&self, hu: f64) -> Option<usize> {
        if hu < self.lo || hu >= self.hi {
            return None;
        }
        let b = ((hu - self.lo) / self.bin_width).floor() as usize;
        Some(b.min(self.bins() - 1))
    }

    /// Features per region block, `6 + H`.
    pub fn block_len(&self) -> usize {
        SCALAR_FEATURES + self.bins()
    }
}

/// Statistics of the HU values inside one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionFeatures {
    pub voxel_count: usize,
    pub total_hu: f64,
    pub mean_hu: f64,
    pub std_hu: f64,
    pub skewness: f64,
    /// Excess kurtosis (0 for a normal distribution).
    pub kurtosis: f64,
    pub histogram: Vec<u64>,
}

impl RegionFeatures {
    fn zero(bins: usize) -> Self {
        RegionFeatures {
            voxel_count: 0,
            total_hu: 0.0,
            mean_hu: 0.0,
            std_hu: 0.0,
            skewness: 0.0,
            kurtosis: 0.0,
            histogram: vec![0; bins],
        }
    }

    /// The block in column order.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![
            self.voxel_count as f64,
            self.total_hu,
            self.mean_hu,
            self.std_hu,
            self.skewness,
            self.kurtosis,
        ];
        v.extend(self.histogram.iter().map(|&c| c as f64));
        v
    }
}

/// Population moments and histogram of a list of HU values. Constant
/// regions get zero skewness and kurtosis.
pub fn region_features_from_values(values: &[f64], spec: &HistogramSpec) -> RegionFeatures {
    let bins = spec.bins();
    if values.is_empty() {
        return RegionFeatures::zero(bins);
    }
    let n = values.len() as f64;
    let total: f64 = values.iter().sum();
    let mean = total / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    let mut histogram = vec![0u64; bins];
    for &v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
        if let Some(b) = spec.bin_of(v) {
            histogram[b] += 1;
        }
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let (skewness, kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };
    RegionFeatures {
        voxel_count: values.len(),
        total_hu: total,
        mean_hu: mean,
        std_hu: m2.sqrt(),
        skewness,
        kurtosis,
        histogram,
    }
}

pub fn extract_region_features(volume: &Volume, mask: &Mask, spec: &HistogramSpec) -> Result<RegionFeatures> {
    spec.validate()?;
    if volume.geometry() != mask.geometry() {
        return Err(Error::InvalidArgument(
            "mask geometry differs from the volume".into(),
        ));
    }
    if !mask.is_binary() {
        return Err(Error::InvalidArgument("feature extraction needs a binary mask".into()));
    }
    let values: Vec<f64> = volume
        .values()
        .iter()
        .zip(mask.weights())
        .filter(|(_, &w)| w >= 1.0)
        .map(|(&v, _)| v as f64)
        .collect();
    Ok(region_features_from_values(&values, spec))
}

/// Majority vote: a voxel is kept when at least half of the masks cover it.
pub fn mean_mask(masks: &[Mask]) -> Result<Mask> {
    let first = masks
        .first()
        .ok_or_else(|| Error::InvalidArgument("mean_mask needs at least one mask".into()))?;
    let geometry = *first.geometry();
    for (i, m) in masks.iter().enumerate() {
        if *m.geometry() != geometry {
            return Err(Error::InvalidArgument(format!("mask {i} has a different geometry")));
        }
        if !m.is_binary() {
            return Err(Error::InvalidArgument(format!("mask {i} is not binary")));
        }
    }
    let mut votes = vec![0usize; geometry.len()];
    for m in masks {
        for (v, &w) in votes.iter_mut().zip(m.weights()) {
            *v += (w >= 1.0) as usize;
        }
    }
    let inside: Vec<bool> = votes.iter().map(|&v| 2 * v >= masks.len()).collect();
    Mask::from_bools(geometry, &inside)
}

/// Column names for `m_atlases` atlas blocks plus the mean block.
pub fn feature_names(m_atlases: usize, spec: &HistogramSpec) -> Vec<String> {
    let mut names = Vec::with_capacity((m_atlases + 1) * spec.block_len());
    for block in 0..=m_atlases {
        let prefix = if block < m_atlases {
            format!("atlas{}", block + 1)
        } else {
            "mean".to_string()
        };
        for s in SCALAR_NAMES {
            names.push(format!("{prefix}_{s}"));
        }
        for b in 0..spec.bins() {
            let edge = spec.lo + b as f64 * spec.bin_width;
            names.push(format!("{prefix}_hist_{edge}"));
        }
    }
    names
}

/// Feature vector of one scan, `(6 + H)·(M + 1)` long.
pub fn assemble_features(volume: &Volume, masks: &[Mask], spec: &HistogramSpec) -> Result<Vec<f64>> {
    if masks.is_empty() {
        return Err(Error::InvalidArgument("at least one mask is required".into()));
    }
    let mean = mean_mask(masks)?;
    let mut row = Vec::with_capacity((masks.len() + 1) * spec.block_len());
    for (i, m) in masks.iter().chain(std::iter::once(&mean)).enumerate() {
        let f = extract_region_features(volume, m, spec).with_context(|| format!("region {i}"))?;
        row.extend(f.to_vec());
    }
    Ok(row)
}

/// Rows of named descriptors with optional regression targets (grams).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub column_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub targets: Option<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn new(column_names: Vec<String>, rows: Vec<Vec<f64>>, targets: Option<Vec<f64>>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = column_names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::InvalidArgument(format!("duplicate column name {dup}")));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != column_names.len()) {
            return Err(Error::InvalidArgument(format!(
                "row {i} has {} values for {} columns",
                rows[i].len(),
                column_names.len()
            )));
        }
        if let Some(t) = &targets {
            if t.len() != rows.len() {
                return Err(Error::InvalidArgument(format!(
                    "{} targets for {} rows",
                    t.len(),
                    rows.len()
                )));
            }
        }
        Ok(FeatureMatrix {
            column_names,
            rows,
            targets,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    /// Targets, or an error when the matrix has none.
    pub fn targets(&self) -> Result<&[f64]> {
        self.targets
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("feature matrix has no targets".into()))
    }

    /// Keeps the given columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Result<FeatureMatrix> {
        if let Some(&c) = columns.iter().find(|&&c| c >= self.n_cols()) {
            return Err(Error::InvalidArgument(format!("column {c} out of range")));
        }
        FeatureMatrix::new(
            columns.iter().map(|&c| self.column_names[c].clone()).collect(),
            self.rows
                .iter()
                .map(|r| columns.iter().map(|&c| r[c]).collect())
                .collect(),
            self.targets.clone(),
        )
    }

    /// Column indices of region block `block` (atlases `0..M`, mean at `M`).
    pub fn block_columns(block: usize, spec: &HistogramSpec) -> Vec<usize> {
        let w = spec.block_len();
        (block * w..(block + 1) * w).collect()
    }

    /// Writes the CSV layout: column names, then `weight_g` when targets exist.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = self.column_names.clone();
        if self.targets.is_some() {
            header.push("weight_g".into());
        }
        w.write_record(&header)?;
        for (i, row) in self.rows.iter().enumerate() {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            if let Some(t) = &self.targets {
                rec.push(t[i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<FeatureMatrix> {
        let mut r = csv::Reader::from_reader(reader);
        let mut names: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let has_targets = names.last().map(String::as_str) == Some("weight_g");
        if has_targets {
            names.pop();
        }
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let mut vals = rec
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Format(format!("row {i}: {s:?} is not a number")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if has_targets {
                targets.push(vals.pop().unwrap_or(f64::NAN));
            }
            rows.push(vals);
        }
        FeatureMatrix::new(names, rows, has_targets.then_some(targets))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
            .with_context(|| path.display().to_string())
    }

    pub fn load_csv(path: &Path) -> Result<FeatureMatrix> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        FeatureMatrix::read_csv(std::io::BufReader::new(f)).with_context(|| path.display().to_string())
    }
}

/// Segments every scan with every atlas and assembles the feature rows.
/// Also returns the per-scan segmentations for quality control.
pub fn assemble_training_set_detailed(
    scans: &[Volume],
    atlases: &[Atlas],
    weights: Option<&[f64]>,
    spec: &HistogramSpec,
    reg_config: &RegistrationConfig,
) -> Result<(FeatureMatrix, Vec<Vec<AtlasSegmentation>>)> {
    spec.validate()?;
    if let Some(w) = weights {
        if w.len() != scans.len() {
            return Err(Error::InvalidArgument(format!(
                "{} weights for {} scans",
                w.len(),
                scans.len()
            )));
        }
    }
    let per_scan: Vec<(Vec<f64>, Vec<AtlasSegmentation>)> = scans
        .par_iter()
        .enumerate()
        .map(|(i, scan)| {
            let segs = segment_by_atlases_detailed(scan, atlases, reg_config)
                .with_context(|| format!("scan {i}"))?;
            let masks: Vec<Mask> = segs.iter().map(|s| s.mask.clone()).collect();
            let row = assemble_features(scan, &masks, spec).with_context(|| format!("scan {i}"))?;
            Ok((row, segs))
        })
        .collect::<Result<_>>()?;
    let (rows, segs): (Vec<_>, Vec<_>) = per_scan.into_iter().unzip();
    let matrix = FeatureMatrix::new(
        feature_names(atlases.len(), spec),
        rows,
        weights.map(<[f64]>::to_vec),
    )?;
    Ok((matrix, segs))
}

pub fn assemble_training_set(
    scans: &[Volume],
    atlases: &[Atlas],
    weights: &[f64],
    spec: &HistogramSpec,
    reg_config: &RegistrationConfig,
) -> Result<FeatureMatrix> {
    if scans.len() < 2 {
        return Err(Error::InvalidArgument("a training set needs at least two scans".into()));
    }
    Ok(assemble_training_set_detailed(scans, atlases, Some(weights), spec, reg_config)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Geometry;

    #[test]
    fn three_voxel_region() {
        let f = region_features_from_values(&[50.0, 50.0, 150.0], &HistogramSpec::default());
        assert_eq!(f.voxel_count, 3);
        assert!((f.total_hu - 250.0).abs() < 1e-12);
        assert!((f.mean_hu - 250.0 / 3.0).abs() < 1e-12);
        assert!((f.std_hu - 47.140452079103168).abs() < 1e-9);
        assert!((f.skewness - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        assert!((f.kurtosis - (-1.5)).abs() < 1e-9);
        assert_eq!(f.histogram[5], 2);
        assert_eq!(f.histogram[15], 1);
        assert_eq!(f.histogram.iter().sum::<u64>(), 3);
    }

    #[test]
    fn bin_edges_are_half_open() {
        let s = HistogramSpec::default();
        assert_eq!(s.bins(), 20);
        assert_eq!(s.bin_of(0.0), Some(0));
        assert_eq!(s.bin_of(9.999), Some(0));
        assert_eq!(s.bin_of(10.0), Some(1));
        assert_eq!(s.bin_of(199.9), Some(19));
        assert_eq!(s.bin_of(200.0), None);
        assert_eq!(s.bin_of(-0.1), None);
        assert!(HistogramSpec { lo: 0.0, hi: 205.0, bin_width: 10.0 }.validate().is_err());
    }

    #[test]
    fn mean_mask_votes() {
        let g = Geometry::new([4, 1, 1], [1.0; 3], [0.0; 3]).unwrap();
        let a = Mask::from_bools(g, &[true, true, false, false]).unwrap();
        let b = Mask::from_bools(g, &[false, false, true, false]).unwrap();
        let c = Mask::from_bools(g, &[false, true, false, false]).unwrap();
        assert_eq!(mean_mask(&[a.clone(), a.clone()]).unwrap(), a);
        let union = mean_mask(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(union.weights(), &[1.0, 1.0, 1.0, 0.0]);
        let three = mean_mask(&[a, b, c]).unwrap();
        assert_eq!(three.weights(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn names_and_lengths() {
        let s = HistogramSpec::default();
        assert_eq!(feature_names(5, &s).len(), 156);
        assert_eq!(feature_names(1, &s).len(), 52);
        let names = feature_names(2, &s);
        assert_eq!(names[0], "atlas1_count");
        assert_eq!(names[6], "atlas1_hist_0");
        assert_eq!(names[25], "atlas1_hist_190");
        assert_eq!(names[52], "mean_count");
    }

    #[test]
    fn csv_round_trip() {
        let m = FeatureMatrix::new(
            vec!["a".into(), "b".into()],
            vec![vec![1.5, -2.0], vec![0.1, 1e-300]],
            Some(vec![10.0, 20.25]),
        )
        .unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("a,b,weight_g\n"));
        assert_eq!(FeatureMatrix::read_csv(&buf[..]).unwrap(), m);
    }
}
