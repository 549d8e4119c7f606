//! Instrument strength within ranges of the fitted participation probability.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::data::Dataset;
use crate::error::{MteError, Result};
use crate::estimation::{design, Term};
use crate::numeric::{cluster_robust_cov, ols, percentile, Factorized};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "breaks")]
pub enum Segmentation {
    Terciles,
    Quartiles,
    /// Interior cut points on the F̂ scale.
    Breaks(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentStat {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub f_stat: f64,
    pub df1: usize,
    pub df2: usize,
    pub p_value: f64,
    /// Cluster-robust Wald statistic divided by `df1`.
    pub robust_f: Option<f64>,
    pub underpowered: bool,
    /// Instruments carry no variation beyond X within the segment.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentStrength {
    pub segmentation: Segmentation,
    pub segments: Vec<SegmentStat>,
}

/// Segment index per row; segment k holds F̂ in (c_{k-1}, c_k], the first
/// segment also taking its lower edge.
pub fn assign_segments(fhat: &[f64], segmentation: &Segmentation) -> Result<(Vec<f64>, Vec<usize>)> {
    let cuts: Vec<f64> = match segmentation {
        Segmentation::Terciles => vec![percentile(fhat, 1.0 / 3.0), percentile(fhat, 2.0 / 3.0)],
        Segmentation::Quartiles => vec![percentile(fhat, 0.25), percentile(fhat, 0.5), percentile(fhat, 0.75)],
        Segmentation::Breaks(b) => {
            if b.windows(2).any(|w| w[0] >= w[1]) {
                return Err(MteError::Config("segment breaks must be strictly increasing".into()));
            }
            b.clone()
        }
    };
    let seg = fhat.iter().map(|f| cuts.iter().filter(|&&c| *f > c).count()).collect();
    Ok((cuts, seg))
}

/// Linear probability model of participation on X and instrument terms
/// within each segment, with the joint F statistic for the instruments.
pub fn segment_f_stats(data: &Dataset, fhat: &[f64], x_terms: &[Term], z_terms: &[Term], segmentation: &Segmentation, cluster_robust: bool) -> Result<SegmentStrength> {
    let n = data.n();
    if fhat.len() != n {
        return Err(MteError::InvalidInput("F̂ length differs from data".into()));
    }
    if z_terms.is_empty() {
        return Err(MteError::Config("segment F needs at least one instrument term".into()));
    }
    let (x, xnames) = design(data, x_terms)?;
    let (z, znames) = design(data, z_terms)?;
    let y = data.participation();
    let (cuts, seg) = assign_segments(fhat, segmentation)?;
    let nseg = cuts.len() + 1;
    let mut edges = vec![f64::NEG_INFINITY];
    edges.extend(&cuts);
    edges.push(f64::INFINITY);
    let q = z.ncols();
    let mut segments = vec![];
    for s in 0..nseg {
        let rows: Vec<usize> = (0..n).filter(|&i| seg[i] == s).collect();
        let m = rows.len();
        let lo = rows.iter().map(|&i| fhat[i]).fold(f64::INFINITY, f64::min);
        let hi = rows.iter().map(|&i| fhat[i]).fold(f64::NEG_INFINITY, f64::max);
        let zs = DMatrix::from_fn(m, q, |r, c| z[(rows[r], c)]);
        let ys = DVector::from_fn(m, |r, _| y[rows[r]]);
        let cl: Vec<u64> = rows.iter().map(|&i| data.cluster_id[i]).collect();
        let mut stat = SegmentStat {
            lo,
            hi,
            n: m,
            f_stat: 0.0,
            df1: q,
            df2: 0,
            p_value: 1.0,
            robust_f: None,
            underpowered: m < 10 * q,
            degenerate: false,
        };
        // controls without variation inside the segment are dropped
        let mut keep: Vec<usize> = (0..x.ncols()).collect();
        let (xs, restricted) = loop {
            let xs = DMatrix::from_fn(m, keep.len(), |r, c| x[(rows[r], keep[c])]);
            let names: Vec<String> = keep.iter().map(|&c| xnames[c].clone()).collect();
            if m <= keep.len() + q {
                break (xs, None);
            }
            match ols(&xs, &ys, &names, "segment first stage") {
                Ok(fit) => break (xs, Some(fit)),
                Err(MteError::RankDeficient { columns, .. }) if columns.len() < keep.len() => keep.retain(|&c| !columns.contains(&xnames[c])),
                Err(e) => return Err(e.in_stage("segment F", m)),
            }
        };
        let Some(restricted) = restricted else {
            stat.degenerate = true;
            segments.push(stat);
            continue;
        };
        let k0 = keep.len();
        stat.df2 = m - k0 - q;
        let mut full = DMatrix::<f64>::zeros(m, k0 + q);
        full.columns_mut(0, k0).copy_from(&xs);
        full.columns_mut(k0, q).copy_from(&zs);
        let names: Vec<String> = keep.iter().map(|&c| xnames[c].clone()).chain(znames.iter().cloned()).collect();
        let unrestricted = match ols(&full, &ys, &names, "segment first stage") {
            Ok(f) => f,
            Err(MteError::RankDeficient { .. }) => {
                stat.degenerate = true;
                segments.push(stat);
                continue;
            }
            Err(e) => return Err(e.in_stage("segment F", m)),
        };
        let num = (restricted.rss - unrestricted.rss).max(0.0) / q as f64;
        let den = unrestricted.rss / stat.df2 as f64;
        stat.f_stat = if den > 0.0 { num / den } else { 0.0 };
        if let Ok(dist) = FisherSnedecor::new(q as f64, stat.df2 as f64) {
            stat.p_value = dist.sf(stat.f_stat);
        }
        if cluster_robust {
            let cov = cluster_robust_cov(&full, &unrestricted, &cl);
            let vz = cov.view((k0, k0), (q, q)).into_owned();
            let bz = unrestricted.coef.rows(k0, q).into_owned();
            if let Ok(fac) = Factorized::new(&vz, &znames, "segment robust covariance") {
                stat.robust_f = Some(bz.dot(&fac.solve(&bz)) / q as f64);
            }
        }
        segments.push(stat);
    }
    Ok(SegmentStrength { segmentation: segmentation.clone(), segments })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segments_partition_rows() {
        let f: Vec<f64> = (0..97).map(|i| i as f64 / 97.0).collect();
        for s in [Segmentation::Terciles, Segmentation::Quartiles, Segmentation::Breaks(vec![0.2, 0.5])] {
            let (cuts, seg) = assign_segments(&f, &s).unwrap();
            let counts: Vec<usize> = (0..=cuts.len()).map(|k| seg.iter().filter(|&&x| x == k).count()).collect();
            assert_eq!(counts.iter().sum::<usize>(), 97);
            assert!(counts.iter().all(|&c| c > 0));
        }
    }

    #[test]
    fn unordered_breaks_rejected() {
        assert!(assign_segments(&[0.1], &Segmentation::Breaks(vec![0.5, 0.2])).is_err());
    }
}
