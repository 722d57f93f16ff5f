//! Symmetric cloud similarity and similarity-based target selection.

use crate::error::{Error, Result};

use super::{apply_transform, cpd_register, voxel_downsample, CpdParams, PointCloud};

/// Average minimum distance from each point of `a` to `b`.
fn directed(a: &PointCloud, b: &PointCloud) -> f64 {
    let pa = a.points();
    let pb = b.points();
    let mut total = 0.0;
    for i in 0..pa.nrows() {
        let mut best = f64::INFINITY;
        for j in 0..pb.nrows() {
            let mut s = 0.0;
            for c in 0..pa.ncols() {
                let diff = pa[(i, c)] - pb[(j, c)];
                s += diff * diff;
            }
            best = best.min(s);
        }
        total += best.sqrt();
    }
    total / pa.nrows() as f64
}

/// Symmetric dissimilarity: sum of the two directed average minimum
/// distances. Zero for identical clouds; symmetric in its arguments.
pub fn similarity(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::input("clouds differ in dimension"));
    }
    Ok(directed(a, b) + directed(b, a))
}

/// Register `source` against every candidate and return the index of the
/// most similar one (argmin of the symmetric measure on the warped
/// source), together with all per-candidate scores. Ties break to the
/// lowest index.
pub fn select_target(
    source: &PointCloud,
    candidates: &[PointCloud],
    params: &CpdParams,
) -> Result<(usize, Vec<f64>)> {
    if candidates.is_empty() {
        return Err(Error::input("candidate list is empty"));
    }
    // Downsample once here so every registration and similarity check
    // sees the same clouds.
    let (src, cands) = match params.voxel_step {
        Some(step) => {
            let src = voxel_downsample(source, step)?;
            let cands = candidates
                .iter()
                .map(|c| voxel_downsample(c, step))
                .collect::<Result<Vec<_>>>()?;
            (src, cands)
        }
        None => (source.clone(), candidates.to_vec()),
    };
    let inner = CpdParams {
        voxel_step: None,
        ..params.clone()
    };
    let mut scores = Vec::with_capacity(cands.len());
    for cand in &cands {
        let tf = cpd_register(&src, cand, &inner)?;
        let warped = apply_transform(&tf, tf.source.points())?;
        let warped = PointCloud::new(warped, "warped")?;
        scores.push(similarity(&warped, cand)?);
    }
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s < scores[best] {
            best = i;
        }
    }
    Ok((best, scores))
}
