use std::cmp::Ordering;

use super::EncoderConfig;
use crate::error::{Error, Result};
use crate::modality::Modality;
use crate::nn::{Builder, EncoderStack, Linear};
use crate::tensor::{ParamId, Real, Tape, Tensor, Var};

/// Output of [`group_points`].
#[derive(Clone, Debug, PartialEq)]
pub struct PointGroups {
    /// `G x N x 3`, each group re-centred on its centroid.
    pub groups: Tensor,
    /// `G x 3` centroid coordinates.
    pub centroids: Tensor,
}

fn dist2(a: &[f32; 3], b: &[f32; 3]) -> f64 {
    (0..3).map(|i| (a[i] as f64 - b[i] as f64).powi(2)).sum()
}

fn lex(a: &[f32], b: &[f32]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Canonical grouping of a `K x (3 + f)` cloud.
///
/// Rows are sorted lexicographically, so the result does not depend on input
/// order. Farthest-point sampling starts at the smallest row and breaks ties
/// by lowest sorted index; each group holds the `n_pts` nearest points of its
/// centroid ordered by (distance, sorted index).
pub fn group_points(cloud: &Tensor, g: usize, n_pts: usize) -> Result<PointGroups> {
    let d = cloud.dims();
    if d.len() != 2 || d[1] < 3 {
        return Err(Error::payload(Modality::PointCloud, "cloud must be K x (3 + f)"));
    }
    let (k, cols) = (d[0], d[1]);
    if g == 0 || n_pts == 0 || k < g || k < n_pts {
        return Err(Error::payload(
            Modality::PointCloud,
            format!("need K >= G and K >= N_pts, got K={k}, G={g}, N_pts={n_pts}"),
        ));
    }
    let mut rows: Vec<&[f32]> = cloud.data().chunks(cols).collect();
    rows.sort_by(|a, b| lex(a, b));
    let pts: Vec<[f32; 3]> = rows.iter().map(|r| [r[0], r[1], r[2]]).collect();

    let mut chosen = vec![0usize];
    let mut nearest: Vec<f64> = pts.iter().map(|p| dist2(p, &pts[0])).collect();
    while chosen.len() < g {
        let mut best = 0;
        for i in 1..k {
            if nearest[i] > nearest[best] {
                best = i;
            }
        }
        chosen.push(best);
        for i in 0..k {
            nearest[i] = nearest[i].min(dist2(&pts[i], &pts[best]));
        }
    }

    let mut groups = Vec::with_capacity(g * n_pts * 3);
    let mut centroids = Vec::with_capacity(g * 3);
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(k);
    for &c in &chosen {
        let cp = pts[c];
        centroids.extend_from_slice(&cp);
        order.clear();
        order.extend(pts.iter().enumerate().map(|(i, p)| (dist2(p, &cp), i)));
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, i) in &order[..n_pts] {
            for a in 0..3 {
                groups.push(pts[i][a] - cp[a]);
            }
        }
    }
    Ok(PointGroups {
        groups: Tensor::new([g, n_pts, 3], groups)?,
        centroids: Tensor::new([g, 3], centroids)?,
    })
}

/// Shared pointwise MLP over every grouped point, mean-pooled per group, plus
/// a linear embedding of the centroid, then a stack. One token per group.
#[derive(Clone, Debug)]
pub struct PointCloudEncoder {
    pub groups: usize,
    pub group_size: usize,
    pub conv1: (ParamId, ParamId),
    pub conv2: (ParamId, ParamId),
    pub centroid: Linear,
    pub stack: EncoderStack,
}

impl PointCloudEncoder {
    pub fn new(b: &mut Builder<'_>, cfg: &EncoderConfig) -> Result<Self> {
        let (h, d) = (cfg.pointcloud_hidden, cfg.width);
        Ok(PointCloudEncoder {
            groups: cfg.pointcloud_groups,
            group_size: cfg.pointcloud_group_size,
            conv1: (b.weight("point1.w", &[h, 3, 1], 3)?, b.zeros("point1.b", &[h])?),
            conv2: (b.weight("point2.w", &[d, h, 1], h)?, b.zeros("point2.b", &[d])?),
            centroid: Linear::new(b, "centroid", 3, d, true)?,
            stack: EncoderStack::new(b, "stack", cfg.pointcloud_depth, d, cfg.heads)?,
        })
    }

    pub fn encode<F: Real>(&self, t: &mut Tape<'_, F>, x: &Tensor) -> Result<Var> {
        let pg = group_points(x, self.groups, self.group_size)?;
        let (g, n) = (self.groups, self.group_size);
        // Channel-first 3 x (G N) so one width-1 conv covers every point.
        let flat = pg.groups.data();
        let chw = Tensor::<F>::from_fn([3, g * n], |i| F::of(flat[(i % (g * n)) * 3 + i / (g * n)] as f64));
        let pts = t.input(chw);
        let (w1, b1) = (t.param(self.conv1.0)?, t.param(self.conv1.1)?);
        let h = t.conv1d(pts, w1, Some(b1), 1, 0)?;
        let h = t.gelu(h)?;
        let (w2, b2) = (t.param(self.conv2.0)?, t.param(self.conv2.1)?);
        let h = t.conv1d(h, w2, Some(b2), 1, 0)?;
        let d = t.dims(h)[0];
        let h = t.reshape(h, [d, g, n])?;
        let pooled = t.mean_pool(h, 2)?;
        let tokens = t.transpose(pooled)?;
        let c = t.input(pg.centroids.cast());
        let pos = self.centroid.forward(t, c)?;
        let tokens = t.add(tokens, pos)?;
        self.stack.forward(t, tokens)
    }
}
