use super::{ColumnKind, EncoderConfig};
use crate::error::{Error, Result};
use crate::modality::Modality;
use crate::nn::{add_positions, Builder, EncoderStack, Linear};
use crate::tensor::{ParamId, Real, Tape, Tensor, Var};

/// Interior quantile edges splitting `values` into `bins` equal-mass bins,
/// using linear interpolation between order statistics.
pub fn fit_bin_edges(values: &[f64], bins: usize) -> Vec<f64> {
    if values.is_empty() {
        return (1..bins).map(|k| k as f64).collect();
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let last = (v.len() - 1) as f64;
    (1..bins)
        .map(|k| {
            let pos = last * k as f64 / bins as f64;
            let (lo, frac) = (pos.floor() as usize, pos.fract());
            let hi = (lo + 1).min(v.len() - 1);
            v[lo] + (v[hi] - v[lo]) * frac
        })
        .collect()
}

/// Bin index of `x` given sorted interior edges: the number of edges `<= x`.
fn bin_of(x: f64, edges: &[f32]) -> usize {
    edges.iter().take_while(|&&e| (e as f64) <= x).count()
}

/// One token per column: a per-column embedding of the category index or of
/// the quantile bin, plus a column identity embedding, then a stack.
#[derive(Clone, Debug)]
pub struct TableEncoder {
    pub columns: Vec<ColumnKind>,
    pub bins: usize,
    pub tables: Vec<ParamId>,
    pub column_ids: ParamId,
    /// `continuous_columns x (bins - 1)` interior edges, a frozen buffer.
    pub edges: ParamId,
    pub stack: EncoderStack,
}

impl TableEncoder {
    pub fn new(b: &mut Builder<'_>, cfg: &EncoderConfig) -> Result<Self> {
        let d = cfg.width;
        let bins = cfg.table_bins;
        let tables = cfg
            .table_columns
            .iter()
            .enumerate()
            .map(|(i, k)| {
                let rows = match *k {
                    ColumnKind::Discrete { vocab } => vocab,
                    ColumnKind::Continuous => bins,
                };
                b.normal(&format!("column{i}"), &[rows, d], 1.0)
            })
            .collect::<Result<_>>()?;
        let n_cont = cfg.table_columns.iter().filter(|k| **k == ColumnKind::Continuous).count();
        // Standard-normal quantiles are a neutral default until fitted.
        let default = Tensor::from_fn([n_cont.max(1), bins - 1], |i| {
            let k = i % (bins - 1) + 1;
            (4.0 * k as f64 / bins as f64 - 2.0) as f32
        });
        Ok(TableEncoder {
            columns: cfg.table_columns.clone(),
            bins,
            tables,
            column_ids: b.normal("column_ids", &[cfg.table_columns.len(), d], 0.1)?,
            edges: b.buffer("edges", default)?,
            stack: EncoderStack::new(b, "stack", cfg.table_depth, d, cfg.heads)?,
        })
    }

    /// Category or bin index per column.
    pub fn indices(&self, row: &[f32], edges: &Tensor) -> Result<Vec<usize>> {
        if row.len() != self.columns.len() {
            return Err(Error::payload(
                Modality::Table,
                format!("expected {} columns, got {}", self.columns.len(), row.len()),
            ));
        }
        let stride = self.bins - 1;
        let mut cont = 0;
        row.iter()
            .zip(&self.columns)
            .map(|(&x, kind)| match *kind {
                ColumnKind::Discrete { vocab } => {
                    let i = x as usize;
                    if x < 0.0 || x.fract() != 0.0 || i >= vocab {
                        return Err(Error::payload(Modality::Table, format!("category {x} outside 0..{vocab}")));
                    }
                    Ok(i)
                }
                ColumnKind::Continuous => {
                    let e = &edges.data()[cont * stride..(cont + 1) * stride];
                    cont += 1;
                    Ok(bin_of(x as f64, e))
                }
            })
            .collect()
    }

    pub fn encode<F: Real>(&self, t: &mut Tape<'_, F>, x: &Tensor) -> Result<Var> {
        let edges = t.param(self.edges)?;
        let edges: Tensor = t.tensor(edges).cast();
        let idx = self.indices(x.data(), &edges)?;
        let mut rows = Vec::with_capacity(idx.len());
        for (c, &i) in idx.iter().enumerate() {
            let table = t.param(self.tables[c])?;
            rows.push(t.embedding(table, &[i])?);
        }
        let tokens = t.concat(&rows, 0)?;
        let ids = t.param(self.column_ids)?;
        let tokens = t.add(tokens, ids)?;
        self.stack.forward(t, tokens)
    }
}

/// Per-point `2 -> d` projection keeping the sequence length, then a stack.
#[derive(Clone, Debug)]
pub struct TrajectoryEncoder {
    pub proj: Linear,
    pub stack: EncoderStack,
}

impl TrajectoryEncoder {
    pub fn new(b: &mut Builder<'_>, d: usize, depth: usize, heads: usize) -> Result<Self> {
        Ok(TrajectoryEncoder {
            proj: Linear::new(b, "proj", 2, d, true)?,
            stack: EncoderStack::new(b, "stack", depth, d, heads)?,
        })
    }

    pub fn encode<F: Real>(&self, t: &mut Tape<'_, F>, x: &Tensor) -> Result<Var> {
        let pts = t.input(x.cast());
        let tokens = self.proj.forward(t, pts)?;
        let tokens = add_positions(t, tokens)?;
        self.stack.forward(t, tokens)
    }
}

/// Node features projected to `d`, emitted three times along the token axis:
/// plain, plus a node-index embedding, plus a time-slot embedding.
#[derive(Clone, Debug)]
pub struct GraphEncoder {
    pub features: usize,
    pub proj: Linear,
    pub spatial: ParamId,
    pub temporal: ParamId,
}

impl GraphEncoder {
    pub fn new(b: &mut Builder<'_>, cfg: &EncoderConfig) -> Result<Self> {
        let d = cfg.width;
        Ok(GraphEncoder {
            features: cfg.graph_features,
            proj: Linear::new(b, "proj", cfg.graph_features, d, true)?,
            spatial: b.normal("spatial", &[cfg.graph_max_nodes, d], 0.5)?,
            temporal: b.normal("temporal", &[cfg.graph_time_slots, d], 0.5)?,
        })
    }

    pub fn encode<F: Real>(&self, t: &mut Tape<'_, F>, x: &Tensor, time_slot: usize) -> Result<Var> {
        let (k, f) = (x.dims()[0], x.dims()[1]);
        if f != self.features {
            return Err(Error::payload(Modality::Graph, format!("expected {} node features, got {f}", self.features)));
        }
        let feats = t.input(x.cast());
        let h = self.proj.forward(t, feats)?;
        let sp = t.param(self.spatial)?;
        let tm = t.param(self.temporal)?;
        let node_ids: Vec<usize> = (0..k).collect();
        let s = t.embedding(sp, &node_ids)?;
        let s = t.add(h, s)?;
        let time = t.embedding(tm, &vec![time_slot; k])?;
        let time = t.add(h, time)?;
        t.concat(&[h, s, time], 0)
    }
}
