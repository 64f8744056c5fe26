//! Batched kernels over [`JetBatch`] and their adjoints.
//!
//! Every shared affine layer is a single GEMM over the stacked slots. The bias
//! only touches the value slot since it does not depend on the inputs.

use serde::{Deserialize, Serialize};

use super::batch::JetBatch;
use super::jet::{tanh, tanh_derivatives, Jet2, SLOTS};
use super::params::Layer;

/// Symmetric aggregation over points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    #[default]
    Max,
    Average,
}

impl std::str::FromStr for PoolKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "max" => Ok(PoolKind::Max),
            "average" | "avg" | "mean" => Ok(PoolKind::Average),
            other => Err(format!("unknown pooling '{other}' (expected max or average)")),
        }
    }
}

impl std::fmt::Display for PoolKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PoolKind::Max => "max",
            PoolKind::Average => "average",
        })
    }
}

/// What the backward pass needs to know about a pooling step.
///
/// For max pooling `winners[c]` is the point that attained the maximum of
/// channel `c`; ties go to the lowest index.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolRecord {
    pub kind: PoolKind,
    pub points: usize,
    pub winners: Vec<usize>,
}

impl PoolRecord {
    /// Weight of point `p` in channel `c` of the pooled feature.
    pub fn weight(&self, p: usize, c: usize) -> f64 {
        match self.kind {
            PoolKind::Max => f64::from(u8::from(self.winners[c] == p)),
            PoolKind::Average => 1.0 / self.points as f64,
        }
    }
}

/// `c = alpha * a b + beta * c` with explicit strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
    rsc: usize,
    csc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k > 0 {
        assert!((m - 1) * rsa + (k - 1) * csa < a.len(), "gemm: a out of bounds");
        assert!((k - 1) * rsb + (n - 1) * csb < b.len(), "gemm: b out of bounds");
    }
    assert!((m - 1) * rsc + (n - 1) * csc < c.len(), "gemm: c out of bounds");
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` is uniquely borrowed so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

fn add_bias(out: &mut JetBatch, bias: &[f64]) {
    for p in 0..out.points() {
        for (o, b) in out.row_mut(0, p).iter_mut().zip(bias) {
            *o += b;
        }
    }
}

fn accumulate_value_rows(adj: &JetBatch, into: &mut [f64]) {
    for p in 0..adj.points() {
        for (g, a) in into.iter_mut().zip(adj.row(0, p)) {
            *g += a;
        }
    }
}

/// Applies the same layer to every point: `out = x W^T (+ b on values)`.
pub fn affine_forward(layer: &Layer, x: &JetBatch) -> JetBatch {
    assert_eq!(x.channels(), layer.fan_in, "affine: channel mismatch");
    let n = x.points();
    let mut out = JetBatch::zeros(n, layer.fan_out);
    gemm(
        SLOTS * n,
        layer.fan_in,
        layer.fan_out,
        1.0,
        x.as_slice(),
        layer.fan_in,
        1,
        &layer.weight,
        1,
        layer.fan_in,
        0.0,
        out.as_mut_slice(),
        layer.fan_out,
        1,
    );
    add_bias(&mut out, &layer.bias);
    out
}

/// Accumulates parameter gradients and, if requested, the input adjoint.
pub fn affine_backward(
    layer: &Layer,
    x: &JetBatch,
    adj_out: &JetBatch,
    adj_in: Option<&mut JetBatch>,
    grad: &mut Layer,
) {
    let rows = SLOTS * x.points();
    let (fi, fo) = (layer.fan_in, layer.fan_out);
    if let Some(adj_in) = adj_in {
        gemm(rows, fo, fi, 1.0, adj_out.as_slice(), fo, 1, &layer.weight, fi, 1, 1.0, adj_in.as_mut_slice(), fi, 1);
    }
    gemm(fo, rows, fi, 1.0, adj_out.as_slice(), 1, fo, x.as_slice(), fi, 1, 1.0, &mut grad.weight, fi, 1);
    accumulate_value_rows(adj_out, &mut grad.bias);
}

/// Elementwise tanh on jets.
pub fn tanh_forward(z: &JetBatch) -> JetBatch {
    let (n, c) = (z.points(), z.channels());
    let len = n * c;
    let zs = z.as_slice();
    let mut out = JetBatch::zeros(n, c);
    let ys = out.as_mut_slice();
    for i in 0..len {
        let [s, s1, s2, _] = tanh_derivatives(zs[i]);
        let (zx, zy) = (zs[len + i], zs[2 * len + i]);
        ys[i] = s;
        ys[len + i] = s1 * zx;
        ys[2 * len + i] = s1 * zy;
        ys[3 * len + i] = s2 * zx * zx + s1 * zs[3 * len + i];
        ys[4 * len + i] = s2 * zy * zy + s1 * zs[4 * len + i];
        ys[5 * len + i] = s2 * zx * zy + s1 * zs[5 * len + i];
    }
    out
}

/// Adjoint of [`tanh_forward`]; `y` is the forward output, `z` its input.
pub fn tanh_backward(z: &JetBatch, y: &JetBatch, adj_out: &JetBatch, adj_in: &mut JetBatch) {
    let len = z.points() * z.channels();
    let zs = z.as_slice();
    let ys = y.as_slice();
    let a = adj_out.as_slice();
    let g = adj_in.as_mut_slice();
    for i in 0..len {
        let z: [f64; SLOTS] = std::array::from_fn(|k| zs[k * len + i]);
        let ak: [f64; SLOTS] = std::array::from_fn(|k| a[k * len + i]);
        let zbar = tanh_jet_adjoint(&z, ys[i], &ak);
        for (k, v) in zbar.iter().enumerate() {
            g[k * len + i] += v;
        }
    }
}

/// Pools the values of `h` over points.
pub fn pool_forward(h: &JetBatch, kind: PoolKind) -> (Vec<f64>, PoolRecord) {
    let (n, c) = (h.points(), h.channels());
    assert!(n > 0, "pooling needs at least one point");
    match kind {
        PoolKind::Max => {
            let mut g = h.row(0, 0).to_vec();
            let mut winners = vec![0; c];
            for p in 1..n {
                for (k, &v) in h.row(0, p).iter().enumerate() {
                    if v > g[k] {
                        g[k] = v;
                        winners[k] = p;
                    }
                }
            }
            (g, PoolRecord { kind, points: n, winners })
        }
        PoolKind::Average => {
            let mut g = vec![0.0; c];
            for p in 0..n {
                for (acc, v) in g.iter_mut().zip(h.row(0, p)) {
                    *acc += v;
                }
            }
            let inv = 1.0 / n as f64;
            g.iter_mut().for_each(|v| *v *= inv);
            (g, PoolRecord { kind, points: n, winners: Vec::new() })
        }
    }
}

/// Sends the adjoint of the pooled values back to the contributing points.
pub fn pool_backward(record: &PoolRecord, adj_g: &[f64], adj_h: &mut JetBatch) {
    match record.kind {
        PoolKind::Max => {
            for (c, (&p, &a)) in record.winners.iter().zip(adj_g).enumerate() {
                *adj_h.at_mut(0, p, c) += a;
            }
        }
        PoolKind::Average => {
            let inv = 1.0 / record.points as f64;
            for p in 0..record.points {
                for (dst, a) in adj_h.row_mut(0, p).iter_mut().zip(adj_g) {
                    *dst += a * inv;
                }
            }
        }
    }
}

/// The global feature seen from each point, as jets in that point's own
/// coordinates. The value is shared; the derivatives are the point's share of
/// the pooling times its own derivatives.
pub fn global_jets(h: &JetBatch, g: &[f64], record: &PoolRecord) -> JetBatch {
    let (n, c) = (h.points(), h.channels());
    let mut out = JetBatch::zeros(n, c);
    for p in 0..n {
        out.row_mut(0, p).copy_from_slice(g);
        for s in 1..SLOTS {
            for k in 0..c {
                *out.at_mut(s, p, k) = record.weight(p, k) * h.at(s, p, k);
            }
        }
    }
    out
}

/// Channel-wise concatenation `[a | b]`.
pub fn concat(a: &JetBatch, b: &JetBatch) -> JetBatch {
    assert_eq!(a.points(), b.points(), "concat: point count mismatch");
    let (ca, cb) = (a.channels(), b.channels());
    let mut out = JetBatch::zeros(a.points(), ca + cb);
    for s in 0..SLOTS {
        for p in 0..a.points() {
            let row = out.row_mut(s, p);
            row[..ca].copy_from_slice(a.row(s, p));
            row[ca..].copy_from_slice(b.row(s, p));
        }
    }
    out
}

/// A pooled global feature together with what its consumers need.
#[derive(Debug, Clone, PartialEq)]
pub struct Pooled {
    pub g: Vec<f64>,
    pub record: PoolRecord,
    /// Max pooling only: the pooled feature's jet at each channel's winner.
    pub winner_jets: Vec<[f64; SLOTS]>,
}

impl Pooled {
    /// Derivative slots as consumed by [`concat_affine_forward`]; `dense` is
    /// the pre-pool feature, needed for average pooling.
    pub fn slots<'a>(&'a self, dense: &'a JetBatch) -> GlobalSlots<'a> {
        match self.record.kind {
            PoolKind::Max => GlobalSlots::Winners(&self.winner_jets),
            PoolKind::Average => GlobalSlots::Dense(dense),
        }
    }
}

/// Pools a dense feature and keeps the winners' jets.
pub fn pool_jets(h: &JetBatch, kind: PoolKind) -> Pooled {
    let (g, record) = pool_forward(h, kind);
    let winner_jets = record
        .winners
        .iter()
        .enumerate()
        .map(|(c, &p)| std::array::from_fn(|s| h.at(s, p, c)))
        .collect();
    Pooled { g, record, winner_jets }
}

/// Source of the global feature's derivative slots.
pub enum GlobalSlots<'a> {
    /// Max pooling: only the winner of each channel carries derivatives.
    Winners(&'a [[f64; SLOTS]]),
    /// Average pooling: every point carries `1/N` of its own derivatives.
    Dense(&'a JetBatch),
}

/// Adjoint counterpart of [`GlobalSlots`].
pub enum GlobalSlotsAdjoint<'a> {
    Winners(&'a mut [[f64; SLOTS]]),
    Dense(&'a mut JetBatch),
}

/// `affine(concat(local, global_jets(h, g, record)))` without building the
/// concatenation.
pub fn concat_affine_forward(
    layer: &Layer,
    local: &JetBatch,
    g: &[f64],
    record: &PoolRecord,
    slots: GlobalSlots<'_>,
) -> JetBatch {
    let (n, cl, cg) = (local.points(), local.channels(), g.len());
    let (fi, fo) = (layer.fan_in, layer.fan_out);
    assert_eq!(cl + cg, fi, "concat-affine: channel mismatch");
    assert_eq!(record.points, n, "concat-affine: point count mismatch");
    let mut out = JetBatch::zeros(n, fo);
    gemm(SLOTS * n, cl, fo, 1.0, local.as_slice(), cl, 1, &layer.weight, 1, fi, 0.0, out.as_mut_slice(), fo, 1);

    let shared: Vec<f64> = (0..fo)
        .map(|o| {
            let row = &layer.weight[o * fi + cl..(o + 1) * fi];
            layer.bias[o] + row.iter().zip(g).map(|(w, v)| w * v).sum::<f64>()
        })
        .collect();
    add_bias(&mut out, &shared);

    match slots {
        GlobalSlots::Winners(jets) => {
            let wt = global_block_transposed(layer, cl);
            for (c, &p) in record.winners.iter().enumerate() {
                let col = &wt[c * fo..(c + 1) * fo];
                for s in 1..SLOTS {
                    let hv = jets[c][s];
                    if hv != 0.0 {
                        for (dst, w) in out.row_mut(s, p).iter_mut().zip(col) {
                            *dst += hv * w;
                        }
                    }
                }
            }
        }
        GlobalSlots::Dense(h) => {
            assert_eq!((h.points(), h.channels()), (n, cg), "concat-affine: pooled feature shape");
            gemm(
                (SLOTS - 1) * n,
                cg,
                fo,
                1.0 / n as f64,
                &h.as_slice()[n * cg..],
                cg,
                1,
                &layer.weight[cl..],
                1,
                fi,
                1.0,
                &mut out.as_mut_slice()[n * fo..],
                fo,
                1,
            );
        }
    }
    out
}

/// Adjoint of [`concat_affine_forward`]. `adj_g` receives the adjoint of the
/// pooled values and `adj_slots` that of the derivative slots; the pooling
/// itself is reversed by the caller.
#[allow(clippy::too_many_arguments)]
pub fn concat_affine_backward(
    layer: &Layer,
    local: &JetBatch,
    g: &[f64],
    record: &PoolRecord,
    slots: GlobalSlots<'_>,
    adj_out: &JetBatch,
    adj_local: &mut JetBatch,
    adj_g: &mut [f64],
    adj_slots: GlobalSlotsAdjoint<'_>,
    grad: &mut Layer,
) {
    let (n, cl, cg) = (local.points(), local.channels(), g.len());
    let (fi, fo) = (layer.fan_in, layer.fan_out);
    let rows = SLOTS * n;
    let a = adj_out.as_slice();

    gemm(rows, fo, cl, 1.0, a, fo, 1, &layer.weight, fi, 1, 1.0, adj_local.as_mut_slice(), cl, 1);
    gemm(fo, rows, cl, 1.0, a, 1, fo, local.as_slice(), cl, 1, 1.0, &mut grad.weight, fi, 1);

    let mut value_sum = vec![0.0; fo];
    accumulate_value_rows(adj_out, &mut value_sum);
    for o in 0..fo {
        let s = value_sum[o];
        grad.bias[o] += s;
        let wrow = &layer.weight[o * fi + cl..(o + 1) * fi];
        let grow = &mut grad.weight[o * fi + cl..(o + 1) * fi];
        for c in 0..cg {
            adj_g[c] += wrow[c] * s;
            grow[c] += s * g[c];
        }
    }

    match (slots, adj_slots) {
        (GlobalSlots::Winners(jets), GlobalSlotsAdjoint::Winners(adj_w)) => {
            let wt = global_block_transposed(layer, cl);
            let mut gt = vec![0.0; cg * fo];
            for (c, &p) in record.winners.iter().enumerate() {
                let col = &wt[c * fo..(c + 1) * fo];
                let gcol = &mut gt[c * fo..(c + 1) * fo];
                for s in 1..SLOTS {
                    let arow = adj_out.row(s, p);
                    let hv = jets[c][s];
                    let mut acc = 0.0;
                    for ((&av, w), gw) in arow.iter().zip(col).zip(gcol.iter_mut()) {
                        acc += av * w;
                        *gw += av * hv;
                    }
                    adj_w[c][s] += acc;
                }
            }
            for c in 0..cg {
                for o in 0..fo {
                    grad.weight[o * fi + cl + c] += gt[c * fo + o];
                }
            }
        }
        (GlobalSlots::Dense(h), GlobalSlotsAdjoint::Dense(adj_h)) => {
            let inv = 1.0 / n as f64;
            let (aoff, hoff) = (n * fo, n * cg);
            let drows = (SLOTS - 1) * n;
            gemm(drows, fo, cg, inv, &a[aoff..], fo, 1, &layer.weight[cl..], fi, 1, 1.0, &mut adj_h.as_mut_slice()[hoff..], cg, 1);
            gemm(fo, drows, cg, inv, &a[aoff..], 1, fo, &h.as_slice()[hoff..], cg, 1, 1.0, &mut grad.weight[cl..], fi, 1);
        }
        _ => panic!("concat-affine: slot and adjoint kinds differ"),
    }
}

/// Columns `cl..` of `W`, stored one column per row.
fn global_block_transposed(layer: &Layer, cl: usize) -> Vec<f64> {
    let (fi, fo) = (layer.fan_in, layer.fan_out);
    let cg = fi - cl;
    let mut wt = vec![0.0; cg * fo];
    for o in 0..fo {
        for c in 0..cg {
            wt[c * fo + o] = layer.weight[o * fi + cl + c];
        }
    }
    wt
}

/// Sends winner adjoints (value in `adj_g`, derivatives in `adj_w`) back to
/// the dense pre-pool feature.
pub fn scatter_winners(record: &PoolRecord, adj_g: &[f64], adj_w: &[[f64; SLOTS]], adj_h: &mut JetBatch) {
    for (c, &p) in record.winners.iter().enumerate() {
        *adj_h.at_mut(0, p, c) += adj_g[c];
        for s in 1..SLOTS {
            *adj_h.at_mut(s, p, c) += adj_w[c][s];
        }
    }
}

/// Adjoint of one tanh jet: `z` is the input jet, `s` the output value and
/// `a` the adjoint of the output jet.
#[inline]
pub(crate) fn tanh_jet_adjoint(z: &[f64; SLOTS], s: f64, a: &[f64; SLOTS]) -> [f64; SLOTS] {
    let s1 = 1.0 - s * s;
    let s2 = -2.0 * s * s1;
    let s3 = -2.0 * s1 * s1 + 4.0 * s * s * s1;
    let [_, z1, z2, z3, z4, z5] = *z;
    let [a0, a1, a2, a3, a4, a5] = *a;
    [
        a0 * s1 + s2 * (a1 * z1 + a2 * z2 + a3 * z3 + a4 * z4 + a5 * z5) + s3 * (a3 * z1 * z1 + a4 * z2 * z2 + a5 * z1 * z2),
        a1 * s1 + 2.0 * a3 * s2 * z1 + a5 * s2 * z2,
        a2 * s1 + 2.0 * a4 * s2 * z2 + a5 * s2 * z1,
        a3 * s1,
        a4 * s1,
        a5 * s1,
    ]
}

/// `max_pool(tanh(affine(x)))`, computing derivative slots only at the
/// winners since no other point's derivatives reach the pooled feature.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolHead {
    pub pooled: Pooled,
    /// Pre-activation jet at each channel's winner.
    pub winner_z: Vec<[f64; SLOTS]>,
}

pub fn affine_tanh_max_forward(layer: &Layer, x: &JetBatch) -> PoolHead {
    let (n, fi, fo) = (x.points(), layer.fan_in, layer.fan_out);
    assert_eq!(x.channels(), fi, "pool head: channel mismatch");
    assert!(n > 0, "pooling needs at least one point");
    let mut h = vec![0.0; n * fo];
    gemm(n, fi, fo, 1.0, x.slot(0), fi, 1, &layer.weight, 1, fi, 0.0, &mut h, fo, 1);
    for row in h.chunks_mut(fo) {
        for (v, b) in row.iter_mut().zip(&layer.bias) {
            *v = tanh(*v + b);
        }
    }
    let mut g = h[..fo].to_vec();
    let mut winners = vec![0; fo];
    for (p, row) in h.chunks(fo).enumerate().skip(1) {
        for (c, &v) in row.iter().enumerate() {
            if v > g[c] {
                g[c] = v;
                winners[c] = p;
            }
        }
    }
    let mut winner_z = Vec::with_capacity(fo);
    let mut winner_jets = Vec::with_capacity(fo);
    for (c, &p) in winners.iter().enumerate() {
        let w = &layer.weight[c * fi..(c + 1) * fi];
        let z: [f64; SLOTS] = std::array::from_fn(|s| {
            let acc: f64 = w.iter().zip(x.row(s, p)).map(|(a, b)| a * b).sum();
            if s == 0 {
                acc + layer.bias[c]
            } else {
                acc
            }
        });
        let mut jet = Jet2::from_slots(z).tanh().slots();
        jet[0] = g[c];
        winner_z.push(z);
        winner_jets.push(jet);
    }
    PoolHead { pooled: Pooled { g, record: PoolRecord { kind: PoolKind::Max, points: n, winners }, winner_jets }, winner_z }
}

/// Adjoint of [`affine_tanh_max_forward`], given the adjoint of the pooled
/// value `adj_g` and of the winner derivative slots `adj_w`.
pub fn affine_tanh_max_backward(
    layer: &Layer,
    x: &JetBatch,
    head: &PoolHead,
    adj_g: &[f64],
    adj_w: &[[f64; SLOTS]],
    adj_x: &mut JetBatch,
    grad: &mut Layer,
) {
    let fi = layer.fan_in;
    for (c, &p) in head.pooled.record.winners.iter().enumerate() {
        let mut a = adj_w[c];
        a[0] = adj_g[c];
        let zbar = tanh_jet_adjoint(&head.winner_z[c], head.pooled.g[c], &a);
        grad.bias[c] += zbar[0];
        let w = &layer.weight[c * fi..(c + 1) * fi];
        let gw = &mut grad.weight[c * fi..(c + 1) * fi];
        for (s, &zb) in zbar.iter().enumerate() {
            if zb == 0.0 {
                continue;
            }
            let xrow = x.row(s, p);
            for i in 0..fi {
                gw[i] += zb * xrow[i];
            }
            let arow = adj_x.row_mut(s, p);
            for i in 0..fi {
                arow[i] += zb * w[i];
            }
        }
    }
}
