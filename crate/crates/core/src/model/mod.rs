//! The PointNet architecture: two encoder stacks, a pooled global feature,
//! concatenation with the first encoder's output, and two decoder stacks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ops, tanh, AutodiffError, JetBatch, Layer, NodeId, ParamStore, PoolKind, Tape};

/// Values of the width multiplier offered by the command-line tool.
pub const N_S_CHOICES: [f64; 8] = [0.125, 0.25, 0.5, 1.0, 1.5, 2.0, 2.5, 4.0];

/// Unscaled widths. Every layer width, and the concatenated width, is one of
/// these times `n_s`.
pub const BASE_WIDTHS: [usize; 6] = [64, 128, 256, 512, 1024, 1088];

pub const INPUT_DIM: usize = 2;
pub const N_PDE: usize = 2;

/// Layer index ranges inside the parameter store.
const ENC1: std::ops::Range<usize> = 0..2;
const ENC2: std::ops::Range<usize> = 2..5;
const DEC1: std::ops::Range<usize> = 5..8;
const DEC2: std::ops::Range<usize> = 8..10;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("n_s = {0} does not give integral layer widths")]
    InvalidScale(f64),
    #[error("cannot run the network on an empty cloud")]
    EmptyCloud,
    #[error("parameter store does not match the architecture")]
    ParameterShape,
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    #[default]
    Tanh,
    Linear,
}

impl std::str::FromStr for OutputActivation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tanh" => Ok(Self::Tanh),
            "linear" => Ok(Self::Linear),
            other => Err(format!("unknown output activation '{other}' (expected tanh or linear)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchDescriptor {
    pub n_s: f64,
    #[serde(default)]
    pub pooling: PoolKind,
    #[serde(default)]
    pub output_activation: OutputActivation,
}

impl Default for ArchDescriptor {
    fn default() -> Self {
        Self { n_s: 1.0, pooling: PoolKind::Max, output_activation: OutputActivation::Tanh }
    }
}

fn scaled(n_s: f64, base: usize) -> Option<usize> {
    let w = n_s * base as f64;
    let r = w.round();
    (n_s.is_finite() && r >= 1.0 && (w - r).abs() < 1e-9).then_some(r as usize)
}

impl ArchDescriptor {
    pub fn new(n_s: f64, pooling: PoolKind) -> Result<Self, ModelError> {
        let arch = Self { n_s, pooling, output_activation: OutputActivation::Tanh };
        arch.validate()?;
        Ok(arch)
    }

    pub fn with_output(mut self, output_activation: OutputActivation) -> Self {
        self.output_activation = output_activation;
        self
    }

    /// Any `n_s` is accepted as long as every scaled width is a positive
    /// integer, so `1/64` builds a network whose widest layer has 16 units.
    pub fn validate(&self) -> Result<(), ModelError> {
        if BASE_WIDTHS.iter().all(|&b| scaled(self.n_s, b).is_some()) {
            Ok(())
        } else {
            Err(ModelError::InvalidScale(self.n_s))
        }
    }

    fn w(&self, base: usize) -> usize {
        scaled(self.n_s, base).expect("validated scale")
    }

    /// `(fan_in, fan_out)` of every layer in storage order.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let w = |b| self.w(b);
        vec![
            (INPUT_DIM, w(64)),
            (w(64), w(64)),
            (w(64), w(64)),
            (w(64), w(128)),
            (w(128), w(1024)),
            (w(1088), w(512)),
            (w(512), w(256)),
            (w(256), w(128)),
            (w(128), w(128)),
            (w(128), N_PDE),
        ]
    }

    pub fn local_width(&self) -> usize {
        self.w(64)
    }

    pub fn global_width(&self) -> usize {
        self.w(1024)
    }

    pub fn concat_width(&self) -> usize {
        self.w(1088)
    }

    /// Sum of `fan_in * fan_out + fan_out` over all layers.
    pub fn parameter_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipnModel {
    pub arch: ArchDescriptor,
    pub params: ParamStore,
}

/// Glorot-uniform weights and zero biases drawn from a seeded stream.
pub fn build_pipn(arch: ArchDescriptor, seed: u64) -> Result<PipnModel, ModelError> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = arch.layer_shapes().into_iter().map(|(i, o)| Layer::glorot(i, o, &mut rng)).collect();
    Ok(PipnModel { arch, params: ParamStore::new(layers) })
}

pub fn count_parameters(model: &PipnModel) -> usize {
    model.params.parameter_count()
}

impl PipnModel {
    pub fn from_parts(arch: ArchDescriptor, params: ParamStore) -> Result<Self, ModelError> {
        arch.validate()?;
        let shapes: Vec<_> = params.layers.iter().map(|l| (l.fan_in, l.fan_out)).collect();
        if shapes != arch.layer_shapes() {
            return Err(ModelError::ParameterShape);
        }
        Ok(Self { arch, params })
    }

    /// Records the forward pass on `tape` and returns the output node, whose
    /// jets hold `(u, v)` and their derivatives at every point.
    pub fn record(&self, tape: &mut Tape, coords: &[[f64; 2]]) -> Result<NodeId, ModelError> {
        if coords.is_empty() {
            return Err(ModelError::EmptyCloud);
        }
        let p = &self.params;
        let mut x = tape.input(JetBatch::seed_coordinates(coords));
        for l in ENC1 {
            let z = tape.affine(p, l, x)?;
            x = tape.tanh(z)?;
        }
        let local = x;
        let last = ENC2.end - 1;
        for l in ENC2.start..last {
            let z = tape.affine(p, l, x)?;
            x = tape.tanh(z)?;
        }
        let global = match self.arch.pooling {
            PoolKind::Max => tape.affine_tanh_max_pool(p, last, x)?,
            PoolKind::Average => {
                let z = tape.affine(p, last, x)?;
                let h = tape.tanh(z)?;
                tape.pool(h, PoolKind::Average)?
            }
        };
        x = tape.concat(local, global)?;
        for l in DEC1.chain(DEC2) {
            let z = tape.affine(p, l, x)?;
            x = if l + 1 == DEC2.end && self.arch.output_activation == OutputActivation::Linear {
                z
            } else {
                tape.tanh(z)?
            };
        }
        Ok(x)
    }

    /// Output jets `(u, v)` for every point.
    pub fn forward(&self, coords: &[[f64; 2]]) -> Result<JetBatch, ModelError> {
        let mut tape = Tape::new();
        let out = self.record(&mut tape, coords)?;
        Ok(tape.value(out)?.clone())
    }

    /// Values only, through plain matrices without jets. Serves both as the
    /// fast inference path and as an independent check of [`Self::forward`].
    pub fn forward_values(&self, coords: &[[f64; 2]]) -> Result<Vec<[f64; 2]>, ModelError> {
        let (h_local, g) = self.encode(coords)?;
        let n = coords.len();
        let layers = &self.params.layers;
        let first = &layers[DEC1.start];
        let cl = self.arch.local_width();
        // The global half of the first decoder layer is identical for every point.
        let shared: Vec<f64> = (0..first.fan_out)
            .map(|o| first.bias[o] + (0..g.len()).map(|c| first.w(o, cl + c) * g[c]).sum::<f64>())
            .collect();
        let mut x = vec![0.0; n * first.fan_out];
        ops::gemm(n, cl, first.fan_out, 1.0, &h_local, cl, 1, &first.weight, 1, first.fan_in, 0.0, &mut x, first.fan_out, 1);
        for row in x.chunks_mut(first.fan_out) {
            for (v, s) in row.iter_mut().zip(&shared) {
                *v = tanh(*v + s);
            }
        }
        let mut width = first.fan_out;
        for l in DEC1.start + 1..DEC2.end {
            let linear = l + 1 == DEC2.end && self.arch.output_activation == OutputActivation::Linear;
            x = dense_values(&layers[l], &x, n, width, !linear);
            width = layers[l].fan_out;
        }
        Ok(x.chunks(N_PDE).map(|r| [r[0], r[1]]).collect())
    }

    /// First-encoder features (points x local width) and the pooled global
    /// feature, values only.
    pub fn encode(&self, coords: &[[f64; 2]]) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
        if coords.is_empty() {
            return Err(ModelError::EmptyCloud);
        }
        let n = coords.len();
        let layers = &self.params.layers;
        let mut x: Vec<f64> = coords.iter().flat_map(|c| [c[0], c[1]]).collect();
        let mut width = INPUT_DIM;
        for l in ENC1 {
            x = dense_values(&layers[l], &x, n, width, true);
            width = layers[l].fan_out;
        }
        let local = x.clone();
        for l in ENC2 {
            x = dense_values(&layers[l], &x, n, width, true);
            width = layers[l].fan_out;
        }
        let mut g = x[..width].to_vec();
        match self.arch.pooling {
            PoolKind::Max => {
                for row in x.chunks(width).skip(1) {
                    for (a, &b) in g.iter_mut().zip(row) {
                        if b > *a {
                            *a = b;
                        }
                    }
                }
            }
            PoolKind::Average => {
                for row in x.chunks(width).skip(1) {
                    for (a, b) in g.iter_mut().zip(row) {
                        *a += b;
                    }
                }
                g.iter_mut().for_each(|a| *a /= n as f64);
            }
        }
        Ok((local, g))
    }

    /// Values of the pooled layer at every point (points x global width).
    fn global_inputs(&self, coords: &[[f64; 2]]) -> Result<(Vec<f64>, usize), ModelError> {
        if coords.is_empty() {
            return Err(ModelError::EmptyCloud);
        }
        let n = coords.len();
        let layers = &self.params.layers;
        let mut x: Vec<f64> = coords.iter().flat_map(|c| [c[0], c[1]]).collect();
        let mut width = INPUT_DIM;
        for l in ENC1.chain(ENC2) {
            x = dense_values(&layers[l], &x, n, width, true);
            width = layers[l].fan_out;
        }
        Ok((x, width))
    }

    /// Point attaining the maximum of each global channel, lowest index on
    /// ties, as used by max pooling.
    pub fn pool_winners(&self, coords: &[[f64; 2]]) -> Result<Vec<usize>, ModelError> {
        let (x, width) = self.global_inputs(coords)?;
        let mut winners = vec![0; width];
        for c in 0..width {
            for p in 1..coords.len() {
                if x[p * width + c] > x[winners[c] * width + c] {
                    winners[c] = p;
                }
            }
        }
        Ok(winners)
    }

    /// Smallest gap, over global channels, between the largest and
    /// second-largest point value. Zero means some channel maximum is tied;
    /// infinite for a single point.
    pub fn pool_margin(&self, coords: &[[f64; 2]]) -> Result<f64, ModelError> {
        let (x, width) = self.global_inputs(coords)?;
        let mut margin = f64::INFINITY;
        for c in 0..width {
            let (mut top, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for row in x.chunks(width) {
                let v = row[c];
                if v > top {
                    second = top;
                    top = v;
                } else if v > second {
                    second = v;
                }
            }
            margin = margin.min(top - second);
        }
        Ok(margin)
    }
}

fn dense_values(layer: &Layer, x: &[f64], n: usize, width: usize, activate: bool) -> Vec<f64> {
    let fo = layer.fan_out;
    let mut out = vec![0.0; n * fo];
    ops::gemm(n, width, fo, 1.0, x, width, 1, &layer.weight, 1, layer.fan_in, 0.0, &mut out, fo, 1);
    for row in out.chunks_mut(fo) {
        for (v, b) in row.iter_mut().zip(&layer.bias) {
            *v += b;
            if activate {
                *v = tanh(*v);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::fd;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn cloud(seed: u64, n: usize) -> Vec<[f64; 2]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect()
    }

    fn micro(pooling: PoolKind) -> PipnModel {
        build_pipn(ArchDescriptor::new(1.0 / 64.0, pooling).unwrap(), 3).unwrap()
    }

    #[test]
    fn first_layer_shape_at_unit_scale() {
        let m = build_pipn(ArchDescriptor::new(1.0, PoolKind::Max).unwrap(), 0).unwrap();
        let l = &m.params.layers[0];
        assert_eq!((l.fan_out, l.fan_in), (64, 2));
        assert_eq!(l.weight.len(), 128);
    }

    #[test]
    fn concat_width_at_half_scale() {
        assert_eq!(ArchDescriptor::new(0.5, PoolKind::Max).unwrap().concat_width(), 544);
    }

    #[test]
    fn all_offered_scales_are_valid() {
        for n_s in N_S_CHOICES {
            ArchDescriptor::new(n_s, PoolKind::Max).unwrap();
        }
        assert_eq!(ArchDescriptor::new(0.3, PoolKind::Max), Err(ModelError::InvalidScale(0.3)));
        assert_eq!(ArchDescriptor::new(0.0, PoolKind::Max), Err(ModelError::InvalidScale(0.0)));
    }

    #[test]
    fn parameter_count_closed_form() {
        // Hand sum of (fan_in + 1) * fan_out over the ten layers at n_s = 1.
        let m = build_pipn(ArchDescriptor::default(), 0).unwrap();
        assert_eq!(count_parameters(&m), 887_490);
        assert_eq!(m.arch.parameter_count(), 887_490);
        let big = build_pipn(ArchDescriptor::new(2.0, PoolKind::Max).unwrap(), 0).unwrap();
        assert!(count_parameters(&big) > count_parameters(&m));
        let other = build_pipn(ArchDescriptor::default(), 99).unwrap();
        assert_eq!(count_parameters(&other), count_parameters(&m));
    }

    #[test]
    fn build_is_seeded() {
        let a = ArchDescriptor::new(0.125, PoolKind::Max).unwrap();
        assert_eq!(build_pipn(a, 5).unwrap(), build_pipn(a, 5).unwrap());
        assert_ne!(build_pipn(a, 5).unwrap(), build_pipn(a, 6).unwrap());
        let m = build_pipn(a, 5).unwrap();
        assert!(m.params.layers.iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
        let l = &m.params.layers[4];
        let bound = (6.0 / (l.fan_in + l.fan_out) as f64).sqrt();
        assert!(l.weight.iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn jet_values_match_value_path() {
        for pooling in [PoolKind::Max, PoolKind::Average] {
            for act in [OutputActivation::Tanh, OutputActivation::Linear] {
                let arch = ArchDescriptor::new(0.125, pooling).unwrap().with_output(act);
                let m = build_pipn(arch, 1).unwrap();
                let pts = cloud(2, 30);
                let jets = m.forward(&pts).unwrap();
                let vals = m.forward_values(&pts).unwrap();
                for (p, v) in vals.iter().enumerate() {
                    assert!((jets.at(0, p, 0) - v[0]).abs() < 1e-13);
                    assert!((jets.at(0, p, 1) - v[1]).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn single_point_cloud() {
        let m = micro(PoolKind::Max);
        let out = m.forward(&[[0.2, 0.1]]).unwrap();
        assert_eq!(out.points(), 1);
        assert_eq!(m.forward(&[]), Err(ModelError::EmptyCloud));
    }

    #[test]
    fn output_jets_include_the_global_path() {
        for pooling in [PoolKind::Max, PoolKind::Average] {
            let m = micro(pooling);
            let pts = cloud(4, 7);
            let jets = m.forward(&pts).unwrap();
            for p in [0, 3, 6] {
                for ch in 0..2 {
                    let f = |q: [f64; 2]| {
                        let mut moved = pts.clone();
                        moved[p] = q;
                        m.forward_values(&moved).unwrap()[p][ch]
                    };
                    let pr = fd::probe(&f, pts[p], 1e-3);
                    let j = jets.get(p, ch);
                    for (a, b) in [(j.d_x, pr.d_x), (j.d_y, pr.d_y), (j.d_xx, pr.d_xx), (j.d_yy, pr.d_yy), (j.d_xy, pr.d_xy)] {
                        assert!(fd::relative_error(a, b, 1e-2) < 1e-5, "{pooling} p{p}: {a} vs {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn permutation_permutes_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for pooling in [PoolKind::Max, PoolKind::Average] {
            let m = build_pipn(ArchDescriptor::new(0.125, pooling).unwrap(), 2).unwrap();
            let pts = cloud(9, 40);
            let mut perm: Vec<usize> = (0..40).collect();
            perm.shuffle(&mut rng);
            let moved: Vec<_> = perm.iter().map(|&i| pts[i]).collect();
            let a = m.forward(&pts).unwrap().permute_points(&perm);
            let b = m.forward(&moved).unwrap();
            assert!(a.max_abs_diff(&b) < 1e-12, "{pooling}");
        }
    }

    #[test]
    fn translation_changes_outputs() {
        let m = micro(PoolKind::Max);
        let pts = cloud(10, 12);
        let shifted: Vec<_> = pts.iter().map(|p| [p[0] + 0.3, p[1] - 0.1]).collect();
        assert_ne!(m.forward_values(&pts).unwrap(), m.forward_values(&shifted).unwrap());
    }

    #[test]
    fn hidden_activations_are_bounded() {
        let m = build_pipn(ArchDescriptor::new(0.25, PoolKind::Max).unwrap(), 4).unwrap();
        let pts: Vec<_> = cloud(11, 50).iter().map(|p| [p[0] * 30.0, p[1] * 30.0]).collect();
        let (local, g) = m.encode(&pts).unwrap();
        assert!(local.iter().chain(&g).all(|v| v.abs() <= 1.0));
        let out = m.forward_values(&pts).unwrap();
        assert!(out.iter().all(|o| o[0].abs() <= 1.0 && o[1].abs() <= 1.0));
    }

    #[test]
    fn duplicated_points_keep_global_feature() {
        for pooling in [PoolKind::Max, PoolKind::Average] {
            let m = build_pipn(ArchDescriptor::new(0.125, pooling).unwrap(), 6).unwrap();
            let pts = cloud(12, 20);
            let doubled: Vec<_> = pts.iter().chain(&pts).copied().collect();
            let (_, g1) = m.encode(&pts).unwrap();
            let (_, g2) = m.encode(&doubled).unwrap();
            for (a, b) in g1.iter().zip(&g2) {
                assert!((a - b).abs() < 1e-15, "{pooling}");
            }
        }
    }

    #[test]
    fn duplicates_tie_and_the_first_copy_wins() {
        let m = build_pipn(ArchDescriptor::new(0.125, PoolKind::Max).unwrap(), 6).unwrap();
        let pts = cloud(12, 21);
        assert!(m.pool_margin(&pts).unwrap() > 0.0);
        let doubled: Vec<_> = pts.iter().chain(&pts).copied().collect();
        assert_eq!(m.pool_margin(&doubled).unwrap(), 0.0);
        assert_eq!(m.pool_winners(&doubled).unwrap(), m.pool_winners(&pts).unwrap());
        assert_eq!(m.pool_margin(&pts[..1]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn mismatched_parameters_are_rejected() {
        let m = micro(PoolKind::Max);
        let arch = ArchDescriptor::new(0.125, PoolKind::Max).unwrap();
        assert_eq!(PipnModel::from_parts(arch, m.params), Err(ModelError::ParameterShape));
    }
}
