use super::batch::JetBatch;
use super::jet::SLOTS;
use super::ops::{self, GlobalSlotsAdjoint, PoolHead, PoolKind, PoolRecord, Pooled};
use super::params::ParamStore;
use super::AutodiffError;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Input,
    Affine { layer: usize, input: usize },
    ConcatAffine { layer: usize, concat: usize },
    Tanh { input: usize },
    Pool { input: usize },
    PoolHead { layer: usize, input: usize },
    Concat { local: usize, pool: usize },
}

#[derive(Debug)]
enum Value {
    Jets(JetBatch),
    Pooled(Pooled),
    Head(PoolHead),
    Lazy,
}

#[derive(Debug)]
enum Adjoint {
    Jets(JetBatch),
    /// Adjoint of the pooled values and, for max pooling, of the winners'
    /// derivative slots.
    Pooled { g: Vec<f64>, winners: Vec<[f64; SLOTS]> },
}

/// Records a forward pass over jets so that a scalar loss built from the
/// output jets can be differentiated with respect to the parameters.
///
/// A tape is single-use: [`Tape::backward`] consumes the recording.
#[derive(Debug, Default)]
pub struct Tape {
    ops: Vec<Op>,
    values: Vec<Value>,
    input_adjoints: Vec<(usize, JetBatch)>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn push(&mut self, op: Op, value: Value) -> NodeId {
        self.ops.push(op);
        self.values.push(value);
        NodeId(self.ops.len() - 1)
    }

    fn check(&self, id: NodeId) -> Result<usize, AutodiffError> {
        if self.consumed {
            return Err(AutodiffError::TapeConsumed);
        }
        if id.0 >= self.ops.len() {
            return Err(AutodiffError::UnknownNode(id.0));
        }
        Ok(id.0)
    }

    fn jets_at(&self, i: usize) -> Result<&JetBatch, AutodiffError> {
        match &self.values[i] {
            Value::Jets(j) => Ok(j),
            _ => Err(AutodiffError::NotJets(i)),
        }
    }

    fn pooled_at(&self, i: usize) -> Result<&Pooled, AutodiffError> {
        match &self.values[i] {
            Value::Pooled(p) => Ok(p),
            Value::Head(h) => Ok(&h.pooled),
            _ => Err(AutodiffError::NotPooled(i)),
        }
    }

    /// Input of a pooling node, i.e. the dense pre-pool feature (a dense
    /// pool) or the features entering the fused head.
    fn pool_input(&self, i: usize) -> usize {
        match self.ops[i] {
            Op::Pool { input } | Op::PoolHead { input, .. } => input,
            _ => unreachable!("node {i} is not a pooling node"),
        }
    }

    pub fn input(&mut self, batch: JetBatch) -> NodeId {
        self.push(Op::Input, Value::Jets(batch))
    }

    /// Shared affine layer `layer` of `params`. A concatenation input is
    /// fused into the layer instead of being materialized.
    pub fn affine(&mut self, params: &ParamStore, layer: usize, x: NodeId) -> Result<NodeId, AutodiffError> {
        let i = self.check(x)?;
        let l = params.layers.get(layer).ok_or(AutodiffError::UnknownLayer(layer))?;
        match self.ops[i] {
            Op::Concat { local, pool } => {
                let loc = self.jets_at(local)?;
                let pooled = self.pooled_at(pool)?;
                let width = loc.channels() + pooled.g.len();
                if width != l.fan_in {
                    return Err(AutodiffError::ShapeMismatch { expected: l.fan_in, found: width });
                }
                let dense = self.jets_at(self.pool_input(pool))?;
                let out = ops::concat_affine_forward(l, loc, &pooled.g, &pooled.record, pooled.slots(dense));
                Ok(self.push(Op::ConcatAffine { layer, concat: i }, Value::Jets(out)))
            }
            _ => {
                let xin = self.jets_at(i)?;
                if xin.channels() != l.fan_in {
                    return Err(AutodiffError::ShapeMismatch { expected: l.fan_in, found: xin.channels() });
                }
                let out = ops::affine_forward(l, xin);
                Ok(self.push(Op::Affine { layer, input: i }, Value::Jets(out)))
            }
        }
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId, AutodiffError> {
        let i = self.check(x)?;
        let out = ops::tanh_forward(self.jets_at(i)?);
        Ok(self.push(Op::Tanh { input: i }, Value::Jets(out)))
    }

    pub fn pool(&mut self, x: NodeId, kind: PoolKind) -> Result<NodeId, AutodiffError> {
        let i = self.check(x)?;
        let h = self.jets_at(i)?;
        if h.points() == 0 {
            return Err(AutodiffError::EmptyBatch);
        }
        let pooled = ops::pool_jets(h, kind);
        Ok(self.push(Op::Pool { input: i }, Value::Pooled(pooled)))
    }

    /// `pool(tanh(affine(x)), Max)` in one node. Same result as the three
    /// separate steps, but derivative slots are only formed at the winners.
    pub fn affine_tanh_max_pool(&mut self, params: &ParamStore, layer: usize, x: NodeId) -> Result<NodeId, AutodiffError> {
        let i = self.check(x)?;
        let l = params.layers.get(layer).ok_or(AutodiffError::UnknownLayer(layer))?;
        let xin = self.jets_at(i)?;
        if xin.channels() != l.fan_in {
            return Err(AutodiffError::ShapeMismatch { expected: l.fan_in, found: xin.channels() });
        }
        if xin.points() == 0 {
            return Err(AutodiffError::EmptyBatch);
        }
        let head = ops::affine_tanh_max_forward(l, xin);
        Ok(self.push(Op::PoolHead { layer, input: i }, Value::Head(head)))
    }

    /// `[local | global]`, where `global` is a pooling node. Only an affine
    /// layer may consume the result.
    pub fn concat(&mut self, local: NodeId, global: NodeId) -> Result<NodeId, AutodiffError> {
        let l = self.check(local)?;
        let p = self.check(global)?;
        let np = self.pooled_at(p)?.record.points;
        let nl = self.jets_at(l)?.points();
        if np != nl {
            return Err(AutodiffError::ShapeMismatch { expected: np, found: nl });
        }
        Ok(self.push(Op::Concat { local: l, pool: p }, Value::Lazy))
    }

    /// Forward jets of a node.
    pub fn value(&self, id: NodeId) -> Result<&JetBatch, AutodiffError> {
        let i = self.check(id)?;
        self.jets_at(i)
    }

    /// Pooled values of a pooling node.
    pub fn pooled(&self, id: NodeId) -> Result<(&[f64], &PoolRecord), AutodiffError> {
        let i = self.check(id)?;
        let p = self.pooled_at(i)?;
        Ok((&p.g, &p.record))
    }

    /// Adjoint of an input node, available after [`Tape::backward`].
    pub fn input_adjoint(&self, id: NodeId) -> Option<&JetBatch> {
        self.input_adjoints.iter().find(|(i, _)| *i == id.0).map(|(_, a)| a)
    }

    /// Back-propagates `seed`, the derivative of a scalar loss with respect to
    /// every entry of `output`, and accumulates into `grads`.
    pub fn backward(
        &mut self,
        output: NodeId,
        seed: &JetBatch,
        params: &ParamStore,
        grads: &mut ParamStore,
    ) -> Result<(), AutodiffError> {
        if self.consumed {
            return Err(AutodiffError::TapeConsumed);
        }
        if self.ops.is_empty() {
            return Err(AutodiffError::NothingRecorded);
        }
        let out = self.check(output)?;
        let out_val = self.jets_at(out)?;
        if (out_val.points(), out_val.channels()) != (seed.points(), seed.channels()) {
            return Err(AutodiffError::ShapeMismatch {
                expected: out_val.points() * out_val.channels(),
                found: seed.points() * seed.channels(),
            });
        }
        if !params.same_shape(grads) {
            return Err(AutodiffError::GradientShape);
        }
        self.consumed = true;

        let mut adj: Vec<Option<Adjoint>> = (0..self.ops.len()).map(|_| None).collect();
        adj[out] = Some(Adjoint::Jets(seed.clone()));

        for i in (0..=out).rev() {
            let Some(a) = adj[i].take() else { continue };
            match (&self.ops[i], a) {
                (Op::Input, Adjoint::Jets(a)) => self.input_adjoints.push((i, a)),
                (&Op::Affine { layer, input }, Adjoint::Jets(a)) => {
                    let x = self.jets_at(input)?;
                    let mut ax = take_jets(&mut adj, input, x);
                    ops::affine_backward(&params.layers[layer], x, &a, Some(&mut ax), &mut grads.layers[layer]);
                    give_jets(&mut adj, input, ax);
                }
                (&Op::Tanh { input }, Adjoint::Jets(a)) => {
                    let z = self.jets_at(input)?;
                    let y = self.jets_at(i)?;
                    let mut az = take_jets(&mut adj, input, z);
                    ops::tanh_backward(z, y, &a, &mut az);
                    give_jets(&mut adj, input, az);
                }
                (&Op::ConcatAffine { layer, concat }, Adjoint::Jets(a)) => {
                    let Op::Concat { local, pool } = self.ops[concat] else { unreachable!() };
                    let pooled = self.pooled_at(pool)?;
                    let hid = self.pool_input(pool);
                    let dense = self.jets_at(hid)?;
                    let loc = self.jets_at(local)?;
                    let width = pooled.g.len();
                    let (mut ag, mut aw) = match adj[pool].take() {
                        Some(Adjoint::Pooled { g, winners }) => (g, winners),
                        _ => (vec![0.0; width], vec![[0.0; SLOTS]; pooled.record.winners.len()]),
                    };
                    let mut al = take_jets(&mut adj, local, loc);
                    match pooled.record.kind {
                        PoolKind::Max => {
                            ops::concat_affine_backward(
                                &params.layers[layer],
                                loc,
                                &pooled.g,
                                &pooled.record,
                                pooled.slots(dense),
                                &a,
                                &mut al,
                                &mut ag,
                                GlobalSlotsAdjoint::Winners(&mut aw),
                                &mut grads.layers[layer],
                            );
                            give_jets(&mut adj, local, al);
                        }
                        PoolKind::Average => {
                            let mut ah = take_jets(&mut adj, hid, dense);
                            ops::concat_affine_backward(
                                &params.layers[layer],
                                loc,
                                &pooled.g,
                                &pooled.record,
                                pooled.slots(dense),
                                &a,
                                &mut al,
                                &mut ag,
                                GlobalSlotsAdjoint::Dense(&mut ah),
                                &mut grads.layers[layer],
                            );
                            give_jets(&mut adj, local, al);
                            give_jets(&mut adj, hid, ah);
                        }
                    }
                    adj[pool] = Some(Adjoint::Pooled { g: ag, winners: aw });
                }
                (&Op::Pool { input }, Adjoint::Pooled { g: ag, winners: aw }) => {
                    let pooled = self.pooled_at(i)?;
                    let h = self.jets_at(input)?;
                    let mut ah = take_jets(&mut adj, input, h);
                    match pooled.record.kind {
                        PoolKind::Max => ops::scatter_winners(&pooled.record, &ag, &aw, &mut ah),
                        PoolKind::Average => ops::pool_backward(&pooled.record, &ag, &mut ah),
                    }
                    give_jets(&mut adj, input, ah);
                }
                (&Op::PoolHead { layer, input }, Adjoint::Pooled { g: ag, winners: aw }) => {
                    let Value::Head(head) = &self.values[i] else { unreachable!() };
                    let x = self.jets_at(input)?;
                    let mut ax = take_jets(&mut adj, input, x);
                    ops::affine_tanh_max_backward(&params.layers[layer], x, head, &ag, &aw, &mut ax, &mut grads.layers[layer]);
                    give_jets(&mut adj, input, ax);
                }
                _ => unreachable!("adjoint kind does not match node {i}"),
            }
        }
        Ok(())
    }
}

fn take_jets(adj: &mut [Option<Adjoint>], i: usize, like: &JetBatch) -> JetBatch {
    match adj[i].take() {
        Some(Adjoint::Jets(j)) => j,
        _ => JetBatch::zeros(like.points(), like.channels()),
    }
}

/// Puts an adjoint back, summing if the slot was refilled meanwhile (a node
/// reached through two paths of the same operation).
fn give_jets(adj: &mut [Option<Adjoint>], i: usize, value: JetBatch) {
    match adj[i].take() {
        Some(Adjoint::Jets(mut prev)) => {
            prev.as_mut_slice().iter_mut().zip(value.as_slice()).for_each(|(a, b)| *a += b);
            adj[i] = Some(Adjoint::Jets(prev));
        }
        _ => adj[i] = Some(Adjoint::Jets(value)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::fd;
    use crate::autodiff::params::Layer;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_params(seed: u64) -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = [(2, 3), (3, 4), (7, 3), (3, 2)];
        let mut layers: Vec<Layer> = dims.iter().map(|&(i, o)| Layer::glorot(i, o, &mut rng)).collect();
        for l in &mut layers {
            l.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.3..0.3));
        }
        ParamStore::new(layers)
    }

    fn coords() -> Vec<[f64; 2]> {
        vec![[0.1, 0.2], [-0.4, 0.7], [0.9, -0.3], [0.05, -0.8], [-0.6, -0.1]]
    }

    #[derive(Debug, Clone, Copy)]
    enum Graph {
        Dense(PoolKind),
        FusedMax,
    }

    const GRAPHS: [Graph; 3] = [Graph::Dense(PoolKind::Max), Graph::Dense(PoolKind::Average), Graph::FusedMax];

    fn record(tape: &mut Tape, params: &ParamStore, pts: &[[f64; 2]], graph: Graph) -> NodeId {
        let x = tape.input(JetBatch::seed_coordinates(pts));
        let a = tape.affine(params, 0, x).unwrap();
        let local = tape.tanh(a).unwrap();
        let g = match graph {
            Graph::Dense(kind) => {
                let b = tape.affine(params, 1, local).unwrap();
                let h = tape.tanh(b).unwrap();
                tape.pool(h, kind).unwrap()
            }
            Graph::FusedMax => tape.affine_tanh_max_pool(params, 1, local).unwrap(),
        };
        let cat = tape.concat(local, g).unwrap();
        let c = tape.affine(params, 2, cat).unwrap();
        let d = tape.tanh(c).unwrap();
        tape.affine(params, 3, d).unwrap()
    }

    // L = sum(w * o) + 0.5 * sum(o^2) over every slot of the output jets.
    fn loss(out: &JetBatch, w: &[f64]) -> f64 {
        out.as_slice().iter().zip(w).map(|(o, w)| w * o + 0.5 * o * o).sum()
    }

    fn seed_for(out: &JetBatch, w: &[f64]) -> JetBatch {
        let mut s = out.clone();
        s.as_mut_slice().iter_mut().zip(w).for_each(|(o, w)| *o += w);
        s
    }

    #[test]
    fn output_jets_match_input_differences() {
        let params = small_params(11);
        let pts = coords();
        for kind in GRAPHS {
            let mut tape = Tape::new();
            let out = record(&mut tape, &params, &pts, kind);
            let jets = tape.value(out).unwrap().clone();
            // Moving one point changes only that point's own output through
            // its local path and its share of the pooled feature.
            for p in 0..pts.len() {
                for ch in 0..2 {
                    let f = |q: [f64; 2]| {
                        let mut moved = pts.clone();
                        moved[p] = q;
                        let mut t = Tape::new();
                        let o = record(&mut t, &params, &moved, kind);
                        t.value(o).unwrap().at(0, p, ch)
                    };
                    let pr = fd::probe(&f, pts[p], 1e-4);
                    let j = jets.get(p, ch);
                    let pairs = [(j.d_x, pr.d_x), (j.d_y, pr.d_y), (j.d_xx, pr.d_xx), (j.d_yy, pr.d_yy), (j.d_xy, pr.d_xy)];
                    for (a, b) in pairs {
                        assert!(fd::relative_error(a, b, 1e-3) < 1e-5, "{kind:?} p{p} c{ch}: {a} vs {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn parameter_gradient_matches_differences() {
        let params = small_params(12);
        let pts = coords();
        for kind in GRAPHS {
            let mut tape = Tape::new();
            let out = record(&mut tape, &params, &pts, kind);
            let val = tape.value(out).unwrap().clone();
            let mut rng = ChaCha8Rng::seed_from_u64(13);
            let w: Vec<f64> = (0..val.as_slice().len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut grads = params.zeros_like();
            tape.backward(out, &seed_for(&val, &w), &params, &mut grads).unwrap();

            let eval = |p: &ParamStore| {
                let mut t = Tape::new();
                let o = record(&mut t, p, &pts, kind);
                loss(t.value(o).unwrap(), &w)
            };
            let h = 1e-6;
            for k in 0..params.parameter_count() {
                let mut plus = params.clone();
                plus.set(k, params.get(k) + h);
                let mut minus = params.clone();
                minus.set(k, params.get(k) - h);
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let analytic = grads.get(k);
                assert!(
                    fd::relative_error(analytic, numeric, 1e-4) < 1e-6,
                    "{kind:?} parameter {k}: {analytic} vs {numeric}"
                );
            }
        }
    }

    #[test]
    fn fused_head_matches_dense_graph() {
        let params = small_params(18);
        let pts = coords();
        let mut dense = Tape::new();
        let a = record(&mut dense, &params, &pts, Graph::Dense(PoolKind::Max));
        let mut fused = Tape::new();
        let b = record(&mut fused, &params, &pts, Graph::FusedMax);
        let (va, vb) = (dense.value(a).unwrap().clone(), fused.value(b).unwrap().clone());
        assert!(va.max_abs_diff(&vb) < 1e-14);
        let mut ga = params.zeros_like();
        let mut gb = params.zeros_like();
        dense.backward(a, &va, &params, &mut ga).unwrap();
        fused.backward(b, &vb, &params, &mut gb).unwrap();
        for k in 0..params.parameter_count() {
            assert!((ga.get(k) - gb.get(k)).abs() < 1e-13, "parameter {k}");
        }
        let ia = dense.input_adjoint(NodeId(0)).unwrap();
        let ib = fused.input_adjoint(NodeId(0)).unwrap();
        assert!(ia.max_abs_diff(ib) < 1e-13);
    }

    #[test]
    fn input_adjoint_is_recorded() {
        let params = small_params(14);
        let mut tape = Tape::new();
        let out = record(&mut tape, &params, &coords(), Graph::FusedMax);
        let seed = tape.value(out).unwrap().clone();
        let mut grads = params.zeros_like();
        tape.backward(out, &seed, &params, &mut grads).unwrap();
        let adj = tape.input_adjoint(NodeId(0)).unwrap();
        assert_eq!((adj.points(), adj.channels()), (5, 2));
    }

    #[test]
    fn backward_twice_is_an_error() {
        let params = small_params(15);
        let mut tape = Tape::new();
        let out = record(&mut tape, &params, &coords(), Graph::FusedMax);
        let seed = tape.value(out).unwrap().clone();
        let mut grads = params.zeros_like();
        tape.backward(out, &seed, &params, &mut grads).unwrap();
        assert_eq!(tape.backward(out, &seed, &params, &mut grads), Err(AutodiffError::TapeConsumed));
        assert_eq!(tape.value(out).unwrap_err(), AutodiffError::TapeConsumed);
    }

    #[test]
    fn backward_without_forward_is_an_error() {
        let params = small_params(16);
        let mut grads = params.zeros_like();
        let mut tape = Tape::new();
        let r = tape.backward(NodeId(0), &JetBatch::zeros(1, 1), &params, &mut grads);
        assert_eq!(r, Err(AutodiffError::NothingRecorded));
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let params = small_params(17);
        let mut tape = Tape::new();
        let x = tape.input(JetBatch::seed_coordinates(&coords()));
        assert!(matches!(tape.affine(&params, 1, x), Err(AutodiffError::ShapeMismatch { .. })));
        assert_eq!(tape.affine(&params, 9, x), Err(AutodiffError::UnknownLayer(9)));
        assert_eq!(tape.concat(x, x), Err(AutodiffError::NotPooled(0)));
        let out = tape.affine(&params, 0, x).unwrap();
        let mut grads = ParamStore::new(vec![Layer::zeros(1, 1)]);
        let seed = tape.value(out).unwrap().clone();
        assert_eq!(tape.backward(out, &seed, &params, &mut grads), Err(AutodiffError::GradientShape));
    }
}
