use rand::Rng;

/// One shared affine layer: `W` is `fan_out x fan_in`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { fan_in, fan_out, weight: vec![0.0; fan_in * fan_out], bias: vec![0.0; fan_out] }
    }

    /// Uniform Glorot initialization, zero bias.
    pub fn glorot<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weight = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect();
        Self { fan_in, fan_out, weight, bias: vec![0.0; fan_out] }
    }

    pub fn identity(width: usize) -> Self {
        let mut layer = Self::zeros(width, width);
        for i in 0..width {
            layer.weight[i * width + i] = 1.0;
        }
        layer
    }

    pub fn w(&self, row: usize, col: usize) -> f64 {
        self.weight[row * self.fan_in + col]
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Ordered list of layers. The same type holds gradients and optimizer
/// moments, with identical shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    pub layers: Vec<Layer>,
}

impl ParamStore {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self { layers: self.layers.iter().map(|l| Layer::zeros(l.fan_in, l.fan_out)).collect() }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Layer::parameter_count).sum()
    }

    pub fn fill(&mut self, value: f64) {
        for l in &mut self.layers {
            l.weight.fill(value);
            l.bias.fill(value);
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.fan_in == b.fan_in && a.fan_out == b.fan_out)
    }

    /// `self += k * other`, in layer order.
    pub fn add_scaled(&mut self, other: &Self, k: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weight.iter_mut().zip(&b.weight) {
                *x += k * y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += k * y;
            }
        }
    }

    /// Parameter blocks in canonical order: each layer's weight, then its bias.
    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.layers.iter().flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
    }

    pub fn blocks_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    /// Flat parameter `index` in canonical order.
    pub fn get(&self, index: usize) -> f64 {
        let mut i = index;
        for block in self.blocks() {
            if i < block.len() {
                return block[i];
            }
            i -= block.len();
        }
        panic!("parameter index {index} out of range")
    }

    pub fn set(&mut self, index: usize, value: f64) {
        let mut i = index;
        for block in self.blocks_mut() {
            if i < block.len() {
                block[i] = value;
                return;
            }
            i -= block.len();
        }
        panic!("parameter index {index} out of range")
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.blocks().flatten().copied().collect()
    }

    /// Human-readable name of block `b` in canonical order.
    pub fn block_name(b: usize) -> String {
        let kind = if b.is_multiple_of(2) { "weight" } else { "bias" };
        format!("layer {} {}", b / 2, kind)
    }
}
