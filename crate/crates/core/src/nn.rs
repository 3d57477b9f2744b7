//! Parameterised layers built on [`Graph`] ops.

use rand::Rng;

use crate::error::Result;
use crate::params::{Bound, Init, ParamKey, ParamStore};
use crate::tensor::{Graph, Tensor, TensorId};

/// Convolution with its own weight and bias parameters.
#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: ParamKey,
    pub bias: ParamKey,
    pub stride: usize,
    pub padding: usize,
}

impl Conv {
    /// A `k x k` conv with "same" padding for stride 1.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        init: Init,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            init.sample(&[out_channels, in_channels, kernel, kernel], rng),
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out_channels]));
        Conv {
            weight,
            bias,
            stride,
            padding: kernel / 2,
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: TensorId) -> Result<TensorId> {
        g.conv2d(x, p.id(self.weight), p.id(self.bias), self.stride, self.padding)
    }

    pub fn keys(&self) -> [ParamKey; 2] {
        [self.weight, self.bias]
    }
}

/// Two 3x3 convolutions, each followed by ReLU.
#[derive(Clone, Debug)]
pub struct ConvBlock {
    pub first: Conv,
    pub second: Conv,
}

impl ConvBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        init: Init,
        rng: &mut impl Rng,
    ) -> Self {
        ConvBlock {
            first: Conv::new(store, &format!("{name}.0"), in_channels, out_channels, 3, stride, init, rng),
            second: Conv::new(store, &format!("{name}.1"), out_channels, out_channels, 3, 1, init, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: TensorId) -> Result<TensorId> {
        let h = self.first.forward(g, p, x)?;
        let h = g.relu(h)?;
        let h = self.second.forward(g, p, h)?;
        g.relu(h)
    }

    pub fn keys(&self) -> Vec<ParamKey> {
        self.first.keys().into_iter().chain(self.second.keys()).collect()
    }
}
