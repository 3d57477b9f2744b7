//! Small trainable multi-level encoder and the low/high feature integration.
//!
//! The encoder has four stages of [`ConvBlock`]s. Stages 1-2 are merged into
//! the low-level integrated features, stages 3-4 into the high-level ones.
//! Both are produced at the shared working resolution `H/4 x W/4`:
//! every selected stage is bilinearly resized there, the results are
//! channel-concatenated, then a 3x3 conv + ReLU maps them to the guide width.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Conv, ConvBlock};
use crate::params::{Bound, Init, ParamKey, ParamStore};
use crate::tensor::{Graph, TensorId};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncoderConfig {
    pub channels: [usize; 4],
    pub strides: [usize; 4],
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            channels: [16, 32, 64, 64],
            strides: [1, 2, 2, 2],
        }
    }
}

#[derive(Clone, Debug)]
pub struct EncoderParams {
    pub stages: Vec<ConvBlock>,
}

impl EncoderParams {
    pub fn new(store: &mut ParamStore, cfg: &EncoderConfig, init: Init, rng: &mut impl Rng) -> Self {
        let mut in_ch = 3;
        let stages = (0..4)
            .map(|s| {
                let block = ConvBlock::new(
                    store,
                    &format!("encoder.stage{}", s + 1),
                    in_ch,
                    cfg.channels[s],
                    cfg.strides[s],
                    init,
                    rng,
                );
                in_ch = cfg.channels[s];
                block
            })
            .collect();
        EncoderParams { stages }
    }

    pub fn keys(&self) -> Vec<ParamKey> {
        self.stages.iter().flat_map(ConvBlock::keys).collect()
    }
}

/// Which encoder stages an integration merges.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    Low,
    High,
}

impl Level {
    pub fn stages(self) -> std::ops::Range<usize> {
        match self {
            Level::Low => 0..2,
            Level::High => 2..4,
        }
    }
}

/// Integrated low-level (`f_low`) and high-level (`f_high`) features.
#[derive(Clone, Copy, Debug)]
pub struct FeatureBundle {
    pub f_low: TensorId,
    pub f_high: TensorId,
}

impl FeatureBundle {
    pub fn get(&self, level: Level) -> TensorId {
        match level {
            Level::Low => self.f_low,
            Level::High => self.f_high,
        }
    }
}

/// Runs the four encoder stages. `H` and `W` must be multiples of 8.
pub fn encode(g: &mut Graph, p: &Bound, encoder: &EncoderParams, image: TensorId) -> Result<Vec<TensorId>> {
    let (_, c, h, w) = g.value(image).dims4()?;
    if c != 3 {
        return Err(Error::shape("encode", format!("image must have 3 channels, got {c}")));
    }
    if h % 8 != 0 || w % 8 != 0 {
        return Err(Error::shape("encode", format!("image size {h}x{w} is not divisible by 8")));
    }
    let mut x = image;
    let mut outs = Vec::with_capacity(encoder.stages.len());
    for stage in &encoder.stages {
        x = stage.forward(g, p, x)?;
        outs.push(x);
    }
    Ok(outs)
}

/// Resizes the selected stages to `out_h x out_w`, concatenates them and
/// applies `conv` + ReLU.
pub fn integrate(
    g: &mut Graph,
    p: &Bound,
    conv: &Conv,
    stages: &[TensorId],
    which: Level,
    out_h: usize,
    out_w: usize,
) -> Result<TensorId> {
    let range = which.stages();
    if stages.len() < range.end {
        return Err(Error::InvalidArgument(format!(
            "integrate: need {} stages, got {}",
            range.end,
            stages.len()
        )));
    }
    let resized = stages[range]
        .iter()
        .map(|&s| g.resize_bilinear(s, out_h, out_w))
        .collect::<Result<Vec<_>>>()?;
    let merged = g.concat(&resized)?;
    let h = conv.forward(g, p, merged)?;
    g.relu(h)
}

/// Encoder plus the two integration convolutions.
#[derive(Clone, Debug)]
pub struct Backbone {
    pub encoder: EncoderParams,
    pub low: Conv,
    pub high: Conv,
    pub guide_width: usize,
}

impl Backbone {
    pub fn new(store: &mut ParamStore, cfg: &EncoderConfig, guide_width: usize, init: Init, rng: &mut impl Rng) -> Self {
        let encoder = EncoderParams::new(store, cfg, init, rng);
        let low_in = cfg.channels[0] + cfg.channels[1];
        let high_in = cfg.channels[2] + cfg.channels[3];
        let low = Conv::new(store, "integrate.low", low_in, guide_width, 3, 1, init, rng);
        let high = Conv::new(store, "integrate.high", high_in, guide_width, 3, 1, init, rng);
        Backbone {
            encoder,
            low,
            high,
            guide_width,
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, image: TensorId) -> Result<FeatureBundle> {
        let stages = encode(g, p, &self.encoder, image)?;
        let (_, _, h, w) = g.value(image).dims4()?;
        let (wh, ww) = (h / 4, w / 4);
        let f_low = integrate(g, p, &self.low, &stages, Level::Low, wh, ww)?;
        let f_high = integrate(g, p, &self.high, &stages, Level::High, wh, ww)?;
        Ok(FeatureBundle { f_low, f_high })
    }

    pub fn keys(&self) -> Vec<ParamKey> {
        let mut keys = self.encoder.keys();
        keys.extend(self.low.keys());
        keys.extend(self.high.keys());
        keys
    }
}
