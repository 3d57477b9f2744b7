//! Recurrent two-stream guided refinement.
//!
//! Step 0 turns the initial reference features (high-level by default) into
//! guide saliency/boundary features with the stream blocks `phi_s[0]`,
//! `phi_b[0]`. Each later step `i` feeds `Cat(F^G_{i-1}, reference_i)` through
//! `phi_s[i]` / `phi_b[i]`, and the guide block fuses the results:
//!
//! ```text
//! F^S_i = F^S_{i-1} + F^B_{i-1} + F^{G_S}_i      (F^S_0 = F^{G_S}_0)
//! F^B_i = F^B_{i-1} + F^S_{i-1} + F^{G_B}_i      (F^B_0 = F^{G_B}_0)
//! F^G_i = Cat(F^S_i, F^B_i)
//! ```
//!
//! Every step emits `S_i = up(sigmoid(head_s[i](F^S_i)))` and likewise `B_i`.
//!
//! Two reduced variants exist for ablations. SGRM drops the boundary stream
//! entirely (`F^G_i = F^S_i`, `F^S_i = F^S_{i-1} + F^{G_S}_i`). RRB keeps only a
//! one-channel logit map between steps: each step adds a one-channel residual
//! computed from `Cat(reference_i, logit_{i-1})`, with references alternating
//! low/high.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::backbone::{Backbone, EncoderConfig, FeatureBundle, Level};
use crate::error::{Error, Result};
use crate::nn::{Conv, ConvBlock};
use crate::params::{Bound, Init, ParamKey, ParamStore};
use crate::tensor::{Graph, TensorId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Recurrence {
    Tgrm,
    Sgrm,
    Rrb,
}

/// Which integrated features feed the streams at each step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Reference {
    /// High-level at step 0, low-level afterwards.
    Low,
    /// High-level everywhere.
    Hh,
    /// Low-level everywhere, including the initial features.
    Ll,
    /// High-level at step 0, then low, high, low, ...
    Hl2,
}

impl fmt::Display for Recurrence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Recurrence::Tgrm => "tgrm",
            Recurrence::Sgrm => "sgrm",
            Recurrence::Rrb => "rrb",
        })
    }
}

impl FromStr for Recurrence {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "tgrm" => Ok(Recurrence::Tgrm),
            "sgrm" => Ok(Recurrence::Sgrm),
            "rrb" => Ok(Recurrence::Rrb),
            other => Err(format!("unknown recurrence `{other}` (expected tgrm|sgrm|rrb)")),
        }
    }
}

impl fmt::Display for Reference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reference::Low => "low",
            Reference::Hh => "hh",
            Reference::Ll => "ll",
            Reference::Hl2 => "hl2",
        })
    }
}

impl FromStr for Reference {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Ok(Reference::Low),
            "hh" => Ok(Reference::Hh),
            "ll" => Ok(Reference::Ll),
            "hl2" | "hl-2" => Ok(Reference::Hl2),
            other => Err(format!("unknown reference `{other}` (expected low|hh|ll|hl2)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct VariantSelector {
    pub recurrence: Recurrence,
    pub reference: Reference,
    pub steps: usize,
}

impl Default for VariantSelector {
    fn default() -> Self {
        VariantSelector {
            recurrence: Recurrence::Tgrm,
            reference: Reference::Low,
            steps: 4,
        }
    }
}

impl VariantSelector {
    /// Integrated features used at `step`.
    pub fn reference_level(&self, step: usize) -> Level {
        if self.recurrence == Recurrence::Rrb {
            return match (step, self.reference) {
                (0, Reference::Ll) => Level::Low,
                (0, _) => Level::High,
                (i, _) if i % 2 == 1 => Level::Low,
                _ => Level::High,
            };
        }
        match (self.reference, step) {
            (Reference::Hh, _) => Level::High,
            (Reference::Ll, _) => Level::Low,
            (_, 0) => Level::High,
            (Reference::Low, _) => Level::Low,
            (Reference::Hl2, i) if i % 2 == 1 => Level::Low,
            (Reference::Hl2, _) => Level::High,
        }
    }

    /// Short row label, e.g. `TGRM-2` or `TGRM-1-hh`.
    pub fn label(&self) -> String {
        let base = format!("{}-{}", self.recurrence.to_string().to_uppercase(), self.steps);
        match self.reference {
            Reference::Low => base,
            r => format!("{base}-{r}"),
        }
    }
}

/// Parameters of one recurrent step.
#[derive(Clone, Debug)]
pub struct StepParams {
    pub phi_s: ConvBlock,
    pub phi_b: Option<ConvBlock>,
    /// 1x1 conv to one channel. For RRB: initial logit (step 0) or residual.
    pub head_s: Conv,
    pub head_b: Option<Conv>,
}

impl StepParams {
    pub fn keys(&self) -> Vec<ParamKey> {
        let mut keys = self.phi_s.keys();
        if let Some(b) = &self.phi_b {
            keys.extend(b.keys());
        }
        keys.extend(self.head_s.keys());
        if let Some(h) = &self.head_b {
            keys.extend(h.keys());
        }
        keys
    }

    /// Keys of the boundary stream and boundary head.
    pub fn boundary_keys(&self) -> Vec<ParamKey> {
        let mut keys = self.phi_b.as_ref().map(ConvBlock::keys).unwrap_or_default();
        if let Some(h) = &self.head_b {
            keys.extend(h.keys());
        }
        keys
    }
}

/// Per-step stream blocks and map heads, `steps + 1` entries.
#[derive(Clone, Debug)]
pub struct StreamParams {
    pub steps: Vec<StepParams>,
}

impl StreamParams {
    /// Input channels of the step-`i` stream blocks.
    pub fn stream_in_channels(recurrence: Recurrence, guide_width: usize, step: usize) -> usize {
        match (recurrence, step) {
            (_, 0) => guide_width,
            (Recurrence::Tgrm, _) => 3 * guide_width,
            (Recurrence::Sgrm, _) => 2 * guide_width,
            (Recurrence::Rrb, _) => guide_width + 1,
        }
    }

    pub fn new(
        store: &mut ParamStore,
        selector: &VariantSelector,
        guide_width: usize,
        share: bool,
        init: Init,
        rng: &mut impl Rng,
    ) -> Self {
        let two_stream = selector.recurrence == Recurrence::Tgrm;
        let mut steps: Vec<StepParams> = Vec::with_capacity(selector.steps + 1);
        for i in 0..=selector.steps {
            let cin = Self::stream_in_channels(selector.recurrence, guide_width, i);
            let prefix = format!("{}.step{i}", selector.recurrence);
            let (phi_s, phi_b) = if share && i >= 2 {
                (steps[1].phi_s.clone(), steps[1].phi_b.clone())
            } else {
                let phi_s = ConvBlock::new(store, &format!("{prefix}.phi_s"), cin, guide_width, 1, init, rng);
                let phi_b = two_stream
                    .then(|| ConvBlock::new(store, &format!("{prefix}.phi_b"), cin, guide_width, 1, init, rng));
                (phi_s, phi_b)
            };
            let head_s = Conv::new(store, &format!("{prefix}.head_s"), guide_width, 1, 1, 1, init, rng);
            let head_b =
                two_stream.then(|| Conv::new(store, &format!("{prefix}.head_b"), guide_width, 1, 1, 1, init, rng));
            steps.push(StepParams {
                phi_s,
                phi_b,
                head_s,
                head_b,
            });
        }
        StreamParams { steps }
    }
}

/// Fused features after the guide block of one step.
#[derive(Clone, Copy, Debug)]
pub struct GuideState {
    pub f_s: TensorId,
    /// Absent for the single-stream variant.
    pub f_b: Option<TensorId>,
    /// `Cat(f_s, f_b)`, or `f_s` for the single-stream variant.
    pub f_g: TensorId,
    pub step: usize,
}

/// Saliency and (when the variant has one) boundary probabilities of one step.
#[derive(Clone, Copy, Debug)]
pub struct TwoStreamMap {
    pub saliency: TensorId,
    pub boundary: Option<TensorId>,
    pub step: usize,
}

/// One feature stream: `phi(reference)` at step 0, `phi(Cat(guide_prev, reference))` after.
pub fn stream_forward(
    g: &mut Graph,
    p: &Bound,
    phi: &ConvBlock,
    step: usize,
    guide_prev: Option<TensorId>,
    reference: TensorId,
) -> Result<TensorId> {
    match (step, guide_prev) {
        (0, None) => phi.forward(g, p, reference),
        (0, Some(_)) => Err(Error::InvalidArgument("stream_forward: step 0 takes no previous guide".into())),
        (_, None) => Err(Error::InvalidArgument(format!(
            "stream_forward: step {step} needs the previous guide features"
        ))),
        (_, Some(prev)) => {
            let input = g.concat(&[prev, reference])?;
            phi.forward(g, p, input)
        }
    }
}

/// Guide block. `gs_b = None` selects the single-stream form.
pub fn guide_block(
    g: &mut Graph,
    gs_s: TensorId,
    gs_b: Option<TensorId>,
    prev: Option<&GuideState>,
    step: usize,
) -> Result<GuideState> {
    let (f_s, f_b) = match (step, prev) {
        (0, None) => (gs_s, gs_b),
        (0, Some(_)) => return Err(Error::InvalidArgument("guide_block: step 0 takes no previous state".into())),
        (_, None) => {
            return Err(Error::InvalidArgument(format!(
                "guide_block: step {step} needs the previous state"
            )))
        }
        (_, Some(prev)) => {
            if prev.step + 1 != step {
                return Err(Error::InvalidArgument(format!(
                    "guide_block: previous state is from step {}, expected {}",
                    prev.step,
                    step - 1
                )));
            }
            match (gs_b, prev.f_b) {
                (Some(gs_b), Some(prev_b)) => {
                    let cross_s = g.add(prev.f_s, prev_b)?;
                    let cross_b = g.add(prev_b, prev.f_s)?;
                    (g.add(cross_s, gs_s)?, Some(g.add(cross_b, gs_b)?))
                }
                (None, None) => (g.add(prev.f_s, gs_s)?, None),
                _ => {
                    return Err(Error::InvalidArgument(
                        "guide_block: boundary stream present in only one of the inputs".into(),
                    ))
                }
            }
        }
    };
    let f_g = match f_b {
        Some(f_b) => g.concat(&[f_s, f_b])?,
        None => f_s,
    };
    Ok(GuideState { f_s, f_b, f_g, step })
}

fn emit(g: &mut Graph, p: &Bound, head: &Conv, features: TensorId, full_h: usize, full_w: usize) -> Result<TensorId> {
    let logit = head.forward(g, p, features)?;
    let prob = g.sigmoid(logit)?;
    g.resize_bilinear(prob, full_h, full_w)
}

/// Saliency/boundary maps of one guide state at full resolution.
pub fn emit_maps(
    g: &mut Graph,
    p: &Bound,
    state: &GuideState,
    params: &StepParams,
    full_h: usize,
    full_w: usize,
) -> Result<TwoStreamMap> {
    let saliency = emit(g, p, &params.head_s, state.f_s, full_h, full_w)?;
    let boundary = match (state.f_b, &params.head_b) {
        (Some(f_b), Some(head)) => Some(emit(g, p, head, f_b, full_h, full_w)?),
        (None, None) => None,
        _ => return Err(Error::InvalidArgument("emit_maps: boundary head/state mismatch".into())),
    };
    Ok(TwoStreamMap {
        saliency,
        boundary,
        step: state.step,
    })
}

/// Everything produced by a guided (TGRM/SGRM) forward pass.
#[derive(Clone, Debug)]
pub struct GuidedTrace {
    pub bundle: FeatureBundle,
    pub guide_s: Vec<TensorId>,
    pub guide_b: Vec<Option<TensorId>>,
    pub states: Vec<GuideState>,
    pub maps: Vec<TwoStreamMap>,
}

/// Guided recurrence over precomputed features.
pub fn guided_refine(
    g: &mut Graph,
    p: &Bound,
    streams: &StreamParams,
    selector: &VariantSelector,
    bundle: FeatureBundle,
    full_h: usize,
    full_w: usize,
) -> Result<GuidedTrace> {
    if selector.recurrence == Recurrence::Rrb {
        return Err(Error::InvalidArgument("guided_refine: RRB has no guide block".into()));
    }
    if streams.steps.len() != selector.steps + 1 {
        return Err(Error::InvalidArgument(format!(
            "stream parameters cover {} steps, selector asks for {}",
            streams.steps.len(),
            selector.steps + 1
        )));
    }
    let mut trace = GuidedTrace {
        bundle,
        guide_s: Vec::new(),
        guide_b: Vec::new(),
        states: Vec::new(),
        maps: Vec::new(),
    };
    for (i, params) in streams.steps.iter().enumerate() {
        let reference = bundle.get(selector.reference_level(i));
        let prev = trace.states.last().copied();
        let guide_prev = prev.map(|s| s.f_g);
        let gs_s = stream_forward(g, p, &params.phi_s, i, guide_prev, reference)?;
        let gs_b = match &params.phi_b {
            Some(phi_b) => Some(stream_forward(g, p, phi_b, i, guide_prev, reference)?),
            None => None,
        };
        let state = guide_block(g, gs_s, gs_b, prev.as_ref(), i)?;
        let maps = emit_maps(g, p, &state, params, full_h, full_w)?;
        trace.guide_s.push(gs_s);
        trace.guide_b.push(gs_b);
        trace.states.push(state);
        trace.maps.push(maps);
    }
    Ok(trace)
}

/// Residual refinement over a one-channel logit map.
///
/// Returns the emitted maps and the per-step working-resolution logits.
pub fn residual_refine(
    g: &mut Graph,
    p: &Bound,
    streams: &StreamParams,
    selector: &VariantSelector,
    bundle: FeatureBundle,
    full_h: usize,
    full_w: usize,
) -> Result<(Vec<TwoStreamMap>, Vec<TensorId>)> {
    if streams.steps.len() != selector.steps + 1 {
        return Err(Error::InvalidArgument(format!(
            "stream parameters cover {} steps, selector asks for {}",
            streams.steps.len(),
            selector.steps + 1
        )));
    }
    let mut logits: Vec<TensorId> = Vec::with_capacity(streams.steps.len());
    let mut maps = Vec::with_capacity(streams.steps.len());
    for (i, params) in streams.steps.iter().enumerate() {
        let reference = bundle.get(selector.reference_level(i));
        let logit = match logits.last() {
            None => {
                let feats = stream_forward(g, p, &params.phi_s, 0, None, reference)?;
                params.head_s.forward(g, p, feats)?
            }
            Some(&prev) => {
                let feats = stream_forward(g, p, &params.phi_s, i, Some(prev), reference)?;
                let residual = params.head_s.forward(g, p, feats)?;
                g.add(prev, residual)?
            }
        };
        let prob = g.sigmoid(logit)?;
        let saliency = g.resize_bilinear(prob, full_h, full_w)?;
        logits.push(logit);
        maps.push(TwoStreamMap {
            saliency,
            boundary: None,
            step: i,
        });
    }
    Ok((maps, logits))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub guide_width: usize,
    pub encoder: EncoderConfig,
    pub selector: VariantSelector,
    pub share_stream_params: bool,
    pub init: Init,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            guide_width: 32,
            encoder: EncoderConfig::default(),
            selector: VariantSelector::default(),
            share_stream_params: false,
            init: Init::He,
        }
    }
}

/// Backbone plus recurrent refinement.
#[derive(Clone, Debug)]
pub struct SaliencyNet {
    pub config: ModelConfig,
    pub backbone: Backbone,
    pub streams: StreamParams,
}

impl SaliencyNet {
    /// Builds the network and registers its parameters in a fresh store.
    pub fn new(config: ModelConfig, rng: &mut impl Rng) -> (Self, ParamStore) {
        let mut store = ParamStore::new();
        let backbone = Backbone::new(&mut store, &config.encoder, config.guide_width, config.init, rng);
        let streams = StreamParams::new(
            &mut store,
            &config.selector,
            config.guide_width,
            config.share_stream_params,
            config.init,
            rng,
        );
        (
            SaliencyNet {
                config,
                backbone,
                streams,
            },
            store,
        )
    }

    pub fn selector(&self) -> &VariantSelector {
        &self.config.selector
    }

    /// Runs the network on `image: [N,3,H,W]`, returning `steps + 1` maps.
    pub fn forward(&self, g: &mut Graph, p: &Bound, image: TensorId) -> Result<Vec<TwoStreamMap>> {
        match self.config.selector.recurrence {
            Recurrence::Rrb => rrb_forward(g, p, self, image),
            _ => rtgr_forward(g, p, self, image),
        }
    }

    /// Keys of every parameter tensor of step `step`'s heads.
    pub fn head_keys(&self, step: usize) -> Vec<ParamKey> {
        let s = &self.streams.steps[step];
        let mut keys = s.head_s.keys().to_vec();
        if let Some(h) = &s.head_b {
            keys.extend(h.keys());
        }
        keys
    }
}

/// Guided (TGRM or SGRM) forward pass.
pub fn rtgr_forward(g: &mut Graph, p: &Bound, net: &SaliencyNet, image: TensorId) -> Result<Vec<TwoStreamMap>> {
    Ok(rtgr_trace(g, p, net, image)?.maps)
}

/// Guided forward pass that also exposes the intermediate features.
pub fn rtgr_trace(g: &mut Graph, p: &Bound, net: &SaliencyNet, image: TensorId) -> Result<GuidedTrace> {
    let (_, _, h, w) = g.value(image).dims4()?;
    let bundle = net.backbone.forward(g, p, image)?;
    guided_refine(g, p, &net.streams, &net.config.selector, bundle, h, w)
}

/// Residual refinement block forward pass; saliency maps only.
pub fn rrb_forward(g: &mut Graph, p: &Bound, net: &SaliencyNet, image: TensorId) -> Result<Vec<TwoStreamMap>> {
    let (_, _, h, w) = g.value(image).dims4()?;
    let bundle = net.backbone.forward(g, p, image)?;
    Ok(residual_refine(g, p, &net.streams, &net.config.selector, bundle, h, w)?.0)
}
