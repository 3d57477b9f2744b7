use crate::error::{Error, Result};
use crate::tensor::{Graph, TensorId};
use crate::tgrm::TwoStreamMap;

/// Probability clamp used by the cross-entropy terms.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossOptions {
    pub eps: f64,
    /// Positive-class weight of the boundary term (1 = plain BCE).
    pub boundary_pos_weight: f64,
}

impl Default for LossOptions {
    fn default() -> Self {
        LossOptions {
            eps: BCE_EPS,
            boundary_pos_weight: 1.0,
        }
    }
}

/// Graph nodes of the loss.
#[derive(Clone, Debug)]
pub struct LossGraph {
    pub l_s: Vec<TensorId>,
    pub l_b: Vec<Option<TensorId>>,
    pub total: TensorId,
    pub weights: Vec<f64>,
}

/// Per-step loss values read back from the graph.
#[derive(Clone, Debug, PartialEq)]
pub struct LossBreakdown {
    pub l_s: Vec<f64>,
    /// 0 for steps without a boundary map.
    pub l_b: Vec<f64>,
    pub l_m: Vec<f64>,
    pub weights: Vec<f64>,
    pub total: f64,
}

impl LossBreakdown {
    pub fn steps(&self) -> usize {
        self.l_s.len()
    }

    /// `sum_i w_i * (l_s[i] + l_b[i])`, accumulated in step order.
    pub fn weighted_sum(&self) -> f64 {
        self.weights
            .iter()
            .zip(self.l_s.iter().zip(&self.l_b))
            .map(|(w, (s, b))| w * (s + b))
            .fold(0.0, |acc, v| acc + v)
    }
}

/// Sum over steps of `w_i * (BCE(S_i, sal_gt) + BCE(B_i, bnd_gt))`.
///
/// Steps without a boundary map contribute only their saliency term.
pub fn total_loss(
    g: &mut Graph,
    maps: &[TwoStreamMap],
    saliency_gt: TensorId,
    boundary_gt: TensorId,
    weights: &[f64],
    opts: LossOptions,
) -> Result<LossGraph> {
    if weights.len() != maps.len() {
        return Err(Error::InvalidArgument(format!(
            "loss: {} weights for {} steps",
            weights.len(),
            maps.len()
        )));
    }
    let mut l_s = Vec::with_capacity(maps.len());
    let mut l_b = Vec::with_capacity(maps.len());
    let mut total: Option<TensorId> = None;
    for (m, &w) in maps.iter().zip(weights) {
        let s = g.bce(m.saliency, saliency_gt, opts.eps, 1.0)?;
        let b = m
            .boundary
            .map(|b| g.bce(b, boundary_gt, opts.eps, opts.boundary_pos_weight))
            .transpose()?;
        let step = match b {
            Some(b) => g.add(s, b)?,
            None => s,
        };
        let weighted = g.scale(step, w)?;
        total = Some(match total {
            Some(t) => g.add(t, weighted)?,
            None => weighted,
        });
        l_s.push(s);
        l_b.push(b);
    }
    let total = total.ok_or_else(|| Error::InvalidArgument("loss: no maps".into()))?;
    Ok(LossGraph {
        l_s,
        l_b,
        total,
        weights: weights.to_vec(),
    })
}

impl LossGraph {
    pub fn breakdown(&self, g: &Graph) -> LossBreakdown {
        let item = |id: TensorId| g.value(id).item().expect("scalar loss");
        let l_s: Vec<f64> = self.l_s.iter().map(|&id| item(id)).collect();
        let l_b: Vec<f64> = self.l_b.iter().map(|b| b.map_or(0.0, item)).collect();
        let l_m = l_s.iter().zip(&l_b).map(|(s, b)| s + b).collect();
        LossBreakdown {
            l_s,
            l_b,
            l_m,
            weights: self.weights.clone(),
            total: item(self.total),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Precision, Tensor};

    fn setup(values: &[f64]) -> (Graph, TensorId, TensorId, TensorId) {
        let mut g = Graph::new(Precision::F64);
        let n = values.len();
        let gt = g.constant(Tensor::new(&[1, 1, 1, n], values.to_vec()).unwrap());
        let bgt = g.constant(Tensor::new(&[1, 1, 1, n], values.iter().map(|v| 1.0 - v).collect()).unwrap());
        let pred = g.leaf(Tensor::full(&[1, 1, 1, n], 0.3).with_requires_grad(true));
        (g, gt, bgt, pred)
    }

    #[test]
    fn perfect_prediction_is_near_zero() {
        let mut g = Graph::new(Precision::F64);
        let gt = g.constant(Tensor::new(&[1, 1, 1, 4], vec![0.0, 1.0, 1.0, 0.0]).unwrap());
        let maps = [TwoStreamMap {
            saliency: gt,
            boundary: Some(gt),
            step: 0,
        }];
        let lg = total_loss(&mut g, &maps, gt, gt, &[1.0], LossOptions::default()).unwrap();
        let b = lg.breakdown(&g);
        let expect = -2.0 * (1.0 - BCE_EPS).ln();
        assert!((b.total - expect).abs() < 1e-15);
        assert!(b.total < 1e-6);
    }

    #[test]
    fn weights_scale_linearly() {
        let (mut g, gt, bgt, pred) = setup(&[0.0, 1.0, 1.0]);
        let one = TwoStreamMap {
            saliency: pred,
            boundary: Some(pred),
            step: 0,
        };
        let single = total_loss(&mut g, &[one], gt, bgt, &[1.0], LossOptions::default()).unwrap();
        let double = total_loss(&mut g, &[one, one], gt, bgt, &[1.0, 1.0], LossOptions::default()).unwrap();
        let (s, d) = (single.breakdown(&g), double.breakdown(&g));
        assert_eq!(d.total, 2.0 * s.total);
        assert_eq!(d.l_m, vec![s.total, s.total]);
    }

    #[test]
    fn zero_weight_stops_gradient() {
        let (mut g, gt, bgt, p0) = setup(&[0.0, 1.0]);
        let p1 = g.leaf(Tensor::full(&[1, 1, 1, 2], 0.6).with_requires_grad(true));
        let maps = [
            TwoStreamMap {
                saliency: p0,
                boundary: None,
                step: 0,
            },
            TwoStreamMap {
                saliency: p1,
                boundary: None,
                step: 1,
            },
        ];
        let lg = total_loss(&mut g, &maps, gt, bgt, &[0.0, 1.0], LossOptions::default()).unwrap();
        g.backward(lg.total).unwrap();
        assert!(g.grad(p0).unwrap().iter().all(|&v| v == 0.0));
        assert!(g.grad(p1).unwrap().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn length_mismatch_and_missing_boundary() {
        let (mut g, gt, bgt, pred) = setup(&[0.0, 1.0]);
        let m = TwoStreamMap {
            saliency: pred,
            boundary: None,
            step: 0,
        };
        assert!(total_loss(&mut g, &[m], gt, bgt, &[1.0, 1.0], LossOptions::default()).is_err());
        let b = total_loss(&mut g, &[m], gt, bgt, &[1.0], LossOptions::default())
            .unwrap()
            .breakdown(&g);
        assert_eq!(b.l_b, vec![0.0]);
        assert_eq!(b.total, b.weighted_sum());
    }
}
