//! Integer kernels shared by every execution schedule: input encoding,
//! message generation (MatVec), max aggregation and BAQ
//! (bias, ReLU, requantization to INT8).

use serde::{Deserialize, Serialize};

use super::fixed_point::{requantize, Requant};
use super::model::LayerParams;
use super::EngineError;

/// Polarity to INT8 input feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputEncoding {
    #[serde(rename = "0")]
    pub off: i8,
    #[serde(rename = "1")]
    pub on: i8,
}

impl Default for InputEncoding {
    fn default() -> Self {
        Self { off: -127, on: 127 }
    }
}

pub fn encode_input(p: u8, encoding: &InputEncoding) -> i8 {
    if p == 0 {
        encoding.off
    } else {
        encoding.on
    }
}

/// Value the aggregation register takes when a node has no neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyIdentity {
    /// Cleared max register: an isolated node gets `BAQ(0)`, i.e. its bias.
    #[default]
    Zero,
    /// Max-identity: isolated nodes produce all-zero features after ReLU.
    NegInfinity,
}

impl EmptyIdentity {
    pub fn value(self) -> i32 {
        match self {
            EmptyIdentity::Zero => 0,
            EmptyIdentity::NegInfinity => i32::MIN,
        }
    }
}

/// Scales a raw pixel offset magnitude into the layer's input activation
/// domain.
pub fn quantize_offset(offset: i32, rq: Requant) -> i8 {
    requantize(i64::from(offset.unsigned_abs()), rq).clamp(0, 127) as i8
}

/// `acc[c] = Σ_k W[c][k] · (x_j, q(|dx|), q(|dy|))[k]` with checked 32-bit
/// accumulation.
pub fn message_matvec(layer: &LayerParams, x_j: &[i8], dx: i32, dy: i32) -> Result<Vec<i32>, EngineError> {
    let mut out = vec![0; layer.c_out];
    let qdx = quantize_offset(dx, layer.pos_requant);
    let qdy = quantize_offset(dy, layer.pos_requant);
    message_matvec_into(layer, x_j, qdx, qdy, &mut out)?;
    Ok(out)
}

/// [`message_matvec`] with pre-quantized offsets, writing into `out`.
pub fn message_matvec_into(
    layer: &LayerParams,
    x_j: &[i8],
    qdx: i8,
    qdy: i8,
    out: &mut [i32],
) -> Result<(), EngineError> {
    if x_j.len() != layer.c_in {
        return Err(EngineError::LengthMismatch {
            expected: layer.c_in,
            got: x_j.len(),
        });
    }
    if out.len() != layer.c_out {
        return Err(EngineError::LengthMismatch {
            expected: layer.c_out,
            got: out.len(),
        });
    }
    let row_len = layer.c_in + 2;
    for (c, (acc_out, row)) in out.iter_mut().zip(layer.weights.chunks_exact(row_len)).enumerate() {
        let mut acc: i32 = 0;
        let inputs = x_j.iter().copied().chain([qdx, qdy]);
        for (&w, x) in row.iter().zip(inputs) {
            acc = acc
                .checked_add(i32::from(w) * i32::from(x))
                .ok_or(EngineError::AccOverflow { channel: c })?;
        }
        *acc_out = acc;
    }
    Ok(())
}

/// Elementwise maximum of equally sized messages; `identity` fills the
/// result when there are none.
pub fn aggregate_max<M: AsRef<[i32]>>(
    messages: &[M],
    width: usize,
    identity: EmptyIdentity,
) -> Result<Vec<i32>, EngineError> {
    let Some((first, rest)) = messages.split_first() else {
        return Ok(vec![identity.value(); width]);
    };
    let mut agg = first.as_ref().to_vec();
    if agg.len() != width {
        return Err(EngineError::LengthMismatch {
            expected: width,
            got: agg.len(),
        });
    }
    for m in rest {
        let m = m.as_ref();
        if m.len() != width {
            return Err(EngineError::LengthMismatch {
                expected: width,
                got: m.len(),
            });
        }
        max_into(&mut agg, m);
    }
    Ok(agg)
}

#[inline]
pub(crate) fn max_into(agg: &mut [i32], msg: &[i32]) {
    for (a, &m) in agg.iter_mut().zip(msg) {
        *a = (*a).max(m);
    }
}

/// Bias, ReLU and requantization of one accumulator.
#[inline]
pub fn baq_scalar(acc: i32, bias: i32, rq: Requant) -> i8 {
    let v = (i64::from(acc) + i64::from(bias)).max(0);
    requantize(v, rq).clamp(0, 127) as i8
}

pub fn baq(acc: &[i32], layer: &LayerParams) -> Vec<i8> {
    acc.iter()
        .zip(&layer.bias)
        .map(|(&a, &b)| baq_scalar(a, b, layer.requant))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn_engine::model::LayerParams;

    fn layer(c_in: usize, c_out: usize, weights: Vec<i8>, bias: Vec<i32>, requant: Requant) -> LayerParams {
        LayerParams {
            c_in,
            c_out,
            weights,
            bias,
            requant,
            pos_requant: Requant::IDENTITY,
            s_in: None,
        }
    }

    #[test]
    fn encoding() {
        let e = InputEncoding::default();
        assert_eq!(encode_input(1, &e), 127);
        assert_eq!(encode_input(0, &e), -127);
        let custom = InputEncoding { off: 0, on: 1 };
        assert_eq!(encode_input(0, &custom), 0);
        assert_eq!(encode_input(1, &custom), 1);
    }

    #[test]
    fn matvec_hand_values() {
        let zero = layer(3, 2, vec![0; 10], vec![0; 2], Requant::IDENTITY);
        assert_eq!(message_matvec(&zero, &[5, -3, 9], 2, 1).unwrap(), vec![0, 0]);

        let l = layer(1, 1, vec![2, 1, 1], vec![0], Requant::IDENTITY);
        assert_eq!(message_matvec(&l, &[3], 4, 0).unwrap(), vec![10]);
        // sign of the offset is dropped
        assert_eq!(message_matvec(&l, &[3], -4, 0).unwrap(), vec![10]);
        assert!(message_matvec(&l, &[3, 3], 0, 0).is_err());
    }

    #[test]
    fn aggregation() {
        let ms = vec![vec![1, -5], vec![-2, 7]];
        assert_eq!(aggregate_max(&ms, 2, EmptyIdentity::Zero).unwrap(), vec![1, 7]);
        assert_eq!(aggregate_max(&[vec![-3, 4]], 2, EmptyIdentity::Zero).unwrap(), vec![-3, 4]);
        let none: [Vec<i32>; 0] = [];
        assert_eq!(aggregate_max(&none, 3, EmptyIdentity::Zero).unwrap(), vec![0; 3]);
        assert_eq!(
            aggregate_max(&none, 2, EmptyIdentity::NegInfinity).unwrap(),
            vec![i32::MIN; 2]
        );
        assert!(aggregate_max(&[vec![1], vec![1, 2]], 1, EmptyIdentity::Zero).is_err());
    }

    #[test]
    fn baq_cases() {
        let eighth = Requant::new(1 << 27, 30);
        let l = layer(1, 1, vec![0; 3], vec![0], eighth);
        assert_eq!(baq(&[0], &l), vec![0]);
        assert_eq!(baq(&[-100], &l), vec![0]);
        let biased = layer(1, 1, vec![0; 3], vec![24], eighth);
        // (1000 + 24) / 8 = 128, saturates
        assert_eq!(baq(&[1000], &biased), vec![127]);
        assert_eq!(baq(&[1000 - 8], &biased), vec![127]);
        assert_eq!(baq(&[1000 - 16], &biased), vec![126]);
        // 12 / 8 = 1.5 -> 2, 20 / 8 = 2.5 -> 2
        assert_eq!(baq(&[12], &l), vec![2]);
        assert_eq!(baq(&[20], &l), vec![2]);
        // empty-neighborhood paths
        assert_eq!(baq_scalar(EmptyIdentity::Zero.value(), 40, eighth), 5);
        assert_eq!(baq_scalar(EmptyIdentity::NegInfinity.value(), 40, eighth), 0);
        assert_eq!(baq_scalar(i32::MAX, i32::MAX, Requant::IDENTITY), 127);
    }
}
