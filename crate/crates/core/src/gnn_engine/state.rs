//! Per-stream engine state outside the queue grid: the write-once feature
//! store, the readout grid and the prediction head.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::{DenseHead, GridSpec};
use super::EngineError;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StoreError {
    #[error("feature slot (n={n}, l={layer}) read before it was written")]
    Unwritten { n: u32, layer: usize },
    #[error("feature slot (n={n}, l={layer}) written twice")]
    AlreadyWritten { n: u32, layer: usize },
    #[error("layer {layer} outside the {slots} stored slots")]
    LayerOutOfRange { layer: usize, slots: usize },
    #[error("slot (n={n}, l={layer}) holds {expected} values, got {got}")]
    LengthMismatch {
        n: u32,
        layer: usize,
        expected: usize,
        got: usize,
    },
    #[error("malformed feature dump: {0}")]
    MalformedDump(String),
}

/// Node features for every event and every layer slot, laid out as one
/// contiguous record per event (the external DRAM image). Slot 0 is the
/// encoded input; slot `l` is the output of convolution layer `l`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureStore {
    widths: Vec<usize>,
    offsets: Vec<usize>,
    stride: usize,
    data: Vec<i8>,
    written: Vec<bool>,
    bytes_read: u64,
    bytes_written: u64,
}

impl FeatureStore {
    pub fn new(slot_widths: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(slot_widths.len());
        let mut stride = 0;
        for w in &slot_widths {
            offsets.push(stride);
            stride += w;
        }
        Self {
            widths: slot_widths,
            offsets,
            stride,
            data: Vec::new(),
            written: Vec::new(),
            bytes_read: 0,
            bytes_written: 0,
        }
    }

    pub fn slot_widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn num_slots(&self) -> usize {
        self.widths.len()
    }

    /// Number of event records allocated so far.
    pub fn num_events(&self) -> usize {
        if self.stride == 0 {
            0
        } else {
            self.data.len() / self.stride
        }
    }

    /// Bytes per event record.
    pub fn record_len(&self) -> usize {
        self.stride
    }

    /// Cumulative traffic through [`read`](Self::read) and
    /// [`write`](Self::write).
    pub fn traffic(&self) -> (u64, u64) {
        (self.bytes_read, self.bytes_written)
    }

    fn index(&self, n: u32, layer: usize) -> Result<usize, StoreError> {
        if layer >= self.widths.len() {
            return Err(StoreError::LayerOutOfRange {
                layer,
                slots: self.widths.len(),
            });
        }
        Ok(n as usize * self.widths.len() + layer)
    }

    pub fn is_written(&self, n: u32, layer: usize) -> bool {
        self.index(n, layer)
            .ok()
            .and_then(|i| self.written.get(i).copied())
            .unwrap_or(false)
    }

    pub fn write(&mut self, n: u32, layer: usize, values: &[i8]) -> Result<(), StoreError> {
        let flag = self.index(n, layer)?;
        if values.len() != self.widths[layer] {
            return Err(StoreError::LengthMismatch {
                n,
                layer,
                expected: self.widths[layer],
                got: values.len(),
            });
        }
        let records = n as usize + 1;
        if self.num_events() < records {
            self.data.resize(records * self.stride, 0);
            self.written.resize(records * self.widths.len(), false);
        }
        if self.written[flag] {
            return Err(StoreError::AlreadyWritten { n, layer });
        }
        let start = n as usize * self.stride + self.offsets[layer];
        self.data[start..start + values.len()].copy_from_slice(values);
        self.written[flag] = true;
        self.bytes_written += values.len() as u64;
        Ok(())
    }

    /// Reads one slot and counts the traffic.
    pub fn read(&mut self, n: u32, layer: usize) -> Result<&[i8], StoreError> {
        let len = self.peek(n, layer)?.len();
        self.bytes_read += len as u64;
        self.peek(n, layer)
    }

    /// Reads one slot without counting traffic.
    pub fn peek(&self, n: u32, layer: usize) -> Result<&[i8], StoreError> {
        let flag = self.index(n, layer)?;
        if !self.written.get(flag).copied().unwrap_or(false) {
            return Err(StoreError::Unwritten { n, layer });
        }
        let start = n as usize * self.stride + self.offsets[layer];
        Ok(&self.data[start..start + self.widths[layer]])
    }

    /// Debug dump: little-endian records `n:u32 l:u8 len:u16` followed by
    /// `len` INT8 values, for every written slot in (n, l) order.
    pub fn dump(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for n in 0..self.num_events() as u32 {
            for layer in 0..self.widths.len() {
                if let Ok(values) = self.peek(n, layer) {
                    out.extend_from_slice(&n.to_le_bytes());
                    out.push(layer as u8);
                    out.extend_from_slice(&(values.len() as u16).to_le_bytes());
                    out.extend(values.iter().map(|&v| v as u8));
                }
            }
        }
        out
    }

    /// Parses a [`dump`](Self::dump) into `(n, l, values)` records.
    pub fn parse_dump(bytes: &[u8]) -> Result<Vec<(u32, u8, Vec<i8>)>, StoreError> {
        let mut out = Vec::new();
        let mut rest = bytes;
        while !rest.is_empty() {
            if rest.len() < 7 {
                return Err(StoreError::MalformedDump("truncated record header".into()));
            }
            let n = u32::from_le_bytes([rest[0], rest[1], rest[2], rest[3]]);
            let l = rest[4];
            let len = usize::from(u16::from_le_bytes([rest[5], rest[6]]));
            if rest.len() < 7 + len {
                return Err(StoreError::MalformedDump(format!("record n={n} l={l} truncated")));
            }
            out.push((n, l, rest[7..7 + len].iter().map(|&b| b as i8).collect()));
            rest = &rest[7 + len..];
        }
        Ok(out)
    }
}

/// Max-pooled final-layer features per readout cell, all starting at 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadoutState {
    grid: GridSpec,
    channels: usize,
    cells: Vec<i8>,
}

impl ReadoutState {
    pub fn new(grid: GridSpec, channels: usize) -> Self {
        Self {
            grid,
            channels,
            cells: vec![0; grid.cells() * channels],
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn cell(&self, gx: u16, gy: u16) -> &[i8] {
        let start = (usize::from(gy) * usize::from(self.grid.gx) + usize::from(gx)) * self.channels;
        &self.cells[start..start + self.channels]
    }

    /// Cells row-major by `(gy, gx)`, channels contiguous within a cell.
    pub fn flat(&self) -> &[i8] {
        &self.cells
    }

    pub fn cell_of(&self, x: u16, y: u16) -> Result<(u16, u16), EngineError> {
        let (gx, gy) = (x / self.grid.patch, y / self.grid.patch);
        if gx >= self.grid.gx || gy >= self.grid.gy {
            return Err(EngineError::ReadoutOutOfBounds { x, y });
        }
        Ok((gx, gy))
    }

    /// `cell(⌊x/patch⌋, ⌊y/patch⌋) = max(cell, feat)` elementwise.
    pub fn update(&mut self, x: u16, y: u16, feat: &[i8]) -> Result<(), EngineError> {
        if feat.len() != self.channels {
            return Err(EngineError::LengthMismatch {
                expected: self.channels,
                got: feat.len(),
            });
        }
        let (gx, gy) = self.cell_of(x, y)?;
        let start = (usize::from(gy) * usize::from(self.grid.gx) + usize::from(gx)) * self.channels;
        for (c, &f) in self.cells[start..start + self.channels].iter_mut().zip(feat) {
            *c = (*c).max(f);
        }
        Ok(())
    }
}

/// Free-function form of [`ReadoutState::update`].
pub fn readout_update(readout: &mut ReadoutState, x: u16, y: u16, feat: &[i8]) -> Result<(), EngineError> {
    readout.update(x, y, feat)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub logits: Vec<i32>,
    pub class: usize,
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Dense head over the flattened readout, 32-bit logits, no requantization.
pub fn fc_forward(readout: &ReadoutState, fc: &DenseHead) -> Result<Prediction, EngineError> {
    let flat = readout.flat();
    if fc.c_in != flat.len() || fc.weights.len() != fc.c_in * fc.c_out || fc.bias.len() != fc.c_out {
        return Err(EngineError::DimMismatch {
            expected: flat.len(),
            got: fc.c_in,
        });
    }
    let mut logits = Vec::with_capacity(fc.c_out);
    for (c, row) in fc.weights.chunks_exact(fc.c_in).enumerate() {
        let dot: i64 = row
            .iter()
            .zip(flat)
            .map(|(&w, &x)| i64::from(w) * i64::from(x))
            .sum::<i64>()
            + i64::from(fc.bias[c]);
        logits.push(i32::try_from(dot).map_err(|_| EngineError::AccOverflow { channel: c })?);
    }
    let class = argmax(&logits);
    Ok(Prediction { logits, class })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn_engine::model::SensorSpec;

    fn grid() -> GridSpec {
        GridSpec::for_sensor(
            SensorSpec {
                width: 120,
                height: 100,
            },
            16,
        )
    }

    #[test]
    fn store_is_write_once() {
        let mut s = FeatureStore::new(vec![1, 3, 2]);
        assert_eq!(s.record_len(), 6);
        s.write(0, 0, &[5]).unwrap();
        s.write(0, 1, &[1, 2, 3]).unwrap();
        assert_eq!(s.write(0, 1, &[1, 2, 3]), Err(StoreError::AlreadyWritten { n: 0, layer: 1 }));
        assert_eq!(s.peek(0, 2), Err(StoreError::Unwritten { n: 0, layer: 2 }));
        assert_eq!(s.peek(9, 0), Err(StoreError::Unwritten { n: 9, layer: 0 }));
        assert!(matches!(s.write(1, 3, &[]), Err(StoreError::LayerOutOfRange { .. })));
        assert!(matches!(s.write(1, 1, &[1]), Err(StoreError::LengthMismatch { .. })));
        assert_eq!(s.read(0, 1).unwrap(), &[1, 2, 3]);
        assert_eq!(s.traffic(), (3, 4));
    }

    #[test]
    fn dump_round_trip() {
        let mut s = FeatureStore::new(vec![1, 2]);
        s.write(0, 0, &[-127]).unwrap();
        s.write(0, 1, &[3, 4]).unwrap();
        s.write(2, 0, &[127]).unwrap();
        let bytes = s.dump();
        assert_eq!(&bytes[..8], &[0, 0, 0, 0, 0, 1, 0, 0x81]);
        let recs = FeatureStore::parse_dump(&bytes).unwrap();
        assert_eq!(
            recs,
            vec![(0, 0, vec![-127]), (0, 1, vec![3, 4]), (2, 0, vec![127])]
        );
        assert!(FeatureStore::parse_dump(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn readout_grid_geometry() {
        let g = grid();
        assert_eq!((g.gx, g.gy), (8, 7));
        let mut r = ReadoutState::new(g, 2);
        assert_eq!(r.cell_of(17, 0).unwrap(), (1, 0));
        assert_eq!(r.cell_of(119, 99).unwrap(), (7, 6));
        r.update(17, 0, &[5, 1]).unwrap();
        r.update(20, 15, &[3, 4]).unwrap();
        assert_eq!(r.cell(1, 0), &[5, 4]);
        let before = r.clone();
        r.update(17, 0, &[2, 0]).unwrap();
        assert_eq!(r, before);
        assert!(r.update(128, 0, &[0, 0]).is_err());
        assert!(r.update(0, 0, &[0]).is_err());
        // flat layout is (gy, gx, c)
        assert_eq!(&r.flat()[2..4], &[5, 4]);
    }

    #[test]
    fn fc_head() {
        let g = GridSpec {
            patch: 16,
            gx: 1,
            gy: 1,
        };
        let r = ReadoutState::new(g, 3);
        let zero = DenseHead {
            c_in: 3,
            c_out: 2,
            weights: vec![0; 6],
            bias: vec![3, -1],
        };
        let p = fc_forward(&r, &zero).unwrap();
        assert_eq!(p.logits, vec![3, -1]);
        assert_eq!(p.class, 0);

        let ones = DenseHead {
            c_in: 3,
            c_out: 1,
            weights: vec![1; 3],
            bias: vec![0],
        };
        assert_eq!(fc_forward(&r, &ones).unwrap().logits, vec![0]);

        let wrong = DenseHead { c_in: 4, ..ones };
        assert!(matches!(fc_forward(&r, &wrong), Err(EngineError::DimMismatch { .. })));
    }

    #[test]
    fn argmax_ties_pick_lowest() {
        assert_eq!(argmax(&[1, 5, 5, 2]), 1);
        assert_eq!(argmax(&[7]), 0);
        assert_eq!(argmax(&[-3, -3]), 0);
    }
}
