use std::path::Path;

use super::{checked_product, format_error, read_file, write_file, FormatError, Reader, DATASET_MAGIC, FORMAT_VERSION};
use crate::netexec::{ActivationTensor, Dims};

/// Labeled samples, stored contiguously in CHW order.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub dims: Dims,
    pub num_classes: u16,
    pub data: Vec<f32>,
    pub labels: Vec<u16>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let n = self.dims.len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn tensor(&self, i: usize) -> ActivationTensor {
        ActivationTensor {
            dims: self.dims,
            data: self.sample(i).iter().map(|&v| f64::from(v)).collect(),
            batch_index: i,
        }
    }

    pub fn tensors(&self) -> Vec<ActivationTensor> {
        (0..self.len()).map(|i| self.tensor(i)).collect()
    }

    /// Samples `[start, end)` as a new dataset (clamped to the length).
    pub fn slice(&self, start: usize, end: usize) -> Dataset {
        let end = end.min(self.len());
        let start = start.min(end);
        let n = self.dims.len();
        Dataset {
            dims: self.dims,
            num_classes: self.num_classes,
            data: self.data[start * n..end * n].to_vec(),
            labels: self.labels[start..end].to_vec(),
        }
    }

    /// The first `n` samples and the rest.
    pub fn split_at(&self, n: usize) -> (Dataset, Dataset) {
        (self.slice(0, n), self.slice(n, self.len()))
    }
}

pub fn parse_dataset(bytes: &[u8]) -> Result<Dataset, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(DATASET_MAGIC)?;
    r.version()?;
    let num_classes = r.u16("class count")?;
    let count_at = r.offset();
    let count = r.u32("sample count")?;
    let (c, h, w) = (r.u32("sample dims")?, r.u32("sample dims")?, r.u32("sample dims")?);
    let too_large = || FormatError::Invalid {
        offset: count_at,
        what: "dataset header",
        reason: format!("{count} x {c}x{h}x{w} is too large"),
    };
    let sample = checked_product(&[c, h, w]).ok_or_else(too_large)?;
    let values = checked_product(&[count, sample]).ok_or_else(too_large)?;
    if sample == 0 {
        return Err(FormatError::Invalid { offset: count_at + 4, what: "sample dims", reason: "empty sample".into() });
    }
    if num_classes == 0 && count > 0 {
        return Err(FormatError::Invalid {
            offset: 6,
            what: "class count",
            reason: "labeled samples need at least one class".into(),
        });
    }
    let expected = values * 4 + count * 2;
    if r.remaining() < expected {
        return Err(FormatError::Truncated {
            offset: r.offset(),
            what: "dataset payload",
            needed: expected,
            available: r.remaining(),
        });
    }
    let data = r.f32s(values, "sample data")?;
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let at = r.offset();
        let label = r.u16("label")?;
        if label >= num_classes {
            return Err(FormatError::Invalid {
                offset: at,
                what: "label",
                reason: format!("{label} >= class count {num_classes}"),
            });
        }
        labels.push(label);
    }
    r.finish()?;
    Ok(Dataset { dims: Dims::new(c, h, w), num_classes, data, labels })
}

pub fn serialize_dataset(ds: &Dataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + ds.data.len() * 4 + ds.labels.len() * 2);
    out.extend_from_slice(&DATASET_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&ds.num_classes.to_le_bytes());
    for v in [ds.len(), ds.dims.channels, ds.dims.height, ds.dims.width] {
        out.extend_from_slice(&u32::try_from(v).expect("dataset header exceeds u32").to_le_bytes());
    }
    for v in &ds.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for l in &ds.labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out
}

/// Load a dataset, keeping at most `limit` samples.
pub fn load_dataset(path: impl AsRef<Path>, limit: Option<usize>) -> crate::Result<Dataset> {
    let path = path.as_ref();
    let ds = parse_dataset(&read_file(path)?).map_err(|e| format_error(path, e))?;
    Ok(match limit {
        Some(n) if n < ds.len() => ds.slice(0, n),
        _ => ds,
    })
}

impl Dataset {
    pub fn save(&self, path: impl AsRef<Path>) -> crate::Result<()> {
        write_file(path.as_ref(), &serialize_dataset(self))
    }
}
