use std::path::PathBuf;
use std::str::FromStr;

use anyhow::Result;
use camdot_core::camarray::ALLOWED_WORD_BITS;
use camdot_core::modelio::load_tune_result;
use camdot_core::netexec::{Conv2d, Dims, Layer};
use camdot_core::{CamConfig, CosineModel, CostTable, Dataflow, DotMode, ExecutionPlan, NetworkModel};

use crate::HwArgs;

/// A command-line value that failed validation (exit code 1).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct Invalid(pub String);

pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

#[derive(Clone, Debug, PartialEq)]
pub enum HashSource {
    Uniform(usize),
    List(Vec<usize>),
    File(PathBuf),
}

impl FromStr for HashSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parse_k = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("bad hash length '{v}'"));
        match s.split_once(':') {
            Some(("uniform", k)) => Ok(HashSource::Uniform(parse_k(k)?)),
            Some(("list", ks)) => Ok(HashSource::List(ks.split(',').map(parse_k).collect::<Result<_, _>>()?)),
            Some(("file", p)) if !p.is_empty() => Ok(HashSource::File(PathBuf::from(p))),
            _ => Err(format!("expected uniform:<k>, list:<k1>,<k2>,... or file:<path>, got '{s}'")),
        }
    }
}

impl HashSource {
    pub fn resolve(&self, model: &NetworkModel) -> Result<Vec<usize>> {
        let dots = model.dot_layers().len();
        let lengths = match self {
            HashSource::Uniform(k) => vec![*k; dots],
            HashSource::List(ks) => ks.clone(),
            HashSource::File(path) => {
                let r = load_tune_result(path)?;
                if r.sensitivity.layers != model.dot_layers() {
                    return Err(invalid(format!(
                        "{} was tuned for dot layers {:?}, model has {:?}",
                        path.display(),
                        r.sensitivity.layers,
                        model.dot_layers()
                    )));
                }
                r.hash_lengths
            }
        };
        if lengths.len() != dots {
            return Err(invalid(format!("{} hash lengths given for {dots} dot-product layers", lengths.len())));
        }
        if let Some(k) = lengths.iter().find(|k| !ALLOWED_WORD_BITS.contains(k)) {
            return Err(invalid(format!("hash length {k} not in {ALLOWED_WORD_BITS:?}")));
        }
        Ok(lengths)
    }
}

pub const COST_TABLE_ENV: &str = "DEEPCAM_COST_TABLE";

impl HwArgs {
    pub fn cam(&self) -> Result<CamConfig> {
        let window = match self.sense_window {
            Some(c) => c,
            None => self.cost_table()?.search_cycles,
        };
        let cam = CamConfig::new(self.rows)?.with_sense_window(window)?;
        Ok(cam.with_distance_bucket(self.distance_bucket)?)
    }

    pub fn dataflow(&self) -> Result<Dataflow> {
        Ok(Dataflow::parse(&self.dataflow)?)
    }

    /// `--cost-table`, then `$DEEPCAM_COST_TABLE`, then the defaults. The
    /// sense window, if given, also sets the table's search cycles; otherwise
    /// the table's search cycles set the sense window (see `cam`).
    pub fn cost_table(&self) -> Result<CostTable> {
        let path = self
            .cost_table
            .clone()
            .or_else(|| std::env::var_os(COST_TABLE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from));
        let mut table = match path {
            Some(p) => camdot_core::modelio::load_cost_table(p)?,
            None => CostTable::default(),
        };
        if let Some(c) = self.sense_window {
            table.search_cycles = c;
        }
        Ok(table)
    }

    pub fn plan(&self, model: &NetworkModel, hash: &HashSource, seed: u64, mode: DotMode) -> Result<ExecutionPlan> {
        let plan = ExecutionPlan {
            dataflow: self.dataflow()?,
            cam: self.cam()?,
            hash_lengths: hash.resolve(model)?,
            seed,
            mode,
        };
        plan.validate(model)?;
        Ok(plan)
    }
}

pub fn parse_cosine(s: &str) -> Result<CosineModel> {
    match s {
        "piecewise" => Ok(CosineModel::Piecewise),
        "exact" => Ok(CosineModel::Exact),
        other => Err(invalid(format!("unknown cosine '{other}' (expected piecewise or exact)"))),
    }
}

fn dims(s: &str, what: &str) -> Result<[usize; 3]> {
    let parts: Vec<usize> = s
        .split('x')
        .map(|v| v.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| invalid(format!("bad {what} '{s}' (expected AxBxC)")))?;
    parts.try_into().map_err(|_| invalid(format!("bad {what} '{s}' (expected AxBxC)")))
}

/// `CxHxW:KxRxS[:stride[:pad]]` as a one-layer model with zero weights.
pub fn conv_model(spec: &str) -> Result<NetworkModel> {
    let parts: Vec<&str> = spec.split(':').collect();
    if !(2..=4).contains(&parts.len()) {
        return Err(invalid(format!("bad --conv '{spec}' (expected CxHxW:KxRxS[:stride[:pad]])")));
    }
    let [c, h, w] = dims(parts[0], "input shape")?;
    let [k, r, s] = dims(parts[1], "kernel shape")?;
    let num = |i: usize, default: usize| -> Result<usize> {
        parts.get(i).map_or(Ok(default), |v| v.parse().map_err(|_| invalid(format!("bad number '{v}' in --conv"))))
    };
    let weights = c
        .checked_mul(k)
        .and_then(|v| v.checked_mul(r))
        .and_then(|v| v.checked_mul(s))
        .filter(|&n| n <= 1 << 28)
        .ok_or_else(|| invalid("--conv kernel is too large"))?;
    let conv = Conv2d {
        in_channels: c,
        out_channels: k,
        kernel_h: r,
        kernel_w: s,
        stride: num(2, 1)?,
        padding: num(3, 0)?,
        weights: vec![0.0; weights],
        bias: None,
        relu: false,
    };
    Ok(NetworkModel::new(Dims::new(c, h, w), vec![Layer::Conv2d(conv)])?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_sources() {
        assert_eq!("uniform:512".parse(), Ok(HashSource::Uniform(512)));
        assert_eq!("list:256,1024".parse(), Ok(HashSource::List(vec![256, 1024])));
        assert_eq!("file:t.toml".parse(), Ok(HashSource::File("t.toml".into())));
        assert!("uniform:abc".parse::<HashSource>().is_err());
        assert!("1024".parse::<HashSource>().is_err());
        assert!("file:".parse::<HashSource>().is_err());
    }

    #[test]
    fn conv_spec() {
        let m = conv_model("1x32x32:6x5x5").unwrap();
        assert_eq!(m.output_dims(), Dims::new(6, 28, 28));
        let m = conv_model("3x8x8:4x3x3:2:1").unwrap();
        assert_eq!(m.output_dims(), Dims::new(4, 4, 4));
        assert!(conv_model("1x32:6x5x5").is_err());
        assert!(conv_model("1x4x4:6x5x5").is_err());
    }

    #[test]
    fn resolve_checks_lengths() {
        let m = conv_model("1x8x8:2x3x3").unwrap();
        assert_eq!(HashSource::Uniform(768).resolve(&m).unwrap(), vec![768]);
        assert!(HashSource::Uniform(300).resolve(&m).is_err());
        assert!(HashSource::List(vec![256, 256]).resolve(&m).is_err());
    }
}
