//! TOML configs.
//!
//! Cost table: every key is optional and overrides the built-in default.
//! Energy tables are keyed `"<rows>x<word_bits>"`:
//!
//! ```toml
//! search_cycles = 2
//! write_cycles_per_row = 1
//!
//! [search_energy_pj]
//! "64x256" = 9.2
//!
//! [systolic]
//! rows = 14
//! cols = 12
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{format_error, read_file, write_file, FormatError};
use crate::costmodel::{CostTable, SystolicArray};
use crate::tuner::TuneResult;

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CostTableFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    search_cycles: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    write_cycles_per_row: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reconfigure_cycles: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    transform_cycles: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    transform_energy_pj_per_mac: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    post_cycles_per_element: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dot_finalize_energy_pj: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    elementwise_energy_pj: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline_energy_pj_per_mac: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    systolic: Option<SystolicFile>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    search_energy_pj: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    write_energy_pj: BTreeMap<String, f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystolicFile {
    rows: usize,
    cols: usize,
}

fn parse_key(key: &str) -> Result<(usize, usize), FormatError> {
    let bad = || FormatError::Syntax(format!("energy key '{key}' is not of the form <rows>x<word_bits>"));
    let (r, w) = key.split_once('x').ok_or_else(bad)?;
    Ok((r.trim().parse().map_err(|_| bad())?, w.trim().parse().map_err(|_| bad())?))
}

fn merge(into: &mut BTreeMap<(usize, usize), f64>, from: BTreeMap<String, f64>) -> Result<(), FormatError> {
    for (k, v) in from {
        let key = parse_key(&k)?;
        if !into.contains_key(&key) {
            return Err(FormatError::Syntax(format!("energy key '{k}' is not a supported CAM shape")));
        }
        into.insert(key, v);
    }
    Ok(())
}

/// Parse a cost table, starting from the defaults. The result is validated.
pub fn cost_table_from_toml(text: &str) -> Result<CostTable, FormatError> {
    let file: CostTableFile = toml::from_str(text).map_err(|e| FormatError::Syntax(e.to_string()))?;
    let mut t = CostTable::default();
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = file.$f { t.$f = v; } )* };
    }
    set!(
        search_cycles,
        write_cycles_per_row,
        reconfigure_cycles,
        transform_cycles,
        transform_energy_pj_per_mac,
        post_cycles_per_element,
        dot_finalize_energy_pj,
        elementwise_energy_pj,
        baseline_energy_pj_per_mac
    );
    if let Some(s) = file.systolic {
        t.systolic = SystolicArray { rows: s.rows, cols: s.cols };
    }
    merge(&mut t.search_energy_pj, file.search_energy_pj)?;
    merge(&mut t.write_energy_pj, file.write_energy_pj)?;
    t.validate().map_err(|e| FormatError::Syntax(e.to_string()))?;
    Ok(t)
}

/// Every field of `table`, in the format read by [`cost_table_from_toml`].
pub fn cost_table_to_toml(table: &CostTable) -> String {
    let key = |(r, w): &(usize, usize)| format!("{r}x{w}");
    let file = CostTableFile {
        search_cycles: Some(table.search_cycles),
        write_cycles_per_row: Some(table.write_cycles_per_row),
        reconfigure_cycles: Some(table.reconfigure_cycles),
        transform_cycles: Some(table.transform_cycles),
        transform_energy_pj_per_mac: Some(table.transform_energy_pj_per_mac),
        post_cycles_per_element: Some(table.post_cycles_per_element),
        dot_finalize_energy_pj: Some(table.dot_finalize_energy_pj),
        elementwise_energy_pj: Some(table.elementwise_energy_pj),
        baseline_energy_pj_per_mac: Some(table.baseline_energy_pj_per_mac),
        systolic: Some(SystolicFile { rows: table.systolic.rows, cols: table.systolic.cols }),
        search_energy_pj: table.search_energy_pj.iter().map(|(k, v)| (key(k), *v)).collect(),
        write_energy_pj: table.write_energy_pj.iter().map(|(k, v)| (key(k), *v)).collect(),
    };
    toml::to_string_pretty(&file).expect("cost table serializes")
}

pub fn load_cost_table(path: impl AsRef<Path>) -> crate::Result<CostTable> {
    let path = path.as_ref();
    let text = read_file(path)?;
    let text = String::from_utf8(text).map_err(|e| format_error(path, FormatError::Syntax(e.to_string())))?;
    cost_table_from_toml(&text).map_err(|e| format_error(path, e))
}

pub fn tune_result_from_toml(text: &str) -> Result<TuneResult, FormatError> {
    let r: TuneResult = toml::from_str(text).map_err(|e| FormatError::Syntax(e.to_string()))?;
    r.check().map_err(|e| FormatError::Syntax(e.to_string()))?;
    Ok(r)
}

pub fn tune_result_to_toml(result: &TuneResult) -> String {
    toml::to_string_pretty(result).expect("tune result serializes")
}

pub fn load_tune_result(path: impl AsRef<Path>) -> crate::Result<TuneResult> {
    let path = path.as_ref();
    let text = read_file(path)?;
    let text = String::from_utf8(text).map_err(|e| format_error(path, FormatError::Syntax(e.to_string())))?;
    tune_result_from_toml(&text).map_err(|e| format_error(path, e))
}

pub fn save_tune_result(path: impl AsRef<Path>, result: &TuneResult) -> crate::Result<()> {
    write_file(path.as_ref(), tune_result_to_toml(result).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let t = CostTable::default();
        assert_eq!(cost_table_from_toml(&cost_table_to_toml(&t)).unwrap(), t);
        assert_eq!(cost_table_from_toml("").unwrap(), t);
    }

    #[test]
    fn overrides_apply() {
        let t = cost_table_from_toml("search_cycles = 1\n[search_energy_pj]\n\"512x1024\" = 1000.0\n").unwrap();
        assert_eq!(t.search_cycles, 1);
        assert_eq!(t.search_energy(512, 1024).unwrap(), 1000.0);
    }

    #[test]
    fn rejects_bad_keys_and_shapes() {
        assert!(cost_table_from_toml("[search_energy_pj]\n\"64by256\" = 1.0\n").is_err());
        assert!(cost_table_from_toml("[search_energy_pj]\n\"100x256\" = 1.0\n").is_err());
        assert!(cost_table_from_toml("unknown = 3\n").is_err());
        // breaks the increasing-with-width shape
        assert!(cost_table_from_toml("[search_energy_pj]\n\"64x512\" = 0.1\n").is_err());
    }
}
