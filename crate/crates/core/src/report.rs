//! JSON report files: the construction's full output in a stable,
//! exact, re-verifiable form.
//!
//! Every rational is carried as a `p/q` string and the richness
//! threshold as a decimal string, so nothing is rounded. Maps are
//! B-tree ordered and rung triples sorted, so serializing the same
//! result twice yields byte-identical files.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    BlockSelection, ColumnSelection, ConstructionParams, Measures, TowerResult,
};
use crate::ratio::{fmt_ratio, parse_ratio, Ratio};

fn ratio_field(s: &str) -> Result<Ratio> {
    parse_ratio(s).map_err(Error::Format)
}

/// Format tag expected in the `format` field.
pub const REPORT_FORMAT: &str = "alpern-report v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub format: String,
    pub params: ReportParams,
    pub selections: Vec<ReportSelection>,
    pub measures: ReportMeasures,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportParams {
    pub n: u32,
    /// Richness threshold, decimal.
    pub m_required: String,
    pub allow_small_m: bool,
    pub delta: u64,
    pub gamma: BTreeMap<String, u64>,
    /// Per column, the base split fractions as `p/q` strings.
    pub b: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportSelection {
    pub column: String,
    /// Selected rungs as sorted `[block, subcolumn, level]` triples.
    pub b: Vec<[u32; 3]>,
    /// Marked rungs, same shape.
    pub a: Vec<[u32; 3]>,
    /// Per block (index order), `[subcolumn, net skip count]` pairs.
    pub net_skips: Vec<Vec<(u32, i64)>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportMeasures {
    pub b: String,
    pub a: String,
    pub e: String,
    pub b_n: String,
    pub b_n1: String,
    pub b_cells: Vec<String>,
    pub a_cells: Vec<String>,
}

pub fn report_from_result(result: &TowerResult) -> Report {
    let params = ReportParams {
        n: result.params.n,
        m_required: result.params.m_required.to_string(),
        allow_small_m: result.params.allow_small_m,
        delta: result.params.delta,
        gamma: result.params.gamma.clone(),
        b: result
            .params
            .b
            .iter()
            .map(|(id, v)| (id.clone(), v.iter().map(fmt_ratio).collect()))
            .collect(),
    };
    let selections = result
        .selections
        .iter()
        .map(|sel| {
            let mut b = Vec::new();
            let mut a = Vec::new();
            let mut net_skips = Vec::new();
            for block in &sel.blocks {
                for &(sub, level) in &block.b_rungs {
                    b.push([block.block, sub, level]);
                }
                for &(sub, level) in &block.a_rungs {
                    a.push([block.block, sub, level]);
                }
                net_skips.push(block.net_skips.iter().map(|(&s, &v)| (s, v)).collect());
            }
            ReportSelection {
                column: sel.column.clone(),
                b,
                a,
                net_skips,
            }
        })
        .collect();
    let m = &result.measures;
    let measures = ReportMeasures {
        b: fmt_ratio(&m.b),
        a: fmt_ratio(&m.a),
        e: fmt_ratio(&m.e),
        b_n: fmt_ratio(&m.b_n),
        b_n1: fmt_ratio(&m.b_n1),
        b_cells: m.b_cells.iter().map(fmt_ratio).collect(),
        a_cells: m.a_cells.iter().map(fmt_ratio).collect(),
    };
    Report {
        format: REPORT_FORMAT.to_string(),
        params,
        selections,
        measures,
    }
}

pub fn result_from_report(report: &Report) -> Result<TowerResult> {
    if report.format != REPORT_FORMAT {
        return Err(Error::Format(format!(
            "unsupported report format {:?}, expected {:?}",
            report.format, REPORT_FORMAT
        )));
    }
    let m_required: BigInt = report
        .params
        .m_required
        .parse()
        .map_err(|_| Error::Format(format!("bad threshold {:?}", report.params.m_required)))?;
    let mut b = BTreeMap::new();
    for (id, strs) in &report.params.b {
        let mut v = Vec::with_capacity(strs.len());
        for s in strs {
            v.push(ratio_field(s)?);
        }
        b.insert(id.clone(), v);
    }
    let params = ConstructionParams {
        n: report.params.n,
        m_required,
        allow_small_m: report.params.allow_small_m,
        delta: report.params.delta,
        gamma: report.params.gamma.clone(),
        b,
    };
    let mut selections = Vec::with_capacity(report.selections.len());
    for sel in &report.selections {
        let t = sel.net_skips.len() as u32;
        let mut blocks: Vec<BlockSelection> = (1..=t)
            .map(|i| BlockSelection {
                block: i,
                b_rungs: Default::default(),
                a_rungs: Default::default(),
                net_skips: sel.net_skips[i as usize - 1].iter().copied().collect(),
            })
            .collect();
        for (rungs, which) in [(&sel.b, 0), (&sel.a, 1)] {
            for &[block, sub, level] in rungs {
                if block == 0 || block > t {
                    return Err(Error::Format(format!(
                        "column {}: rung block {block} outside 1..={t}",
                        sel.column
                    )));
                }
                let target = &mut blocks[block as usize - 1];
                let set = if which == 0 {
                    &mut target.b_rungs
                } else {
                    &mut target.a_rungs
                };
                set.insert((sub, level));
            }
        }
        selections.push(ColumnSelection {
            column: sel.column.clone(),
            blocks,
        });
    }
    let rm = &report.measures;
    let mut b_cells = Vec::with_capacity(rm.b_cells.len());
    for s in &rm.b_cells {
        b_cells.push(ratio_field(s)?);
    }
    let mut a_cells = Vec::with_capacity(rm.a_cells.len());
    for s in &rm.a_cells {
        a_cells.push(ratio_field(s)?);
    }
    let measures = Measures {
        b: ratio_field(&rm.b)?,
        a: ratio_field(&rm.a)?,
        e: ratio_field(&rm.e)?,
        b_n: ratio_field(&rm.b_n)?,
        b_n1: ratio_field(&rm.b_n1)?,
        b_cells,
        a_cells,
    };
    Ok(TowerResult {
        params,
        selections,
        measures,
    })
}

/// Pretty JSON with a trailing newline. Field order is fixed by the
/// struct declarations, map order by the B-trees.
pub fn to_json(report: &Report) -> String {
    let mut out = serde_json::to_string_pretty(report).expect("report serializes");
    out.push('\n');
    out
}

pub fn from_json(text: &str) -> Result<Report> {
    let report: Report =
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    if report.format != REPORT_FORMAT {
        return Err(Error::Format(format!(
            "unsupported report format {:?}, expected {:?}",
            report.format, REPORT_FORMAT
        )));
    }
    Ok(report)
}
