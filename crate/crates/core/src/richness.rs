//! The occurrence-count bound M, per-column richness reports, and a
//! continued-fraction search that enriches a rotation until it passes.
//!
//! A system is rich for M when every column's label sequence contains every
//! cell at least M times. Construction needs that surplus: each block must
//! find enough skippable levels of every cell in its middle region. The
//! bound is sufficient, never necessary, so callers may override a failed
//! check and let the verifier arbitrate.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::Signed;

use crate::error::{Error, Result};
use crate::ingest::{build_rotation, RotationSpec};
use crate::model::{cell_measures, ColumnSystem, PartitionSpec};
use crate::ratio::Ratio;

/// Hard ceiling on convergent denominators tried by [`enrich_rotation`].
/// Anything taller is useless in practice: the grid oracle cannot touch it
/// and column scans start to crawl.
pub const ENRICH_Q_CAP: u64 = 20_000_000;

/// The smallest integer strictly greater than `3 n^3 t / m1`, where `m1`
/// must be the minimum cell measure. Returned as a big integer because a
/// tiny `m1` can push the bound past any fixed-width range.
pub fn required_m(n: u32, t: u32, m1: &Ratio) -> BigInt {
    assert!(m1.is_positive(), "minimum cell measure must be positive");
    let cube = BigInt::from(n) * BigInt::from(n) * BigInt::from(n);
    let bound = Ratio::from_integer(BigInt::from(3) * cube * BigInt::from(t)) / m1;
    bound.floor().to_integer() + 1
}

/// Per-column occurrence audit against a required bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RichnessReport {
    /// The bound the audit ran against.
    pub required: BigInt,
    /// For each column, the minimum over cells of its occurrence count.
    pub min_occurrences: BTreeMap<String, u64>,
    /// Columns whose minimum falls short, in system order.
    pub poor: Vec<String>,
}

impl RichnessReport {
    pub fn is_rich(&self) -> bool {
        self.poor.is_empty()
    }
}

impl fmt::Display for RichnessReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.poor.is_empty() {
            return write!(f, "all columns contain every cell >= {} times", self.required);
        }
        write!(f, "required {} occurrences per cell; short: ", self.required)?;
        for (k, id) in self.poor.iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{} (min {})", id, self.min_occurrences[id])?;
        }
        Ok(())
    }
}

/// Audits every column's per-cell occurrence counts against `m`.
pub fn is_rich(system: &ColumnSystem, m: &BigInt) -> RichnessReport {
    let t = system.t();
    let mut min_occurrences = BTreeMap::new();
    let mut poor = Vec::new();
    for col in &system.columns {
        let occ = col.occurrences(t);
        let min = occ.iter().copied().min().unwrap_or(0);
        min_occurrences.insert(col.id.clone(), min);
        if BigInt::from(min) < *m {
            poor.push(col.id.clone());
        }
    }
    RichnessReport {
        required: m.clone(),
        min_occurrences,
        poor,
    }
}

/// The breakpoint rule splitting the circle into `t` near-equal arcs on the
/// `1/q` grid: breakpoint `j` sits at `floor((j-1) q / t) / q`.
pub fn equal_breakpoints(q: u64, t: u32) -> Vec<Ratio> {
    (1..=u64::from(t))
        .map(|j| {
            let num = (j - 1) * q / u64::from(t);
            Ratio::new(BigInt::from(num), BigInt::from(q))
        })
        .collect()
}

/// A rotation system found rich enough for its target `(N, t)`.
#[derive(Debug, Clone)]
pub struct Enriched {
    pub spec: RotationSpec,
    pub system: ColumnSystem,
    pub required: BigInt,
    pub report: RichnessReport,
}

/// Walks the convergents `p_k/q_k` of the continued fraction `[0; terms...]`
/// and returns the first whose rotation system (breakpoints chosen by
/// `rule(q, t)`, snapped to the `1/q` grid) is rich for
/// `required_m(n, t, minimum cell measure)`.
///
/// Candidates with `q < t` cannot host `t` distinct breakpoints and are
/// skipped. Convergents past [`ENRICH_Q_CAP`] end the search with
/// `Exhausted`, as does running out of terms.
pub fn enrich_rotation(
    terms: &[u64],
    rule: impl Fn(u64, u32) -> Vec<Ratio>,
    n: u32,
    t: u32,
) -> Result<Enriched> {
    if t == 0 {
        return Err(Error::Format("enrichment needs at least one cell".into()));
    }
    let mut p_prev: u64 = 1;
    let mut p_cur: u64 = 0;
    let mut q_prev: u64 = 0;
    let mut q_cur: u64 = 1;
    let mut last_q: u64 = 0;
    for &a in terms {
        if a == 0 {
            return Err(Error::Format(
                "continued-fraction terms must be positive".into(),
            ));
        }
        let p_next = a.checked_mul(p_cur).and_then(|x| x.checked_add(p_prev));
        let q_next = a.checked_mul(q_cur).and_then(|x| x.checked_add(q_prev));
        let (p_next, q_next) = match (p_next, q_next) {
            (Some(p), Some(q)) if q <= ENRICH_Q_CAP => (p, q),
            _ => return Err(Error::Exhausted { last_q }),
        };
        p_prev = p_cur;
        p_cur = p_next;
        q_prev = q_cur;
        q_cur = q_next;
        if q_cur < u64::from(t) {
            continue;
        }
        last_q = q_cur;
        let spec = RotationSpec {
            p: p_cur as i64,
            q: q_cur,
            breakpoints: rule(q_cur, t),
        };
        let system = build_rotation(&spec, PartitionSpec::numbered(t))?;
        let measures = cell_measures(&system)?;
        let m_min = measures.iter().min().expect("t >= 1");
        let required = required_m(n, t, m_min);
        let report = is_rich(&system, &required);
        if report.is_rich() {
            return Ok(Enriched {
                spec,
                system,
                required,
                report,
            });
        }
    }
    Err(Error::Exhausted { last_q })
}
