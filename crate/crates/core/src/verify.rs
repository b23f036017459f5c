//! Independent verification of tower results, twice over.
//!
//! The combinatorial path recomputes every contract from the rung sets
//! alone (never trusting the construction's ledger): staircase gap
//! spectra, the exhaustive cover by the tower sets and the error set, the
//! error set's image, and all exact independence and measure identities.
//!
//! The oracle path builds a [`GridModel`]: the transformation realized as
//! a permutation of equal-mass interval atoms on a common denominator
//! grid. It then re-derives the same checks by brute-force atom
//! enumeration and orbit walking. Both paths emit the same named check
//! list in the same order, so their verdict vectors can be compared
//! check-for-check.
//!
//! Within one subcolumn line the checks read cyclically: the seam gap of
//! the line's top rung wraps to its base rung. For a single-column system
//! the seam permutation is the identity on base offsets, so the cyclic
//! reading and the true orbit agree on every selection, valid or not.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::model::{cell_measures, ColumnSystem, TowerResult};
use crate::ratio::{fmt_ratio, rat_int, Ratio};

/// Default ceiling on oracle grid size, in atoms.
pub const DEFAULT_GRID_LIMIT: u64 = 1_000_000;

/// Names of all checks, in emission order. The first five are the
/// structural tower contracts; the rest are measure identities.
pub const CHECK_NAMES: [&str; 12] = [
    "bases_selected",
    "gap_spectrum",
    "seam_gap",
    "cover_partition",
    "error_image",
    "ab_disjoint",
    "independence_B",
    "independence_A",
    "union_density",
    "height_identity",
    "error_measure",
    "reported_measures",
];

/// How many of [`CHECK_NAMES`] make up the structural tower verdict.
const ALPERN_CHECKS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    /// Empty when passing, else the first violation found.
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdicts {
    pub checks: Vec<CheckResult>,
}

impl Verdicts {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// True when both verdict vectors list the same checks with the same
/// pass/fail flags (details are allowed to differ).
pub fn verdicts_agree(a: &Verdicts, b: &Verdicts) -> bool {
    a.checks.len() == b.checks.len()
        && a.checks
            .iter()
            .zip(&b.checks)
            .all(|(x, y)| x.name == y.name && x.pass == y.pass)
}

/// Which rung set an independence report covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RungSet {
    B,
    A,
    Union,
}

impl RungSet {
    pub fn label(self) -> &'static str {
        match self {
            RungSet::B => "B",
            RungSet::A => "A",
            RungSet::Union => "A∪B",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndependenceRow {
    pub cell: u32,
    /// Exact measure of the set's intersection with the cell.
    pub mu_intersection: Ratio,
    /// The independence target: set measure times cell mass.
    pub expected: Ratio,
    /// The set's empirical cell fraction, when the set has positive mass.
    pub fraction: Option<Ratio>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndependenceReport {
    pub set: RungSet,
    pub mu: Ratio,
    pub rows: Vec<IndependenceRow>,
}

impl IndependenceReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

/// Selections reshaped for checking: per column, per block, per subcolumn,
/// the sorted selected levels; plus the raw A-rung sets per block.
struct Resolved<'a> {
    n: u32,
    t: u32,
    /// column id (in system order) -> [block-1][sub-1] -> sorted levels
    lines: Vec<(&'a str, Vec<Vec<Vec<u32>>>)>,
    /// column id -> [block-1] -> A rungs
    a_sets: Vec<Vec<&'a BTreeSet<(u32, u32)>>>,
}

fn resolve<'a>(system: &'a ColumnSystem, result: &'a TowerResult) -> Result<Resolved<'a>> {
    let bad = |msg: String| Err(Error::SelectionMismatch(msg));
    let n = result.params.n;
    if n == 0 {
        return bad("tower height parameter must be positive".into());
    }
    let t = system.t();
    if result.selections.len() != system.columns.len() {
        return bad(format!(
            "result covers {} columns, system has {}",
            result.selections.len(),
            system.columns.len()
        ));
    }
    let mut lines = Vec::new();
    let mut a_sets = Vec::new();
    for col in &system.columns {
        let sel = match result.selection_for(&col.id) {
            Some(s) => s,
            None => return bad(format!("no selection for column {}", col.id)),
        };
        let b_vec = match result.params.b.get(&col.id) {
            Some(b) => b,
            None => return bad(format!("no split fractions for column {}", col.id)),
        };
        if b_vec.len() as u32 != t {
            return bad(format!(
                "column {} lists {} split fractions for {} cells",
                col.id,
                b_vec.len(),
                t
            ));
        }
        if b_vec.iter().any(|x| x.is_negative()) {
            return bad(format!("column {} has a negative split fraction", col.id));
        }
        if b_vec.iter().fold(rat_int(0), |acc, x| acc + x) != rat_int(1) {
            return bad(format!(
                "column {} split fractions do not sum to 1",
                col.id
            ));
        }
        if sel.blocks.len() as u32 != t {
            return bad(format!(
                "column {} has {} blocks, expected {}",
                col.id,
                sel.blocks.len(),
                t
            ));
        }
        let r = col.height();
        let mut col_lines: Vec<Vec<Vec<u32>>> = Vec::with_capacity(t as usize);
        let mut col_a: Vec<&BTreeSet<(u32, u32)>> = Vec::with_capacity(t as usize);
        for (k, block) in sel.blocks.iter().enumerate() {
            if block.block != k as u32 + 1 {
                return bad(format!(
                    "column {} block {} out of order",
                    col.id, block.block
                ));
            }
            let mut per_sub: Vec<Vec<u32>> = vec![Vec::new(); n as usize];
            for &(sub, level) in &block.b_rungs {
                if sub == 0 || sub > n || level >= r {
                    return bad(format!(
                        "column {} block {} has rung ({sub}, {level}) out of range",
                        col.id, block.block
                    ));
                }
                per_sub[sub as usize - 1].push(level);
            }
            for &(sub, level) in &block.a_rungs {
                if sub == 0 || sub > n || level >= r {
                    return bad(format!(
                        "column {} block {} has marked rung ({sub}, {level}) out of range",
                        col.id, block.block
                    ));
                }
            }
            col_lines.push(per_sub);
            col_a.push(&block.a_rungs);
        }
        lines.push((col.id.as_str(), col_lines));
        a_sets.push(col_a);
    }
    Ok(Resolved {
        n,
        t,
        lines,
        a_sets,
    })
}

/// The cyclic gap after each selected level of one line: the distance to
/// the next selected level, wrapping the top rung to the line's first
/// selected level on the far side of the seam.
fn cyclic_gaps(levels: &[u32], r: u32) -> Vec<u32> {
    let k = levels.len();
    (0..k)
        .map(|idx| {
            if idx + 1 < k {
                levels[idx + 1] - levels[idx]
            } else {
                r - levels[idx] + levels[0]
            }
        })
        .collect()
}

struct CheckSink {
    checks: Vec<CheckResult>,
}

impl CheckSink {
    fn new() -> Self {
        CheckSink { checks: Vec::new() }
    }

    fn push(&mut self, name: &'static str, failure: Option<String>) {
        self.checks.push(CheckResult {
            name,
            pass: failure.is_none(),
            detail: failure.unwrap_or_default(),
        });
    }
}

/// Runs every check combinatorially, straight from the rung sets.
pub fn verify_all(system: &ColumnSystem, result: &TowerResult) -> Result<Verdicts> {
    let resolved = resolve(system, result)?;
    let n = resolved.n;
    let t = resolved.t;
    let m = cell_measures(system)?;
    let n_rat = rat_int(i64::from(n));
    let mut sink = CheckSink::new();

    // Structural checks, line by line.
    let mut bases_fail: Option<String> = None;
    let mut gap_fail: Option<String> = None;
    let mut seam_fail: Option<String> = None;
    let mut cover_fail: Option<String> = None;
    let mut image_fail: Option<String> = None;
    let mut disjoint_fail: Option<String> = None;

    for (ci, (col_id, col_lines)) in resolved.lines.iter().enumerate() {
        let col = &system.columns[ci];
        let r = col.height();
        for (bi, per_sub) in col_lines.iter().enumerate() {
            let a_set = resolved.a_sets[ci][bi];
            for (si, levels) in per_sub.iter().enumerate() {
                let here = || format!("column {col_id} block {} subcolumn {}", bi + 1, si + 1);
                if levels.first() != Some(&0) {
                    bases_fail.get_or_insert_with(|| format!("{} misses level 0", here()));
                    // Without a base the remaining line checks still run;
                    // the cyclic reading stays well defined.
                }
                if levels.is_empty() {
                    gap_fail.get_or_insert_with(|| format!("{} selects nothing", here()));
                    cover_fail.get_or_insert_with(|| format!("{} covers nothing", here()));
                    continue;
                }
                let gaps = cyclic_gaps(levels, r);
                for (idx, &gap) in gaps.iter().enumerate().take(gaps.len() - 1) {
                    if gap != n && gap != n + 1 {
                        gap_fail.get_or_insert_with(|| {
                            format!(
                                "{} gap {gap} after level {}",
                                here(),
                                levels[idx]
                            )
                        });
                    }
                }
                let seam = *gaps.last().expect("nonempty");
                if seam != n && seam != n + 1 {
                    seam_fail
                        .get_or_insert_with(|| format!("{} seam gap {seam}", here()));
                }

                // Exhaustive cover: each selected rung covers its next n
                // levels; a gap of n+1 puts one error-set level after
                // them. Every level must be covered exactly once.
                let mut cover = vec![0u32; r as usize];
                for (idx, &l) in levels.iter().enumerate() {
                    for k in 0..n {
                        cover[((l + k) % r) as usize] += 1;
                    }
                    if gaps[idx] == n + 1 {
                        cover[((l + n) % r) as usize] += 1;
                    }
                }
                if let Some(lvl) = cover.iter().position(|&c| c != 1) {
                    cover_fail.get_or_insert_with(|| {
                        format!(
                            "{} covers level {lvl} {} times",
                            here(),
                            cover[lvl]
                        )
                    });
                }

                // T(E) must land in B: the level after each error-set
                // level (cyclically) is selected.
                let level_set: BTreeSet<u32> = levels.iter().copied().collect();
                for (idx, &l) in levels.iter().enumerate() {
                    if gaps[idx] == n + 1 {
                        let e_level = (l + n) % r;
                        let next = (e_level + 1) % r;
                        if !level_set.contains(&next) {
                            image_fail.get_or_insert_with(|| {
                                format!(
                                    "{} error level {e_level} maps outside the base",
                                    here()
                                )
                            });
                        }
                    }
                }

                for &l in levels {
                    if a_set.contains(&(si as u32 + 1, l)) {
                        disjoint_fail.get_or_insert_with(|| {
                            format!("{} level {l} is in both B and A", here())
                        });
                    }
                }
            }
        }
    }

    // Measure ledger, from rung counts times exact sub-base widths.
    let zero = rat_int(0);
    let mut mu_b = zero.clone();
    let mut mu_a = zero.clone();
    let mut mu_union = zero.clone();
    let mut b_n = zero.clone();
    let mut b_n1 = zero.clone();
    let mut mu_e = zero.clone();
    let mut b_cells = vec![zero.clone(); t as usize];
    let mut a_cells = vec![zero.clone(); t as usize];

    for (ci, (col_id, col_lines)) in resolved.lines.iter().enumerate() {
        let col = &system.columns[ci];
        let r = col.height();
        let b_vec = &result.params.b[*col_id];
        for (bi, per_sub) in col_lines.iter().enumerate() {
            let sub_w = &col.width * &b_vec[bi] / &n_rat;
            let a_set = resolved.a_sets[ci][bi];
            let mut count_b: u64 = 0;
            let mut count_union: u64 = 0;
            let mut count_gap_n: u64 = 0;
            let mut count_gap_n1: u64 = 0;
            let mut count_e: u64 = 0;
            let mut cell_b = vec![0u64; t as usize];
            let mut cell_a = vec![0u64; t as usize];
            for (si, levels) in per_sub.iter().enumerate() {
                count_b += levels.len() as u64;
                // The union is a set: a level in both B and A counts once.
                let mut union_set: BTreeSet<u32> = levels.iter().copied().collect();
                for &(sub, l) in a_set.iter() {
                    if sub as usize == si + 1 {
                        union_set.insert(l);
                    }
                }
                count_union += union_set.len() as u64;
                for &l in levels {
                    cell_b[col.labels[l as usize] as usize - 1] += 1;
                }
                if levels.is_empty() {
                    continue;
                }
                for &gap in cyclic_gaps(levels, r).iter() {
                    if gap == n {
                        count_gap_n += 1;
                    } else if gap == n + 1 {
                        count_gap_n1 += 1;
                        count_e += 1;
                    }
                }
            }
            for &(_, l) in a_set.iter() {
                cell_a[col.labels[l as usize] as usize - 1] += 1;
            }
            let count_a = a_set.len() as u64;
            mu_b += &sub_w * rat_int(count_b as i64);
            mu_a += &sub_w * rat_int(count_a as i64);
            mu_union += &sub_w * rat_int(count_union as i64);
            b_n += &sub_w * rat_int(count_gap_n as i64);
            b_n1 += &sub_w * rat_int(count_gap_n1 as i64);
            mu_e += &sub_w * rat_int(count_e as i64);
            for c in 0..t as usize {
                b_cells[c] += &sub_w * rat_int(cell_b[c] as i64);
                a_cells[c] += &sub_w * rat_int(cell_a[c] as i64);
            }
        }
    }

    sink.push(CHECK_NAMES[0], bases_fail);
    sink.push(CHECK_NAMES[1], gap_fail);
    sink.push(CHECK_NAMES[2], seam_fail);
    sink.push(CHECK_NAMES[3], cover_fail);
    sink.push(CHECK_NAMES[4], image_fail);
    sink.push(CHECK_NAMES[5], disjoint_fail);

    let indep = |mu_s: &Ratio, cells: &[Ratio], what: &str| -> Option<String> {
        for (c, inter) in cells.iter().enumerate() {
            let expected = mu_s * &m[c];
            if *inter != expected {
                return Some(format!(
                    "{} cell {}: {} vs expected {}",
                    what,
                    c + 1,
                    fmt_ratio(inter),
                    fmt_ratio(&expected)
                ));
            }
        }
        None
    };
    sink.push(CHECK_NAMES[6], indep(&mu_b, &b_cells, "B"));
    sink.push(CHECK_NAMES[7], indep(&mu_a, &a_cells, "A"));

    let union_target = rat_int(1) / &n_rat;
    sink.push(
        CHECK_NAMES[8],
        (mu_union != union_target).then(|| {
            format!(
                "A∪B has measure {}, expected {}",
                fmt_ratio(&mu_union),
                fmt_ratio(&union_target)
            )
        }),
    );

    let height_sum = &b_n * &n_rat + &b_n1 * rat_int(i64::from(n) + 1);
    sink.push(
        CHECK_NAMES[9],
        (height_sum != rat_int(1)).then(|| {
            format!(
                "{}*{} + {}*{} = {} != 1",
                fmt_ratio(&b_n),
                n,
                fmt_ratio(&b_n1),
                n + 1,
                fmt_ratio(&height_sum)
            )
        }),
    );

    sink.push(
        CHECK_NAMES[10],
        (mu_e != b_n1).then(|| {
            format!(
                "error set measure {} vs tall-base measure {}",
                fmt_ratio(&mu_e),
                fmt_ratio(&b_n1)
            )
        }),
    );

    let claims = &result.measures;
    let reported = [
        ("B", &mu_b, &claims.b),
        ("A", &mu_a, &claims.a),
        ("E", &mu_e, &claims.e),
        ("B_N", &b_n, &claims.b_n),
        ("B_N1", &b_n1, &claims.b_n1),
    ];
    let mut report_fail: Option<String> = None;
    for (what, got, claimed) in reported {
        if got != claimed {
            report_fail.get_or_insert_with(|| {
                format!(
                    "{what}: recomputed {} but report claims {}",
                    fmt_ratio(got),
                    fmt_ratio(claimed)
                )
            });
        }
    }
    if claims.b_cells.len() != t as usize || claims.a_cells.len() != t as usize {
        report_fail.get_or_insert_with(|| "per-cell measure lists have wrong length".into());
    } else {
        for c in 0..t as usize {
            if b_cells[c] != claims.b_cells[c] || a_cells[c] != claims.a_cells[c] {
                report_fail.get_or_insert_with(|| {
                    format!("per-cell measures for cell {} do not match", c + 1)
                });
            }
        }
    }
    sink.push(CHECK_NAMES[11], report_fail);

    Ok(Verdicts {
        checks: sink.checks,
    })
}

/// The structural tower verdict: base selection, gap spectra, seam gaps,
/// the exhaustive cover, and the error set's image.
pub fn verify_alpern(system: &ColumnSystem, result: &TowerResult) -> Result<Verdicts> {
    let full = verify_all(system, result)?;
    Ok(Verdicts {
        checks: full.checks.into_iter().take(ALPERN_CHECKS).collect(),
    })
}

/// Exact independence report for one rung set of the result.
pub fn verify_independence(
    system: &ColumnSystem,
    result: &TowerResult,
    set: RungSet,
) -> Result<IndependenceReport> {
    let resolved = resolve(system, result)?;
    let t = resolved.t;
    let m = cell_measures(system)?;
    let n_rat = rat_int(i64::from(resolved.n));
    let mut mu = rat_int(0);
    let mut cells = vec![rat_int(0); t as usize];
    for (ci, (col_id, col_lines)) in resolved.lines.iter().enumerate() {
        let col = &system.columns[ci];
        let b_vec = &result.params.b[*col_id];
        for (bi, per_sub) in col_lines.iter().enumerate() {
            let sub_w = &col.width * &b_vec[bi] / &n_rat;
            let mut count: u64 = 0;
            let mut cell_count = vec![0u64; t as usize];
            for (si, levels) in per_sub.iter().enumerate() {
                // Levels of this subcolumn line belonging to the set;
                // a rung in both B and A still counts once.
                let mut line: BTreeSet<u32> = BTreeSet::new();
                if matches!(set, RungSet::B | RungSet::Union) {
                    line.extend(levels.iter().copied());
                }
                if matches!(set, RungSet::A | RungSet::Union) {
                    for &(sub, l) in resolved.a_sets[ci][bi] {
                        if sub as usize == si + 1 {
                            line.insert(l);
                        }
                    }
                }
                count += line.len() as u64;
                for &l in &line {
                    cell_count[col.labels[l as usize] as usize - 1] += 1;
                }
            }
            mu += &sub_w * rat_int(count as i64);
            for c in 0..t as usize {
                cells[c] += &sub_w * rat_int(cell_count[c] as i64);
            }
        }
    }
    let rows = (0..t as usize)
        .map(|c| {
            let expected = &mu * &m[c];
            let fraction = (!mu.is_zero()).then(|| &cells[c] / &mu);
            IndependenceRow {
                cell: c as u32 + 1,
                pass: cells[c] == expected,
                mu_intersection: cells[c].clone(),
                expected,
                fraction,
            }
        })
        .collect();
    Ok(IndependenceReport { set, mu, rows })
}

/// Recomputes one block's net skips straight from the label sequence:
/// each cell's appearance count in the column minus its selected rungs
/// across the block's subcolumns. Independent of the counts the
/// construction stored.
pub fn audit_net_skips(
    column: &crate::model::Column,
    t: u32,
    block: &crate::model::BlockSelection,
) -> BTreeMap<u32, i64> {
    let mut net: BTreeMap<u32, i64> = (1..=t).map(|c| (c, 0i64)).collect();
    for &label in &column.labels {
        *net.get_mut(&label).expect("labels within 1..=t") += 1;
    }
    for &(_, level) in &block.b_rungs {
        let label = column.labels[level as usize];
        *net.get_mut(&label).expect("labels within 1..=t") -= 1;
    }
    net
}

/// One column's slice of the atom grid.
#[derive(Debug, Clone)]
pub struct GridColumn {
    pub id: String,
    /// First atom id of the column's level 0.
    pub start: u32,
    /// Atoms per level.
    pub w_atoms: u32,
    pub height: u32,
    /// Within-level offsets delimiting the sub-bases, block-major:
    /// entry `(i-1)*n + (j-1)` starts block i's subcolumn j; the last
    /// entry equals `w_atoms`.
    pub sub_starts: Vec<u32>,
}

/// The transformation as a permutation of `g` equal-mass atoms.
#[derive(Debug, Clone)]
pub struct GridModel {
    pub g: u64,
    pub n: u32,
    pub t: u32,
    pub columns: Vec<GridColumn>,
    /// Image of each atom under the transformation.
    pub perm: Vec<u32>,
}

/// Lays out every column as consecutive atoms on the least common grid
/// and realizes the transformation atom-wise: up one level inside a
/// column; across the seam at the top, outgoing edges in `order`,
/// incoming edges in system edge-list order, order-preserving within
/// each edge.
pub fn build_grid(
    system: &ColumnSystem,
    n: u32,
    b_map: &BTreeMap<String, Vec<Ratio>>,
    limit: u64,
) -> Result<GridModel> {
    let t = system.t();
    let n_rat = rat_int(i64::from(n));
    let mut g_big = BigInt::one();
    let mut sub_widths: BTreeMap<&str, Vec<Ratio>> = BTreeMap::new();
    for col in &system.columns {
        let b_vec = b_map
            .get(&col.id)
            .ok_or_else(|| Error::SelectionMismatch(format!("no split for column {}", col.id)))?;
        if b_vec.len() as u32 != t {
            return Err(Error::SelectionMismatch(format!(
                "column {} split has wrong length",
                col.id
            )));
        }
        let widths: Vec<Ratio> = b_vec.iter().map(|b| &col.width * b / &n_rat).collect();
        for w in &widths {
            g_big = g_big.lcm(w.denom());
        }
        sub_widths.insert(col.id.as_str(), widths);
    }
    for edge in &system.edges {
        g_big = g_big.lcm(edge.width.denom());
    }
    let hard_cap = u64::from(u32::MAX);
    if g_big > BigInt::from(limit.min(hard_cap)) {
        return Err(Error::GridTooLarge {
            atoms: g_big.to_string(),
            limit: limit.min(hard_cap),
        });
    }
    let g = u64::try_from(g_big.clone()).expect("under the limit");

    let to_atoms = |w: &Ratio| -> u32 {
        let scaled = w * Ratio::from_integer(g_big.clone());
        assert!(scaled.is_integer(), "grid denominator divides every width");
        u32::try_from(scaled.to_integer()).expect("atom counts fit the grid")
    };

    let mut columns = Vec::with_capacity(system.columns.len());
    let mut next_start: u64 = 0;
    for col in &system.columns {
        let w_atoms = to_atoms(&col.width);
        let mut sub_starts = Vec::with_capacity((t * n) as usize + 1);
        let mut acc: u32 = 0;
        for sub_w in &sub_widths[col.id.as_str()] {
            let block_sub = to_atoms(sub_w);
            assert!(block_sub >= 1, "split fractions are positive");
            for _ in 0..n {
                sub_starts.push(acc);
                acc += block_sub;
            }
        }
        sub_starts.push(acc);
        assert_eq!(acc, w_atoms, "sub-bases tile the base");
        columns.push(GridColumn {
            id: col.id.clone(),
            start: u32::try_from(next_start).expect("under the limit"),
            w_atoms,
            height: col.height(),
            sub_starts,
        });
        next_start += u64::from(w_atoms) * u64::from(col.height());
    }
    assert_eq!(next_start, g, "atoms carry total mass 1");

    let index_of: BTreeMap<&str, usize> = system
        .columns
        .iter()
        .enumerate()
        .map(|(k, c)| (c.id.as_str(), k))
        .collect();

    let mut perm: Vec<u32> = vec![0; g as usize];
    for gc in &columns {
        for level in 0..gc.height.saturating_sub(1) {
            let base = gc.start + level * gc.w_atoms;
            for o in 0..gc.w_atoms {
                perm[(base + o) as usize] = base + gc.w_atoms + o;
            }
        }
    }
    // Seams: partition each top level by outgoing edges sorted by order,
    // and each base by incoming edges in edge-list order.
    let mut out_cursor: Vec<u32> = vec![0; columns.len()];
    let mut in_cursor: Vec<u32> = vec![0; columns.len()];
    let mut outgoing: Vec<Vec<&crate::model::SeamEdge>> = vec![Vec::new(); columns.len()];
    for edge in &system.edges {
        outgoing[index_of[edge.from.as_str()]].push(edge);
    }
    for list in &mut outgoing {
        list.sort_by_key(|e| e.order);
    }
    // Source offsets follow order; target offsets must follow edge-list
    // order, so compute them first.
    let mut target_range: BTreeMap<(usize, u32), u32> = BTreeMap::new();
    for edge in &system.edges {
        let di = index_of[edge.to.as_str()];
        let si = index_of[edge.from.as_str()];
        target_range.insert((si, edge.order), in_cursor[di]);
        in_cursor[di] += to_atoms(&edge.width);
    }
    for (si, list) in outgoing.iter().enumerate() {
        let src = &columns[si];
        let top = src.start + (src.height - 1) * src.w_atoms;
        for edge in list {
            let len = to_atoms(&edge.width);
            let di = index_of[edge.to.as_str()];
            let dst_base = columns[di].start;
            let t0 = target_range[&(si, edge.order)];
            let s0 = out_cursor[si];
            for k in 0..len {
                perm[(top + s0 + k) as usize] = dst_base + t0 + k;
            }
            out_cursor[si] += len;
        }
        assert_eq!(out_cursor[si], src.w_atoms, "outflow fills the top");
    }
    for (di, gc) in columns.iter().enumerate() {
        assert_eq!(in_cursor[di], gc.w_atoms, "inflow fills the base");
    }
    let mut seen = vec![false; g as usize];
    for &img in &perm {
        assert!(!seen[img as usize], "the transformation is a bijection");
        seen[img as usize] = true;
    }

    Ok(GridModel {
        g,
        n,
        t,
        columns,
        perm,
    })
}

/// Reruns every check by brute force over the grid: paints the rung sets
/// onto atoms, re-derives per-line level sets from those bits, walks true
/// orbits for the cover and the error set, and counts atoms for every
/// measure identity.
pub fn oracle_verify(
    system: &ColumnSystem,
    grid: &GridModel,
    result: &TowerResult,
) -> Result<Verdicts> {
    let resolved = resolve(system, result)?;
    let n = resolved.n;
    let t = resolved.t;
    if grid.n != n {
        return Err(Error::SelectionMismatch(format!(
            "grid built for N = {}, result for N = {}",
            grid.n, n
        )));
    }
    let g = grid.g;
    let mut b_bits = vec![false; g as usize];
    let mut a_bits = vec![false; g as usize];
    for (ci, gc) in grid.columns.iter().enumerate() {
        let (_, col_lines) = &resolved.lines[ci];
        for (bi, per_sub) in col_lines.iter().enumerate() {
            for (si, levels) in per_sub.iter().enumerate() {
                let lo = gc.sub_starts[bi * n as usize + si];
                let hi = gc.sub_starts[bi * n as usize + si + 1];
                for &l in levels {
                    let base = gc.start + l * gc.w_atoms;
                    for o in lo..hi {
                        b_bits[(base + o) as usize] = true;
                    }
                }
            }
            for &(sub, l) in resolved.a_sets[ci][bi] {
                let lo = gc.sub_starts[bi * n as usize + sub as usize - 1];
                let hi = gc.sub_starts[bi * n as usize + sub as usize];
                let base = gc.start + l * gc.w_atoms;
                for o in lo..hi {
                    a_bits[(base + o) as usize] = true;
                }
            }
        }
    }

    let mut sink = CheckSink::new();
    let mut bases_fail: Option<String> = None;
    let mut gap_fail: Option<String> = None;
    let mut seam_fail: Option<String> = None;
    let mut cover_fail: Option<String> = None;
    let mut image_fail: Option<String> = None;
    let mut disjoint_fail: Option<String> = None;

    // Per-line structure, re-derived from the painted atoms.
    let mut cover = vec![0u32; g as usize];
    let mut e_atoms: Vec<u32> = Vec::new();
    let mut count_gap_n_atoms: u64 = 0;
    let mut count_gap_n1_atoms: u64 = 0;
    for gc in grid.columns.iter() {
        let r = gc.height;
        for bi in 0..t as usize {
            for si in 0..n as usize {
                let lo = gc.sub_starts[bi * n as usize + si];
                let hi = gc.sub_starts[bi * n as usize + si + 1];
                let width = u64::from(hi - lo);
                let levels: Vec<u32> = (0..r)
                    .filter(|&l| b_bits[(gc.start + l * gc.w_atoms + lo) as usize])
                    .collect();
                let here =
                    || format!("column {} block {} subcolumn {}", gc.id, bi + 1, si + 1);
                if levels.first() != Some(&0) {
                    bases_fail.get_or_insert_with(|| format!("{} misses level 0", here()));
                }
                if levels.is_empty() {
                    gap_fail.get_or_insert_with(|| format!("{} selects nothing", here()));
                    cover_fail.get_or_insert_with(|| format!("{} covers nothing", here()));
                    continue;
                }
                let gaps = cyclic_gaps(&levels, r);
                for (idx, &gap) in gaps.iter().enumerate().take(gaps.len() - 1) {
                    if gap != n && gap != n + 1 {
                        gap_fail.get_or_insert_with(|| {
                            format!("{} gap {gap} after level {}", here(), levels[idx])
                        });
                    }
                }
                let seam = *gaps.last().expect("nonempty");
                if seam != n && seam != n + 1 {
                    seam_fail.get_or_insert_with(|| format!("{} seam gap {seam}", here()));
                }
                for (idx, &l) in levels.iter().enumerate() {
                    if gaps[idx] == n {
                        count_gap_n_atoms += width;
                    } else if gaps[idx] == n + 1 {
                        count_gap_n1_atoms += width;
                        // The error set: the n-th forward image of each
                        // tall-base rung, atom by atom.
                        let base = gc.start + l * gc.w_atoms;
                        for o in lo..hi {
                            let mut x = base + o;
                            for _ in 0..n {
                                x = grid.perm[x as usize];
                            }
                            e_atoms.push(x);
                        }
                    }
                }
            }
        }
    }

    // Exhaustive cover by orbit walking: each base atom covers its next n
    // images... itself included; error atoms cover themselves.
    for (a, &is_base) in b_bits.iter().enumerate() {
        if is_base {
            let mut x = a as u32;
            for _ in 0..n {
                cover[x as usize] += 1;
                x = grid.perm[x as usize];
            }
        }
    }
    for &e in &e_atoms {
        cover[e as usize] += 1;
    }
    if cover_fail.is_none() {
        if let Some(atom) = cover.iter().position(|&c| c != 1) {
            cover_fail = Some(format!("atom {atom} covered {} times", cover[atom]));
        }
    }
    for &e in &e_atoms {
        if !b_bits[grid.perm[e as usize] as usize] {
            image_fail.get_or_insert_with(|| {
                format!("error atom {e} maps outside the base")
            });
            break;
        }
    }
    if let Some(atom) = (0..g as usize).find(|&a| b_bits[a] && a_bits[a]) {
        disjoint_fail = Some(format!("atom {atom} is in both B and A"));
    }

    // Atom counting for every measure identity. Cell masses come from the
    // grid itself, not from the system's rationals.
    let mut cell_atoms = vec![0u64; t as usize];
    let mut b_atoms: u64 = 0;
    let mut a_atoms: u64 = 0;
    let mut union_atoms: u64 = 0;
    let mut b_cell_atoms = vec![0u64; t as usize];
    let mut a_cell_atoms = vec![0u64; t as usize];
    for (ci, gc) in grid.columns.iter().enumerate() {
        let labels = &system.columns[ci].labels;
        for l in 0..gc.height {
            let cell = labels[l as usize] as usize - 1;
            let base = gc.start + l * gc.w_atoms;
            cell_atoms[cell] += u64::from(gc.w_atoms);
            for o in 0..gc.w_atoms {
                let a = (base + o) as usize;
                if b_bits[a] {
                    b_atoms += 1;
                    b_cell_atoms[cell] += 1;
                }
                if a_bits[a] {
                    a_atoms += 1;
                    a_cell_atoms[cell] += 1;
                }
                if b_bits[a] || a_bits[a] {
                    union_atoms += 1;
                }
            }
        }
    }

    sink.push(CHECK_NAMES[0], bases_fail);
    sink.push(CHECK_NAMES[1], gap_fail);
    sink.push(CHECK_NAMES[2], seam_fail);
    sink.push(CHECK_NAMES[3], cover_fail);
    sink.push(CHECK_NAMES[4], image_fail);
    sink.push(CHECK_NAMES[5], disjoint_fail);

    // Exact identity over atom counts: count(S ∩ P_j) * g = count(S) *
    // count(P_j), integer arithmetic throughout.
    let indep = |s_atoms: u64, s_cells: &[u64], what: &str| -> Option<String> {
        for c in 0..t as usize {
            let lhs = u128::from(s_cells[c]) * u128::from(g);
            let rhs = u128::from(s_atoms) * u128::from(cell_atoms[c]);
            if lhs != rhs {
                return Some(format!(
                    "{} cell {}: {}/{} atoms vs {} * {}/{}",
                    what,
                    c + 1,
                    s_cells[c],
                    g,
                    s_atoms,
                    cell_atoms[c],
                    g
                ));
            }
        }
        None
    };
    sink.push(CHECK_NAMES[6], indep(b_atoms, &b_cell_atoms, "B"));
    sink.push(CHECK_NAMES[7], indep(a_atoms, &a_cell_atoms, "A"));

    sink.push(
        CHECK_NAMES[8],
        (union_atoms * u64::from(n) != g).then(|| {
            format!(
                "A∪B holds {union_atoms} of {g} atoms, expected 1/{n} exactly"
            )
        }),
    );

    let height_lhs =
        u128::from(count_gap_n_atoms) * u128::from(n) + u128::from(count_gap_n1_atoms) * u128::from(n + 1);
    sink.push(
        CHECK_NAMES[9],
        (height_lhs != u128::from(g)).then(|| {
            format!(
                "{count_gap_n_atoms}*{n} + {count_gap_n1_atoms}*{} = {height_lhs} atoms, expected {g}",
                n + 1
            )
        }),
    );

    let e_set: BTreeSet<u32> = e_atoms.iter().copied().collect();
    sink.push(
        CHECK_NAMES[10],
        (e_set.len() as u64 != count_gap_n1_atoms).then(|| {
            format!(
                "error set holds {} atoms, tall bases {}",
                e_set.len(),
                count_gap_n1_atoms
            )
        }),
    );

    let claims = &result.measures;
    let as_ratio = |count: u64| Ratio::new(BigInt::from(count), BigInt::from(g));
    let mut report_fail: Option<String> = None;
    let reported = [
        ("B", b_atoms, &claims.b),
        ("A", a_atoms, &claims.a),
        ("E", e_set.len() as u64, &claims.e),
        ("B_N", count_gap_n_atoms, &claims.b_n),
        ("B_N1", count_gap_n1_atoms, &claims.b_n1),
    ];
    for (what, count, claimed) in reported {
        if &as_ratio(count) != claimed {
            report_fail.get_or_insert_with(|| {
                format!(
                    "{what}: counted {count}/{g} but report claims {}",
                    fmt_ratio(claimed)
                )
            });
        }
    }
    if claims.b_cells.len() != t as usize || claims.a_cells.len() != t as usize {
        report_fail.get_or_insert_with(|| "per-cell measure lists have wrong length".into());
    } else {
        for c in 0..t as usize {
            if as_ratio(b_cell_atoms[c]) != claims.b_cells[c]
                || as_ratio(a_cell_atoms[c]) != claims.a_cells[c]
            {
                report_fail.get_or_insert_with(|| {
                    format!("per-cell measures for cell {} do not match", c + 1)
                });
            }
        }
    }
    sink.push(CHECK_NAMES[11], report_fail);

    Ok(Verdicts {
        checks: sink.checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::{build_tower, Overrides};
    use crate::ingest::build_cyclic;
    use crate::model::{
        BlockSelection, ColumnSelection, ConstructionParams, Measures, PartitionSpec, TowerResult,
    };
    use crate::ratio::rat;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn alternating(height: u32) -> ColumnSystem {
        let labels = (0..height).map(|k| 1 + (k % 2)).collect();
        build_cyclic(labels, PartitionSpec::numbered(2)).unwrap()
    }

    /// Hand-built result on the height-4 cycle: every subcolumn selects
    /// only its base rung.
    fn level0_result(n: u32) -> (ColumnSystem, TowerResult) {
        let sys = build_cyclic(vec![1, 2, 1, 2], PartitionSpec::numbered(2)).unwrap();
        let b = vec![rat(1, 2), rat(1, 2)];
        let sub_w = rat(1, 4) * rat(1, 2) / rat(i64::from(n), 1);
        let blocks: Vec<BlockSelection> = (1..=2)
            .map(|i| BlockSelection {
                block: i,
                b_rungs: (1..=n).map(|j| (j, 0)).collect(),
                a_rungs: Default::default(),
                net_skips: [(1, 0), (2, 0)].into_iter().collect(),
            })
            .collect();
        let rungs = 2 * n as i64;
        let mu_b = &sub_w * rat(rungs, 1);
        let all_gap_n = n == 4;
        let measures = Measures {
            b: mu_b.clone(),
            a: rat(0, 1),
            e: rat(0, 1),
            b_n: if all_gap_n { mu_b.clone() } else { rat(0, 1) },
            b_n1: rat(0, 1),
            b_cells: vec![mu_b.clone(), rat(0, 1)],
            a_cells: vec![rat(0, 1), rat(0, 1)],
        };
        let result = TowerResult {
            params: ConstructionParams {
                n,
                m_required: 0.into(),
                allow_small_m: true,
                delta: 0,
                gamma: [("c0".to_string(), 0)].into_iter().collect(),
                b: [("c0".to_string(), b)].into_iter().collect(),
            },
            selections: vec![ColumnSelection {
                column: "c0".to_string(),
                blocks,
            }],
            measures,
        };
        (sys, result)
    }

    #[test]
    fn level0_selection_hand_enumeration_n4() {
        let (sys, result) = level0_result(4);
        let v = verify_all(&sys, &result).unwrap();
        assert!(v.check("bases_selected").unwrap().pass);
        assert!(v.check("gap_spectrum").unwrap().pass);
        assert!(v.check("seam_gap").unwrap().pass);
        assert!(v.check("cover_partition").unwrap().pass);
        assert!(v.check("error_image").unwrap().pass);
        assert!(v.check("union_density").unwrap().pass);
        assert!(v.check("height_identity").unwrap().pass);
        assert!(v.check("reported_measures").unwrap().pass);
        // All of B sits at level 0, which is labeled cell 1.
        assert!(!v.check("independence_B").unwrap().pass);
        let grid = build_grid(&sys, 4, &result.params.b, DEFAULT_GRID_LIMIT).unwrap();
        assert_eq!(grid.g, 32);
        let o = oracle_verify(&sys, &grid, &result).unwrap();
        assert!(verdicts_agree(&v, &o));
    }

    #[test]
    fn level0_selection_fails_structurally_n5() {
        let (sys, result) = level0_result(5);
        let v = verify_all(&sys, &result).unwrap();
        assert!(!v.check("seam_gap").unwrap().pass);
        assert!(!v.check("cover_partition").unwrap().pass);
        assert!(!v.check("height_identity").unwrap().pass);
        assert!(!v.all_pass());
        let grid = build_grid(&sys, 5, &result.params.b, DEFAULT_GRID_LIMIT).unwrap();
        let o = oracle_verify(&sys, &grid, &result).unwrap();
        assert!(verdicts_agree(&v, &o));
    }

    #[test]
    fn built_tower_passes_both_paths() {
        let sys = alternating(1540);
        let result = build_tower(&sys, 4, &Overrides::default()).unwrap();
        let v = verify_all(&sys, &result).unwrap();
        assert!(v.all_pass(), "combinatorial: {:?}", v.checks);
        let grid = build_grid(&sys, 4, &result.params.b, DEFAULT_GRID_LIMIT).unwrap();
        assert_eq!(grid.g, 12320);
        let o = oracle_verify(&sys, &grid, &result).unwrap();
        assert!(o.all_pass(), "oracle: {:?}", o.checks);
        assert!(verdicts_agree(&v, &o));
    }

    #[test]
    fn independence_reports() {
        let sys = alternating(1540);
        let result = build_tower(&sys, 4, &Overrides::default()).unwrap();
        for set in [RungSet::B, RungSet::A, RungSet::Union] {
            let report = verify_independence(&sys, &result, set).unwrap();
            assert!(report.all_pass(), "{:?}", report);
        }
        let union = verify_independence(&sys, &result, RungSet::Union).unwrap();
        assert_eq!(union.mu, rat(1, 4));
        assert_eq!(union.rows[0].fraction, Some(rat(1, 2)));
        let (sys0, level0) = level0_result(4);
        let b_rep = verify_independence(&sys0, &level0, RungSet::B).unwrap();
        assert!(!b_rep.all_pass());
        assert_eq!(b_rep.rows[0].fraction, Some(rat(1, 1)));
    }

    #[test]
    fn alpern_subset_is_structural() {
        let sys = alternating(1540);
        let result = build_tower(&sys, 4, &Overrides::default()).unwrap();
        let v = verify_alpern(&sys, &result).unwrap();
        assert_eq!(v.checks.len(), 5);
        assert!(v.all_pass());
        assert_eq!(v.checks[0].name, "bases_selected");
    }

    #[test]
    fn n1_degenerate_verifies_everywhere() {
        let sys = alternating(1540);
        let result = build_tower(&sys, 1, &Overrides::default()).unwrap();
        let v = verify_all(&sys, &result).unwrap();
        assert!(v.all_pass(), "{:?}", v.checks);
        let grid = build_grid(&sys, 1, &result.params.b, DEFAULT_GRID_LIMIT).unwrap();
        let o = oracle_verify(&sys, &grid, &result).unwrap();
        assert!(o.all_pass());
        assert!(verdicts_agree(&v, &o));
    }

    #[test]
    fn audit_matches_stored_ledger_and_targets() {
        let sys = alternating(1540);
        let result = build_tower(&sys, 4, &Overrides::default()).unwrap();
        let col = &sys.columns[0];
        let sel = &result.selections[0];
        let gamma = result.params.gamma["c0"];
        let delta = result.params.delta;
        for block in &sel.blocks {
            let audit = audit_net_skips(col, 2, block);
            assert_eq!(audit, block.net_skips);
            for (&cell, &net) in &audit {
                let target = if cell == block.block { gamma } else { delta };
                assert_eq!(net, target as i64, "block {} cell {cell}", block.block);
            }
        }
    }

    #[test]
    fn grid_too_large() {
        let sys = alternating(1540);
        let result = build_tower(&sys, 4, &Overrides::default()).unwrap();
        match build_grid(&sys, 4, &result.params.b, 10) {
            Err(Error::GridTooLarge { atoms, limit: 10 }) => {
                assert_eq!(atoms, "12320");
            }
            other => panic!("expected GridTooLarge, got {other:?}"),
        }
    }

    #[test]
    fn mutations_rejected_identically_by_both_paths() {
        // Height 44 at N=2 keeps the grid tiny (176 atoms) while
        // exercising the full pipeline.
        let sys = alternating(44);
        let result = build_tower(&sys, 2, &Overrides { allow_small_m: true }).unwrap();
        let v = verify_all(&sys, &result).unwrap();
        assert!(v.all_pass(), "{:?}", v.checks);
        let grid = build_grid(&sys, 2, &result.params.b, DEFAULT_GRID_LIMIT).unwrap();
        assert_eq!(grid.g, 176);
        let o = oracle_verify(&sys, &grid, &result).unwrap();
        assert!(verdicts_agree(&v, &o));

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..20 {
            let mut mutated = result.clone();
            let block = rng.random_range(0..2usize);
            let sub = rng.random_range(1..=2u32);
            let level = rng.random_range(0..44u32);
            let rungs = &mut mutated.selections[0].blocks[block].b_rungs;
            if !rungs.remove(&(sub, level)) {
                rungs.insert((sub, level));
            }
            let vm = verify_all(&sys, &mutated).unwrap();
            assert!(!vm.all_pass(), "trial {trial} still passes");
            let om = oracle_verify(&sys, &grid, &mutated).unwrap();
            assert!(
                verdicts_agree(&vm, &om),
                "trial {trial}: {:?} vs {:?}",
                vm.checks,
                om.checks
            );
        }
    }

    #[test]
    fn resolver_rejects_malformed_results() {
        let sys = alternating(1540);
        let result = build_tower(&sys, 4, &Overrides::default()).unwrap();

        let mut wrong_col = result.clone();
        wrong_col.selections[0].column = "nope".to_string();
        assert!(matches!(
            verify_all(&sys, &wrong_col),
            Err(Error::SelectionMismatch(_))
        ));

        let mut bad_rung = result.clone();
        bad_rung.selections[0].blocks[0].b_rungs.insert((9, 3));
        assert!(matches!(
            verify_all(&sys, &bad_rung),
            Err(Error::SelectionMismatch(_))
        ));

        let mut bad_split = result.clone();
        bad_split.params.b.get_mut("c0").unwrap()[0] = rat(2, 3);
        assert!(matches!(
            verify_all(&sys, &bad_split),
            Err(Error::SelectionMismatch(_))
        ));
    }

    #[test]
    fn two_column_grid_round_trips_flow() {
        // Two columns exchanging mass; the permutation must be a
        // bijection respecting both seams.
        let text = concat!(
            "alpern-system v1\n",
            "cells 2 P1 P2\n",
            "column c0 1/8 1,2,1,2\n",
            "column c1 1/8 2,1,2,1\n",
            "edge c0 0 c1 1/16\n",
            "edge c0 1 c0 1/16\n",
            "edge c1 0 c0 1/16\n",
            "edge c1 1 c1 1/16\n",
        );
        let sys = crate::ingest::parse_system(text).unwrap();
        let b_map: BTreeMap<String, Vec<Ratio>> = [
            ("c0".to_string(), vec![rat(1, 2), rat(1, 2)]),
            ("c1".to_string(), vec![rat(1, 2), rat(1, 2)]),
        ]
        .into_iter()
        .collect();
        let grid = build_grid(&sys, 2, &b_map, DEFAULT_GRID_LIMIT).unwrap();
        assert_eq!(grid.g, 32);
        // Level sets map onward level by level: atoms of c0 level 0 land
        // in c0 level 1.
        let c0 = &grid.columns[0];
        for o in 0..c0.w_atoms {
            assert_eq!(grid.perm[(c0.start + o) as usize], c0.start + c0.w_atoms + o);
        }
    }
}
