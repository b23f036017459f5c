//! Tower construction: per column, compute the skip budget (delta), the
//! block parameter (gamma), the base split (b), select base rungs as a
//! bottom staircase, a quota-driven greedy middle, and a mirrored top
//! staircase, then pick the disjoint marked set A; finally aggregate exact
//! measures into a [`TowerResult`].
//!
//! The per-block bookkeeping identity driving everything: for block i and
//! cell j, appearances(j) minus B-selections(j) must land exactly on gamma
//! (j = i) or delta (j != i). The outer staircases fix part of that ledger;
//! the middle scan spends the remainder as skip quotas, one skipped level
//! per unit. The congruence built into gamma makes the diagonal hand off to
//! the top staircase with every within-subcolumn gap in {N, N+1}.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_traits::Signed;

use crate::error::{Error, Result};
use crate::model::{
    cell_measures, validate_system, BlockSelection, ColumnSelection, ColumnSystem,
    ConstructionParams, Measures, SplitColumn, TowerResult,
};
use crate::ratio::{rat_int, Ratio};
use crate::richness::{is_rich, required_m};

/// Skip budget per non-own cell: `max(2(N-1)(N-2), 2(N-1))` for N >= 2,
/// zero for N = 1. The lower clamp keeps the budget above the worst-case
/// net skip the two outer staircases can impose on a single cell.
pub fn compute_delta(n: u32) -> u64 {
    if n <= 1 {
        return 0;
    }
    let n = u64::from(n);
    (2 * (n - 1) * (n - 2)).max(2 * (n - 1))
}

fn gamma_big(r: u32, n: u32, t: u32, delta: u64, m1: &Ratio) -> BigInt {
    let low = (Ratio::from_integer(BigInt::from(delta)) / m1)
        .ceil()
        .to_integer();
    let n_big = BigInt::from(n);
    let want = BigInt::from(r) - BigInt::from(u64::from(t - 1)) * BigInt::from(delta);
    let rem = ((&want - &low) % &n_big + &n_big) % &n_big;
    low + rem
}

/// The unique integer in `[delta/m1, delta/m1 + N)` with
/// `(t-1) delta + gamma == R (mod N)`. `m1` must be the minimum cell
/// measure. The window always holds exactly one such integer.
pub fn compute_gamma(r: u32, n: u32, t: u32, delta: u64, m1: &Ratio) -> u64 {
    assert!(n >= 2, "gamma is defined for N >= 2");
    assert!(t >= 1);
    assert!(m1.is_positive(), "minimum cell measure must be positive");
    u64::try_from(gamma_big(r, n, t, delta, m1))
        .expect("gamma exceeds u64; no representable system reaches this")
}

/// Base-split fractions: `b_j = (m_j (gamma + (t-1) delta) - delta) /
/// (gamma - delta)`, or `b = m` verbatim in the degenerate `gamma == delta`
/// case (t = 1 or N = 1). The numerator's sign is the feasibility test:
/// a negative one means gamma sits below its window.
pub fn compute_b(m: &[Ratio], gamma: u64, delta: u64, t: u32) -> Result<Vec<Ratio>> {
    assert_eq!(m.len() as u32, t, "one mass per cell");
    assert!(t >= 1);
    if gamma == delta {
        return Ok(m.to_vec());
    }
    let weight = rat_int(gamma as i64 + (i64::from(t) - 1) * delta as i64);
    let delta_r = rat_int(delta as i64);
    let denom = rat_int(gamma as i64) - &delta_r;
    let mut b = Vec::with_capacity(m.len());
    for (idx, mj) in m.iter().enumerate() {
        let numerator = mj * &weight - &delta_r;
        if numerator.is_negative() {
            return Err(Error::NegativeMass {
                cell: idx as u32 + 1,
                numerator: crate::ratio::fmt_ratio(&numerator),
            });
        }
        b.push(numerator / &denom);
    }
    debug_assert_eq!(
        b.iter().fold(rat_int(0), |acc, x| acc + x),
        rat_int(1),
        "split fractions must sum to 1"
    );
    Ok(b)
}

/// Base staircase level sets, one per subcolumn j = 1..N: level 0, then
/// `N - j` gaps of N, then `j - 1` gaps of N + 1. Every subcolumn selects
/// exactly N levels; subcolumn j tops out at `N^2 - N + j - 1`.
pub fn bottom_staircase(n: u32) -> Vec<BTreeSet<u32>> {
    assert!(n >= 2, "staircases are defined for N >= 2");
    (1..=n)
        .map(|j| {
            let mut set = BTreeSet::new();
            let mut level = 0u32;
            set.insert(level);
            for _ in 0..(n - j) {
                level += n;
                set.insert(level);
            }
            for _ in 0..(j - 1) {
                level += n + 1;
                set.insert(level);
            }
            set
        })
        .collect()
}

/// Top staircase level sets: subcolumn j reflects the bottom staircase of
/// subcolumn `N + 1 - j` (base level dropped), so
/// `{R - l : l in bottom(N+1-j), l >= N}`. Leaves N unselected levels over
/// subcolumn 1's last rung and N - 1 over the others, so the seam gaps are
/// N + 1 and N.
pub fn top_staircase(n: u32, r: u32) -> Result<Vec<BTreeSet<u32>>> {
    assert!(n >= 2, "staircases are defined for N >= 2");
    let required = 2 * n * n + n;
    if r < required {
        return Err(Error::TooShort {
            column: String::new(),
            height: r,
            n,
            required,
        });
    }
    let bottom = bottom_staircase(n);
    Ok((1..=n)
        .map(|j| {
            bottom[(n - j) as usize]
                .iter()
                .filter(|&&l| l >= n)
                .map(|&l| r - l)
                .collect()
        })
        .collect())
}

/// Level -> number of staircase selections at that level, over both outer
/// regions of a height-`r` block.
fn outer_selection_counts(n: u32, r: u32) -> Result<BTreeMap<u32, u32>> {
    let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
    for set in bottom_staircase(n) {
        for l in set {
            *counts.entry(l).or_insert(0) += 1;
        }
    }
    for set in top_staircase(n, r)? {
        for l in set {
            *counts.entry(l).or_insert(0) += 1;
        }
    }
    Ok(counts)
}

/// Audits one block: every subcolumn's selected levels must start at 0,
/// step by N or N + 1, and end within N or N + 1 of R.
fn audit_block_gaps(
    column: &str,
    block: u32,
    n: u32,
    r: u32,
    rungs: &BTreeSet<(u32, u32)>,
) -> Result<()> {
    let fail = |detail: String| {
        Err(Error::MisalignedHandoff {
            column: column.to_string(),
            block,
            detail,
        })
    };
    for j in 1..=n {
        let levels: Vec<u32> = rungs
            .iter()
            .filter(|(sub, _)| *sub == j)
            .map(|&(_, l)| l)
            .collect();
        if levels.first() != Some(&0) {
            return fail(format!("subcolumn {j} does not select level 0"));
        }
        for w in levels.windows(2) {
            let gap = w[1] - w[0];
            if gap != n && gap != n + 1 {
                return fail(format!(
                    "subcolumn {j} gap {gap} between levels {} and {}",
                    w[0], w[1]
                ));
            }
        }
        let seam = r - levels.last().expect("nonempty");
        if seam != n && seam != n + 1 {
            return fail(format!("subcolumn {j} seam gap {seam}"));
        }
    }
    Ok(())
}

/// Selects the base rungs of every block of one split column.
///
/// Per block i: lay the bottom and top staircases, derive the outer
/// net-skip ledger, convert the targets (gamma for cell i, delta
/// otherwise) into middle skip quotas, then scan the middle region
/// `N^2 ..= R - N^2` upward. A level is skipped, delaying the diagonal by
/// one, exactly when its cell still has quota, the previous skip lies at
/// least N + 1 levels below, and the level is at most `R - N^2 - N`;
/// otherwise the due subcolumn selects its rung. Returns one selection per
/// block with the A-rungs left empty.
pub fn select_column(split: &SplitColumn<'_>, gamma: u64, delta: u64) -> Result<Vec<BlockSelection>> {
    let n = split.n;
    let col = split.column;
    let r = col.height();
    let t = split.t();
    assert!(n >= 2, "the staircase selection is defined for N >= 2");
    let labels = &col.labels;
    let occurrences = col.occurrences(t);
    let outer_counts = outer_selection_counts(n, r).map_err(|e| match e {
        Error::TooShort {
            height,
            n,
            required,
            ..
        } => Error::TooShort {
            column: col.id.clone(),
            height,
            n,
            required,
        },
        other => other,
    })?;

    let mut blocks = Vec::with_capacity(t as usize);
    for i in 1..=t {
        let target = |cell: u32| if cell == i { gamma } else { delta };

        // Outer ledger: appearances minus selections over the two outer
        // regions (level 0 contributes 1 - N).
        let middle_lo = n * n;
        let middle_hi = r - n * n;
        let mut outer: BTreeMap<u32, i64> = (1..=t).map(|c| (c, 0)).collect();
        for l in (0..middle_lo).chain(middle_hi + 1..r) {
            let sels = i64::from(outer_counts.get(&l).copied().unwrap_or(0));
            *outer.get_mut(&labels[l as usize]).unwrap() += 1 - sels;
        }

        let mut quota: BTreeMap<u32, u64> = BTreeMap::new();
        for cell in 1..=t {
            let q = i64::try_from(target(cell)).expect("guarded by build_tower") - outer[&cell];
            if q < 0 {
                return Err(Error::QuotaNegative {
                    column: col.id.clone(),
                    block: i,
                    cell,
                    outer: outer[&cell],
                    target: target(cell),
                });
            }
            quota.insert(cell, q as u64);
        }

        // Greedy middle scan.
        let skip_top = r - n * n - n;
        let mut middle: BTreeSet<(u32, u32)> = BTreeSet::new();
        let mut due: u32 = 0;
        let mut last_skip: Option<u32> = None;
        for l in middle_lo..=middle_hi {
            let cell = labels[l as usize];
            let spaced = last_skip.is_none_or(|s| l - s > n);
            if quota[&cell] > 0 && spaced && l <= skip_top {
                *quota.get_mut(&cell).unwrap() -= 1;
                last_skip = Some(l);
            } else {
                middle.insert((due % n + 1, l));
                due += 1;
            }
        }
        for (cell, q) in &quota {
            if *q > 0 {
                return Err(Error::QuotaUnmet {
                    column: col.id.clone(),
                    block: i,
                    cell: *cell,
                    remaining: *q,
                });
            }
        }

        let mut b_rungs = middle;
        for (idx, set) in bottom_staircase(n).into_iter().enumerate() {
            for l in set {
                b_rungs.insert((idx as u32 + 1, l));
            }
        }
        for (idx, set) in top_staircase(n, r)?.into_iter().enumerate() {
            for l in set {
                b_rungs.insert((idx as u32 + 1, l));
            }
        }
        audit_block_gaps(&col.id, i, n, r, &b_rungs)?;

        // Recompute the net-skip ledger from the assembled rungs; the
        // quota bookkeeping promises it equals the targets.
        let mut selected: BTreeMap<u32, u64> = (1..=t).map(|c| (c, 0)).collect();
        for &(_, l) in &b_rungs {
            *selected.get_mut(&labels[l as usize]).unwrap() += 1;
        }
        let mut net_skips: BTreeMap<u32, i64> = BTreeMap::new();
        for cell in 1..=t {
            let net = occurrences[cell as usize - 1] as i64 - selected[&cell] as i64;
            if net != target(cell) as i64 {
                return Err(Error::MisalignedHandoff {
                    column: col.id.clone(),
                    block: i,
                    detail: format!(
                        "net skips of cell {cell} is {net}, expected {}",
                        target(cell)
                    ),
                });
            }
            net_skips.insert(cell, net);
        }

        blocks.push(BlockSelection {
            block: i,
            b_rungs,
            a_rungs: BTreeSet::new(),
            net_skips,
        });
    }
    Ok(blocks)
}

/// Selects block i's marked rungs: gamma rungs labeled i and delta labeled
/// each other cell, disjoint from the base rungs, chosen by the first-fit
/// scan over levels bottom-up and subcolumns left-to-right.
pub fn select_a(
    split: &SplitColumn<'_>,
    block: u32,
    b_rungs: &BTreeSet<(u32, u32)>,
    gamma: u64,
    delta: u64,
) -> Result<BTreeSet<(u32, u32)>> {
    let col = split.column;
    let t = split.t();
    let mut quota: BTreeMap<u32, u64> = (1..=t)
        .map(|c| (c, if c == block { gamma } else { delta }))
        .collect();
    let mut picked = BTreeSet::new();
    let mut open: u64 = quota.values().sum();
    'scan: for l in 0..col.height() {
        let cell = col.labels[l as usize];
        if quota[&cell] == 0 {
            continue;
        }
        for j in 1..=split.n {
            if open == 0 {
                break 'scan;
            }
            if quota[&cell] == 0 {
                break;
            }
            if !b_rungs.contains(&(j, l)) && !picked.contains(&(j, l)) {
                picked.insert((j, l));
                *quota.get_mut(&cell).unwrap() -= 1;
                open -= 1;
            }
        }
    }
    for (cell, q) in &quota {
        if *q > 0 {
            return Err(Error::AQuotaUnmet {
                column: col.id.clone(),
                block,
                cell: *cell,
                remaining: *q,
            });
        }
    }
    Ok(picked)
}

/// Knobs that weaken build preconditions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Overrides {
    /// Proceed when the occurrence bound fails. The bound is sufficient,
    /// never necessary; failures then surface as construction errors or
    /// verifier rejection instead.
    pub allow_small_m: bool,
}

fn column_measures(
    system: &ColumnSystem,
    n: u32,
    b_map: &BTreeMap<String, Vec<Ratio>>,
    selections: &[ColumnSelection],
) -> Measures {
    let t = system.t();
    let n_rat = rat_int(i64::from(n));
    let mut mu_b = rat_int(0);
    let mut mu_a = rat_int(0);
    let mut b_n = rat_int(0);
    let mut b_n1 = rat_int(0);
    let mut b_cells = vec![rat_int(0); t as usize];
    let mut a_cells = vec![rat_int(0); t as usize];

    for sel in selections {
        let col = system.column(&sel.column).expect("selection matches system");
        let b_vec = &b_map[&sel.column];
        let r = col.height();
        for block in &sel.blocks {
            let sub_w = &col.width * &b_vec[block.block as usize - 1] / &n_rat;
            let mut count_b: u64 = 0;
            let mut per_cell_b = vec![0u64; t as usize];
            let mut per_cell_a = vec![0u64; t as usize];
            let mut gap_n: u64 = 0;
            let mut gap_n1: u64 = 0;
            for j in 1..=n {
                let levels: Vec<u32> = block
                    .b_rungs
                    .iter()
                    .filter(|(sub, _)| *sub == j)
                    .map(|&(_, l)| l)
                    .collect();
                for (idx, &l) in levels.iter().enumerate() {
                    count_b += 1;
                    per_cell_b[col.labels[l as usize] as usize - 1] += 1;
                    let gap = match levels.get(idx + 1) {
                        Some(&next) => next - l,
                        None => r - l,
                    };
                    if gap == n {
                        gap_n += 1;
                    } else {
                        gap_n1 += 1;
                    }
                }
            }
            for &(_, l) in &block.a_rungs {
                per_cell_a[col.labels[l as usize] as usize - 1] += 1;
            }
            let count_a = block.a_rungs.len() as u64;
            mu_b += &sub_w * rat_int(count_b as i64);
            mu_a += &sub_w * rat_int(count_a as i64);
            b_n += &sub_w * rat_int(gap_n as i64);
            b_n1 += &sub_w * rat_int(gap_n1 as i64);
            for c in 0..t as usize {
                b_cells[c] += &sub_w * rat_int(per_cell_b[c] as i64);
                a_cells[c] += &sub_w * rat_int(per_cell_a[c] as i64);
            }
        }
    }
    Measures {
        b: mu_b,
        a: mu_a,
        e: b_n1.clone(),
        b_n,
        b_n1,
        b_cells,
        a_cells,
    }
}

/// Builds the full tower: validates, gates on the occurrence bound and the
/// minimum height, then runs the per-column selection and aggregates exact
/// measures. For N = 1 the answer is the degenerate tower selecting every
/// rung (base = whole space, empty A and error set).
pub fn build_tower(system: &ColumnSystem, n: u32, overrides: &Overrides) -> Result<TowerResult> {
    assert!(n >= 1, "tower height must be positive");
    let violations = validate_system(system);
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    let m = cell_measures(system)?;
    let t = system.t();
    let m_min = m.iter().min().expect("at least one cell").clone();

    let m_required = required_m(n, t, &m_min);
    let richness = is_rich(system, &m_required);
    if !richness.is_rich() && !overrides.allow_small_m {
        return Err(Error::NotRich { report: richness });
    }

    let required_height = 2 * n * n + n;
    for col in &system.columns {
        if col.height() < required_height {
            return Err(Error::TooShort {
                column: col.id.clone(),
                height: col.height(),
                n,
                required: required_height,
            });
        }
    }

    let delta = compute_delta(n);
    let mut gamma_map: BTreeMap<String, u64> = BTreeMap::new();
    let mut b_map: BTreeMap<String, Vec<Ratio>> = BTreeMap::new();
    let mut selections: Vec<ColumnSelection> = Vec::new();

    if n == 1 {
        for col in &system.columns {
            gamma_map.insert(col.id.clone(), 0);
            b_map.insert(col.id.clone(), m.clone());
            let blocks = (1..=t)
                .map(|i| BlockSelection {
                    block: i,
                    b_rungs: (0..col.height()).map(|l| (1, l)).collect(),
                    a_rungs: BTreeSet::new(),
                    net_skips: (1..=t).map(|c| (c, 0)).collect(),
                })
                .collect();
            selections.push(ColumnSelection {
                column: col.id.clone(),
                blocks,
            });
        }
    } else {
        for col in &system.columns {
            let r = col.height();
            let g_big = gamma_big(r, n, t, delta, &m_min);

            // A block needs gamma + (t-1) delta - (N-1) middle skips, each
            // at least N + 1 apart within [N^2, R - N^2 - N]. If even the
            // coarse capacity bound fails, the scan cannot succeed; bail
            // out before narrowing gamma (whose exact value may be huge).
            let span = u64::from(r - 2 * n * n - n);
            let capacity = span / u64::from(n + 1) + 1;
            let needed = &g_big + BigInt::from(u64::from(t - 1)) * BigInt::from(delta)
                - BigInt::from(n - 1);
            if needed > BigInt::from(capacity) {
                let excess = &needed - BigInt::from(capacity);
                return Err(Error::QuotaUnmet {
                    column: col.id.clone(),
                    block: 1,
                    cell: 1,
                    remaining: u64::try_from(excess).unwrap_or(u64::MAX),
                });
            }
            let gamma = u64::try_from(g_big).expect("bounded by the capacity guard");
            let b = compute_b(&m, gamma, delta, t)?;
            gamma_map.insert(col.id.clone(), gamma);
            b_map.insert(col.id.clone(), b.clone());

            let split = SplitColumn::new(col, n, b);
            let mut blocks = select_column(&split, gamma, delta)?;
            for block in &mut blocks {
                block.a_rungs = select_a(&split, block.block, &block.b_rungs, gamma, delta)?;
            }
            selections.push(ColumnSelection {
                column: col.id.clone(),
                blocks,
            });
        }
    }

    let measures = column_measures(system, n, &b_map, &selections);
    Ok(TowerResult {
        params: ConstructionParams {
            n,
            m_required,
            allow_small_m: overrides.allow_small_m,
            delta,
            gamma: gamma_map,
            b: b_map,
        },
        selections,
        measures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::build_cyclic;
    use crate::model::{Column, PartitionSpec};
    use crate::ratio::rat;

    fn alternating(height: u32) -> ColumnSystem {
        let labels = (0..height).map(|k| 1 + (k % 2)).collect();
        build_cyclic(labels, PartitionSpec::numbered(2)).unwrap()
    }

    #[test]
    fn delta_values() {
        assert_eq!(compute_delta(1), 0);
        assert_eq!(compute_delta(2), 2);
        assert_eq!(compute_delta(3), 4);
        assert_eq!(compute_delta(4), 12);
        assert_eq!(compute_delta(5), 24);
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(compute_gamma(1540, 4, 2, 12, &rat(1, 2)), 24);
        assert_eq!(compute_gamma(1541, 4, 3, 12, &rat(1, 3)), 37);
        assert_eq!(compute_gamma(1540, 2, 2, 2, &rat(1, 2)), 4);
    }

    #[test]
    fn gamma_lands_in_window_and_residue() {
        for r in [100u32, 101, 102, 103, 1540] {
            for n in [2u32, 3, 4, 5] {
                for t in [1u32, 2, 3] {
                    let m1 = rat(1, i64::from(t.max(2)));
                    let delta = compute_delta(n);
                    let g = compute_gamma(r, n, t, delta, &m1);
                    let low = (rat_int(delta as i64) / &m1).ceil().to_integer();
                    let low = u64::try_from(low).unwrap();
                    assert!(g >= low && g < low + u64::from(n));
                    let lhs = (u64::from(t - 1) * delta + g) % u64::from(n);
                    assert_eq!(lhs, u64::from(r) % u64::from(n));
                }
            }
        }
    }

    #[test]
    fn b_symmetric_and_skewed() {
        assert_eq!(
            compute_b(&[rat(1, 2), rat(1, 2)], 24, 12, 2).unwrap(),
            vec![rat(1, 2), rat(1, 2)]
        );
        assert_eq!(
            compute_b(&[rat(1, 3), rat(2, 3)], 36, 12, 2).unwrap(),
            vec![rat(1, 6), rat(5, 6)]
        );
        let b = compute_b(&[rat(1, 3), rat(2, 3)], 40, 12, 2).unwrap();
        assert_eq!(b, vec![rat(4, 21), rat(17, 21)]);
        assert_eq!(b.iter().fold(rat_int(0), |a, x| a + x), rat_int(1));
    }

    #[test]
    fn b_negative_numerator() {
        match compute_b(&[rat(1, 2), rat(1, 2)], 2, 12, 2) {
            Err(Error::NegativeMass { cell: 1, numerator }) => {
                assert_eq!(numerator, "-5/1");
            }
            other => panic!("expected NegativeMass, got {other:?}"),
        }
    }

    #[test]
    fn b_degenerate_equals_m() {
        let m = vec![rat_int(1)];
        assert_eq!(compute_b(&m, 4, 4, 1).unwrap(), m);
        let m2 = vec![rat(1, 3), rat(2, 3)];
        assert_eq!(compute_b(&m2, 0, 0, 2).unwrap(), m2);
    }

    #[test]
    fn bottom_staircase_golden() {
        let sets = |v: Vec<Vec<u32>>| -> Vec<BTreeSet<u32>> {
            v.into_iter().map(|s| s.into_iter().collect()).collect()
        };
        assert_eq!(
            bottom_staircase(4),
            sets(vec![
                vec![0, 4, 8, 12],
                vec![0, 4, 8, 13],
                vec![0, 4, 9, 14],
                vec![0, 5, 10, 15],
            ])
        );
        assert_eq!(
            bottom_staircase(3),
            sets(vec![vec![0, 3, 6], vec![0, 3, 7], vec![0, 4, 8]])
        );
        assert_eq!(bottom_staircase(2), sets(vec![vec![0, 2], vec![0, 3]]));
    }

    #[test]
    fn top_staircase_golden() {
        let r = 1540u32;
        let sets: Vec<BTreeSet<u32>> = top_staircase(4, r).unwrap();
        let expect: Vec<BTreeSet<u32>> = vec![
            [r - 15, r - 10, r - 5].into_iter().collect(),
            [r - 14, r - 9, r - 4].into_iter().collect(),
            [r - 13, r - 8, r - 4].into_iter().collect(),
            [r - 12, r - 8, r - 4].into_iter().collect(),
        ];
        assert_eq!(sets, expect);
        let two: Vec<BTreeSet<u32>> = top_staircase(2, 100).unwrap();
        assert_eq!(two[0], [97].into_iter().collect());
        assert_eq!(two[1], [98].into_iter().collect());
    }

    #[test]
    fn top_staircase_too_short() {
        match top_staircase(4, 35) {
            Err(Error::TooShort {
                height: 35,
                n: 4,
                required: 36,
                ..
            }) => {}
            other => panic!("expected TooShort, got {other:?}"),
        }
    }

    #[test]
    fn staircase_mirror_identity() {
        for n in 2u32..=6 {
            let r = 3 * n * n;
            let bottom = bottom_staircase(n);
            let top = top_staircase(n, r).unwrap();
            let mut reflected: Vec<u32> = top
                .iter()
                .flat_map(|s| s.iter().map(|&l| r - l))
                .collect();
            reflected.sort_unstable();
            let mut nonzero: Vec<u32> = bottom
                .iter()
                .flat_map(|s| s.iter().copied().filter(|&l| l != 0))
                .collect();
            nonzero.sort_unstable();
            assert_eq!(reflected, nonzero);
        }
    }

    #[test]
    fn select_column_alternating_net_skips() {
        let sys = alternating(1540);
        let split = SplitColumn::new(&sys.columns[0], 4, vec![rat(1, 2), rat(1, 2)]);
        let blocks = select_column(&split, 24, 12).unwrap();
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0].net_skips[&1], 24);
        assert_eq!(blocks[0].net_skips[&2], 12);
        assert_eq!(blocks[1].net_skips[&1], 12);
        assert_eq!(blocks[1].net_skips[&2], 24);
        for block in &blocks {
            assert_eq!(block.b_rungs.len() as u64, 1540 - 24 - 12);
        }
    }

    #[test]
    fn select_column_skip_spacing() {
        let sys = alternating(1540);
        let split = SplitColumn::new(&sys.columns[0], 4, vec![rat(1, 2), rat(1, 2)]);
        let blocks = select_column(&split, 24, 12).unwrap();
        for block in &blocks {
            // Reconstruct skipped middle levels: levels with no selection.
            let selected: BTreeSet<u32> = block
                .b_rungs
                .iter()
                .filter(|&&(_, l)| (16..=1540 - 16).contains(&l))
                .map(|&(_, l)| l)
                .collect();
            let skips: Vec<u32> = (16..=1540 - 16).filter(|l| !selected.contains(l)).collect();
            assert_eq!(skips.len(), 24 + 12 - 3);
            for w in skips.windows(2) {
                assert!(w[1] - w[0] >= 5, "skips {} and {} too close", w[0], w[1]);
            }
            assert!(skips.iter().all(|&l| l <= 1540 - 16 - 4));
        }
    }

    #[test]
    fn select_column_quota_unmet_without_middle_cell() {
        // Cell 2 lives only in the outer regions; block 1 still owes delta
        // skips of it in the middle, which has none to give.
        let mut labels = vec![1u32; 33];
        for l in [0usize, 1, 2, 30, 31, 32] {
            labels[l] = 2;
        }
        let col = Column {
            id: "c0".into(),
            width: rat(1, 33),
            labels,
        };
        let split = SplitColumn::new(&col, 3, vec![rat(1, 2), rat(1, 2)]);
        match select_column(&split, 5, 4) {
            Err(Error::QuotaUnmet { block: 1, cell: 2, remaining: 3, .. }) => {}
            other => panic!("expected QuotaUnmet on cell 2, got {other:?}"),
        }
    }

    #[test]
    fn select_column_quota_negative_when_outer_overskips() {
        // Six unselected outer levels all carry cell 2: net outer skips 6
        // exceed the delta = 4 target.
        let mut labels = vec![1u32; 33];
        for l in [1usize, 2, 5, 28, 31, 32] {
            labels[l] = 2;
        }
        let col = Column {
            id: "c0".into(),
            width: rat(1, 33),
            labels,
        };
        let split = SplitColumn::new(&col, 3, vec![rat(1, 2), rat(1, 2)]);
        match select_column(&split, 8, 4) {
            Err(Error::QuotaNegative {
                block: 1,
                cell: 2,
                outer: 6,
                target: 4,
                ..
            }) => {}
            other => panic!("expected QuotaNegative, got {other:?}"),
        }
    }

    #[test]
    fn select_a_cardinalities_and_disjointness() {
        let sys = alternating(1540);
        let split = SplitColumn::new(&sys.columns[0], 4, vec![rat(1, 2), rat(1, 2)]);
        let blocks = select_column(&split, 24, 12).unwrap();
        let a = select_a(&split, 1, &blocks[0].b_rungs, 24, 12).unwrap();
        assert_eq!(a.len(), 36);
        let of_cell = |cell: u32| {
            a.iter()
                .filter(|&&(_, l)| sys.columns[0].labels[l as usize] == cell)
                .count()
        };
        assert_eq!(of_cell(1), 24);
        assert_eq!(of_cell(2), 12);
        assert!(a.is_disjoint(&blocks[0].b_rungs));
        let again = select_a(&split, 1, &blocks[0].b_rungs, 24, 12).unwrap();
        assert_eq!(a, again);
    }

    #[test]
    fn build_tower_alternating_1540_n4() {
        let sys = alternating(1540);
        let result = build_tower(&sys, 4, &Overrides::default()).unwrap();
        assert_eq!(result.params.delta, 12);
        assert_eq!(result.params.gamma["c0"], 24);
        assert_eq!(result.params.b["c0"], vec![rat(1, 2), rat(1, 2)]);
        let meas = &result.measures;
        assert_eq!(meas.a, rat(9, 1540));
        assert_eq!(meas.b, rat(94, 385));
        assert_eq!(&meas.a + &meas.b, rat(1, 4));
        assert_eq!(meas.b_cells[0], &meas.b * rat(1, 2));
        assert_eq!(meas.a_cells[1], &meas.a * rat(1, 2));
        assert_eq!(
            &meas.b_n * rat_int(4) + &meas.b_n1 * rat_int(5),
            rat_int(1)
        );
        assert_eq!(meas.e, meas.b_n1);
    }

    #[test]
    fn build_tower_skewed_masses_exact_independence() {
        let mut labels = vec![1u32; 1000];
        labels.extend(vec![2u32; 540]);
        let sys = build_cyclic(labels, PartitionSpec::numbered(2)).unwrap();
        let result = build_tower(&sys, 3, &Overrides::default()).unwrap();
        assert_eq!(result.params.gamma["c0"], 12);
        assert_eq!(result.params.b["c0"], vec![rat(123, 154), rat(31, 154)]);
        let meas = &result.measures;
        assert_eq!(meas.b_cells[0], &meas.b * rat(50, 77));
        assert_eq!(meas.b_cells[1], &meas.b * rat(27, 77));
        assert_eq!(meas.a_cells[0], &meas.a * rat(50, 77));
        assert_eq!(&meas.a + &meas.b, rat(1, 3));
    }

    #[test]
    fn build_tower_n1_degenerate() {
        let sys = alternating(1540);
        let result = build_tower(&sys, 1, &Overrides::default()).unwrap();
        assert_eq!(result.measures.b, rat_int(1));
        assert_eq!(result.measures.a, rat_int(0));
        assert_eq!(result.measures.e, rat_int(0));
        assert_eq!(result.measures.b_n, rat_int(1));
        assert_eq!(result.measures.b_n1, rat_int(0));
        assert_eq!(result.params.b["c0"], vec![rat(1, 2), rat(1, 2)]);
        let rungs: u64 = result.selections[0]
            .blocks
            .iter()
            .map(|b| b.b_rungs.len() as u64)
            .sum();
        assert_eq!(rungs, 2 * 1540);
    }

    #[test]
    fn build_tower_t1_gamma_equals_delta() {
        let sys = build_cyclic(vec![1; 100], PartitionSpec::numbered(1)).unwrap();
        let result = build_tower(&sys, 3, &Overrides::default()).unwrap();
        assert_eq!(result.params.delta, 4);
        assert_eq!(result.params.gamma["c0"], 4);
        assert_eq!(result.params.b["c0"], vec![rat_int(1)]);
        let meas = &result.measures;
        assert_eq!(&meas.a + &meas.b, rat(1, 3));
        assert_eq!(
            &meas.b_n * rat_int(3) + &meas.b_n1 * rat_int(4),
            rat_int(1)
        );
    }

    #[test]
    fn build_tower_not_rich_and_too_short() {
        let sys = alternating(20);
        match build_tower(&sys, 4, &Overrides::default()) {
            Err(Error::NotRich { report }) => assert!(!report.is_rich()),
            other => panic!("expected NotRich, got {other:?}"),
        }
        match build_tower(&sys, 4, &Overrides { allow_small_m: true }) {
            Err(Error::TooShort {
                height: 20,
                n: 4,
                required: 36,
                ..
            }) => {}
            other => panic!("expected TooShort, got {other:?}"),
        }
    }

    #[test]
    fn build_tower_rejects_invalid_system() {
        let sys = ColumnSystem {
            partition: PartitionSpec::numbered(2),
            columns: vec![Column {
                id: "c0".into(),
                width: rat(1, 3),
                labels: vec![1, 2, 1, 2],
            }],
            edges: vec![],
        };
        assert!(matches!(
            build_tower(&sys, 4, &Overrides::default()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn per_block_selection_count_is_height_and_cells_balance() {
        let sys = alternating(1540);
        let result = build_tower(&sys, 4, &Overrides::default()).unwrap();
        let col = &sys.columns[0];
        let occ = col.occurrences(2);
        for block in &result.selections[0].blocks {
            assert_eq!(
                block.b_rungs.len() + block.a_rungs.len(),
                col.height() as usize
            );
            for cell in 1..=2u32 {
                let b_count = block
                    .b_rungs
                    .iter()
                    .filter(|&&(_, l)| col.labels[l as usize] == cell)
                    .count() as u64;
                let a_count = block
                    .a_rungs
                    .iter()
                    .filter(|&&(_, l)| col.labels[l as usize] == cell)
                    .count() as u64;
                assert_eq!(b_count + a_count, occ[cell as usize - 1]);
            }
        }
    }
}
