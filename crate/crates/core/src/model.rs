//! Finite-rank column systems and the tower data they produce.
//!
//! A system is a finite set of columns, each a stack of unit-width levels
//! labeled by partition cells, plus seam edges that return slices of each
//! column's top level to column bases. Widths are exact rationals; a valid
//! system carries total mass 1 and conserves width across every seam.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::ratio::{fmt_ratio, rat_int, Ratio};

/// Ordered partition cells `1..=t` with display names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionSpec {
    names: Vec<String>,
}

impl PartitionSpec {
    pub fn new(names: Vec<String>) -> Self {
        PartitionSpec { names }
    }

    /// `P1..Pt` default names.
    pub fn numbered(t: u32) -> Self {
        PartitionSpec {
            names: (1..=t).map(|j| format!("P{j}")).collect(),
        }
    }

    /// Number of cells `t`.
    pub fn len(&self) -> u32 {
        self.names.len() as u32
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// One column: a strictly positive width and one cell label per level,
/// listed bottom to top.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub id: String,
    pub width: Ratio,
    pub labels: Vec<u32>,
}

impl Column {
    /// Number of levels `R`.
    pub fn height(&self) -> u32 {
        self.labels.len() as u32
    }

    /// Appearance count of every cell `1..=t` in this column's name.
    pub fn occurrences(&self, t: u32) -> Vec<u64> {
        let mut counts = vec![0u64; t as usize];
        for &label in &self.labels {
            if label >= 1 && label <= t {
                counts[(label - 1) as usize] += 1;
            }
        }
        counts
    }
}

/// A directed seam edge: a slice of `from`'s top level that returns to the
/// base of `to`. Edges leaving one column are ordered left to right by
/// `order`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeamEdge {
    pub from: String,
    pub order: u32,
    pub to: String,
    pub width: Ratio,
}

/// A finite-rank model: partition, columns, and seam edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSystem {
    pub partition: PartitionSpec,
    pub columns: Vec<Column>,
    pub edges: Vec<SeamEdge>,
}

impl ColumnSystem {
    /// Number of partition cells.
    pub fn t(&self) -> u32 {
        self.partition.len()
    }

    pub fn column(&self, id: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.id == id)
    }

    /// Column id to position lookup.
    pub fn column_index(&self) -> BTreeMap<&str, usize> {
        self.columns
            .iter()
            .enumerate()
            .map(|(i, c)| (c.id.as_str(), i))
            .collect()
    }

    /// Total mass: sum of width times height over all columns.
    pub fn total_mass(&self) -> Ratio {
        self.columns
            .iter()
            .map(|c| &c.width * rat_int(c.height() as i64))
            .sum()
    }
}

/// One structural invariant breach found by [`validate_system`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyPartition,
    DuplicateCellName { name: String },
    NoColumns,
    DuplicateColumn { id: String },
    EmptyColumn { id: String },
    NonpositiveWidth { id: String, width: Ratio },
    LabelOutOfRange { id: String, level: u32, label: u32 },
    TotalMass { total: Ratio },
    UnknownColumn { id: String, edge: usize },
    NonpositiveEdgeWidth { from: String, order: u32 },
    EdgeOrders { id: String, found: Vec<u32> },
    Outflow { id: String, total: Ratio, width: Ratio },
    Inflow { id: String, total: Ratio, width: Ratio },
    ZeroCellMeasure { cell: u32 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyPartition => write!(f, "partition has no cells"),
            Violation::DuplicateCellName { name } => {
                write!(f, "duplicate cell name {name:?}")
            }
            Violation::NoColumns => write!(f, "system has no columns"),
            Violation::DuplicateColumn { id } => write!(f, "duplicate column id {id:?}"),
            Violation::EmptyColumn { id } => write!(f, "column {id} has no levels"),
            Violation::NonpositiveWidth { id, width } => {
                write!(f, "column {id} width {} is not positive", fmt_ratio(width))
            }
            Violation::LabelOutOfRange { id, level, label } => {
                write!(f, "column {id} level {level} label {label} is out of range")
            }
            Violation::TotalMass { total } => {
                write!(f, "total mass {} is not 1/1", fmt_ratio(total))
            }
            Violation::UnknownColumn { id, edge } => {
                write!(f, "edge {edge} references unknown column {id:?}")
            }
            Violation::NonpositiveEdgeWidth { from, order } => {
                write!(f, "edge {order} leaving {from} has nonpositive width")
            }
            Violation::EdgeOrders { id, found } => {
                write!(f, "edges leaving {id} have orders {found:?}, expected 0..k without gaps")
            }
            Violation::Outflow { id, total, width } => write!(
                f,
                "outflow {} from {id} does not match its width {}",
                fmt_ratio(total),
                fmt_ratio(width)
            ),
            Violation::Inflow { id, total, width } => write!(
                f,
                "inflow {} into {id} does not match its width {}",
                fmt_ratio(total),
                fmt_ratio(width)
            ),
            Violation::ZeroCellMeasure { cell } => {
                write!(f, "cell {cell} has zero measure")
            }
        }
    }
}

/// Checks every structural invariant and returns all breaches found.
/// An empty report means the system is valid.
pub fn validate_system(sys: &ColumnSystem) -> Vec<Violation> {
    let mut out = Vec::new();
    let t = sys.t();

    if sys.partition.is_empty() {
        out.push(Violation::EmptyPartition);
    }
    let mut seen_names = BTreeSet::new();
    for name in sys.partition.names() {
        if !seen_names.insert(name.clone()) {
            out.push(Violation::DuplicateCellName { name: name.clone() });
        }
    }

    if sys.columns.is_empty() {
        out.push(Violation::NoColumns);
    }
    let mut seen_ids = BTreeSet::new();
    for col in &sys.columns {
        if !seen_ids.insert(col.id.clone()) {
            out.push(Violation::DuplicateColumn { id: col.id.clone() });
        }
        if col.labels.is_empty() {
            out.push(Violation::EmptyColumn { id: col.id.clone() });
        }
        if col.width <= Ratio::zero() {
            out.push(Violation::NonpositiveWidth {
                id: col.id.clone(),
                width: col.width.clone(),
            });
        }
        for (level, &label) in col.labels.iter().enumerate() {
            if label < 1 || label > t {
                out.push(Violation::LabelOutOfRange {
                    id: col.id.clone(),
                    level: level as u32,
                    label,
                });
            }
        }
    }

    if !sys.columns.is_empty() {
        let total = sys.total_mass();
        if total != Ratio::one() {
            out.push(Violation::TotalMass { total });
        }
    }

    let index = sys.column_index();
    let mut edges_ok = true;
    for (pos, edge) in sys.edges.iter().enumerate() {
        for id in [&edge.from, &edge.to] {
            if !index.contains_key(id.as_str()) {
                out.push(Violation::UnknownColumn {
                    id: id.clone(),
                    edge: pos,
                });
                edges_ok = false;
            }
        }
        if edge.width <= Ratio::zero() {
            out.push(Violation::NonpositiveEdgeWidth {
                from: edge.from.clone(),
                order: edge.order,
            });
            edges_ok = false;
        }
    }

    if edges_ok {
        for col in &sys.columns {
            let mut orders: Vec<u32> = sys
                .edges
                .iter()
                .filter(|e| e.from == col.id)
                .map(|e| e.order)
                .collect();
            orders.sort_unstable();
            let expected: Vec<u32> = (0..orders.len() as u32).collect();
            if orders != expected {
                out.push(Violation::EdgeOrders {
                    id: col.id.clone(),
                    found: orders,
                });
            }

            let outflow: Ratio = sys
                .edges
                .iter()
                .filter(|e| e.from == col.id)
                .map(|e| e.width.clone())
                .sum();
            if outflow != col.width {
                out.push(Violation::Outflow {
                    id: col.id.clone(),
                    total: outflow,
                    width: col.width.clone(),
                });
            }
            let inflow: Ratio = sys
                .edges
                .iter()
                .filter(|e| e.to == col.id)
                .map(|e| e.width.clone())
                .sum();
            if inflow != col.width {
                out.push(Violation::Inflow {
                    id: col.id.clone(),
                    total: inflow,
                    width: col.width.clone(),
                });
            }
        }
    }

    for j in 1..=t {
        let mass: Ratio = sys
            .columns
            .iter()
            .map(|c| &c.width * rat_int(c.occurrences(t)[(j - 1) as usize] as i64))
            .sum();
        if mass.is_zero() {
            out.push(Violation::ZeroCellMeasure { cell: j });
        }
    }

    out
}

/// Exact global cell measures `m_1..m_t`. Errors with [`Error::ZeroCell`]
/// if any cell carries no mass.
pub fn cell_measures(sys: &ColumnSystem) -> Result<Vec<Ratio>> {
    let t = sys.t();
    let mut measures = vec![Ratio::zero(); t as usize];
    for col in &sys.columns {
        let occ = col.occurrences(t);
        for j in 0..t as usize {
            measures[j] += &col.width * rat_int(occ[j] as i64);
        }
    }
    for (j, m) in measures.iter().enumerate() {
        if m.is_zero() {
            return Err(Error::ZeroCell { cell: j as u32 + 1 });
        }
    }
    Ok(measures)
}

/// Per-column appearance counts of every cell.
pub fn occurrences(sys: &ColumnSystem) -> BTreeMap<String, Vec<u64>> {
    let t = sys.t();
    sys.columns
        .iter()
        .map(|c| (c.id.clone(), c.occurrences(t)))
        .collect()
}

/// A column with its base split into `t * N` sub-bases: `t` blocks of `N`
/// equal sub-bases each, laid out left to right by block then position.
#[derive(Debug, Clone)]
pub struct SplitColumn<'a> {
    pub column: &'a Column,
    pub n: u32,
    pub b: Vec<Ratio>,
}

impl<'a> SplitColumn<'a> {
    pub fn new(column: &'a Column, n: u32, b: Vec<Ratio>) -> Self {
        SplitColumn { column, n, b }
    }

    /// Number of blocks (one per cell).
    pub fn t(&self) -> u32 {
        self.b.len() as u32
    }

    /// Width of each of block `i`'s `N` sub-bases: `width * b_i / N`.
    pub fn sub_width(&self, block: u32) -> Ratio {
        &self.column.width * &self.b[(block - 1) as usize] / rat_int(self.n as i64)
    }
}

/// Everything the construction chose; echoed into reports so that
/// verification can re-derive widths and targets without re-running it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstructionParams {
    pub n: u32,
    /// Richness threshold the system was held to (exact).
    pub m_required: BigInt,
    pub allow_small_m: bool,
    pub delta: u64,
    /// Per-column congruence parameter.
    pub gamma: BTreeMap<String, u64>,
    /// Per-column base split fractions, one per cell.
    pub b: BTreeMap<String, Vec<Ratio>>,
}

/// Rung choices for one block of one column. Rungs are `(subcolumn, level)`
/// pairs with subcolumns numbered `1..=N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSelection {
    pub block: u32,
    pub b_rungs: BTreeSet<(u32, u32)>,
    pub a_rungs: BTreeSet<(u32, u32)>,
    /// Achieved net skips per cell: appearances minus selected rungs.
    pub net_skips: BTreeMap<u32, i64>,
}

/// All block selections for one column, blocks in order `1..=t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSelection {
    pub column: String,
    pub blocks: Vec<BlockSelection>,
}

/// Exact measures of the tower pieces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Measures {
    pub b: Ratio,
    pub a: Ratio,
    pub e: Ratio,
    pub b_n: Ratio,
    pub b_n1: Ratio,
    /// Per-cell intersection measures of the base.
    pub b_cells: Vec<Ratio>,
    /// Per-cell intersection measures of the marked set.
    pub a_cells: Vec<Ratio>,
}

/// The tower: parameters, per-column rung selections, and exact measures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TowerResult {
    pub params: ConstructionParams,
    pub selections: Vec<ColumnSelection>,
    pub measures: Measures,
}

impl TowerResult {
    pub fn selection_for(&self, id: &str) -> Option<&ColumnSelection> {
        self.selections.iter().find(|s| s.column == id)
    }
}
