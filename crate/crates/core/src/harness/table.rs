use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::imaging::Preprocessing;
use crate::loss_optim::LossKind;
use crate::model::HeadKind;

use super::config::ExperimentConfig;
use super::metrics::{improvement_raw, mean, RoundingMode};
use super::run::RunRecord;

/// Decimal places for meters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MetreStyle {
    /// One decimal from 1 m up, two below.
    #[default]
    Adaptive,
    /// Always two.
    TwoDecimals,
}

/// Display rules for table cells. CSV output always keeps full precision.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TableFormat {
    pub rounding: RoundingMode,
    pub metres: MetreStyle,
}

impl TableFormat {
    /// Two decimals everywhere, truncated.
    pub fn two_decimals() -> Self {
        Self {
            rounding: RoundingMode::Truncate,
            metres: MetreStyle::TwoDecimals,
        }
    }

    pub fn metres(&self, v: f64) -> String {
        let decimals = match self.metres {
            MetreStyle::Adaptive if v.abs() >= 1.0 => 1,
            _ => 2,
        };
        format!("{}m", self.rounding.format(v, decimals))
    }

    pub fn degrees(&self, v: f64) -> String {
        format!("{}°", self.rounding.format(v, 2))
    }

    pub fn percent(&self, v: f64) -> String {
        format!("{}%", self.rounding.format(v, 1))
    }

    /// `1.24m, 1.84°`
    pub fn cell(&self, metres: f64, degrees: f64) -> String {
        format!("{}, {}", self.metres(metres), self.degrees(degrees))
    }
}

/// Medians (meters, degrees) of one table cell.
pub type Cell = Option<(f64, f64)>;

#[derive(Clone, Debug, PartialEq)]
pub struct TableRow {
    pub group: String,
    pub dataset: String,
    pub cells: Vec<Cell>,
}

/// A results table: datasets down, configurations across.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub title: String,
    pub columns: Vec<String>,
    /// `(baseline, new)` column indices of the improvement column.
    pub improvement: Option<(usize, usize)>,
    pub rows: Vec<TableRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TableOutput {
    pub markdown: String,
    pub csv: String,
}

/// Position and orientation improvement of `new` over `base`, unrounded.
pub fn cell_improvement(base: Cell, new: Cell) -> Option<(f64, f64)> {
    let ((bp, bo), (np, no)) = (base?, new?);
    Some((improvement_raw(bp, np).ok()?, improvement_raw(bo, no).ok()?))
}

fn slug(s: &str) -> String {
    let mut out = String::new();
    for c in s.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') && !out.is_empty() {
            out.push('_');
        }
    }
    out.trim_end_matches('_').to_string()
}

impl Table {
    /// Groups in order of first appearance.
    pub fn groups(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.group.as_str()) {
                out.push(&r.group);
            }
        }
        out
    }

    /// Per-column arithmetic mean of a group's medians; a column with any
    /// missing cell averages to `None`.
    pub fn average(&self, group: &str) -> Vec<Cell> {
        let rows: Vec<&TableRow> = self.rows.iter().filter(|r| r.group == group).collect();
        (0..self.columns.len())
            .map(|c| {
                let cells: Option<Vec<(f64, f64)>> = rows.iter().map(|r| r.cells.get(c).copied().flatten()).collect();
                let cells = cells?;
                let p: Vec<f64> = cells.iter().map(|c| c.0).collect();
                let o: Vec<f64> = cells.iter().map(|c| c.1).collect();
                Some((mean(&p)?, mean(&o)?))
            })
            .collect()
    }

    fn improvement_of(&self, cells: &[Cell]) -> Option<(f64, f64)> {
        let (b, n) = self.improvement?;
        cell_improvement(cells.get(b).copied().flatten(), cells.get(n).copied().flatten())
    }

    /// Markdown for reading and CSV at full precision. Groups with more than
    /// one dataset get an `Average` row; missing cells print as `-`.
    pub fn render(&self, fmt: &TableFormat) -> Result<TableOutput> {
        if self.rows.is_empty() {
            return Err(Error::Data("table has no rows".into()));
        }
        if let Some(r) = self.rows.iter().find(|r| r.cells.len() != self.columns.len()) {
            return Err(Error::Data(format!(
                "row {} has {} cells for {} columns",
                r.dataset,
                r.cells.len(),
                self.columns.len()
            )));
        }
        let mut md = String::new();
        let mut csv = String::new();
        writeln!(md, "**{}**\n", self.title).unwrap();
        let mut header = vec!["Dataset".to_string()];
        header.extend(self.columns.iter().cloned());
        let mut csv_header = vec!["group".to_string(), "dataset".to_string()];
        for c in &self.columns {
            let s = slug(c);
            csv_header.push(format!("{s}_position_m"));
            csv_header.push(format!("{s}_orientation_deg"));
        }
        if self.improvement.is_some() {
            header.push("Improvement".into());
            csv_header.push("improvement_position_pct".into());
            csv_header.push("improvement_orientation_pct".into());
        }
        writeln!(md, "| {} |", header.join(" | ")).unwrap();
        writeln!(md, "|{}", "---|".repeat(header.len())).unwrap();
        writeln!(csv, "{}", csv_header.join(",")).unwrap();

        let mut emit = |group: &str, label: &str, cells: &[Cell], bold: bool| {
            let name = if bold { format!("**{label}**") } else { label.to_string() };
            let mut m = vec![name];
            let mut c = vec![group.to_string(), label.to_string()];
            for cell in cells {
                match cell {
                    Some((p, o)) => {
                        m.push(fmt.cell(*p, *o));
                        c.push(p.to_string());
                        c.push(o.to_string());
                    }
                    None => {
                        m.push("-, -".into());
                        c.push("-".into());
                        c.push("-".into());
                    }
                }
            }
            if self.improvement.is_some() {
                match self.improvement_of(cells) {
                    Some((p, o)) => {
                        m.push(format!("{}, {}", fmt.percent(p), fmt.percent(o)));
                        c.push(p.to_string());
                        c.push(o.to_string());
                    }
                    None => {
                        m.push("-, -".into());
                        c.push("-".into());
                        c.push("-".into());
                    }
                }
            }
            writeln!(md, "| {} |", m.join(" | ")).unwrap();
            writeln!(csv, "{}", c.join(",")).unwrap();
        };
        for group in self.groups() {
            let rows: Vec<&TableRow> = self.rows.iter().filter(|r| r.group == group).collect();
            for r in &rows {
                emit(group, &r.dataset, &r.cells, false);
            }
            if rows.len() > 1 {
                emit(group, "Average", &self.average(group), true);
            }
        }
        if self.improvement.is_some() {
            writeln!(
                md,
                "\nImprovement = (baseline − new)/baseline, values {} to the digits shown.",
                match fmt.rounding {
                    RoundingMode::Truncate => "truncated",
                    RoundingMode::Nearest => "rounded",
                }
            )
            .unwrap();
        }
        Ok(TableOutput { markdown: md, csv })
    }
}

/// The five table shapes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// Centered crop vs. whole field of view.
    Table1,
    /// Augmentation.
    Table2,
    /// LSTM sequence lengths with the centered crop.
    Table3,
    /// LSTM sequence lengths with the whole view.
    Table4,
    /// Baselines vs. all techniques combined.
    Table5,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum HeadSel {
    Any,
    Fc,
    Lstm(Option<usize>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum LossSel {
    Any,
    Fixed,
    Adaptive,
}

#[derive(Clone, Debug, PartialEq)]
struct ColumnSpec {
    title: String,
    preprocessing: Option<Preprocessing>,
    augment: Option<bool>,
    head: HeadSel,
    loss: LossSel,
}

impl ColumnSpec {
    fn new(title: &str, pre: Preprocessing, augment: bool, head: HeadSel) -> Self {
        Self {
            title: title.into(),
            preprocessing: Some(pre),
            augment: Some(augment),
            head,
            loss: LossSel::Any,
        }
    }

    fn matches(&self, c: &ExperimentConfig) -> bool {
        let head = &c.model.head;
        self.preprocessing.is_none_or(|p| p == c.preprocessing)
            && self.augment.is_none_or(|a| a == c.augment)
            && match self.head {
                HeadSel::Any => true,
                HeadSel::Fc => head.kind == HeadKind::Fc,
                HeadSel::Lstm(len) => head.kind == HeadKind::Lstm && len.is_none_or(|l| l == head.sequence_length),
            }
            && match self.loss {
                LossSel::Any => true,
                LossSel::Fixed => matches!(c.loss, LossKind::FixedBeta(_)),
                LossSel::Adaptive => c.loss == LossKind::Adaptive,
            }
    }
}

impl Layout {
    pub const ALL: [Layout; 5] = [Layout::Table1, Layout::Table2, Layout::Table3, Layout::Table4, Layout::Table5];

    pub fn name(&self) -> &'static str {
        match self {
            Layout::Table1 => "table1",
            Layout::Table2 => "table2",
            Layout::Table3 => "table3",
            Layout::Table4 => "table4",
            Layout::Table5 => "table5",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown layout '{s}' (table1 to table5)")))
    }

    pub fn title(&self) -> &'static str {
        match self {
            Layout::Table1 => "Effect of increased field of view on localization accuracy",
            Layout::Table2 => "Data augmentation's effect on localization accuracy",
            Layout::Table3 => "Localization accuracy using LSTM cells",
            Layout::Table4 => "Localization accuracy using LSTM cells + whole view",
            Layout::Table5 => "Whole field of view + data augmentation + LSTM",
        }
    }

    fn columns(&self) -> (Vec<ColumnSpec>, Option<(usize, usize)>) {
        use Preprocessing::{CenteredCrop as Cc, WholeFov as Wf};
        let lengths = |pre| {
            let mut v = vec![ColumnSpec::new("Baseline", Cc, false, HeadSel::Fc)];
            v.extend([1, 5, 10, 20].map(|l| ColumnSpec::new(&format!("Length {l}"), pre, false, HeadSel::Lstm(Some(l)))));
            v
        };
        match self {
            Layout::Table1 => (
                vec![
                    ColumnSpec::new("Centered Crop", Cc, false, HeadSel::Fc),
                    ColumnSpec::new("Whole Field of View", Wf, false, HeadSel::Fc),
                ],
                Some((0, 1)),
            ),
            Layout::Table2 => (
                vec![
                    ColumnSpec::new("Baseline", Cc, false, HeadSel::Fc),
                    ColumnSpec::new("Baseline-Augmented", Cc, true, HeadSel::Fc),
                    ColumnSpec::new("Whole view-Augmented", Wf, true, HeadSel::Fc),
                ],
                Some((0, 2)),
            ),
            Layout::Table3 => (lengths(Cc), None),
            Layout::Table4 => (lengths(Wf), None),
            Layout::Table5 => (
                vec![
                    ColumnSpec {
                        loss: LossSel::Fixed,
                        ..ColumnSpec::new("Baseline", Cc, false, HeadSel::Fc)
                    },
                    ColumnSpec {
                        loss: LossSel::Adaptive,
                        ..ColumnSpec::new("Adaptive Loss", Cc, false, HeadSel::Fc)
                    },
                    ColumnSpec {
                        head: HeadSel::Lstm(None),
                        ..ColumnSpec::new("Combined", Wf, true, HeadSel::Any)
                    },
                ],
                None,
            ),
        }
    }
}

/// Arranges finished runs into a table layout: one row per dataset label
/// (grouped by dataset group, in order of first appearance), test medians in
/// the cells. When several runs fit a cell the first is used.
pub fn table_from_runs(records: &[RunRecord], layout: Layout) -> Result<Table> {
    if records.is_empty() {
        return Err(Error::Data("no runs to tabulate".into()));
    }
    let (specs, improvement) = layout.columns();
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in records {
        let k = (r.config.dataset_group.clone(), r.config.dataset_label.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let groups: Vec<String> = keys.iter().fold(Vec::new(), |mut acc, (g, _)| {
        if !acc.contains(g) {
            acc.push(g.clone());
        }
        acc
    });
    let mut rows = Vec::new();
    for g in &groups {
        for (_, dataset) in keys.iter().filter(|(kg, _)| kg == g) {
            let cells = specs
                .iter()
                .map(|spec| {
                    let mut hits = records.iter().filter(|r| {
                        &r.config.dataset_group == g && &r.config.dataset_label == dataset && spec.matches(&r.config)
                    });
                    let first = hits.next();
                    if let Some(extra) = hits.next() {
                        log::warn!(
                            "{} / {}: runs {} and {} both fit; using {}",
                            dataset,
                            spec.title,
                            first.map(|r| r.config.name.as_str()).unwrap_or(""),
                            extra.config.name,
                            first.map(|r| r.config.name.as_str()).unwrap_or("")
                        );
                    }
                    first.map(|r| (r.test.median_position_m, r.test.median_orientation_deg))
                })
                .collect();
            rows.push(TableRow {
                group: g.clone(),
                dataset: dataset.clone(),
                cells,
            });
        }
    }
    Ok(Table {
        title: layout.title().into(),
        columns: specs.into_iter().map(|s| s.title).collect(),
        improvement,
        rows,
    })
}

/// [`table_from_runs`] rendered to markdown and CSV.
pub fn emit_table(records: &[RunRecord], layout: Layout, fmt: &TableFormat) -> Result<TableOutput> {
    table_from_runs(records, layout)?.render(fmt)
}
