//! Dataset ingestion, indicator encoding, and cross-validation folds.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::DataError;

/// Columns whose names start with this prefix hold simulation ground truth.
/// They are never loaded as features.
pub const ORACLE_PREFIX: &str = "oracle_";
pub const ORACLE_RELEASE: &str = "oracle_r_release";
pub const ORACLE_WITHHOLD: &str = "oracle_r_withhold";

/// The two-element action set of a release decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Release,
    Withhold,
}

impl Action {
    pub fn other(self) -> Action {
        match self {
            Action::Release => Action::Withhold,
            Action::Withhold => Action::Release,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Release => "release",
            Action::Withhold => "withhold",
        }
    }

    pub fn parse(raw: &str) -> Option<Action> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "release" | "released" | "ror" | "1" | "true" => Some(Action::Release),
            "withhold" | "withheld" | "bail" | "detain" | "detained" | "0" | "false" => {
                Some(Action::Withhold)
            }
            _ => None,
        }
    }

    /// 1.0 for release, 0.0 for withhold.
    pub fn indicator(self) -> f64 {
        match self {
            Action::Release => 1.0,
            Action::Withhold => 0.0,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Raw label values mapped to 0 and 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMapping {
    pub negative: String,
    pub positive: String,
}

impl LabelMapping {
    pub fn numeric() -> Self {
        LabelMapping {
            negative: "0".into(),
            positive: "1".into(),
        }
    }
}

/// A set of columns that enter feature selection together, e.g. the
/// indicators produced from one categorical column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureGroup {
    pub name: String,
    pub columns: Vec<usize>,
}

/// Named feature matrix with binary labels and optional action and group
/// columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    x: DMatrix<f64>,
    labels: Vec<u8>,
    actions: Option<Vec<Action>>,
    group_ids: Option<Vec<String>>,
    potential_outcomes: Option<Vec<(u8, u8)>>,
    label_name: String,
    label_mapping: LabelMapping,
    action_name: Option<String>,
    group_name: Option<String>,
    levels: BTreeMap<String, Vec<String>>,
    groups: Vec<FeatureGroup>,
}

impl Dataset {
    /// Builds a dataset from a row-major feature table.
    pub fn new(
        feature_names: Vec<String>,
        rows: &[Vec<f64>],
        labels: Vec<u8>,
    ) -> Result<Self, DataError> {
        let p = feature_names.len();
        let n = rows.len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(DataError::Ragged {
                    row: i,
                    found: r.len(),
                    expected: p,
                });
            }
        }
        let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        Self::from_matrix(feature_names, x, labels)
    }

    pub fn from_matrix(
        feature_names: Vec<String>,
        x: DMatrix<f64>,
        labels: Vec<u8>,
    ) -> Result<Self, DataError> {
        if x.nrows() == 0 {
            return Err(DataError::NoRows);
        }
        if x.ncols() == 0 {
            return Err(DataError::NoFeatures);
        }
        if feature_names.len() != x.ncols() {
            return Err(DataError::Shape(format!(
                "{} names for {} columns",
                feature_names.len(),
                x.ncols()
            )));
        }
        if labels.len() != x.nrows() {
            return Err(DataError::Shape(format!(
                "{} labels for {} rows",
                labels.len(),
                x.nrows()
            )));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(DataError::Invalid("labels must be 0 or 1".into()));
        }
        let mut seen = HashSet::new();
        for name in &feature_names {
            if !seen.insert(name.as_str()) {
                return Err(DataError::DuplicateColumn(name.clone()));
            }
        }
        for j in 0..x.ncols() {
            for i in 0..x.nrows() {
                if !x[(i, j)].is_finite() {
                    return Err(DataError::NonFinite {
                        column: feature_names[j].clone(),
                        row: i,
                    });
                }
            }
        }
        let groups = singleton_groups(&feature_names);
        Ok(Dataset {
            feature_names,
            x,
            labels,
            actions: None,
            group_ids: None,
            potential_outcomes: None,
            label_name: "label".into(),
            label_mapping: LabelMapping::numeric(),
            action_name: None,
            group_name: None,
            levels: BTreeMap::new(),
            groups,
        })
    }

    pub fn with_label_name(mut self, name: impl Into<String>, mapping: LabelMapping) -> Self {
        self.label_name = name.into();
        self.label_mapping = mapping;
        self
    }

    pub fn with_actions(
        mut self,
        name: impl Into<String>,
        actions: Vec<Action>,
    ) -> Result<Self, DataError> {
        if actions.len() != self.n() {
            return Err(DataError::Shape(
                "action count differs from row count".into(),
            ));
        }
        self.action_name = Some(name.into());
        self.actions = Some(actions);
        Ok(self)
    }

    pub fn with_group_ids(
        mut self,
        name: impl Into<String>,
        ids: Vec<String>,
    ) -> Result<Self, DataError> {
        if ids.len() != self.n() {
            return Err(DataError::Shape(
                "group id count differs from row count".into(),
            ));
        }
        self.group_name = Some(name.into());
        self.group_ids = Some(ids);
        Ok(self)
    }

    pub fn with_potential_outcomes(mut self, po: Vec<(u8, u8)>) -> Result<Self, DataError> {
        if po.len() != self.n() {
            return Err(DataError::Shape(
                "potential outcome count differs from row count".into(),
            ));
        }
        self.potential_outcomes = Some(po);
        Ok(self)
    }

    pub fn with_feature_groups(mut self, groups: Vec<FeatureGroup>) -> Result<Self, DataError> {
        let mut covered = vec![false; self.p()];
        for g in &groups {
            for &c in &g.columns {
                if c >= self.p() || covered[c] {
                    return Err(DataError::Invalid(format!(
                        "feature group `{}` references column {c} twice or out of range",
                        g.name
                    )));
                }
                covered[c] = true;
            }
        }
        if covered.iter().any(|c| !c) {
            return Err(DataError::Invalid(
                "feature groups must cover every column".into(),
            ));
        }
        self.groups = groups;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn actions(&self) -> Option<&[Action]> {
        self.actions.as_deref()
    }

    pub fn group_ids(&self) -> Option<&[String]> {
        self.group_ids.as_deref()
    }

    pub fn potential_outcomes(&self) -> Option<&[(u8, u8)]> {
        self.potential_outcomes.as_deref()
    }

    pub fn label_name(&self) -> &str {
        &self.label_name
    }

    pub fn label_mapping(&self) -> &LabelMapping {
        &self.label_mapping
    }

    pub fn action_name(&self) -> Option<&str> {
        self.action_name.as_deref()
    }

    pub fn group_name(&self) -> Option<&str> {
        self.group_name.as_deref()
    }

    /// Non-numeric columns detected at load time, with their level strings
    /// in code order. These columns still need `encode`.
    pub fn categorical_levels(&self) -> &BTreeMap<String, Vec<String>> {
        &self.levels
    }

    pub fn feature_groups(&self) -> &[FeatureGroup] {
        &self.groups
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    pub fn label_labels_f64(&self) -> Vec<f64> {
        self.labels.iter().map(|&l| l as f64).collect()
    }

    pub fn has_both_classes(&self) -> bool {
        let pos = self.labels.iter().filter(|&&l| l == 1).count();
        pos > 0 && pos < self.n()
    }

    /// Rows `idx` in the given order; all side columns follow.
    pub fn subset(&self, idx: &[usize]) -> Result<Self, DataError> {
        if idx.is_empty() {
            return Err(DataError::NoRows);
        }
        let x = self.x.select_rows(idx.iter());
        let pick = |v: &Vec<u8>| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Ok(Dataset {
            feature_names: self.feature_names.clone(),
            x,
            labels: pick(&self.labels),
            actions: self
                .actions
                .as_ref()
                .map(|a| idx.iter().map(|&i| a[i]).collect()),
            group_ids: self
                .group_ids
                .as_ref()
                .map(|g| idx.iter().map(|&i| g[i].clone()).collect()),
            potential_outcomes: self
                .potential_outcomes
                .as_ref()
                .map(|po| idx.iter().map(|&i| po[i]).collect()),
            label_name: self.label_name.clone(),
            label_mapping: self.label_mapping.clone(),
            action_name: self.action_name.clone(),
            group_name: self.group_name.clone(),
            levels: self.levels.clone(),
            groups: self.groups.clone(),
        })
    }

    /// Keeps only the listed columns (in the listed order). Feature groups
    /// are restricted to the kept columns.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self, DataError> {
        if cols.is_empty() {
            return Err(DataError::NoFeatures);
        }
        let mut remap = vec![usize::MAX; self.p()];
        for (new, &old) in cols.iter().enumerate() {
            if old >= self.p() {
                return Err(DataError::Invalid(format!("column {old} out of range")));
            }
            remap[old] = new;
        }
        let groups = self
            .groups
            .iter()
            .filter_map(|g| {
                let columns: Vec<usize> = g
                    .columns
                    .iter()
                    .filter(|&&c| remap[c] != usize::MAX)
                    .map(|&c| remap[c])
                    .collect();
                (!columns.is_empty()).then(|| FeatureGroup {
                    name: g.name.clone(),
                    columns,
                })
            })
            .collect();
        let names: Vec<String> = cols
            .iter()
            .map(|&c| self.feature_names[c].clone())
            .collect();
        let levels = self
            .levels
            .iter()
            .filter(|(k, _)| names.contains(k))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        Ok(Dataset {
            feature_names: names,
            x: self.x.select_columns(cols.iter()),
            labels: self.labels.clone(),
            actions: self.actions.clone(),
            group_ids: self.group_ids.clone(),
            potential_outcomes: self.potential_outcomes.clone(),
            label_name: self.label_name.clone(),
            label_mapping: self.label_mapping.clone(),
            action_name: self.action_name.clone(),
            group_name: self.group_name.clone(),
            levels,
            groups,
        })
    }

    /// Rows whose observed action equals `action`.
    pub fn restrict_to_action(&self, action: Action) -> Result<Self, DataError> {
        let actions = self.actions.as_ref().ok_or_else(|| {
            DataError::Invalid("dataset has no action column to restrict on".into())
        })?;
        let idx: Vec<usize> = (0..self.n()).filter(|&i| actions[i] == action).collect();
        self.subset(&idx)
    }

    /// Writes the canonical CSV form: features, group, action, label, and
    /// (when present) the oracle potential-outcome columns.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), DataError> {
        let mut w = csv::WriterBuilder::new().from_writer(out);
        let mut header: Vec<String> = self.feature_names.clone();
        if let Some(g) = &self.group_name {
            header.push(g.clone());
        }
        if let Some(a) = &self.action_name {
            header.push(a.clone());
        }
        header.push(self.label_name.clone());
        if self.potential_outcomes.is_some() {
            header.push(ORACLE_RELEASE.into());
            header.push(ORACLE_WITHHOLD.into());
        }
        w.write_record(&header)?;
        let mut rec = Vec::with_capacity(header.len());
        for i in 0..self.n() {
            rec.clear();
            for (j, name) in self.feature_names.iter().enumerate() {
                let v = self.x[(i, j)];
                match self.levels.get(name) {
                    Some(lv) => rec.push(lv[v as usize].clone()),
                    None => rec.push(format!("{v}")),
                }
            }
            if let Some(g) = &self.group_ids {
                rec.push(g[i].clone());
            }
            if let Some(a) = &self.actions {
                rec.push(a[i].as_str().to_string());
            }
            rec.push(if self.labels[i] == 1 {
                self.label_mapping.positive.clone()
            } else {
                self.label_mapping.negative.clone()
            });
            if let Some(po) = &self.potential_outcomes {
                rec.push(po[i].0.to_string());
                rec.push(po[i].1.to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| DataError::Io {
            path: "<writer>".into(),
            source: e,
        })?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<(), DataError> {
        let f = std::fs::File::create(path).map_err(|e| DataError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

fn singleton_groups(names: &[String]) -> Vec<FeatureGroup> {
    names
        .iter()
        .enumerate()
        .map(|(j, n)| FeatureGroup {
            name: n.clone(),
            columns: vec![j],
        })
        .collect()
}

/// Options for [`load_csv`].
#[derive(Debug, Clone, Default)]
pub struct CsvOptions {
    pub label_column: String,
    pub action_column: Option<String>,
    pub group_column: Option<String>,
    /// Raw label value that maps to 1; defaults to the lexicographically
    /// larger of the two values.
    pub positive_label: Option<String>,
    /// Parse `oracle_r_release` / `oracle_r_withhold` into potential
    /// outcomes when the file has them; one without the other is an error.
    pub read_oracle: bool,
    /// Columns to drop entirely.
    pub ignore: Vec<String>,
}

impl CsvOptions {
    pub fn new(label: impl Into<String>) -> Self {
        CsvOptions {
            label_column: label.into(),
            ..Default::default()
        }
    }
}

fn is_missing(s: &str) -> bool {
    matches!(s, "" | "NA" | "na" | "N/A" | "?" | "null" | "NULL")
}

pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    read_csv(std::io::BufReader::new(file), opts)
}

/// Same as [`load_csv`] on any reader.
pub fn read_csv<R: std::io::Read>(reader: R, opts: &CsvOptions) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.to_string()).collect();
    let mut seen = HashSet::new();
    for h in &header {
        if !seen.insert(h.as_str()) {
            return Err(DataError::DuplicateColumn(h.clone()));
        }
    }
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let label_idx = find(&opts.label_column)?;
    let action_idx = opts.action_column.as_deref().map(find).transpose()?;
    let group_idx = opts.group_column.as_deref().map(find).transpose()?;
    for ig in &opts.ignore {
        find(ig)?;
    }
    let has = |name: &str| header.iter().any(|h| h == name);
    let (po_r, po_w) = if opts.read_oracle && (has(ORACLE_RELEASE) || has(ORACLE_WITHHOLD)) {
        (Some(find(ORACLE_RELEASE)?), Some(find(ORACLE_WITHHOLD)?))
    } else {
        (None, None)
    };
    let feature_idx: Vec<usize> = (0..header.len())
        .filter(|&j| {
            j != label_idx
                && Some(j) != action_idx
                && Some(j) != group_idx
                && !header[j].starts_with(ORACLE_PREFIX)
                && !opts.ignore.contains(&header[j])
        })
        .collect();

    let mut raw: Vec<csv::StringRecord> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(DataError::Ragged {
                row: i,
                found: rec.len(),
                expected: header.len(),
            });
        }
        raw.push(rec);
    }
    if raw.is_empty() {
        return Err(DataError::NoRows);
    }
    if feature_idx.is_empty() {
        return Err(DataError::NoFeatures);
    }
    let n = raw.len();

    // labels
    let mut label_values = BTreeSet::new();
    for (i, rec) in raw.iter().enumerate() {
        let v = &rec[label_idx];
        if is_missing(v) {
            return Err(DataError::MissingValue {
                column: opts.label_column.clone(),
                row: i,
            });
        }
        label_values.insert(v.to_string());
    }
    if label_values.len() > 2 {
        return Err(DataError::LabelNotBinary {
            column: opts.label_column.clone(),
            count: label_values.len(),
        });
    }
    let mapping = label_mapping(&label_values, opts)?;
    let labels: Vec<u8> = raw
        .iter()
        .map(|r| u8::from(r[label_idx] == *mapping.positive))
        .collect();

    // features
    let mut x = DMatrix::zeros(n, feature_idx.len());
    let mut levels = BTreeMap::new();
    for (jj, &j) in feature_idx.iter().enumerate() {
        let col = &header[j];
        let mut numeric = Vec::with_capacity(n);
        let mut all_numeric = true;
        for (i, rec) in raw.iter().enumerate() {
            let v = &rec[j];
            if is_missing(v) {
                return Err(DataError::MissingValue {
                    column: col.clone(),
                    row: i,
                });
            }
            match v.parse::<f64>() {
                Ok(f) => numeric.push(f),
                Err(_) => {
                    all_numeric = false;
                    break;
                }
            }
        }
        if all_numeric {
            for (i, v) in numeric.into_iter().enumerate() {
                if !v.is_finite() {
                    return Err(DataError::NonFinite {
                        column: col.clone(),
                        row: i,
                    });
                }
                x[(i, jj)] = v;
            }
        } else {
            let lv: Vec<String> = raw
                .iter()
                .map(|r| r[j].to_string())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            for (i, rec) in raw.iter().enumerate() {
                x[(i, jj)] = lv.iter().position(|l| *l == rec[j]).unwrap() as f64;
            }
            levels.insert(col.clone(), lv);
        }
    }

    let names: Vec<String> = feature_idx.iter().map(|&j| header[j].clone()).collect();
    let mut ds =
        Dataset::from_matrix(names, x, labels)?.with_label_name(opts.label_column.clone(), mapping);
    ds.levels = levels;

    if let Some(a) = action_idx {
        let col = opts.action_column.clone().unwrap();
        let mut actions = Vec::with_capacity(n);
        for (i, rec) in raw.iter().enumerate() {
            let v = &rec[a];
            if is_missing(v) {
                return Err(DataError::MissingValue {
                    column: col.clone(),
                    row: i,
                });
            }
            actions.push(Action::parse(v).ok_or_else(|| DataError::BadAction {
                column: col.clone(),
                message: format!("unrecognized action `{v}` at row {i}"),
            })?);
        }
        ds = ds.with_actions(col, actions)?;
    }
    if let Some(g) = group_idx {
        let col = opts.group_column.clone().unwrap();
        let mut ids = Vec::with_capacity(n);
        for (i, rec) in raw.iter().enumerate() {
            if is_missing(&rec[g]) {
                return Err(DataError::MissingValue {
                    column: col.clone(),
                    row: i,
                });
            }
            ids.push(rec[g].to_string());
        }
        ds = ds.with_group_ids(col, ids)?;
    }
    if let (Some(r), Some(w)) = (po_r, po_w) {
        let parse01 = |s: &str, col: &str, row: usize| match s {
            "0" => Ok(0u8),
            "1" => Ok(1u8),
            _ => Err(DataError::Invalid(format!(
                "column `{col}` row {row}: potential outcome must be 0 or 1"
            ))),
        };
        let mut po = Vec::with_capacity(n);
        for (i, rec) in raw.iter().enumerate() {
            po.push((
                parse01(&rec[r], ORACLE_RELEASE, i)?,
                parse01(&rec[w], ORACLE_WITHHOLD, i)?,
            ));
        }
        ds = ds.with_potential_outcomes(po)?;
    }
    Ok(ds)
}

fn label_mapping(values: &BTreeSet<String>, opts: &CsvOptions) -> Result<LabelMapping, DataError> {
    let vals: Vec<&String> = values.iter().collect();
    if let Some(pos) = &opts.positive_label {
        if !values.contains(pos) {
            return Err(DataError::Invalid(format!(
                "positive label `{pos}` does not occur in column `{}`",
                opts.label_column
            )));
        }
        let neg = vals
            .iter()
            .find(|v| **v != pos)
            .map(|v| v.to_string())
            .unwrap_or_else(|| {
                if pos == "1" {
                    "0".into()
                } else {
                    format!("not_{pos}")
                }
            });
        return Ok(LabelMapping {
            negative: neg,
            positive: pos.clone(),
        });
    }
    match vals.as_slice() {
        [neg, pos] => Ok(LabelMapping {
            negative: (*neg).clone(),
            positive: (*pos).clone(),
        }),
        [only] if only.as_str() == "0" || only.as_str() == "1" => Ok(LabelMapping::numeric()),
        _ => Err(DataError::LabelNotBinary {
            column: opts.label_column.clone(),
            count: vals.len(),
        }),
    }
}

/// How one input column becomes model columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnEncoding {
    Passthrough,
    /// One indicator per non-reference category.
    OneHot {
        categories: Vec<String>,
        reference: String,
    },
    /// Left-closed, right-open bins `[cuts[i], cuts[i+1])`, optionally with
    /// catch-all bins below the first and above the last cut.
    Bin {
        cuts: Vec<f64>,
        #[serde(default)]
        below: bool,
        #[serde(default)]
        above: bool,
        reference: String,
        #[serde(default)]
        labels: Option<Vec<String>>,
    },
}

/// Per-column encoding directives; columns not listed pass through.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EncodingSpec {
    pub columns: BTreeMap<String, ColumnEncoding>,
}

impl EncodingSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, column: impl Into<String>, enc: ColumnEncoding) -> Self {
        self.columns.insert(column.into(), enc);
        self
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("encoding spec serializes")
    }

    pub fn validate(&self) -> Result<(), DataError> {
        for (col, enc) in &self.columns {
            let bad = |m: &str| DataError::BadEncoding {
                column: col.clone(),
                message: m.into(),
            };
            match enc {
                ColumnEncoding::Passthrough => {}
                ColumnEncoding::OneHot {
                    categories,
                    reference,
                } => {
                    let set: HashSet<&String> = categories.iter().collect();
                    if set.len() != categories.len() {
                        return Err(bad("categories are not unique"));
                    }
                    if !set.contains(reference) {
                        return Err(bad("reference is not a declared category"));
                    }
                }
                ColumnEncoding::Bin {
                    cuts, reference, ..
                } => {
                    if cuts.is_empty() {
                        return Err(bad("at least one cut point required"));
                    }
                    if cuts.iter().any(|c| !c.is_finite()) {
                        return Err(bad("cut points must be finite"));
                    }
                    if cuts.windows(2).any(|w| w[0] >= w[1]) {
                        return Err(bad("cut points must be strictly increasing"));
                    }
                    let labels = bin_labels(col, enc);
                    if let ColumnEncoding::Bin {
                        below,
                        above,
                        labels: Some(given),
                        ..
                    } = enc
                    {
                        let expected = cuts.len() - 1 + usize::from(*below) + usize::from(*above);
                        if given.len() != expected {
                            return Err(bad(&format!(
                                "{} bin labels given, {expected} bins defined",
                                given.len()
                            )));
                        }
                    }
                    if labels.len() < 2 {
                        return Err(bad("binning must produce at least two bins"));
                    }
                    let set: HashSet<&String> = labels.iter().collect();
                    if set.len() != labels.len() {
                        return Err(bad("bin labels are not unique"));
                    }
                    if !labels.contains(reference) {
                        return Err(bad(&format!(
                            "reference `{reference}` is not one of the bins {labels:?}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

fn fmt_cut(c: f64) -> String {
    if c.fract() == 0.0 && c.abs() < 1e15 {
        format!("{}", c as i64)
    } else {
        format!("{c}")
    }
}

/// Bin names in order: lower catch-all, interior bins, upper catch-all.
/// Integer cuts give inclusive integer ranges, e.g. `[18, 21)` is
/// `age_18_20` and `[51, inf)` is `age_51_plus`.
pub fn bin_labels(col: &str, enc: &ColumnEncoding) -> Vec<String> {
    let ColumnEncoding::Bin {
        cuts,
        below,
        above,
        labels,
        ..
    } = enc
    else {
        return Vec::new();
    };
    if let Some(l) = labels {
        return l.clone();
    }
    let mut out = Vec::new();
    if *below {
        out.push(format!("{col}_lt_{}", fmt_cut(cuts[0])));
    }
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if lo.fract() == 0.0 && hi.fract() == 0.0 {
            if hi - lo == 1.0 {
                out.push(format!("{col}_{}", fmt_cut(lo)));
            } else {
                out.push(format!("{col}_{}_{}", fmt_cut(lo), fmt_cut(hi - 1.0)));
            }
        } else {
            out.push(format!("{col}_{}_to_{}", fmt_cut(lo), fmt_cut(hi)));
        }
    }
    if *above {
        out.push(format!("{col}_{}_plus", fmt_cut(*cuts.last().unwrap())));
    }
    out
}

fn bin_index(v: f64, cuts: &[f64], below: bool, above: bool) -> Option<usize> {
    let offset = usize::from(below);
    if v < cuts[0] {
        return below.then_some(0);
    }
    let last = *cuts.last().unwrap();
    if v >= last {
        return above.then_some(offset + cuts.len() - 1);
    }
    // cuts[k] <= v < cuts[k+1]
    let k = cuts.partition_point(|&c| c <= v) - 1;
    Some(offset + k)
}

/// Replaces each one-hot or binned column with indicator columns for its
/// non-reference levels, in place. Row count is unchanged.
pub fn encode(ds: &Dataset, spec: &EncodingSpec) -> Result<Dataset, DataError> {
    spec.validate()?;
    for col in spec.columns.keys() {
        if ds.column_index(col).is_none() {
            return Err(DataError::MissingColumn(col.clone()));
        }
    }
    let n = ds.n();
    let mut names: Vec<String> = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut groups: Vec<FeatureGroup> = Vec::new();
    let mut levels = BTreeMap::new();

    // Existing multi-column groups are kept when none of their members is
    // re-encoded.
    let mut old_group_of = vec![0usize; ds.p()];
    for (g, grp) in ds.groups.iter().enumerate() {
        for &c in &grp.columns {
            old_group_of[c] = g;
        }
    }
    let mut new_group_for_old: BTreeMap<usize, usize> = BTreeMap::new();

    for (j, name) in ds.feature_names.iter().enumerate() {
        let column = ds.x.column(j);
        let enc = spec
            .columns
            .get(name)
            .unwrap_or(&ColumnEncoding::Passthrough);
        match enc {
            ColumnEncoding::Passthrough => {
                let idx = names.len();
                names.push(name.clone());
                cols.push(column.iter().copied().collect());
                if let Some(lv) = ds.levels.get(name) {
                    levels.insert(name.clone(), lv.clone());
                }
                let og = old_group_of[j];
                match new_group_for_old.get(&og) {
                    Some(&g) if ds.groups[og].columns.len() > 1 => groups[g].columns.push(idx),
                    _ => {
                        new_group_for_old.insert(og, groups.len());
                        let gname = if ds.groups[og].columns.len() > 1 {
                            ds.groups[og].name.clone()
                        } else {
                            name.clone()
                        };
                        groups.push(FeatureGroup {
                            name: gname,
                            columns: vec![idx],
                        });
                    }
                }
            }
            ColumnEncoding::OneHot {
                categories,
                reference,
            } => {
                let level_names = ds.levels.get(name);
                let mut code = Vec::with_capacity(n);
                for i in 0..n {
                    let v = column[i];
                    let pos = match level_names {
                        Some(lv) => {
                            let s = &lv[v as usize];
                            categories.iter().position(|c| c == s)
                        }
                        None => categories
                            .iter()
                            .position(|c| c.parse::<f64>().map(|f| f == v).unwrap_or(false)),
                    };
                    match pos {
                        Some(p) => code.push(p),
                        None => {
                            return Err(DataError::UnknownLevel {
                                column: name.clone(),
                                row: i,
                                value: match level_names {
                                    Some(lv) => lv[v as usize].clone(),
                                    None => format!("{v}"),
                                },
                            })
                        }
                    }
                }
                let mut members = Vec::new();
                for (ci, cat) in categories.iter().enumerate() {
                    if cat == reference {
                        continue;
                    }
                    members.push(names.len());
                    names.push(format!("{name}_{cat}"));
                    cols.push(code.iter().map(|&c| f64::from(u8::from(c == ci))).collect());
                }
                groups.push(FeatureGroup {
                    name: name.clone(),
                    columns: members,
                });
            }
            ColumnEncoding::Bin {
                cuts,
                below,
                above,
                reference,
                ..
            } => {
                if ds.levels.contains_key(name) {
                    return Err(DataError::BadEncoding {
                        column: name.clone(),
                        message: "cannot bin a non-numeric column".into(),
                    });
                }
                let labels = bin_labels(name, enc);
                let mut code = Vec::with_capacity(n);
                for i in 0..n {
                    let v = column[i];
                    match bin_index(v, cuts, *below, *above) {
                        Some(b) => code.push(b),
                        None => {
                            return Err(DataError::UnknownLevel {
                                column: name.clone(),
                                row: i,
                                value: format!("{v}"),
                            })
                        }
                    }
                }
                let mut members = Vec::new();
                for (bi, label) in labels.iter().enumerate() {
                    if label == reference {
                        continue;
                    }
                    members.push(names.len());
                    names.push(label.clone());
                    cols.push(code.iter().map(|&c| f64::from(u8::from(c == bi))).collect());
                }
                groups.push(FeatureGroup {
                    name: name.clone(),
                    columns: members,
                });
            }
        }
    }
    let x = DMatrix::from_fn(n, names.len(), |i, j| cols[j][i]);
    let mut out = Dataset::from_matrix(names, x, ds.labels.clone())?;
    out.actions = ds.actions.clone();
    out.group_ids = ds.group_ids.clone();
    out.potential_outcomes = ds.potential_outcomes.clone();
    out.label_name = ds.label_name.clone();
    out.label_mapping = ds.label_mapping.clone();
    out.action_name = ds.action_name.clone();
    out.group_name = ds.group_name.clone();
    out.levels = levels;
    out.groups = groups;
    Ok(out)
}

/// Assignment of rows to cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    fold_count: usize,
    assignment: Vec<usize>,
}

impl FoldAssignment {
    pub fn new(fold_count: usize, assignment: Vec<usize>) -> Result<Self, DataError> {
        if fold_count < 2 {
            return Err(DataError::BadFolds("fold count must be at least 2".into()));
        }
        let mut sizes = vec![0usize; fold_count];
        for &a in &assignment {
            if a >= fold_count {
                return Err(DataError::BadFolds(format!("fold index {a} out of range")));
            }
            sizes[a] += 1;
        }
        if sizes.contains(&0) {
            return Err(DataError::BadFolds("every fold must be non-empty".into()));
        }
        Ok(FoldAssignment {
            fold_count,
            assignment,
        })
    }

    pub fn fold_count(&self) -> usize {
        self.fold_count
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.fold_count];
        for &a in &self.assignment {
            s[a] += 1;
        }
        s
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != fold)
            .collect()
    }
}

fn check_fold_request(n: usize, k: usize) -> Result<(), DataError> {
    if k < 2 {
        return Err(DataError::BadFolds(format!("k = {k} < 2")));
    }
    if k > n {
        return Err(DataError::BadFolds(format!("k = {k} exceeds n = {n}")));
    }
    Ok(())
}

/// Balanced random folds, deterministic for fixed `(n, k, seed)`.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<FoldAssignment, DataError> {
    check_fold_request(n, k)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignment = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        assignment[i] = pos % k;
    }
    FoldAssignment::new(k, assignment)
}

/// Folds balanced overall and within each label class.
pub fn stratified_kfold(labels: &[u8], k: usize, seed: u64) -> Result<FoldAssignment, DataError> {
    let n = labels.len();
    check_fold_request(n, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; n];
    let mut counter = 0usize;
    for class in [0u8, 1u8] {
        let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        for i in members {
            assignment[i] = counter % k;
            counter += 1;
        }
    }
    FoldAssignment::new(k, assignment)
}

/// Stratified by default; `stratify = false` falls back to [`kfold`].
pub fn folds_for(
    labels: &[u8],
    k: usize,
    seed: u64,
    stratify: bool,
) -> Result<FoldAssignment, DataError> {
    if stratify {
        stratified_kfold(labels, k, seed)
    } else {
        kfold(labels.len(), k, seed)
    }
}
