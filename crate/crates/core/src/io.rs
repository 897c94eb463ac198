//! Dataset files, subgroup filters, run configuration and manifests.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::compat::CompatMode;
use crate::error::{Error, Result};
use crate::frontier::FrontierConfig;
use crate::model::{validate_dataset, ColumnMapping, Dataset, NuisanceEstimates, OutcomePolicy, Schema, VarianceMethod};
use crate::nuisance::{DEFAULT_CLIP_EPSILON, DEFAULT_L2_GRID};
use crate::simulate::{Internals, Scenario, SimConfig};

/// Environment variable consulted when no seed is given.
pub const SEED_ENV: &str = "FUSION_BOUNDS_SEED";

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

/// Parses CSV text with a header row into numeric rows.
pub fn parse_csv<R: std::io::Read>(reader: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let values = rec
            .iter()
            .enumerate()
            .map(|(j, field)| {
                field.parse::<f64>().map_err(|_| Error::ParseValue {
                    row,
                    column: header.get(j).cloned().unwrap_or_else(|| format!("column {j}")),
                    value: field.to_string(),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(values);
    }
    Ok((header, rows))
}

pub fn read_dataset_from<R: std::io::Read>(reader: R, mapping: &ColumnMapping, policy: OutcomePolicy) -> Result<Dataset> {
    let (header, rows) = parse_csv(reader)?;
    let schema = Schema::from_header(&header, mapping)?.with_policy(policy);
    validate_dataset(&rows, &schema)
}

/// Loads and validates a dataset CSV.
pub fn read_dataset(path: &Path, mapping: &ColumnMapping, policy: OutcomePolicy) -> Result<Dataset> {
    read_dataset_from(open(path)?, mapping, policy)
}

/// Serializes a dataset as `covariates..., s, t, y`. Floats use the
/// shortest representation that parses back to the same bits.
pub fn dataset_to_csv(dataset: &Dataset) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = dataset.covariate_names().iter().map(String::as_str).collect();
    header.extend(["s", "t", "y"]);
    w.write_record(&header)?;
    for u in dataset.units() {
        let mut rec: Vec<String> = u.x.iter().map(f64::to_string).collect();
        rec.push(u.s.to_string());
        rec.push(u.t.to_string());
        rec.push(u.y.to_string());
        w.write_record(&rec)?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    write_file(path, &dataset_to_csv(dataset)?)
}

/// Latent `u` and `c` columns of a simulated dataset, one row per unit.
pub fn internals_to_csv(internals: &Internals) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["u", "c"])?;
    for (u, c) in internals.u.iter().zip(&internals.c) {
        w.write_record([u.to_string(), c.to_string()])?;
    }
    finish(w)
}

pub fn read_internals(path: &Path) -> Result<Internals> {
    let (header, rows) = parse_csv(open(path)?)?;
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    };
    let (iu, ic) = (col("u")?, col("c")?);
    let mut out = Internals { u: Vec::new(), c: Vec::new() };
    for (row, r) in rows.iter().enumerate() {
        if r.len() != header.len() {
            return Err(Error::DimensionMismatch { row, expected: header.len(), found: r.len() });
        }
        out.u.push(r[iu]);
        out.c.push(r[ic]);
    }
    Ok(out)
}

pub fn nuisances_to_csv(nuisances: &NuisanceEstimates) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["unit", "fold", "g1", "e1_s0", "e1_s1", "mu_s0_t0", "mu_s0_t1", "mu_s1_t0", "mu_s1_t1"])?;
    for i in 0..nuisances.len() {
        let r = nuisances.row(i);
        let mut rec = vec![i.to_string(), nuisances.fold_id[i].to_string()];
        rec.extend(
            [r.g1, r.e1_s0, r.e1_s1, r.mu[0][0], r.mu[0][1], r.mu[1][0], r.mu[1][1]]
                .iter()
                .map(f64::to_string),
        );
        w.write_record(&rec)?;
    }
    finish(w)
}

/// Writes `contents`, creating parent directories.
pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, contents)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompareOp {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

impl CompareOp {
    pub fn apply(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CompareOp::Lt => lhs < rhs,
            CompareOp::Le => lhs <= rhs,
            CompareOp::Gt => lhs > rhs,
            CompareOp::Ge => lhs >= rhs,
            CompareOp::Eq => lhs == rhs,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
            CompareOp::Eq => "=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub column: String,
    pub op: CompareOp,
    pub value: f64,
}

/// Conjunction of `column op constant` clauses, e.g. `x1 > 1 && s = 0`.
/// Columns are covariate names or `s`, `t`, `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupFilter {
    pub clauses: Vec<Comparison>,
}

const OPERATORS: [(&str, CompareOp); 8] = [
    ("<=", CompareOp::Le),
    (">=", CompareOp::Ge),
    ("==", CompareOp::Eq),
    ("≤", CompareOp::Le),
    ("≥", CompareOp::Ge),
    ("<", CompareOp::Lt),
    (">", CompareOp::Gt),
    ("=", CompareOp::Eq),
];

fn parse_clause(text: &str) -> Result<Comparison> {
    let start = text
        .find(['<', '>', '=', '≤', '≥'])
        .ok_or_else(|| Error::FilterSyntax(format!("no comparison operator in `{text}`")))?;
    let rest = &text[start..];
    let (sym, op) = OPERATORS
        .iter()
        .find(|(sym, _)| rest.starts_with(sym))
        .expect("operator start always matches a symbol");
    let column = text[..start].trim();
    let value_text = rest[sym.len()..].trim();
    if column.is_empty() {
        return Err(Error::FilterSyntax(format!("missing column in `{text}`")));
    }
    let value = value_text
        .parse::<f64>()
        .map_err(|_| Error::FilterSyntax(format!("`{value_text}` is not a number")))?;
    Ok(Comparison { column: column.to_string(), op: *op, value })
}

impl SubgroupFilter {
    pub fn parse(expr: &str) -> Result<SubgroupFilter> {
        let normalized = expr.replace("&&", "&");
        let mut clauses = Vec::new();
        for part in normalized.split('&') {
            for clause in split_word_and(part) {
                let clause = clause.trim();
                if clause.is_empty() {
                    return Err(Error::FilterSyntax(format!("empty clause in `{expr}`")));
                }
                clauses.push(parse_clause(clause)?);
            }
        }
        Ok(SubgroupFilter { clauses })
    }

    fn lookup(dataset: &Dataset, column: &str) -> Result<Column> {
        match column {
            "s" => Ok(Column::S),
            "t" => Ok(Column::T),
            "y" => Ok(Column::Y),
            _ => dataset
                .covariate_names()
                .iter()
                .position(|n| n == column)
                .map(Column::X)
                .ok_or_else(|| Error::UnknownColumn(column.to_string())),
        }
    }

    /// Indices of the units satisfying every clause, in dataset order.
    pub fn indices(&self, dataset: &Dataset) -> Result<Vec<usize>> {
        let cols = self
            .clauses
            .iter()
            .map(|c| Self::lookup(dataset, &c.column))
            .collect::<Result<Vec<_>>>()?;
        Ok(dataset
            .units()
            .iter()
            .enumerate()
            .filter(|(_, u)| {
                self.clauses.iter().zip(&cols).all(|(c, col)| {
                    let v = match *col {
                        Column::S => f64::from(u.s),
                        Column::T => f64::from(u.t),
                        Column::Y => u.y,
                        Column::X(j) => u.x[j],
                    };
                    c.op.apply(v, c.value)
                })
            })
            .map(|(i, _)| i)
            .collect())
    }
}

fn split_word_and(text: &str) -> Vec<String> {
    let mut out = vec![String::new()];
    for word in text.split_whitespace() {
        if word.eq_ignore_ascii_case("and") {
            out.push(String::new());
        } else {
            let cur = out.last_mut().expect("nonempty");
            if !cur.is_empty() {
                cur.push(' ');
            }
            cur.push_str(word);
        }
    }
    out
}

enum Column {
    S,
    T,
    Y,
    X(usize),
}

impl fmt::Display for SubgroupFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.clauses.iter().enumerate() {
            if i > 0 {
                f.write_str(" && ")?;
            }
            write!(f, "{} {} {}", c.column, c.op.symbol(), c.value)?;
        }
        Ok(())
    }
}

/// Flat run configuration shared by every subcommand. File values are
/// overridden by command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub scenario: Option<String>,
    pub n: usize,
    /// Overrides of the scenario's confounding strength and effect size.
    pub beta: Option<f64>,
    pub tau: Option<f64>,
    pub seed: Option<u64>,
    pub s_column: String,
    pub t_column: String,
    pub y_column: String,
    pub covariates: Option<Vec<String>>,
    /// Margin of the outcome shift; absent means outcomes must be positive.
    pub shift_outcomes: Option<f64>,
    pub subgroup: Option<String>,
    pub rho: f64,
    pub gamma: f64,
    pub rho_max: f64,
    pub gamma_max: f64,
    pub grid_n: usize,
    pub confidence: f64,
    pub alpha: f64,
    pub k: usize,
    pub r_compat: usize,
    pub variance_method: VarianceMethod,
    pub bootstrap_b: usize,
    pub compat_mode: CompatMode,
    pub clip_epsilon: f64,
    pub l2_grid: Vec<f64>,
    pub known_exp_propensity: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let f = FrontierConfig::default();
        RunConfig {
            input: None,
            output: None,
            scenario: None,
            n: 2500,
            beta: None,
            tau: None,
            seed: None,
            s_column: "s".into(),
            t_column: "t".into(),
            y_column: "y".into(),
            covariates: None,
            shift_outcomes: None,
            subgroup: None,
            rho: 0.1,
            gamma: 0.1,
            rho_max: f.rho_max,
            gamma_max: f.gamma_max,
            grid_n: f.grid_n,
            confidence: f.confidence,
            alpha: f.alpha,
            k: f.k,
            r_compat: f.r_compat,
            variance_method: f.variance_method,
            bootstrap_b: f.bootstrap_b,
            compat_mode: f.compat_mode,
            clip_epsilon: DEFAULT_CLIP_EPSILON,
            l2_grid: DEFAULT_L2_GRID.to_vec(),
            known_exp_propensity: None,
        }
    }
}

impl RunConfig {
    /// Reads a config file. A run manifest is accepted too, in which case
    /// its `config` entry is used.
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<RunConfig> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let value = match value.get("config") {
            Some(inner) if value.get("tool").is_some() => inner.clone(),
            _ => value,
        };
        Ok(serde_json::from_value(value)?)
    }

    /// The explicit seed, else `FUSION_BOUNDS_SEED`, else 0.
    pub fn resolve_seed(&mut self) -> Result<u64> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        let seed = match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse::<u64>()
                .map_err(|_| Error::InvalidArgument(format!("{SEED_ENV}=`{v}` is not an unsigned integer")))?,
            Err(_) => 0,
        };
        self.seed = Some(seed);
        Ok(seed)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn column_mapping(&self) -> ColumnMapping {
        ColumnMapping {
            s: self.s_column.clone(),
            t: self.t_column.clone(),
            y: self.y_column.clone(),
            covariates: self.covariates.clone(),
        }
    }

    pub fn outcome_policy(&self) -> OutcomePolicy {
        match self.shift_outcomes {
            Some(margin) => OutcomePolicy::Shift { margin },
            None => OutcomePolicy::RequirePositive,
        }
    }

    pub fn scenario(&self) -> Result<Scenario> {
        Scenario::parse(self.scenario.as_deref().unwrap_or("base"))
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let mut cfg = self.scenario()?.config(self.n, self.seed());
        if let Some(b) = self.beta {
            cfg.beta = b;
        }
        if let Some(t) = self.tau {
            cfg.tau = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn frontier_config(&self) -> FrontierConfig {
        FrontierConfig {
            rho_max: self.rho_max,
            gamma_max: self.gamma_max,
            grid_n: self.grid_n,
            confidence: self.confidence,
            alpha: self.alpha,
            k: self.k,
            r_compat: self.r_compat,
            variance_method: self.variance_method,
            bootstrap_b: self.bootstrap_b,
            seed: self.seed(),
            compat_mode: self.compat_mode,
            clip_epsilon: self.clip_epsilon,
            l2_grid: self.l2_grid.clone(),
            known_exp_propensity: self.known_exp_propensity,
        }
    }

    pub fn subgroup_filter(&self) -> Result<Option<SubgroupFilter>> {
        self.subgroup.as_deref().map(SubgroupFilter::parse).transpose()
    }

    /// Checks that exactly one data source is configured.
    pub fn check_data_source(&self) -> Result<()> {
        match (&self.input, &self.scenario) {
            (Some(_), Some(_)) => Err(Error::InvalidArgument(
                "give either an input CSV or a scenario, not both".into(),
            )),
            (None, None) => Err(Error::InvalidArgument(
                "no data source: give --input or --scenario".into(),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Record of one run: enough to replay it and reproduce every data output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub dataset_fingerprint: Option<String>,
    pub nuisance_fingerprint: Option<String>,
    pub seeds: BTreeMap<String, u64>,
    pub threads: Option<usize>,
    pub started_unix_seconds: f64,
    pub wall_clock_seconds: f64,
    pub stage_timings: Vec<StageTiming>,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig) -> RunManifest {
        let started = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0);
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: config.clone(),
            dataset_fingerprint: None,
            nuisance_fingerprint: None,
            seeds: BTreeMap::new(),
            threads: None,
            started_unix_seconds: started,
            wall_clock_seconds: 0.0,
            stage_timings: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Accumulates per-stage wall-clock timings.
pub struct StageClock {
    start: std::time::Instant,
    last: std::time::Instant,
    pub stages: Vec<StageTiming>,
}

impl Default for StageClock {
    fn default() -> Self {
        let now = std::time::Instant::now();
        StageClock { start: now, last: now, stages: Vec::new() }
    }
}

impl StageClock {
    pub fn lap(&mut self, stage: &str) {
        let now = std::time::Instant::now();
        self.stages.push(StageTiming {
            stage: stage.to_string(),
            seconds: (now - self.last).as_secs_f64(),
        });
        self.last = now;
    }

    pub fn total(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Unit;

    fn small() -> Dataset {
        let units = vec![
            Unit { x: vec![0.5, -1.0], s: 0, t: 0, y: 1.0 },
            Unit { x: vec![1.5, 2.0], s: 0, t: 1, y: 2.5 },
            Unit { x: vec![2.5, 0.1], s: 1, t: 0, y: 0.1 + 0.2 },
            Unit { x: vec![-0.5, 1e-300], s: 1, t: 1, y: 1.0 / 3.0 },
        ];
        Dataset::from_units(units, vec!["age".into(), "dose".into()]).unwrap()
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let ds = small();
        let text = dataset_to_csv(&ds).unwrap();
        let back = read_dataset_from(text.as_bytes(), &ColumnMapping::default(), OutcomePolicy::RequirePositive).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.fingerprint(), ds.fingerprint());
    }

    #[test]
    fn custom_column_names() {
        let text = "treated,z,outcome,site\n0,1.0,3,0\n1,2.0,4,0\n0,3.0,5,1\n1,4.0,6,1\n";
        let mapping = ColumnMapping {
            s: "site".into(),
            t: "treated".into(),
            y: "outcome".into(),
            covariates: None,
        };
        let ds = read_dataset_from(text.as_bytes(), &mapping, OutcomePolicy::RequirePositive).unwrap();
        assert_eq!(ds.covariate_names(), ["z".to_string()]);
        assert_eq!(ds.units()[3].y, 6.0);
        assert_eq!(ds.units()[2].s, 1);
    }

    #[test]
    fn unparseable_value_is_reported() {
        let text = "x,s,t,y\n1,0,0,abc\n";
        let err = read_dataset_from(text.as_bytes(), &ColumnMapping::default(), OutcomePolicy::RequirePositive)
            .unwrap_err();
        assert!(matches!(err, Error::ParseValue { row: 0, .. }), "{err:?}");
    }

    #[test]
    fn missing_file() {
        let err = read_dataset(Path::new("/nonexistent/d.csv"), &ColumnMapping::default(), OutcomePolicy::RequirePositive)
            .unwrap_err();
        assert_eq!(err.code(), "FileNotFound");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn filter_operators() {
        for (expr, op) in [
            ("x1<1", CompareOp::Lt),
            ("x1 <= 1", CompareOp::Le),
            ("x1 ≤ 1", CompareOp::Le),
            ("x1>1", CompareOp::Gt),
            ("x1 >= 1", CompareOp::Ge),
            ("x1 ≥ 1", CompareOp::Ge),
            ("x1 = 1", CompareOp::Eq),
            ("x1 == 1", CompareOp::Eq),
        ] {
            let f = SubgroupFilter::parse(expr).unwrap();
            assert_eq!(f.clauses, vec![Comparison { column: "x1".into(), op, value: 1.0 }], "{expr}");
        }
    }

    #[test]
    fn filter_conjunctions() {
        for expr in ["age > 1 && s = 0", "age > 1 & s = 0", "age > 1 and s = 0", "age>1 AND s=0"] {
            let f = SubgroupFilter::parse(expr).unwrap();
            assert_eq!(f.clauses.len(), 2, "{expr}");
            assert_eq!(f.to_string(), "age > 1 && s = 0");
        }
        let ds = small();
        let f = SubgroupFilter::parse("age > 1 && s = 0").unwrap();
        assert_eq!(f.indices(&ds).unwrap(), vec![1]);
        let f = SubgroupFilter::parse("y >= 0.3 and dose < 1").unwrap();
        assert_eq!(f.indices(&ds).unwrap(), vec![0, 2, 3]);
        let f = SubgroupFilter::parse("age < -3").unwrap();
        assert!(f.indices(&ds).unwrap().is_empty());
    }

    #[test]
    fn filter_errors() {
        assert!(matches!(SubgroupFilter::parse("x1 1"), Err(Error::FilterSyntax(_))));
        assert!(matches!(SubgroupFilter::parse("> 1"), Err(Error::FilterSyntax(_))));
        assert!(matches!(SubgroupFilter::parse("x1 > one"), Err(Error::FilterSyntax(_))));
        assert!(matches!(SubgroupFilter::parse("x1 > 1 &&"), Err(Error::FilterSyntax(_))));
        let f = SubgroupFilter::parse("height > 1").unwrap();
        assert!(matches!(f.indices(&small()), Err(Error::UnknownColumn(c)) if c == "height"));
    }

    #[test]
    fn config_file_and_manifest_forms() {
        let cfg = RunConfig::from_json(r#"{"grid_n": 7, "seed": 3, "compat_mode": "paper-literal"}"#).unwrap();
        assert_eq!(cfg.grid_n, 7);
        assert_eq!(cfg.seed, Some(3));
        assert_eq!(cfg.compat_mode, CompatMode::PaperLiteral);
        assert_eq!(cfg.alpha, 10.0);
        let manifest = RunManifest::new("frontier", &cfg);
        let replay = RunConfig::from_json(&manifest.to_json().unwrap()).unwrap();
        assert_eq!(replay, cfg);
    }

    #[test]
    fn frontier_config_mirrors_run_config() {
        let cfg = RunConfig { seed: Some(9), grid_n: 4, ..RunConfig::default() };
        let f = cfg.frontier_config();
        assert_eq!(f.seed, 9);
        assert_eq!(f.grid_n, 4);
        assert_eq!(f.bootstrap_b, 1000);
    }

    #[test]
    fn data_source_must_be_unique() {
        let mut cfg = RunConfig::default();
        assert!(cfg.check_data_source().is_err());
        cfg.scenario = Some("base".into());
        assert!(cfg.check_data_source().is_ok());
        cfg.input = Some("d.csv".into());
        assert!(cfg.check_data_source().is_err());
    }

    #[test]
    fn internals_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("i.csv");
        let internals = Internals { u: vec![0.1, 1.0 / 3.0], c: vec![-2.0, 1e-17] };
        write_file(&p, &internals_to_csv(&internals).unwrap()).unwrap();
        assert_eq!(read_internals(&p).unwrap(), internals);
    }
}
