//! File formats.
//!
//! Tables are tab-separated with a header row. Floats are written with 17
//! significant digits so that every value reads back bit-exactly. All writes go to
//! a temporary file in the destination directory which is then renamed into place.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimators::CorrelationEstimate;
use crate::experiments::{
    AggregateRow, EstimatorKind, ExperimentConfig, ExperimentOutput, Layout, ReplicateFailure, ReplicateRow, Scale,
    Scenario, Summary,
};
use crate::genotype::GenotypeMatrix;
use crate::gwas::{two_sided_pvalue, SummaryStats};
use crate::moments::MomentReport;

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), line, message: message.into() }
}

/// Writes `bytes` to `path` through a temporary sibling file and a rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path.file_name().ok_or_else(|| Error::param(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

/// A parsed delimited table.
#[derive(Clone, Debug)]
pub struct Table {
    pub path: PathBuf,
    pub header: Vec<String>,
    /// Fields of each data row with its 1-based line number.
    pub rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    /// Reads a table. `delimiter` of `None` splits on runs of whitespace. Blank lines
    /// and lines starting with `#` are skipped.
    pub fn read(path: &Path, delimiter: Option<char>, header: bool) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(path, &text, delimiter, header)
    }

    pub fn parse(path: &Path, text: &str, delimiter: Option<char>, header: bool) -> Result<Self> {
        let split = |line: &str| -> Vec<String> {
            match delimiter {
                Some(d) => line.split(d).map(|s| s.trim().to_string()).collect(),
                None => line.split_whitespace().map(str::to_string).collect(),
            }
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
            .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
        let head = if header {
            let (_, l) = lines.next().ok_or_else(|| parse_error(path, 1, "missing header row"))?;
            split(l)
        } else {
            Vec::new()
        };
        let mut rows = Vec::new();
        for (no, l) in lines {
            let fields = split(l);
            if header && fields.len() != head.len() {
                return Err(parse_error(path, no, format!("expected {} fields, found {}", head.len(), fields.len())));
            }
            rows.push((no, fields));
        }
        Ok(Table { path: path.to_path_buf(), header: head, rows })
    }

    /// Index of a column given by name or, for headerless tables, by 1-based number.
    pub fn column(&self, key: &str) -> Result<usize> {
        if let Some(i) = self.header.iter().position(|h| h == key) {
            return Ok(i);
        }
        if let Ok(k) = key.parse::<usize>() {
            if k >= 1 {
                return Ok(k - 1);
            }
        }
        Err(parse_error(&self.path, 1, format!("column '{key}' not found")))
    }

    fn field<'a>(&self, row: &'a (usize, Vec<String>), col: usize) -> Result<&'a str> {
        row.1
            .get(col)
            .map(String::as_str)
            .ok_or_else(|| parse_error(&self.path, row.0, format!("missing field {}", col + 1)))
    }

    /// Parses field `col` of `row`.
    pub fn get<T: FromStr>(&self, row: &(usize, Vec<String>), col: usize) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let s = self.field(row, col)?;
        s.parse::<T>().map_err(|e| parse_error(&self.path, row.0, format!("field {} ('{s}'): {e}", col + 1)))
    }

    fn require(&self, names: &[&str]) -> Result<Vec<usize>> {
        names.iter().map(|n| self.column(n)).collect()
    }
}

fn write_table(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut out = header.join("\t");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join("\t"));
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

pub const SUMMARY_HEADER: [&str; 6] = ["snp_id", "effect", "se", "tstat", "pvalue", "n"];

pub fn write_summary_stats(path: &Path, s: &SummaryStats<f64>) -> Result<()> {
    s.validate()?;
    write_table(
        path,
        &SUMMARY_HEADER,
        (0..s.len()).map(|j| {
            vec![
                s.snp_id[j].clone(),
                fmt_f64(s.effect[j]),
                fmt_f64(s.se[j]),
                fmt_f64(s.tstat[j]),
                fmt_f64(s.pvalue[j]),
                s.n[j].to_string(),
            ]
        }),
    )
}

pub fn read_summary_stats(path: &Path) -> Result<SummaryStats<f64>> {
    let t = Table::read(path, Some('\t'), true)?;
    let c = t.require(&SUMMARY_HEADER)?;
    let mut s = SummaryStats { snp_id: vec![], effect: vec![], se: vec![], tstat: vec![], pvalue: vec![], n: vec![] };
    for row in &t.rows {
        s.snp_id.push(t.field(row, c[0])?.to_string());
        s.effect.push(t.get(row, c[1])?);
        s.se.push(t.get(row, c[2])?);
        s.tstat.push(t.get(row, c[3])?);
        s.pvalue.push(t.get(row, c[4])?);
        s.n.push(t.get(row, c[5])?);
    }
    s.validate()?;
    Ok(s)
}

/// Where an external summary file keeps a column: by header name, or by 1-based
/// position in files without a header.
pub type ColumnRef = String;

/// Sample size of an external summary file.
#[derive(Clone, Debug, PartialEq)]
pub enum SampleSize {
    Constant(usize),
    Column(ColumnRef),
}

/// Column layout of a third-party summary statistics file.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryFileSchema {
    pub snp_id: ColumnRef,
    /// Effect size or log odds ratio.
    pub effect: ColumnRef,
    pub se: ColumnRef,
    /// P-value column. When absent, p-values are recomputed from `effect / se`.
    pub pvalue: Option<ColumnRef>,
    pub n: SampleSize,
    /// Optional column whose value `1`, `true` or `-1` negates the effect of its row.
    pub sign_flip: Option<ColumnRef>,
    /// `None` splits on whitespace.
    pub delimiter: Option<char>,
    pub header: bool,
}

impl Default for SummaryFileSchema {
    fn default() -> Self {
        SummaryFileSchema {
            snp_id: "snp_id".into(),
            effect: "effect".into(),
            se: "se".into(),
            pvalue: Some("pvalue".into()),
            n: SampleSize::Column("n".into()),
            sign_flip: None,
            delimiter: None,
            header: true,
        }
    }
}

fn flip_value(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "1" | "-1" | "true" | "yes" => Some(true),
        "0" | "false" | "no" => Some(false),
        _ => None,
    }
}

/// Reads a third-party summary file. Rows are assumed to be harmonized to the
/// genotype alleles apart from the optional sign column.
pub fn read_external_summary(path: &Path, schema: &SummaryFileSchema) -> Result<SummaryStats<f64>> {
    let t = Table::read(path, schema.delimiter, schema.header)?;
    let id = t.column(&schema.snp_id)?;
    let eff = t.column(&schema.effect)?;
    let se = t.column(&schema.se)?;
    let pv = schema.pvalue.as_deref().map(|c| t.column(c)).transpose()?;
    let n_col = match &schema.n {
        SampleSize::Column(c) => Some(t.column(c)?),
        SampleSize::Constant(_) => None,
    };
    let flip = schema.sign_flip.as_deref().map(|c| t.column(c)).transpose()?;
    let mut s = SummaryStats { snp_id: vec![], effect: vec![], se: vec![], tstat: vec![], pvalue: vec![], n: vec![] };
    for row in &t.rows {
        let mut b: f64 = t.get(row, eff)?;
        let e: f64 = t.get(row, se)?;
        if !(e > 0.0 && e.is_finite()) || !b.is_finite() {
            return Err(parse_error(path, row.0, "effect must be finite and se positive"));
        }
        if let Some(fc) = flip {
            let v = t.field(row, fc)?;
            if flip_value(v).ok_or_else(|| parse_error(path, row.0, format!("bad sign flag '{v}'")))? {
                b = -b;
            }
        }
        let tstat = b / e;
        let p = match pv {
            Some(c) => t.get(row, c)?,
            None => two_sided_pvalue(tstat),
        };
        let n = match (&schema.n, n_col) {
            (SampleSize::Constant(n), _) => *n,
            (_, Some(c)) => {
                let v: f64 = t.get(row, c)?;
                if !(v >= 1.0 && v.fract() == 0.0) {
                    return Err(parse_error(path, row.0, format!("sample size {v} is not a positive integer")));
                }
                v as usize
            }
            _ => unreachable!("column resolved above"),
        };
        s.snp_id.push(t.field(row, id)?.to_string());
        s.effect.push(b);
        s.se.push(e);
        s.tstat.push(tstat);
        s.pvalue.push(p);
        s.n.push(n);
    }
    s.validate().map_err(|e| parse_error(path, 0, e.to_string()))?;
    Ok(s)
}

/// Per-sample values such as scores or phenotypes.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleValues {
    pub sample_id: Vec<String>,
    pub values: Vec<f64>,
}

impl SampleValues {
    /// Values with positional identifiers `s0`, `s1`, ...
    pub fn positional(values: Vec<f64>) -> Self {
        SampleValues { sample_id: (0..values.len()).map(|i| format!("s{i}")).collect(), values }
    }
}

/// Writes a two-column `sample_id <value_name>` table.
pub fn write_sample_values(path: &Path, value_name: &str, v: &SampleValues) -> Result<()> {
    if v.sample_id.len() != v.values.len() {
        return Err(Error::dim("sample ids and values differ in length"));
    }
    write_table(
        path,
        &["sample_id", value_name],
        v.sample_id.iter().zip(&v.values).map(|(id, x)| vec![id.clone(), fmt_f64(*x)]),
    )
}

/// Reads a two-column table written by [`write_sample_values`], whatever the name of
/// the value column.
pub fn read_sample_values(path: &Path) -> Result<SampleValues> {
    let t = Table::read(path, Some('\t'), true)?;
    if t.header.len() != 2 || t.header[0] != "sample_id" {
        return Err(parse_error(path, 1, "expected header 'sample_id <value>'"));
    }
    let mut out = SampleValues { sample_id: vec![], values: vec![] };
    for row in &t.rows {
        out.sample_id.push(row.1[0].clone());
        out.values.push(t.get(row, 1)?);
    }
    Ok(out)
}

pub const ESTIMATE_HEADER: [&str; 6] = ["case", "raw", "factor", "corrected", "regime", "out_of_range"];

pub fn write_estimates(path: &Path, est: &[CorrelationEstimate<f64>]) -> Result<()> {
    write_table(path, &ESTIMATE_HEADER, est.iter().map(estimate_fields))
}

/// Fields of one estimate row.
pub fn estimate_fields(e: &CorrelationEstimate<f64>) -> Vec<String> {
    vec![
        e.meta.case.tag().to_string(),
        fmt_f64(e.raw),
        fmt_f64(e.bias_factor),
        fmt_f64(e.corrected),
        e.regime.tag().to_string(),
        e.out_of_range.to_string(),
    ]
}

pub const MOMENT_HEADER: [&str; 5] = ["quantity_tag", "predicted", "empirical_mean", "empirical_se", "z"];

pub fn write_moment_reports(path: &Path, reports: &[MomentReport]) -> Result<()> {
    write_table(path, &MOMENT_HEADER, reports.iter().map(moment_fields))
}

pub fn moment_fields(r: &MomentReport) -> Vec<String> {
    vec![
        r.tag.tag().to_string(),
        fmt_f64(r.predicted),
        fmt_f64(r.empirical_mean),
        fmt_f64(r.empirical_se),
        fmt_f64(r.z),
    ]
}

pub const REPLICATE_HEADER: [&str; 8] =
    ["scenario", "point_id", "estimator", "replicate", "raw", "corrected", "factor", "flag"];

pub fn write_replicates(path: &Path, rows: &[ReplicateRow]) -> Result<()> {
    write_table(
        path,
        &REPLICATE_HEADER,
        rows.iter().map(|r| {
            vec![
                r.scenario.clone(),
                r.point_id.clone(),
                r.estimator.clone(),
                r.replicate.to_string(),
                fmt_f64(r.raw),
                fmt_f64(r.corrected),
                fmt_f64(r.factor),
                r.flag.clone(),
            ]
        }),
    )
}

pub fn read_replicates(path: &Path) -> Result<Vec<ReplicateRow>> {
    let t = Table::read(path, Some('\t'), true)?;
    let c = t.require(&REPLICATE_HEADER)?;
    t.rows
        .iter()
        .map(|row| {
            Ok(ReplicateRow {
                scenario: t.field(row, c[0])?.to_string(),
                point_id: t.field(row, c[1])?.to_string(),
                estimator: t.field(row, c[2])?.to_string(),
                replicate: t.get(row, c[3])?,
                raw: t.get(row, c[4])?,
                corrected: t.get(row, c[5])?,
                factor: t.get(row, c[6])?,
                flag: t.field(row, c[7])?.to_string(),
            })
        })
        .collect()
}

const SUMMARY_FIELDS: [&str; 8] = ["n", "mean", "sd", "min", "q25", "median", "q75", "max"];

fn aggregate_header() -> Vec<String> {
    let mut h: Vec<String> = ["scenario", "point_id", "estimator"].iter().map(|s| s.to_string()).collect();
    for prefix in ["", "corrected_", "factor_"] {
        h.extend(SUMMARY_FIELDS.iter().map(|f| format!("{prefix}{f}")));
    }
    h
}

fn summary_fields(s: &Summary) -> Vec<String> {
    let mut v = vec![s.n.to_string()];
    v.extend([s.mean, s.sd, s.min, s.q25, s.median, s.q75, s.max].map(fmt_f64));
    v
}

/// Writes aggregates. Raw-value columns carry no prefix; corrected and factor
/// columns are prefixed.
pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let header = aggregate_header();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(
        path,
        &header,
        rows.iter().map(|r| {
            let mut v = vec![r.scenario.clone(), r.point_id.clone(), r.estimator.clone()];
            v.extend(summary_fields(&r.raw));
            v.extend(summary_fields(&r.corrected));
            v.extend(summary_fields(&r.factor));
            v
        }),
    )
}

pub fn read_aggregate(path: &Path) -> Result<Vec<AggregateRow>> {
    let t = Table::read(path, Some('\t'), true)?;
    let header = aggregate_header();
    let names: Vec<&str> = header.iter().map(String::as_str).collect();
    let c = t.require(&names)?;
    let summary = |row: &(usize, Vec<String>), at: usize| -> Result<Summary> {
        Ok(Summary {
            n: t.get(row, c[at])?,
            mean: t.get(row, c[at + 1])?,
            sd: t.get(row, c[at + 2])?,
            min: t.get(row, c[at + 3])?,
            q25: t.get(row, c[at + 4])?,
            median: t.get(row, c[at + 5])?,
            q75: t.get(row, c[at + 6])?,
            max: t.get(row, c[at + 7])?,
        })
    };
    t.rows
        .iter()
        .map(|row| {
            Ok(AggregateRow {
                scenario: t.field(row, c[0])?.to_string(),
                point_id: t.field(row, c[1])?.to_string(),
                estimator: t.field(row, c[2])?.to_string(),
                raw: summary(row, 3)?,
                corrected: summary(row, 11)?,
                factor: summary(row, 19)?,
            })
        })
        .collect()
}

pub fn write_failures(path: &Path, failures: &[ReplicateFailure]) -> Result<()> {
    write_table(
        path,
        &["replicate", "reason"],
        failures.iter().map(|f| vec![f.replicate.to_string(), f.reason.replace(['\t', '\n'], " ")]),
    )
}

const GENOTYPE_MAGIC: &[u8; 4] = b"PRSG";
const GENOTYPE_VERSION: u32 = 1;

/// Writes the binary genotype container: magic, version, `n`, `p`, row-major codes
/// packed four to a byte, then `maf`, column means and column SDs as little-endian
/// doubles, then the SNP identifiers as length-prefixed UTF-8.
pub fn write_genotypes(path: &Path, g: &GenotypeMatrix) -> Result<()> {
    let (n, p) = (g.n(), g.p());
    let total = n * p;
    let mut buf = Vec::with_capacity(24 + total.div_ceil(4) + 24 * p);
    buf.extend_from_slice(GENOTYPE_MAGIC);
    buf.extend_from_slice(&GENOTYPE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    buf.extend_from_slice(&(p as u64).to_le_bytes());
    let mut packed = vec![0u8; total.div_ceil(4)];
    for i in 0..n {
        for j in 0..p {
            let k = i * p + j;
            packed[k / 4] |= g.code(i, j) << (2 * (k % 4));
        }
    }
    buf.extend_from_slice(&packed);
    for section in [g.maf(), g.col_mean(), g.col_sd()] {
        for x in section {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    for id in g.snp_ids() {
        buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
        buf.extend_from_slice(id.as_bytes());
    }
    atomic_write(path, &buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(k).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| parse_error(self.path, 0, format!("file truncated at byte {}", self.at)))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }

    fn f64s(&mut self, k: usize) -> Result<Vec<f64>> {
        let raw = self.take(k.checked_mul(8).ok_or_else(|| parse_error(self.path, 0, "section too large"))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes"))).collect())
    }
}

/// Reads a genotype file, either the binary container or the TSV fallback.
pub fn read_genotypes(path: &Path) -> Result<GenotypeMatrix> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(GENOTYPE_MAGIC) {
        read_genotypes_binary(path, &bytes)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| parse_error(path, 0, "neither binary nor UTF-8 text"))?;
        parse_genotypes_tsv(path, &text)
    }
}

fn read_genotypes_binary(path: &Path, bytes: &[u8]) -> Result<GenotypeMatrix> {
    let mut c = Cursor { bytes, at: 4, path };
    let version = c.u32()?;
    if version != GENOTYPE_VERSION {
        return Err(parse_error(path, 0, format!("unsupported genotype file version {version}")));
    }
    let n = usize::try_from(c.u64()?).map_err(|_| parse_error(path, 0, "n too large"))?;
    let p = usize::try_from(c.u64()?).map_err(|_| parse_error(path, 0, "p too large"))?;
    let total = n.checked_mul(p).ok_or_else(|| parse_error(path, 0, "n * p overflows"))?;
    let packed = c.take(total.div_ceil(4))?;
    let mut codes = vec![0u8; total];
    for i in 0..n {
        for j in 0..p {
            let k = i * p + j;
            let v = (packed[k / 4] >> (2 * (k % 4))) & 3;
            if v == 3 {
                return Err(parse_error(path, 0, format!("invalid genotype code at sample {i}, SNP {j}")));
            }
            codes[j * n + i] = v;
        }
    }
    let maf = c.f64s(p)?;
    let mean = c.f64s(p)?;
    let sd = c.f64s(p)?;
    let mut ids = Vec::with_capacity(p);
    for _ in 0..p {
        let len = c.u32()? as usize;
        let s = std::str::from_utf8(c.take(len)?).map_err(|_| parse_error(path, 0, "SNP id is not UTF-8"))?;
        ids.push(s.to_string());
    }
    if c.at != bytes.len() {
        return Err(parse_error(path, 0, "trailing bytes after genotype container"));
    }
    let g = GenotypeMatrix::from_codes(n, p, codes, Some(maf))?.with_snp_ids(ids)?;
    for j in 0..p {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1.0);
        if !close(g.col_mean()[j], mean[j]) || !close(g.col_sd()[j], sd[j]) {
            return Err(parse_error(path, 0, format!("stored moments of SNP {j} disagree with its codes")));
        }
    }
    Ok(g)
}

/// Writes the plain-text genotype format: a header of SNP ids, then one row of
/// tab-separated codes per sample.
pub fn write_genotypes_tsv(path: &Path, g: &GenotypeMatrix) -> Result<()> {
    let mut out = g.snp_ids().join("\t");
    out.push('\n');
    for i in 0..g.n() {
        for j in 0..g.p() {
            if j > 0 {
                out.push('\t');
            }
            out.push(char::from(b'0' + g.code(i, j)));
        }
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

fn parse_genotypes_tsv(path: &Path, text: &str) -> Result<GenotypeMatrix> {
    let t = Table::parse(path, text, Some('\t'), true)?;
    let p = t.header.len();
    let n = t.rows.len();
    let mut codes = vec![0u8; n * p];
    for (i, row) in t.rows.iter().enumerate() {
        for j in 0..p {
            let v: u8 = t.get(row, j)?;
            if v > 2 {
                return Err(parse_error(path, row.0, format!("genotype code {v} outside 0..=2")));
            }
            codes[j * n + i] = v;
        }
    }
    GenotypeMatrix::from_codes(n, p, codes, None)?.with_snp_ids(t.header.clone())
}

/// Parses `key = value` lines. `#` starts a comment. Returns entries with line numbers.
pub fn parse_key_values(path: &Path, text: &str) -> Result<Vec<(String, String, usize)>> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| parse_error(path, i + 1, "expected key = value"))?;
        let k = k.trim().to_string();
        if !seen.insert(k.clone()) {
            return Err(parse_error(path, i + 1, format!("duplicate key '{k}'")));
        }
        out.push((k, v.trim().to_string(), i + 1));
    }
    Ok(out)
}

fn list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| format!("'{s}': {e}")))
        .collect()
}

/// Keys understood by [`parse_experiment_config`].
pub const CONFIG_KEYS: [&str; 28] = [
    "scenario",
    "scale",
    "n1",
    "n2",
    "n3",
    "n_s",
    "p",
    "m",
    "sparsity",
    "k_ratio",
    "overlap_fraction",
    "sigma2",
    "h2",
    "h2_alpha",
    "h2_beta",
    "h2_eta",
    "sigma2_eps",
    "phi",
    "thresholds",
    "overlap_pair",
    "rho_eps",
    "held_out_nulls",
    "estimators",
    "replicates",
    "master_seed",
    "output",
    "workers",
    "reuse_genotypes",
];

/// Builds an experiment configuration from `key = value` text. `scenario` is
/// required; `scale` (`full` or `reduced`, default `reduced`) picks the defaults
/// that the remaining keys override. List values are comma-separated.
pub fn parse_experiment_config(path: &Path, text: &str) -> Result<ExperimentConfig> {
    let kv = parse_key_values(path, text)?;
    let find = |key: &str| kv.iter().find(|(k, _, _)| k == key);
    let (_, scenario, line) = find("scenario").ok_or_else(|| parse_error(path, 0, "missing key 'scenario'"))?;
    let scenario: Scenario = scenario.parse().map_err(|e: Error| parse_error(path, *line, e.to_string()))?;
    let scale = match find("scale") {
        Some((_, v, line)) => v.parse().map_err(|e: Error| parse_error(path, *line, e.to_string()))?,
        None => Scale::Reduced,
    };
    let mut c = ExperimentConfig::defaults(scenario, scale);
    for (k, v, line) in &kv {
        let bad = |msg: String| parse_error(path, *line, format!("{k}: {msg}"));
        macro_rules! num {
            () => {
                v.parse().map_err(|e| bad(format!("{e}")))?
            };
        }
        match k.as_str() {
            "scenario" | "scale" => {}
            "n1" => c.n1 = num!(),
            "n2" => c.n2 = num!(),
            "n3" => c.n3 = num!(),
            "n_s" => c.n_s = num!(),
            "p" => c.p = num!(),
            "m" => c.m = num!(),
            "sparsity" => c.sparsity = list(v).map_err(bad)?,
            "k_ratio" => c.k_ratio = list(v).map_err(bad)?,
            "overlap_fraction" => c.overlap_fraction = num!(),
            "sigma2" => c.sigma2 = num!(),
            "h2" => {
                let h: f64 = num!();
                (c.h2_alpha, c.h2_beta, c.h2_eta) = (h, h, h);
            }
            "h2_alpha" => c.h2_alpha = num!(),
            "h2_beta" => c.h2_beta = num!(),
            "h2_eta" => c.h2_eta = num!(),
            "sigma2_eps" => c.sigma2_eps = if v == "none" { None } else { Some(num!()) },
            "phi" => c.phi = list(v).map_err(bad)?,
            "thresholds" => c.thresholds = list(v).map_err(bad)?,
            "overlap_pair" => c.layout = v.parse::<Layout>().map_err(|e| bad(e.to_string()))?,
            "rho_eps" => c.rho_eps = num!(),
            "held_out_nulls" => c.held_out_nulls = num!(),
            "estimators" => c.estimators = list::<EstimatorKind>(v).map_err(bad)?,
            "replicates" => c.replicates = num!(),
            "master_seed" => c.master_seed = num!(),
            "output" => c.output = Some(PathBuf::from(v)),
            "workers" => c.workers = Some(num!()),
            "reuse_genotypes" => c.reuse_genotypes = num!(),
            _ => return Err(bad("unknown key".into())),
        }
    }
    c.validate().map_err(|e| parse_error(path, 0, e.to_string()))?;
    Ok(c)
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Canonical `key = value` text of a configuration. Output location and worker
/// count are omitted because they do not affect results.
pub fn experiment_config_text(c: &ExperimentConfig) -> String {
    let mut s = String::new();
    let mut put = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    put("scenario", c.scenario.tag().into());
    put("n1", c.n1.to_string());
    put("n2", c.n2.to_string());
    put("n3", c.n3.to_string());
    put("n_s", c.n_s.to_string());
    put("p", c.p.to_string());
    put("m", c.m.to_string());
    put("sparsity", join(&c.sparsity));
    put("k_ratio", join(&c.k_ratio));
    put("overlap_fraction", c.overlap_fraction.to_string());
    put("sigma2", c.sigma2.to_string());
    put("h2_alpha", c.h2_alpha.to_string());
    put("h2_beta", c.h2_beta.to_string());
    put("h2_eta", c.h2_eta.to_string());
    put("sigma2_eps", c.sigma2_eps.map_or("none".into(), |v| v.to_string()));
    put("phi", join(&c.phi));
    put("thresholds", join(&c.thresholds));
    put("overlap_pair", c.layout.tag().into());
    put("rho_eps", c.rho_eps.to_string());
    put("held_out_nulls", c.held_out_nulls.to_string());
    put("estimators", join(&c.estimator_set()));
    put("replicates", c.replicates.to_string());
    put("master_seed", c.master_seed.to_string());
    put("reuse_genotypes", c.reuse_genotypes.to_string());
    s
}

/// Lower-case hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Provenance record written beside every output.
#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub version: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub started: u64,
    pub finished: u64,
    /// Input paths with their SHA-256 digests.
    pub inputs: Vec<(String, String)>,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl RunManifest {
    /// Starts a manifest for a run configured by `config_text`.
    pub fn begin(config_text: &str, master_seed: u64) -> Self {
        RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: sha256_hex(config_text.as_bytes()),
            master_seed,
            started: unix_now(),
            finished: 0,
            inputs: Vec::new(),
        }
    }

    /// Records the digest of an input file.
    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path)?;
        self.inputs.push((path.display().to_string(), sha256_hex(&bytes)));
        Ok(())
    }

    pub fn finish(&mut self) {
        self.finished = unix_now();
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "version = {}", self.version);
        let _ = writeln!(s, "config_sha256 = {}", self.config_hash);
        let _ = writeln!(s, "master_seed = {}", self.master_seed);
        let _ = writeln!(s, "started_unix = {}", self.started);
        let _ = writeln!(s, "finished_unix = {}", self.finished);
        for (i, (p, d)) in self.inputs.iter().enumerate() {
            let _ = writeln!(s, "input{i} = {p} sha256:{d}");
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        atomic_write(path, self.to_text().as_bytes())
    }
}

/// Writes the tables of a finished experiment into `dir`: `replicates.tsv`,
/// `aggregate.tsv`, `failures.tsv`, `config.txt` and `manifest.txt`.
pub fn write_experiment(dir: &Path, config: &ExperimentConfig, out: &ExperimentOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    let text = experiment_config_text(config);
    let mut manifest = RunManifest::begin(&text, config.master_seed);
    write_replicates(&dir.join("replicates.tsv"), &out.rows)?;
    write_aggregate(&dir.join("aggregate.tsv"), &out.aggregate.rows)?;
    write_failures(&dir.join("failures.tsv"), &out.failures)?;
    atomic_write(&dir.join("config.txt"), text.as_bytes())?;
    manifest.finish();
    manifest.write(&dir.join("manifest.txt"))
}
