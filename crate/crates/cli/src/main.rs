use std::fmt;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use prsbias::estimators::{correct, correct_partial_r2, raw_cosine, regime, CaseTag, DesignMeta, RegimeFlag, RegimeThresholds};
use prsbias::experiments::run;
use prsbias::genotype::gen_genotypes;
use prsbias::gwas::{marginal_gwas, GwasOptions, ScreenRule, SummaryStats};
use prsbias::io::{
    self, fmt_f64, read_external_summary, read_genotypes, read_sample_values, read_summary_stats, RunManifest,
    SampleSize, SampleValues, SummaryFileSchema,
};
use prsbias::moments::{monte_carlo_check, FixedSelection, MomentConfig, QuantityTag};
use prsbias::prs::score;
use prsbias::synth::{CohortSizes, TraitArchitecture};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_DEGENERATE: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "prsbias", version, about = "Cross-trait polygenic risk score correlation with bias correction")]
struct Cli {
    /// Worker threads for parallel kernels and replicates.
    #[arg(long, global = true, env = "PRSBIAS_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a simulation study described by a key = value config file.
    Simulate {
        config: PathBuf,
        /// Output directory, overriding the config's `output` key.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Simulate a genotype matrix.
    GenGenotypes {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Write the plain-text format instead of the binary container.
        #[arg(long)]
        tsv: bool,
    },
    /// Marginal association scan of a phenotype on every SNP.
    Gwas {
        #[arg(long)]
        genotypes: PathBuf,
        /// Two-column `sample_id value` table in genotype row order.
        #[arg(long)]
        phenotype: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Regress the phenotype as given instead of standardizing it first.
        #[arg(long)]
        raw_phenotype: bool,
    },
    /// Polygenic scores of target genotypes from summary statistics.
    Score {
        #[arg(long)]
        genotypes: PathBuf,
        #[arg(long)]
        summary: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Keep SNPs with p-value at or below this cutoff.
        #[arg(long, conflicts_with = "effect_cutoff")]
        pvalue: Option<f64>,
        /// Keep SNPs whose absolute effect exceeds this cutoff.
        #[arg(long)]
        effect_cutoff: Option<f64>,
        #[command(flatten)]
        schema: SchemaArgs,
    },
    /// Raw cosine estimate from files, with its correction.
    Estimate {
        /// Target phenotype or first score (sample tables), or first summary table.
        #[arg(long)]
        left: PathBuf,
        /// Second score (sample table) or second summary table.
        #[arg(long)]
        right: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit with status 4 when the design is in the degenerate regime.
        #[arg(long)]
        strict: bool,
        #[command(flatten)]
        design: DesignArgs,
    },
    /// Correct a raw estimate or a partial R-squared.
    Correct {
        #[arg(long, allow_hyphen_values = true, required_unless_present = "r2", conflicts_with = "r2")]
        raw: Option<f64>,
        /// Partial R-squared of a target phenotype on a score (independent design).
        #[arg(long)]
        r2: Option<f64>,
        #[arg(long)]
        strict: bool,
        #[command(flatten)]
        design: DesignArgs,
    },
    /// Compare a closed-form moment with a Monte Carlo average.
    Moments {
        #[arg(long)]
        tag: QuantityTag,
        #[arg(long, default_value_t = 500)]
        n1: usize,
        #[arg(long, default_value_t = 500)]
        n2: usize,
        #[arg(long, default_value_t = 500)]
        n3: usize,
        #[arg(long, default_value_t = 0)]
        ns: usize,
        #[arg(long, default_value_t = 1000)]
        p: usize,
        #[arg(long, default_value_t = 200)]
        m: usize,
        #[arg(long, default_value_t = 1.0)]
        h2: f64,
        #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
        rho: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        rho_eps: f64,
        /// Causal SNPs kept by the fixed selection of screened quantities.
        #[arg(long, default_value_t = 100)]
        select_causal: usize,
        /// Null SNPs kept by the fixed selection of screened quantities.
        #[arg(long, default_value_t = 100)]
        select_null: usize,
        #[arg(long, default_value_t = 200)]
        replicates: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 4.0)]
        z_threshold: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Sample sizes, heritabilities and the correction case.
#[derive(Args, Debug, Clone)]
struct DesignArgs {
    /// ae, ab, summary-ab, screened-ae, screened-ab, overlap-i, overlap-ii, iii, iv or v.
    #[arg(long)]
    case: CaseTag,
    #[arg(long)]
    n1: Option<usize>,
    #[arg(long)]
    n2: Option<usize>,
    #[arg(long)]
    n3: Option<usize>,
    #[arg(long)]
    ns: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    h2a: Option<f64>,
    #[arg(long)]
    h2b: Option<f64>,
    #[arg(long)]
    h2e: Option<f64>,
    #[arg(long)]
    hab: Option<f64>,
    #[arg(long)]
    hae: Option<f64>,
}

impl DesignArgs {
    fn meta(&self) -> Result<DesignMeta<f64>> {
        let p = self
            .p
            .ok_or(prsbias::Error::MissingParameter { case: self.case.tag(), missing: vec!["p"] })?;
        Ok(DesignMeta {
            n1: self.n1.unwrap_or(0),
            n2: self.n2.unwrap_or(0),
            n3: self.n3.unwrap_or(0),
            n_s: self.ns.unwrap_or(0),
            h2_alpha: self.h2a,
            h2_beta: self.h2b,
            h2_eta: self.h2e,
            h_alpha_beta: self.hab,
            h_alpha_eta: self.hae,
            ..DesignMeta::new(self.case, p)
        })
    }
}

/// Column layout flags for third-party summary files.
#[derive(Args, Debug, Clone)]
struct SchemaArgs {
    /// Read the summary file as a third-party table described by the column flags.
    #[arg(long)]
    external: bool,
    #[arg(long, default_value = "snp_id")]
    snp_col: String,
    #[arg(long, default_value = "effect")]
    effect_col: String,
    #[arg(long, default_value = "se")]
    se_col: String,
    /// P-value column; p-values are recomputed from effect / se when set to `none`.
    #[arg(long, default_value = "pvalue")]
    p_col: String,
    #[arg(long, default_value = "n")]
    n_col: String,
    /// Constant sample size, used instead of a sample-size column.
    #[arg(long)]
    n_const: Option<usize>,
    /// Column whose value 1 negates the effect of its row.
    #[arg(long)]
    flip_col: Option<String>,
    /// Field delimiter; whitespace when omitted.
    #[arg(long)]
    delimiter: Option<char>,
    /// The file has no header row; columns are then 1-based numbers.
    #[arg(long)]
    no_header: bool,
}

impl SchemaArgs {
    fn schema(&self) -> SummaryFileSchema {
        SummaryFileSchema {
            snp_id: self.snp_col.clone(),
            effect: self.effect_col.clone(),
            se: self.se_col.clone(),
            pvalue: (self.p_col != "none").then(|| self.p_col.clone()),
            n: match self.n_const {
                Some(n) => SampleSize::Constant(n),
                None => SampleSize::Column(self.n_col.clone()),
            },
            sign_flip: self.flip_col.clone(),
            delimiter: self.delimiter,
            header: !self.no_header,
        }
    }
}

/// Refusal to report an estimate from the degenerate regime under `--strict`.
#[derive(Debug)]
struct StrictRefusal(CaseTag);

impl fmt::Display for StrictRefusal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "design of case {} is in the degenerate regime; refusing under --strict", self.0)
    }
}

impl std::error::Error for StrictRefusal {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<StrictRefusal>().is_some() {
        return EXIT_DEGENERATE;
    }
    match err.chain().find_map(|e| e.downcast_ref::<prsbias::Error>()) {
        Some(e) if e.is_usage() => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    if let Some(k) = cli.workers {
        if k == 0 {
            return Err(prsbias::Error::param("workers must be at least 1").into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(k).build_global().context("configuring worker threads")?;
    }
    match cli.command {
        Command::Simulate { config, output } => simulate(&config, output, cli.workers),
        Command::GenGenotypes { n, p, seed, out, tsv } => {
            let g = gen_genotypes(n, p, seed)?;
            if tsv {
                io::write_genotypes_tsv(&out, &g)?;
            } else {
                io::write_genotypes(&out, &g)?;
            }
            let mut manifest = RunManifest::begin(&format!("gen-genotypes n={n} p={p} seed={seed}"), seed);
            manifest.finish();
            manifest.write(&manifest_path(&out))?;
            Ok(())
        }
        Command::Gwas { genotypes, phenotype, out, raw_phenotype } => {
            let g = read_genotypes(&genotypes)?;
            let y = read_sample_values(&phenotype)?;
            let opts = if raw_phenotype { GwasOptions::raw() } else { GwasOptions::default() };
            let stats = marginal_gwas(&g, &y.values, opts)?;
            io::write_summary_stats(&out, &stats)?;
            write_manifest(&out, &format!("gwas raw_phenotype={raw_phenotype}"), &[&genotypes, &phenotype])
        }
        Command::Score { genotypes, summary, out, pvalue, effect_cutoff, schema } => {
            let g = read_genotypes(&genotypes)?;
            let stats = read_summary(&summary, &schema)?;
            let rule = match (pvalue, effect_cutoff) {
                (Some(c), _) => ScreenRule::PValue(c),
                (_, Some(c)) => ScreenRule::Effect(c),
                _ => ScreenRule::All,
            };
            let prs = score(&g, &stats, rule)?;
            eprintln!(
                "matched {} SNPs ({} only in summary, {} only in genotypes); {} selected",
                prs.alignment.matched,
                prs.alignment.missing_in_genotypes,
                prs.alignment.missing_in_summary,
                prs.selected.len()
            );
            io::write_sample_values(&out, "score", &SampleValues::positional(prs.scores))?;
            write_manifest(&out, &format!("score rule={rule:?}"), &[&genotypes, &summary])
        }
        Command::Estimate { left, right, out, strict, design } => estimate(&left, &right, out, strict, &design),
        Command::Correct { raw, r2, strict, design } => correct_cmd(raw, r2, strict, &design),
        Command::Moments {
            tag,
            n1,
            n2,
            n3,
            ns,
            p,
            m,
            h2,
            rho,
            rho_eps,
            select_causal,
            select_null,
            replicates,
            seed,
            z_threshold,
            out,
        } => {
            let arch = TraitArchitecture::shared(p, m, 1.0, rho, h2);
            let selection = Some(FixedSelection::leading(&arch, select_causal, select_null));
            let cfg = MomentConfig {
                arch,
                sizes: CohortSizes { n1, n2, n3 },
                n_shared: ns,
                rho_eps,
                selection,
                z_threshold,
            };
            let report = monte_carlo_check(tag, &cfg, replicates, seed)?;
            match &out {
                Some(path) => {
                    io::write_moment_reports(path, std::slice::from_ref(&report))?;
                    write_manifest(path, &format!("{cfg:?} replicates={replicates} seed={seed}"), &[])?;
                }
                None => print_rows(&io::MOMENT_HEADER, &[io::moment_fields(&report)])?,
            }
            if !report.pass {
                bail!(prsbias::Error::degenerate(format!("|z| = {:.2} exceeds {z_threshold}", report.z.abs())));
            }
            Ok(())
        }
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".manifest.txt");
    out.with_file_name(name)
}

fn write_manifest(out: &Path, settings: &str, inputs: &[&Path]) -> Result<()> {
    let mut m = RunManifest::begin(settings, 0);
    for p in inputs {
        m.add_input(p)?;
    }
    m.finish();
    m.write(&manifest_path(out))?;
    Ok(())
}

fn print_rows(header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{}", header.join("\t"))?;
    for r in rows {
        writeln!(stdout, "{}", r.join("\t"))?;
    }
    Ok(())
}

fn read_summary(path: &Path, schema: &SchemaArgs) -> Result<SummaryStats<f64>> {
    Ok(if schema.external { read_external_summary(path, &schema.schema())? } else { read_summary_stats(path)? })
}

fn simulate(config: &Path, output: Option<PathBuf>, workers: Option<usize>) -> Result<()> {
    let text = std::fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let mut cfg = io::parse_experiment_config(config, &text)?;
    if output.is_some() {
        cfg.output = output;
    }
    if workers.is_some() {
        cfg.workers = workers;
    }
    let out = run(&cfg)?;
    let rows: Vec<Vec<String>> = out
        .aggregate
        .rows
        .iter()
        .map(|r| {
            vec![
                r.point_id.clone(),
                r.estimator.clone(),
                r.raw.n.to_string(),
                fmt_f64(r.raw.mean),
                fmt_f64(r.raw.sd),
                fmt_f64(r.corrected.mean),
                fmt_f64(r.corrected.sd),
            ]
        })
        .collect();
    print_rows(&["point_id", "estimator", "n", "mean", "sd", "corrected_mean", "corrected_sd"], &rows)?;
    if !out.failures.is_empty() {
        eprintln!("{} of {} replicates failed", out.failures.len(), cfg.replicates);
    }
    Ok(())
}

fn aligned(left: &SampleValues, right: &SampleValues) -> Result<()> {
    if left.sample_id != right.sample_id {
        return Err(prsbias::Error::dim("the two sample tables list different samples or orders").into());
    }
    Ok(())
}

/// Effect vectors of two summary tables restricted to their common SNPs, in the
/// order of the first table.
fn common_effects(a: &SummaryStats<f64>, b: &SummaryStats<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let index: std::collections::HashMap<&str, usize> =
        b.snp_id.iter().enumerate().map(|(k, id)| (id.as_str(), k)).collect();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (j, id) in a.snp_id.iter().enumerate() {
        if let Some(&k) = index.get(id.as_str()) {
            x.push(a.effect[j]);
            y.push(b.effect[k]);
        }
    }
    if x.is_empty() {
        return Err(prsbias::Error::degenerate("the summary tables share no SNP").into());
    }
    Ok((x, y))
}

fn strict_check(strict: bool, case: CaseTag, flag: RegimeFlag) -> Result<()> {
    if strict && flag == RegimeFlag::Degenerate {
        return Err(anyhow!(StrictRefusal(case)));
    }
    Ok(())
}

fn estimate(left: &Path, right: &Path, out: Option<PathBuf>, strict: bool, design: &DesignArgs) -> Result<()> {
    let meta = design.meta()?;
    let raw = match design.case {
        CaseTag::SummaryAb | CaseTag::CaseIii => {
            let (x, y) = common_effects(&read_summary_stats(left)?, &read_summary_stats(right)?)?;
            raw_cosine(&x, &y)?
        }
        CaseTag::ScreenedAe | CaseTag::ScreenedAb => {
            bail!(prsbias::Error::param("screened corrections need selection counts; use the library API"))
        }
        _ => {
            let (a, b) = (read_sample_values(left)?, read_sample_values(right)?);
            aligned(&a, &b)?;
            raw_cosine(&a.values, &b.values)?
        }
    };
    let est = correct(raw, &meta)?;
    strict_check(strict, design.case, est.regime)?;
    match &out {
        Some(path) => {
            io::write_estimates(path, std::slice::from_ref(&est))?;
            write_manifest(path, &format!("{design:?}"), &[left, right])?;
        }
        None => print_rows(&io::ESTIMATE_HEADER, &[io::estimate_fields(&est)])?,
    }
    Ok(())
}

fn correct_cmd(raw: Option<f64>, r2: Option<f64>, strict: bool, design: &DesignArgs) -> Result<()> {
    let meta = design.meta()?;
    if let Some(r2) = r2 {
        if design.case != CaseTag::IndepAe {
            bail!(prsbias::Error::param("--r2 applies to the ae case only"));
        }
        let factor = prsbias::estimators::bias_factor(&meta)?;
        let flag = regime(&meta, RegimeThresholds::default());
        strict_check(strict, design.case, flag)?;
        let (h2a, h2e) = (meta.h2_alpha.unwrap_or(f64::NAN), meta.h2_eta.unwrap_or(f64::NAN));
        let fixed = correct_partial_r2(r2, meta.n1, meta.p, h2a, h2e)?;
        return print_rows(
            &["case", "r2", "factor_squared", "corrected_r2", "regime", "exceeds_one"],
            &[vec![
                design.case.tag().to_string(),
                fmt_f64(r2),
                fmt_f64(factor * factor),
                fmt_f64(fixed.value),
                flag.tag().to_string(),
                fixed.exceeds_one.to_string(),
            ]],
        );
    }
    let raw = raw.ok_or(prsbias::Error::MissingParameter { case: design.case.tag(), missing: vec!["raw"] })?;
    let est = correct(raw, &meta)?;
    strict_check(strict, design.case, est.regime)?;
    print_rows(&io::ESTIMATE_HEADER, &[io::estimate_fields(&est)])
}
