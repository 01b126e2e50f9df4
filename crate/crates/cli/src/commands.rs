use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use blockmax::blocks::{read_block_csv, read_series_csv, summarize, write_block_csv, SERIES_TAG};
use blockmax::mcmc::{diagnostics, run_chain, summarize as summarize_draws, ChainDraws, McmcConfig};
use blockmax::model::{LocationMode, ModelSpec, PriorSpec};
use blockmax::oracle::{mle_fit, simulate_panel, SimulationTruth, GROUP_TAG};
use blockmax::report::{
    build_report, coverage_check, format_table, return_level_posterior, CoverageCheck,
    ReturnLevelReport, Scope,
};
use blockmax::rng::stream_rng;
use blockmax::{extract_all, BlockRule, BlockSeries, ExtremumKind, GevParams};
use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::Settings;
use crate::failure::{CliResult, Failure};
use crate::{BlocksArgs, FitArgs, McmcFlags, MleArgs, ReplicateArgs, ReturnsArgs, SimulateArgs};

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::io(path, e))
}

fn read_maxima(path: &Path) -> CliResult<BlockSeries> {
    read_block_csv(open(path)?).map_err(|e| Failure::from(e).in_file(path))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| Failure::io(path, e))
}

fn create(path: &Path) -> CliResult<File> {
    File::create(path).map_err(|e| Failure::io(path, e))
}

fn out_dir(s: &mut Settings, flag: Option<String>) -> CliResult<PathBuf> {
    let dir = PathBuf::from(s.require::<String>("out", flag, None)?);
    fs::create_dir_all(&dir).map_err(|e| Failure::io(&dir, e))?;
    Ok(dir)
}

fn parse<T>(key: &str, raw: String) -> CliResult<T>
where
    T: std::str::FromStr<Err = blockmax::Error>,
{
    raw.parse()
        .map_err(|e: blockmax::Error| Failure::usage(format!("--{key}: {e}")))
}

fn check_k(ks: &[f64]) -> CliResult<()> {
    match ks.iter().find(|k| !(k.is_finite() && **k > 1.0)) {
        Some(k) => Err(Failure {
            code: "E_DOMAIN",
            exit: crate::failure::EXIT_DATA,
            message: format!("return period k must be finite and > 1, got {k}"),
        }),
        None => Ok(()),
    }
}

fn mcmc_config(s: &mut Settings, f: McmcFlags) -> CliResult<McmcConfig> {
    let d = McmcConfig::default();
    let config = McmcConfig {
        iterations: s.require("iterations", f.iterations, Some(d.iterations))?,
        burn_in: s.require("burn_in", f.burn_in, Some(d.burn_in))?,
        thin: s.require("thin", f.thin, Some(d.thin))?,
        seed: s.require("seed", f.seed, Some(d.seed))?,
        adapt_window: s.require("adapt_window", None, Some(d.adapt_window))?,
        target_accept: s.require("target_accept", None, Some(d.target_accept))?,
        chains: 1,
    };
    config.validate()?;
    Ok(config)
}

pub fn blocks(a: BlocksArgs) -> CliResult<()> {
    let mut s = Settings::new("blocks", a.common.config.as_deref())?;
    let input = PathBuf::from(s.require::<String>("input", a.input, None)?);
    let rule: BlockRule = parse("rule", s.require("rule", a.rule, Some("year".into()))?)?;
    let kind: ExtremumKind = parse("kind", s.require("kind", a.kind, Some("max".into()))?)?;
    let drop_partial = s.switch("drop_partial", a.drop_partial)?;
    let percent_change = s.switch("percent_change", a.percent_change)?;
    let summary_tag: Option<String> = s.get("summary_tag", a.summary_tag, None)?;
    let dir = out_dir(&mut s, a.common.out)?;
    s.finish()?;

    let label = input
        .file_stem()
        .map(|x| x.to_string_lossy().into_owned())
        .unwrap_or_else(|| "series".into());
    let mut series = read_series_csv(open(&input)?, &label).map_err(|e| Failure::from(e).in_file(&input))?;
    if percent_change {
        series = series
            .iter()
            .map(|x| x.percent_changes())
            .collect::<Result<_, _>>()?;
    }
    let mut extraction = extract_all(&series, rule, kind)?;
    if drop_partial {
        extraction = extraction.drop_partial();
    }
    let bs = &extraction.blocks;
    let tag = summary_tag.or_else(|| (series.len() > 1).then(|| SERIES_TAG.to_string()));
    let summary = summarize(bs, tag.as_deref())?;

    write_block_csv(bs, create(&dir.join("blocks.csv"))?)?;
    let t = &extraction.tally;
    let mut text = summary.to_string();
    text.push_str(&format!("\nempty blocks skipped: {}\n", t.empty_skipped));
    text.push_str(&format!("partial blocks dropped: {}\n", t.partial_dropped));
    for (series, block) in &t.partial_blocks {
        text.push_str(&format!("partial block: {series} {block}\n"));
    }
    write(&dir.join("summary.txt"), text)?;
    write(&dir.join("manifest.txt"), s.manifest())?;
    println!("{} blocks written to {}", bs.len(), dir.join("blocks.csv").display());
    Ok(())
}

fn resolve_priors(s: &mut Settings, defaults: &PriorSpec) -> CliResult<PriorSpec> {
    let mut p = *defaults;
    p.mu.mean = s.require("mu_prior_mean", None, Some(p.mu.mean))?;
    p.mu.sd = s.require("mu_prior_sd", None, Some(p.mu.sd))?;
    p.log_sigma.mean = s.require("log_sigma_prior_mean", None, Some(p.log_sigma.mean))?;
    p.log_sigma.sd = s.require("log_sigma_prior_sd", None, Some(p.log_sigma.sd))?;
    p.eps.mean = s.require("eps_prior_mean", None, Some(p.eps.mean))?;
    p.eps.sd = s.require("eps_prior_sd", None, Some(p.eps.sd))?;
    p.tau.scale = s.require("tau_prior_scale", None, Some(p.tau.scale))?;
    p.validate().map_err(|e| Failure::usage(e.to_string()))?;
    Ok(p)
}

pub fn fit(a: FitArgs) -> CliResult<()> {
    let mut s = Settings::new("fit", a.common.config.as_deref())?;
    let input = PathBuf::from(s.require::<String>("input", a.input, None)?);
    let mode: String = s.require("mode", a.model.mode, Some("fixed".into()))?;
    let group_tag: Option<String> = s.get("group_tag", a.model.group_tag, None)?;
    let mode = match (mode.as_str(), group_tag) {
        ("fixed", _) => LocationMode::Fixed,
        ("random", Some(tag)) => LocationMode::Random(tag),
        ("random", None) => return Err(Failure::usage("--mode random needs --group-tag")),
        (other, _) => return Err(Failure::usage(format!("--mode: expected fixed or random, got '{other}'"))),
    };
    let config = mcmc_config(&mut s, a.mcmc)?;
    let ks = s.list("k", a.k)?;
    check_k(&ks)?;
    let dir = out_dir(&mut s, a.common.out)?;

    let data = read_maxima(&input)?;
    let defaults = ModelSpec::with_priors(data.clone(), mode.clone(), None)?;
    let priors = resolve_priors(&mut s, defaults.priors())?;
    s.finish()?;
    let spec = ModelSpec::with_priors(data, mode, Some(priors))?;

    let draws = run_chain(&spec, &config)?;
    draws.write_csv(create(&dir.join("chain.csv"))?)?;
    let summary = summarize_draws(&draws)?;
    let diag = diagnostics(&draws);
    let mut text = summary.to_string();
    text.push_str(&format!("\nretained draws: {}\nacceptance rates:\n", draws.len()));
    for (name, rate) in &draws.acceptance_rates {
        text.push_str(&format!("  {name:<16} {rate:.3}\n"));
    }
    for w in &diag.warnings {
        text.push_str(&format!("warning: {w}\n"));
    }
    write(&dir.join("summary.txt"), text)?;
    write(&dir.join("diagnostics.json"), serde_json::to_string_pretty(&diag)?)?;
    if !ks.is_empty() {
        let tag = spec.mode().group_tag().map(str::to_string);
        write_reports(&dir, &draws, spec.data(), &ks, &[], tag)?;
    }
    write(&dir.join("manifest.txt"), s.manifest())?;
    println!(
        "{} draws written to {} ({} diagnostic warnings)",
        draws.len(),
        dir.join("chain.csv").display(),
        diag.warnings.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct ScopeEntry {
    report: ReturnLevelReport,
    coverage: CoverageCheck,
}

#[derive(Serialize)]
struct KReport {
    k: f64,
    group_tag: Option<String>,
    entries: Vec<ScopeEntry>,
}

/// The data a scope's percentiles refer to: its own group when known.
fn scope_data(bs: &BlockSeries, scope: &Scope, tag: Option<&str>) -> CliResult<BlockSeries> {
    match (scope, tag) {
        (Scope::Group(g), Some(tag)) => {
            let records: Vec<_> = bs
                .records()
                .iter()
                .filter(|r| r.tags.get(tag) == Some(g))
                .cloned()
                .collect();
            if records.is_empty() {
                return Err(Failure {
                    code: "E_SCHEMA",
                    exit: crate::failure::EXIT_DATA,
                    message: format!("no maxima with {tag} = {g}"),
                });
            }
            Ok(BlockSeries::new(records, bs.kind())?)
        }
        _ => Ok(bs.clone()),
    }
}

fn infer_group_tag(bs: &BlockSeries, labels: &[String]) -> Option<String> {
    if labels.is_empty() {
        return None;
    }
    let wanted: BTreeSet<&str> = labels.iter().map(String::as_str).collect();
    bs.tag_names().into_iter().find(|t| {
        let found: BTreeSet<&str> = bs.records().iter().map(|r| r.tags[t].as_str()).collect();
        found == wanted
    })
}

fn write_reports(
    dir: &Path,
    draws: &ChainDraws,
    bs: &BlockSeries,
    ks: &[f64],
    requested: &[String],
    group_tag: Option<String>,
) -> CliResult<()> {
    let groups = draws.group_labels();
    let scopes: Vec<Scope> = if requested.is_empty() {
        std::iter::once(Scope::Population)
            .chain(groups.iter().cloned().map(Scope::Group))
            .collect()
    } else {
        requested
            .iter()
            .map(|r| match r.as_str() {
                "population" => Scope::Population,
                g => Scope::Group(g.trim_start_matches("group:").to_string()),
            })
            .collect()
    };
    for k in ks {
        let mut entries = Vec::new();
        let mut columns = Vec::new();
        for scope in &scopes {
            let rk = return_level_posterior(draws, *k, scope)?;
            let data = scope_data(bs, scope, group_tag.as_deref())?;
            let report = build_report(&rk, &data, *k, scope.clone())?;
            let coverage = coverage_check(&report, &data, 100.0 * (1.0 - 1.0 / k))?;
            entries.push(ScopeEntry { report, coverage });
            columns.push((scope.to_string(), rk));
        }
        let reports: Vec<ReturnLevelReport> = entries.iter().map(|e| e.report.clone()).collect();
        let mut text = format!("Return level R^{k}\n\n{}\n", format_table(&reports));
        for e in &entries {
            text.push_str(&format!("{}: {}\n", e.report.scope, e.coverage.narrative));
        }
        write(&dir.join(format!("report_k{k}.txt")), text)?;
        let json = KReport {
            k: *k,
            group_tag: group_tag.clone(),
            entries,
        };
        write(&dir.join(format!("report_k{k}.json")), serde_json::to_string_pretty(&json)?)?;

        let mut csv = columns.iter().map(|c| c.0.as_str()).collect::<Vec<_>>().join(",");
        csv.push('\n');
        for i in 0..draws.len() {
            let row: Vec<String> = columns.iter().map(|c| c.1[i].to_string()).collect();
            csv.push_str(&row.join(","));
            csv.push('\n');
        }
        write(&dir.join(format!("rk_k{k}.csv")), csv)?;
    }
    Ok(())
}

pub fn returns(a: ReturnsArgs) -> CliResult<()> {
    let mut s = Settings::new("returns", a.common.config.as_deref())?;
    let chain = PathBuf::from(s.require::<String>("chain", a.chain, None)?);
    let input = PathBuf::from(s.require::<String>("input", a.input, None)?);
    let ks = s.list("k", a.k)?;
    if ks.is_empty() {
        return Err(Failure::usage("at least one --k is required"));
    }
    check_k(&ks)?;
    let scopes: Vec<String> = s.list("scope", a.scope)?;
    let flag_tag: Option<String> = s.get("group_tag", a.group_tag, None)?;
    let dir = out_dir(&mut s, a.common.out)?;
    s.finish()?;

    let draws = ChainDraws::read_csv(open(&chain)?).map_err(|e| Failure::from(e).in_file(&chain))?;
    for name in ["mu", "sigma", "eps"] {
        if draws.column(name).is_none() {
            return Err(Failure {
                code: "E_SCHEMA",
                exit: crate::failure::EXIT_DATA,
                message: format!("{}: chain has no '{name}' column", chain.display()),
            });
        }
    }
    let bs = read_maxima(&input)?;
    let tag = match flag_tag {
        Some(t) if !bs.has_tag(&t) => {
            return Err(Failure {
                code: "E_MODEL",
                exit: crate::failure::EXIT_DATA,
                message: format!("group tag '{t}' is not a column of {}", input.display()),
            })
        }
        Some(t) => Some(t),
        None => infer_group_tag(&bs, &draws.group_labels()),
    };
    if let Some(t) = &tag {
        s.note("group_tag", t);
    }
    write_reports(&dir, &draws, &bs, &ks, &scopes, tag)?;
    write(&dir.join("manifest.txt"), s.manifest())?;
    for k in &ks {
        println!("{}", dir.join(format!("report_k{k}.txt")).display());
    }
    Ok(())
}

fn truth(s: &mut Settings, t: crate::TruthFlags) -> CliResult<(SimulationTruth, usize, usize)> {
    let truth = SimulationTruth {
        mu: s.require("mu", t.mu, Some(0.0))?,
        sigma: s.require("sigma", t.sigma, Some(1.0))?,
        eps: s.require("eps", t.eps, Some(0.1))?,
        tau: s.require("tau", t.tau, Some(0.0))?,
    };
    let groups = s.require("groups", t.groups, Some(1))?;
    let per_group = s.require("per_group", t.per_group, Some(100))?;
    Ok((truth, groups, per_group))
}

pub fn simulate(a: SimulateArgs) -> CliResult<()> {
    let mut s = Settings::new("simulate", a.common.config.as_deref())?;
    let (truth, groups, per_group) = truth(&mut s, a.truth)?;
    let seed = s.require("seed", a.seed, Some(1))?;
    let dir = out_dir(&mut s, a.common.out)?;
    s.finish()?;

    let panel = simulate_panel(truth, groups, per_group, seed)?;
    write_block_csv(&panel.data, create(&dir.join("panel.csv"))?)?;
    let deltas: serde_json::Map<String, serde_json::Value> = (1..=groups)
        .map(|g| format!("g{g:02}"))
        .zip(panel.deltas.iter().map(|d| serde_json::json!(d)))
        .collect();
    let json = serde_json::json!({
        "truth": truth,
        "groups": groups,
        "per_group": per_group,
        "seed": seed,
        "deltas": deltas,
    });
    write(&dir.join("truth.json"), serde_json::to_string_pretty(&json)?)?;
    write(&dir.join("manifest.txt"), s.manifest())?;
    println!("{} maxima written to {}", panel.data.len(), dir.join("panel.csv").display());
    Ok(())
}

#[derive(Serialize)]
struct MleReturnLevel {
    k: f64,
    estimate: f64,
    se: f64,
    lower95: f64,
    upper95: f64,
}

pub fn mle(a: MleArgs) -> CliResult<()> {
    let mut s = Settings::new("mle", a.common.config.as_deref())?;
    let input = PathBuf::from(s.require::<String>("input", a.input, None)?);
    let ks = s.list("k", a.k)?;
    check_k(&ks)?;
    let dir = out_dir(&mut s, a.common.out)?;
    s.finish()?;

    let bs = read_maxima(&input)?;
    let fit = mle_fit(&bs)?;
    let levels = ks
        .iter()
        .map(|&k| {
            let ci = fit.return_level_ci(k)?;
            Ok(MleReturnLevel {
                k,
                estimate: ci.estimate,
                se: ci.se,
                lower95: ci.lower,
                upper95: ci.upper,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let json = serde_json::json!({ "fit": fit, "return_levels": levels });
    write(&dir.join("mle.json"), serde_json::to_string_pretty(&json)?)?;
    write(&dir.join("manifest.txt"), s.manifest())?;
    let p = fit.params;
    println!(
        "mu={:.4} sigma={:.4} eps={:.4} loglik={:.4} converged={}",
        p.mu(),
        p.sigma(),
        p.eps(),
        fit.log_likelihood_at_max,
        fit.converged
    );
    Ok(())
}

#[derive(Debug, Clone)]
struct Row {
    replicate: usize,
    sim_seed: u64,
    chain_seed: u64,
    parameter: String,
    truth: f64,
    estimate: f64,
    lower95: f64,
    upper95: f64,
}

impl Row {
    fn covered(&self) -> bool {
        self.lower95 <= self.truth && self.truth <= self.upper95
    }
}

struct Study {
    truth: SimulationTruth,
    groups: usize,
    per_group: usize,
    seed: u64,
    mcmc: McmcConfig,
    use_mle: bool,
    ks: Vec<f64>,
}

impl Study {
    fn replicate(&self, i: usize) -> blockmax::Result<Vec<Row>> {
        let mut rng = stream_rng(self.seed, i as u64 + 1);
        let sim_seed = rng.next_u64();
        let chain_seed = rng.next_u64();
        let t = self.truth;
        let panel = simulate_panel(t, self.groups, self.per_group, sim_seed)?;
        let gev = GevParams::new(t.mu, t.sigma, t.eps)?;
        let mut targets = vec![("mu".to_string(), t.mu), ("sigma".into(), t.sigma), ("eps".into(), t.eps)];
        let row = |parameter: String, truth: f64, estimate: f64, lower95: f64, upper95: f64| Row {
            replicate: i,
            sim_seed,
            chain_seed: if self.use_mle { 0 } else { chain_seed },
            parameter,
            truth,
            estimate,
            lower95,
            upper95,
        };
        let mut rows = Vec::new();
        if self.use_mle {
            let fit = mle_fit(&panel.data)?;
            for (name, truth) in targets {
                let w = match name.as_str() {
                    "mu" => fit.ci95.mu,
                    "sigma" => fit.ci95.sigma,
                    _ => fit.ci95.eps,
                };
                rows.push(row(name, truth, w.estimate, w.lower, w.upper));
            }
            for &k in &self.ks {
                let w = fit.return_level_ci(k)?;
                rows.push(row(format!("R^{k}"), gev.return_level(k)?, w.estimate, w.lower, w.upper));
            }
        } else {
            let spec = if self.groups >= 2 {
                targets.push(("tau2".into(), t.tau * t.tau));
                ModelSpec::random(panel.data, GROUP_TAG)?
            } else {
                ModelSpec::fixed(panel.data)?
            };
            let config = McmcConfig {
                seed: chain_seed,
                ..self.mcmc.clone()
            };
            let draws = run_chain(&spec, &config)?;
            let summary = summarize_draws(&draws)?;
            for (name, truth) in targets {
                let p = summary
                    .get(&name)
                    .ok_or_else(|| blockmax::Error::Summary(format!("no '{name}' in summary")))?;
                rows.push(row(name, truth, p.mean, p.lower95, p.upper95));
            }
            for &k in &self.ks {
                let rk = return_level_posterior(&draws, k, &Scope::Population)?;
                let p = blockmax::mcmc::ParameterSummary::of(format!("R^{k}"), &rk)?;
                rows.push(row(p.name, gev.return_level(k)?, p.mean, p.lower95, p.upper95));
            }
        }
        Ok(rows)
    }
}

pub fn replicate_study(a: ReplicateArgs) -> CliResult<()> {
    let mut s = Settings::new("replicate-study", a.common.config.as_deref())?;
    let replicates: usize = s.require("replicates", a.replicates, Some(10))?;
    if replicates == 0 {
        return Err(Failure::usage("--replicates must be at least 1"));
    }
    let method: String = s.require("method", a.method, Some("mcmc".into()))?;
    let use_mle = match method.as_str() {
        "mcmc" => false,
        "mle" => true,
        other => return Err(Failure::usage(format!("--method: expected mcmc or mle, got '{other}'"))),
    };
    let (truth, groups, per_group) = truth(&mut s, a.truth)?;
    let mcmc = mcmc_config(&mut s, a.mcmc)?;
    let ks = s.list("k", a.k)?;
    check_k(&ks)?;
    let dir = out_dir(&mut s, a.common.out)?;
    s.finish()?;

    let study = Study {
        truth,
        groups,
        per_group,
        seed: mcmc.seed,
        mcmc,
        use_mle,
        ks,
    };
    let results: Vec<blockmax::Result<Vec<Row>>> =
        (0..replicates).into_par_iter().map(|i| study.replicate(i)).collect();
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }

    let mut csv = String::from("replicate,sim_seed,chain_seed,parameter,truth,estimate,lower95,upper95,covered\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.replicate, r.sim_seed, r.chain_seed, r.parameter, r.truth, r.estimate, r.lower95, r.upper95,
            r.covered()
        ));
    }
    write(&dir.join("replicates.csv"), csv)?;

    let mut names: Vec<&str> = Vec::new();
    for r in &rows {
        if !names.contains(&r.parameter.as_str()) {
            names.push(&r.parameter);
        }
    }
    let mut text = format!("{replicates} replicates, method {method}\n{:<12} {:>8}\n", "parameter", "covered");
    for name in names {
        let hits = rows.iter().filter(|r| r.parameter == name && r.covered()).count();
        text.push_str(&format!("{name:<12} {:>8}\n", format!("{hits}/{replicates}")));
    }
    write(&dir.join("summary.txt"), &text)?;
    write(&dir.join("manifest.txt"), s.manifest())?;
    print!("{text}");
    Ok(())
}
