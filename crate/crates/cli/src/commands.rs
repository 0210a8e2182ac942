use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use freeshift::config::{LazyConfig, MeasureKind, MeasureSpec};
use freeshift::free_group::{GeneratorSet, Word};
use freeshift::network::Label;
use freeshift::oe2::Omega;
use freeshift::soe::{t_generators, ExplicitRunField, RunLabel, SoeOmega, Theta};
use freeshift::statcheck::{
    calibration_suite, chi_square_independence, collect, kappa_star_fit, length_law_fit, product_fit,
    EmpiricalTable, Independence, TestReport, ALPHA,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::{verdict, Common, Failure, Suite};

pub fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    let mut text = text.to_string();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Io(format!("{}: {e}", p.display()))),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Io(format!("stdout: {e}"))),
    }
}

fn emit_json(common: &Common, v: &serde_json::Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(v).expect("json values serialize");
    emit(common.out.as_deref(), &text)
}

pub fn sample(common: &Common, kind: MeasureKind) -> Result<u8, Failure> {
    let measure = common.measure(kind)?;
    let x = LazyConfig::new(common.seed, measure.clone())?;
    let gens = GeneratorSet::free2();
    let sites: Vec<_> = gens
        .ball(common.radius())
        .iter()
        .map(|g| json!({"site": gens.tokens(g), "value": Label::from(x.value_at(g))}))
        .collect();
    emit_json(
        common,
        &json!({"seed": common.seed, "measure": measure, "radius": common.radius, "sites": sites}),
    )?;
    Ok(0)
}

pub fn oe13_apply(common: &Common) -> Result<u8, Failure> {
    let measure = common.measure(MeasureKind::Pair)?;
    let om = Omega::new(LazyConfig::new(common.seed, measure.clone())?, common.budget);
    let gens = GeneratorSet::free2();
    let window = gens.ball(common.radius());
    let values = om.window(&window)?;
    let sites: Vec<_> = window
        .iter()
        .zip(&values)
        .map(|(g, v)| json!({"site": gens.tokens(g), "omega": [v.0, v.1], "project2": v.1}))
        .collect();
    emit_json(
        common,
        &json!({
            "seed": common.seed,
            "measure": measure,
            "radius": common.radius,
            "budget": common.budget,
            "sites": sites,
        }),
    )?;
    Ok(0)
}

/// The file format shared by `soe14 apply` and `soe14 invert`.
#[derive(Serialize, Deserialize)]
struct RunWindow {
    seed: u64,
    alphabet_size: u32,
    fradius: usize,
    budget: u64,
    /// Draws rejected before the sample landed in Y.
    rejections: u64,
    sites: Vec<RunSite>,
}

#[derive(Serialize, Deserialize)]
struct RunSite {
    site: Vec<String>,
    label: RunLabel,
}

pub fn y_sample(seed: u64, alphabet_size: u32) -> freeshift::Result<(LazyConfig, u64)> {
    LazyConfig::sample_in_y(seed, &MeasureSpec::uniform(MeasureKind::Pair, alphabet_size)?)
}

pub fn soe14_apply(common: &Common, fradius: usize) -> Result<u8, Failure> {
    let k = common.uniform_size()?;
    let (y, rejections) = y_sample(common.seed, k)?;
    let om = SoeOmega::new(&y, k, common.budget)?;
    let gens = t_generators(k);
    let window = gens.ball(fradius);
    let labels = om.window(&window)?;
    let file = RunWindow {
        seed: common.seed,
        alphabet_size: k,
        fradius,
        budget: common.budget,
        rejections,
        sites: window
            .iter()
            .zip(labels)
            .map(|(f, label)| RunSite {
                site: gens.tokens(f),
                label,
            })
            .collect(),
    };
    emit(
        common.out.as_deref(),
        &serde_json::to_string_pretty(&file).expect("run window serializes"),
    )?;
    Ok(0)
}

pub fn soe14_invert(common: &Common, input: &Path) -> Result<u8, Failure> {
    let text = std::fs::read_to_string(input).map_err(|e| Failure::Io(format!("{}: {e}", input.display())))?;
    let file: RunWindow =
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", input.display())))?;
    let t_gens = t_generators(file.alphabet_size);
    let mut map = HashMap::new();
    for s in file.sites {
        let f = t_gens.from_tokens(&s.site)?;
        map.insert(f, s.label);
    }
    let theta = Theta::new(ExplicitRunField(map), common.budget);
    let gens = GeneratorSet::free2();
    let window = gens.ball(common.radius());
    let values = theta.window(&window).map_err(|e| match e {
        freeshift::Error::Domain(m) => Failure::Other(format!("{m}; the input window is too small for --radius")),
        e => e.into(),
    })?;
    let sites: Vec<_> = window
        .iter()
        .zip(&values)
        .map(|(g, v)| json!({"site": gens.tokens(g), "value": [v.0, v.1]}))
        .collect();
    emit_json(
        common,
        &json!({"alphabet_size": file.alphabet_size, "radius": common.radius, "sites": sites}),
    )?;
    Ok(0)
}

/// Writes a report list as JSON and returns the exit status it implies.
pub fn finish(common: &Common, command: &str, trials: u64, reports: Vec<TestReport>) -> Result<u8, Failure> {
    let code = verdict(&reports);
    emit_json(
        common,
        &json!({
            "command": command,
            "seed": common.seed,
            "trials": trials,
            "budget": common.budget,
            "reports": reports,
        }),
    )?;
    Ok(code)
}

/// An inconclusive test (too sparse even after coarsening) is reported as
/// degraded rather than failed, with a p-value of 1.
fn independence_report<O: Ord + Clone>(test: &str, table: &EmpiricalTable<O>, block: &[usize]) -> TestReport {
    match chi_square_independence(table, block) {
        Independence::Tested { p_value, .. } => TestReport::from_table(test, table, p_value, ALPHA, p_value > ALPHA),
        Independence::Inconclusive => {
            let mut r = TestReport::from_table(test, table, 1.0, ALPHA, false);
            r.degraded = true;
            r
        }
    }
}

fn names(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

pub fn measure_test(common: &Common, suites: &[Suite], trials: u64) -> Result<u8, Failure> {
    let mut reports = Vec::new();
    for suite in suites {
        match suite {
            Suite::Calibration => reports.extend(calibration_suite(common.seed)),
            Suite::Oe13 => {
                let spec = common.measure(MeasureKind::Pair)?;
                let gens = GeneratorSet::free2();
                let window_names = ["e", "a", "b", "a·b", "a'"];
                let window = window_names
                    .iter()
                    .map(|s| gens.parse(s))
                    .collect::<freeshift::Result<Vec<Word>>>()?;
                let table = collect(
                    names(&window_names),
                    |s| Omega::new(LazyConfig::new(s, spec.clone())?, common.budget).project2(&window),
                    trials,
                    common.seed,
                )?;
                reports.push(product_fit("oe13_pushforward_fit", &table, &spec.law));
                // {e, a, a'} against {b, ab}
                reports.push(independence_report("oe13_pushforward_independence", &table, &[0, 1, 4]));
            }
            Suite::Soe14 => {
                let k = common.uniform_size()?;
                let gens = t_generators(k);
                let window_names = ["e", "s0", "s1", "s2"];
                let window = window_names
                    .iter()
                    .map(|s| gens.parse(s))
                    .collect::<freeshift::Result<Vec<Word>>>()?;
                let table = collect(
                    names(&window_names),
                    |s| SoeOmega::new(y_sample(s, k)?.0, k, common.budget)?.window(&window),
                    trials,
                    common.seed,
                )?;
                reports.push(kappa_star_fit("soe14_run_label_fit", &table, 0, k));
                let lengths: Vec<usize> = table
                    .counts
                    .iter()
                    .flat_map(|(key, c)| std::iter::repeat_n(key[0].entries().len(), *c as usize))
                    .collect();
                let fit = length_law_fit(&lengths, k);
                reports.push(TestReport::from_table(
                    "soe14_run_length_fit",
                    &table,
                    fit.statistic,
                    fit.threshold,
                    fit.pass,
                ));
                reports.push(independence_report("soe14_run_label_independence", &table, &[0, 1]));
            }
        }
    }
    finish(common, "measure-test", trials, reports)
}

#[derive(Deserialize)]
struct ReportFile {
    reports: Vec<TestReport>,
}

pub fn report(inputs: &[PathBuf], out: Option<&Path>) -> Result<u8, Failure> {
    let mut rows: Vec<(String, TestReport)> = Vec::new();
    for p in inputs {
        let text = std::fs::read_to_string(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?;
        let file: ReportFile =
            serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
        let source = p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
        rows.extend(file.reports.into_iter().map(|r| (source.clone(), r)));
    }

    let verdict_name = |r: &TestReport| match (r.pass, r.degraded) {
        (_, true) => "DEGRADED",
        (true, false) => "PASS",
        (false, false) => "FAIL",
    };
    let abort_rate = |r: &TestReport| {
        let attempted = r.trials + r.aborts;
        if attempted == 0 {
            0.0
        } else {
            r.aborts as f64 / attempted as f64
        }
    };

    let mut table = String::new();
    let _ = writeln!(
        table,
        "{:<24} {:<34} {:>8} {:>7} {:>10} {:>12} {:>10}  verdict",
        "source", "test", "trials", "aborts", "abort_rate", "statistic", "threshold"
    );
    for (src, r) in &rows {
        let _ = writeln!(
            table,
            "{:<24} {:<34} {:>8} {:>7} {:>10.2e} {:>12.4e} {:>10.2e}  {}",
            src,
            r.test,
            r.trials,
            r.aborts,
            abort_rate(r),
            r.statistic,
            r.threshold,
            verdict_name(r)
        );
    }
    emit(None, &table)?;

    if let Some(out) = out {
        let mut csv =
            String::from("source,test,trials,aborts,abort_rate,statistic,threshold,pass,degraded,seed_start,seed_end\n");
        for (src, r) in &rows {
            let _ = writeln!(
                csv,
                "{},{},{},{},{:.6e},{:.6e},{:.6e},{},{},{},{}",
                src,
                r.test,
                r.trials,
                r.aborts,
                abort_rate(r),
                r.statistic,
                r.threshold,
                r.pass,
                r.degraded,
                r.seed_range[0],
                r.seed_range[1]
            );
        }
        emit(Some(out), &csv)?;
    }
    let reports: Vec<TestReport> = rows.into_iter().map(|(_, r)| r).collect();
    Ok(verdict(&reports))
}
