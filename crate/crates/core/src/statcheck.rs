//! Empirical tables over per-seed samples, and the tests used to certify
//! that pushed-forward measures are the claimed product laws: total
//! variation, chi-square independence with coarsening, goodness of fit for
//! run lengths, and a Kolmogorov-Smirnov check of p-value uniformity.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::Result;
use crate::free_group::Word;
use crate::soe::{kappa_star_pmf, run_length_pmf, KappaStarField, RunField, RunLabel};

/// Abort rate above which a report is flagged as degraded.
pub const ABORT_LIMIT: f64 = 1e-3;

/// Significance level of every chi-square and KS test.
pub const ALPHA: f64 = 1e-3;

/// Counts of outcome tuples over a window, from consecutive seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalTable<O: Ord> {
    pub window: Vec<String>,
    pub counts: BTreeMap<Vec<O>, u64>,
    /// Seeds whose sample completed.
    pub trials: u64,
    /// Seeds dropped because a scan ran out of budget.
    pub aborts: u64,
    pub seed_base: u64,
}

impl<O: Ord + Clone> EmpiricalTable<O> {
    pub fn new(window: Vec<String>, seed_base: u64) -> Self {
        EmpiricalTable {
            window,
            counts: BTreeMap::new(),
            trials: 0,
            aborts: 0,
            seed_base,
        }
    }

    pub fn attempted(&self) -> u64 {
        self.trials + self.aborts
    }

    pub fn abort_rate(&self) -> f64 {
        if self.attempted() == 0 {
            0.0
        } else {
            self.aborts as f64 / self.attempted() as f64
        }
    }

    pub fn degraded(&self) -> bool {
        self.abort_rate() > ABORT_LIMIT
    }

    pub fn record(&mut self, outcome: Vec<O>) {
        *self.counts.entry(outcome).or_insert(0) += 1;
        self.trials += 1;
    }

    /// Adds another table over the same window.
    pub fn merge(&mut self, other: &EmpiricalTable<O>) {
        for (k, c) in &other.counts {
            *self.counts.entry(k.clone()).or_insert(0) += c;
        }
        self.trials += other.trials;
        self.aborts += other.aborts;
        self.seed_base = self.seed_base.min(other.seed_base);
    }

    /// Counts of the sub-tuple at `sites`.
    pub fn marginal(&self, sites: &[usize]) -> BTreeMap<Vec<O>, u64> {
        let mut out = BTreeMap::new();
        for (k, c) in &self.counts {
            let key: Vec<O> = sites.iter().map(|&i| k[i].clone()).collect();
            *out.entry(key).or_insert(0) += c;
        }
        out
    }
}

impl<O: Ord + Clone + Serialize> EmpiricalTable<O> {
    /// CSV with one row per observed outcome: window values as JSON, count,
    /// frequency.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let mut header: Vec<String> = self.window.iter().map(|w| csv_field(w)).collect();
        header.push("count".into());
        header.push("frequency".into());
        let _ = writeln!(s, "{}", header.join(","));
        for (k, c) in &self.counts {
            let mut row: Vec<String> = k
                .iter()
                .map(|o| csv_field(&serde_json::to_string(o).expect("outcome serializes")))
                .collect();
            row.push(c.to_string());
            row.push(format!("{:.8}", *c as f64 / self.trials.max(1) as f64));
            let _ = writeln!(s, "{}", row.join(","));
        }
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Evaluates `sampler` on seeds `seed_base .. seed_base + trials` in
/// parallel. Aborted seeds are counted and excluded; other errors propagate.
pub fn collect<O, S>(window: Vec<String>, sampler: S, trials: u64, seed_base: u64) -> Result<EmpiricalTable<O>>
where
    O: Ord + Clone + Send,
    S: Fn(u64) -> Result<Vec<O>> + Sync,
{
    let results: Vec<Result<Vec<O>>> = (0..trials)
        .into_par_iter()
        .map(|i| sampler(seed_base.wrapping_add(i)))
        .collect();
    let mut table = EmpiricalTable::new(window, seed_base);
    for r in results {
        match r {
            Ok(o) => table.record(o),
            Err(e) if e.is_abort() => table.aborts += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(table)
}

/// `½ Σ |empirical − reference|`, where outcomes never observed contribute
/// their full reference mass.
pub fn tv_distance<O: Ord>(table: &EmpiricalTable<O>, reference: impl Fn(&[O]) -> f64) -> f64 {
    let n = table.trials as f64;
    let mut seen_mass = 0.0;
    let mut diff = 0.0;
    for (k, c) in &table.counts {
        let p = reference(k);
        seen_mass += p;
        diff += (*c as f64 / n - p).abs();
    }
    0.5 * (diff + (1.0 - seen_mass).max(0.0))
}

/// Probability of a tuple of i.i.d. symbols `1..=law.len()` under `law`.
pub fn product_law(law: &[f64]) -> impl Fn(&[u32]) -> f64 + '_ {
    move |xs| {
        xs.iter()
            .map(|&x| law.get((x as usize).wrapping_sub(1)).copied().unwrap_or(0.0))
            .product()
    }
}

/// Probability of a tuple of independent run labels under the single-site
/// law of `Ωy` for a uniform alphabet.
pub fn kappa_star_product(alphabet_size: u32) -> impl Fn(&[RunLabel]) -> f64 {
    move |xs| xs.iter().map(|r| kappa_star_pmf(alphabet_size, r)).product()
}

/// Outcome of a chi-square independence test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "lowercase")]
pub enum Independence {
    Tested { statistic: f64, df: u64, p_value: f64 },
    /// Too few counts for any 2×2 table with expected counts of 5.
    Inconclusive,
}

impl Independence {
    pub fn p_value(&self) -> Option<f64> {
        match self {
            Independence::Tested { p_value, .. } => Some(*p_value),
            Independence::Inconclusive => None,
        }
    }
}

/// Chi-square test of independence between the outcomes at `block` and at
/// the remaining window sites. Sparse rows and columns are merged, smallest
/// first, until every expected count reaches 5.
pub fn chi_square_independence<O: Ord + Clone>(table: &EmpiricalTable<O>, block: &[usize]) -> Independence {
    let rest: Vec<usize> = (0..table.window.len()).filter(|i| !block.contains(i)).collect();
    // Each side is indexed by its own sorted keys. Coarsening breaks ties by
    // index, so an index that leaked the other side's values (say, order of
    // first appearance in the joint table) would plant dependence.
    let index = |sites: &[usize]| -> BTreeMap<Vec<O>, usize> {
        table.marginal(sites).into_keys().enumerate().map(|(i, k)| (k, i)).collect()
    };
    let rows = index(block);
    let cols = index(&rest);
    let mut grid = vec![vec![0u64; cols.len()]; rows.len()];
    for (k, c) in &table.counts {
        let r: Vec<O> = block.iter().map(|&i| k[i].clone()).collect();
        let col: Vec<O> = rest.iter().map(|&i| k[i].clone()).collect();
        grid[rows[&r]][cols[&col]] += c;
    }
    independence_on_grid(grid)
}

fn independence_on_grid(mut grid: Vec<Vec<u64>>) -> Independence {
    loop {
        let row_tot: Vec<u64> = grid.iter().map(|r| r.iter().sum()).collect();
        let ncols = grid.first().map_or(0, |r| r.len());
        let col_tot: Vec<u64> = (0..ncols).map(|j| grid.iter().map(|r| r[j]).sum()).collect();
        let n: u64 = row_tot.iter().sum();
        if grid.len() < 2 || ncols < 2 || n == 0 {
            return Independence::Inconclusive;
        }
        let (ri, rmin) = argmin(&row_tot);
        let (ci, cmin) = argmin(&col_tot);
        if rmin as f64 * cmin as f64 / n as f64 >= 5.0 {
            let mut stat = 0.0;
            for (i, row) in grid.iter().enumerate() {
                for (j, &o) in row.iter().enumerate() {
                    let e = row_tot[i] as f64 * col_tot[j] as f64 / n as f64;
                    stat += (o as f64 - e).powi(2) / e;
                }
            }
            let df = ((grid.len() - 1) * (ncols - 1)) as u64;
            let p_value = ChiSquared::new(df as f64).expect("positive df").sf(stat);
            return Independence::Tested { statistic: stat, df, p_value };
        }
        // merge along the dimension with the sparser marginal, if it can shrink
        let merge_rows = if grid.len() > 2 && ncols > 2 {
            rmin * (ncols as u64) <= cmin * (grid.len() as u64)
        } else {
            grid.len() > 2
        };
        if merge_rows {
            let row = grid.remove(ri);
            let mut rt = row_tot.clone();
            rt.remove(ri);
            let (into, _) = argmin(&rt);
            for (j, v) in row.into_iter().enumerate() {
                grid[into][j] += v;
            }
        } else if ncols > 2 {
            let mut ct = col_tot.clone();
            ct.remove(ci);
            let (into, _) = argmin(&ct);
            for row in grid.iter_mut() {
                let v = row.remove(ci);
                row[into] += v;
            }
        } else {
            return Independence::Inconclusive;
        }
    }
}

fn argmin(xs: &[u64]) -> (usize, u64) {
    xs.iter()
        .copied()
        .enumerate()
        .min_by_key(|&(i, v)| (v, i))
        .expect("nonempty")
}

/// Chi-square goodness of fit of observed counts to bucket probabilities
/// (which must sum to one). Returns `(statistic, df, p)`.
pub fn chi_square_gof(counts: &[u64], probs: &[f64]) -> (f64, u64, f64) {
    let n: u64 = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&o, &p)| {
            let e = p * n as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let df = counts.len().saturating_sub(1).max(1) as u64;
    (stat, df, ChiSquared::new(df as f64).expect("positive df").sf(stat))
}

/// Asymptotic Kolmogorov-Smirnov p-value for samples claimed uniform on [0, 1].
pub fn ks_uniform(samples: &[f64]) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| ((i as f64 + 1.0) / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max);
    let sq = n.sqrt();
    kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d)
}

fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One line of a verification report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub test: String,
    pub window: Vec<String>,
    pub trials: u64,
    pub aborts: u64,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    /// Abort rate exceeded the limit; `pass` is not trustworthy.
    pub degraded: bool,
    pub seed_range: [u64; 2],
}

impl TestReport {
    pub fn from_table<O: Ord + Clone>(
        test: &str,
        table: &EmpiricalTable<O>,
        statistic: f64,
        threshold: f64,
        pass: bool,
    ) -> Self {
        TestReport {
            test: test.into(),
            window: table.window.clone(),
            trials: table.trials,
            aborts: table.aborts,
            statistic,
            threshold,
            pass,
            degraded: table.degraded(),
            seed_range: [table.seed_base, table.seed_base + table.attempted()],
        }
    }
}

/// Chi-square fit of run lengths (in entries) to the geometric law
/// `(1/K)(1 − 1/K)^{m−1}`. Buckets run while the expected count is at
/// least 5; the rest forms one tail bucket.
pub fn length_law_fit(samples: &[usize], alphabet_size: u32) -> TestReport {
    let n = samples.len() as f64;
    let mut probs = Vec::new();
    let mut covered = 0.0;
    let mut m = 1;
    loop {
        let p = run_length_pmf(alphabet_size, m);
        if (1.0 - covered - p) * n < 5.0 || p * n < 5.0 {
            break;
        }
        probs.push(p);
        covered += p;
        m += 1;
    }
    probs.push(1.0 - covered);
    let mut counts = vec![0u64; probs.len()];
    for &s in samples {
        let b = s.max(1).min(probs.len()) - 1;
        counts[b] += 1;
    }
    let (stat, _, p) = chi_square_gof(&counts, &probs);
    TestReport {
        test: "length_law".into(),
        window: vec!["e".into()],
        trials: samples.len() as u64,
        aborts: 0,
        statistic: p,
        threshold: ALPHA,
        pass: p > ALPHA && stat.is_finite(),
        degraded: false,
        seed_range: [0, 0],
    }
}

/// Chi-square fit of whole window tuples to the product of `law`, over
/// every cell of `law.len()^window` (unobserved cells count as zero).
pub fn product_fit(test: &str, table: &EmpiricalTable<u32>, law: &[f64]) -> TestReport {
    let sites = table.window.len();
    let k = law.len();
    let cells = k.pow(sites as u32);
    let mut counts = Vec::with_capacity(cells);
    let mut probs = Vec::with_capacity(cells);
    for c in 0..cells {
        let mut key = Vec::with_capacity(sites);
        let mut rest = c;
        for _ in 0..sites {
            key.push((rest % k) as u32 + 1);
            rest /= k;
        }
        key.reverse();
        probs.push(key.iter().map(|&s| law[s as usize - 1]).product());
        counts.push(table.counts.get(&key).copied().unwrap_or(0));
    }
    let (stat, _, p) = chi_square_gof(&counts, &probs);
    let min_expected = probs.iter().cloned().fold(f64::INFINITY, f64::min) * table.trials as f64;
    let mut r = TestReport::from_table(test, table, p, ALPHA, p > ALPHA && stat.is_finite());
    if min_expected < 5.0 {
        r.pass = false;
    }
    r
}

/// Chi-square fit of run labels to the single-site law for uniform `κ` on
/// `alphabet_size` symbols. Labels of each length are equiprobable, so a
/// length contributes one cell per label while those cells expect at least
/// 5 counts; everything longer is one tail bucket.
pub fn kappa_star_fit(test: &str, table: &EmpiricalTable<RunLabel>, site: usize, alphabet_size: u32) -> TestReport {
    let k = alphabet_size as u64;
    let n = table.trials as f64;
    let marginal = table.marginal(&[site]);
    let mut counts = Vec::new();
    let mut probs = Vec::new();
    let mut covered = 0.0;
    let mut entries = 1usize;
    loop {
        let per_label = k.pow(2 * entries as u32) as f64;
        let labels = k * ((k - 1) * k).pow(entries as u32 - 1);
        let p = 1.0 / per_label;
        if p * n < 5.0 || labels > 1 << 16 {
            break;
        }
        let start = counts.len();
        counts.resize(start + labels as usize, 0);
        probs.extend(std::iter::repeat(p).take(labels as usize));
        covered += p * labels as f64;
        for (key, c) in &marginal {
            let r = &key[0];
            if r.entries().len() == entries {
                counts[start + label_index(r, k) as usize] += c;
            }
        }
        entries += 1;
    }
    let tail: u64 = marginal
        .iter()
        .filter(|(key, _)| key[0].entries().len() >= entries)
        .map(|(_, c)| c)
        .sum();
    counts.push(tail);
    probs.push((1.0 - covered).max(0.0));
    if probs.last() == Some(&0.0) {
        counts.pop();
        probs.pop();
    }
    let (stat, _, p) = chi_square_gof(&counts, &probs);
    TestReport::from_table(test, table, p, ALPHA, counts.len() > 1 && p > ALPHA && stat.is_finite())
}

/// Position of a run among runs of the same length: the second component
/// of the first entry, then for each later entry its first component (never
/// the distinguished symbol) and second component, in mixed radix.
fn label_index(r: &RunLabel, k: u64) -> u64 {
    let e = r.entries();
    let mut idx = (e[0].1 - 1) as u64;
    for &(i, j) in &e[1..] {
        idx = idx * (k - 1) + (i - 2) as u64;
        idx = idx * k + (j - 1) as u64;
    }
    idx
}

/// Results of the same independence test over consecutive batches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub batches: u64,
    pub passed: u64,
    pub inconclusive: u64,
    pub min_p: f64,
    pub p_values: Vec<f64>,
}

/// Splits a table list into independence verdicts at level [`ALPHA`].
pub fn batch_independence<O: Ord + Clone>(tables: &[EmpiricalTable<O>], block: &[usize]) -> BatchSummary {
    let mut s = BatchSummary {
        batches: tables.len() as u64,
        passed: 0,
        inconclusive: 0,
        min_p: 1.0,
        p_values: Vec::new(),
    };
    for t in tables {
        match chi_square_independence(t, block).p_value() {
            Some(p) => {
                s.p_values.push(p);
                s.min_p = s.min_p.min(p);
                if p > ALPHA {
                    s.passed += 1;
                }
            }
            None => s.inconclusive += 1,
        }
    }
    s
}

/// Collects `batches` tables of `batch_size` consecutive seeds each.
pub fn collect_batches<O, S>(
    window: Vec<String>,
    sampler: S,
    batches: u64,
    batch_size: u64,
    seed_base: u64,
) -> Result<Vec<EmpiricalTable<O>>>
where
    O: Ord + Clone + Send,
    S: Fn(u64) -> Result<Vec<O>> + Sync,
{
    (0..batches)
        .map(|b| collect(window.clone(), &sampler, batch_size, seed_base + b * batch_size))
        .collect()
}

/// Pools batch tables into one.
pub fn pool<O: Ord + Clone>(tables: &[EmpiricalTable<O>]) -> EmpiricalTable<O> {
    let mut out = EmpiricalTable::new(
        tables.first().map(|t| t.window.clone()).unwrap_or_default(),
        tables.first().map_or(0, |t| t.seed_base),
    );
    for t in tables {
        out.merge(t);
    }
    out
}

fn uniform_symbols(rng: &mut ChaCha8Rng, k: u32, n: usize) -> Vec<u32> {
    (0..n).map(|_| rng.gen_range(1..=k)).collect()
}

/// Runs every test on data drawn directly from its reference law, where it
/// must pass, and on data with planted structure, where it must fail. Each
/// report's `pass` says whether the test behaved as required.
pub fn calibration_suite(seed: u64) -> Vec<TestReport> {
    let mut reports = Vec::new();
    let window: Vec<String> = ["e", "a", "b", "a·b", "a'"].iter().map(|s| s.to_string()).collect();
    let law = [0.5, 0.5];

    // product data, 100 batches of 2000, and the same with a copied site
    let draw = |planted: bool| -> Vec<EmpiricalTable<u32>> {
        (0..100u64)
            .into_par_iter()
            .map(|b| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (b << 1 | planted as u64));
                let mut t = EmpiricalTable::new(window.clone(), b * 2000);
                for _ in 0..2000 {
                    let mut xs = uniform_symbols(&mut rng, 2, 5);
                    if planted {
                        xs[2] = xs[0];
                    }
                    t.record(xs);
                }
                t
            })
            .collect()
    };
    for planted in [false, true] {
        let batches = draw(planted);
        let pooled = pool(&batches);
        let tv = tv_distance(&pooled, product_law(&law));
        let tag = if planted { "planted" } else { "product" };
        reports.push(TestReport::from_table(
            &format!("calibration.tv.{tag}"),
            &pooled,
            tv,
            0.02,
            (tv <= 0.02) != planted,
        ));
        let fit = product_fit(&format!("calibration.product_fit.{tag}"), &pooled, &law);
        reports.push(TestReport {
            pass: fit.pass != planted,
            ..fit
        });
        let s = batch_independence(&batches, &[0, 1, 4]);
        let ok = if planted {
            s.p_values.iter().all(|&p| p < 1e-6) && s.inconclusive == 0
        } else {
            s.passed >= 99
        };
        let mut r = TestReport::from_table(
            &format!("calibration.chi2.{tag}"),
            &pooled,
            if planted { s.min_p } else { s.passed as f64 },
            if planted { 1e-6 } else { 99.0 },
            ok,
        );
        r.window = window.clone();
        reports.push(r);
    }

    // p-values of 200 product tables should be uniform
    let ps: Vec<f64> = (0..200u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1_000_003 * (rep + 1)));
            let mut t = EmpiricalTable::new(window.clone(), rep);
            for _ in 0..2000 {
                t.record(uniform_symbols(&mut rng, 2, 5));
            }
            chi_square_independence(&t, &[0, 1, 4]).p_value().unwrap_or(1.0)
        })
        .collect();
    let ks = ks_uniform(&ps);
    reports.push(TestReport {
        test: "calibration.chi2.uniform_p".into(),
        window: window.clone(),
        trials: 200,
        aborts: 0,
        statistic: ks,
        threshold: ALPHA,
        pass: ks > ALPHA,
        degraded: false,
        seed_range: [0, 200],
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let skewed: Vec<f64> = (0..200).map(|_| rng.gen::<f64>().powi(2)).collect();
    let ks_bad = ks_uniform(&skewed);
    reports.push(TestReport {
        test: "calibration.ks.planted".into(),
        window: vec![],
        trials: 200,
        aborts: 0,
        statistic: ks_bad,
        threshold: ALPHA,
        pass: ks_bad <= ALPHA,
        degraded: false,
        seed_range: [0, 200],
    });

    // geometric run lengths, and constant ones
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1e9);
    let geometric: Vec<usize> = (0..100_000)
        .map(|_| {
            let mut m = 1;
            while rng.gen_range(1..=2u32) != 1 {
                m += 1;
            }
            m
        })
        .collect();
    let mut r = length_law_fit(&geometric, 2);
    r.test = "calibration.length_law.geometric".into();
    reports.push(r);
    let mut r = length_law_fit(&vec![2; 100_000], 2);
    r.test = "calibration.length_law.planted".into();
    r.pass = !r.pass;
    reports.push(r);

    // run labels drawn straight from the single-site law, and truncated ones
    let e = Word::identity();
    for planted in [false, true] {
        let mut t = EmpiricalTable::new(vec!["e".into()], 0);
        for s in 0..100_000u64 {
            let z = KappaStarField::new(seed.wrapping_mul(31).wrapping_add(s), 2, 1_000_000);
            let mut run = z.label_at(&e).expect("short runs");
            if planted {
                run = RunLabel::new(vec![run.entries()[0]]).expect("nonempty");
            }
            t.record(vec![run]);
        }
        let tv = tv_distance(&t, kappa_star_product(2));
        let tag = if planted { "planted" } else { "direct" };
        reports.push(TestReport::from_table(
            &format!("calibration.kappa_tv.{tag}"),
            &t,
            tv,
            0.02,
            (tv <= 0.02) != planted,
        ));
        let fit = kappa_star_fit(&format!("calibration.kappa_fit.{tag}"), &t, 0, 2);
        reports.push(TestReport {
            pass: fit.pass != planted,
            ..fit
        });
    }

    // sparse, heavy-tailed outcomes: four i.i.d. run labels per trial
    let run_window: Vec<String> = ["e", "s0", "s1", "s2"].iter().map(|s| s.to_string()).collect();
    let sites: Vec<Word> = (0..4).map(|g| Word::power(g, 1)).collect();
    for planted in [false, true] {
        let batches: Vec<EmpiricalTable<RunLabel>> = (0..100u64)
            .into_par_iter()
            .map(|b| {
                let mut t = EmpiricalTable::new(run_window.clone(), b * 1000);
                for s in b * 1000..(b + 1) * 1000 {
                    let z = KappaStarField::new(seed ^ s.wrapping_mul(0x9e37_79b9), 2, 1_000_000);
                    let mut xs: Vec<RunLabel> = sites.iter().map(|f| z.label_at(f).expect("short runs")).collect();
                    if planted {
                        xs[2] = xs[0].clone();
                    }
                    t.record(xs);
                }
                t
            })
            .collect();
        let s = batch_independence(&batches, &[0, 1]);
        let tag = if planted { "planted" } else { "direct" };
        let ok = if planted {
            s.p_values.iter().all(|&p| p < 1e-6) && s.inconclusive == 0
        } else {
            s.passed >= 99
        };
        reports.push(TestReport::from_table(
            &format!("calibration.chi2_runs.{tag}"),
            &pool(&batches),
            if planted { s.min_p } else { s.passed as f64 },
            if planted { 1e-6 } else { 99.0 },
            ok,
        ));
    }
    reports
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn table(rows: &[(Vec<u32>, u64)]) -> EmpiricalTable<u32> {
        let mut t = EmpiricalTable::new(vec!["x".into(), "y".into()], 0);
        for (k, c) in rows {
            for _ in 0..*c {
                t.record(k.clone());
            }
        }
        t
    }

    #[test]
    fn collect_basics() {
        let t = collect(vec!["e".into()], |s| Ok(vec![s % 3]), 1, 7).unwrap();
        assert_eq!(t.trials, 1);
        assert_eq!(t.counts.get(&vec![1]), Some(&1));
        let sampler = |s: u64| -> Result<Vec<u64>> {
            if s % 10 == 0 {
                Err(Error::ScanBudgetExceeded {
                    site: Word::identity(),
                    direction: "+a",
                    budget: 1,
                })
            } else {
                Ok(vec![s % 4])
            }
        };
        let a = collect(vec!["e".into()], sampler, 1000, 0).unwrap();
        let b = collect(vec!["e".into()], sampler, 1000, 0).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.trials, a.aborts), (900, 100));
        assert!(a.degraded());
        let fatal = collect(vec!["e".into()], |_| -> Result<Vec<u8>> { Err(Error::Domain("x".into())) }, 3, 0);
        assert!(fatal.is_err());
    }

    #[test]
    fn tv_examples() {
        let exact = table(&[(vec![1, 1], 1), (vec![1, 2], 1), (vec![2, 1], 1), (vec![2, 2], 1)]);
        assert!(tv_distance(&exact, product_law(&[0.5, 0.5])).abs() < 1e-15);
        let point = table(&[(vec![1, 1], 10)]);
        assert!((tv_distance(&point, product_law(&[0.5, 0.5])) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn perfect_dependence_is_detected() {
        let t = table(&[(vec![1, 1], 500), (vec![2, 2], 500)]);
        let p = chi_square_independence(&t, &[0]).p_value().unwrap();
        assert!(p < 1e-6);
    }

    #[test]
    fn chi_square_matches_hand_computation() {
        // 2×2 table [[30, 10], [20, 40]]: expected [[20, 20], [30, 30]]
        let t = table(&[(vec![1, 1], 30), (vec![1, 2], 10), (vec![2, 1], 20), (vec![2, 2], 40)]);
        match chi_square_independence(&t, &[0]) {
            Independence::Tested { statistic, df, p_value } => {
                let hand = 100.0 / 20.0 + 100.0 / 20.0 + 100.0 / 30.0 + 100.0 / 30.0;
                assert!((statistic - hand).abs() < 1e-12);
                assert_eq!(df, 1);
                // survival of chi-square(1) at s is erfc(sqrt(s/2))
                assert!((p_value - 2.0 * (1.0 - normal_cdf((hand).sqrt()))).abs() < 1e-9);
            }
            Independence::Inconclusive => panic!("enough counts"),
        }
    }

    fn normal_cdf(x: f64) -> f64 {
        use statrs::distribution::Normal;
        Normal::new(0.0, 1.0).unwrap().cdf(x)
    }

    #[test]
    fn sparse_tables_coarsen_or_give_up() {
        let tiny = table(&[(vec![1, 1], 2), (vec![2, 2], 1)]);
        assert_eq!(chi_square_independence(&tiny, &[0]), Independence::Inconclusive);
        // many rare rows merge into an aggregate that can be tested
        let mut rows: Vec<(Vec<u32>, u64)> = (3..40).map(|i| (vec![i, 1 + i % 2], 1)).collect();
        rows.push((vec![1, 1], 200));
        rows.push((vec![1, 2], 200));
        rows.push((vec![2, 1], 200));
        rows.push((vec![2, 2], 200));
        assert!(chi_square_independence(&table(&rows), &[0]).p_value().is_some());
    }

    #[test]
    fn ks_examples() {
        let even: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_uniform(&even) > 0.99);
        let lumped = vec![0.1; 100];
        assert!(ks_uniform(&lumped) < 1e-6);
        // reference value: Q(1.36) is about 0.049
        assert!((kolmogorov_sf(1.36) - 0.0494).abs() < 1e-3);
    }

    #[test]
    fn length_law_examples() {
        let planted = length_law_fit(&vec![3; 10_000], 2);
        assert!(!planted.pass);
        // exact expected proportions pass
        let mut exact = Vec::new();
        for m in 1..=12usize {
            let c = (100_000.0 * run_length_pmf(2, m)).round() as usize;
            exact.extend(std::iter::repeat_n(m, c));
        }
        assert!(length_law_fit(&exact, 2).pass);
    }

    #[test]
    fn product_fit_examples() {
        let exact = table(&[(vec![1, 1], 250), (vec![1, 2], 250), (vec![2, 1], 250), (vec![2, 2], 250)]);
        let r = product_fit("p", &exact, &[0.5, 0.5]);
        assert!(r.pass && (r.statistic - 1.0).abs() < 1e-12);
        let tilted = table(&[(vec![1, 1], 400), (vec![1, 2], 100), (vec![2, 1], 100), (vec![2, 2], 400)]);
        assert!(!product_fit("p", &tilted, &[0.5, 0.5]).pass);
        // too few trials for the cell count
        assert!(!product_fit("p", &table(&[(vec![1, 1], 3)]), &[0.5, 0.5]).pass);
    }

    #[test]
    fn label_index_is_a_bijection_per_length() {
        let k = 3u64;
        let mut seen = std::collections::BTreeSet::new();
        for j0 in 1..=3 {
            for i1 in 2..=3 {
                for j1 in 1..=3 {
                    let r = RunLabel::new(vec![(1, j0), (i1, j1)]).unwrap();
                    assert!(seen.insert(label_index(&r, k)));
                }
            }
        }
        assert_eq!(seen.into_iter().collect::<Vec<_>>(), (0..18).collect::<Vec<_>>());
    }

    #[test]
    fn kappa_star_fit_examples() {
        let direct = collect(
            vec!["e".into()],
            |s| Ok(vec![KappaStarField::new(s, 2, 1000).label_at(&Word::identity())?]),
            20_000,
            0,
        )
        .unwrap();
        assert!(kappa_star_fit("k", &direct, 0, 2).pass);
        let mut short = EmpiricalTable::new(vec!["e".into()], 0);
        for j in 0..20_000u32 {
            short.record(vec![RunLabel::new(vec![(1, 1 + j % 2)]).unwrap()]);
        }
        assert!(!kappa_star_fit("k", &short, 0, 2).pass);
    }

    #[test]
    fn calibration_behaves() {
        for r in calibration_suite(1) {
            assert!(r.pass, "{}: statistic {}", r.test, r.statistic);
        }
    }

    #[test]
    fn csv_lists_outcomes() {
        let t = table(&[(vec![1, 2], 3), (vec![2, 2], 1)]);
        let csv = t.to_csv();
        assert_eq!(csv.lines().next().unwrap(), "x,y,count,frequency");
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.contains("1,2,3,0.75000000"));
    }
}
