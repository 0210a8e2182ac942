use clap::ValueEnum;
use freeshift::config::{LazyConfig, MeasureKind, PairField};
use freeshift::free_group::{GeneratorSet, Word, A, B};
use freeshift::network::{ball, is_actionable};
use freeshift::oe2::{self, omega13_inverse_window, phi_network, Omega};
use freeshift::soe::{self, build_nphi, t_generators, KappaStarField, RunField, SoeOmega, Theta};
use freeshift::statcheck::{collect, kappa_star_fit, TestReport};
use freeshift::Result;
use rayon::prelude::*;

use crate::commands::{finish, y_sample};
use crate::{Common, Failure};

const DEGREE_CAP: usize = 64;
/// Exact checks skip aborted seeds; a check that still has not finished
/// its trials after this many attempts per trial is reported as degraded.
const ATTEMPTS_PER_TRIAL: u64 = 10;

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
pub enum Oe13Check {
    Involution,
    /// first coordinate at g·b equals second coordinate at g
    Lemma35,
    Actionable,
    Orbit,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
pub enum Soe14Check {
    Tree,
    Actionable,
    Roundtrip,
    Orbit,
    Kappa,
}

macro_rules! display_as_value {
    ($t:ty) => {
        impl std::fmt::Display for $t {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(self.to_possible_value().expect("no skipped variants").get_name())
            }
        }
        impl $t {
            pub fn all() -> Vec<$t> {
                <$t>::value_variants().to_vec()
            }
        }
    };
}
display_as_value!(Oe13Check);
display_as_value!(Soe14Check);

/// Runs `check` on seeds `seed, seed + 1, …` until `trials` of them finish
/// without running out of scan budget. Any other error counts as a failure.
fn exact(test: &str, window: &str, seed: u64, trials: u64, check: impl Fn(u64) -> Result<bool> + Sync) -> TestReport {
    let (mut done, mut aborts, mut failed) = (0u64, 0u64, 0u64);
    let mut next = 0u64;
    let limit = trials * ATTEMPTS_PER_TRIAL;
    while done < trials && next < limit {
        let chunk = (trials - done).min(limit - next);
        let results: Vec<(u64, Result<bool>)> = (next..next + chunk)
            .into_par_iter()
            .map(|i| (i, check(seed.wrapping_add(i))))
            .collect();
        next += chunk;
        for (i, r) in results {
            match r {
                Ok(true) => done += 1,
                Ok(false) => {
                    done += 1;
                    failed += 1;
                }
                Err(e) if e.is_abort() => aborts += 1,
                Err(e) => {
                    eprintln!("{test}: seed {}: {e}", seed.wrapping_add(i));
                    done += 1;
                    failed += 1;
                }
            }
        }
    }
    TestReport {
        test: test.into(),
        window: vec![window.into()],
        trials: done,
        aborts,
        statistic: failed as f64,
        threshold: 0.0,
        pass: failed == 0 && done == trials,
        degraded: done < trials,
        seed_range: [seed, seed.wrapping_add(next)],
    }
}

fn moves() -> [Word; 4] {
    [Word::power(A, 1), Word::power(A, -1), Word::power(B, 1), Word::power(B, -1)]
}

pub fn oe13(common: &Common, checks: &[Oe13Check], trials: u64, witness_cap: usize) -> std::result::Result<u8, Failure> {
    let measure = common.measure(MeasureKind::Pair)?;
    let radius = common.radius();
    let budget = common.budget;
    let window = GeneratorSet::free2().ball(radius);
    let desc = format!("ball({radius})");
    let config = |s: u64| LazyConfig::new(s, measure.clone());
    let mut reports = Vec::new();
    for check in checks {
        let name = format!("oe13_{check}");
        let r = match check {
            Oe13Check::Involution => exact(&name, &desc, common.seed, trials, |s| {
                let x = config(s)?;
                let back = omega13_inverse_window(&x, &window, budget)?;
                for (g, v) in window.iter().zip(back) {
                    if x.pair_at(g)? != v {
                        return Ok(false);
                    }
                }
                Ok(true)
            }),
            Oe13Check::Lemma35 => exact(&name, &desc, common.seed, trials, |s| {
                let om = Omega::new(config(s)?, budget);
                for g in &window {
                    if om.value(&g.times_power(B, 1))?.0 != om.value(g)?.1 {
                        return Ok(false);
                    }
                }
                Ok(true)
            }),
            Oe13Check::Actionable => exact(&name, &desc, common.seed, trials, |s| {
                is_actionable(&phi_network(config(s)?, budget), &[A, B], radius, DEGREE_CAP)
            }),
            Oe13Check::Orbit => exact(&name, &desc, common.seed, trials, |s| {
                let x = config(s)?;
                for h in moves() {
                    if !oe2::orbit_witness(&x, &h, radius, witness_cap, budget)?.unique {
                        return Ok(false);
                    }
                }
                Ok(true)
            }),
        };
        reports.push(r);
    }
    finish(common, "oe13 verify", trials, reports)
}

pub fn soe14(
    common: &Common,
    checks: &[Soe14Check],
    trials: u64,
    fradius: usize,
    witness_cap: usize,
) -> std::result::Result<u8, Failure> {
    let k = common.uniform_size()?;
    let radius = common.radius();
    let budget = common.budget;
    let f2_window = GeneratorSet::free2().ball(radius);
    let ft_window = t_generators(k).ball(fradius);
    let labels: Vec<u32> = (0..=k).collect();
    let mut reports = Vec::new();
    for check in checks {
        let name = format!("soe14_{check}");
        let r = match check {
            Soe14Check::Tree => exact(&name, &format!("ball({radius})"), common.seed, trials, |s| {
                let net = build_nphi(y_sample(s, k)?.0, k, budget)?;
                Ok(!ball(&net, radius, DEGREE_CAP)?.has_cycle())
            }),
            Soe14Check::Actionable => exact(&name, &format!("ball({radius})"), common.seed, trials, |s| {
                let net = build_nphi(y_sample(s, k)?.0, k, budget)?;
                is_actionable(&net, &labels, radius, DEGREE_CAP)
            }),
            Soe14Check::Roundtrip => exact(
                &name,
                &format!("ball({radius}) in F2, ball({fradius}) in F_T"),
                common.seed,
                trials,
                |s| {
                    let y = y_sample(s, k)?.0;
                    let theta = Theta::new(SoeOmega::new(&y, k, budget)?, budget);
                    for g in &f2_window {
                        if theta.value(g)? != y.pair_at(g)? {
                            return Ok(false);
                        }
                    }
                    let z = KappaStarField::new(s, k, budget);
                    let back = SoeOmega::new(Theta::new(&z, budget), k, budget)?;
                    for f in &ft_window {
                        if back.value(f)? != z.label_at(f)? {
                            return Ok(false);
                        }
                    }
                    Ok(true)
                },
            ),
            Soe14Check::Orbit => exact(&name, &format!("ball({fradius}) in F_T"), common.seed, trials, |s| {
                let y = y_sample(s, k)?.0;
                for h in moves() {
                    if y.pair_at(&h.inverse())?.0 != freeshift::config::DISTINGUISHED {
                        continue;
                    }
                    if !soe::orbit_witness(&y, k, &h, fradius, witness_cap, budget)?.unique {
                        return Ok(false);
                    }
                }
                Ok(true)
            }),
            Soe14Check::Kappa => {
                let table = collect(
                    vec!["e".into()],
                    |s| Ok(vec![SoeOmega::new(y_sample(s, k)?.0, k, budget)?.value(&Word::identity())?]),
                    trials,
                    common.seed,
                )?;
                kappa_star_fit(&name, &table, 0, k)
            }
        };
        reports.push(r);
    }
    finish(common, "soe14 verify", trials, reports)
}
