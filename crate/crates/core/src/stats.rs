//! Welch's unequal-variance t-test and Holm-Bonferroni step-down correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function (Lanczos, g = 7), for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-12;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Two-tailed p-value of Student's t with `df` degrees of freedom.
pub fn student_t_two_tailed(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Welch's t-test with Welch-Satterthwaite degrees of freedom.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::param("each sample needs at least 2 values"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::param("samples must be finite"));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    if se2 == 0.0 {
        let p = if ma == mb { 1.0 } else { 0.0 };
        let t = if ma == mb {
            0.0
        } else {
            (ma - mb).signum() * f64::INFINITY
        };
        return Ok(WelchResult {
            t,
            df: na + nb - 2.0,
            p,
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(WelchResult {
        t,
        df,
        p: student_t_two_tailed(t, df),
    })
}

/// Holm-Bonferroni step-down decisions (`true` = reject), in input order.
pub fn holm_bonferroni(p_values: &[f64], alpha: f64) -> Result<Vec<bool>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p_values[i].total_cmp(&p_values[j]));
    let mut reject = vec![false; m];
    for (rank, &i) in order.iter().enumerate() {
        if p_values[i] <= alpha / (m - rank) as f64 {
            reject[i] = true;
        } else {
            // Once one is retained, every larger p is retained too.
            break;
        }
    }
    Ok(reject)
}

/// Holm-adjusted p-values (monotone, capped at 1), in input order.
pub fn holm_adjusted(p_values: &[f64]) -> Vec<f64> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p_values[i].total_cmp(&p_values[j]));
    let mut adj = vec![0.0; m];
    let mut running: f64 = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        running = running.max(((m - rank) as f64 * p_values[i]).min(1.0));
        adj[i] = running;
    }
    adj
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub name: String,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub a: String,
    pub b: String,
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub p_holm: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub alpha: f64,
    pub groups: Vec<GroupSummary>,
    pub pairwise: Vec<PairwiseTest>,
}

/// Group summaries plus all pairwise Welch tests with Holm decisions.
pub fn stat_report(groups: &[(String, Vec<f64>)], alpha: f64) -> Result<StatReport> {
    if groups.len() < 2 {
        return Err(Error::param("need >= 2 groups"));
    }
    let summaries = groups
        .iter()
        .map(|(name, v)| {
            if v.len() < 2 {
                return Err(Error::param(format!("group {name} needs >= 2 values")));
            }
            let (m, var) = mean_var(v);
            Ok(GroupSummary {
                name: name.clone(),
                n: v.len(),
                mean: m,
                std: var.sqrt(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut tests = Vec::new();
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            let r = welch_t_test(&groups[i].1, &groups[j].1)?;
            tests.push((i, j, r));
        }
    }
    let ps: Vec<f64> = tests.iter().map(|t| t.2.p).collect();
    let decisions = holm_bonferroni(&ps, alpha)?;
    let adjusted = holm_adjusted(&ps);
    let pairwise = tests
        .into_iter()
        .enumerate()
        .map(|(k, (i, j, r))| PairwiseTest {
            a: groups[i].0.clone(),
            b: groups[j].0.clone(),
            t: r.t,
            df: r.df,
            p: r.p,
            p_holm: adjusted[k],
            reject: decisions[k],
        })
        .collect();
    Ok(StatReport {
        alpha,
        groups: summaries,
        pairwise,
    })
}

pub fn mean_std(x: &[f64]) -> (f64, f64) {
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    if x.len() == 1 {
        return (x[0], 0.0);
    }
    let (m, v) = mean_var(x);
    (m, v.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-13);
        assert!(ln_gamma(2.0).abs() < 1e-13);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
        assert!((ln_gamma(10.0) - (362_880.0f64).ln()).abs() < 1e-11);
    }

    #[test]
    fn identical_samples_give_p_one() {
        let a = [1.0, 2.0, 3.0];
        let r = welch_t_test(&a, &a).unwrap();
        assert!((r.p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_edge_cases() {
        assert_eq!(welch_t_test(&[2.0, 2.0], &[2.0, 2.0]).unwrap().p, 1.0);
        assert_eq!(welch_t_test(&[2.0, 2.0], &[3.0, 3.0]).unwrap().p, 0.0);
        assert!(welch_t_test(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn holm_cases() {
        assert_eq!(holm_bonferroni(&[0.586, 0.697, 0.951], 0.05).unwrap(), vec![false; 3]);
        assert_eq!(holm_bonferroni(&[0.001, 0.5], 0.05).unwrap(), vec![true, false]);
        assert!(holm_bonferroni(&[], 0.05).unwrap().is_empty());
        assert!(holm_bonferroni(&[0.1], 1.0).is_err());
        // Step-down stops at the first retained hypothesis.
        assert_eq!(
            holm_bonferroni(&[0.04, 0.01, 0.03], 0.05).unwrap(),
            vec![false, true, false]
        );
    }

    #[test]
    fn holm_adjusted_is_monotone() {
        let adj = holm_adjusted(&[0.04, 0.01, 0.03]);
        for (got, want) in adj.iter().zip([0.06, 0.03, 0.06]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn report_needs_two_groups() {
        assert!(stat_report(&[("a".into(), vec![1.0, 2.0])], 0.05).is_err());
    }
}
