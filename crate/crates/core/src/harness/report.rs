use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::SweepRow;

/// Mean and standard error of one configuration's runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub algo: String,
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "B")]
    pub budget: Option<f64>,
    pub epsilon: Option<f64>,
    pub n: usize,
    pub regret1_mean: Option<f64>,
    pub regret1_stderr: Option<f64>,
    pub regret2_mean: f64,
    pub regret2_stderr: f64,
    pub ratio_mean: Option<f64>,
    pub ratio_stderr: Option<f64>,
    pub tau_mean: f64,
}

/// Least-squares fit of `ln(mean metric) = slope ln T + intercept` across
/// horizons, for one algorithm, budget fraction and epsilon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub algo: String,
    pub budget_ratio: Option<f64>,
    pub epsilon: Option<f64>,
    pub metric: String,
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub groups: Vec<GroupStats>,
    pub slopes: Vec<SlopeFit>,
}

/// Sample mean and standard error (zero for a single value).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Slope and intercept of the least-squares line through `(ln x, ln y)`,
/// skipping non-positive points. `None` with fewer than two distinct `x`.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

fn same(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => x.to_bits() == y.to_bits(),
        (None, None) => true,
        _ => false,
    }
}

fn optional_stats(xs: Vec<f64>) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_stderr(&xs);
        (Some(m), Some(s))
    }
}

fn cmp_opt(a: Option<f64>, b: Option<f64>) -> std::cmp::Ordering {
    a.unwrap_or(f64::NEG_INFINITY)
        .total_cmp(&b.unwrap_or(f64::NEG_INFINITY))
}

pub fn build_report(rows: &[SweepRow]) -> Report {
    let mut keys: Vec<(String, usize, Option<f64>, Option<f64>)> = Vec::new();
    for r in rows {
        if !keys
            .iter()
            .any(|k| k.0 == r.algo && k.1 == r.horizon && same(k.2, r.budget) && same(k.3, r.epsilon))
        {
            keys.push((r.algo.clone(), r.horizon, r.budget, r.epsilon));
        }
    }
    let ratio_of = |b: Option<f64>, t: usize| b.map(|b| (b / t as f64 * 1e9).round() / 1e9);
    keys.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(cmp_opt(ratio_of(a.2, a.1), ratio_of(b.2, b.1)))
            .then(cmp_opt(a.3, b.3))
            .then(a.1.cmp(&b.1))
    });
    let groups: Vec<GroupStats> = keys
        .into_iter()
        .map(|(algo, horizon, budget, epsilon)| {
            let members: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| {
                    r.algo == algo && r.horizon == horizon && same(r.budget, budget) && same(r.epsilon, epsilon)
                })
                .collect();
            let (regret1_mean, regret1_stderr) = optional_stats(members.iter().filter_map(|r| r.regret1).collect());
            let (ratio_mean, ratio_stderr) = optional_stats(members.iter().filter_map(|r| r.ratio).collect());
            let (regret2_mean, regret2_stderr) = mean_stderr(&members.iter().map(|r| r.regret2).collect::<Vec<_>>());
            let tau_mean = members.iter().map(|r| r.tau as f64).sum::<f64>() / members.len() as f64;
            GroupStats {
                algo,
                horizon,
                budget,
                epsilon,
                n: members.len(),
                regret1_mean,
                regret1_stderr,
                regret2_mean,
                regret2_stderr,
                ratio_mean,
                ratio_stderr,
                tau_mean,
            }
        })
        .collect();

    let mut slopes = Vec::new();
    let mut i = 0;
    while i < groups.len() {
        let g = &groups[i];
        let ratio = ratio_of(g.budget, g.horizon);
        let mut j = i;
        while j < groups.len()
            && groups[j].algo == g.algo
            && same(ratio_of(groups[j].budget, groups[j].horizon), ratio)
            && same(groups[j].epsilon, g.epsilon)
        {
            j += 1;
        }
        let run = &groups[i..j];
        let ts: Vec<f64> = run.iter().map(|g| g.horizon as f64).collect();
        let series: [(&str, Vec<f64>); 2] = [
            (
                "regret1",
                run.iter().map(|g| g.regret1_mean.unwrap_or(f64::NAN)).collect(),
            ),
            ("regret2", run.iter().map(|g| g.regret2_mean).collect()),
        ];
        for (metric, ys) in series {
            if let Some((slope, intercept)) = fit_loglog(&ts, &ys) {
                slopes.push(SlopeFit {
                    algo: g.algo.clone(),
                    budget_ratio: ratio,
                    epsilon: g.epsilon,
                    metric: metric.to_string(),
                    slope,
                    intercept,
                    points: ts.iter().zip(&ys).filter(|(_, y)| **y > 0.0 && y.is_finite()).count(),
                });
            }
        }
        i = j;
    }
    Report { groups, slopes }
}

/// Writes `groups.csv`, `slopes.csv` and `report.json` into `dir`.
pub fn write_report(dir: &Path, report: &Report) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("groups.csv"))?;
    for g in &report.groups {
        w.serialize(g)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("slopes.csv"))?;
    for s in &report.slopes {
        w.serialize(s)?;
    }
    w.flush()?;
    let mut bytes = serde_json::to_vec_pretty(report)?;
    bytes.push(b'\n');
    fs::write(dir.join("report.json"), bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn row(t: usize, seed: u64, regret2: f64) -> SweepRow {
        SweepRow {
            algo: "feasibility".into(),
            horizon: t,
            seed,
            regret1: Some(0.0),
            regret2,
            ratio: None,
            tau: t,
            budget: None,
            epsilon: None,
            z: None,
            instance_hash: String::new(),
            config_hash: String::new(),
            wall_ms: 0.0,
        }
    }

    #[test]
    fn recovers_known_slope_from_noisy_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut rows = Vec::new();
        for &t in &[200usize, 800, 3200, 12800] {
            for seed in 0..50 {
                let noise = 1.0 + 0.2 * (rng.gen::<f64>() - 0.5);
                rows.push(row(t, seed, 3.0 * (t as f64).powf(-0.5) * noise));
            }
        }
        let report = build_report(&rows);
        assert_eq!(report.groups.len(), 4);
        let fit = report.slopes.iter().find(|s| s.metric == "regret2").unwrap();
        assert!((fit.slope + 0.5).abs() <= 0.02, "{}", fit.slope);
        assert_eq!(fit.points, 4);
        // Zero regret1 everywhere has no log-log fit.
        assert!(report.slopes.iter().all(|s| s.metric != "regret1"));
    }

    #[test]
    fn mean_and_stderr() {
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_stderr(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn exact_power_law() {
        let xs = [10.0, 100.0, 1000.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 2.0 * x.powf(-0.7)).collect();
        let (slope, intercept) = fit_loglog(&xs, &ys).unwrap();
        assert!((slope + 0.7).abs() < 1e-12);
        assert!((intercept - 2f64.ln()).abs() < 1e-12);
        assert!(fit_loglog(&[5.0], &[1.0]).is_none());
    }

    #[test]
    fn groups_split_by_budget_and_epsilon() {
        let mut rows = vec![row(100, 0, 0.1), row(100, 1, 0.3)];
        rows[1].epsilon = Some(0.2);
        rows.push(SweepRow {
            budget: Some(25.0),
            ..row(100, 2, 0.2)
        });
        let report = build_report(&rows);
        assert_eq!(report.groups.len(), 3);
        assert!(report.groups.iter().all(|g| g.n == 1));
        let dir = tempfile::tempdir().unwrap();
        write_report(dir.path(), &report).unwrap();
        for f in ["groups.csv", "slopes.csv", "report.json"] {
            assert!(dir.path().join(f).exists());
        }
    }
}
