use std::fs;
use std::io::Write;
use std::path::Path;

use crate::algorithms::RunTrace;
use crate::error::Result;

use super::{RunOutcome, RunSummary};

/// Column order of `trace.csv`.
pub const TRACE_COLUMNS_DOC: &str = "t, idx, r, v_1..v_d, theta_1..theta_d, phi_1..phi_d, cum_budget_1..cum_budget_d";

fn header(d: usize) -> Vec<String> {
    let mut h = vec!["t".to_string(), "idx".to_string(), "r".to_string()];
    for prefix in ["v", "theta", "phi", "cum_budget"] {
        h.extend((1..=d).map(|j| format!("{prefix}_{j}")));
    }
    h
}

/// One row per committed step. Missing rewards and `phi` for algorithms
/// without one are left empty. Floats use the shortest representation that
/// round-trips.
pub fn write_trace_csv<W: Write>(trace: &RunTrace, d: usize, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header(d))?;
    let num = |x: f64| x.to_string();
    for s in &trace.steps {
        let mut rec = vec![s.t.to_string(), s.idx.to_string(), s.r.map(num).unwrap_or_default()];
        rec.extend(s.v.iter().map(|x| num(*x)));
        rec.extend(s.theta.iter().map(|x| num(*x)));
        match &s.phi {
            Some(phi) => rec.extend(phi.iter().map(|x| num(*x))),
            None => rec.extend(std::iter::repeat_n(String::new(), d)),
        }
        rec.extend(s.cum_budget.iter().map(|x| num(*x)));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_summary(path: &Path, summary: &RunSummary) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(summary)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

/// Writes `trace.csv` and `summary.json` into `dir`, creating it if needed.
pub fn write_run_outputs(dir: &Path, outcome: &RunOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    let file = fs::File::create(dir.join("trace.csv"))?;
    write_trace_csv(&outcome.trace, outcome.summary.d, std::io::BufWriter::new(file))?;
    write_summary(&dir.join("summary.json"), &outcome.summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::{run, Algorithm, RunConfig};
    use crate::instances::{generate, rp_stream, GenParams, InstanceKind};

    #[test]
    fn trace_has_fixed_columns() {
        let inst = generate(&GenParams {
            kind: InstanceKind::Concave,
            d: 2,
            horizon: 5,
            ..GenParams::default()
        })
        .unwrap();
        let trace = run(
            &inst,
            &rp_stream(&inst, 1),
            &RunConfig::new(Algorithm::GeneralCp).with_z(1.0),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&trace, 2, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,idx,r,v_1,v_2,theta_1,theta_2,phi_1,phi_2,cum_budget_1,cum_budget_2"
        );
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 5);
        for row in rows {
            assert_eq!(row.split(',').count(), 11);
        }
    }

    #[test]
    fn feasibility_trace_leaves_phi_empty() {
        let inst = generate(&GenParams::default()).unwrap();
        let trace = run(&inst, &rp_stream(&inst, 1), &RunConfig::new(Algorithm::Feasibility)).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&trace, 2, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first = text.lines().nth(1).unwrap();
        let fields: Vec<&str> = first.split(',').collect();
        assert_eq!(fields[2], "");
        assert_eq!(fields[7], "");
        assert_eq!(fields[8], "");
    }
}
