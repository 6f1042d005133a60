//! CSV and JSON writers. Floats are written with 17 significant digits so
//! files round-trip exactly.

use std::fs;
use std::path::Path;

use flowbandit_core::agents::Agent;
use flowbandit_core::harness::{RegretSeries, RunRecord};
use serde_json::{json, Value};

use crate::config::OutputOptions;
use crate::error::{Error, Result};
use crate::runner::{Experiment, SweepResult};

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_owned(), source })
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|source| Error::Io { path: path.to_owned(), source })?;
    Ok(csv::Writer::from_writer(file))
}

/// `agent,run,batch,cumulative_regret`; runs from 0, batches from 1.
pub fn write_regret(path: &Path, series: &RegretSeries) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["agent", "run", "batch", "cumulative_regret"])?;
    for (a, kind) in series.agents.iter().enumerate() {
        for (run, curve) in series.per_run[a].iter().enumerate() {
            for (b, v) in curve.iter().enumerate() {
                w.write_record([kind.name(), &run.to_string(), &(b + 1).to_string(), &fmt_f64(*v)])?;
            }
        }
    }
    w.flush().map_err(|source| Error::Io { path: path.to_owned(), source })
}

/// `agent,batch,mean_cumulative_regret,stderr`.
pub fn write_summary(path: &Path, series: &RegretSeries) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["agent", "batch", "mean_cumulative_regret", "stderr"])?;
    for (a, kind) in series.agents.iter().enumerate() {
        for b in 0..series.batches() {
            w.write_record([
                kind.name(),
                &(b + 1).to_string(),
                &fmt_f64(series.mean[a][b]),
                &fmt_f64(series.stderr[a][b]),
            ])?;
        }
    }
    w.flush().map_err(|source| Error::Io { path: path.to_owned(), source })
}

/// `page,term,raw_weight,multiplier` for one run; pages from 1.
pub fn write_ground_truth(path: &Path, record: &RunRecord) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["page", "term", "raw_weight", "multiplier"])?;
    for row in record.ground_truth.weight_rows() {
        w.write_record([&(row.page + 1).to_string(), &row.term, &fmt_f64(row.raw), &fmt_f64(row.multiplier)])?;
    }
    w.flush().map_err(|source| Error::Io { path: path.to_owned(), source })
}

/// `run,context,layout,expected_reward`; context and layout are 1-based.
pub fn write_oracle(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["run", "context", "layout", "expected_reward"])?;
    for r in records {
        for (c, (layout, value)) in r.oracle.iter().enumerate() {
            let layout: Vec<String> = layout.iter().map(|a| (a + 1).to_string()).collect();
            w.write_record([&r.run.to_string(), &(c + 1).to_string(), &layout.join("-"), &fmt_f64(*value)])?;
        }
    }
    w.flush().map_err(|source| Error::Io { path: path.to_owned(), source })
}

/// Final learner state of every agent in one run.
pub fn state_json(record: &RunRecord) -> Value {
    let agents: Vec<Value> = record
        .agents
        .iter()
        .map(|a| match &a.agent {
            Agent::Bandit(b) => {
                let pages: Vec<Value> = b
                    .forms()
                    .iter()
                    .zip(b.posteriors())
                    .map(|(form, post)| {
                        let columns: Vec<String> = (0..form.column_count()).map(|c| form.column_name(c)).collect();
                        json!({
                            "page": form.page() + 1,
                            "formula": form.terms().to_string(),
                            "beta": post.beta(),
                            "columns": columns,
                            "mean": post.mean(),
                            "variance": post.variance(),
                        })
                    })
                    .collect();
                json!({ "agent": a.kind.name(), "pages": pages })
            }
            Agent::Q(q) => json!({
                "agent": a.kind.name(),
                "config": q.config(),
                "table": q.table(),
            }),
        })
        .collect();
    json!({ "run": record.run, "agents": agents })
}

/// `regret.csv`, `summary.csv` and the optional dumps under `dir`.
pub fn write_experiment(dir: &Path, exp: &Experiment, opts: OutputOptions) -> Result<()> {
    create_dir(dir)?;
    write_regret(&dir.join("regret.csv"), &exp.series)?;
    write_summary(&dir.join("summary.csv"), &exp.series)?;
    if opts.ground_truth {
        let gt = dir.join("ground_truth");
        create_dir(&gt)?;
        for r in &exp.records {
            write_ground_truth(&gt.join(format!("run_{}.csv", r.run)), r)?;
        }
        write_oracle(&gt.join("oracle.csv"), &exp.records)?;
    }
    if opts.state {
        let st = dir.join("state");
        create_dir(&st)?;
        for r in &exp.records {
            let path = st.join(format!("run_{}.json", r.run));
            let text = serde_json::to_string_pretty(&state_json(r))?;
            fs::write(&path, text + "\n").map_err(|source| Error::Io { path, source })?;
        }
    }
    Ok(())
}

/// `agent,<axis>,mean_final_cumulative_regret,stderr`.
pub fn write_plot(path: &Path, sweep: &SweepResult) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["agent", sweep.axis.name(), "mean_final_cumulative_regret", "stderr"])?;
    let Some((_, first)) = sweep.points.first() else {
        return w.flush().map_err(|source| Error::Io { path: path.to_owned(), source });
    };
    for kind in &first.series.agents {
        for (point, exp) in &sweep.points {
            let (m, s) = exp.series.final_regret(*kind).expect("every point runs the same agents");
            w.write_record([kind.name(), &point.label(), &fmt_f64(m), &fmt_f64(s)])?;
        }
    }
    w.flush().map_err(|source| Error::Io { path: path.to_owned(), source })
}

/// Per-point directories `<axis>_<value>/` plus `plot_<axis>.csv`.
pub fn write_sweep(dir: &Path, sweep: &SweepResult, opts: OutputOptions) -> Result<()> {
    create_dir(dir)?;
    for (point, exp) in &sweep.points {
        write_experiment(&dir.join(format!("{}_{}", sweep.axis, point.label())), exp, opts)?;
    }
    write_plot(&dir.join(format!("plot_{}.csv", sweep.axis)), sweep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        for x in [0.1, 1.0 / 3.0, 1e-300, 12345.678, 0.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }
}
