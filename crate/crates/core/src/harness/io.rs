use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::metrics::Metrics;
use super::sim::SimLog;
use crate::error::{Error, Result};

pub const LOG_HEADER: &str = "t,px,py,pz,vx,vy,vz,qw,qx,qy,qz,wx,wy,wz,fz,taux,tauy,tauz";

/// Nine significant digits.
fn num(out: &mut String, v: f64) {
    write!(out, "{v:.8e}").unwrap();
}

fn row(out: &mut String, vals: &[f64]) {
    for (i, v) in vals.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        num(out, *v);
    }
}

pub fn log_csv(log: &SimLog) -> String {
    let mut out = String::with_capacity(log.inner.len() * 300);
    out.push_str(LOG_HEADER);
    out.push('\n');
    for r in &log.inner {
        let s = &r.state;
        let q = s.q.to_wxyz();
        row(
            &mut out,
            &[
                r.t, s.p.x, s.p.y, s.p.z, s.v.x, s.v.y, s.v.z, q[0], q[1], q[2], q[3], s.omega.x, s.omega.y,
                s.omega.z, r.f_z, r.tau.x, r.tau.y, r.tau.z,
            ],
        );
        out.push('\n');
    }
    out
}

/// `t,h1..hn,phi1..phin,sx,sy,sz,status,solve_ms` for `n` barriers.
pub fn outer_header(n_barriers: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n_barriers).map(|i| format!("h{i}")));
    cols.extend((1..=n_barriers).map(|i| format!("phi{i}")));
    cols.extend(["sx", "sy", "sz", "status", "solve_ms"].map(String::from));
    cols.join(",")
}

pub fn outer_csv(log: &SimLog, n_barriers: usize) -> String {
    let mut out = outer_header(n_barriers);
    out.push('\n');
    for r in &log.outer {
        let mut vals = vec![r.t];
        vals.extend(&r.h);
        vals.extend(&r.phi);
        vals.extend([r.s.x, r.s.y, r.s.z]);
        row(&mut out, &vals);
        write!(out, ",{},", r.status.as_str()).unwrap();
        num(&mut out, r.solve_time * 1e3);
        out.push('\n');
    }
    out
}

pub fn metrics_json(m: &Metrics) -> String {
    serde_json::to_string_pretty(m).expect("metrics serialize")
}

/// Writes `log.csv`, `outer.csv` and `metrics.json` into `dir`.
pub fn write_run(dir: &Path, log: &SimLog, n_barriers: usize, m: &Metrics) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let put = |name: &str, text: String| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(path, e))
    };
    put("log.csv", log_csv(log))?;
    put("outer.csv", outer_csv(log, n_barriers))?;
    put("metrics.json", metrics_json(m))
}
