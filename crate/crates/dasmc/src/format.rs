//! Text formats for traces, populations and observation files.
//!
//! Floats are written with Rust's shortest round-trip formatting, so parsing
//! a written value gives back the same bits (`inf` included).
//!
//! Trace (`trace.csv`):
//!
//! ```text
//! # dasmc trace v1
//! # config_sha256=<hex>
//! # algorithm=<label> model=<name> n_particles=<N>
//! iteration,eps1,eps2,cumulative_cost,n_stage1_pass,n_stage2_accept,n_unique,ess
//! 0,inf,inf,1000,0,0,100,5000
//! ...
//! # status=<running|finished|budget_exhausted|stalled>
//! ```
//!
//! The status footer is absent while a run is still writing rows.
//!
//! Population (`population.txt`): header comments carrying the iteration,
//! tolerances and the cost meter, then one tab-separated line per particle
//! with fields `id weight d1 d2 theta x1 x2`. Vector fields are
//! comma-separated; an empty vector is written as `-`. Continuation states
//! are not stored.

use std::io::{self, Write};

use dasmc_core::models::ising::SpinGrid;
use dasmc_core::models::lv::N_STATS;
use dasmc_core::particle::{CostMeter, Particle, Population, RunStatus, RunTrace, Stage, TraceRow};

pub const TRACE_MAGIC: &str = "# dasmc trace v1";
pub const POPULATION_MAGIC: &str = "# dasmc population v1";
pub const TRACE_COLUMNS: &str = "iteration,eps1,eps2,cumulative_cost,n_stage1_pass,n_stage2_accept,n_unique,ess";

/// Parse failure with the offending line (1-based, 0 for whole-file issues).
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}: {reason}")]
pub struct FormatError {
    pub line: usize,
    pub reason: String,
}

fn bad(line: usize, reason: impl Into<String>) -> FormatError {
    FormatError {
        line,
        reason: reason.into(),
    }
}

fn parse_num<T: std::str::FromStr>(field: &str, line: usize, what: &str) -> Result<T, FormatError> {
    field
        .trim()
        .parse()
        .map_err(|_| bad(line, format!("bad {what} `{field}`")))
}

/// Lines that are neither blank nor `#` comments, numbered from 1.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Identifies the run a trace belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceHeader {
    pub config_sha256: String,
    pub algorithm: String,
    pub model: String,
    pub n_particles: usize,
}

pub fn write_trace_header(w: &mut impl Write, header: &TraceHeader) -> io::Result<()> {
    writeln!(w, "{TRACE_MAGIC}")?;
    writeln!(w, "# config_sha256={}", header.config_sha256)?;
    writeln!(
        w,
        "# algorithm={} model={} n_particles={}",
        header.algorithm, header.model, header.n_particles
    )?;
    writeln!(w, "{TRACE_COLUMNS}")
}

pub fn write_trace_row(w: &mut impl Write, r: &TraceRow) -> io::Result<()> {
    writeln!(
        w,
        "{},{},{},{},{},{},{},{}",
        r.t, r.eps1, r.eps2, r.cumulative_cost, r.n_stage1_pass, r.n_stage2_accept, r.n_unique, r.ess
    )
}

pub fn write_trace_footer(w: &mut impl Write, status: RunStatus) -> io::Result<()> {
    writeln!(w, "# status={}", status.label())
}

pub fn write_trace(w: &mut impl Write, header: &TraceHeader, trace: &RunTrace) -> io::Result<()> {
    write_trace_header(w, header)?;
    for row in &trace.rows {
        write_trace_row(w, row)?;
    }
    write_trace_footer(w, trace.status)
}

fn header_fields(line: &str) -> impl Iterator<Item = (&str, &str)> {
    line.trim_start_matches('#').split_whitespace().filter_map(|kv| kv.split_once('='))
}

pub fn read_trace(text: &str) -> Result<(TraceHeader, RunTrace), FormatError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, TRACE_MAGIC)) => {}
        _ => return Err(bad(1, "not a dasmc trace")),
    }
    let mut header = TraceHeader {
        config_sha256: String::new(),
        algorithm: String::new(),
        model: String::new(),
        n_particles: 0,
    };
    let mut rows = Vec::new();
    let mut status = RunStatus::Running;
    let mut seen_columns = false;
    for (no, line) in lines {
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            for (k, v) in header_fields(comment) {
                match k {
                    "config_sha256" => header.config_sha256 = v.to_string(),
                    "algorithm" => header.algorithm = v.to_string(),
                    "model" => header.model = v.to_string(),
                    "n_particles" => header.n_particles = parse_num(v, no, "n_particles")?,
                    "status" => {
                        status = RunStatus::from_label(v).ok_or_else(|| bad(no, format!("unknown status `{v}`")))?
                    }
                    _ => {}
                }
            }
            continue;
        }
        if !seen_columns {
            if line != TRACE_COLUMNS {
                return Err(bad(no, "unexpected column header"));
            }
            seen_columns = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(bad(no, format!("expected 8 fields, found {}", f.len())));
        }
        rows.push(TraceRow {
            t: parse_num(f[0], no, "iteration")?,
            eps1: parse_num(f[1], no, "eps1")?,
            eps2: parse_num(f[2], no, "eps2")?,
            cumulative_cost: parse_num(f[3], no, "cumulative_cost")?,
            n_stage1_pass: parse_num(f[4], no, "n_stage1_pass")?,
            n_stage2_accept: parse_num(f[5], no, "n_stage2_accept")?,
            n_unique: parse_num(f[6], no, "n_unique")?,
            ess: parse_num(f[7], no, "ess")?,
        });
    }
    if !seen_columns {
        return Err(bad(0, "missing column header"));
    }
    let trace = RunTrace {
        n_particles: header.n_particles,
        rows,
        status,
    };
    Ok((header, trace))
}

fn join(v: &[f64]) -> String {
    if v.is_empty() {
        return "-".to_string();
    }
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn split(field: &str, line: usize, what: &str) -> Result<Vec<f64>, FormatError> {
    if field == "-" {
        return Ok(Vec::new());
    }
    field.split(',').map(|x| parse_num(x, line, what)).collect()
}

pub fn write_population<S>(w: &mut impl Write, pop: &Population<S>, cost: &CostMeter) -> io::Result<()> {
    writeln!(w, "{POPULATION_MAGIC}")?;
    writeln!(w, "# t={} eps1={} eps2={} n={}", pop.t, pop.eps1, pop.eps2, pop.len())?;
    write!(w, "# cost")?;
    for stage in Stage::ALL {
        write!(w, " {}={}", stage.label(), cost.stage(stage))?;
    }
    writeln!(w)?;
    writeln!(w, "# id\tweight\td1\td2\ttheta\tx1\tx2")?;
    for p in &pop.particles {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            p.id,
            p.weight,
            p.d1,
            p.d2,
            join(&p.theta),
            join(&p.x1_summary),
            join(&p.x2_summary)
        )?;
    }
    Ok(())
}

/// Reads a population written by [`write_population`]. Continuation states
/// come back as `None`.
pub fn read_population<S>(text: &str) -> Result<(Population<S>, CostMeter), FormatError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, POPULATION_MAGIC)) => {}
        _ => return Err(bad(1, "not a dasmc population")),
    }
    let mut pop = Population {
        particles: Vec::new(),
        eps1: f64::INFINITY,
        eps2: f64::INFINITY,
        t: 0,
    };
    let mut expected = None;
    let mut cost = CostMeter::new();
    for (no, line) in lines {
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let is_cost = comment.trim_start().starts_with("cost");
            for (k, v) in header_fields(comment) {
                if is_cost {
                    let stage = Stage::from_label(k).ok_or_else(|| bad(no, format!("unknown stage `{k}`")))?;
                    cost.add(stage, parse_num(v, no, "cost")?);
                    continue;
                }
                match k {
                    "t" => pop.t = parse_num(v, no, "t")?,
                    "eps1" => pop.eps1 = parse_num(v, no, "eps1")?,
                    "eps2" => pop.eps2 = parse_num(v, no, "eps2")?,
                    "n" => expected = Some(parse_num::<usize>(v, no, "n")?),
                    _ => {}
                }
            }
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 7 {
            return Err(bad(no, format!("expected 7 fields, found {}", f.len())));
        }
        pop.particles.push(Particle {
            id: parse_num(f[0], no, "id")?,
            weight: parse_num(f[1], no, "weight")?,
            d1: parse_num(f[2], no, "d1")?,
            d2: parse_num(f[3], no, "d2")?,
            theta: split(f[4], no, "theta")?,
            x1_summary: split(f[5], no, "x1")?,
            x2_summary: split(f[6], no, "x2")?,
            x1_state: None,
        });
    }
    if let Some(n) = expected {
        if n != pop.len() {
            return Err(bad(0, format!("header says {n} particles, found {}", pop.len())));
        }
    }
    Ok((pop, cost))
}

/// Observation times and both series, one `time X Y` row per time.
pub fn write_lv_observations(w: &mut impl Write, times: &[f64], x: &[f64], y: &[f64]) -> io::Result<()> {
    writeln!(w, "# time X Y")?;
    for ((t, a), b) in times.iter().zip(x).zip(y) {
        writeln!(w, "{t} {a} {b}")?;
    }
    Ok(())
}

/// Columns `(time, X, Y)` of a predator-prey observation file.
pub fn read_lv_observations(text: &str) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), FormatError> {
    let (mut t, mut x, mut y) = (Vec::new(), Vec::new(), Vec::new());
    for (no, line) in data_lines(text) {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(bad(no, format!("expected `time X Y`, found {} fields", f.len())));
        }
        t.push(parse_num(f[0], no, "time")?);
        x.push(parse_num(f[1], no, "X")?);
        y.push(parse_num(f[2], no, "Y")?);
    }
    Ok((t, x, y))
}

/// One grid row per line, spins as `1` / `-1`.
pub fn write_spin_grid(w: &mut impl Write, grid: &SpinGrid) -> io::Result<()> {
    for row in grid.spins().chunks(grid.side()) {
        let line: Vec<String> = row.iter().map(|s| s.to_string()).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn read_spin_grid(text: &str) -> Result<SpinGrid, FormatError> {
    let mut spins = Vec::new();
    let mut side = None;
    let mut rows = 0;
    for (no, line) in data_lines(text) {
        let mut count = 0;
        for tok in line.split_whitespace() {
            spins.push(match tok {
                "1" | "+1" => 1,
                "-1" => -1,
                other => return Err(bad(no, format!("spin must be 1 or -1, found `{other}`"))),
            });
            count += 1;
        }
        match side {
            None => side = Some(count),
            Some(s) if s != count => return Err(bad(no, format!("row has {count} spins, expected {s}"))),
            _ => {}
        }
        rows += 1;
    }
    let side = side.ok_or_else(|| bad(0, "empty grid"))?;
    if rows != side {
        return Err(bad(0, format!("grid has {rows} rows of {side} spins; it must be square")));
    }
    SpinGrid::from_spins(side, spins).map_err(|e| bad(0, e.to_string()))
}

/// Normalization scales, one per line.
pub fn write_norm(w: &mut impl Write, norm: &[f64; N_STATS]) -> io::Result<()> {
    writeln!(w, "# per-statistic pilot standard deviations")?;
    for v in norm {
        writeln!(w, "{v}")?;
    }
    Ok(())
}

pub fn read_norm(text: &str) -> Result<[f64; N_STATS], FormatError> {
    let values: Vec<f64> = data_lines(text)
        .map(|(no, l)| parse_num(l, no, "scale"))
        .collect::<Result<_, _>>()?;
    values
        .try_into()
        .map_err(|v: Vec<f64>| bad(0, format!("expected {N_STATS} values, found {}", v.len())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn header() -> TraceHeader {
        TraceHeader {
            config_sha256: "ab".repeat(32),
            algorithm: "da_abc_smc".into(),
            model: "ising".into(),
            n_particles: 10,
        }
    }

    fn any_f64() -> impl Strategy<Value = f64> {
        prop_oneof![
            any::<f64>().prop_filter("not nan", |x| !x.is_nan()),
            Just(f64::INFINITY),
            Just(-0.0),
            Just(5e-324),
        ]
    }

    fn any_row() -> impl Strategy<Value = TraceRow> {
        (0usize..1000, any_f64(), any_f64(), any::<u64>(), 0usize..10, 0usize..10, 0usize..10, any_f64()).prop_map(
            |(t, eps1, eps2, cumulative_cost, n_stage1_pass, n_stage2_accept, n_unique, ess)| TraceRow {
                t,
                eps1,
                eps2,
                cumulative_cost,
                n_stage1_pass,
                n_stage2_accept,
                n_unique,
                ess,
            },
        )
    }

    fn any_particle() -> impl Strategy<Value = Particle<()>> {
        (
            any::<u64>(),
            any_f64(),
            any_f64(),
            any_f64(),
            prop::collection::vec(any_f64(), 0..4),
            prop::collection::vec(any_f64(), 0..4),
            prop::collection::vec(any_f64(), 0..4),
        )
            .prop_map(|(id, weight, d1, d2, theta, x1_summary, x2_summary)| Particle {
                id,
                theta,
                x1_summary,
                x2_summary,
                x1_state: None,
                d1,
                d2,
                weight,
            })
    }

    fn bits(v: &[f64]) -> Vec<u64> {
        v.iter().map(|x| x.to_bits()).collect()
    }

    proptest! {
        #[test]
        fn trace_round_trips(rows in prop::collection::vec(any_row(), 0..20), done in any::<bool>()) {
            let trace = RunTrace {
                n_particles: 10,
                rows,
                status: if done { RunStatus::Stalled } else { RunStatus::Running },
            };
            let mut buf = Vec::new();
            write_trace(&mut buf, &header(), &trace).unwrap();
            let (h, back) = read_trace(std::str::from_utf8(&buf).unwrap()).unwrap();
            prop_assert_eq!(h, header());
            prop_assert_eq!(back.rows.len(), trace.rows.len());
            for (a, b) in back.rows.iter().zip(&trace.rows) {
                prop_assert_eq!(a.eps1.to_bits(), b.eps1.to_bits());
                prop_assert_eq!(a.eps2.to_bits(), b.eps2.to_bits());
                prop_assert_eq!(a.ess.to_bits(), b.ess.to_bits());
                prop_assert_eq!((a.t, a.cumulative_cost, a.n_stage1_pass, a.n_stage2_accept, a.n_unique),
                    (b.t, b.cumulative_cost, b.n_stage1_pass, b.n_stage2_accept, b.n_unique));
            }
            prop_assert_eq!(back.status, trace.status);
        }

        #[test]
        fn population_round_trips(
            particles in prop::collection::vec(any_particle(), 0..20),
            eps2 in any_f64(),
            t in 0usize..100,
            costs in prop::array::uniform3(any::<u32>()),
        ) {
            let pop = Population { particles, eps1: f64::INFINITY, eps2, t };
            let mut cost = CostMeter::new();
            for (s, c) in Stage::ALL.into_iter().zip(costs) {
                cost.add(s, c as u64);
            }
            let mut buf = Vec::new();
            write_population(&mut buf, &pop, &cost).unwrap();
            let (back, back_cost) = read_population::<()>(std::str::from_utf8(&buf).unwrap()).unwrap();
            prop_assert_eq!(back_cost.total(), cost.total());
            for s in Stage::ALL {
                prop_assert_eq!(back_cost.stage(s), cost.stage(s));
            }
            prop_assert_eq!(back.t, pop.t);
            prop_assert_eq!(back.eps2.to_bits(), pop.eps2.to_bits());
            prop_assert_eq!(back.len(), pop.len());
            for (a, b) in back.particles.iter().zip(&pop.particles) {
                prop_assert_eq!(a.id, b.id);
                prop_assert_eq!(bits(&[a.weight, a.d1, a.d2]), bits(&[b.weight, b.d1, b.d2]));
                prop_assert_eq!(bits(&a.theta), bits(&b.theta));
                prop_assert_eq!(bits(&a.x1_summary), bits(&b.x1_summary));
                prop_assert_eq!(bits(&a.x2_summary), bits(&b.x2_summary));
            }
        }
    }

    #[test]
    fn trace_without_footer_is_running() {
        let mut buf = Vec::new();
        write_trace_header(&mut buf, &header()).unwrap();
        let (_, t) = read_trace(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(t.status, RunStatus::Running);
        assert!(t.rows.is_empty());
    }

    #[test]
    fn trace_rejects_wrong_columns() {
        let text = format!("{TRACE_MAGIC}\niteration,eps\n");
        assert_eq!(read_trace(&text).unwrap_err().line, 2);
    }

    #[test]
    fn spin_grid_round_trip() {
        let grid = SpinGrid::from_spins(3, vec![1, -1, 1, 1, 1, -1, -1, -1, 1]).unwrap();
        let mut buf = Vec::new();
        write_spin_grid(&mut buf, &grid).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert_eq!(read_spin_grid(&text).unwrap(), grid);
    }

    #[test]
    fn spin_grid_errors() {
        assert!(read_spin_grid("1 0\n1 1\n").is_err());
        assert!(read_spin_grid("1 1\n1\n").is_err());
        assert!(read_spin_grid("1 1\n").is_err());
        assert!(read_spin_grid("").is_err());
    }

    #[test]
    fn lv_observations_round_trip() {
        let (t, x, y) = (vec![0.0, 2.0], vec![50.0, 61.0], vec![100.0, 87.0]);
        let mut buf = Vec::new();
        write_lv_observations(&mut buf, &t, &x, &y).unwrap();
        let back = read_lv_observations(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, (t, x, y));
        assert!(read_lv_observations("0 1\n").is_err());
    }

    #[test]
    fn norm_round_trip() {
        let norm = [0.1, 2.0, 3.5, 1e-3, 7.0, 8.0, 9.0, 10.0, 1.0 / 3.0];
        let mut buf = Vec::new();
        write_norm(&mut buf, &norm).unwrap();
        assert_eq!(read_norm(std::str::from_utf8(&buf).unwrap()).unwrap(), norm);
        assert!(read_norm("1\n2\n").is_err());
    }
}
