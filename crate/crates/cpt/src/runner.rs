//! Artifact serialization and the four CLI commands.
//!
//! Every file a run emits is a pure function of the `RunOutput`, with one
//! exception: `run_info.txt` carries the wall-clock timestamp and is the only
//! file allowed to differ between reruns. Each text format has a parser here,
//! so artifacts can be audited by the same binary that wrote them.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{CptError, Result};
use crate::metrics::{cl_score, rem, BwtConvention, ResultMatrix, Unit};
use crate::schedule::{Phase, ScheduleKind};
use crate::timeline::{compose_timeline, Timeline};
use crate::trainer::{run_experiment, LossRow, RunOutput};

/// One line of a schedule CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleRow {
    pub global_step: u64,
    pub task_id: u64,
    pub phase: Phase,
    pub lr: f64,
}

/// Evaluate the configured schedule over the whole task sequence: one row per
/// executed training step, so a budget of N yields N rows plus the header.
pub fn schedule_rows(cfg: &ExperimentConfig) -> Result<Vec<ScheduleRow>> {
    if cfg.kind == ScheduleKind::Constant {
        let spec = cfg.schedule_spec(None)?;
        let total = cfg.steps_per_task * cfg.task_count;
        return (1..=total)
            .map(|g| {
                Ok(ScheduleRow {
                    global_step: g,
                    task_id: (g - 1) / cfg.steps_per_task,
                    phase: Phase::Constant,
                    lr: spec.lr_at(g.min(spec.n_total))?,
                })
            })
            .collect();
    }
    let spec = cfg.schedule_spec(None)?;
    let timeline = compose_timeline(&cfg.task_plans(), &spec)?;
    Ok(timeline_rows(&timeline))
}

/// Schedule rows for an already-composed timeline: the per-step lr tapes.
pub fn timeline_rows(timeline: &Timeline) -> Vec<ScheduleRow> {
    let mut rows = Vec::with_capacity(timeline.total_steps() as usize);
    for seg in &timeline.segments {
        for k in 0..seg.n_steps() as usize {
            rows.push(ScheduleRow {
                global_step: seg.start_global + k as u64 + 1,
                task_id: seg.task_id,
                phase: seg.phase_tape[k],
                lr: seg.lr_tape[k],
            });
        }
    }
    rows
}

pub fn schedule_csv(rows: &[ScheduleRow]) -> String {
    let mut out = String::from("global_step,task_id,phase,lr\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.global_step, r.task_id, r.phase, r.lr));
    }
    out
}

pub fn parse_schedule_csv(text: &str) -> Result<Vec<ScheduleRow>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CptError::Parse("empty schedule csv".into()))?;
    if header != "global_step,task_id,phase,lr" {
        return Err(CptError::Parse(format!("bad schedule header: {header}")));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(CptError::Parse(format!("bad schedule row: {line}")));
            }
            Ok(ScheduleRow {
                global_step: f[0]
                    .parse()
                    .map_err(|e| CptError::Parse(format!("bad step in `{line}`: {e}")))?,
                task_id: f[1]
                    .parse()
                    .map_err(|e| CptError::Parse(format!("bad task in `{line}`: {e}")))?,
                phase: Phase::parse(f[2])?,
                lr: f[3]
                    .parse()
                    .map_err(|e| CptError::Parse(format!("bad lr in `{line}`: {e}")))?,
            })
        })
        .collect()
}

pub fn losses_csv(rows: &[LossRow]) -> String {
    let mut out = String::from("global_step,task_id,loss,lr,n_current,n_replay\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.global_step, r.task_id, r.loss, r.lr, r.n_current, r.n_replay
        ));
    }
    out
}

pub fn parse_losses_csv(text: &str) -> Result<Vec<LossRow>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CptError::Parse("empty losses csv".into()))?;
    if header != "global_step,task_id,loss,lr,n_current,n_replay" {
        return Err(CptError::Parse(format!("bad losses header: {header}")));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(CptError::Parse(format!("bad loss row: {line}")));
            }
            let num = |s: &str| -> Result<f64> {
                s.parse()
                    .map_err(|e| CptError::Parse(format!("bad number in `{line}`: {e}")))
            };
            let int = |s: &str| -> Result<u64> {
                s.parse()
                    .map_err(|e| CptError::Parse(format!("bad integer in `{line}`: {e}")))
            };
            Ok(LossRow {
                global_step: int(f[0])?,
                task_id: int(f[1])?,
                loss: num(f[2])?,
                lr: num(f[3])?,
                n_current: int(f[4])? as usize,
                n_replay: int(f[5])? as usize,
            })
        })
        .collect()
}

/// The full metric suite for one matrix; `None` marks metrics the matrix
/// cannot support (single task, missing baselines, fraction-scaled inputs).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub unit: Unit,
    pub bwt_convention: BwtConvention,
    pub avg_acc: f64,
    pub overall_acc: f64,
    pub bwt: Option<f64>,
    pub fwt: Option<f64>,
    pub overall_bwt: Option<f64>,
    pub overall_fwt: Option<f64>,
    pub rem: Option<f64>,
    pub cl_score: Option<f64>,
}

pub fn compute_report(m: &ResultMatrix, conv: BwtConvention) -> Result<MetricsReport> {
    let avg_acc = m.avg_acc()?;
    let overall_acc = m.overall_acc()?;
    let (bwt, overall_bwt) = if m.t() >= 2 {
        (Some(m.bwt()?), Some(m.overall_bwt(conv)?))
    } else {
        (None, None)
    };
    let fwt = m.fwt().ok();
    let overall_fwt = m.overall_fwt().ok();
    // The remembering and continual-learning scores are defined on the 0-100
    // scale only.
    let rem_v = match (m.unit(), overall_bwt) {
        (Unit::Percent, Some(ob)) => Some(rem(ob)),
        _ => None,
    };
    let cl = match (rem_v, overall_bwt, overall_fwt) {
        (Some(r), Some(ob), Some(of)) => Some(cl_score(&[overall_acc, r, ob, of], None)?),
        _ => None,
    };
    Ok(MetricsReport {
        unit: m.unit(),
        bwt_convention: conv,
        avg_acc,
        overall_acc,
        bwt,
        fwt,
        overall_bwt,
        overall_fwt,
        rem: rem_v,
        cl_score: cl,
    })
}

pub fn report_text(r: &MetricsReport) -> String {
    let mut out = format!("unit = {}\nbwt_convention = {}\n", r.unit, r.bwt_convention);
    let mut line = |k: &str, v: Option<f64>| {
        if let Some(v) = v {
            out.push_str(&format!("{k} = {v}\n"));
        }
    };
    line("avg_acc", Some(r.avg_acc));
    line("bwt", r.bwt);
    line("fwt", r.fwt);
    line("overall_acc", Some(r.overall_acc));
    line("overall_bwt", r.overall_bwt);
    line("overall_fwt", r.overall_fwt);
    line("rem", r.rem);
    line("cl_score", r.cl_score);
    out
}

pub fn parse_report(text: &str) -> Result<MetricsReport> {
    let mut unit = None;
    let mut conv = None;
    let mut vals: Vec<(String, f64)> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CptError::Parse(format!("bad report line: {line}")))?;
        let (k, v) = (k.trim(), v.trim());
        match k {
            "unit" => unit = Some(Unit::parse(v)?),
            "bwt_convention" => conv = Some(BwtConvention::parse(v)?),
            _ => vals.push((
                k.to_string(),
                v.parse()
                    .map_err(|e| CptError::Parse(format!("bad value for {k}: {e}")))?,
            )),
        }
    }
    let get = |name: &str| vals.iter().find(|(k, _)| k == name).map(|(_, v)| *v);
    Ok(MetricsReport {
        unit: unit.ok_or_else(|| CptError::Parse("report missing unit".into()))?,
        bwt_convention: conv
            .ok_or_else(|| CptError::Parse("report missing bwt_convention".into()))?,
        avg_acc: get("avg_acc").ok_or_else(|| CptError::Parse("report missing avg_acc".into()))?,
        overall_acc: get("overall_acc")
            .ok_or_else(|| CptError::Parse("report missing overall_acc".into()))?,
        bwt: get("bwt"),
        fwt: get("fwt"),
        overall_bwt: get("overall_bwt"),
        overall_fwt: get("overall_fwt"),
        rem: get("rem"),
        cl_score: get("cl_score"),
    })
}

fn run_info_text(cfg: &ExperimentConfig, kind: ScheduleKind, seed: u64) -> String {
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!(
        "created_unix = {now}\nschedule = {kind}\nseed = {seed}\nbaseline = {}\n",
        cfg.baseline
    )
}

/// Persist one run's artifacts under `dir/seed<seed>/`.
fn write_run_dir(cfg: &ExperimentConfig, dir: &Path, out: &RunOutput) -> Result<MetricsReport> {
    let sdir = dir.join(format!("seed{}", out.seed));
    fs::create_dir_all(&sdir)?;
    fs::write(sdir.join("schedule.csv"), schedule_csv(&timeline_rows(&out.timeline)))?;
    fs::write(sdir.join("losses.csv"), losses_csv(&out.losses))?;
    fs::write(sdir.join("matrix.txt"), out.matrix.to_text())?;
    let report = compute_report(&out.matrix, cfg.bwt_convention)?;
    fs::write(sdir.join("metrics.txt"), report_text(&report))?;
    fs::write(sdir.join("buffer_manifest.txt"), &out.buffer_manifest)?;
    for (name, rec) in &out.checkpoints {
        rec.save(&sdir.join("checkpoints").join(name))?;
    }
    fs::write(sdir.join("run_info.txt"), run_info_text(cfg, out.kind, out.seed))?;
    Ok(report)
}

/// `schedule` command: evaluate the configured schedule and write
/// `schedule.csv` into the output directory.
pub fn cmd_schedule(cfg: &ExperimentConfig, out_dir: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    let rows = schedule_rows(cfg)?;
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join("schedule.csv");
    fs::write(&path, schedule_csv(&rows))?;
    Ok(path)
}

/// `run` command: train every configured seed (in parallel) and write one
/// artifact directory per seed plus the canonical config echo.
pub fn cmd_run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<(u64, MetricsReport)>> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("config.ini"), cfg.to_text())?;
    let results: Vec<Result<(u64, MetricsReport)>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let out = run_experiment(cfg, cfg.kind, seed)?;
            let report = write_run_dir(cfg, out_dir, &out)?;
            Ok((seed, report))
        })
        .collect();
    // surface errors in seed order so reruns fail identically
    results.into_iter().collect()
}

/// `metrics` command: recompute the report from persisted artifacts.
pub fn cmd_metrics(
    matrix_text: &str,
    baselines_text: Option<&str>,
    conv: BwtConvention,
) -> Result<String> {
    let mut m = ResultMatrix::from_text(matrix_text)?;
    if let Some(text) = baselines_text {
        m.set_baselines(crate::metrics::parse_baseline_values(text)?)?;
    }
    Ok(report_text(&compute_report(&m, conv)?))
}

/// One `compare` line: a schedule variant evaluated on one seed (or, with
/// `seed == None`, the seed-averaged summary).
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub schedule: ScheduleKind,
    pub seed: Option<u64>,
    pub report: MetricsReport,
}

const COMPARE_METRICS: [&str; 8] = [
    "avg_acc",
    "bwt",
    "fwt",
    "overall_acc",
    "overall_bwt",
    "overall_fwt",
    "rem",
    "cl_score",
];

fn metric_values(r: &MetricsReport) -> [Option<f64>; 8] {
    [
        Some(r.avg_acc),
        r.bwt,
        r.fwt,
        Some(r.overall_acc),
        r.overall_bwt,
        r.overall_fwt,
        r.rem,
        r.cl_score,
    ]
}

fn opt_cell(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v}"),
        None => "-".to_string(),
    }
}

/// `compare` command: run every (schedule, seed) pair, write per-seed rows to
/// `compare.csv` and exact seed means to `summary.csv`, and return the
/// summary text.
pub fn cmd_compare(cfg: &ExperimentConfig, out_dir: &Path) -> Result<String> {
    if cfg.compare_schedules.len() < 2 {
        return Err(CptError::config(
            "compare.schedules",
            "need at least two schedules to compare",
        ));
    }
    for kind in &cfg.compare_schedules {
        let mut variant = cfg.clone();
        variant.kind = *kind;
        variant.validate()?;
    }
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("config.ini"), cfg.to_text())?;

    let pairs: Vec<(ScheduleKind, u64)> = cfg
        .compare_schedules
        .iter()
        .flat_map(|k| cfg.seeds.iter().map(move |s| (*k, *s)))
        .collect();
    let results: Vec<Result<(ScheduleKind, u64, MetricsReport)>> = pairs
        .par_iter()
        .map(|&(kind, seed)| {
            let out = run_experiment(cfg, kind, seed)?;
            let vdir = out_dir.join(kind.to_string());
            fs::create_dir_all(&vdir)?;
            let mut vcfg = cfg.clone();
            vcfg.kind = kind;
            let report = write_run_dir(&vcfg, &vdir, &out)?;
            Ok((kind, seed, report))
        })
        .collect();
    let rows: Vec<(ScheduleKind, u64, MetricsReport)> =
        results.into_iter().collect::<Result<_>>()?;

    let mut per_seed = format!("schedule,seed,{}\n", COMPARE_METRICS.join(","));
    for (kind, seed, report) in &rows {
        let cells: Vec<String> = metric_values(report).iter().map(|v| opt_cell(*v)).collect();
        per_seed.push_str(&format!("{kind},{seed},{}\n", cells.join(",")));
    }
    fs::write(out_dir.join("compare.csv"), &per_seed)?;

    let mut summary = format!("schedule,{}\n", COMPARE_METRICS.join(","));
    for kind in &cfg.compare_schedules {
        let reports: Vec<&MetricsReport> = rows
            .iter()
            .filter(|(k, _, _)| k == kind)
            .map(|(_, _, r)| r)
            .collect();
        let n = reports.len() as f64;
        let mut cells = Vec::new();
        for i in 0..COMPARE_METRICS.len() {
            let vals: Vec<Option<f64>> =
                reports.iter().map(|r| metric_values(r)[i]).collect();
            let cell = if vals.iter().all(|v| v.is_some()) {
                Some(vals.iter().map(|v| v.unwrap()).sum::<f64>() / n)
            } else {
                None
            };
            cells.push(opt_cell(cell));
        }
        summary.push_str(&format!("{kind},{}\n", cells.join(",")));
    }
    fs::write(out_dir.join("summary.csv"), &summary)?;
    Ok(summary)
}

/// Split a CSV with a header into (column names, string cells); numeric cells
/// are parsed on demand by the caller.
pub fn parse_csv_table(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| CptError::Parse("empty csv".into()))?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for line in lines {
        let cells: Vec<String> = line.split(',').map(str::to_string).collect();
        if cells.len() != header.len() {
            return Err(CptError::Parse(format!(
                "row has {} cells, header has {}: {line}",
                cells.len(),
                header.len()
            )));
        }
        rows.push(cells);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Baseline;
    use crate::schedule::AnnealConvention;

    fn tiny() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.steps_per_task = 24;
        cfg.warmup_frac = 0.125;
        cfg.cooldown_frac = 0.25;
        cfg.constant_frac = 0.5;
        cfg.task_count = 2;
        cfg.dim = 8;
        cfg.patches = 2;
        cfg.clusters = 2;
        cfg.noise = 0.3;
        cfg.train_samples = 64;
        cfg.probe_train_samples = 32;
        cfg.probe_eval_samples = 32;
        cfg.hidden = 4;
        cfg.latent = 3;
        cfg.mask_ratio = 0.5;
        cfg.batch_size = 4;
        cfg.buffer_fraction = 0.25;
        cfg.mas_sample = 16;
        cfg.probe_epochs = 3;
        cfg.probe_batch_size = 16;
        cfg.baseline_seeds = 1;
        cfg.seeds = vec![11];
        cfg
    }

    #[test]
    fn schedule_csv_has_one_row_per_executed_step() {
        let cfg = tiny();
        let rows = schedule_rows(&cfg).unwrap();
        assert_eq!(rows.len(), 48, "2 tasks x 24 steps");
        assert_eq!(rows[0].global_step, 1);
        let max = rows.iter().map(|r| r.lr).fold(f64::MIN, f64::max);
        assert_eq!(max, cfg.eta_max);
        // with 3 warmup steps the ramp stays above eta_min, so the file's
        // global minimum is the annealing floor
        let min = rows.iter().map(|r| r.lr).fold(f64::MAX, f64::min);
        assert_eq!(min, cfg.eta_min, "annealing reaches the floor");
        assert_eq!(rows[0].lr, (1.0 / 3.0) * cfg.eta_max, "first warmup step");
        assert_eq!(rows[23].task_id, 0);
        assert_eq!(rows[24].task_id, 1);
        let text = schedule_csv(&rows);
        assert_eq!(parse_schedule_csv(&text).unwrap(), rows, "csv round trip");
    }

    #[test]
    fn constant_schedules_emit_flat_rows() {
        let mut cfg = tiny();
        cfg.kind = ScheduleKind::Constant;
        cfg.baseline = Baseline::FtSeq;
        let rows = schedule_rows(&cfg).unwrap();
        assert_eq!(rows.len(), 48);
        assert!(rows.iter().all(|r| r.lr == cfg.eta_const));
        assert!(rows.iter().all(|r| r.phase == Phase::Constant));
        assert_eq!(rows[0].task_id, 0);
        assert_eq!(rows[47].task_id, 1);
    }

    #[test]
    fn losses_csv_round_trips_bitwise() {
        let rows = vec![
            LossRow {
                global_step: 1,
                task_id: 0,
                loss: 0.1 + 0.2,
                lr: 1e-300,
                n_current: 4,
                n_replay: 0,
            },
            LossRow {
                global_step: 2,
                task_id: 1,
                loss: f64::MIN_POSITIVE,
                lr: 0.30000000000000004,
                n_current: 2,
                n_replay: 2,
            },
        ];
        let parsed = parse_losses_csv(&losses_csv(&rows)).unwrap();
        for (a, b) in rows.iter().zip(&parsed) {
            assert_eq!(a.loss.to_bits(), b.loss.to_bits());
            assert_eq!(a.lr.to_bits(), b.lr.to_bits());
        }
        assert!(parse_losses_csv("nope\n1,2\n").is_err());
    }

    #[test]
    fn reports_round_trip_and_follow_the_unit_rules() {
        let rows = vec![
            vec![60.34, 30.56, 60.05],
            vec![58.89, 32.35, 60.28],
            vec![54.35, 31.12, 61.13],
        ];
        let mut m = ResultMatrix::from_rows(&rows, Unit::Percent).unwrap();
        m.set_baselines(vec![0.0, 29.915, 29.915]).unwrap();
        let r = compute_report(&m, BwtConvention::PaperLiteral).unwrap();
        assert!((r.avg_acc - 48.86666666666667).abs() < 1e-12);
        assert!(r.rem.is_some() && r.cl_score.is_some() && r.fwt.is_some());
        let back = parse_report(&report_text(&r)).unwrap();
        assert_eq!(back, r);

        // fraction-scaled matrices cannot produce REM/CL
        let f = ResultMatrix::from_rows(&[vec![0.5, 0.1], vec![0.4, 0.6]], Unit::Fraction)
            .unwrap();
        let rf = compute_report(&f, BwtConvention::PaperLiteral).unwrap();
        assert_eq!(rf.rem, None);
        assert_eq!(rf.cl_score, None);
        assert!(rf.bwt.is_some());
    }

    #[test]
    fn cmd_metrics_accepts_matrix_and_baseline_files() {
        let matrix = "T=2 unit=percent\n50,20\n45,55\n";
        let report = cmd_metrics(matrix, Some("10, 20\n"), BwtConvention::PaperLiteral).unwrap();
        assert!(report.contains("fwt = 0\n"), "R[0][1]-b[1] = 0: {report}");
        assert!(report.contains("bwt = -5\n"), "{report}");
        let no_b = cmd_metrics(matrix, None, BwtConvention::PaperLiteral).unwrap();
        assert!(
            !no_b.lines().any(|l| l.starts_with("fwt =")),
            "no baselines, no fwt: {no_b}"
        );
        assert!(no_b.contains("overall_fwt = 20\n"), "{no_b}");
    }

    #[test]
    fn cmd_run_writes_identical_artifacts_on_rerun() {
        let cfg = tiny();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        cmd_run(&cfg, dir_a.path()).unwrap();
        cmd_run(&cfg, dir_b.path()).unwrap();
        let mut checked = 0;
        for name in [
            "config.ini",
            "seed11/schedule.csv",
            "seed11/losses.csv",
            "seed11/matrix.txt",
            "seed11/metrics.txt",
            "seed11/buffer_manifest.txt",
            "seed11/checkpoints/task0_pre_annealed/params.bin",
            "seed11/checkpoints/task0_annealed/params.bin",
            "seed11/checkpoints/task1_annealed/metadata.txt",
        ] {
            let a = fs::read(dir_a.path().join(name)).unwrap();
            let b = fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "artifact {name} must be byte-identical");
            checked += 1;
        }
        assert_eq!(checked, 9);
        // artifacts are re-parseable by this very module
        let losses =
            parse_losses_csv(&fs::read_to_string(dir_a.path().join("seed11/losses.csv")).unwrap())
                .unwrap();
        assert_eq!(losses.len(), 48);
        let sched = parse_schedule_csv(
            &fs::read_to_string(dir_a.path().join("seed11/schedule.csv")).unwrap(),
        )
        .unwrap();
        assert_eq!(sched.len(), 48);
        ResultMatrix::from_text(&fs::read_to_string(dir_a.path().join("seed11/matrix.txt")).unwrap())
            .unwrap();
        parse_report(&fs::read_to_string(dir_a.path().join("seed11/metrics.txt")).unwrap())
            .unwrap();
    }

    #[test]
    fn cmd_compare_summarizes_with_exact_means() {
        let mut cfg = tiny();
        cfg.seeds = vec![1, 2];
        cfg.compare_schedules = vec![
            ScheduleKind::RepeatedCosineWarmup,
            ScheduleKind::InfiniteCosine,
        ];
        let dir = tempfile::tempdir().unwrap();
        cmd_compare(&cfg, dir.path()).unwrap();
        let (_, rows) =
            parse_csv_table(&fs::read_to_string(dir.path().join("compare.csv")).unwrap()).unwrap();
        assert_eq!(rows.len(), 4, "2 schedules x 2 seeds");
        let (_, sums) =
            parse_csv_table(&fs::read_to_string(dir.path().join("summary.csv")).unwrap()).unwrap();
        assert_eq!(sums.len(), 2);
        // recompute each summary mean from the per-seed rows
        for srow in &sums {
            let members: Vec<&Vec<String>> =
                rows.iter().filter(|r| r[0] == srow[0]).collect();
            assert_eq!(members.len(), 2);
            for col in 2..members[0].len() {
                let mean: f64 = members
                    .iter()
                    .map(|r| r[col].parse::<f64>().unwrap())
                    .sum::<f64>()
                    / members.len() as f64;
                let reported: f64 = srow[col - 1].parse().unwrap();
                assert!(
                    (mean - reported).abs() <= 1e-12 * mean.abs().max(1.0),
                    "summary mean for col {col}: {mean} vs {reported}"
                );
            }
        }
    }

    #[test]
    fn compare_needs_two_schedules() {
        let mut cfg = tiny();
        cfg.compare_schedules = vec![ScheduleKind::InfiniteCosine];
        let dir = tempfile::tempdir().unwrap();
        let err = cmd_compare(&cfg, dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn paper_literal_annealing_is_echoed_in_the_schedule_csv() {
        let mut cfg = tiny();
        cfg.anneal_convention = AnnealConvention::PaperLiteral;
        cfg.task_count = 1;
        let rows = schedule_rows(&cfg).unwrap();
        let last = rows.last().unwrap();
        assert!(
            last.lr > cfg.eta_min,
            "the literal exponent never reaches the floor: {}",
            last.lr
        );
    }
}
