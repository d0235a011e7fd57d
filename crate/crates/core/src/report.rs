//! CSV emission, violation maps and the end-to-end pipeline.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::benchmarks::BenchmarkDef;
use crate::certify::{verify_cbc_on_grid_with, CertificationVerdict, CertifyOptions, DecreaseCondition, GridChecker};
use crate::error::{Error, Result};
use crate::grid::{build_grid, SampleGrid};
use crate::model::{BarrierCertificate, ControlLaw, DtSystem, SafetySpec};
use crate::scalar::Real;
use crate::simulate::{rollouts, sample_initial_states, Trajectory};
use crate::transfer::{run_transfer, TransferReport};

/// 17 significant digits, so every `f64` round-trips.
pub fn fmt_real<T: Real>(v: T) -> String {
    format!("{:.16e}", v.as_f64())
}

/// Axes pinned to fixed values; the two remaining axes span the map.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Slice {
    pub fixed: Vec<(usize, f64)>,
}

impl FromStr for Slice {
    type Err = Error;

    /// `"2=0,3=0.5"` pins axis 2 to 0 and axis 3 to 0.5.
    fn from_str(s: &str) -> Result<Self> {
        let mut fixed = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (a, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("slice entry '{part}' must look like axis=value")))?;
            let axis = a
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad slice axis '{a}'")))?;
            let value = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad slice value '{v}'")))?;
            fixed.push((axis, value));
        }
        Ok(Self { fixed })
    }
}

impl Slice {
    /// Pins every axis past the first two to the center of the box.
    pub fn default_for<T: Real>(grid: &SampleGrid<T>) -> Self {
        let c = grid.state_box().center();
        Self {
            fixed: (2..grid.dim()).map(|a| (a, c[a].as_f64())).collect(),
        }
    }

    /// Grid indices on the slice, row-major over the free axes.
    pub fn indices<T: Real>(&self, grid: &SampleGrid<T>) -> Result<Vec<usize>> {
        let n = grid.dim();
        let mut pinned = vec![None; n];
        for &(a, v) in &self.fixed {
            if a >= n {
                return Err(Error::Config(format!("slice axis {a} out of range for {n}-D state")));
            }
            let mut probe = grid.state_box().center();
            probe[a] = T::lit(v);
            pinned[a] = Some(grid.multi_index(grid.nearest_index(&probe))[a]);
        }
        let free: Vec<usize> = (0..n).filter(|&a| pinned[a].is_none()).collect();
        if n > 2 && free.len() != 2 {
            return Err(Error::SliceRequired(n));
        }
        let mut out = Vec::new();
        let mut multi: Vec<usize> = pinned.iter().map(|p| p.unwrap_or(0)).collect();
        let counts: Vec<usize> = free.iter().map(|&a| grid.cells_per_axis()[a]).collect();
        let total: usize = counts.iter().product();
        for flat in 0..total {
            let mut rem = flat;
            for (k, &a) in free.iter().enumerate().rev() {
                multi[a] = rem % counts[k];
                rem /= counts[k];
            }
            out.push(grid.flat_index(&multi));
        }
        Ok(out)
    }
}

/// One row per grid point: coordinates, `B(x)`, `B(x⁺) − B(x) + η`, and whether
/// any grid check fails at that point.
#[allow(clippy::too_many_arguments)]
pub fn violation_map<T: Real>(
    cert: &BarrierCertificate<T>,
    sys: &DtSystem<T>,
    k: &ControlLaw<T>,
    spec: &SafetySpec<T>,
    grid: &SampleGrid<T>,
    decrease: DecreaseCondition,
    slice: Option<&Slice>,
) -> Result<(String, usize)> {
    let n = grid.dim();
    let indices = match slice {
        Some(s) => s.indices(grid)?,
        None if n > 2 => return Err(Error::SliceRequired(n)),
        None => (0..grid.len()).collect(),
    };
    let checker = GridChecker::new(cert, sys, k, spec, grid, decrease)?;
    let mut scratch = checker.scratch();
    let mut csv = String::new();
    for a in 0..n {
        let _ = write!(csv, "x{a},");
    }
    csv.push_str("barrier,decrease_value,violation\n");
    let mut x = vec![T::zero(); n];
    let mut count = 0;
    for i in indices {
        let e = checker.eval_point(i, &mut scratch)?;
        grid.point_into(i, &mut x);
        let flag = e.any_violation();
        count += flag as usize;
        for v in &x {
            csv.push_str(&fmt_real(*v));
            csv.push(',');
        }
        let _ = writeln!(
            csv,
            "{},{},{}",
            fmt_real(e.b),
            fmt_real(e.b_next - e.b + cert.eta),
            flag as u8
        );
    }
    Ok((csv, count))
}

pub fn verdict_csv<T: Real>(v: &CertificationVerdict<T>) -> String {
    let mut s = String::from("condition,ok,checked,violations,worst_margin\n");
    let oks = [v.condition1_ok, v.condition2_ok, v.condition3_ok];
    let names = ["initial", "unsafe", v.decrease.as_str()];
    for c in 0..3 {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            names[c],
            oks[c] as u8,
            v.checked_counts[c],
            v.violation_counts[c],
            fmt_real(v.worst_margins[c])
        );
    }
    s
}

pub fn trajectories_csv<T: Real>(trajs: &[Trajectory<T>]) -> String {
    let mut s = String::new();
    let (n, m) = match trajs.first() {
        Some(t) => (t.states[0].len(), t.inputs.first().map_or(0, |u| u.len())),
        None => return s,
    };
    s.push_str("rollout,step,");
    for a in 0..n {
        let _ = write!(s, "x{a},");
    }
    for a in 0..m {
        let _ = write!(s, "u{a},");
    }
    s.push_str("unsafe\n");
    for (r, t) in trajs.iter().enumerate() {
        for (step, x) in t.states.iter().enumerate() {
            let _ = write!(s, "{r},{step},");
            for v in x {
                let _ = write!(s, "{},", fmt_real(*v));
            }
            match t.inputs.get(step) {
                Some(u) => {
                    for v in u {
                        let _ = write!(s, "{},", fmt_real(*v));
                    }
                }
                None => s.push_str(&",".repeat(m)),
            }
            let unsafe_now = t.first_unsafe_step.is_some_and(|f| f == step) as u8;
            let _ = writeln!(s, "{unsafe_now}");
        }
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct FullRunOptions {
    pub rollouts: usize,
    pub horizon: Option<usize>,
    pub slice: Option<Slice>,
}

impl Default for FullRunOptions {
    fn default() -> Self {
        Self {
            rollouts: 100,
            horizon: None,
            slice: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FullRunOutcome {
    /// 0 = converged and certified, 2 = no safety claim.
    pub exit_code: i32,
    pub converged: bool,
    pub target_certified: bool,
    pub unsafe_rollouts: usize,
    pub artifacts: Vec<PathBuf>,
}

struct Bundle<'a> {
    dir: &'a Path,
    written: Vec<PathBuf>,
}

impl Bundle<'_> {
    fn write(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        let p = self.dir.join(name);
        fs::write(&p, contents)?;
        self.written.push(p);
        Ok(())
    }
}

fn stage<R>(name: &'static str, r: Result<R>) -> Result<R> {
    r.map_err(|e| e.in_stage(name))
}

/// verify source → transfer → certify target → rollouts, writing every artifact to `out`.
///
/// A safety claim (exit 0) requires a fresh validity pass and a clean target grid check.
pub fn full_run<T: Real>(def: &BenchmarkDef<T>, out: &Path, opts: &FullRunOptions) -> Result<FullRunOutcome> {
    fs::create_dir_all(out)?;
    let mut bundle = Bundle {
        dir: out,
        written: Vec::new(),
    };
    let copts = CertifyOptions::with_decrease(def.decrease);
    let grid = stage("grid", build_grid(&def.source.state_box, def.epsilon()))?;
    let slice = if grid.dim() > 2 {
        Some(opts.slice.clone().unwrap_or_else(|| Slice::default_for(&grid)))
    } else {
        None
    };
    let mut summary = String::new();
    let _ = writeln!(summary, "benchmark = {}", def.name);
    let _ = writeln!(summary, "scale = {}", def.scale);
    let _ = writeln!(summary, "decrease = {}", def.decrease.as_str());
    let _ = writeln!(summary, "epsilon = {}", fmt_real(def.epsilon()));
    let _ = writeln!(summary, "grid_points = {}", grid.len());
    let _ = writeln!(summary, "lip_b = {}", fmt_real(def.source_cbc.lip));
    let _ = writeln!(summary, "eta = {}", fmt_real(def.source_cbc.eta));
    let _ = writeln!(summary, "seed = {}", def.transfer.seed);

    let src_verdict = stage(
        "verify-source",
        verify_cbc_on_grid_with(&def.source_cbc, &def.source, &def.source_controller, &def.spec, &grid, &copts),
    )?;
    bundle.write("source_verdict.csv", verdict_csv(&src_verdict).as_bytes())?;
    let (map, _) = stage(
        "violation-map",
        violation_map(
            &def.source_cbc,
            &def.source,
            &def.source_controller,
            &def.spec,
            &grid,
            def.decrease,
            slice.as_ref(),
        ),
    )?;
    bundle.write("violation_map_source.csv", map.as_bytes())?;
    let _ = writeln!(summary, "source_certified = {}", src_verdict.all_ok());
    if !src_verdict.all_ok() {
        fs::write(out.join("summary.txt"), &summary)?;
        return Err(Error::SourceNotCertified {
            violations: src_verdict.total_violations(),
        }
        .in_stage("verify-source"));
    }

    let (map, premise_violations) = stage(
        "violation-map",
        violation_map(
            &def.source_cbc,
            &def.target,
            &def.source_controller,
            &def.spec,
            &grid,
            def.decrease,
            slice.as_ref(),
        ),
    )?;
    bundle.write("violation_map_target_source_controller.csv", map.as_bytes())?;
    let _ = writeln!(summary, "target_with_source_controller_violations = {premise_violations}");

    let (mut report, k_hat): (TransferReport<T>, ControlLaw<T>) = stage(
        "transfer",
        run_transfer(&def.source, &def.source_controller, &def.source_cbc, &def.target, &grid, &def.transfer),
    )?;
    if let Some(net) = k_hat.network() {
        bundle.write("controller.bin", &net.to_bytes()?)?;
        report.final_controller = Some("controller.bin".into());
    }
    bundle.write("transfer_trace.csv", report.to_csv().as_bytes())?;
    let last = report.last().expect("at least one round is always evaluated");
    let _ = writeln!(summary, "converged = {}", report.converged);
    let _ = writeln!(summary, "rounds = {}", report.rounds.len());
    let _ = writeln!(summary, "total_iterations = {}", report.total_iterations);
    let _ = writeln!(summary, "mismatch_e = {}", fmt_real(last.mismatch_e));
    let _ = writeln!(summary, "lip_k_hat = {}", fmt_real(last.lip_k_hat));
    let _ = writeln!(summary, "lip_dagger = {}", fmt_real(last.lip_dagger));
    let _ = writeln!(summary, "validity_lhs = {}", fmt_real(last.validity_lhs));

    if !report.converged {
        let _ = writeln!(summary, "safety_claim = none (transfer did not converge)");
        bundle.write("summary.txt", summary.as_bytes())?;
        return Ok(FullRunOutcome {
            exit_code: 2,
            converged: false,
            target_certified: false,
            unsafe_rollouts: 0,
            artifacts: bundle.written,
        });
    }

    let tgt_verdict = stage(
        "certify-target",
        verify_cbc_on_grid_with(&def.source_cbc, &def.target, &k_hat, &def.spec, &grid, &copts),
    )?;
    bundle.write("target_verdict.csv", verdict_csv(&tgt_verdict).as_bytes())?;
    let (map, _) = stage(
        "violation-map",
        violation_map(&def.source_cbc, &def.target, &k_hat, &def.spec, &grid, def.decrease, slice.as_ref()),
    )?;
    bundle.write("violation_map_target.csv", map.as_bytes())?;
    let _ = writeln!(summary, "target_certified = {}", tgt_verdict.all_ok());

    let horizon = opts.horizon.unwrap_or(def.spec.horizon);
    let x0s = sample_initial_states(&def.spec, opts.rollouts, def.transfer.seed);
    let trajs = stage("simulate", rollouts(&def.target, &k_hat, &x0s, horizon, &def.spec))?;
    let unsafe_rollouts = trajs.iter().filter(|t| t.entered_unsafe).count();
    bundle.write("trajectories.csv", trajectories_csv(&trajs).as_bytes())?;
    let _ = writeln!(summary, "rollouts = {}", trajs.len());
    let _ = writeln!(summary, "unsafe_rollouts = {unsafe_rollouts}");

    let certified = tgt_verdict.all_ok();
    let _ = writeln!(
        summary,
        "safety_claim = {}",
        if certified { "certified" } else { "none (target grid check failed)" }
    );
    bundle.write("summary.txt", summary.as_bytes())?;
    Ok(FullRunOutcome {
        exit_code: if certified { 0 } else { 2 },
        converged: true,
        target_certified: certified,
        unsafe_rollouts,
        artifacts: bundle.written,
    })
}
