//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any of them fails.

mod common;

use chemoflow::diagnostics::DiagnosticsRecord;
use chemoflow::flow::{momentum_advection, project, yosida_apply, FlowSettings, PressureSolver, StokesOperator};
use chemoflow::grid::{FaceField, Grid};
use chemoflow::harness::mms::{mms_convergence, MmsSuite};
use chemoflow::harness::oracle::uniform_equivalence_test;
use chemoflow::harness::run::InvariantAudit;
use chemoflow::harness::stabilize::{evaluate, Case};
use chemoflow::harness::sweep::eps_consistency_sweep;
use chemoflow::harness::weak::{weak_residual_study, weak_residuals_for};
use chemoflow::harness::{run_scenario, RunOptions, RunOutput, RunStatus, ScenarioConfig};
use chemoflow::ops::{divergence_faces, gradient_faces};
use common::{random_cells, random_faces};
use std::f64::consts::PI;
use std::time::Instant;

const UNIFORM: &str = include_str!("../scenarios/uniform.toml");
const EPS_SWEEP: &str = include_str!("../scenarios/eps_sweep.toml");
const WEAK: &str = include_str!("../scenarios/weak.toml");

struct Outcome {
    id: u32,
    title: &'static str,
    ok: bool,
    detail: String,
}

fn record(out: &mut Vec<Outcome>, id: u32, title: &'static str, ok: bool, detail: String) {
    println!("criterion {id:>2} {} {title}: {detail}", if ok { "PASS" } else { "FAIL" });
    out.push(Outcome { id, title, ok, detail });
}

fn failed(out: &mut Vec<Outcome>, id: u32, title: &'static str, e: impl std::fmt::Display) {
    record(out, id, title, false, format!("error: {e}"));
}

fn quiet(dir: Option<&std::path::Path>) -> RunOptions {
    RunOptions {
        out_dir: dir.map(Into::into),
        quiet: true,
        ..RunOptions::default()
    }
}

fn uniform(out: &mut Vec<Outcome>, audits: &mut Vec<(String, InvariantAudit)>) {
    let title = "uniform data follows the kinetics ODE";
    let cfg = ScenarioConfig::from_toml(UNIFORM).unwrap();
    let clock = Instant::now();
    match uniform_equivalence_test(&cfg, 1e-4) {
        Ok(r) => {
            let secs = clock.elapsed().as_secs_f64();
            let ok = r.max_deviation <= 1e-4 && r.max_velocity <= 1e-12 && (r.dt - 1e-3).abs() <= 1e-12 && secs < 30.0;
            record(
                out,
                1,
                title,
                ok,
                format!(
                    "max rel deviation {:.3e} (n1 {:.2e}, n2 {:.2e}, c {:.2e}), max|u| {:.1e}, dt {:.6e}, {secs:.1} s",
                    r.max_deviation, r.deviation[0], r.deviation[1], r.deviation[2], r.max_velocity, r.dt
                ),
            );
            audits.push(("uniform".into(), r.audit));
        }
        Err(e) => failed(out, 1, title, e),
    }
}

fn increment_over_last_unit(records: &[DiagnosticsRecord]) -> (f64, f64) {
    let last = records.last().unwrap();
    let start = records
        .iter()
        .rev()
        .find(|r| r.t <= last.t - 1.0 + 1e-9)
        .unwrap_or(&records[0]);
    (
        last.accumulators.a1 - start.accumulators.a1,
        last.accumulators.a2 - start.accumulators.a2,
    )
}

fn energy_line(name: &str, run: &RunOutput) -> (bool, String) {
    let s = &run.summary;
    let e = &s.energy;
    let f_ok = run.records.iter().all(|r| r.energy_f.is_finite() && r.energy_f <= e.f_initial + e.f_bound + 1e-12)
        && e.f_bound.is_finite();
    let (g0, g1) = (e.g_initial.unwrap_or(f64::NAN), e.g_final.unwrap_or(f64::NAN));
    let (d1, d2) = increment_over_last_unit(&run.records);
    let acc = s.accumulators;
    let ok = f_ok && g1 < g0 && d1 <= 1e-4 && d2 <= 1e-4 && acc.a_u.is_finite() && acc.a_c.is_finite();
    (
        ok,
        format!(
            "{name}: F(0) {:.4} K {:.3e}, G {:.4} -> {:.4}, last-unit dA1 {d1:.1e} dA2 {d2:.1e}, A_u {:.3e} A_c {:.3e}",
            e.f_initial, e.f_bound, g0, g1, acc.a_u, acc.a_c
        ),
    )
}

fn stabilization(out: &mut Vec<Outcome>, audits: &mut Vec<(String, InvariantAudit)>) -> Vec<RunOutput> {
    let mut runs = Vec::new();
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();

    let title = "coexistence run settles at the interior equilibrium";
    let cfg = Case::Coexistence.config(&[]).unwrap();
    let clock = Instant::now();
    match run_scenario(&cfg, &quiet(Some(dir_a.path()))) {
        Ok(run) => {
            let secs = clock.elapsed().as_secs_f64();
            let rep = evaluate(Case::Coexistence, &run);
            let d = rep.final_distances.unwrap_or([f64::NAN; 4]);
            record(
                out,
                2,
                title,
                rep.passed && secs < 300.0,
                format!(
                    "distances n1 {:.1e} n2 {:.1e} c {:.1e} u {:.1e}, tail growth {:.1e}, {secs:.1} s{}",
                    d[0],
                    d[1],
                    d[2],
                    d[3],
                    rep.tail_worst_increase,
                    if rep.passed { String::new() } else { format!(" ({})", rep.reasons.join("; ")) }
                ),
            );
            audits.push(("coexistence".into(), run.summary.audit.clone()));
            runs.push(run);
        }
        Err(e) => failed(out, 2, title, e),
    }

    let title = "exclusion run settles at (0, 1)";
    let cfg3 = Case::Exclusion.config(&[]).unwrap();
    let clock = Instant::now();
    match run_scenario(&cfg3, &quiet(None)) {
        Ok(run) => {
            let secs = clock.elapsed().as_secs_f64();
            let s = &run.summary;
            let d = s.final_distances.unwrap_or([f64::NAN; 4]);
            let ok = s.status == RunStatus::Completed && d.iter().all(|v| *v <= 1e-2) && secs < 300.0;
            record(
                out,
                3,
                title,
                ok,
                format!(
                    "distances n1 {:.1e} n2 {:.1e} c {:.1e} u {:.1e}, min n1 {:.1e}, {secs:.1} s",
                    d[0], d[1], d[2], d[3], s.audit.min_n1
                ),
            );
            audits.push(("exclusion".into(), s.audit.clone()));
            runs.push(run);
        }
        Err(e) => failed(out, 3, title, e),
    }

    let title = "repeated runs are byte-identical";
    match run_scenario(&cfg, &quiet(Some(dir_b.path()))) {
        Ok(run) => {
            audits.push(("coexistence repeat".into(), run.summary.audit.clone()));
            let same = |name: &str| {
                let a = std::fs::read(dir_a.path().join(name));
                let b = std::fs::read(dir_b.path().join(name));
                matches!((a, b), (Ok(a), Ok(b)) if a == b && !a.is_empty())
            };
            let (csv, json) = (same("diagnostics.csv"), same("summary.json"));
            record(out, 10, title, csv && json, format!("diagnostics.csv identical: {csv}, summary.json identical: {json}"));
        }
        Err(e) => failed(out, 10, title, e),
    }
    runs
}

fn operators(out: &mut Vec<Outcome>) {
    let mut sbp = 0.0f64;
    let mut idem = 0.0f64;
    let mut skew = 0.0f64;
    let settings = FlowSettings::default();
    let shapes: [(&[f64], &[usize]); 4] = [
        (&[1.0, 1.0], &[4, 4]),
        (&[1.0, 2.0], &[17, 9]),
        (&[0.7, 1.0, 1.3], &[6, 8, 5]),
        (&[1.0, 1.0, 1.0], &[12, 12, 12]),
    ];
    for (k, (l, c)) in shapes.iter().enumerate() {
        let g = Grid::new(l, c).unwrap();
        let seed = 100 + k as u64;
        let f = random_cells(&g, seed, -1.0, 1.0);
        let v = random_faces(&g, seed + 1);
        let lhs = gradient_faces(&f).dot(&v);
        let rhs = -f.dot(&divergence_faces(&v));
        sbp = sbp.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0));

        let ps = PressureSolver::new(&g);
        let (p1, _) = project(&ps, &v, &settings).unwrap();
        let (mut p2, _) = project(&ps, &p1, &settings).unwrap();
        p2.axpy(-1.0, &p1);
        idem = idem.max(p2.max_abs());

        let u = random_faces(&g, seed + 2);
        skew = skew.max(u.dot(&momentum_advection(&p1, &u)).abs() / u.norm_sq());
    }

    let g = Grid::unit(3, 8).unwrap();
    let op = StokesOperator::new(&g);
    let h = g.spacing()[0];
    let mut yosida = 0.0f64;
    for k in [[1usize, 1, 1], [2, 5, 3], [7, 7, 7]] {
        let mut u = FaceField::from_fn(&g, |a, x| {
            if a == 1 {
                (0..3).map(|b| (k[b] as f64 * PI * x[b]).sin()).product()
            } else {
                0.0
            }
        });
        u.enforce_boundary();
        let eta: f64 = k.iter().map(|&kb| 4.0 / (h * h) * (kb as f64 * PI * h / 2.0).sin().powi(2)).sum();
        for eps in [1e-3, 1e-1, 1.0] {
            let mut y = yosida_apply(&op, &u, eps, &settings).unwrap();
            y.axpy(-1.0 / (1.0 + eps * eta), &u);
            yosida = yosida.max(y.max_abs() / u.max_abs());
        }
    }
    let ok = sbp <= 1e-12 && idem <= 1e-11 && yosida <= 1e-12 && skew <= 1e-10;
    record(
        out,
        5,
        "discrete operator identities",
        ok,
        format!("SBP {sbp:.1e}, projection idempotence {idem:.1e}, Yosida eigenmode {yosida:.1e}, advection work/|u|^2 {skew:.1e}"),
    );
}

fn mms(out: &mut Vec<Outcome>) {
    let title = "manufactured-solution orders";
    let mut parts = Vec::new();
    let mut ok = true;
    for (suite, floor) in [
        (MmsSuite::Diffusion, 1.8),
        (MmsSuite::Advection, 0.9),
        (MmsSuite::Chemotaxis, 0.9),
        (MmsSuite::Temporal, 0.9),
    ] {
        match mms_convergence(suite) {
            Ok(r) => {
                ok &= r.order >= floor;
                parts.push(format!("{suite} {:.3} (>= {floor})", r.order));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{suite} error: {e}"));
            }
        }
    }
    record(out, 6, title, ok, parts.join(", "));
}

fn energy(out: &mut Vec<Outcome>, runs: &[RunOutput]) {
    let title = "energy and bound diagnostics on the stabilization runs";
    if runs.len() < 2 {
        record(out, 7, title, false, "stabilization runs missing".into());
        return;
    }
    let (ok2, d2) = energy_line("coexistence", &runs[0]);
    let (ok3, d3) = energy_line("exclusion", &runs[1]);
    record(out, 7, title, ok2 && ok3, format!("{d2}; {d3}"));
}

fn eps_consistency(out: &mut Vec<Outcome>, audits: &mut Vec<(String, InvariantAudit)>) {
    let title = "eps-regularized solutions form a Cauchy sequence";
    let cfg = ScenarioConfig::from_toml(EPS_SWEEP).unwrap();
    let coarse = eps_consistency_sweep(&cfg, &[1e-1, 1e-2, 1e-3], true);
    let fine = eps_consistency_sweep(&cfg, &[1e-6, 0.0], true);
    match (coarse, fine) {
        (Ok(a), Ok(b)) => {
            for (k, au) in a.audits.iter().chain(&b.audits).enumerate() {
                audits.push((format!("eps sweep member {k}"), au.clone()));
            }
            let tail = b.pairs.first().map(|p| p.distance).unwrap_or([f64::NAN; 4]);
            let tail_max = tail.iter().copied().fold(0.0, f64::max);
            let ok = a.is_cauchy() && a.pairs.len() == 2 && b.aborted.is_none() && tail_max <= 1e-4;
            let fmt = |d: [f64; 4]| format!("[{:.2e} {:.2e} {:.2e} {:.2e}]", d[0], d[1], d[2], d[3]);
            record(
                out,
                8,
                title,
                ok,
                format!(
                    "d(1e-1,1e-2) {}, d(1e-2,1e-3) {}, d(1e-6,0) max {tail_max:.2e}",
                    a.pairs.first().map(|p| fmt(p.distance)).unwrap_or_default(),
                    a.pairs.get(1).map(|p| fmt(p.distance)).unwrap_or_default()
                ),
            );
        }
        (Err(e), _) | (_, Err(e)) => failed(out, 8, title, e),
    }
}

fn weak_form(out: &mut Vec<Outcome>, audits: &mut Vec<(String, InvariantAudit)>) {
    let title = "weak identities converge under refinement";
    let cfg = ScenarioConfig::from_toml(WEAK).unwrap();
    let study = weak_residual_study(&cfg, 2);
    let eq_cfg = ScenarioConfig::from_toml_with(
        WEAK,
        &[
            "init.n1=2/3".into(),
            "init.n2=2/3".into(),
            "init.c=1e-14".into(),
            "init.stream=0".into(),
        ],
    )
    .unwrap();
    let eq = weak_residuals_for(&eq_cfg);
    match (study, eq) {
        (Ok(s), Ok((req, _, eq_audit))) => {
            for l in &s.levels {
                audits.push((format!("weak {:?}", l.cells), l.audit.clone()));
            }
            audits.push(("equilibrium".into(), eq_audit));
            let r = s.ratios[0];
            let eq_max = req.iter().copied().fold(0.0, f64::max);
            let ok = r.iter().all(|v| *v >= 1.8) && eq_max <= 1e-10;
            record(
                out,
                9,
                title,
                ok,
                format!(
                    "ratios n1 {:.3} n2 {:.3} c {:.3} u {:.3} (32 -> 64), equilibrium residual {eq_max:.1e}",
                    r[0], r[1], r[2], r[3]
                ),
            );
        }
        (Err(e), _) | (_, Err(e)) => failed(out, 9, title, e),
    }
}

fn main() {
    let clock = Instant::now();
    let mut out = Vec::new();
    let mut audits = Vec::new();

    uniform(&mut out, &mut audits);
    let runs = stabilization(&mut out, &mut audits);
    operators(&mut out);
    mms(&mut out);
    energy(&mut out, &runs);
    eps_consistency(&mut out, &mut audits);
    weak_form(&mut out, &mut audits);

    let bad: Vec<String> = audits
        .iter()
        .filter(|(_, a)| !a.passed())
        .map(|(name, a)| format!("{name}: {}", a.first_violations.join(", ")))
        .collect();
    let steps: usize = audits.iter().map(|(_, a)| a.steps).sum();
    let worst = |f: fn(&InvariantAudit) -> f64| audits.iter().map(|(_, a)| f(a)).fold(0.0, f64::max);
    record(
        &mut out,
        4,
        "structural invariants on every accepted step",
        bad.is_empty() && !audits.is_empty(),
        if bad.is_empty() {
            format!(
                "{} runs, {steps} steps; worst div {:.1e}, ledger {:.1e}, max-c rise {:.1e}, mass excess {:.1e}",
                audits.len(),
                worst(|a| a.max_divergence),
                worst(|a| a.max_ledger_error),
                worst(|a| a.max_c_increase),
                worst(|a| a.max_mass_excess)
            )
        } else {
            bad.join("; ")
        },
    );

    out.sort_by_key(|o| o.id);
    let failures: Vec<&Outcome> = out.iter().filter(|o| !o.ok).collect();
    println!(
        "acceptance: {}/{} criteria passed in {:.1} s",
        out.len() - failures.len(),
        out.len(),
        clock.elapsed().as_secs_f64()
    );
    for f in &failures {
        println!("  failed {} ({}): {}", f.id, f.title, f.detail);
    }
    if !failures.is_empty() {
        std::process::exit(1);
    }
}
