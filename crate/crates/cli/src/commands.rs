//! Subcommand bodies.

use crate::config::{RunConfig, TomoState};
use crate::output::{num, opt, Emitter};
use crate::svg::{heat_map, LinePlot, Series};
use crate::Failure;
use motionq::gatecat::{
    optimize_lambda, CurvePoint, FidelityReport, GateRequest, GateSetup, Optimized, OptimizeOptions, WaveformPlan, HEADLINE,
};
use motionq::relmode::{diagonalize_relative, max_anharmonicity, qubit_coefficients};
use motionq::tomoscope::{characteristic, reconstruct, wigner_from_char, GridSpec, Mode, ModePair};
use nalgebra::Complex;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

type Out<'a> = &'a mut Emitter;

fn io(e: String) -> Failure {
    Failure::Io(e)
}

pub fn spectrum(cfg: &RunConfig, out: Out) -> Result<(), Failure> {
    let s = &cfg.spectrum;
    if s.points < 2 || !(s.u_max > s.u_min) || s.u_min < 0.0 || s.levels == 0 {
        return Err(Failure::Config("spectrum scan needs points >= 2, levels >= 1 and 0 <= u_min < u_max".into()));
    }
    let n_rel = cfg.numerics.n_rel_spectrum;
    let us: Vec<f64> = (0..s.points).map(|i| s.u_min + (s.u_max - s.u_min) * i as f64 / (s.points - 1) as f64).collect();
    let specs = us.par_iter().map(|&u| diagonalize_relative(u, n_rel)).collect::<Result<Vec<_>, _>>()?;
    let mut header: Vec<String> = vec!["u_prime".into()];
    header.extend((0..s.levels).map(|i| format!("E{}", 2 * i)));
    header.extend(["omega_tilde", "omega_tilde_prime", "anharmonicity", "c1", "c2", "c2p", "c3"].map(String::from));
    let mut rows = Vec::new();
    for (u, sp) in us.iter().zip(&specs) {
        let c = qubit_coefficients(sp)?;
        let mut r = vec![num(*u)];
        r.extend(sp.energies.iter().take(s.levels).map(|e| num(*e)));
        r.extend([sp.omega_tilde(), sp.omega_tilde_prime(), sp.anharmonicity(), c.c1, c.c2, c.c2p, c.c3].map(num));
        rows.push(r);
    }
    let h: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    out.csv("spectrum.csv", &h, &rows).map_err(io)?;
    let (u_star, a_star) = max_anharmonicity(s.u_min, s.u_max, n_rel)?;
    let points: Vec<_> = us.iter().zip(&specs).map(|(u, sp)| (*u, sp.anharmonicity())).collect();
    let plot = LinePlot {
        title: "Anharmonicity A(u')".into(),
        x_label: "u' = u / hbar omega_x".into(),
        y_label: "A / hbar omega_x".into(),
        log_x: false,
        log_y: false,
        series: vec![Series { label: "A".into(), points }],
    };
    out.svg("anharmonicity.svg", &plot.render(&out.provenance())).map_err(io)?;
    let gap: Vec<_> = us.iter().zip(&specs).map(|(u, sp)| (*u, sp.omega_tilde())).collect();
    let plot = LinePlot {
        title: "Qubit gap".into(),
        x_label: "u'".into(),
        y_label: "omega_tilde / omega_x".into(),
        log_x: false,
        log_y: false,
        series: vec![Series { label: "omega_tilde".into(), points: gap }],
    };
    out.svg("omega_tilde.svg", &plot.render(&out.provenance())).map_err(io)?;
    let body = json!({
        "n_rel": n_rel,
        "points": s.points,
        "max_anharmonicity": { "u_prime": u_star, "value": a_star },
    });
    println!("max A = {a_star:.5} hbar omega_x at u' = {u_star:.4}");
    out.json("spectrum.json", "spectrum", &body).map_err(io)
}

#[derive(Serialize)]
struct Schedule {
    layout: String,
    positions: Vec<f64>,
    base_depths: Vec<f64>,
    /// ΔU_j per unit signal.
    modulation: Vec<f64>,
    /// sign · shape(omega t − phase), omega in units of omega_x.
    tones: Vec<serde_json::Value>,
    lambda: f64,
    duration_s: f64,
}

fn schedule(plan: &WaveformPlan, duration_s: f64) -> Schedule {
    Schedule {
        layout: plan.layout.name(),
        positions: plan.layout.positions.clone(),
        base_depths: plan.layout.base_depths.clone(),
        modulation: plan.modulation.clone(),
        tones: plan
            .signal
            .tones
            .iter()
            .map(|t| json!({ "shape": t.shape, "omega": t.omega, "phase": t.phase, "sign": t.sign }))
            .collect(),
        lambda: plan.lambda,
        duration_s,
    }
}

fn curve_rows(curve: &[CurvePoint], prefix: &[String]) -> Vec<Vec<String>> {
    curve
        .iter()
        .map(|p| {
            let mut r = prefix.to_vec();
            r.extend([num(p.lambda), opt(p.infidelity), p.error.clone().unwrap_or_default().replace(',', ";")]);
            r
        })
        .collect()
}

fn curve_series(label: String, curve: &[CurvePoint]) -> Series {
    Series { label, points: curve.iter().filter_map(|p| p.infidelity.map(|i| (p.lambda, i))).collect() }
}

fn print_report(r: &FidelityReport) {
    println!(
        "{} |{}| lambda {:.5} T {:.2} us  1-F {:.3e}  leakage {:.2e}  drift {:.1e}",
        r.kind, r.magnitude, r.lambda, r.duration_us, r.infidelity, r.leakage, r.diagnostics.norm_drift
    );
    for w in &r.diagnostics.warnings {
        println!("  warning: {w}");
    }
}

/// Runs the configured request: fixed λ, λ from the duration, or optimized.
fn run_request(setup: &GateSetup, req: &GateRequest, opts: &OptimizeOptions) -> Result<(FidelityReport, Option<Vec<CurvePoint>>), Failure> {
    let g = &setup.settings.geometry;
    if let Some(l) = req.lambda.fixed()? {
        return Ok((setup.run(l)?, None));
    }
    if let Some(s) = req.duration_s {
        return Ok((setup.run(setup.lambda_for(g.to_phase(s)))?, None));
    }
    let Optimized { best, curve } = optimize_lambda(setup, opts)?;
    Ok((best, Some(curve)))
}

fn sweep_options(cfg: &RunConfig) -> OptimizeOptions {
    let s = &cfg.sweep;
    OptimizeOptions {
        grid: s.lambda_grid.clone(),
        lambda_min: s.lambda_min,
        lambda_max: s.lambda_max,
        points_per_decade: s.points_per_decade,
        refine: s.refine,
        ..OptimizeOptions::default()
    }
}

pub fn gate(cfg: &RunConfig, out: Out) -> Result<(), Failure> {
    let settings = cfg.settings()?;
    let req = &cfg.gate;
    let setup = GateSetup::new(req, &settings)?;
    let (report, curve) = run_request(&setup, req, &sweep_options(cfg))?;
    print_report(&report);
    let plan = setup.plan(report.lambda)?;
    let sched = schedule(&plan, settings.geometry.to_seconds(report.duration));
    if let Some(curve) = &curve {
        out.csv("lambda_curve.csv", &["lambda", "infidelity", "error"], &curve_rows(curve, &[])).map_err(io)?;
        let plot = LinePlot {
            title: format!("{} |{}|: infidelity vs lambda", req.kind, req.magnitude),
            x_label: "lambda".into(),
            y_label: "1 - F".into(),
            log_x: true,
            log_y: true,
            series: vec![curve_series(req.kind.to_string(), curve)],
        };
        out.svg("lambda_curve.svg", &plot.render(&out.provenance())).map_err(io)?;
    }
    out.json("gate.json", "gate", &json!({ "request": req, "report": report, "schedule": sched })).map_err(io)
}

pub fn sweep(cfg: &RunConfig, out: Out) -> Result<(), Failure> {
    let s = &cfg.sweep;
    if s.magnitudes.is_empty() {
        return Err(Failure::Config("sweep.magnitudes is empty".into()));
    }
    if matches!(&s.lambda_grid, Some(g) if g.is_empty()) {
        return Err(Failure::Config("sweep.lambda_grid is empty".into()));
    }
    let settings = cfg.settings()?;
    let opts = sweep_options(cfg);
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    let mut reports = Vec::new();
    let mut series = Vec::new();
    for &m in &s.magnitudes {
        let mut req = cfg.gate.clone();
        req.kind = s.kind;
        req.magnitude = m;
        req.lambda = Default::default();
        req.duration_s = None;
        let setup = GateSetup::new(&req, &settings)?;
        let Optimized { best, curve } = optimize_lambda(&setup, &opts)?;
        print_report(&best);
        rows.push(vec![
            num(m),
            num(best.lambda),
            num(best.infidelity),
            num(best.duration_us),
            num(best.leakage),
            num(best.diagnostics.norm_drift),
        ]);
        curves.extend(curve_rows(&curve, &[num(m)]));
        series.push(curve_series(format!("|{m}|"), &curve));
        reports.push(json!({ "magnitude": m, "best": best, "curve": curve }));
    }
    out.csv("sweep.csv", &["magnitude", "lambda_opt", "infidelity", "duration_us", "leakage", "norm_drift"], &rows)
        .map_err(io)?;
    out.csv("sweep_curves.csv", &["magnitude", "lambda", "infidelity", "error"], &curves).map_err(io)?;
    let pts = |col: usize| -> Vec<(f64, f64)> { rows.iter().map(|r| (r[0].parse().unwrap(), r[col].parse().unwrap())).collect() };
    let plot = LinePlot {
        title: format!("{} sweep: optimized infidelity", s.kind),
        x_label: "magnitude".into(),
        y_label: "1 - F".into(),
        log_x: false,
        log_y: true,
        series: vec![Series { label: "1 - F".into(), points: pts(2) }],
    };
    out.svg("sweep.svg", &plot.render(&out.provenance())).map_err(io)?;
    let plot = LinePlot {
        title: format!("{} sweep: optimal lambda", s.kind),
        x_label: "magnitude".into(),
        y_label: "lambda*".into(),
        log_x: false,
        log_y: false,
        series: vec![Series { label: "lambda*".into(), points: pts(1) }],
    };
    out.svg("sweep_lambda.svg", &plot.render(&out.provenance())).map_err(io)?;
    let plot = LinePlot {
        title: format!("{} infidelity vs lambda", s.kind),
        x_label: "lambda".into(),
        y_label: "1 - F".into(),
        log_x: true,
        log_y: true,
        series,
    };
    out.svg("sweep_curves.svg", &plot.render(&out.provenance())).map_err(io)?;
    out.json("sweep.json", "sweep", &json!({ "kind": s.kind, "points": reports })).map_err(io)
}

pub fn reproduce(cfg: &RunConfig, out: Out) -> Result<(), Failure> {
    let settings = cfg.settings()?;
    let window = cfg.reproduce.window;
    if !(window > 0.0 && window < 1.0) {
        return Err(Failure::Config("reproduce.window must lie in (0, 1)".into()));
    }
    let mut rows = Vec::new();
    let mut records = Vec::new();
    let mut series = Vec::new();
    println!("{:<4}{:>12}{:>12}{:>22}{:>7}{:>10}{:>10}{:>6}", "gate", "reference", "computed", "band", "pass", "ref us", "T us", "T ok");
    for h in HEADLINE.iter().filter(|h| cfg.reproduce.gates.is_empty() || cfg.reproduce.gates.contains(&h.kind)) {
        let setup = GateSetup::new(&h.request(), &settings)?;
        let opts = h.window_options(&setup, window)?;
        let Optimized { best, curve } = optimize_lambda(&setup, &opts)?;
        let pass = h.passes(best.infidelity);
        let t_ok = h.time_ok(best.duration_us, window);
        println!(
            "{:<4}{:>12.2e}{:>12.3e}{:>22}{:>7}{:>10}{:>10.1}{:>6}",
            h.kind.to_string(),
            h.reference_infidelity,
            best.infidelity,
            format!("[{:.0e}, {:.0e}]", h.band.0, h.band.1),
            if pass { "PASS" } else { "FAIL" },
            h.reference_time_us,
            best.duration_us,
            if t_ok { "yes" } else { "no" }
        );
        if let Some(d) = best.diagnostics.dt_check_infidelity {
            println!("    half-step agreement 1 - |<psi_dt|psi_dt/2>|^2 = {d:.2e}");
        }
        rows.push(vec![
            h.kind.to_string(),
            num(h.magnitude),
            num(h.reference_infidelity),
            num(best.infidelity),
            num(h.band.0),
            num(h.band.1),
            pass.to_string(),
            num(h.reference_time_us),
            num(best.duration_us),
            t_ok.to_string(),
            num(best.lambda),
            num(best.diagnostics.norm_drift),
            opt(best.diagnostics.dt_check_infidelity),
        ]);
        series.push(curve_series(h.kind.to_string(), &curve));
        records.push(json!({ "gate": h, "pass": pass, "time_ok": t_ok, "best": best, "curve": curve }));
    }
    out.csv(
        "reproduce.csv",
        &[
            "gate",
            "magnitude",
            "reference_infidelity",
            "infidelity",
            "band_lo",
            "band_hi",
            "pass",
            "reference_time_us",
            "duration_us",
            "time_ok",
            "lambda",
            "norm_drift",
            "dt_check_infidelity",
        ],
        &rows,
    )
    .map_err(io)?;
    let plot = LinePlot {
        title: "Infidelity across the gate-time windows".into(),
        x_label: "lambda".into(),
        y_label: "1 - F".into(),
        log_x: true,
        log_y: true,
        series,
    };
    out.svg("reproduce.svg", &plot.render(&out.provenance())).map_err(io)?;
    out.json("reproduce.json", "reproduce", &json!({ "window": window, "rows": records })).map_err(io)
}

fn com_mean_n(psi: &ModePair) -> f64 {
    let mut s = 0.0;
    for n in 0..psi.n_com() {
        for k in 0..psi.n_rel() {
            s += n as f64 * psi.amps[(n, k)].norm_sqr();
        }
    }
    s
}

pub fn tomography(cfg: &RunConfig, out: Out) -> Result<(), Failure> {
    let t = &cfg.tomography;
    let alpha = Complex::new(t.alpha[0], t.alpha[1]);
    let (psi, gate_report) = match t.state {
        TomoState::Vacuum => (ModePair::vacuum(1, 1), None),
        TomoState::Coherent => (ModePair::coherent(alpha, 1), None),
        TomoState::PostGate => {
            let settings = cfg.settings()?;
            let setup = GateSetup::new(&cfg.gate, &settings)?;
            let (report, _) = run_request(&setup, &cfg.gate, &sweep_options(cfg))?;
            print_report(&report);
            let (state, _, plan, duration) = setup.evolve(&setup.initial, report.lambda)?;
            let psi_i = state.to_interaction_picture(&setup.frame_energies(&plan.corrections), duration);
            (ModePair::from_motional(&psi_i, &setup.spectrum)?, Some(report))
        }
    };
    let a_max = com_mean_n(&psi).sqrt();
    let grid = t.grid.unwrap_or_else(|| GridSpec::for_wigner(a_max));
    let wgrid = t.wigner.unwrap_or(GridSpec { extent: (a_max + 3.0).ceil(), spacing: 0.1 });
    let chars = reconstruct(&psi, &grid)?;
    let direct: Vec<(f64, f64)> = (0..chars.chi_com.len())
        .into_par_iter()
        .map(|i| {
            let b = chars.beta(i);
            let c = characteristic(&psi, b, Mode::Com)?;
            let r = characteristic(&psi, b, Mode::Rel)?;
            Ok(((c - chars.chi_com[i]).norm(), (r.re - chars.chi_rel[i]).abs().max(r.im.abs())))
        })
        .collect::<Result<_, motionq::Error>>()?;
    let dev_com = direct.iter().map(|d| d.0).fold(0.0, f64::max);
    let dev_rel = direct.iter().map(|d| d.1).fold(0.0, f64::max);
    let w = wigner_from_char(&chars, &wgrid)?;
    let chi_rows: Vec<Vec<String>> = chars.rows().map(|r| r.iter().map(|x| num(*x)).collect()).collect();
    out.csv("chi.csv", &["beta_re", "beta_im", "chi_com_re", "chi_com_im", "chi_rel"], &chi_rows).map_err(io)?;
    let sample_rows: Vec<Vec<String>> =
        chars.samples.iter().map(|s| vec![num(s.beta_re), num(s.beta_im), num(s.theta), num(s.expectation)]).collect();
    out.csv("joint_sz.csv", &["beta_re", "beta_im", "theta", "four_sz1_sz2"], &sample_rows).map_err(io)?;
    let w_rows: Vec<Vec<String>> = w.rows().map(|r| r.iter().map(|x| num(*x)).collect()).collect();
    out.csv("wigner.csv", &["gamma_re", "gamma_im", "w"], &w_rows).map_err(io)?;
    let prov = out.provenance();
    let re: Vec<f64> = chars.chi_com.iter().map(|c| c.re).collect();
    let im: Vec<f64> = chars.chi_com.iter().map(|c| c.im).collect();
    out.svg("chi_com_re.svg", &heat_map("Re chi_R(beta')", &chars.axis, &re, &prov)).map_err(io)?;
    out.svg("chi_com_im.svg", &heat_map("Im chi_R(beta')", &chars.axis, &im, &prov)).map_err(io)?;
    out.svg("chi_rel.svg", &heat_map("chi_r(beta')", &chars.axis, &chars.chi_rel, &prov)).map_err(io)?;
    out.svg("wigner.svg", &heat_map("W(gamma), COM", &w.axis, &w.values, &prov)).map_err(io)?;
    for m in &w.warnings {
        println!("warning: {m}");
    }
    let summary = json!({
        "state": t.state,
        "grid": grid,
        "wigner_grid": wgrid,
        "chi_origin": [chars.chi_com[chars.origin()].re, chars.chi_com[chars.origin()].im],
        "hermitian_defect": chars.hermitian_defect(),
        "max_deviation_from_direct_com": dev_com,
        "max_deviation_from_direct_rel": dev_rel,
        "max_abs_chi": chars.chi_com.iter().map(|c| c.norm()).fold(0.0, f64::max),
        "wigner_min": w.min(),
        "wigner_integral": w.integral,
        "wigner_max_imag": w.max_imag,
        "wigner_argmax": [w.argmax().re, w.argmax().im],
        "warnings": w.warnings,
        "gate": gate_report,
    });
    println!(
        "chi(0) = {:.12}, direct deviation {:.1e}, W min {:.4}, integral {:.5}",
        chars.chi_com[chars.origin()].re,
        dev_com.max(dev_rel),
        w.min(),
        w.integral
    );
    out.json("tomography.json", "tomography", &summary).map_err(io)
}
