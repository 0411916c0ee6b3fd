use std::f64::consts::PI;

use linresp::adiabatic_dynamics::{kubo_comparison, PropagationOptions};
use linresp::exact_diag::build_ensemble;
use linresp::free_theory::{matsubara_rate, FreeTheory, LoopOptions};
use linresp::lattice_model::{brillouin_grid, FermiOptions};
use linresp::reference_model::{bubble_sequence, loop_decay, AntiperiodicGrid, CutoffShape};
use linresp::response_formulas::{two_chirality_closed_forms, ResponseMatrixSet};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{RunConfig, Tolerances};
use crate::output::{CheckOutcome, Staging};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Spectrum,
    Fermi,
    KuboScan,
    Edcheck,
    Bubble,
    Chiralloop,
    Kmatrix,
    Scaling,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Fermi => "fermi",
            Command::KuboScan => "kubo-scan",
            Command::Edcheck => "edcheck",
            Command::Bubble => "bubble",
            Command::Chiralloop => "chiralloop",
            Command::Kmatrix => "kmatrix",
            Command::Scaling => "scaling",
        }
    }
}

/// Computes the artifacts of `cmd` into `out` and returns its checks.
pub fn execute(cmd: Command, cfg: &RunConfig, tol: &Tolerances, out: &mut Staging) -> Result<Vec<CheckOutcome>, CliError> {
    match cmd {
        Command::Spectrum => spectrum(cfg, out),
        Command::Fermi => fermi(cfg, out),
        Command::KuboScan => kubo_scan(cfg, out),
        Command::Edcheck => edcheck(cfg, tol, out),
        Command::Bubble => bubble(cfg, tol, out),
        Command::Chiralloop => chiralloop(cfg, tol, out),
        Command::Kmatrix => kmatrix(cfg, tol, out),
        Command::Scaling => scaling(cfg, tol, out),
    }
}

#[derive(Serialize)]
struct BandRow {
    k: f64,
    band: usize,
    energy: f64,
}

fn spectrum(cfg: &RunConfig, out: &mut Staging) -> Result<Vec<CheckOutcome>, CliError> {
    let model = cfg.lattice_model()?;
    let bands = model.hamiltonian.band_structure(&brillouin_grid(cfg.l))?;
    let rows: Vec<BandRow> = bands.k.iter().zip(&bands.energies).flat_map(|(&k, es)| es.iter().enumerate().map(move |(band, &energy)| BandRow { k, band, energy })).collect();
    out.csv("spectrum.csv", &rows)?;
    Ok(Vec::new())
}

fn fermi(cfg: &RunConfig, out: &mut Staging) -> Result<Vec<CheckOutcome>, CliError> {
    let model = cfg.lattice_model()?;
    let fs = model.hamiltonian.find_fermi_points(model.mu, &FermiOptions::default())?;
    let points: Vec<serde_json::Value> =
        fs.points.iter().map(|p| serde_json::json!({ "omega": p.omega, "k_f": p.k_f, "v": p.v, "band": p.band, "gap": p.gap })).collect();
    let report = serde_json::json!({
        "mu": model.mu,
        "points": points,
        "non_degenerate": fs.report.non_degenerate,
        "degenerate": fs.report.degenerate,
        "elastic_scattering": fs.report.elastic_scattering,
        "violations": fs.report.violations,
        "net_chirality": fs.report.net_chirality,
    });
    out.json("fermi.json", &report)?;
    let mut checks = vec![
        CheckOutcome::flag("non_degenerate", fs.report.non_degenerate),
        CheckOutcome::flag("zero_net_chirality", fs.report.net_chirality == 0),
    ];
    // Umklapp at half filling breaks the elastic condition, which only matters once the interaction is on.
    if model.lambda != 0.0 {
        checks.push(CheckOutcome::flag("elastic_scattering", fs.report.elastic_scattering));
    }
    Ok(checks)
}

#[derive(Serialize)]
struct KuboCsv {
    eta: f64,
    theta: f64,
    a: f64,
    nu: usize,
    deviation: f64,
}

#[derive(Serialize)]
struct ProfileCsv {
    eta: f64,
    x: usize,
    chi_full: f64,
    chi_lin: f64,
}

fn kubo_scan(cfg: &RunConfig, out: &mut Staging) -> Result<Vec<CheckOutcome>, CliError> {
    let model = cfg.lattice_model()?;
    let table = kubo_comparison(&model, cfg.l, cfg.beta, &cfg.etas, cfg.a, cfg.nu, &PropagationOptions::default())?;
    let rows: Vec<KuboCsv> = table.rows.iter().map(|r| KuboCsv { eta: r.eta, theta: r.theta, a: r.a, nu: r.nu, deviation: r.deviation }).collect();
    let profiles: Vec<ProfileCsv> = table
        .rows
        .iter()
        .flat_map(|r| r.chi_full.iter().zip(&r.chi_lin).enumerate().map(move |(x, (&f, &l))| ProfileCsv { eta: r.eta, x, chi_full: f, chi_lin: l }))
        .collect();
    out.csv("kubo.csv", &rows)?;
    out.csv("profiles.csv", &profiles)?;
    let mut checks = vec![CheckOutcome::flag("deviation_monotone", table.monotone)];
    if let Some(g) = table.gamma_hat() {
        checks.push(CheckOutcome::at_least("gamma_hat", g, f64::MIN_POSITIVE));
    }
    Ok(checks)
}

fn edcheck(cfg: &RunConfig, tol: &Tolerances, out: &mut Staging) -> Result<Vec<CheckOutcome>, CliError> {
    let model = cfg.lattice_model()?;
    let ens = build_ensemble(&model, cfg.ed_l, cfg.ed_beta)?;
    let w = 2.0 * PI / cfg.ed_beta;
    let mut reports = Vec::new();
    let mut checks = Vec::new();
    let a = ens.density(0);
    let b = ens.current(1, 1 % cfg.ed_l);
    let mut kms = 0.0f64;
    for (t, s) in [(0.3, 1.1), (1.7, 0.2)] {
        let r = ens.kms_check(&a, &b, t, s);
        kms = kms.max(r.residual);
        reports.push(r);
    }
    checks.push(CheckOutcome::at_most("kms", kms, tol.kms));
    let mut wick = 0.0f64;
    for t in [0.0, -0.7] {
        let r = ens.wick_rotation_check(1, &a, &ens.density(1 % cfg.ed_l), w, t)?;
        wick = wick.max(r.residual);
        reports.push(r);
    }
    checks.push(CheckOutcome::at_most("wick_rotation", wick, tol.wick));
    let mut cont = 0.0f64;
    for x in 0..cfg.ed_l {
        let r = ens.continuity_check(x);
        cont = cont.max(r.residual);
        reports.push(r);
    }
    checks.push(CheckOutcome::at_most("continuity", cont, tol.continuity));
    let mut ward = 0.0f64;
    for nu in [0, 1] {
        let r = ens.ward_p0_check(w, nu)?;
        ward = ward.max(r.residual);
        reports.push(r);
    }
    checks.push(CheckOutcome::at_most("ward_p0", ward, tol.ward));
    out.json("edcheck.json", &serde_json::json!({ "checks": checks, "reports": reports }))?;
    Ok(checks)
}

#[derive(Serialize)]
struct BubbleCsv {
    n: u32,
    spacing: f64,
    re: f64,
    im: f64,
    extrapolated_re: Option<f64>,
    extrapolated_im: Option<f64>,
    error: f64,
}

fn bubble(cfg: &RunConfig, tol: &Tolerances, out: &mut Staging) -> Result<Vec<CheckOutcome>, CliError> {
    let rows = bubble_sequence(cfg.v, (cfg.p[0], cfg.p[1]), &cfg.n, |_| cfg.spacing)?;
    let csv: Vec<BubbleCsv> = rows
        .iter()
        .map(|r| BubbleCsv {
            n: r.n,
            spacing: r.spacing,
            re: r.value.re,
            im: r.value.im,
            extrapolated_re: r.richardson.map(|z| z.re),
            extrapolated_im: r.richardson.map(|z| z.im),
            error: r.error,
        })
        .collect();
    out.csv("bubble.csv", &csv)?;
    let last = rows.last().expect("n is non-empty");
    Ok(vec![CheckOutcome::at_most("closed_form_error", last.error, tol.bubble)])
}

#[derive(Serialize)]
struct LoopCsv {
    n: u32,
    re: f64,
    im: f64,
    ordering_scale: f64,
    at_floor: bool,
}

fn chiralloop(cfg: &RunConfig, tol: &Tolerances, out: &mut Staging) -> Result<Vec<CheckOutcome>, CliError> {
    let shape = match cfg.offset_window {
        Some([center, width]) => CutoffShape::OffsetSpatial { center, width },
        None => CutoffShape::Radial,
    };
    let momenta: Vec<(f64, f64)> = cfg.momenta.iter().map(|p| (p[0], p[1])).collect();
    let decay = loop_decay(cfg.v, &momenta, &cfg.n, shape, &AntiperiodicGrid::with_spacing(cfg.spacing), 1e-13)?;
    let csv: Vec<LoopCsv> =
        decay.rows.iter().map(|(n, l)| LoopCsv { n: *n, re: l.value.re, im: l.value.im, ordering_scale: l.scale(), at_floor: decay.at_floor(l) }).collect();
    out.csv("chiralloop.csv", &csv)?;
    out.json("chiralloop_fit.json", &serde_json::json!({ "shape": shape, "gamma_hat": decay.gamma_hat(), "fit": decay.fit, "all_cancelled": decay.all_cancelled() }))?;
    let gamma = if decay.all_cancelled() { f64::INFINITY } else { decay.gamma_hat().unwrap_or(f64::NAN) };
    Ok(vec![CheckOutcome::at_least("decay_exponent", gamma, tol.decay)])
}

#[derive(Serialize)]
struct KCsv {
    q: f64,
    nu: usize,
    re: f64,
    im: f64,
    closed_form_re: Option<f64>,
    closed_form_im: Option<f64>,
}

fn kmatrix(cfg: &RunConfig, tol: &Tolerances, out: &mut Staging) -> Result<Vec<CheckOutcome>, CliError> {
    let n = cfg.velocities.len();
    if cfg.coupling.len() != n || cfg.coupling.iter().any(|r| r.len() != n) {
        return Err(CliError::ConfigInvalid(format!("coupling must be {n}x{n}")));
    }
    let lambda = DMatrix::from_fn(n, n, |i, j| cfg.coupling[i][j]);
    let set = ResponseMatrixSet::new(cfg.velocities.clone(), lambda, cfg.a, cfg.z.clone())?;
    let two = n == 2 && cfg.velocities[0] == -cfg.velocities[1] && cfg.z.iter().all(|&z| z == 1.0);
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for &q in &cfg.q {
        let closed = if two { Some(two_chirality_closed_forms(cfg.velocities[0].abs(), cfg.coupling[0][1], q, cfg.a)?) } else { None };
        for nu in [0, 1] {
            let s = set.entry_sum(q, nu)?;
            let cf = closed.map(|(k0, k1)| if nu == 0 { linresp::C64::new(k0, 0.0) } else { k1 });
            if let Some(cf) = cf {
                worst = worst.max((s - cf).norm());
            }
            rows.push(KCsv { q, nu, re: s.re, im: s.im, closed_form_re: cf.map(|z| z.re), closed_form_im: cf.map(|z| z.im) });
        }
    }
    out.csv("kmatrix.csv", &rows)?;
    Ok(if two { vec![CheckOutcome::at_most("two_chirality_closed_form", worst, tol.closed_form)] } else { Vec::new() })
}

#[derive(Serialize)]
struct ScalingCsv {
    eta: f64,
    eta_beta: f64,
    m: usize,
    re: f64,
    im: f64,
    abs: f64,
}

fn scaling(cfg: &RunConfig, tol: &Tolerances, out: &mut Staging) -> Result<Vec<CheckOutcome>, CliError> {
    let model = cfg.lattice_model()?;
    if model.lambda != 0.0 {
        return Err(CliError::ConfigInvalid("scaling needs lambda = 0".into()));
    }
    if cfg.m < 3 {
        return Err(CliError::ConfigInvalid("scaling needs m >= 3".into()));
    }
    let ft = FreeTheory::new(model.hamiltonian.clone(), model.mu, cfg.beta, cfg.l)?;
    let q = 2.0 * PI / cfg.l as f64;
    let pattern = [2.0, -1.0, 1.0, -2.0];
    let jobs: Vec<(f64, usize)> = cfg.etas.iter().flat_map(|&e| (3..=cfg.m).map(move |m| (e, m))).collect();
    let rows: Result<Vec<ScalingCsv>, CliError> = jobs
        .par_iter()
        .map(|&(eta, m)| {
            let eb = matsubara_rate(eta, cfg.beta);
            // spatial momenta a·η_β on the Bloch grid
            let unit = (cfg.a * eb / q).round().max(1.0) * q;
            let ps: Vec<(f64, f64)> = (0..m - 1).map(|i| (eb, unit * pattern[i % pattern.len()])).collect();
            let z = ft.m_point_density_loop(&ps, cfg.nu, &LoopOptions::default())?.value;
            Ok(ScalingCsv { eta, eta_beta: eb, m, re: z.re, im: z.im, abs: z.norm() })
        })
        .collect();
    let rows = rows?;
    let mut checks = Vec::new();
    for m in 3..=cfg.m {
        let sel: Vec<&ScalingCsv> = rows.iter().filter(|r| r.m == m).collect();
        for w in sel.windows(2) {
            // growth allowed by the η^{2-m} bound
            let allowed = (w[0].eta_beta / w[1].eta_beta).powi(m as i32 - 2);
            let ratio = w[1].abs / w[0].abs;
            checks.push(CheckOutcome::at_most(&format!("eta_bound_m{m}_eta{}", w[1].eta), ratio / allowed - 1.0, tol.scaling));
        }
    }
    out.csv("scaling.csv", &rows)?;
    Ok(checks)
}
