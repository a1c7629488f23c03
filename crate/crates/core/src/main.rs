use clap::{Args, Parser, Subcommand};
use qpnls::fourier_core::write_dump;
use qpnls::solver_driver::{attach_stability, fmt_omega, measure_run, nash_moser_run, normal_forms_at_zero, SolveResult, SolverConfig};
use qpnls::Error;
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "qpnls", about = "Quasi-periodic solutions of the forced NLS on the torus")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Nash-Moser solve over the frequency grid.
    Solve(Common),
    /// Regularize and reduce L(0) at every grid point.
    ReduceOnly(Common),
    /// Excluded-frequency fractions across ε.
    Measure {
        #[command(flatten)]
        common: Common,
        /// ε values; defaults to 1e-2, 1e-3, 1e-4.
        #[arg(long = "eps-list", value_delimiter = ',')]
        eps_list: Vec<f64>,
    },
    /// Solve, then evolve the reduced linear flow.
    Stability(Common),
    /// Solve and compare the solution dumps with a golden directory.
    VerifyGolden {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        golden: PathBuf,
    },
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long = "gamma-exp")]
    gamma_exp: Option<f64>,
    #[arg(long = "grid-points")]
    grid_points: Option<usize>,
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
}

impl Common {
    fn config(&self) -> Result<SolverConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => SolverConfig::load(p)?,
            None => SolverConfig::default(),
        };
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.epsilon {
            cfg.eps = v;
        }
        if let Some(v) = self.gamma_exp {
            cfg.gamma_exp = v;
        }
        if let Some(v) = self.grid_points {
            cfg.grid.points = v;
            cfg.grid.omegas.clear();
        }
        if let Some(v) = self.max_iters {
            cfg.max_iters = v;
        }
        if let Some(v) = self.tol {
            cfg.tol = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), text)?;
    Ok(())
}

/// Writes the solve outputs and returns whether its assertions hold.
fn report_solve(cfg: &SolverConfig, res: &SolveResult) -> Result<bool, Error> {
    let dir = &cfg.out;
    write(dir, "run.json", &serde_json::to_string_pretty(&json!({ "config": cfg, "result": res })).unwrap())?;
    write(dir, "residuals.csv", &res.residuals_csv())?;
    write(dir, "kam_history.csv", &res.kam_history_csv())?;
    write(dir, "stability.csv", &res.stability_csv())?;
    let mut masks = String::from("iterate,omega,alive\n");
    for (n, m) in res.masks.iter().enumerate() {
        for (p, a) in res.points.iter().zip(m) {
            masks += &format!("{n},{},{}\n", fmt_omega(&p.omega), *a as u8);
        }
    }
    write(dir, "masks.csv", &masks)?;
    for (k, p) in res.points.iter().enumerate() {
        if let (true, Some(u)) = (p.converged, &p.u) {
            write(&dir.join("dumps"), &format!("u_{k:03}.txt"), &write_dump(u))?;
        }
    }
    let nested = res.masks.windows(2).all(|w| w[0].iter().zip(&w[1]).all(|(a, b)| *a || !*b));
    let mut ok = nested && !res.no_parameters_survive;
    for p in res.points.iter().filter(|p| p.converged) {
        let colloc = p.collocation.unwrap_or(f64::INFINITY);
        let stable = p.stability.as_ref().map(|s| s.conserved).unwrap_or(true);
        ok &= colloc <= 1e-8 && stable;
    }
    println!("survivors {}/{}; masks nested: {nested}", res.survivors, res.points.len());
    for p in &res.points {
        let last = p.records.last().map(|r| r.residual).unwrap_or(f64::NAN);
        match &p.error {
            None => println!("ω = {}: {} iterates, residual {last:.3e}, collocation {:.3e}", fmt_omega(&p.omega), p.records.len(), p.collocation.unwrap_or(f64::NAN)),
            Some(e) => println!("ω = {}: excluded at iterate {:?}: {e}", fmt_omega(&p.omega), p.failed_at),
        }
    }
    Ok(ok)
}

fn run(cli: Cli) -> Result<bool, Error> {
    match cli.cmd {
        Cmd::Solve(c) | Cmd::Stability(c) => {
            let cfg = c.config()?;
            let mut res = nash_moser_run(&cfg)?;
            attach_stability(&cfg, &mut res);
            report_solve(&cfg, &res)
        }
        Cmd::ReduceOnly(c) => {
            let cfg = c.config()?;
            let (_, outs, e_abs) = normal_forms_at_zero(&cfg)?;
            let mut csv = String::from("omega,nu,n,r_s0,max_re_mu,min_divisor\n");
            let mut rows = vec![];
            let mut ok = true;
            for (w, o) in cfg.grid().points.iter().zip(&outs) {
                match o {
                    Some(k) => {
                        for r in &k.history {
                            csv += &format!("{},{},{},{:.6e},{:.6e},{:.6e}\n", fmt_omega(w), r.nu, r.n, r.r_s0, r.max_re_mu, r.min_divisor);
                        }
                        ok &= k.converged && k.history.iter().all(|r| r.max_re_mu <= 1e-10);
                        rows.push(json!({ "omega": w, "converged": k.converged, "iterations": k.iterations(), "m2": k.nf.m2, "m1_im": k.nf.m1.im, "m0": k.nf.m0 }));
                    }
                    None => rows.push(json!({ "omega": w, "converged": false })),
                }
            }
            write(&cfg.out, "kam_history.csv", &csv)?;
            write(&cfg.out, "run.json", &serde_json::to_string_pretty(&json!({ "config": cfg, "e_abs": e_abs, "points": rows })).unwrap())?;
            println!("{} of {} reductions converged", outs.iter().flatten().filter(|k| k.converged).count(), outs.len());
            Ok(ok)
        }
        Cmd::Measure { common, eps_list } => {
            let cfg = common.config()?;
            let eps = if eps_list.is_empty() { vec![1e-2, 1e-3, 1e-4] } else { eps_list };
            let rep = measure_run(&cfg, &eps)?;
            write(&cfg.out, "measure.csv", &rep.csv())?;
            write(&cfg.out, "run.json", &serde_json::to_string_pretty(&json!({ "config": cfg, "measure": rep })).unwrap())?;
            print!("{}", rep.text());
            Ok(rep.soundness_violations == 0 && (!rep.trend_checked || rep.trend_ok))
        }
        Cmd::VerifyGolden { common, golden } => {
            let cfg = common.config()?;
            let mut res = nash_moser_run(&cfg)?;
            attach_stability(&cfg, &mut res);
            let mut ok = report_solve(&cfg, &res)?;
            let dumps = cfg.out.join("dumps");
            let mut compared = 0;
            for entry in std::fs::read_dir(&golden)? {
                let path = entry?.path();
                let name = path.file_name().unwrap().to_owned();
                let want = std::fs::read(&path)?;
                let got = std::fs::read(dumps.join(&name)).unwrap_or_default();
                compared += 1;
                if want != got {
                    println!("golden mismatch: {}", name.to_string_lossy());
                    ok = false;
                }
            }
            println!("{compared} golden files compared");
            Ok(ok && compared > 0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ (Error::Config(_) | Error::Usage(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
