//! `orbit`: reproducible experiments on top of `orbit_core`.
//!
//! Exit codes: 0 ok, 1 check failed or other error, 2 hypothesis refusal,
//! 3 no rank gap, 4 search exhausted, 64 usage error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use orbit_core::algebra::{certify_ladder, generic_point, TolPolicy};
use orbit_core::basisgen::{captured_power, radial_basis, synthetic_volume};
use orbit_core::group::{o3_rule, so2_rule, so3_rule, GroupKind, QuadratureRule, SeedStream};
use orbit_core::landscape::{
    minimize_sk_on_variety, mra_spurious_search, procrustes_descent_experiment, Classification,
    StepPolicy, VarietyChart, DEFAULT_DELTAS, DEFAULT_KAPPAS,
};
use orbit_core::likelihood::tier_scaling;
use orbit_core::models::{make_model, predicted_dims, ModelKind, ModelSpec};
use orbit_core::moments::bispectrum;
use orbit_core::quadcheck::{identity_residuals, Identity};
use orbit_core::{OrbitError, Result};

#[derive(Parser, Debug)]
#[command(
    name = "orbit",
    version,
    about = "Orbit-recovery moment, Fisher and landscape experiments"
)]
struct Cli {
    /// RNG seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// worker threads (fixed count gives byte-identical output)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// output directory; results go to stdout when omitted
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// run the experiment described by a previously emitted config.json
    #[arg(long = "json-config", global = true)]
    json_config: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
struct ModelArgs {
    /// mra, mra-projected, sphere, cryo, cryo-projected, procrustes
    #[arg(long)]
    model: String,
    #[arg(long = "L", default_value_t = 0)]
    bandlimit: usize,
    /// radial counts, comma separated (one value is broadcast)
    #[arg(long = "S", value_delimiter = ',')]
    radial: Vec<usize>,
    /// procrustes atom count
    #[arg(long, default_value_t = 0)]
    m: usize,
}

impl ModelArgs {
    fn build(&self) -> Result<ModelSpec> {
        make_model(&self.model, self.bandlimit, &self.radial, self.m)
    }
}

#[derive(Subcommand, Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
enum Command {
    /// certify the transcendence-degree ladder
    Trdeg {
        #[command(flatten)]
        #[serde(flatten)]
        model: ModelArgs,
        /// relative singular-value threshold
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// minimum accepted singular-value gap
        #[arg(long, default_value_t = 1e3)]
        min_gap: f64,
    },
    /// observed Fisher spectra across an alpha grid
    Fisher {
        #[command(flatten)]
        #[serde(flatten)]
        model: ModelArgs,
        /// inverse SNR values sigma^2 / |theta*|^2
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        alpha: Vec<f64>,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        /// quadrature sizes: n for SO(2), a,b,c for SO(3)/O(3)
        #[arg(long, value_delimiter = ',')]
        quad: Vec<usize>,
    },
    /// landscape experiments
    Landscape {
        #[command(subcommand)]
        which: LandscapeCmd,
    },
    /// residuals of the Wigner moment identities under a rule
    Quadcheck {
        /// so2 or so3
        #[arg(long, default_value = "so3")]
        group: String,
        #[arg(long, value_delimiter = ',', default_values_t = [20usize, 20, 20])]
        quad: Vec<usize>,
        /// mean-identity degree; caps the pair and triple degrees on SO(3) and sets all three on SO(2)
        #[arg(long = "L")]
        degree: Option<usize>,
        #[arg(long, default_value_t = 8)]
        l_mean: usize,
        #[arg(long, default_value_t = 6)]
        l_pair: usize,
        #[arg(long, default_value_t = 4)]
        l_triple: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol_mean: f64,
        #[arg(long, default_value_t = 1e-8)]
        tol_pair: f64,
        #[arg(long, default_value_t = 1e-7)]
        tol_triple: f64,
    },
    /// bispectrum of a random signal
    Bispectrum {
        #[command(flatten)]
        #[serde(flatten)]
        model: ModelArgs,
    },
    /// radial basis of a synthetic volume
    Basis {
        #[arg(long, default_value_t = 24)]
        n_rho: usize,
        #[arg(long, default_value_t = 16)]
        n_phi1: usize,
        #[arg(long, default_value_t = 24)]
        n_phi2: usize,
        #[arg(long, default_value_t = 1.0)]
        vmax: f64,
        #[arg(long, default_value_t = 4)]
        lmax: usize,
        #[arg(long, default_value_t = 6)]
        bumps: usize,
        #[arg(long = "S", default_value_t = 4)]
        count: usize,
    },
}

#[derive(Subcommand, Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
enum LandscapeCmd {
    /// random-start descents on the Procrustes s2
    Procrustes {
        #[arg(long, default_value_t = 5)]
        m: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
    /// constructed spurious minimizer of the MRA s3
    MraSpurious {
        #[arg(long = "L")]
        bandlimit: usize,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_KAPPAS)]
        kappa: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_DELTAS)]
        delta: Vec<f64>,
    },
    /// minimize s_k on an MRA variety chart from a random start
    Variety {
        #[arg(long = "L")]
        bandlimit: usize,
        /// 2 (free harmonics) or 3 (free phases)
        #[arg(long, default_value_t = 3)]
        level: usize,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ExperimentConfig {
    seed: u64,
    threads: Option<usize>,
    out: Option<PathBuf>,
    #[serde(flatten)]
    command: Command,
}

enum Outcome {
    Ok,
    Failed(String),
}

fn exit_code(e: &OrbitError) -> u8 {
    match e {
        OrbitError::Hypothesis(_) => 2,
        OrbitError::NoGap(_) => 3,
        OrbitError::SearchExhausted(_) => 4,
        _ => 1,
    }
}

struct Sink<'a> {
    out: Option<&'a Path>,
}

impl Sink<'_> {
    fn emit(&self, name: &str, bytes: &[u8]) -> Result<()> {
        match self.out {
            Some(dir) => fs::write(dir.join(name), bytes)?,
            None => {
                use std::io::Write;
                let mut so = std::io::stdout().lock();
                writeln!(so, "# {name}")?;
                so.write_all(bytes)?;
                if !bytes.ends_with(b"\n") {
                    writeln!(so)?;
                }
            }
        }
        Ok(())
    }

    fn json<T: Serialize>(&self, name: &str, v: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(v)?;
        s.push('\n');
        self.emit(name, s.as_bytes())
    }
}

fn rule_for(model: &ModelSpec, quad: &[usize]) -> Result<QuadratureRule> {
    let get = |i: usize, d: usize| quad.get(i).copied().unwrap_or(d);
    if model.kind.is_so2() {
        so2_rule(get(0, 128))
    } else {
        let (a, b, c) = (get(0, 12), get(1, 12), get(2, 12));
        if model.kind == ModelKind::Procrustes {
            o3_rule(a, b, c)
        } else {
            so3_rule(a, b, c)
        }
    }
}

fn run(cfg: &ExperimentConfig, sink: &Sink) -> Result<Outcome> {
    let seed = cfg.seed;
    match &cfg.command {
        Command::Trdeg {
            model,
            tol,
            min_gap,
        } => {
            let m = model.build()?;
            let prediction = predicted_dims(&m);
            let report = certify_ladder(
                &m,
                seed,
                TolPolicy {
                    rel_tol: *tol,
                    min_gap: *min_gap,
                },
            )?;
            sink.json("trdeg.json", &report)?;
            eprintln!("ranks {:?} predicted {:?}", report.ranks, report.predicted);
            prediction?;
            Ok(match report.matches_prediction() {
                Some(true) => Outcome::Ok,
                _ => Outcome::Failed(format!(
                    "ranks {:?} differ from {:?}",
                    report.ranks, report.predicted
                )),
            })
        }
        Command::Fisher {
            model,
            alpha,
            n,
            quad,
        } => {
            let m = model.build()?;
            let rule = rule_for(&m, quad)?;
            let theta = generic_point(&m, SeedStream::new(seed));
            let start = Instant::now();
            let rep = tier_scaling(&m, &theta, alpha, *n, &rule, seed)?;
            let runtime = start.elapsed().as_secs_f64();
            let mut csv = Vec::new();
            rep.write_csv(&mut csv)?;
            sink.emit("fisher.csv", &csv)?;
            #[derive(Serialize)]
            struct Summary<'a> {
                model: &'a ModelSpec,
                tiers: Vec<usize>,
                d0: usize,
                slopes: Vec<f64>,
                residuals: Vec<f64>,
                alphas: &'a [f64],
                nulls: &'a [Vec<f64>],
                runtime: f64,
            }
            sink.json(
                "fisher.json",
                &Summary {
                    model: &m,
                    tiers: rep.tiers.iter().map(|t| t.size).collect(),
                    d0: rep.ledger.d0,
                    slopes: rep.slopes(),
                    residuals: rep.tiers.iter().map(|t| t.residual).collect(),
                    alphas: &rep.alphas,
                    nulls: &rep.nulls,
                    runtime,
                },
            )?;
            eprintln!("slopes {:?}", rep.slopes());
            Ok(Outcome::Ok)
        }
        Command::Landscape { which } => match which {
            LandscapeCmd::Procrustes { m, trials } => {
                let s = procrustes_descent_experiment(*m, *trials, seed)?;
                sink.json("procrustes.json", &s)?;
                eprintln!("{}/{} reached the global minimum", s.successes, trials);
                Ok(if s.stuck == 0 {
                    Outcome::Ok
                } else {
                    Outcome::Failed(format!("{} runs stuck", s.stuck))
                })
            }
            LandscapeCmd::MraSpurious {
                bandlimit,
                kappa,
                delta,
            } => {
                let rep = mra_spurious_search(*bandlimit, kappa, delta)?;
                sink.json("mra_spurious.json", &rep)?;
                eprintln!(
                    "{:?} rank {} lambda_min {:e}",
                    rep.classification, rep.projected_rank, rep.projected_spectrum[0]
                );
                Ok(Outcome::Ok)
            }
            LandscapeCmd::Variety { bandlimit, level } => {
                let m = make_model("mra", *bandlimit, &[], 0)?;
                let star = generic_point(&m, SeedStream::new(seed));
                let start = generic_point(&m, SeedStream::new(seed).split(1));
                let (chart, init) = match level {
                    2 => (VarietyChart::mra_mean(&star)?, start[1..].to_vec()),
                    3 => (
                        VarietyChart::mra_phases(&star)?,
                        start[..*bandlimit].to_vec(),
                    ),
                    _ => {
                        return Err(OrbitError::Domain(format!(
                            "level must be 2 or 3, got {level}"
                        )))
                    }
                };
                let rep = minimize_sk_on_variety(&chart, &init, StepPolicy::default())?;
                sink.json("variety.json", &rep)?;
                eprintln!(
                    "{:?} after {} iterations, s = {:e}",
                    rep.classification, rep.iterations, rep.value
                );
                Ok(if rep.classification == Classification::Unresolved {
                    Outcome::Failed("did not converge".into())
                } else {
                    Outcome::Ok
                })
            }
        },
        Command::Quadcheck {
            group,
            quad,
            degree,
            l_mean,
            l_pair,
            l_triple,
            tol_mean,
            tol_pair,
            tol_triple,
        } => {
            let rule = match group.as_str() {
                "so2" => so2_rule(quad.first().copied().unwrap_or(64))?,
                "so3" => {
                    if quad.len() != 3 {
                        return Err(OrbitError::Domain("--quad needs a,b,c for so3".into()));
                    }
                    so3_rule(quad[0], quad[1], quad[2])?
                }
                g => return Err(OrbitError::Domain(format!("unknown group {g}"))),
            };
            // SO(3) pair and triple sweeps grow like L^5 and L^9; --L only lowers them
            let (a, b, c) = match (degree, rule.group) {
                (Some(l), GroupKind::So2) => (*l, *l, *l),
                (Some(l), _) => (*l, (*l).min(*l_pair), (*l).min(*l_triple)),
                (None, _) => (*l_mean, *l_pair, *l_triple),
            };
            let q = identity_residuals(&rule, a, b, c)?;
            let mut csv = Vec::new();
            q.write_csv(&mut csv)?;
            sink.emit("quadcheck.csv", &csv)?;
            let mut breaches = Vec::new();
            for (id, tol) in [
                (Identity::Mean, tol_mean),
                (Identity::Pair, tol_pair),
                (Identity::Triple, tol_triple),
            ] {
                let worst = q.max(id);
                eprintln!("{id:?}: max residual {worst:e} (threshold {tol:e})");
                if !(worst <= *tol) {
                    breaches.push(format!("{id:?} {worst:e} > {tol:e}"));
                }
            }
            Ok(if breaches.is_empty() {
                Outcome::Ok
            } else {
                Outcome::Failed(breaches.join(", "))
            })
        }
        Command::Bispectrum { model } => {
            let m = model.build()?;
            let theta = generic_point(&m, SeedStream::new(seed));
            let b = bispectrum(&m, &theta)?;
            let mut csv = Vec::new();
            b.write_csv(&mut csv)?;
            sink.emit("bispectrum.csv", &csv)?;
            Ok(Outcome::Ok)
        }
        Command::Basis {
            n_rho,
            n_phi1,
            n_phi2,
            vmax,
            lmax,
            bumps,
            count,
        } => {
            let vol = synthetic_volume(*n_rho, *n_phi1, *n_phi2, *vmax, *lmax, *bumps, seed)?;
            let basis = radial_basis(&vol, *count)?;
            let mut csv = Vec::new();
            basis.write_csv(&mut csv)?;
            sink.emit("basis.csv", &csv)?;
            #[derive(Serialize)]
            struct Summary {
                captured: f64,
                total: f64,
                orthogonality_residual: f64,
                eigenvalues: Vec<f64>,
            }
            sink.json(
                "basis.json",
                &Summary {
                    captured: captured_power(&vol, &basis)?,
                    total: vol.total_power(),
                    orthogonality_residual: basis.orthogonality_residual(),
                    eigenvalues: basis.eigenvalues.clone(),
                },
            )?;
            Ok(Outcome::Ok)
        }
    }
}

fn load_config(cli: Cli) -> std::result::Result<ExperimentConfig, String> {
    if let Some(path) = &cli.json_config {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        if cli.out.is_some() {
            cfg.out = cli.out;
        }
        if cli.threads.is_some() {
            cfg.threads = cli.threads;
        }
        return Ok(cfg);
    }
    let command = cli.command.ok_or("no command given (see --help)")?;
    Ok(ExperimentConfig {
        seed: cli.seed.unwrap_or(1),
        threads: cli.threads,
        out: cli.out,
        command,
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cfg = match load_config(cli) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(64);
        }
    };
    if let Some(t) = cfg.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    if let Some(dir) = &cfg.out {
        let written = fs::create_dir_all(dir)
            .map_err(OrbitError::from)
            .and_then(|_| Ok(serde_json::to_string_pretty(&cfg)?))
            .and_then(|s| Ok(fs::write(dir.join("config.json"), s + "\n")?));
        if let Err(e) = written {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let sink = Sink {
        out: cfg.out.as_deref(),
    };
    match run(&cfg, &sink) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Failed(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
