use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use hgscale::baselines::ThresholdConfig;
use hgscale::erl::EsConfig;
use hgscale::experiment::{self, PolicyKind, PolicySpec, Scenario, ScenarioConfig, TraceSplit};
use hgscale::nn::{LayerAblation, ModelConfig, ParamSet};
use hgscale::report::{append_metrics, emit_report, load_report, write_curve, RunReport};
use hgscale::sim::TransientConfig;

#[derive(Parser)]
#[command(
    name = "hgscale",
    version,
    about = "Train, evaluate and compare microservice autoscalers"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Global {
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file (train) or directory (evaluate, sweep, report).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// 180 s horizontal and 10 s vertical scaling delays.
    #[arg(long, global = true)]
    worst_case: bool,
    #[arg(long, global = true)]
    ablate_zeta: bool,
    #[arg(long, global = true, value_parser = ["none", "pm", "pm+vm"])]
    ablate_layers: Option<String>,
    /// Replace the scenario's trace file.
    #[arg(long, global = true)]
    trace: Option<PathBuf>,
    /// Train on the first N units and evaluate on the rest.
    #[arg(long, global = true)]
    train_split: Option<usize>,
    #[arg(long, global = true)]
    sma_window: Option<usize>,
    /// Spread arrivals randomly within each unit.
    #[arg(long, global = true)]
    jitter_seed: Option<u64>,
}

#[derive(Args, Clone)]
struct EsArgs {
    #[arg(long, default_value_t = 40)]
    pop: usize,
    #[arg(long, default_value_t = 1000)]
    gens: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 0.05)]
    sigma: f64,
    #[arg(long)]
    rank_shaping: bool,
    #[arg(long)]
    mirrored: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the learned policy with evolution strategies.
    Train {
        #[command(flatten)]
        es: EsArgs,
    },
    /// Replay the evaluation split under one policy.
    Evaluate {
        #[arg(long)]
        policy: PolicyKind,
        /// Trained parameters, required for hgraphscale.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Evaluate policies over a grid of budgets and penalties.
    Sweep {
        #[arg(long, value_delimiter = ',', default_values_t = [200.0])]
        budget: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [100.0])]
        rho: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [PolicyKind::Aws, PolicyKind::ProScale])]
        policy: Vec<PolicyKind>,
        /// Parameters for hgraphscale; without them it is trained per setting.
        #[arg(long)]
        params: Option<PathBuf>,
        #[command(flatten)]
        es: EsArgs,
    },
    /// Summarise report directories into one metrics table.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
}

impl Global {
    fn scenario_config(&self) -> Result<(ScenarioConfig, PathBuf)> {
        let path = self.scenario.as_ref().context("--scenario is required")?;
        let mut cfg = ScenarioConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        if let Some(t) = &self.trace {
            // Taken relative to the working directory, not the scenario.
            cfg.trace_file = std::path::absolute(t)?;
        }
        if let Some(n) = self.train_split {
            cfg.split = TraceSplit::At(n);
        }
        if let Some(w) = self.sma_window {
            cfg.sma_window = w;
        }
        if self.jitter_seed.is_some() {
            cfg.jitter_seed = self.jitter_seed;
        }
        if self.worst_case {
            cfg.transient = TransientConfig::WORST_CASE;
        }
        Ok((cfg, base))
    }

    fn model_config(&self) -> Result<ModelConfig> {
        let ablation = match &self.ablate_layers {
            Some(s) => s.parse::<LayerAblation>()?,
            None => LayerAblation::None,
        };
        Ok(ModelConfig {
            ablation,
            ablate_zeta: self.ablate_zeta,
            ..ModelConfig::default()
        })
    }
}

impl EsArgs {
    fn config(&self, seed: u64) -> EsConfig {
        EsConfig {
            pop: self.pop,
            max_gen: self.gens,
            lr: self.lr,
            sigma: self.sigma,
            seed,
            rank_shaping: self.rank_shaping,
            mirrored: self.mirrored,
            ..EsConfig::default()
        }
    }
}

fn summary(r: &RunReport) -> String {
    let art = r
        .art_ms
        .map_or_else(|| "no requests".to_string(), |a| format!("{a:.2} ms"));
    format!(
        "{} {} [{}]: ART {art}, cost {:.4} USD, violation {:.2}%, objective {:.3}, actions v/h/n {}/{}/{}",
        r.scenario,
        r.policy,
        r.variant,
        r.cost_usd,
        r.violation_pct,
        r.objective,
        r.breakdown.vertical,
        r.breakdown.horizontal,
        r.breakdown.noop
    )
}

fn load_params(path: &Path, g: &Global) -> Result<ParamSet> {
    let mut p = ParamSet::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(s) = &g.ablate_layers {
        let want: LayerAblation = s.parse()?;
        if want != p.config.ablation {
            bail!(
                "{} was trained with layer ablation {}, not {want}",
                path.display(),
                p.config.ablation
            );
        }
    }
    if g.ablate_zeta {
        p.config.ablate_zeta = true;
    }
    Ok(p)
}

fn train(g: &Global, es: &EsArgs, scenario: &Scenario) -> Result<experiment::Trained> {
    let cfg = es.config(g.seed);
    let model = g.model_config()?;
    log::info!(
        "training on {} ({} units): N={} gens={} lr={} sigma={}",
        scenario.name,
        scenario.train.len(),
        cfg.pop,
        cfg.max_gen,
        cfg.lr,
        cfg.sigma
    );
    Ok(experiment::train(scenario, &model, &cfg)?)
}

fn spec_for(kind: PolicyKind, params: Option<ParamSet>) -> Result<PolicySpec> {
    Ok(match kind {
        PolicyKind::Learned => PolicySpec::Learned(params.context("hgraphscale needs --params")?),
        PolicyKind::Aws => PolicySpec::Aws(ThresholdConfig::default()),
        PolicyKind::ProScale => PolicySpec::ProScale,
        PolicyKind::Random => PolicySpec::Random,
        PolicyKind::Noop => PolicySpec::Noop,
    })
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.cmd {
        Cmd::Train { es } => {
            let (cfg, base) = g.scenario_config()?;
            let scenario = Scenario::from_config(&cfg, &base)?;
            let trained = train(g, es, &scenario)?;
            let out = g.out.clone().unwrap_or_else(|| PathBuf::from("params.bin"));
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            trained.params.save(&out)?;
            let curve = out.with_extension("curve.csv");
            write_curve(&trained.outcome.curve, &curve)?;
            let b = trained.outcome.best;
            println!(
                "best fitness {:.3} (ART {}, cost {:.4}); parameters in {}, curve in {}",
                b.fitness,
                b.art_ms.map_or_else(|| "n/a".into(), |a| format!("{a:.2} ms")),
                b.cost_usd,
                out.display(),
                curve.display()
            );
        }
        Cmd::Evaluate { policy, params } => {
            let (cfg, base) = g.scenario_config()?;
            let scenario = Scenario::from_config(&cfg, &base)?;
            let params = params.as_deref().map(|p| load_params(p, g)).transpose()?;
            let spec = spec_for(*policy, params)?;
            let report = experiment::run_experiment(&scenario, &spec, g.seed)?;
            let out = g.out.clone().unwrap_or_else(|| PathBuf::from("report"));
            emit_report(&report, &out)?;
            println!("{}", summary(&report));
        }
        Cmd::Sweep {
            budget,
            rho,
            policy,
            params,
            es,
        } => {
            let (cfg, base) = g.scenario_config()?;
            let out = g.out.clone().unwrap_or_else(|| PathBuf::from("sweep"));
            std::fs::create_dir_all(&out)?;
            let fixed = params.as_deref().map(|p| load_params(p, g)).transpose()?;
            for &b in budget {
                for &r in rho {
                    let cfg = ScenarioConfig {
                        budget_usd: b,
                        rho: r,
                        ..cfg.clone()
                    };
                    let scenario = Scenario::from_config(&cfg, &base)?;
                    for &kind in policy {
                        let (params, curve) = match (kind, &fixed) {
                            (PolicyKind::Learned, None) => {
                                let t = train(g, es, &scenario)?;
                                (Some(t.params), t.outcome.curve)
                            }
                            (_, p) => (p.clone(), Vec::new()),
                        };
                        let spec = spec_for(kind, params)?;
                        let mut report = experiment::run_experiment(&scenario, &spec, g.seed)?;
                        report.curve = curve;
                        let dir = out.join(format!("{kind}-b{b}-r{r}"));
                        emit_report(&report, &dir)?;
                        append_metrics(&report, &out.join("metrics.csv"))?;
                        println!("budget {b} rho {r}: {}", summary(&report));
                    }
                }
            }
        }
        Cmd::Report { dirs } => {
            let mut reports = Vec::new();
            for d in dirs {
                reports.push(load_report(d).with_context(|| format!("reading {}", d.display()))?);
            }
            for r in &reports {
                println!("{}", summary(r));
            }
            if let Some(out) = &g.out {
                std::fs::create_dir_all(out)?;
                let path = out.join("metrics.csv");
                if path.exists() {
                    std::fs::remove_file(&path)?;
                }
                for r in &reports {
                    append_metrics(r, &path)?;
                }
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
