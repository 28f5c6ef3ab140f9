//! Subcommand execution and artifact emission.
//!
//! Every run writes its data as CSV (one metadata comment line, then a
//! header row, floats with 17 significant digits) plus a `summary.json`
//! carrying the config echo and hash. Nothing in an artifact depends on
//! time or worker count, so identical (config, seed) runs are byte-identical.

use std::path::PathBuf;
use std::sync::Arc;

use serde_json::json;

use animalia_core::animal_model::ModelInstance;
use animalia_core::clan::{self, ClanLimits, ClanStatus, TailThresholds};
use animalia_core::connectivity::{self, SpaceTimeBox, SpaceTimePoint};
use animalia_core::environment::{self, Environment};
use animalia_core::lattice::Site;
use animalia_core::multiscale::{self, Feasibility, ScaledSequence};
use animalia_core::rng::derive_chain;
use animalia_core::stats;

use crate::config::{CommandSpec, ExperimentConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Simulation cap for stretched-exponential box heights.
const T_SIM_CAP: f64 = 1.0e4;

const REPLICA_LABEL: u64 = 0x11;
const DUMP_LABEL: u64 = 0x12;
const ROW_LABEL: u64 = 0x13;

pub struct RunOutput {
    pub artifacts: Vec<PathBuf>,
    pub summary_path: PathBuf,
}

fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_site(s: Site, d: usize) -> String {
    s.coords(d)
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(":")
}

struct Artifacts {
    dir: PathBuf,
    written: Vec<PathBuf>,
    meta: String,
}

impl Artifacts {
    fn new(config: &ExperimentConfig) -> anyhow::Result<Self> {
        let dir = config.out_dir();
        std::fs::create_dir_all(&dir)?;
        let meta = format!(
            "# animalia v{VERSION} command={} config_hash={} seed={}",
            config.command.name(),
            config.hash(),
            config.seed
        );
        Ok(Artifacts { dir, written: Vec::new(), meta })
    }

    fn write_text(&mut self, name: &str, body: &str) -> anyhow::Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, body)?;
        self.written.push(path.clone());
        Ok(path)
    }

    fn write_csv(&mut self, name: &str, note: &str, header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<PathBuf> {
        let mut body = String::new();
        body.push_str(&self.meta);
        if !note.is_empty() {
            body.push(' ');
            body.push_str(note);
        }
        body.push('\n');
        body.push_str(&header.join(","));
        body.push('\n');
        for row in rows {
            body.push_str(&row.join(","));
            body.push('\n');
        }
        self.write_text(name, &body)
    }

    fn write_summary(&mut self, config: &ExperimentConfig, results: serde_json::Value) -> anyhow::Result<PathBuf> {
        let summary = json!({
            "version": VERSION,
            "command": config.command.name(),
            "config_hash": config.hash(),
            "seed": config.seed,
            "replicas": config.replicas,
            "config": serde_json::to_value(config)?,
            "results": results,
        });
        self.write_text("summary.json", &format!("{}\n", serde_json::to_string_pretty(&summary)?))
    }
}

fn build_environment(config: &ExperimentConfig) -> anyhow::Result<(Arc<ModelInstance>, Environment)> {
    let region = config.region.to_region()?;
    let model = Arc::new(config.model.instantiate(region)?);
    let env = environment::sample_environment(&model, &config.disorder, config.seed)?;
    Ok((model, env))
}

/// Execute the configured command and write its artifacts.
pub fn run(config: &ExperimentConfig) -> anyhow::Result<RunOutput> {
    config.validate()?;
    let mut artifacts = Artifacts::new(config)?;
    let results = match &config.command {
        CommandSpec::Sample { lambda, dump_free_process } => {
            run_sample(config, &mut artifacts, lambda.as_ref(), dump_free_process.as_ref())?
        }
        CommandSpec::ClanStats { x, tl_thresholds, sd_thresholds, q, dump_first_clan } => {
            run_clan_stats(config, &mut artifacts, x, tl_thresholds, sd_thresholds, *q, *dump_first_clan)?
        }
        CommandSpec::Connectivity { x, t_x, t_y, distances, axis, in_box, pad } => {
            run_connectivity(config, &mut artifacts, x, *t_x, *t_y, distances, *axis, *in_box, *pad)?
        }
        CommandSpec::Regularity { sites, m, l, t_height, z } => {
            run_regularity(config, &mut artifacts, sites, *m, *l, *t_height, *z)?
        }
        CommandSpec::Multiscale { a, l0, scales, m, env_replicas, mc_replicas } => {
            run_multiscale(config, &mut artifacts, *a, *l0, *scales, *m, *env_replicas, *mc_replicas)?
        }
        CommandSpec::DisorderCheck { epsilon, a, size_fn } => {
            run_disorder_check(config, &mut artifacts, *epsilon, *a, *size_fn)?
        }
    };
    let summary_path = artifacts.write_summary(config, results)?;
    Ok(RunOutput { artifacts: artifacts.written.clone(), summary_path })
}

fn run_sample(
    config: &ExperimentConfig,
    artifacts: &mut Artifacts,
    lambda: Option<&crate::config::RegionSpec>,
    dump: Option<&crate::config::WindowSpec>,
) -> anyhow::Result<serde_json::Value> {
    let (model, env) = build_environment(config)?;
    let lambda = match lambda {
        Some(spec) => spec.to_region()?,
        None => *env.region(),
    };
    let limits = ClanLimits::default_for(env.region());
    let workers = config.workers.max(1) as usize;

    let samples = animalia_core::parallel::map_indexed(
        config.replicas as usize,
        workers,
        |i| -> animalia_core::Result<_> {
            clan::perfect_sample(&env, &lambda, limits, derive_chain(config.seed, &[REPLICA_LABEL, i as u64]))
        },
    );

    // first replica as the sparse sample artifact
    let mut first_lines = String::new();
    let mut statuses = std::collections::BTreeMap::<String, u64>::new();
    let mut occupied = vec![0u64; model.n_animals()];
    let mut mult_sum = vec![0u64; model.n_animals()];
    let mut closed = 0u64;
    let mut boundary_unclear = 0u64;
    for (i, s) in samples.iter().enumerate() {
        let s = s.as_ref().map_err(|e| anyhow::anyhow!(e.to_string()))?;
        *statuses.entry(format!("{:?}", s.status)).or_insert(0) += 1;
        if s.status == ClanStatus::Closed {
            closed += 1;
            for (id, mult) in s.config.present() {
                occupied[id as usize] += 1;
                mult_sum[id as usize] += u64::from(mult);
            }
        }
        if !s.boundary_clear {
            boundary_unclear += 1;
        }
        if i == 0 {
            for (id, mult) in s.config.present() {
                first_lines.push_str(&format!("{id} {mult}\n"));
            }
        }
    }
    artifacts.write_text("sample.txt", &first_lines)?;

    let d = model.d();
    let rows: Vec<Vec<String>> = model
        .animal_ids()
        .map(|id| {
            vec![
                id.to_string(),
                fmt_site(model.support(id)[0], d),
                model.data(id).kind.to_string(),
                fmt_f(if closed > 0 { occupied[id as usize] as f64 / closed as f64 } else { 0.0 }),
                fmt_f(if closed > 0 { mult_sum[id as usize] as f64 / closed as f64 } else { 0.0 }),
                closed.to_string(),
            ]
        })
        .collect();
    artifacts.write_csv(
        "occupancy.csv",
        "",
        &["animal_id", "anchor_site", "kind", "occupied_fraction", "mean_multiplicity", "closed_replicas"],
        &rows,
    )?;

    if let Some(w) = dump {
        let cfg = animalia_core::free_process::sample_window(
            &env,
            *env.region(),
            w.t0,
            w.t1,
            derive_chain(config.seed, &[DUMP_LABEL]),
        )?;
        artifacts.write_text("cylinders.txt", &cfg.dump())?;
    }

    Ok(json!({
        "statuses": statuses,
        "closed": closed,
        "boundary_unclear": boundary_unclear,
        "animals": model.n_animals(),
    }))
}

fn default_q(d: usize) -> f64 {
    match multiscale::feasible_parameters(d, None) {
        Feasibility::Feasible(p) => p.q,
        Feasibility::Infeasible { .. } => 1.5,
    }
}

#[allow(clippy::too_many_arguments)]
fn run_clan_stats(
    config: &ExperimentConfig,
    artifacts: &mut Artifacts,
    x: &[i32],
    tl_thresholds: &[f64],
    sd_thresholds: &[f64],
    q: Option<f64>,
    dump_first_clan: bool,
) -> anyhow::Result<serde_json::Value> {
    let (model, env) = build_environment(config)?;
    let q = q.unwrap_or_else(|| default_q(model.d()));
    let table = clan::clan_tail_estimates(
        &env,
        Site::new(x),
        &TailThresholds { tl: tl_thresholds.to_vec(), sd: sd_thresholds.to_vec() },
        config.replicas,
        config.seed,
        config.workers.max(1) as usize,
    )?;
    if dump_first_clan {
        let limits = ClanLimits::default_for(env.region());
        let clan = clan::clan_of_point(&env, Site::new(x), 0.0, limits, derive_chain(config.seed, &[0]));
        artifacts.write_text("clan_example.txt", &clan.dump(model.d()))?;
    }

    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            let fit_x = if r.stat == "TL" {
                (1.0 + r.threshold).ln().powf(q)
            } else {
                r.threshold
            };
            vec![
                r.stat.to_string(),
                fmt_f(r.threshold),
                fmt_f(fit_x),
                r.exceed.to_string(),
                r.replicas.to_string(),
                fmt_f(r.estimate),
                fmt_f(r.ci_low),
                fmt_f(r.ci_high),
            ]
        })
        .collect();
    artifacts.write_csv(
        "clan_tails.csv",
        &format!("q={}", fmt_f(q)),
        &["stat", "threshold", "fit_abscissa", "exceed", "replicas", "estimate", "ci_low", "ci_high"],
        &rows,
    )?;

    // fitted slopes over the positive entries
    let fit_for = |stat: &str| -> Option<stats::LineFit> {
        let pts: Vec<(f64, f64)> = table
            .rows
            .iter()
            .filter(|r| r.stat == stat && r.estimate > 0.0)
            .map(|r| {
                let fx = if stat == "TL" { (1.0 + r.threshold).ln().powf(q) } else { r.threshold };
                (fx, r.estimate.ln())
            })
            .collect();
        let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        stats::linear_fit(&xs, &ys)
    };
    let sd_fit = fit_for("SD");
    let tl_fit = fit_for("TL");
    Ok(json!({
        "q": q,
        "mean_ss": table.mean_ss,
        "mean_ss_stderr": table.mean_ss_stderr,
        "closed": table.closed,
        "excluded": table.excluded,
        "sd_log_slope": sd_fit.map(|f| f.slope),
        "sd_fit_r2": sd_fit.map(|f| f.r2),
        "tl_log_slope_vs_lnq": tl_fit.map(|f| f.slope),
        "tl_fit_r2": tl_fit.map(|f| f.r2),
    }))
}

#[allow(clippy::too_many_arguments)]
fn run_connectivity(
    config: &ExperimentConfig,
    artifacts: &mut Artifacts,
    x: &[i32],
    t_x: f64,
    t_y: f64,
    distances: &[i32],
    axis: usize,
    in_box: Option<crate::config::BoxSpec>,
    pad: f64,
) -> anyhow::Result<serde_json::Value> {
    let (model, env) = build_environment(config)?;
    let d = model.d();
    let root = SpaceTimePoint { x: Site::new(x), t: t_x };
    let targets: Vec<SpaceTimePoint> = distances
        .iter()
        .map(|&r| SpaceTimePoint { x: root.x.step(axis, r), t: t_y })
        .collect();
    let boxed = in_box.map(|b| SpaceTimeBox {
        center: root,
        l: b.l,
        t_height: b.t_height,
        delta: model.geometry().delta,
    });
    let estimates = connectivity::estimate_g_many(
        &env,
        root,
        &targets,
        boxed,
        config.replicas,
        config.seed,
        config.workers.max(1) as usize,
        pad,
    )?;
    let (l_col, t_col) = match in_box {
        Some(b) => (b.l.to_string(), fmt_f(b.t_height)),
        None => (String::new(), String::new()),
    };
    let rows: Vec<Vec<String>> = targets
        .iter()
        .zip(&estimates)
        .map(|(y, e)| {
            let (lo, hi) = e.ci(1.96);
            vec![
                fmt_site(root.x, d),
                fmt_site(y.x, d),
                fmt_f(t_x),
                fmt_f(t_y),
                l_col.clone(),
                t_col.clone(),
                e.trials.to_string(),
                fmt_f(e.p_hat()),
                fmt_f(lo),
                fmt_f(hi),
                config.seed.to_string(),
            ]
        })
        .collect();
    artifacts.write_csv(
        "connectivity.csv",
        &format!("pad={} window_bottom={}", fmt_f(pad), fmt_f(t_y - pad)),
        &["x", "y", "t_x", "t_y", "l", "t", "replicas", "estimate", "ci_low", "ci_high", "seed"],
        &rows,
    )?;
    Ok(json!({
        "targets": targets.len(),
        "estimates": estimates.iter().map(|e| e.p_hat()).collect::<Vec<_>>(),
    }))
}

fn run_regularity(
    config: &ExperimentConfig,
    artifacts: &mut Artifacts,
    sites: &[Vec<i32>],
    m: f64,
    l: i32,
    t_height: Option<f64>,
    z: f64,
) -> anyhow::Result<serde_json::Value> {
    let (model, env) = build_environment(config)?;
    let t_height = match t_height {
        Some(t) => t,
        None => {
            let nu = match multiscale::feasible_parameters(model.d(), None) {
                Feasibility::Feasible(p) => p.nu,
                Feasibility::Infeasible { first_violation } => anyhow::bail!(
                    "no default box height available ({first_violation}); set t_height"
                ),
            };
            let t = (l as f64).powf(nu).exp();
            if t > T_SIM_CAP {
                anyhow::bail!(
                    "default box height exp({l}^{nu:.4}) = {t:.3e} exceeds the simulation cap; set t_height explicitly"
                );
            }
            t
        }
    };
    let d = model.d();
    let mut rows = Vec::new();
    let mut verdicts = Vec::new();
    for (i, coords) in sites.iter().enumerate() {
        let v = connectivity::is_regular(
            &env,
            Site::new(coords),
            m,
            l,
            t_height,
            config.replicas,
            z,
            derive_chain(config.seed, &[ROW_LABEL, i as u64]),
            config.workers.max(1) as usize,
        )?;
        let (lo, hi) = v.estimate.ci(z);
        rows.push(vec![
            fmt_site(v.site, d),
            fmt_f(v.m),
            v.l.to_string(),
            fmt_f(v.t_height),
            fmt_f(v.estimate.mean),
            fmt_f(v.estimate.stderr),
            fmt_f(lo),
            fmt_f(hi),
            fmt_f(v.threshold),
            format!("{:?}", v.verdict).to_lowercase(),
        ]);
        verdicts.push(v);
    }
    artifacts.write_csv(
        "regularity.csv",
        "vertical_face=exact-interval-measure",
        &["site", "m", "l", "t_height", "estimate", "stderr", "ci_low", "ci_high", "threshold", "verdict"],
        &rows,
    )?;
    let regular = verdicts.iter().filter(|v| v.counts_as_regular()).count();
    Ok(json!({
        "sites": sites.len(),
        "regular": regular,
        "t_height": t_height,
    }))
}

#[allow(clippy::too_many_arguments)]
fn run_multiscale(
    config: &ExperimentConfig,
    artifacts: &mut Artifacts,
    a: Option<f64>,
    l0: f64,
    scales: Option<u32>,
    m: Option<f64>,
    env_replicas: Option<u32>,
    mc_replicas: Option<u32>,
) -> anyhow::Result<serde_json::Value> {
    let region = config.region.to_region()?;
    let model = Arc::new(config.model.instantiate(region)?);
    let feasibility = multiscale::feasible_parameters(model.d(), a);
    artifacts.write_text(
        "multiscale_params.json",
        &format!("{}\n", serde_json::to_string_pretty(&feasibility)?),
    )?;
    let params = match feasibility {
        Feasibility::Feasible(p) => p,
        Feasibility::Infeasible { first_violation } => {
            return Ok(json!({ "feasible": false, "first_violation": first_violation }));
        }
    };
    let sequence = ScaledSequence::new(l0, params.alpha, params.nu)?;
    let n_scales = scales.unwrap_or(6);
    let m = m.unwrap_or(params.m_inf);
    let env_replicas = env_replicas.unwrap_or(0);
    let mc_replicas = mc_replicas.unwrap_or(200);

    let mut rows = Vec::new();
    let mut empirical = Vec::new();
    for k in 0..n_scales {
        let log10_l = sequence.log10_scale(k);
        let log10_lnt = sequence.log10_ln_t(k);
        let sim = sequence.simulatable(k, T_SIM_CAP);
        let (mut est, mut lo, mut hi, mut target) =
            (String::new(), String::new(), String::new(), String::new());
        let mut note = match &sim {
            Ok(_) => String::from("simulatable"),
            Err(e) => e.to_string().replace(',', ";"),
        };
        if env_replicas > 0 {
            if let Ok((l_k, t_k)) = sim {
                let g = multiscale::empirical_good_probability(
                    &model,
                    &config.disorder,
                    m,
                    l_k.round() as i32,
                    t_k,
                    params.p,
                    env_replicas,
                    mc_replicas,
                    derive_chain(config.seed, &[ROW_LABEL, 7, k as u64]),
                    config.workers.max(1) as usize,
                )?;
                est = fmt_f(g.estimate);
                lo = fmt_f(g.ci_low);
                hi = fmt_f(g.ci_high);
                target = fmt_f(g.target);
                note = format!("meets_target={}", g.meets_target);
                empirical.push(json!({
                    "k": k, "estimate": g.estimate, "target": g.target,
                    "meets_target": g.meets_target,
                }));
            }
        }
        rows.push(vec![
            k.to_string(),
            fmt_f(log10_l),
            sequence.scale(k).map(fmt_f).unwrap_or_default(),
            fmt_f(log10_lnt),
            est,
            lo,
            hi,
            target,
            note,
        ]);
    }
    artifacts.write_csv(
        "multiscale_scales.csv",
        &format!("alpha={} nu={}", fmt_f(params.alpha), fmt_f(params.nu)),
        &["scale", "log10_l", "l", "log10_ln_t", "estimate", "ci_low", "ci_high", "target", "note"],
        &rows,
    )?;
    Ok(json!({
        "feasible": true,
        "alpha": params.alpha,
        "a": params.a,
        "q": params.q,
        "empirical": empirical,
    }))
}

fn run_disorder_check(
    config: &ExperimentConfig,
    artifacts: &mut Artifacts,
    epsilon: f64,
    a: Option<f64>,
    size_fn: animalia_core::animal_model::SizeFunction,
) -> anyhow::Result<serde_json::Value> {
    let region = config.region.to_region()?;
    let model = Arc::new(config.model.instantiate(region)?);
    let workers = config.workers.max(1) as usize;
    let report = environment::check_hypotheses(
        &model,
        &config.disorder,
        size_fn,
        epsilon,
        a,
        config.replicas,
        config.seed,
        workers,
    )?;
    artifacts.write_text(
        "disorder_report.json",
        &format!("{}\n", serde_json::to_string_pretty(&report)?),
    )?;

    // one diagnostics row per replica environment
    let rows_data = animalia_core::parallel::map_indexed(
        config.replicas as usize,
        workers,
        |i| -> animalia_core::Result<(f64, f64, f64)> {
            let env = environment::sample_environment(
                &model,
                &config.disorder,
                derive_chain(config.seed, &[ROW_LABEL, 9, i as u64]),
            )?;
            let r = *env.region();
            Ok((
                environment::upsilon(&env, &r)?,
                environment::psi(&env, size_fn, &r)?,
                environment::xi(&env, &r)?,
            ))
        },
    );
    let mut rows = Vec::new();
    for (i, r) in rows_data.into_iter().enumerate() {
        let (u, p, x) = r.map_err(|e| anyhow::anyhow!(e.to_string()))?;
        rows.push(vec![i.to_string(), fmt_f(u), fmt_f(p), fmt_f(x)]);
    }
    artifacts.write_csv(
        "disorder_replicas.csv",
        "values_are_window_suprema",
        &["replica", "upsilon", "psi", "xi"],
        &rows,
    )?;
    Ok(serde_json::to_value(&report)?)
}
