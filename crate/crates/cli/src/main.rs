use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use eninet::geometry::{build_graph, sub, MolecularGraph, Vec3};
use eninet::io::{read_extxyz, RunConfig};
use eninet::linegraph::{aggregate_directional, build_triplets, DirectionalWeights, LineGraphLevel};
use eninet::model::{load_model, save_checkpoint, Eninet, Head, ModelConfig, Mutation};
use eninet::params::ModelParams;
use eninet::training::train;
use eninet::verify::{
    certify_equivariance, check_forces, compare_with_oracle, fig1_separability, fixture, model_evaluator,
    random_molecules, OrthogonalSampler, SampleMode, Variant,
};

#[derive(Parser)]
#[command(name = "eninet", about = "Equivariant many-body message passing for molecules")]
struct Cli {
    /// Seed for every random choice made by the command (default 0; for
    /// `train` it overrides the seeds in the config when given).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output files; nothing is written elsewhere.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a JSON run configuration.
    Train { config: PathBuf },
    /// Predict every frame of an extended-XYZ file.
    Predict { checkpoint: PathBuf, xyz: PathBuf },
    /// Certify O(3) equivariance of every model head.
    CheckEquivariance {
        checkpoint: Option<PathBuf>,
        /// Use randomly initialized small models instead of a checkpoint.
        #[arg(long, conflicts_with = "checkpoint")]
        random: bool,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 20)]
        molecules: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Add a bias to the vector path (negative control; must fail).
        #[arg(long)]
        mutant: bool,
    },
    /// Compare analytic forces with central finite differences.
    Gradcheck {
        checkpoint: Option<PathBuf>,
        #[arg(long, conflicts_with = "checkpoint")]
        random: bool,
        #[arg(long, default_value_t = 10)]
        molecules: usize,
        #[arg(long, default_value_t = 1e-4)]
        step: f64,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
    /// Angle blindness of bond-only aggregation on the collinear and
    /// trigonal fixtures, and its removal by triplets.
    DemoFig1 {
        #[arg(long, default_value_t = 100)]
        seeds: usize,
    },
    /// Line-graph hierarchy of each frame, checked against a brute-force
    /// construction.
    Linegraph {
        xyz: PathBuf,
        #[arg(long, default_value_t = 1)]
        depth: usize,
        #[arg(long, default_value_t = 5.0)]
        cutoff: f64,
        #[arg(long, default_value_t = 32)]
        n_max: usize,
    },
}

/// Validation failures exit with 1, everything else that goes wrong with 2.
enum Failure {
    Validation(String),
    Usage(String),
}

impl<E: std::error::Error> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("validation failed: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    let out = cli.out.as_deref();
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::Train { config } => cmd_train(&config, cli.seed, out),
        Command::Predict { checkpoint, xyz } => cmd_predict(&checkpoint, &xyz, out),
        Command::CheckEquivariance {
            checkpoint,
            random,
            trials,
            molecules,
            tol,
            mutant,
        } => {
            let models = load_models(checkpoint.as_deref(), random, seed)?;
            cmd_equivariance(models, trials, molecules, tol, mutant, seed, out)
        }
        Command::Gradcheck {
            checkpoint,
            random,
            molecules,
            step,
            tol,
        } => {
            let models = load_models(checkpoint.as_deref(), random, seed)?;
            cmd_gradcheck(models, molecules, step, tol, seed, out)
        }
        Command::DemoFig1 { seeds } => cmd_fig1(seeds, out),
        Command::Linegraph {
            xyz,
            depth,
            cutoff,
            n_max,
        } => cmd_linegraph(&xyz, depth, cutoff, n_max),
    }
}

fn write_output(out: Option<&Path>, name: &str, contents: &str) -> Outcome {
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(name), contents)?;
    }
    Ok(())
}

fn load_models(checkpoint: Option<&Path>, random: bool, seed: u64) -> Result<Vec<(Eninet, ModelParams)>, Failure> {
    match (checkpoint, random) {
        (Some(p), false) => Ok(vec![load_model(p)?]),
        (None, true) => [Head::ScalarForce, Head::Polarizability]
            .into_iter()
            .map(|head| {
                let model = Eninet::new(ModelConfig {
                    head,
                    ..ModelConfig::small()
                })?;
                let params = model.init_params(seed)?;
                Ok((model, params))
            })
            .collect(),
        _ => Err(Failure::Usage("give a checkpoint path or --random".into())),
    }
}

fn cmd_train(config: &Path, seed: Option<u64>, out: Option<&Path>) -> Outcome {
    let out = out.ok_or_else(|| Failure::Usage("train needs --out DIR".into()))?;
    let mut cfg = RunConfig::load(config)?;
    if let Some(seed) = seed {
        cfg.train.seed = seed;
        cfg.init_seed = seed;
    }
    if cfg.dataset.as_os_str().is_empty() {
        return Err(Failure::Usage("config has no dataset".into()));
    }
    let data = read_extxyz(&cfg.dataset)?;
    fs::create_dir_all(out)?;
    let mut model = Eninet::new(cfg.model.clone())?;
    let params = model.init_params(cfg.init_seed)?;
    let mut metrics = fs::File::create(out.join("metrics.jsonl"))?;
    let mut write_err = None;
    let result = train(&mut model, params, &data, &cfg.train, |r| {
        let line = serde_json::to_string(r).expect("serializable");
        if let Err(e) = writeln!(metrics, "{line}") {
            write_err.get_or_insert(e);
        }
    });
    if let Some(e) = write_err {
        return Err(e.into());
    }
    let outcome = match result {
        Ok(o) => o,
        Err(eninet::Error::Diverged { epoch, last_good }) => {
            save_checkpoint(&out.join("last_good.ckpt"), &model.config, &last_good)?;
            return Err(Failure::Validation(format!(
                "training diverged at epoch {epoch}; last good parameters saved"
            )));
        }
        Err(e) => return Err(e.into()),
    };
    save_checkpoint(&out.join("model.ckpt"), &model.config, &outcome.params)?;
    let mut resolved = cfg.clone();
    resolved.model = model.config.clone();
    fs::write(out.join("config.json"), resolved.to_json())?;
    let last = outcome.history.iter().rev().filter(|r| r.split == "train");
    for r in last.take(2) {
        println!("epoch {} train {} mae={:.6e} rmse={:.6e}", r.epoch, r.target, r.mae, r.rmse);
    }
    println!("best epoch {}; checkpoint written to {}", outcome.best_epoch, out.join("model.ckpt").display());
    Ok(())
}

fn cmd_predict(checkpoint: &Path, xyz: &Path, out: Option<&Path>) -> Outcome {
    let (model, params) = load_model(checkpoint)?;
    let mols = read_extxyz(xyz)?;
    let mut lines = String::new();
    for (k, m) in mols.iter().enumerate() {
        let p = model.predict(&params, &[m])?.remove(0);
        let rec = json!({
            "frame": k,
            "scalar": p.scalar,
            "vector": p.vector,
            "forces": p.forces,
            "polarizability": p.polarizability,
        });
        lines.push_str(&rec.to_string());
        lines.push('\n');
    }
    print!("{lines}");
    write_output(out, "predictions.jsonl", &lines)
}

fn cmd_equivariance(
    models: Vec<(Eninet, ModelParams)>,
    trials: usize,
    n_mols: usize,
    tol: f64,
    mutant: bool,
    seed: u64,
    out: Option<&Path>,
) -> Outcome {
    let mols = random_molecules(seed, n_mols, 3, 20);
    let mut verdicts = Vec::new();
    let mut passed = true;
    for (model, params) in models {
        let model = if mutant {
            model.with_mutation(Mutation::VectorBias([0.3, -0.2, 0.5]))
        } else {
            model
        };
        let eval = model_evaluator(&model, &params);
        let mut sampler = OrthogonalSampler::new(seed, SampleMode::Mixed);
        let cert = certify_equivariance(&eval, &mols, &mut sampler, trials, tol)?;
        println!("head {:?}", model.config.head);
        print!("{}", cert.report());
        passed &= cert.passed;
        verdicts.push(json!({"head": format!("{:?}", model.config.head), "certificate": cert}));
    }
    let doc = json!({"passed": passed, "trials": trials, "molecules": n_mols, "tolerance": tol, "heads": verdicts});
    write_output(out, "equivariance.json", &serde_json::to_string_pretty(&doc).expect("json"))?;
    if passed {
        Ok(())
    } else {
        Err(Failure::Validation("equivariance deviation above tolerance".into()))
    }
}

fn cmd_gradcheck(models: Vec<(Eninet, ModelParams)>, n_mols: usize, step: f64, tol: f64, seed: u64, out: Option<&Path>) -> Outcome {
    let (model, params) = models
        .into_iter()
        .find(|(m, _)| m.config.head == Head::ScalarForce)
        .ok_or_else(|| Failure::Usage("gradcheck needs a model with a force head".into()))?;
    let mols = random_molecules(seed, n_mols, 3, 12);
    let mut ok = true;
    let mut rows = Vec::new();
    for (k, m) in mols.iter().enumerate() {
        let c = check_forces(&model, &params, m, step)?;
        let pass = c.relative_error < tol && c.net_force < 1e-8;
        ok &= pass;
        println!(
            "molecule {k:>2} atoms {:>2} rel_err={:.3e} max_abs={:.3e} |sum F|={:.3e} {}",
            m.n_atoms(),
            c.relative_error,
            c.max_abs_error,
            c.net_force,
            if pass { "PASS" } else { "FAIL" }
        );
        rows.push(json!({"molecule": k, "check": c, "passed": pass}));
    }
    println!("verdict: {}", if ok { "PASS" } else { "FAIL" });
    let doc = json!({"passed": ok, "step": step, "tolerance": tol, "molecules": rows});
    write_output(out, "gradcheck.json", &serde_json::to_string_pretty(&doc).expect("json"))?;
    if ok {
        Ok(())
    } else {
        Err(Failure::Validation("forces disagree with finite differences".into()))
    }
}

fn fmt_vec(v: Vec3) -> String {
    format!("[{:+.6}, {:+.6}, {:+.6}]", v[0], v[1], v[2])
}

/// Center-atom aggregate with unit bond weights and one pair weight on the
/// bonds arriving from atoms `x` and `y`.
fn center_aggregate(g: &MolecularGraph, pair: Option<(usize, usize)>, w: f64) -> Result<Vec3, Failure> {
    let t = build_triplets(g)?;
    let pairs = t.unordered();
    let pair_w = pairs
        .iter()
        .map(|&(a, b)| {
            let srcs = (g.edges[a].src.min(g.edges[b].src), g.edges[a].src.max(g.edges[b].src));
            match pair {
                Some(p) if g.edges[a].dst == 0 && srcs == p => w,
                _ => 0.0,
            }
        })
        .collect();
    let weights = DirectionalWeights {
        bond: vec![1.0; g.n_edges()],
        pair: pair_w,
    };
    Ok(aggregate_directional(g, &t, &weights)?[0])
}

fn cmd_fig1(seeds: usize, out: Option<&Path>) -> Outcome {
    let cutoff = 5.0;
    let a = fixture("fig1a_collinear_90").expect("fixture");
    let b = fixture("fig1a_collinear_60").expect("fixture");
    let c = fixture("fig1b_trigonal").expect("fixture");
    let (ga, gb, gc) = (a.graph(cutoff)?, b.graph(cutoff)?, c.graph(cutoff)?);
    // atoms: 0 = i, 1 = j, 2 = k, 3 = m
    let r_mi = sub(a.molecule.positions[0], a.molecule.positions[3]);
    let agg_a = center_aggregate(&ga, None, 0.0)?;
    let agg_b = center_aggregate(&gb, None, 0.0)?;
    println!("bond-only aggregate onto i (r_ji + r_ki + r_mi):");
    println!("  {:<20} {}", a.name, fmt_vec(agg_a));
    println!("  {:<20} {}", b.name, fmt_vec(agg_b));
    println!("  {:<20} {}", "r_mi", fmt_vec(r_mi));
    let ta = center_aggregate(&ga, Some((1, 3)), 1.0)?;
    let tb = center_aggregate(&gb, Some((1, 3)), 1.0)?;
    println!("with unit weight on the (mi, ji) bond pair:");
    println!("  {:<20} {}", a.name, fmt_vec(ta));
    println!("  {:<20} {}", b.name, fmt_vec(tb));
    // atoms: 0 = i, 1..=3 = j, k, l, 4 = m
    let agg_c = center_aggregate(&gc, None, 0.0)?;
    let r_mi_c = sub(c.molecule.positions[0], c.molecule.positions[4]);
    println!("  {:<20} {}  (r_mi = {})", c.name, fmt_vec(agg_c), fmt_vec(r_mi_c));

    let gap = |x: Vec3, y: Vec3| eninet::geometry::norm(sub(x, y));
    let aggregate_ok = gap(agg_a, agg_b) < 1e-12 && gap(agg_a, r_mi) < 1e-12 && gap(agg_c, r_mi_c) < 1e-12 && gap(ta, tb) > 1e-6;

    let bond = fig1_separability(Variant::BondOnly, seeds, 1e-6)?;
    let trip = fig1_separability(Variant::WithTriplets, seeds, 1e-6)?;
    let bond_ok = bond.indistinguishable(1e-12);
    let need = (seeds * 95).div_ceil(100);
    let trip_ok = trip.separated >= need;
    println!(
        "model bond_only:     aggregate gap {:.3e}, pooled gap {:.3e}, trigonal offset {:.3e} -> {}",
        bond.max_aggregate_gap,
        bond.max_pooled_gap,
        bond.trigonal_offset,
        if bond_ok { "indistinguishable" } else { "distinguishable" }
    );
    println!(
        "model with_triplets: separated {}/{} seeds (> {:.0e}) -> {}",
        trip.separated,
        seeds,
        trip.separation_tol,
        if trip_ok { "distinguishable" } else { "indistinguishable" }
    );
    let passed = aggregate_ok && bond_ok && trip_ok;
    println!("verdict: {}", if passed { "PASS" } else { "FAIL" });
    let doc = json!({
        "passed": passed,
        "aggregates": {"fig1a_90": agg_a, "fig1a_60": agg_b, "r_mi": r_mi, "fig1b": agg_c,
                        "fig1a_90_pair": ta, "fig1a_60_pair": tb},
        "bond_only": bond,
        "with_triplets": trip,
    });
    write_output(out, "fig1.json", &serde_json::to_string_pretty(&doc).expect("json"))?;
    if passed {
        Ok(())
    } else {
        Err(Failure::Validation("separability expectations not met".into()))
    }
}

fn cmd_linegraph(xyz: &Path, depth: usize, cutoff: f64, n_max: usize) -> Outcome {
    let mols = read_extxyz(xyz)?;
    let mut ok = true;
    for (k, m) in mols.iter().enumerate() {
        let g = build_graph(m, cutoff, n_max)?;
        let t = build_triplets(&g)?;
        println!("frame {k}: {} atoms, {} directed bonds, {} ordered triplets", m.n_atoms(), g.n_edges(), t.len());
        let base = LineGraphLevel::base(&g, m);
        let mut levels = vec![base.clone()];
        let mut lvl = base;
        for _ in 0..depth {
            if lvl.graph.edges.is_empty() {
                break;
            }
            lvl = eninet::linegraph::lift(&lvl)?;
            levels.push(lvl.clone());
        }
        let agree = compare_with_oracle(&levels[0].graph, depth)?;
        ok &= agree;
        for l in &levels {
            println!("  level {}: {} vertices, {} edges", l.level, l.graph.n_vertices, l.graph.edges.len());
        }
        println!("  oracle: {}", if agree { "match" } else { "MISMATCH" });
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::Validation("line graph differs from the brute-force construction".into()))
    }
}
