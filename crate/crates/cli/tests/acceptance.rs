//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run with `cargo test -p subembed-cli --test acceptance`.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::DVector;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use subembed::geometry::{self, haar_family, k_sparse_family};
use subembed::harness::{run_trials, LowerBoundStudy};
use subembed::stats::{self, concentration_estimate, psi2_estimate};
use subembed::{
    ensembles, family_distortion, lower_bound_study, metric_embed, sample_matrix, subspace_extremes,
    sweep_m, AffineSubspace, EnsembleSpec, ExperimentConfig, FamilyKind, SubspaceFamily,
};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn gaussian_vec(rng: &mut StdRng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

fn success_at_target_dim() -> Outcome {
    let mut lines = Vec::new();
    for ensemble in EnsembleSpec::all_builtin() {
        let config = ExperimentConfig {
            trials: 200,
            seed: 2024,
            ..ExperimentConfig::new(64, 4, 16, 8.0, ensemble)
        };
        let m = config.target_dim().map_err(fail)?;
        ensure(m == 27, || format!("target dimension {m}, expected 27"))?;
        let start = Instant::now();
        let trials = run_trials(&config).map_err(fail)?;
        let elapsed = start.elapsed().as_secs_f64();
        let successes = trials.iter().filter(|t| t.feasible).count();
        let rate = successes as f64 / trials.len() as f64;
        ensure(rate >= 0.95, || format!("{}: rate {rate}", ensemble.name()))?;
        ensure(elapsed < 120.0, || format!("{}: {elapsed:.1}s", ensemble.name()))?;

        // recertify a few successes and check them pointwise
        for t in trials.iter().filter(|t| t.feasible).take(5) {
            let family = config.build_family(t.trial_index).map_err(fail)?;
            let gamma = sample_matrix(&ensemble, m, 64, config.matrix_seed(t.trial_index)).map_err(fail)?;
            let report = family_distortion(&gamma, &family).map_err(fail)?;
            ensure(report.achieved_distortion == t.achieved_distortion, || {
                format!("trial {} does not replay", t.trial_index)
            })?;
            let choice = subembed::choose_scale(&report, 8.0).map_err(fail)?;
            let check = subembed::distortion::verify_pointwise(&gamma, &family, &choice, 10_000, t.trial_index as u64)
                .map_err(fail)?;
            ensure(check.violations == 0, || {
                format!("{} violations in trial {}", check.violations, t.trial_index)
            })?;
        }
        let worst = trials.iter().map(|t| t.achieved_distortion).fold(0.0, f64::max);
        lines.push(format!("{} {successes}/200 worst D {worst:.2} {elapsed:.1}s", ensemble.name()));
    }
    Ok(lines.join("; "))
}

fn certification_oracle() -> Outcome {
    let mut rng = StdRng::seed_from_u64(7);
    let mut worst_gap = 0.0_f64;
    let builtin = EnsembleSpec::all_builtin();
    for i in 0..50u64 {
        let ensemble = builtin[i as usize % 3];
        let gamma = sample_matrix(&ensemble, 8, 16, 100 + i).map_err(fail)?;
        let w = geometry::random_subspace(16, 3, 200 + i).map_err(fail)?;
        let ext = subspace_extremes(&gamma, &w).map_err(fail)?;
        let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
        for _ in 0..100_000 {
            let c = gaussian_vec(&mut rng, 3);
            let x = w.basis() * c.normalize();
            let r = (gamma.matrix() * &x).norm() / x.norm();
            lo = lo.min(r);
            hi = hi.max(r);
        }
        let tol = 1e-12 * ext.sigma_max;
        ensure(lo >= ext.sigma_min - tol && hi <= ext.sigma_max + tol, || {
            format!("instance {i}: sampled [{lo}, {hi}] escapes [{}, {}]", ext.sigma_min, ext.sigma_max)
        })?;
        ensure(lo <= 1.01 * ext.sigma_min && hi >= 0.99 * ext.sigma_max, || {
            format!("instance {i}: sampled [{lo}, {hi}] far from [{}, {}]", ext.sigma_min, ext.sigma_max)
        })?;
        worst_gap = worst_gap.max(lo / ext.sigma_min - 1.0).max(1.0 - hi / ext.sigma_max);
    }
    Ok(format!("50 instances, worst relative gap {worst_gap:.2e}"))
}

fn small_ball() -> Outcome {
    let draws = 1_000_000;
    let gamma = sample_matrix(&EnsembleSpec::uniform_iid(), draws, 3, 31).map_err(fail)?;
    let hits = gamma
        .matrix()
        .row_iter()
        .filter(|r| r.norm_squared() <= 0.1 * 3.0)
        .count();
    let empirical = hits as f64 / draws as f64;
    // ball of radius √0.3 over the cube of side 2√3
    let oracle = 4.0 / 3.0 * std::f64::consts::PI * 0.3_f64.powf(1.5) / (2.0 * 3.0_f64.sqrt()).powi(3);
    let se = (oracle * (1.0 - oracle) / draws as f64).sqrt();
    let bound = stats::small_ball_bound(1.0 / (2.0 * 3.0_f64.sqrt()), 3, 0.1).map_err(fail)?;
    ensure((oracle - 0.0166).abs() < 1e-4, || format!("oracle {oracle}"))?;
    ensure((bound - 0.1643).abs() < 1e-4, || format!("bound {bound}"))?;
    ensure((empirical - oracle).abs() <= 3.0 * se, || {
        format!("empirical {empirical} vs oracle {oracle} (se {se:.2e})")
    })?;
    ensure(empirical <= bound, || format!("empirical {empirical} above bound {bound}"))?;
    Ok(format!("empirical {empirical:.5}, oracle {oracle:.5}, bound {bound:.4}"))
}

fn constants() -> Outcome {
    let normals = ensembles::directional_samples(&EnsembleSpec::Gaussian, &[1.0], 1_000_000, 41).map_err(fail)?;
    let psi2 = psi2_estimate(&normals).map_err(fail)?.value;
    ensure((1.55..=1.72).contains(&psi2), || format!("ψ₂ {psi2}"))?;
    let conc = concentration_estimate(&normals, 0.1).map_err(fail)?.value;
    ensure(conc <= 0.0838, || format!("C_0.1 {conc}"))?;

    let mut rng = StdRng::seed_from_u64(43);
    let direction = gaussian_vec(&mut rng, 16).normalize();
    let mut parts = vec![format!("normal ψ₂ {psi2:.4}, C_0.1 {conc:.4}")];
    for ensemble in EnsembleSpec::all_builtin() {
        let samples =
            ensembles::directional_samples(&ensemble, direction.as_slice(), 100_000, 44).map_err(fail)?;
        let beta = psi2_estimate(&samples).map_err(fail)?.value;
        ensure(beta >= 0.97, || format!("{}: β̂ {beta}", ensemble.name()))?;
        let c2 = concentration_estimate(&samples, 2.0).map_err(fail)?.value;
        let se = (c2 * (1.0 - c2) / samples.len() as f64).sqrt();
        ensure(c2 / 2.0 >= 3.0 / 8.0 - 1.5 * se, || format!("{}: C_2/2 {}", ensemble.name(), c2 / 2.0))?;
        let theory = subembed::theoretical_constants(&ensemble).map_err(fail)?;
        ensure(stats::psi2_tail_check(&samples, theory.beta), || {
            format!("{}: tails exceed β = {}", ensemble.name(), theory.beta)
        })?;
        parts.push(format!("{} β̂ {beta:.3} C_2/2 {:.3}", ensemble.name(), c2 / 2.0));
    }
    Ok(parts.join("; "))
}

fn width() -> Outcome {
    let single = SubspaceFamily::from_linear(vec![geometry::random_subspace(16, 4, 51).map_err(fail)?]).map_err(fail)?;
    let w4 = stats::gaussian_width_mc(&single, 10_000, 52).map_err(fail)?.mean;
    ensure((1.83..=1.93).contains(&w4), || format!("ℝ⁴ width {w4}"))?;
    let sparse = k_sparse_family(16, 3, 256, 53).map_err(fail)?;
    let ws = stats::gaussian_width_mc(&sparse, 10_000, 54).map_err(fail)?.mean;
    let bound = stats::width_upper_bound(3, 256, 0.0, 16).map_err(fail)?;
    ensure((bound - 12.26).abs() < 0.01, || format!("bound {bound}"))?;
    ensure(ws <= bound, || format!("sparse width {ws} above {bound}"))?;
    Ok(format!("ℝ⁴ {w4:.4}, k-sparse {ws:.3} ≤ {bound:.2}"))
}

fn image_lower_bound() -> Outcome {
    let family = haar_family(32, 3, 8, 61).map_err(fail)?;
    let mut parts = Vec::new();
    for ensemble in EnsembleSpec::all_builtin() {
        let est = stats::expected_max_image_sq(&ensemble, &family, 12, 1000, 62).map_err(fail)?;
        ensure(est.mean >= 0.98 * 12.0, || format!("{}: mean {}", ensemble.name(), est.mean))?;
        parts.push(format!("{} {:.2}", ensemble.name(), est.mean));
    }
    Ok(parts.join(", "))
}

fn metric_embedding() -> Outcome {
    let mut feasible = 0;
    for s in 0..100u64 {
        let mut rng = StdRng::seed_from_u64(1000 + s);
        let points: Vec<Vec<f64>> = (0..32).map(|_| gaussian_vec(&mut rng, 64).as_slice().to_vec()).collect();
        let e = metric_embed(&points, 12.01, &EnsembleSpec::Gaussian, s).map_err(fail)?;
        ensure(e.gamma.rows() == 18 && e.pairs.len() == 496, || {
            format!("m {} with {} pairs", e.gamma.rows(), e.pairs.len())
        })?;
        if e.choice.feasible {
            feasible += 1;
            let v = e.check_point_pairs(&points, 10_000, s).map_err(fail)?;
            ensure(v == 0, || format!("seed {s}: {v} violations"))?;
        }
    }
    ensure(feasible >= 95, || format!("feasible {feasible}/100"))?;
    Ok(format!("feasible {feasible}/100, no pointwise violations"))
}

fn tightness() -> Outcome {
    // only C(20, 2) = 190 distinct 2-sparse supports exist
    let p_max = geometry::binomial(20, 2).min(500) as usize;
    let study = LowerBoundStudy {
        n: 20,
        k: 2,
        distortion: 4.0,
        delta: std::f64::consts::SQRT_2,
        p_values: vec![5, 50, p_max],
        ensemble: EnsembleSpec::Gaussian,
        seed: 1,
        m_values: (1..=40).collect(),
        trials: 200,
        target_rate: 0.95,
        width_draws: 2000,
    };
    let table = lower_bound_study(&study).map_err(fail)?;
    let ms: Vec<_> = table.rows.iter().map(|r| r.minimal_m).collect();
    ensure(ms.iter().all(Option::is_some) && table.monotone_in_p, || format!("minimal m {ms:?}"))?;

    let single = ExperimentConfig {
        family_kind: FamilyKind::KSparse,
        trials: 200,
        seed: 2,
        ..ExperimentConfig::new(20, 2, 1, 4.0, EnsembleSpec::Gaussian)
    };
    let sweep = sweep_m(&single, &[1], 0.95).map_err(fail)?;
    let rate = sweep.points[0].success_rate;
    ensure(rate == 0.0, || format!("rate {rate} at m = k − 1"))?;
    let ms: Vec<usize> = ms.into_iter().flatten().collect();
    Ok(format!("p = 5, 50, {p_max}: minimal m {ms:?}; rate 0 at m = 1"))
}

fn reductions() -> Outcome {
    let mut rng = StdRng::seed_from_u64(91);
    for trial in 0..30u64 {
        let n = rng.random_range(4..14);
        let k = rng.random_range(1..=n / 2);
        let p = rng.random_range(1..7);
        let members = (0..p)
            .map(|l| {
                let dir = geometry::random_subspace(n, k, trial * 100 + l as u64)?;
                AffineSubspace::new(gaussian_vec(&mut rng, n) * 3.0, dir)
            })
            .collect::<subembed::Result<Vec<_>>>()
            .map_err(fail)?;
        let family = SubspaceFamily::new(members).map_err(fail)?;
        let gamma = sample_matrix(&EnsembleSpec::Gaussian, rng.random_range(1..10), n, trial).map_err(fail)?;
        let direct = family_distortion(&gamma, &family).map_err(fail)?;
        let reduced = family_distortion(&gamma, &geometry::reduce_affine(&family)).map_err(fail)?;
        ensure(direct == reduced, || format!("trial {trial}: reports differ"))?;

        // affine point differences stay inside the member's singular range
        for (member, ext) in family.members().iter().zip(&direct.per_subspace) {
            let x = member.point(&gaussian_vec(&mut rng, k));
            let y = member.point(&gaussian_vec(&mut rng, k));
            let diff = x - y;
            let r = (gamma.matrix() * &diff).norm() / diff.norm();
            let tol = 1e-9 * ext.sigma_max;
            ensure(r >= ext.sigma_min - tol && r <= ext.sigma_max + tol, || {
                format!("trial {trial}: ratio {r} outside [{}, {}]", ext.sigma_min, ext.sigma_max)
            })?;
        }

        let cross = geometry::cross_family(&family).map_err(fail)?;
        ensure(cross.len() <= p * (p + 1) / 2, || format!("trial {trial}: {} cross members", cross.len()))?;
        ensure(cross.directions().all(|w| w.dim() <= 2 * k), || format!("trial {trial}: cross dim above 2k"))?;
    }
    Ok("30 random affine families".into())
}

fn run_cli(dir: &Path, args: &[&str], threads: &str) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_subembed"))
        .current_dir(dir)
        .env_remove("SUBEMBED_SEED")
        .arg("--parallelism")
        .arg(threads)
        .args(args)
        .output()
        .map_err(fail)?;
    ensure(out.status.success(), || {
        format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr))
    })?;
    Ok(out.stdout)
}

fn determinism() -> Outcome {
    let config = r#"{"n":24,"k":3,"p":6,"D":6,"ensemble":{"kind":"sphere"},"family_kind":"k_sparse","trials":20,"seed":5}"#;
    let family = r#"{"n":3,"members":[{"basis_columns":[[1,0,0]]},{"base":[0,1,0],"basis_columns":[[0,1,1]]}]}"#;
    let mut rng = StdRng::seed_from_u64(3);
    let points: String = (0..10)
        .map(|_| {
            let row: Vec<String> = (0..5).map(|_| format!("{:?}", rng.sample::<f64, _>(StandardNormal))).collect();
            row.join(",") + "\n"
        })
        .collect();
    let runs: &[&[&str]] = &[
        &["gen-matrix", "--ensemble", "iid_bounded", "--m", "4", "--n", "3", "--seed", "9", "--out", "g.csv"],
        &["verify", "--matrix", "g.csv", "--family", "f.json", "--D", "50", "--report-csv", "r.csv", "--summary-json", "s.json"],
        &["trial", "--config", "c.json", "--out", "t.jsonl"],
        &["sweep", "--config", "c.json", "--m-values", "2,6,10,20", "--out", "w.csv"],
        &["embed-points", "--points", "p.csv", "--D", "10", "--seed", "4", "--matrix-out", "e.csv", "--summary-json", "e.json"],
        &["width", "--config", "c.json", "--draws", "500", "--out", "width.json"],
    ];
    let files = ["g.csv", "r.csv", "s.json", "t.jsonl", "w.csv", "e.csv", "e.json", "width.json"];
    let mut snapshots = Vec::new();
    for threads in ["1", "4", "4"] {
        let dir = tempfile::tempdir().map_err(fail)?;
        std::fs::write(dir.path().join("c.json"), config).map_err(fail)?;
        std::fs::write(dir.path().join("f.json"), family).map_err(fail)?;
        std::fs::write(dir.path().join("p.csv"), &points).map_err(fail)?;
        let mut outputs = Vec::new();
        for args in runs {
            run_cli(dir.path(), args, threads)?;
        }
        outputs.push(run_cli(dir.path(), &["constants", "--ensemble", "uniform"], threads)?);
        for f in files {
            outputs.push(std::fs::read(dir.path().join(f)).map_err(fail)?);
        }
        snapshots.push(outputs);
    }
    ensure(snapshots.windows(2).all(|w| w[0] == w[1]), || "outputs differ between runs".into())?;
    Ok(format!("{} subcommands, {} artifacts identical across 3 runs", runs.len() + 1, files.len() + 1))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("success at the target dimension", success_at_target_dim),
        ("certification oracle", certification_oracle),
        ("small-ball probability", small_ball),
        ("ensemble constants", constants),
        ("Gaussian width", width),
        ("image norm lower bound", image_lower_bound),
        ("metric embedding", metric_embedding),
        ("tightness sweep", tightness),
        ("affine and cross reductions", reductions),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("{}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
