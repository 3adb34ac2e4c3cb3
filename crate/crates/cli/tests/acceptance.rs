//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use neuron_cartographer::control::{
    apply_control, build_plan, score_success, synthetic_decoder_roundtrip, ControlPlan, PlanRequest, SuccessReport,
    ThresholdDecoder,
};
use neuron_cartographer::erasure::{apply_neuron_mask, erasure_curve, mask_neurons, projection_mask, LinearProbeScorer};
use neuron_cartographer::nalgebra::DMatrix;
use neuron_cartographer::numerics::{cca, correlation_matrix, pca, thin_svd};
use neuron_cartographer::probe::{
    explained_variance_by, gmm_score, neuron_leaderboard, GaussianClassModel, GmmOptions, LeaderboardOptions,
};
use neuron_cartographer::ranking::{rank_linreg, rank_maxcorr, rank_mincorr, LinRegOptions};
use neuron_cartographer::synth::{generate, oracle_rankings, precision_at_k, Rng};
use neuron_cartographer::{ActivationDataset, GroundTruth, KSpec, Origin, RankMethod, SynthSpec};

const RECOVERY_SPEC: &str = include_str!("fixtures/recovery_spec.json");
const BIN: &str = env!("CARGO_BIN_EXE_neuron-cartographer");

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn recovery() -> (ActivationDataset, GroundTruth) {
    let spec: SynthSpec = serde_json::from_str(RECOVERY_SPEC).expect("recovery spec");
    generate(&spec).expect("synth")
}

fn table6_arithmetic() -> Check {
    let past_to_present = SuccessReport::from_counts(820, 85, 9, 311);
    let present_to_past = SuccessReport::from_counts(1586, 256, 30, 1363);
    ensure(past_to_present.total == 1225, format!("total {}", past_to_present.total))?;
    ensure(present_to_past.total == 3235, format!("total {}", present_to_past.total))?;
    let a = past_to_present.rate_percent();
    let b = present_to_past.rate_percent();
    ensure(a == "66.9%", format!("past->present {a}"))?;
    ensure(b == "49.0%", format!("present->past {b}"))?;
    ensure((past_to_present.rate * 100.0 - 66.9).abs() < 0.05, "past->present off by >= 0.1%")?;
    ensure((present_to_past.rate * 100.0 - 49.0).abs() < 0.05, "present->past off by >= 0.1%")?;
    Ok(format!("past->present {a}, present->past {b}"))
}

fn ranking_recovery() -> Check {
    let (ds, truth) = recovery();
    let mut notes = Vec::new();
    for m in ["m1", "m2", "m3"] {
        let sets = oracle_rankings(&truth);
        for (method, ranking) in [
            (RankMethod::MaxCorr, rank_maxcorr(&ds, m).map_err(|e| e.to_string())?),
            (RankMethod::MinCorr, rank_mincorr(&ds, m).map_err(|e| e.to_string())?),
        ] {
            let latent: Vec<usize> = truth.feature("latent").map_err(|e| e.to_string())?.targets[m].clone();
            ensure(latent.len() == 10, format!("{m}: {} planted latents", latent.len()))?;
            let expected = sets
                .iter()
                .find(|s| s.method == method && s.model == m)
                .ok_or_else(|| format!("no oracle set for {method:?} {m}"))?;
            ensure(expected.units == latent, format!("oracle set for {method:?} {m} is not the latent plant"))?;
            let p = precision_at_k(&ranking, &latent);
            ensure(p == 1.0, format!("{method:?} {m}: precision@10 = {p}"))?;
        }
    }
    notes.push("MaxCorr/MinCorr precision@10 = 1 on m1..m3".to_string());

    let distributed = truth.feature("mixture").map_err(|e| e.to_string())?.targets["m3"][0];
    let linreg = rank_linreg(&ds, "m3", LinRegOptions::default()).map_err(|e| e.to_string())?;
    let rank = linreg.rank_of(distributed).ok_or("distributed neuron missing from LinReg")?;
    ensure(rank < 5, format!("LinReg rank of m3:{distributed} is {}", rank + 1))?;
    let maxcorr = rank_maxcorr(&ds, "m3").map_err(|e| e.to_string())?;
    let rho = maxcorr.score_of(distributed).ok_or("distributed neuron missing from MaxCorr")?;
    ensure(rho.abs() < 0.95, format!("MaxCorr |rho| of m3:{distributed} = {rho}"))?;
    notes.push(format!("LinReg rank {} for m3:{distributed}, MaxCorr |rho| {:.3}", rank + 1, rho.abs()));
    Ok(notes.join("; "))
}

fn brute_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

fn gaussian(rows: usize, cols: usize, rng: &mut Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.normal())
}

/// Sylvester Hadamard matrix of order `n` (a power of two).
fn hadamard(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if (i & j).count_ones() % 2 == 0 { 1.0 } else { -1.0 })
}

/// Smallest `r` with the top-`r` variance share >= `fraction`.
fn minimal_rank(variances: &[f64], fraction: f64) -> usize {
    let total: f64 = variances.iter().sum();
    let mut acc = 0.0;
    for (i, v) in variances.iter().enumerate() {
        acc += v;
        if acc / total >= fraction {
            return i + 1;
        }
    }
    variances.len()
}

fn numerics_oracles() -> Check {
    let mut rng = Rng::new(11);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let a = gaussian(50, 8, &mut rng);
        let b = gaussian(50, 8, &mut rng);
        let r = correlation_matrix(&a, &b).map_err(|e| e.to_string())?;
        for i in 0..8 {
            for j in 0..8 {
                let ai: Vec<f64> = a.column(i).iter().copied().collect();
                let bj: Vec<f64> = b.column(j).iter().copied().collect();
                worst = worst.max((r[(i, j)] - brute_pearson(&ai, &bj)).abs());
            }
        }
    }
    ensure(worst <= 1e-10, format!("correlation deviates by {worst:e}"))?;

    let t = 5000;
    let z: Vec<f64> = (0..t).map(|_| rng.normal()).collect();
    let mut xa = gaussian(t, 4, &mut rng);
    let mut xb = gaussian(t, 4, &mut rng);
    let rho: f64 = 0.9;
    for i in 0..t {
        xa[(i, 0)] = z[i];
        xb[(i, 0)] = rho * z[i] + (1.0 - rho * rho).sqrt() * xb[(i, 0)];
    }
    let basis = cca(&xa, &xb, None).map_err(|e| e.to_string())?;
    let top = basis.coefficients[0];
    ensure((top - rho).abs() <= 0.05, format!("top canonical correlation {top}"))?;

    // Orthogonal centred columns (Walsh functions) scaled to a chosen spectrum.
    let h = hadamard(64);
    let spectra: [&[f64]; 4] = [
        &[10.0, 5.0, 1.0, 0.1, 0.01, 0.001],
        &[1.0, 1.0, 1.0, 1.0],
        &[100.0, 0.5, 0.4, 0.3, 0.2, 0.1, 0.05],
        &[3.0, 2.0, 1.0, 0.0301, 0.0003],
    ];
    for s in spectra {
        let x = DMatrix::from_fn(64, s.len(), |i, j| s[j] * h[(i, j + 1)]);
        let variances: Vec<f64> = s.iter().map(|v| v * v).collect();
        let want = minimal_rank(&variances, 0.99);
        let got = pca(&x, 0.99).map_err(|e| e.to_string())?.rank();
        ensure(got == want, format!("PCA kept {got} of spectrum {s:?}, minimal is {want}"))?;
    }
    Ok(format!("max |corr err| {worst:.1e}, top CCA coefficient {top:.4}, 4 spectra exact"))
}

fn numerical_rank(m: &DMatrix<f64>) -> Result<usize, String> {
    let svd = thin_svd(m, false).map_err(|e| e.to_string())?;
    let max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    Ok(svd.singular_values.iter().filter(|&&s| s > 1e-8 * max.max(1.0)).count())
}

fn erasure_invariants() -> Check {
    let (ds, truth) = recovery();
    let x = &ds.model("m1").map_err(|e| e.to_string())?.activations;
    let ranking = rank_maxcorr(&ds, "m1").map_err(|e| e.to_string())?;
    for k in [0, 7, 50] {
        for origin in [Origin::Top, Origin::Bottom] {
            let mask = mask_neurons(&ranking, k, origin).map_err(|e| e.to_string())?;
            let once = apply_neuron_mask(x, &mask).map_err(|e| e.to_string())?;
            let twice = apply_neuron_mask(&once, &mask).map_err(|e| e.to_string())?;
            ensure(once.to_le_bytes() == twice.to_le_bytes(), format!("mask k={k} not idempotent"))?;
            if k == 0 {
                ensure(once.to_le_bytes() == x.to_le_bytes(), "k=0 neuron mask changed the matrix")?;
            }
        }
    }

    let mut rng = Rng::new(23);
    for trial in 0..20 {
        let c = 3 + trial % 6;
        let r = c + 2 + trial % 3;
        let dirs = gaussian(r, c, &mut rng);
        for k in 0..=c {
            let origin = if k % 2 == 0 { Origin::Top } else { Origin::Bottom };
            let mask = projection_mask(&dirs, k, origin).map_err(|e| e.to_string())?;
            let p = mask.projection().ok_or("projection mask without a projection")?;
            let asym = (p - p.transpose()).amax();
            let idem = (p * p - p).amax();
            ensure(asym <= 1e-8, format!("trial {trial} k={k}: asymmetry {asym:e}"))?;
            ensure(idem <= 1e-8, format!("trial {trial} k={k}: P^2 - P = {idem:e}"))?;
            let rank = numerical_rank(p)?;
            ensure(rank == c - k, format!("trial {trial} k={k}: rank {rank}, expected {}", c - k))?;
        }
        let square = gaussian(c, c, &mut rng);
        let identity = projection_mask(&square, 0, Origin::Top).map_err(|e| e.to_string())?;
        let dev = (identity.projection().ok_or("no projection")? - DMatrix::identity(c, c)).amax();
        ensure(dev <= 1e-8, format!("k=0 projection of full-rank square C deviates by {dev:e}"))?;
    }

    let units = x.cols();
    let ks: Vec<usize> = [5.0, 10.0, 25.0]
        .iter()
        .map(|&p| KSpec::Percent(p).resolve(units))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let target = truth.scalar_signal("latent").map_err(|e| e.to_string())?;
    let scorer = LinearProbeScorer::new("latent", target);
    let curve = erasure_curve(&ds, "m1", &ranking, &ks, &scorer).map_err(|e| e.to_string())?;
    let mut gaps = Vec::new();
    for &k in &ks {
        let top = curve.score_at(Origin::Top, k).ok_or("missing top point")?;
        let bottom = curve.score_at(Origin::Bottom, k).ok_or("missing bottom point")?;
        ensure(top < bottom, format!("k={k}: top {top} >= bottom {bottom}"))?;
        gaps.push(format!("k={k}: {top:.3} < {bottom:.3}"));
    }
    Ok(format!("masks idempotent, 20 projections exact, {}", gaps.join(", ")))
}

fn probe_correctness() -> Check {
    let (ds, truth) = recovery();
    let corpus = ds.corpus();
    let positions = corpus.positions();
    let position_fn: Vec<f64> = positions.iter().map(|&p| (p as f64).sin() + 0.25 * p as f64).collect();
    let exact = explained_variance_by(&position_fn, &positions).map_err(|e| e.to_string())?;
    ensure(exact.fraction == 1.0, format!("position function explains {}", exact.fraction))?;

    let mut rng = Rng::new(31);
    let n = 20_000;
    let noise: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let keys: Vec<usize> = (0..n).map(|i| i % 10).collect();
    let iid = explained_variance_by(&noise, &keys).map_err(|e| e.to_string())?;
    ensure(iid.fraction <= 0.01, format!("noise explains {}", iid.fraction))?;

    for pair in 0..50 {
        let len = 200 + pair * 7;
        let values: Vec<f64> = (0..len).map(|_| rng.normal() + rng.uniform()).collect();
        let coarse_groups = 2 + rng.below(5);
        let coarse: Vec<usize> = (0..len).map(|_| rng.below(coarse_groups)).collect();
        let fine: Vec<(usize, usize)> = coarse.iter().map(|&c| (c, rng.below(3))).collect();
        let a = explained_variance_by(&values, &coarse).map_err(|e| e.to_string())?.fraction;
        let b = explained_variance_by(&values, &fine).map_err(|e| e.to_string())?.fraction;
        ensure(b >= a - 1e-12, format!("refinement pair {pair}: {b} < {a}"))?;
    }

    let paren = truth.annotation("paren", corpus).map_err(|e| e.to_string())?;
    let planted = truth.feature("paren").map_err(|e| e.to_string())?.targets["m2"][0];
    let opts = LeaderboardOptions {
        cross_reference: false,
        ..LeaderboardOptions::default()
    };
    let board = neuron_leaderboard(&ds, "m2", &paren, &opts).map_err(|e| e.to_string())?;
    let entry = board.entry(planted).ok_or("planted neuron missing from leaderboard")?;
    ensure(board.best == Some(planted), format!("best neuron {:?}, planted {planted}", board.best))?;
    for (label, f1) in &entry.f1 {
        let f1 = f1.ok_or_else(|| format!("F1 for `{label}` undefined"))?;
        ensure(f1 >= 0.99, format!("F1 for `{label}` = {f1}"))?;
    }

    let x = &ds.model("m1").map_err(|e| e.to_string())?.activations;
    let rows: Vec<Vec<f64>> = (0..x.rows()).map(|r| vec![x.get(r, 0) as f64, x.get(r, 60) as f64]).collect();
    let gold: Vec<String> = (0..x.rows()).map(|r| ["a", "b", "c"][(r * 7 + r / 3) % 3].to_string()).collect();
    let model = GaussianClassModel::fit(vec![0, 60], &rows, &gold, &GmmOptions::default()).map_err(|e| e.to_string())?;
    let report = gmm_score(&model, &rows, &gold).map_err(|e| e.to_string())?;
    let mut brute: BTreeMap<(String, String), usize> = BTreeMap::new();
    for (r, g) in rows.iter().zip(&gold) {
        *brute.entry((g.clone(), model.predict(r).to_string())).or_default() += 1;
    }
    for (i, g) in report.labels.iter().enumerate() {
        for (j, p) in report.labels.iter().enumerate() {
            let want = brute.get(&(g.clone(), p.clone())).copied().unwrap_or(0);
            ensure(report.confusion[i][j] == want, format!("confusion[{g}][{p}] mismatch"))?;
        }
    }
    Ok(format!(
        "position 1.0, noise {:.4}, 50 refinements, planted F1 >= 0.99, confusion exact",
        iid.fraction
    ))
}

fn plan_for(ds: &ActivationDataset, labels: &BTreeMap<usize, String>, neurons: &[usize], beta: f64) -> Result<ControlPlan, String> {
    let req = PlanRequest {
        property: "paren",
        from: "in",
        to: "out",
        neurons,
        beta,
    };
    build_plan(ds, "m2", labels, &req).map_err(|e| e.to_string())
}

fn control_loop() -> Check {
    let (ds, truth) = recovery();
    let paren = truth.annotation("paren", ds.corpus()).map_err(|e| e.to_string())?;
    let labels: BTreeMap<usize, String> = paren
        .by_row(ds.corpus())
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|(r, l)| (r, l.to_owned()))
        .collect();
    let planted = truth.feature("paren").map_err(|e| e.to_string())?.targets["m2"][0];

    let crossing = plan_for(&ds, &labels, &[planted], -1.0)?;
    let decoder = ThresholdDecoder::from_plan(&crossing, planted).map_err(|e| e.to_string())?;
    let alpha = crossing.neurons[0].alpha;
    let from_side = crossing.neurons[0].mu1 > decoder.threshold;
    ensure((alpha > decoder.threshold) != from_side, "crossing plan does not cross the threshold")?;
    let (out, align) = synthetic_decoder_roundtrip(&ds, "m2", Some(&crossing), &decoder).map_err(|e| e.to_string())?;
    let crossed = score_success(&out, &align, &crossing).map_err(|e| e.to_string())?;
    ensure(crossed.rate == 1.0, format!("crossing plan success {}", crossed.rate_percent()))?;

    let zero = plan_for(&ds, &labels, &[planted], 0.0)?;
    let (base_out, base_align) = synthetic_decoder_roundtrip(&ds, "m2", None, &decoder).map_err(|e| e.to_string())?;
    let baseline = score_success(&base_out, &base_align, &zero).map_err(|e| e.to_string())?;
    let (out, align) = synthetic_decoder_roundtrip(&ds, "m2", Some(&zero), &decoder).map_err(|e| e.to_string())?;
    let unchanged = score_success(&out, &align, &zero).map_err(|e| e.to_string())?;
    ensure(unchanged == baseline, format!("beta=0 {} vs baseline {}", unchanged.rate_percent(), baseline.rate_percent()))?;

    let x = &ds.model("m2").map_err(|e| e.to_string())?.activations;
    let neurons = [planted, 3, 40];
    let plan = plan_for(&ds, &labels, &neurons, 2.5)?;
    let modified = apply_control(x, ds.corpus(), &plan).map_err(|e| e.to_string())?;
    let changed = x.count_differences(&modified).map_err(|e| e.to_string())?;
    let want = plan.positions.len() * neurons.len();
    ensure(changed == want, format!("{changed} entries changed, expected {want}"))?;
    Ok(format!(
        "crossing {}, beta=0 {} = baseline, {changed} entries changed",
        crossed.rate_percent(),
        unchanged.rate_percent()
    ))
}

fn read_tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).expect("read_dir") {
            let path = entry.expect("entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(dir).expect("prefix").to_path_buf(), fs::read(&path).expect("read"));
            }
        }
    }
    out
}

fn run_cli(args: &[String]) -> Result<(), String> {
    let output = Command::new(BIN).args(args).output().map_err(|e| e.to_string())?;
    if output.status.success() {
        Ok(())
    } else {
        Err(format!("`{}` failed: {}", args.join(" "), String::from_utf8_lossy(&output.stderr)))
    }
}

fn determinism() -> Check {
    let spec: SynthSpec = serde_json::from_str(RECOVERY_SPEC).map_err(|e| e.to_string())?;
    let (a, ta) = generate(&spec).map_err(|e| e.to_string())?;
    let (b, tb) = generate(&spec).map_err(|e| e.to_string())?;
    for (ma, mb) in a.models().iter().zip(b.models()) {
        ensure(ma.activations.to_le_bytes() == mb.activations.to_le_bytes(), "synth activations differ")?;
    }
    ensure(ta == tb, "synth ground truth differs")?;

    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec_path = root.path().join("spec.json");
    fs::write(&spec_path, RECOVERY_SPEC).map_err(|e| e.to_string())?;
    let s = |p: &Path| p.display().to_string();
    let mut trees = Vec::new();
    for run in 0..2 {
        let base = root.path().join(format!("run{run}"));
        let data = base.join("data");
        let out = base.join("out");
        fs::create_dir_all(&out).map_err(|e| e.to_string())?;
        let d = s(&data);
        let o = |name: &str| s(&out.join(name));
        let ann = s(&data.join("annotations/paren.tsv"));
        let tgt_ann = s(&data.join("annotations/paren.target.tsv"));
        let tgt_tok = s(&data.join("target_tokens.txt"));
        let align = s(&data.join("alignments.txt"));
        let argv = |parts: &[&str]| parts.iter().map(|p| p.to_string()).collect::<Vec<_>>();
        let steps: Vec<Vec<String>> = vec![
            argv(&["synth", "--spec", &s(&spec_path), "--out", &d]),
            argv(&["rank", "--data", &d, "--model", "m1", "--method", "maxcorr", "--out", &o("maxcorr.json")]),
            argv(&["rank", "--data", &d, "--model", "m1", "--method", "mincorr", "--out", &o("mincorr.json")]),
            argv(&["rank", "--data", &d, "--model", "m3", "--method", "linreg", "--out", &o("linreg.json")]),
            argv(&["rank", "--data", &d, "--model", "m1", "--method", "svcca", "--other", "m2", "--out", &o("svcca.json")]),
            argv(&[
                "erase", "--data", &d, "--model", "m1", "--ranking", &o("maxcorr.json"), "--ks", "5%,10%,25%", "--scorer",
                "probe:latent", "--out", &o("erase.csv"),
            ]),
            argv(&[
                "erase", "--data", &d, "--model", "m1", "--method", "svcca", "--other", "m2", "--ks", "1,10", "--scorer",
                "decoder:m2", "--out", &o("erase_svcca.csv"),
            ]),
            argv(&["probe", "variance", "--data", &d, "--model", "m1", "--grouping", "position,token,annotation", "--annotation", &ann, "--out", &o("variance.csv")]),
            argv(&["probe", "leaderboard", "--data", &d, "--model", "m2", "--annotation", &ann, "--out", &o("leaderboard.csv")]),
            argv(&[
                "control", "find-neurons", "--data", &d, "--model", "m2", "--target-annotation", &tgt_ann, "--target-tokens",
                &tgt_tok, "--alignments", &align, "--out", &o("find.csv"),
            ]),
            argv(&[
                "control", "plan", "--data", &d, "--model", "m2", "--target-annotation", &tgt_ann, "--target-tokens", &tgt_tok,
                "--alignments", &align, "--from", "in", "--to", "out", "--top-k", "2", "--beta", "-1", "--out", &o("plan.json"),
            ]),
            argv(&["control", "apply", "--data", &d, "--model", "m2", "--plan", &o("plan.json"), "--out", &o("applied")]),
            argv(&["control", "decode", "--data", &d, "--model", "m2", "--plan", &o("plan.json"), "--out", &o("decoded")]),
            argv(&[
                "control", "score", "--data", &d, "--plan", &o("plan.json"), "--tags", &o("decoded/tags.tsv"),
                "--output-tokens", &o("decoded/tokens.txt"), "--alignments", &o("decoded/alignments.txt"), "--out",
                &o("score.json"),
            ]),
            argv(&["viz", "--data", &d, "--model", "m2", "--neuron", "12", "--sentences", "0..5", "--out", &o("viz.html")]),
            argv(&["viz", "--data", &d, "--model", "m2", "--neuron", "12", "--format", "ansi", "--out", &o("viz.ansi")]),
        ];
        for step in &steps {
            run_cli(step)?;
        }
        let mut tree = BTreeMap::new();
        for (k, v) in read_tree(&data) {
            tree.insert(Path::new("data").join(k), v);
        }
        for (k, v) in read_tree(&out) {
            tree.insert(Path::new("out").join(k), v);
        }
        trees.push((tree, steps.len()));
    }
    let (first, steps) = &trees[0];
    let (second, _) = &trees[1];
    let names: BTreeSet<&PathBuf> = first.keys().chain(second.keys()).collect();
    for name in &names {
        ensure(first.get(*name) == second.get(*name), format!("{} differs between runs", name.display()))?;
    }
    Ok(format!("{steps} invocations x2, {} files byte-identical; synth bitwise reproducible", names.len()))
}

struct Criterion {
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Check,
}

fn main() {
    let criteria = [
        Criterion {
            name: "success-rate arithmetic (66.9% / 49.0%)",
            budget: Some(Duration::from_secs(1)),
            run: table6_arithmetic,
        },
        Criterion {
            name: "ranking recovery on planted synth data",
            budget: Some(Duration::from_secs(30)),
            run: ranking_recovery,
        },
        Criterion {
            name: "numerics against independent oracles",
            budget: None,
            run: numerics_oracles,
        },
        Criterion {
            name: "erasure invariants and top-vs-bottom gap",
            budget: Some(Duration::from_secs(30)),
            run: erasure_invariants,
        },
        Criterion {
            name: "probe correctness",
            budget: None,
            run: probe_correctness,
        },
        Criterion {
            name: "control loop with threshold decoder",
            budget: Some(Duration::from_secs(5)),
            run: control_loop,
        },
        Criterion {
            name: "determinism of every subcommand and synth",
            budget: None,
            run: determinism,
        },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let elapsed = start.elapsed();
        let result = match (result, c.budget) {
            (Ok(_), Some(b)) if elapsed > b => Err(format!("took {:.2}s, budget {:.0}s", elapsed.as_secs_f64(), b.as_secs_f64())),
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("PASS  {} [{:.2}s]: {detail}", c.name, elapsed.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL  {} [{:.2}s]: {why}", c.name, elapsed.as_secs_f64());
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
