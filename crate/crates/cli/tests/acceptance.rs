//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use trustloop::bandit::{build_catalogs, normalize_rating, ArmCatalog, BanditState, Part, Role};
use trustloop::cohort::{
    generate_cohort, impute_mice, inject_missingness, CohortTable, FeatureCategory, FeatureDescriptor, FeatureSchema,
    GeneratorConfig, DEFAULT_MICE_CYCLES,
};
use trustloop::evidence::{
    fit_stratified_linear, fit_stratified_trees, stratum_of, EvidenceCatalog, EvidenceKind, TreeConfig, TreeNode,
    N_STRATA,
};
use trustloop::model::{auc_pr, auc_roc, MlpParams, LINEAR_REGRESSION, NEURAL_NETWORK, N_INPUTS, N_PARAMS};
use trustloop::pipeline::{build_bundle, demo_catalog, PipelineConfig};
use trustloop::rater::{simulate_bandit, true_means, PopulationSpec, RaterGroup, RaterProfile};
use trustloop::report::{read_export, ArmReport, ExportFilter};
use trustloop_service::{
    load_data_dir, run_sessions, BackgroundServer, Embedded, Expect, HttpApi, ManualClock, PayloadType, ServiceConfig,
    Submission, SurveyApi, SurveyService,
};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(t0: Instant, limit: Duration, what: &str) -> Result<(), String> {
    let el = t0.elapsed();
    ensure(el < limit, || format!("{what} took {:.1}s, limit {:.0}s", el.as_secs_f64(), limit.as_secs_f64()))
}

// ---------------------------------------------------------------- bandit

fn brute_force_ucb(pulls: &[u64], sums: &[f64]) -> usize {
    if let Some(j) = pulls.iter().position(|&p| p == 0) {
        return j;
    }
    let n = pulls.iter().sum::<u64>() as f64;
    let mut best = (0, f64::NEG_INFINITY);
    for j in 0..pulls.len() {
        let v = sums[j] / pulls[j] as f64 + (2.0 * n.ln() / pulls[j] as f64).sqrt();
        if v > best.1 {
            best = (j, v);
        }
    }
    best.0
}

fn ucb_oracle() -> Check {
    let t0 = Instant::now();
    let (p1, _) = build_catalogs();
    let k = p1.len();
    let mut mismatches = 0;
    let mut steps = 0;
    for seq in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seq);
        let scripts: Vec<Vec<i64>> = (0..k).map(|_| (0..250).map(|_| rng.random_range(1..=5)).collect()).collect();
        let mut state = BanditState::<f64>::new(k);
        let (mut pulls, mut sums) = (vec![0u64; k], vec![0.0; k]);
        for _ in 0..200 {
            let got = state.select_arm().map_err(|e| e.to_string())?;
            let want = brute_force_ucb(&pulls, &sums);
            mismatches += usize::from(got != want);
            let r = normalize_rating::<f64>(scripts[want][pulls[want] as usize]).map_err(|e| e.to_string())?;
            state.record_reward(want, r).map_err(|e| e.to_string())?;
            pulls[want] += 1;
            sums[want] += r.value();
            steps += 1;
        }
    }
    ensure(mismatches == 0, || format!("{mismatches} mismatches in {steps} selections"))?;
    within(t0, Duration::from_secs(1), "oracle comparison")?;
    Ok(format!("0 mismatches over 100 sequences ({steps} selections) in {:.0} ms", t0.elapsed().as_secs_f64() * 1e3))
}

fn catalog_fidelity() -> Check {
    let golden: serde_json::Value =
        serde_json::from_str(include_str!("../../core/tests/golden/catalogs.json")).map_err(|e| e.to_string())?;
    let (p1, p2) = build_catalogs();
    for (cat, key) in [(&p1, "part1"), (&p2, "part2")] {
        let want = golden[key].as_object().ok_or("golden file missing part")?;
        ensure(want.len() == cat.len(), || format!("{key}: {} arms, golden has {}", cat.len(), want.len()))?;
        for (arm, (id, kinds)) in cat.arms.iter().zip(want) {
            let kinds: Vec<String> = serde_json::from_value(kinds.clone()).map_err(|e| e.to_string())?;
            let got: Vec<String> = arm.kinds.iter().map(|k| k.as_str().to_owned()).collect();
            ensure(arm.id.to_string() == *id && got == kinds, || format!("{key} arm {}: {got:?} vs golden {id} {kinds:?}", arm.id))?;
        }
    }
    Ok(format!("{} part 1 arms and {} part 2 arms match the golden table", p1.len(), p2.len()))
}

fn bandit_convergence() -> Check {
    let t0 = Instant::now();
    let (p1, _) = build_catalogs();
    let profile = RaterProfile::planted_gap();
    let mut means = true_means(&p1, &profile);
    let best = means.iter().copied().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, m)| if m > b.1 { (i, m) } else { b }).0;
    let best_id = p1.arms[best].id;
    means.sort_by(|a, b| b.total_cmp(a));
    let gap = means[0] - means[1];
    ensure(gap >= 0.1, || format!("best-arm gap {gap:.3} < 0.1"))?;
    let (mut share_ok, mut sublinear_ok) = (0, 0);
    for seed in 0..20 {
        let trace = simulate_bandit(&p1, &profile, 2000, seed).map_err(|e| e.to_string())?;
        share_ok += usize::from(trace.share_last(best_id, 500) >= 0.5);
        sublinear_ok += usize::from(trace.regret_at(2000) / 2000.0 < trace.regret_at(200) / 200.0);
    }
    ensure(share_ok >= 18, || format!("best arm held >= 50% of the last 500 pulls in only {share_ok}/20 seeds"))?;
    ensure(sublinear_ok == 20, || format!("regret sub-linear in only {sublinear_ok}/20 seeds"))?;
    within(t0, Duration::from_secs(120), "20 simulations")?;
    Ok(format!("gap {gap:.3}; best arm {best_id} >= 50% of last 500 in {share_ok}/20 seeds; regret sub-linear in 20/20"))
}

// ---------------------------------------------------------------- model

fn metric_oracles() -> Check {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst_roc: f64 = 0.0;
    for i in 0..200 {
        let n = rng.random_range(2..=200);
        let coarse = i % 2 == 0;
        let scores: Vec<f64> = (0..n).map(|_| if coarse { (rng.random_range(0..10) as f64) / 10.0 } else { rng.random() }).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        labels[0] = true;
        labels[1] = false;
        let (mut num, mut pairs) = (0.0, 0.0);
        for a in 0..n {
            for b in 0..n {
                if labels[a] && !labels[b] {
                    pairs += 1.0;
                    num += if scores[a] > scores[b] { 1.0 } else if scores[a] == scores[b] { 0.5 } else { 0.0 };
                }
            }
        }
        let got = auc_roc(&scores, &labels).map_err(|e| e.to_string())?;
        worst_roc = worst_roc.max((got - num / pairs).abs());
    }
    ensure(worst_roc < 1e-9, || format!("auc_roc off by {worst_roc:e}"))?;

    let mut worst_pr: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(2..=60);
        // distinct scores: a permutation of 0..n
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let scores: Vec<f64> = order.iter().map(|&o| o as f64 / n as f64).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        // walk the ranked list top-down, averaging precision at each positive
        let mut ranked: Vec<usize> = (0..n).collect();
        ranked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        let (mut hits, mut sum) = (0.0, 0.0);
        for (rank, &i) in ranked.iter().enumerate() {
            if labels[i] {
                hits += 1.0;
                sum += hits / (rank + 1) as f64;
            }
        }
        let want = sum / hits;
        let got = auc_pr(&scores, &labels).map_err(|e| e.to_string())?;
        worst_pr = worst_pr.max((got - want).abs());
    }
    ensure(worst_pr < 1e-12, || format!("auc_pr off by {worst_pr:e}"))?;
    within(t0, Duration::from_secs(5), "metric oracles")?;
    Ok(format!("auc_roc max error {worst_roc:.1e} on 200 instances, auc_pr max error {worst_pr:.1e} on 50"))
}

fn gradient_check() -> Check {
    let t0 = Instant::now();
    let h = 1e-5;
    let floor = 1e-7;
    let mut worst: f64 = 0.0;
    for draw in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + draw);
        let mut params = MlpParams::<f64>::init(draw);
        for v in params.as_flat_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += 0.05 * z;
        }
        let n = 6;
        let xs: Vec<f64> = (0..n * N_INPUTS).map(|_| StandardNormal.sample(&mut rng)).collect();
        let ys: Vec<f64> = (0..n).map(|_| f64::from(rng.random_bool(0.4) as u8)).collect();
        let (_, grad) = params.loss_and_grad(&xs, &ys);
        for p in 0..N_PARAMS {
            let orig = params.as_flat()[p];
            params.as_flat_mut()[p] = orig + h;
            let up = params.loss(&xs, &ys);
            params.as_flat_mut()[p] = orig - h;
            let down = params.loss(&xs, &ys);
            params.as_flat_mut()[p] = orig;
            let fd = (up - down) / (2.0 * h);
            let g = grad.as_flat()[p];
            let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(floor);
            worst = worst.max(rel);
        }
    }
    ensure(worst < 1e-4, || format!("max relative error {worst:.2e}"))?;
    within(t0, Duration::from_secs(30), "gradient check")?;
    Ok(format!("max relative error {worst:.2e} over 10 draws x {N_PARAMS} parameters in {:.1}s", t0.elapsed().as_secs_f64()))
}

fn table_one(dir: &Path) -> (Check, Option<EvidenceCatalog>) {
    let t0 = Instant::now();
    let config = PipelineConfig::default();
    let run = || -> Result<(String, EvidenceCatalog), String> {
        let cohort = generate_cohort::<f64>(&config.cohort).map_err(|e| e.to_string())?;
        let prev = cohort.prevalence();
        ensure(cohort.len() == 30_389, || format!("{} rows", cohort.len()))?;
        ensure((prev - 0.188).abs() <= 0.02, || format!("prevalence {prev:.4}"))?;
        let out = build_bundle(&config, dir).map_err(|e| e.to_string())?;
        let nn = out.evaluation.model(NEURAL_NETWORK).ok_or("no network evaluation")?;
        let lin = out.evaluation.model(LINEAR_REGRESSION).ok_or("no linear evaluation")?;
        ensure(out.evaluation.n_folds == 5, || format!("{} folds", out.evaluation.n_folds))?;
        let (a, b) = (nn.auc_roc.mean, lin.auc_roc.mean);
        ensure(a >= b + 0.05, || format!("network AUC-ROC {a:.3} vs linear {b:.3}"))?;
        within(t0, Duration::from_secs(600), "full build")?;
        let catalog = EvidenceCatalog::read_bundle(dir).map_err(|e| e.to_string())?;
        let kinds = catalog.items_by_kind().map_err(|e| e.to_string())?;
        ensure(EvidenceKind::ALL.iter().all(|k| kinds.get(k).is_some_and(|v| !v.is_empty())), || "bundle is missing a kind".into())?;
        Ok((
            format!(
                "30389 rows, prevalence {prev:.3}; 5-fold AUC-ROC network {a:.3} vs linear {b:.3} (margin {:.3}) in {:.0}s",
                a - b,
                t0.elapsed().as_secs_f64()
            ),
            catalog,
        ))
    };
    match run() {
        Ok((msg, cat)) => (Ok(msg), Some(cat)),
        Err(e) => (Err(e), None),
    }
}

// ---------------------------------------------------------------- surrogates

fn uniform_cohort(n: usize, seed: u64) -> CohortTable<f64> {
    let schema = FeatureSchema::heart_failure();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            schema
                .features()
                .iter()
                .map(|d| if d.is_binary() { f64::from(rng.random_bool(0.5) as u8) } else { rng.random_range(d.min..d.max) })
                .collect()
        })
        .collect();
    CohortTable::from_dense(schema, rows, (0..n).map(|i| i % 5 == 0).collect()).unwrap()
}

fn span(schema: &FeatureSchema, name: &str) -> (usize, f64, f64) {
    let j = schema.index_of(name).unwrap();
    let d = schema.get(j);
    (j, d.min, d.max - d.min)
}

fn tree_ok(node: &TreeNode<f64>) -> bool {
    node.leaves().iter().all(|(v, _)| (0.0..=1.0).contains(v))
}

fn surrogate_invariants(catalog: Option<&EvidenceCatalog>) -> Check {
    let mut notes = Vec::new();
    if let Some(cat) = catalog {
        for t in &cat.stratified_tree {
            ensure(t.tree.depth() <= 3 && tree_ok(&t.tree), || format!("built stratum {} tree breaks depth or range", t.stratum_index))?;
        }
        for t in &cat.local_tree {
            ensure(t.tree.depth() <= 3 && tree_ok(&t.tree), || "patient tree breaks depth or range".into())?;
        }
        notes.push(format!("{} built trees depth <= 3 with leaves in [0,1]", cat.stratified_tree.len()));
    }

    // planted step inside age bands
    let cohort = uniform_cohort(3000, 3);
    let schema = cohort.schema().clone();
    let (a, amin, arange) = span(&schema, "age");
    let (b, bmin, brange) = span(&schema, "sodium");
    let cut = bmin + 0.4 * brange;
    let step = move |x: &[f64]| {
        let band = (5.0 * (x[a] - amin) / arange).floor().clamp(0.0, 4.0);
        0.02 + 0.2 * band + if x[b] > cut { 0.1 } else { 0.0 }
    };
    let trees = fit_stratified_trees(&step, &cohort, &TreeConfig::default()).map_err(|e| e.to_string())?;
    let mut worst_fid: f64 = 0.0;
    for st in &trees {
        ensure(st.tree.depth() == 1, || format!("stratum {} step tree has depth {}", st.stratum_index, st.tree.depth()))?;
        match &st.tree {
            TreeNode::Split { feature, .. } => ensure(*feature == b, || "step split on the wrong feature".into())?,
            TreeNode::Leaf { .. } => return Err("step not found".into()),
        }
        worst_fid = worst_fid.max(st.fidelity);
    }
    ensure(trees.len() == N_STRATA && worst_fid < 1e-6, || format!("step fidelity MSE {worst_fid:e}"))?;
    notes.push(format!("depth-1 step recovered, fidelity MSE {worst_fid:.1e}"));

    // planted linear
    let cohort = uniform_cohort(4000, 1);
    let terms: Vec<((usize, f64, f64), f64)> =
        [("age", 0.5), ("ejection_fraction", 0.3), ("creatinine", 0.2)].iter().map(|&(n, w)| (span(&schema, n), w)).collect();
    let t2 = terms.clone();
    let lin = move |x: &[f64]| t2.iter().map(|&((j, lo, r), w)| w * (x[j] - lo) / r).sum::<f64>();
    let rows = cohort.dense().map_err(|e| e.to_string())?;
    let mut per_stratum = [0usize; N_STRATA];
    for r in &rows {
        per_stratum[stratum_of(lin(r)).map_err(|e| e.to_string())?] += 1;
    }
    let strata = fit_stratified_linear(&lin, &cohort).map_err(|e| e.to_string())?;
    let mut worst_rel: f64 = 0.0;
    for s in &strata {
        ensure(s.n_train == per_stratum[s.stratum_index], || "stratum sizes disagree with the quintile oracle".into())?;
        for &((j, _, r), w) in &terms {
            let want = w / r;
            worst_rel = worst_rel.max(((s.coefficients[j].coefficient - want) / want).abs());
        }
    }
    ensure(worst_rel < 0.05, || format!("linear coefficient error {:.2}%", 100.0 * worst_rel))?;
    notes.push(format!("linear coefficients within {:.2e} relative", worst_rel));
    Ok(notes.join("; "))
}

// ---------------------------------------------------------------- imputation

fn imputation() -> Check {
    let cohort = generate_cohort::<f64>(&GeneratorConfig::default()).map_err(|e| e.to_string())?;
    let masked = inject_missingness(&cohort, 0.1, 11).map_err(|e| e.to_string())?;
    let imputed = impute_mice(&masked, DEFAULT_MICE_CYCLES).map_err(|e| e.to_string())?;
    let schema = cohort.schema();
    let truth = cohort.dense().map_err(|e| e.to_string())?;
    let p = schema.len();
    let (mut se_mice, mut se_mean, mut cells) = (0.0, 0.0, 0usize);
    for j in (0..p).filter(|&j| !schema.get(j).is_binary()) {
        let col: Vec<f64> = truth.iter().map(|r| r[j]).collect();
        let m = col.iter().sum::<f64>() / col.len() as f64;
        let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
        let observed: Vec<f64> = masked.rows().iter().filter_map(|r| r[j]).collect();
        let obs_mean = observed.iter().sum::<f64>() / observed.len() as f64;
        for (i, row) in masked.rows().iter().enumerate() {
            if row[j].is_none() {
                let t = truth[i][j];
                se_mice += ((imputed.rows()[i][j].unwrap() - t) / sd).powi(2);
                se_mean += ((obs_mean - t) / sd).powi(2);
                cells += 1;
            }
        }
    }
    let ratio = (se_mice / se_mean).sqrt();
    ensure(ratio <= 0.8, || format!("MICE/mean RMSE ratio {ratio:.3}"))?;

    // exact recovery of x2 = 2 x1
    let features: Vec<FeatureDescriptor> =
        (0..31).map(|i| FeatureDescriptor::continuous(&format!("f{i}"), -100.0, 100.0, FeatureCategory::VitalsCharacteristics)).collect();
    let schema = FeatureSchema::new(features).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut rows: Vec<Vec<Option<f64>>> = (0..300).map(|_| (0..31).map(|_| Some(rng.random_range(-10.0..10.0))).collect()).collect();
    for r in rows.iter_mut() {
        r[2] = Some(2.0 * r[1].unwrap());
    }
    let holes = [3usize, 77, 150, 222];
    for &h in &holes {
        rows[h][2] = None;
    }
    let expect: Vec<f64> = holes.iter().map(|&h| 2.0 * rows[h][1].unwrap()).collect();
    let out = impute_mice(&CohortTable::new(schema, rows, vec![false; 300]).map_err(|e| e.to_string())?, 3).map_err(|e| e.to_string())?;
    let worst = holes.iter().zip(&expect).map(|(&h, e)| (out.rows()[h][2].unwrap() - e).abs()).fold(0.0, f64::max);
    ensure(worst < 1e-6, || format!("planted relation recovered only to {worst:e}"))?;
    Ok(format!("RMSE ratio {ratio:.3} over {cells} standardized cells; planted x2 = 2 x1 recovered to {worst:.1e}"))
}

// ---------------------------------------------------------------- service

fn svc(evidence: EvidenceCatalog, dir: Option<&Path>) -> Result<Arc<SurveyService>, String> {
    SurveyService::open(evidence, dir, ServiceConfig { seed: 44, ..Default::default() }, Arc::new(ManualClock::default()))
        .map(Arc::new)
        .map_err(|e| e.to_string())
}

/// Answers the first `steps` steps of a session with a fixed rating.
fn answer_steps(api: &dyn SurveyApi, id: &str, steps: usize) -> Result<(), String> {
    for _ in 0..steps {
        let s = api.next_step(id).map_err(|e| e.to_string())?;
        if s.payload_type == PayloadType::Complete {
            break;
        }
        let rating = (s.expects != Expect::None).then_some(4);
        api.submit(id, &Submission { kind: s.expects, rating, step_ref: s.step_ref.unwrap() }).map_err(|e| e.to_string())?;
    }
    Ok(())
}

/// Sessions 0..22, one half-answered session, crash point, the rest.
fn study_run(api: &dyn SurveyApi, pop: &PopulationSpec, role: Role, crash: &mut dyn FnMut() -> Result<Box<dyn SurveyApi>, String>) -> Result<(Box<dyn SurveyApi>, String), String> {
    run_sessions(api, pop, 0..22, 3).map_err(|e| e.to_string())?;
    let partial = api.start_session(role).map_err(|e| e.to_string())?.session_id;
    answer_steps(api, &partial, 3)?;
    let api = crash()?;
    answer_steps(api.as_ref(), &partial, usize::MAX)?;
    run_sessions(api.as_ref(), pop, 23..44, 3).map_err(|e| e.to_string())?;
    Ok((api, partial))
}

fn copy_dir(from: &Path, to: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(to)?;
    for e in std::fs::read_dir(from)? {
        let e = e?;
        std::fs::copy(e.path(), to.join(e.file_name()))?;
    }
    Ok(())
}

fn end_to_end(evidence: EvidenceCatalog, root: &Path) -> Check {
    let pop = PopulationSpec::study();
    let role = pop.schedule()[22].0;
    let live = root.join("live");
    let crashed = root.join("crashed");
    let local: SocketAddr = ([127, 0, 0, 1], 0).into();

    // reference: one uninterrupted in-process run
    let reference = Embedded(svc(evidence.clone(), None)?);
    let mut no_crash = || -> Result<Box<dyn SurveyApi>, String> { Ok(Box::new(reference.clone())) };
    study_run(&reference, &pop, role, &mut no_crash)?;

    // over HTTP, copying the data directory mid-run as a kill -9 would leave it,
    // then restarting a fresh server on the copy
    let first = BackgroundServer::start(svc(evidence.clone(), Some(&live))?, local).map_err(|e| e.to_string())?;
    let api = HttpApi::new(&first.base_url()).map_err(|e| e.to_string())?;
    let mut first = Some(first);
    let mut pending = None;
    let mut crash = || -> Result<Box<dyn SurveyApi>, String> {
        copy_dir(&live, &crashed).map_err(|e| e.to_string())?;
        first.take().unwrap().stop().map_err(|e| e.to_string())?;
        let second = BackgroundServer::start(svc(evidence.clone(), Some(&crashed))?, local).map_err(|e| e.to_string())?;
        let api = HttpApi::new(&second.base_url()).map_err(|e| e.to_string())?;
        pending = Some(second);
        Ok(Box::new(api))
    };
    let (api2, partial) = study_run(&api, &pop, role, &mut crash)?;
    let server = pending.take().unwrap();

    let report = api2.report(&ExportFilter::default()).map_err(|e| e.to_string())?;
    let export = api2.export_csv(&ExportFilter::default()).map_err(|e| e.to_string())?;
    let rows = read_export(export.as_bytes()).map_err(|e| e.to_string())?;
    let (p1, p2): (ArmCatalog, ArmCatalog) = api2.catalogs().map_err(|e| e.to_string())?;
    let recomputed = ArmReport::from_responses(&rows, &p1, &p2).map_err(|e| e.to_string())?;
    ensure(report == recomputed, || "report differs from the export recomputation".into())?;
    ensure(report.n_sessions == 44, || format!("{} sessions in the report", report.n_sessions))?;
    let by_role: BTreeMap<Role, u64> = report.arms.iter().filter(|a| a.part == Part::One).fold(BTreeMap::new(), |mut m, a| {
        *m.entry(a.role).or_default() += a.pulls;
        m
    });
    ensure(by_role.get(&Role::Clinician) == Some(&14) && by_role.get(&Role::MlExpert) == Some(&30), || format!("part 1 pulls by role {by_role:?}"))?;

    let ref_report = reference.report(&ExportFilter::default()).map_err(|e| e.to_string())?;
    ensure(report == ref_report, || "restarted run diverged from the uninterrupted one".into())?;
    let ref_snap = reference.0.snapshot();
    server.stop().map_err(|e| e.to_string())?;
    let replayed = load_data_dir(&crashed).map_err(|e| e.to_string())?;
    ensure(replayed.snapshot == ref_snap, || "bandit state after replay differs".into())?;
    ensure(replayed.sessions.iter().all(|s| s.status == trustloop_service::SessionStatus::Complete), || "a session did not complete".into())?;
    ensure(replayed.sessions.iter().any(|s| s.session_id == partial), || "interrupted session lost".into())?;
    Ok(format!(
        "44 sessions (14 clinician, 30 expert) over HTTP with a mid-run crash copy and restart; {} responses, report equals export recomputation and the uninterrupted run",
        rows.len()
    ))
}

fn information_overload() -> Check {
    let pop = PopulationSpec { groups: vec![RaterGroup { role: Role::Clinician, count: 1, profile: RaterProfile::overloaded() }] };
    let api = Embedded(svc(demo_catalog(2).map_err(|e| e.to_string())?, None)?);
    run_sessions(&api, &pop, 0..400, 8).map_err(|e| e.to_string())?;
    let report = api.report(&ExportFilter { role: Some(Role::Clinician), part: Some(Part::One) }).map_err(|e| e.to_string())?;
    let (p1, _) = build_catalogs();
    let len = |id| p1.arm(id).map(|a| a.kinds.len()).unwrap_or(0);
    let h = report.arms.iter().find(|a| a.arm.letter() == 'H').ok_or("no arm H row")?;
    let beaten: Vec<String> = report
        .arms
        .iter()
        .filter(|a| a.pulls > 0 && len(a.arm) < len(h.arm) && a.mean > h.mean)
        .map(|a| format!("{} {:.3}", a.arm, a.mean))
        .collect();
    ensure(!beaten.is_empty(), || format!("arm H mean {:.3} is not below any shorter arm", h.mean))?;
    Ok(format!("arm H mean {:.3} below shorter arms {}", h.mean, beaten.join(", ")))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut results: Vec<(&str, Check)> = Vec::new();
    results.push(("UCB1 oracle equivalence", ucb_oracle()));
    results.push(("Arm catalog fidelity", catalog_fidelity()));
    results.push(("Metric oracles", metric_oracles()));
    results.push(("Gradient check", gradient_check()));
    let (t1, built) = table_one(&tmp.path().join("bundle"));
    results.push(("Network vs linear ordering", t1));
    results.push(("Surrogate invariants", surrogate_invariants(built.as_ref())));
    results.push(("Imputation", imputation()));
    results.push(("Bandit convergence", bandit_convergence()));
    let evidence = built.clone().map_or_else(|| demo_catalog(1).expect("demo catalog"), |c| c);
    results.push(("End-to-end replay", end_to_end(evidence, tmp.path())));
    results.push(("Information overload", information_overload()));

    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(d) => println!("PASS  {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL  {name}: {d}");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
