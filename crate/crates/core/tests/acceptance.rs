//! End-to-end acceptance checks. Runs as a plain binary so that each check
//! prints a single pass/fail line.

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rsrobust::channel::{sample_channel, trial_rng};
use rsrobust::conservative::conservative_ao;
use rsrobust::cutting_set::{initial_precoder, solve_max_min, SolveOptions, StepObjective, Tolerances};
use rsrobust::dof::{achievable_allocation, max_min_dof_nors, max_min_dof_rs, DofProfile};
use rsrobust::experiment::{
    draw_trial, dof_rows, estimates_at, run_maxmin_sweep, run_qos_study, write_records, ExperimentSpec, Mode, Scheme,
};
use rsrobust::linalg::{CMatrix, CVector, C64};
use rsrobust::pessimizer::{worst_case_mmse, PessimizerOptions, StreamKind};
use rsrobust::qos::{solve_qos, QosSpec, QosStatus};
use rsrobust::rates::{sinr_and_rates, wmse};
use rsrobust::{ChannelEstimate, CsitScaling, Precoder, RateAllocation, Strategy};

const EPS_V: f64 = 1e-3;

struct Outcome {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn cgauss<R: Rng>(rng: &mut R, n: usize) -> CVector {
    CVector::from_fn(n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im) / 2f64.sqrt()
    })
}

fn instance(seed: u64, users: usize, n_t: usize, radius: f64) -> Vec<ChannelEstimate> {
    let mut rng = trial_rng(seed, 0);
    (0..users)
        .map(|_| ChannelEstimate::new(sample_channel(&mut rng, n_t), radius).unwrap())
        .collect()
}

fn random_precoder<R: Rng>(rng: &mut R, n_t: usize, users: usize, power: f64) -> Precoder {
    let common = cgauss(rng, n_t);
    let private = CMatrix::from_columns(&(0..users).map(|_| cgauss(rng, n_t)).collect::<Vec<_>>());
    let p = Precoder::new(common, private).unwrap();
    let s = (power / p.total_power()).sqrt();
    p.scaled(s)
}

/// MMSE straight from the SINR, `1 / (1 + SINR)`.
fn direct_mmse(h: &CVector, p: &Precoder, k: usize, kind: StreamKind, noise: f64) -> f64 {
    let g = |v: &CVector| h.dotc(v).norm_sqr();
    let private: f64 = (0..p.users()).map(|j| g(&p.private_column(j))).sum();
    let (signal, rest) = match kind {
        StreamKind::Private => {
            let s = g(&p.private_column(k));
            (s, private - s + noise)
        }
        StreamKind::Common => (g(&p.common), private + noise),
    };
    rest / (signal + rest)
}

/// Random search over the ball: uniform and boundary draws, then shrinking
/// local perturbations around the best points found.
fn oracle_worst_mmse(est: &ChannelEstimate, p: &Precoder, k: usize, kind: StreamKind, noise: f64, seed: u64) -> f64 {
    let mut rng = trial_rng(seed, 99);
    let n = est.antennas();
    let center = est.nominal.as_vector().clone();
    let delta = est.radius;
    let project = |v: CVector| -> CVector {
        let d = &v - &center;
        let r = d.norm();
        if r > delta {
            &center + d * C64::new(delta / r, 0.0)
        } else {
            v
        }
    };
    let mut best: Vec<(f64, CVector)> = Vec::new();
    for i in 0..100_000 {
        let dir = cgauss(&mut rng, n);
        let dir = &dir / C64::new(dir.norm(), 0.0);
        let r = if i % 2 == 0 { delta } else { delta * rng.gen::<f64>().powf(1.0 / (2 * n) as f64) };
        let h = &center + dir * C64::new(r, 0.0);
        let v = direct_mmse(&h, p, k, kind, noise);
        if best.len() < 8 || v > best[best.len() - 1].0 {
            best.push((v, h));
            best.sort_by(|a, b| b.0.total_cmp(&a.0));
            best.truncate(8);
        }
    }
    let mut top = best[0].0;
    for (v0, h0) in best {
        let (mut v, mut h) = (v0, h0);
        let mut step = delta * 0.2;
        for _ in 0..40 {
            for _ in 0..100 {
                let cand = project(&h + cgauss(&mut rng, n) * C64::new(step, 0.0));
                let cv = direct_mmse(&cand, p, k, kind, noise);
                if cv > v {
                    v = cv;
                    h = cand;
                }
            }
            step *= 0.7;
        }
        top = top.max(v);
    }
    top
}

fn criterion_1() -> Outcome {
    let mut rng = trial_rng(1, 1);
    let mut worst = 0.0_f64;
    let mut exact = true;
    for _ in 0..1000 {
        let k = rng.gen_range(2..=6);
        let alphas: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
        let profile = DofProfile::new(&alphas).unwrap();
        let mut sorted = alphas.clone();
        sorted.sort_by(f64::total_cmp);
        let nors = (sorted[0] + sorted[1]) / 2.0;
        let mut rs = f64::INFINITY;
        for j in 2..=k {
            let mut s = 1.0;
            for a in &sorted[..j - 1] {
                s += a;
            }
            rs = rs.min(s / j as f64);
        }
        exact &= max_min_dof_nors(&profile) == nors && max_min_dof_rs(&profile).0 == rs;
        let alloc = achievable_allocation(&profile);
        let sum: f64 = alloc.common_split.iter().sum();
        exact &= alloc.common_split.iter().all(|&c| c >= 0.0) && (sum - alloc.common_dof).abs() <= 1e-12;
        for t in alloc.totals() {
            worst = worst.max((t - rs).abs());
        }
    }
    verdict(exact && worst <= 1e-12, format!("1000 profiles, formulas exact: {exact}, max total error {worst:.1e}"))
}

fn criteria_2_3() -> (Outcome, Outcome) {
    let opts = PessimizerOptions::default();
    let noise = 1.0;
    let mut worst_rel = 0.0_f64;
    let mut worst_below = 0.0_f64;
    let mut max_ratio = 0.0_f64;
    let mut runs = 0;
    for seed in 0..20u64 {
        let ests = instance(200 + seed, 2, 2, 0.15);
        let mut rng = trial_rng(300 + seed, 0);
        let p = random_precoder(&mut rng, 2, 2, 100.0);
        for k in 0..2 {
            for kind in [StreamKind::Private, StreamKind::Common] {
                let r = worst_case_mmse(&p, k, kind, &ests[k], noise, &opts).unwrap();
                let oracle = oracle_worst_mmse(&ests[k], &p, k, kind, noise, seed * 4 + k as u64 * 2 + kind as u64);
                worst_rel = worst_rel.max((r.worst_mmse - oracle).abs() / oracle);
                worst_below = worst_below.max((oracle - r.worst_mmse) / oracle);
                max_ratio = max_ratio.max(r.max_eig_ratio);
                runs += 1;
            }
        }
    }
    (
        verdict(
            worst_rel <= 1e-3 && worst_below <= 1e-3,
            format!("{runs} worst cases, max relative gap {worst_rel:.2e}, max shortfall {worst_below:.2e}"),
        ),
        verdict(max_ratio < 1e-5, format!("max eigenvalue ratio {max_ratio:.2e} over {runs} runs")),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = trial_rng(4, 4);
    let mut err = 0.0_f64;
    for _ in 0..1000 {
        let users = rng.gen_range(1..=4);
        let n_t = rng.gen_range(users..=4);
        let power = 10f64.powf(rng.gen_range(-1.0..4.0));
        let noise = 10f64.powf(rng.gen_range(-1.0..1.0));
        let h = cgauss(&mut rng, n_t);
        let p = random_precoder(&mut rng, n_t, users, power);
        let k = rng.gen_range(0..users);
        let rates = sinr_and_rates(&h, &p, k, noise).unwrap();
        for (kind, rate) in [(StreamKind::Private, rates.rate), (StreamKind::Common, rates.rate_common)] {
            let eps = direct_mmse(&h, &p, k, kind, noise);
            let xi = wmse(eps, 1.0 / eps).unwrap();
            err = err.max((1.0 - xi - rate).abs());
        }
    }
    verdict(err <= 1e-8, format!("max |1 - xi - R| = {err:.1e} over 1000 draws"))
}

fn monotone_drop(seq: &[f64]) -> f64 {
    seq.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max)
}

fn criterion_5(feasible: &mut Vec<(Precoder, RateAllocation, Vec<ChannelEstimate>, Strategy)>) -> Outcome {
    let tol = Tolerances::default();
    let mut con_drop = 0.0_f64;
    let mut cs_drop = 0.0_f64;
    let mut con_steps = 0;
    let mut cs_steps = 0;
    for seed in 0..20u64 {
        let strategy = if seed % 2 == 0 { Strategy::RateSplitting } else { Strategy::NoRateSplitting };
        let ests = instance(500 + seed, 3, 3, 0.15);
        let power = 100.0;
        let st = conservative_ao(
            &ests,
            &initial_precoder(&ests, power, strategy),
            strategy,
            StepObjective::MaxRate { power },
            1.0,
            &tol,
        )
        .unwrap();
        con_drop = con_drop.max(monotone_drop(&st.objectives));
        con_steps += st.objectives.len();
        let r = solve_max_min(&ests, power, 1.0, strategy, &SolveOptions::default()).unwrap();
        for seq in &r.ao_objectives {
            cs_drop = cs_drop.max(monotone_drop(seq));
            cs_steps += seq.len();
        }
        if r.certified {
            feasible.push((r.precoder, r.alloc, ests, strategy));
        }
    }
    verdict(
        con_drop <= 1e-9 && cs_drop <= 1e-9,
        format!("largest decrease: conservative {con_drop:.1e} ({con_steps} steps), cutting set {cs_drop:.1e} ({cs_steps} steps)"),
    )
}

/// Largest shortfall of the worst-case rates below the allocation, from a
/// fresh pessimization pass started at the nominal channels.
fn independent_violation(p: &Precoder, alloc: &RateAllocation, ests: &[ChannelEstimate], strategy: Strategy) -> f64 {
    let opts = PessimizerOptions::default();
    let mut v = f64::NEG_INFINITY;
    for (k, est) in ests.iter().enumerate() {
        let private = worst_case_mmse(p, k, StreamKind::Private, est, 1.0, &opts).unwrap();
        v = v.max(alloc.max_min_rate - alloc.common_split[k] - (-private.worst_mmse.log2()));
        if strategy == Strategy::RateSplitting {
            let common = worst_case_mmse(p, k, StreamKind::Common, est, 1.0, &opts).unwrap();
            v = v.max(alloc.common_rate() - (-common.worst_mmse.log2()));
        }
    }
    v
}

fn criterion_6(feasible: &[(Precoder, RateAllocation, Vec<ChannelEstimate>, Strategy)]) -> Outcome {
    let worst = feasible
        .iter()
        .map(|(p, a, e, s)| independent_violation(p, a, e, *s))
        .fold(f64::NEG_INFINITY, f64::max);
    verdict(worst <= EPS_V, format!("{} feasible results, max violation {worst:.2e} bits", feasible.len()))
}

fn base_spec(snr: Vec<f64>, schemes: Vec<Scheme>) -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(Mode::Maxmin);
    spec.users = 3;
    spec.antennas = 3;
    spec.trials = 10;
    spec.seed = 7;
    spec.snr_db = snr;
    spec.schemes = schemes;
    spec.csit.delta = 0.15;
    spec
}

fn value(records: &[rsrobust::experiment::TrialRecord], s: Scheme, snr: f64, trial: usize) -> Option<f64> {
    records
        .iter()
        .find(|r| r.scheme == s && r.snr_db == snr && r.trial == trial && r.certified)
        .map(|r| r.value)
}

fn criterion_7() -> Outcome {
    let spec = base_spec(vec![20.0, 60.0], vec![Scheme::NorsCs, Scheme::RsCon, Scheme::RsCs]);
    let records = run_maxmin_sweep(&spec).unwrap();
    let mut ok = true;
    let mut worst_gap = f64::INFINITY;
    for t in 0..10 {
        match (value(&records, Scheme::RsCs, 20.0, t), value(&records, Scheme::NorsCs, 20.0, t), value(&records, Scheme::RsCon, 20.0, t)) {
            (Some(rs), Some(nors), Some(con)) => {
                worst_gap = worst_gap.min(rs - nors).min(rs - con);
            }
            _ => ok = false,
        }
    }
    ok &= worst_gap >= -1e-3;
    let mean = |s| {
        let v: Vec<f64> = (0..10).filter_map(|t| value(&records, s, 60.0, t)).collect();
        (v.iter().sum::<f64>() / v.len() as f64, v.len())
    };
    let (rs60, n_rs) = mean(Scheme::RsCs);
    let (nors60, n_nors) = mean(Scheme::NorsCs);
    let gain = rs60 / nors60 - 1.0;
    ok &= n_rs == 10 && n_nors == 10 && gain >= 0.3;
    verdict(
        ok,
        format!("20 dB min margin {worst_gap:.2e}; 60 dB means rs-cs {rs60:.3} nors-cs {nors60:.3} (gain {:.0}%)", gain * 100.0),
    )
}

fn slopes(alpha: Vec<f64>) -> (f64, f64) {
    let mut spec = base_spec(vec![40.0, 50.0, 60.0], vec![Scheme::NorsCs, Scheme::RsCs]);
    spec.mode = Mode::Dof;
    spec.csit.alpha = alpha;
    let records = run_maxmin_sweep(&spec).unwrap();
    let rows = dof_rows(&spec, &records).unwrap();
    let slope = |s| rows.iter().find(|r| r.scheme == s).and_then(|r| r.empirical).unwrap_or(f64::NAN);
    (slope(Scheme::NorsCs), slope(Scheme::RsCs))
}

fn criterion_8() -> Outcome {
    let (nors, rs) = slopes(vec![0.0; 3]);
    verdict(nors < 0.1 && (0.23..=0.43).contains(&rs), format!("slopes 40-60 dB: nors-cs {nors:.3}, rs-cs {rs:.3}"))
}

fn criterion_9() -> Outcome {
    let (nors, rs) = slopes(vec![0.0, 0.5, 0.5]);
    verdict(
        (0.15..=0.35).contains(&nors) && (0.37..=0.6).contains(&rs),
        format!("slopes 40-60 dB: nors-cs {nors:.3}, rs-cs {rs:.3}"),
    )
}

fn criterion_10() -> Outcome {
    let mut spec = base_spec(vec![0.0], vec![Scheme::NorsCs, Scheme::RsCs]);
    spec.mode = Mode::Qos;
    spec.trials = 20;
    spec.qos_target = 10f64.log2();
    let (_, summaries) = run_qos_study(&spec).unwrap();
    let s = &summaries[0];
    let rs = s.feasible[&Scheme::RsCs];
    let nors = s.feasible[&Scheme::NorsCs];
    let p_rs = s.mean_power_intersection.get(&Scheme::RsCs).copied().unwrap_or(f64::NAN);
    let p_nors = s.mean_power_intersection.get(&Scheme::NorsCs).copied().unwrap_or(f64::NAN);
    verdict(
        rs == 20 && nors < rs && p_rs <= p_nors,
        format!("feasible rs-cs {rs}/20, nors-cs {nors}/20; intersection ({}) mean power rs-cs {p_rs:.3} nors-cs {p_nors:.3}", s.intersection),
    )
}

fn criterion_11(feasible: &mut Vec<(Precoder, RateAllocation, Vec<ChannelEstimate>, Strategy)>) -> Outcome {
    let tol = Tolerances::default();
    let target = 10f64.log2();
    let spec = QosSpec::new(target, 1.0, Strategy::RateSplitting).unwrap();
    let model = vec![CsitScaling::fixed(0.15); 3];
    let mut worst = 0.0_f64;
    let mut ok = true;
    let mut details = Vec::new();
    for trial in 0..5 {
        let ests = estimates_at(&draw_trial(11, 3, 3, trial), &model, 1.0).unwrap();
        let q = solve_qos(&spec, &ests, 1.0, &tol).unwrap();
        if q.status != QosStatus::Feasible {
            ok = false;
            details.push(format!("trial {trial} {:?}", q.status));
            continue;
        }
        feasible.push((q.precoder.clone(), q.alloc.clone(), ests.clone(), Strategy::RateSplitting));
        let r = solve_max_min(&ests, q.power, 1.0, Strategy::RateSplitting, &SolveOptions::default()).unwrap();
        let gap = (r.certificate.guaranteed_rate - target).abs();
        worst = worst.max(gap);
        details.push(format!("{:.4}", r.certificate.guaranteed_rate));
    }
    verdict(
        ok && worst <= 2.0 * EPS_V,
        format!("max-min rates at QoS power [{}] vs target {target:.4}, max gap {worst:.2e}", details.join(", ")),
    )
}

fn csv_bytes(spec: &ExperimentSpec) -> Vec<u8> {
    let mut buf = Vec::new();
    write_records(&mut buf, &run_maxmin_sweep(spec).unwrap()).unwrap();
    buf
}

fn criterion_12() -> Outcome {
    let mut spec = base_spec(vec![10.0, 30.0], Scheme::ALL.to_vec());
    spec.users = 2;
    spec.antennas = 2;
    spec.trials = 4;
    let a = csv_bytes(&spec);
    let b = csv_bytes(&spec);
    #[cfg(feature = "parallel")]
    let c = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| csv_bytes(&spec));
    #[cfg(not(feature = "parallel"))]
    let c = a.clone();
    verdict(a == b && a == c, format!("{} bytes, repeated and single-thread runs identical: {}", a.len(), a == b && a == c))
}

fn main() -> ExitCode {
    let mut feasible = Vec::new();
    let mut results: Vec<(u32, Outcome, f64)> = Vec::new();
    let timed = |id: u32, f: &mut dyn FnMut() -> Outcome, results: &mut Vec<(u32, Outcome, f64)>| {
        let start = Instant::now();
        let o = f();
        let secs = start.elapsed().as_secs_f64();
        println!("criterion {id:>2}: {} ({:.1} s) {}", if o.pass { "PASS" } else { "FAIL" }, secs, o.detail);
        results.push((id, o, secs));
    };
    timed(1, &mut criterion_1, &mut results);
    let start = Instant::now();
    let (c2, c3) = criteria_2_3();
    let secs = start.elapsed().as_secs_f64();
    for (id, o) in [(2, c2), (3, c3)] {
        println!("criterion {id:>2}: {} ({:.1} s) {}", if o.pass { "PASS" } else { "FAIL" }, secs, o.detail);
        results.push((id, o, secs));
    }
    timed(4, &mut criterion_4, &mut results);
    timed(5, &mut || criterion_5(&mut feasible), &mut results);
    timed(11, &mut || criterion_11(&mut feasible), &mut results);
    timed(6, &mut || criterion_6(&feasible), &mut results);
    timed(7, &mut criterion_7, &mut results);
    timed(8, &mut criterion_8, &mut results);
    timed(9, &mut criterion_9, &mut results);
    timed(10, &mut criterion_10, &mut results);
    timed(12, &mut criterion_12, &mut results);

    let budgets = [(1, 5.0), (2, 120.0), (8, 1800.0)];
    let mut ok = true;
    for (id, o, secs) in &results {
        ok &= o.pass;
        if let Some((_, b)) = budgets.iter().find(|(i, _)| i == id) {
            if secs > b {
                println!("criterion {id:>2}: FAIL runtime {secs:.1} s over the {b} s budget");
                ok = false;
            }
        }
    }
    let passed = results.iter().filter(|r| r.1.pass).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
