//! Acceptance checks. Runs as a plain binary (no libtest harness) and prints
//! one PASS/FAIL line per criterion; exits non-zero if any criterion fails.
//!
//! Regenerate the golden track file with `VBTRACK_BLESS=1 cargo test --test acceptance`.

use std::collections::BTreeSet;
use std::panic;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vbtrack::birth::{log_tau0, log_tau1, CandidateSequence};
use vbtrack::cli::{cmd_simulate, cmd_track};
use vbtrack::config::Config;
use vbtrack::dynamics::{predict_belief, transition_matrix};
use vbtrack::io::{load_detections, write_detections};
use vbtrack::metrics::{clear_mot, ospa_with, set_metrics, FrameSet, MetricsConfig};
use vbtrack::observation::EpsilonTable;
use vbtrack::simulator::{face_transform, simulate};
use vbtrack::tracker::{frame_sets, Tracker};
use vbtrack::vem::{e_x_step, e_z_step, AssignmentPriors, Responsibilities};
use vbtrack::visibility::{likelihoods, visibility_update, LikelihoodOrientation, VisibilityState};
use vbtrack::{
    AppearanceHistogram, BoundingBox, Detection, DetectorModel, GaussianBelief, Mat4, Mat6, ModelParams, Vec4, Vec6,
};

type Outcome = (bool, String);

fn random_spd<const N: usize>(rng: &mut ChaCha8Rng, scale: f64) -> nalgebra::SMatrix<f64, N, N> {
    let a = nalgebra::SMatrix::<f64, N, N>::from_fn(|_, _| rng.random_range(-1.0..1.0));
    (a * a.transpose() + nalgebra::SMatrix::<f64, N, N>::identity() * 0.5) * scale
}

fn base_params() -> ModelParams {
    let mut c = Config::default();
    c.w_lambda = Some(1.0);
    c.model_params().unwrap()
}

fn preset_params(c: &Config) -> ModelParams {
    c.model_params().unwrap()
}

// 1. Single track, single detector, responsibilities forced to one: the VEM
// update must reproduce a textbook gain-form Kalman filter.
fn kalman_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_mean: f64 = 0.0;
    let mut worst_cov: f64 = 0.0;
    for run in 0..2 {
        let lambda: Mat6 = random_spd(&mut rng, 0.5);
        let sigma: Mat4 = random_spd(&mut rng, 4.0);
        let (transform, offset) = if run == 0 {
            (Mat4::identity(), Vec4::zeros())
        } else {
            (face_transform(), Vec4::new(3.0, -2.0, 1.0, 0.5))
        };
        let mut params = base_params();
        params.detectors = vec![DetectorModel::affine(transform, offset, sigma, 1e-9, 1.0).unwrap()];
        params.dynamics_covariance = lambda;
        let p = *params.detectors[0].projection();

        let d = transition_matrix();
        let mut truth = Vec6::new(100.0, 80.0, 40.0, 90.0, 1.0, -0.5);
        let mut belief = GaussianBelief::new(truth + Vec6::repeat(2.0), random_spd(&mut rng, 10.0)).unwrap();
        let mut k_mean = belief.mean;
        let mut k_cov = belief.covariance;
        for frame in 1..=100u64 {
            truth = d * truth + Vec6::from_fn(|_, _| rng.random_range(-0.5..0.5));
            let y = p * truth + offset + Vec4::from_fn(|_, _| rng.random_range(-2.0..2.0));
            let bbox = BoundingBox::from_vector_clamped(&y);
            let det = Detection::new(0, bbox, AppearanceHistogram::uniform(16), frame);

            let prediction = predict_belief(&belief, &lambda).unwrap();
            let mut resp = Responsibilities::zeros(&[1], 2);
            resp.set(0, 0, 0, 0.0);
            resp.set(0, 0, 1, 1.0);
            belief = e_x_step(&prediction, &[vec![det.clone()]], &resp, &params, 1).unwrap();

            // oracle: predict, gain, Joseph-form covariance update
            let m_pred = d * k_mean;
            let c_pred = d * k_cov * d.transpose() + lambda;
            let s = p * c_pred * p.transpose() + sigma;
            let gain = c_pred * p.transpose() * s.try_inverse().unwrap();
            k_mean = m_pred + gain * (bbox.to_vector() - p * m_pred - offset);
            let ikh = Mat6::identity() - gain * p;
            k_cov = ikh * c_pred * ikh.transpose() + gain * sigma * gain.transpose();

            worst_mean = worst_mean.max((belief.mean - k_mean).abs().max());
            worst_cov = worst_cov.max((belief.covariance - k_cov).abs().max());
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    (
        worst_mean < 1e-6 && worst_cov < 1e-6 && elapsed < 1.0,
        format!("max |dmu| = {worst_mean:.2e}, max |dGamma| = {worst_cov:.2e}, {elapsed:.3} s (limits 1e-6, 1e-6, 1 s)"),
    )
}

// 2. Randomized E-Z calls: rows sum to one, non-existing tracks get exactly
// zero, all entries non-negative.
fn responsibility_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_row: f64 = 0.0;
    let mut gating_violations = 0;
    let mut negative = 0;
    for _ in 0..10_000 {
        let detectors = rng.random_range(1..=3);
        let tracks = rng.random_range(0..=6);
        let counts: Vec<usize> = (0..detectors).map(|_| rng.random_range(0..=5)).collect();
        let existence: Vec<bool> = (0..tracks).map(|_| rng.random_bool(0.7)).collect();
        let mut eps = EpsilonTable::new(&counts, tracks);
        for (i, &k_count) in counts.iter().enumerate() {
            for k in 0..k_count {
                for n in 0..=tracks {
                    let v = if rng.random_bool(0.05) { f64::NEG_INFINITY } else { rng.random_range(-60.0..5.0) };
                    eps.set_log(i, k, n, v);
                }
            }
        }
        let rows: Vec<Vec<f64>> = (0..detectors)
            .map(|_| (0..=tracks).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let priors = AssignmentPriors::from_rows(rows).unwrap();
        let alpha = e_z_step(&eps, &priors, &existence);
        for (i, &k_count) in counts.iter().enumerate() {
            for k in 0..k_count {
                let row = alpha.row(i, k);
                worst_row = worst_row.max((row.iter().sum::<f64>() - 1.0).abs());
                negative += row.iter().filter(|v| !(**v >= 0.0)).count();
                gating_violations += existence.iter().enumerate().filter(|(n, e)| !**e && row[n + 1] != 0.0).count();
            }
        }
    }
    (
        worst_row < 1e-9 && gating_violations == 0 && negative == 0,
        format!("10000 calls: max |row sum - 1| = {worst_row:.2e}, gating violations = {gating_violations}, negative = {negative}"),
    )
}

// 3. VEM convergence on pets-like.
fn vem_convergence() -> Outcome {
    let start = Instant::now();
    let c = Config::preset("pets-like").unwrap();
    let scene = simulate(&c.scenario().unwrap()).unwrap();
    let mut tracker = Tracker::new(preset_params(&c)).unwrap();
    let mut within = 0;
    for (t, dets) in scene.detections.iter().enumerate() {
        let o = tracker.step(t as u64 + 1, dets).unwrap();
        if o.converged && o.iterations_used <= 10 {
            within += 1;
        }
    }
    let frac = within as f64 / scene.detections.len() as f64;
    let elapsed = start.elapsed().as_secs_f64();
    (
        frac >= 0.95 && elapsed < 30.0,
        format!("{:.1}% of frames converged within 10 iterations, {elapsed:.2} s (limits 95%, 30 s)", 100.0 * frac),
    )
}

struct CpdRun {
    scene: vbtrack::simulator::Scenario,
    outputs: Vec<vbtrack::tracker::FrameOutput>,
    /// Per frame, `(track id, visibility posterior)` of every track.
    visibility: Vec<Vec<(u32, f64)>>,
}

fn run_cpd() -> CpdRun {
    let c = Config::preset("cpd-like").unwrap();
    let scene = simulate(&c.scenario().unwrap()).unwrap();
    let mut tracker = Tracker::new(preset_params(&c)).unwrap();
    let mut outputs = Vec::new();
    let mut visibility = Vec::new();
    for (t, dets) in scene.detections.iter().enumerate() {
        outputs.push(tracker.step(t as u64 + 1, dets).unwrap());
        visibility.push(tracker.tracks().iter().map(|tr| (tr.id, tr.visibility_posterior)).collect());
    }
    CpdRun {
        scene,
        outputs,
        visibility,
    }
}

// 4. Birth of the entering person, visibility through the occlusion of
// person 1, and identity preservation across it.
fn birth_and_visibility(run: &CpdRun) -> Outcome {
    let truth = &run.scene.truth.frames;
    let hyps = frame_sets(&run.outputs);
    let report = clear_mot(truth, &hyps, 0.5).unwrap();

    // first frame f with target 3 detected at f, f+1, f+2
    let detected = |frame: usize, id: u32| run.scene.sources[frame - 1].contains(&Some(id));
    let first_run = (1..=truth.len() - 2).find(|&f| (f..f + 3).all(|g| detected(g, 3))).unwrap();
    let third_ready = first_run + 2;
    let born = report
        .frame_matches
        .iter()
        .position(|m| m.iter().any(|x| x.truth_id == 3))
        .map(|t| t + 1);
    let birth_ok = born.is_some_and(|b| b >= first_run && b <= third_ready + 5);

    // the track following person 1 just before the occlusion
    let occluded = 200..=249usize;
    let follower = report.frame_matches[198].iter().find(|m| m.truth_id == 1).map(|m| m.hypothesis_id);
    let vis = |frame: usize, id: u32| {
        run.visibility[frame - 1].iter().find(|(tid, _)| *tid == id).map_or(0.0, |(_, v)| *v)
    };
    let (dropped, recovered_at) = match follower {
        Some(id) => (
            occluded.clone().any(|f| vis(f, id) < 0.5),
            (250..=259usize).find(|&f| vis(f, id) >= 0.5 && report.frame_matches[f - 1].iter().any(|m| m.hypothesis_id == id && m.truth_id == 1)),
        ),
        None => (false, None),
    };
    let switches = report.id_switches_by_truth.get(&1).copied().unwrap_or(0);
    (
        birth_ok && dropped && recovered_at.is_some() && switches == 0,
        format!(
            "entry detected from frame {first_run}, born at {born:?} (limit {}); person 1 visibility below 0.5 during occlusion: {dropped}; recovered at {recovered_at:?} (limit 259); person 1 id switches = {switches}",
            third_ready + 5
        ),
    )
}

// 5. Per-frame count error on cpd-like.
fn count_accuracy(run: &CpdRun) -> Outcome {
    let hyps = frame_sets(&run.outputs);
    let exact = run
        .scene
        .truth
        .frames
        .iter()
        .zip(&hyps)
        .filter(|(t, h)| t.len() == h.len())
        .count();
    let frac = exact as f64 / hyps.len() as f64;
    (frac >= 0.8, format!("count error 0 in {:.1}% of frames (limit 80%)", 100.0 * frac))
}

// 6. Tracking quality on pets-like (miss 0.1, clutter 2 per frame).
fn tracking_quality() -> Outcome {
    let c = Config::preset("pets-like").unwrap();
    let scenario = c.scenario().unwrap();
    assert_eq!(scenario.detectors[0].miss_probability, 0.1);
    assert_eq!(scenario.detectors[0].clutter_rate, 2.0);
    let scene = simulate(&scenario).unwrap();
    let mut tracker = Tracker::new(preset_params(&c)).unwrap();
    let outputs: Vec<_> = scene
        .detections
        .iter()
        .enumerate()
        .map(|(t, d)| tracker.step(t as u64 + 1, d).unwrap())
        .collect();
    let hyps = frame_sets(&outputs);
    let clear = clear_mot(&scene.truth.frames, &hyps, 0.5).unwrap();
    let metrics = MetricsConfig {
        ospa_cutoff: 100.0,
        ospa_order: 1.0,
        ..MetricsConfig::default()
    };
    let sets = set_metrics(&scene.truth.frames, &hyps, &metrics).unwrap();
    (
        clear.mota >= 85.0 && sets.mean_ospa <= 20.0,
        format!(
            "MOTA = {:.2}% (limit 85), mean OSPA = {:.2} px (limit 20); FP {} FN {} IDSW {}",
            clear.mota, sets.mean_ospa, clear.false_positives, clear.false_negatives, clear.id_switches
        ),
    )
}

fn permutations(n: usize, k: usize) -> Vec<Vec<usize>> {
    // all injective maps from 0..k into 0..n
    fn rec(n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for j in 0..n {
            if !cur.contains(&j) {
                cur.push(j);
                rec(n, k, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(n, k, &mut Vec::new(), &mut out);
    out
}

/// Best one-to-one matching by enumeration, allowing each element to stay
/// unmatched; returns the positive-weight pairs of the optimum and whether it
/// is unique.
fn brute_max_iou(truth: &[BoundingBox], hyps: &[BoundingBox], threshold: f64) -> (BTreeSet<(usize, usize)>, bool) {
    let w = |g: usize, h: usize| {
        let v = truth[g].iou(&hyps[h]);
        if v >= threshold && v > 0.0 { v } else { 0.0 }
    };
    // pad hypotheses with "unmatched" slots so every truth can be left alone
    let slots = hyps.len() + truth.len();
    let mut best = -1.0;
    let mut best_sets: Vec<BTreeSet<(usize, usize)>> = Vec::new();
    for perm in permutations(slots, truth.len()) {
        let pairs: BTreeSet<(usize, usize)> = perm
            .iter()
            .enumerate()
            .filter(|(g, h)| **h < hyps.len() && w(*g, **h) > 0.0)
            .map(|(g, h)| (g, *h))
            .collect();
        let total: f64 = pairs.iter().map(|(g, h)| w(*g, *h)).sum();
        if total > best + 1e-12 {
            best = total;
            best_sets = vec![pairs];
        } else if (total - best).abs() <= 1e-12 && !best_sets.contains(&pairs) {
            best_sets.push(pairs);
        }
    }
    let unique = best_sets.len() == 1;
    (best_sets.swap_remove(0), unique)
}

fn brute_ospa(a: &[(f64, f64)], b: &[(f64, f64)], c: f64, p: f64) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if large.is_empty() {
        return 0.0;
    }
    let d = |x: (f64, f64), y: (f64, f64)| (x.0 - y.0).hypot(x.1 - y.1).min(c).powf(p);
    let best = permutations(large.len(), small.len())
        .iter()
        .map(|perm| perm.iter().enumerate().map(|(i, j)| d(small[i], large[*j])).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    let best = if small.is_empty() { 0.0 } else { best };
    ((best + c.powf(p) * (large.len() - small.len()) as f64) / large.len() as f64).powf(1.0 / p)
}

// 7. Assignment correctness of clear_mot and ospa against enumeration.
fn metric_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut clear_mismatch = 0;
    let mut ospa_worst: f64 = 0.0;
    let mut checked_clear = 0;
    for _ in 0..1000 {
        let m = rng.random_range(0..=6);
        let n = rng.random_range(0..=6);
        let boxes = |rng: &mut ChaCha8Rng, k: usize| -> Vec<BoundingBox> {
            (0..k)
                .map(|_| {
                    BoundingBox::new(
                        rng.random_range(0.0..60.0),
                        rng.random_range(0.0..60.0),
                        rng.random_range(20.0..50.0),
                        rng.random_range(20.0..50.0),
                    )
                    .unwrap()
                })
                .collect()
        };
        let truth = boxes(&mut rng, m);
        let hyps = boxes(&mut rng, n);
        let threshold = rng.random_range(0.1..0.6);

        let truth_set: FrameSet = truth.iter().enumerate().map(|(i, b)| (i as u32 + 1, *b)).collect();
        let hyp_set: FrameSet = hyps.iter().enumerate().map(|(i, b)| (i as u32 + 101, *b)).collect();
        let report = clear_mot(&[truth_set], &[hyp_set], threshold).unwrap();
        let got: BTreeSet<(usize, usize)> = report.frame_matches[0]
            .iter()
            .map(|x| (x.truth_id as usize - 1, x.hypothesis_id as usize - 101))
            .collect();
        let (expected, unique) = brute_max_iou(&truth, &hyps, threshold);
        if unique {
            checked_clear += 1;
            if got != expected {
                clear_mismatch += 1;
            }
        }

        let centers = |v: &[BoundingBox]| v.iter().map(BoundingBox::center).collect::<Vec<_>>();
        let (a, b) = (centers(&truth), centers(&hyps));
        let c = rng.random_range(5.0..80.0);
        let p = rng.random_range(1.0..3.0);
        let got = ospa_with(a.len(), b.len(), |i, j| (a[i].0 - b[j].0).hypot(a[i].1 - b[j].1), c, p).unwrap();
        ospa_worst = ospa_worst.max((got - brute_ospa(&a, &b, c, p)).abs());
    }
    (
        clear_mismatch == 0 && ospa_worst < 1e-9 && checked_clear > 900,
        format!(
            "clear_mot matchings differing from enumeration: {clear_mismatch} of {checked_clear} uniquely-optimal instances; max |OSPA - enumeration| = {ospa_worst:.1e}"
        ),
    )
}

type Q = num_rational::BigRational;

fn q(x: f64) -> Q {
    Q::from_float(x).expect("finite")
}

fn qmat<const R: usize, const C: usize>(m: &nalgebra::SMatrix<f64, R, C>) -> Vec<Vec<Q>> {
    (0..R).map(|r| (0..C).map(|c| q(m[(r, c)])).collect()).collect()
}

fn qmul(a: &[Vec<Q>], b: &[Vec<Q>]) -> Vec<Vec<Q>> {
    let inner = b.len();
    (0..a.len())
        .map(|r| (0..b[0].len()).map(|c| (0..inner).map(|k| &a[r][k] * &b[k][c]).sum()).collect())
        .collect()
}

fn qadd(a: &[Vec<Q>], b: &[Vec<Q>]) -> Vec<Vec<Q>> {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(u, v)| u + v).collect()).collect()
}

fn qt(a: &[Vec<Q>]) -> Vec<Vec<Q>> {
    (0..a[0].len()).map(|c| a.iter().map(|row| row[c].clone()).collect()).collect()
}

/// Exact determinant of a rational matrix: scale to integers, then
/// fraction-free (Bareiss) elimination. Returns `(integer det, scale)` with
/// `det = integer det / scale^n`.
fn exact_det(m: &[Vec<Q>]) -> (num_bigint::BigInt, num_bigint::BigInt) {
    use num_traits::{One, Zero};
    let n = m.len();
    let mut scale = num_bigint::BigInt::one();
    for v in m.iter().flatten() {
        let d = v.denom();
        scale = num_integer::Integer::lcm(&scale, d);
    }
    let mut a: Vec<Vec<num_bigint::BigInt>> = m
        .iter()
        .map(|row| row.iter().map(|v| (v * Q::from_integer(scale.clone())).to_integer()).collect())
        .collect();
    let mut sign = num_bigint::BigInt::one();
    let mut prev = num_bigint::BigInt::one();
    for k in 0..n {
        if a[k][k].is_zero() {
            let Some(swap) = (k + 1..n).find(|&r| !a[r][k].is_zero()) else {
                return (num_bigint::BigInt::zero(), scale);
            };
            a.swap(k, swap);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[i][j] = (&a[i][j] * &a[k][k] - &a[i][k] * &a[k][j]) / &prev;
            }
        }
        prev = a[k][k].clone();
    }
    (sign * &a[n - 1][n - 1], scale)
}

fn ln_big(x: &num_bigint::BigInt) -> f64 {
    use num_traits::ToPrimitive;
    let bits = x.bits();
    let shift = bits.saturating_sub(60);
    (x >> shift).to_f64().unwrap().ln() + shift as f64 * std::f64::consts::LN_2
}

/// `ln tau0` from the joint Gaussian of all `L + 1` stacked observations,
/// built and reduced in exact rational arithmetic (the stacked covariance is
/// too ill-conditioned for a double-precision factorization to serve as a
/// reference).
fn stacked_log_tau0(candidate: &CandidateSequence, params: &ModelParams) -> f64 {
    use num_traits::{ToPrimitive, Zero};
    let det = &params.detectors[candidate.newest().detector];
    let p = qmat(det.projection());
    let pt = qt(&p);
    let d = qmat(&transition_matrix());
    let lambda = qmat(&params.dynamics_covariance);
    let gamma = qmat(&params.birth.flat_covariance);
    let sigma = qmat(det.obs_covariance());
    let m: Vec<Vec<Q>> = params.birth.flat_mean.iter().map(|v| vec![q(*v)]).collect();
    let offset: Vec<Q> = det.offset().iter().map(|v| q(*v)).collect();
    let k = candidate.detections().len();
    let n = 4 * k;

    let mut pows = vec![qmat(&Mat6::identity())];
    for j in 1..k {
        pows.push(qmul(&d, &pows[j - 1]));
    }
    // augmented [[S, r], [r^T, 0]]: det = -(r^T adj(S) r)
    let mut aug = vec![vec![Q::zero(); n + 1]; n + 1];
    for j in 0..k {
        let mean = qmul(&qmul(&p, &pows[j]), &m);
        for (a, box_value) in candidate.detections()[j].bbox.to_vector().iter().enumerate() {
            let r = q(*box_value) - &mean[a][0] - &offset[a];
            aug[4 * j + a][n] = r.clone();
            aug[n][4 * j + a] = r;
        }
        for l in 0..k {
            let mut c = qmul(&qmul(&pows[j], &gamma), &qt(&pows[l]));
            for s in 1..=j.min(l) {
                c = qadd(&c, &qmul(&qmul(&pows[j - s], &lambda), &qt(&pows[l - s])));
            }
            let mut block = qmul(&qmul(&p, &c), &pt);
            if j == l {
                block = qadd(&block, &sigma);
            }
            for a in 0..4 {
                for b in 0..4 {
                    aug[4 * j + a][4 * l + b] = block[a][b].clone();
                }
            }
        }
    }
    let cov: Vec<Vec<Q>> = aug[..n].iter().map(|row| row[..n].to_vec()).collect();
    // same scale for both: the augmented matrix contains the covariance
    let (det_cov, scale_cov) = exact_det(&cov);
    let (det_aug, scale_aug) = exact_det(&aug);
    // det(cov) = det_cov / scale_cov^n, det(aug) = det_aug / scale_aug^(n+1)
    let cov_q = Q::new(det_cov.clone(), num_traits::pow(scale_cov.clone(), n));
    let aug_q = Q::new(det_aug, num_traits::pow(scale_aug, n + 1));
    let quad = (-aug_q / cov_q).to_f64().unwrap();
    let log_det = ln_big(&det_cov) - n as f64 * ln_big(&scale_cov);
    -0.5 * (quad + log_det + n as f64 * (2.0 * std::f64::consts::PI).ln())
}

// 8. Birth test numerics.
fn birth_numerics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut params = base_params();
    let face = DetectorModel::affine(
        face_transform(),
        Vec4::new(1.0, 2.0, 0.0, 0.0),
        Mat4::from_diagonal(&Vec4::new(2.0, 2.0, 1.0, 1.0)),
        params.detectors[0].clutter_density(),
        1.0,
    )
    .unwrap();
    params.detectors.push(face);
    let hist = AppearanceHistogram::uniform(16);
    let random_box = |rng: &mut ChaCha8Rng| {
        let w = rng.random_range(1.0..200.0);
        let h = rng.random_range(1.0..300.0);
        BoundingBox::new(rng.random_range(0.0..640.0 - w), rng.random_range(0.0..480.0 - h), w, h).unwrap()
    };

    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let detector = rng.random_range(0..2);
        let len = rng.random_range(2..=4);
        let base = random_box(&mut rng);
        let dets: Vec<Detection> = (0..len)
            .map(|j| {
                let jitter = if rng.random_bool(0.5) { 3.0 } else { 80.0 };
                let v = base.to_vector() + Vec4::from_fn(|_, _| rng.random_range(-jitter..jitter));
                Detection::new(detector, BoundingBox::from_vector_clamped(&v), hist.clone(), 10 + j as u64)
            })
            .collect();
        let cand = CandidateSequence::new(dets).unwrap();
        worst = worst.max((log_tau0(&cand, &params).unwrap() - stacked_log_tau0(&cand, &params)).abs());
    }

    let params = base_params();
    let mut stationary_ok = 0;
    let mut random_ok = 0;
    let draws = 1000;
    for _ in 0..draws {
        let base = random_box(&mut rng);
        let still: Vec<Detection> = (0..3)
            .map(|j| {
                let v = base.to_vector() + Vec4::from_fn(|_, _| rng.random_range(-1.0..1.0));
                Detection::new(0, BoundingBox::from_vector_clamped(&v), hist.clone(), 1 + j)
            })
            .collect();
        let cand = CandidateSequence::new(still).unwrap();
        if log_tau0(&cand, &params).unwrap() > log_tau1(&cand, &params).unwrap() {
            stationary_ok += 1;
        }
        let scattered: Vec<Detection> = (0..3).map(|j| Detection::new(0, random_box(&mut rng), hist.clone(), 1 + j)).collect();
        let cand = CandidateSequence::new(scattered).unwrap();
        if log_tau0(&cand, &params).unwrap() < log_tau1(&cand, &params).unwrap() {
            random_ok += 1;
        }
    }
    let random_frac = random_ok as f64 / draws as f64;
    (
        worst < 1e-8 && stationary_ok == draws && random_frac >= 0.95,
        format!(
            "max |ln tau0 sequential - stacked| = {worst:.2e} (limit 1e-8); stationary tau0 > tau1 in {stationary_ok}/{draws}; uniform random tau0 < tau1 in {:.1}% (limit 95%)",
            100.0 * random_frac
        ),
    )
}

// 9. Forward recursion against enumeration of all hidden paths.
fn visibility_enumeration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for trial in 0..500 {
        let steps = rng.random_range(1..=10);
        let pi = rng.random_range(0.5..1.0);
        let lambda = rng.random_range(0.1..20.0);
        let p0 = rng.random_range(0.0..1.0);
        let orientation = if trial % 2 == 0 { LikelihoodOrientation::Swapped } else { LikelihoodOrientation::AsPrinted };
        let nus: Vec<f64> = (0..steps).map(|_| rng.random_range(0.01..1.5)).collect();

        let mut s = VisibilityState::new(p0);
        for nu in &nus {
            s = visibility_update(s, *nu, pi, lambda, orientation);
        }

        // sum over v_0..v_T of p(v_0) prod p(v_t | v_t-1) p(nu_t | v_t)
        let mut mass = [0.0f64; 2]; // by final state: [hidden, visible]
        for path in 0..(1u32 << (steps + 1)) {
            let state = |t: usize| (path >> t) & 1;
            let mut w = if state(0) == 1 { p0 } else { 1.0 - p0 };
            for (t, nu) in nus.iter().enumerate() {
                let (prev, cur) = (state(t), state(t + 1));
                w *= if prev == cur { pi } else { 1.0 - pi };
                let (lv, lh) = likelihoods(*nu, lambda, orientation);
                w *= if cur == 1 { lv } else { lh };
            }
            mass[state(steps) as usize] += w;
        }
        let expected = mass[1] / (mass[0] + mass[1]);
        worst = worst.max((s.posterior_visible - expected).abs());
    }
    (worst < 1e-12, format!("500 random sequences, max |filter - enumeration| = {worst:.2e} (limit 1e-12)"))
}

fn golden_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/cpd_like_80_tracks.txt")
}

// 10. Causality (a longer input leaves earlier output unchanged) and
// determinism (identical runs, matching the golden file).
fn causality_and_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut config = Config::preset("cpd-like").unwrap();
    config.sim_frames = 80;
    config.targets.truncate(2);
    config.w_lambda_samples = 20_000;

    let sim_dir = dir.path().join("sim");
    cmd_simulate(&config, &sim_dir).unwrap();
    let stream = load_detections(&sim_dir.join("detections.txt"), 16).unwrap();
    let short = dir.path().join("short.txt");
    write_detections(&short, &stream[..60]).unwrap();

    let full_a = dir.path().join("a.txt");
    let full_b = dir.path().join("b.txt");
    let part = dir.path().join("part.txt");
    cmd_track(&config, &sim_dir.join("detections.txt"), &full_a).unwrap();
    cmd_track(&config, &sim_dir.join("detections.txt"), &full_b).unwrap();
    cmd_track(&config, &short, &part).unwrap();

    let a = std::fs::read_to_string(&full_a).unwrap();
    let b = std::fs::read_to_string(&full_b).unwrap();
    let prefix: String = a
        .lines()
        .filter(|l| l.split(',').next().unwrap().parse::<u64>().unwrap() <= 60)
        .map(|l| format!("{l}\n"))
        .collect();
    let causal = prefix == std::fs::read_to_string(&part).unwrap();
    let deterministic = a == b;

    let golden = golden_path();
    if std::env::var_os("VBTRACK_BLESS").is_some() {
        std::fs::create_dir_all(golden.parent().unwrap()).unwrap();
        std::fs::write(&golden, &a).unwrap();
    }
    let matches_golden = std::fs::read_to_string(&golden).map(|g| g == a).unwrap_or(false);
    (
        causal && deterministic && matches_golden,
        format!(
            "frames 1..60 identical with 60 or 80 input frames: {causal}; repeated runs identical: {deterministic}; matches {}: {matches_golden}",
            golden.file_name().unwrap().to_string_lossy()
        ),
    )
}

fn main() {
    let cpd = std::sync::OnceLock::new();
    let cpd_run = || cpd.get_or_init(run_cpd);
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("kalman oracle equivalence", Box::new(kalman_oracle)),
        ("responsibility normalization and gating", Box::new(responsibility_properties)),
        ("VEM convergence on pets-like", Box::new(vem_convergence)),
        ("birth and visibility on cpd-like", Box::new(|| birth_and_visibility(cpd_run()))),
        ("count accuracy on cpd-like", Box::new(|| count_accuracy(cpd_run()))),
        ("tracking quality on pets-like", Box::new(tracking_quality)),
        ("metric assignments vs enumeration", Box::new(metric_correctness)),
        ("birth test numerics", Box::new(birth_numerics)),
        ("visibility HMM vs enumeration", Box::new(visibility_enumeration)),
        ("causality and determinism", Box::new(causality_and_determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (pass, detail) = panic::catch_unwind(panic::AssertUnwindSafe(check))
            .unwrap_or_else(|_| (false, "panicked".to_string()));
        if !pass {
            failed += 1;
        }
        println!("criterion {:>2} {}: {} - {}", i + 1, if pass { "PASS" } else { "FAIL" }, name, detail);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
