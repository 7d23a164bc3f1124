//! Tracking evaluation: CLEAR-MOT (identity aware) and per-frame set
//! distances (OSPA, OMAT, Hausdorff) between truth and hypotheses, plus the
//! per-frame count-error histogram.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use crate::assignment::min_cost_assignment;
use crate::error::{Error, Result};
use crate::types::BoundingBox;

/// Labelled boxes present in one frame.
pub type FrameSet = Vec<(u32, BoundingBox)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroundDistance {
    /// Euclidean distance between box centres, in pixels.
    Center,
    /// `1 - IoU`; pair it with a cutoff in `(0, 1]`.
    Iou,
}

impl FromStr for GroundDistance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "center" => Ok(Self::Center),
            "iou" => Ok(Self::Iou),
            other => Err(Error::Config(format!("unknown ground distance '{other}'"))),
        }
    }
}

impl std::fmt::Display for GroundDistance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Center => "center",
            Self::Iou => "iou",
        })
    }
}

impl GroundDistance {
    pub fn between(&self, a: &BoundingBox, b: &BoundingBox) -> f64 {
        match self {
            Self::Center => {
                let (ax, ay) = a.center();
                let (bx, by) = b.center();
                (ax - bx).hypot(ay - by)
            }
            Self::Iou => 1.0 - a.iou(b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsConfig {
    pub iou_threshold: f64,
    pub ospa_cutoff: f64,
    pub ospa_order: f64,
    pub ground_distance: GroundDistance,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            ospa_cutoff: 100.0,
            ospa_order: 1.0,
            ground_distance: GroundDistance::Center,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameMatch {
    pub truth_id: u32,
    pub hypothesis_id: u32,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClearReport {
    /// Percent; at most 100, unbounded below.
    pub mota: f64,
    pub motp: f64,
    pub precision: f64,
    pub recall: f64,
    pub ground_truth: usize,
    pub matches: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub id_switches: usize,
    /// Per truth id, the number of identity switches it suffered.
    pub id_switches_by_truth: BTreeMap<u32, usize>,
    #[serde(skip)]
    pub frame_matches: Vec<Vec<FrameMatch>>,
}

/// Optimal one-to-one matching maximizing total IoU, where pairs below
/// `threshold` are not allowed. Returns `(truth index, hypothesis index)`.
pub fn optimal_iou_matching(truth: &[BoundingBox], hyps: &[BoundingBox], threshold: f64) -> Vec<(usize, usize)> {
    let (rows, cols) = (truth.len(), hyps.len());
    let weights: Vec<f64> = truth
        .iter()
        .flat_map(|t| hyps.iter().map(move |h| t.iou(h)))
        .map(|iou| if iou >= threshold && iou > 0.0 { iou } else { 0.0 })
        .collect();
    let cost: Vec<f64> = weights.iter().map(|w| -w).collect();
    min_cost_assignment(&cost, rows, cols)
        .into_iter()
        .enumerate()
        .filter_map(|(r, c)| c.filter(|c| weights[r * cols + c] > 0.0).map(|c| (r, c)))
        .collect()
}

pub fn clear_mot(truth: &[FrameSet], hypotheses: &[FrameSet], iou_threshold: f64) -> Result<ClearReport> {
    if truth.len() != hypotheses.len() {
        return Err(Error::InvalidArgument(format!(
            "truth has {} frames but hypotheses have {}",
            truth.len(),
            hypotheses.len()
        )));
    }
    let mut previous: HashMap<u32, u32> = HashMap::new();
    let mut last_matched: HashMap<u32, u32> = HashMap::new();
    let mut report = ClearReport {
        mota: 0.0,
        motp: 0.0,
        precision: 0.0,
        recall: 0.0,
        ground_truth: 0,
        matches: 0,
        false_positives: 0,
        false_negatives: 0,
        id_switches: 0,
        id_switches_by_truth: BTreeMap::new(),
        frame_matches: Vec::with_capacity(truth.len()),
    };
    let mut iou_sum = 0.0;

    for (gt, hy) in truth.iter().zip(hypotheses) {
        let mut frame = Vec::new();
        let mut gt_used = vec![false; gt.len()];
        let mut hy_used = vec![false; hy.len()];

        // keep last frame's correspondences that are still valid
        let mut order: Vec<usize> = (0..gt.len()).collect();
        order.sort_by_key(|&g| gt[g].0);
        for g in order {
            let Some(&h_id) = previous.get(&gt[g].0) else { continue };
            if let Some(h) = (0..hy.len()).find(|&h| !hy_used[h] && hy[h].0 == h_id) {
                let iou = gt[g].1.iou(&hy[h].1);
                if iou >= iou_threshold && iou > 0.0 {
                    gt_used[g] = true;
                    hy_used[h] = true;
                    frame.push(FrameMatch {
                        truth_id: gt[g].0,
                        hypothesis_id: h_id,
                        iou,
                    });
                }
            }
        }

        let free_gt: Vec<usize> = (0..gt.len()).filter(|g| !gt_used[*g]).collect();
        let free_hy: Vec<usize> = (0..hy.len()).filter(|h| !hy_used[*h]).collect();
        let gt_boxes: Vec<BoundingBox> = free_gt.iter().map(|&g| gt[g].1).collect();
        let hy_boxes: Vec<BoundingBox> = free_hy.iter().map(|&h| hy[h].1).collect();
        for (a, b) in optimal_iou_matching(&gt_boxes, &hy_boxes, iou_threshold) {
            let (g, h) = (free_gt[a], free_hy[b]);
            gt_used[g] = true;
            hy_used[h] = true;
            let (g_id, h_id) = (gt[g].0, hy[h].0);
            if last_matched.get(&g_id).is_some_and(|&prev| prev != h_id) {
                report.id_switches += 1;
                *report.id_switches_by_truth.entry(g_id).or_default() += 1;
            }
            frame.push(FrameMatch {
                truth_id: g_id,
                hypothesis_id: h_id,
                iou: gt[g].1.iou(&hy[h].1),
            });
        }

        report.ground_truth += gt.len();
        report.matches += frame.len();
        report.false_negatives += gt_used.iter().filter(|u| !**u).count();
        report.false_positives += hy_used.iter().filter(|u| !**u).count();
        iou_sum += frame.iter().map(|m| m.iou).sum::<f64>();
        previous = frame.iter().map(|m| (m.truth_id, m.hypothesis_id)).collect();
        last_matched.extend(previous.iter().map(|(g, h)| (*g, *h)));
        frame.sort_by_key(|m| m.truth_id);
        report.frame_matches.push(frame);
    }

    let errors = report.false_positives + report.false_negatives + report.id_switches;
    report.mota = 100.0 * (1.0 - errors as f64 / report.ground_truth.max(1) as f64);
    report.motp = if report.matches > 0 {
        100.0 * iou_sum / report.matches as f64
    } else {
        100.0
    };
    let hyps_total = report.matches + report.false_positives;
    report.precision = if hyps_total > 0 {
        100.0 * report.matches as f64 / hyps_total as f64
    } else {
        100.0
    };
    report.recall = if report.ground_truth > 0 {
        100.0 * report.matches as f64 / report.ground_truth as f64
    } else {
        100.0
    };
    Ok(report)
}

/// OSPA distance of order `p` with cutoff `c` for a pairwise distance
/// function over `m` and `n` elements.
pub fn ospa_with(m: usize, n: usize, distance: impl Fn(usize, usize) -> f64, cutoff: f64, order: f64) -> Result<f64> {
    if !(cutoff > 0.0) || !(order >= 1.0) {
        return Err(Error::InvalidArgument("OSPA needs c > 0 and p >= 1".into()));
    }
    if m == 0 && n == 0 {
        return Ok(0.0);
    }
    if m == 0 || n == 0 {
        return Ok(cutoff);
    }
    let cost: Vec<f64> = (0..m)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| distance(i, j).min(cutoff).powf(order))
        .collect();
    let assignment = min_cost_assignment(&cost, m, n);
    let matched: f64 = assignment
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| cost[i * n + j]))
        .sum();
    let big = m.max(n);
    let penalty = cutoff.powf(order) * (big - m.min(n)) as f64;
    Ok(((matched + penalty) / big as f64).powf(1.0 / order))
}

/// OSPA between two point sets in the plane.
pub fn ospa(a: &[(f64, f64)], b: &[(f64, f64)], cutoff: f64, order: f64) -> Result<f64> {
    ospa_with(a.len(), b.len(), |i, j| point_distance(a[i], b[j]), cutoff, order)
}

fn point_distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// Hausdorff distance; `None` when either set is empty.
pub fn hausdorff_with(m: usize, n: usize, distance: impl Fn(usize, usize) -> f64) -> Option<f64> {
    if m == 0 || n == 0 {
        return None;
    }
    let directed_ab = (0..m)
        .map(|i| (0..n).map(|j| distance(i, j)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    let directed_ba = (0..n)
        .map(|j| (0..m).map(|i| distance(i, j)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    Some(directed_ab.max(directed_ba))
}

pub fn hausdorff(a: &[(f64, f64)], b: &[(f64, f64)]) -> Option<f64> {
    hausdorff_with(a.len(), b.len(), |i, j| point_distance(a[i], b[j]))
}

/// Optimal mass transfer of order `p` with uniform masses `1/m` and `1/n`;
/// `None` when either set is empty.
pub fn omat_with(m: usize, n: usize, distance: impl Fn(usize, usize) -> f64, order: f64) -> Option<f64> {
    if m == 0 || n == 0 {
        return None;
    }
    let g = gcd(m, n);
    // integer supplies n/g per source and demands m/g per sink
    let cost: Vec<f64> = (0..m)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| distance(i, j).powf(order))
        .collect();
    let total = transport(&cost, m, n, n / g, m / g);
    let mass = (m / g * n) as f64; // lcm(m, n)
    Some((total / mass).powf(1.0 / order))
}

pub fn omat(a: &[(f64, f64)], b: &[(f64, f64)], order: f64) -> Option<f64> {
    omat_with(a.len(), b.len(), |i, j| point_distance(a[i], b[j]), order)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// Min-cost transportation between `m` sources of supply `supply` and `n`
/// sinks of demand `demand` (equal totals), by successive shortest paths on
/// the residual bipartite graph.
fn transport(cost: &[f64], m: usize, n: usize, supply: usize, demand: usize) -> f64 {
    let mut flow = vec![0usize; m * n];
    let mut left = vec![supply; m];
    let mut need = vec![demand; n];
    let mut total_cost = 0.0;
    loop {
        if left.iter().all(|s| *s == 0) {
            break;
        }
        // Bellman-Ford over nodes: sources 0..m, sinks m..m+n.
        let nodes = m + n;
        let mut dist = vec![f64::INFINITY; nodes];
        let mut parent = vec![usize::MAX; nodes];
        for i in 0..m {
            if left[i] > 0 {
                dist[i] = 0.0;
            }
        }
        for _ in 0..nodes {
            let mut changed = false;
            for i in 0..m {
                for j in 0..n {
                    let c = cost[i * n + j];
                    if dist[i].is_finite() && dist[i] + c < dist[m + j] - 1e-12 {
                        dist[m + j] = dist[i] + c;
                        parent[m + j] = i;
                        changed = true;
                    }
                    if flow[i * n + j] > 0 && dist[m + j].is_finite() && dist[m + j] - c < dist[i] - 1e-12 {
                        dist[i] = dist[m + j] - c;
                        parent[i] = m + j;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let Some(sink) = (0..n)
            .filter(|j| need[*j] > 0 && dist[m + j].is_finite())
            .min_by(|a, b| dist[m + a].total_cmp(&dist[m + b]))
        else {
            break;
        };
        // walk back to a source, collecting the bottleneck
        let mut path = Vec::new();
        let mut node = m + sink;
        let mut bottleneck = need[sink];
        while parent[node] != usize::MAX {
            let prev = parent[node];
            path.push((prev, node));
            if node < m {
                // backward edge sink(prev) -> source(node)
                bottleneck = bottleneck.min(flow[node * n + (prev - m)]);
            }
            node = prev;
        }
        bottleneck = bottleneck.min(left[node]);
        left[node] -= bottleneck;
        need[sink] -= bottleneck;
        for (from, to) in path {
            if from < m {
                flow[from * n + (to - m)] += bottleneck;
                total_cost += bottleneck as f64 * cost[from * n + (to - m)];
            } else {
                flow[to * n + (from - m)] -= bottleneck;
                total_cost -= bottleneck as f64 * cost[to * n + (from - m)];
            }
        }
    }
    total_cost
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameSetMetrics {
    pub ospa: f64,
    pub omat: Option<f64>,
    pub hausdorff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SetReport {
    pub mean_ospa: f64,
    pub mean_omat: f64,
    pub mean_hausdorff: f64,
    /// Fraction of frames where OMAT/Hausdorff were defined.
    pub coverage: f64,
    #[serde(skip)]
    pub per_frame: Vec<FrameSetMetrics>,
}

pub fn set_metrics(truth: &[FrameSet], hypotheses: &[FrameSet], config: &MetricsConfig) -> Result<SetReport> {
    if truth.len() != hypotheses.len() {
        return Err(Error::InvalidArgument("truth and hypotheses are not frame-aligned".into()));
    }
    let mut per_frame = Vec::with_capacity(truth.len());
    for (gt, hy) in truth.iter().zip(hypotheses) {
        let d = |i: usize, j: usize| config.ground_distance.between(&gt[i].1, &hy[j].1);
        per_frame.push(FrameSetMetrics {
            ospa: ospa_with(gt.len(), hy.len(), d, config.ospa_cutoff, config.ospa_order)?,
            omat: omat_with(gt.len(), hy.len(), d, config.ospa_order),
            hausdorff: hausdorff_with(gt.len(), hy.len(), d),
        });
    }
    let frames = per_frame.len();
    let mean = |values: Vec<f64>| {
        if values.is_empty() {
            0.0
        } else {
            values.iter().sum::<f64>() / values.len() as f64
        }
    };
    let defined: Vec<&FrameSetMetrics> = per_frame.iter().filter(|f| f.omat.is_some()).collect();
    Ok(SetReport {
        mean_ospa: mean(per_frame.iter().map(|f| f.ospa).collect()),
        mean_omat: mean(defined.iter().filter_map(|f| f.omat).collect()),
        mean_hausdorff: mean(defined.iter().filter_map(|f| f.hausdorff).collect()),
        coverage: if frames == 0 { 1.0 } else { defined.len() as f64 / frames as f64 },
        per_frame,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountHistogram {
    /// `bins[e]` = number of frames with `|#truth - #reported| = e`.
    pub bins: Vec<usize>,
    pub frames: usize,
    pub fraction_exact: f64,
}

pub fn count_error_histogram(truth: &[FrameSet], hypotheses: &[FrameSet]) -> Result<CountHistogram> {
    if truth.len() != hypotheses.len() {
        return Err(Error::InvalidArgument("truth and hypotheses are not frame-aligned".into()));
    }
    let mut bins: Vec<usize> = Vec::new();
    for (gt, hy) in truth.iter().zip(hypotheses) {
        let e = gt.len().abs_diff(hy.len());
        if bins.len() <= e {
            bins.resize(e + 1, 0);
        }
        bins[e] += 1;
    }
    let frames = truth.len();
    Ok(CountHistogram {
        fraction_exact: if frames == 0 { 1.0 } else { bins.first().copied().unwrap_or(0) as f64 / frames as f64 },
        bins,
        frames,
    })
}

/// Everything `eval` reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub frames: usize,
    pub config: MetricsConfig,
    pub clear: ClearReport,
    pub sets: SetReport,
    pub counts: CountHistogram,
}

pub fn evaluate(truth: &[FrameSet], hypotheses: &[FrameSet], config: &MetricsConfig) -> Result<EvaluationReport> {
    Ok(EvaluationReport {
        frames: truth.len(),
        config: config.clone(),
        clear: clear_mot(truth, hypotheses, config.iou_threshold)?,
        sets: set_metrics(truth, hypotheses, config)?,
        counts: count_error_histogram(truth, hypotheses)?,
    })
}

impl EvaluationReport {
    pub fn to_text(&self) -> String {
        let c = &self.clear;
        let s = &self.sets;
        let mut out = String::new();
        let _ = writeln!(out, "frames          {}", self.frames);
        let _ = writeln!(out, "MOTA            {:.2}", c.mota);
        let _ = writeln!(out, "MOTP            {:.2}", c.motp);
        let _ = writeln!(out, "precision       {:.2}", c.precision);
        let _ = writeln!(out, "recall          {:.2}", c.recall);
        let _ = writeln!(out, "ground truth    {}", c.ground_truth);
        let _ = writeln!(out, "false positives {}", c.false_positives);
        let _ = writeln!(out, "false negatives {}", c.false_negatives);
        let _ = writeln!(out, "id switches     {}", c.id_switches);
        let _ = writeln!(out, "OSPA            {:.3}", s.mean_ospa);
        let _ = writeln!(out, "OMAT            {:.3}", s.mean_omat);
        let _ = writeln!(out, "Hausdorff       {:.3}", s.mean_hausdorff);
        let _ = writeln!(out, "set coverage    {:.3}", s.coverage);
        let bins: Vec<String> = self.counts.bins.iter().map(usize::to_string).collect();
        let _ = writeln!(out, "count errors    [{}]", bins.join(", "));
        let _ = writeln!(out, "exact count     {:.3}", self.counts.fraction_exact);
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serializable")
    }
}

/// Distinct ids present in a sequence.
pub fn ids(frames: &[FrameSet]) -> HashSet<u32> {
    frames.iter().flatten().map(|(id, _)| *id).collect()
}
