//! Independent oracles and builders shared by the integration suites.
//!
//! Nothing here calls into the matching, AP or IoU code under test.

#![allow(dead_code)]

pub mod fusion;

use std::path::{Path, PathBuf};

use rand::rngs::StdRng;
use rand::Rng;

use sentinel::geometry::{BBox, ClassLabel, Detection, DetectorId, FrameId};
use sentinel::metrics::GroundTruthBox;

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

pub fn label(s: &str) -> ClassLabel {
    ClassLabel::new(s).unwrap()
}

pub fn fid(s: &str) -> FrameId {
    FrameId::new(s).unwrap()
}

pub fn det(src: &str, frame: &str, class: &str, conf: f64, b: BBox) -> Detection {
    Detection::new(b, label(class), conf, DetectorId::new(src).unwrap(), fid(frame)).unwrap()
}

pub fn truth(frame: &str, class: &str, b: BBox) -> GroundTruthBox {
    GroundTruthBox {
        bbox: b,
        label: label(class),
        frame_id: fid(frame),
    }
}

/// Pixels of an `n`x`n` grid whose centers fall inside the half-open box.
fn center_inside(b: &BBox, x: f64, y: f64) -> bool {
    x >= b.x_min() && x < b.x_max() && y >= b.y_min() && y < b.y_max()
}

/// Rasterized IoU: every pixel of the grid is tested against both boxes.
/// Only the bounding rectangle of the two boxes is scanned since no pixel
/// outside it can be inside either box.
pub fn raster_iou(a: &BBox, b: &BBox, n: usize) -> f64 {
    let nf = n as f64;
    let lo = |v: f64| ((v * nf - 0.5).floor().max(0.0)) as usize;
    let hi = |v: f64| ((v * nf + 0.5).ceil() as usize).min(n);
    let (i0, i1) = (lo(a.x_min().min(b.x_min())), hi(a.x_max().max(b.x_max())));
    let (j0, j1) = (lo(a.y_min().min(b.y_min())), hi(a.y_max().max(b.y_max())));
    let (mut inter, mut union) = (0u64, 0u64);
    for j in j0..j1 {
        let y = (j as f64 + 0.5) / nf;
        for i in i0..i1 {
            let x = (i as f64 + 0.5) / nf;
            let (ia, ib) = (center_inside(a, x, y), center_inside(b, x, y));
            inter += (ia && ib) as u64;
            union += (ia || ib) as u64;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn overlap(a: &BBox, b: &BBox) -> f64 {
    let w = (a.x_max().min(b.x_max()) - a.x_min().max(b.x_min())).max(0.0);
    let h = (a.y_max().min(b.y_max()) - a.y_min().max(b.y_min())).max(0.0);
    let i = w * h;
    let u = a.width() * a.height() + b.width() * b.height() - i;
    if u <= 0.0 {
        0.0
    } else {
        i / u
    }
}

pub fn eligible(p: &Detection, t: &GroundTruthBox, thr: f64) -> Option<f64> {
    if p.label != t.label || p.frame_id != t.frame_id {
        return None;
    }
    let v = overlap(&p.bbox, &t.bbox);
    (v >= thr).then_some(v)
}

/// Prediction indices by descending confidence, input order on ties.
pub fn priority(preds: &[Detection]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..preds.len()).collect();
    idx.sort_by(|&a, &b| {
        preds[b]
            .confidence
            .partial_cmp(&preds[a].confidence)
            .unwrap()
            .then(a.cmp(&b))
    });
    idx
}

/// Enumerates every one-to-one partial assignment of predictions to eligible
/// truths and returns the lexicographically best one, comparing predictions in
/// priority order by (IoU of the truth taken, then lower truth index), with
/// "unmatched" worst. That ordering is the greedy rule stated as an
/// optimization problem.
/// An assignment with its comparison key.
type Ranked = (Vec<(f64, i64)>, Vec<Option<usize>>);

pub fn exhaustive_assign(preds: &[Detection], truths: &[GroundTruthBox], thr: f64) -> Vec<Option<usize>> {
    let order = priority(preds);
    let mut best: Option<Ranked> = None;
    let mut current = vec![None; preds.len()];
    let mut used = vec![false; truths.len()];

    fn key(order: &[usize], a: &[Option<usize>], preds: &[Detection], truths: &[GroundTruthBox]) -> Vec<(f64, i64)> {
        order
            .iter()
            .map(|&p| match a[p] {
                Some(t) => (overlap(&preds[p].bbox, &truths[t].bbox), -(t as i64)),
                None => (-1.0, 0),
            })
            .collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn rec(
        k: usize,
        order: &[usize],
        preds: &[Detection],
        truths: &[GroundTruthBox],
        thr: f64,
        current: &mut Vec<Option<usize>>,
        used: &mut Vec<bool>,
        best: &mut Option<Ranked>,
    ) {
        if k == order.len() {
            let kk = key(order, current, preds, truths);
            let better = match best {
                None => true,
                Some((bk, _)) => kk.partial_cmp(bk) == Some(std::cmp::Ordering::Greater),
            };
            if better {
                *best = Some((kk, current.clone()));
            }
            return;
        }
        let p = order[k];
        current[p] = None;
        rec(k + 1, order, preds, truths, thr, current, used, best);
        for t in 0..truths.len() {
            if !used[t] && eligible(&preds[p], &truths[t], thr).is_some() {
                used[t] = true;
                current[p] = Some(t);
                rec(k + 1, order, preds, truths, thr, current, used, best);
                current[p] = None;
                used[t] = false;
            }
        }
    }

    rec(0, &order, preds, truths, thr, &mut current, &mut used, &mut best);
    best.map(|(_, a)| a).unwrap_or_default()
}

/// (tp, fp, fn) of an assignment.
pub fn counts(assignment: &[Option<usize>], n_truths: usize) -> (u64, u64, u64) {
    let tp = assignment.iter().filter(|a| a.is_some()).count() as u64;
    let fp = assignment.len() as u64 - tp;
    (tp, fp, n_truths as u64 - tp)
}

/// Straightforward greedy matcher used by the AP oracle on each threshold cut.
fn greedy_tp(preds: &[&Detection], truths: &[GroundTruthBox], thr: f64) -> u64 {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        preds[b]
            .confidence
            .partial_cmp(&preds[a].confidence)
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut used = vec![false; truths.len()];
    let mut tp = 0;
    for p in order {
        let mut pick: Option<(usize, f64)> = None;
        for (t, tr) in truths.iter().enumerate() {
            if used[t] {
                continue;
            }
            if let Some(v) = eligible(preds[p], tr, thr) {
                if pick.is_none_or(|(_, bv)| v > bv) {
                    pick = Some((t, v));
                }
            }
        }
        if let Some((t, _)) = pick {
            used[t] = true;
            tp += 1;
        }
    }
    tp
}

/// Recall grid step. Every recall value k/n with n <= 10 truths lands on it.
pub const AP_GRID: u64 = 2520;

/// AP by brute force: for every distinct confidence t, rescore the predictions
/// with confidence >= t from scratch to get (precision, recall) at that cut,
/// then integrate the interpolated precision max{P(t) : R(t) >= r} over a
/// recall grid fine enough that the integrand is constant on each cell.
pub fn ap_threshold_sweep(preds: &[Detection], truths: &[GroundTruthBox], thr: f64) -> f64 {
    assert!(!truths.is_empty() && truths.len() as u64 <= 10);
    let n = truths.len() as u64;
    let mut cuts: Vec<f64> = preds.iter().map(|p| p.confidence).collect();
    cuts.sort_by(|a, b| b.partial_cmp(a).unwrap());
    cuts.dedup();
    // (tp, kept)
    let points: Vec<(u64, u64)> = cuts
        .iter()
        .map(|&t| {
            let kept: Vec<&Detection> = preds.iter().filter(|p| p.confidence >= t).collect();
            (greedy_tp(&kept, truths, thr), kept.len() as u64)
        })
        .collect();
    let mut total = 0.0;
    for k in 1..=AP_GRID {
        // recall k/AP_GRID reached when tp/n >= k/AP_GRID
        let p = points
            .iter()
            .filter(|(tp, _)| tp * AP_GRID >= k * n)
            .map(|&(tp, kept)| tp as f64 / kept as f64)
            .fold(0.0, f64::max);
        total += p;
    }
    total / AP_GRID as f64
}


fn random_box(rng: &mut StdRng) -> BBox {
    let x = rng.gen_range(0.0..0.7);
    let y = rng.gen_range(0.0..0.7);
    let w = rng.gen_range(0.05..0.3);
    let h = rng.gen_range(0.05..0.3);
    BBox::new(x, y, x + w, y + h).unwrap()
}

/// A copy of `b` shifted by up to `amount` of its size, so its IoU with `b`
/// spreads across the whole range.
fn jitter(rng: &mut StdRng, b: &BBox, amount: f64) -> BBox {
    let dx = rng.gen_range(-amount..amount) * b.width();
    let dy = rng.gen_range(-amount..amount) * b.height();
    let sw = rng.gen_range(1.0 - amount / 2.0..1.0 + amount / 2.0);
    BBox::new(
        b.x_min() + dx,
        b.y_min() + dy,
        b.x_min() + dx + b.width() * sw,
        b.y_min() + dy + b.height() * sw,
    )
    .unwrap_or(*b)
}

/// Confidences drawn from a coarse set half of the time to force ties.
fn random_conf(rng: &mut StdRng) -> f64 {
    if rng.gen_bool(0.5) {
        rng.gen_range(1..=10) as f64 / 10.0
    } else {
        rng.gen_range(0.0..1.0)
    }
}

/// One class, 1..=10 truths and 0..=15 predictions, most of them placed
/// near some truth.
pub fn random_ap_instance(rng: &mut StdRng) -> (Vec<Detection>, Vec<GroundTruthBox>) {
    let frames = ["a", "b", "c"];
    let nt = rng.gen_range(1..=10);
    let truths: Vec<GroundTruthBox> = (0..nt)
        .map(|_| truth(frames[rng.gen_range(0..frames.len())], "boar", random_box(rng)))
        .collect();
    let np = rng.gen_range(0..=15);
    let preds = (0..np)
        .map(|_| {
            let (frame, b) = if rng.gen_bool(0.75) {
                let t = &truths[rng.gen_range(0..truths.len())];
                (t.frame_id.to_string(), jitter(rng, &t.bbox, 0.3))
            } else {
                (frames[rng.gen_range(0..frames.len())].to_string(), random_box(rng))
            };
            det("m", &frame, "boar", random_conf(rng), b)
        })
        .collect();
    (preds, truths)
}

/// Up to five predictions and truths over two classes in one frame.
pub fn random_match_instance(rng: &mut StdRng) -> (Vec<Detection>, Vec<GroundTruthBox>) {
    let classes = ["boar", "monkey"];
    let nt = rng.gen_range(0..=5);
    // mostly one class so that competing predictions are common
    let truths: Vec<GroundTruthBox> = (0..nt)
        .map(|_| {
            let class = if rng.gen_bool(0.8) { classes[0] } else { classes[1] };
            truth("f", class, random_box(rng))
        })
        .collect();
    let np = rng.gen_range(0..=5);
    let preds = (0..np)
        .map(|_| {
            let b = if !truths.is_empty() && rng.gen_bool(0.8) {
                let t = truths[rng.gen_range(0..truths.len())].bbox;
                jitter(rng, &t, 0.3)
            } else {
                random_box(rng)
            };
            let class = if rng.gen_bool(0.8) { classes[0] } else { classes[1] };
            det("m", "f", class, random_conf(rng), b)
        })
        .collect();
    (preds, truths)
}

use sentinel::config::AppConfig;

/// The golden-run configuration with its outputs redirected to `out`.
pub fn golden_config(out: &Path) -> AppConfig {
    let mut cfg = AppConfig::load(&data_dir().join("golden/config.toml")).unwrap();
    cfg.run.output_dir = out.to_path_buf();
    cfg
}

/// A dataset of `n` copies of one frame with no annotations.
pub fn blank_dataset(dir: &Path, n: usize) -> PathBuf {
    let images = dir.join("images");
    std::fs::create_dir_all(&images).unwrap();
    let src = data_dir().join("golden/frames/frame_01.png");
    for i in 1..=n {
        std::fs::copy(&src, images.join(format!("b{i:03}.png"))).unwrap();
    }
    std::fs::write(dir.join("classes.txt"), "boar\nelephant\nmonkey\n").unwrap();
    dir.to_path_buf()
}

/// Config with two fixture detectors that serve nothing after the given
/// delays.
pub fn delayed_config(dir: &Path, delays_ms: [u64; 2]) -> AppConfig {
    let empty = dir.join("empty.txt");
    std::fs::write(&empty, "# no frames\n").unwrap();
    let mut cfg = golden_config(&dir.join("run"));
    for (d, delay) in cfg.detectors.iter_mut().zip(delays_ms) {
        d.launch = empty.display().to_string();
        d.delay_ms = Some(delay);
    }
    cfg.eval.bench_json = dir.join("bench.json");
    cfg.eval.bench_table = dir.join("bench.txt");
    cfg
}
