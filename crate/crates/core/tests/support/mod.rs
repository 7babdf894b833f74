//! Independent oracles shared by the integration tests and the acceptance
//! harness. Nothing here calls the code under test except to obtain the value
//! being checked.
#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};

use shcnn::imgproc::Point;
use shcnn::nn::layers::{self, Mode, Padding};
use shcnn::nn::{Layer, NetworkConfig, Sequential, Tensor};
use shcnn::{BinaryImage, GrayImage, Label};

/// Splitmix64 stream; keeps the oracles free of the crate's RNG plumbing.
pub struct Gen(u64);

impl Gen {
    pub fn new(seed: u64) -> Self {
        Gen(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    pub fn vec(&mut self, n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|_| self.uniform(lo, hi)).collect()
    }

    /// Values bounded away from zero, for checks through ReLU kinks.
    pub fn away_from_zero(&mut self, n: usize) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let m = self.uniform(0.05, 1.0);
                if self.unit() < 0.5 {
                    -m
                } else {
                    m
                }
            })
            .collect()
    }

    /// A shuffled set of values at least `1/n` apart, so no max-pool window
    /// has a near tie.
    pub fn distinct(&mut self, n: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (0..n).map(|i| 2.0 * i as f64 / n as f64 - 1.0).collect();
        for i in (1..n).rev() {
            v.swap(i, self.below(i + 1));
        }
        v
    }
}

// ---------------------------------------------------------------- gradients

pub const FD_EPS: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;
pub const FD_INSTANCES: usize = 20;

/// Central differences of `f` at `x`.
pub fn numeric_grad(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let v = p[i];
            p[i] = v + FD_EPS;
            let up = f(&p);
            p[i] = v - FD_EPS;
            let down = f(&p);
            p[i] = v;
            (up - down) / (2.0 * FD_EPS)
        })
        .collect()
}

/// `max|a - n| / max(max|a|, max|n|)`.
pub fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let diff = analytic.iter().zip(numeric).map(|(a, n)| (a - n).abs()).fold(0.0, f64::max);
    let scale = analytic.iter().chain(numeric).map(|v| v.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

fn weighted_sum(y: &[f64], c: &[f64]) -> f64 {
    y.iter().zip(c).map(|(a, b)| a * b).sum()
}

fn conv_instance(g: &mut Gen, padding: Padding) -> f64 {
    let (ci, co) = (1 + g.below(3), 1 + g.below(3));
    let (h, w) = (3 + g.below(4), 3 + g.below(4));
    let x = Tensor::new(vec![ci, h, w], g.vec(ci * h * w, -1.0, 1.0)).unwrap();
    let k = Tensor::new(vec![co, ci, 3, 3], g.vec(co * ci * 9, -1.0, 1.0)).unwrap();
    let b = g.vec(co, -1.0, 1.0);
    let y = layers::conv2d(&x, &k, &b, padding).unwrap();
    let c = g.vec(y.len(), -1.0, 1.0);
    let dy = Tensor::new(y.shape().to_vec(), c.clone()).unwrap();
    let grads = layers::conv2d_backward(&x, &k, padding, &dy).unwrap();

    let loss = |x: &Tensor<f64>, k: &Tensor<f64>, b: &[f64]| weighted_sum(layers::conv2d(x, k, b, padding).unwrap().data(), &c);
    let nx = numeric_grad(x.data(), |v| loss(&Tensor::new(x.shape().to_vec(), v.to_vec()).unwrap(), &k, &b));
    let nk = numeric_grad(k.data(), |v| loss(&x, &Tensor::new(k.shape().to_vec(), v.to_vec()).unwrap(), &b));
    let nb = numeric_grad(&b, |v| loss(&x, &k, v));
    rel_err(grads.dx.unwrap().data(), &nx)
        .max(rel_err(&grads.dkernels, &nk))
        .max(rel_err(&grads.dbias, &nb))
}

fn pool_instance(g: &mut Gen) -> f64 {
    let (c, h, w) = (1 + g.below(3), 2 + g.below(5), 2 + g.below(5));
    let x = Tensor::new(vec![c, h, w], g.distinct(c * h * w)).unwrap();
    let (y, idx) = layers::maxpool2x2(&x).unwrap();
    let cw = g.vec(y.len(), -1.0, 1.0);
    let dx = layers::maxpool2x2_backward(&idx, &cw);
    let nx = numeric_grad(x.data(), |v| {
        let t = Tensor::new(x.shape().to_vec(), v.to_vec()).unwrap();
        weighted_sum(layers::maxpool2x2(&t).unwrap().0.data(), &cw)
    });
    rel_err(dx.data(), &nx)
}

fn dense_instance(g: &mut Gen) -> f64 {
    let (n, m) = (1 + g.below(8), 1 + g.below(6));
    let x = g.vec(n, -1.0, 1.0);
    let w = g.vec(n * m, -1.0, 1.0);
    let b = g.vec(m, -1.0, 1.0);
    let c = g.vec(m, -1.0, 1.0);
    let grads = layers::dense_backward(&x, &w, &c, true);
    let nx = numeric_grad(&x, |v| weighted_sum(&layers::dense(v, &w, &b).unwrap(), &c));
    let nw = numeric_grad(&w, |v| weighted_sum(&layers::dense(&x, v, &b).unwrap(), &c));
    let nb = numeric_grad(&b, |v| weighted_sum(&layers::dense(&x, &w, v).unwrap(), &c));
    rel_err(&grads.dx, &nx)
        .max(rel_err(&grads.dweights, &nw))
        .max(rel_err(&grads.dbias, &nb))
}

fn relu_instance(g: &mut Gen) -> f64 {
    let n = 1 + g.below(20);
    let x = g.away_from_zero(n);
    let c = g.vec(n, -1.0, 1.0);
    let mut y = x.clone();
    layers::relu(&mut y);
    let mut dx = c.clone();
    layers::relu_backward(&y, &mut dx);
    let nx = numeric_grad(&x, |v| {
        let mut y = v.to_vec();
        layers::relu(&mut y);
        weighted_sum(&y, &c)
    });
    rel_err(&dx, &nx)
}

fn dropout_instance(g: &mut Gen, seed: u64) -> f64 {
    let n = 1 + g.below(30);
    let rate = g.uniform(0.1, 0.7);
    let x = g.vec(n, -1.0, 1.0);
    let c = g.vec(n, -1.0, 1.0);
    let run = |v: &[f64]| layers::dropout(v, rate, Mode::Train, &mut shcnn::rng::stream(seed, &[])).0;
    let (_, mask) = layers::dropout(&x, rate, Mode::Train, &mut shcnn::rng::stream(seed, &[]));
    let dx: Vec<f64> = c.iter().zip(mask.unwrap()).map(|(a, m)| a * m).collect();
    let nx = numeric_grad(&x, |v| weighted_sum(&run(v), &c));
    rel_err(&dx, &nx)
}

fn xent_instance(g: &mut Gen) -> f64 {
    let n = 2 + g.below(6);
    let z = g.vec(n, -3.0, 3.0);
    let t = g.below(n);
    let (_, probs) = layers::softmax_xent(&z, t);
    let dz = layers::softmax_xent_grad(&probs, t);
    let nz = numeric_grad(&z, |v| layers::softmax_xent(v, t).0);
    rel_err(&dz, &nz)
}

/// The full stack: convolutions, ReLU, pooling, dropout, flatten, dense and
/// the loss, differentiated w.r.t. the input and every parameter.
fn network_instance(g: &mut Gen, seed: u64) -> f64 {
    let padding = if g.unit() < 0.5 { Padding::Same } else { Padding::Valid };
    let side = if padding == Padding::Same { 8 } else { 36 };
    let cfg = NetworkConfig {
        input: (1, side, side),
        block_widths: [2, 2, 3],
        block_dropout: [0.2, 0.2, 0.2],
        dense1_units: 4,
        dense_dropout: 0.3,
        n_classes: 3,
        padding,
    };
    let mut net = Sequential::<f64>::cnn(&cfg, seed).unwrap();
    // non-zero biases so that no ReLU input sits exactly on the kink
    for l in &mut net.layers {
        match l {
            Layer::Conv { bias, .. } | Layer::Dense { bias, .. } => {
                bias.iter_mut().for_each(|b| *b = g.uniform(-0.1, 0.1));
            }
            _ => {}
        }
    }
    let x = Tensor::new(vec![1, side, side], g.vec(side * side, 0.0, 1.0)).unwrap();
    let target = g.below(3);
    let loss_of = |net: &Sequential<f64>, x: &Tensor<f64>| {
        net.loss_and_grads(x, target, &mut shcnn::rng::stream(seed, &[7]), false).unwrap().0
    };
    let (_, _, grads, dx) = net.loss_and_grads(&x, target, &mut shcnn::rng::stream(seed, &[7]), true).unwrap();

    let mut worst = rel_err(
        &dx.unwrap(),
        &numeric_grad(x.data(), |v| loss_of(&net, &Tensor::new(x.shape().to_vec(), v.to_vec()).unwrap())),
    );
    let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();
    for (k, a) in analytic.iter().enumerate() {
        let base: Vec<f64> = net.param_slices()[k].to_vec();
        let numeric = numeric_grad(&base, |v| {
            let mut probe = net.clone();
            probe.param_slices_mut()[k].copy_from_slice(v);
            loss_of(&probe, &x)
        });
        worst = worst.max(rel_err(a, &numeric));
    }
    worst
}

/// Worst relative error over [`FD_INSTANCES`] random instances, per layer type.
pub fn gradient_checks(seed: u64) -> Vec<(&'static str, f64)> {
    let mut g = Gen::new(seed);
    let mut worst = |name: &'static str, f: &mut dyn FnMut(&mut Gen, u64) -> f64| {
        let w = (0..FD_INSTANCES as u64).map(|i| f(&mut g, seed ^ i)).fold(0.0, f64::max);
        (name, w)
    };
    vec![
        worst("conv (same)", &mut |g, _| conv_instance(g, Padding::Same)),
        worst("conv (valid)", &mut |g, _| conv_instance(g, Padding::Valid)),
        worst("maxpool", &mut |g, _| pool_instance(g)),
        worst("dense", &mut |g, _| dense_instance(g)),
        worst("relu", &mut |g, _| relu_instance(g)),
        worst("dropout", &mut |g, s| dropout_instance(g, s)),
        worst("softmax cross-entropy", &mut |g, _| xent_instance(g)),
        worst("network (flatten + all layers)", &mut |g, s| network_instance(g, s)),
    ]
}

// ------------------------------------------------------------ image oracles

pub fn equalize_oracle(img: &GrayImage) -> Vec<u8> {
    let px = img.pixels();
    let n = px.len();
    let cdf = |v: u8| px.iter().filter(|&&p| p <= v).count();
    let cdf_min = cdf(*px.iter().min().unwrap());
    if n == cdf_min {
        return px.to_vec();
    }
    px.iter()
        .map(|&v| ((cdf(v) - cdf_min) as f64 / (n - cdf_min) as f64 * 255.0).round() as u8)
        .collect()
}

pub fn erode_oracle(img: &BinaryImage, r: usize) -> BinaryImage {
    let r = r as i64;
    BinaryImage::from_fn(img.width(), img.height(), |x, y| {
        let mut all = true;
        for dy in -r..=r {
            for dx in -r..=r {
                all &= img.get_or_zero(x as i64 + dx, y as i64 + dy);
            }
        }
        all
    })
}

/// 8-connected foreground components in raster order of their first pixel.
pub fn components(img: &BinaryImage) -> Vec<BTreeSet<Point>> {
    let (w, h) = (img.width() as i32, img.height() as i32);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let p = Point::new(x, y);
            if !img.get(x as usize, y as usize) || seen.contains(&p) {
                continue;
            }
            let mut comp = BTreeSet::new();
            let mut q = VecDeque::from([p]);
            seen.insert(p);
            while let Some(c) = q.pop_front() {
                comp.insert(c);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let n = Point::new(c.x + dx, c.y + dy);
                        if img.get_or_zero(n.x as i64, n.y as i64) && seen.insert(n) {
                            q.push_back(n);
                        }
                    }
                }
            }
            out.push(comp);
        }
    }
    out
}

const N4: [(i32, i32); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// Pixels of `comp` that touch (4-adjacency) the background region enclosing
/// it. The region is flood-filled from the west neighbour of the component's
/// first raster pixel over a one-pixel zero frame.
pub fn outer_boundary(img: &BinaryImage, comp: &BTreeSet<Point>) -> BTreeSet<Point> {
    let (w, h) = (img.width() as i32, img.height() as i32);
    let first = comp.iter().min_by_key(|p| (p.y, p.x)).unwrap();
    let bg = |p: Point| p.x >= -1 && p.y >= -1 && p.x <= w && p.y <= h && !img.get_or_zero(p.x as i64, p.y as i64);
    let seed = Point::new(first.x - 1, first.y);
    let mut region = BTreeSet::from([seed]);
    let mut q = VecDeque::from([seed]);
    while let Some(c) = q.pop_front() {
        for (dx, dy) in N4 {
            let n = Point::new(c.x + dx, c.y + dy);
            if bg(n) && region.insert(n) {
                q.push_back(n);
            }
        }
    }
    comp.iter()
        .copied()
        .filter(|p| N4.iter().any(|(dx, dy)| region.contains(&Point::new(p.x + dx, p.y + dy))))
        .collect()
}

/// Whether `follow_borders` agrees with the flood-fill oracle on `img`.
pub fn borders_agree(img: &BinaryImage) -> bool {
    let contours = shcnn::imgproc::follow_borders(img);
    let comps = components(img);
    contours.len() == comps.len()
        && contours.iter().zip(&comps).all(|(c, comp)| {
            c.points.iter().copied().collect::<BTreeSet<_>>() == outer_boundary(img, comp)
        })
}

pub fn random_gray(g: &mut Gen, max_side: usize) -> GrayImage {
    let (w, h) = (1 + g.below(max_side), 1 + g.below(max_side));
    // half the images use few levels so that ties and empty bins occur
    let coarse = g.unit() < 0.5;
    GrayImage::from_fn(w, h, |_, _| {
        if coarse {
            (g.below(5) * 50) as u8
        } else {
            g.below(256) as u8
        }
    })
}

pub fn random_binary(g: &mut Gen, max_side: usize) -> BinaryImage {
    let (w, h) = (1 + g.below(max_side), 1 + g.below(max_side));
    let p = g.uniform(0.2, 0.8);
    BinaryImage::from_fn(w, h, |_, _| g.unit() < p)
}

// ---------------------------------------------------------- label oracles

/// Severity maximum by explicit ranking.
pub fn max_severity(labels: &[Label]) -> Label {
    let rank = |l: &Label| match l {
        Label::Flawless => 0,
        Label::Anomaly => 1,
        Label::Faulty => 2,
    };
    *labels.iter().max_by_key(|l| rank(l)).unwrap()
}

/// Every assignment of three labels to the four streets of one chip,
/// compared with [`max_severity`]. Returns the number of combinations checked.
pub fn mapping_exhaustive() -> Result<usize, String> {
    let c = shcnn::ChipIndex::new(3, 5);
    let streets = c.adjacent_streets();
    let mut n = 0;
    for code in 0..81usize {
        let labels: Vec<Label> = (0..4).map(|k| Label::ALL[code / 3usize.pow(k) % 3]).collect();
        let map = streets.iter().copied().zip(labels.iter().copied()).collect();
        let got = shcnn::pipeline::map_streets_to_chips(&map, [c]).map_err(|e| e.to_string())?;
        if got.get(&c) != Some(&max_severity(&labels)) || got.len() != 1 {
            return Err(format!("{labels:?} mapped to {got:?}"));
        }
        n += 1;
    }
    Ok(n)
}

// -------------------------------------------------------- augmentation laws

pub const AUG_LEVELS: [u32; 4] = [0, 1, 2, 4];
pub const AUG_DRAWS: usize = 1000;

/// Count and parameter-range laws over [`AUG_DRAWS`] draws per level.
pub fn augmentation_laws(seed: u64) -> Result<(), String> {
    use shcnn::augment::{self, AugmentParams};
    use shcnn::AugmentationLevel;
    let mut g = Gen::new(seed);
    for l in AUG_LEVELS {
        let level = AugmentationLevel(l);
        let lf = l as f64;
        let mut r = shcnn::rng::stream(seed, &[l as u64]);
        let mut flips = 0;
        for _ in 0..AUG_DRAWS {
            let p = AugmentParams::sample(level, &mut r);
            let ok = p.angle_deg.abs() <= 2.0 * lf
                && p.shift_x.abs() <= 0.05 * lf
                && p.shift_y.abs() <= 0.05 * lf
                && (p.scale - 1.0).abs() <= 0.02 * lf + 1e-15;
            if !ok {
                return Err(format!("level {l}: draw {p:?} out of range"));
            }
            flips += p.flip as usize;
        }
        let f = flips as f64 / AUG_DRAWS as f64;
        if (f - 0.5).abs() > 0.07 {
            return Err(format!("level {l}: flip frequency {f}"));
        }
        // count law on small datasets of random size
        for _ in 0..20 {
            let n = g.below(6);
            let patches: Vec<(GrayImage, usize)> = (0..n).map(|i| (random_gray(&mut g, 8), i)).collect();
            let out = augment::augment_dataset(&patches, level, g.next_u64());
            if out.len() != n * (l as usize + 1) {
                return Err(format!("level {l}: {n} patches gave {}", out.len()));
            }
            if out[..n] != patches[..] {
                return Err(format!("level {l}: originals not kept in front"));
            }
            for (k, (img, label)) in out[n..].iter().enumerate() {
                let src = &patches[k / l as usize];
                if *label != src.1 || (img.width(), img.height()) != (src.0.width(), src.0.height()) {
                    return Err(format!("level {l}: copy {k} lost its label or size"));
                }
            }
        }
    }
    Ok(())
}

// ------------------------------------------------------------ protocol laws

/// `(train, val, test)` for `n`: quarters, with the leftover items handed to
/// train, val and test in turn.
pub fn split_sizes_oracle(n: usize) -> [usize; 3] {
    let mut s = [2 * (n / 4), n / 4, n / 4];
    let mut k = 0;
    while s.iter().sum::<usize>() < n {
        s[k] += 1;
        k += 1;
    }
    s
}

pub fn split_laws(seeds: u64) -> Result<(), String> {
    use shcnn::eval::split_dataset;
    let mut g = Gen::new(seeds);
    for seed in 0..seeds {
        let n = if seed % 2 == 0 { 100 } else { 4 + g.below(300) };
        let s = split_dataset(n, seed).map_err(|e| e.to_string())?;
        let sizes = [s.train.len(), s.val.len(), s.test.len()];
        if sizes != split_sizes_oracle(n) {
            return Err(format!("n={n} seed={seed}: sizes {sizes:?}"));
        }
        let all: BTreeSet<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        if all.len() != n || all.iter().next_back() != Some(&(n - 1)) {
            return Err(format!("n={n} seed={seed}: not a partition of 0..n"));
        }
        if split_dataset(n, seed).map_err(|e| e.to_string())? != s {
            return Err(format!("n={n} seed={seed}: not reproducible"));
        }
    }
    Ok(())
}

pub fn balance_laws(cases: u64) -> Result<(), String> {
    use shcnn::eval::balance_classes;
    let mut g = Gen::new(cases);
    for seed in 0..cases {
        let k = 1 + g.below(4);
        let n = k + g.below(60);
        let mut labels: Vec<usize> = (0..k).collect();
        labels.extend((k..n).map(|_| g.below(k)));
        let idx = balance_classes(&labels, seed).map_err(|e| e.to_string())?;
        let mut counts = vec![0usize; k];
        for &i in &idx {
            counts[labels[i]] += 1;
        }
        let before: Vec<usize> = (0..k).map(|c| labels.iter().filter(|&&l| l == c).count()).collect();
        let top = *before.iter().max().unwrap();
        if counts.iter().any(|&c| c != top) {
            return Err(format!("labels {before:?} balanced to {counts:?}"));
        }
        if idx[..n] != (0..n).collect::<Vec<_>>()[..] {
            return Err("originals not kept".into());
        }
    }
    Ok(())
}

/// Five-run vectors with mean and sample standard deviation worked out by hand.
pub const HAND_STATS: [([f64; 5], f64, f64); 3] = [
    ([0.9, 0.9, 0.9, 0.9, 0.9], 0.9, 0.0),
    // deviations ±0.1, ±0.2, 0: ss = 0.1, var = 0.025
    ([0.6, 0.7, 0.8, 0.9, 1.0], 0.8, 0.158_113_883_008_418_98),
    // deviations -0.2, 0, 0, 0, 0.2: ss = 0.08, var = 0.02
    ([0.5, 0.7, 0.7, 0.7, 0.9], 0.7, 0.141_421_356_237_309_5),
];

pub fn run_stats_laws() -> Result<(), String> {
    for (v, mean, std) in HAND_STATS {
        let s = shcnn::eval::run_stats(&v).map_err(|e| e.to_string())?;
        if (s.mean - mean).abs() > 1e-12 || (s.std - std).abs() > 1e-12 {
            return Err(format!("{v:?}: got {:.6}±{:.6}, want {mean}±{std}", s.mean, s.std));
        }
    }
    Ok(())
}
