//! Seeded generators. Each draws the label first and then builds a payload
//! from which a simple rule recovers it:
//!
//! * rgb, msi, sar: class = quadrant with the most energy (sum of squares).
//! * hsi: class = band group (`C / classes` bands each) with the highest mean.
//! * infrared: class = `2a + b`, `a` = brighter of visible channels 0 and 1,
//!   `b` = 0 when the infrared top half is brighter than the bottom half.
//! * video: class = motion of a bright square between first and last frame
//!   (0 right, 1 left, 2 down, 3 up).
//! * pointcloud: 0 sphere, 1 cube surface, 2 flat square at `z = 0`.
//! * text: 1 when positive words outnumber negative ones.
//! * code: target = function name with underscores read as spaces.
//! * table: `2 x0 - x1 + 0.5 x2 + offset[x4] + 0.25 x5` plus noise.
//! * trajectory: constant velocity continued past the observed points, plus noise.
//! * graph: per node `0.5 f0 - f1 + 0.3 sin(2 pi slot / 24)` plus noise.
//! * oblique: depth cell = 10 x mean of view 0 over the cell's block.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dataset, SyntheticTaskSpec, TaskKind};
use crate::error::{Error, Result};
use crate::model::{Example, Target};
use crate::modality::{Modality, ModalitySample};
use crate::tensor::Tensor;

pub const POSITIVE: [&str; 6] = ["good", "great", "happy", "bright", "calm", "clear"];
pub const NEGATIVE: [&str; 6] = ["bad", "poor", "sad", "dark", "noisy", "broken"];
pub const NEUTRAL: [&str; 7] = ["the", "river", "road", "field", "city", "map", "area"];
const VERBS: [&str; 8] = ["compute", "load", "parse", "merge", "render", "sort", "count", "split"];
const NOUNS: [&str; 8] = ["total", "items", "config", "tiles", "bands", "path", "grid", "labels"];
const CATEGORY_OFFSET: [f64; 4] = [0.0, 0.5, -0.5, 1.0];

fn sym(rng: &mut ChaCha8Rng, a: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        rng.random_range(-a..=a)
    }
}

fn bad(spec: &SyntheticTaskSpec, why: &str) -> Error {
    Error::contract(format!("invalid {} task: {why}", spec.modality))
}

/// Balanced labels in shuffled order.
fn class_labels(n: usize, classes: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).map(|i| i % classes).collect();
    v.shuffle(rng);
    v
}

fn classes_at_most(spec: &SyntheticTaskSpec, max: usize) -> Result<usize> {
    match spec.task {
        TaskKind::Classify { classes } if (2..=max).contains(&classes) => Ok(classes),
        _ => Err(bad(spec, &format!("expected classify with 2..={max} classes"))),
    }
}

/// `H x W x C` image whose quadrant `q` carries extra energy.
fn quadrant_image(h: usize, w: usize, c: usize, q: usize, noise: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let gain = 0.5 + 0.5 * rng.random::<f64>();
    let mut data = Vec::with_capacity(h * w * c);
    for y in 0..h {
        for x in 0..w {
            let quad = 2 * usize::from(y >= h / 2) + usize::from(x >= w / 2);
            for _ in 0..c {
                let base = noise * rng.random::<f64>();
                data.push((base + if quad == q { gain } else { 0.0 }) as f32);
            }
        }
    }
    Tensor::new([h, w, c], data).expect("dims match data")
}

pub fn generate(spec: &SyntheticTaskSpec) -> Result<Dataset> {
    if spec.samples == 0 {
        return Err(bad(spec, "need at least one sample"));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(bad(spec, "noise must be finite and non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.samples;
    let sh = &spec.shape;
    let noise = spec.noise;
    let mut examples = Vec::with_capacity(n);
    match spec.modality {
        Modality::Rgb | Modality::Msi | Modality::Sar => {
            let classes = classes_at_most(spec, 4)?;
            let want_c = match spec.modality {
                Modality::Rgb => sh.channels == 3,
                Modality::Msi => sh.channels > 3,
                _ => sh.channels == 2,
            };
            if !want_c || sh.height < 2 || sh.width < 2 {
                return Err(bad(spec, "channel count or image size does not fit the modality"));
            }
            for q in class_labels(n, classes, &mut rng) {
                let x = quadrant_image(sh.height, sh.width, sh.channels, q, noise, &mut rng);
                let sample = match spec.modality {
                    Modality::Rgb => ModalitySample::Rgb(x),
                    Modality::Msi => ModalitySample::Msi(x),
                    _ => ModalitySample::Sar(x),
                };
                examples.push(Example {
                    sample,
                    target: Target::Class(q),
                });
            }
        }
        Modality::Hsi => {
            let classes = classes_at_most(spec, sh.channels.max(2))?;
            let group = sh.channels / classes;
            if group == 0 {
                return Err(bad(spec, "fewer bands than classes"));
            }
            for c in class_labels(n, classes, &mut rng) {
                let data = (0..sh.channels)
                    .map(|b| {
                        let lift = if b / group == c { 1.0 } else { 0.0 };
                        (lift + noise * rng.random::<f64>()) as f32
                    })
                    .collect();
                examples.push(Example {
                    sample: ModalitySample::Hsi(Tensor::new([1, 1, sh.channels], data)?),
                    target: Target::Class(c),
                });
            }
        }
        Modality::Infrared => {
            let classes = classes_at_most(spec, 4)?;
            let (h, w) = (sh.height, sh.width);
            if h < 2 || w < 1 {
                return Err(bad(spec, "image too small"));
            }
            for c in class_labels(n, classes, &mut rng) {
                let (a, b) = (c / 2, c % 2);
                let mut data = Vec::with_capacity(2 * h * w * 3);
                for _ in 0..h * w {
                    for ch in 0..3 {
                        let lift = if ch == a { 0.8 } else { 0.0 };
                        data.push((lift + noise * rng.random::<f64>()) as f32);
                    }
                }
                for y in 0..h {
                    let bright = usize::from(y >= h / 2) == b;
                    for _ in 0..w {
                        let v = if bright { 0.8 } else { 0.0 } + noise * rng.random::<f64>();
                        for _ in 0..3 {
                            data.push(v as f32);
                        }
                    }
                }
                examples.push(Example {
                    sample: ModalitySample::Infrared(Tensor::new([2, h, w, 3], data)?),
                    target: Target::Class(c),
                });
            }
        }
        Modality::Video => {
            let classes = classes_at_most(spec, 4)?;
            let (t, c, h, w) = (sh.frames, sh.channels, sh.height, sh.width);
            let side = h.min(w) / 2;
            if t < 2 || c == 0 || side == 0 || t - 1 > h.min(w) - side {
                return Err(bad(spec, "need T >= 2 and room for the square to move T - 1 pixels"));
            }
            for dir in class_labels(n, classes, &mut rng) {
                let free_y = rng.random_range(0..=h - side);
                let free_x = rng.random_range(0..=w - side);
                let mut data = vec![0f32; t * c * h * w];
                for f in 0..t {
                    let (y0, x0) = match dir {
                        0 => (free_y, f),
                        1 => (free_y, t - 1 - f),
                        2 => (f, free_x),
                        _ => (t - 1 - f, free_x),
                    };
                    for ch in 0..c {
                        for y in 0..h {
                            for x in 0..w {
                                let inside = (y0..y0 + side).contains(&y) && (x0..x0 + side).contains(&x);
                                let v = if inside { 1.0 } else { 0.0 } + noise * rng.random::<f64>();
                                data[((f * c + ch) * h + y) * w + x] = v as f32;
                            }
                        }
                    }
                }
                examples.push(Example {
                    sample: ModalitySample::Video(Tensor::new([t, c, h, w], data)?),
                    target: Target::Class(dir),
                });
            }
        }
        Modality::PointCloud => {
            let classes = classes_at_most(spec, 3)?;
            let k = sh.points;
            if k == 0 {
                return Err(bad(spec, "need points"));
            }
            let jitter = noise * 0.2;
            for shape in class_labels(n, classes, &mut rng) {
                let mut data = Vec::with_capacity(k * 3);
                for _ in 0..k {
                    let p = match shape {
                        0 => loop {
                            let v = [sym(&mut rng, 1.0), sym(&mut rng, 1.0), sym(&mut rng, 1.0)];
                            let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                            if r > 1e-3 && r <= 1.0 {
                                break [v[0] / r, v[1] / r, v[2] / r];
                            }
                        },
                        1 => {
                            let axis = rng.random_range(0..3);
                            let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
                            let mut v = [sym(&mut rng, 1.0), sym(&mut rng, 1.0), sym(&mut rng, 1.0)];
                            v[axis] = side;
                            v
                        }
                        _ => [sym(&mut rng, 1.0), sym(&mut rng, 1.0), 0.0],
                    };
                    for x in p {
                        data.push((x + sym(&mut rng, jitter)) as f32);
                    }
                }
                examples.push(Example {
                    sample: ModalitySample::PointCloud(Tensor::new([k, 3], data)?),
                    target: Target::Class(shape),
                });
            }
        }
        Modality::Text => {
            if spec.task != (TaskKind::Classify { classes: 2 }) {
                return Err(bad(spec, "text task is 2-class sentiment"));
            }
            let words = sh.points;
            if words < 3 {
                return Err(bad(spec, "need at least 3 words"));
            }
            for label in class_labels(n, 2, &mut rng) {
                let major = rng.random_range(2..=3.min(words));
                let minor = rng.random_range(0..major);
                let (maj, min) = if label == 1 { (&POSITIVE, &NEGATIVE) } else { (&NEGATIVE, &POSITIVE) };
                let mut ws: Vec<&str> = Vec::with_capacity(words);
                ws.extend((0..major).map(|_| maj[rng.random_range(0..maj.len())]));
                ws.extend((0..minor).map(|_| min[rng.random_range(0..min.len())]));
                while ws.len() < words {
                    ws.push(NEUTRAL[rng.random_range(0..NEUTRAL.len())]);
                }
                ws.shuffle(&mut rng);
                examples.push(Example {
                    sample: ModalitySample::Text(ws.join(" ")),
                    target: Target::Class(label),
                });
            }
        }
        Modality::Code => {
            if spec.task != TaskKind::TextGenerate {
                return Err(bad(spec, "code task is name generation"));
            }
            let ops = ["sum", "len", "sorted", "max", "min", "list"];
            for _ in 0..n {
                let verb = VERBS[rng.random_range(0..VERBS.len())];
                let noun = NOUNS[rng.random_range(0..NOUNS.len())];
                let arg = NOUNS[rng.random_range(0..NOUNS.len())];
                let op = ops[rng.random_range(0..ops.len())];
                let src = format!("def {verb}_{noun}({arg}):\n    result = {op}({arg})\n    return result\n");
                examples.push(Example {
                    sample: ModalitySample::Code(src),
                    target: Target::Text(format!("{verb} {noun}")),
                });
            }
        }
        Modality::Table => {
            if spec.task != (TaskKind::Regress { outputs: 1 }) || sh.channels != 6 {
                return Err(bad(spec, "table task is 1-output regression over 6 columns"));
            }
            for _ in 0..n {
                let x: Vec<f64> = (0..4).map(|_| sym(&mut rng, 2.0)).collect();
                let c4 = rng.random_range(0..4usize);
                let c5 = rng.random_range(0..3usize);
                let y = 2.0 * x[0] - x[1] + 0.5 * x[2] + CATEGORY_OFFSET[c4] + 0.25 * c5 as f64 + sym(&mut rng, noise);
                let mut row: Vec<f32> = x.iter().map(|&v| v as f32).collect();
                row.push(c4 as f32);
                row.push(c5 as f32);
                examples.push(Example {
                    sample: ModalitySample::Table(Tensor::new([6], row)?),
                    target: Target::Values(vec![y]),
                });
            }
        }
        Modality::Trajectory => {
            let TaskKind::TrajectoryPredict { observed, predicted } = spec.task else {
                return Err(bad(spec, "trajectory task is point prediction"));
            };
            if observed < 2 || predicted == 0 || observed != sh.points {
                return Err(bad(spec, "need observed >= 2 matching shape.points, and predicted >= 1"));
            }
            let jitter = noise * 0.2;
            for _ in 0..n {
                let p0 = [sym(&mut rng, 1.0), sym(&mut rng, 1.0)];
                let v = [sym(&mut rng, 0.5), sym(&mut rng, 0.5)];
                let at = |i: usize, rng: &mut ChaCha8Rng| {
                    [p0[0] + v[0] * i as f64 + sym(rng, jitter), p0[1] + v[1] * i as f64 + sym(rng, jitter)]
                };
                let obs: Vec<f32> = (0..observed).flat_map(|i| at(i, &mut rng)).map(|x| x as f32).collect();
                let fut: Vec<f64> = (observed..observed + predicted).flat_map(|i| at(i, &mut rng)).collect();
                examples.push(Example {
                    sample: ModalitySample::Trajectory(Tensor::new([observed, 2], obs)?),
                    target: Target::Values(fut),
                });
            }
        }
        Modality::Graph => {
            let k = sh.points;
            if spec.task != (TaskKind::Regress { outputs: k }) || k == 0 || sh.channels < 2 {
                return Err(bad(spec, "graph task regresses one value per node from >= 2 features"));
            }
            for _ in 0..n {
                let slot = rng.random_range(0..24usize);
                let feats: Vec<f64> = (0..k * sh.channels).map(|_| sym(&mut rng, 1.0)).collect();
                let season = 0.3 * (2.0 * PI * slot as f64 / 24.0).sin();
                let y = (0..k)
                    .map(|i| {
                        let f = &feats[i * sh.channels..];
                        0.5 * f[0] - f[1] + season + sym(&mut rng, noise)
                    })
                    .collect();
                let feats = feats.into_iter().map(|v| v as f32).collect();
                examples.push(Example {
                    sample: ModalitySample::Graph {
                        features: Tensor::new([k, sh.channels], feats)?,
                        time_slot: slot,
                    },
                    target: Target::Values(y),
                });
            }
        }
        Modality::Oblique => {
            let TaskKind::Depth { height: gh, width: gw } = spec.task else {
                return Err(bad(spec, "oblique task is depth regression"));
            };
            let (v, h, w) = (sh.views, sh.height, sh.width);
            if v < 2 || gh == 0 || gw == 0 || h % gh != 0 || w % gw != 0 || sh.channels != 3 {
                return Err(bad(spec, "need >= 2 RGB views whose size the depth grid divides"));
            }
            for _ in 0..n {
                let levels: Vec<f64> = (0..gh * gw).map(|_| rng.random::<f64>()).collect();
                let cell = |y: usize, x: usize| levels[(y / (h / gh)) * gw + x / (w / gw)];
                let mut data = Vec::with_capacity(v * h * w * 3);
                for _ in 0..v {
                    for y in 0..h {
                        for x in 0..w {
                            for _ in 0..3 {
                                data.push((cell(y, x) + sym(&mut rng, noise)) as f32);
                            }
                        }
                    }
                }
                let views = Tensor::new([v, h, w, 3], data)?;
                let depth = block_means(&views, gh, gw).into_iter().map(|m| 10.0 * m).collect();
                examples.push(Example {
                    sample: ModalitySample::Oblique(views),
                    target: Target::Values(depth),
                });
            }
        }
    }
    Ok(Dataset {
        modality: spec.modality,
        task: spec.task,
        spec: Some(spec.clone()),
        examples,
    })
}

/// Mean of view 0 over each block of a `gh x gw` grid, row-major.
fn block_means(views: &Tensor, gh: usize, gw: usize) -> Vec<f64> {
    let (h, w) = (views.dims()[1], views.dims()[2]);
    let (bh, bw) = (h / gh, w / gw);
    let mut out = vec![0.0; gh * gw];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                out[(y / bh) * gw + x / bw] += views.data()[(y * w + x) * 3 + c] as f64;
            }
        }
    }
    let count = (bh * bw * 3) as f64;
    out.iter().map(|s| s / count).collect()
}
