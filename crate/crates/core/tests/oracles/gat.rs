//! Double-precision GATv2 reference written directly from the layer
//! equations, plus helpers for building small hand-made batches.

use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shieldnav::autodiff::{NdArray, ParamStore, Segments, Tape};
use shieldnav::gnn::{bind_params, GatLayer, GraphBatch, LEAKY_SLOPE};

/// Builds a batch from explicit edges; self-loops of weight 0 are appended
/// the same way the batcher does.
pub fn manual_batch(features: Vec<Vec<f32>>, edges: &[(usize, usize, f32)]) -> GraphBatch {
    let n = features.len();
    let d = features[0].len();
    let mut src: Vec<usize> = edges.iter().map(|e| e.0).collect();
    let mut dst: Vec<usize> = edges.iter().map(|e| e.1).collect();
    let mut w: Vec<f32> = edges.iter().map(|e| e.2).collect();
    for i in 0..n {
        src.push(i);
        dst.push(i);
        w.push(0.0);
    }
    let e = src.len();
    GraphBatch {
        features: NdArray::from_vec(n, d, features.concat()).unwrap(),
        by_dst: Segments::new(dst.clone(), n),
        src: src.into(),
        dst: dst.into(),
        edge_weight: NdArray::from_vec(e, 1, w).unwrap(),
        waypoint_rows: Rc::from(Vec::new()),
        graphs: 1,
    }
}

pub fn set_scalar_params(store: &mut ParamStore, values: &[f32]) {
    for (p, v) in store.values_mut().iter_mut().zip(values) {
        p.data_mut()[0] = *v;
    }
}

pub fn run_layer(store: &ParamStore, layer: &GatLayer, batch: &GraphBatch) -> (Vec<f32>, Vec<f32>) {
    let mut tape = Tape::new();
    let bound = bind_params(&mut tape, store, false);
    let x = tape.constant(batch.features.clone());
    let w = tape.constant(batch.edge_weight.clone());
    let out = layer.forward(&mut tape, &bound, x, batch, w).unwrap();
    (
        tape.value(out.embeddings).data().to_vec(),
        tape.value(out.attention[0]).data().to_vec(),
    )
}

pub type Params = Vec<(String, [usize; 2], Vec<f64>)>;

pub fn to_f64(store: &ParamStore) -> Params {
    store
        .iter()
        .map(|(n, a)| (n.to_string(), a.shape(), a.data().iter().map(|x| *x as f64).collect()))
        .collect()
}

pub fn param<'a>(p: &'a Params, name: &str) -> &'a (String, [usize; 2], Vec<f64>) {
    p.iter().find(|(n, _, _)| n == name).unwrap_or_else(|| panic!("no {name}"))
}

pub fn matvec(x: &[f64], w: &(String, [usize; 2], Vec<f64>)) -> Vec<f64> {
    let [r, c] = w.1;
    assert_eq!(x.len(), r);
    (0..c).map(|j| (0..r).map(|i| x[i] * w.2[i * c + j]).sum()).collect()
}

pub struct RefGraph {
    pub x: Vec<Vec<f64>>,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub w: Vec<f64>,
}

impl RefGraph {
    pub fn from_batch(b: &GraphBatch) -> Self {
        let [n, d] = b.features.shape();
        Self {
            x: (0..n)
                .map(|i| (0..d).map(|j| b.features.at(i, j) as f64).collect())
                .collect(),
            src: b.src.to_vec(),
            dst: b.dst.to_vec(),
            w: b.edge_weight.data().iter().map(|v| *v as f64).collect(),
        }
    }
}

pub fn ref_layer(p: &Params, prefix: &str, g: &RefGraph, x: &[Vec<f64>], concat_relu: bool) -> Vec<Vec<f64>> {
    let heads = p
        .iter()
        .filter(|(n, _, _)| n.starts_with(&format!("{prefix}.")) && n.ends_with(".att"))
        .count();
    let n = x.len();
    let mut out: Vec<Vec<f64>> = vec![Vec::new(); n];
    for h in 0..heads {
        let ts = param(p, &format!("{prefix}.h{h}.theta_s"));
        let tt = param(p, &format!("{prefix}.h{h}.theta_t"));
        let te = &param(p, &format!("{prefix}.h{h}.theta_e")).2;
        let att = &param(p, &format!("{prefix}.h{h}.att")).2;
        let xs: Vec<Vec<f64>> = x.iter().map(|r| matvec(r, ts)).collect();
        let xt: Vec<Vec<f64>> = x.iter().map(|r| matvec(r, tt)).collect();
        let d = te.len();
        for i in 0..n {
            let edges: Vec<usize> = (0..g.dst.len()).filter(|&e| g.dst[e] == i).collect();
            let scores: Vec<f64> = edges
                .iter()
                .map(|&e| {
                    let j = g.src[e];
                    (0..d)
                        .map(|c| {
                            let pre = xs[i][c] + xt[j][c] + g.w[e] * te[c];
                            let z = if pre > 0.0 { pre } else { LEAKY_SLOPE as f64 * pre };
                            att[c] * z
                        })
                        .sum()
                })
                .collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
            let mut acc = vec![0.0; d];
            for (k, &e) in edges.iter().enumerate() {
                let a = (scores[k] - m).exp() / z;
                for c in 0..d {
                    acc[c] += a * xt[g.src[e]][c];
                }
            }
            out[i].extend(acc);
        }
    }
    if concat_relu {
        for row in &mut out {
            for v in row.iter_mut() {
                *v = v.max(0.0);
            }
        }
    }
    out
}

pub fn log_softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    v.iter().map(|x| x - lse).collect()
}

/// Sum over graphs and actions of `coef * log_softmax(logits)`.
pub fn ref_policy_loss(p: &Params, g: &RefGraph, waypoint_rows: &[usize], coef: &[f64]) -> f64 {
    let h1 = ref_layer(p, "l1", g, &g.x, true);
    let h2 = ref_layer(p, "l2", g, &h1, false);
    waypoint_rows
        .chunks(9)
        .enumerate()
        .map(|(gi, rows)| {
            let logits: Vec<f64> = rows.iter().map(|r| h2[*r][0]).collect();
            log_softmax(&logits)
                .iter()
                .enumerate()
                .map(|(a, l)| coef[gi * 9 + a] * l)
                .sum::<f64>()
        })
        .sum()
}

pub fn ref_values(p: &Params, g: &RefGraph, waypoint_rows: &[usize]) -> Vec<f64> {
    let h1 = ref_layer(p, "l1", g, &g.x, true);
    let h2 = ref_layer(p, "l2", g, &h1, false);
    let fw = param(p, "fc.w");
    let fb = param(p, "fc.b").2[0];
    waypoint_rows
        .chunks(9)
        .map(|rows| {
            let d = h2[rows[0]].len();
            let mean: Vec<f64> = (0..d)
                .map(|c| rows.iter().map(|r| h2[*r][c]).sum::<f64>() / 9.0)
                .collect();
            matvec(&mean, fw)[0] + fb
        })
        .collect()
}

/// Relative error with a floor of 1e-3 on the denominator.
pub fn rel_error(analytic: f32, numeric: f64) -> f64 {
    let a = analytic as f64;
    (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3)
}

/// Central differences of `loss` with respect to every scalar in `p`.
pub fn finite_differences(p: &Params, loss: impl Fn(&Params) -> f64) -> Vec<Vec<f64>> {
    let h = 1e-6;
    let mut q = p.clone();
    (0..p.len())
        .map(|k| {
            (0..p[k].2.len())
                .map(|i| {
                    let orig = q[k].2[i];
                    q[k].2[i] = orig + h;
                    let up = loss(&q);
                    q[k].2[i] = orig - h;
                    let down = loss(&q);
                    q[k].2[i] = orig;
                    (up - down) / (2.0 * h)
                })
                .collect()
        })
        .collect()
}

pub fn five_node_batch() -> GraphBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let feats: Vec<Vec<f32>> = (0..5)
        .map(|_| (0..8).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect())
        .collect();
    manual_batch(
        feats,
        &[(0, 1, 1.0), (1, 0, 1.0), (2, 1, 1.41), (3, 1, 2.0), (4, 2, 0.5), (1, 4, 3.0), (3, 4, 1.0)],
    )
}
