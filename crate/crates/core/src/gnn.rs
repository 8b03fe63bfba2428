//! GATv2 message passing with edge-weight attention, and the policy and
//! critic networks built from it.
//!
//! For an edge `j -> i` with weight `e`, one attention head computes
//!
//! ```text
//! score(i, j) = aᵀ LeakyReLU(Θ_s x_i + Θ_t x_j + Θ_e e)
//! α(i, ·)     = softmax of score(i, ·) over in-edges of i (self-loop included)
//! x'_i        = Σ_j α(i, j) Θ_t x_j
//! ```
//!
//! Self-loops with weight 0 are added to every node at batching time.

use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{AutodiffError, NdArray, ParamStore, Segments, Tape, Var};
use crate::env::Action;
use crate::graph::{ExplorationGraph, NODE_FEATURES, WAYPOINT_COUNT};

pub const LEAKY_SLOPE: f32 = 0.2;

/// Several exploration graphs packed as one disjoint graph.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub features: NdArray,
    pub src: Rc<[usize]>,
    pub dst: Rc<[usize]>,
    pub edge_weight: NdArray,
    pub by_dst: Segments,
    /// Node rows of the nine waypoints of each graph, graph-major.
    pub waypoint_rows: Rc<[usize]>,
    pub graphs: usize,
}

impl GraphBatch {
    pub fn from_graphs(graphs: &[&ExplorationGraph]) -> Self {
        let nodes: usize = graphs.iter().map(|g| g.nodes.len()).sum();
        let edges: usize = graphs.iter().map(|g| g.edges.len() + g.nodes.len()).sum();
        let mut features = Vec::with_capacity(nodes * NODE_FEATURES);
        let mut src = Vec::with_capacity(edges);
        let mut dst = Vec::with_capacity(edges);
        let mut weight = Vec::with_capacity(edges);
        let mut waypoint_rows = Vec::with_capacity(graphs.len() * WAYPOINT_COUNT);
        let mut offset = 0;
        for g in graphs {
            for n in &g.nodes {
                features.extend_from_slice(&n.features);
            }
            for e in &g.edges {
                src.push(offset + e.src);
                dst.push(offset + e.dst);
                weight.push(e.weight);
            }
            for i in 0..g.nodes.len() {
                src.push(offset + i);
                dst.push(offset + i);
                weight.push(0.0);
            }
            waypoint_rows.extend((0..WAYPOINT_COUNT).map(|i| offset + i));
            offset += g.nodes.len();
        }
        let e = src.len();
        Self {
            features: NdArray::from_vec(nodes, NODE_FEATURES, features).expect("feature rows"),
            by_dst: Segments::new(dst.clone(), nodes),
            src: src.into(),
            dst: dst.into(),
            edge_weight: NdArray::from_vec(e, 1, weight).expect("edge weights"),
            waypoint_rows: waypoint_rows.into(),
            graphs: graphs.len(),
        }
    }

    pub fn single(graph: &ExplorationGraph) -> Self {
        Self::from_graphs(&[graph])
    }

    pub fn node_count(&self) -> usize {
        self.features.rows()
    }
}

/// Glorot-uniform array with bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> NdArray {
    let bound = (6.0 / (rows + cols) as f32).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
    NdArray::from_vec(rows, cols, data).expect("glorot shape")
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeadSlots {
    theta_s: usize,
    theta_t: usize,
    theta_e: usize,
    att: usize,
}

/// One GATv2 layer; its weights live in the owning network's [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct GatLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub concat_relu: bool,
    heads: Vec<HeadSlots>,
}

/// Output of a layer plus per-head attention coefficients (`[E, 1]` each,
/// in batch edge order).
pub struct LayerOutput {
    pub embeddings: Var,
    pub attention: Vec<Var>,
}

impl GatLayer {
    /// Registers the layer's weights in `store`. With `concat_relu` the head
    /// outputs are concatenated and passed through ReLU; otherwise the layer
    /// must have one head and its output is returned raw.
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
        heads: usize,
        concat_relu: bool,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(concat_relu || heads == 1, "raw output needs a single head");
        let heads = (0..heads)
            .map(|h| HeadSlots {
                theta_s: store.push(format!("{prefix}.h{h}.theta_s"), glorot(in_dim, out_dim, rng)),
                theta_t: store.push(format!("{prefix}.h{h}.theta_t"), glorot(in_dim, out_dim, rng)),
                theta_e: store.push(format!("{prefix}.h{h}.theta_e"), glorot(1, out_dim, rng)),
                att: store.push(format!("{prefix}.h{h}.att"), glorot(out_dim, 1, rng)),
            })
            .collect();
        Self {
            in_dim,
            out_dim,
            concat_relu,
            heads,
        }
    }

    pub fn head_count(&self) -> usize {
        self.heads.len()
    }

    pub fn output_dim(&self) -> usize {
        self.out_dim * self.heads.len()
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &[Var],
        x: Var,
        batch: &GraphBatch,
        edge_weight: Var,
    ) -> Result<LayerOutput, AutodiffError> {
        let in_cols = tape.value(x).cols();
        if in_cols != self.in_dim {
            return Err(AutodiffError::ShapeMismatch {
                op: "gatv2 input",
                lhs: tape.value(x).shape(),
                rhs: [self.in_dim, self.out_dim],
            });
        }
        let mut outs = Vec::with_capacity(self.heads.len());
        let mut attention = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let xs = tape.matmul(x, params[head.theta_s])?;
            let xt = tape.matmul(x, params[head.theta_t])?;
            let r = tape.gat_attention(
                xs,
                xt,
                edge_weight,
                params[head.theta_e],
                params[head.att],
                batch.src.clone(),
                &batch.by_dst,
                LEAKY_SLOPE,
            )?;
            let (out, alpha) = (r.out, r.alpha);
            outs.push(out);
            attention.push(alpha);
        }
        let embeddings = if self.concat_relu {
            let cat = tape.concat(&outs)?;
            tape.relu(cat)
        } else {
            outs[0]
        };
        Ok(LayerOutput {
            embeddings,
            attention,
        })
    }
}

/// Leaves for every parameter of `store`, in slot order.
pub fn bind_params(tape: &mut Tape, store: &ParamStore, trainable: bool) -> Vec<Var> {
    store
        .values()
        .iter()
        .map(|v| {
            if trainable {
                tape.variable(v.clone())
            } else {
                tape.constant(v.clone())
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkConfig {
    pub hidden: usize,
    pub heads: usize,
    /// Width of the critic's second layer before the mean-and-project head.
    pub critic_out: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            heads: 4,
            critic_out: 16,
        }
    }
}

/// Two GATv2 layers; the scalar output at each waypoint is that action's
/// logit.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub params: ParamStore,
    l1: GatLayer,
    l2: GatLayer,
}

impl PolicyNet {
    pub fn new(config: &NetworkConfig, rng: &mut impl Rng) -> Self {
        let mut params = ParamStore::new();
        let l1 = GatLayer::new(&mut params, "l1", NODE_FEATURES, config.hidden, config.heads, true, rng);
        let l2 = GatLayer::new(&mut params, "l2", l1.output_dim(), 1, 1, false, rng);
        Self { params, l1, l2 }
    }

    /// Logits `[graphs, 9]` in action order.
    pub fn logits(&self, tape: &mut Tape, bound: &[Var], batch: &GraphBatch) -> Result<Var, AutodiffError> {
        Ok(self.forward_layers(tape, bound, batch)?.0)
    }

    /// Logits plus both layers' attention coefficients.
    pub fn forward_layers(
        &self,
        tape: &mut Tape,
        bound: &[Var],
        batch: &GraphBatch,
    ) -> Result<(Var, LayerOutput, LayerOutput), AutodiffError> {
        let x = tape.constant(batch.features.clone());
        let w = tape.constant(batch.edge_weight.clone());
        let h1 = self.l1.forward(tape, bound, x, batch, w)?;
        let h2 = self.l2.forward(tape, bound, h1.embeddings, batch, w)?;
        let picked = tape.row_gather(h2.embeddings, batch.waypoint_rows.clone())?;
        let logits = tape.reshape(picked, batch.graphs, Action::COUNT)?;
        Ok((logits, h1, h2))
    }

    /// Action probabilities for a single graph.
    pub fn distribution(&self, graph: &ExplorationGraph) -> [f32; Action::COUNT] {
        let mut tape = Tape::new();
        let bound = bind_params(&mut tape, &self.params, false);
        let logits = self
            .logits(&mut tape, &bound, &GraphBatch::single(graph))
            .expect("policy shapes are fixed");
        let ls = tape.log_softmax_rows(logits);
        let mut out = [0.0; Action::COUNT];
        for (o, l) in out.iter_mut().zip(tape.value(ls).data()) {
            *o = l.exp();
        }
        out
    }
}

/// Two GATv2 layers, mean over the nine waypoint embeddings, then a linear
/// head to a scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticNet {
    pub params: ParamStore,
    l1: GatLayer,
    l2: GatLayer,
    fc_w: usize,
    fc_b: usize,
}

impl CriticNet {
    pub fn new(config: &NetworkConfig, rng: &mut impl Rng) -> Self {
        let mut params = ParamStore::new();
        let l1 = GatLayer::new(&mut params, "l1", NODE_FEATURES, config.hidden, config.heads, true, rng);
        let l2 = GatLayer::new(&mut params, "l2", l1.output_dim(), config.critic_out, 1, false, rng);
        let fc_w = params.push("fc.w", glorot(config.critic_out, 1, rng));
        let fc_b = params.push("fc.b", NdArray::zeros(1, 1));
        Self {
            params,
            l1,
            l2,
            fc_w,
            fc_b,
        }
    }

    /// Values `[graphs, 1]`.
    pub fn values(&self, tape: &mut Tape, bound: &[Var], batch: &GraphBatch) -> Result<Var, AutodiffError> {
        let x = tape.constant(batch.features.clone());
        let w = tape.constant(batch.edge_weight.clone());
        let h1 = self.l1.forward(tape, bound, x, batch, w)?;
        let h2 = self.l2.forward(tape, bound, h1.embeddings, batch, w)?;
        let picked = tape.row_gather(h2.embeddings, batch.waypoint_rows.clone())?;
        let graph_of_row: Vec<usize> = (0..batch.graphs)
            .flat_map(|g| std::iter::repeat_n(g, WAYPOINT_COUNT))
            .collect();
        let pool = Segments::new(graph_of_row, batch.graphs);
        let inv = tape.constant(NdArray::filled(
            batch.graphs * WAYPOINT_COUNT,
            1,
            1.0 / WAYPOINT_COUNT as f32,
        ));
        let pooled = tape.segment_weighted_sum(inv, picked, &pool)?;
        let proj = tape.matmul(pooled, bound[self.fc_w])?;
        tape.add_row(proj, bound[self.fc_b])
    }

    pub fn value(&self, graph: &ExplorationGraph) -> f32 {
        let mut tape = Tape::new();
        let bound = bind_params(&mut tape, &self.params, false);
        let v = self
            .values(&mut tape, &bound, &GraphBatch::single(graph))
            .expect("critic shapes are fixed");
        tape.value(v).item()
    }
}

/// Fresh policy and critic with disjoint parameters, deterministic in `seed`.
pub fn init_params(seed: u64, config: &NetworkConfig) -> (PolicyNet, CriticNet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let policy = PolicyNet::new(config, &mut rng);
    let critic = CriticNet::new(config, &mut rng);
    (policy, critic)
}
