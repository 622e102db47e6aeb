//! Four-network affordance model: a robot-position encoder, a pooled
//! point-cloud encoder conditioned on the target point, a pooled encoder
//! over the significant field vectors, and a squashed score head. Forward
//! caches every activation so the hand-written backward can route pooled
//! gradients to their winning rows only.

use super::nn::{max_pool, relu, relu_backward, Linear, LinearGrad};
use super::LearnError;
use crate::field::select_significant_for_part;
use crate::geometry::Vec3;
use crate::scalar::Real;
use crate::scene::{LabeledCloud, SegClass};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const ROBOT_IN: usize = 3;
pub const POINT_FEATURES: usize = 13;
pub const FIELD_IN: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Full model.
    None,
    /// Replace the field embedding with a zero vector everywhere.
    NoField,
    /// Drop the contrastive term from the training objective.
    NoContrastive,
}

impl Ablation {
    pub fn to_code(self) -> u8 {
        match self {
            Ablation::None => 0,
            Ablation::NoField => 1,
            Ablation::NoContrastive => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Ablation::None),
            1 => Some(Ablation::NoField),
            2 => Some(Ablation::NoContrastive),
            _ => None,
        }
    }
}

/// Hidden and embedding widths. Defaults are the reference widths; tests
/// shrink them to keep finite-difference sweeps cheap.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub robot_hidden: usize,
    pub point_hidden: usize,
    /// Per-point feature width fed to the pool and the fusion net.
    pub phi: usize,
    pub field_hidden: usize,
    pub pred_hidden: usize,
    /// Width of each of the three embeddings.
    pub embed: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            robot_hidden: 64,
            point_hidden: 64,
            phi: 64,
            field_hidden: 64,
            pred_hidden: 128,
            embed: 128,
        }
    }
}

pub const NUM_LAYERS: usize = 9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Real", deserialize = "S: Real"))]
pub struct Model<S: Real> {
    pub dims: ModelDims,
    pub k_significant: usize,
    pub ablation: Ablation,
    pub robot1: Linear<S>,
    pub robot2: Linear<S>,
    pub point1: Linear<S>,
    pub point2: Linear<S>,
    pub fusion: Linear<S>,
    pub field1: Linear<S>,
    pub scene_head: Linear<S>,
    pub pred1: Linear<S>,
    pub pred2: Linear<S>,
}

impl<S: Real> Model<S> {
    pub fn new(seed: u64, k_significant: usize, ablation: Ablation) -> Self {
        Self::with_dims(seed, ModelDims::default(), k_significant, ablation)
    }

    pub fn with_dims(seed: u64, dims: ModelDims, k_significant: usize, ablation: Ablation) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = dims;
        Self {
            dims,
            k_significant,
            ablation,
            robot1: Linear::init(ROBOT_IN, d.robot_hidden, &mut rng),
            robot2: Linear::init(d.robot_hidden, d.embed, &mut rng),
            point1: Linear::init(POINT_FEATURES, d.point_hidden, &mut rng),
            point2: Linear::init(d.point_hidden, d.phi, &mut rng),
            fusion: Linear::init(2 * d.phi, d.embed, &mut rng),
            field1: Linear::init(FIELD_IN, d.field_hidden, &mut rng),
            scene_head: Linear::init(d.field_hidden, d.embed, &mut rng),
            pred1: Linear::init(3 * d.embed, d.pred_hidden, &mut rng),
            // Zero final layer: every input scores 0.5 before training.
            pred2: Linear::zeros(d.pred_hidden, 1),
        }
    }

    pub fn layers(&self) -> [&Linear<S>; NUM_LAYERS] {
        [
            &self.robot1,
            &self.robot2,
            &self.point1,
            &self.point2,
            &self.fusion,
            &self.field1,
            &self.scene_head,
            &self.pred1,
            &self.pred2,
        ]
    }

    pub fn layers_mut(&mut self) -> [&mut Linear<S>; NUM_LAYERS] {
        [
            &mut self.robot1,
            &mut self.robot2,
            &mut self.point1,
            &mut self.point2,
            &mut self.fusion,
            &mut self.field1,
            &mut self.scene_head,
            &mut self.pred1,
            &mut self.pred2,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.param_count()).sum()
    }

    /// Visits every parameter in the fixed layer order (weights row-major,
    /// then biases). The optimizer and checkpoint rely on this order.
    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut S)) {
        for layer in self.layers_mut() {
            for w in &mut layer.w {
                f(w);
            }
            for b in &mut layer.b {
                f(b);
            }
        }
    }
}

const L_ROBOT1: usize = 0;
const L_ROBOT2: usize = 1;
const L_POINT1: usize = 2;
const L_POINT2: usize = 3;
const L_FUSION: usize = 4;
const L_FIELD1: usize = 5;
const L_SCENE_HEAD: usize = 6;
const L_PRED1: usize = 7;
const L_PRED2: usize = 8;

/// Per-layer gradient accumulators matching `Model::layers` order.
#[derive(Clone, Debug)]
pub struct Grads<S: Real> {
    pub items: Vec<LinearGrad<S>>,
}

impl<S: Real> Grads<S> {
    pub fn zeros_like(model: &Model<S>) -> Self {
        Self {
            items: model
                .layers()
                .iter()
                .map(|l| LinearGrad::zeros_like(l))
                .collect(),
        }
    }

    pub fn zero(&mut self) {
        for g in &mut self.items {
            g.zero();
        }
    }

    /// Flattens in the same order as `Model::visit_params_mut`.
    pub fn flatten(&self) -> Vec<S> {
        let mut out = Vec::new();
        for g in &self.items {
            out.extend_from_slice(&g.dw);
            out.extend_from_slice(&g.db);
        }
        out
    }
}

/// Everything the model reads for one interaction, precomputed from the
/// scene artifacts. Building this is parameter-independent, so training
/// does it once per record.
#[derive(Clone, Debug, PartialEq)]
pub struct RecordInputs<S: Real> {
    pub robot: [S; 3],
    /// One row per cloud point.
    pub features: Vec<[S; POINT_FEATURES]>,
    pub anchor_row: usize,
    /// Field vectors of the significant set for (robot, target point).
    pub field_values: Vec<[S; 3]>,
}

impl<S: Real> RecordInputs<S> {
    /// Per-point features: position, normal, segment one-hot, handle flag,
    /// offset from the target point.
    pub fn build(
        cloud: &LabeledCloud<S>,
        robot: Vec3<S>,
        point_index: usize,
        k_significant: usize,
    ) -> Result<Self, LearnError> {
        if point_index >= cloud.len() {
            return Err(LearnError::InvalidPoint { index: point_index });
        }
        let part = match cloud.seg[point_index] {
            SegClass::Part(i) => i,
            _ => return Err(LearnError::InvalidPoint { index: point_index }),
        };
        let tp = cloud.points[point_index];
        let mut features = Vec::with_capacity(cloud.len());
        for i in 0..cloud.len() {
            let p = cloud.points[i];
            let n = cloud.normals[i].as_vec();
            let mut one_hot = [S::zero(); 3];
            one_hot[cloud.seg[i].class_index()] = S::one();
            features.push([
                p.x,
                p.y,
                p.z,
                n.x,
                n.y,
                n.z,
                one_hot[0],
                one_hot[1],
                one_hot[2],
                if cloud.handle[i] { S::one() } else { S::zero() },
                p.x - tp.x,
                p.y - tp.y,
                p.z - tp.z,
            ]);
        }
        let set = select_significant_for_part(cloud, robot, tp, k_significant, part);
        let field_values = set
            .samples
            .iter()
            .map(|s| [s.value.x, s.value.y, s.value.z])
            .collect();
        Ok(Self {
            robot: [robot.x, robot.y, robot.z],
            features,
            anchor_row: point_index,
            field_values,
        })
    }
}

/// Activations retained by `Model::forward` for the matching backward.
#[derive(Clone, Debug)]
pub struct Cache<S: Real> {
    r_pre: Vec<S>,
    r_post: Vec<S>,
    pub f_robot: Vec<S>,
    p_pre1: Vec<Vec<S>>,
    p_post1: Vec<Vec<S>>,
    p_pre2: Vec<Vec<S>>,
    p_phi: Vec<Vec<S>>,
    pool_g: Vec<S>,
    pool_winner: Vec<usize>,
    fusion_in: Vec<S>,
    pub f_target: Vec<S>,
    s_pre: Vec<Vec<S>>,
    s_psi: Vec<Vec<S>>,
    pool_gs: Vec<S>,
    pool_gs_winner: Vec<usize>,
    /// Scene embedding as used downstream (zeros under the field ablation).
    pub f_scene: Vec<S>,
    z: Vec<S>,
    q_pre: Vec<S>,
    q_post: Vec<S>,
    pub score: S,
}

impl<S: Real> Cache<S> {
    /// True when no rectifier preactivation, pooling race, or squash input
    /// sits within `margin` of its kink, i.e. the forward pass is locally
    /// smooth and safe to probe with finite differences.
    pub fn kink_free(&self, margin: S) -> bool {
        let clear = |v: &[S]| v.iter().all(|x| x.abs() > margin);
        if !clear(&self.r_pre) || !clear(&self.q_pre) {
            return false;
        }
        // |2s-1| = |u|/(1+|u|), so this bounds the squash input away from 0.
        if (S::of(2.0) * self.score - S::one()).abs() < margin {
            return false;
        }
        for pre in self.p_pre1.iter().chain(&self.p_pre2).chain(&self.s_pre) {
            if !clear(pre) {
                return false;
            }
        }
        let margins_ok = |rows: &[Vec<S>], pooled: &[S], winner: &[usize]| {
            for d in 0..pooled.len() {
                if winner[d] == usize::MAX {
                    continue;
                }
                for (r, row) in rows.iter().enumerate() {
                    if r != winner[d] && (pooled[d] - row[d]).abs() < margin {
                        return false;
                    }
                }
            }
            true
        };
        margins_ok(&self.p_phi, &self.pool_g, &self.pool_winner)
            && margins_ok(&self.s_psi, &self.pool_gs, &self.pool_gs_winner)
    }
}

/// Squash to (0, 1): 0.5 + x / (2 (1 + |x|)), with 0 mapping to 0.5.
/// The polynomial tails matter: an exponential squash drops the score
/// derivative below the optimizer's epsilon once the majority label drags
/// scores into a tail, freezing rare-class learning; here the derivative
/// decays only quadratically, so separation keeps growing.
fn squash<S: Real>(x: S) -> S {
    S::of(0.5) * (S::one() + x / (S::one() + x.abs()))
}

impl<S: Real> Model<S> {
    pub fn forward(&self, inp: &RecordInputs<S>) -> Result<(S, Cache<S>), LearnError> {
        if inp.anchor_row >= inp.features.len() {
            return Err(LearnError::InvalidPoint {
                index: inp.anchor_row,
            });
        }
        let d = self.dims;

        let r_pre = self.robot1.forward(&inp.robot)?;
        let r_post = relu(&r_pre);
        let f_robot = self.robot2.forward(&r_post)?;

        let n_pts = inp.features.len();
        let mut p_pre1 = Vec::with_capacity(n_pts);
        let mut p_post1 = Vec::with_capacity(n_pts);
        let mut p_pre2 = Vec::with_capacity(n_pts);
        let mut p_phi = Vec::with_capacity(n_pts);
        for f in &inp.features {
            let pre1 = self.point1.forward(f)?;
            let post1 = relu(&pre1);
            let pre2 = self.point2.forward(&post1)?;
            let phi = relu(&pre2);
            p_pre1.push(pre1);
            p_post1.push(post1);
            p_pre2.push(pre2);
            p_phi.push(phi);
        }
        let (pool_g, pool_winner) = max_pool(&p_phi, d.phi);
        let mut fusion_in = Vec::with_capacity(2 * d.phi);
        fusion_in.extend_from_slice(&p_phi[inp.anchor_row]);
        fusion_in.extend_from_slice(&pool_g);
        let f_target = self.fusion.forward(&fusion_in)?;

        let mut s_pre = Vec::new();
        let mut s_psi = Vec::new();
        let (pool_gs, pool_gs_winner, f_scene) = if self.ablation == Ablation::NoField {
            (Vec::new(), Vec::new(), vec![S::zero(); d.embed])
        } else {
            for v in &inp.field_values {
                let pre = self.field1.forward(v)?;
                let psi = relu(&pre);
                s_pre.push(pre);
                s_psi.push(psi);
            }
            let (gs, gs_winner) = max_pool(&s_psi, d.field_hidden);
            let f_scene = self.scene_head.forward(&gs)?;
            (gs, gs_winner, f_scene)
        };

        let mut z = Vec::with_capacity(3 * d.embed);
        z.extend_from_slice(&f_robot);
        z.extend_from_slice(&f_target);
        z.extend_from_slice(&f_scene);
        let q_pre = self.pred1.forward(&z)?;
        let q_post = relu(&q_pre);
        let logit = self.pred2.forward(&q_post)?[0];
        let score = squash(logit);

        Ok((
            score,
            Cache {
                r_pre,
                r_post,
                f_robot,
                p_pre1,
                p_post1,
                p_pre2,
                p_phi,
                pool_g,
                pool_winner,
                fusion_in,
                f_target,
                s_pre,
                s_psi,
                pool_gs,
                pool_gs_winner,
                f_scene,
                z,
                q_pre,
                q_post,
                score,
            },
        ))
    }

    pub fn predict(&self, inp: &RecordInputs<S>) -> Result<S, LearnError> {
        Ok(self.forward(inp)?.0)
    }

    /// Accumulates parameter gradients for one record. `d_score` is the
    /// loss derivative at the squashed output; `d_scene_embed`, when given,
    /// is an extra derivative arriving directly at the scene embedding
    /// (the contrastive term sends one to each member of a triple).
    pub fn backward(
        &self,
        inp: &RecordInputs<S>,
        cache: &Cache<S>,
        d_score: S,
        d_scene_embed: Option<&[S]>,
        grads: &mut Grads<S>,
    ) {
        let d = self.dims;
        // Squash slope recovered from the score: 1/(1+|u|) = 1 - |2s-1|.
        let t = (S::of(2.0) * cache.score - S::one()).abs();
        let d_logit = d_score * S::of(0.5) * (S::one() - t) * (S::one() - t);

        let dq_post = self
            .pred2
            .backward(&cache.q_post, &[d_logit], &mut grads.items[L_PRED2]);
        let dq_pre = relu_backward(&cache.q_pre, &dq_post);
        let dz = self
            .pred1
            .backward(&cache.z, &dq_pre, &mut grads.items[L_PRED1]);

        let df_robot = &dz[..d.embed];
        let df_target = &dz[d.embed..2 * d.embed];
        let mut df_scene = dz[2 * d.embed..].to_vec();
        if let Some(extra) = d_scene_embed {
            debug_assert_eq!(extra.len(), d.embed);
            for (a, b) in df_scene.iter_mut().zip(extra) {
                *a = *a + *b;
            }
        }

        let dr_post = self
            .robot2
            .backward(&cache.r_post, df_robot, &mut grads.items[L_ROBOT2]);
        let dr_pre = relu_backward(&cache.r_pre, &dr_post);
        self.robot1
            .backward(&inp.robot, &dr_pre, &mut grads.items[L_ROBOT1]);

        let d_fusion_in =
            self.fusion
                .backward(&cache.fusion_in, df_target, &mut grads.items[L_FUSION]);
        // Pooled gradients reach only the winning row per component; the
        // anchor row additionally receives the fusion's direct half.
        let mut d_phi_rows: std::collections::BTreeMap<usize, Vec<S>> =
            std::collections::BTreeMap::new();
        {
            let entry = d_phi_rows
                .entry(inp.anchor_row)
                .or_insert_with(|| vec![S::zero(); d.phi]);
            for (a, b) in entry.iter_mut().zip(&d_fusion_in[..d.phi]) {
                *a = *a + *b;
            }
        }
        for dim in 0..d.phi {
            let w = cache.pool_winner[dim];
            if w == usize::MAX {
                continue;
            }
            let entry = d_phi_rows
                .entry(w)
                .or_insert_with(|| vec![S::zero(); d.phi]);
            entry[dim] = entry[dim] + d_fusion_in[d.phi + dim];
        }
        for (row, d_phi) in d_phi_rows {
            let d_pre2 = relu_backward(&cache.p_pre2[row], &d_phi);
            let d_post1 =
                self.point2
                    .backward(&cache.p_post1[row], &d_pre2, &mut grads.items[L_POINT2]);
            let d_pre1 = relu_backward(&cache.p_pre1[row], &d_post1);
            self.point1
                .backward(&inp.features[row], &d_pre1, &mut grads.items[L_POINT1]);
        }

        if self.ablation != Ablation::NoField {
            let d_gs =
                self.scene_head
                    .backward(&cache.pool_gs, &df_scene, &mut grads.items[L_SCENE_HEAD]);
            let mut d_psi_rows: std::collections::BTreeMap<usize, Vec<S>> =
                std::collections::BTreeMap::new();
            for dim in 0..d.field_hidden {
                let w = cache.pool_gs_winner[dim];
                if w == usize::MAX {
                    continue;
                }
                let entry = d_psi_rows
                    .entry(w)
                    .or_insert_with(|| vec![S::zero(); d.field_hidden]);
                entry[dim] = entry[dim] + d_gs[dim];
            }
            for (row, d_psi) in d_psi_rows {
                let d_pre = relu_backward(&cache.s_pre[row], &d_psi);
                self.field1
                    .backward(&inp.field_values[row], &d_pre, &mut grads.items[L_FIELD1]);
            }
        }
    }
}
