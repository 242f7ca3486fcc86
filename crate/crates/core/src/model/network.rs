use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, Task};
use crate::autodiff::{ParameterStore, Tape, Tensor, Var};
use crate::layers::{EquiLinear, InterpolationMlp, PoolingMlp, TransformerBlock};
use crate::mesh::{MeshSample, Target, POSITION_DESCRIPTOR};
use crate::pga::blade::{E1, E2, E3, S};
use crate::pga::{embed, embed_point, embed_translation, Vec3};
use crate::tokenizer::{build_plan, TokenizationPlan};

/// One multivector channel per schema entry. `position` embeds the vertex
/// positions as points unless the sample carries a descriptor of that name.
pub fn embed_mesh(sample: &MeshSample, schema: &[String]) -> Result<Tensor, ModelError> {
    let n = sample.n_vertices();
    let c = schema.len();
    let mut data = vec![0.0; n * c * 16];
    for (ch, name) in schema.iter().enumerate() {
        match sample.descriptor(name) {
            Some(d) => {
                if d.values.len() != n {
                    return Err(ModelError::TaskMismatch(format!("descriptor `{name}` has {} values", d.values.len())));
                }
                for (v, obj) in d.values.iter().enumerate() {
                    let mv = embed(obj)?;
                    data[(v * c + ch) * 16..(v * c + ch + 1) * 16].copy_from_slice(mv.coeffs());
                }
            }
            None if name == POSITION_DESCRIPTOR => {
                for (v, &p) in sample.positions.iter().enumerate() {
                    data[(v * c + ch) * 16..(v * c + ch + 1) * 16].copy_from_slice(embed_point(p).coeffs());
                }
            }
            None => return Err(ModelError::MissingDescriptor(name.clone())),
        }
    }
    Ok(Tensor::new(vec![n, c, 16], data)?)
}

/// Model output for one mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prediction {
    VertexVectors(Vec<Vec3>),
    VertexScalars(Vec<f64>),
    MeshScalar(f64),
    Classes(Vec<f64>),
}

/// A sample with its tokenisation and the geometry-only inputs precomputed.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub sample: MeshSample,
    pub plan: TokenizationPlan,
    pub embedding: Tensor,
    /// Embedded translation from each vertex to its cluster centre, `[n, 1, 16]`.
    pub translations: Tensor,
    /// Flattened training target in readout order, if the sample has one.
    pub target: Option<Vec<f64>>,
}

pub struct LabGatr {
    pub config: ModelConfig,
    pooling: PoolingMlp,
    blocks: Vec<TransformerBlock>,
    interpolation: Option<InterpolationMlp>,
    head: EquiLinear,
}

impl LabGatr {
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let (c0, c) = (config.schema.len(), config.channels);
        let blocks =
            (0..config.blocks).map(|i| TransformerBlock::new(i, c, config.heads)).collect::<Result<Vec<_>, _>>()?;
        let interpolation = (!config.task.is_mesh_level()).then(|| InterpolationMlp::new("interp", c, c0, c));
        Ok(LabGatr {
            pooling: PoolingMlp::new("pool", c0, c),
            blocks,
            interpolation,
            head: EquiLinear::new("head", c, config.task.output_channels()),
            config,
        })
    }

    pub fn num_params(&self) -> usize {
        self.pooling.mlp.num_params()
            + self.blocks.iter().map(TransformerBlock::num_params).sum::<usize>()
            + self.interpolation.as_ref().map_or(0, |m| m.mlp.num_params())
            + self.head.num_params()
    }

    /// Fresh parameters; block output projections start at zero.
    pub fn init_params(&self, seed: u64) -> Result<ParameterStore, ModelError> {
        self.init_inner(seed, false)
    }

    /// Fresh parameters with every array random, so no gradient path is
    /// switched off; used by the gradient and equivariance checks.
    pub fn init_params_dense(&self, seed: u64) -> Result<ParameterStore, ModelError> {
        self.init_inner(seed, true)
    }

    fn init_inner(&self, seed: u64, dense: bool) -> Result<ParameterStore, ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new();
        self.pooling.mlp.init(&mut store, &mut rng, false)?;
        for b in &self.blocks {
            if dense {
                b.init_random(&mut store, &mut rng)?;
            } else {
                b.init(&mut store, &mut rng)?;
            }
        }
        if let Some(m) = &self.interpolation {
            m.mlp.init(&mut store, &mut rng, false)?;
        }
        self.head.init(&mut store, &mut rng, false)?;
        Ok(store)
    }

    /// Tokenises and embeds a sample. The plan uses the configured seed.
    pub fn prepare(&self, sample: &MeshSample) -> Result<PreparedSample, ModelError> {
        let plan =
            build_plan(&sample.positions, self.config.ratio, self.config.k, self.config.seed, self.config.epsilon)?;
        self.prepare_with_plan(sample, plan)
    }

    pub fn prepare_with_plan(&self, sample: &MeshSample, plan: TokenizationPlan) -> Result<PreparedSample, ModelError> {
        if plan.n_fine != sample.n_vertices() {
            return Err(ModelError::TaskMismatch(format!(
                "plan covers {} vertices, mesh has {}",
                plan.n_fine,
                sample.n_vertices()
            )));
        }
        let embedding = embed_mesh(sample, &self.config.schema)?;
        let mut translations = Vec::with_capacity(sample.n_vertices() * 16);
        for (v, &p) in sample.positions.iter().enumerate() {
            let centre = sample.positions[plan.coarse_indices[plan.assignment[v]]];
            let shift = [centre[0] - p[0], centre[1] - p[1], centre[2] - p[2]];
            translations.extend_from_slice(embed_translation(shift).coeffs());
        }
        let translations = Tensor::new(vec![sample.n_vertices(), 1, 16], translations)?;
        let target = flatten_target(self.config.task, &sample.target, sample.n_vertices())?;
        Ok(PreparedSample { sample: sample.clone(), plan, embedding, translations, target })
    }

    /// Records the full network and returns the readout: `[n, 3]`, `[n, 1]`,
    /// `[1, 1]` or `[1, classes]` depending on the task.
    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, x: &PreparedSample) -> Result<Var, ModelError> {
        let plan = &x.plan;
        let x0 = tape.constant(x.embedding.clone());
        let shifts = tape.constant(x.translations.clone());
        let messages = self.pooling.forward(tape, store, x0, shifts)?;
        let mut tokens = tape.scatter_mean(messages, &plan.assignment, plan.n_coarse())?;
        let mesh_level = self.config.task.is_mesh_level();
        if mesh_level {
            let class = tape.scatter_mean(tokens, &vec![0; plan.n_coarse()], 1)?;
            tokens = tape.concat_rows(&[tokens, class])?;
        }
        for block in &self.blocks {
            tokens = block.forward(tape, store, tokens)?;
        }
        let features = match &self.interpolation {
            Some(lift) => {
                let lifted = tape.weighted_gather(tokens, &plan.interp_neighbors, &plan.interp_weights, plan.k)?;
                lift.forward(tape, store, lifted, x0)?
            }
            None => tape.gather_rows(tokens, &[plan.n_coarse()])?,
        };
        let out = self.head.forward(tape, store, features)?;
        let rows = tape.shape(out)[0];
        match self.config.task {
            Task::VertexVector => {
                let flat = tape.reshape(out, vec![rows, 16])?;
                Ok(tape.readout(flat, 16, vec![vec![(E3, -1.0)], vec![(E2, 1.0)], vec![(E1, -1.0)]])?)
            }
            Task::VertexScalar | Task::MeshScalar => {
                let flat = tape.reshape(out, vec![rows, 16])?;
                Ok(tape.readout(flat, 16, vec![vec![(S, 1.0)]])?)
            }
            Task::Classification { classes } => {
                let flat = tape.reshape(out, vec![classes, 16])?;
                let logits = tape.readout(flat, 16, vec![vec![(S, 1.0)]])?;
                let logits = tape.reshape(logits, vec![1, classes])?;
                Ok(tape.softmax(logits)?)
            }
        }
    }

    pub fn predict(&self, store: &ParameterStore, x: &PreparedSample) -> Result<Prediction, ModelError> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, store, x)?;
        let d = &tape.value(out).data;
        Ok(match self.config.task {
            Task::VertexVector => Prediction::VertexVectors(d.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()),
            Task::VertexScalar => Prediction::VertexScalars(d.clone()),
            Task::MeshScalar => Prediction::MeshScalar(d[0]),
            Task::Classification { .. } => Prediction::Classes(d.clone()),
        })
    }

    /// Records forward pass plus L1 loss against the sample's target.
    pub fn loss(&self, tape: &mut Tape, store: &ParameterStore, x: &PreparedSample) -> Result<Var, ModelError> {
        let target = x.target.as_ref().ok_or_else(|| ModelError::TaskMismatch("sample has no target".into()))?;
        let out = self.forward(tape, store, x)?;
        Ok(tape.l1_loss(out, target)?)
    }

    /// Loss value and parameter gradients of one sample.
    pub fn loss_and_grads(
        &self,
        store: &ParameterStore,
        x: &PreparedSample,
    ) -> Result<(f64, BTreeMap<String, Vec<f64>>), ModelError> {
        let mut tape = Tape::new();
        let loss = self.loss(&mut tape, store, x)?;
        let value = tape.value(loss).item();
        let grads = tape.backward(loss)?.into_params();
        Ok((value, grads))
    }
}

fn flatten_target(task: Task, target: &Target, n: usize) -> Result<Option<Vec<f64>>, ModelError> {
    let mismatch = |what: &str| Err(ModelError::TaskMismatch(format!("task {task:?} cannot use {what} targets")));
    Ok(match (task, target) {
        (_, Target::None) => None,
        (Task::VertexVector, Target::VertexVectors(v)) if v.len() == n => Some(v.iter().flatten().copied().collect()),
        (Task::VertexScalar, Target::VertexScalars(v)) if v.len() == n => Some(v.clone()),
        (Task::MeshScalar, Target::MeshScalar(v)) => Some(vec![*v]),
        (Task::Classification { classes }, Target::MeshScalar(v)) => {
            let label = *v as usize;
            if v.fract() != 0.0 || *v < 0.0 || label >= classes {
                return Err(ModelError::TaskMismatch(format!("class label {v} outside 0..{classes}")));
            }
            Some((0..classes).map(|c| if c == label { 1.0 } else { 0.0 }).collect())
        }
        (_, Target::VertexVectors(_)) => return mismatch("per-vertex vector"),
        (_, Target::VertexScalars(_)) => return mismatch("per-vertex scalar"),
        (_, Target::MeshScalar(_)) => return mismatch("mesh-level"),
    })
}
