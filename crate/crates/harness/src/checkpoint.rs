//! Versioned binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "SNCK" u32:version
//! u64:update u64:steps
//! u32:hidden u32:heads u32:critic_out u8:variant (255 = none) u8:flags
//! u64:policy_adam_step u64:critic_adam_step
//! u32:array_count
//! array_count × { u32:name_len name u32:rank u64:dim×rank f32:data }
//! ```
//!
//! `flags` bit 0 marks critic arrays, bit 1 optimiser moments. Loading checks
//! the version and the shape of every expected array before anything is
//! returned.

use std::collections::BTreeMap;
use std::path::Path;

use shieldnav::autodiff::NdArray;
use shieldnav::gnn::{init_params, CriticNet, NetworkConfig, PolicyNet};
use shieldnav::ppo::{Trainer, TrainerState};
use shieldnav::reward::RewardVariant;

pub const MAGIC: &[u8; 4] = b"SNCK";
pub const FORMAT_VERSION: u32 = 1;

const HAS_CRITIC: u8 = 1;
const HAS_OPTIMIZER: u8 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint truncated while reading {what}")]
    Truncated { what: &'static str },
    #[error("array {name}: expected shape {expected:?}, found {found:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("array {0} missing from checkpoint")]
    Missing(String),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint has no {0}")]
    Absent(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<NdArray>,
    pub v: Vec<NdArray>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub policy: AdamState,
    pub critic: AdamState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub update: usize,
    pub steps: usize,
    pub network: NetworkConfig,
    pub variant: Option<RewardVariant>,
    /// Policy parameters in slot order.
    pub policy: Vec<NdArray>,
    pub critic: Option<Vec<NdArray>>,
    pub optimizer: Option<OptimizerState>,
}

impl Checkpoint {
    pub fn from_trainer(trainer: &Trainer, network: NetworkConfig, variant: RewardVariant) -> Self {
        let s = trainer.state();
        Self {
            update: s.update,
            steps: s.steps,
            network,
            variant: Some(variant),
            policy: s.policy,
            critic: Some(s.critic),
            optimizer: Some(OptimizerState {
                policy: AdamState {
                    step: s.policy_adam.0,
                    m: s.policy_adam.1,
                    v: s.policy_adam.2,
                },
                critic: AdamState {
                    step: s.critic_adam.0,
                    m: s.critic_adam.1,
                    v: s.critic_adam.2,
                },
            }),
        }
    }

    /// Policy-only checkpoint, sufficient for evaluation.
    pub fn policy_only(policy: &PolicyNet, network: NetworkConfig, variant: Option<RewardVariant>) -> Self {
        Self {
            update: 0,
            steps: 0,
            network,
            variant,
            policy: policy.params.values().to_vec(),
            critic: None,
            optimizer: None,
        }
    }

    pub fn policy_net(&self) -> PolicyNet {
        let (mut policy, _) = init_params(0, &self.network);
        policy.params.values_mut().clone_from_slice(&self.policy);
        policy
    }

    pub fn critic_net(&self) -> Result<CriticNet, CheckpointError> {
        let critic = self.critic.as_ref().ok_or(CheckpointError::Absent("critic"))?;
        let (_, mut net) = init_params(0, &self.network);
        net.params.values_mut().clone_from_slice(critic);
        Ok(net)
    }

    pub fn trainer_state(&self) -> Result<TrainerState, CheckpointError> {
        let critic = self.critic.clone().ok_or(CheckpointError::Absent("critic"))?;
        let opt = self.optimizer.clone().ok_or(CheckpointError::Absent("optimizer state"))?;
        Ok(TrainerState {
            update: self.update,
            steps: self.steps,
            policy: self.policy.clone(),
            critic,
            policy_adam: (opt.policy.step, opt.policy.m, opt.policy.v),
            critic_adam: (opt.critic.step, opt.critic.m, opt.critic.v),
        })
    }

    fn named_arrays(&self) -> Vec<(String, &NdArray)> {
        let (p, c) = init_params(0, &self.network);
        let pn = p.params.names();
        let cn = c.params.names();
        let mut out: Vec<(String, &NdArray)> = Vec::new();
        out.extend(pn.iter().zip(&self.policy).map(|(n, a)| (format!("policy/{n}"), a)));
        if let Some(critic) = &self.critic {
            out.extend(cn.iter().zip(critic).map(|(n, a)| (format!("critic/{n}"), a)));
        }
        if let Some(opt) = &self.optimizer {
            for (net, names, st) in [("policy", pn, &opt.policy), ("critic", cn, &opt.critic)] {
                out.extend(names.iter().zip(&st.m).map(|(n, a)| (format!("adam/{net}/m/{n}"), a)));
                out.extend(names.iter().zip(&st.v).map(|(n, a)| (format!("adam/{net}/v/{n}"), a)));
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let arrays = self.named_arrays();
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        b.extend_from_slice(&(self.update as u64).to_le_bytes());
        b.extend_from_slice(&(self.steps as u64).to_le_bytes());
        for v in [self.network.hidden, self.network.heads, self.network.critic_out] {
            b.extend_from_slice(&(v as u32).to_le_bytes());
        }
        let variant = self
            .variant
            .map(|v| RewardVariant::ALL.iter().position(|x| *x == v).expect("known variant") as u8)
            .unwrap_or(u8::MAX);
        b.push(variant);
        let mut flags = 0u8;
        if self.critic.is_some() {
            flags |= HAS_CRITIC;
        }
        if self.optimizer.is_some() {
            flags |= HAS_OPTIMIZER;
        }
        b.push(flags);
        let (ps, cs) = self
            .optimizer
            .as_ref()
            .map(|o| (o.policy.step, o.critic.step))
            .unwrap_or((0, 0));
        b.extend_from_slice(&ps.to_le_bytes());
        b.extend_from_slice(&cs.to_le_bytes());
        b.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
        for (name, a) in arrays {
            b.extend_from_slice(&(name.len() as u32).to_le_bytes());
            b.extend_from_slice(name.as_bytes());
            b.extend_from_slice(&2u32.to_le_bytes());
            for d in a.shape() {
                b.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for x in a.data() {
                b.extend_from_slice(&x.to_le_bytes());
            }
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let update = r.u64("header")? as usize;
        let steps = r.u64("header")? as usize;
        let network = NetworkConfig {
            hidden: r.u32("header")? as usize,
            heads: r.u32("header")? as usize,
            critic_out: r.u32("header")? as usize,
        };
        if [network.hidden, network.heads, network.critic_out].iter().any(|d| *d == 0 || *d > 4096) {
            return Err(CheckpointError::Malformed(format!("network dimensions {network:?}")));
        }
        let variant = match r.u8("header")? {
            u8::MAX => None,
            i => Some(
                *RewardVariant::ALL
                    .get(i as usize)
                    .ok_or_else(|| CheckpointError::Malformed(format!("variant index {i}")))?,
            ),
        };
        let flags = r.u8("header")?;
        let policy_step = r.u64("header")?;
        let critic_step = r.u64("header")?;
        let count = r.u32("array count")? as usize;
        let mut arrays = BTreeMap::new();
        for _ in 0..count {
            let len = r.u32("array name")? as usize;
            let name = String::from_utf8(r.take(len, "array name")?.to_vec())
                .map_err(|_| CheckpointError::Malformed("array name is not UTF-8".into()))?;
            let rank = r.u32("array rank")? as usize;
            if rank > 8 {
                return Err(CheckpointError::Malformed(format!("{name}: rank {rank}")));
            }
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.u64("array dims")? as usize);
            }
            let n = dims
                .iter()
                .try_fold(1usize, |acc, d| acc.checked_mul(*d))
                .filter(|n| n.checked_mul(4).is_some_and(|b| b <= bytes.len()))
                .ok_or(CheckpointError::Truncated { what: "array data" })?;
            let raw = r.take(n * 4, "array data")?;
            let data: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if arrays.insert(name.clone(), (dims, data)).is_some() {
                return Err(CheckpointError::Malformed(format!("duplicate array {name}")));
            }
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::Malformed(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }

        let (p, c) = init_params(0, &network);
        let mut take = |prefix: &str, template: &[NdArray], names: &[String]| {
            template
                .iter()
                .zip(names)
                .map(|(t, n)| {
                    let name = format!("{prefix}{n}");
                    let (dims, data) = arrays.remove(&name).ok_or_else(|| CheckpointError::Missing(name.clone()))?;
                    let expected = t.shape().to_vec();
                    if dims != expected {
                        return Err(CheckpointError::Shape {
                            name,
                            expected,
                            found: dims,
                        });
                    }
                    Ok(NdArray::from_vec(expected[0], expected[1], data).expect("checked shape"))
                })
                .collect::<Result<Vec<_>, _>>()
        };
        let (pv, pn) = (p.params.values(), p.params.names());
        let (cv, cn) = (c.params.values(), c.params.names());
        let policy = take("policy/", pv, pn)?;
        let critic = if flags & HAS_CRITIC != 0 {
            Some(take("critic/", cv, cn)?)
        } else {
            None
        };
        let optimizer = if flags & HAS_OPTIMIZER != 0 {
            Some(OptimizerState {
                policy: AdamState {
                    step: policy_step,
                    m: take("adam/policy/m/", pv, pn)?,
                    v: take("adam/policy/v/", pv, pn)?,
                },
                critic: AdamState {
                    step: critic_step,
                    m: take("adam/critic/m/", cv, cn)?,
                    v: take("adam/critic/v/", cv, cn)?,
                },
            })
        } else {
            None
        };
        if let Some(extra) = arrays.keys().next() {
            return Err(CheckpointError::Malformed(format!("unexpected array {extra}")));
        }
        Ok(Self {
            update,
            steps,
            network,
            variant,
            policy,
            critic,
            optimizer,
        })
    }

    /// Writes through a temporary file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let io = |source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        };
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(io)?;
        std::fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or(CheckpointError::Truncated { what })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, CheckpointError> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, CheckpointError> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}
