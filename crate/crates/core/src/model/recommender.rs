//! Wide & deep, deep & cross, and neural factorization machine backbones
//! over a shared user/item embedding base.
//!
//! All three end in a single linear unit `dense_last`, whose input is the
//! model's feature representation:
//!
//! | backbone         | deep input              | feature          | extra terms            |
//! |------------------|-------------------------|------------------|------------------------|
//! | `WideDeep`       | `[u; i]`                | MLP output       | `wide_w[u] + wide_w[U+i] + wide_b` |
//! | `CrossNet`       | `[u; i]`                | `[x_L; MLP out]` | cross tower on `[u; i]` |
//! | `BiInteractionFM`| `u (.) i` (bi-interaction) | MLP output    | `lin_w[u] + lin_w[U+i] + lin_b` |
//!
//! Hidden layers use ReLU; the final layer is linear.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{affine, bi_interaction, init_uniform, relu_in_place};
use crate::data::InteractionRecord;
use crate::error::{Error, Result};
use crate::nn::params::dot;
use crate::nn::{
    GroupId, Layout, LayoutBuilder, LossKind, Model, ParamKey, ParamSelection, ParamSet, SparseGrad,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Backbone {
    WideDeep,
    CrossNet,
    BiInteractionFM,
}

impl FromStr for Backbone {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "wdl" | "widedeep" | "wide_deep" => Ok(Backbone::WideDeep),
            "dcn" | "crossnet" | "cross" => Ok(Backbone::CrossNet),
            "nfm" | "bifm" | "biinteractionfm" => Ok(Backbone::BiInteractionFM),
            other => Err(Error::InvalidConfig(format!("unknown model {other:?}"))),
        }
    }
}

impl fmt::Display for Backbone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backbone::WideDeep => "wdl",
            Backbone::CrossNet => "dcn",
            Backbone::BiInteractionFM => "nfm",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchDescriptor {
    pub backbone: Backbone,
    pub embedding_dim: usize,
    pub hidden: Vec<usize>,
    pub num_users: usize,
    pub num_items: usize,
    pub head: LossKind,
    /// Number of cross layers; only used by [`Backbone::CrossNet`].
    pub cross_depth: usize,
}

impl ArchDescriptor {
    pub fn new(backbone: Backbone, num_users: usize, num_items: usize) -> Self {
        Self {
            backbone,
            embedding_dim: 64,
            hidden: vec![64, 32],
            num_users,
            num_items,
            head: LossKind::SquaredError,
            cross_depth: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_users == 0 || self.num_items == 0 {
            return Err(Error::InvalidArch(format!(
                "need at least one user and one item, got {} users and {} items",
                self.num_users, self.num_items
            )));
        }
        if self.embedding_dim == 0 {
            return Err(Error::InvalidArch("embedding dim must be >= 1".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidArch("hidden widths must be >= 1".into()));
        }
        if self.backbone == Backbone::CrossNet && self.cross_depth == 0 {
            return Err(Error::InvalidArch("cross depth must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct Dense {
    w: GroupId,
    b: GroupId,
}

/// A built backbone. Parameters live in a separate [`ParamSet`].
#[derive(Clone, Debug)]
pub struct Recommender {
    arch: ArchDescriptor,
    layout: Arc<Layout>,
    user_emb: GroupId,
    item_emb: GroupId,
    /// Per-id scalar weights and bias (wide part or FM linear part).
    linear: Option<Dense>,
    cross: Vec<Dense>,
    hidden: Vec<Dense>,
    last: Dense,
}

pub struct RecTape {
    x0: Vec<f64>,
    /// `acts[0]` is the deep input, `acts[k + 1]` the output of hidden layer k.
    acts: Vec<Vec<f64>>,
    /// Cross tower states `x_0 .. x_L` and the scalars `w_l . x_l`.
    cross_x: Vec<Vec<f64>>,
    cross_s: Vec<f64>,
    feature: Vec<f64>,
}

/// Builds a backbone and its seeded initial parameters.
///
/// Embeddings and weights are drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`
/// (embedding fan-in is the embedding dimension, one-hot linear weights use the
/// number of ids); biases start at zero.
pub fn build_model(arch: ArchDescriptor, seed: u64) -> Result<(Recommender, ParamSet)> {
    let model = Recommender::new(arch)?;
    let params = model.init_params(seed);
    Ok((model, params))
}

impl Recommender {
    pub fn new(arch: ArchDescriptor) -> Result<Self> {
        arch.validate()?;
        let d = arch.embedding_dim;
        let ids = arch.num_users + arch.num_items;
        let mut b = LayoutBuilder::new();
        let user_emb = b.group("user_emb", arch.num_users, d);
        let item_emb = b.group("item_emb", arch.num_items, d);
        let linear = match arch.backbone {
            Backbone::WideDeep => Some(Dense {
                w: b.group("wide_w", ids, 1),
                b: b.group("wide_b", 1, 1),
            }),
            Backbone::BiInteractionFM => Some(Dense {
                w: b.group("lin_w", ids, 1),
                b: b.group("lin_b", 1, 1),
            }),
            Backbone::CrossNet => None,
        };
        let cross = if arch.backbone == Backbone::CrossNet {
            (0..arch.cross_depth)
                .map(|k| Dense {
                    w: b.group(format!("cross_{k}_w"), 1, 2 * d),
                    b: b.group(format!("cross_{k}_b"), 1, 2 * d),
                })
                .collect()
        } else {
            Vec::new()
        };
        let deep_in = match arch.backbone {
            Backbone::BiInteractionFM => d,
            _ => 2 * d,
        };
        let mut fan_in = deep_in;
        let mut hidden = Vec::with_capacity(arch.hidden.len());
        for (k, &width) in arch.hidden.iter().enumerate() {
            hidden.push(Dense {
                w: b.group(format!("dense_{k}_W"), width, fan_in),
                b: b.group(format!("dense_{k}_b"), 1, width),
            });
            fan_in = width;
        }
        let feature_dim = match arch.backbone {
            Backbone::CrossNet => 2 * d + fan_in,
            _ => fan_in,
        };
        let last = Dense {
            w: b.group("dense_last_W", 1, feature_dim),
            b: b.group("dense_last_b", 1, 1),
        };
        Ok(Self {
            arch,
            layout: b.build(),
            user_emb,
            item_emb,
            linear,
            cross,
            hidden,
            last,
        })
    }

    pub fn arch(&self) -> &ArchDescriptor {
        &self.arch
    }

    /// Input dimension of `dense_last`.
    pub fn feature_dim(&self) -> usize {
        self.layout.shape(self.last.w).1
    }

    pub fn init_params(&self, seed: u64) -> ParamSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::zeros(self.layout.clone());
        let d = self.arch.embedding_dim;
        init_uniform(p.get_mut(self.user_emb), d, &mut rng);
        init_uniform(p.get_mut(self.item_emb), d, &mut rng);
        if let Some(lin) = self.linear {
            let ids = self.arch.num_users + self.arch.num_items;
            init_uniform(p.get_mut(lin.w), ids, &mut rng);
        }
        for c in &self.cross {
            init_uniform(p.get_mut(c.w), 2 * d, &mut rng);
        }
        for h in self.hidden.iter().chain(std::iter::once(&self.last)) {
            let fan_in = self.layout.shape(h.w).1;
            init_uniform(p.get_mut(h.w), fan_in, &mut rng);
        }
        p
    }

    /// The four keys a selected per-sample gradient covers for `record`.
    pub fn selected_keys(&self, record: &InteractionRecord) -> [ParamKey; 4] {
        [
            ParamKey::row(self.user_emb, record.user),
            ParamKey::row(self.item_emb, record.item),
            ParamKey::whole(self.last.w),
            ParamKey::whole(self.last.b),
        ]
    }

    fn check_ids(&self, r: &InteractionRecord) -> Result<()> {
        if r.user >= self.arch.num_users {
            return Err(Error::IdOutOfRange {
                kind: "user",
                id: r.user,
                len: self.arch.num_users,
            });
        }
        if r.item >= self.arch.num_items {
            return Err(Error::IdOutOfRange {
                kind: "item",
                id: r.item,
                len: self.arch.num_items,
            });
        }
        Ok(())
    }

    fn linear_term(&self, params: &ParamSet, r: &InteractionRecord) -> f64 {
        match self.linear {
            Some(lin) => {
                let w = params.get(lin.w);
                w.get(r.user, 0)
                    + w.get(self.arch.num_users + r.item, 0)
                    + params.get(lin.b).get(0, 0)
            }
            None => 0.0,
        }
    }
}

impl Model for Recommender {
    type Sample = InteractionRecord;
    type Tape = RecTape;

    fn head(&self) -> LossKind {
        self.arch.head
    }

    fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    fn forward_tape(&self, params: &ParamSet, r: &InteractionRecord) -> Result<(f64, RecTape)> {
        self.check_ids(r)?;
        let u = params.get(self.user_emb).row(r.user);
        let i = params.get(self.item_emb).row(r.item);
        let mut x0 = Vec::with_capacity(u.len() * 2);
        x0.extend_from_slice(u);
        x0.extend_from_slice(i);

        let deep_in = match self.arch.backbone {
            Backbone::BiInteractionFM => bi_interaction(&[u, i])?,
            _ => x0.clone(),
        };
        let mut acts = Vec::with_capacity(self.hidden.len() + 1);
        acts.push(deep_in);
        for layer in &self.hidden {
            let mut out = Vec::new();
            affine(
                params.get(layer.w),
                params.get(layer.b).as_slice(),
                acts.last().expect("non-empty"),
                &mut out,
            );
            relu_in_place(&mut out);
            acts.push(out);
        }

        let mut cross_x = Vec::new();
        let mut cross_s = Vec::new();
        let feature = if self.arch.backbone == Backbone::CrossNet {
            let mut x = x0.clone();
            for c in &self.cross {
                let w = params.get(c.w).as_slice();
                let b = params.get(c.b).as_slice();
                let s = dot(w, &x);
                let next: Vec<f64> = (0..x.len()).map(|j| x0[j] * s + b[j] + x[j]).collect();
                cross_s.push(s);
                cross_x.push(std::mem::replace(&mut x, next));
            }
            let h = acts.last().expect("non-empty");
            let mut f = Vec::with_capacity(x.len() + h.len());
            f.extend_from_slice(&x);
            f.extend_from_slice(h);
            cross_x.push(x);
            f
        } else {
            acts.last().expect("non-empty").clone()
        };

        let pred = dot(params.get(self.last.w).as_slice(), &feature)
            + params.get(self.last.b).get(0, 0)
            + self.linear_term(params, r);
        Ok((
            pred,
            RecTape {
                x0,
                acts,
                cross_x,
                cross_s,
                feature,
            },
        ))
    }

    fn backward(
        &self,
        params: &ParamSet,
        r: &InteractionRecord,
        tape: &RecTape,
        upstream: f64,
        selection: ParamSelection,
        grad: &mut SparseGrad,
    ) {
        let full = selection == ParamSelection::Full;
        let d = self.arch.embedding_dim;

        grad.add_slice(ParamKey::whole(self.last.w), &tape.feature, upstream);
        grad.slot(ParamKey::whole(self.last.b), 1)[0] += upstream;

        let w_last = params.get(self.last.w).as_slice();
        let (d_cross_out, mut d_h): (Vec<f64>, Vec<f64>) = match self.arch.backbone {
            Backbone::CrossNet => (
                w_last[..2 * d].iter().map(|w| upstream * w).collect(),
                w_last[2 * d..].iter().map(|w| upstream * w).collect(),
            ),
            _ => (Vec::new(), w_last.iter().map(|w| upstream * w).collect()),
        };

        for (k, layer) in self.hidden.iter().enumerate().rev() {
            let input = &tape.acts[k];
            let out = &tape.acts[k + 1];
            let dz: Vec<f64> = d_h
                .iter()
                .zip(out)
                .map(|(&g, &o)| if o > 0.0 { g } else { 0.0 })
                .collect();
            let w = params.get(layer.w);
            if full {
                let gw = grad.slot(ParamKey::whole(layer.w), w.rows() * w.cols());
                for (row, &g) in dz.iter().enumerate() {
                    if g != 0.0 {
                        let dst = &mut gw[row * w.cols()..(row + 1) * w.cols()];
                        for (dv, &x) in dst.iter_mut().zip(input) {
                            *dv += g * x;
                        }
                    }
                }
                let gb = grad.slot(ParamKey::whole(layer.b), w.rows());
                for (dv, &g) in gb.iter_mut().zip(&dz) {
                    *dv += g;
                }
            }
            let mut d_in = vec![0.0; input.len()];
            for (row, &g) in dz.iter().enumerate() {
                if g != 0.0 {
                    for (dv, &wv) in d_in.iter_mut().zip(w.row(row)) {
                        *dv += g * wv;
                    }
                }
            }
            d_h = d_in;
        }

        let u = params.get(self.user_emb).row(r.user);
        let i = params.get(self.item_emb).row(r.item);
        let mut d_x0 = match self.arch.backbone {
            // d/du of u (.) i is i, and vice versa.
            Backbone::BiInteractionFM => {
                let mut v = Vec::with_capacity(2 * d);
                v.extend(d_h.iter().zip(i).map(|(g, x)| g * x));
                v.extend(d_h.iter().zip(u).map(|(g, x)| g * x));
                v
            }
            _ => d_h,
        };

        if self.arch.backbone == Backbone::CrossNet {
            let x0 = &tape.x0;
            let mut delta = d_cross_out;
            for (l, c) in self.cross.iter().enumerate().rev() {
                let x_l = &tape.cross_x[l];
                let s = tape.cross_s[l];
                let ds = dot(&delta, x0);
                if full {
                    grad.add_slice(ParamKey::whole(c.b), &delta, 1.0);
                    grad.add_slice(ParamKey::whole(c.w), x_l, ds);
                }
                for (g, &dv) in d_x0.iter_mut().zip(&delta) {
                    *g += dv * s;
                }
                let w = params.get(c.w).as_slice();
                for (dv, &wv) in delta.iter_mut().zip(w) {
                    *dv += ds * wv;
                }
            }
            for (g, dv) in d_x0.iter_mut().zip(&delta) {
                *g += dv;
            }
        }

        if full {
            if let Some(lin) = self.linear {
                grad.slot(ParamKey::row(lin.w, r.user), 1)[0] += upstream;
                grad.slot(ParamKey::row(lin.w, self.arch.num_users + r.item), 1)[0] += upstream;
                grad.slot(ParamKey::whole(lin.b), 1)[0] += upstream;
            }
        }
        grad.add_slice(ParamKey::row(self.user_emb, r.user), &d_x0[..d], 1.0);
        grad.add_slice(ParamKey::row(self.item_emb, r.item), &d_x0[d..], 1.0);
    }

    fn feature(&self, params: &ParamSet, r: &InteractionRecord) -> Result<Vec<f64>> {
        self.forward_tape(params, r).map(|(_, t)| t.feature)
    }
}
