use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{AttributeKind, TableSchema};
use crate::tensor::Tensor;

/// Value map of one attribute.
///
/// A categorical table has `cardinality + 2` rows: the categories, then the
/// missing-value row, then the mask token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ValueMap<T> {
    Categorical { table: T },
    Continuous { scale: T, bias: T, mask: T },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingParams<T> {
    pub values: Vec<ValueMap<T>>,
    /// `[d, e]`
    pub position: T,
    /// `[3, e]`, rows ordered categorical, continuous, target.
    pub types: T,
}

/// One H_s network: `W_ξ, W_X` are `[h, d·e]`, `W_S` is `[d·e, h]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleHead<T> {
    pub w_xi: T,
    pub w_x: T,
    pub w_s: T,
}

/// One H_f network: `W_Ξ, W_Y` are `[h, e]`, `W_F` is `[e, h]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureHead<T> {
    pub w_xi: T,
    pub w_y: T,
    pub w_f: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockParams<T> {
    pub sample_heads: Vec<SampleHead<T>>,
    /// `[d·e, M·d·e]`
    pub sample_combine: T,
    pub feature_heads: Vec<FeatureHead<T>>,
    /// `[e, M·e]`
    pub feature_combine: T,
}

/// `weight` is `[out, e]`, `bias` is `[out]`; `out` is the cardinality of a
/// categorical attribute and 1 for a continuous one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputMap<T> {
    pub weight: T,
    pub bias: T,
}

/// Every learnable tensor of a Hopular model. Instantiated with `Tensor` for
/// storage and with `NodeId` once bound to a tape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params<T> {
    pub embedding: EmbeddingParams<T>,
    pub blocks: Vec<BlockParams<T>>,
    pub summary: Vec<OutputMap<T>>,
}

pub const TYPE_CATEGORICAL: usize = 0;
pub const TYPE_CONTINUOUS: usize = 1;
pub const TYPE_TARGET: usize = 2;

impl<T> Params<T> {
    /// Applies `f` to every tensor in a fixed canonical order, passing its name.
    pub fn try_map<U, E>(
        &self,
        f: &mut impl FnMut(&str, &T) -> Result<U, E>,
    ) -> Result<Params<U>, E> {
        let e = &self.embedding;
        let mut values = Vec::with_capacity(e.values.len());
        for (j, v) in e.values.iter().enumerate() {
            values.push(match v {
                ValueMap::Categorical { table } => ValueMap::Categorical {
                    table: f(&format!("embedding.value[{j}].table"), table)?,
                },
                ValueMap::Continuous { scale, bias, mask } => ValueMap::Continuous {
                    scale: f(&format!("embedding.value[{j}].scale"), scale)?,
                    bias: f(&format!("embedding.value[{j}].bias"), bias)?,
                    mask: f(&format!("embedding.value[{j}].mask"), mask)?,
                },
            });
        }
        let embedding = EmbeddingParams {
            values,
            position: f("embedding.position", &e.position)?,
            types: f("embedding.type", &e.types)?,
        };
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for (l, b) in self.blocks.iter().enumerate() {
            let mut sample_heads = Vec::with_capacity(b.sample_heads.len());
            for (m, h) in b.sample_heads.iter().enumerate() {
                sample_heads.push(SampleHead {
                    w_xi: f(&format!("block[{l}].hs[{m}].w_xi"), &h.w_xi)?,
                    w_x: f(&format!("block[{l}].hs[{m}].w_x"), &h.w_x)?,
                    w_s: f(&format!("block[{l}].hs[{m}].w_s"), &h.w_s)?,
                });
            }
            let sample_combine = f(&format!("block[{l}].hs.w_g"), &b.sample_combine)?;
            let mut feature_heads = Vec::with_capacity(b.feature_heads.len());
            for (m, h) in b.feature_heads.iter().enumerate() {
                feature_heads.push(FeatureHead {
                    w_xi: f(&format!("block[{l}].hf[{m}].w_xi"), &h.w_xi)?,
                    w_y: f(&format!("block[{l}].hf[{m}].w_y"), &h.w_y)?,
                    w_f: f(&format!("block[{l}].hf[{m}].w_f"), &h.w_f)?,
                });
            }
            let feature_combine = f(&format!("block[{l}].hf.w_g"), &b.feature_combine)?;
            blocks.push(BlockParams {
                sample_heads,
                sample_combine,
                feature_heads,
                feature_combine,
            });
        }
        let mut summary = Vec::with_capacity(self.summary.len());
        for (j, s) in self.summary.iter().enumerate() {
            summary.push(OutputMap {
                weight: f(&format!("summary[{j}].weight"), &s.weight)?,
                bias: f(&format!("summary[{j}].bias"), &s.bias)?,
            });
        }
        Ok(Params {
            embedding,
            blocks,
            summary,
        })
    }

    pub fn map<U>(&self, mut f: impl FnMut(&str, &T) -> U) -> Params<U> {
        self.try_map(&mut |n, t| Ok::<_, std::convert::Infallible>(f(n, t)))
            .unwrap_or_else(|never| match never {})
    }

    /// Tensors in canonical order.
    pub fn iter(&self) -> Vec<&T> {
        let mut out = Vec::new();
        let e = &self.embedding;
        for v in &e.values {
            match v {
                ValueMap::Categorical { table } => out.push(table),
                ValueMap::Continuous { scale, bias, mask } => out.extend([scale, bias, mask]),
            }
        }
        out.extend([&e.position, &e.types]);
        for b in &self.blocks {
            for h in &b.sample_heads {
                out.extend([&h.w_xi, &h.w_x, &h.w_s]);
            }
            out.push(&b.sample_combine);
            for h in &b.feature_heads {
                out.extend([&h.w_xi, &h.w_y, &h.w_f]);
            }
            out.push(&b.feature_combine);
        }
        for s in &self.summary {
            out.extend([&s.weight, &s.bias]);
        }
        out
    }

    /// Mutable tensors in the same order as [`Self::iter`].
    pub fn iter_mut(&mut self) -> Vec<&mut T> {
        let mut out = Vec::new();
        let e = &mut self.embedding;
        for v in &mut e.values {
            match v {
                ValueMap::Categorical { table } => out.push(table),
                ValueMap::Continuous { scale, bias, mask } => out.extend([scale, bias, mask]),
            }
        }
        out.extend([&mut e.position, &mut e.types]);
        for b in &mut self.blocks {
            for h in &mut b.sample_heads {
                out.extend([&mut h.w_xi, &mut h.w_x, &mut h.w_s]);
            }
            out.push(&mut b.sample_combine);
            for h in &mut b.feature_heads {
                out.extend([&mut h.w_xi, &mut h.w_y, &mut h.w_f]);
            }
            out.push(&mut b.feature_combine);
        }
        for s in &mut self.summary {
            out.extend([&mut s.weight, &mut s.bias]);
        }
        out
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.map(|n, _| names.push(n.to_string()));
        names
    }
}

impl Params<Tensor> {
    /// Glorot-uniform initialization of every tensor; biases start at zero.
    pub fn init<R: Rng + ?Sized>(
        schema: &TableSchema,
        e: usize,
        blocks: usize,
        heads: usize,
        h: usize,
        rng: &mut R,
    ) -> Self {
        let d = schema.len();
        let de = d * e;
        let values = schema
            .attributes()
            .iter()
            .map(|a| match a.kind {
                AttributeKind::Categorical { cardinality } => ValueMap::Categorical {
                    table: Tensor::glorot(&[cardinality + 2, e], cardinality + 2, e, rng),
                },
                AttributeKind::Continuous => ValueMap::Continuous {
                    scale: Tensor::glorot(&[1, e], 1, e, rng),
                    bias: Tensor::glorot(&[1, e], 1, e, rng),
                    mask: Tensor::glorot(&[1, e], 1, e, rng),
                },
            })
            .collect();
        let embedding = EmbeddingParams {
            values,
            position: Tensor::glorot(&[d, e], d, e, rng),
            types: Tensor::glorot(&[3, e], 3, e, rng),
        };
        let blocks = (0..blocks)
            .map(|_| BlockParams {
                sample_heads: (0..heads)
                    .map(|_| SampleHead {
                        w_xi: Tensor::glorot(&[h, de], de, h, rng),
                        w_x: Tensor::glorot(&[h, de], de, h, rng),
                        w_s: Tensor::glorot(&[de, h], h, de, rng),
                    })
                    .collect(),
                sample_combine: Tensor::glorot(&[de, heads * de], heads * de, de, rng),
                feature_heads: (0..heads)
                    .map(|_| FeatureHead {
                        w_xi: Tensor::glorot(&[h, e], e, h, rng),
                        w_y: Tensor::glorot(&[h, e], e, h, rng),
                        w_f: Tensor::glorot(&[e, h], h, e, rng),
                    })
                    .collect(),
                feature_combine: Tensor::glorot(&[e, heads * e], heads * e, e, rng),
            })
            .collect();
        let summary = schema
            .attributes()
            .iter()
            .map(|a| {
                let out = a.cardinality().unwrap_or(1);
                OutputMap {
                    weight: Tensor::glorot(&[out, e], e, out, rng),
                    bias: Tensor::zeros(&[out]),
                }
            })
            .collect();
        Self {
            embedding,
            blocks,
            summary,
        }
    }

    pub fn count(&self) -> usize {
        self.iter().iter().map(|t| t.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orders_agree() {
        let schema =
            TableSchema::parse("a,continuous,false\nb,categorical,3,false\ny,categorical,2,true\n")
                .unwrap();
        let mut p = Params::init(&schema, 4, 2, 3, 4, &mut ChaCha8Rng::seed_from_u64(0));
        let names = p.names();
        let shapes: Vec<Vec<usize>> = p.iter().iter().map(|t| t.shape().to_vec()).collect();
        let mapped = p.map(|_, t| t.shape().to_vec());
        assert_eq!(
            mapped.iter().into_iter().cloned().collect::<Vec<_>>(),
            shapes
        );
        assert_eq!(names.len(), shapes.len());
        assert_eq!(p.iter_mut().len(), shapes.len());
        assert_eq!(names[0], "embedding.value[0].scale");
        assert_eq!(p.embedding.position.shape(), &[3, 4]);
        assert_eq!(p.blocks[1].sample_combine.shape(), &[12, 36]);
        assert_eq!(p.summary[1].weight.shape(), &[3, 4]);
    }
}
