//! The four layer types of an interaction block, plus the linear and gated
//! building blocks they are made of.
//!
//! Layers are layouts: they own [`ParamId`]s registered at construction and
//! are applied to a tape together with the bound parameter variables. Vector
//! features only ever pass through channel-mixing maps without bias, norms,
//! inner products, per-channel gates and sums, which is what makes every
//! layer O(3)-equivariant.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::featurize::Features;
use crate::params::{Init, ParamId, ParamRegistry};
use crate::tensor::{Real, Tape, TensorError, Var};

type Res = Result<Var, TensorError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    None,
    Silu,
    Sigmoid,
}

/// Which endpoint's vector state a directed edge message carries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeVectorSource {
    #[default]
    Source,
    Destination,
}

/// `act(x·W + b)` on scalar features.
#[derive(Clone, Debug)]
pub struct Dense {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub act: Activation,
}

impl Dense {
    pub fn new(reg: &mut ParamRegistry, name: &str, n_in: usize, n_out: usize, bias: bool, act: Activation) -> Self {
        let gain = if act == Activation::Silu { 2.0f64.sqrt() } else { 1.0 };
        let w = reg.add(format!("{name}.w"), &[n_in, n_out], Init::Scaled { fan_in: n_in, gain });
        let b = bias.then(|| reg.add(format!("{name}.b"), &[n_out], Init::Zeros));
        Self { w, b, act }
    }

    pub fn apply<T: Real>(&self, tape: &mut Tape<T>, p: &[Var], x: Var) -> Res {
        let y = tape.linear(x, p[self.w.0], self.b.map(|b| p[b.0]))?;
        Ok(match self.act {
            Activation::None => y,
            Activation::Silu => tape.silu(y),
            Activation::Sigmoid => tape.sigmoid(y),
        })
    }
}

/// Channel mixing of vector features `[n, in, 3] -> [n, out, 3]`; no bias and
/// no activation by construction.
#[derive(Clone, Debug)]
pub struct VecDense {
    pub w: ParamId,
}

impl VecDense {
    pub fn new(reg: &mut ParamRegistry, name: &str, n_in: usize, n_out: usize) -> Self {
        let w = reg.add(format!("{name}.w"), &[n_in, n_out], Init::Scaled { fan_in: n_in, gain: 1.0 });
        Self { w }
    }

    pub fn apply<T: Real>(&self, tape: &mut Tape<T>, p: &[Var], v: Var) -> Res {
        tape.vec_linear(v, p[self.w.0])
    }
}

/// Two-layer perceptron multiplied by an independently parameterized
/// sigmoid-gated twin.
#[derive(Clone, Debug)]
pub struct GatedMlp {
    main: [Dense; 2],
    gate: [Dense; 2],
}

impl GatedMlp {
    pub fn new(reg: &mut ParamRegistry, name: &str, n_in: usize, hidden: usize, n_out: usize) -> Self {
        let main = [
            Dense::new(reg, &format!("{name}.main0"), n_in, hidden, true, Activation::Silu),
            Dense::new(reg, &format!("{name}.main1"), hidden, n_out, false, Activation::None),
        ];
        let gate = [
            Dense::new(reg, &format!("{name}.gate0"), n_in, hidden, true, Activation::Silu),
            Dense::new(reg, &format!("{name}.gate1"), hidden, n_out, true, Activation::Sigmoid),
        ];
        Self { main, gate }
    }

    pub fn apply<T: Real>(&self, tape: &mut Tape<T>, p: &[Var], x: Var) -> Res {
        let m = self.main[0].apply(tape, p, x)?;
        let m = self.main[1].apply(tape, p, m)?;
        let g = self.gate[0].apply(tape, p, x)?;
        let g = self.gate[1].apply(tape, p, g)?;
        tape.mul(m, g)
    }
}

/// Connectivity for one updating layer: messages flow `src -> dst`.
#[derive(Clone, Debug)]
pub struct Incidence<'a> {
    pub src: &'a Arc<[usize]>,
    pub dst: &'a Arc<[usize]>,
    pub n_nodes: usize,
}

/// Output of an updating layer.
#[derive(Clone, Copy, Debug)]
pub struct Updated {
    /// Per-node sums of incoming messages, at node width.
    pub aggregate: Features,
    /// New edge state, at edge width.
    pub edges: Features,
}

/// Edge fusion and aggregation, usable on G (atoms, bonds) and on L[G]
/// (bonds, triplets). When the edge width is narrower than the node width,
/// edge state is lifted to node width for messaging and projected back for
/// storage.
#[derive(Clone, Debug)]
pub struct UpdatingLayer {
    phi_e1: Dense,
    gmlp: GatedMlp,
    phi_e2: Dense,
    phi_e3: Dense,
    lift_v: Option<VecDense>,
    store: Option<(Dense, VecDense)>,
    vector_source: EdgeVectorSource,
}

impl UpdatingLayer {
    pub fn new(
        reg: &mut ParamRegistry,
        name: &str,
        node_width: usize,
        edge_width: usize,
        vector_source: EdgeVectorSource,
    ) -> Self {
        let w = node_width;
        let phi_e1 = Dense::new(reg, &format!("{name}.phi_e1"), edge_width, 2 * w, false, Activation::None);
        let gmlp = GatedMlp::new(reg, &format!("{name}.gmlp"), 2 * w, w, w);
        let phi_e2 = Dense::new(reg, &format!("{name}.phi_e2"), w, w, false, Activation::None);
        let phi_e3 = Dense::new(reg, &format!("{name}.phi_e3"), w, w, false, Activation::None);
        let (lift_v, store) = if edge_width == w {
            (None, None)
        } else {
            (
                Some(VecDense::new(reg, &format!("{name}.lift_v"), edge_width, w)),
                Some((
                    Dense::new(reg, &format!("{name}.store_s"), w, edge_width, false, Activation::None),
                    VecDense::new(reg, &format!("{name}.store_v"), w, edge_width),
                )),
            )
        };
        Self {
            phi_e1,
            gmlp,
            phi_e2,
            phi_e3,
            lift_v,
            store,
            vector_source,
        }
    }

    pub fn apply<T: Real>(
        &self,
        tape: &mut Tape<T>,
        p: &[Var],
        nodes: Features,
        edges: Features,
        inc: &Incidence<'_>,
    ) -> Result<Updated, TensorError> {
        let hi = tape.gather(nodes.s, inc.dst)?;
        let hj = tape.gather(nodes.s, inc.src)?;
        let hij = tape.concat(hi, hj)?;
        let fe = self.phi_e1.apply(tape, p, edges.s)?;
        let x = tape.mul(hij, fe)?;
        let m = self.gmlp.apply(tape, p, x)?;
        let agg_s = tape.scatter_add(m, inc.dst, inc.n_nodes)?;

        let carrier = match self.vector_source {
            EdgeVectorSource::Source => inc.src,
            EdgeVectorSource::Destination => inc.dst,
        };
        let hv = tape.gather(nodes.v, carrier)?;
        let g2 = self.phi_e2.apply(tape, p, m)?;
        let a = tape.mul(hv, g2)?;
        let ev = match &self.lift_v {
            Some(l) => l.apply(tape, p, edges.v)?,
            None => edges.v,
        };
        let g3 = self.phi_e3.apply(tape, p, m)?;
        let b = tape.mul(ev, g3)?;
        let mv = tape.add(a, b)?;
        let agg_v = tape.scatter_add(mv, inc.dst, inc.n_nodes)?;

        let edges = match &self.store {
            Some((s, v)) => Features {
                s: s.apply(tape, p, m)?,
                v: v.apply(tape, p, mv)?,
            },
            None => Features { s: m, v: mv },
        };
        Ok(Updated {
            aggregate: Features { s: agg_s, v: agg_v },
            edges,
        })
    }
}

/// Node-level exchange between scalar and vector channels.
#[derive(Clone, Debug)]
pub struct MixingLayer {
    phi1: VecDense,
    phi2: VecDense,
    phi3: Dense,
    phi4: Dense,
    phi5: VecDense,
    phi6: Dense,
    phi7: VecDense,
    phi8: VecDense,
}

impl MixingLayer {
    pub fn new(reg: &mut ParamRegistry, name: &str, d: usize) -> Self {
        let v = |reg: &mut ParamRegistry, k: &str| VecDense::new(reg, &format!("{name}.{k}"), d, d);
        Self {
            phi1: v(reg, "phi1"),
            phi2: v(reg, "phi2"),
            phi3: Dense::new(reg, &format!("{name}.phi3"), d, d, true, Activation::Silu),
            phi4: Dense::new(reg, &format!("{name}.phi4"), d, d, true, Activation::Silu),
            phi5: v(reg, "phi5"),
            phi6: Dense::new(reg, &format!("{name}.phi6"), 2 * d, d, false, Activation::None),
            phi7: v(reg, "phi7"),
            phi8: v(reg, "phi8"),
        }
    }

    pub fn apply<T: Real>(&self, tape: &mut Tape<T>, p: &[Var], x: Features) -> Result<Features, TensorError> {
        let a = self.phi1.apply(tape, p, x.v)?;
        let b = self.phi2.apply(tape, p, x.v)?;
        let inner = tape.channel_inner(a, b)?;
        let g = self.phi3.apply(tape, p, x.s)?;
        let t = tape.mul(inner, g)?;
        let r = self.phi4.apply(tape, p, x.s)?;
        let s = tape.add(t, r)?;

        let n5 = self.phi5.apply(tape, p, x.v)?;
        let n5 = tape.channel_norm(n5)?;
        let cat = tape.concat(n5, x.s)?;
        let gate = self.phi6.apply(tape, p, cat)?;
        let v7 = self.phi7.apply(tape, p, x.v)?;
        let gv = tape.mul(v7, gate)?;
        let v8 = self.phi8.apply(tape, p, x.v)?;
        let v = tape.add(gv, v8)?;
        Ok(Features { s, v })
    }
}

/// Lighter mixing for bond (and triplet) features.
#[derive(Clone, Debug)]
pub struct SimpleMixingLayer {
    gmlp: GatedMlp,
    phi_e4: VecDense,
}

impl SimpleMixingLayer {
    pub fn new(reg: &mut ParamRegistry, name: &str, d: usize) -> Self {
        Self {
            gmlp: GatedMlp::new(reg, &format!("{name}.gmlp"), 2 * d, d, d),
            phi_e4: VecDense::new(reg, &format!("{name}.phi_e4"), d, d),
        }
    }

    pub fn apply<T: Real>(&self, tape: &mut Tape<T>, p: &[Var], x: Features) -> Result<Features, TensorError> {
        let n = tape.channel_norm(x.v)?;
        let cat = tape.concat(x.s, n)?;
        Ok(Features {
            s: self.gmlp.apply(tape, p, cat)?,
            v: self.phi_e4.apply(tape, p, x.v)?,
        })
    }
}

/// Gated equivariant readout to `out_s` scalar and `out_v` vector channels.
#[derive(Clone, Debug)]
pub struct GatedReadout {
    phi9: VecDense,
    phi10: VecDense,
    gmlp_v: GatedMlp,
    gmlp_s: GatedMlp,
}

impl GatedReadout {
    pub fn new(reg: &mut ParamRegistry, name: &str, d: usize, out_s: usize, out_v: usize) -> Self {
        Self {
            phi9: VecDense::new(reg, &format!("{name}.phi9"), d, out_v),
            phi10: VecDense::new(reg, &format!("{name}.phi10"), d, d),
            gmlp_v: GatedMlp::new(reg, &format!("{name}.gmlp_v"), 2 * d, d, out_v),
            gmlp_s: GatedMlp::new(reg, &format!("{name}.gmlp_s"), 2 * d, d, out_s),
        }
    }

    pub fn apply<T: Real>(&self, tape: &mut Tape<T>, p: &[Var], x: Features) -> Result<Features, TensorError> {
        let n = self.phi10.apply(tape, p, x.v)?;
        let n = tape.channel_norm(n)?;
        let cat = tape.concat(x.s, n)?;
        let gate = self.gmlp_v.apply(tape, p, cat)?;
        let v9 = self.phi9.apply(tape, p, x.v)?;
        let v = tape.mul(v9, gate)?;
        let s = self.gmlp_s.apply(tape, p, cat)?;
        Ok(Features { s, v })
    }
}
