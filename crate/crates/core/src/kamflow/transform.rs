//! Application of the accumulated conjugation to phase-space points: each
//! generator's time-1 flow acts through Lie series of the coordinate
//! functions, cached per generator.

use num_complex::Complex;

use super::{lie_transform, KamResult};
use crate::algebra::{DomainRadii, MultiIndex, TfPoly, ZetaComponent};
use crate::error::Result;
use crate::Scalar;

/// A real phase-space point (angles, actions, normal pairs).
#[derive(Clone, Debug)]
pub struct PhasePoint<S> {
    pub phi: Vec<S>,
    pub r: Vec<S>,
    pub zeta: Vec<(S, S)>,
}

struct FlowMap<S: Scalar> {
    /// Transformed e^{i phi_a} per tangential site.
    exp_phi: Vec<TfPoly<S>>,
    r: Vec<TfPoly<S>>,
    xi: Vec<TfPoly<S>>,
    eta: Vec<TfPoly<S>>,
}

/// The transformed coordinate functions of every generator, in application
/// order (last generator first).
pub struct TransformCache<S: Scalar> {
    maps: Vec<FlowMap<S>>,
}

impl<S: Scalar> KamResult<S> {
    /// Build the coordinate flow maps of the stored conjugation.
    pub fn transform_cache(
        &self,
        radii: &DomainRadii<S>,
        lie_tol: S,
        lie_n_max: usize,
        prune: S,
    ) -> Result<TransformCache<S>> {
        let lattice = self.f_inf.lattice().clone();
        let caps = self.f_inf.caps();
        let n_t = lattice.n_tangential();
        let l = lattice.n_normal();
        let mut maps = Vec::new();
        // The conjugation is Phi_0 after Phi_1 after ...; a final-domain
        // point passes through the last generator first.
        for s in self.generators.iter().rev() {
            let flow = |coord: TfPoly<S>| -> Result<TfPoly<S>> {
                Ok(lie_transform(&coord, s, radii, lie_tol, lie_n_max, prune)?.0)
            };
            let mut exp_phi = Vec::with_capacity(n_t);
            let mut r_polys = Vec::with_capacity(n_t);
            for a in 0..n_t {
                let mut e = TfPoly::zero(lattice.clone(), caps);
                let mut k: crate::algebra::KVec = smallvec::smallvec![0; n_t];
                k[a] = 1;
                e.insert_checked(MultiIndex::fourier(k, n_t), Complex::new(S::one(), S::zero()))?;
                exp_phi.push(flow(e)?);
                let mut rp = TfPoly::zero(lattice.clone(), caps);
                rp.insert_checked(MultiIndex::action(a, n_t), Complex::new(S::one(), S::zero()))?;
                r_polys.push(flow(rp)?);
            }
            let mut xi = Vec::with_capacity(l);
            let mut eta = Vec::with_capacity(l);
            for site in 0..l {
                for (comp, store) in [(ZetaComponent::Xi, &mut xi), (ZetaComponent::Eta, &mut eta)]
                {
                    let slot = lattice.slot(site, comp);
                    let mut zp = TfPoly::zero(lattice.clone(), caps);
                    zp.insert_checked(
                        MultiIndex::zeta(slot, n_t),
                        Complex::new(S::one(), S::zero()),
                    )?;
                    store.push(flow(zp)?);
                }
            }
            maps.push(FlowMap {
                exp_phi,
                r: r_polys,
                xi,
                eta,
            });
        }
        Ok(TransformCache { maps })
    }
}

impl<S: Scalar> TransformCache<S> {
    pub fn is_identity(&self) -> bool {
        self.maps.is_empty()
    }

    /// Apply the cached conjugation to a point.
    pub fn apply(&self, p: &PhasePoint<S>) -> PhasePoint<S> {
        let mut cur = p.clone();
        for map in self.maps.iter() {
            let mut next = PhasePoint {
                phi: Vec::with_capacity(cur.phi.len()),
                r: Vec::with_capacity(cur.r.len()),
                zeta: Vec::with_capacity(cur.zeta.len()),
            };
            for e in map.exp_phi.iter() {
                let v = e.eval(&cur.phi, &cur.r, &cur.zeta);
                next.phi.push(v.im.atan2(v.re));
            }
            for rp in map.r.iter() {
                next.r.push(rp.eval(&cur.phi, &cur.r, &cur.zeta).re);
            }
            for (xp, ep) in map.xi.iter().zip(map.eta.iter()) {
                let x = xp.eval(&cur.phi, &cur.r, &cur.zeta).re;
                let e = ep.eval(&cur.phi, &cur.r, &cur.zeta).re;
                next.zeta.push((x, e));
            }
            cur = next;
        }
        cur
    }
}
