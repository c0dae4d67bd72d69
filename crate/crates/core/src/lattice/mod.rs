//! Block decomposition of the normal lattice and 2x2-block lattice
//! matrices, with the projections, norms, truncations and block spectra the
//! homological solver and the non-resonance checks are built on.

mod matrix;
mod normal_form;

pub use matrix::LatticeMatrix;
pub use normal_form::{AssumptionConstants, AssumptionMargin, AssumptionReport, NormalForm};

use std::sync::Arc;

use serde::Serialize;

use crate::algebra::LatticeConfig;
use crate::Scalar;

/// Partition of the normal box into equivalence blocks: two sites share a
/// block iff they are chained by steps preserving |a| exactly and moving by
/// at most `delta` in Euclidean distance.
#[derive(Clone, Debug)]
pub struct BlockDecomposition<S: Scalar> {
    pub delta: S,
    /// Site indices per block, each sorted; blocks ordered by smallest site.
    pub blocks: Vec<Vec<usize>>,
    /// Block id per normal-site index.
    pub block_of: Vec<usize>,
    /// Max Euclidean diameter over blocks.
    pub d_delta: S,
    /// Squared integer norm shared by each block's sites.
    pub norm2: Vec<i64>,
    /// Whether a chain step could leave the finite box (the block may be
    /// truncated relative to the infinite lattice).
    pub boundary_touching: Vec<bool>,
}

/// Union-find closure of the pre-relation |a| = |b|, |a - b| <= delta,
/// restricted to the box.
pub fn build_blocks<S: Scalar>(cfg: &Arc<LatticeConfig<S>>, delta: S) -> BlockDecomposition<S> {
    let sites = &cfg.normal_sites;
    let n = sites.len();
    let delta2 = (delta * delta).to_f64_lossy();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    // Group by exact squared norm first; the pre-relation only links equal
    // shells.
    let mut by_norm: std::collections::BTreeMap<i64, Vec<usize>> = Default::default();
    for (i, s) in sites.iter().enumerate() {
        by_norm.entry(s.norm2()).or_default().push(i);
    }
    for (_, shell) in by_norm.iter() {
        for (pos, &i) in shell.iter().enumerate() {
            for &j in shell[pos + 1..].iter() {
                if (sites[i].dist2(&sites[j]) as f64) <= delta2 {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        parent[ri.max(rj)] = ri.min(rj);
                    }
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let mut blocks: Vec<Vec<usize>> = groups.into_values().collect();
    for b in blocks.iter_mut() {
        b.sort_unstable();
    }
    blocks.sort_by_key(|b| b[0]);
    let mut block_of = vec![0usize; n];
    let mut norm2 = Vec::with_capacity(blocks.len());
    let mut d_delta2: i64 = 0;
    let mut boundary = Vec::with_capacity(blocks.len());
    let r_box = cfg.box_radius;
    for (bid, b) in blocks.iter().enumerate() {
        for &i in b {
            block_of[i] = bid;
        }
        norm2.push(sites[b[0]].norm2());
        let mut diam2: i64 = 0;
        for (pos, &i) in b.iter().enumerate() {
            for &j in b[pos + 1..].iter() {
                diam2 = diam2.max(sites[i].dist2(&sites[j]));
            }
        }
        d_delta2 = d_delta2.max(diam2);
        // A block touches the boundary when some same-norm site within
        // reach of a chain step lies outside the box (and off the
        // tangential set, where it would still belong to the infinite
        // normal lattice).
        let mut touches = false;
        'sitescan: for &i in b {
            let a = &sites[i];
            let reach = delta.to_f64_lossy().floor() as i64;
            if reach <= 0 {
                break;
            }
            let mut probe = vec![0i64; cfg.dim];
            if scan_exits_box(a, reach, delta2, r_box, cfg, &mut probe, 0) {
                touches = true;
                break 'sitescan;
            }
        }
        boundary.push(touches);
    }
    BlockDecomposition {
        delta,
        blocks,
        block_of,
        d_delta: S::sc((d_delta2 as f64).sqrt()),
        norm2,
        boundary_touching: boundary,
    }
}

fn scan_exits_box<S: Scalar>(
    a: &crate::algebra::Site,
    reach: i64,
    delta2: f64,
    r_box: i16,
    cfg: &LatticeConfig<S>,
    probe: &mut Vec<i64>,
    axis: usize,
) -> bool {
    if axis == probe.len() {
        let b = crate::algebra::Site(
            a.0.iter()
                .zip(probe.iter())
                .map(|(&c, &d)| (c as i64 + d) as i16)
                .collect(),
        );
        let step2: i64 = probe.iter().map(|&d| d * d).sum();
        if step2 == 0 || step2 as f64 > delta2 {
            return false;
        }
        if b.norm2() != a.norm2() {
            return false;
        }
        let outside = b.sup_norm() > r_box && cfg.tangential_index_of(&b).is_none();
        return outside;
    }
    for d in -reach..=reach {
        probe[axis] = d;
        if scan_exits_box(a, reach, delta2, r_box, cfg, probe, axis + 1) {
            return true;
        }
    }
    probe[axis] = 0;
    false
}

impl<S: Scalar> BlockDecomposition<S> {
    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Min-over-sites Euclidean distance between two blocks.
    pub fn block_distance(&self, cfg: &LatticeConfig<S>, a: usize, b: usize) -> S {
        let mut best = i64::MAX;
        for &i in &self.blocks[a] {
            for &j in &self.blocks[b] {
                best = best.min(cfg.normal_sites[i].dist2(&cfg.normal_sites[j]));
            }
        }
        S::sc((best as f64).sqrt())
    }

    /// JSON report: per block sites, shared |a|^2, diameter, boundary flag.
    pub fn report_json(&self, cfg: &LatticeConfig<S>) -> String {
        #[derive(Serialize)]
        struct BlockRow {
            sites: Vec<String>,
            norm2: i64,
            diameter: f64,
            boundary_touching: bool,
        }
        let rows: Vec<BlockRow> = self
            .blocks
            .iter()
            .enumerate()
            .map(|(bid, b)| {
                let mut diam2 = 0i64;
                for (pos, &i) in b.iter().enumerate() {
                    for &j in b[pos + 1..].iter() {
                        diam2 = diam2.max(cfg.normal_sites[i].dist2(&cfg.normal_sites[j]));
                    }
                }
                BlockRow {
                    sites: b.iter().map(|&i| cfg.normal_sites[i].to_string()).collect(),
                    norm2: self.norm2[bid],
                    diameter: (diam2 as f64).sqrt(),
                    boundary_touching: self.boundary_touching[bid],
                }
            })
            .collect();
        serde_json::to_string_pretty(&rows).expect("serializable")
    }
}
