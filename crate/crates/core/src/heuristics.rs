//! Neighborhood-overlap link scores: the classic similarity baselines.

use crate::error::{Error, Result};
use crate::graph::GraphView;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HeuristicKind {
    CommonNeighbors,
    AdamicAdar,
    ResourceAllocation,
    Jaccard,
    PreferentialAttachment,
}

impl HeuristicKind {
    pub const ALL: [HeuristicKind; 5] = [
        HeuristicKind::CommonNeighbors,
        HeuristicKind::AdamicAdar,
        HeuristicKind::ResourceAllocation,
        HeuristicKind::Jaccard,
        HeuristicKind::PreferentialAttachment,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            HeuristicKind::CommonNeighbors => "cn",
            HeuristicKind::AdamicAdar => "aa",
            HeuristicKind::ResourceAllocation => "ra",
            HeuristicKind::Jaccard => "jaccard",
            HeuristicKind::PreferentialAttachment => "pa",
        }
    }
}

impl std::str::FromStr for HeuristicKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cn" | "common_neighbors" => Ok(HeuristicKind::CommonNeighbors),
            "aa" | "adamic_adar" => Ok(HeuristicKind::AdamicAdar),
            "ra" | "resource_allocation" => Ok(HeuristicKind::ResourceAllocation),
            "jaccard" => Ok(HeuristicKind::Jaccard),
            "pa" | "preferential_attachment" => Ok(HeuristicKind::PreferentialAttachment),
            other => Err(Error::InvalidArgument(format!("unknown heuristic {other:?}"))),
        }
    }
}

/// Similarity score for the (u, v) pair under the view's window.
pub fn heuristic_score(
    kind: HeuristicKind,
    view: &GraphView<'_>,
    u: u32,
    v: u32,
) -> Result<f64> {
    if u == v {
        return Err(Error::InvalidArgument(format!("pair ({u},{u}) has equal endpoints")));
    }
    let nu = view.neighbors(u)?;
    let nv = view.neighbors(v)?;

    if kind == HeuristicKind::PreferentialAttachment {
        return Ok(nu.len() as f64 * nv.len() as f64);
    }

    // Sorted-merge intersection; accumulate the per-kind weight in one pass.
    let mut inter = 0usize;
    let mut acc = 0.0f64;
    let (mut i, mut j) = (0usize, 0usize);
    while i < nu.len() && j < nv.len() {
        match nu[i].cmp(&nv[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                let z = nu[i];
                inter += 1;
                let dz = view.degree(z)? as f64;
                // z neighbors both u and v, so its degree is at least 2
                debug_assert!(dz >= 2.0);
                match kind {
                    HeuristicKind::AdamicAdar => acc += 1.0 / dz.ln(),
                    HeuristicKind::ResourceAllocation => acc += 1.0 / dz,
                    _ => {}
                }
                i += 1;
                j += 1;
            }
        }
    }

    Ok(match kind {
        HeuristicKind::CommonNeighbors => inter as f64,
        HeuristicKind::AdamicAdar | HeuristicKind::ResourceAllocation => acc,
        HeuristicKind::Jaccard => {
            let union = nu.len() + nv.len() - inter;
            if union == 0 {
                0.0
            } else {
                inter as f64 / union as f64
            }
        }
        HeuristicKind::PreferentialAttachment => unreachable!(),
    })
}
