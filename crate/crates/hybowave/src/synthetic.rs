//! Seeded hierarchical benchmark graph: 3 hubs, 9 mid nodes, 81 leaves
//! (93 nodes). The hubs form a triangle, each hub fans out to 3 mid nodes,
//! each mid node to 9 leaves, and every community (a hub with its subtree,
//! 31 nodes) gains 10% of its remaining intra-community pairs as extra edges.

use rand::seq::SliceRandom;

use crate::graph::Graph;
use crate::stream::substream;

pub const NUM_HUBS: usize = 3;
pub const MIDS_PER_HUB: usize = 3;
pub const LEAVES_PER_MID: usize = 9;
/// Share of the non-tree intra-community pairs added as extra edges.
pub const EXTRA_EDGE_FRACTION: f64 = 0.10;

/// Total node count: 3 + 9 + 81.
pub const NUM_NODES: usize = NUM_HUBS + NUM_HUBS * MIDS_PER_HUB + NUM_HUBS * MIDS_PER_HUB * LEAVES_PER_MID;

/// Builds the benchmark graph. The tree skeleton is fixed; the extra
/// intra-community edges are drawn from a ChaCha20 stream on `seed`.
pub fn hierarchical_graph(seed: u64) -> Graph {
    let num_mids = NUM_HUBS * MIDS_PER_HUB;
    let mid_base = NUM_HUBS;
    let leaf_base = NUM_HUBS + num_mids;

    let mut edges: Vec<(u32, u32)> = Vec::new();
    // hub triangle keeps the communities connected to each other
    for a in 0..NUM_HUBS as u32 {
        for b in (a + 1)..NUM_HUBS as u32 {
            edges.push((a, b));
        }
    }
    for hub in 0..NUM_HUBS {
        for j in 0..MIDS_PER_HUB {
            let mid = mid_base + hub * MIDS_PER_HUB + j;
            edges.push((hub as u32, mid as u32));
            for k in 0..LEAVES_PER_MID {
                let leaf = leaf_base + (hub * MIDS_PER_HUB + j) * LEAVES_PER_MID + k;
                edges.push((mid as u32, leaf as u32));
            }
        }
    }

    let tree_count = edges.len();
    let mut rng = substream(seed, 0x0053_594e_5448, 0); // tag: "SYNTH"
    for hub in 0..NUM_HUBS {
        // community = hub + its mids + their leaves (31 nodes)
        let mut members: Vec<u32> = vec![hub as u32];
        for j in 0..MIDS_PER_HUB {
            members.push((mid_base + hub * MIDS_PER_HUB + j) as u32);
        }
        for j in 0..MIDS_PER_HUB {
            for k in 0..LEAVES_PER_MID {
                let leaf = leaf_base + (hub * MIDS_PER_HUB + j) * LEAVES_PER_MID + k;
                members.push(leaf as u32);
            }
        }
        let existing: std::collections::HashSet<(u32, u32)> = edges.iter().copied().collect();
        let mut candidates = Vec::new();
        for i in 0..members.len() {
            for j in (i + 1)..members.len() {
                let e = (members[i].min(members[j]), members[i].max(members[j]));
                if !existing.contains(&e) {
                    candidates.push(e);
                }
            }
        }
        let take = (EXTRA_EDGE_FRACTION * candidates.len() as f64).floor() as usize;
        candidates.shuffle(&mut rng);
        edges.extend(candidates.into_iter().take(take));
    }
    debug_assert!(edges.len() > tree_count);

    Graph::from_index_edges(NUM_NODES, &edges).expect("benchmark construction is consistent")
}
