#![allow(dead_code)]

use std::collections::BTreeSet;

use pafparse::{ParseResult, Scene, Topology};

/// Four-part chain small enough for the exhaustive full-graph solver.
pub const CHAIN4: &str = "parts 4
head_top
neck
right_shoulder
right_elbow
limbs 3
0 1
1 2
2 3
reference 0 1
";

pub fn chain4() -> Topology {
    Topology::parse(CHAIN4).unwrap()
}

/// True when `result` has one person per ground-truth person, each holding
/// exactly that person's labeled parts within `tol` pixels.
pub fn recovers(scene: &Scene, result: &ParseResult, tol: f64) -> bool {
    if result.persons.len() != scene.persons.len() {
        return false;
    }
    let mut used = vec![false; scene.persons.len()];
    result.persons.iter().all(|p| {
        let hit = scene.persons.iter().enumerate().find(|(k, gt)| {
            !used[*k]
                && gt.iter().zip(&p.parts).all(|(t, c)| match (t, c) {
                    (Some(t), Some(c)) => t.distance(c.position) <= tol,
                    (None, None) => true,
                    _ => false,
                })
        });
        match hit {
            Some((k, _)) => {
                used[k] = true;
                true
            }
            None => false,
        }
    })
}

/// Groups of `(part, candidate id)` in a parse result, order-free.
pub fn groups_of(result: &ParseResult) -> BTreeSet<Vec<(usize, usize)>> {
    result
        .persons
        .iter()
        .map(|p| p.parts.iter().flatten().map(|c| (c.part, c.id)).collect())
        .collect()
}
