//! Descriptor matching and match filtering.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{Descriptor, Keypoint};
use crate::error::{Error, Result};

/// A (query cell, train cell) pair in grid coordinates.
type CellPair = ((i64, i64), (i64, i64));

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Match {
    pub query_idx: usize,
    pub train_idx: usize,
    /// Hamming distance in bits.
    pub distance: u32,
}

fn nonempty(qd: &[Descriptor], td: &[Descriptor]) -> Result<()> {
    if qd.is_empty() || td.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

/// Index and distance of the closest descriptor; ties go to the lower index.
fn nearest(d: &Descriptor, set: &[Descriptor]) -> (usize, u32) {
    let mut best = (0, u32::MAX);
    for (j, t) in set.iter().enumerate() {
        let h = d.hamming(t);
        if h < best.1 {
            best = (j, h);
        }
    }
    best
}

/// Each query paired with its nearest train descriptor.
pub fn match_bruteforce(qd: &[Descriptor], td: &[Descriptor]) -> Result<Vec<Match>> {
    nonempty(qd, td)?;
    Ok(qd
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let (j, distance) = nearest(d, td);
            Match {
                query_idx: i,
                train_idx: j,
                distance,
            }
        })
        .collect())
}

/// Brute-force matches whose train descriptor also picks the query back.
pub fn match_mutual_nn(qd: &[Descriptor], td: &[Descriptor]) -> Result<Vec<Match>> {
    let forward = match_bruteforce(qd, td)?;
    let backward: Vec<usize> = td.iter().map(|d| nearest(d, qd).0).collect();
    Ok(forward
        .into_iter()
        .filter(|m| backward[m.train_idx] == m.query_idx)
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FginnParams {
    pub ratio: f64,
    /// Train keypoints closer than this to the best match are not rivals.
    pub min_geom_dist: f64,
}

impl Default for FginnParams {
    fn default() -> Self {
        Self {
            ratio: 0.8,
            min_geom_dist: 10.0,
        }
    }
}

/// Ratio test against the first geometrically inconsistent neighbour: the
/// closest descriptor whose keypoint lies at least `min_geom_dist` from the
/// best match's keypoint. A match with no such rival is accepted.
pub fn match_fginn(
    qkps: &[Keypoint],
    qd: &[Descriptor],
    tkps: &[Keypoint],
    td: &[Descriptor],
    params: &FginnParams,
) -> Result<Vec<Match>> {
    nonempty(qd, td)?;
    if qkps.len() != qd.len() {
        return Err(Error::LengthMismatch(qkps.len(), qd.len()));
    }
    if tkps.len() != td.len() {
        return Err(Error::LengthMismatch(tkps.len(), td.len()));
    }
    let mut out = Vec::new();
    let mut dists = vec![0u32; td.len()];
    for (i, d) in qd.iter().enumerate() {
        for (slot, t) in dists.iter_mut().zip(td) {
            *slot = d.hamming(t);
        }
        let (best, d1) = dists
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.cmp(b.1).then(a.0.cmp(&b.0)))
            .map(|(j, &d)| (j, d))
            .expect("train set is non-empty");
        let anchor = tkps[best].position;
        let d2 = dists
            .iter()
            .enumerate()
            .filter(|&(j, _)| tkps[j].position.distance(anchor) >= params.min_geom_dist)
            .map(|(_, &d)| d)
            .min();
        let accept = match d2 {
            None => true,
            Some(d2) => (d1 as f64) < params.ratio * d2 as f64,
        };
        if accept {
            out.push(Match {
                query_idx: i,
                train_idx: best,
                distance: d1,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetricMode {
    Intersection,
    Union,
}

/// Combines A->B `forward` matches with B->A `backward` matches. Output pairs
/// are oriented A->B; forward entries come first in their original order.
pub fn match_symmetric(mode: SymmetricMode, forward: &[Match], backward: &[Match]) -> Vec<Match> {
    let flipped: Vec<Match> = backward
        .iter()
        .map(|m| Match {
            query_idx: m.train_idx,
            train_idx: m.query_idx,
            distance: m.distance,
        })
        .collect();
    let back_pairs: HashSet<(usize, usize)> = flipped.iter().map(|m| (m.query_idx, m.train_idx)).collect();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    match mode {
        SymmetricMode::Intersection => {
            for m in forward {
                let key = (m.query_idx, m.train_idx);
                if back_pairs.contains(&key) && seen.insert(key) {
                    out.push(*m);
                }
            }
        }
        SymmetricMode::Union => {
            for m in forward.iter().chain(&flipped) {
                if seen.insert((m.query_idx, m.train_idx)) {
                    out.push(*m);
                }
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmsParams {
    /// Cells per image side.
    pub grid: usize,
    pub alpha: f64,
    /// Below this many matches the filter passes everything through.
    pub min_matches: usize,
}

impl Default for GmsParams {
    fn default() -> Self {
        Self {
            grid: 20,
            alpha: 6.0,
            min_matches: 10,
        }
    }
}

fn cell_of(p: crate::geometry::Point, size: (usize, usize), grid: usize, shift: (f64, f64)) -> Option<(i64, i64)> {
    let cw = size.0 as f64 / grid as f64;
    let ch = size.1 as f64 / grid as f64;
    let cx = ((p.x + shift.0 * cw) / cw).floor() as i64;
    let cy = ((p.y + shift.1 * ch) / ch).floor() as i64;
    // shifted grids gain one extra partial cell per shifted axis
    let lim = grid as i64 + 1;
    (cx >= 0 && cy >= 0 && cx < lim && cy < lim).then_some((cx, cy))
}

/// Grid-based motion statistics. Matches are binned by query and train grid
/// cell; each query cell votes for the train cell receiving most of its
/// matches, and that cell pair survives when the matches falling in the
/// 3x3 neighbourhood pairs exceed `alpha * sqrt(mean matches per cell)`.
/// The test runs on four half-cell-shifted query grids and a match is kept
/// if any of them keeps it. Output preserves input order.
pub fn filter_gms(
    qkps: &[Keypoint],
    tkps: &[Keypoint],
    matches: &[Match],
    query_size: (usize, usize),
    train_size: (usize, usize),
    params: &GmsParams,
) -> Result<Vec<Match>> {
    if matches.is_empty() {
        return Err(Error::EmptyInput);
    }
    if params.grid == 0 {
        return Err(Error::InvalidParameter("grid must be at least 1".into()));
    }
    for m in matches {
        if m.query_idx >= qkps.len() || m.train_idx >= tkps.len() {
            return Err(Error::InvalidParameter(format!(
                "match {m:?} indexes past the keypoint lists"
            )));
        }
    }
    if matches.len() < params.min_matches {
        return Ok(matches.to_vec());
    }
    let mut keep = vec![false; matches.len()];
    for shift in [(0.0, 0.0), (0.5, 0.0), (0.0, 0.5), (0.5, 0.5)] {
        let cells: Vec<Option<CellPair>> = matches
            .iter()
            .map(|m| {
                let a = cell_of(qkps[m.query_idx].position, query_size, params.grid, shift)?;
                let b = cell_of(tkps[m.train_idx].position, train_size, params.grid, (0.0, 0.0))?;
                Some((a, b))
            })
            .collect();
        let mut pair_count: HashMap<CellPair, usize> = HashMap::new();
        let mut query_count: HashMap<(i64, i64), usize> = HashMap::new();
        for &(a, b) in cells.iter().flatten() {
            *pair_count.entry((a, b)).or_default() += 1;
            *query_count.entry(a).or_default() += 1;
        }
        // best train cell per query cell; ties go to the smaller cell
        let mut best: HashMap<(i64, i64), ((i64, i64), usize)> = HashMap::new();
        for (&(a, b), &n) in &pair_count {
            let e = best.entry(a).or_insert((b, n));
            if n > e.1 || (n == e.1 && b < e.0) {
                *e = (b, n);
            }
        }
        let mut verdict: HashMap<(i64, i64), bool> = HashMap::new();
        for (&a, &(b, _)) in &best {
            let (mut support, mut neighbourhood) = (0usize, 0usize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let na = (a.0 + dx, a.1 + dy);
                    let nb = (b.0 + dx, b.1 + dy);
                    support += pair_count.get(&(na, nb)).copied().unwrap_or(0);
                    neighbourhood += query_count.get(&na).copied().unwrap_or(0);
                }
            }
            let tau = params.alpha * (neighbourhood as f64 / 9.0).sqrt();
            verdict.insert(a, support as f64 > tau);
        }
        for (k, c) in cells.iter().enumerate() {
            if let Some((a, b)) = c {
                if verdict.get(a).copied().unwrap_or(false) && best[a].0 == *b {
                    keep[k] = true;
                }
            }
        }
    }
    Ok(matches.iter().zip(keep).filter(|(_, k)| *k).map(|(m, _)| *m).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_desc(rng: &mut ChaCha8Rng) -> Descriptor {
        Descriptor([rng.random(), rng.random(), rng.random(), rng.random()])
    }

    fn flip_bits(d: Descriptor, bits: &[usize]) -> Descriptor {
        let mut w = d.0;
        for &b in bits {
            w[b / 64] ^= 1 << (b % 64);
        }
        Descriptor(w)
    }

    fn kp(x: f64, y: f64) -> Keypoint {
        Keypoint {
            position: Point::new(x, y),
            response: 1.0,
            orientation: 0.0,
        }
    }

    #[test]
    fn identical_lists_match_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d: Vec<Descriptor> = (0..20).map(|_| rand_desc(&mut rng)).collect();
        for ms in [match_bruteforce(&d, &d).unwrap(), match_mutual_nn(&d, &d).unwrap()] {
            assert_eq!(ms.len(), 20);
            assert!(ms
                .iter()
                .enumerate()
                .all(|(i, m)| m.query_idx == i && m.train_idx == i && m.distance == 0));
        }
        let one = [d[0]];
        assert_eq!(match_bruteforce(&one, &d[1..2]).unwrap().len(), 1);
        assert!(matches!(match_bruteforce(&[], &d), Err(Error::EmptyInput)));
    }

    #[test]
    fn bruteforce_matches_exhaustive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q: Vec<Descriptor> = (0..50).map(|_| rand_desc(&mut rng)).collect();
        let t: Vec<Descriptor> = (0..60).map(|_| rand_desc(&mut rng)).collect();
        let got = match_bruteforce(&q, &t).unwrap();
        for (i, qd) in q.iter().enumerate() {
            // independent popcount over bit positions
            let dist = |a: &Descriptor, b: &Descriptor| (0..256).filter(|&k| a.bit(k) != b.bit(k)).count() as u32;
            let all: Vec<u32> = t.iter().map(|td| dist(qd, td)).collect();
            let min = *all.iter().min().unwrap();
            let j = all.iter().position(|&v| v == min).unwrap();
            assert_eq!(
                got[i],
                Match {
                    query_idx: i,
                    train_idx: j,
                    distance: min
                }
            );
        }
    }

    #[test]
    fn mutual_excludes_one_sided() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = rand_desc(&mut rng);
        // q0 and q1 both prefer t0, but t0 prefers q1
        let q = [flip_bits(base, &[0, 1, 2, 3]), flip_bits(base, &[0])];
        let t = [base, rand_desc(&mut rng)];
        let bf = match_bruteforce(&q, &t).unwrap();
        assert_eq!(bf.iter().map(|m| m.train_idx).collect::<Vec<_>>(), vec![0, 0]);
        let mnn = match_mutual_nn(&q, &t).unwrap();
        assert_eq!(mnn.len(), 1);
        assert_eq!(mnn[0].query_idx, 1);
    }

    #[test]
    fn fginn_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let base = rand_desc(&mut rng);
        let q = [base];
        let qk = [kp(50.0, 50.0)];
        // unique strong match, rivals random
        let t = [flip_bits(base, &[1, 2]), rand_desc(&mut rng), rand_desc(&mut rng)];
        let tk = [kp(50.0, 50.0), kp(100.0, 10.0), kp(10.0, 100.0)];
        assert_eq!(match_fginn(&qk, &q, &tk, &t, &FginnParams::default()).unwrap().len(), 1);

        // near-duplicate within 3 px: plain ratio rejects, FGINN skips the clustered rival
        let t = [
            flip_bits(base, &[1, 2, 3, 4]),
            flip_bits(base, &[5, 6, 7, 8, 9]),
            rand_desc(&mut rng),
        ];
        let tk = [kp(50.0, 50.0), kp(52.0, 51.0), kp(150.0, 150.0)];
        let d1 = base.hamming(&t[0]) as f64;
        let plain_d2 = base.hamming(&t[1]) as f64;
        assert!(d1 / plain_d2 >= 0.8);
        assert_eq!(match_fginn(&qk, &q, &tk, &t, &FginnParams::default()).unwrap().len(), 1);

        // distant rival at the same distance: ratio 1.0 rejects
        let t = [flip_bits(base, &[1, 2]), flip_bits(base, &[7, 9])];
        let tk = [kp(50.0, 50.0), kp(150.0, 50.0)];
        assert!(match_fginn(&qk, &q, &tk, &t, &FginnParams::default())
            .unwrap()
            .is_empty());
    }

    fn m(q: usize, t: usize) -> Match {
        Match {
            query_idx: q,
            train_idx: t,
            distance: 0,
        }
    }

    #[test]
    fn symmetric_set_arithmetic() {
        let fwd = vec![m(0, 0), m(1, 1), m(2, 2)];
        let back: Vec<Match> = fwd.iter().map(|x| m(x.train_idx, x.query_idx)).collect();
        assert_eq!(match_symmetric(SymmetricMode::Intersection, &fwd, &back), fwd);
        assert_eq!(match_symmetric(SymmetricMode::Union, &fwd, &back), fwd);

        let other = vec![m(10, 5), m(11, 6)];
        assert!(match_symmetric(SymmetricMode::Intersection, &fwd, &other).is_empty());
        assert_eq!(match_symmetric(SymmetricMode::Union, &fwd, &other).len(), 5);

        let fwd = vec![m(0, 0), m(1, 1), m(2, 2), m(3, 3), m(4, 4)];
        let back = vec![m(0, 0), m(1, 1), m(2, 2), m(9, 7), m(8, 6)];
        assert_eq!(match_symmetric(SymmetricMode::Intersection, &fwd, &back).len(), 3);
        assert_eq!(match_symmetric(SymmetricMode::Union, &fwd, &back).len(), 7);
    }

    fn scene(
        rng: &mut ChaCha8Rng,
        inliers: usize,
        outliers: usize,
    ) -> (Vec<Keypoint>, Vec<Keypoint>, Vec<Match>, Vec<bool>) {
        let (mut q, mut t, mut ms, mut truth) = (vec![], vec![], vec![], vec![]);
        for i in 0..inliers + outliers {
            let p = kp(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
            let inlier = i < inliers;
            let tp = if inlier {
                kp((p.position.x + 7.0).min(639.0), (p.position.y - 4.0).max(0.0))
            } else {
                kp(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0))
            };
            q.push(p);
            t.push(tp);
            ms.push(m(i, i));
            truth.push(inlier);
        }
        (q, t, ms, truth)
    }

    #[test]
    fn gms_keeps_consistent_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (q, t, ms, _) = scene(&mut rng, 2000, 0);
        let kept = filter_gms(&q, &t, &ms, (640, 480), (640, 480), &GmsParams::default()).unwrap();
        assert!(kept.len() as f64 >= 0.95 * 2000.0, "kept {}", kept.len());
    }

    #[test]
    fn gms_removes_random_outliers() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (q, t, ms, truth) = scene(&mut rng, 1500, 1500);
        let kept = filter_gms(&q, &t, &ms, (640, 480), (640, 480), &GmsParams::default()).unwrap();
        let kept_outliers = kept.iter().filter(|m| !truth[m.query_idx]).count();
        assert!(
            kept_outliers as f64 <= 0.1 * 1500.0,
            "{kept_outliers} outliers survived"
        );
    }

    #[test]
    fn gms_passes_tiny_sets() {
        let q = [kp(1.0, 1.0)];
        let t = [kp(300.0, 200.0)];
        let ms = [m(0, 0)];
        assert_eq!(
            filter_gms(&q, &t, &ms, (640, 480), (640, 480), &GmsParams::default()).unwrap(),
            ms
        );
    }

    proptest! {
        #[test]
        fn matcher_subset_relations(seed in 0u64..10_000, nq in 1usize..30, nt in 1usize..30) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // low-entropy descriptors so ties and reciprocity both occur
            let mut small = || Descriptor([rng.random::<u64>() & 0xFF, 0, 0, 0]);
            let q: Vec<Descriptor> = (0..nq).map(|_| small()).collect();
            let t: Vec<Descriptor> = (0..nt).map(|_| small()).collect();
            let bf = match_bruteforce(&q, &t).unwrap();
            for x in match_mutual_nn(&q, &t).unwrap() {
                prop_assert!(bf.contains(&x));
            }
            let back = match_bruteforce(&t, &q).unwrap();
            let inter = match_symmetric(SymmetricMode::Intersection, &bf, &back);
            let uni = match_symmetric(SymmetricMode::Union, &bf, &back);
            let key = |x: &Match| (x.query_idx, x.train_idx);
            let uni_keys: HashSet<_> = uni.iter().map(key).collect();
            prop_assert!(inter.iter().all(|x| uni_keys.contains(&key(x))));
        }
    }
}
