//! Independent reference implementations used as test oracles.
//!
//! Nothing here calls into the algorithm under test beyond reading plain data
//! (graph topology, points); every computation is re-derived from scratch.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use urbanflow_core::graph::{Edge, Node};
use urbanflow_core::{EdgeId, LatLon, NodeId, RoadGraph, TrafficSnapshot};

pub const R: f64 = 6_371_000.0;

/// Great-circle distance via the Vincenty special case for a sphere, which
/// uses atan2 rather than the half-versine arcsine.
pub fn great_circle_vincenty(a: LatLon, b: LatLon) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dl = (b.lon - a.lon).to_radians();
    let num = ((p2.cos() * dl.sin()).powi(2) + (p1.cos() * p2.sin() - p1.sin() * p2.cos() * dl.cos()).powi(2)).sqrt();
    let den = p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos();
    R * num.atan2(den)
}

/// Great-circle distance from the dot product of unit vectors (law of cosines
/// in vector form) evaluated in extended precision via atan2 of cross/dot.
pub fn great_circle_vectors(a: LatLon, b: LatLon) -> f64 {
    let v = |p: LatLon| {
        let (la, lo) = (p.lat.to_radians(), p.lon.to_radians());
        [la.cos() * lo.cos(), la.cos() * lo.sin(), la.sin()]
    };
    let (u, w) = (v(a), v(b));
    let cross = [
        u[1] * w[2] - u[2] * w[1],
        u[2] * w[0] - u[0] * w[2],
        u[0] * w[1] - u[1] * w[0],
    ];
    let cn = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    let dot = u[0] * w[0] + u[1] * w[1] + u[2] * w[2];
    R * cn.atan2(dot)
}

fn edge_time(e: &Edge, s: &TrafficSnapshot) -> f64 {
    e.length_m / (e.base_speed_mps * s.factor(e.id))
}

/// Single-source shortest travel times by Bellman-Ford relaxation over the
/// raw edge list (both directions of two-way roads).
pub fn bellman_ford(g: &RoadGraph, s: &TrafficSnapshot, src: NodeId) -> Vec<f64> {
    let n = g.node_count();
    let idx = |id: NodeId| g.nodes().iter().position(|x| x.id == id).unwrap();
    let mut arcs = Vec::new();
    for e in g.edges() {
        let c = edge_time(e, s);
        arcs.push((idx(e.from), idx(e.to), c));
        if !e.oneway {
            arcs.push((idx(e.to), idx(e.from), c));
        }
    }
    let mut dist = vec![f64::INFINITY; n];
    dist[idx(src)] = 0.0;
    for _ in 0..n {
        let mut changed = false;
        for &(u, v, c) in &arcs {
            if dist[u] + c < dist[v] {
                dist[v] = dist[u] + c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    dist
}

/// Random road network: random intersections in a ~5 km square, a spanning
/// chain plus random extra roads, lengths at least the crow-flight distance.
pub fn random_graph(seed: u64, n: usize, extra_edges: usize) -> RoadGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes: Vec<Node> = (0..n)
        .map(|i| Node {
            id: NodeId(i as u64 + 1),
            pos: LatLon::new(40.70 + rng.random::<f64>() * 0.045, -74.00 + rng.random::<f64>() * 0.06),
        })
        .collect();
    let mut edges = Vec::new();
    let add = |rng: &mut ChaCha8Rng, a: usize, b: usize, edges: &mut Vec<Edge>| {
        let crow = great_circle_vincenty(nodes[a].pos, nodes[b].pos);
        edges.push(Edge {
            id: EdgeId(edges.len() as u64 + 1),
            from: nodes[a].id,
            to: nodes[b].id,
            length_m: crow * (1.0 + rng.random::<f64>() * 0.5) + 1.0,
            base_speed_mps: 5.0 + rng.random::<f64>() * 20.0,
            oneway: rng.random::<f64>() < 0.3,
        });
    };
    // a random chain, not necessarily strongly connected because of one-way roads
    for i in 1..n {
        let j = rng.random_range(0..i);
        add(&mut rng, j, i, &mut edges);
    }
    for _ in 0..extra_edges {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            add(&mut rng, a, b, &mut edges);
        }
    }
    RoadGraph::new(nodes, edges).unwrap()
}

/// Random congestion on a random subset of edges.
pub fn random_snapshot(seed: u64, g: &RoadGraph) -> TrafficSnapshot {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut updates = Vec::new();
    for e in g.edges() {
        if rng.random::<f64>() < 0.3 {
            updates.push(urbanflow_core::TrafficUpdate {
                edge_id: e.id,
                observed_speed_factor: 0.1 + 0.9 * rng.random::<f64>(),
                timestamp: 0.0,
            });
        }
    }
    TrafficSnapshot::free_flow().apply_updates(&updates).0
}

/// rows × cols grid of two-way streets, 100 m blocks at 10 m/s.
pub fn grid_graph(rows: usize, cols: usize) -> RoadGraph {
    let dlat = 100.0 / (R * std::f64::consts::PI / 180.0);
    let dlon = dlat / (40.75f64.to_radians().cos());
    let id = |r: usize, c: usize| NodeId((r * cols + c) as u64 + 1);
    let mut nodes = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            nodes.push(Node {
                id: id(r, c),
                pos: LatLon::new(40.75 + r as f64 * dlat, -73.99 + c as f64 * dlon),
            });
        }
    }
    let mut edges = Vec::new();
    let mut push = |a: NodeId, b: NodeId| {
        edges.push(Edge {
            id: EdgeId(edges.len() as u64 + 1),
            from: a,
            to: b,
            length_m: 100.0,
            base_speed_mps: 10.0,
            oneway: false,
        })
    };
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                push(id(r, c), id(r, c + 1));
            }
            if r + 1 < rows {
                push(id(r, c), id(r + 1, c));
            }
        }
    }
    RoadGraph::new(nodes, edges).unwrap()
}

/// Two-route test network. Source 1 reaches junction 2 in 60 s; from there the
/// primary route via 3 takes 270 + 270 s and the alternative via 4 takes
/// 330 + 330 s to destination 5. All roads 10 m/s, one-way.
pub const DIAMOND_GRAPH: &str = "\
# diamond: S=1 J=2 P=3 Q=4 D=5
node 1 40.7000 -74.0000
node 2 40.7000 -73.9929
node 3 40.7100 -73.9750
node 4 40.6900 -73.9750
node 5 40.7000 -73.9571
edge 1 1 2 600 10 1
edge 2 2 3 2700 10 1
edge 3 3 5 2700 10 1
edge 4 2 4 3300 10 1
edge 5 4 5 3300 10 1
";

pub fn diamond() -> RoadGraph {
    RoadGraph::parse(DIAMOND_GRAPH).unwrap()
}

/// Hand simulation of the diamond with the primary route dropping to factor
/// `f` at time `t_event` (which must fall inside the first edge, on a tick).
/// Returns (rerouted realized, non-rerouted realized) seconds.
pub fn diamond_hand_times(f: f64) -> (f64, f64) {
    let reach_junction = 60.0;
    let rerouted = reach_junction + 330.0 + 330.0;
    let stay = reach_junction + 270.0 / f + 270.0 / f;
    (rerouted, stay)
}

/// Neumaier-compensated sum.
pub fn neumaier_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn mae_oracle(y: &[f64], yhat: &[f64]) -> f64 {
    neumaier_sum(y.iter().zip(yhat).map(|(a, b)| (a - b).abs())) / y.len() as f64
}

pub fn rmse_oracle(y: &[f64], yhat: &[f64]) -> f64 {
    (neumaier_sum(y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b))) / y.len() as f64).sqrt()
}

fn rat(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

fn rat_to_f64(r: &BigRational) -> f64 {
    // scale to keep 80 significant bits, then divide in f64
    let neg = r.is_negative();
    let r = r.abs();
    if r.is_zero() {
        return 0.0;
    }
    let num = r.numer().clone();
    let den = r.denom().clone();
    let shift = num.bits() as i64 - den.bits() as i64 - 80;
    let q: BigInt = if shift >= 0 { num / (den << shift as usize) } else { (num << (-shift) as usize) / den };
    let v = q.to_string().parse::<f64>().unwrap() * 2f64.powi(shift as i32);
    if neg {
        -v
    } else {
        v
    }
}

/// Exact least squares with intercept: solves the normal equations
/// (AᵀA)β = Aᵀy over the rationals, A = [1 | X]. Returns (β₀, β₁..βₙ).
pub fn normal_equations_exact(x: &[Vec<f64>], y: &[f64]) -> (f64, Vec<f64>) {
    let n = x[0].len() + 1;
    let rows: Vec<Vec<BigRational>> = x
        .iter()
        .map(|r| std::iter::once(BigRational::one()).chain(r.iter().map(|v| rat(*v))).collect())
        .collect();
    let ys: Vec<BigRational> = y.iter().map(|v| rat(*v)).collect();
    let mut m = vec![vec![BigRational::zero(); n + 1]; n];
    for (r, yv) in rows.iter().zip(&ys) {
        for i in 0..n {
            for j in 0..n {
                m[i][j] += &r[i] * &r[j];
            }
            m[i][n] += &r[i] * yv;
        }
    }
    // Gauss-Jordan with exact pivoting on first nonzero
    for col in 0..n {
        let p = (col..n).find(|&i| !m[i][col].is_zero()).expect("full rank");
        m.swap(col, p);
        let piv = m[col][col].clone();
        for v in m[col].iter_mut() {
            *v = &*v / &piv;
        }
        for i in 0..n {
            if i != col && !m[i][col].is_zero() {
                let f = m[i][col].clone();
                for j in col..=n {
                    let t = &f * &m[col][j];
                    m[i][j] -= t;
                }
            }
        }
    }
    let beta: Vec<f64> = (0..n).map(|i| rat_to_f64(&m[i][n])).collect();
    (beta[0], beta[1..].to_vec())
}

/// Plain Lloyd iterations from given centroids, written independently:
/// lowest-index tie break, empty clusters take the point farthest from its own
/// centroid (never the same point twice), stop when the largest centroid
/// shift falls below `tol` without a re-seed.
pub fn lloyd_oracle(points: &[Vec<f64>], init: &[Vec<f64>], tol: f64, max_iter: usize) -> (Vec<Vec<f64>>, Vec<usize>, f64) {
    let d2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let assign = |cs: &[Vec<f64>]| -> Vec<usize> {
        points
            .iter()
            .map(|p| {
                let mut best = 0;
                for j in 1..cs.len() {
                    if d2(p, &cs[j]) < d2(p, &cs[best]) {
                        best = j;
                    }
                }
                best
            })
            .collect()
    };
    let mut cs = init.to_vec();
    for _ in 0..max_iter {
        let labels = assign(&cs);
        let mut next = Vec::new();
        let mut used = Vec::new();
        let mut reseeded = false;
        for j in 0..cs.len() {
            let members: Vec<&Vec<f64>> = points.iter().zip(&labels).filter(|(_, l)| **l == j).map(|(p, _)| p).collect();
            if members.is_empty() {
                reseeded = true;
                let mut far = None::<(usize, f64)>;
                for (i, p) in points.iter().enumerate() {
                    if used.contains(&i) {
                        continue;
                    }
                    let d = d2(p, &cs[labels[i]]);
                    if far.map_or(true, |(_, fd)| d > fd) {
                        far = Some((i, d));
                    }
                }
                let i = far.unwrap().0;
                used.push(i);
                next.push(points[i].clone());
            } else {
                let mut mean = vec![0.0; points[0].len()];
                for m in &members {
                    for (s, v) in mean.iter_mut().zip(m.iter()) {
                        *s += v;
                    }
                }
                for s in mean.iter_mut() {
                    *s /= members.len() as f64;
                }
                next.push(mean);
            }
        }
        let shift = cs.iter().zip(&next).map(|(a, b)| d2(a, b).sqrt()).fold(0.0, f64::max);
        cs = next;
        if shift < tol && !reseeded {
            break;
        }
    }
    let labels = assign(&cs);
    let j = points.iter().zip(&labels).map(|(p, &l)| d2(p, &cs[l])).sum();
    (cs, labels, j)
}

/// Per-cell Gaussian kernel sums by a direct double loop over cells and
/// points, using its own equirectangular projection about the bbox center.
pub fn kde_oracle(points: &[LatLon], h: f64, lat_min: f64, lon_min: f64, lat_max: f64, lon_max: f64, rows: usize, cols: usize) -> Vec<f64> {
    let lat0 = (lat_min + lat_max) / 2.0;
    let ky = R * std::f64::consts::PI / 180.0;
    let kx = ky * (lat0 * std::f64::consts::PI / 180.0).cos();
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let clat = lat_min + (lat_max - lat_min) * (r as f64 + 0.5) / rows as f64;
            let clon = lon_min + (lon_max - lon_min) * (c as f64 + 0.5) / cols as f64;
            let mut s = 0.0;
            for p in points {
                let dx = (p.lon - clon) * kx;
                let dy = (p.lat - clat) * ky;
                s += (-(dx * dx + dy * dy) / (2.0 * h * h)).exp();
            }
            out.push(s / (2.0 * std::f64::consts::PI * h * h * points.len() as f64));
        }
    }
    out
}

/// Mean and population standard deviation by two-pass compensated sums.
pub fn mean_std_oracle(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = neumaier_sum(xs.iter().copied()) / n;
    let var = neumaier_sum(xs.iter().map(|x| (x - mean) * (x - mean))) / n;
    (mean, var.sqrt())
}
