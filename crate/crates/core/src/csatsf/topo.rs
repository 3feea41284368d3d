use alloc::vec;
use alloc::vec::Vec;

use nalgebra::Vector2;
use spade::{DelaunayTriangulation, Point2, Triangulation};

use super::{median, FilterConfig, FilterError, MatchSet, Stage};

const TINY_AREA: f64 = 1e-12;

/// Signed area of a triangle (positive when counter-clockwise in a y-up frame).
pub fn triangle_area(a: &Vector2<f64>, b: &Vector2<f64>, c: &Vector2<f64>) -> f64 {
    0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y))
}

/// Fraction of Delaunay triangles around each query keypoint whose
/// cross-modal area ratio deviates from the median ratio by more than
/// `eps_topo` (relative). Coincident query keypoints share one vertex; its
/// triangles use the db point of the lowest-index match on it.
pub fn negative_vote_rates(
    pq: &[Vector2<f64>],
    pdb: &[Vector2<f64>],
    eps_topo: f64,
) -> Result<Vec<f64>, FilterError> {
    let mut tri: DelaunayTriangulation<Point2<f64>> = DelaunayTriangulation::new();
    let mut vertex_of = Vec::with_capacity(pq.len());
    // representative match per vertex, by vertex index
    let mut rep: Vec<usize> = Vec::new();
    for (k, p) in pq.iter().enumerate() {
        let h = tri
            .insert(Point2::new(p.x, p.y))
            .map_err(|_| FilterError::DegenerateTriangulation)?;
        let v = h.index();
        if v == rep.len() {
            rep.push(k);
        }
        vertex_of.push(v);
    }
    if tri.num_vertices() < 3 || tri.all_vertices_on_line() {
        return Err(FilterError::DegenerateTriangulation);
    }

    let faces: Vec<[usize; 3]> = tri
        .inner_faces()
        .map(|f| {
            let vs = f.vertices();
            [
                vs[0].fix().index(),
                vs[1].fix().index(),
                vs[2].fix().index(),
            ]
        })
        .collect();
    let rho: Vec<f64> = faces
        .iter()
        .map(|f| {
            let [a, b, c] = f.map(|v| rep[v]);
            let aq = triangle_area(&pq[a], &pq[b], &pq[c]).abs();
            let adb = triangle_area(&pdb[a], &pdb[b], &pdb[c]).abs();
            adb / aq.max(TINY_AREA)
        })
        .collect();
    let med = median(&mut rho.clone());

    let mut bad = vec![0usize; rep.len()];
    let mut total = vec![0usize; rep.len()];
    for (f, r) in faces.iter().zip(&rho) {
        let deviant = if med > TINY_AREA {
            (r - med).abs() / med > eps_topo
        } else {
            *r > TINY_AREA
        };
        for &v in f {
            total[v] += 1;
            bad[v] += usize::from(deviant);
        }
    }
    Ok(vertex_of
        .iter()
        .map(|&v| {
            if total[v] == 0 {
                0.0
            } else {
                bad[v] as f64 / total[v] as f64
            }
        })
        .collect())
}

/// Drops matches whose negative vote rate exceeds one half.
pub fn topo_filter(tex: &MatchSet, cfg: &FilterConfig) -> Result<MatchSet, FilterError> {
    tex.expect(Stage::Textured)?;
    let pq: Vec<_> = tex.items().iter().map(|m| m.pq).collect();
    let pdb: Vec<_> = tex.items().iter().map(|m| m.pdb).collect();
    let kappa = negative_vote_rates(&pq, &pdb, cfg.eps_topo)?;
    let keep: Vec<usize> = (0..kappa.len()).filter(|&k| kappa[k] <= 0.5).collect();
    Ok(tex.retain_positions(&keep, Stage::Topo))
}
