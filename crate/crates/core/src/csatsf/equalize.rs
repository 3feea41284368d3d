use alloc::vec;
use alloc::vec::Vec;

use super::{FilterConfig, FilterError, MatchSet, Stage};

/// `min(q_base + floor(log2(c + 1)), q_max)` in exact integer arithmetic.
pub fn log_quota(count: usize, q_base: usize, q_max: usize) -> usize {
    let lg = (count + 1).ilog2() as usize;
    (q_base + lg).min(q_max)
}

fn cell_of(v: f64, len: usize, g: usize) -> usize {
    let c = v / len as f64 * g as f64;
    if !(c > 0.0) {
        0
    } else {
        (c as usize).min(g - 1)
    }
}

/// Keeps, per cell of a `G x G` grid over the query image, the most confident
/// matches up to the cell's logarithmic quota. Ties go to the lower raw index;
/// the output preserves input order.
pub fn spatial_equalize(
    raw: &MatchSet,
    cfg: &FilterConfig,
    image_size: (usize, usize),
) -> Result<MatchSet, FilterError> {
    raw.expect(Stage::Raw)?;
    let g = cfg.grid_g.max(1);
    let (w, h) = (image_size.0.max(1), image_size.1.max(1));
    let mut cells: Vec<Vec<usize>> = vec![Vec::new(); g * g];
    for (k, m) in raw.items().iter().enumerate() {
        cells[cell_of(m.pq.y, h, g) * g + cell_of(m.pq.x, w, g)].push(k);
    }
    let mut keep = Vec::with_capacity(raw.len());
    for cell in &mut cells {
        let quota = log_quota(cell.len(), cfg.q_base, cfg.q_max);
        cell.sort_by(|&a, &b| {
            raw.items()[b]
                .conf
                .total_cmp(&raw.items()[a].conf)
                .then(a.cmp(&b))
        });
        keep.extend_from_slice(&cell[..quota.min(cell.len())]);
    }
    keep.sort_unstable();
    Ok(raw.retain_positions(&keep, Stage::Equalized))
}
