//! Deterministic low-discrepancy offsets in the unit ball.

/// Offsets for every level of the radius schedule. Level `j` owns its own
/// stretch of the sequence, so no two levels share a direction.
#[derive(Debug, Clone)]
pub(crate) struct BallOffsets {
    levels: Vec<Vec<Vec<f64>>>,
}

/// Generalized golden ratio: the positive root of `x^(d+1) = x + 1`.
fn phi(d: usize) -> f64 {
    let mut x = 2.0f64;
    for _ in 0..64 {
        x = (1.0 + x).powf(1.0 / (d as f64 + 1.0));
    }
    x
}

impl BallOffsets {
    pub(crate) fn new(dim: usize, per_level: usize, levels: usize) -> Self {
        let g = phi(dim);
        let alpha: Vec<f64> = (1..=dim).map(|i| 1.0 / g.powi(i as i32)).collect();
        let mut index = 0u64;
        let mut out = Vec::with_capacity(levels);
        for _ in 0..levels {
            let mut level = Vec::with_capacity(per_level);
            while level.len() < per_level {
                index += 1;
                let p: Vec<f64> = alpha
                    .iter()
                    .map(|a| 2.0 * (0.5 + index as f64 * a).fract() - 1.0)
                    .collect();
                let r2: f64 = p.iter().map(|v| v * v).sum();
                if r2 <= 1.0 && r2 > 0.0 {
                    level.push(p);
                }
            }
            out.push(level);
        }
        BallOffsets { levels: out }
    }

    pub(crate) fn level(&self, j: usize) -> &[Vec<f64>] {
        &self.levels[j]
    }

    pub(crate) fn len(&self) -> usize {
        self.levels.len()
    }
}
