//! Trilinear interpolation over `(v, soc, t)` with infeasible corners dropped.

use super::grid::{AxisPos, StepAxes};

/// Up to eight weighted corner nodes of one query.
#[derive(Debug, Clone, Copy)]
pub struct Corners {
    pub idx: [usize; 8],
    pub w: [f64; 8],
    pub n: usize,
}

impl Corners {
    /// Corners with nonzero weight, in a fixed order.
    #[inline]
    pub fn new(layer: &StepAxes, pv: AxisPos, ps: AxisPos, pt: AxisPos) -> Self {
        let mut c = Corners {
            idx: [0; 8],
            w: [0.0; 8],
            n: 0,
        };
        let pairs = |p: AxisPos| -> [(usize, f64); 2] { [(p.i, 1.0 - p.frac), (p.i + 1, p.frac)] };
        for (iv, wv) in pairs(pv) {
            if wv == 0.0 {
                continue;
            }
            for (is, ws) in pairs(ps) {
                if ws == 0.0 {
                    continue;
                }
                for (it, wt) in pairs(pt) {
                    if wt == 0.0 {
                        continue;
                    }
                    c.idx[c.n] = layer.index(iv, is, it);
                    c.w[c.n] = wv * ws * wt;
                    c.n += 1;
                }
            }
        }
        c
    }

    /// Single node with weight one.
    #[inline]
    pub fn node(idx: usize) -> Self {
        let mut c = Corners {
            idx: [0; 8],
            w: [0.0; 8],
            n: 1,
        };
        c.idx[0] = idx;
        c.w[0] = 1.0;
        c
    }

    /// Weighted mean of the finite corner values, renormalized; `+inf` when
    /// none is finite.
    #[inline]
    pub fn combine(&self, mut value: impl FnMut(usize) -> f64) -> f64 {
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for k in 0..self.n {
            let j = value(self.idx[k]);
            if j.is_finite() {
                acc += self.w[k] * j;
                wsum += self.w[k];
            }
        }
        if wsum > 0.0 {
            acc / wsum
        } else {
            f64::INFINITY
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::grid::Axis;

    fn layer() -> StepAxes {
        StepAxes {
            v: Axis::new(0.0, 1.0, 3),
            soc: Axis::new(0.2, 0.01, 2),
            t: Axis::new(0.0, 1.0, 2),
        }
    }

    #[test]
    fn weights_sum_to_one() {
        let l = layer();
        let c = Corners::new(
            &l,
            l.v.locate(0.3).unwrap(),
            l.soc.locate(0.207).unwrap(),
            l.t.locate(0.5).unwrap(),
        );
        assert_eq!(c.n, 8);
        let s: f64 = c.w[..c.n].iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infinite_corners_renormalize() {
        let l = layer();
        let c = Corners::new(
            &l,
            l.v.locate(0.5).unwrap(),
            l.soc.locate(0.2).unwrap(),
            l.t.locate(0.0).unwrap(),
        );
        assert_eq!(c.n, 2);
        let vals = |i: usize| if i == l.index(1, 0, 0) { f64::INFINITY } else { 4.0 };
        assert_eq!(c.combine(vals), 4.0);
        assert_eq!(c.combine(|_| f64::INFINITY), f64::INFINITY);
        assert_eq!(c.combine(|i| if i == 0 { 2.0 } else { 6.0 }), 4.0);
    }
}
