//! Training losses: border-aware MSE and the edge-aware flow smoothness
//! regularizer.

use crate::error::{Error, Result};
use crate::tensor::{FlowField, Plane};

/// Scalar loss plus its gradient with respect to the estimate.
#[derive(Debug, Clone)]
pub struct LossValue {
    pub loss: f64,
    pub d_estimate: Plane,
}

/// Mean squared error over the region left after cropping `border` pixels
/// per side; the gradient is `2 (e - t) / N` inside that region and 0 on
/// the border.
pub fn mse_loss(estimate: &Plane, target: &Plane, border: usize) -> Result<LossValue> {
    if !estimate.same_dims(target) {
        return Err(Error::DimensionMismatch(format!(
            "estimate {}x{} vs target {}x{}",
            estimate.width(),
            estimate.height(),
            target.width(),
            target.height()
        )));
    }
    let (w, h) = estimate.dims();
    if 2 * border >= w || 2 * border >= h {
        return Err(Error::InvalidParameter(format!(
            "border {border} leaves no interior in a {w}x{h} plane"
        )));
    }
    let n = ((w - 2 * border) * (h - 2 * border)) as f64;
    let mut loss = 0.0;
    let mut grad = Plane::new(w, h);
    for y in border..h - border {
        for x in border..w - border {
            let d = estimate.get(x, y) - target.get(x, y);
            loss += d * d;
            grad.set(x, y, 2.0 * d / n);
        }
    }
    Ok(LossValue {
        loss: loss / n,
        d_estimate: grad,
    })
}

/// Scalar smoothness loss plus its gradient with respect to the flow.
#[derive(Debug, Clone)]
pub struct SmoothnessValue {
    pub loss: f64,
    pub d_flow: FlowField,
}

/// Edge-aware total-variation penalty on the flow:
///
/// `L = sum_x e^{-|dI/dx|} (|du/dx| + |dv/dx|) + sum_y e^{-|dI/dy|} (|du/dy| + |dv/dy|)`
///
/// using forward differences; the last column (respectively row) carries no
/// horizontal (vertical) term. The subgradient at exact zero differences
/// is 0.
pub fn smoothness_loss(flow: &FlowField, image: &Plane) -> Result<SmoothnessValue> {
    if flow.dims() != image.dims() {
        return Err(Error::DimensionMismatch(format!(
            "flow {}x{} vs image {}x{}",
            flow.width(),
            flow.height(),
            image.width(),
            image.height()
        )));
    }
    let (w, h) = image.dims();
    let mut loss = 0.0;
    let mut d_u = Plane::new(w, h);
    let mut d_v = Plane::new(w, h);

    let mut add_pair = |loss: &mut f64,
                        d: &mut Plane,
                        weight: f64,
                        lo: (usize, usize),
                        hi: (usize, usize),
                        plane: &Plane| {
        let diff = plane.get(hi.0, hi.1) - plane.get(lo.0, lo.1);
        *loss += weight * diff.abs();
        let s = if diff == 0.0 { 0.0 } else { weight * diff.signum() };
        d.set(hi.0, hi.1, d.get(hi.0, hi.1) + s);
        d.set(lo.0, lo.1, d.get(lo.0, lo.1) - s);
    };

    for y in 0..h {
        for x in 0..w {
            if x + 1 < w {
                let wx = (-(image.get(x + 1, y) - image.get(x, y)).abs()).exp();
                add_pair(&mut loss, &mut d_u, wx, (x, y), (x + 1, y), flow.u());
                add_pair(&mut loss, &mut d_v, wx, (x, y), (x + 1, y), flow.v());
            }
            if y + 1 < h {
                let wy = (-(image.get(x, y + 1) - image.get(x, y)).abs()).exp();
                add_pair(&mut loss, &mut d_u, wy, (x, y), (x, y + 1), flow.u());
                add_pair(&mut loss, &mut d_v, wy, (x, y), (x, y + 1), flow.v());
            }
        }
    }

    Ok(SmoothnessValue {
        loss,
        d_flow: FlowField::new(d_u, d_v)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_zero_for_identical() {
        let p = Plane::from_fn(6, 6, |x, y| (x * y) as f64 * 0.1);
        let l = mse_loss(&p, &p, 1).unwrap();
        assert_eq!(l.loss, 0.0);
        assert!(l.d_estimate.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mse_constant_offset_closed_form() {
        let t = Plane::constant(5, 5, 0.2);
        let e = Plane::constant(5, 5, 0.3);
        let l = mse_loss(&e, &t, 0).unwrap();
        assert!((l.loss - 0.01).abs() < 1e-15);
        // Gradient: 2 * 0.1 / 25 everywhere.
        for &g in l.d_estimate.as_slice() {
            assert!((g - 0.2 / 25.0).abs() < 1e-15);
        }
    }

    #[test]
    fn mse_border_is_excluded() {
        let t = Plane::constant(6, 6, 0.0);
        let mut e = Plane::constant(6, 6, 0.0);
        e.set(0, 0, 5.0);
        let l = mse_loss(&e, &t, 1).unwrap();
        assert_eq!(l.loss, 0.0);
        assert_eq!(l.d_estimate.get(0, 0), 0.0);
        assert!(mse_loss(&e, &Plane::new(5, 6), 0).is_err());
        assert!(mse_loss(&e, &t, 3).is_err());
    }

    #[test]
    fn smoothness_constant_flow_is_zero() {
        let flow = FlowField::constant(5, 4, 1.3, -0.4).unwrap();
        let img = Plane::from_fn(5, 4, |x, y| (x + y) as f64 * 0.1);
        let s = smoothness_loss(&flow, &img).unwrap();
        assert_eq!(s.loss, 0.0);
        assert!(s.d_flow.u().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn smoothness_ramp_closed_form() {
        // u(x, y) = x on a constant image: every horizontal pair costs
        // e^0 * 1, vertical pairs cost nothing.
        let (w, h) = (6, 4);
        let u = Plane::from_fn(w, h, |x, _| x as f64);
        let flow = FlowField::new(u, Plane::new(w, h)).unwrap();
        let img = Plane::constant(w, h, 0.5);
        let s = smoothness_loss(&flow, &img).unwrap();
        assert_eq!(s.loss, ((w - 1) * h) as f64);
    }

    #[test]
    fn smoothness_edge_weight_downscales() {
        // A strong image edge between the two columns shrinks the penalty.
        let u = Plane::from_vec(2, 1, vec![0.0, 1.0]).unwrap();
        let flow = FlowField::new(u, Plane::new(2, 1)).unwrap();
        let flat = Plane::constant(2, 1, 0.5);
        let edge = Plane::from_vec(2, 1, vec![0.0, 2.0]).unwrap();
        let s_flat = smoothness_loss(&flow, &flat).unwrap();
        let s_edge = smoothness_loss(&flow, &edge).unwrap();
        assert_eq!(s_flat.loss, 1.0);
        assert!((s_edge.loss - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn smoothness_gradient_signs() {
        let u = Plane::from_vec(3, 1, vec![0.0, 2.0, 1.0]).unwrap();
        let flow = FlowField::new(u, Plane::new(3, 1)).unwrap();
        let img = Plane::constant(3, 1, 0.0);
        let s = smoothness_loss(&flow, &img).unwrap();
        assert_eq!(s.loss, 3.0);
        // d/du0 = -sign(u1-u0) = -1; d/du1 = +1 - 1 = ... sign(u1-u0)=+1,
        // sign(u2-u1)=-1 -> d/du1 = +1 + 1 = 2; d/du2 = -1.
        assert_eq!(s.d_flow.u().get(0, 0), -1.0);
        assert_eq!(s.d_flow.u().get(1, 0), 2.0);
        assert_eq!(s.d_flow.u().get(2, 0), -1.0);
    }
}
