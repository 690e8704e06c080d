use crate::error::{Error, Result};
use crate::tensor::{DenseMatrix, Tape, Var};

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-4;

/// Floor on the relative-error denominator so gradients near zero are
/// compared absolutely.
const REL_FLOOR: f64 = 1e-3;

/// Compares tape gradients of a scalar function against central finite
/// differences at `point` and returns the worst relative error over all
/// inputs.
///
/// `f` receives a fresh tape and one parameter leaf per entry of `point`
/// and must return a `1 x 1` output.
pub fn finite_difference_check<F>(f: F, point: &[DenseMatrix], h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[DenseMatrix]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars = tape.params(values);
        let out = f(&mut tape, &vars)?;
        let v = tape.value(out);
        if v.shape() != (1, 1) {
            return Err(Error::shape("finite_difference_check", "1x1", format!("{:?}", v.shape())));
        }
        if !v.item().is_finite() {
            return Err(Error::NonFinite {
                context: "finite_difference_check".into(),
            });
        }
        Ok(v.item())
    };

    let mut tape = Tape::new();
    let vars = tape.params(point);
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<DenseMatrix> = vars.iter().map(|&v| grads.wrt(v)).collect();

    let mut worst: f64 = 0.0;
    let mut probe = point.to_vec();
    for (p, grad) in analytic.iter().enumerate() {
        for j in 0..point[p].len() {
            let orig = point[p].data()[j];
            probe[p].data_mut()[j] = orig + h;
            let up = eval(&probe)?;
            probe[p].data_mut()[j] = orig - h;
            let down = eval(&probe)?;
            probe[p].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let exact = grad.data()[j];
            if !exact.is_finite() {
                return Err(Error::NonFinite {
                    context: "finite_difference_check gradient".into(),
                });
            }
            let scale = numeric.abs().max(exact.abs()).max(REL_FLOOR);
            worst = worst.max((numeric - exact).abs() / scale);
        }
    }
    Ok(worst)
}
