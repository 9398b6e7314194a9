use rand::Rng;

use super::{NumError, ParamSet, Result, Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub samples: usize,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    /// Every sampled coordinate, in sampling order.
    pub checks: Vec<CoordinateCheck>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateCheck {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

/// Compares tape gradients with central finite differences.
///
/// `loss_fn` records a scalar loss on the given tape. `samples` coordinates
/// are drawn uniformly from all non-frozen parameter values; each is compared
/// against `(L(θ+ε) − L(θ−ε)) / 2ε` with relative error
/// `|a − f| / max(1e-8, |a| + |f|)`.
pub fn grad_check<F, R>(
    params: &mut ParamSet<f64>,
    loss_fn: F,
    eps: f64,
    samples: usize,
    rng: &mut R,
) -> Result<GradCheckReport>
where
    F: for<'a> Fn(&mut Tape<'a, f64>) -> Result<Var>,
    R: Rng + ?Sized,
{
    if !(1e-6..=1e-4).contains(&eps) {
        return Err(NumError::InvalidArgument(format!(
            "finite difference step {eps} outside [1e-6, 1e-4]"
        )));
    }
    let analytic = {
        let mut tape = Tape::new(&*params);
        let loss = loss_fn(&mut tape)?;
        tape.backward(loss)?
    };

    let coords: Vec<(usize, usize)> = params
        .iter()
        .filter(|(_, p)| !p.frozen)
        .flat_map(|(id, p)| (0..p.value.len()).map(move |i| (id.index(), i)))
        .collect();
    if coords.is_empty() {
        return Err(NumError::InvalidArgument("no trainable coordinates".into()));
    }

    let eval = |params: &ParamSet<f64>| -> Result<f64> {
        let mut tape = Tape::new(params);
        let loss = loss_fn(&mut tape)?;
        Ok(tape.value(loss).data()[0])
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        samples,
        worst: None,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        checks: Vec::with_capacity(samples),
    };
    let ids: Vec<_> = params.ids().collect();
    for _ in 0..samples {
        let (pi, i) = coords[rng.gen_range(0..coords.len())];
        let id = ids[pi];
        let a = analytic.get(id).map_or(0.0, |g| g.data()[i]);

        let orig = params.value(id).data()[i];
        params.get_mut(id).value.data_mut()[i] = orig + eps;
        let plus = eval(params);
        params.get_mut(id).value.data_mut()[i] = orig - eps;
        let minus = eval(params);
        params.get_mut(id).value.data_mut()[i] = orig;
        let f = (plus? - minus?) / (2.0 * eps);

        let rel = (a - f).abs() / (a.abs() + f.abs()).max(1e-8);
        if report.worst.is_none() || rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = Some((params.get(id).name.clone(), i));
            report.worst_analytic = a;
            report.worst_numeric = f;
        }
        report.checks.push(CoordinateCheck {
            param: params.get(id).name.clone(),
            index: i,
            analytic: a,
            numeric: f,
            rel_error: rel,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scalar_square_matches_closed_form() {
        let mut ps = ParamSet::<f64>::new();
        let theta = ps.add("theta", Tensor::from_vec(&[1], vec![3.0]).unwrap());
        let loss_fn = move |tape: &mut Tape<'_, f64>| {
            let v = tape.param(theta);
            let sq = tape.mul(v, v)?;
            tape.sum(sq)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let report = grad_check(&mut ps, loss_fn, 1e-5, 1, &mut rng).unwrap();
        assert!((report.worst_analytic - 6.0).abs() < 1e-9);
        assert!((report.worst_numeric - 6.0).abs() < 1e-9);
        // parameters are restored
        assert_eq!(ps.value(theta).data(), &[3.0]);
    }

    #[test]
    fn rejects_step_outside_range() {
        let mut ps = ParamSet::<f64>::new();
        let p = ps.add("p", Tensor::from_vec(&[1], vec![1.0]).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = move |tape: &mut Tape<'_, f64>| {
            let v = tape.param(p);
            tape.sum(v)
        };
        assert!(grad_check(&mut ps, f, 1e-2, 1, &mut rng).is_err());
    }
}
