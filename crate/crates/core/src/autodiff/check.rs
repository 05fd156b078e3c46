use alloc::vec::Vec;

use rand::Rng;

use super::{AutodiffError, Tape, Tensor, Var, MASK_FORBIDDEN};

/// Result of [`finite_difference_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub probes: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

/// Relative errors are measured against `max(|analytic|, |numeric|, FLOOR)`.
const FLOOR: f64 = 1e-3;

/// Compares reverse-mode gradients of `build` with central differences.
///
/// `build` records a graph on a fresh tape from one [`Var`] per input and returns
/// its output. The output is reduced to a scalar by a fixed random projection so
/// that every output entry contributes. `probes` input entries are drawn
/// uniformly (with replacement) across all inputs.
pub fn finite_difference_check<F, R>(
    build: F,
    inputs: &[Tensor],
    probes: usize,
    step: f64,
    rng: &mut R,
) -> Result<GradCheckReport, AutodiffError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, AutodiffError>,
    R: Rng + ?Sized,
{
    let mut projection: Option<Tensor> = None;
    let mut eval = |inputs: &[Tensor], rng: &mut R, grad: bool| -> Result<(f64, Vec<Tensor>), AutodiffError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
        let out = build(&mut tape, &vars)?;
        let proj = projection.get_or_insert_with(|| {
            let shape = tape.value(out).shape().to_vec();
            let n = shape.iter().product();
            Tensor::new(shape, (0..n).map(|_| rng.random_range(0.5..1.5)).collect()).expect("shape")
        });
        let w = tape.constant(proj.clone());
        let weighted = tape.mul(out, w)?;
        let scalar = tape.sum(weighted);
        let value = tape.value(scalar).item();
        if !grad {
            return Ok((value, Vec::new()));
        }
        let g = tape.backward(scalar)?;
        let grads = vars.iter().map(|v| g.wrt(*v).expect("param gradient").clone()).collect();
        Ok((value, grads))
    };

    let (_, analytic) = eval(inputs, rng, true)?;
    let sizes: Vec<usize> = inputs.iter().map(Tensor::len).collect();
    let total: usize = sizes.iter().sum();
    let mut report = GradCheckReport {
        probes: 0,
        max_rel_error: 0.0,
        max_abs_error: 0.0,
    };
    if total == 0 {
        return Ok(report);
    }
    let mut work = inputs.to_vec();
    for _ in 0..probes {
        let mut flat = rng.random_range(0..total);
        let mut which = 0;
        while flat >= sizes[which] {
            flat -= sizes[which];
            which += 1;
        }
        let orig = work[which].data()[flat];
        work[which].data_mut()[flat] = orig + step;
        let (plus, _) = eval(&work, rng, false)?;
        work[which].data_mut()[flat] = orig - step;
        let (minus, _) = eval(&work, rng, false)?;
        work[which].data_mut()[flat] = orig;

        let numeric = (plus - minus) / (2.0 * step);
        let exact = analytic[which].data()[flat];
        let abs = (numeric - exact).abs();
        let rel = abs / exact.abs().max(numeric.abs()).max(FLOOR);
        report.max_abs_error = report.max_abs_error.max(abs);
        report.max_rel_error = report.max_rel_error.max(rel);
        report.probes += 1;
    }
    Ok(report)
}

type Build = fn(&mut Tape, &[Var]) -> Result<Var, AutodiffError>;

/// Runs [`finite_difference_check`] on every primitive of the tape with
/// random inputs, `probes` probes each, step `1e-5`.
pub fn primitive_gradient_suite<R: Rng + ?Sized>(
    probes: usize,
    rng: &mut R,
) -> Result<Vec<(&'static str, GradCheckReport)>, AutodiffError> {
    let cases: [(&str, &[&[usize]], Build); 13] = [
        ("linear", &[&[2, 3, 4], &[4, 5], &[5]], |t, v| t.linear(v[0], v[1], v[2])),
        ("matmul", &[&[2, 3, 4], &[2, 4, 5]], |t, v| t.matmul(v[0], v[1], false)),
        ("matmul_t", &[&[2, 3, 4], &[2, 5, 4]], |t, v| t.matmul(v[0], v[1], true)),
        ("layer_norm", &[&[3, 6], &[6], &[6]], |t, v| t.layer_norm(v[0], v[1], v[2], 1e-5)),
        ("leaky_relu", &[&[4, 5]], |t, v| Ok(t.leaky_relu(v[0], 0.01))),
        ("masked_softmax", &[&[2, 4, 4]], |t, v| {
            let m: Vec<f64> = (0..32)
                .map(|i| if i % 5 == 0 || i >= 28 { MASK_FORBIDDEN } else { 0.0 })
                .collect();
            t.masked_softmax(v[0], &m)
        }),
        ("add", &[&[3, 2], &[3, 2]], |t, v| t.add(v[0], v[1])),
        ("sub", &[&[3, 2], &[3, 2]], |t, v| t.sub(v[0], v[1])),
        ("mul", &[&[3, 2], &[3, 2]], |t, v| t.mul(v[0], v[1])),
        ("add_broadcast", &[&[2, 3, 2], &[3, 2]], |t, v| t.add_broadcast(v[0], v[1])),
        ("scale", &[&[5]], |t, v| Ok(t.scale(v[0], -0.7))),
        ("concat", &[&[2, 3, 2], &[2, 3, 1]], |t, v| t.concat_last(&[v[0], v[1]])),
        ("masked_mse", &[&[2, 4]], |t, v| {
            t.masked_mse(
                v[0],
                &[0.5, -1.0, 2.0, 0.0, 1.0, 1.0, -0.3, 0.2],
                &[1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0],
            )
        }),
    ];
    let mut out = Vec::with_capacity(cases.len());
    for (name, shapes, build) in cases {
        let inputs: Vec<Tensor> = shapes
            .iter()
            .map(|s| {
                let n = s.iter().product();
                Tensor::new(s.to_vec(), (0..n).map(|_| rng.random_range(-1.5..1.5)).collect())
            })
            .collect::<Result<_, _>>()?;
        out.push((name, finite_difference_check(build, &inputs, probes, 1e-5, rng)?));
    }
    Ok(out)
}
