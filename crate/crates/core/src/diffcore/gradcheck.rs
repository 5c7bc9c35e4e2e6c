//! Central finite-difference gradient checks.

use super::{DenseArray, ParamStore, Result, Tape, Var};

pub const DEFAULT_STEP: f64 = 1e-6;

/// `‖a − n‖₂ / max(‖a‖₂, ‖n‖₂, 1e-12)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    norm(&diff) / norm(analytic).max(norm(numeric)).max(1e-12)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// `(label, relative error)` per checked array.
    pub errors: Vec<(String, f64)>,
}

impl GradCheck {
    pub fn max_error(&self) -> f64 {
        self.errors.iter().map(|e| e.1).fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.errors.iter().all(|e| e.1 < tol)
    }
}

fn scalar_output(tape: &mut Tape, out: Var) -> Var {
    if tape.value(out).len() == 1 {
        out
    } else {
        tape.sum(out)
    }
}

/// Checks the gradient of `sum(f(inputs))` with respect to every input.
pub fn check_inputs<F>(inputs: &[DenseArray], step: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |arrays: &[DenseArray]| -> Result<f64> {
        let mut t = Tape::new();
        let vars: Vec<Var> = arrays.iter().map(|a| t.leaf(a.clone())).collect();
        let out = f(&mut t, &vars)?;
        let out = scalar_output(&mut t, out);
        Ok(t.value(out).item())
    };
    let mut t = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|a| t.leaf(a.clone())).collect();
    let out = f(&mut t, &vars)?;
    let out = scalar_output(&mut t, out);
    let grads = t.backward(out);

    let mut errors = Vec::with_capacity(inputs.len());
    let mut work = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads
            .get(*v)
            .map_or_else(|| vec![0.0; inputs[k].len()], |g| g.data().to_vec());
        let mut numeric = vec![0.0; inputs[k].len()];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let x0 = inputs[k].data()[i];
            work[k].data_mut()[i] = x0 + step;
            let up = eval(&work)?;
            work[k].data_mut()[i] = x0 - step;
            let down = eval(&work)?;
            work[k].data_mut()[i] = x0;
            *slot = (up - down) / (2.0 * step);
        }
        errors.push((format!("input{k}"), relative_error(&analytic, &numeric)));
    }
    Ok(GradCheck { errors })
}

/// Checks the gradient of a scalar built from `store` with respect to every parameter.
pub fn check_params<F>(store: &ParamStore, step: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let eval = |s: &ParamStore| -> Result<f64> {
        let mut t = Tape::new();
        let out = f(&mut t, s)?;
        let out = scalar_output(&mut t, out);
        Ok(t.value(out).item())
    };
    let mut t = Tape::new();
    let out = f(&mut t, store)?;
    let out = scalar_output(&mut t, out);
    let grads = t.backward(out);
    let mut acc = store.clone();
    acc.zero_grad();
    acc.accumulate(&grads);

    let mut work = store.clone();
    let mut errors = Vec::with_capacity(store.len());
    for id in store.ids() {
        let n = store.value(id).len();
        let mut numeric = vec![0.0; n];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let x0 = store.value(id).data()[i];
            work.value_mut(id).data_mut()[i] = x0 + step;
            let up = eval(&work)?;
            work.value_mut(id).data_mut()[i] = x0 - step;
            let down = eval(&work)?;
            work.value_mut(id).data_mut()[i] = x0;
            *slot = (up - down) / (2.0 * step);
        }
        errors.push((
            store.name(id).to_string(),
            relative_error(acc.grad(id).data(), &numeric),
        ));
    }
    Ok(GradCheck { errors })
}
