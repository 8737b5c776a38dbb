//! Central finite-difference verification of the analytic gradients.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{Layer, LayerKind};
use super::loss::{loss_and_grad, LossKind, Targets, PROB_FLOOR};
use super::matrix::Matrix;
use super::network::{ForwardPass, Mode, NetworkModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Finite-difference step, within `[1e-7, 1e-4]`.
    pub h: f64,
    pub tolerance: f64,
    /// Coordinates drawn per parameterized layer kind (all, if fewer exist).
    pub samples_per_kind: usize,
    /// Also check the gradient w.r.t. this many input entries.
    pub input_samples: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            h: 1e-5,
            tolerance: 1e-4,
            samples_per_kind: 200,
            input_samples: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KindReport {
    pub kind: Option<LayerKind>,
    pub checked: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Perturbation flipped a ReLU/Hardtanh region or the probability floor.
    pub skipped_kink: usize,
    /// Both gradients below the finite-difference resolution.
    pub skipped_resolution: usize,
    /// Per parameterized layer kind; `kind: None` is the input gradient.
    pub per_kind: Vec<KindReport>,
    pub tolerance: f64,
    pub passed: bool,
}

/// Relative error with the denominator floored at 1e-8.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Piecewise-linear region of every kinked unit, for kink detection.
fn region_pattern(model: &NetworkModel, pass: &ForwardPass) -> Vec<u8> {
    let acts = pass.layer_inputs();
    let mut pat = Vec::new();
    for (i, layer) in model.layers.iter().enumerate() {
        match layer {
            Layer::Relu { .. } => pat.extend(acts[i].data().iter().map(|v| (*v > 0.0) as u8)),
            Layer::Hardtanh01 { .. } => pat.extend(acts[i].data().iter().map(|v| {
                if *v <= 0.0 {
                    0
                } else if *v >= 1.0 {
                    2
                } else {
                    1
                }
            })),
            _ => {}
        }
    }
    pat.extend(pass.output().data().iter().map(|p| (*p > PROB_FLOOR) as u8));
    pat
}

fn eval(model: &NetworkModel, x: &Matrix, targets: &Targets, loss: LossKind) -> Result<(f64, Vec<u8>)> {
    let pass = model.forward(x, Mode::Train)?;
    let (l, _) = loss_and_grad(loss, pass.output(), targets)?;
    Ok((l, region_pattern(model, &pass)))
}

/// Compares backprop gradients with `(L(θ+h) − L(θ−h)) / 2h` on a random
/// subset of parameters (and optionally inputs) using train-mode forward
/// passes on `x`.
///
/// Coordinates whose perturbation moves any unit across a kink are skipped,
/// as are coordinates where both gradients sit below the roundoff floor of
/// the difference quotient, `64 ε max(|L|, 1) / h`.
pub fn gradient_check(
    model: &NetworkModel,
    x: &Matrix,
    targets: &Targets,
    loss: LossKind,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    if !(1e-7..=1e-4).contains(&opts.h) {
        return Err(Error::Config(format!(
            "gradient-check step {} outside [1e-7, 1e-4]",
            opts.h
        )));
    }
    let pass = model.forward(x, Mode::Train)?;
    let (l0, dout) = loss_and_grad(loss, pass.output(), targets)?;
    let analytic = model.backward(&pass, &dout)?;
    let base_pattern = region_pattern(model, &pass);
    let resolution = 64.0 * f64::EPSILON * l0.abs().max(1.0) / opts.h;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let tags = model.param_tags();
    let mut by_kind: BTreeMap<u8, (LayerKind, Vec<(usize, usize)>)> = BTreeMap::new();
    for (t, tag) in tags.iter().enumerate() {
        let key = tag.kind as u8;
        let entry = by_kind.entry(key).or_insert((tag.kind, Vec::new()));
        entry.1.extend((0..analytic.tensors[t].len()).map(|e| (t, e)));
    }

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped_kink: 0,
        skipped_resolution: 0,
        per_kind: Vec::new(),
        tolerance: opts.tolerance,
        passed: true,
    };

    let mut probe = model.clone();
    for (_, (kind, mut coords)) in by_kind {
        coords.shuffle(&mut rng);
        coords.truncate(opts.samples_per_kind);
        let mut kr = KindReport {
            kind: Some(kind),
            checked: 0,
            max_rel_error: 0.0,
        };
        for (t, e) in coords {
            let orig = probe.params()[t][e];
            probe.params_mut()[t][e] = orig + opts.h;
            let (lp, pp) = eval(&probe, x, targets, loss)?;
            probe.params_mut()[t][e] = orig - opts.h;
            let (lm, pm) = eval(&probe, x, targets, loss)?;
            probe.params_mut()[t][e] = orig;
            if pp != base_pattern || pm != base_pattern {
                report.skipped_kink += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * opts.h);
            let a = analytic.tensors[t][e];
            if a.abs().max(numeric.abs()) < resolution {
                report.skipped_resolution += 1;
                continue;
            }
            let err = relative_error(a, numeric);
            kr.checked += 1;
            kr.max_rel_error = kr.max_rel_error.max(err);
        }
        report.checked += kr.checked;
        report.max_rel_error = report.max_rel_error.max(kr.max_rel_error);
        report.per_kind.push(kr);
    }

    if opts.input_samples > 0 {
        let mut coords: Vec<usize> = (0..x.data().len()).collect();
        coords.shuffle(&mut rng);
        coords.truncate(opts.input_samples);
        let mut kr = KindReport {
            kind: None,
            checked: 0,
            max_rel_error: 0.0,
        };
        let mut xp = x.clone();
        for idx in coords {
            let col = idx % x.cols();
            let orig = xp.data()[idx];
            xp.data_mut()[idx] = orig + opts.h;
            let (lp, pp) = eval(model, &xp, targets, loss)?;
            xp.data_mut()[idx] = orig - opts.h;
            let (lm, pm) = eval(model, &xp, targets, loss)?;
            xp.data_mut()[idx] = orig;
            if pp != base_pattern || pm != base_pattern {
                report.skipped_kink += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * opts.h);
            // backward reports d/d(standardized input)
            let a = analytic.input.data()[idx] / model.standardizer.std[col];
            if a.abs().max(numeric.abs()) < resolution {
                report.skipped_resolution += 1;
                continue;
            }
            kr.checked += 1;
            kr.max_rel_error = kr.max_rel_error.max(relative_error(a, numeric));
        }
        report.checked += kr.checked;
        report.max_rel_error = report.max_rel_error.max(kr.max_rel_error);
        report.per_kind.push(kr);
    }

    report.passed = report.checked > 0 && report.max_rel_error <= opts.tolerance;
    Ok(report)
}
