//! White-box sponge search by projected L-BFGS.
//!
//! Minimises the negated sum of per-layer activation L2 norms over the input
//! box [0, 1]^N: denser activations everywhere mean fewer skippable
//! operations. Two-loop recursion over a bounded history, Armijo
//! backtracking line search, and projection back into the box after every
//! step; if the line search stalls, the step falls back to plain steepest
//! descent.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::attacks::AttackError;
use crate::vision::{sponge_loss, sponge_loss_grad, CnnModel, Image};

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsConfig {
    /// History pairs kept for the two-loop recursion.
    pub memory: usize,
    pub max_steps: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo_c: f64,
    pub initial_step: f64,
    /// Line-search halvings before falling back to steepest descent.
    pub max_backtracks: usize,
    /// Stop when the projected gradient norm falls below this.
    pub grad_tolerance: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            memory: 10,
            max_steps: 200,
            armijo_c: 1e-4,
            initial_step: 1.0,
            max_backtracks: 30,
            grad_tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    /// Best iterate found, inside [0, 1]^N.
    pub image: Image,
    /// Objective at the best iterate (never above the initial objective).
    pub objective: f64,
    pub initial_objective: f64,
    pub steps_taken: usize,
    /// Steps where backtracking failed and steepest descent was used.
    pub fallback_steps: usize,
}

struct HistoryPair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Run the attack from `init`, which must lie in [0, 1]^N.
pub fn lbfgs_attack(
    model: &CnnModel,
    init: &Image,
    config: &LbfgsConfig,
) -> Result<LbfgsResult, AttackError> {
    let mut x = init.clone();
    project(&mut x.data);

    let (mut fx, mut grad) = sponge_loss_grad(model, &x)?;
    check_finite(&grad, 0)?;
    let initial_objective = fx;

    let mut best = x.clone();
    let mut best_f = fx;
    let mut history: VecDeque<HistoryPair> = VecDeque::with_capacity(config.memory);
    let mut fallback_steps = 0usize;
    let mut steps_taken = 0usize;

    for step in 1..=config.max_steps {
        let mut direction = two_loop_direction(&grad, &history);
        if history.is_empty() {
            // No curvature information yet: unit step along the gradient.
            let n = norm(&direction).max(1e-12);
            for v in direction.iter_mut() {
                *v /= n;
            }
        }
        // Descent check; a bad curvature history can flip the direction.
        let dir_dot_grad = dot(&direction, &grad);
        let (direction, dir_dot_grad) = if dir_dot_grad < 0.0 {
            (direction, dir_dot_grad)
        } else {
            let mut d = grad.clone();
            let n = norm(&d).max(1e-12);
            for v in d.iter_mut() {
                *v = -*v / n;
            }
            let g = dot(&d, &grad);
            (d, g)
        };

        // Backtracking Armijo line search on the projected path.
        let mut t = config.initial_step;
        let mut accepted = None;
        for _ in 0..config.max_backtracks {
            let mut candidate = x.clone();
            for (c, d) in candidate.data.iter_mut().zip(direction.iter()) {
                *c += t * d;
            }
            project(&mut candidate.data);
            let f_new = sponge_loss(model, &candidate)?;
            if f_new <= fx + config.armijo_c * t * dir_dot_grad {
                accepted = Some((candidate, f_new));
                break;
            }
            t *= 0.5;
        }

        let (x_new, f_new) = match accepted {
            Some(found) => found,
            None => {
                // Steepest-descent fallback with a conservative fixed step.
                fallback_steps += 1;
                let g_norm = norm(&grad).max(1e-12);
                let mut candidate = x.clone();
                for (c, g) in candidate.data.iter_mut().zip(grad.iter()) {
                    *c -= (0.05 / g_norm) * g;
                }
                project(&mut candidate.data);
                let f_new = sponge_loss(model, &candidate)?;
                (candidate, f_new)
            }
        };

        let (_, grad_new) = sponge_loss_grad(model, &x_new)?;
        check_finite(&grad_new, step)?;

        let s: Vec<f64> = x_new
            .data
            .iter()
            .zip(x.data.iter())
            .map(|(a, b)| a - b)
            .collect();
        let y: Vec<f64> = grad_new
            .iter()
            .zip(grad.iter())
            .map(|(a, b)| a - b)
            .collect();
        let sy = dot(&s, &y);
        // Projection can break the curvature condition; skip those pairs.
        if sy > 1e-12 {
            if history.len() == config.memory {
                history.pop_front();
            }
            history.push_back(HistoryPair {
                s,
                y,
                rho: 1.0 / sy,
            });
        }

        x = x_new;
        fx = f_new;
        grad = grad_new;
        steps_taken = step;

        if fx < best_f {
            best_f = fx;
            best = x.clone();
        }

        if projected_grad_norm(&x.data, &grad) < config.grad_tolerance {
            break;
        }
    }

    Ok(LbfgsResult {
        image: best,
        objective: best_f,
        initial_objective,
        steps_taken,
        fallback_steps,
    })
}

fn two_loop_direction(grad: &[f64], history: &VecDeque<HistoryPair>) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for pair in history.iter().rev() {
        let alpha = pair.rho * dot(&pair.s, &q);
        for (qv, yv) in q.iter_mut().zip(pair.y.iter()) {
            *qv -= alpha * yv;
        }
        alphas.push(alpha);
    }
    // Initial scaling by the most recent curvature pair.
    if let Some(last) = history.back() {
        let yy = dot(&last.y, &last.y);
        if yy > 0.0 {
            let gamma = dot(&last.s, &last.y) / yy;
            for qv in q.iter_mut() {
                *qv *= gamma;
            }
        }
    }
    for (pair, alpha) in history.iter().zip(alphas.iter().rev()) {
        let beta = pair.rho * dot(&pair.y, &q);
        for (qv, sv) in q.iter_mut().zip(pair.s.iter()) {
            *qv += (alpha - beta) * sv;
        }
    }
    for qv in q.iter_mut() {
        *qv = -*qv;
    }
    q
}

fn project(data: &mut [f64]) {
    for v in data.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
}

/// Gradient norm ignoring components that push against an active bound.
fn projected_grad_norm(x: &[f64], grad: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (xv, gv) in x.iter().zip(grad.iter()) {
        let blocked = (*xv <= 0.0 && *gv > 0.0) || (*xv >= 1.0 && *gv < 0.0);
        if !blocked {
            acc += gv * gv;
        }
    }
    crate::math::sqrt(acc)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    crate::math::sqrt(dot(a, a))
}

fn check_finite(grad: &[f64], step: usize) -> Result<(), AttackError> {
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(AttackError::NonFiniteGradient { step });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vision::{CnnModel, Layer};
    use alloc::vec;

    /// y = w . x with positive weights: the activation norm is maximised at
    /// the all-ones corner of the box.
    #[test]
    fn positive_linear_layer_drives_input_to_all_ones() {
        let model = CnnModel {
            input_shape: (1, 1, 4),
            layers: vec![Layer::Linear {
                outputs: 1,
                inputs: 4,
                weights: vec![0.5, 1.0, 2.0, 0.25],
                bias: vec![0.0],
                relu: false,
            }],
            num_classes: 1,
        };
        model.validate().unwrap();
        let init = Image::filled(1, 1, 4, 0.25);
        let result = lbfgs_attack(&model, &init, &LbfgsConfig::default()).unwrap();
        for v in &result.image.data {
            assert!(*v > 0.999, "expected corner solution, got {v}");
        }
    }

    #[test]
    fn objective_never_exceeds_initial_value() {
        let model = crate::zoo::reference_cnn();
        let mut rng = crate::rng_from_seed(41);
        for _ in 0..5 {
            let init = crate::corpus::random_image(&mut rng, 1, 8, 8);
            let result = lbfgs_attack(
                &model,
                &init,
                &LbfgsConfig {
                    max_steps: 40,
                    ..LbfgsConfig::default()
                },
            )
            .unwrap();
            assert!(result.objective <= result.initial_objective);
        }
    }

    #[test]
    fn result_beats_the_best_of_random_sampling() {
        let model = crate::zoo::reference_cnn();
        let mut rng = crate::rng_from_seed(43);
        let init = crate::corpus::random_image(&mut rng, 1, 8, 8);
        let result = lbfgs_attack(&model, &init, &LbfgsConfig::default()).unwrap();
        let attacked = crate::vision::cnn_forward(&model, &result.image)
            .unwrap()
            .2
            .overall_density;
        let mut best_random = 0.0f64;
        for _ in 0..1000 {
            let image = crate::corpus::random_image(&mut rng, 1, 8, 8);
            let d = crate::vision::cnn_forward(&model, &image)
                .unwrap()
                .2
                .overall_density;
            best_random = best_random.max(d);
        }
        assert!(
            attacked >= best_random,
            "attack density {attacked} below random maximum {best_random}"
        );
    }

    #[test]
    fn iterates_stay_inside_the_box() {
        let model = crate::zoo::reference_cnn();
        let init = Image::filled(1, 8, 8, 0.5);
        let result = lbfgs_attack(&model, &init, &LbfgsConfig::default()).unwrap();
        for v in &result.image.data {
            assert!((0.0..=1.0).contains(v));
        }
    }
}
