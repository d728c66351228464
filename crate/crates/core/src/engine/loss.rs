//! Rollouts and the one-step (teacher-forced) training loss.

use super::data::{Dataset, Trajectory, TransitionSet};
use super::model::{EngineError, Model, Workspace};
use super::params::{Gradients, ParamVector};

/// Per-dimension loss `delta` and its mean `upsilon`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentLoss {
    pub delta: Vec<f64>,
    pub upsilon: f64,
}

impl ComponentLoss {
    pub fn from_delta(delta: Vec<f64>) -> Self {
        let upsilon = delta.iter().sum::<f64>() / delta.len() as f64;
        ComponentLoss { delta, upsilon }
    }

    /// Loss reported when a model cannot be evaluated.
    pub fn infinite(dim: usize) -> Self {
        ComponentLoss {
            delta: vec![f64::INFINITY; dim],
            upsilon: f64::INFINITY,
        }
    }

    /// Sum over dimensions, i.e. the one-step MSE.
    pub fn total(&self) -> f64 {
        self.delta.iter().sum()
    }
}

impl Model {
    fn check_set(&self, set: &TransitionSet) -> Result<(), EngineError> {
        if set.dx != self.state_dim() || set.du != self.action_dim() {
            return Err(EngineError::SchemaMismatch);
        }
        if set.is_empty() {
            return Err(EngineError::NoTransitions);
        }
        Ok(())
    }

    /// Euler rollout from `x0`, one row per entry of `actions`.
    pub fn rollout(
        &self,
        params: &ParamVector,
        x0: &[f64],
        t0: f64,
        dt: f64,
        actions: &[Vec<f64>],
    ) -> Result<Trajectory, EngineError> {
        self.check_params(params)?;
        let mut ws = self.workspace();
        let steps = actions.len();
        let mut times = Vec::with_capacity(steps);
        let mut states = Vec::with_capacity(steps);
        let mut x = x0.to_vec();
        for k in 0..steps {
            let t = t0 + k as f64 * dt;
            times.push(t);
            states.push(x.clone());
            if k + 1 == steps {
                break;
            }
            let mut next = vec![0.0; x.len()];
            self.euler_step_into(params, &x, &actions[k], t, dt, &mut ws, &mut next)
                .map_err(|e| match e {
                    EngineError::EvalFault { component, target } => EngineError::RolloutFault {
                        step: k,
                        component,
                        target,
                    },
                    other => other,
                })?;
            x = next;
        }
        Ok(Trajectory {
            times,
            states,
            actions: actions.to_vec(),
        })
    }

    /// Teacher-forced per-dimension MSE over every transition.
    pub fn per_component_mse(
        &self,
        params: &ParamVector,
        set: &TransitionSet,
    ) -> Result<ComponentLoss, EngineError> {
        self.check_params(params)?;
        self.check_set(set)?;
        let mut ws = self.workspace();
        let mut sums = vec![0.0; set.dx];
        for i in 0..set.len {
            self.eval_into(params, set.x(i), set.u(i), set.t[i], &mut ws)?;
            let (x, y) = (set.x(i), set.y(i));
            for j in 0..set.dx {
                let r = x[j] + ws.out[j] * set.dt - y[j];
                sums[j] += r * r;
            }
        }
        let n = set.len as f64;
        Ok(ComponentLoss::from_delta(sums.into_iter().map(|s| s / n).collect()))
    }

    /// Mean over transitions of the squared prediction error norm.
    pub fn one_step_mse(&self, params: &ParamVector, set: &TransitionSet) -> Result<f64, EngineError> {
        self.check_params(params)?;
        self.check_set(set)?;
        let mut ws = self.workspace();
        let mut total = 0.0;
        for i in 0..set.len {
            self.eval_into(params, set.x(i), set.u(i), set.t[i], &mut ws)?;
            let (x, y) = (set.x(i), set.y(i));
            let mut sq = 0.0;
            for j in 0..set.dx {
                let r = x[j] + ws.out[j] * set.dt - y[j];
                sq += r * r;
            }
            total += sq;
        }
        Ok(total / set.len as f64)
    }

    /// Batch one-step MSE and its gradient, accumulated into `grads`
    /// (which is overwritten).
    pub fn loss_gradient_into(
        &self,
        params: &ParamVector,
        set: &TransitionSet,
        batch: &[usize],
        ws: &mut Workspace,
        grads: &mut Gradients,
    ) -> Result<f64, EngineError> {
        if batch.is_empty() {
            return Err(EngineError::NoTransitions);
        }
        grads.values.iter_mut().for_each(|g| *g = 0.0);
        let scale = 1.0 / batch.len() as f64;
        let mut upstream = vec![0.0; set.dx];
        let mut total = 0.0;
        for &i in batch {
            self.eval_into(params, set.x(i), set.u(i), set.t[i], ws)?;
            let (x, y) = (set.x(i), set.y(i));
            for j in 0..set.dx {
                let r = x[j] + ws.out[j] * set.dt - y[j];
                total += r * r;
                upstream[j] = 2.0 * r * set.dt * scale;
            }
            self.backward_into(params, &upstream, ws, &mut grads.values);
        }
        if let Some(name) = grads.first_non_finite() {
            return Err(EngineError::GradientFault(name));
        }
        Ok(total * scale)
    }

    pub fn loss_gradient(
        &self,
        params: &ParamVector,
        set: &TransitionSet,
        batch: &[usize],
    ) -> Result<(f64, Gradients), EngineError> {
        self.check_params(params)?;
        self.check_set(set)?;
        let mut ws = self.workspace();
        let mut grads = self.zero_gradients();
        let loss = self.loss_gradient_into(params, set, batch, &mut ws, &mut grads)?;
        Ok((loss, grads))
    }

    /// Full-rollout MSE per dimension: each trajectory is simulated from its
    /// first state with its stored actions and compared on every later row.
    pub fn rollout_mse(&self, params: &ParamVector, data: &Dataset) -> Result<ComponentLoss, EngineError> {
        let dx = self.state_dim();
        let mut sums = vec![0.0; dx];
        let mut count = 0usize;
        for traj in &data.trajectories {
            let sim = self.rollout(params, &traj.states[0], traj.times[0], data.schema.dt, &traj.actions)?;
            for (pred, truth) in sim.states.iter().zip(&traj.states).skip(1) {
                for j in 0..dx {
                    let r = pred[j] - truth[j];
                    sums[j] += r * r;
                }
                count += 1;
            }
        }
        if count == 0 {
            return Err(EngineError::NoTransitions);
        }
        Ok(ComponentLoss::from_delta(
            sums.into_iter().map(|s| s / count as f64).collect(),
        ))
    }
}
