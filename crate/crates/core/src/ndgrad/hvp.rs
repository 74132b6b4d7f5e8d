use super::dual::Dual;
use super::mlp::{self, MlpConfig, ParamVector};
use super::tensor::Tensor;
use crate::error::Result;
use crate::operator::{check_dim, DenseSymmetric, LinearOperator};

/// Hessian of the mean cross-entropy of an MLP at fixed parameters on a fixed batch,
/// exposed through Hessian-vector products.
///
/// Products are computed forward-over-reverse: the backward pass is run on dual
/// numbers seeded with `(params, v)`, and the tangent part of the gradient is `H v`.
#[derive(Debug, Clone)]
pub struct HvpOperator {
    config: MlpConfig,
    params: ParamVector,
    inputs: Tensor,
    labels: Vec<usize>,
}

impl HvpOperator {
    pub fn new(
        config: MlpConfig,
        params: ParamVector,
        inputs: Tensor,
        labels: Vec<usize>,
    ) -> Result<Self> {
        mlp::validate_for_hvp(&config, &params, &inputs, &labels)?;
        Ok(Self {
            config,
            params,
            inputs,
            labels,
        })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Gradient of the batch loss at the operator's parameters.
    pub fn gradient(&self) -> Result<ParamVector> {
        Ok(mlp::loss_and_grad(&self.config, &self.params, &self.inputs, &self.labels)?.1)
    }
}

impl LinearOperator<f64> for HvpOperator {
    fn dim(&self) -> usize {
        self.params.len()
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), v.len())?;
        let seeded: Vec<Dual> = self
            .params
            .as_slice()
            .iter()
            .zip(v)
            .map(|(&p, &d)| Dual::new(p, d))
            .collect();
        let (_, grad) = mlp::loss_grad_kernel(
            &self.config.widths(),
            &seeded,
            self.inputs.data(),
            &self.labels,
        );
        Ok(grad.into_iter().map(|g| g.du).collect())
    }
}

/// `H v` for any operator, as a parameter vector.
pub fn hvp<O: LinearOperator<f64> + ?Sized>(op: &O, v: &ParamVector) -> Result<ParamVector> {
    Ok(ParamVector(op.apply(v.as_slice())?))
}

/// The objective `0.5 * w^T A w`, whose Hessian is `A` everywhere.
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    a: DenseSymmetric<f64>,
}

impl QuadraticObjective {
    pub fn new(a: DenseSymmetric<f64>) -> Self {
        Self { a }
    }

    pub fn value(&self, w: &[f64]) -> Result<f64> {
        let aw = self.a.apply(w)?;
        Ok(0.5 * crate::scalar::dot(w, &aw))
    }

    pub fn gradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.a.apply(w)
    }
}

impl LinearOperator<f64> for QuadraticObjective {
    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.a.apply(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn quadratic_hessian_is_a() {
        let q = QuadraticObjective::new(DenseSymmetric::diagonal(&[3.0, 2.0, 1.0]));
        let out = hvp(&q, &ParamVector(vec![1.0, 0.0, 0.0])).unwrap();
        assert_eq!(out.as_slice(), &[3.0, 0.0, 0.0]);
        assert_eq!(q.gradient(&[1.0, 1.0, 1.0]).unwrap(), vec![3.0, 2.0, 1.0]);
        assert_eq!(q.value(&[1.0, 1.0, 1.0]).unwrap(), 3.0);
    }

    #[test]
    fn zero_vector_maps_to_zero() {
        let cfg = MlpConfig::new(3, vec![5], 3).with_seed(1);
        let p = cfg.init_params().unwrap();
        let x = Tensor::from_rows(&[[0.1, 0.5, -0.3], [1.0, 0.2, 0.0]]).unwrap();
        let op = HvpOperator::new(cfg, p, x, vec![0, 2]).unwrap();
        let out = hvp(&op, &ParamVector::zeros(op.dim())).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
        assert!(matches!(op.apply(&[1.0]), Err(Error::Dimension(_))));
    }
}
