use num_traits::{Float, FromPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{OrderedLabelSpace, Passage};
use crate::oracle::Generator;

use super::icl::{check_budget, PromptContext};

/// Content-free input used to estimate label bias.
pub const CONTENT_FREE: &str = "N/A";

/// Probabilities over the label space: nonnegative, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityVector<F> {
    values: Vec<F>,
}

impl<F: Float + FromPrimitive> ProbabilityVector<F> {
    pub fn tolerance() -> F {
        let floor = F::from_f64(1e-9).expect("representable");
        floor.max(F::epsilon() * F::from_u32(16).expect("representable"))
    }

    pub fn new(values: Vec<F>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Calibration("empty probability vector".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < F::zero()) {
            return Err(Error::Calibration("probabilities must be finite and nonnegative".into()));
        }
        let total = values.iter().fold(F::zero(), |a, &v| a + v);
        if (total - F::one()).abs() > Self::tolerance() {
            return Err(Error::Calibration(format!(
                "probabilities sum to {}",
                total.to_f64().unwrap_or(f64::NAN)
            )));
        }
        Ok(Self { values })
    }

    /// Normalizes nonnegative weights.
    pub fn from_weights(weights: Vec<F>) -> Result<Self> {
        let total = weights.iter().fold(F::zero(), |a, &v| a + v);
        if !(total > F::zero()) || !total.is_finite() {
            return Err(Error::Calibration("weights must have a positive finite sum".into()));
        }
        Self::new(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// First index of the largest probability.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }
}

/// Componentwise `p_x / p_cf` before renormalization.
pub fn calibration_ratios<F: Float + FromPrimitive>(p_x: &ProbabilityVector<F>, p_cf: &ProbabilityVector<F>) -> Result<Vec<F>> {
    if p_x.len() != p_cf.len() {
        return Err(Error::LengthMismatch {
            left: p_x.len(),
            right: p_cf.len(),
        });
    }
    p_x.values
        .iter()
        .zip(&p_cf.values)
        .enumerate()
        .map(|(j, (&x, &cf))| {
            if cf > F::zero() {
                Ok(x / cf)
            } else {
                Err(Error::CalibrationSingularity(j))
            }
        })
        .collect()
}

/// Divides out the content-free probabilities and renormalizes.
pub fn contextual_calibrate<F: Float + FromPrimitive>(
    p_x: &ProbabilityVector<F>,
    p_cf: &ProbabilityVector<F>,
) -> Result<ProbabilityVector<F>> {
    ProbabilityVector::from_weights(calibration_ratios(p_x, p_cf)?)
}

fn probabilities(prompt: &str, backend: &dyn Generator, space: &OrderedLabelSpace) -> Result<ProbabilityVector<f64>> {
    check_budget(prompt, backend)?;
    match backend.label_probabilities(prompt, space.labels()) {
        None => Err(Error::Unsupported(format!(
            "{} exposes no label probabilities",
            backend.id()
        ))),
        Some(p) => ProbabilityVector::from_weights(p?),
    }
}

/// Label probabilities for `x` under `ctx`.
pub fn label_probabilities(
    ctx: &PromptContext,
    x: Passage<'_>,
    backend: &dyn Generator,
    space: &OrderedLabelSpace,
) -> Result<ProbabilityVector<f64>> {
    probabilities(&ctx.render(x, space)?, backend, space)
}

/// Contextual calibration bound to one prompt context.
#[derive(Debug, Clone)]
pub struct ContextualCalibrator {
    context: PromptContext,
    content_free: ProbabilityVector<f64>,
}

impl ContextualCalibrator {
    /// Estimates the content-free probabilities once.
    pub fn fit(context: PromptContext, content_free: &str, backend: &dyn Generator, space: &OrderedLabelSpace) -> Result<Self> {
        let p_cf = label_probabilities(&context, Passage::new(content_free), backend, space)?;
        Ok(Self {
            context,
            content_free: p_cf,
        })
    }

    pub fn content_free(&self) -> &ProbabilityVector<f64> {
        &self.content_free
    }

    pub fn calibrated(&self, x: Passage<'_>, backend: &dyn Generator, space: &OrderedLabelSpace) -> Result<ProbabilityVector<f64>> {
        let p_x = label_probabilities(&self.context, x, backend, space)?;
        contextual_calibrate(&p_x, &self.content_free)
    }

    pub fn predict(&self, x: Passage<'_>, backend: &dyn Generator, space: &OrderedLabelSpace) -> Result<usize> {
        Ok(self.calibrated(x, backend, space)?.argmax())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::Demonstration;
    use crate::oracle::{GenerationRequest, SimulatedBackend, SimulatedConfig};
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ProbabilityVector<f64> {
        ProbabilityVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn ratio_example_flips_argmax() {
        let p_x = pv(&[0.6, 0.4]);
        let p_cf = pv(&[0.8, 0.2]);
        let raw = calibration_ratios(&p_x, &p_cf).unwrap();
        assert!((raw[0] - 0.75).abs() < 1e-15 && (raw[1] - 2.0).abs() < 1e-15);
        let out = contextual_calibrate(&p_x, &p_cf).unwrap();
        assert_eq!(p_x.argmax(), 0);
        assert_eq!(out.argmax(), 1);
        assert!((out.values()[1] - 2.0 / 2.75).abs() < 1e-15);
    }

    #[test]
    fn identical_inputs_give_uniform() {
        let p = pv(&[0.2, 0.3, 0.5]);
        let out = contextual_calibrate(&p, &p).unwrap();
        for v in out.values() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_content_free_component_is_singular() {
        let err = contextual_calibrate(&pv(&[0.5, 0.5]), &pv(&[1.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::CalibrationSingularity(1)));
        assert!(contextual_calibrate(&pv(&[0.5, 0.5]), &pv(&[0.2, 0.3, 0.5])).is_err());
    }

    #[test]
    fn vector_validation() {
        assert!(ProbabilityVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbabilityVector::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbabilityVector::<f64>::new(vec![]).is_err());
        assert!(ProbabilityVector::new(vec![0.25f32, 0.75]).is_ok());
        assert!(ProbabilityVector::from_weights(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn generation_only_backend_is_unsupported() {
        struct TextOnly;
        impl Generator for TextOnly {
            fn id(&self) -> String {
                "text-only".into()
            }
            fn generate(&self, _: &GenerationRequest<'_>) -> std::result::Result<String, crate::BackendError> {
                Ok("positive".into())
            }
            fn call_count(&self) -> u64 {
                0
            }
        }
        let s = OrderedLabelSpace::new(["negative", "positive"]).unwrap();
        let ctx = PromptContext::new("", vec![Demonstration::new("x", 0)], 0);
        let err = ContextualCalibrator::fit(ctx, CONTENT_FREE, &TextOnly, &s).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn calibration_removes_planted_label_bias() {
        let s = OrderedLabelSpace::new(["negative", "neutral", "positive"]).unwrap();
        let mut cfg = SimulatedConfig::new(0.0, 0.0, 1).with_labels(s.labels());
        cfg.label_bias = Some(vec![1.0, 1.0, 6.0]);
        let backend = SimulatedBackend::new(cfg);
        let ctx = PromptContext::new("", vec![Demonstration::new("d latent=1", 1)], 0);
        let text = "borderline latent=0.9";
        let raw = label_probabilities(&ctx, Passage::new(text), &backend, &s).unwrap();
        assert_eq!(raw.argmax(), 2);
        let cc = ContextualCalibrator::fit(ctx, CONTENT_FREE, &backend, &s).unwrap();
        assert_eq!(cc.predict(Passage::new(text), &backend, &s).unwrap(), 1);
    }

    proptest! {
        #[test]
        fn uniform_content_free_keeps_argmax(w in proptest::collection::vec(0.01f64..1.0, 2..6)) {
            let p_x = ProbabilityVector::from_weights(w.clone()).unwrap();
            let uniform = ProbabilityVector::from_weights(vec![1.0; w.len()]).unwrap();
            let out = contextual_calibrate(&p_x, &uniform).unwrap();
            prop_assert_eq!(out.argmax(), p_x.argmax());
        }

        #[test]
        fn output_is_a_probability_vector(
            w in proptest::collection::vec(0.0f64..1.0, 3),
            cf in proptest::collection::vec(0.01f64..1.0, 3),
        ) {
            prop_assume!(w.iter().sum::<f64>() > 0.0);
            let out = contextual_calibrate(
                &ProbabilityVector::from_weights(w).unwrap(),
                &ProbabilityVector::from_weights(cf).unwrap(),
            ).unwrap();
            prop_assert!(ProbabilityVector::new(out.values().to_vec()).is_ok());
        }
    }
}
