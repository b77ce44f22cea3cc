use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{FusionHead, MiniCNN14, MiniEffNetV2, ModelError};
use crate::audio_io::{AudioClip, CaseConfig, CaseId};
use crate::features::CaseFeatures;
use crate::nn::{join, sigmoid, Module, ParamKind, Tensor};

/// Everything needed to score clips of one routing case.
#[derive(Debug, Clone)]
pub struct CaseModel {
    pub config: CaseConfig,
    pub seed: u64,
    pub effnet: MiniEffNetV2<f32>,
    pub cnn14: MiniCNN14<f32>,
    pub fusion: FusionHead<f32>,
}

impl CaseModel {
    /// Freshly initialized weights; the stage-2 backbone is frozen.
    pub fn new(case: CaseId, seed: u64) -> Self {
        let config = case.config();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let effnet = MiniEffNetV2::new(&mut rng);
        let mut cnn14 = MiniCNN14::new(config.stage2_wavegram, &mut rng);
        cnn14.freeze();
        let fusion = FusionHead::new(config.stage2_tap.dim(), &mut rng);
        Self::from_parts(config, seed, effnet, cnn14, fusion).expect("consistent parts")
    }

    pub fn from_parts(
        config: CaseConfig,
        seed: u64,
        effnet: MiniEffNetV2<f32>,
        mut cnn14: MiniCNN14<f32>,
        fusion: FusionHead<f32>,
    ) -> Result<Self, ModelError> {
        if cnn14.has_wavegram() != config.stage2_wavegram {
            return Err(ModelError::TapMismatch(format!(
                "{} expects wavegram={}",
                config.case_id, config.stage2_wavegram
            )));
        }
        if fusion.e2_dim() != config.stage2_tap.dim() {
            return Err(ModelError::DimMismatch {
                expected: config.stage2_tap.dim(),
                got: fusion.e2_dim(),
            });
        }
        cnn14.freeze();
        Ok(Self {
            config,
            seed,
            effnet,
            cnn14,
            fusion,
        })
    }

    pub fn case(&self) -> CaseId {
        self.config.case_id
    }

    /// `(e1, e2)` for already-extracted features.
    pub fn embeddings(&self, f: &CaseFeatures) -> Result<(Vec<f32>, Vec<f32>), ModelError> {
        let (_, e1) = self.effnet.effnet_forward(&f.stage1)?;
        let e2 = self
            .cnn14
            .cnn14_forward(&f.stage2, f.stage2_wave.as_ref(), self.config.stage2_tap)?;
        Ok((e1, e2))
    }

    pub fn logit(&self, f: &CaseFeatures) -> Result<f32, ModelError> {
        let (e1, e2) = self.embeddings(f)?;
        self.fusion.fuse_forward(&e1, &e2)
    }

    /// Featurizes under this model's case and returns the positive-class
    /// probability.
    pub fn probability(&self, clip: &AudioClip) -> Result<f64, ModelError> {
        let f = CaseFeatures::extract(clip, &self.config)?;
        Ok(sigmoid(f64::from(self.logit(&f)?)))
    }
}

impl Module<f32> for CaseModel {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<f32>, ParamKind)) {
        self.effnet.visit(&join(prefix, "effnet"), f);
        self.cnn14.visit(&join(prefix, "cnn14"), f);
        self.fusion.visit(&join(prefix, "fusion"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<f32>, ParamKind)) {
        self.effnet.visit_mut(&join(prefix, "effnet"), f);
        self.cnn14.visit_mut(&join(prefix, "cnn14"), f);
        self.fusion.visit_mut(&join(prefix, "fusion"), f);
    }
}
