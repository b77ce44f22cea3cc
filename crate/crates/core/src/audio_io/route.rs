use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Anchor rates of the three processing cases, ascending.
pub const CASE_ANCHORS: [u32; 3] = [4000, 8000, 48000];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CaseId {
    #[serde(rename = "CASE_4K")]
    Case4k,
    #[serde(rename = "CASE_8K")]
    Case8k,
    #[serde(rename = "CASE_48K")]
    Case48k,
}

impl CaseId {
    pub const ALL: [CaseId; 3] = [CaseId::Case4k, CaseId::Case8k, CaseId::Case48k];

    pub fn as_str(self) -> &'static str {
        match self {
            CaseId::Case4k => "CASE_4K",
            CaseId::Case8k => "CASE_8K",
            CaseId::Case48k => "CASE_48K",
        }
    }

    pub fn anchor_rate(self) -> u32 {
        match self {
            CaseId::Case4k => 4000,
            CaseId::Case8k => 8000,
            CaseId::Case48k => 48000,
        }
    }

    pub fn config(self) -> CaseConfig {
        match self {
            CaseId::Case4k => CaseConfig {
                case_id: self,
                stage1_rate: 4000,
                stage1_mel_bins: 256,
                stage2_rate: 8000,
                stage2_mel_bins: 128,
                stage2_tap: Stage2Tap::ConvBlock6Gem,
                stage2_wavegram: false,
            },
            CaseId::Case8k => CaseConfig {
                case_id: self,
                stage1_rate: 8000,
                stage1_mel_bins: 128,
                stage2_rate: 8000,
                stage2_mel_bins: 128,
                stage2_tap: Stage2Tap::EmbeddingLayer,
                stage2_wavegram: false,
            },
            CaseId::Case48k => CaseConfig {
                case_id: self,
                stage1_rate: 48000,
                stage1_mel_bins: 128,
                stage2_rate: 32000,
                stage2_mel_bins: 128,
                stage2_tap: Stage2Tap::EmbeddingLayer,
                stage2_wavegram: true,
            },
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CaseId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CaseId::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown case {s:?}"))
    }
}

/// Which stage-2 layer supplies the second embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage2Tap {
    /// GeM pooling over the block-6 feature map (128 dims).
    #[serde(rename = "CONV_BLOCK6_GEM")]
    ConvBlock6Gem,
    /// Global average pool followed by the 128→64 embedding layer.
    #[serde(rename = "EMBEDDING_LAYER")]
    EmbeddingLayer,
}

impl Stage2Tap {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage2Tap::ConvBlock6Gem => "CONV_BLOCK6_GEM",
            Stage2Tap::EmbeddingLayer => "EMBEDDING_LAYER",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            Stage2Tap::ConvBlock6Gem => 128,
            Stage2Tap::EmbeddingLayer => 64,
        }
    }
}

impl fmt::Display for Stage2Tap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-case processing record: rates and mel bins for both stages plus the
/// stage-2 embedding tap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CaseConfig {
    pub case_id: CaseId,
    pub stage1_rate: u32,
    pub stage1_mel_bins: usize,
    pub stage2_rate: u32,
    pub stage2_mel_bins: usize,
    pub stage2_tap: Stage2Tap,
    pub stage2_wavegram: bool,
}

/// Picks the case whose anchor rate is closest to `sample_rate`; equidistant
/// rates go to the higher anchor.
pub fn route(sample_rate: u32) -> CaseConfig {
    let mut best = CaseId::Case4k;
    let mut best_dist = u32::MAX;
    for case in CaseId::ALL {
        let dist = sample_rate.abs_diff(case.anchor_rate());
        // Anchors ascend, so `<=` hands ties to the higher one.
        if dist <= best_dist {
            best = case;
            best_dist = dist;
        }
    }
    best.config()
}

/// The routing table as printed by the `routes` subcommand.
pub fn routing_table() -> String {
    let mut out = format!(
        "{:<9} {:>6} {:>9} {:>11} {:>9} {:>11}  {:<15}  {}\n",
        "case", "anchor", "stage1_hz", "stage1_mels", "stage2_hz", "stage2_mels", "stage2_tap", "wavegram"
    );
    for case in CaseId::ALL {
        let c = case.config();
        out.push_str(&format!(
            "{:<9} {:>6} {:>9} {:>11} {:>9} {:>11}  {:<15}  {}\n",
            c.case_id.as_str(),
            case.anchor_rate(),
            c.stage1_rate,
            c.stage1_mel_bins,
            c.stage2_rate,
            c.stage2_mel_bins,
            c.stage2_tap.as_str(),
            c.stage2_wavegram
        ));
    }
    out
}
