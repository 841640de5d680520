//! Training configuration: model dimensions, optimization constants and the
//! experiment variant switches.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};

/// Model/structure variants exercised by the ablation and fusion grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Full,
    /// Drop the item-item semantic graph entirely; only collaborative signal.
    WoItemGraph,
    /// Single attention round instead of the recursive stack.
    WoRca,
    /// Replace the attention stack with plain feature concatenation.
    WoAttention,
    /// No propagation on either graph.
    WoGcn,
    /// Drop the contrastive alignment objective.
    WoCl,
    /// Train collaborative and semantic branches separately; sum scores late.
    WoDualFusion,
    /// Semantic graph from visual features only.
    CraneV,
    /// Semantic graph from textual features only.
    CraneT,
    /// Semantic graph from concatenated features.
    CraneC,
    /// Semantic graph from summed features.
    CraneS,
    /// Average the per-modality similarity maps before sparsification.
    CraneA,
}

impl Variant {
    pub const ALL: [Variant; 12] = [
        Variant::Full,
        Variant::WoItemGraph,
        Variant::WoRca,
        Variant::WoAttention,
        Variant::WoGcn,
        Variant::WoCl,
        Variant::WoDualFusion,
        Variant::CraneV,
        Variant::CraneT,
        Variant::CraneC,
        Variant::CraneS,
        Variant::CraneA,
    ];

    /// The six structural ablations plus the full model.
    pub const ABLATION_SET: [Variant; 7] = [
        Variant::Full,
        Variant::WoItemGraph,
        Variant::WoRca,
        Variant::WoAttention,
        Variant::WoGcn,
        Variant::WoCl,
        Variant::WoDualFusion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::WoItemGraph => "wo_item_graph",
            Variant::WoRca => "wo_rca",
            Variant::WoAttention => "wo_attention",
            Variant::WoGcn => "wo_gcn",
            Variant::WoCl => "wo_cl",
            Variant::WoDualFusion => "wo_dual_fusion",
            Variant::CraneV => "crane_v",
            Variant::CraneT => "crane_t",
            Variant::CraneC => "crane_c",
            Variant::CraneS => "crane_s",
            Variant::CraneA => "crane_a",
        }
    }

    pub fn parse(s: &str) -> Result<Variant> {
        Variant::ALL
            .iter()
            .copied()
            .find(|v| v.name() == s)
            .ok_or_else(|| CoreError::InvalidInput(format!("unknown variant '{s}'")))
    }

    /// Whether this variant runs the recursive attention stack.
    pub fn uses_rca(self) -> bool {
        matches!(
            self,
            Variant::Full | Variant::WoRca | Variant::WoCl | Variant::WoDualFusion
        )
    }

    /// Whether this variant builds the item-item semantic graph at all.
    pub fn uses_semantic_graph(self) -> bool {
        !matches!(self, Variant::WoItemGraph | Variant::WoGcn)
    }
}

/// How user modality profiles aggregate interacted-item features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    Sum,
    Mean,
    Max,
    Attention,
}

impl Aggregation {
    pub const ALL: [Aggregation; 4] = [
        Aggregation::Sum,
        Aggregation::Mean,
        Aggregation::Max,
        Aggregation::Attention,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Aggregation::Sum => "sum",
            Aggregation::Mean => "mean",
            Aggregation::Max => "max",
            Aggregation::Attention => "attention",
        }
    }

    pub fn parse(s: &str) -> Result<Aggregation> {
        Aggregation::ALL
            .iter()
            .copied()
            .find(|a| a.name() == s)
            .ok_or_else(|| CoreError::InvalidInput(format!("unknown aggregation '{s}'")))
    }
}

/// Activation applied between collaborative-graph layers when the literal
/// weighted convolution form is enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    None,
    LeakyRelu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::None => "none",
            Activation::LeakyRelu => "leaky_relu",
        }
    }

    pub fn parse(s: &str) -> Result<Activation> {
        match s {
            "none" => Ok(Activation::None),
            "leaky_relu" => Ok(Activation::LeakyRelu),
            _ => Err(CoreError::InvalidInput(format!("unknown activation '{s}'"))),
        }
    }
}

/// Negative slope used by [`Activation::LeakyRelu`].
pub const LEAKY_SLOPE: f64 = 0.01;

/// Collaborative-graph layer readout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerReadout {
    /// Mean over layer outputs 0..=L.
    Mean,
    /// Final layer only.
    Last,
}

impl LayerReadout {
    pub fn name(self) -> &'static str {
        match self {
            LayerReadout::Mean => "mean",
            LayerReadout::Last => "last",
        }
    }

    pub fn parse(s: &str) -> Result<LayerReadout> {
        match s {
            "mean" => Ok(LayerReadout::Mean),
            "last" => Ok(LayerReadout::Last),
            _ => Err(CoreError::InvalidInput(format!("unknown readout '{s}'"))),
        }
    }
}

/// Every knob of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Collaborative embedding dimension.
    pub d: usize,
    /// Latent dimension of projected modality features.
    pub d_lat: usize,
    /// Joint-space dimension inside the attention stack.
    pub d_joint: usize,
    pub l_ui: usize,
    pub l_ii: usize,
    /// Attention recursion depth.
    pub r: usize,
    /// Semantic neighbor count.
    pub k: usize,
    pub lr: f64,
    /// L2 weight.
    pub lambda: f64,
    /// Contrastive temperature.
    pub tau: f64,
    /// Contrastive weight.
    pub beta: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Semantic graph rebuild cadence in epochs; 0 builds once and freezes.
    pub rebuild_interval: usize,
    pub trainable_gcn: bool,
    pub gcn_activation: Activation,
    pub layer_readout: LayerReadout,
    pub variant: Variant,
    pub aggregation: Aggregation,
    pub seed: u64,
    /// Sequential bit-reproducible kernels when true (the default).
    pub deterministic: bool,
    /// Row-block size for the blocked similarity / correlation kernels.
    pub block: usize,
    /// Disable edge sampling (evaluation always disables it internally).
    pub use_dropedge: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d: 64,
            d_lat: 64,
            d_joint: 64,
            l_ui: 2,
            l_ii: 1,
            r: 3,
            k: 15,
            lr: 1e-4,
            lambda: 1e-3,
            tau: 0.6,
            beta: 0.8,
            batch_size: 1024,
            max_epochs: 250,
            patience: 5,
            rebuild_interval: 1,
            trainable_gcn: false,
            gcn_activation: Activation::None,
            layer_readout: LayerReadout::Mean,
            variant: Variant::Full,
            aggregation: Aggregation::Sum,
            seed: 9,
            deterministic: true,
            block: 512,
            use_dropedge: true,
        }
    }
}

impl TrainConfig {
    /// Published per-dataset settings; unknown names get the defaults.
    pub fn for_dataset(name: &str) -> TrainConfig {
        let mut c = TrainConfig::default();
        match name {
            "baby" => {
                c.r = 3;
                c.k = 15;
                c.lr = 1e-4;
                c.lambda = 1e-3;
                c.tau = 0.6;
                c.beta = 0.8;
            }
            "sports" => {
                c.r = 2;
                c.k = 15;
                c.lr = 5e-5;
                c.lambda = 1e-3;
                c.tau = 0.5;
                c.beta = 0.7;
            }
            "clothing" => {
                c.r = 3;
                c.k = 10;
                c.lr = 1e-4;
                c.lambda = 1e-3;
                c.tau = 0.4;
                c.beta = 0.7;
            }
            "electronics" => {
                c.r = 3;
                c.k = 10;
                c.lr = 1e-4;
                c.lambda = 5e-4;
                c.tau = 0.5;
                c.beta = 0.6;
            }
            _ => {}
        }
        c
    }

    /// Effective recursion depth after applying the variant switch.
    pub fn effective_r(&self) -> usize {
        match self.variant {
            Variant::WoRca => 1,
            v if v.uses_rca() => self.r,
            _ => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive: [(&str, usize); 4] = [
            ("d", self.d),
            ("d_lat", self.d_lat),
            ("d_joint", self.d_joint),
            ("k", self.k),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(CoreError::InvalidInput(format!("{name} must be positive")));
            }
        }
        if self.tau <= 0.0 {
            return Err(CoreError::InvalidInput("tau must be > 0".into()));
        }
        if self.beta < 0.0 || self.lambda < 0.0 {
            return Err(CoreError::InvalidInput(
                "beta and lambda must be nonnegative".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(CoreError::InvalidInput("batch_size must be positive".into()));
        }
        if self.variant == Variant::WoGcn && self.trainable_gcn {
            return Err(CoreError::InvalidInput(
                "wo_gcn removes propagation; trainable_gcn has no effect".into(),
            ));
        }
        Ok(())
    }

    /// Variants requested by default for the ablation grid.
    pub fn default_ablation_variants() -> Vec<Variant> {
        Variant::ABLATION_SET.to_vec()
    }
}
