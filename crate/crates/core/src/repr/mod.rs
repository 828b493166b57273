//! Relation-graph representation: horizontal and depth graphs, fusion, map
//! attention over detection features, and attention against grid tokens.

mod model;
mod nodes;
pub mod ops;

pub use model::{Hooks, ReprDump, ReprInputs, ReprOutput, Representation};
pub use nodes::{
    atdrg_nodes, detection_inputs, grid_tokens, horizontal_cues, ohrg_nodes, pitch_one_hot, positional_encoding,
    vertical_centres, HorizontalCue,
};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdjacencyMode {
    /// Scaled dot product over projected node features.
    #[default]
    Dynamic,
    /// A learned `C × C` logit matrix, row-softmaxed.
    Static,
}

/// Named model variants used by the ablation tooling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Acrg,
    Ohrg,
    Atdrg,
    Multidepth,
    Vertical,
}

impl Variant {
    pub const ALL: [Variant; 5] =
        [Variant::Acrg, Variant::Ohrg, Variant::Atdrg, Variant::Multidepth, Variant::Vertical];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Acrg => "acrg",
            Variant::Ohrg => "ohrg",
            Variant::Atdrg => "atdrg",
            Variant::Multidepth => "multidepth",
            Variant::Vertical => "vertical",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.name() == s)
    }

    /// Applies this variant's switches to `cfg`, clearing the others.
    pub fn apply(self, cfg: &mut ReprConfig) {
        cfg.ohrg_only = self == Variant::Ohrg;
        cfg.atdrg_only = self == Variant::Atdrg;
        cfg.multi_depth_nodes = self == Variant::Multidepth;
        cfg.with_vertical = self == Variant::Vertical;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReprConfig {
    pub categories: usize,
    /// Graph feature width.
    pub d_graph: usize,
    /// Adjacency projection width.
    pub d_adj: usize,
    /// Attention width of the token fusion and size of the output state.
    pub d_model: usize,
    /// Side of the ego-grid; there are `ego_k²` tokens.
    pub ego_k: usize,
    pub adjacency: AdjacencyMode,
    pub ohrg_only: bool,
    pub atdrg_only: bool,
    pub multi_depth_nodes: bool,
    pub with_vertical: bool,
    /// Add a learned target-category embedding to every grid token.
    pub target_embedding: bool,
    /// Add a learned camera-pitch embedding to every grid token.
    pub pitch_embedding: bool,
}

impl Default for ReprConfig {
    fn default() -> Self {
        ReprConfig {
            categories: 16,
            d_graph: 64,
            d_adj: 32,
            d_model: 64,
            ego_k: 7,
            adjacency: AdjacencyMode::Dynamic,
            ohrg_only: false,
            atdrg_only: false,
            multi_depth_nodes: false,
            with_vertical: false,
            target_embedding: true,
            pitch_embedding: true,
        }
    }
}

impl ReprConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.categories == 0 || self.d_graph == 0 || self.d_adj == 0 || self.d_model == 0 || self.ego_k == 0 {
            return Err("representation sizes must be positive".into());
        }
        if self.ohrg_only && self.atdrg_only {
            return Err("ohrg_only and atdrg_only are mutually exclusive".into());
        }
        Ok(())
    }

    pub fn ohrg_width(&self) -> usize {
        self.categories + 2 + self.with_vertical as usize
    }

    pub fn atdrg_width(&self) -> usize {
        self.categories + 2
    }

    pub fn tokens(&self) -> usize {
        self.ego_k * self.ego_k
    }

    pub fn variant(&self) -> Option<Variant> {
        match (self.ohrg_only, self.atdrg_only, self.multi_depth_nodes, self.with_vertical) {
            (false, false, false, false) => Some(Variant::Acrg),
            (true, false, false, false) => Some(Variant::Ohrg),
            (false, true, false, false) => Some(Variant::Atdrg),
            (false, false, true, false) => Some(Variant::Multidepth),
            (false, false, false, true) => Some(Variant::Vertical),
            _ => None,
        }
    }
}
