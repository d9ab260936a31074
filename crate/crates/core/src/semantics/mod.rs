//! Language features: text embeddings, the latent autoencoder, per-Gaussian
//! feature optimization and prompt queries.

pub mod autoencoder;
pub mod embed;
pub mod features;
pub mod query;

pub use autoencoder::{train_autoencoder, Autoencoder, AutoencoderConfig, AutoencoderReport, LATENT_DIM};
pub use embed::{
    cosine, load_vocabulary, mock_embed, norm, parse_vocabulary, EmbeddingProvider, EmbeddingVocabulary,
    LayeredProvider, MockEmbedder, DEFAULT_EMBEDDING_DIM,
};
pub use features::{
    objective_and_gradient, optimize_gaussian_features, prepare_views, render_target, semantic_loss, FeatureTarget,
    FeatureTrainReport, LossKind, SemanticTrainConfig, TrainingView,
};
pub use query::{
    filter_gaussians, kept_indices, score_prompts, CompareSpace, FilterResult, PromptQuery, PromptScores, DEFAULT_TAU_NEG,
    DEFAULT_TAU_POS,
};
