#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "mmmt/data.hpp"
#include "mmmt/grad_check.hpp"
#include "mmmt/ordinal.hpp"
#include "mmmt/rng.hpp"
#include "mmmt/tensor.hpp"

namespace mmmt {

struct ModelConfig {
    FeatureDims input_dims;              // frozen extractor widths
    std::uint32_t d_common = 512;        // per-modality projection width
    std::uint32_t d_model = 64;          // encoder width
    std::uint32_t layers = 4;
    std::vector<std::uint32_t> heads_per_layer{8, 8, 16, 16};
    std::uint32_t ff_multiplier = 4;
    double dropout_rate = 0.1;
    double layer_norm_eps = 1e-5;
    // 4 for intensity heads (0..3); 2 trains humour/sarcasm/offensive as
    // present/absent heads on binarized labels.
    std::uint32_t emotion_classes = 4;

    /// Throws ConfigError naming the offending field.
    void validate() const;
    int classes(Head head) const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Closed-form number of trainable scalars for a configuration.
std::size_t parameter_count(const ModelConfig& config);

struct Affine {
    Parameter weight;  // [in x out]
    Parameter bias;    // [out]
};

struct EncoderLayer {
    std::uint32_t heads = 1;
    Parameter ln1_gain, ln1_bias;
    Affine query, key, value, output;
    Parameter ln2_gain, ln2_bias;
    Affine ff_in, ff_out;
};

/// Projections, encoder stack and task heads of the multimodal multitask model.
struct MmmtModel {
    ModelConfig config;
    std::array<Affine, 3> projections;  // indexed by Modality
    Affine adapter;                     // d_common -> d_model
    std::vector<EncoderLayer> encoder;
    Parameter final_ln_gain, final_ln_bias;
    std::array<CoralHead, 4> ordinal;  // sentiment, humour, sarcasm, offensive
    Affine motivation;                 // d_model -> 1

    /// Every trainable parameter in a fixed, documented order.
    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;

    friend bool operator==(const MmmtModel& a, const MmmtModel& b);
};

/// Deterministic initialisation: weights ~ U(-sqrt(1/fan_in), sqrt(1/fan_in)),
/// biases zero, layer-norm gains one. Ordinal thresholds k start at
/// logit((K-1-k)/K), the cumulative logits of a uniform class prior.
MmmtModel init_model(const ModelConfig& config, RngState& rng);

/// Logits of the five heads; widths are K-1 for ordinal heads and 1 for motivation.
struct HeadOutputs {
    Tensor sentiment, humour, sarcasm, offensive, motivation;

    Tensor& operator[](Head h);
    const Tensor& operator[](Head h) const;
    std::size_t batch() const { return motivation.rows(); }
};

/// Intermediate values retained for the reverse pass.
struct ForwardCache {
    struct Layer {
        Tensor input;
        LayerNormCache ln1;
        Tensor normed1, q, k, v, probs, context, attn, attn_mask, hidden1;
        LayerNormCache ln2;
        Tensor normed2, ff_pre, ff_act, ff_out, ff_mask;
    };
    std::size_t batch = 0;
    std::vector<Modality> order;
    std::array<Tensor, 3> inputs;  // per modality, [batch x d_m]
    Tensor tokens;                 // [batch*T x d_common]
    Tensor hidden0;                // [batch*T x d_model]
    std::vector<Layer> layers;
    Tensor encoded;
    LayerNormCache final_ln;
    Tensor normed;
    Tensor pooled;                 // [batch x d_model]
};

/// Runs the model over a batch. Tokens are created only for modalities in
/// `modalities`, in its order. Throws ConfigError for an empty set and
/// DataError naming the record when an enabled vector is missing or mis-sized.
HeadOutputs forward(const MmmtModel& model, std::span<const FeatureRecord> batch, const ModalitySet& modalities,
                    bool training, RngState& rng, ForwardCache* cache = nullptr);

/// Accumulates parameter gradients given d loss / d logits.
void backward(MmmtModel& model, const ForwardCache& cache, const HeadOutputs& dlogits);

struct LossBreakdown {
    double total = 0.0;
    std::array<std::optional<double>, 5> per_head;  // unweighted, absent for disabled heads
};

using HeadWeights = std::array<double, 5>;
inline constexpr HeadWeights kUnitHeadWeights{1.0, 1.0, 1.0, 1.0, 1.0};

/// total = sum over enabled heads of weight * head loss. CORAL loss for the
/// ordinal heads, sigmoid cross-entropy for motivation. Heads narrower than
/// the schema (binary emotion heads) see binarized labels. If `dlogits` is
/// given it receives d total / d logits (zero for disabled heads).
LossBreakdown multitask_loss(const HeadOutputs& outputs, std::span<const LabelSet> labels, HeadMask heads,
                             const HeadWeights& weights = kUnitHeadWeights, HeadOutputs* dlogits = nullptr);

/// Threshold-count ranks for ordinal heads, sigmoid > 0.5 for motivation.
std::vector<LabelSet> predict(const HeadOutputs& outputs);

/// Finite-difference check of the full multitask loss (eval mode, so no
/// dropout) against the analytic reverse pass, over every model parameter.
GradCheckResult check_model_gradients(MmmtModel& model, std::span<const FeatureRecord> batch,
                                      const ModalitySet& modalities, HeadMask heads,
                                      const GradCheckOptions& options = {});

// ---------------------------------------------------------------------------
// Checkpoints

struct CheckpointMeta {
    ModalitySet modalities = ModalitySet::all();
    HeadMask heads = HeadMask::all();
};

/// Little-endian binary: magic "MMT1", u32 version, config block (u32 dims
/// image/clip/text, d_common, d_model, layers, ff_multiplier, emotion_classes,
/// u32 heads per layer, f64 dropout, f64 layer-norm eps, u8 modality mask,
/// u8 head mask), u32 parameter count, then per parameter: u16 name length,
/// name, u32 rank, u32 dims, f64 values.
std::vector<unsigned char> encode_checkpoint(const MmmtModel& model, const CheckpointMeta& meta);
void save_checkpoint(const std::filesystem::path& path, const MmmtModel& model, const CheckpointMeta& meta);

struct LoadedCheckpoint {
    MmmtModel model;
    CheckpointMeta meta;
};

LoadedCheckpoint decode_checkpoint(std::span<const unsigned char> bytes);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mmmt
