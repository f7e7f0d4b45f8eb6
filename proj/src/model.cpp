#include "mmmt/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "mmmt/error.hpp"

namespace mmmt {

namespace {

constexpr std::array<Head, 4> kOrdinalHeads = {Head::sentiment, Head::humour, Head::sarcasm, Head::offensive};

Affine make_affine(const std::string& name, std::size_t in, std::size_t out) {
    return Affine{Parameter(name + ".weight", Tensor({in, out})), Parameter(name + ".bias", Tensor({out}))};
}

Parameter make_ones(const std::string& name, std::size_t n) {
    Parameter p(name, Tensor({n}));
    p.value.fill(1.0);
    return p;
}

void init_uniform(Parameter& p, RngState& rng) {
    const double fan_in = static_cast<double>(p.value.shape().front());
    const double bound = std::sqrt(1.0 / fan_in);
    for (double& v : p.value.data()) v = (2.0 * rng.uniform() - 1.0) * bound;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void ModelConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw ConfigError("model." + field + ": " + why);
    };
    if (input_dims.image == 0) fail("d_image", "must be positive");
    if (input_dims.clip == 0) fail("d_clip", "must be positive");
    if (input_dims.text == 0) fail("d_text", "must be positive");
    if (d_common == 0) fail("d_common", "must be positive");
    if (d_model == 0) fail("d_model", "must be positive");
    if (layers == 0) fail("layers", "must be positive");
    if (heads_per_layer.size() != layers) {
        fail("heads_per_layer", "has " + std::to_string(heads_per_layer.size()) + " entries for " +
                                    std::to_string(layers) + " layers");
    }
    for (std::uint32_t h : heads_per_layer) {
        if (h == 0 || d_model % h != 0) {
            fail("heads_per_layer", "d_model " + std::to_string(d_model) + " is not divisible by " + std::to_string(h) +
                                        " heads");
        }
    }
    if (ff_multiplier == 0) fail("ff_multiplier", "must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate", "must lie in [0, 1)");
    if (!(layer_norm_eps > 0.0)) fail("layer_norm_eps", "must be positive");
    if (emotion_classes != 2 && emotion_classes != 4) fail("emotion_classes", "must be 2 or 4");
}

int ModelConfig::classes(Head head) const {
    switch (head) {
        case Head::sentiment: return 3;
        case Head::motivation: return 2;
        default: return static_cast<int>(emotion_classes);
    }
}

std::size_t parameter_count(const ModelConfig& c) {
    const std::size_t dc = c.d_common, d = c.d_model, f = static_cast<std::size_t>(c.ff_multiplier) * c.d_model;
    std::size_t n = 0;
    for (Modality m : kAllModalities) n += c.input_dims[m] * dc + dc;
    n += dc * d + d;
    const std::size_t per_layer = 2 * d + 4 * (d * d + d) + 2 * d + (d * f + f) + (f * d + d);
    n += c.layers * per_layer;
    n += 2 * d;
    for (Head h : kOrdinalHeads) n += d + static_cast<std::size_t>(c.classes(h) - 1);
    n += d + 1;
    return n;
}

// ---------------------------------------------------------------------------
// Parameters

std::vector<Parameter*> MmmtModel::parameters() {
    std::vector<Parameter*> out;
    auto add = [&](Affine& a) {
        out.push_back(&a.weight);
        out.push_back(&a.bias);
    };
    for (Affine& p : projections) add(p);
    add(adapter);
    for (EncoderLayer& l : encoder) {
        out.push_back(&l.ln1_gain);
        out.push_back(&l.ln1_bias);
        add(l.query);
        add(l.key);
        add(l.value);
        add(l.output);
        out.push_back(&l.ln2_gain);
        out.push_back(&l.ln2_bias);
        add(l.ff_in);
        add(l.ff_out);
    }
    out.push_back(&final_ln_gain);
    out.push_back(&final_ln_bias);
    for (CoralHead& h : ordinal) {
        out.push_back(&h.weight);
        out.push_back(&h.bias);
    }
    add(motivation);
    return out;
}

std::vector<const Parameter*> MmmtModel::parameters() const {
    auto mutable_params = const_cast<MmmtModel*>(this)->parameters();
    return {mutable_params.begin(), mutable_params.end()};
}

bool operator==(const MmmtModel& a, const MmmtModel& b) {
    if (!(a.config == b.config)) return false;
    const auto pa = a.parameters();
    const auto pb = b.parameters();
    if (pa.size() != pb.size()) return false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        if (!(*pa[i] == *pb[i])) return false;
    }
    return true;
}

MmmtModel init_model(const ModelConfig& config, RngState& rng) {
    config.validate();
    MmmtModel m;
    m.config = config;
    const std::size_t dc = config.d_common, d = config.d_model;
    const std::size_t f = static_cast<std::size_t>(config.ff_multiplier) * d;
    for (Modality mod : kAllModalities) {
        m.projections[static_cast<int>(mod)] =
            make_affine("proj_" + std::string(modality_name(mod)), config.input_dims[mod], dc);
    }
    m.adapter = make_affine("adapter", dc, d);
    for (std::uint32_t i = 0; i < config.layers; ++i) {
        const std::string p = "encoder." + std::to_string(i) + ".";
        EncoderLayer l;
        l.heads = config.heads_per_layer[i];
        l.ln1_gain = make_ones(p + "ln1.gain", d);
        l.ln1_bias = Parameter(p + "ln1.bias", Tensor({d}));
        l.query = make_affine(p + "attn.query", d, d);
        l.key = make_affine(p + "attn.key", d, d);
        l.value = make_affine(p + "attn.value", d, d);
        l.output = make_affine(p + "attn.output", d, d);
        l.ln2_gain = make_ones(p + "ln2.gain", d);
        l.ln2_bias = Parameter(p + "ln2.bias", Tensor({d}));
        l.ff_in = make_affine(p + "ff.in", d, f);
        l.ff_out = make_affine(p + "ff.out", f, d);
        m.encoder.push_back(std::move(l));
    }
    m.final_ln_gain = make_ones("final_ln.gain", d);
    m.final_ln_bias = Parameter("final_ln.bias", Tensor({d}));
    for (std::size_t i = 0; i < kOrdinalHeads.size(); ++i) {
        const Head h = kOrdinalHeads[i];
        m.ordinal[i] = CoralHead("head." + std::string(head_name(h)), d, config.classes(h));
    }
    m.motivation = make_affine("head.motivation", d, 1);

    for (Parameter* p : m.parameters()) {
        if (p->value.rank() == 2) init_uniform(*p, rng);
    }
    // Ordinal thresholds start at the cumulative logits of a uniform class
    // prior, logit((K-1-k)/K), so every rank has a non-empty score interval.
    for (CoralHead& head : m.ordinal) {
        const double classes = static_cast<double>(head.num_classes);
        for (std::size_t k = 0; k < head.thresholds(); ++k) {
            const double p = (classes - 1.0 - static_cast<double>(k)) / classes;
            head.bias.value[k] = std::log(p / (1.0 - p));
        }
    }
    return m;
}

// ---------------------------------------------------------------------------
// Forward / backward

Tensor& HeadOutputs::operator[](Head h) {
    switch (h) {
        case Head::sentiment: return sentiment;
        case Head::humour: return humour;
        case Head::sarcasm: return sarcasm;
        case Head::offensive: return offensive;
        default: return motivation;
    }
}

const Tensor& HeadOutputs::operator[](Head h) const {
    return const_cast<HeadOutputs&>(*this)[h];
}

namespace {

// Scaled dot-product self-attention within each sample's T tokens.
// probs is [batch*heads*T x T]; context is [batch*T x d].
void attention_forward(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t batch, std::size_t tokens,
                       std::size_t heads, Tensor& probs, Tensor& context) {
    const std::size_t d = q.cols();
    const std::size_t dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor scores = Tensor::zeros(batch * heads * tokens, tokens);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t i = 0; i < tokens; ++i) {
                const double* qi = &q.at(b * tokens + i, h * dh);
                for (std::size_t j = 0; j < tokens; ++j) {
                    const double* kj = &k.at(b * tokens + j, h * dh);
                    double s = 0.0;
                    for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
                    scores.at((b * heads + h) * tokens + i, j) = s * scale;
                }
            }
        }
    }
    probs = softmax_rows(scores);
    context = Tensor::zeros(batch * tokens, d);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t i = 0; i < tokens; ++i) {
                double* out = &context.at(b * tokens + i, h * dh);
                for (std::size_t j = 0; j < tokens; ++j) {
                    const double p = probs.at((b * heads + h) * tokens + i, j);
                    const double* vj = &v.at(b * tokens + j, h * dh);
                    for (std::size_t c = 0; c < dh; ++c) out[c] += p * vj[c];
                }
            }
        }
    }
}

void attention_backward(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& probs,
                        const Tensor& dcontext, std::size_t batch, std::size_t tokens, std::size_t heads, Tensor& dq,
                        Tensor& dk, Tensor& dv) {
    const std::size_t d = q.cols();
    const std::size_t dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor dprobs(probs.shape());
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t i = 0; i < tokens; ++i) {
                const double* go = &dcontext.at(b * tokens + i, h * dh);
                for (std::size_t j = 0; j < tokens; ++j) {
                    const double p = probs.at((b * heads + h) * tokens + i, j);
                    const double* vj = &v.at(b * tokens + j, h * dh);
                    double* dvj = &dv.at(b * tokens + j, h * dh);
                    double s = 0.0;
                    for (std::size_t c = 0; c < dh; ++c) {
                        s += go[c] * vj[c];
                        dvj[c] += p * go[c];
                    }
                    dprobs.at((b * heads + h) * tokens + i, j) = s;
                }
            }
        }
    }
    Tensor dscores(probs.shape());
    softmax_rows_backward(probs, dprobs, dscores);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t i = 0; i < tokens; ++i) {
                const double* qi = &q.at(b * tokens + i, h * dh);
                double* dqi = &dq.at(b * tokens + i, h * dh);
                for (std::size_t j = 0; j < tokens; ++j) {
                    const double g = dscores.at((b * heads + h) * tokens + i, j) * scale;
                    const double* kj = &k.at(b * tokens + j, h * dh);
                    double* dkj = &dk.at(b * tokens + j, h * dh);
                    for (std::size_t c = 0; c < dh; ++c) {
                        dqi[c] += g * kj[c];
                        dkj[c] += g * qi[c];
                    }
                }
            }
        }
    }
}

}  // namespace

HeadOutputs forward(const MmmtModel& model, std::span<const FeatureRecord> batch, const ModalitySet& modalities,
                    bool training, RngState& rng, ForwardCache* cache) {
    if (modalities.empty()) throw ConfigError("modality mask must contain at least one modality");
    const ModelConfig& cfg = model.config;
    const std::size_t B = batch.size();
    const std::size_t T = modalities.size();
    const std::size_t dc = cfg.d_common;

    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    c = ForwardCache();
    c.batch = B;
    c.order = modalities.order();

    c.tokens = Tensor::zeros(B * T, dc);
    for (std::size_t t = 0; t < T; ++t) {
        const Modality m = c.order[t];
        const std::size_t dim = cfg.input_dims[m];
        Tensor x = Tensor::zeros(B, dim);
        for (std::size_t b = 0; b < B; ++b) {
            const auto& vec = batch[b].vector(m);
            if (!vec) {
                throw DataError("record '" + batch[b].id + "' has no " + std::string(modality_name(m)) + " vector");
            }
            if (vec->size() != dim) {
                throw DataError("record '" + batch[b].id + "': " + std::string(modality_name(m)) + " vector has " +
                                std::to_string(vec->size()) + " values, model expects " + std::to_string(dim));
            }
            auto row = x.row(b);
            for (std::size_t j = 0; j < dim; ++j) row[j] = static_cast<double>((*vec)[j]);
        }
        const Affine& proj = model.projections[static_cast<int>(m)];
        const Tensor tok = linear(x, proj.weight.value, proj.bias.value);
        for (std::size_t b = 0; b < B; ++b) {
            auto src = tok.row(b);
            std::copy(src.begin(), src.end(), c.tokens.row(b * T + t).begin());
        }
        c.inputs[static_cast<int>(m)] = std::move(x);
    }

    c.hidden0 = linear(c.tokens, model.adapter.weight.value, model.adapter.bias.value);
    Tensor h = c.hidden0;
    const double eps = cfg.layer_norm_eps;
    for (const EncoderLayer& layer : model.encoder) {
        ForwardCache::Layer lc;
        lc.input = h;
        lc.normed1 = layer_norm(h, layer.ln1_gain.value, layer.ln1_bias.value, eps, &lc.ln1);
        lc.q = linear(lc.normed1, layer.query.weight.value, layer.query.bias.value);
        lc.k = linear(lc.normed1, layer.key.weight.value, layer.key.bias.value);
        lc.v = linear(lc.normed1, layer.value.weight.value, layer.value.bias.value);
        attention_forward(lc.q, lc.k, lc.v, B, T, layer.heads, lc.probs, lc.context);
        lc.attn = linear(lc.context, layer.output.weight.value, layer.output.bias.value);
        Tensor attn_d = dropout(lc.attn, cfg.dropout_rate, rng, training, &lc.attn_mask);
        lc.hidden1 = h;
        add_inplace(lc.hidden1, attn_d);

        lc.normed2 = layer_norm(lc.hidden1, layer.ln2_gain.value, layer.ln2_bias.value, eps, &lc.ln2);
        lc.ff_pre = linear(lc.normed2, layer.ff_in.weight.value, layer.ff_in.bias.value);
        lc.ff_act = gelu(lc.ff_pre);
        lc.ff_out = linear(lc.ff_act, layer.ff_out.weight.value, layer.ff_out.bias.value);
        Tensor ff_d = dropout(lc.ff_out, cfg.dropout_rate, rng, training, &lc.ff_mask);
        h = lc.hidden1;
        add_inplace(h, ff_d);
        c.layers.push_back(std::move(lc));
    }
    c.encoded = h;
    c.normed = layer_norm(h, model.final_ln_gain.value, model.final_ln_bias.value, eps, &c.final_ln);

    c.pooled = Tensor::zeros(B, cfg.d_model);
    const double inv_t = 1.0 / static_cast<double>(T);
    for (std::size_t b = 0; b < B; ++b) {
        auto out = c.pooled.row(b);
        for (std::size_t t = 0; t < T; ++t) {
            auto in = c.normed.row(b * T + t);
            for (std::size_t j = 0; j < out.size(); ++j) out[j] += in[j];
        }
        for (double& v : out) v *= inv_t;
    }

    HeadOutputs out;
    for (std::size_t i = 0; i < kOrdinalHeads.size(); ++i) out[kOrdinalHeads[i]] = coral_forward(c.pooled, model.ordinal[i]);
    out.motivation = linear(c.pooled, model.motivation.weight.value, model.motivation.bias.value);
    return out;
}

void backward(MmmtModel& model, const ForwardCache& c, const HeadOutputs& dlogits) {
    const ModelConfig& cfg = model.config;
    const std::size_t B = c.batch;
    const std::size_t T = c.order.size();

    Tensor dpooled(c.pooled.shape());
    for (std::size_t i = 0; i < kOrdinalHeads.size(); ++i) {
        add_inplace(dpooled, coral_backward(c.pooled, model.ordinal[i], dlogits[kOrdinalHeads[i]]));
    }
    linear_backward(c.pooled, model.motivation.weight.value, dlogits.motivation, &dpooled,
                    &model.motivation.weight.grad, &model.motivation.bias.grad);

    Tensor dnormed(c.normed.shape());
    const double inv_t = 1.0 / static_cast<double>(T);
    for (std::size_t b = 0; b < B; ++b) {
        auto g = dpooled.row(b);
        for (std::size_t t = 0; t < T; ++t) {
            auto out = dnormed.row(b * T + t);
            for (std::size_t j = 0; j < out.size(); ++j) out[j] = g[j] * inv_t;
        }
    }
    Tensor dh(c.encoded.shape());
    layer_norm_backward(c.final_ln, model.final_ln_gain.value, dnormed, dh, &model.final_ln_gain.grad,
                        &model.final_ln_bias.grad);

    for (std::size_t li = model.encoder.size(); li-- > 0;) {
        EncoderLayer& layer = model.encoder[li];
        const ForwardCache::Layer& lc = c.layers[li];

        // Feed-forward sublayer.
        Tensor dhidden1 = dh;
        Tensor dff_out(lc.ff_out.shape());
        dropout_backward(lc.ff_mask, dh, dff_out);
        Tensor dff_act(lc.ff_act.shape());
        linear_backward(lc.ff_act, layer.ff_out.weight.value, dff_out, &dff_act, &layer.ff_out.weight.grad,
                        &layer.ff_out.bias.grad);
        Tensor dff_pre(lc.ff_pre.shape());
        gelu_backward(lc.ff_pre, dff_act, dff_pre);
        Tensor dnormed2(lc.normed2.shape());
        linear_backward(lc.normed2, layer.ff_in.weight.value, dff_pre, &dnormed2, &layer.ff_in.weight.grad,
                        &layer.ff_in.bias.grad);
        layer_norm_backward(lc.ln2, layer.ln2_gain.value, dnormed2, dhidden1, &layer.ln2_gain.grad,
                            &layer.ln2_bias.grad);

        // Attention sublayer.
        Tensor dinput = dhidden1;
        Tensor dattn(lc.attn.shape());
        dropout_backward(lc.attn_mask, dhidden1, dattn);
        Tensor dcontext(lc.context.shape());
        linear_backward(lc.context, layer.output.weight.value, dattn, &dcontext, &layer.output.weight.grad,
                        &layer.output.bias.grad);
        Tensor dq(lc.q.shape()), dk(lc.k.shape()), dv(lc.v.shape());
        attention_backward(lc.q, lc.k, lc.v, lc.probs, dcontext, B, T, layer.heads, dq, dk, dv);
        Tensor dnormed1(lc.normed1.shape());
        linear_backward(lc.normed1, layer.query.weight.value, dq, &dnormed1, &layer.query.weight.grad,
                        &layer.query.bias.grad);
        linear_backward(lc.normed1, layer.key.weight.value, dk, &dnormed1, &layer.key.weight.grad,
                        &layer.key.bias.grad);
        linear_backward(lc.normed1, layer.value.weight.value, dv, &dnormed1, &layer.value.weight.grad,
                        &layer.value.bias.grad);
        layer_norm_backward(lc.ln1, layer.ln1_gain.value, dnormed1, dinput, &layer.ln1_gain.grad,
                            &layer.ln1_bias.grad);
        dh = std::move(dinput);
    }

    Tensor dtokens(c.tokens.shape());
    linear_backward(c.tokens, model.adapter.weight.value, dh, &dtokens, &model.adapter.weight.grad,
                    &model.adapter.bias.grad);
    for (std::size_t t = 0; t < T; ++t) {
        const Modality m = c.order[t];
        Tensor dtok = Tensor::zeros(B, cfg.d_common);
        for (std::size_t b = 0; b < B; ++b) {
            auto src = dtokens.row(b * T + t);
            std::copy(src.begin(), src.end(), dtok.row(b).begin());
        }
        Affine& proj = model.projections[static_cast<int>(m)];
        linear_backward(c.inputs[static_cast<int>(m)], proj.weight.value, dtok, nullptr, &proj.weight.grad,
                        &proj.bias.grad);
    }
}

// ---------------------------------------------------------------------------
// Loss and prediction

LossBreakdown multitask_loss(const HeadOutputs& outputs, std::span<const LabelSet> labels, HeadMask heads,
                             const HeadWeights& weights, HeadOutputs* dlogits) {
    if (heads.empty()) throw ConfigError("head mask must contain at least one head");
    const std::size_t B = outputs.batch();
    if (labels.size() != B) {
        throw DimensionError("multitask_loss: " + std::to_string(labels.size()) + " label sets for batch of " +
                             std::to_string(B));
    }
    if (dlogits) {
        for (Head h : kAllHeads) (*dlogits)[h] = Tensor(outputs[h].shape());
    }
    LossBreakdown result;
    for (Head h : heads.heads()) {
        const Tensor& logits = outputs[h];
        const int k = static_cast<int>(logits.cols()) + 1;
        const int schema_k = schema_classes(h);
        for (std::size_t b = 0; b < B; ++b) {
            const int v = labels[b][h];
            if (v < 0 || v >= schema_k) {
                throw LabelError("batch row " + std::to_string(b) + ": " + std::string(head_name(h)) + " label " +
                                 (v == LabelSet::kAbsent ? std::string("missing") : std::to_string(v) + " out of range"));
            }
        }
        double loss = 0.0;
        Tensor grad;
        if (h == Head::motivation) {
            grad = Tensor(logits.shape());
            const double inv_b = 1.0 / static_cast<double>(B);
            for (std::size_t b = 0; b < B; ++b) {
                const double z = logits[b];
                const double y = labels[b][h];
                loss += softplus(z) - y * z;
                grad[b] = (sigmoid(z) - y) * inv_b;
            }
            loss *= inv_b;
        } else {
            std::vector<ExtendedLabels> ext;
            ext.reserve(B);
            for (std::size_t b = 0; b < B; ++b) {
                int rank = labels[b][h];
                if (k < schema_k) rank = rank > 0 ? 1 : 0;  // binary emotion head
                ext.push_back(extend_labels(rank, k));
            }
            loss = coral_loss(logits, ext, &grad);
        }
        const double w = weights[static_cast<int>(h)];
        result.per_head[static_cast<int>(h)] = loss;
        result.total += w * loss;
        if (dlogits) {
            for (double& g : grad.data()) g *= w;
            (*dlogits)[h] = std::move(grad);
        }
    }
    return result;
}

std::vector<LabelSet> predict(const HeadOutputs& outputs) {
    const std::size_t B = outputs.batch();
    std::vector<LabelSet> out(B);
    for (Head h : kOrdinalHeads) {
        const auto ranks = coral_predict(outputs[h]);
        for (std::size_t b = 0; b < B; ++b) out[b][h] = static_cast<std::int8_t>(ranks[b]);
    }
    for (std::size_t b = 0; b < B; ++b) out[b][Head::motivation] = outputs.motivation[b] > 0.0 ? 1 : 0;
    return out;
}

GradCheckResult check_model_gradients(MmmtModel& model, std::span<const FeatureRecord> batch,
                                      const ModalitySet& modalities, HeadMask heads, const GradCheckOptions& options) {
    std::vector<LabelSet> labels;
    for (const auto& r : batch) labels.push_back(r.labels);
    RngState rng(0);
    auto params = model.parameters();
    zero_grads(params);
    ForwardCache cache;
    const HeadOutputs out = forward(model, batch, modalities, false, rng, &cache);
    HeadOutputs dlogits;
    multitask_loss(out, labels, heads, kUnitHeadWeights, &dlogits);
    backward(model, cache, dlogits);
    auto loss = [&] { return multitask_loss(forward(model, batch, modalities, false, rng), labels, heads).total; };
    return grad_check(loss, params, options);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

class Writer {
public:
    template <typename T>
    void put(T v) {
        unsigned char buf[sizeof(T)];
        std::memcpy(buf, &v, sizeof(T));
        bytes.insert(bytes.end(), buf, buf + sizeof(T));
    }
    void put_bytes(std::string_view s) { bytes.insert(bytes.end(), s.begin(), s.end()); }
    std::vector<unsigned char> bytes;
};

class Reader {
public:
    explicit Reader(std::span<const unsigned char> b) : bytes_(b) {}
    template <typename T>
    T get(const char* what) {
        if (bytes_.size() - pos_ < sizeof(T)) {
            throw FormatError(std::string("truncated checkpoint while reading ") + what, pos_);
        }
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string get_string(std::size_t n, const char* what) {
        if (bytes_.size() - pos_ < n) throw FormatError(std::string("truncated checkpoint while reading ") + what, pos_);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::size_t offset() const { return pos_; }
    bool at_end() const { return pos_ == bytes_.size(); }

private:
    std::span<const unsigned char> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> encode_checkpoint(const MmmtModel& model, const CheckpointMeta& meta) {
    static_assert(std::endian::native == std::endian::little);
    const ModelConfig& c = model.config;
    Writer w;
    w.put_bytes("MMT1");
    w.put<std::uint32_t>(kCheckpointVersion);
    w.put<std::uint32_t>(c.input_dims.image);
    w.put<std::uint32_t>(c.input_dims.clip);
    w.put<std::uint32_t>(c.input_dims.text);
    w.put<std::uint32_t>(c.d_common);
    w.put<std::uint32_t>(c.d_model);
    w.put<std::uint32_t>(c.layers);
    w.put<std::uint32_t>(c.ff_multiplier);
    w.put<std::uint32_t>(c.emotion_classes);
    for (std::uint32_t h : c.heads_per_layer) w.put<std::uint32_t>(h);
    w.put<double>(c.dropout_rate);
    w.put<double>(c.layer_norm_eps);
    w.put<std::uint8_t>(meta.modalities.bits());
    w.put<std::uint8_t>(meta.heads.bits());
    const auto params = model.parameters();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
    for (const Parameter* p : params) {
        w.put<std::uint16_t>(static_cast<std::uint16_t>(p->name.size()));
        w.put_bytes(p->name);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(p->value.rank()));
        for (std::size_t d : p->value.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
        for (double v : p->value.data()) w.put<double>(v);
    }
    return std::move(w.bytes);
}

void save_checkpoint(const std::filesystem::path& path, const MmmtModel& model, const CheckpointMeta& meta) {
    write_file_atomic(path, encode_checkpoint(model, meta));
}

LoadedCheckpoint decode_checkpoint(std::span<const unsigned char> bytes) {
    Reader r(bytes);
    if (r.get_string(4, "magic") != "MMT1") throw FormatError("bad magic, expected \"MMT1\"", 0);
    const auto version = r.get<std::uint32_t>("version");
    if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
    ModelConfig c;
    c.input_dims.image = r.get<std::uint32_t>("config");
    c.input_dims.clip = r.get<std::uint32_t>("config");
    c.input_dims.text = r.get<std::uint32_t>("config");
    c.d_common = r.get<std::uint32_t>("config");
    c.d_model = r.get<std::uint32_t>("config");
    c.layers = r.get<std::uint32_t>("config");
    c.ff_multiplier = r.get<std::uint32_t>("config");
    c.emotion_classes = r.get<std::uint32_t>("config");
    if (c.layers > 1024) throw FormatError("implausible layer count " + std::to_string(c.layers), r.offset());
    c.heads_per_layer.resize(c.layers);
    for (auto& h : c.heads_per_layer) h = r.get<std::uint32_t>("config");
    c.dropout_rate = r.get<double>("config");
    c.layer_norm_eps = r.get<double>("config");
    const auto config_end = r.offset();
    LoadedCheckpoint out;
    out.meta.modalities = ModalitySet::from_bits(r.get<std::uint8_t>("modality mask"));
    out.meta.heads = HeadMask(r.get<std::uint8_t>("head mask"));
    if (out.meta.modalities.empty() || out.meta.heads.empty()) {
        throw FormatError("checkpoint has an empty modality or head mask", config_end);
    }
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("invalid config block: ") + e.what(), config_end);
    }
    RngState scratch(0);
    out.model = init_model(c, scratch);
    auto params = out.model.parameters();
    const auto count = r.get<std::uint32_t>("parameter count");
    if (count != params.size()) {
        throw FormatError("checkpoint holds " + std::to_string(count) + " parameters, config implies " +
                          std::to_string(params.size()),
                          r.offset());
    }
    for (Parameter* p : params) {
        const auto name_offset = r.offset();
        const auto len = r.get<std::uint16_t>("parameter name");
        const std::string name = r.get_string(len, "parameter name");
        if (name != p->name) throw FormatError("expected parameter '" + p->name + "', found '" + name + "'", name_offset);
        const auto rank = r.get<std::uint32_t>("parameter rank");
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) d = r.get<std::uint32_t>("parameter shape");
        if (shape != p->value.shape()) {
            std::string got = "[";
            for (std::size_t i = 0; i < shape.size(); ++i) got += (i ? "x" : "") + std::to_string(shape[i]);
            throw FormatError("parameter '" + name + "' has shape " + got + "], expected " + p->value.shape_string(),
                              name_offset);
        }
        for (double& v : p->value.data()) v = r.get<double>("parameter values");
    }
    if (!r.at_end()) throw FormatError("trailing bytes after last parameter", r.offset());
    return out;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    try {
        return decode_checkpoint(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what(), e.offset());
    }
}

}  // namespace mmmt
