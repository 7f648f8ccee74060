#include "declust/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "declust/rng.hpp"

namespace declust {

void MixerConfig::validate() const {
    if (in_channels == 0 || image_size == 0 || channels == 0 || depth == 0)
        throw std::invalid_argument("MixerConfig: widths/depth must be >= 1");
    if (patch_size == 0 || image_size % patch_size != 0)
        throw std::invalid_argument("MixerConfig: patch size must divide the image side");
    if (dw_kernel % 2 == 0) throw std::invalid_argument("MixerConfig: dw_kernel must be odd");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
        throw std::invalid_argument("MixerConfig: dropout_rate must be in [0, 1)");
    if (head_hidden == 0 || embed_dim == 0)
        throw std::invalid_argument("MixerConfig: head widths must be >= 1");
}

std::size_t MixerConfig::param_count() const {
    std::size_t patch = channels * (in_channels * patch_size * patch_size) + channels;
    std::size_t block = channels * dw_kernel * dw_kernel + channels  // depthwise
                        + channels * channels + channels             // pointwise
                        + 4 * channels;                              // two batchnorms
    std::size_t head = channels * head_hidden + head_hidden + head_hidden * embed_dim + embed_dim;
    return patch + depth * block + head;
}

void MlpConfig::validate() const {
    if (input_dim == 0) throw std::invalid_argument("MlpConfig: input_dim must be >= 1");
    if (hidden.empty()) throw std::invalid_argument("MlpConfig: needs at least one hidden layer");
    for (std::size_t h : hidden)
        if (h == 0) throw std::invalid_argument("MlpConfig: hidden widths must be >= 1");
    if (head_hidden == 0 || embed_dim == 0)
        throw std::invalid_argument("MlpConfig: head widths must be >= 1");
}

std::size_t MlpConfig::param_count() const {
    std::size_t total = 0;
    std::size_t in = input_dim;
    for (std::size_t h : hidden) {
        total += in * h + h;
        in = h;
    }
    total += in * head_hidden + head_hidden + head_hidden * embed_dim + embed_dim;
    return total;
}

void ParamStore::add(std::string name, Tensor t) {
    t.requires_grad = true;
    names.push_back(std::move(name));
    values.push_back(std::move(t));
}

std::size_t ParamStore::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return i;
    throw std::invalid_argument("ParamStore: no tensor named " + name);
}

Tensor& ParamStore::at(const std::string& name) { return values[index_of(name)]; }

const Tensor& ParamStore::at(const std::string& name) const { return values[index_of(name)]; }

ParamNodes bind_params(Graph& g, const ParamStore& store, bool trainable) {
    ParamNodes nodes;
    nodes.ids.reserve(store.size());
    for (const Tensor& t : store.values) {
        Tensor copy = t;
        copy.requires_grad = trainable;
        nodes.ids.push_back(g.input(std::move(copy)));
    }
    return nodes;
}

namespace {

// Scaled uniform fan-in init: U(-sqrt(3/fan_in), +sqrt(3/fan_in)).
Tensor init_weight(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    double limit = std::sqrt(3.0 / static_cast<double>(fan_in));
    for (double& v : t.data) v = rng.uniform(-limit, limit);
    return t;
}

Tensor dropout_mask(const std::vector<std::size_t>& shape, double keep, std::uint64_t seed) {
    Rng rng(seed);
    Tensor mask(shape);
    for (double& v : mask.data) v = rng.uniform() < keep ? 1.0 : 0.0;
    return mask;
}

}  // namespace

Encoder Encoder::make_mlp(const MlpConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Encoder e;
    e.mlp_ = cfg;
    Rng rng(seed);
    std::size_t in = cfg.input_dim;
    for (std::size_t i = 0; i < cfg.hidden.size(); ++i) {
        std::size_t out = cfg.hidden[i];
        e.params_.add("enc.layer" + std::to_string(i) + ".w", init_weight({in, out}, in, rng));
        e.params_.add("enc.layer" + std::to_string(i) + ".b", Tensor::zeros({out}));
        in = out;
    }
    e.params_.add("head.w1", init_weight({in, cfg.head_hidden}, in, rng));
    e.params_.add("head.b1", Tensor::zeros({cfg.head_hidden}));
    e.params_.add("head.w2", init_weight({cfg.head_hidden, cfg.embed_dim}, cfg.head_hidden, rng));
    e.params_.add("head.b2", Tensor::zeros({cfg.embed_dim}));
    return e;
}

Encoder Encoder::make_mixer(const MixerConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Encoder e;
    e.mixer_ = cfg;
    Rng rng(seed);
    std::size_t ch = cfg.channels;
    std::size_t patch_in = cfg.in_channels * cfg.patch_size * cfg.patch_size;
    e.params_.add("enc.patch.w", init_weight({ch, patch_in}, patch_in, rng));
    e.params_.add("enc.patch.b", Tensor::zeros({ch}));
    for (std::size_t i = 0; i < cfg.depth; ++i) {
        std::string b = "enc.block" + std::to_string(i) + ".";
        e.params_.add(b + "dw.w",
                      init_weight({ch, cfg.dw_kernel, cfg.dw_kernel},
                                  cfg.dw_kernel * cfg.dw_kernel, rng));
        e.params_.add(b + "dw.b", Tensor::zeros({ch}));
        e.params_.add(b + "bn1.gamma", Tensor::full({ch}, 1.0));
        e.params_.add(b + "bn1.beta", Tensor::zeros({ch}));
        e.params_.add(b + "pw.w", init_weight({ch, ch}, ch, rng));
        e.params_.add(b + "pw.b", Tensor::zeros({ch}));
        e.params_.add(b + "bn2.gamma", Tensor::full({ch}, 1.0));
        e.params_.add(b + "bn2.beta", Tensor::zeros({ch}));
        for (const char* bn : {"bn1", "bn2"}) {
            e.buffers_.add(b + bn + ".rmean", Tensor::zeros({ch}));
            e.buffers_.add(b + bn + ".rvar", Tensor::full({ch}, 1.0));
        }
    }
    e.params_.add("head.w1", init_weight({ch, cfg.head_hidden}, ch, rng));
    e.params_.add("head.b1", Tensor::zeros({cfg.head_hidden}));
    e.params_.add("head.w2", init_weight({cfg.head_hidden, cfg.embed_dim}, cfg.head_hidden, rng));
    e.params_.add("head.b2", Tensor::zeros({cfg.embed_dim}));
    return e;
}

std::size_t Encoder::embedding_dim() const {
    return mixer_ ? mixer_->embedding_dim() : mlp_->embedding_dim();
}

std::size_t Encoder::projection_dim() const {
    return mixer_ ? mixer_->embed_dim : mlp_->embed_dim;
}

NodeId Encoder::param_node(const ParamNodes& p, const std::string& name) const {
    return p.ids[params_.index_of(name)];
}

NodeId Encoder::mixer_block(Graph& g, const ParamNodes& p, NodeId x, std::size_t block,
                            Mode mode, std::uint64_t mask_seed,
                            std::vector<BnHook>* hooks) const {
    const MixerConfig& cfg = *mixer_;
    std::string base = "enc.block" + std::to_string(block) + ".";
    double keep = 1.0 - cfg.dropout_rate;
    bool use_dropout = mode == Mode::kTrain && cfg.dropout_rate > 0.0;

    auto bn = [&](NodeId v, const std::string& tag) {
        NodeId gamma = param_node(p, base + tag + ".gamma");
        NodeId beta = param_node(p, base + tag + ".beta");
        if (mode == Mode::kTrain) {
            NodeId out = g.batchnorm(v, gamma, beta, 1e-5);
            if (hooks) hooks->push_back({base + tag, out});
            return out;
        }
        NodeId rmean = g.constant(buffers_.at(base + tag + ".rmean"));
        NodeId rvar = g.constant(buffers_.at(base + tag + ".rvar"));
        return g.batchnorm(v, gamma, beta, rmean, rvar, 1e-5);
    };

    // depthwise stage, residual from the block input
    NodeId v = g.depthwise_conv(x, param_node(p, base + "dw.w"), param_node(p, base + "dw.b"));
    if (use_dropout)
        v = g.dropout(v, g.constant(dropout_mask(g.value(v).shape, keep,
                                                 derive_seed(mask_seed, block, 0))),
                      keep);
    v = g.gelu(v);
    v = bn(v, "bn1");
    NodeId stage1 = g.add(v, x);

    // pointwise stage, with the added residual from the depthwise stage
    NodeId w = g.pointwise_conv(stage1, param_node(p, base + "pw.w"), param_node(p, base + "pw.b"));
    if (use_dropout)
        w = g.dropout(w, g.constant(dropout_mask(g.value(w).shape, keep,
                                                 derive_seed(mask_seed, block, 1))),
                      keep);
    w = g.gelu(w);
    w = bn(w, "bn2");
    return g.add(w, stage1);
}

EmbeddingNode Encoder::encode(Graph& g, const ParamNodes& p, const Tensor& input, Mode mode,
                              std::uint64_t mask_seed, std::vector<BnHook>* hooks) const {
    if (mixer_) {
        const MixerConfig& cfg = *mixer_;
        if (input.shape != std::vector<std::size_t>{cfg.in_channels, cfg.image_size,
                                                    cfg.image_size})
            throw std::invalid_argument("encode: image shape " + shape_str(input.shape) +
                                        " does not match configured " +
                                        shape_str({cfg.in_channels, cfg.image_size,
                                                   cfg.image_size}));
        std::size_t side = cfg.image_size / cfg.patch_size;
        std::size_t s = side * side;
        NodeId patches = g.patch_extract(g.constant(input), cfg.patch_size);
        NodeId u = g.matmul(param_node(p, "enc.patch.w"), patches);  // channels x S
        NodeId bias = g.matmul(g.reshape(param_node(p, "enc.patch.b"), {cfg.channels, 1}),
                               g.constant(Tensor::full({1, s}, 1.0)));
        u = g.reshape(g.add(u, bias), {cfg.channels, side, side});
        for (std::size_t i = 0; i < cfg.depth; ++i)
            u = mixer_block(g, p, u, i, mode, derive_seed(mask_seed, i + 1), hooks);
        // global average pool over spatial positions
        NodeId flat = g.reshape(u, {cfg.channels, s});
        NodeId pooled = g.matmul(flat, g.constant(Tensor::full({s, 1}, 1.0 / static_cast<double>(s))));
        return {g.reshape(pooled, {cfg.channels})};
    }

    const MlpConfig& cfg = *mlp_;
    if (input.shape != std::vector<std::size_t>{cfg.input_dim})
        throw std::invalid_argument("encode: vector shape " + shape_str(input.shape) +
                                    " does not match configured (" +
                                    std::to_string(cfg.input_dim) + ")");
    NodeId h = g.reshape(g.constant(input), {1, cfg.input_dim});
    for (std::size_t i = 0; i < cfg.hidden.size(); ++i) {
        std::string base = "enc.layer" + std::to_string(i) + ".";
        NodeId bias = g.reshape(param_node(p, base + "b"), {1, cfg.hidden[i]});
        h = g.gelu(g.add(g.matmul(h, param_node(p, base + "w")), bias));
    }
    return {g.reshape(h, {cfg.hidden.back()})};
}

RepresentationNode Encoder::project(Graph& g, const ParamNodes& p, EmbeddingNode z) const {
    std::size_t din = embedding_dim();
    std::size_t hh = mixer_ ? mixer_->head_hidden : mlp_->head_hidden;
    std::size_t ed = projection_dim();
    if (g.value(z.id).numel() != din)
        throw std::invalid_argument("project: embedding length " +
                                    std::to_string(g.value(z.id).numel()) + " != " +
                                    std::to_string(din));
    NodeId h = g.reshape(z.id, {1, din});
    NodeId h1 = g.gelu(g.add(g.matmul(h, param_node(p, "head.w1")),
                             g.reshape(param_node(p, "head.b1"), {1, hh})));
    NodeId out = g.add(g.matmul(h1, param_node(p, "head.w2")),
                       g.reshape(param_node(p, "head.b2"), {1, ed}));
    return {g.reshape(out, {ed})};
}

Tensor Encoder::encode_value(const Tensor& input) const {
    Graph g;
    ParamNodes p = bind_params(g, params_, false);
    EmbeddingNode z = encode(g, p, input, Mode::kEval, 0);
    return g.value(z.id);
}

Tensor Encoder::project_value(const Tensor& embedding) const {
    Graph g;
    ParamNodes p = bind_params(g, params_, false);
    Tensor copy = embedding;
    copy.requires_grad = false;
    EmbeddingNode z{g.input(std::move(copy))};
    RepresentationNode r = project(g, p, z);
    return g.value(r.id);
}

Tensor Encoder::embed_all(const std::vector<Tensor>& samples) const {
    if (samples.empty()) throw std::invalid_argument("embed_all: empty sample list");
    std::size_t d = embedding_dim();
    Tensor out({samples.size(), d});
    for (std::size_t i = 0; i < samples.size(); ++i) {
        Tensor z = encode_value(samples[i]);
        for (std::size_t j = 0; j < d; ++j) out.at(i, j) = z.data[j];
    }
    return out;
}

void Encoder::update_running_stats(const Graph& g, const std::vector<BnHook>& hooks,
                                   double momentum) {
    for (const BnHook& h : hooks) {
        const Tensor& mean = g.batch_mean(h.node);
        const Tensor& var = g.batch_var(h.node);
        Tensor& rmean = buffers_.at(h.name + ".rmean");
        Tensor& rvar = buffers_.at(h.name + ".rvar");
        for (std::size_t i = 0; i < rmean.numel(); ++i) {
            rmean.data[i] = (1.0 - momentum) * rmean.data[i] + momentum * mean.data[i];
            rvar.data[i] = (1.0 - momentum) * rvar.data[i] + momentum * var.data[i];
        }
    }
}

}  // namespace declust
