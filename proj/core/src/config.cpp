#include "declust/config.hpp"

#include <cmath>
#include <set>

#include <json.hpp>

#include "declust/cifar.hpp"
#include "declust/container.hpp"
#include "declust/errors.hpp"
#include "declust/rng.hpp"

namespace declust {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& path, const std::string& what) {
    throw ConfigError("config: " + path + ": " + what);
}

void check_keys(const json& obj, const std::string& path, const std::set<std::string>& known) {
    if (!obj.is_object()) bad(path, "expected an object");
    for (const auto& item : obj.items())
        if (!known.contains(item.key()))
            bad(path.empty() ? item.key() : path + "." + item.key(), "unknown key");
}

template <typename T>
void get_to(const json& obj, const std::string& path, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
        obj.at(key).get_to(out);
    } catch (const json::exception& e) {
        bad(path + "." + key, e.what());
    }
}

void get_range(const json& obj, const std::string& path, const char* key, double& lo,
               double& hi) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_array() || v.size() != 2) bad(path + "." + key, "expected [lo, hi]");
    lo = v[0].get<double>();
    hi = v[1].get<double>();
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text,
                                                  const std::vector<std::string>& overrides) {
    json j;
    try {
        j = text.empty() ? json::object() : json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: parse error: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config: top level must be an object");

    for (const std::string& assignment : overrides) {
        std::size_t eq = assignment.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError("config: override must look like key.path=value, got: " +
                              assignment);
        std::string path = assignment.substr(0, eq);
        std::string value = assignment.substr(eq + 1);
        json parsed;
        try {
            parsed = json::parse(value);
        } catch (const json::exception&) {
            parsed = value;  // unquoted strings pass through verbatim
        }
        json* cursor = &j;
        std::size_t begin = 0;
        while (true) {
            std::size_t dot = path.find('.', begin);
            std::string part = path.substr(begin, dot == std::string::npos ? dot : dot - begin);
            if (part.empty()) throw ConfigError("config: empty key segment in: " + path);
            if (dot == std::string::npos) {
                (*cursor)[part] = parsed;
                break;
            }
            cursor = &(*cursor)[part];
            if (!cursor->is_object() && !cursor->is_null())
                throw ConfigError("config: " + path.substr(0, dot) + ": not an object");
            begin = dot + 1;
        }
    }

    ExperimentConfig cfg;
    check_keys(j, "", {"seed", "output_dir", "data", "encoder", "contrastive", "train",
                       "augment", "probe"});
    get_to(j, "", "seed", cfg.seed);
    get_to(j, "", "output_dir", cfg.output_dir);

    if (j.contains("data")) {
        const json& d = j["data"];
        check_keys(d, "data",
                   {"kind", "name", "classes", "dim", "separation", "sigma", "max_per_class",
                    "imbalance_ratio", "test_fraction", "cifar_train", "cifar_test",
                    "cifar_limit"});
        get_to(d, "data", "kind", cfg.data.kind);
        get_to(d, "data", "name", cfg.data.name);
        get_to(d, "data", "classes", cfg.data.classes);
        get_to(d, "data", "dim", cfg.data.dim);
        get_to(d, "data", "separation", cfg.data.separation);
        get_to(d, "data", "sigma", cfg.data.sigma);
        get_to(d, "data", "max_per_class", cfg.data.max_per_class);
        get_to(d, "data", "imbalance_ratio", cfg.data.imbalance_ratio);
        get_to(d, "data", "test_fraction", cfg.data.test_fraction);
        get_to(d, "data", "cifar_train", cfg.data.cifar_train);
        get_to(d, "data", "cifar_test", cfg.data.cifar_test);
        get_to(d, "data", "cifar_limit", cfg.data.cifar_limit);
    }
    if (j.contains("encoder")) {
        const json& e = j["encoder"];
        check_keys(e, "encoder",
                   {"kind", "mlp_hidden", "mlp_head_hidden", "mlp_embed_dim", "mixer_patch_size",
                    "mixer_depth", "mixer_channels", "mixer_dw_kernel", "mixer_dropout_rate",
                    "mixer_head_hidden", "mixer_embed_dim"});
        get_to(e, "encoder", "kind", cfg.encoder.kind);
        get_to(e, "encoder", "mlp_hidden", cfg.encoder.mlp_hidden);
        get_to(e, "encoder", "mlp_head_hidden", cfg.encoder.mlp_head_hidden);
        get_to(e, "encoder", "mlp_embed_dim", cfg.encoder.mlp_embed_dim);
        get_to(e, "encoder", "mixer_patch_size", cfg.encoder.mixer_patch_size);
        get_to(e, "encoder", "mixer_depth", cfg.encoder.mixer_depth);
        get_to(e, "encoder", "mixer_channels", cfg.encoder.mixer_channels);
        get_to(e, "encoder", "mixer_dw_kernel", cfg.encoder.mixer_dw_kernel);
        get_to(e, "encoder", "mixer_dropout_rate", cfg.encoder.mixer_dropout_rate);
        get_to(e, "encoder", "mixer_head_hidden", cfg.encoder.mixer_head_hidden);
        get_to(e, "encoder", "mixer_embed_dim", cfg.encoder.mixer_embed_dim);
    }
    if (j.contains("contrastive")) {
        const json& c = j["contrastive"];
        check_keys(c, "contrastive", {"tau", "tau_plus", "lambda"});
        get_to(c, "contrastive", "tau", cfg.contrastive.tau);
        get_to(c, "contrastive", "tau_plus", cfg.contrastive.tau_plus);
        get_to(c, "contrastive", "lambda", cfg.contrastive.lambda);
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        check_keys(t, "train",
                   {"gamma", "batch_size", "epochs", "target_refresh", "clusters", "lr", "beta1",
                    "beta2", "weight_decay", "checkpoint_interval", "cluster_on_view1"});
        get_to(t, "train", "gamma", cfg.train.gamma);
        get_to(t, "train", "batch_size", cfg.train.batch_size);
        get_to(t, "train", "epochs", cfg.train.epochs);
        get_to(t, "train", "target_refresh", cfg.train.target_refresh);
        get_to(t, "train", "clusters", cfg.train.clusters);
        get_to(t, "train", "lr", cfg.train.lr);
        get_to(t, "train", "beta1", cfg.train.beta1);
        get_to(t, "train", "beta2", cfg.train.beta2);
        get_to(t, "train", "weight_decay", cfg.train.weight_decay);
        get_to(t, "train", "checkpoint_interval", cfg.train.checkpoint_interval);
        get_to(t, "train", "cluster_on_view1", cfg.train.cluster_on_view1);
    }
    if (j.contains("augment")) {
        const json& a = j["augment"];
        check_keys(a, "augment", {"image", "vec_noise_sigma", "vec_drop_p"});
        get_to(a, "augment", "vec_noise_sigma", cfg.augment.vec_noise_sigma);
        get_to(a, "augment", "vec_drop_p", cfg.augment.vec_drop_p);
        if (a.contains("image")) {
            const json& im = a["image"];
            check_keys(im, "augment.image",
                       {"crop_scale", "crop_aspect", "flip_p", "grayscale_p", "jitter_p",
                        "jitter_strengths", "blur_p", "blur_kernel_frac", "blur_sigma"});
            AugmentConfig& ic = cfg.augment.image;
            get_range(im, "augment.image", "crop_scale", ic.crop_scale_min, ic.crop_scale_max);
            get_range(im, "augment.image", "crop_aspect", ic.crop_aspect_min, ic.crop_aspect_max);
            get_to(im, "augment.image", "flip_p", ic.flip_p);
            get_to(im, "augment.image", "grayscale_p", ic.grayscale_p);
            get_to(im, "augment.image", "jitter_p", ic.jitter_p);
            if (im.contains("jitter_strengths")) {
                const json& js = im["jitter_strengths"];
                if (!js.is_array() || js.size() != 4)
                    bad("augment.image.jitter_strengths", "expected 4 strengths");
                ic.jitter_brightness = js[0].get<double>();
                ic.jitter_contrast = js[1].get<double>();
                ic.jitter_saturation = js[2].get<double>();
                ic.jitter_hue = js[3].get<double>();
            }
            get_to(im, "augment.image", "blur_p", ic.blur_p);
            get_to(im, "augment.image", "blur_kernel_frac", ic.blur_kernel_frac);
            get_range(im, "augment.image", "blur_sigma", ic.blur_sigma_min, ic.blur_sigma_max);
        }
    }
    if (j.contains("probe")) {
        const json& p = j["probe"];
        check_keys(p, "probe", {"epochs", "batch_size", "knn_k"});
        get_to(p, "probe", "epochs", cfg.probe.epochs);
        get_to(p, "probe", "batch_size", cfg.probe.batch_size);
        get_to(p, "probe", "knn_k", cfg.probe.knn_k);
    }
    cfg.validate();
    return cfg;
}

std::string ExperimentConfig::to_json_text() const {
    json j;
    j["seed"] = seed;
    j["output_dir"] = output_dir;
    j["data"] = {{"kind", data.kind},
                 {"name", data.name},
                 {"classes", data.classes},
                 {"dim", data.dim},
                 {"separation", data.separation},
                 {"sigma", data.sigma},
                 {"max_per_class", data.max_per_class},
                 {"imbalance_ratio", data.imbalance_ratio},
                 {"test_fraction", data.test_fraction},
                 {"cifar_train", data.cifar_train},
                 {"cifar_test", data.cifar_test},
                 {"cifar_limit", data.cifar_limit}};
    j["encoder"] = {{"kind", encoder.kind},
                    {"mlp_hidden", encoder.mlp_hidden},
                    {"mlp_head_hidden", encoder.mlp_head_hidden},
                    {"mlp_embed_dim", encoder.mlp_embed_dim},
                    {"mixer_patch_size", encoder.mixer_patch_size},
                    {"mixer_depth", encoder.mixer_depth},
                    {"mixer_channels", encoder.mixer_channels},
                    {"mixer_dw_kernel", encoder.mixer_dw_kernel},
                    {"mixer_dropout_rate", encoder.mixer_dropout_rate},
                    {"mixer_head_hidden", encoder.mixer_head_hidden},
                    {"mixer_embed_dim", encoder.mixer_embed_dim}};
    j["contrastive"] = {{"tau", contrastive.tau},
                        {"tau_plus", contrastive.tau_plus},
                        {"lambda", contrastive.lambda}};
    j["train"] = {{"gamma", train.gamma},
                  {"batch_size", train.batch_size},
                  {"epochs", train.epochs},
                  {"target_refresh", train.target_refresh},
                  {"clusters", train.clusters},
                  {"lr", train.lr},
                  {"beta1", train.beta1},
                  {"beta2", train.beta2},
                  {"weight_decay", train.weight_decay},
                  {"checkpoint_interval", train.checkpoint_interval},
                  {"cluster_on_view1", train.cluster_on_view1}};
    j["augment"] = {
        {"image",
         {{"crop_scale", {augment.image.crop_scale_min, augment.image.crop_scale_max}},
          {"crop_aspect", {augment.image.crop_aspect_min, augment.image.crop_aspect_max}},
          {"flip_p", augment.image.flip_p},
          {"grayscale_p", augment.image.grayscale_p},
          {"jitter_p", augment.image.jitter_p},
          {"jitter_strengths",
           {augment.image.jitter_brightness, augment.image.jitter_contrast,
            augment.image.jitter_saturation, augment.image.jitter_hue}},
          {"blur_p", augment.image.blur_p},
          {"blur_kernel_frac", augment.image.blur_kernel_frac},
          {"blur_sigma", {augment.image.blur_sigma_min, augment.image.blur_sigma_max}}}},
        {"vec_noise_sigma", augment.vec_noise_sigma},
        {"vec_drop_p", augment.vec_drop_p}};
    j["probe"] = {{"epochs", probe.epochs},
                  {"batch_size", probe.batch_size},
                  {"knn_k", probe.knn_k}};
    return j.dump(2) + "\n";
}

std::uint64_t ExperimentConfig::hash() const {
    std::string text = to_json_text();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : text) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

void ExperimentConfig::validate() const {
    if (data.kind != "blobs" && data.kind != "cifar")
        throw ConfigError("config: data.kind must be \"blobs\" or \"cifar\"");
    if (encoder.kind != "mlp" && encoder.kind != "mixer")
        throw ConfigError("config: encoder.kind must be \"mlp\" or \"mixer\"");
    if (train.target_refresh != "per-step" && train.target_refresh != "per-epoch")
        throw ConfigError("config: train.target_refresh must be \"per-step\" or \"per-epoch\"");
    if (data.kind == "blobs" && encoder.kind == "mixer")
        throw ConfigError("config: the mixer encoder needs image data");
    if (!(data.test_fraction > 0.0 && data.test_fraction <= 1.0))
        throw ConfigError("config: data.test_fraction must be in (0, 1]");
    try {
        contrastive.validate();
        augment.image.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

std::string ExperimentConfig::dataset_name() const {
    if (!data.name.empty()) return data.name;
    if (data.kind == "cifar") return "cifar10";
    return "blobs-c" + std::to_string(data.classes) + "-r" +
           std::to_string(static_cast<long long>(data.imbalance_ratio));
}

TrainConfig ExperimentConfig::train_config() const {
    TrainConfig tc;
    tc.gamma = train.gamma;
    tc.contrastive = contrastive;
    tc.batch_size = train.batch_size;
    tc.epochs = train.epochs;
    tc.seed = seed;
    tc.target_refresh = train.target_refresh == "per-epoch" ? TargetRefresh::kPerEpoch
                                                            : TargetRefresh::kPerStep;
    tc.clusters = train.clusters;
    tc.adam = {train.lr, train.beta1, train.beta2, train.weight_decay, 1e-8};
    tc.checkpoint_interval = train.checkpoint_interval;
    tc.cluster_on_view1 = train.cluster_on_view1;
    tc.image_aug = augment.image;
    tc.vec_noise_sigma = augment.vec_noise_sigma;
    tc.vec_drop_p = augment.vec_drop_p;
    tc.config_hash = hash();
    return tc;
}

ProbeConfig ExperimentConfig::probe_config(double label_fraction) const {
    ProbeConfig pc;
    pc.epochs = probe.epochs;
    pc.batch_size = probe.batch_size;
    pc.label_fraction = label_fraction;
    pc.adam = {train.lr, train.beta1, train.beta2, train.weight_decay, 1e-8};
    pc.seed = derive_seed(seed, 0x9e37, 0x79b9);
    return pc;
}

Encoder ExperimentConfig::build_encoder() const {
    if (encoder.kind == "mlp") {
        MlpConfig mc;
        mc.input_dim = data.dim;
        mc.hidden = encoder.mlp_hidden;
        mc.head_hidden = encoder.mlp_head_hidden;
        mc.embed_dim = encoder.mlp_embed_dim;
        return Encoder::make_mlp(mc, derive_seed(seed, 0xE11C));
    }
    MixerConfig mc;
    mc.in_channels = 3;
    mc.image_size = 32;
    mc.patch_size = encoder.mixer_patch_size;
    mc.depth = encoder.mixer_depth;
    mc.channels = encoder.mixer_channels;
    mc.dw_kernel = encoder.mixer_dw_kernel;
    mc.dropout_rate = encoder.mixer_dropout_rate;
    mc.head_hidden = encoder.mixer_head_hidden;
    mc.embed_dim = encoder.mixer_embed_dim;
    return Encoder::make_mixer(mc, derive_seed(seed, 0xE11C));
}

std::pair<Dataset, Dataset> ExperimentConfig::build_datasets() const {
    validate();
    if (data.kind == "cifar") {
        if (data.cifar_train.empty() || data.cifar_test.empty())
            throw ConfigError("config: data.cifar_train/cifar_test paths are required");
        auto parse_limited = [&](const std::string& path) {
            std::vector<CifarRecord> records = cifar_read(read_file_bytes(path));
            if (data.cifar_limit != 0 && records.size() > data.cifar_limit)
                records.resize(data.cifar_limit);
            return cifar_to_dataset(records);
        };
        return {parse_limited(data.cifar_train), parse_limited(data.cifar_test)};
    }

    LongTailSpec spec{data.classes, data.max_per_class, data.imbalance_ratio};
    std::vector<std::size_t> train_counts = long_tail_counts(spec);
    std::vector<std::size_t> test_counts;
    test_counts.reserve(train_counts.size());
    for (std::size_t c : train_counts) {
        auto scaled = static_cast<std::size_t>(
            std::llround(data.test_fraction * static_cast<double>(c)));
        test_counts.push_back(scaled < 1 ? 1 : scaled);
    }
    std::vector<std::vector<double>> means =
        make_blob_means(data.classes, data.dim, data.separation);
    Dataset train_ds = gen_blobs(data.classes, data.dim, means, data.sigma, train_counts,
                                 derive_seed(seed, 0xDA7A, 1));
    Dataset test_ds = gen_blobs(data.classes, data.dim, means, data.sigma, test_counts,
                                derive_seed(seed, 0xDA7A, 2));
    return {std::move(train_ds), std::move(test_ds)};
}

}  // namespace declust
