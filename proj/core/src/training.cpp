#include "declust/training.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "declust/container.hpp"
#include "declust/rng.hpp"

namespace declust {

Adam::Adam(const AdamConfig& cfg, const std::vector<Tensor>& params) : cfg_(cfg) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Tensor& p : params) {
        m_.emplace_back(Tensor::zeros(p.shape));
        v_.emplace_back(Tensor::zeros(p.shape));
    }
}

void Adam::step(std::vector<Tensor*> params, const std::vector<const Tensor*>& grads,
                const std::vector<std::string>& names, const std::vector<bool>& decay) {
    if (params.size() != m_.size() || grads.size() != m_.size() || names.size() != m_.size() ||
        decay.size() != m_.size())
        throw std::invalid_argument("Adam: parameter list size changed");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i]->same_shape(m_[i]) || !grads[i]->same_shape(m_[i]))
            throw std::invalid_argument("Adam: shape mismatch for " + names[i]);
        if (!grads[i]->all_finite())
            throw std::invalid_argument("Adam: non-finite gradient for " + names[i]);
    }
    t_ += 1;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = *grads[i];
        if (decay[i] && cfg_.weight_decay != 0.0)
            for (double& x : p.data) x -= cfg_.lr * cfg_.weight_decay * x;
        for (std::size_t j = 0; j < p.numel(); ++j) {
            m_[i].data[j] = cfg_.beta1 * m_[i].data[j] + (1.0 - cfg_.beta1) * g.data[j];
            v_[i].data[j] = cfg_.beta2 * v_[i].data[j] + (1.0 - cfg_.beta2) * g.data[j] * g.data[j];
            double mhat = m_[i].data[j] / bc1;
            double vhat = v_[i].data[j] / bc2;
            p.data[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

void Adam::restore(std::vector<Tensor> m, std::vector<Tensor> v, long t) {
    if (m.size() != m_.size() || v.size() != v_.size())
        throw std::invalid_argument("Adam: restore size mismatch");
    m_ = std::move(m);
    v_ = std::move(v);
    t_ = t;
}

void TrainConfig::validate() const {
    if (!(gamma >= 0.0)) throw std::invalid_argument("TrainConfig: gamma must be >= 0");
    if (batch_size < 2) throw std::invalid_argument("TrainConfig: batch_size must be >= 2");
    contrastive.validate();
    image_aug.validate();
}

double mtl_loss(double contrastive, double clustering, double gamma) {
    if (!std::isfinite(contrastive) || !std::isfinite(clustering))
        throw std::invalid_argument("mtl_loss: non-finite component");
    return contrastive + gamma * clustering;
}

void Checkpoint::save(const std::string& path) const {
    std::vector<NamedTensor> items;
    items.push_back({"meta", Tensor({4}, {static_cast<double>(epoch),
                                          static_cast<double>(adam_t),
                                          static_cast<double>(config_hash & 0xffffffffULL),
                                          static_cast<double>(config_hash >> 32)})});
    for (std::size_t i = 0; i < params.size(); ++i)
        items.push_back({"param." + params.names[i], params.values[i]});
    for (std::size_t i = 0; i < buffers.size(); ++i)
        items.push_back({"buffer." + buffers.names[i], buffers.values[i]});
    items.push_back({"cluster.centroids", centroids});
    for (std::size_t i = 0; i < params.size(); ++i) {
        items.push_back({"adam.m.param." + params.names[i], adam_m[i]});
        items.push_back({"adam.v.param." + params.names[i], adam_v[i]});
    }
    items.push_back({"adam.m.cluster.centroids", adam_m.back()});
    items.push_back({"adam.v.cluster.centroids", adam_v.back()});
    save_container(path, items);
}

Checkpoint Checkpoint::load(const std::string& path) {
    Checkpoint ck;
    std::vector<NamedTensor> items = load_container(path);
    if (items.empty() || items[0].name != "meta" || items[0].value.numel() != 4)
        throw std::invalid_argument("checkpoint: missing meta record in " + path);
    ck.epoch = static_cast<std::size_t>(items[0].value.data[0]);
    ck.adam_t = static_cast<long>(items[0].value.data[1]);
    ck.config_hash = static_cast<std::uint64_t>(items[0].value.data[2]) |
                     (static_cast<std::uint64_t>(items[0].value.data[3]) << 32);
    std::vector<Tensor> m_params, v_params;
    Tensor m_centroids, v_centroids;
    for (std::size_t i = 1; i < items.size(); ++i) {
        const std::string& name = items[i].name;
        Tensor& val = items[i].value;
        if (name.starts_with("adam.m.param."))
            m_params.push_back(std::move(val));
        else if (name.starts_with("adam.v.param."))
            v_params.push_back(std::move(val));
        else if (name == "adam.m.cluster.centroids")
            m_centroids = std::move(val);
        else if (name == "adam.v.cluster.centroids")
            v_centroids = std::move(val);
        else if (name == "cluster.centroids")
            ck.centroids = std::move(val);
        else if (name.starts_with("param."))
            ck.params.add(name.substr(6), std::move(val));
        else if (name.starts_with("buffer.")) {
            val.requires_grad = false;
            ck.buffers.names.push_back(name.substr(7));
            ck.buffers.values.push_back(std::move(val));
        } else
            throw std::invalid_argument("checkpoint: unexpected record " + name);
    }
    if (m_params.size() != ck.params.size() || v_params.size() != ck.params.size())
        throw std::invalid_argument("checkpoint: optimizer state does not match parameters");
    ck.adam_m = std::move(m_params);
    ck.adam_v = std::move(v_params);
    ck.adam_m.push_back(std::move(m_centroids));
    ck.adam_v.push_back(std::move(v_centroids));
    return ck;
}

namespace {

std::vector<Tensor> trainable_list(const Encoder& enc, const ClusterState& clusters) {
    std::vector<Tensor> all = enc.params().values;
    all.push_back(clusters.centroids);
    return all;
}

}  // namespace

Trainer::Trainer(Encoder encoder, ClusterState clusters, const TrainConfig& cfg)
    : encoder_(std::move(encoder)),
      clusters_(std::move(clusters)),
      cfg_(cfg),
      adam_(cfg.adam, trainable_list(encoder_, clusters_)) {
    cfg_.validate();
    clusters_.validate();  // uninitialized centroids are rejected here
}

std::uint64_t Trainer::stream_seed(std::uint64_t step_seed, std::size_t index, int tag) {
    return derive_seed(step_seed, index, static_cast<std::uint64_t>(tag));
}

Tensor Trainer::augment_sample(const Tensor& sample, std::uint64_t seed) const {
    if (sample.rank() == 3) return augment_image(sample, cfg_.image_aug, seed);
    return augment_vector(sample, cfg_.vec_noise_sigma, cfg_.vec_drop_p, seed);
}

Trainer::ForwardNodes Trainer::forward(const std::vector<const Tensor*>& batch,
                                       std::uint64_t step_seed,
                                       const Tensor* fixed_target) const {
    if (batch.size() < 2) throw std::invalid_argument("train_step: batch needs >= 2 samples");
    ForwardNodes fn;
    Graph& g = fn.graph;
    fn.params = bind_params(g, encoder_.params(), true);
    Tensor centroids = clusters_.centroids;
    centroids.requires_grad = true;
    fn.centroids = g.input(std::move(centroids));

    std::vector<NodeId> reps1, reps2, embs;
    reps1.reserve(batch.size());
    reps2.reserve(batch.size());
    embs.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        Tensor view1 = augment_sample(*batch[i], stream_seed(step_seed, i, 1));
        Tensor view2 = augment_sample(*batch[i], stream_seed(step_seed, i, 2));
        EmbeddingNode e1 =
            encoder_.encode(g, fn.params, view1, Mode::kTrain, stream_seed(step_seed, i, 3),
                            &fn.hooks);
        EmbeddingNode e2 =
            encoder_.encode(g, fn.params, view2, Mode::kTrain, stream_seed(step_seed, i, 4),
                            &fn.hooks);
        reps1.push_back(encoder_.project(g, fn.params, e1).id);
        reps2.push_back(encoder_.project(g, fn.params, e2).id);
        EmbeddingNode ec = cfg_.cluster_on_view1
                               ? e1
                               : encoder_.encode(g, fn.params, *batch[i], Mode::kTrain,
                                                 stream_seed(step_seed, i, 5), &fn.hooks);
        embs.push_back(ec.id);
    }

    NodeId z1 = stack_rows(g, reps1);
    NodeId z2 = stack_rows(g, reps2);
    fn.contrastive = batch_loss_node(g, z1, z2, cfg_.contrastive);

    NodeId e_mat = stack_rows(g, embs);
    NodeId q = soft_assign_node(g, e_mat, fn.centroids, clusters_.alpha);
    Tensor target =
        fixed_target ? *fixed_target : target_distribution(g.value(q));  // detached from the graph
    fn.clustering = kl_loss_node(g, target, q);
    fn.total = g.add(fn.contrastive, g.mul_scalar(fn.clustering, cfg_.gamma));
    return fn;
}

StepResult Trainer::step(const std::vector<const Tensor*>& batch, std::uint64_t step_seed,
                         const Tensor* fixed_target) {
    ForwardNodes fn = forward(batch, step_seed, fixed_target);
    GradMap gm = fn.graph.backward(fn.total);

    std::vector<Tensor*> params;
    std::vector<const Tensor*> grads;
    std::vector<std::string> names;
    std::vector<bool> decay;
    for (std::size_t i = 0; i < encoder_.params().size(); ++i) {
        params.push_back(&encoder_.params().values[i]);
        grads.push_back(&gm.at(fn.params.ids[i]));
        names.push_back(encoder_.params().names[i]);
        decay.push_back(true);
    }
    params.push_back(&clusters_.centroids);
    grads.push_back(&gm.at(fn.centroids));
    names.push_back("cluster.centroids");
    decay.push_back(false);  // decaying cluster centers toward the origin is meaningless
    adam_.step(std::move(params), grads, names, decay);
    encoder_.update_running_stats(fn.graph, fn.hooks);

    return {fn.graph.value(fn.contrastive).data[0], fn.graph.value(fn.clustering).data[0],
            fn.graph.value(fn.total).data[0]};
}

StepResult Trainer::evaluate_batch(const std::vector<const Tensor*>& batch,
                                   std::uint64_t step_seed, const Tensor* fixed_target) const {
    ForwardNodes fn = forward(batch, step_seed, fixed_target);
    return {fn.graph.value(fn.contrastive).data[0], fn.graph.value(fn.clustering).data[0],
            fn.graph.value(fn.total).data[0]};
}

Checkpoint Trainer::make_checkpoint(std::size_t epoch) const {
    Checkpoint ck;
    ck.params = encoder_.params();
    ck.buffers = encoder_.buffers();
    ck.centroids = clusters_.centroids;
    ck.adam_m = adam_.m();
    ck.adam_v = adam_.v();
    ck.adam_t = adam_.t();
    ck.epoch = epoch;
    ck.config_hash = cfg_.config_hash;
    return ck;
}

std::string loss_csv(const std::vector<EpochRow>& rows) {
    std::ostringstream out;
    out.precision(17);
    out << "epoch,contrastive_loss,clustering_loss,total_loss,wall_seconds\n";
    for (const EpochRow& r : rows)
        out << r.epoch << "," << r.contrastive << "," << r.clustering << "," << r.total << ","
            << r.wall_seconds << "\n";
    return out.str();
}

FitResult fit(const Dataset& ds, Encoder encoder, const TrainConfig& cfg,
              const std::function<void(const Checkpoint&, std::size_t)>& on_interval) {
    ds.validate();
    cfg.validate();
    if (ds.size() == 0) throw std::invalid_argument("fit: empty dataset");
    std::size_t k = cfg.clusters != 0 ? cfg.clusters
                                      : static_cast<std::size_t>(ds.class_count);

    Tensor init_embeddings = encoder.embed_all(ds.samples);
    ClusterState clusters = kmeans_init(init_embeddings, k, derive_seed(cfg.seed, 0, 0));
    Trainer trainer(std::move(encoder), std::move(clusters), cfg);

    FitResult result;
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        auto started = std::chrono::steady_clock::now();

        Tensor epoch_target;  // per-epoch refresh: N x K target rows
        if (cfg.target_refresh == TargetRefresh::kPerEpoch) {
            Tensor all = trainer.encoder().embed_all(ds.samples);
            epoch_target = target_distribution(soft_assign(all, trainer.clusters()));
        }

        Rng shuffle_rng(derive_seed(cfg.seed, epoch, 1));
        shuffle_rng.shuffle(order);

        double sum_c = 0.0, sum_k = 0.0, sum_t = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < ds.size(); start += cfg.batch_size) {
            std::size_t len = std::min(cfg.batch_size, ds.size() - start);
            if (len < 2) break;  // a trailing singleton cannot form a batch
            std::vector<const Tensor*> batch;
            batch.reserve(len);
            for (std::size_t i = 0; i < len; ++i) batch.push_back(&ds.samples[order[start + i]]);

            Tensor batch_target;
            const Tensor* target_ptr = nullptr;
            if (cfg.target_refresh == TargetRefresh::kPerEpoch) {
                std::size_t kk = epoch_target.shape[1];
                batch_target = Tensor({len, kk});
                for (std::size_t i = 0; i < len; ++i)
                    for (std::size_t j = 0; j < kk; ++j)
                        batch_target.at(i, j) = epoch_target.at(order[start + i], j);
                target_ptr = &batch_target;
            }

            StepResult sr = trainer.step(batch, derive_seed(cfg.seed, epoch, 2 + steps),
                                         target_ptr);
            sum_c += sr.contrastive;
            sum_k += sr.clustering;
            sum_t += sr.total;
            steps += 1;
        }

        double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
                          .count();
        double denom = steps > 0 ? static_cast<double>(steps) : 1.0;
        result.rows.push_back({epoch, sum_c / denom, sum_k / denom, sum_t / denom, wall});

        if (cfg.checkpoint_interval != 0 && epoch % cfg.checkpoint_interval == 0 && on_interval)
            on_interval(trainer.make_checkpoint(epoch), epoch);
    }

    result.checkpoint = trainer.make_checkpoint(cfg.epochs);
    return result;
}

}  // namespace declust
