#pragma once

// Convolutional AE / VAE over reshaped feature tensors.
//
// Topology (C_in, H, W input, channel schedule c1, c2, c3):
//   encoder  3 x [conv 3x3 stride 2 pad 1 -> ReLU]      -> (c3, H/8, W/8)
//   AE       dense(flat -> Z) bottleneck, linear
//   VAE      dense(flat -> Z) for mu, dense(flat -> Z) for log-variance
//   decoder  dense(Z -> flat) -> ReLU -> reshape
//            2 x [conv^T 3x3 stride 2 -> ReLU] -> conv^T 3x3 stride 2 (linear)
//
// Loss: sum over elements, mean over batch, KL weight 1.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "plankton/features/features.hpp"
#include "plankton/nn/checkpoint.hpp"
#include "plankton/nn/layers.hpp"
#include "plankton/nn/optim.hpp"

namespace plankton::embed {

enum class Variant { ae, vae };

inline std::string_view variant_name(Variant v) { return v == Variant::ae ? "AE" : "VAE"; }

inline Variant parse_variant(std::string_view s)
{
    if (s == "AE" || s == "ae")
        return Variant::ae;
    if (s == "VAE" || s == "vae")
        return Variant::vae;
    throw std::invalid_argument("unknown variant '" + std::string(s) + "' (expected AE or VAE)");
}

struct EmbedderConfig
{
    Variant variant = Variant::vae;
    features::Layout layout = features::Layout::r2;
    Shape input_shape;           // (C,H,W); empty means layout_shape(layout)
    std::size_t latent_dim = 500;
    int epochs = 100;
    std::size_t batch_size = 64;
    double lr = 1e-3;
    nn::OptimizerKind optimizer = nn::OptimizerKind::adam;
    double decay_gamma = 0.95;
    std::vector<std::size_t> channels{32, 64, 128};
    std::uint64_t seed = 0;

    /// AE trains with exponentially decayed SGD, VAE with Adam.
    static EmbedderConfig standard(Variant variant, features::Layout layout, std::size_t latent_dim,
                                   std::uint64_t seed = 0)
    {
        EmbedderConfig c;
        c.variant = variant;
        c.layout = layout;
        c.latent_dim = latent_dim;
        c.seed = seed;
        c.optimizer = variant == Variant::ae ? nn::OptimizerKind::sgd_expdecay : nn::OptimizerKind::adam;
        return c;
    }

    Shape sample_shape() const { return input_shape.empty() ? features::layout_shape(layout) : input_shape; }

    void validate() const
    {
        const Shape s = sample_shape();
        if (s.size() != 3 || s[0] == 0)
            throw std::invalid_argument("embedder input must be (C,H,W), got " + shape_str(s));
        if (latent_dim < 1)
            throw std::invalid_argument("latent dimension must be at least 1");
        if (epochs < 1 || batch_size < 1)
            throw std::invalid_argument("epochs and batch size must be at least 1");
        if (!(lr > 0.0))
            throw std::invalid_argument("learning rate must be positive");
        if (channels.empty())
            throw std::invalid_argument("channel schedule is empty");
        const std::size_t factor = std::size_t{1} << channels.size();
        if (s[1] % factor || s[2] % factor)
            throw std::invalid_argument("input " + shape_str(s) + " is not divisible by the stride schedule (2^"
                                        + std::to_string(channels.size()) + ")");
    }
};

inline nlohmann::json to_json(const EmbedderConfig& c)
{
    return {{"variant", variant_name(c.variant)},
            {"layout", features::layout_name(c.layout)},
            {"input_shape", c.sample_shape()},
            {"latent_dim", c.latent_dim},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"lr", c.lr},
            {"optimizer", nn::optimizer_name(c.optimizer)},
            {"decay_gamma", c.decay_gamma},
            {"channels", c.channels},
            {"seed", c.seed}};
}

inline EmbedderConfig embedder_config_from_json(const nlohmann::json& j)
{
    EmbedderConfig c;
    c.variant = parse_variant(j.at("variant").get<std::string>());
    c.layout = features::parse_layout(j.at("layout").get<std::string>());
    c.input_shape = j.at("input_shape").get<Shape>();
    c.latent_dim = j.at("latent_dim").get<std::size_t>();
    c.epochs = j.at("epochs").get<int>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.lr = j.at("lr").get<double>();
    c.optimizer = nn::parse_optimizer(j.at("optimizer").get<std::string>());
    c.decay_gamma = j.at("decay_gamma").get<double>();
    c.channels = j.at("channels").get<std::vector<std::size_t>>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

/// z = mu + eps * exp(logvar / 2)
template <typename T>
std::vector<T> reparametrize(std::span<const T> mu, std::span<const T> logvar, std::span<const T> eps)
{
    if (mu.size() != logvar.size() || mu.size() != eps.size())
        throw std::invalid_argument("reparametrize: mu, logvar and eps lengths differ");
    std::vector<T> z(mu.size());
    for (std::size_t i = 0; i < z.size(); ++i)
        z[i] = mu[i] + eps[i] * std::exp(logvar[i] / T{2});
    return z;
}

/// KL(N(mu, exp(logvar)) || N(0, I)) = sum 0.5 (mu^2 + exp(logvar) - 1 - logvar)
template <typename T>
T kl_divergence(std::span<const T> mu, std::span<const T> logvar)
{
    if (mu.size() != logvar.size())
        throw std::invalid_argument("kl_divergence: mu and logvar lengths differ");
    T total{};
    for (std::size_t i = 0; i < mu.size(); ++i) {
        if (!std::isfinite(static_cast<double>(mu[i])) || !std::isfinite(static_cast<double>(logvar[i])))
            throw std::domain_error("kl_divergence: non-finite input at index " + std::to_string(i));
        total += T{0.5} * (mu[i] * mu[i] + std::exp(logvar[i]) - T{1} - logvar[i]);
    }
    return total;
}

template <typename T>
struct LossTerms
{
    T total{};
    T reconstruction{};
    T kl{};
};

/// Batch loss. x and x' are (N, ...); mu/logvar are (N, Z) and ignored for AE.
template <typename T>
LossTerms<T> loss(Variant variant, const Tensor<T>& x, const Tensor<T>& reconstruction, const Tensor<T>& mu,
                  const Tensor<T>& logvar)
{
    if (x.shape() != reconstruction.shape())
        throw std::invalid_argument("loss: input " + shape_str(x.shape()) + " and reconstruction "
                                    + shape_str(reconstruction.shape()) + " differ");
    if (x.rank() == 0 || x.dim(0) == 0)
        throw std::invalid_argument("loss: empty batch");
    const T n = static_cast<T>(x.dim(0));
    LossTerms<T> out;
    T sq{};
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T d = x[i] - reconstruction[i];
        sq += d * d;
    }
    out.reconstruction = sq / n;
    if (variant == Variant::vae) {
        if (mu.shape() != logvar.shape() || mu.empty() || mu.dim(0) != x.dim(0))
            throw std::invalid_argument("loss: mu/logvar must be (N, Z) matching the batch");
        out.kl = kl_divergence<T>(mu.values(), logvar.values()) / n;
    }
    out.total = out.reconstruction + out.kl;
    return out;
}

template <typename T>
class EmbedderModel
{
public:
    struct Forward
    {
        Tensor<T> reconstruction;
        Tensor<T> mu;     // AE: bottleneck code
        Tensor<T> logvar; // VAE only
        Tensor<T> z;
        Tensor<T> eps; // VAE only
    };

    explicit EmbedderModel(const EmbedderConfig& config) : config_(config)
    {
        config_.validate();
        const Shape in = config_.sample_shape();
        const std::size_t depth = config_.channels.size();

        std::size_t c = in[0];
        for (std::size_t i = 0; i < depth; ++i) {
            nn::ConvGeometry g{c, config_.channels[i], 3, 2, 1, 0, false};
            encoder_convs_.push_back(&encoder_.add(std::make_unique<nn::ConvLayer<T>>(g, "enc" + std::to_string(i))));
            encoder_.add(std::make_unique<nn::ReluLayer<T>>());
            c = config_.channels[i];
        }
        code_shape_ = {c, in[1] >> depth, in[2] >> depth};
        const std::size_t flat = element_count(code_shape_);
        const std::size_t z = config_.latent_dim;

        mu_head_ = std::make_unique<nn::DenseLayer<T>>(flat, z, config_.variant == Variant::vae ? "mu" : "bottleneck");
        if (config_.variant == Variant::vae)
            logvar_head_ = std::make_unique<nn::DenseLayer<T>>(flat, z, "logvar");

        decoder_dense_ = &decoder_.add(std::make_unique<nn::DenseLayer<T>>(z, flat, "dec_dense"));
        decoder_.add(std::make_unique<nn::ReluLayer<T>>());
        decoder_.add(std::make_unique<nn::ReshapeLayer<T>>(code_shape_));
        for (std::size_t i = depth; i-- > 0;) {
            const std::size_t out_c = i == 0 ? in[0] : config_.channels[i - 1];
            nn::ConvGeometry g{config_.channels[i], out_c, 3, 2, 1, 1, true};
            decoder_convs_.push_back(
                &decoder_.add(std::make_unique<nn::ConvLayer<T>>(g, "dec" + std::to_string(depth - 1 - i))));
            if (i != 0)
                decoder_.add(std::make_unique<nn::ReluLayer<T>>());
        }

        std::mt19937_64 rng(config_.seed);
        for (auto* l : encoder_convs_)
            l->initialize(rng);
        mu_head_->initialize(rng);
        if (logvar_head_)
            logvar_head_->initialize(rng);
        decoder_dense_->initialize(rng);
        for (auto* l : decoder_convs_)
            l->initialize(rng);
        if (logvar_head_) // start from unit posterior variance
            for (auto& w : logvar_head_->weight().value.values())
                w *= T{0.01};
    }

    EmbedderModel(EmbedderModel&&) noexcept = default;
    EmbedderModel& operator=(EmbedderModel&&) noexcept = default;

    const EmbedderConfig& config() const noexcept { return config_; }
    const Shape& code_shape() const noexcept { return code_shape_; }

    Shape output_shape(std::size_t batch) const
    {
        Shape s{batch};
        for (auto d : config_.sample_shape())
            s.push_back(d);
        return s;
    }

    std::vector<nn::Parameter<T>*> parameters()
    {
        auto out = encoder_.parameters();
        for (auto* p : mu_head_->parameters())
            out.push_back(p);
        if (logvar_head_)
            for (auto* p : logvar_head_->parameters())
                out.push_back(p);
        for (auto* p : decoder_.parameters())
            out.push_back(p);
        return out;
    }

    std::size_t parameter_count() { return nn::parameter_count(parameters()); }

    /// Full pass. For the VAE, `eps` supplies the reparametrization noise
    /// (N, Z); nullptr means zero noise (z = mu).
    Forward forward(const Tensor<T>& x, const Tensor<T>* eps = nullptr)
    {
        check_input(x);
        Forward f;
        const Tensor<T> h = encoder_.forward(x);
        f.mu = mu_head_->forward(h);
        if (config_.variant == Variant::vae) {
            f.logvar = logvar_head_->forward(h);
            if (eps) {
                if (eps->shape() != f.mu.shape())
                    throw std::invalid_argument("eps shape " + shape_str(eps->shape()) + " does not match "
                                                + shape_str(f.mu.shape()));
                f.eps = *eps;
            } else {
                f.eps = Tensor<T>(f.mu.shape());
            }
            f.z = Tensor<T>(f.mu.shape(), reparametrize<T>(f.mu.values(), f.logvar.values(), f.eps.values()));
        } else {
            f.z = f.mu;
        }
        f.reconstruction = decoder_.forward(f.z);
        return f;
    }

    /// Loss of a recorded forward pass; accumulates parameter gradients and
    /// returns the gradient with respect to the input batch.
    Tensor<T> backward(const Tensor<T>& x, const Forward& f, LossTerms<T>* terms = nullptr)
    {
        const LossTerms<T> l = loss(config_.variant, x, f.reconstruction, f.mu, f.logvar);
        if (terms)
            *terms = l;
        const T n = static_cast<T>(x.dim(0));
        Tensor<T> drecon(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i)
            drecon[i] = T{2} * (f.reconstruction[i] - x[i]) / n;
        const Tensor<T> dz = decoder_.backward(drecon);

        Tensor<T> dh;
        if (config_.variant == Variant::vae) {
            Tensor<T> dmu(dz.shape()), dlogvar(dz.shape());
            for (std::size_t i = 0; i < dz.size(); ++i) {
                const T sigma = std::exp(f.logvar[i] / T{2});
                dmu[i] = dz[i] + f.mu[i] / n;
                dlogvar[i] = dz[i] * f.eps[i] * sigma / T{2} + (std::exp(f.logvar[i]) - T{1}) / (T{2} * n);
            }
            dh = mu_head_->backward(dmu);
            const Tensor<T> dh2 = logvar_head_->backward(dlogvar);
            for (std::size_t i = 0; i < dh.size(); ++i)
                dh[i] += dh2[i];
        } else {
            dh = mu_head_->backward(dz);
        }
        Tensor<T> dx = encoder_.backward(dh);
        for (std::size_t i = 0; i < dx.size(); ++i)
            dx[i] -= drecon[i]; // x also enters the loss directly
        return dx;
    }

    /// Latent codes: bottleneck activations (AE) or posterior means (VAE).
    Tensor<T> encode(const Tensor<T>& x)
    {
        check_input(x);
        return mu_head_->forward(encoder_.forward(x));
    }

    Tensor<T> decode(const Tensor<T>& z) { return decoder_.forward(z); }

    nn::Checkpoint to_checkpoint()
    {
        nn::Checkpoint ckpt;
        ckpt.meta = {{"kind", "embedder"}, {"config", to_json(config_)}};
        for (auto* p : parameters())
            ckpt.arrays.push_back({p->name, p->value.template cast<float>()});
        return ckpt;
    }

    static EmbedderModel from_checkpoint(const nn::Checkpoint& ckpt)
    {
        if (ckpt.meta.value("kind", "") != "embedder")
            throw std::runtime_error("checkpoint does not hold an embedder");
        EmbedderModel m(embedder_config_from_json(ckpt.meta.at("config")));
        for (auto* p : m.parameters()) {
            const auto& a = ckpt.find(p->name);
            if (a.data.shape() != p->value.shape())
                throw std::runtime_error("checkpoint array '" + p->name + "' has shape " + shape_str(a.data.shape())
                                         + ", model expects " + shape_str(p->value.shape()));
            p->value = a.data.template cast<T>();
        }
        return m;
    }

private:
    void check_input(const Tensor<T>& x) const
    {
        const Shape want = config_.sample_shape();
        if (x.rank() != 4 || x.dim(0) == 0 || Shape(x.shape().begin() + 1, x.shape().end()) != want)
            throw std::invalid_argument("embedder expects (N," + shape_str(want).substr(1) + " input, got "
                                        + shape_str(x.shape()));
    }

    EmbedderConfig config_;
    Shape code_shape_;
    nn::Sequential<T> encoder_;
    std::vector<nn::ConvLayer<T>*> encoder_convs_;
    std::unique_ptr<nn::DenseLayer<T>> mu_head_;
    std::unique_ptr<nn::DenseLayer<T>> logvar_head_;
    nn::Sequential<T> decoder_;
    nn::DenseLayer<T>* decoder_dense_ = nullptr;
    std::vector<nn::ConvLayer<T>*> decoder_convs_;
};

struct EpochStats
{
    int epoch = 0;
    double mean_loss = 0.0;
    double reconstruction = 0.0;
    double kl = 0.0;
};

struct TrainHistory
{
    std::vector<EpochStats> epochs;
    double seconds = 0.0;

    /// Soft check: mean loss at the end of every `window`-epoch span is no
    /// larger than at its start.
    bool non_increasing_over(int window) const
    {
        for (std::size_t i = static_cast<std::size_t>(window); i < epochs.size(); ++i)
            if (epochs[i].mean_loss > epochs[i - static_cast<std::size_t>(window)].mean_loss)
                return false;
        return true;
    }

    void write_csv(std::ostream& out) const
    {
        out << "epoch,mean_loss,recon_term,kl_term\n";
        out.precision(9);
        for (const auto& e : epochs)
            out << e.epoch << ',' << e.mean_loss << ',' << e.reconstruction << ',' << e.kl << '\n';
    }
};

class TrainingError : public std::runtime_error
{
public:
    TrainingError(int epoch, std::size_t batch, const std::string& what)
        : std::runtime_error("epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) + ": " + what),
          epoch_(epoch), batch_(batch)
    {
    }
    int epoch() const noexcept { return epoch_; }
    std::size_t batch() const noexcept { return batch_; }

private:
    int epoch_;
    std::size_t batch_;
};

/// Mini-batch training with per-epoch seeded shuffling. Samples are (C,H,W).
template <typename T>
TrainHistory train(EmbedderModel<T>& model, std::span<const Tensor<float>> samples, std::ostream* log = nullptr)
{
    const EmbedderConfig& cfg = model.config();
    if (samples.empty())
        throw std::invalid_argument("train: empty training set");
    const Shape want = cfg.sample_shape();
    for (const auto& s : samples)
        if (s.shape() != want)
            throw std::invalid_argument("train: sample shape " + shape_str(s.shape()) + " does not match "
                                        + shape_str(want));

    const auto start = std::chrono::steady_clock::now();
    auto params = model.parameters();
    nn::OptimizerState<T> opt = cfg.optimizer == nn::OptimizerKind::adam
                                    ? nn::OptimizerState<T>::adam(cfg.lr)
                                    : nn::OptimizerState<T>::sgd(cfg.lr, cfg.decay_gamma);
    std::mt19937_64 shuffle_rng(cfg.seed ^ 0x5bd1e995ULL);
    std::mt19937_64 noise_rng(cfg.seed ^ 0x27d4eb2fULL);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t sample_size = element_count(want);

    TrainHistory history;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double sum_total = 0.0, sum_recon = 0.0, sum_kl = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size, ++batch_index) {
            const std::size_t n = std::min(cfg.batch_size, order.size() - begin);
            Shape bshape{n};
            bshape.insert(bshape.end(), want.begin(), want.end());
            Tensor<T> x(bshape);
            for (std::size_t i = 0; i < n; ++i) {
                const auto& src = samples[order[begin + i]];
                std::copy(src.values().begin(), src.values().end(), x.data() + i * sample_size);
            }
            Tensor<T> eps;
            if (cfg.variant == Variant::vae) {
                eps = Tensor<T>({n, cfg.latent_dim});
                for (auto& e : eps.values())
                    e = static_cast<T>(normal(noise_rng));
            }
            nn::zero_grad(params);
            const auto f = model.forward(x, cfg.variant == Variant::vae ? &eps : nullptr);
            LossTerms<T> terms;
            model.backward(x, f, &terms);
            if (!std::isfinite(static_cast<double>(terms.total)))
                throw TrainingError(epoch, batch_index, "non-finite loss");
            if (opt.kind == nn::OptimizerKind::adam)
                nn::adam_step(opt, params);
            else
                nn::sgd_step(opt, params, epoch);
            sum_total += static_cast<double>(terms.total) * static_cast<double>(n);
            sum_recon += static_cast<double>(terms.reconstruction) * static_cast<double>(n);
            sum_kl += static_cast<double>(terms.kl) * static_cast<double>(n);
        }
        const double count = static_cast<double>(samples.size());
        history.epochs.push_back({epoch, sum_total / count, sum_recon / count, sum_kl / count});
        if (log)
            *log << "epoch " << epoch << " loss " << sum_total / count << '\n';
    }
    history.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (log && !history.non_increasing_over(10))
        *log << "note: training loss rose across a 10-epoch window\n";
    return history;
}

/// Latent vectors for every sample, in order, computed in batches.
template <typename T>
std::vector<std::vector<float>> encode_all(EmbedderModel<T>& model, std::span<const Tensor<float>> samples)
{
    std::vector<std::vector<float>> out;
    out.reserve(samples.size());
    const Shape want = model.config().sample_shape();
    const std::size_t step = model.config().batch_size;
    for (std::size_t begin = 0; begin < samples.size(); begin += step) {
        const std::size_t n = std::min(step, samples.size() - begin);
        std::vector<Tensor<float>> chunk(samples.begin() + static_cast<std::ptrdiff_t>(begin),
                                         samples.begin() + static_cast<std::ptrdiff_t>(begin + n));
        const Tensor<T> z = model.encode(stack<T>(chunk));
        for (std::size_t i = 0; i < n; ++i) {
            auto row = z.sample(i);
            out.emplace_back(row.begin(), row.end());
        }
    }
    return out;
}

} // namespace plankton::embed
