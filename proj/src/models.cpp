#include "tdae/models.hpp"

#include <cmath>
#include <sstream>

#include "tdae/rng.hpp"

namespace tdae::models {

using nd::Shape;
using nd::Tensor;
using nd::Var;

namespace {

Tensor uniform_tensor(Rng& rng, Shape shape, std::size_t fan_in) {
    // uniform(-0.5, 0.5) rescaled to unit variance per fan-in
    const double gain = std::sqrt(12.0 / static_cast<double>(fan_in));
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = rng.uniform(-0.5, 0.5) * gain;
    return t;
}

// Embedding-to-feature maps are kept weak: a sign step of size eta on c should be small next to
// the output change a budget-sized image perturbation causes.
constexpr double kConditioningGain = 0.1;

Tensor conditioning_weights(Rng& rng, std::size_t dim, std::size_t width, std::size_t fan_in) {
    Tensor t = uniform_tensor(rng, Shape{dim, width}, fan_in);
    for (auto& v : t.data()) v *= kConditioningGain;
    return t;
}

// First-layer filters: own stream, or the leading `width` columns of the shared stem bank.
Tensor first_layer(Rng& rng, const ModelFamilySpec& spec, std::size_t width, std::size_t fan_in) {
    const Shape shape{3, 3, spec.channels, width};
    if (spec.stem_seed == 0) return uniform_tensor(rng, shape, fan_in);
    if (width > kStemBankWidth) throw std::invalid_argument("first-layer width exceeds the stem bank");
    Rng bank_rng(mix_seed(spec.stem_seed, 0x57E));
    const Tensor bank = uniform_tensor(bank_rng, Shape{3, 3, spec.channels, kStemBankWidth}, fan_in);
    Tensor out(shape);
    const std::size_t taps = 9 * spec.channels;
    for (std::size_t t = 0; t < taps; ++t)
        for (std::size_t o = 0; o < width; ++o) out[t * width + o] = bank[t * kStemBankWidth + o];
    return out;
}

std::size_t draw_in_range(Rng& rng, std::size_t lo, std::size_t hi) {
    if (lo == 0 || hi < lo) throw std::invalid_argument("invalid model depth/width range");
    return static_cast<std::size_t>(rng.integer(lo, hi));
}

void fill_defaults(ModelFamilySpec& s, std::size_t dmin, std::size_t dmax, std::size_t wmin, std::size_t wmax) {
    if (s.min_depth == 0) s.min_depth = dmin;
    if (s.max_depth == 0) s.max_depth = std::max(dmax, s.min_depth);
    if (s.min_width == 0) s.min_width = wmin;
    if (s.max_width == 0) s.max_width = std::max(wmax, s.min_width);
}

// Per-channel conditioning term c^T A broadcast over the spatial grid.
Var condition_field(const Var& c, const Tensor& cond, const Shape& field_shape) {
    nd::Graph& g = c.graph();
    Var row = nd::reshape(c, Shape{1, c.shape()[0]});
    Var bias = nd::matmul(row, g.constant(cond));
    return nd::broadcast(bias, field_shape);
}

// cond-conv: stack of 3x3 convolutions, tanh between layers, each layer biased by an affine map of c.
class CondConvModel final : public EditModel {
public:
    explicit CondConvModel(ModelFamilySpec spec) : EditModel(std::move(spec)) {
        Rng rng(mix_seed(this->spec().seed, 0xC0));
        const std::size_t depth = draw_in_range(rng, this->spec().min_depth, this->spec().max_depth);
        const std::size_t width = draw_in_range(rng, this->spec().min_width, this->spec().max_width);
        widths_.push_back(channels());
        for (std::size_t l = 0; l + 1 < depth; ++l) widths_.push_back(width);
        widths_.push_back(channels());
        for (std::size_t l = 0; l < depth; ++l) {
            const std::size_t cin = widths_[l], cout = widths_[l + 1];
            kernels_.push_back(l == 0 ? first_layer(rng, this->spec(), cout, 9 * cin)
                                      : uniform_tensor(rng, Shape{3, 3, cin, cout}, 9 * cin));
            biases_.emplace_back(Shape{cout}, 0.0);
            cond_.push_back(conditioning_weights(rng, embedding_dim(), cout, embedding_dim()));
        }
    }

    std::string architecture() const override {
        std::ostringstream os;
        os << kCondConv << "[3x3:";
        for (std::size_t i = 0; i < widths_.size(); ++i) os << (i ? "->" : "") << widths_[i];
        os << ']';
        return os.str();
    }

    Var apply(const Var& x, const Var& c) const override {
        Graph& g = x.graph();
        Var h = x;
        for (std::size_t l = 0; l < kernels_.size(); ++l) {
            Var pre = nd::conv2d(h, g.constant(kernels_[l]), 1);
            const Shape field = pre.shape();
            pre = pre + nd::broadcast(g.constant(biases_[l]), field) + condition_field(c, cond_[l], field);
            h = l + 1 < kernels_.size() ? nd::tanh(pre) : pre;
        }
        return h;
    }

    Var encode(const Var& x) const override {
        Graph& g = x.graph();
        Var h = x;
        for (std::size_t l = 0; l < encoder_layers(); ++l) {
            Var pre = nd::conv2d(h, g.constant(kernels_[l]), 1);
            h = nd::tanh(pre + nd::broadcast(g.constant(biases_[l]), pre.shape()));
        }
        return h;
    }

    std::vector<const Tensor*> parameters() const override {
        std::vector<const Tensor*> out;
        for (std::size_t l = 0; l < kernels_.size(); ++l) {
            out.push_back(&kernels_[l]);
            out.push_back(&biases_[l]);
            out.push_back(&cond_[l]);
        }
        return out;
    }

private:
    using Graph = nd::Graph;

    std::size_t encoder_layers() const { return std::max<std::size_t>(1, kernels_.size() / 2); }

    std::vector<std::size_t> widths_;
    std::vector<Tensor> kernels_;
    std::vector<Tensor> biases_;
    std::vector<Tensor> cond_;
};

// cond-mlp: a per-pixel MLP on the 3x3 neighbourhood with c concatenated to every patch.
// The patch part of the first layer is a 3x3 convolution; deeper layers act per pixel.
class CondMlpModel final : public EditModel {
public:
    explicit CondMlpModel(ModelFamilySpec spec) : EditModel(std::move(spec)) {
        Rng rng(mix_seed(this->spec().seed, 0xA1));
        const std::size_t hidden_layers = draw_in_range(rng, this->spec().min_depth, this->spec().max_depth);
        width_ = draw_in_range(rng, this->spec().min_width, this->spec().max_width);
        const std::size_t fan_in = 9 * channels() + embedding_dim();
        patch_ = first_layer(rng, this->spec(), width_, fan_in);
        cond_ = conditioning_weights(rng, embedding_dim(), width_, fan_in);
        bias_ = Tensor(Shape{width_}, 0.0);
        for (std::size_t l = 1; l < hidden_layers; ++l) {
            dense_.push_back(uniform_tensor(rng, Shape{width_, width_}, width_));
            dense_bias_.emplace_back(Shape{width_}, 0.0);
        }
        head_ = uniform_tensor(rng, Shape{width_, channels()}, width_);
        hidden_layers_ = hidden_layers;
    }

    std::string architecture() const override {
        std::ostringstream os;
        os << kCondMlp << "[patch3x3+c:" << 9 * channels() << '+' << embedding_dim();
        for (std::size_t l = 0; l < hidden_layers_; ++l) os << "->" << width_;
        os << "->" << channels() << ']';
        return os.str();
    }

    Var apply(const Var& x, const Var& c) const override {
        Graph& g = x.graph();
        const std::size_t h = x.shape()[0], w = x.shape()[1];
        Var pre = nd::conv2d(x, g.constant(patch_), 1);
        const Shape field = pre.shape();
        pre = pre + nd::broadcast(g.constant(bias_), field) + condition_field(c, cond_, field);
        Var act = nd::reshape(nd::tanh(pre), Shape{h * w, width_});
        for (std::size_t l = 0; l < dense_.size(); ++l) {
            Var z = nd::matmul(act, g.constant(dense_[l]));
            act = nd::softplus(z + nd::broadcast(g.constant(dense_bias_[l]), z.shape()));
        }
        Var y = nd::matmul(act, g.constant(head_));
        return nd::reshape(y, Shape{h, w, channels()});
    }

    Var encode(const Var& x) const override {
        Graph& g = x.graph();
        Var pre = nd::conv2d(x, g.constant(patch_), 1);
        return nd::tanh(pre + nd::broadcast(g.constant(bias_), pre.shape()));
    }

    std::vector<const Tensor*> parameters() const override {
        std::vector<const Tensor*> out{&patch_, &cond_, &bias_};
        for (std::size_t l = 0; l < dense_.size(); ++l) {
            out.push_back(&dense_[l]);
            out.push_back(&dense_bias_[l]);
        }
        out.push_back(&head_);
        return out;
    }

private:
    using Graph = nd::Graph;

    std::size_t width_ = 0;
    std::size_t hidden_layers_ = 0;
    Tensor patch_;
    Tensor cond_;
    Tensor bias_;
    std::vector<Tensor> dense_;
    std::vector<Tensor> dense_bias_;
    Tensor head_;
};

}  // namespace

std::vector<std::string> known_families() { return {kCondConv, kCondMlp}; }

void EditModel::check_inputs(const Tensor& x, const Tensor& c) const {
    if (x.rank() != 3 || x.shape()[2] != channels()) {
        throw nd::ShapeError("model expects an [H,W," + std::to_string(channels()) + "] image, got " +
                             nd::to_string(x.shape()));
    }
    if (c.rank() != 1 || c.shape()[0] != embedding_dim()) {
        throw nd::ShapeError("model expects a [" + std::to_string(embedding_dim()) + "] embedding, got " +
                             nd::to_string(c.shape()));
    }
}

Tensor EditModel::forward(const Tensor& x, const Tensor& c) const {
    check_inputs(x, c);
    nd::Graph g;
    return apply(g.constant(x), g.constant(c)).value();
}

Tensor EditModel::encoder_output(const Tensor& x) const {
    check_inputs(x, Tensor(Shape{embedding_dim()}));
    if (!has_encoder()) throw std::logic_error(spec().family + " has no encoder sub-map");
    nd::Graph g;
    return encode(g.constant(x)).value();
}

std::unique_ptr<const EditModel> build_model(const ModelFamilySpec& spec) {
    ModelFamilySpec s = spec;
    if (s.channels == 0 || s.embedding_dim == 0) throw std::invalid_argument("channels and embedding_dim must be positive");
    if (s.family == kCondConv) {
        fill_defaults(s, 2, 3, 6, 10);
        return std::make_unique<CondConvModel>(std::move(s));
    }
    if (s.family == kCondMlp) {
        fill_defaults(s, 1, 2, 12, 20);
        return std::make_unique<CondMlpModel>(std::move(s));
    }
    throw UnknownFamilyError("unknown model family '" + spec.family + "'");
}

namespace {

LossGradient finish(nd::Graph& g, const Var& wrt, const Var& out, std::size_t& calls) {
    const auto grads = g.backward(out);
    ++calls;
    return {out.value().item(), grads.at(wrt)};
}

}  // namespace

LossGradient ModelSession::grad_x(const Tensor& x, const Tensor& c, const ScalarHead& head) {
    model_->check_inputs(x, c);
    nd::Graph g;
    Var xv = g.input(x);
    Var out = head(model_->apply(xv, g.constant(c)));
    return finish(g, xv, out, calls_);
}

LossGradient ModelSession::grad_c(const Tensor& x, const Tensor& c, const ScalarHead& head) {
    model_->check_inputs(x, c);
    nd::Graph g;
    Var cv = g.input(c);
    Var out = head(model_->apply(g.constant(x), cv));
    return finish(g, cv, out, calls_);
}

LossGradient ModelSession::grad_encoder_x(const Tensor& x, const ScalarHead& head) {
    model_->check_inputs(x, Tensor(Shape{model_->embedding_dim()}));
    if (!model_->has_encoder()) throw std::logic_error(model_->spec().family + " has no encoder sub-map");
    nd::Graph g;
    Var xv = g.input(x);
    Var out = head(model_->encode(xv));
    return finish(g, xv, out, calls_);
}

}  // namespace tdae::models
