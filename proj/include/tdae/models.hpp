#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "tdae/autodiff.hpp"
#include "tdae/tensor.hpp"

namespace tdae::models {

class UnknownFamilyError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline constexpr const char* kCondConv = "cond-conv";
inline constexpr const char* kCondMlp = "cond-mlp";

inline constexpr std::size_t kStemBankWidth = 32;

/// Identifies one seeded member of a surrogate family. Zero depth/width bounds select the
/// family defaults (cond-conv: 2-3 conv layers of width 6-10; cond-mlp: 1-2 hidden layers of
/// width 12-20).
struct ModelFamilySpec {
    std::string family = kCondConv;
    std::uint64_t seed = 1;
    std::size_t channels = 3;
    std::size_t embedding_dim = 16;
    std::size_t min_depth = 0;
    std::size_t max_depth = 0;
    std::size_t min_width = 0;
    std::size_t max_width = 0;
    /// Nonzero: the first-layer 3x3 filters are the leading columns of a bank drawn from this
    /// seed, so models with equal stem seeds share their front end across families.
    std::uint64_t stem_seed = 0;

    friend bool operator==(const ModelFamilySpec&, const ModelFamilySpec&) = default;
};

std::vector<std::string> known_families();

/// Differentiable surrogate editor f(x, c) -> y. Immutable after construction.
class EditModel {
public:
    virtual ~EditModel() = default;

    const ModelFamilySpec& spec() const noexcept { return spec_; }
    std::size_t channels() const noexcept { return spec_.channels; }
    std::size_t embedding_dim() const noexcept { return spec_.embedding_dim; }

    /// Human-readable architecture descriptor, e.g. "cond-conv[3x3:3->8->8->3]".
    virtual std::string architecture() const = 0;

    /// Graph-level forward. `x` is [H,W,C], `c` is [D]; the result has x's shape.
    virtual nd::Var apply(const nd::Var& x, const nd::Var& c) const = 0;

    /// Conditioning-free first half of the network.
    virtual bool has_encoder() const noexcept { return true; }
    virtual nd::Var encode(const nd::Var& x) const = 0;

    virtual std::vector<const nd::Tensor*> parameters() const = 0;

    nd::Tensor forward(const nd::Tensor& x, const nd::Tensor& c) const;
    nd::Tensor encoder_output(const nd::Tensor& x) const;

    void check_inputs(const nd::Tensor& x, const nd::Tensor& c) const;

protected:
    explicit EditModel(ModelFamilySpec spec) : spec_(std::move(spec)) {}

private:
    ModelFamilySpec spec_;
};

/// Throws UnknownFamilyError for family ids other than cond-conv / cond-mlp.
std::unique_ptr<const EditModel> build_model(const ModelFamilySpec& spec);

struct LossGradient {
    double loss = 0.0;
    nd::Tensor grad;
};

/// Maps a model output node to the scalar being differentiated.
using ScalarHead = std::function<nd::Var(const nd::Var& output)>;

/// Per-run view of a shared model that counts gradient evaluations. Each grad_* call is one
/// backward pass and bumps the counter by exactly one.
class ModelSession {
public:
    explicit ModelSession(const EditModel& model) : model_(&model) {}

    const EditModel& model() const noexcept { return *model_; }

    nd::Tensor forward(const nd::Tensor& x, const nd::Tensor& c) const { return model_->forward(x, c); }
    nd::Tensor encoder_output(const nd::Tensor& x) const { return model_->encoder_output(x); }

    LossGradient grad_x(const nd::Tensor& x, const nd::Tensor& c, const ScalarHead& head);
    LossGradient grad_c(const nd::Tensor& x, const nd::Tensor& c, const ScalarHead& head);
    LossGradient grad_encoder_x(const nd::Tensor& x, const ScalarHead& head);

    std::size_t gradient_calls() const noexcept { return calls_; }
    void reset_calls() noexcept { calls_ = 0; }

private:
    const EditModel* model_;
    std::size_t calls_ = 0;
};

}  // namespace tdae::models
