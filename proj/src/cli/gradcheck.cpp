#include "chroma/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "chroma/errors.hpp"
#include "chroma/ops.hpp"

namespace chroma {

namespace {

using Forward = std::function<Var(const std::vector<Var>&)>;

struct Case {
    Forward forward;
    std::vector<Tensor> inputs;
};

struct OpSuite {
    std::string name;
    std::function<Case(std::mt19937_64&, int)> make;
};

Tensor away_from_zero(const Shape& shape, std::mt19937_64& rng, float lo, float hi, float gap) {
    std::uniform_real_distribution<float> dist(lo, hi);
    Tensor t(shape);
    for (auto& v : t.mutable_data()) {
        do {
            v = dist(rng);
        } while (std::fabs(v) < gap);
    }
    return t;
}

double rel_error(const Tensor& a, const Tensor& b) {
    double diff = 0.0, scale = 1e-12;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        diff = std::max(diff, std::fabs(static_cast<double>(a[i]) - b[i]));
        scale = std::max({scale, std::fabs(static_cast<double>(a[i])), std::fabs(static_cast<double>(b[i]))});
    }
    return diff / scale;
}

double check_case(const Case& c, std::mt19937_64& rng, double fault_scale) {
    std::vector<Var> params;
    for (const auto& t : c.inputs) params.push_back(Var::parameter(t));
    Var out = c.forward(params);
    const Tensor seed = Tensor::uniform(out.shape(), rng, -1, 1);
    backward(out, seed);

    double worst = 0.0;
    // Forward values are float32, so the step must be large enough that
    // rounding in f does not swamp (f(x+h) - f(x-h)) / 2h. Kinked ops keep
    // their sample points further than h from the kink.
    constexpr float h = 1e-2f;
    for (std::size_t which = 0; which < c.inputs.size(); ++which) {
        const auto f = [&](const Tensor& probe) {
            std::vector<Var> args;
            for (std::size_t j = 0; j < c.inputs.size(); ++j) {
                args.push_back(Var::constant(j == which ? probe : c.inputs[j]));
            }
            return dot(c.forward(args).value(), seed);
        };
        Tensor probe = c.inputs[which];
        Tensor numeric(probe.shape());
        for (std::size_t i = 0; i < probe.numel(); ++i) {
            const float orig = probe[i];
            probe[i] = orig + h;
            const double up = f(probe);
            probe[i] = orig - h;
            const double down = f(probe);
            probe[i] = orig;
            numeric[i] = static_cast<float>((up - down) / (2.0 * h));
        }
        if (!params[which].grad()) {
            return INFINITY;
        }
        Tensor analytic = *params[which].grad();
        for (auto& v : analytic.mutable_data()) v = static_cast<float>(v * fault_scale);
        worst = std::max(worst, rel_error(analytic, numeric));
    }
    return worst;
}

std::vector<OpSuite> suites() {
    const auto U = [](const Shape& s, std::mt19937_64& rng) { return Tensor::uniform(s, rng, -2, 2); };
    std::vector<OpSuite> out;
    out.push_back({"conv2d", [U](std::mt19937_64& rng, int i) {
                       const int stride = 1 + i % 2;
                       return Case{[stride](const auto& v) { return ops::conv2d(v[0], v[1], v[2], stride, 1); },
                                   {U({2, 2, 5, 5}, rng), U({3, 2, 3, 3}, rng), U({3}, rng)}};
                   }});
    out.push_back({"conv_transpose2d", [U](std::mt19937_64& rng, int i) {
                       const int stride = 1 + i % 2;
                       return Case{
                           [stride](const auto& v) { return ops::conv_transpose2d(v[0], v[1], v[2], stride, 1); },
                           {U({2, 2, 3, 3}, rng), U({2, 3, 4, 4}, rng), U({3}, rng)}};
                   }});
    for (Mode mode : {Mode::train, Mode::eval}) {
        out.push_back({mode == Mode::train ? "batchnorm2d(train)" : "batchnorm2d(eval)",
                       [U, mode](std::mt19937_64& rng, int) {
                           return Case{[mode](const auto& v) {
                                           BatchNormStats stats(3);
                                           stats.reset();
                                           return ops::batchnorm2d(v[0], v[1], v[2], stats, mode);
                                       },
                                       {U({2, 3, 3, 3}, rng), U({3}, rng), U({3}, rng)}};
                       }});
    }
    const auto pointwise = [&out](const char* name, Var (*fn)(const Var&)) {
        out.push_back({name, [fn](std::mt19937_64& rng, int) {
                           return Case{[fn](const auto& v) { return fn(v[0]); },
                                       {away_from_zero({2, 2, 3, 3}, rng, -2, 2, 0.05f)}};
                       }});
    };
    out.push_back({"leaky_relu", [](std::mt19937_64& rng, int) {
                       return Case{[](const auto& v) { return ops::leaky_relu(v[0], 0.2f); },
                                   {away_from_zero({2, 2, 3, 3}, rng, -2, 2, 0.05f)}};
                   }});
    pointwise("relu", &ops::relu);
    pointwise("tanh", &ops::tanh);
    pointwise("sigmoid", &ops::sigmoid);
    out.push_back({"concat_channels", [U](std::mt19937_64& rng, int) {
                       return Case{[](const auto& v) { return ops::concat_channels({v[0], v[1]}); },
                                   {U({2, 1, 3, 3}, rng), U({2, 2, 3, 3}, rng)}};
                   }});
    out.push_back({"reshape", [U](std::mt19937_64& rng, int) {
                       return Case{[](const auto& v) { return ops::reshape(v[0], {4, 6}); }, {U({2, 3, 2, 2}, rng)}};
                   }});
    out.push_back({"sum", [U](std::mt19937_64& rng, int) {
                       return Case{[](const auto& v) { return ops::sum(v[0]); }, {U({3, 5}, rng)}};
                   }});
    out.push_back({"add", [U](std::mt19937_64& rng, int) {
                       return Case{[](const auto& v) { return ops::add(v[0], v[1]); }, {U({2, 3}, rng), U({2, 3}, rng)}};
                   }});
    out.push_back({"scale", [U](std::mt19937_64& rng, int) {
                       return Case{[](const auto& v) { return ops::scale(v[0], -3.5f); }, {U({2, 3}, rng)}};
                   }});
    out.push_back({"bce_with_logits", [U](std::mt19937_64& rng, int) {
                       Tensor targets = Tensor::uniform({4, 4}, rng, 0, 1);
                       return Case{[targets](const auto& v) { return ops::bce_with_logits(v[0], targets); },
                                   {U({4, 4}, rng)}};
                   }});
    out.push_back({"l1_loss", [U](std::mt19937_64& rng, int) {
                       Tensor a = U({2, 2, 3, 3}, rng);
                       Tensor b = a;
                       const Tensor offset = away_from_zero(a.shape(), rng, -0.5f, 0.5f, 0.05f);
                       for (std::size_t k = 0; k < b.numel(); ++k) b[k] += offset[k];
                       return Case{[](const auto& v) { return ops::l1_loss(v[0], v[1]); }, {a, b}};
                   }});
    return out;
}

}  // namespace

std::vector<std::string> gradcheck_ops() {
    std::vector<std::string> names;
    for (const auto& s : suites()) names.push_back(s.name);
    return names;
}

std::vector<GradcheckResult> run_gradcheck(const GradcheckOptions& options) {
    const auto all = suites();
    if (!options.inject_fault.empty() &&
        std::none_of(all.begin(), all.end(), [&](const OpSuite& s) { return s.name == options.inject_fault; })) {
        throw ConfigError("unknown op for fault injection: " + options.inject_fault);
    }
    std::vector<GradcheckResult> results;
    std::mt19937_64 rng(options.seed);
    for (const auto& suite : all) {
        GradcheckResult r{suite.name, options.instances, 0.0, false};
        const double fault = suite.name == options.inject_fault ? 1.05 : 1.0;
        for (int i = 0; i < options.instances; ++i) {
            r.max_rel_error = std::max(r.max_rel_error, check_case(suite.make(rng, i), rng, fault));
        }
        r.passed = r.max_rel_error <= options.tolerance;
        results.push_back(r);
    }
    return results;
}

}  // namespace chroma
