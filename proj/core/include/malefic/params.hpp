#pragma once

#include <filesystem>
#include <memory>

#include "malefic/tensor.hpp"

namespace malefic::diff {

// Trainable tensor with AdamW state. Gradients accumulate across backward
// passes until zero_grad(); the optimizer consumes grad and advances step.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor m;  // first moment
    Tensor v;  // second moment
    int64_t step = 0;

    Parameter(std::string n, Tensor init);
    void zero_grad() { grad.fill(0.0); }
};

class ParamStore {
public:
    Parameter* create(const std::string& name, Tensor init);
    Parameter* find(const std::string& name) const;
    const std::vector<std::unique_ptr<Parameter>>& all() const { return params_; }
    int64_t total_size() const;
    void zero_grad();

private:
    std::vector<std::unique_ptr<Parameter>> params_;
};

// Standalone checkpoint of named tensors as JSON: an object mapping each
// parameter name to {"shape": [...], "data": [...]}. Values round-trip
// bit-exactly (shortest-round-trip double formatting).
void save_params_json(const ParamStore& store, const std::filesystem::path& path);
void load_params_json(ParamStore& store, const std::filesystem::path& path);

Tensor init_uniform_fanin(std::vector<int64_t> shape, int64_t fan_in, Rng& rng);

}  // namespace malefic::diff
