#include "malefic/params.hpp"

#include <fstream>

#include <json.hpp>

namespace malefic::diff {

Parameter::Parameter(std::string n, Tensor init)
    : name(std::move(n)),
      value(std::move(init)),
      grad(Tensor::zeros(value.shape())),
      m(Tensor::zeros(value.shape())),
      v(Tensor::zeros(value.shape())) {}

Parameter* ParamStore::create(const std::string& name, Tensor init) {
    if (find(name)) throw StateError("parameter already exists: " + name);
    params_.push_back(std::make_unique<Parameter>(name, std::move(init)));
    return params_.back().get();
}

Parameter* ParamStore::find(const std::string& name) const {
    for (const auto& p : params_)
        if (p->name == name) return p.get();
    return nullptr;
}

int64_t ParamStore::total_size() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
}

void ParamStore::zero_grad() {
    for (const auto& p : params_) p->zero_grad();
}

void save_params_json(const ParamStore& store, const std::filesystem::path& path) {
    nlohmann::json j;
    for (const auto& p : store.all()) {
        j[p->name] = {{"shape", p->value.shape()}, {"data", p->value.data()}};
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << j.dump(1) << "\n";
}

void load_params_json(ParamStore& store, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path.string());
    nlohmann::json j;
    in >> j;
    for (const auto& p : store.all()) {
        if (!j.contains(p->name)) throw DataError("checkpoint missing parameter: " + p->name);
        const auto& entry = j.at(p->name);
        const auto shape = entry.at("shape").get<std::vector<int64_t>>();
        if (shape != p->value.shape())
            throw ShapeError("checkpoint parameter " + p->name + " has wrong shape");
        const auto data = entry.at("data").get<std::vector<double>>();
        if (static_cast<int64_t>(data.size()) != p->value.size())
            throw DataError("checkpoint parameter " + p->name + " has wrong size");
        p->value.data() = data;
    }
}

Tensor init_uniform_fanin(std::vector<int64_t> shape, int64_t fan_in, Rng& rng) {
    if (fan_in <= 0) throw ParamError("init_uniform_fanin: fan_in must be positive");
    Tensor t(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = (2.0 * rand_uniform(rng) - 1.0) * bound;
    return t;
}

}  // namespace malefic::diff
