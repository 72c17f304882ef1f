#pragma once

#include "malefic/graph.hpp"

namespace malefic::diff {

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// Decoupled-weight-decay adaptive update over every parameter with a
// populated gradient. Deterministic given parameter state.
void adamw_step(ParamStore& store, const AdamWConfig& cfg);
void adamw_step(Parameter& p, const AdamWConfig& cfg);

struct Scheduler {
    enum class Kind { Constant, Cosine, OneCycle };

    Kind kind = Kind::Constant;
    double max_lr = 1e-3;
    int64_t total_steps = 1;
    double warmup_frac = 0.3;  // OneCycle only

    double lr(int64_t step) const;

    static Scheduler constant(double lr);
    static Scheduler cosine(double max_lr, int64_t total_steps);
    static Scheduler one_cycle(double max_lr, int64_t total_steps, double warmup_frac = 0.3);
    static Kind kind_from_name(const std::string& name);
    static std::string kind_name(Kind k);
};

// Central-difference gradient audit for a scalar-valued builder over explicit
// tensor inputs. Returns the max relative error across all input entries.
// The builder must be deterministic (fix dropout masks and selections).
double grad_check(const std::function<Value(Tape&, const std::vector<Value>&)>& build,
                  const std::vector<Tensor>& inputs, double h = 1e-5);

// Same audit against every parameter in a store; the builder reads parameters
// through Tape::param internally.
double grad_check_params(const std::function<Value(Tape&)>& build_loss, ParamStore& store,
                         double h = 1e-5);

// |a - n| below this is treated as exact agreement (handles true zeros).
double relative_gradient_error(double analytic, double numeric, double atol = 1e-8);

}  // namespace malefic::diff
