#include "malefic/optim.hpp"

#include <cmath>

namespace malefic::diff {

void adamw_step(Parameter& p, const AdamWConfig& cfg) {
    if (cfg.lr <= 0.0) throw ParamError("adamw: learning rate must be positive");
    p.step += 1;
    const double b1 = cfg.beta1, b2 = cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(p.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(p.step));
    for (int64_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i];
        p.m[i] = b1 * p.m[i] + (1.0 - b1) * g;
        p.v[i] = b2 * p.v[i] + (1.0 - b2) * g * g;
        const double mhat = p.m[i] / bc1;
        const double vhat = p.v[i] / bc2;
        p.value[i] -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * p.value[i]);
    }
}

void adamw_step(ParamStore& store, const AdamWConfig& cfg) {
    if (cfg.lr <= 0.0) throw ParamError("adamw: learning rate must be positive");
    for (const auto& p : store.all()) adamw_step(*p, cfg);
}

double Scheduler::lr(int64_t step) const {
    if (total_steps <= 0) throw ParamError("scheduler: total_steps must be positive");
    const double t = static_cast<double>(std::clamp<int64_t>(step, 0, total_steps));
    const double T = static_cast<double>(total_steps);
    switch (kind) {
        case Kind::Constant:
            return max_lr;
        case Kind::Cosine:
            return max_lr * 0.5 * (1.0 + std::cos(M_PI * t / T));
        case Kind::OneCycle: {
            const int64_t warm = std::max<int64_t>(1, static_cast<int64_t>(warmup_frac * T));
            if (step <= warm) return max_lr * static_cast<double>(step) / static_cast<double>(warm);
            const double u = static_cast<double>(step - warm) / static_cast<double>(total_steps - warm);
            return max_lr * 0.5 * (1.0 + std::cos(M_PI * u));
        }
    }
    throw ParamError("scheduler: unknown kind");
}

Scheduler Scheduler::constant(double lr) { return {Kind::Constant, lr, 1, 0.0}; }

Scheduler Scheduler::cosine(double max_lr, int64_t total_steps) {
    if (total_steps <= 0) throw ParamError("scheduler: total_steps must be positive");
    return {Kind::Cosine, max_lr, total_steps, 0.0};
}

Scheduler Scheduler::one_cycle(double max_lr, int64_t total_steps, double warmup_frac) {
    if (total_steps <= 0) throw ParamError("scheduler: total_steps must be positive");
    if (warmup_frac <= 0.0 || warmup_frac >= 1.0)
        throw ParamError("scheduler: warmup_frac must be in (0,1)");
    return {Kind::OneCycle, max_lr, total_steps, warmup_frac};
}

Scheduler::Kind Scheduler::kind_from_name(const std::string& name) {
    if (name == "constant") return Kind::Constant;
    if (name == "cosine") return Kind::Cosine;
    if (name == "one_cycle") return Kind::OneCycle;
    throw ParamError("scheduler: unknown kind '" + name + "'");
}

std::string Scheduler::kind_name(Kind k) {
    switch (k) {
        case Kind::Constant: return "constant";
        case Kind::Cosine: return "cosine";
        case Kind::OneCycle: return "one_cycle";
    }
    return "constant";
}

double relative_gradient_error(double analytic, double numeric, double atol) {
    const double diff = std::abs(analytic - numeric);
    if (diff < atol) return 0.0;
    return diff / std::max(std::abs(analytic), std::abs(numeric));
}

double grad_check(const std::function<Value(Tape&, const std::vector<Value>&)>& build,
                  const std::vector<Tensor>& inputs, double h) {
    Tape tape;
    std::vector<Value> leaves;
    leaves.reserve(inputs.size());
    for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t));
    const Value out = build(tape, leaves);
    if (tape.value(out).size() != 1)
        throw ParamError("grad_check: function output must be scalar");
    tape.backward(out);
    std::vector<Tensor> analytic;
    analytic.reserve(leaves.size());
    for (Value v : leaves) analytic.push_back(tape.grad(v));

    auto eval_at = [&](const std::vector<Tensor>& pts) {
        Tape t2;
        std::vector<Value> ls;
        ls.reserve(pts.size());
        for (const Tensor& t : pts) ls.push_back(t2.leaf(t));
        return t2.value(build(t2, ls))[0];
    };

    double max_err = 0.0;
    std::vector<Tensor> work = inputs;
    for (size_t i = 0; i < work.size(); ++i) {
        for (int64_t j = 0; j < work[i].size(); ++j) {
            const double orig = work[i][j];
            work[i][j] = orig + h;
            const double fp = eval_at(work);
            work[i][j] = orig - h;
            const double fm = eval_at(work);
            work[i][j] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            max_err = std::max(max_err, relative_gradient_error(analytic[i][j], numeric));
        }
    }
    return max_err;
}

double grad_check_params(const std::function<Value(Tape&)>& build_loss, ParamStore& store,
                         double h) {
    store.zero_grad();
    {
        Tape tape;
        tape.backward(build_loss(tape));
    }
    std::vector<Tensor> analytic;
    for (const auto& p : store.all()) analytic.push_back(p->grad);

    auto eval = [&]() {
        Tape tape;
        return tape.value(build_loss(tape))[0];
    };

    double max_err = 0.0;
    size_t pi = 0;
    for (const auto& p : store.all()) {
        for (int64_t j = 0; j < p->value.size(); ++j) {
            const double orig = p->value[j];
            p->value[j] = orig + h;
            const double fp = eval();
            p->value[j] = orig - h;
            const double fm = eval();
            p->value[j] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            max_err = std::max(max_err, relative_gradient_error(analytic[pi][j], numeric));
        }
        ++pi;
    }
    store.zero_grad();
    return max_err;
}

}  // namespace malefic::diff
