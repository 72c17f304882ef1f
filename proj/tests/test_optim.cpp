#include <doctest.h>

#include <cmath>

#include "malefic/optim.hpp"
#include "testutil.hpp"

using namespace malefic;
using namespace malefic::diff;
using testutil::random_tensor;

TEST_CASE("adamw leaves parameters unchanged on zero gradient, zero decay") {
    ParamStore store;
    Rng rng = make_rng(9);
    Parameter* w = store.create("w", random_tensor({4}, rng));
    const Tensor before = w->value;
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    adamw_step(store, cfg);
    for (int64_t i = 0; i < 4; ++i) CHECK(w->value[i] == before[i]);
    CHECK(w->step == 1);
}

TEST_CASE("adamw decreases |w| after one step on w^2") {
    ParamStore store;
    Parameter* w = store.create("w", Tensor::from_vector({1.0}));
    w->grad[0] = 2.0 * w->value[0];  // d(w^2)/dw
    AdamWConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.0;
    adamw_step(store, cfg);
    CHECK(std::abs(w->value[0]) < 1.0);
}

TEST_CASE("adamw with cosine decay converges on a 2-d quadratic") {
    // f(w) = a0 (w0 - b0)^2 + a1 (w1 - b1)^2, optimum value 0 at w = b
    const double a[2] = {1.0, 3.0};
    const double b[2] = {2.0, -1.0};
    ParamStore store;
    Parameter* w = store.create("w", Tensor::from_vector({0.0, 0.0}));
    const Scheduler sched = Scheduler::cosine(0.2, 200);
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    for (int step = 0; step < 200; ++step) {
        store.zero_grad();
        for (int i = 0; i < 2; ++i) w->grad[i] = 2.0 * a[i] * (w->value[i] - b[i]);
        cfg.lr = std::max(sched.lr(step), 1e-12);
        adamw_step(store, cfg);
    }
    double loss = 0.0;
    for (int i = 0; i < 2; ++i) loss += a[i] * (w->value[i] - b[i]) * (w->value[i] - b[i]);
    CHECK(loss < 1e-4);
}

TEST_CASE("adamw rejects non-positive learning rate") {
    ParamStore store;
    store.create("w", Tensor::from_vector({1.0}));
    AdamWConfig cfg;
    cfg.lr = 0.0;
    CHECK_THROWS_AS(adamw_step(store, cfg), ParamError);
}

TEST_CASE("cosine schedule endpoints") {
    const Scheduler s = Scheduler::cosine(2e-4, 1000);
    CHECK(s.lr(0) == doctest::Approx(2e-4));
    CHECK(s.lr(1000) <= 1e-3 * 2e-4);
    // halfway: half the max
    CHECK(s.lr(500) == doctest::Approx(1e-4));
}

TEST_CASE("one_cycle peaks at floor(0.3 * total)") {
    const int64_t total = 100;
    const Scheduler s = Scheduler::one_cycle(1e-3, total);
    int64_t argmax = 0;
    double best = -1.0;
    for (int64_t step = 0; step <= total; ++step) {
        const double lr = s.lr(step);
        if (lr > best) {
            best = lr;
            argmax = step;
        }
    }
    CHECK(argmax == 30);
    CHECK(best == doctest::Approx(1e-3));
}

TEST_CASE("scheduler parameter validation") {
    CHECK_THROWS_AS(Scheduler::cosine(1e-3, 0), ParamError);
    CHECK_THROWS_AS(Scheduler::one_cycle(1e-3, 10, 1.5), ParamError);
    CHECK_THROWS_AS(Scheduler::kind_from_name("bogus"), ParamError);
}

TEST_CASE("grad_check is near-exact for linear functions") {
    Rng rng = make_rng(17);
    const Tensor w = random_tensor({1, 5}, rng);
    const double err = grad_check(
        [&](Tape& t, const std::vector<Value>& in) {
            return t.matmul(t.constant(w), in[0]);
        },
        {random_tensor({5}, rng)});
    CHECK(err < 1e-7);
}

TEST_CASE("grad_check reports zero gradient both ways for constants") {
    Rng rng = make_rng(19);
    const Tensor c = Tensor::scalar(3.5);
    const double err = grad_check(
        [&](Tape& t, const std::vector<Value>& in) {
            // output ignores the input entirely
            (void)in;
            return t.constant(c);
        },
        {random_tensor({4}, rng)});
    CHECK(err == 0.0);
}

TEST_CASE("named-tensor checkpoints round-trip bit-exactly") {
    testutil::TempDir dir("params");
    ParamStore store;
    Rng rng = make_rng(23);
    Parameter* w1 = store.create("layer.W", random_tensor({3, 4}, rng));
    Parameter* b1 = store.create("layer.b", random_tensor({4}, rng));
    save_params_json(store, dir.path() / "ckpt.json");

    ParamStore loaded;
    loaded.create("layer.W", Tensor::zeros({3, 4}));
    loaded.create("layer.b", Tensor::zeros({4}));
    load_params_json(loaded, dir.path() / "ckpt.json");
    CHECK(loaded.find("layer.W")->value.data() == w1->value.data());
    CHECK(loaded.find("layer.b")->value.data() == b1->value.data());

    ParamStore wrong;
    wrong.create("layer.W", Tensor::zeros({4, 3}));
    CHECK_THROWS_AS(load_params_json(wrong, dir.path() / "ckpt.json"), ShapeError);
}
