#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "pprec/common/error.hpp"
#include "pprec/common/rng.hpp"
#include "pprec/core/optim.hpp"
#include "pprec/core/tape.hpp"
#include "pprec/core/tensor.hpp"
#include "support/gradcheck.hpp"

using namespace pprec;
using core::ParamStore;
using core::Tape;
using core::Tensor;
using core::Var;

TEST_CASE("tensor shape rules") {
  Tensor t(2, 3);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.size() == 6);
  CHECK(t.shape_str() == "[2x3]");
  t.at(1, 2) = 5.0;
  CHECK(t[5] == 5.0);

  CHECK_THROWS_AS(Tensor(std::vector<std::size_t>{2, 0}), NumericError);
  CHECK_THROWS_AS(Tensor(2, 3).item(), NumericError);
  CHECK(Tensor::scalar(4.5).item() == 4.5);
  CHECK(Tensor::row({1, 2, 3}).cols() == 3);
  CHECK(Tensor::column({1, 2, 3}).rows() == 3);
  CHECK_THROWS_AS(Tensor::matrix(2, 2, {1.0, 2.0, 3.0}), NumericError);

  Tensor inf = Tensor::scalar(1.0);
  CHECK(inf.all_finite());
  inf[0] = std::nan("");
  CHECK(!inf.all_finite());
}

TEST_CASE("seed derivation is deterministic and tag-sensitive") {
  CHECK(derive_seed(42, "emb") == derive_seed(42, "emb"));
  CHECK(derive_seed(42, "emb") != derive_seed(42, "emc"));
  CHECK(derive_seed(42, "emb") != derive_seed(43, "emb"));
  CHECK(derive_seed(42, "run", 0) != derive_seed(42, "run", 1));
}

TEST_CASE("parameter initializers are reproducible") {
  ParamStore a, b;
  a.create_glorot("w", 4, 6, 7);
  b.create_glorot("w", 4, 6, 7);
  CHECK(a.at("w").value.values() == b.at("w").value.values());

  ParamStore c;
  c.create_glorot("w2", 4, 6, 7);
  CHECK(a.at("w").value.values() != c.at("w2").value.values());

  const double limit = std::sqrt(6.0 / 10.0);
  for (double v : a.at("w").value.values()) {
    CHECK(std::abs(v) <= limit);
  }

  ParamStore d;
  d.create_normal("e", 50, 20, 0.1, 3);
  double mean = 0.0;
  for (double v : d.at("e").value.values()) mean += v;
  mean /= 1000.0;
  CHECK(std::abs(mean) < 0.02);

  CHECK_THROWS_AS(a.create("w", Tensor::scalar(0.0)), ConfigError);
  CHECK_THROWS_AS(a.at("missing"), ConfigError);
}

TEST_CASE("adam matches a hand-computed step and clears gradients") {
  ParamStore store;
  store.create("w", Tensor::scalar(1.0));
  store.at("w").grad[0] = 0.5;

  core::AdamConfig cfg;
  cfg.lr = 0.1;
  core::AdamOptimizer opt(cfg);
  opt.step(store);

  const double m1 = 0.1 * 0.5, v1 = 0.001 * 0.25;
  const double mhat = m1 / 0.1, vhat = v1 / 0.001;
  const double want1 = 1.0 - 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
  CHECK(store.at("w").value[0] == doctest::Approx(want1).epsilon(1e-14));
  CHECK(store.at("w").grad[0] == 0.0);

  store.at("w").grad[0] = -0.25;
  opt.step(store);
  const double m2 = 0.9 * m1 + 0.1 * -0.25;
  const double v2 = 0.999 * v1 + 0.001 * 0.0625;
  const double mhat2 = m2 / (1.0 - 0.81);
  const double vhat2 = v2 / (1.0 - 0.999 * 0.999);
  const double want2 = want1 - 0.1 * mhat2 / (std::sqrt(vhat2) + 1e-8);
  CHECK(store.at("w").value[0] == doctest::Approx(want2).epsilon(1e-14));
  CHECK(opt.steps_taken() == 2);
}

TEST_CASE("dropout mask is inverted-scaled and rejects bad rates") {
  Rng rng(9);
  Tensor ones = core::dropout_mask(3, 4, 0.0, rng);
  for (double v : ones.values()) CHECK(v == 1.0);

  Tensor m = core::dropout_mask(100, 100, 0.2, rng);
  std::size_t zeros = 0;
  double total = 0.0;
  for (double v : m.values()) {
    CHECK((v == 0.0 || v == doctest::Approx(1.25)));
    zeros += v == 0.0;
    total += v;
  }
  CHECK(zeros > 1700);
  CHECK(zeros < 2300);
  CHECK(total / 10000.0 == doctest::Approx(1.0).epsilon(0.05));

  CHECK_THROWS_AS(core::dropout_mask(2, 2, 1.0, rng), ConfigError);
  CHECK_THROWS_AS(core::dropout_mask(2, 2, -0.1, rng), ConfigError);
}

TEST_CASE("forward values match hand-computed references") {
  Tape t(false);
  Var a = t.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  Var b = t.constant(Tensor::column({5, 6}));
  Tensor mm = t.matmul(a, b).value();
  CHECK(mm.at(0, 0) == 17.0);
  CHECK(mm.at(1, 0) == 39.0);

  CHECK(t.sigmoid(t.constant(Tensor::scalar(1.0))).item() ==
        doctest::Approx(0.7310585786300049).epsilon(1e-15));

  Tensor sm = t.softmax_rows(t.constant(Tensor::row({1, 2, 3}))).value();
  CHECK(sm[0] == doctest::Approx(0.09003057317038046).epsilon(1e-13));
  CHECK(sm[1] == doctest::Approx(0.24472847105479764).epsilon(1e-13));
  CHECK(sm[2] == doctest::Approx(0.6652409557748219).epsilon(1e-13));
  CHECK(sm[0] + sm[1] + sm[2] == doctest::Approx(1.0).epsilon(1e-12));

  // log_sigmoid must stay finite far outside the comfortable range.
  CHECK(t.log_sigmoid(t.constant(Tensor::scalar(800.0))).item() == 0.0);
  CHECK(t.log_sigmoid(t.constant(Tensor::scalar(-800.0))).item() == -800.0);
  CHECK(t.log_sigmoid(t.constant(Tensor::scalar(0.0))).item() ==
        doctest::Approx(-std::log(2.0)).epsilon(1e-15));
  CHECK(t.sigmoid(t.constant(Tensor::scalar(-800.0))).item() == 0.0);
  CHECK(t.sigmoid(t.constant(Tensor::scalar(800.0))).item() == 1.0);

  Var c1 = t.constant(Tensor::matrix(2, 1, {1, 2}));
  Var c2 = t.constant(Tensor::matrix(2, 2, {3, 4, 5, 6}));
  Tensor cc = t.concat_cols({c1, c2}).value();
  CHECK(cc.values() == std::vector<double>{1, 3, 4, 2, 5, 6});
  Tensor sl = t.slice_cols(t.constant(cc), 1, 2).value();
  CHECK(sl.values() == std::vector<double>{3, 4, 5, 6});

  Tensor cr = t.concat_rows({t.constant(Tensor::row({1, 2})), t.constant(Tensor::row({3, 4}))})
                  .value();
  CHECK(cr.rows() == 2);
  CHECK(cr.values() == std::vector<double>{1, 2, 3, 4});

  CHECK(t.mean(t.constant(Tensor::row({1, 2, 3, 4}))).item() == 2.5);
  CHECK(t.sum(t.constant(Tensor::row({1, 2, 3, 4}))).item() == 10.0);

  Tensor rv = t.add_rowvec(t.constant(Tensor::matrix(2, 2, {1, 2, 3, 4})),
                           t.constant(Tensor::row({10, 20})))
                  .value();
  CHECK(rv.values() == std::vector<double>{11, 22, 13, 24});
}

TEST_CASE("shape mismatches raise numeric errors naming both shapes") {
  Tape t(false);
  Var a = t.constant(Tensor(2, 3));
  Var b = t.constant(Tensor(2, 3));
  CHECK_THROWS_WITH_AS(t.matmul(a, b), doctest::Contains("[2x3]"), NumericError);
  Var c = t.constant(Tensor(3, 2));
  CHECK_THROWS_AS(t.add(a, c), NumericError);
  CHECK_THROWS_AS(t.slice_cols(a, 2, 2), NumericError);
  CHECK_THROWS_AS(t.concat_cols({a, c}), NumericError);
  CHECK_THROWS_AS(t.multi_head_mix(a, a, a, 2), NumericError);  // 3 not divisible by 2
}

TEST_CASE("backward guards: scalar loss, single shot, grad-enabled tape") {
  ParamStore store;
  store.create("w", Tensor::row({1.0, 2.0}));

  Tape fwd(false);
  CHECK_THROWS_AS(fwd.backward(fwd.sum(fwd.param(store.at("w")))), NumericError);

  Tape t(true);
  Var w = t.param(store.at("w"));
  CHECK_THROWS_AS(t.backward(w), NumericError);  // not scalar
  Var loss = t.sum(w);
  t.backward(loss);
  CHECK_THROWS_AS(t.backward(loss), NumericError);  // single shot
  CHECK(store.at("w").grad.values() == std::vector<double>{1.0, 1.0});
}

TEST_CASE("reusing one parameter twice accumulates both gradient paths") {
  ParamStore store;
  store.create("w", Tensor::scalar(3.0));
  Tape t;
  Var w = t.param(store.at("w"));
  Var w2 = t.param(store.at("w"));
  CHECK(w.id == w2.id);  // memoized
  Var loss = t.mul(w, w2);  // w^2, d/dw = 2w = 6
  t.backward(loss);
  CHECK(store.at("w").grad[0] == 6.0);

  const double rel = testing::gradcheck_max_rel_err(
      store, [&](Tape& tp) { return tp.mul(tp.param(store.at("w")), tp.param(store.at("w"))); });
  CHECK(rel < 1e-7);
}

TEST_CASE("per-operation gradient checks against central differences") {
  Rng rng(77);
  auto fill = [&](Tensor t) {
    for (auto& v : t.values()) v = rng.uniform(-1.0, 1.0);
    return t;
  };

  ParamStore store;
  store.create("a", fill(Tensor(3, 4)));
  store.create("b", fill(Tensor(4, 2)));
  store.create("c", fill(Tensor(3, 4)));
  store.create("r", fill(Tensor(1, 4)));
  store.create("s", fill(Tensor(1, 1)));
  const Tensor mask = fill(Tensor(3, 4));
  const Tensor wsum = fill(Tensor(3, 2));

  auto check = [&](const char* what, const std::function<Var(Tape&)>& fn) {
    const double rel = testing::gradcheck_max_rel_err(store, fn);
    INFO(what);
    CHECK(rel < 1e-6);
  };

  check("matmul", [&](Tape& t) {
    return t.sum(t.mul_const(t.matmul(t.param(store.at("a")), t.param(store.at("b"))), wsum));
  });
  check("transpose", [&](Tape& t) {
    return t.sum(t.matmul(t.transpose(t.param(store.at("a"))), t.param(store.at("c"))));
  });
  check("add+mul+sub", [&](Tape& t) {
    Var a = t.param(store.at("a"));
    Var c = t.param(store.at("c"));
    return t.sum(t.mul(t.add(a, c), t.sub(a, c)));
  });
  check("scale+mul_const", [&](Tape& t) {
    return t.sum(t.mul_const(t.scale(t.param(store.at("a")), -1.7), mask));
  });
  check("add_rowvec", [&](Tape& t) {
    return t.sum(t.mul_const(t.add_rowvec(t.param(store.at("a")), t.param(store.at("r"))), mask));
  });
  check("tanh", [&](Tape& t) {
    return t.sum(t.mul_const(t.tanh(t.param(store.at("a"))), mask));
  });
  check("sigmoid", [&](Tape& t) {
    return t.sum(t.mul_const(t.sigmoid(t.param(store.at("a"))), mask));
  });
  check("log_sigmoid", [&](Tape& t) {
    return t.sum(t.mul_const(t.log_sigmoid(t.param(store.at("a"))), mask));
  });
  check("softmax_rows", [&](Tape& t) {
    return t.sum(t.mul_const(t.softmax_rows(t.param(store.at("a"))), mask));
  });
  check("concat+slice", [&](Tape& t) {
    Var cat = t.concat_cols({t.param(store.at("a")), t.param(store.at("c"))});
    Var sl = t.slice_cols(cat, 2, 4);
    Var rows = t.concat_rows({sl, sl});
    return t.sum(t.mul(rows, rows));
  });
  check("stack_scalars+mean", [&](Tape& t) {
    Var a = t.param(store.at("a"));
    Var s1 = t.sum(t.tanh(a));
    Var s2 = t.mean(t.mul(a, a));
    Var s3 = t.param(store.at("s"));
    return t.mean(t.stack_scalars({s1, s2, s3}));
  });
}

TEST_CASE("embedding lookups scatter gradients, repeated ids included") {
  ParamStore store;
  Rng rng(5);
  Tensor table(6, 3);
  for (auto& v : table.values()) v = rng.uniform(-1.0, 1.0);
  store.create("emb", table);
  const Tensor w = [&] {
    Tensor t(4, 3);
    for (auto& v : t.values()) v = rng.uniform(-1.0, 1.0);
    return t;
  }();

  const double rel = testing::gradcheck_max_rel_err(store, [&](Tape& t) {
    Var rows = t.lookup_rows(store.at("emb"), {4, 1, 4, 0});
    return t.sum(t.mul_const(rows, w));
  });
  CHECK(rel < 1e-7);

  // Row 4 appears twice, so its gradient is the sum of both positions.
  store.zero_grad();
  Tape t;
  t.backward(t.sum(t.lookup_rows(store.at("emb"), {4, 1, 4, 0})));
  const Tensor& g = store.at("emb").grad;
  CHECK(g.at(4, 0) == 2.0);
  CHECK(g.at(1, 0) == 1.0);
  CHECK(g.at(0, 2) == 1.0);
  CHECK(g.at(3, 0) == 0.0);

  Tape t2;
  CHECK_THROWS_AS(t2.lookup_rows(store.at("emb"), {6}), NumericError);
  CHECK_THROWS_AS(t2.lookup_rows(store.at("emb"), {-1}), NumericError);
}

TEST_CASE("fused attention matches the unfused composition, forward and backward") {
  Rng rng(11);
  auto fill = [&](Tensor t) {
    for (auto& v : t.values()) v = rng.uniform(-1.0, 1.0);
    return t;
  };
  const std::size_t heads = 3, d = 4, lq = 5, lc = 7;
  ParamStore store;
  store.create("q", fill(Tensor(lq, heads * d)));
  store.create("k", fill(Tensor(lc, heads * d)));
  store.create("v", fill(Tensor(lc, heads * d)));
  const Tensor w = fill(Tensor(lq, heads * d));

  auto fused = [&](Tape& t) {
    Var out = t.multi_head_mix(t.param(store.at("q")), t.param(store.at("k")),
                               t.param(store.at("v")), heads);
    return t.sum(t.mul_const(out, w));
  };
  auto unfused = [&](Tape& t) {
    Var q = t.param(store.at("q"));
    Var k = t.param(store.at("k"));
    Var v = t.param(store.at("v"));
    std::vector<Var> outs;
    for (std::size_t h = 0; h < heads; ++h) {
      Var qh = t.slice_cols(q, h * d, d);
      Var kh = t.slice_cols(k, h * d, d);
      Var vh = t.slice_cols(v, h * d, d);
      Var att = t.softmax_rows(t.scale(t.matmul(qh, t.transpose(kh)), 1.0 / std::sqrt(4.0)));
      outs.push_back(t.matmul(att, vh));
    }
    return t.sum(t.mul_const(t.concat_cols(outs), w));
  };

  Tape tf(false), tu(false);
  CHECK(fused(tf).item() == doctest::Approx(unfused(tu).item()).epsilon(1e-12));

  store.zero_grad();
  Tape tg;
  tg.backward(fused(tg));
  std::vector<Tensor> fused_grads;
  for (auto& [name, p] : store) fused_grads.push_back(p.grad);

  store.zero_grad();
  Tape tug;
  tug.backward(unfused(tug));
  std::size_t i = 0;
  for (auto& [name, p] : store) {
    const Tensor& fg = fused_grads[i++];
    REQUIRE(fg.size() == p.grad.size());
    for (std::size_t j = 0; j < fg.size(); ++j) {
      CHECK(fg[j] == doctest::Approx(p.grad[j]).epsilon(1e-9));
    }
  }
  store.zero_grad();

  const double rel = testing::gradcheck_max_rel_err(store, fused);
  CHECK(rel < 1e-6);

  // Attention rows are probability distributions.
  Tape ta(false);
  std::vector<Tensor> atts;
  ta.multi_head_mix(ta.param(store.at("q")), ta.param(store.at("k")), ta.param(store.at("v")),
                    heads, &atts);
  REQUIRE(atts.size() == heads);
  for (const Tensor& att : atts) {
    REQUIRE(att.rows() == lq);
    REQUIRE(att.cols() == lc);
    for (std::size_t r = 0; r < att.rows(); ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < att.cols(); ++c) {
        CHECK(att.at(r, c) >= 0.0);
        s += att.at(r, c);
      }
      CHECK(std::abs(s - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("matmul identity and projector cases") {
  Tape t(false);
  Var eye = t.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  Var m = t.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  CHECK(t.matmul(eye, m).value().values() == std::vector<double>{1, 2, 3, 4});
  Var proj = t.constant(Tensor::matrix(2, 2, {1, 0, 0, 0}));
  Var b = t.constant(Tensor::matrix(2, 2, {5, 6, 7, 8}));
  CHECK(t.matmul(proj, b).value().values() == std::vector<double>{5, 6, 0, 0});

  CHECK(t.softmax_rows(t.constant(Tensor::row({0, 0, 0}))).value()[1] ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  Tensor overflow = t.softmax_rows(t.constant(Tensor::row({1000, 0}))).value();
  CHECK(overflow[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(overflow.all_finite());
}

TEST_CASE("backward reproduces closed-form gradients for linear and sigmoid cases") {
  ParamStore store;
  store.create("W", Tensor::matrix(2, 2, {0.3, -0.4, 0.1, 0.9}));
  Tape t;
  Var x = t.constant(Tensor::column({1, 1}));
  t.backward(t.sum(t.matmul(t.param(store.at("W")), x)));
  CHECK(store.at("W").grad.values() == std::vector<double>{1, 1, 1, 1});

  ParamStore s2;
  s2.create("w", Tensor::scalar(0.0));
  Tape t2;
  t2.backward(t2.sigmoid(t2.scale(t2.param(s2.at("w")), 1.0)));
  CHECK(s2.at("w").grad[0] == 0.25);  // sigma'(0)
}

TEST_CASE("adam descends w^2 monotonically and is the identity on zero gradients") {
  ParamStore store;
  store.create("w", Tensor::scalar(1.0));
  core::AdamConfig cfg;
  cfg.lr = 0.05;
  core::AdamOptimizer opt(cfg);
  double prev = 1.0;
  for (int i = 0; i < 10; ++i) {
    Tape t;
    Var w = t.param(store.at("w"));
    t.backward(t.mul(w, w));
    opt.step(store);
    const double now = store.at("w").value[0];
    CHECK(now < prev);
    prev = now;
  }

  // Zero gradient from a fresh state leaves the parameter untouched.
  ParamStore idle;
  idle.create("z", Tensor::scalar(2.5));
  core::AdamOptimizer fresh(cfg);
  fresh.step(idle);
  CHECK(idle.at("z").value[0] == 2.5);

  // First bias-corrected step with constant gradient moves by about lr.
  ParamStore s1;
  s1.create("v", Tensor::scalar(0.5));
  s1.at("v").grad[0] = 1.0;
  core::AdamOptimizer small({1e-4, 0.9, 0.999, 1e-8});
  small.step(s1);
  CHECK(0.5 - s1.at("v").value[0] == doctest::Approx(1e-4).epsilon(1e-6));
}

TEST_CASE("dropout zero fraction concentrates at the rate over 1e5 draws") {
  Rng rng(31);
  Tensor m = core::dropout_mask(1000, 100, 0.2, rng);
  std::size_t zeros = 0;
  for (double v : m.values()) zeros += v == 0.0;
  CHECK(std::abs(static_cast<double>(zeros) / 1e5 - 0.2) < 0.01);
}

TEST_CASE("dropout composes with the tape through mul_const") {
  ParamStore store;
  Rng rng(21);
  Tensor val(2, 5);
  for (auto& v : val.values()) v = rng.uniform(-1.0, 1.0);
  store.create("x", val);
  const Tensor mask = core::dropout_mask(2, 5, 0.4, rng);

  const double rel = testing::gradcheck_max_rel_err(store, [&](Tape& t) {
    return t.sum(t.tanh(t.mul_const(t.param(store.at("x")), mask)));
  });
  CHECK(rel < 1e-7);
}
