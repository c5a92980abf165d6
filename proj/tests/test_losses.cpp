#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "fd_check.hpp"
#include "pdlab/encoder.hpp"
#include "pdlab/losses.hpp"
#include "pdlab/prompts.hpp"
#include "pdlab/vocab.hpp"

using namespace pdlab;
using pdlab_test::check_grads;
using pdlab_test::random_tensor;

namespace {

// Log-sum-exp with max subtraction, matching no particular library.
double lse(const std::vector<double>& xs) {
  double mx = xs[0];
  for (double x : xs) mx = std::max(mx, x);
  double s = 0;
  for (double x : xs) s += std::exp(x - mx);
  return mx + std::log(s);
}

// Naive double-loop references computed straight from the definitions.
double oracle_t2i(const Tensor& sim, const std::vector<int>& ids) {
  const Index b = sim.rows();
  ConstMapRM s(sim.array().data(), b, b);
  double total = 0;
  for (Index i = 0; i < b; ++i) {
    std::vector<double> row(b);
    for (Index j = 0; j < b; ++j) row[j] = s(i, j);
    const double denom = lse(row);
    double anchor = 0;
    int pos = 0;
    for (Index j = 0; j < b; ++j)
      if (ids[j] == ids[i]) {
        anchor += s(i, j) - denom;
        ++pos;
      }
    total += -anchor / pos;
  }
  return total / static_cast<double>(b);
}

double oracle_i2t(const Tensor& sim, const std::vector<int>& ids) {
  const Index b = sim.rows();
  ConstMapRM s(sim.array().data(), b, b);
  double total = 0;
  for (Index j = 0; j < b; ++j) {
    std::vector<double> col(b);
    for (Index i = 0; i < b; ++i) col[i] = s(i, j);
    const double denom = lse(col);
    double anchor = 0;
    int pos = 0;
    for (Index i = 0; i < b; ++i)
      if (ids[i] == ids[j]) {
        anchor += s(i, j) - denom;
        ++pos;
      }
    total += -anchor / pos;
  }
  return total / static_cast<double>(b);
}

double oracle_id(const Tensor& tf, const Tensor& vf, const std::vector<int>& ids,
                 const Tensor& w) {
  const Index b = tf.rows(), d = tf.cols(), n = w.cols();
  ConstMapRM wm(w.array().data(), d, n);
  double total = 0;
  for (int side = 0; side < 2; ++side) {
    ConstMapRM f((side == 0 ? tf : vf).array().data(), b, d);
    for (Index i = 0; i < b; ++i) {
      std::vector<double> logits(n, 0.0);
      for (Index c = 0; c < n; ++c)
        for (Index k = 0; k < d; ++k) logits[c] += f(i, k) * wm(k, c);
      total += lse(logits) - logits[ids[i]];
    }
  }
  return total / static_cast<double>(2 * b);
}

Tensor fixed_tau_sim(const Tensor& texts, const Tensor& images, double tau) {
  return scaled_similarity(texts, images, Tensor::scalar(tau));
}

}  // namespace

TEST_CASE("single-pair batch gives zero contrastive loss") {
  Tensor t = Tensor::from_values({1, 4}, {0.5, -0.5, 0.25, 0.7});
  Tensor v = Tensor::from_values({1, 4}, {-0.1, 0.9, 0.3, 0.2});
  std::vector<int> ids{42};
  Tensor sim = fixed_tau_sim(t, v, 1.0);
  CHECK(l_t2i(sim, ids).item() == 0.0);
  CHECK(l_i2t(sim, ids).item() == 0.0);
  CHECK(l_itc(sim, ids).item() == 0.0);
  CHECK(infonce(sim).item() == 0.0);
}

TEST_CASE("two distinct pairs with equal similarities cost ln 2 per direction") {
  // Every dot product is identical, so each softmax row/column is uniform.
  Tensor t = Tensor::from_values({2, 2}, {1, 0, 1, 0});
  Tensor v = Tensor::from_values({2, 2}, {1, 0, 1, 0});
  std::vector<int> ids{0, 1};
  Tensor sim = fixed_tau_sim(t, v, 1.0);
  CHECK(l_t2i(sim, ids).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(l_i2t(sim, ids).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(l_itc(sim, ids).item() == doctest::Approx(2 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("a huge margin drives the contrastive loss to zero") {
  Tensor sim = Tensor::from_values({2, 2}, {100, 0, 0, 100});
  std::vector<int> ids{0, 1};
  CHECK(l_itc(sim, ids).item() < 1e-10);
  CHECK(l_itc(sim, ids).item() >= 0.0);
}

TEST_CASE("uniform classifier logits cost ln N") {
  // Zero features make every class equally likely regardless of the weights.
  Tensor tf = Tensor::zeros({3, 5});
  Tensor vf = Tensor::zeros({3, 5});
  Rng rng(7);
  Tensor w = random_tensor({5, 4}, rng, false);
  std::vector<int> ids{0, 2, 3};
  CHECK(id_loss(tf, vf, ids, w).item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("total loss composes the two terms with the lambda weight") {
  Rng rng(11);
  Tensor t = random_tensor({4, 6}, rng, false);
  Tensor v = random_tensor({4, 6}, rng, false);
  Tensor w = random_tensor({6, 5}, rng, false);
  std::vector<int> ids{0, 1, 1, 4};
  Tensor sim = fixed_tau_sim(t, v, 2.0);
  const double itc = l_itc(sim, ids).item();
  const double idl = id_loss(t, v, ids, w).item();
  for (double lambda : {0.0, 0.1, 0.5}) {
    const double total = total_loss(sim, t, v, ids, w, lambda).item();
    CHECK(total == doctest::Approx(itc + lambda * idl).epsilon(1e-14));
  }
  // The worked composition: contrastive 2*ln2 with lambda 0.1 on a ln4
  // identity term gives 2*ln2 + 0.1*ln4 exactly.
  Tensor eq = Tensor::from_values({2, 2}, {0, 0, 0, 0});
  Tensor zf = Tensor::zeros({2, 3});
  Tensor zw = random_tensor({3, 4}, rng, false);
  std::vector<int> two{0, 1};
  CHECK(total_loss(eq, zf, zf, two, zw, 0.1).item() ==
        doctest::Approx(2 * std::log(2.0) + 0.1 * std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("random batches match the double-loop references") {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const Index b = 1 + static_cast<Index>(uniform_int(rng, 0, 15));
    std::vector<int> ids(b);
    for (auto& id : ids) id = static_cast<int>(uniform_int(rng, 0, 5));  // repeats likely
    Tensor t = random_tensor({b, 8}, rng, false, -2.0, 2.0);
    Tensor v = random_tensor({b, 8}, rng, false, -2.0, 2.0);
    const double tau = uniform(rng, 0.5, 4.0);
    Tensor sim = fixed_tau_sim(t, v, tau);

    CHECK(std::abs(l_t2i(sim, ids).item() - oracle_t2i(sim, ids)) < 1e-10);
    CHECK(std::abs(l_i2t(sim, ids).item() - oracle_i2t(sim, ids)) < 1e-10);
    CHECK(std::abs(l_itc(sim, ids).item() -
                   (oracle_t2i(sim, ids) + oracle_i2t(sim, ids))) < 1e-10);

    Tensor w = random_tensor({8, 6}, rng, false);
    std::vector<int> class_ids(b);
    for (auto& id : class_ids) id = static_cast<int>(uniform_int(rng, 0, 5));
    CHECK(std::abs(id_loss(t, v, class_ids, w).item() - oracle_id(t, v, class_ids, w)) < 1e-12);
  }
}

TEST_CASE("losses are never negative") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Index b = 1 + static_cast<Index>(uniform_int(rng, 0, 11));
    std::vector<int> ids(b);
    for (auto& id : ids) id = static_cast<int>(uniform_int(rng, 0, 3));
    Tensor t = random_tensor({b, 4}, rng, false, -3.0, 3.0);
    Tensor v = random_tensor({b, 4}, rng, false, -3.0, 3.0);
    Tensor sim = fixed_tau_sim(t, v, 1.7);
    CHECK(l_itc(sim, ids).item() >= 0.0);
    CHECK(infonce(sim).item() >= 0.0);
    Tensor w = random_tensor({4, 4}, rng, false);
    CHECK(id_loss(t, v, ids, w).item() >= 0.0);
  }
}

TEST_CASE("diagonal-target loss equals the id-aware loss bit for bit on unique ids") {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const Index b = 1 + static_cast<Index>(uniform_int(rng, 0, 9));
    std::vector<int> ids(b);
    std::iota(ids.begin(), ids.end(), 100);
    std::shuffle(ids.begin(), ids.end(), rng);
    Tensor t = random_tensor({b, 7}, rng, false);
    Tensor v = random_tensor({b, 7}, rng, false);
    Tensor sim = fixed_tau_sim(t, v, uniform(rng, 0.5, 3.0));
    const double a = l_itc(sim, ids).item();
    const double bval = infonce(sim).item();
    CHECK(a == bval);  // identical kernel, identical weights, identical bits
  }
}

TEST_CASE("batch order never changes the loss beyond roundoff") {
  Rng rng(17);
  const Index b = 8;
  std::vector<int> ids{0, 1, 1, 2, 0, 3, 2, 2};
  Tensor t = random_tensor({b, 6}, rng, false);
  Tensor v = random_tensor({b, 6}, rng, false);
  Tensor w = random_tensor({6, 4}, rng, false);
  const double base_itc = l_itc(fixed_tau_sim(t, v, 1.3), ids).item();
  const double base_id = id_loss(t, v, ids, w).item();

  std::vector<Index> perm(b);
  std::iota(perm.begin(), perm.end(), 0);
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor tp = Tensor::zeros({b, 6});
    Tensor vp = Tensor::zeros({b, 6});
    std::vector<int> idp(b);
    for (Index i = 0; i < b; ++i) {
      tp.mutable_mat().row(i) = t.mat().row(perm[i]);
      vp.mutable_mat().row(i) = v.mat().row(perm[i]);
      idp[i] = ids[perm[i]];
    }
    CHECK(std::abs(l_itc(fixed_tau_sim(tp, vp, 1.3), idp).item() - base_itc) < 1e-12);
    CHECK(std::abs(id_loss(tp, vp, idp, w).item() - base_id) < 1e-12);
  }
}

TEST_CASE("invalid inputs are rejected") {
  Tensor t = Tensor::zeros({2, 3});
  Tensor v = Tensor::zeros({2, 3});
  Tensor sim = fixed_tau_sim(t, v, 1.0);
  std::vector<int> ids{0, 1};
  std::vector<int> short_ids{0};
  CHECK_THROWS_AS(l_t2i(sim, short_ids), LossError);
  CHECK_THROWS_AS(scaled_similarity(t, v, Tensor::zeros({2})), LossError);
  Tensor w = Tensor::zeros({3, 4});
  std::vector<int> bad_ids{0, 4};  // 4 is outside [0, 4)
  CHECK_THROWS_AS(id_loss(t, v, bad_ids, w), LossError);
  std::vector<int> neg_ids{0, -1};
  CHECK_THROWS_AS(id_loss(t, v, neg_ids, w), LossError);
  CHECK_THROWS_AS(total_loss(sim, t, v, ids, w, -0.5), LossError);
}

TEST_CASE("gradients reach the prompts through the full objective") {
  Vocabulary vocab({"red", "shirt", "blue", "hat"});
  EncoderConfig cfg;
  cfg.text = {1, 16, 2, 2};
  cfg.image = {1, 16, 2, 2};
  cfg.joint_dim = 8;
  cfg.max_len = 12;
  cfg.image_h = 8;
  cfg.image_w = 8;
  cfg.image_c = 1;
  cfg.patch = 4;
  Rng rng(31);
  ParamStore ps;
  DualEncoder enc(cfg, vocab.size());
  enc.init_params(ps, rng);
  PromptConfig pc;
  pc.n_text = 2;
  pc.n_image = 2;
  pc.dropout_p = 0.0;
  init_prompts(ps, pc, cfg.text.d_model, cfg.image.d_model, rng);
  Tensor classifier = random_tensor({cfg.joint_dim, 3}, rng, true, -0.3, 0.3);

  std::vector<std::vector<int>> captions = {tokenize("red shirt", vocab, cfg.max_len),
                                            tokenize("blue hat", vocab, cfg.max_len)};
  std::vector<Tensor> grids;
  Rng pix(77);
  for (int i = 0; i < 2; ++i)
    grids.push_back(random_tensor({cfg.num_patches(), cfg.patch_dim()}, pix, false));
  std::vector<int> ids{0, 0};  // shared id exercises the multi-positive path

  auto f = [&]() {
    std::vector<Tensor> tf, vf;
    for (const auto& cap : captions) {
      Tensor p = ps.get(kTextPromptName);
      tf.push_back(enc.encode_text(ps, cap, &p).feature);
    }
    for (const auto& g : grids) {
      Tensor p = ps.get(kImagePromptName);
      vf.push_back(enc.encode_image(ps, g, &p).feature);
    }
    Tensor texts = stack_features(tf);
    Tensor images = stack_features(vf);
    Tensor sim = scaled_similarity(texts, images, enc.logit_scale(ps));
    return total_loss(sim, texts, images, ids, classifier, 0.1);
  };

  std::vector<Tensor> leaves{ps.get(kTextPromptName), ps.get(kImagePromptName),
                             ps.get("logit_scale"), classifier};
  check_grads(leaves, f);
}
