#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "pdlab/checkpoint.hpp"
#include "pdlab/ops.hpp"
#include "pdlab/optim.hpp"
#include "pdlab/params.hpp"
#include "pdlab/rng.hpp"

using namespace pdlab;

namespace {

std::filesystem::path temp_dir(const std::string& tag) {
  auto p = std::filesystem::temp_directory_path() / ("pdlab_test_" + tag);
  std::filesystem::remove_all(p);
  return p;
}

std::vector<char> file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("param store") {
  ParamStore ps;
  ps.add("enc.w", Tensor::from_values({2, 2}, {1, 2, 3, 4}));
  ps.add("enc.b", Tensor::from_values({2}, {0, 0}));
  ps.add("head.w", Tensor::from_values({2}, {5, 6}), false);

  CHECK(ps.size() == 3);
  CHECK(ps.scalar_count() == 8);
  CHECK(ps.trainable_scalar_count() == 6);
  CHECK(ps.get("enc.w").requires_grad());
  CHECK_FALSE(ps.get("head.w").requires_grad());
  CHECK(ps.names() == std::vector<std::string>{"enc.b", "enc.w", "head.w"});
  CHECK(ps.trainable_names() == std::vector<std::string>{"enc.b", "enc.w"});

  CHECK_THROWS_AS(ps.add("enc.w", Tensor::zeros({1})), ParamError);
  CHECK_THROWS_AS(ps.get("missing"), ParamError);
  CHECK_THROWS_AS(ps.set_trainable_by_prefix("nothing.", true), ParamError);

  ps.set_trainable_by_prefix("enc.", false);
  CHECK(ps.trainable_scalar_count() == 0);
  CHECK_FALSE(ps.get("enc.b").requires_grad());
  ps.set_trainable_all(true);
  CHECK(ps.trainable_scalar_count() == 8);
}

TEST_CASE("byte hash distinguishes values and restores on revert") {
  ParamStore ps;
  ps.add("w", Tensor::from_values({2}, {1, 2}));
  const auto h0 = byte_hash(ps);
  ps.get("w").mutable_array()(0) = 1.0000000001;
  CHECK(byte_hash(ps) != h0);
  ps.get("w").mutable_array()(0) = 1.0;
  CHECK(byte_hash(ps) == h0);
}

TEST_CASE("adam single-step hand value") {
  // w=1, g=1, lr=0.1: m_hat = v_hat = 1, so w <- 1 - 0.1/(1 + 1e-8).
  ParamStore ps;
  Tensor& w = ps.add("w", Tensor::from_values({1}, {1.0}));
  w.node()->accumulate(ArrayX::Ones(1));
  Adam opt;
  opt.step(ps, 0.1);
  CHECK(opt.step_count() == 1);
  CHECK(w.at(0) == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-12));
  CHECK(w.at(0) == doctest::Approx(0.9).epsilon(1e-7));
}

TEST_CASE("adam freeze and error contracts") {
  SUBCASE("zero gradient leaves parameters exactly unchanged") {
    ParamStore ps;
    Tensor& w = ps.add("w", Tensor::from_values({2}, {3.25, -1.5}));
    w.node()->accumulate(ArrayX::Zero(2));
    const auto h0 = byte_hash(ps);
    Adam opt;
    opt.step(ps, 0.1);
    CHECK(byte_hash(ps) == h0);
  }

  SUBCASE("frozen parameter with a stale gradient is untouched") {
    ParamStore ps;
    Tensor& w = ps.add("w", Tensor::from_values({2}, {1, 2}));
    w.node()->accumulate(ArrayX::Ones(2));
    ps.set_trainable("w", false);
    const auto h0 = byte_hash(ps);
    Adam opt;
    for (int k = 0; k < 5; ++k) opt.step(ps, 0.1);
    CHECK(byte_hash(ps) == h0);
    CHECK(opt.moments().empty());
  }

  SUBCASE("missing gradient names the parameter") {
    ParamStore ps;
    ps.add("layers.3.w", Tensor::from_values({1}, {1.0}));
    Adam opt;
    CHECK_THROWS_WITH_AS(opt.step(ps, 0.1), doctest::Contains("layers.3.w"), ParamError);
  }

  SUBCASE("accumulators exist exactly for trainable parameters") {
    ParamStore ps;
    Tensor& a = ps.add("a", Tensor::from_values({1}, {1.0}));
    Tensor& b = ps.add("b", Tensor::from_values({1}, {1.0}));
    a.node()->accumulate(ArrayX::Ones(1));
    b.node()->accumulate(ArrayX::Ones(1));
    Adam opt;
    opt.step(ps, 0.01);
    CHECK(opt.moments().size() == 2);
    ps.set_trainable("b", false);
    a.node()->accumulate(ArrayX::Ones(1));
    opt.step(ps, 0.01);
    CHECK(opt.moments().size() == 1);
    CHECK(opt.moments().count("a") == 1);
  }
}

TEST_CASE("adam per-group lr multiplier") {
  ParamStore ps;
  Tensor& w = ps.add("enc.w", Tensor::from_values({1}, {1.0}));
  Tensor& c = ps.add("classifier.w", Tensor::from_values({1}, {1.0}));
  w.node()->accumulate(ArrayX::Ones(1));
  c.node()->accumulate(ArrayX::Ones(1));
  Adam opt;
  opt.set_lr_multiplier("classifier.", 5.0);
  CHECK(opt.lr_multiplier_for("classifier.w") == 5.0);
  CHECK(opt.lr_multiplier_for("enc.w") == 1.0);
  opt.step(ps, 0.01);
  // Step one: both see m_hat/√v_hat = 1, so the update is exactly lr·mult.
  const double dw = 1.0 - w.at(0);
  const double dc = 1.0 - c.at(0);
  CHECK(dc / dw == doctest::Approx(5.0).epsilon(1e-9));
}

TEST_CASE("adam drives a least-squares problem downhill deterministically") {
  auto run = [] {
    ParamStore ps;
    Tensor& w = ps.add("w", Tensor::from_values({2, 1}, {0.0, 0.0}));
    Tensor x = Tensor::from_values({3, 2}, {1, 0, 0, 1, 1, 1});
    Tensor y = Tensor::from_values({3, 1}, {1, 2, 3});
    Adam opt;
    double last = 1e9;
    for (int it = 0; it < 200; ++it) {
      ps.zero_grad();
      Tensor r = matmul(x, w) - y;
      Tensor loss = mean(mul(r, r));
      backward(loss);
      opt.step(ps, 0.05);
      last = loss.item();
    }
    return std::pair{last, byte_hash(ps)};
  };
  auto [loss1, hash1] = run();
  auto [loss2, hash2] = run();
  CHECK(loss1 < 1e-2);       // w -> (1,2) solves it exactly
  CHECK(hash1 == hash2);     // bit-identical across reruns
}

TEST_CASE("lr schedule") {
  LrSchedule s;  // defaults: 1e-6 -> 1e-5 over 5, cosine to 0 at 60

  SUBCASE("pinned endpoint values") {
    CHECK(s.lr_at(0) == doctest::Approx(1e-6).epsilon(1e-12));
    CHECK(s.lr_at(5) == doctest::Approx(1e-5).epsilon(1e-12));
    CHECK(s.lr_at(60) == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
  }

  SUBCASE("linear during warmup") {
    CHECK(s.lr_at(2.5) == doctest::Approx(0.5 * (1e-6 + 1e-5)).epsilon(1e-12));
  }

  SUBCASE("continuous at the boundary and non-increasing after") {
    CHECK(s.lr_at(5.0 - 1e-9) == doctest::Approx(s.lr_at(5.0)).epsilon(1e-6));
    double prev = s.lr_at(5);
    for (double e = 5.25; e <= 60.0; e += 0.25) {
      const double cur = s.lr_at(e);
      CHECK(cur <= prev + 1e-18);
      prev = cur;
    }
  }

  SUBCASE("cosine midpoint") {
    // Halfway through decay the lr is the average of base and min.
    CHECK(s.lr_at(32.5) == doctest::Approx(0.5 * (1e-5 + 0.0)).epsilon(1e-9));
  }

  SUBCASE("out of range throws") {
    CHECK_THROWS_AS(s.lr_at(-0.1), ParamError);
    CHECK_THROWS_AS(s.lr_at(60.5), ParamError);
  }

  SUBCASE("classifier multiplier default") { CHECK(s.classifier_multiplier == 5.0); }
}

TEST_CASE("checkpoint round trip") {
  ParamStore ps;
  Rng rng(123);
  {
    ArrayX v(6);
    for (Index i = 0; i < 6; ++i) v(i) = normal(rng, 0.0, 1.0);
    ps.add("enc.w", Tensor::from_array({2, 3}, std::move(v)));
  }
  ps.add("prompt.text", Tensor::from_values({2, 2}, {0.1, -0.2, 0.3, -0.4}));
  ps.add("logit_scale", Tensor::from_values({1}, {2.6592600369}), false);

  CheckpointMeta meta;
  meta.epoch = 7;
  meta.stage = "stage1";
  meta.config_hash = "abc123";

  const auto d1 = temp_dir("ckpt1");
  const auto d2 = temp_dir("ckpt2");

  SUBCASE("save, load into fresh store, save again: identical bytes") {
    save_checkpoint(d1, ps, meta);
    ParamStore loaded;
    CheckpointMeta got = load_checkpoint(d1, loaded);
    CHECK(got.epoch == 7);
    CHECK(got.stage == "stage1");
    CHECK(got.config_hash == "abc123");
    CHECK(loaded.size() == 3);
    CHECK_FALSE(loaded.trainable("logit_scale"));
    CHECK(loaded.trainable("enc.w"));
    CHECK(byte_hash(loaded) == byte_hash(ps));
    save_checkpoint(d2, loaded, got);
    CHECK(file_bytes(d1 / "params.bin") == file_bytes(d2 / "params.bin"));
    CHECK(file_bytes(d1 / "manifest.json") == file_bytes(d2 / "manifest.json"));
  }

  SUBCASE("load into populated store overwrites values in place") {
    save_checkpoint(d1, ps, meta);
    ParamStore other;
    other.add("enc.w", Tensor::zeros({2, 3}));
    other.add("prompt.text", Tensor::zeros({2, 2}));
    other.add("logit_scale", Tensor::zeros({1}));
    load_checkpoint(d1, other);
    CHECK(byte_hash(other) == byte_hash(ps));
  }

  SUBCASE("optimizer state round trips") {
    Tensor& w = ps.get("enc.w");
    Tensor& p = ps.get("prompt.text");
    w.node()->accumulate(ArrayX::Ones(6) * 0.5);
    p.node()->accumulate(ArrayX::Ones(4) * -0.25);
    Adam opt;
    opt.step(ps, 0.01);
    save_checkpoint(d1, ps, meta, &opt);
    ParamStore loaded;
    Adam opt2;
    load_checkpoint(d1, loaded, &opt2);
    CHECK(opt2.step_count() == 1);
    REQUIRE(opt2.moments().size() == opt.moments().size());
    for (const auto& [name, st] : opt.moments()) {
      const auto& st2 = opt2.moments().at(name);
      CHECK(byte_hash(st.m) == byte_hash(st2.m));
      CHECK(byte_hash(st.v) == byte_hash(st2.v));
    }
    save_checkpoint(d2, loaded, meta, &opt2);
    CHECK(file_bytes(d1 / "adam.bin") == file_bytes(d2 / "adam.bin"));
  }

  SUBCASE("version mismatch is its own error") {
    save_checkpoint(d1, ps, meta);
    auto text = file_bytes(d1 / "manifest.json");
    std::string s(text.begin(), text.end());
    const auto pos = s.find("\"format_version\": 1");
    REQUIRE(pos != std::string::npos);
    s.replace(pos, 19, "\"format_version\": 9");
    std::ofstream(d1 / "manifest.json", std::ios::trunc) << s;
    ParamStore loaded;
    try {
      load_checkpoint(d1, loaded);
      FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
      CHECK(e.code == CheckpointErrorCode::version_mismatch);
    }
  }

  SUBCASE("truncated blob is a corrupt-blob error") {
    save_checkpoint(d1, ps, meta);
    auto bytes = file_bytes(d1 / "params.bin");
    bytes.pop_back();
    std::ofstream(d1 / "params.bin", std::ios::binary | std::ios::trunc)
        .write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    ParamStore loaded;
    try {
      load_checkpoint(d1, loaded);
      FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
      CHECK(e.code == CheckpointErrorCode::corrupt_blob);
    }
  }

  SUBCASE("malformed manifest is a corrupt-blob error") {
    save_checkpoint(d1, ps, meta);
    std::ofstream(d1 / "manifest.json", std::ios::trunc) << "{not json";
    ParamStore loaded;
    try {
      load_checkpoint(d1, loaded);
      FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
      CHECK(e.code == CheckpointErrorCode::corrupt_blob);
    }
  }

  SUBCASE("shape mismatch names the parameter") {
    save_checkpoint(d1, ps, meta);
    ParamStore other;
    other.add("enc.w", Tensor::zeros({3, 2}));  // transposed shape
    other.add("prompt.text", Tensor::zeros({2, 2}));
    other.add("logit_scale", Tensor::zeros({1}));
    try {
      load_checkpoint(d1, other);
      FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
      CHECK(e.code == CheckpointErrorCode::shape_mismatch);
      CHECK(std::string(e.what()).find("enc.w") != std::string::npos);
    }
  }

  SUBCASE("missing directory is an io error") {
    ParamStore loaded;
    try {
      load_checkpoint(temp_dir("never_saved"), loaded);
      FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
      CHECK(e.code == CheckpointErrorCode::io_error);
    }
  }

  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}
