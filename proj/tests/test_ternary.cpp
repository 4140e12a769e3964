#include <gtest/gtest.h>

#include "nn_oracles.hpp"
#include "stcast/ternary.hpp"
#include "ternary_props.hpp"
#include "test_util.hpp"

namespace nn = stcast::nn;
namespace st = stcast::ternary;
using stcast::testing::tiny_config;

TEST(Project, ThreeTwoOne) {
  std::vector<double> w{3, 2, 1};
  auto t = st::project(w);
  EXPECT_EQ(t.nonzeros, 2u);
  EXPECT_DOUBLE_EQ(t.alpha, 2.5);
  EXPECT_EQ(t.trits, (std::vector<std::int8_t>{1, 1, 0}));
  auto o = st::project_oracle(w);
  EXPECT_EQ(o.trits, t.trits);
  EXPECT_DOUBLE_EQ(o.alpha, 2.5);
}

TEST(Project, ConstantVector) {
  std::vector<double> w(7, 0.75);
  auto t = st::project(w);
  EXPECT_EQ(t.nonzeros, 7u);
  EXPECT_DOUBLE_EQ(t.alpha, 0.75);
  EXPECT_EQ(t.trits, std::vector<std::int8_t>(7, 1));
}

TEST(Project, SingleDominantNegative) {
  auto t = st::project(std::vector<double>{-5, 0, 0, 0});
  EXPECT_EQ(t.alpha, 5.0);
  EXPECT_EQ(t.trits, (std::vector<std::int8_t>{-1, 0, 0, 0}));
}

TEST(Project, ZeroVectorIsDegenerate) {
  auto t = st::project(std::vector<double>(5, 0.0));
  EXPECT_EQ(t.alpha, 0.0);
  EXPECT_EQ(t.nonzeros, 0u);
  EXPECT_EQ(t.trits, std::vector<std::int8_t>(5, 0));
  auto o = st::project_oracle(std::vector<double>(5, 0.0));
  EXPECT_EQ(st::objective(std::vector<double>(5, 0.0), o), 0.0);
  EXPECT_EQ(o.trits, std::vector<std::int8_t>(5, 0));
}

TEST(Project, ScalarIsExact) {
  for (double x : {2.5, -0.125, 1e-150}) {
    std::vector<double> w{x};
    for (const auto& t : {st::project(w), st::project_oracle(w)}) {
      EXPECT_EQ(t.alpha, std::abs(x));
      EXPECT_EQ(t.trits[0], x > 0 ? 1 : -1);
      EXPECT_EQ(st::objective(w, t), 0.0);
    }
  }
  // Scores must not underflow for tiny weights.
  auto tiny = st::project(std::vector<double>{1e-300, -2e-300});
  EXPECT_EQ(tiny.trits, (std::vector<std::int8_t>{1, -1}));
}

TEST(Project, SignsFollowSelectedEntries) {
  // sorted |w| = 3, 3, 1, 1: s_k/sqrt(k) = 3, 4.24, 4.04, 4 so k* = 2
  auto t = st::project(std::vector<double>{1, 3, -3, 1, 0});
  EXPECT_EQ(t.trits, (std::vector<std::int8_t>{0, 1, -1, 0, 0}));
  EXPECT_EQ(t.alpha, 3.0);
}

TEST(Project, SmallestKOnScoreTie) {
  // s_k²/k = 9, 8, 8.33, 9: k = 1 and k = 4 tie
  auto t = st::project(std::vector<double>{3, 1, 1, 1});
  EXPECT_EQ(t.nonzeros, 1u);
  EXPECT_EQ(t.alpha, 3.0);
}

TEST(Project, EmptyAndNonFiniteRejected) {
  EXPECT_THROW(st::project(std::vector<double>{}), stcast::DataError);
  EXPECT_THROW(st::project(std::vector<double>{1, std::nan("")}), stcast::NumericError);
  EXPECT_THROW(st::project_oracle(std::vector<double>(13, 1.0)), stcast::ShapeError);
  EXPECT_THROW(st::project_oracle(std::vector<double>{}), stcast::DataError);
}

TEST(Project, MatchesOracleOnRandomVectors) {
  std::mt19937_64 rng(2024);
  for (std::size_t n = 1; n <= 10; ++n)
    for (int i = 0; i < 100; ++i) {
      auto w = stcast::testing::random_weights(rng, n, false);
      EXPECT_LE(stcast::testing::oracle_gap(w), 1e-10) << "n=" << n;
    }
}

TEST(Project, PropertySuite) {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 2000; ++i) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 12)(rng);
    auto w = stcast::testing::random_weights(rng, n);
    const auto why = stcast::testing::projection_violation(w, stcast::testing::random_scale(rng));
    EXPECT_TRUE(why.empty()) << why << " case " << i;
  }
}

TEST(Trits, PackExample) {
  std::vector<std::int8_t> t{1, -1, 0, 0};
  auto b = st::pack_trits(t);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_EQ(b[0], 0b00001001);
}

TEST(Trits, SizeAndRoundTrip) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> d(-1, 1);
  for (std::size_t n = 0; n < 40; ++n) {
    std::vector<std::int8_t> t(n);
    for (auto& v : t) v = static_cast<std::int8_t>(d(rng));
    auto b = st::pack_trits(t);
    EXPECT_EQ(b.size(), (n + 3) / 4);
    EXPECT_EQ(st::unpack_trits(b, n), t);
  }
}

TEST(Trits, ReservedCodeRejected) {
  std::vector<std::uint8_t> b{0b00110001};
  EXPECT_THROW(st::unpack_trits(b, 3), stcast::FormatError);
  EXPECT_NO_THROW(st::unpack_trits(b, 1));
  EXPECT_THROW(st::unpack_trits(b, 5), stcast::FormatError);
  EXPECT_THROW(st::pack_trits(std::vector<std::int8_t>{2}), stcast::DataError);
}

namespace {

struct TernarySetup {
  nn::ModelConfig cfg = tiny_config();
  nn::Dataset ds = stcast::testing::smooth_dataset(cfg, 60, 3);
  nn::Model model = nn::build_model(cfg, 3);
  std::vector<std::size_t> ids;
  nn::TrainConfig tc;
  TernarySetup(bool bn = false) {
    if (bn) {
      cfg.batch_norm = true;
      model = nn::build_model(cfg, 3);
    }
    ids.resize(ds.size());
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    tc.batch_size = 8;
    tc.seed = 4;
    tc.learning_rate = 2e-3;
  }
};

void expect_projection_relation(const st::ShadowState& s, const nn::Model& m) {
  for (std::size_t l = 0; l < s.params.size(); ++l) {
    const auto t = st::project(s.shadow[l].data);
    EXPECT_EQ(t, s.projected[l]);
    const auto& v = m.params[s.params[l]].value;
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v[i], t.alpha * t.trits[i]);
  }
}

}  // namespace

TEST(TernaryTraining, OnlyWeightTensorsAreTernary) {
  TernarySetup s(true);
  auto state = st::init_shadow(s.model);
  for (std::size_t i = 0; i < s.model.params.size(); ++i) {
    const bool listed = std::find(state.params.begin(), state.params.end(), i) != state.params.end();
    EXPECT_EQ(listed, s.model.params[i].kind == nn::ParamKind::weight) << s.model.params[i].name;
  }
  expect_projection_relation(state, s.model);
}

TEST(TernaryTraining, ZeroLearningRateChangesNothing) {
  TernarySetup s;
  s.tc.learning_rate = 0.0;
  auto state = st::init_shadow(s.model);
  const auto model0 = s.model;
  const auto shadow0 = state.shadow;
  nn::Adam adam(s.model);
  for (std::size_t e = 0; e < 2; ++e) st::train_ternary_epoch(state, s.model, adam, s.ds, s.ids, s.tc, e);
  EXPECT_EQ(state.shadow, shadow0);
  for (std::size_t i = 0; i < s.model.params.size(); ++i) EXPECT_EQ(s.model.params[i].value, model0.params[i].value);
}

TEST(TernaryTraining, ProjectionRelationHoldsAfterEpochs) {
  for (bool bn : {false, true}) {
    TernarySetup s(bn);
    auto state = st::init_shadow(s.model);
    nn::Adam adam(s.model);
    for (std::size_t e = 0; e < 3; ++e) {
      st::train_ternary_epoch(state, s.model, adam, s.ds, s.ids, s.tc, e);
      expect_projection_relation(state, s.model);
    }
  }
}

TEST(TernaryTraining, SingleSampleOverfit) {
  for (std::uint64_t seed : {3, 8, 21, 34, 55}) {
    TernarySetup s;
    s.model = nn::build_model(s.cfg, seed);
    std::vector<std::size_t> one{0};
    s.tc.batch_size = 1;
    s.tc.learning_rate = 5e-4;
    auto state = st::init_shadow(s.model);
    nn::Adam adam(s.model);
    std::vector<double> losses;
    for (std::size_t e = 0; e < 100; ++e)
      losses.push_back(st::train_ternary_epoch(state, s.model, adam, s.ds, one, s.tc, e));
    // A trit flip is a discrete jump, so single steps may rise by up to 5% of
    // the starting loss.
    for (std::size_t e = 1; e < losses.size(); ++e)
      EXPECT_LE(losses[e], losses[e - 1] + 0.05 * losses.front()) << "seed " << seed << " epoch " << e;
    EXPECT_LT(losses.back(), 0.5 * losses.front()) << "seed " << seed;
  }
}

TEST(TernaryTraining, Deterministic) {
  TernarySetup a, b;
  auto sa = st::init_shadow(a.model);
  auto sb = st::init_shadow(b.model);
  nn::Adam aa(a.model), ab(b.model);
  for (std::size_t e = 0; e < 2; ++e)
    EXPECT_EQ(st::train_ternary_epoch(sa, a.model, aa, a.ds, a.ids, a.tc, e),
              st::train_ternary_epoch(sb, b.model, ab, b.ds, b.ids, b.tc, e));
  EXPECT_EQ(sa.shadow, sb.shadow);
}

TEST(TernaryCheckpoint, RoundTripAndInferenceMatch) {
  for (bool bn : {false, true}) {
    TernarySetup s(bn);
    auto state = st::init_shadow(s.model);
    nn::Adam adam(s.model);
    st::train_ternary_epoch(state, s.model, adam, s.ds, s.ids, s.tc, 0);
    stcast::testing::TempDir dir("tern");
    st::save_ternary_checkpoint(s.model, state, dir / "t.ckpt", {{"epochs", "1"}});
    auto ck = st::load_ternary_checkpoint(dir / "t.ckpt");
    const auto expect = st::export_model(s.model, state);
    for (std::size_t i = 0; i < expect.params.size(); ++i)
      EXPECT_EQ(ck.model.params[i].value, expect.params[i].value) << expect.params[i].name;
    for (std::size_t l = 0; l < state.params.size(); ++l) {
      const auto& t = ck.layers.at(s.model.params[state.params[l]].name);
      EXPECT_EQ(t.trits, state.projected[l].trits);
      EXPECT_EQ(t.alpha, static_cast<double>(static_cast<float>(state.projected[l].alpha)));
    }
    EXPECT_EQ(ck.extra.at("epochs"), "1");
    auto batch = nn::make_batch(s.cfg, s.ds, std::vector<std::size_t>{0, 5, 9});
    EXPECT_EQ(nn::predict_batch(ck.model, batch), nn::predict_batch(expect, batch));
  }
}

TEST(TernaryCheckpoint, PayloadSizes) {
  TernarySetup s;
  auto state = st::init_shadow(s.model);
  const auto bytes = st::serialize_ternary_checkpoint(s.model, state);
  const auto sizes = st::payload_sizes(bytes);
  const auto float_sizes = st::payload_sizes(nn::serialize_checkpoint(s.model));
  for (const auto& p : s.model.params) {
    const std::size_t n = p.value.size();
    if (p.kind == nn::ParamKind::weight) {
      EXPECT_EQ(sizes.at(p.name), 4 + (n + 3) / 4);
      EXPECT_EQ(float_sizes.at(p.name), 4 * n);
    } else {
      EXPECT_EQ(sizes.at(p.name), 4 * n);
    }
  }
}

TEST(TernaryCheckpoint, LargeLayersCompressFifteenfold) {
  nn::ModelConfig cfg = tiny_config(15, 15);
  cfg.filters = 16;
  auto m = nn::build_model(cfg, 1);
  auto state = st::init_shadow(m);
  const auto tern = st::payload_sizes(st::serialize_ternary_checkpoint(m, state));
  const auto flt = st::payload_sizes(nn::serialize_checkpoint(m));
  std::size_t large = 0;
  for (const auto& p : m.params) {
    if (p.kind != nn::ParamKind::weight || p.value.size() < 1024) continue;
    ++large;
    EXPECT_GE(static_cast<double>(flt.at(p.name)) / static_cast<double>(tern.at(p.name)), 15.0) << p.name;
  }
  EXPECT_GT(large, 0u);
}

TEST(TernaryCheckpoint, FormatErrors) {
  TernarySetup s;
  auto state = st::init_shadow(s.model);
  auto bytes = st::serialize_ternary_checkpoint(s.model, state);
  auto bad = bytes;
  bad[3] = 'N';
  EXPECT_THROW(st::parse_ternary_checkpoint(bad), stcast::FormatError);
  std::vector<std::uint8_t> cut(bytes.begin(), bytes.end() - 2);
  EXPECT_THROW(st::parse_ternary_checkpoint(cut), stcast::FormatError);
  // Flip the first trit byte of the first ternary tensor to the reserved code.
  const std::uint32_t len = bytes[8] | bytes[9] << 8 | bytes[10] << 16 | static_cast<std::uint32_t>(bytes[11]) << 24;
  auto meta = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + len);
  for (const auto& t : meta["tensors"])
    if (t["dtype"] == "t2") {
      auto reserved = bytes;
      reserved[12 + len + t["offset"].get<std::size_t>() + 4] = 0xFF;
      EXPECT_THROW(st::parse_ternary_checkpoint(reserved), stcast::FormatError);
      break;
    }
}
