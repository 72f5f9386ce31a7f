#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "attukan/network/checkpoint.hpp"
#include "attukan/network/model.hpp"
#include "attukan/numerics/adam.hpp"
#include "attukan/numerics/ops.hpp"

using namespace attukan;
using namespace attukan::network;
namespace fs = std::filesystem;

namespace {

Tensor random_images(std::size_t b, std::size_t h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t({b, 1, h, h});
  for (auto& v : t.data()) v = u(rng);
  return t;
}

ModelConfig small_config() {
  ModelConfig c;
  c.channels = {2, 4, 8, 16, 32};
  c.kan_layers = 2;
  c.seed = 5;
  return c;
}

fs::path temp_dir(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("attukan_test_network_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::vector<std::uint8_t> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// One optimiser step so that Adam moments and step counters are non-trivial.
void train_one_step(Model& m) {
  GradTape t;
  ForwardResult r = m.forward(t, random_images(2, 16, 3), true);
  t.backward(ops::mean(t, r.prob));
  adam_step(m.params());
  m.params().zero_grad();
}

}  // namespace

TEST(Model, DefaultParameterCount) {
  Model m = build(ModelConfig{});
  EXPECT_EQ(parameter_count(m), 1050429u);
  EXPECT_EQ(parameter_count(ParamStore{}), 0u);
}

TEST(Model, ProbabilityMapShapeAndRange) {
  Model m = build(ModelConfig{});
  GradTape t(false);
  ForwardResult r = m.forward(t, random_images(2, 64, 1), false);
  const Tensor& p = t.value(r.prob);
  ASSERT_EQ(p.shape(), (Shape{2, 1, 64, 64}));
  for (double v : p.data()) {
    ASSERT_GT(v, 0.0);
    ASSERT_LT(v, 1.0);
  }
  const std::size_t ch[5] = {8, 16, 32, 64, 128};
  for (std::size_t l = 0; l < 5; ++l)
    EXPECT_EQ(t.value(r.features[l]).shape(), (Shape{2, ch[l], 64u >> l, 64u >> l}));
}

TEST(Model, IdenticalImagesGiveIdenticalRows) {
  Model m = build(small_config());
  Tensor one = random_images(1, 32, 2);
  Tensor two({2, 1, 32, 32});
  for (std::size_t i = 0; i < one.size(); ++i) two[i] = two[one.size() + i] = one[i];
  GradTape t(false);
  const Tensor p = t.value(m.forward(t, two, false).prob);
  for (std::size_t i = 0; i < one.size(); ++i) ASSERT_EQ(p[i], p[one.size() + i]);
}

TEST(Model, SameSeedSameParameters) {
  Model a = build(ModelConfig{}), b = build(ModelConfig{});
  ASSERT_EQ(a.params().size(), b.params().size());
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    EXPECT_EQ(a.params().entry(i).name, b.params().entry(i).name);
    EXPECT_EQ(a.params().entry(i).value, b.params().entry(i).value);
  }
  ModelConfig other;
  other.seed = 1;
  EXPECT_NE(build(other).params().value("enc1.conv.weight"), a.params().value("enc1.conv.weight"));
}

TEST(Model, InvalidChannelsThrow) {
  ModelConfig c;
  c.channels = {8, 16, 32, 64};
  EXPECT_THROW(build(c), std::invalid_argument);
  c.channels = {8, 16, 16, 64, 128};
  EXPECT_THROW(build(c), std::invalid_argument);
  c.channels = {0, 16, 32, 64, 128};
  EXPECT_THROW(build(c), std::invalid_argument);
}

TEST(Model, IndivisibleInputThrows) {
  Model m = build(small_config());
  GradTape t(false);
  EXPECT_THROW(m.forward(t, random_images(1, 24, 1), false), DimensionError);
  EXPECT_THROW(m.forward(t, Tensor({1, 3, 16, 16}), false), DimensionError);
}

TEST(Model, AblationVariants) {
  ModelConfig full = small_config();
  ModelConfig plain = full;
  plain.use_attention_gates = false;
  ModelConfig mlp = full;
  mlp.bottleneck = BottleneckVariant::mlp;
  Model a = build(full), b = build(plain), c = build(mlp);
  EXPECT_GT(a.parameter_count(), b.parameter_count());
  EXPECT_NE(a.parameter_count(), c.parameter_count());
  for (Model* m : {&a, &b, &c}) {
    GradTape t(false);
    EXPECT_EQ(t.value(m->forward(t, random_images(1, 16, 4), false).prob).shape(), (Shape{1, 1, 16, 16}));
  }
  // Shared parts are initialised identically whatever the variant.
  EXPECT_EQ(a.params().value("enc1.conv.weight"), b.params().value("enc1.conv.weight"));
  EXPECT_EQ(parse_bottleneck("mlp"), BottleneckVariant::mlp);
  EXPECT_THROW(parse_bottleneck("cnn"), std::invalid_argument);
}

TEST(Model, TrainingModeUpdatesRunningStatistics) {
  Model m = build(small_config());
  const Tensor before = m.params().value("enc1.bn.running_mean");
  GradTape t(false);
  m.forward(t, random_images(2, 16, 5), true);
  EXPECT_NE(m.params().value("enc1.bn.running_mean"), before);
  const Tensor after = m.params().value("enc1.bn.running_mean");
  GradTape e(false);
  m.forward(e, random_images(2, 16, 6), false);
  EXPECT_EQ(m.params().value("enc1.bn.running_mean"), after);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  const fs::path dir = temp_dir("roundtrip");
  Model m = build(small_config());
  train_one_step(m);
  CheckpointMeta meta;
  meta.training = {{"epoch", 3}};
  save_checkpoint(dir / "a.json", m.params(), meta);

  Model fresh = build(small_config());
  CheckpointMeta back = load_checkpoint(dir / "a.json", fresh.params());
  EXPECT_EQ(back.training, meta.training);
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    const ParamEntry &x = m.params().entry(i), &y = fresh.params().entry(i);
    EXPECT_EQ(x.value, y.value) << x.name;
    EXPECT_EQ(x.step, y.step) << x.name;
    if (x.trainable) {
      EXPECT_EQ(x.m, y.m) << x.name;
      EXPECT_EQ(x.v, y.v) << x.name;
    }
  }
  save_checkpoint(dir / "b.json", fresh.params(), meta);
  EXPECT_EQ(slurp(dir / "a.bin"), slurp(dir / "b.bin"));
  EXPECT_EQ(slurp(dir / "a.json").size(), slurp(dir / "b.json").size());
}

TEST(Checkpoint, TruncatedBlobLeavesStoreUntouched) {
  const fs::path dir = temp_dir("truncated");
  Model m = build(small_config());
  train_one_step(m);
  save_checkpoint(dir / "c.json", m.params(), {});
  auto blob = slurp(dir / "c.bin");
  blob.resize(blob.size() - 7);
  std::ofstream(dir / "c.bin", std::ios::binary).write(reinterpret_cast<const char*>(blob.data()),
                                                        static_cast<std::streamsize>(blob.size()));

  Model fresh = build(small_config());
  const ParamStore before = fresh.params();
  try {
    load_checkpoint(dir / "c.json", fresh.params());
    FAIL() << "expected a length error";
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind(), CheckpointError::Kind::length);
  }
  for (std::size_t i = 0; i < before.size(); ++i) {
    EXPECT_EQ(fresh.params().entry(i).value, before.entry(i).value);
    EXPECT_EQ(fresh.params().entry(i).step, before.entry(i).step);
  }
}

TEST(Checkpoint, StructuredErrors) {
  const fs::path dir = temp_dir("errors");
  Model m = build(small_config());
  save_checkpoint(dir / "d.json", m.params(), {});
  nlohmann::json manifest = read_manifest(dir / "d.json");
  const auto blob = slurp(dir / "d.bin");

  nlohmann::json wrong_version = manifest;
  wrong_version["format_version"] = 99;
  ParamStore s1 = m.params();
  try {
    decode_checkpoint(wrong_version, blob, s1);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind(), CheckpointError::Kind::version);
  }

  ModelConfig bigger = small_config();
  bigger.channels = {4, 8, 16, 32, 64};
  Model other = build(bigger);
  try {
    load_checkpoint(dir / "d.json", other.params());
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind(), CheckpointError::Kind::mismatch);
  }

  try {
    load_checkpoint(dir / "missing.json", other.params());
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind(), CheckpointError::Kind::io);
  }

  std::ofstream(dir / "garbled.json") << "{\"format_version\": 1, \"tensors\": [";
  try {
    read_manifest(dir / "garbled.json");
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind(), CheckpointError::Kind::manifest);
  }
}
