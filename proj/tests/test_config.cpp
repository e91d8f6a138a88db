#include <doctest.h>

#include <cmath>
#include <string>

#include "saf/config.hpp"
#include "saf/errors.hpp"

using namespace saf;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("defaults match the documented hyperparameters") {
  const TrainConfig c;
  CHECK(c.base_lr == 0.004);
  CHECK(c.momentum == 0.9);
  CHECK(c.lambda_d_max == 0.1);
  CHECK(c.lambda_m_max == 0.1);
  CHECK(c.margin_gamma == 4.0);
  CHECK(c.backbone == Backbone::mdd);
  CHECK(c.saf_enabled);
  CHECK(c.mixup.mode == MixupMode::saf);
  CHECK(c.mixup.beta_alpha == 0.2);
  CHECK(c.mixup.constant_eta == 0.6);
  CHECK(c.model.saf_bottlenecks == 2);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("render and parse round-trip exactly") {
  TrainConfig c;
  c.backbone = Backbone::dann;
  c.base_lr = 0.1 + 0.2;
  c.mixup.entropy_threshold = 1.0 / 3.0;
  c.mixup.entropy_filter = EntropyFilter::only_uncertain;
  c.model.saf_position = SafPosition::bottleneck;
  c.data.source_csv = "a.csv";
  c.data.target_csv = "b.csv";
  c.seed = 18446744073709551615ull;
  const std::string text = render_config(c);
  const TrainConfig back = parse_config(text);
  CHECK(render_config(back) == text);
  CHECK(back.base_lr == c.base_lr);
  CHECK(*back.mixup.entropy_threshold == *c.mixup.entropy_threshold);
  CHECK(back.seed == c.seed);
  CHECK(parse_config(render_config(TrainConfig{}, true)).mixup.entropy_threshold == std::nullopt);
}

TEST_CASE("documented rendering describes every key") {
  const std::string doc = render_config(TrainConfig{}, true);
  const std::string plain = render_config(TrainConfig{});
  std::size_t keys = 0, comments = 0;
  for (std::size_t p = 0; (p = plain.find(" = ", p)) != std::string::npos; ++p) ++keys;
  for (std::size_t p = 0; (p = doc.find("# ", p)) != std::string::npos; ++p) ++comments;
  CHECK(keys > 30);
  CHECK(comments >= keys);
}

TEST_CASE("strict parsing names the offending key") {
  CHECK(error_of("[train]\nbogus = 1\n").find("train.bogus") != std::string::npos);
  CHECK(error_of("[nowhere]\n").find("nowhere") != std::string::npos);
  CHECK(error_of("[train]\niterations = 5\niterations = 6\n").find("duplicate") != std::string::npos);
  CHECK(error_of("[train]\niterations = many\n").find("iterations") != std::string::npos);
  CHECK(error_of("iterations = 5\n").find("outside a section") != std::string::npos);
  CHECK(error_of("[train]\nbackbone = cdan\n").find("dann | mdd") != std::string::npos);
  CHECK(error_of("[train]\nbatch_size = 1\n").find("batch_size") != std::string::npos);
  CHECK(error_of("[mixup]\nconstant_eta = 1\n").find("constant_eta") != std::string::npos);
  CHECK(error_of("[train]\n\n# comment\niterations = 7\n").empty());
  CHECK(parse_config("[train]\niterations = 7 \n").iterations == 7);
}

TEST_CASE("overrides") {
  TrainConfig c;
  apply_override(c, "train", "saf_enabled", "off");
  CHECK(!c.saf_enabled);
  apply_override(c, "mixup", "entropy_threshold", "auto");
  CHECK(!c.mixup.entropy_threshold);
  CHECK_THROWS_AS(apply_override(c, "train", "nope", "1"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "train", "momentum", "fast"), ConfigError);
}

TEST_CASE("entropy threshold default is half of log K") {
  MixupPolicy p;
  CHECK(p.threshold_for(4) == 0.5 * std::log(4.0));
  p.entropy_threshold = 0.2;
  CHECK(p.threshold_for(4) == 0.2);
  p.entropy_threshold = -0.1;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("data section validation") {
  TrainConfig c;
  c.data.source_csv = "only-source.csv";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.data.kind = "spirals";
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
