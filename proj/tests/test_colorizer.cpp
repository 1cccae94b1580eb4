#include "doctest.h"
#include "gcp/colorizer.hpp"
#include "gcp/errors.hpp"
#include "oracles.hpp"

using namespace gcp;

TEST_CASE("zero-initialized SPADE outputs zero") {
  torch::manual_seed(1);
  Spade s(6, 4, 8, true);
  auto out = s->forward(torch::randn({2, 6, 8, 8}), torch::randn({2, 4, 8, 8}));
  CHECK(out.abs().max().item<double>() == 0.0);
}

TEST_CASE("unit modulation normalizes per channel") {
  torch::manual_seed(2);
  Spade s(5, 3, 8);
  s->set_constant(1.0, 0.0);
  auto x = torch::randn({4, 5, 8, 8}, torch::kFloat64) * 3.0 + 2.0;
  s->to(torch::kFloat64);
  auto out = s->forward(x, torch::randn({4, 3, 4, 4}, torch::kFloat64));
  auto mean = out.mean({0, 2, 3});
  auto var = out.var({0, 2, 3}, false);
  CHECK(mean.abs().max().item<double>() <= 1e-5);
  CHECK((var - 1.0).abs().max().item<double>() <= 1e-3);
}

TEST_CASE("SPADE matches the element-wise oracle") {
  torch::manual_seed(3);
  Spade s(4, 3, 6);
  s->to(torch::kFloat64);
  auto x = torch::randn({2, 4, 6, 6}, torch::kFloat64);
  auto g = torch::randn({2, 3, 3, 3}, torch::kFloat64);
  auto [gamma, beta] = s->modulation(g, 6, 6);
  auto out = s->forward(x, g);
  CHECK((out - oracle::spade(x, gamma, beta, 1e-5)).abs().max().item<double>() <= 1e-5);
  CHECK_THROWS_AS(s->forward(x, torch::randn({3, 3, 3, 3}, torch::kFloat64)), ShapeError);
}

TEST_CASE("colorizer output contract") {
  ColorizerSpec spec;
  spec.resolution = 32;
  spec.widths = {8, 8, 16};
  spec.spade_hidden = 8;
  spec.guidance_channels = {6, 4, 4};
  auto c = make_colorizer(spec);
  CHECK(spec.guidance_scales() == std::vector<int64_t>{8, 16, 32});
  torch::manual_seed(4);
  auto l = torch::rand({2, 1, 32, 32}) * 2 - 1;
  FeaturePyramid g{{torch::randn({2, 6, 8, 8}), torch::randn({2, 4, 16, 16}), torch::randn({2, 4, 32, 32})}};
  auto ab = c->forward(l, g);
  CHECK(ab.sizes() == torch::IntArrayRef({2, 2, 32, 32}));
  CHECK(ab.abs().max().item<double>() <= 1.0);

  ab.pow(2).sum().backward();
  double head = 0.0, trunk = 0.0;
  for (const auto& p : c->named_parameters()) {
    if (!p.value().grad().defined()) continue;
    const double n = p.value().grad().norm().item<double>();
    if (p.key().find("gamma") != std::string::npos || p.key().find("beta") != std::string::npos) head += n;
    if (p.key().rfind("stem", 0) == 0 || p.key().rfind("down", 0) == 0) trunk += n;
  }
  CHECK(head > 0.0);
  CHECK(trunk > 0.0);

  FeaturePyramid missing{{torch::randn({2, 6, 8, 8}), torch::randn({2, 4, 16, 16})}};
  CHECK_THROWS_AS(c->forward(l, missing), ConfigError);
  FeaturePyramid wrong{{torch::randn({2, 5, 8, 8}), torch::randn({2, 4, 16, 16}), torch::randn({2, 4, 32, 32})}};
  CHECK_THROWS_AS(c->forward(l, wrong), ConfigError);
  auto zero = zero_guidance(spec, 2);
  CHECK(zero.levels.size() == 3);
  CHECK(c->forward(l, zero).sizes() == torch::IntArrayRef({2, 2, 32, 32}));
}

TEST_CASE("colorizer construction is seeded") {
  ColorizerSpec spec;
  spec.resolution = 32;
  spec.widths = {8, 8, 16};
  spec.guidance_channels = {6, 4, 4};
  auto a = make_colorizer(spec);
  auto b = make_colorizer(spec);
  auto pa = a->parameters();
  auto pb = b->parameters();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) CHECK(torch::equal(pa[i], pb[i]));
  ColorizerSpec bad = spec;
  bad.res_blocks = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
