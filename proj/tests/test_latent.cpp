#include <Eigen/Dense>
#include <filesystem>

#include "doctest.h"
#include "gcp/errors.hpp"
#include "gcp/latent_control.hpp"

using namespace gcp;

TEST_CASE("directions match an Eigen SVD") {
  torch::manual_seed(1);
  auto w = torch::randn({40, 12}, torch::kFloat64);
  auto set = discover_directions(w, 5);
  set.validate(1e-5);
  Eigen::MatrixXd m(40, 12);
  auto A = w.accessor<double, 2>();
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 12; ++j) m(i, j) = A[i][j];
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinV);
  for (int k = 0; k < 5; ++k) {
    const auto& d = set.at(k);
    CHECK(std::abs(d.singular_value - svd.singularValues()(k)) < 1e-9);
    Eigen::VectorXd v = svd.matrixV().col(k);
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    for (int j = 0; j < 12; ++j) CHECK(std::abs(d.vector[j].item<double>() - v(j)) < 1e-8);
  }
}

TEST_CASE("direction set properties") {
  torch::manual_seed(2);
  auto set = discover_directions(torch::randn({64, 16}), 8);
  CHECK(set.size() == 8);
  for (size_t i = 0; i < set.size(); ++i) {
    for (size_t j = 0; j < set.size(); ++j) {
      const double dot = torch::dot(set.directions[i].vector, set.directions[j].vector).item<double>();
      CHECK(std::abs(dot - (i == j ? 1.0 : 0.0)) <= 1e-5);
    }
    if (i > 0) CHECK(set.directions[i].singular_value <= set.directions[i - 1].singular_value);
  }
  CHECK_THROWS_AS(discover_directions(torch::randn({64, 16}), 17), ValidationError);
  CHECK_THROWS_AS(discover_directions(torch::randn({4, 16}), 5), ValidationError);
  CHECK_THROWS_AS(discover_directions(torch::randn({4, 16}), 0), ValidationError);
  CHECK_THROWS_AS(set.at(8), ValidationError);
  auto broken = set;
  broken.directions[1].vector = broken.directions[0].vector.clone();
  CHECK_THROWS_AS(broken.validate(), ValidationError);
}

TEST_CASE("perturbation") {
  auto z = torch::randn({16});
  auto same = perturb(z, 0.0, 4, 9);
  for (const auto& s : same) CHECK(torch::equal(s, z));
  auto a = perturb(z, 0.5, 3, 9);
  auto b = perturb(z, 0.5, 3, 9);
  for (int i = 0; i < 3; ++i) CHECK(torch::equal(a[i], b[i]));
  CHECK(!torch::equal(a[0], a[1]));
  auto big = perturb(torch::zeros({4096}), 2.0, 1, 1)[0];
  CHECK(big.std().item<double>() == doctest::Approx(2.0).epsilon(0.05));
  CHECK_THROWS_AS(perturb(z, -1.0, 2, 0), ValidationError);
}

TEST_CASE("walks are additive") {
  torch::manual_seed(3);
  auto z = torch::randn({8}, torch::kFloat64);
  auto d = torch::randn({8}, torch::kFloat64);
  d = d / d.norm();
  auto frames = walk(z, d, {0.0, 0.7, -1.2});
  CHECK(torch::equal(frames[0], z));
  auto ab = walk(walk(z, d, {0.7})[0], d, {-1.2})[0];
  auto direct = walk(z, d, {0.7 + -1.2})[0];
  CHECK((ab - direct).abs().max().item<double>() < 1e-12);
  CHECK_THROWS_AS(walk(z, torch::randn({7}), {1.0}), ShapeError);
}

TEST_CASE("alpha ranges") {
  auto a = parse_alpha_range("-2:2:0.5");
  CHECK(a.size() == 9);
  CHECK(a.front() == -2.0);
  CHECK(a.back() == doctest::Approx(2.0));
  CHECK(parse_alpha_range("1.5") == std::vector<double>{1.5});
  CHECK(parse_alpha_range("-1:1:0.1").size() == 21);
  CHECK_THROWS_AS(parse_alpha_range("1:0:0.5"), ValidationError);
  CHECK_THROWS_AS(parse_alpha_range("0:1:0"), ValidationError);
  CHECK_THROWS_AS(parse_alpha_range("a:b:c"), ValidationError);
  CHECK_THROWS_AS(parse_alpha_range("0:1"), ValidationError);
}

TEST_CASE("directions persist") {
  torch::manual_seed(4);
  auto set = discover_directions(torch::randn({32, 10}), 4);
  auto path = std::filesystem::temp_directory_path() / "gcp_dirs_test.tensors";
  save_directions(path, set);
  auto back = load_directions(path);
  REQUIRE(back.size() == 4);
  for (int i = 0; i < 4; ++i) {
    CHECK(torch::equal(back.at(i).vector, set.at(i).vector));
    CHECK(back.at(i).singular_value == set.at(i).singular_value);
  }
  std::filesystem::remove(path);
}
