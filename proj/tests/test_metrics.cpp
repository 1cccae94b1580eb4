#include <Eigen/Dense>
#include <filesystem>

#include "doctest.h"
#include "gcp/errors.hpp"
#include "gcp/image_io.hpp"
#include "gcp/metrics.hpp"
#include "oracles.hpp"

using namespace gcp;

namespace {

FeatureStats stats(torch::Tensor mu, torch::Tensor sigma) {
  FeatureStats s;
  s.mu = std::move(mu);
  s.sigma = std::move(sigma);
  s.n = 100;
  return s;
}

Eigen::MatrixXd to_eigen(const torch::Tensor& t) {
  auto d = t.to(torch::kFloat64).contiguous();
  Eigen::MatrixXd m(d.size(0), d.size(1));
  auto A = d.accessor<double, 2>();
  for (int64_t i = 0; i < d.size(0); ++i)
    for (int64_t j = 0; j < d.size(1); ++j) m(i, j) = A[i][j];
  return m;
}

// Frechet distance through Eigen: sqrt(Sa) by eigen-decomposition, then the
// eigenvalues of sqrt(Sa) Sb sqrt(Sa).
double eigen_frechet(const torch::Tensor& mu_a, const torch::Tensor& sa, const torch::Tensor& mu_b,
                     const torch::Tensor& sb) {
  Eigen::MatrixXd A = to_eigen(sa), B = to_eigen(sb);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(A);
  Eigen::MatrixXd root = ea.eigenvectors() * ea.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                         ea.eigenvectors().transpose();
  Eigen::MatrixXd prod = root * B * root;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ep(0.5 * (prod + prod.transpose()));
  const double tr_sqrt = ep.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double mean = (mu_a - mu_b).pow(2).sum().item<double>();
  return mean + A.trace() + B.trace() - 2.0 * tr_sqrt;
}

RgbImage solid(double r, double g, double b, int64_t h = 8, int64_t w = 8) {
  auto t = torch::empty({3, h, w}, torch::kFloat64);
  t[0].fill_(r);
  t[1].fill_(g);
  t[2].fill_(b);
  return RgbImage(t);
}

}  // namespace

TEST_CASE("Frechet closed forms") {
  auto eye = torch::eye(2, torch::kFloat64);
  CHECK(std::abs(frechet_distance(stats(torch::zeros({2}, torch::kFloat64), eye),
                                  stats(torch::zeros({2}, torch::kFloat64), eye))) < 1e-6);
  CHECK(std::abs(frechet_distance(stats(torch::zeros({2}, torch::kFloat64), eye),
                                  stats(torch::tensor({3.0, 4.0}, torch::kFloat64), eye)) -
                 25.0) < 1e-6);
  auto e10 = torch::eye(10, torch::kFloat64);
  CHECK(std::abs(frechet_distance(stats(torch::zeros({10}, torch::kFloat64), e10),
                                  stats(torch::zeros({10}, torch::kFloat64), 4.0 * e10)) -
                 10.0) < 1e-6);
}

TEST_CASE("Frechet distance matches the Eigen oracle") {
  torch::manual_seed(1);
  for (int trial = 0; trial < 3; ++trial) {
    auto xa = torch::randn({40, 6}, torch::kFloat64);
    auto xb = torch::randn({40, 6}, torch::kFloat64) * 1.5 + 0.3;
    auto a = FeatureStats::from_features(xa);
    auto b = FeatureStats::from_features(xb);
    const double ref = eigen_frechet(a.mu, a.sigma, b.mu, b.sigma);
    CHECK(std::abs(frechet_distance(a, b) - ref) < 1e-8);
    CHECK(std::abs(frechet_distance(a, b) - frechet_distance(b, a)) < 1e-8);
  }
}

TEST_CASE("feature statistics") {
  auto x = torch::tensor({{1.0, 2.0}, {3.0, 6.0}}, torch::kFloat64);
  auto s = FeatureStats::from_features(x);
  CHECK(torch::allclose(s.mu, torch::tensor({2.0, 4.0}, torch::kFloat64)));
  CHECK(torch::allclose(s.sigma, torch::tensor({{2.0, 4.0}, {4.0, 8.0}}, torch::kFloat64)));
  CHECK_THROWS_AS(FeatureStats::from_features(torch::zeros({1, 3})), ValidationError);
  auto bad = stats(torch::zeros({2}, torch::kFloat64), torch::tensor({{1.0, 0.0}, {0.0, -1.0}}, torch::kFloat64));
  CHECK_THROWS_AS(frechet_distance(bad, bad), ValidationError);
  auto tiny = stats(torch::zeros({2}, torch::kFloat64), torch::tensor({{1.0, 0.0}, {0.0, -1e-9}}, torch::kFloat64));
  CHECK(std::isfinite(frechet_distance(tiny, tiny)));
  CHECK_THROWS_AS(frechet_distance(stats(torch::zeros({2}, torch::kFloat64), torch::eye(2, torch::kFloat64)),
                                   stats(torch::zeros({3}, torch::kFloat64), torch::eye(3, torch::kFloat64))),
                  ShapeError);
}

TEST_CASE("fid through an extractor") {
  FeatureExtractor ex{"mean-rgb", 0, [](const torch::Tensor& x) { return x.mean({2, 3}); }};
  torch::manual_seed(2);
  auto a = torch::rand({16, 3, 8, 8});
  CHECK(std::abs(fid(a, a, ex)) < 1e-6);
  CHECK(fid(a, a * 0.5, ex) > 0.0);
}

TEST_CASE("colorfulness hand cases") {
  CHECK(std::abs(colorfulness(solid(0.5, 0.5, 0.5))) < 1e-6);
  auto half = torch::zeros({3, 8, 8}, torch::kFloat64);
  half[0].slice(1, 0, 4).fill_(1.0);
  half[1].slice(1, 4, 8).fill_(1.0);
  CHECK(std::abs(colorfulness(RgbImage(half)) - 293.25) < 1e-6);
  CHECK(std::abs(colorfulness(solid(1.0, 0.0, 0.0)) - 0.3 * std::sqrt(255.0 * 255.0 + 127.5 * 127.5)) < 1e-6);
  CHECK(std::abs(colorfulness(solid(1.0, 0.0, 0.0)) - 85.53) < 0.01);
  torch::manual_seed(3);
  auto r = torch::rand({3, 12, 10}, torch::kFloat64);
  CHECK(std::abs(colorfulness(RgbImage(r)) - oracle::colorfulness(r)) < 1e-9);
  auto r8 = torch::rand({3, 8, 8}, torch::kFloat64);
  auto batch = torch::stack({half, r8});
  CHECK(std::abs(mean_colorfulness(batch) - 0.5 * (293.25 + oracle::colorfulness(r8))) < 1e-6);
}

TEST_CASE("psnr") {
  CHECK(std::abs(psnr(solid(0, 0, 0), solid(0.5, 0.5, 0.5)) - 6.0206) < 1e-3);
  CHECK(psnr(solid(0.2, 0.3, 0.4), solid(0.2, 0.3, 0.4)) == kPsnrIdentical);
  torch::manual_seed(4);
  auto a = torch::rand({3, 9, 9}, torch::kFloat64);
  auto b = torch::rand({3, 9, 9}, torch::kFloat64);
  CHECK(std::abs(psnr(RgbImage(a), RgbImage(b)) - oracle::psnr(a, b)) < 1e-9);
  CHECK_THROWS_AS(psnr(RgbImage(a), solid(0, 0, 0)), ShapeError);
}

TEST_CASE("ssim") {
  torch::manual_seed(5);
  auto a = torch::rand({3, 16, 14}, torch::kFloat64);
  auto b = (a + 0.1 * torch::randn({3, 16, 14}, torch::kFloat64)).clamp(0, 1);
  CHECK(std::abs(ssim(RgbImage(a), RgbImage(a)) - 1.0) < 1e-9);
  CHECK(std::abs(ssim(RgbImage(a), RgbImage(b)) - oracle::ssim(a, b)) < 1e-5);
  CHECK(ssim(RgbImage(a), RgbImage(b)) < 1.0);
  CHECK_THROWS_AS(ssim(solid(0, 0, 0, 8, 8), solid(0, 0, 0, 8, 8)), ValidationError);
}

TEST_CASE("metric report rows round trip") {
  MetricReport r;
  r.fid = 12.3456;
  r.colorful = 40.5;
  r.delta_colorful = -2.25;
  r.psnr = 22.125;
  r.ssim = 0.9375;
  std::string method;
  auto back = MetricReport::parse_table_row(r.table_row("full"), &method);
  CHECK(method == "full");
  CHECK(back.fid == doctest::Approx(12.3456));
  CHECK(back.colorful == doctest::Approx(40.5));
  CHECK(back.delta_colorful == doctest::Approx(-2.25));
  CHECK(back.psnr == doctest::Approx(22.125));
  CHECK(back.ssim == doctest::Approx(0.9375));
  CHECK_THROWS_AS(MetricReport::parse_table_row("a | b"), ValidationError);
  CHECK(r.to_text().find("fid = ") != std::string::npos);
}

TEST_CASE("evaluate pairs from directories") {
  namespace fs = std::filesystem;
  auto root = fs::temp_directory_path() / "gcp_metrics_pairs";
  fs::remove_all(root);
  fs::create_directories(root / "pred");
  fs::create_directories(root / "gt");
  torch::manual_seed(6);
  for (int i = 0; i < 4; ++i) {
    auto img = torch::rand({3, 16, 16});
    write_png(root / "gt" / ("im" + std::to_string(i) + ".png"), RgbImage(img));
    write_png(root / "pred" / ("im" + std::to_string(i) + ".png"), RgbImage(img));
  }
  FeatureExtractor ex{"mean-rgb", 0, [](const torch::Tensor& x) { return x.mean({2, 3}); }};
  auto report = evaluate_pairs(root / "pred", root / "gt", ex);
  CHECK(report.n_images == 4);
  CHECK(std::abs(report.fid) < 1e-6);
  CHECK(report.ssim == doctest::Approx(1.0));
  CHECK(std::abs(report.delta_colorful) < 1e-9);
  CHECK(report.extractor == "mean-rgb");
  fs::remove(root / "pred" / "im0.png");
  CHECK_THROWS_AS(evaluate_pairs(root / "pred", root / "gt", ex), ValidationError);
  fs::remove_all(root);
}
