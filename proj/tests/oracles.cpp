#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace oracle {

namespace {

double to_linear(double c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); }

double lab_f(double t) {
  const double d = 6.0 / 29.0;
  return t > d * d * d ? std::cbrt(t) : t / (3.0 * d * d) + 4.0 / 29.0;
}

std::vector<double> flat(const torch::Tensor& t) {
  auto c = t.to(torch::kFloat64).contiguous().reshape({-1});
  return {c.data_ptr<double>(), c.data_ptr<double>() + c.numel()};
}

}  // namespace

std::array<double, 3> srgb_to_lab(double r, double g, double b) {
  const double m[3][3] = {{0.4124564, 0.3575761, 0.1804375},
                          {0.2126729, 0.7151522, 0.0721750},
                          {0.0193339, 0.1191920, 0.9503041}};
  const double lin[3] = {to_linear(r), to_linear(g), to_linear(b)};
  double xyz[3], white[3];
  for (int i = 0; i < 3; ++i) {
    xyz[i] = m[i][0] * lin[0] + m[i][1] * lin[1] + m[i][2] * lin[2];
    white[i] = m[i][0] + m[i][1] + m[i][2];
  }
  const double fx = lab_f(xyz[0] / white[0]), fy = lab_f(xyz[1] / white[1]), fz = lab_f(xyz[2] / white[2]);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

double mean_abs(const torch::Tensor& a, const torch::Tensor& b) {
  auto x = flat(a), y = flat(b);
  double s = 0.0;
  for (size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] - y[i]);
  return s / static_cast<double>(x.size());
}

double half_norm(const torch::Tensor& z) {
  double s = 0.0;
  for (double v : flat(z)) s += v * v;
  return 0.5 * std::sqrt(s);
}

double lsgan_d(const std::vector<torch::Tensor>& real, const std::vector<torch::Tensor>& fake) {
  double sr = 0.0, sf = 0.0;
  size_t nr = 0, nf = 0;
  for (const auto& t : real) {
    for (double v : flat(t)) sr += (v - 1.0) * (v - 1.0), ++nr;
  }
  for (const auto& t : fake) {
    for (double v : flat(t)) sf += v * v, ++nf;
  }
  return sr / static_cast<double>(nr) + sf / static_cast<double>(nf);
}

double lsgan_g(const std::vector<torch::Tensor>& fake) {
  double s = 0.0;
  size_t n = 0;
  for (const auto& t : fake) {
    for (double v : flat(t)) s += (v - 1.0) * (v - 1.0), ++n;
  }
  return s / static_cast<double>(n);
}

double feature_l2(const torch::Tensor& a, const torch::Tensor& b) {
  const auto n = a.size(0);
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    auto x = flat(a[i]), y = flat(b[i]);
    double s = 0.0;
    for (size_t k = 0; k < x.size(); ++k) s += (x[k] - y[k]) * (x[k] - y[k]);
    total += std::sqrt(s / static_cast<double>(x.size()));
  }
  return total / static_cast<double>(n);
}

std::vector<double> cx(const torch::Tensor& x, const torch::Tensor& y, double h, double eps,
                       bool normalize_over_reference) {
  auto xd = x.to(torch::kFloat64).contiguous();
  auto yd = y.to(torch::kFloat64).contiguous();
  const auto n = xd.size(0), c = xd.size(1), p = xd.size(2);
  auto X = xd.accessor<double, 3>();
  auto Y = yd.accessor<double, 3>();
  std::vector<double> out;
  for (int64_t s = 0; s < n; ++s) {
    std::vector<double> mu(c, 0.0);
    for (int64_t k = 0; k < c; ++k) {
      for (int64_t j = 0; j < p; ++j) mu[k] += Y[s][k][j];
      mu[k] /= static_cast<double>(p);
    }
    auto unit = [&](auto& A, int64_t pos) {
      std::vector<double> v(c);
      double nn = 0.0;
      for (int64_t k = 0; k < c; ++k) v[k] = A[s][k][pos] - mu[k], nn += v[k] * v[k];
      nn = std::max(std::sqrt(nn), 1e-8);
      for (auto& e : v) e /= nn;
      return v;
    };
    std::vector<std::vector<double>> d(p, std::vector<double>(p));
    for (int64_t i = 0; i < p; ++i) {
      auto xi = unit(X, i);
      for (int64_t j = 0; j < p; ++j) {
        auto yj = unit(Y, j);
        double dot = 0.0;
        for (int64_t k = 0; k < c; ++k) dot += xi[k] * yj[k];
        d[i][j] = 1.0 - dot;
      }
    }
    std::vector<std::vector<double>> w(p, std::vector<double>(p));
    for (int64_t i = 0; i < p; ++i) {
      double mn = std::numeric_limits<double>::infinity();
      for (int64_t k = 0; k < p; ++k) mn = std::min(mn, d[i][k]);
      for (int64_t j = 0; j < p; ++j) w[i][j] = std::exp((1.0 - d[i][j] / (mn + eps)) / h);
    }
    double total = 0.0;
    for (int64_t j = 0; j < p; ++j) {
      double best = 0.0;
      for (int64_t i = 0; i < p; ++i) {
        double z = 0.0;
        for (int64_t k = 0; k < p; ++k) z += normalize_over_reference ? w[i][k] : w[k][j];
        best = std::max(best, w[i][j] / z);
      }
      total += best;
    }
    out.push_back(total / static_cast<double>(p));
  }
  return out;
}

torch::Tensor correlation(const torch::Tensor& a, const torch::Tensor& b, double tau) {
  const auto n = a.size(0), c = a.size(1), p = a.size(2) * a.size(3);
  auto ad = a.to(torch::kFloat64).reshape({n, c, p}).contiguous();
  auto bd = b.to(torch::kFloat64).reshape({n, c, p}).contiguous();
  auto A = ad.accessor<double, 3>();
  auto B = bd.accessor<double, 3>();
  auto out = torch::zeros({n, p, p}, torch::kFloat64);
  auto O = out.accessor<double, 3>();
  for (int64_t s = 0; s < n; ++s) {
    auto prep = [&](auto& T) {
      std::vector<std::vector<double>> v(p, std::vector<double>(c));
      for (int64_t k = 0; k < c; ++k) {
        double mean = 0.0;
        for (int64_t u = 0; u < p; ++u) mean += T[s][k][u];
        mean /= static_cast<double>(p);
        for (int64_t u = 0; u < p; ++u) v[u][k] = T[s][k][u] - mean;
      }
      for (auto& row : v) {
        double nn = 0.0;
        for (double e : row) nn += e * e;
        nn = std::max(std::sqrt(nn), 1e-8);
        for (auto& e : row) e /= nn;
      }
      return v;
    };
    auto va = prep(A), vb = prep(B);
    for (int64_t u = 0; u < p; ++u) {
      std::vector<double> logits(p);
      double mx = -std::numeric_limits<double>::infinity();
      for (int64_t v = 0; v < p; ++v) {
        double dot = 0.0;
        for (int64_t k = 0; k < c; ++k) dot += va[u][k] * vb[v][k];
        logits[v] = dot / tau;
        mx = std::max(mx, logits[v]);
      }
      double z = 0.0;
      for (auto& l : logits) l = std::exp(l - mx), z += l;
      for (int64_t v = 0; v < p; ++v) O[s][u][v] = logits[v] / z;
    }
  }
  return out;
}

torch::Tensor mix(const torch::Tensor& m, const torch::Tensor& f) {
  const auto n = f.size(0), c = f.size(1), h = f.size(2), w = f.size(3), p = h * w;
  auto md = m.to(torch::kFloat64).contiguous();
  auto fd = f.to(torch::kFloat64).contiguous();
  auto M = md.accessor<double, 3>();
  auto Fa = fd.accessor<double, 4>();
  auto out = torch::zeros({n, c, h, w}, torch::kFloat64);
  auto O = out.accessor<double, 4>();
  for (int64_t s = 0; s < n; ++s) {
    for (int64_t k = 0; k < c; ++k) {
      for (int64_t u = 0; u < p; ++u) {
        double acc = 0.0;
        for (int64_t v = 0; v < p; ++v) acc += M[s][u][v] * Fa[s][k][v / w][v % w];
        O[s][k][u / w][u % w] = acc;
      }
    }
  }
  return out;
}

torch::Tensor spade(const torch::Tensor& x, const torch::Tensor& gamma, const torch::Tensor& beta, double eps) {
  auto xd = x.to(torch::kFloat64).contiguous();
  auto gd = gamma.to(torch::kFloat64).contiguous();
  auto bd = beta.to(torch::kFloat64).contiguous();
  const auto n = xd.size(0), c = xd.size(1), h = xd.size(2), w = xd.size(3);
  auto X = xd.accessor<double, 4>();
  auto G = gd.accessor<double, 4>();
  auto B = bd.accessor<double, 4>();
  auto out = torch::zeros_like(xd);
  auto O = out.accessor<double, 4>();
  const double count = static_cast<double>(n * h * w);
  for (int64_t k = 0; k < c; ++k) {
    double mean = 0.0, var = 0.0;
    for (int64_t s = 0; s < n; ++s)
      for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j) mean += X[s][k][i][j];
    mean /= count;
    for (int64_t s = 0; s < n; ++s)
      for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j) var += (X[s][k][i][j] - mean) * (X[s][k][i][j] - mean);
    var /= count;
    for (int64_t s = 0; s < n; ++s)
      for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j)
          O[s][k][i][j] = G[s][k][i][j] * (X[s][k][i][j] - mean) / std::sqrt(var + eps) + B[s][k][i][j];
  }
  return out;
}

double colorfulness(const torch::Tensor& rgb01) {
  auto d = (rgb01.to(torch::kFloat64) * 255.0).contiguous();
  auto A = d.accessor<double, 3>();
  const auto h = d.size(1), w = d.size(2);
  const double n = static_cast<double>(h * w);
  double mrg = 0.0, myb = 0.0;
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j) {
      mrg += A[0][i][j] - A[1][i][j];
      myb += 0.5 * (A[0][i][j] + A[1][i][j]) - A[2][i][j];
    }
  }
  mrg /= n;
  myb /= n;
  double vrg = 0.0, vyb = 0.0;
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j) {
      const double rg = A[0][i][j] - A[1][i][j];
      const double yb = 0.5 * (A[0][i][j] + A[1][i][j]) - A[2][i][j];
      vrg += (rg - mrg) * (rg - mrg);
      vyb += (yb - myb) * (yb - myb);
    }
  }
  vrg /= n;
  vyb /= n;
  return std::sqrt(vrg + vyb) + 0.3 * std::sqrt(mrg * mrg + myb * myb);
}

double psnr(const torch::Tensor& a, const torch::Tensor& b) {
  auto x = flat(a), y = flat(b);
  double s = 0.0;
  for (size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return 10.0 * std::log10(1.0 / (s / static_cast<double>(x.size())));
}

double ssim(const torch::Tensor& a, const torch::Tensor& b) {
  auto luma = [](const torch::Tensor& t) {
    auto d = t.to(torch::kFloat64).contiguous();
    auto A = d.accessor<double, 3>();
    std::vector<std::vector<double>> y(d.size(1), std::vector<double>(d.size(2)));
    for (int64_t i = 0; i < d.size(1); ++i)
      for (int64_t j = 0; j < d.size(2); ++j) y[i][j] = 0.299 * A[0][i][j] + 0.587 * A[1][i][j] + 0.114 * A[2][i][j];
    return y;
  };
  auto ya = luma(a), yb = luma(b);
  double g[11][11], gs = 0.0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) gs += g[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2.0 * 1.5 * 1.5));
  for (auto& row : g)
    for (auto& v : row) v /= gs;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const int h = static_cast<int>(ya.size()), w = static_cast<int>(ya[0].size());
  double total = 0.0;
  int count = 0;
  for (int i = 0; i + 11 <= h; ++i) {
    for (int j = 0; j + 11 <= w; ++j) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int u = 0; u < 11; ++u)
        for (int v = 0; v < 11; ++v) ma += g[u][v] * ya[i + u][j + v], mb += g[u][v] * yb[i + u][j + v];
      for (int u = 0; u < 11; ++u) {
        for (int v = 0; v < 11; ++v) {
          const double da = ya[i + u][j + v] - ma, db = yb[i + u][j + v] - mb;
          saa += g[u][v] * da * da;
          sbb += g[u][v] * db * db;
          sab += g[u][v] * da * db;
        }
      }
      total += ((2 * ma * mb + c1) * (2 * sab + c2)) / ((ma * ma + mb * mb + c1) * (saa + sbb + c2));
      ++count;
    }
  }
  return total / count;
}

double gradient_error(const std::function<torch::Tensor(const torch::Tensor&)>& f, const torch::Tensor& x,
                      double step) {
  auto xa = x.to(torch::kFloat64).detach().clone().requires_grad_(true);
  auto y = f(xa);
  auto analytic = torch::autograd::grad({y}, {xa})[0].reshape({-1});
  auto base = x.to(torch::kFloat64).detach().clone().reshape({-1});
  auto numeric = torch::zeros_like(base);
  torch::NoGradGuard no_grad;
  for (int64_t i = 0; i < base.numel(); ++i) {
    auto plus = base.clone();
    auto minus = base.clone();
    plus[i] += step;
    minus[i] -= step;
    const double fp = f(plus.reshape(x.sizes())).item<double>();
    const double fm = f(minus.reshape(x.sizes())).item<double>();
    numeric[i] = (fp - fm) / (2.0 * step);
  }
  const double scale = std::max({numeric.norm().item<double>(), analytic.norm().item<double>(), 1e-300});
  return (numeric - analytic).norm().item<double>() / scale;
}

}  // namespace oracle
