#include <doctest.h>

#include <cmath>
#include <numbers>

#include "sparsedm/diffusion.hpp"
#include "sparsedm/errors.hpp"
#include "sparsedm/metrics.hpp"
#include "support.hpp"

using namespace sparsedm;

TEST_CASE("linear schedule and cumulative products") {
  const NoiseSchedule s = make_schedule(10, 1e-3, 0.2);
  REQUIRE(s.steps() == 10);
  CHECK(s.beta.front() == 1e-3);
  CHECK(s.beta.back() == doctest::Approx(0.2).epsilon(1e-15));
  double running = 1.0;
  for (int t = 0; t < 10; ++t) {
    CHECK(s.beta[t] == doctest::Approx(1e-3 + (0.2 - 1e-3) * t / 9.0).epsilon(1e-14));
    CHECK(s.alpha[t] == 1.0 - s.beta[t]);
    running *= 1.0 - s.beta[t];
    CHECK(s.alpha_bar[t] == doctest::Approx(running).epsilon(1e-14));
  }
  CHECK(make_schedule(1, 0.05, 0.3).beta[0] == 0.05);
}

TEST_CASE("defaults end close to pure noise") {
  const NoiseSchedule s = make_schedule(kDefaultSteps, kDefaultBetaStart, kDefaultBetaEnd);
  CHECK(s.alpha_bar.back() < 1e-4);
}

TEST_CASE("invalid schedules are config errors") {
  CHECK_THROWS_AS(make_schedule(0, 1e-3, 0.2), ConfigError);
  CHECK_THROWS_AS(make_schedule(10, 0.0, 0.2), ConfigError);
  CHECK_THROWS_AS(make_schedule(10, 0.3, 0.2), ConfigError);
  CHECK_THROWS_AS(make_schedule(10, 1e-3, 1.0), ConfigError);
}

TEST_CASE("q_sample and posterior mean follow the closed forms") {
  const NoiseSchedule s = make_schedule(20, 1e-3, 0.2);
  Rng rng(30, Stream::eval);
  const Tensor x0 = rng.normal_tensor(6, 2), eps = rng.normal_tensor(6, 2);
  std::vector<int> t = {0, 3, 7, 11, 19, 19};
  const Tensor xt = q_sample(x0, std::span<const int>(t), eps, s);
  for (Eigen::Index i = 0; i < 6; ++i) {
    const double ab = s.alpha_bar[t[i]];
    for (Eigen::Index j = 0; j < 2; ++j) {
      CHECK(xt(i, j) == doctest::Approx(std::sqrt(ab) * x0(i, j) + std::sqrt(1 - ab) * eps(i, j)).epsilon(1e-6));
    }
  }
  const Tensor mu = posterior_mean(xt.topRows(1), eps.topRows(1), 5, s);
  const double b = s.beta[5], a = s.alpha[5], ab = s.alpha_bar[5];
  CHECK(mu(0, 0) == doctest::Approx((xt(0, 0) - b / std::sqrt(1 - ab) * eps(0, 0)) / std::sqrt(a)).epsilon(1e-6));
  CHECK_THROWS(q_sample(x0, 20, eps, s));
  CHECK_THROWS_AS(q_sample(x0, 1, Tensor::Zero(5, 2), s), DimensionError);
}

TEST_CASE("time embedding: sin then cos of t/T at geometric frequencies 1..1000") {
  std::vector<int> t = {0, 37};
  const Tensor e = time_embedding(t, 100, 8);
  for (int k = 0; k < 4; ++k) {
    CHECK(e(0, k) == 0.0f);
    CHECK(e(0, 4 + k) == 1.0f);
    const double freq = std::pow(10.0, k);  // 1000^(k/3)
    CHECK(e(1, k) == doctest::Approx(std::sin(0.37 * freq)).epsilon(1e-5));
    CHECK(e(1, 4 + k) == doctest::Approx(std::cos(0.37 * freq)).epsilon(1e-5));
  }
  CHECK_THROWS_AS(time_embedding(t, 100, 7), ConfigError);
}

TEST_CASE("toy datasets are normalized and deterministic") {
  for (const char* name : {"gauss8", "swiss_roll", "checkerboard"}) {
    CAPTURE(name);
    const ToyDataset d = ToyDataset::parse(name);
    CHECK(d.name() == name);
    Rng a(1, Stream::data), b(1, Stream::data);
    const Tensor x = toy_batch(d, 20000, a);
    CHECK(x == toy_batch(d, 20000, b));
    const Eigen::RowVectorXd mean = x.cast<double>().colwise().mean();
    CHECK(std::abs(mean(0)) < 0.05);
    CHECK(std::abs(mean(1)) < 0.05);
    const double var = (x.cast<double>().rowwise() - mean).squaredNorm() / (2.0 * x.rows());
    CHECK(var == doctest::Approx(1.0).epsilon(0.05));
  }
  CHECK_THROWS_AS(ToyDataset::parse("moons"), ConfigError);
  Rng rng(1, Stream::data);
  CHECK_THROWS_AS(toy_batch(ToyDataset::parse("gauss8"), 0, rng), ContractError);
}

TEST_CASE("gauss8 points sit near one of the eight modes") {
  const Tensor modes = gauss8_modes();
  Rng rng(2, Stream::data);
  const Tensor x = toy_batch(ToyDataset::parse("gauss8"), 2000, rng);
  std::vector<int> hits(8, 0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::Index best = 0;
    (modes.rowwise() - x.row(i)).rowwise().squaredNorm().minCoeff(&best);
    ++hits[best];
  }
  for (int h : hits) CHECK(h > 150);
}

namespace {

// Exact noise predictor for isotropic Gaussian data N(mu, s^2 I).
struct GaussianOracle {
  const NoiseSchedule& sched;
  Eigen::RowVector2d mu;
  double s2;
  Eigen::Index data_dim() const { return 2; }
  Tensor predict(const Tensor& x, std::span<const int> t) const {
    Tensor out(x.rows(), 2);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double ab = sched.alpha_bar[t[i]];
      const double k = std::sqrt(1 - ab) / (ab * s2 + 1 - ab);
      for (int j = 0; j < 2; ++j) out(i, j) = static_cast<float>(k * (x(i, j) - std::sqrt(ab) * mu(j)));
    }
    return out;
  }
};

}  // namespace

TEST_CASE("ancestral sampler reproduces a Gaussian under its exact score") {
  const NoiseSchedule sched = make_schedule(kDefaultSteps, kDefaultBetaStart, kDefaultBetaEnd);
  const GaussianOracle oracle{sched, {0.7, -1.2}, 0.25};
  Rng rng(3, Stream::sample);
  const Tensor x = ddpm_sample(oracle, 20000, sched, rng);
  const Eigen::RowVectorXd mean = x.cast<double>().colwise().mean();
  CHECK(mean(0) == doctest::Approx(0.7).epsilon(0.03));
  CHECK(mean(1) == doctest::Approx(-1.2).epsilon(0.03));
  const double var = (x.cast<double>().rowwise() - mean).squaredNorm() / (2.0 * x.rows());
  CHECK(var == doctest::Approx(0.25).epsilon(0.1));

  Rng again(3, Stream::sample);
  CHECK(ddpm_sample(oracle, 50, sched, again) == [&] {
    Rng r(3, Stream::sample);
    return ddpm_sample(oracle, 50, sched, r);
  }());
}

TEST_CASE("noisy batches are reproducible and in range") {
  const NoiseSchedule sched = make_schedule(10, 1e-3, 0.2);
  Rng a(4, Stream::noise), b(4, Stream::noise);
  const Tensor x0 = Tensor::Ones(500, 2);
  const NoisyBatch p = make_noisy_batch(x0, sched, a), q = make_noisy_batch(x0, sched, b);
  CHECK(p.x_t == q.x_t);
  CHECK(p.t == q.t);
  for (int t : p.t) CHECK((t >= 0 && t < 10));
}

TEST_CASE("loss_diff rejects an empty batch") {
  const NoiseSchedule sched = make_schedule(10, 1e-3, 0.2);
  Tape tape;
  Rng rng(5, Stream::noise);
  auto forward = [](Tape& t, const Tensor& x, std::span<const int>) { return t.constant(x); };
  CHECK_THROWS_AS(loss_diff(tape, forward, Tensor(0, 2), sched, rng), ContractError);
}
