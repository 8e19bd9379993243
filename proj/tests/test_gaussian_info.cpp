#include <cmath>
#include <random>

#include "imse/gaussian_info.hpp"
#include "support.hpp"

using namespace imse;
using testing::scalar;

namespace {

GaussianJoint make_joint(const Mat& cov, std::initializer_list<std::pair<const char*, int>> blocks) {
  GaussianJoint j;
  j.cov = cov;
  j.mean = Vec::Zero(cov.rows());
  for (const auto& [name, size] : blocks) j.add_block(name, size);
  return j;
}

LtiSystemSpec scalar_loop(double a, double b, double g, LoopMode mode = LoopMode::control) {
  LtiSystemSpec s;
  s.A = scalar(a);
  s.B = scalar(b);
  s.C = scalar(g);
  s.mode = mode;
  return s;
}

}  // namespace

TEST_CASE("entropy of Gaussian blocks") {
  auto j1 = make_joint(scalar(1.0), {{"X", 1}});
  CHECK(differential_entropy(j1, "X").nats == doctest::Approx(1.4189385332046727).epsilon(1e-12));
  auto j2 = make_joint(Mat::Identity(2, 2), {{"X", 2}});
  CHECK(differential_entropy(j2, "X").nats == doctest::Approx(2.8378770664093453).epsilon(1e-12));
  auto j4 = make_joint(scalar(4.0), {{"X", 1}});
  CHECK(differential_entropy(j4, "X").nats == doctest::Approx(2.112085713764618).epsilon(1e-12));
}

TEST_CASE("entropy errors") {
  auto j = make_joint(scalar(1.0), {{"X", 1}});
  CHECK_CODE(differential_entropy(j, "Y"), ErrorCode::UnknownBlock);
  auto z = make_joint(Mat::Zero(2, 2), {{"X", 2}});
  CHECK_CODE(differential_entropy(z, "X"), ErrorCode::SingularCovariance);
}

TEST_CASE("mutual information of scalar pairs") {
  auto indep = make_joint(Vec(Eigen::Vector2d(1.0, 3.0)).asDiagonal(), {{"A", 1}, {"B", 1}});
  CHECK(std::abs(mutual_information_blocks(indep, "A", "B").nats) < 1e-14);

  Mat rho(2, 2);
  rho << 1, 0.5, 0.5, 1;
  auto corr = make_joint(rho, {{"A", 1}, {"B", 1}});
  CHECK(mutual_information_blocks(corr, "A", "B").nats ==
        doctest::Approx(0.14384103622589045).epsilon(1e-12));

  Mat copy(2, 2);
  copy << 2, 2, 2, 3;
  auto chan = make_joint(copy, {{"A", 1}, {"B", 1}});
  CHECK(mutual_information_blocks(chan, "A", "B").nats ==
        doctest::Approx(0.5493061443340549).epsilon(1e-12));
  CHECK_CODE(mutual_information_blocks(chan, "A", "Q"), ErrorCode::UnknownBlock);
}

TEST_CASE("joint validation") {
  Mat asym(2, 2);
  asym << 1, 0.5, 0.2, 1;
  CHECK_CODE(validate_joint(make_joint(asym, {{"A", 1}, {"B", 1}})), ErrorCode::ValidationFailure);
  Mat neg(2, 2);
  neg << 1, 2, 2, 1;
  CHECK_CODE(validate_joint(make_joint(neg, {{"A", 1}, {"B", 1}})), ErrorCode::NotPSD);
  GaussianJoint partial = make_joint(Mat::Identity(3, 3), {{"A", 1}, {"B", 1}});
  CHECK_THROWS_AS(validate_joint(partial), Error);
}

TEST_CASE("zero-gain loop copies the noise") {
  auto spec = scalar_loop(0.5, 1.0, 0.0);
  auto j = assemble_closed_loop_joint<double>(spec, 1, 0.0, LoopMode::control);
  BlockRange e = j.block("E"), w = j.block("W");
  Mat E = j.cov.block(e.offset, e.offset, e.size, e.size);
  Mat W = j.cov.block(w.offset, w.offset, w.size, w.size);
  Mat EW = j.cov.block(e.offset, w.offset, e.size, w.size);
  CHECK((E - W).norm() == 0.0);
  CHECK((EW - Mat::Identity(e.size, e.size)).norm() == 0.0);
  CHECK(entropy_difference_check(j, "E", "W", {"X0"}) < 1e-14);
}

TEST_CASE("first error variance of the scalar loop") {
  auto j = assemble_closed_loop_joint<double>(scalar_loop(2.0, 1.0, -1.8), 2, 0.0,
                                              LoopMode::control);
  BlockRange e = j.block("E");
  CHECK(j.cov(e.offset, e.offset) == doctest::Approx(4.24).epsilon(1e-14));
  CHECK(j.steps == 3);
}

TEST_CASE("unstable closed loop is rejected") {
  CHECK_CODE(assemble_closed_loop_joint<double>(scalar_loop(2.0, 1.0, -0.5), 5, 0.0,
                                                LoopMode::control),
             ErrorCode::UnstableClosedLoop);
  LtiSystemSpec bad = scalar_loop(2.0, 1.0, -1.8);
  bad.B = Mat::Ones(2, 1);
  CHECK_CODE(assemble_closed_loop_joint<double>(bad, 5, 0.0, LoopMode::control),
             ErrorCode::DimensionMismatch);
}

TEST_CASE("stable filtering information stays bounded") {
  auto spec = scalar_loop(0.5, 1.0, 1.0, LoopMode::filtering);
  double prev = 0.0;
  for (int n : {5, 20, 80, 160}) {
    double v = oracle_information(spec, n).nats;
    CHECK(v >= prev - 1e-12);
    prev = v;
  }
  // eps = 0: only X0 is informative, so I(Y;X0) <= 1/2 log(1 + sum 0.25^i) = 1/2 log(7/3)
  CHECK(prev <= 0.5 * std::log(1.0 + 4.0 / 3.0) + 1e-12);
  CHECK(prev == doctest::Approx(0.5 * std::log(1.0 + 4.0 / 3.0)).epsilon(1e-9));
}

TEST_CASE("entropy difference identity at A = 2, n = 30") {
  auto ctrl = assemble_closed_loop_joint<quad>(scalar_loop(2.0, 1.0, -1.8), 30, 0.0,
                                               LoopMode::control);
  CHECK(entropy_difference_check(ctrl, "E", "W", {"X0"}) < 1e-8);
  auto filt = assemble_closed_loop_joint<quad>(scalar_loop(2.0, 1.0, 1.0, LoopMode::filtering), 30,
                                               0.0, LoopMode::filtering);
  CHECK(entropy_difference_check(filt, "Y", "V", {"X0", "W"}) < 1e-8);
  auto noisy = assemble_closed_loop_joint<quad>(scalar_loop(2.0, 1.0, 1.0, LoopMode::filtering),
                                                30, 0.3, LoopMode::filtering);
  CHECK(entropy_difference_check(noisy, "Y", "V", {"X0", "W"}) < 1e-8);
}

TEST_CASE("oracle information grows with the horizon") {
  auto spec = scalar_loop(2.0, 1.0, -1.8);
  double prev = 0.0;
  for (int n = 1; n <= 40; ++n) {
    double v = oracle_information(spec, n).nats;
    CHECK(v >= prev - 1e-9);
    prev = v;
  }
  CHECK(oracle_information(spec, 40).horizon == 41);
}

TEST_CASE("chain rule and non-negativity on random joints") {
  std::mt19937_64 gen(314);
  std::uniform_int_distribution<int> dim(1, 4);
  double worst = 0.0, min_mi = 0.0;
  for (int t = 0; t < 200; ++t) {
    int de = dim(gen), dc = dim(gen), dx = dim(gen);
    Mat cov = testing::random_spd(gen, de + dc + dx);
    auto j = make_joint(cov, {{"E", de}, {"C", dc}, {"X0", dx}});
    double joint = mutual_information(j, {"E"}, {"C", "X0"}).nats;
    double split = mutual_information(j, {"E"}, {"X0"}).nats +
                   mutual_information(j, {"E"}, {"C"}, {"X0"}).nats;
    worst = std::max(worst, std::abs(joint - split));
    min_mi = std::min({min_mi, joint, mutual_information(j, {"E"}, {"C"}, {"X0"}).nats,
                       mutual_information_blocks(j, "C", "X0").nats});
  }
  CHECK(worst < 1e-8);
  CHECK(min_mi >= -1e-9);
}
